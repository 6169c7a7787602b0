use charge_meter::exact::T_CRITICAL;
use charge_meter_web::*;

#[test]
fn sweep_approaches_one_half() {
    let pts = charge_sweep("16, 64").unwrap();
    assert_eq!(pts.len(), 2);
    assert!((pts[1].c - 0.5).abs() < (pts[0].c - 0.5).abs());
    assert!(charge_sweep("16,x").is_err());
}

#[test]
fn critical_sectors() {
    let v = sectors(4, 4, T_CRITICAL).unwrap();
    assert_eq!(v.labels, ["mm", "mp", "pm", "pp"]);
    assert_eq!(v.signs[3], 0);
    assert!(v.ratio > 1.0 / 3.0 && v.ratio <= 1.0);
}

#[test]
fn strip_point_limits_width() {
    assert!(strip_point(MAX_DEMO_WIDTH + 2, 0.4, 0.1).is_err());
    let p = strip_point(6, 0.4, 0.1).unwrap();
    assert!(p.free_energy > 0.0 && p.xi_over_ell > 0.0);
}

#[test]
fn exports_return_json() {
    let err: serde_json::Value = serde_json::from_str(&sectors_js(5, 4, 0.3)).unwrap();
    assert!(err["error"].is_string());
    let ok: serde_json::Value = serde_json::from_str(&charge_sweep_js("32")).unwrap();
    assert!(ok[0]["c"].as_f64().is_some());
    let strip: serde_json::Value = serde_json::from_str(&strip_point_js(4, 0.3, 0.0)).unwrap();
    assert_eq!(strip["ell"], 4);
}
