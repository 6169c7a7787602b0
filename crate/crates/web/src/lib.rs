//! Browser bindings. Every export returns a JSON string: the result, or
//! `{"error": "..."}`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use charge_meter::charge::c_from_delta;
use charge_meter::exact::{combine_sectors, uniform_quartet, BoundarySector};
use charge_meter::lattice::{InteractionSpec, TorusLattice};
use charge_meter::strip::{dominant_pair, PowerOptions, TransferOperator};
use charge_meter::LogNumber;

/// Widest strip the page offers; wider ones take seconds per point.
pub const MAX_DEMO_WIDTH: usize = 12;

fn respond<T: Serialize>(r: Result<T, String>) -> String {
    let v = match r {
        Ok(v) => serde_json::to_value(v).map_err(|e| e.to_string()),
        Err(e) => Err(e),
    };
    match v {
        Ok(v) => v.to_string(),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[derive(Serialize)]
pub struct ChargePoint {
    pub ell: usize,
    pub c: f64,
}

/// `c(ℓ) = (6/π)Δ(ℓ)` for each comma-separated width.
pub fn charge_sweep(ells: &str) -> Result<Vec<ChargePoint>, String> {
    ells.split(',')
        .map(|s| {
            let ell: usize = s.trim().parse().map_err(|_| format!("not a width: {s:?}"))?;
            let c = c_from_delta(ell).map_err(|e| e.to_string())?;
            Ok(ChargePoint { ell, c })
        })
        .collect()
}

#[derive(Serialize)]
pub struct SectorView {
    pub labels: Vec<&'static str>,
    /// `ln|Z_α| − ln Z`, with the sign kept separately.
    pub log_rel: Vec<f64>,
    pub signs: Vec<i8>,
    pub ln_z: f64,
    /// `Z / (Z_−− + Z_−+ + Z_+−)`.
    pub ratio: f64,
}

/// Closed-form sector values on an `ℓ × L` torus at bond activity `t`.
pub fn sectors(ell: usize, big_l: usize, t: f64) -> Result<SectorView, String> {
    let lat = TorusLattice::new(ell, big_l).map_err(|e| e.to_string())?;
    let q = uniform_quartet(&lat, t).map_err(|e| e.to_string())?;
    let z = combine_sectors(&q).map_err(|e| e.to_string())?;
    let mut view = SectorView { labels: Vec::new(), log_rel: Vec::new(), signs: Vec::new(), ln_z: z.log_abs, ratio: 0.0 };
    for s in BoundarySector::ALL {
        let v = q.get(s);
        view.labels.push(s.label());
        view.log_rel.push(v.log_abs - z.log_abs);
        view.signs.push(v.sign);
    }
    view.ratio = z.ratio(LogNumber::sum([q.mm, q.mp, q.pm]));
    Ok(view)
}

#[derive(Serialize)]
pub struct StripPoint {
    pub ell: usize,
    pub beta: f64,
    pub free_energy: f64,
    pub xi_over_ell: f64,
}

/// Free energy per site and `ξ/ℓ` on a strip with the diagonal interaction.
pub fn strip_point(ell: usize, beta: f64, lambda: f64) -> Result<StripPoint, String> {
    if ell > MAX_DEMO_WIDTH {
        return Err(format!("width {ell} exceeds the demo limit {MAX_DEMO_WIDTH}"));
    }
    let spec = InteractionSpec::diagonal(1.0, lambda);
    spec.validate().map_err(|e| e.to_string())?;
    let op = TransferOperator::new(ell, beta, &spec).map_err(|e| e.to_string())?;
    let sd = dominant_pair(&op, &PowerOptions::default()).map_err(|e| e.to_string())?;
    Ok(StripPoint { ell, beta, free_energy: sd.log_lambda1 / ell as f64, xi_over_ell: sd.xi / ell as f64 })
}

#[wasm_bindgen(js_name = chargeSweep)]
pub fn charge_sweep_js(ells: &str) -> String {
    respond(charge_sweep(ells))
}

#[wasm_bindgen(js_name = sectorValues)]
pub fn sectors_js(ell: usize, big_l: usize, t: f64) -> String {
    respond(sectors(ell, big_l, t))
}

#[wasm_bindgen(js_name = stripPoint)]
pub fn strip_point_js(ell: usize, beta: f64, lambda: f64) -> String {
    respond(strip_point(ell, beta, lambda))
}
