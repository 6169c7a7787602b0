//! Central-charge extraction from strip free energies and from the exact
//! critical sums, plus the bulk constant and the torus ratio term.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::gamma;
use crate::lognum::CompensatedSum;

/// Catalan's constant.
pub const CATALAN: f64 = 0.915_965_594_177_219_015_054_603_514_932_384_1;

/// `f_∞ = ½ ln 2 + (1/2π) ∫₀^π γ(k) dk` at the critical point, by
/// double-exponential quadrature.
pub fn onsager_f_inf() -> f64 {
    let q = quadrature::double_exponential::integrate(gamma, 0.0, PI, 1e-15);
    0.5 * LN_2 + q.integral / (2.0 * PI)
}

/// The same constant from the two-dimensional form
/// `½ ln 2 + (2π)^{−2} ∫∫ ½ ln(4 − 2cos k1 − 2cos k2)`, using the
/// symmetry of the integrand to reduce to `[0, π]²`.
pub fn onsager_f_inf_2d() -> f64 {
    let outer = quadrature::double_exponential::integrate(
        |k2: f64| {
            quadrature::double_exponential::integrate(
                |k1: f64| {
                    // 4 − 2cos k1 − 2cos k2 = 4 sin²(k1/2) + 4 sin²(k2/2)
                    let s = (k1 / 2.0).sin().powi(2) + (k2 / 2.0).sin().powi(2);
                    0.5 * (4.0 * s).ln()
                },
                0.0,
                PI,
                1e-14,
            )
            .integral
        },
        0.0,
        PI,
        1e-13,
    );
    0.5 * LN_2 + 4.0 * outer.integral / (4.0 * PI * PI)
}

/// `Δ(ℓ) = (ℓ/2) Σ_{r<ℓ} γ((2r+1)π/ℓ) − ℓ² (f_∞ − ½ ln 2)`.
pub fn delta_ell(ell: usize) -> Result<f64> {
    if ell < 4 || ell % 2 != 0 {
        return Err(Error::Domain(format!("width must be even and >= 4, got {ell}")));
    }
    Ok(delta_with(ell, onsager_f_inf()))
}

fn delta_with(ell: usize, f_inf: f64) -> f64 {
    let l = ell as f64;
    // pair r with ℓ−1−r; keep the bulk subtraction inside the sum
    let bulk = (f_inf - 0.5 * LN_2) * 2.0;
    let acc: CompensatedSum =
        (0..ell).map(|r| gamma((2 * r + 1) as f64 * PI / l) - bulk).collect();
    0.5 * l * acc.value()
}

/// `(6/π) Δ(ℓ)`.
pub fn c_from_delta(ell: usize) -> Result<f64> {
    Ok(6.0 / PI * delta_ell(ell)?)
}

/// `(6/π) (f(ℓ1) − f(ℓ2)) / (ℓ1⁻² − ℓ2⁻²)`.
pub fn c_pairwise(f1: (usize, f64), f2: (usize, f64)) -> Result<f64> {
    if f1.0 == f2.0 {
        return Err(Error::Domain(format!("pairwise estimate needs distinct widths, got {} twice", f1.0)));
    }
    let x = |l: usize| (l as f64).powi(-2);
    Ok(6.0 / PI * (f1.1 - f2.1) / (x(f1.0) - x(f2.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesKind {
    /// Strip free energies `f(ℓ)`.
    FreeEnergy,
    /// `c_from_delta(ℓ)` values.
    Charge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeEstimateSeries {
    pub kind: SeriesKind,
    pub points: Vec<(usize, f64)>,
}

impl ChargeEstimateSeries {
    pub fn new(kind: SeriesKind, points: Vec<(usize, f64)>) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Domain("widths must be strictly increasing".into()));
            }
        }
        if points.iter().any(|p| p.0 % 2 != 0 || !p.1.is_finite()) {
            return Err(Error::Domain("widths must be even and values finite".into()));
        }
        Ok(ChargeEstimateSeries { kind, points })
    }

    /// `(x, c)` pairs: for free energies the consecutive pairwise estimates at
    /// `x = ℓ1⁻² + ℓ2⁻²` (exact for `f = A + B/ℓ² + C/ℓ⁴`), otherwise `x = ℓ⁻²`.
    pub fn estimates(&self) -> Result<Vec<(f64, f64)>> {
        match self.kind {
            SeriesKind::Charge => Ok(self.points.iter().map(|&(l, c)| ((l as f64).powi(-2), c)).collect()),
            SeriesKind::FreeEnergy => self
                .points
                .windows(2)
                .map(|w| Ok(((w[0].0 as f64).powi(-2) + (w[1].0 as f64).powi(-2), c_pairwise(w[0], w[1])?)))
                .collect(),
        }
    }
}

/// Polynomial extrapolation to `x = 0` through the given points (Neville).
pub fn neville_at_zero(pts: &[(f64, f64)]) -> f64 {
    let mut p: Vec<f64> = pts.iter().map(|q| q.1).collect();
    let n = pts.len();
    for k in 1..n {
        for i in 0..n - k {
            let (xi, xk) = (pts[i].0, pts[i + k].0);
            p[i] = (xk * p[i] - xi * p[i + 1]) / (xk - xi);
        }
    }
    p[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: f64,
    /// Largest disagreement among the top-order extrapolants and the
    /// next-lower order on the widest window.
    pub spread: f64,
}

/// Richardson extrapolation in `1/ℓ²` of order `order` (number of correction
/// terms removed), using the widest windows available.
pub fn extrapolate(series: &ChargeEstimateSeries, order: usize) -> Result<Extrapolation> {
    if series.points.len() < order + 2 {
        return Err(Error::InsufficientPoints { need: order + 2, got: series.points.len() });
    }
    let est = series.estimates()?;
    let m = est.len();
    let windows: Vec<f64> = (0..m - order).map(|s| neville_at_zero(&est[s..s + order + 1])).collect();
    let value = *windows.last().expect("at least one window");
    let lower = neville_at_zero(&est[m - order.max(1)..]);
    let mut spread = if order == 0 { 0.0 } else { (value - lower).abs() };
    for w in &windows {
        spread = spread.max((w - value).abs());
    }
    if order == 0 && m >= 2 {
        spread = (est[m - 1].1 - est[m - 2].1).abs();
    }
    Ok(Extrapolation { value, spread })
}

/// `R = ½(1 + Π_r tanh(Lγ_{2r+1}/2) + Π_n tanh(ℓγ̃_{2n+1}/2))`.
pub fn ratio_term(ell: usize, big_l: usize) -> Result<f64> {
    if ell < 2 || big_l < 2 || ell % 2 != 0 || big_l % 2 != 0 {
        return Err(Error::InvalidLattice(format!("sides must be even and >= 2, got {ell}x{big_l}")));
    }
    let log_prod = |m: usize, ext: usize| -> f64 {
        let acc: CompensatedSum = (0..m)
            .map(|r| (ext as f64 * gamma((2 * r + 1) as f64 * PI / m as f64) / 2.0).tanh().ln())
            .collect();
        acc.value()
    };
    Ok(0.5 * (1.0 + log_prod(ell, big_l).exp() + log_prod(big_l, ell).exp()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioRow {
    pub ell: usize,
    pub big_l: usize,
    pub ratio: f64,
    /// `(ℓ/L) ln R`.
    pub scaled_log: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioLimitReport {
    pub rows: Vec<RatioRow>,
    pub within_bounds: bool,
    pub decreasing: bool,
    pub final_value: f64,
}

/// Tabulates `(ℓ/L) ln R` along `L = ℓ²`.
pub fn ratio_limit_check(ells: &[usize]) -> Result<RatioLimitReport> {
    let rows = ells
        .iter()
        .map(|&ell| {
            let big_l = ell * ell;
            let r = ratio_term(ell, big_l)?;
            Ok(RatioRow { ell, big_l, ratio: r, scaled_log: ell as f64 / big_l as f64 * r.ln() })
        })
        .collect::<Result<Vec<_>>>()?;
    let within_bounds = rows.iter().all(|r| r.ratio > 0.5 && r.ratio < 1.5);
    let decreasing = rows.windows(2).all(|w| w[1].scaled_log.abs() < w[0].scaled_log.abs());
    let final_value = rows.last().map_or(f64::NAN, |r| r.scaled_log);
    Ok(RatioLimitReport { rows, within_bounds, decreasing, final_value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn onsager_constant() {
        let f = onsager_f_inf();
        assert!((f - 0.929_695_398_3).abs() < 1e-9);
        let closed = 0.5 * LN_2 + 2.0 * CATALAN / PI;
        assert!((f - closed).abs() < 5e-14, "{:e}", f - closed);
        assert!((onsager_f_inf_2d() - f).abs() < 1e-10);
    }

    #[test]
    fn delta_tends_to_pi_over_12() {
        let d = delta_ell(512).unwrap();
        assert!((d - PI / 12.0).abs() < 1e-4);
        assert!(delta_ell(3).is_err());
    }

    #[test]
    fn c_from_delta_improves() {
        let mut last = (c_from_delta(16).unwrap() - 0.5).abs();
        for ell in [32, 64, 128, 256, 512] {
            let e = (c_from_delta(ell).unwrap() - 0.5).abs();
            assert!(e < last, "ell={ell}");
            last = e;
        }
    }

    #[test]
    fn pairwise_is_exact_on_model() {
        let f = |l: usize| 0.93 + PI / 12.0 / (l * l) as f64;
        for (a, b) in [(8, 10), (12, 30), (100, 6)] {
            assert!((c_pairwise((a, f(a)), (b, f(b))).unwrap() - 0.5).abs() < 1e-12);
        }
        assert!(c_pairwise((8, 1.0), (8, 1.0)).is_err());
    }

    #[test]
    fn extrapolation_removes_quartic_term() {
        let b = 0.37;
        let f = |l: usize| 1.1 + b / (l * l) as f64 - 2.5 / (l as f64).powi(4);
        let s = ChargeEstimateSeries::new(SeriesKind::FreeEnergy, [8, 10, 12].iter().map(|&l| (l, f(l))).collect()).unwrap();
        let e = extrapolate(&s, 1).unwrap();
        assert!((e.value - 6.0 / PI * b).abs() < 1e-10);
        assert!(extrapolate(&s, 2).is_err());
    }

    #[test]
    fn series_validation() {
        assert!(ChargeEstimateSeries::new(SeriesKind::Charge, vec![(8, 0.5), (6, 0.5)]).is_err());
        assert!(ChargeEstimateSeries::new(SeriesKind::Charge, vec![(7, 0.5)]).is_err());
    }

    #[test]
    fn ratio_bounds() {
        for ell in [2, 4, 8] {
            for big_l in [2, 4, 8, 16] {
                let r = ratio_term(ell, big_l).unwrap();
                assert!(r > 0.5 && r < 1.5);
            }
        }
        // symmetric in the two sides
        assert!((ratio_term(4, 8).unwrap() - ratio_term(8, 4).unwrap()).abs() < 1e-15);
    }
}
