//! Nearest-neighbour (λ = 0) partition functions in the four boundary sectors.
//!
//! Three independent evaluators live here: the momentum-space product at
//! general `t`, the Ferdinand–Fisher cosh/sinh forms at the critical point,
//! and a Kasteleyn–Pfaffian for arbitrary bond couplings.

use std::f64::consts::{LN_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Direction, TorusLattice};
use crate::lognum::{CompensatedSum, LogNumber};
use crate::pfaffian::{pfaffian, SkewMatrix};

/// Critical `t = tanh(βJ) = √2 − 1`.
pub const T_CRITICAL: f64 = 0.414_213_562_373_095_048_801_688_724_209_7;

/// `β_c J = ½ ln(1 + √2)` for the nearest-neighbour model.
pub const BETA_C0: f64 = 0.440_686_793_509_771_512_616_243_250_788_2;

/// Boundary condition of the Grassmann fields: `+` periodic, `−` antiperiodic,
/// first component horizontal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundarySector {
    MM,
    MP,
    PM,
    PP,
}

impl BoundarySector {
    pub const ALL: [BoundarySector; 4] =
        [BoundarySector::MM, BoundarySector::MP, BoundarySector::PM, BoundarySector::PP];

    /// `(α1, α2)` as ±1.
    pub fn alpha(self) -> (i8, i8) {
        match self {
            BoundarySector::MM => (-1, -1),
            BoundarySector::MP => (-1, 1),
            BoundarySector::PM => (1, -1),
            BoundarySector::PP => (1, 1),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BoundarySector::MM => "mm",
            BoundarySector::MP => "mp",
            BoundarySector::PM => "pm",
            BoundarySector::PP => "pp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.label() == s)
    }

    /// Sign carried by a multipolygon with winding parities `(h, v)` in this
    /// sector.
    pub fn winding_sign(self, h: u8, v: u8) -> i8 {
        let (a1, a2) = self.alpha();
        let mut s = if h & v & 1 == 1 { -1 } else { 1 };
        if a1 == 1 && h & 1 == 1 {
            s = -s;
        }
        if a2 == 1 && v & 1 == 1 {
            s = -s;
        }
        s
    }
}

/// One value per boundary sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorQuartet<T> {
    pub mm: T,
    pub mp: T,
    pub pm: T,
    pub pp: T,
}

impl<T: Copy> SectorQuartet<T> {
    pub fn from_fn(mut f: impl FnMut(BoundarySector) -> T) -> Self {
        SectorQuartet {
            mm: f(BoundarySector::MM),
            mp: f(BoundarySector::MP),
            pm: f(BoundarySector::PM),
            pp: f(BoundarySector::PP),
        }
    }

    pub fn try_from_fn(mut f: impl FnMut(BoundarySector) -> Result<T>) -> Result<Self> {
        Ok(SectorQuartet {
            mm: f(BoundarySector::MM)?,
            mp: f(BoundarySector::MP)?,
            pm: f(BoundarySector::PM)?,
            pp: f(BoundarySector::PP)?,
        })
    }

    pub fn get(&self, a: BoundarySector) -> T {
        match a {
            BoundarySector::MM => self.mm,
            BoundarySector::MP => self.mp,
            BoundarySector::PM => self.pm,
            BoundarySector::PP => self.pp,
        }
    }
}

/// Smallest ratio of result to largest term that [`combine_sectors`] accepts.
pub const CANCELLATION_FLOOR: f64 = 1e-8;

/// `½(Z_-- + Z_-+ + Z_+- − Z_++)`.
pub fn combine_sectors(q: &SectorQuartet<LogNumber>) -> Result<LogNumber> {
    let (sum, scale) = LogNumber::sum_with_scale([q.mm, q.mp, q.pm, -q.pp]);
    if !sum.is_finite() {
        return Err(Error::NonFinite("sector combination"));
    }
    if scale.is_zero() {
        return Ok(LogNumber::ZERO);
    }
    let ratio = if sum.is_zero() { 0.0 } else { (sum.log_abs - scale.log_abs).exp() };
    if ratio < CANCELLATION_FLOOR {
        return Err(Error::Cancellation { ratio });
    }
    Ok(sum * LogNumber::from_f64(0.5))
}

/// The Fourier grid `D_α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MomentumGrid {
    pub ell: usize,
    pub big_l: usize,
    pub sector: BoundarySector,
}

impl MomentumGrid {
    pub fn new(lat: &TorusLattice, sector: BoundarySector) -> Self {
        MomentumGrid { ell: lat.ell(), big_l: lat.big_l(), sector }
    }

    /// Momentum of mode `(r, n)` in `[0, 2π)²`.
    pub fn k(&self, r: usize, n: usize) -> (f64, f64) {
        let (a1, a2) = self.sector.alpha();
        let s1 = if a1 == 1 { 0.0 } else { 0.5 };
        let s2 = if a2 == 1 { 0.0 } else { 0.5 };
        (
            2.0 * PI * (r as f64 + s1) / self.ell as f64,
            2.0 * PI * (n as f64 + s2) / self.big_l as f64,
        )
    }

    pub fn len(&self) -> usize {
        self.ell * self.big_l
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.big_l).flat_map(move |n| (0..self.ell).map(move |r| self.k(r, n)))
    }

    /// Mode index of `−k` for mode `(r, n)`.
    pub fn partner(&self, r: usize, n: usize) -> (usize, usize) {
        let (a1, a2) = self.sector.alpha();
        let flip = |i: usize, m: usize, periodic: bool| {
            if periodic {
                (m - i) % m
            } else {
                m - 1 - i
            }
        };
        (flip(r, self.ell, a1 == 1), flip(n, self.big_l, a2 == 1))
    }

    /// Modes with `k ≡ −k`.
    pub fn self_paired(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for n in 0..self.big_l {
            for r in 0..self.ell {
                if self.partner(r, n) == (r, n) {
                    out.push((r, n));
                }
            }
        }
        out
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("t must lie in (0, 1), got {t}")));
    }
    Ok(())
}

/// `(2cosh²βJ)^{ℓL} Π_{k∈D_α} [(1+t²)² − 2t(1−t²)(cos k1 + cos k2)]^{1/2}`,
/// with the two zero-sensitive modes of `(+,+)` replaced by their signed roots
/// `(1 − 2t − t²)(1 + 2t − t²)`.
pub fn sector_partition_uniform(lat: &TorusLattice, t: f64, sector: BoundarySector) -> Result<LogNumber> {
    check_t(t)?;
    let n_sites = lat.n_sites() as f64;
    let a = (1.0 + t * t).powi(2);
    let b = 2.0 * t * (1.0 - t * t);
    let grid = MomentumGrid::new(lat, sector);
    let mut acc = CompensatedSum::new();
    acc.add(n_sites * (LN_2 - (-t * t).ln_1p()));
    let mut sign = 1i8;
    let (half_l, half_big) = (lat.ell() / 2, lat.big_l() / 2);
    for n in 0..lat.big_l() {
        for r in 0..lat.ell() {
            let is_zero_mode = sector == BoundarySector::PP && r == 0 && n == 0;
            let is_pi_mode = sector == BoundarySector::PP && r == half_l && n == half_big;
            if is_zero_mode {
                let f = 1.0 - 2.0 * t - t * t;
                if t == T_CRITICAL {
                    return Ok(LogNumber::ZERO);
                }
                if f < 0.0 {
                    sign = -sign;
                }
                acc.add(f.abs().ln());
            } else if is_pi_mode {
                acc.add((1.0 + 2.0 * t - t * t).ln());
            } else {
                let (k1, k2) = grid.k(r, n);
                acc.add(0.5 * (a - b * (k1.cos() + k2.cos())).ln());
            }
        }
    }
    let out = LogNumber::new(sign, acc.value());
    if !out.log_abs.is_finite() {
        return Err(Error::NonFinite("momentum product"));
    }
    Ok(out)
}

/// `γ(k) = arccosh(2 − cos k)`, evaluated as `2 asinh(sin(k/2))`.
pub fn gamma(k: f64) -> f64 {
    2.0 * (k / 2.0).sin().abs().asinh()
}

/// `γ'(k) = sin k / √((2 − cos k)² − 1) = cos(k/2) / √(1 + sin²(k/2))` on `[0, 2π]`,
/// with `γ'(0) = 1`.
pub fn gamma_prime(k: f64) -> f64 {
    let s = (k / 2.0).sin();
    (k / 2.0).cos() / (1.0 + s * s).sqrt()
}

/// `ln(2 cosh x)` for `x ≥ 0`.
pub fn ln_2cosh(x: f64) -> f64 {
    x + (-2.0 * x).exp().ln_1p()
}

/// `ln(2 sinh x)` for `x > 0`.
pub fn ln_2sinh(x: f64) -> f64 {
    x + (-(-2.0 * x).exp()).ln_1p()
}

/// Which side's momenta index the Ferdinand–Fisher product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FfOrientation {
    /// `Π_{r<ℓ}` with `γ_p = γ(πp/ℓ)` and exponent `L`.
    Rows,
    /// `Π_{n<L}` with `γ̃_p = γ(πp/L)` and exponent `ℓ`.
    Columns,
}

/// Critical sector values in Ferdinand–Fisher form. `(+,+)` vanishes there and
/// has no such form.
pub fn critical_sector_ff(lat: &TorusLattice, sector: BoundarySector, orient: FfOrientation) -> Result<LogNumber> {
    let (m, ext) = match orient {
        FfOrientation::Rows => (lat.ell(), lat.big_l() as f64),
        FfOrientation::Columns => (lat.big_l(), lat.ell() as f64),
    };
    // (parity offset of p, use sinh)
    let (offset, sinh) = match (sector, orient) {
        (BoundarySector::PP, _) => {
            return Err(Error::Domain("(+,+) has no Ferdinand-Fisher form".into()));
        }
        (BoundarySector::MM, _) => (1, false),
        (BoundarySector::MP, FfOrientation::Rows) => (1, true),
        (BoundarySector::MP, FfOrientation::Columns) => (0, false),
        (BoundarySector::PM, FfOrientation::Rows) => (0, false),
        (BoundarySector::PM, FfOrientation::Columns) => (1, true),
    };
    let mut acc = CompensatedSum::new();
    acc.add(0.5 * LN_2 * lat.n_sites() as f64);
    for r in 0..m {
        let g = gamma(PI * (2 * r + offset) as f64 / m as f64);
        acc.add(if sinh { ln_2sinh(ext * g / 2.0) } else { ln_2cosh(ext * g / 2.0) });
    }
    Ok(LogNumber::from_ln(acc.value()))
}

/// Bond couplings `J_b`, indexed like [`TorusLattice::bond`].
#[derive(Debug, Clone, PartialEq)]
pub struct BondCouplings {
    pub j: Vec<f64>,
}

impl BondCouplings {
    pub fn uniform(lat: &TorusLattice, j: f64) -> Self {
        BondCouplings { j: vec![j; lat.n_bonds()] }
    }

    pub fn t_map(&self, beta: f64) -> Vec<f64> {
        self.j.iter().map(|&j| (beta * j).tanh()).collect()
    }
}

/// Multiplier of a wrap bond's entry in sector `α` is `WRAP_SIGN · α_i`.
const WRAP_SIGN: f64 = 1.0;

/// Antisymmetric matrix of the Grassmann action with bond activities `t_b`.
/// Variables per site are `(H̄, H, V̄, V)`, sites row-major.
pub fn kasteleyn_matrix(lat: &TorusLattice, t_map: &[f64], sector: BoundarySector) -> SkewMatrix {
    let mut m = SkewMatrix::zeros(4 * lat.n_sites());
    for i in 0..lat.n_sites() {
        let o = 4 * i;
        m.set(o, o + 1, 1.0);
        m.set(o + 2, o + 3, 1.0);
        m.set(o, o + 2, -1.0);
        m.set(o, o + 3, -1.0);
        m.set(o + 1, o + 2, 1.0);
        m.set(o + 1, o + 3, -1.0);
    }
    let (a1, a2) = sector.alpha();
    for (b, &t) in t_map.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let bond = lat.bond(b);
        let (bar, plain, alpha) = match bond.dir {
            Direction::Horizontal => (0, 1, a1),
            Direction::Vertical => (2, 3, a2),
        };
        let w = if bond.wraps { WRAP_SIGN * f64::from(alpha) * t } else { t };
        m.add(4 * bond.from + bar, 4 * bond.to + plain, w);
    }
    m
}

/// Signed polygon sum `Σ_Γ s_α(Γ) Π_{b∈Γ} t_b`, as `Pf(A_α)/Pf(A_0)`.
pub fn polygon_pfaffian(lat: &TorusLattice, t_map: &[f64], sector: BoundarySector) -> Result<LogNumber> {
    if t_map.len() != lat.n_bonds() {
        return Err(Error::Domain(format!("expected {} bond activities, got {}", lat.n_bonds(), t_map.len())));
    }
    if t_map.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("bond activities"));
    }
    let pf = pfaffian(&kasteleyn_matrix(lat, t_map, sector))?;
    // Pf(A_0) = (−1)^N
    let reference = if lat.n_sites() % 2 == 0 { LogNumber::ONE } else { -LogNumber::ONE };
    Ok(pf / reference)
}

/// `2^N Π_b cosh(βJ_b) · Pf(A_α)/Pf(A_0)`.
pub fn kasteleyn_pfaffian(
    lat: &TorusLattice,
    couplings: &BondCouplings,
    beta: f64,
    sector: BoundarySector,
) -> Result<LogNumber> {
    let t_map = couplings.t_map(beta);
    let poly = polygon_pfaffian(lat, &t_map, sector)?;
    let log_pref: CompensatedSum = std::iter::once(lat.n_sites() as f64 * LN_2)
        .chain(couplings.j.iter().map(|&j| ln_cosh(beta * j)))
        .collect();
    Ok(poly * LogNumber::from_ln(log_pref.value()))
}

/// `ln cosh x` without overflow.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// Uniform-coupling sector values at `t`, all four sectors.
pub fn uniform_quartet(lat: &TorusLattice, t: f64) -> Result<SectorQuartet<LogNumber>> {
    SectorQuartet::try_from_fn(|a| sector_partition_uniform(lat, t, a))
}

/// Per-site factor `√2` of the critical Ferdinand–Fisher forms.
pub const FF_SITE_FACTOR: f64 = SQRT_2;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_constants() {
        assert!((T_CRITICAL - (SQRT_2 - 1.0)).abs() < 2e-16);
        assert!((BETA_C0.tanh() - T_CRITICAL).abs() < 1e-16);
        assert!((BETA_C0 - 0.5 * (1.0 + SQRT_2).ln()).abs() < 1e-16);
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma(0.0), 0.0);
        assert!((gamma(PI) - 3f64.acosh()).abs() < 1e-15);
        assert!((gamma(PI) - 1.762_747_174_039_086).abs() < 1e-14);
        for k in [0.1, 0.7, 2.0, 3.0, 4.5, 6.0] {
            assert!((gamma(k) - (2.0 - f64::cos(k)).acosh()).abs() < 1e-12);
        }
        assert_eq!(gamma_prime(0.0), 1.0);
        assert!(gamma_prime(PI).abs() < 1e-16);
        for k in [0.05, 0.5, 1.5, 2.5, 3.1] {
            let h = 1e-6;
            let fd = (gamma(k + h) - gamma(k - h)) / (2.0 * h);
            assert!((fd - gamma_prime(k)).abs() < 1e-8);
            let closed = k.sin() / ((2.0 - k.cos()).powi(2) - 1.0).sqrt();
            assert!((closed - gamma_prime(k)).abs() < 1e-12);
        }
        // (π/12)(γ'(0+) − γ'(π))
        assert!((PI / 12.0 * (gamma_prime(0.0) - gamma_prime(PI)) - PI / 12.0).abs() < 1e-16);
    }

    #[test]
    fn grid_pairing() {
        let lat = TorusLattice::new(6, 4).unwrap();
        for s in BoundarySector::ALL {
            let g = MomentumGrid::new(&lat, s);
            assert_eq!(g.iter().count(), 24);
            for n in 0..4 {
                for r in 0..6 {
                    let (p, q) = g.partner(r, n);
                    let (k1, k2) = g.k(r, n);
                    let (m1, m2) = g.k(p, q);
                    let wrap = |x: f64| (x / (2.0 * PI)).round() * 2.0 * PI - x;
                    assert!(wrap(k1 + m1).abs() < 1e-12 && wrap(k2 + m2).abs() < 1e-12);
                }
            }
        }
        let pp = MomentumGrid::new(&lat, BoundarySector::PP).self_paired();
        assert_eq!(pp, vec![(0, 0), (3, 0), (0, 2), (3, 2)]);
        assert!(MomentumGrid::new(&lat, BoundarySector::MM).self_paired().is_empty());
    }

    #[test]
    fn small_t_limit() {
        let lat = TorusLattice::new(4, 4).unwrap();
        for s in BoundarySector::ALL {
            let z = sector_partition_uniform(&lat, 1e-12, s).unwrap();
            assert_eq!(z.sign, 1);
            assert!((z.log_abs - 16.0 * LN_2).abs() < 1e-10);
        }
        assert!(sector_partition_uniform(&lat, 0.0, BoundarySector::MM).is_err());
        assert!(sector_partition_uniform(&lat, 1.0, BoundarySector::MM).is_err());
    }

    #[test]
    fn pp_sign_change() {
        let lat = TorusLattice::new(4, 4).unwrap();
        let z = |t| sector_partition_uniform(&lat, t, BoundarySector::PP).unwrap();
        assert_eq!(z(T_CRITICAL).sign, 0);
        assert_eq!(z(0.3).sign, 1);
        assert_eq!(z(0.5).sign, -1);
    }

    #[test]
    fn non_pp_sectors_positive() {
        let lat = TorusLattice::new(6, 8).unwrap();
        for i in 1..40 {
            let t = i as f64 / 40.0;
            for s in [BoundarySector::MM, BoundarySector::MP, BoundarySector::PM] {
                assert_eq!(sector_partition_uniform(&lat, t, s).unwrap().sign, 1);
            }
        }
    }

    #[test]
    fn ff_zero_mode_factor() {
        // γ_0 = 0 contributes exactly ln 2 to Z_+-
        assert_eq!(ln_2cosh(0.0), LN_2);
        assert!((ln_2cosh(800.0) - 800.0).abs() < 1e-12);
        assert!((ln_2sinh(1.3) - (2.0 * 1.3f64.sinh()).ln()).abs() < 1e-14);
    }

    #[test]
    fn pfaffian_empty_couplings() {
        let lat = TorusLattice::new(4, 4).unwrap();
        for s in BoundarySector::ALL {
            let z = kasteleyn_pfaffian(&lat, &BondCouplings::uniform(&lat, 0.0), 1.0, s).unwrap();
            assert!((z.to_f64() - 65536.0).abs() < 1e-9);
        }
    }

    #[test]
    fn combine_detects_cancellation() {
        let q = SectorQuartet { mm: LogNumber::ONE, mp: LogNumber::ONE, pm: -LogNumber::ONE, pp: LogNumber::ONE };
        assert!(matches!(combine_sectors(&q), Err(Error::Cancellation { .. })));
        let all = SectorQuartet::from_fn(|_| LogNumber::from_f64(16.0));
        assert!((combine_sectors(&all).unwrap().to_f64() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn ff_matches_product_form() {
        for (a, b) in [(4, 4), (4, 8), (8, 16), (16, 4)] {
            let lat = TorusLattice::new(a, b).unwrap();
            for s in [BoundarySector::MM, BoundarySector::MP, BoundarySector::PM] {
                let prod = sector_partition_uniform(&lat, T_CRITICAL, s).unwrap();
                for o in [FfOrientation::Rows, FfOrientation::Columns] {
                    let ff = critical_sector_ff(&lat, s, o).unwrap();
                    assert!(ff.rel_diff(prod) < 1e-10, "{a}x{b} {s:?} {o:?}");
                }
            }
            assert!(critical_sector_ff(&lat, BoundarySector::PP, FfOrientation::Rows).is_err());
        }
    }
}
