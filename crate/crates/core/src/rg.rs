//! Numerically checkable pieces of the multiscale analysis: the critical-mode
//! rotation, the 2×2 covariances, the scale cutoffs, single-scale propagators
//! and the finite-volume localization kernels.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::T_CRITICAL;

pub type Mat2 = [[Complex64; 2]; 2];
pub type Mat4 = [[Complex64; 4]; 4];

const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// The fixed unitary that takes `(H̄, H, V̄, V)` to `(ψ₊, ψ₋, χ₊, χ₋)`.
pub fn critical_mode_rotation() -> Mat4 {
    let e = Complex64::from_polar(1.0, FRAC_PI_4);
    let ec = e.conj();
    let rows = [
        [e, ec, c(1.0), -I],
        [ec, e, c(1.0), I],
        [-e, -ec, c(1.0), -I],
        [-ec, -e, c(1.0), I],
    ];
    rows.map(|r| r.map(|z| z * 0.5))
}

/// `max |(U U†)_{ij} − δ_{ij}|`.
pub fn unitarity_defect(u: &Mat4) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let s: Complex64 = (0..4).map(|k| u[i][k] * u[j][k].conj()).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - target).norm());
        }
    }
    worst
}

/// Determinant by cofactor expansion.
pub fn det4(u: &Mat4) -> Complex64 {
    fn det3(m: [[Complex64; 3]; 3]) -> Complex64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
    let mut total = Complex64::new(0.0, 0.0);
    for col in 0..4 {
        let mut minor = [[Complex64::new(0.0, 0.0); 3]; 3];
        for (r, row) in minor.iter_mut().enumerate() {
            let mut cc = 0;
            for k in 0..4 {
                if k != col {
                    row[cc] = u[r + 1][k];
                    cc += 1;
                }
            }
        }
        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
        total += u[0][col] * det3(minor) * sign;
    }
    total
}

// ---- cutoffs ----

/// Scale index `h ≤ 0` and the infrared floor `h* = ⌊log₂(π/ℓ)⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleIndex {
    pub h: i32,
}

impl ScaleIndex {
    pub fn new(h: i32) -> Result<Self> {
        if h > 0 {
            return Err(Error::Domain(format!("scale index must be ≤ 0, got {h}")));
        }
        Ok(ScaleIndex { h })
    }

    pub fn infrared(ell: usize) -> i32 {
        (PI / ell as f64).log2().floor() as i32
    }

    /// `h*, …, 0`.
    pub fn range(ell: usize) -> impl DoubleEndedIterator<Item = ScaleIndex> {
        (Self::infrared(ell)..=0).map(|h| ScaleIndex { h })
    }
}

fn bump(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

/// Smooth step: 0 for `u ≤ 0`, 1 for `u ≥ 1`.
fn smooth_step(u: f64) -> f64 {
    let a = bump(u);
    let b = bump(1.0 - u);
    a / (a + b)
}

/// `χ(t)`: 1 for `t ≤ 1`, 0 for `t ≥ 2`, C^∞ and monotone in between.
pub fn chi(t: f64) -> f64 {
    1.0 - smooth_step(t - 1.0)
}

pub fn knorm(k: (f64, f64)) -> f64 {
    k.0.hypot(k.1)
}

/// `f_h(k)`. The top scale is `1 − χ(2|k|)` so that the shells telescope to 1.
pub fn cutoff(h: ScaleIndex, k: (f64, f64)) -> f64 {
    let r = knorm(k);
    if h.h == 0 {
        1.0 - chi(2.0 * r)
    } else {
        let s = (-h.h as f64).exp2();
        chi(s * r) - chi(2.0 * s * r)
    }
}

/// `Σ_{h ≤ 0} f_h(k)`, stopping once the shells are below `|k|`.
pub fn cutoff_sum(k: (f64, f64)) -> f64 {
    let r = knorm(k);
    let mut total = 0.0;
    let mut h = 0;
    loop {
        total += cutoff(ScaleIndex { h }, k);
        if (h as f64 + 1.0).exp2() < r || h < -1100 {
            break;
        }
        h -= 1;
    }
    total
}

// ---- covariances ----

pub fn sigma_psi(k: (f64, f64)) -> f64 {
    k.0.cos() + k.1.cos() - 2.0
}

pub fn sigma_chi(k: (f64, f64)) -> f64 {
    k.0.cos() + k.1.cos() + 2.0 * (SQRT_2 + 1.0) / T_CRITICAL
}

/// Lower bound of `σ_χ` over the Brillouin zone.
pub fn sigma_chi_min() -> f64 {
    2.0 * (SQRT_2 + 1.0) / T_CRITICAL - 2.0
}

fn chiral_block(k: (f64, f64), sigma: f64) -> Mat2 {
    let (s1, s2) = (k.0.sin(), k.1.sin());
    [[-I * s1 + s2, I * sigma], [-I * sigma, -I * s1 - s2]]
}

pub fn c_chi(k: (f64, f64)) -> Mat2 {
    chiral_block(k, sigma_chi(k))
}

pub fn q_matrix(k: (f64, f64)) -> Mat2 {
    let (s1, s2) = (k.0.sin(), k.1.sin());
    let d = k.0.cos() - k.1.cos();
    [[-I * s1 - s2, I * d], [-I * d, -I * s1 + s2]]
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn det2(a: &Mat2) -> Complex64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn inv2(a: &Mat2) -> Result<Mat2> {
    let d = det2(a);
    if d.norm() == 0.0 || !d.is_finite() {
        return Err(Error::Domain("singular 2x2 covariance".into()));
    }
    Ok([[a[1][1] / d, -a[0][1] / d], [-a[1][0] / d, a[0][0] / d]])
}

pub fn max_entry(a: &Mat2) -> f64 {
    a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `C_ψ(k) = M_ψ(k) − Q C_χ⁻¹ Q`. Singular at `k = 0`.
pub fn c_psi(k: (f64, f64)) -> Mat2 {
    let q = q_matrix(k);
    let cinv = inv2(&c_chi(k)).expect("C_chi is invertible on the whole zone");
    let corr = mat_mul(&q, &mat_mul(&cinv, &q));
    let mut m = chiral_block(k, sigma_psi(k));
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] -= corr[i][j];
        }
    }
    m
}

/// All three covariance matrices at one momentum.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceMatrices {
    pub c_psi: Mat2,
    pub c_chi: Mat2,
    pub q: Mat2,
}

impl CovarianceMatrices {
    pub fn at(k: (f64, f64)) -> Self {
        CovarianceMatrices { c_psi: c_psi(k), c_chi: c_chi(k), q: q_matrix(k) }
    }
}

// ---- propagators ----

fn reduce(k: f64) -> f64 {
    if k > PI {
        k - 2.0 * PI
    } else {
        k
    }
}

/// Antiperiodic momenta `π(2r+1)/n` reduced to `(−π, π]`.
fn antiperiodic_axis(n: usize) -> Vec<f64> {
    (0..n).map(|r| reduce(PI * (2 * r + 1) as f64 / n as f64)).collect()
}

/// Reduce a torus coordinate into `[0, n)`, returning the antiperiodic sign.
fn fold(x: i64, n: usize) -> (usize, f64) {
    let n = n as i64;
    let wraps = x.div_euclid(n);
    let sign = if wraps % 2 == 0 { 1.0 } else { -1.0 };
    (x.rem_euclid(n) as usize, sign)
}

/// A translation-invariant 2×2 kernel on the antiperiodic torus, stored on
/// one fundamental cell.
#[derive(Debug, Clone)]
pub struct Propagator {
    ell: usize,
    big_l: usize,
    values: Vec<Mat2>,
}

impl Propagator {
    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn big_l(&self) -> usize {
        self.big_l
    }

    /// Value at any lattice point; antiperiodic in both directions.
    pub fn at(&self, x1: i64, x2: i64) -> Mat2 {
        let (a, s1) = fold(x1, self.ell);
        let (b, s2) = fold(x2, self.big_l);
        let s = s1 * s2;
        self.values[b * self.ell + a].map(|r| r.map(|z| z * s))
    }

    /// Largest entry modulus over the cell.
    pub fn sup(&self) -> f64 {
        self.values.iter().map(max_entry).fold(0.0, f64::max)
    }

    /// Points of the cell as signed displacements in `(−n/2, n/2]`.
    pub fn centred_points(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let half = |n: usize| (-(n as i64) / 2 + 1)..=(n as i64 / 2);
        half(self.big_l).flat_map(move |x2| half(self.ell).map(move |x1| (x1, x2)))
    }
}

/// `pref · Σ_k e^{−ikx} m(k)` over the antiperiodic `n1 × n2` grid for every
/// `x ∈ xs1 × xs2`, summing one direction at a time. Output is row-major in `xs2`.
fn fourier_2d(
    n1: usize,
    n2: usize,
    m: impl Fn((f64, f64)) -> Result<Mat2> + Sync,
    xs1: &[i64],
    xs2: &[i64],
    pref: f64,
) -> Result<Vec<Mat2>> {
    let k1s = antiperiodic_axis(n1);
    let k2s = antiperiodic_axis(n2);
    let zero = [[Complex64::new(0.0, 0.0); 2]; 2];
    let modes: Vec<Mat2> = (0..n1 * n2)
        .into_par_iter()
        .map(|idx| m((k1s[idx % n1], k2s[idx / n1])))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<Mat2>> = xs2
        .par_iter()
        .map(|&x2| {
            let mut partial = vec![zero; n1];
            for (n, &k2) in k2s.iter().enumerate() {
                let ph = Complex64::from_polar(1.0, -k2 * x2 as f64);
                for (r, acc) in partial.iter_mut().enumerate() {
                    let mk = &modes[n * n1 + r];
                    for i in 0..2 {
                        for j in 0..2 {
                            acc[i][j] += ph * mk[i][j];
                        }
                    }
                }
            }
            xs1.iter()
                .map(|&x1| {
                    let mut acc = zero;
                    for (r, &k1) in k1s.iter().enumerate() {
                        let ph = Complex64::from_polar(pref, -k1 * x1 as f64);
                        for i in 0..2 {
                            for j in 0..2 {
                                acc[i][j] += ph * partial[r][i][j];
                            }
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn cell_propagator(ell: usize, big_l: usize, z: f64, m: impl Fn((f64, f64)) -> Result<Mat2> + Sync) -> Result<Propagator> {
    let xs1: Vec<i64> = (0..ell as i64).collect();
    let xs2: Vec<i64> = (0..big_l as i64).collect();
    let values = fourier_2d(ell, big_l, m, &xs1, &xs2, 2.0 * PI / (z * (ell * big_l) as f64))?;
    Ok(Propagator { ell, big_l, values })
}

fn scaled_inverse(k: (f64, f64), f: f64) -> Result<Mat2> {
    if f == 0.0 {
        return Ok([[Complex64::new(0.0, 0.0); 2]; 2]);
    }
    Ok(inv2(&c_psi(k))?.map(|r| r.map(|w| w * f)))
}

fn check_sides(ell: usize, big_l: usize, z: f64) -> Result<()> {
    if ell < 2 || big_l < 2 || ell % 2 != 0 || big_l % 2 != 0 {
        return Err(Error::InvalidLattice(format!("sides must be even, got {ell}x{big_l}")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("wave-function constant must be positive, got {z}")));
    }
    Ok(())
}

/// `g^{(h)}(x) = (2π/(Z ℓ L)) Σ_{k ∈ D_−−} e^{−ikx} f_h(k) C_ψ(k)⁻¹`.
pub fn single_scale_propagator(h: ScaleIndex, ell: usize, big_l: usize, z: f64) -> Result<Propagator> {
    scales_propagator(&[h], ell, big_l, z)
}

/// The ψ propagator restricted to a set of scales.
pub fn scales_propagator(hs: &[ScaleIndex], ell: usize, big_l: usize, z: f64) -> Result<Propagator> {
    check_sides(ell, big_l, z)?;
    cell_propagator(ell, big_l, z, |k| scaled_inverse(k, hs.iter().map(|&h| cutoff(h, k)).sum()))
}

/// The massive χ propagator, with no cutoff.
pub fn chi_propagator(ell: usize, big_l: usize, z: f64) -> Result<Propagator> {
    check_sides(ell, big_l, z)?;
    cell_propagator(ell, big_l, z, |k| inv2(&c_chi(k)))
}

/// Torus-sine distance `|δ(x)|`.
pub fn torus_distance(x: (i64, i64), ell: usize, big_l: usize) -> f64 {
    let d1 = ell as f64 / PI * (PI * x.0 as f64 / ell as f64).sin();
    let d2 = big_l as f64 / PI * (PI * x.1 as f64 / big_l as f64).sin();
    d1.hypot(d2)
}

/// `max_x |g^{(h)}(x)| (1 + 2^h |δ(x)|)^p`.
pub fn weighted_sup(g: &Propagator, h: ScaleIndex, p: i32) -> f64 {
    let s = (h.h as f64).exp2();
    g.centred_points()
        .map(|x| {
            let w = (1.0 + s * torus_distance(x, g.ell, g.big_l)).powi(p);
            max_entry(&g.at(x.0, x.1)) * w
        })
        .fold(0.0, f64::max)
}

/// `max_{|x| ≤ ℓ/2} |g^{(h)}(x) − g^{(h)}_∞(x)|`, with the reference taken on
/// a grid four times larger in each direction.
pub fn poisson_image_defect(h: ScaleIndex, ell: usize, big_l: usize) -> Result<f64> {
    let g = single_scale_propagator(h, ell, big_l, 1.0)?;
    let (fl, fb) = (4 * ell, 4 * big_l);
    check_sides(fl, fb, 1.0)?;
    let half = |n: usize| ((-(n as i64) / 2)..=(n as i64 / 2)).collect::<Vec<_>>();
    let (xs1, xs2) = (half(ell), half(big_l));
    let fine = fourier_2d(fl, fb, |k| scaled_inverse(k, cutoff(h, k)), &xs1, &xs2, 2.0 * PI / (fl * fb) as f64)?;
    let radius = ell as f64 / 2.0;
    let mut worst = 0.0f64;
    for (j, &x2) in xs2.iter().enumerate() {
        for (i, &x1) in xs1.iter().enumerate() {
            if (x1 as f64).hypot(x2 as f64) > radius {
                continue;
            }
            let here = g.at(x1, x2);
            let reference = &fine[j * xs1.len() + i];
            for a in 0..2 {
                for b in 0..2 {
                    worst = worst.max((here[a][b] - reference[a][b]).norm());
                }
            }
        }
    }
    Ok(worst)
}

// ---- localization ----

/// The kernels `G`, `d1`, `d2` on an `ℓ × L` torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationKernels {
    pub ell: usize,
    pub big_l: usize,
}

impl LocalizationKernels {
    pub fn new(ell: usize, big_l: usize) -> Result<Self> {
        check_sides(ell, big_l, 1.0)?;
        Ok(LocalizationKernels { ell, big_l })
    }

    fn folded(&self, x: (i64, i64)) -> (f64, f64, f64) {
        let (a, s1) = fold(x.0, self.ell);
        let (b, s2) = fold(x.1, self.big_l);
        (PI * a as f64 / self.ell as f64, PI * b as f64 / self.big_l as f64, s1 * s2)
    }

    pub fn g(&self, x: (i64, i64)) -> f64 {
        let (a, b, s) = self.folded(x);
        s * (1.125 * a.cos() * b.cos() - 0.125 * (3.0 * a).cos() * (3.0 * b).cos())
    }

    pub fn d1(&self, x: (i64, i64)) -> f64 {
        let (a, b, s) = self.folded(x);
        let e = PI / self.ell as f64;
        s * (1.125 * a.sin() / e.sin() * b.cos() - 0.125 * (3.0 * a).sin() / (3.0 * e).sin() * (3.0 * b).cos())
    }

    pub fn d2(&self, x: (i64, i64)) -> f64 {
        let (a, b, s) = self.folded(x);
        let e = PI / self.big_l as f64;
        s * (1.125 * a.cos() * b.sin() / e.sin() - 0.125 * (3.0 * a).cos() * (3.0 * b).sin() / (3.0 * e).sin())
    }
}

// ---- fits and the property suite ----

/// Least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::InsufficientPoints { need: 2, got: n.min(ys.len()) });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Largest `|Σ_h f_h(k) − 1|` on an `n × n` grid over the zone, skipping `k = 0`.
pub fn partition_of_unity_error(n: usize) -> f64 {
    (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let k1 = -PI + 2.0 * PI * ((idx % n) as f64 + 0.5) / n as f64;
            let k2 = -PI + 2.0 * PI * ((idx / n) as f64 + 0.5) / n as f64;
            (cutoff_sum((k1, k2)) - 1.0).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// Fits `log|G − 1|`, `log|d_i/x_i − 1|` against `log(|x|/ℓ)` along the
/// diagonal ray over `1 ≤ |x| ≤ ℓ/8`.
pub fn localization_slopes(ell: usize) -> Result<[LinearFit; 3]> {
    let kern = LocalizationKernels::new(ell, ell)?;
    let mut lx = Vec::new();
    let mut lg = Vec::new();
    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    let mut n = 1i64;
    while SQRT_2 * n as f64 <= ell as f64 / 8.0 {
        let x = (n, n);
        lx.push((SQRT_2 * n as f64 / ell as f64).ln());
        lg.push((kern.g(x) - 1.0).abs().ln());
        l1.push((kern.d1(x) / n as f64 - 1.0).abs().ln());
        l2.push((kern.d2(x) / n as f64 - 1.0).abs().ln());
        n += 1;
    }
    Ok([linear_fit(&lx, &lg)?, linear_fit(&lx, &l1)?, linear_fit(&lx, &l2)?])
}

/// Log-log slope of `max |C_ψ(k)⁻¹|` along the diagonal for `|k| ∈ [1e−4, 1e−2]`.
pub fn dispersion_slope() -> Result<LinearFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..=20 {
        let r = 10f64.powf(-4.0 + 2.0 * i as f64 / 20.0);
        let k = (r / SQRT_2, r / SQRT_2);
        xs.push(r.ln());
        ys.push(max_entry(&inv2(&c_psi(k))?).ln());
    }
    linear_fit(&xs, &ys)
}

/// `min |det C_χ(k)|` on an `n × n` grid.
pub fn min_det_c_chi(n: usize) -> f64 {
    let mut worst = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let k = (-PI + 2.0 * PI * i as f64 / n as f64, -PI + 2.0 * PI * j as f64 / n as f64);
            worst = worst.min(det2(&c_chi(k)).norm());
        }
    }
    worst
}

/// Per-scale sup norms and weighted sups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub h: i32,
    pub sup: f64,
    pub weighted_sup: f64,
}

pub fn scale_rows(ell: usize, hs: &[i32], p: i32) -> Result<Vec<ScaleRow>> {
    hs.iter()
        .map(|&h| {
            let idx = ScaleIndex::new(h)?;
            let g = single_scale_propagator(idx, ell, ell, 1.0)?;
            Ok(ScaleRow { h, sup: g.sup(), weighted_sup: weighted_sup(&g, idx, p) })
        })
        .collect()
}

/// Fit of `log₂ sup|g^{(h)}|` against `h`.
pub fn scale_law(rows: &[ScaleRow]) -> Result<LinearFit> {
    let xs: Vec<f64> = rows.iter().map(|r| r.h as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sup.log2()).collect();
    linear_fit(&xs, &ys)
}

/// Fit of `ln max|g^χ(n, 0)|` against `n` over the points well above
/// rounding level.
pub fn chi_decay(ell: usize) -> Result<LinearFit> {
    let g = chi_propagator(ell, ell, 1.0)?;
    let g0 = max_entry(&g.at(0, 0));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in 1..(ell as i64 / 2) {
        let v = max_entry(&g.at(n, 0));
        if v < 1e-11 * g0 {
            break;
        }
        xs.push(n as f64);
        ys.push(v.ln());
    }
    linear_fit(&xs, &ys)
}

/// Relative deviation of `g_{ωω}(x)` from `1/(x1 + iω x2)` and the largest
/// off-diagonal entry relative to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeAsymptotics {
    pub rel_dev_plus: f64,
    pub rel_dev_minus: f64,
    pub off_diagonal: f64,
}

pub fn free_asymptotics(ell: usize, x: (i64, i64)) -> Result<FreeAsymptotics> {
    let hs: Vec<ScaleIndex> = (ScaleIndex::infrared(ell) - 2..=0).map(|h| ScaleIndex { h }).collect();
    let g = scales_propagator(&hs, ell, ell, 1.0)?;
    let m = g.at(x.0, x.1);
    let (x1, x2) = (x.0 as f64, x.1 as f64);
    let plus = Complex64::new(x1, x2).inv();
    let minus = Complex64::new(x1, -x2).inv();
    Ok(FreeAsymptotics {
        rel_dev_plus: ((m[0][0] - plus) / plus).norm(),
        rel_dev_minus: ((m[1][1] - minus) / minus).norm(),
        off_diagonal: m[0][1].norm().max(m[1][0].norm()) / plus.norm(),
    })
}

/// Fit of `ln defect` against `ln ℓ` at fixed scale (square tori).
pub fn poisson_power(h: ScaleIndex, ells: &[usize]) -> Result<(Vec<f64>, LinearFit)> {
    let defects = ells.iter().map(|&l| poisson_image_defect(h, l, l)).collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = ells.iter().map(|&l| (l as f64).ln()).collect();
    let ys: Vec<f64> = defects.iter().map(|d| d.ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok((defects, fit))
}

/// Which parts of the property suite to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RgCheck {
    Unity,
    Decay,
    Poisson,
    Localization,
    Rotation,
}

impl RgCheck {
    pub const ALL: [RgCheck; 5] = [RgCheck::Unity, RgCheck::Decay, RgCheck::Poisson, RgCheck::Localization, RgCheck::Rotation];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unity" => Some(RgCheck::Unity),
            "decay" => Some(RgCheck::Decay),
            "poisson" => Some(RgCheck::Poisson),
            "localization" => Some(RgCheck::Localization),
            "rotation" => Some(RgCheck::Rotation),
            _ => None,
        }
    }
}

/// Fitted slopes and defects from [`rg_check`]; absent entries were not run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RgReport {
    pub ell: usize,
    pub big_l: usize,
    pub unity_error: Option<f64>,
    pub unitarity_defect: Option<f64>,
    pub det_u_modulus: Option<f64>,
    pub scale_rows: Option<Vec<ScaleRow>>,
    pub scale_law: Option<LinearFit>,
    pub chi_decay: Option<LinearFit>,
    pub dispersion: Option<LinearFit>,
    pub min_det_c_chi: Option<f64>,
    pub free_asymptotics: Option<FreeAsymptotics>,
    pub poisson_defects: Option<Vec<(usize, f64)>>,
    pub poisson_power: Option<LinearFit>,
    pub localization: Option<[LinearFit; 3]>,
}

/// Runs the selected checks. Scales are `h_range` inclusive; the decay law
/// is fitted over its strictly negative part.
pub fn rg_check(ell: usize, big_l: usize, h_range: (i32, i32), checks: &[RgCheck]) -> Result<RgReport> {
    check_sides(ell, big_l, 1.0)?;
    if h_range.0 > h_range.1 || h_range.1 > 0 {
        return Err(Error::Domain(format!("bad scale range {h_range:?}")));
    }
    let mut rep = RgReport { ell, big_l, ..Default::default() };
    for check in checks {
        match check {
            RgCheck::Unity => rep.unity_error = Some(partition_of_unity_error(100)),
            RgCheck::Rotation => {
                let u = critical_mode_rotation();
                rep.unitarity_defect = Some(unitarity_defect(&u));
                rep.det_u_modulus = Some(det4(&u).norm());
                rep.dispersion = Some(dispersion_slope()?);
                rep.min_det_c_chi = Some(min_det_c_chi(100));
            }
            RgCheck::Decay => {
                let hs: Vec<i32> = (h_range.0..=h_range.1).collect();
                let rows = hs
                    .iter()
                    .map(|&h| {
                        let idx = ScaleIndex::new(h)?;
                        let g = single_scale_propagator(idx, ell, big_l, 1.0)?;
                        Ok(ScaleRow { h, sup: g.sup(), weighted_sup: weighted_sup(&g, idx, 4) })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let shells: Vec<ScaleRow> = rows.iter().filter(|r| r.h < 0).cloned().collect();
                if shells.len() >= 2 {
                    rep.scale_law = Some(scale_law(&shells)?);
                }
                rep.scale_rows = Some(rows);
                rep.chi_decay = Some(chi_decay(ell.min(big_l))?);
                if ell >= 24 && big_l >= 24 {
                    rep.free_asymptotics = Some(free_asymptotics(ell, (8, 0))?);
                }
            }
            RgCheck::Poisson => {
                let ells = [ell / 4, ell / 2, ell].into_iter().filter(|l| l % 2 == 0 && *l >= 4).collect::<Vec<_>>();
                let (defects, fit) = poisson_power(ScaleIndex { h: 0 }, &ells)?;
                rep.poisson_defects = Some(ells.into_iter().zip(defects).collect());
                rep.poisson_power = Some(fit);
            }
            RgCheck::Localization => rep.localization = Some(localization_slopes(ell)?),
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_unitary_with_unit_entries() {
        let u = critical_mode_rotation();
        assert!(unitarity_defect(&u) < 1e-15);
        for z in u.iter().flatten() {
            assert!((z.norm() - 0.5).abs() < 1e-15);
        }
        assert!((det4(&u).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cutoffs_partition_unity() {
        assert!(partition_of_unity_error(100) < 1e-12);
        assert_eq!(chi(0.5), 1.0);
        assert_eq!(chi(2.5), 0.0);
        assert!((cutoff_sum((1e-6, 3e-7)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cutoff_support_and_sign() {
        for h in -6..0 {
            let idx = ScaleIndex::new(h).unwrap();
            let top = (h as f64 + 1.0).exp2();
            let bottom = (h as f64 - 1.0).exp2();
            for i in 0..400 {
                let r = 4.5 * i as f64 / 400.0;
                let f = cutoff(idx, (r, 0.0));
                assert!(f >= 0.0 && f <= 1.0);
                if r > top || r < bottom {
                    assert_eq!(f, 0.0, "h={h} r={r}");
                }
            }
        }
    }

    #[test]
    fn infrared_scale() {
        assert_eq!(ScaleIndex::infrared(64), -5);
        assert_eq!(ScaleIndex::infrared(4), -1);
        assert!(ScaleIndex::new(1).is_err());
    }

    #[test]
    fn c_chi_bounded_away_from_zero() {
        let bound = sigma_chi_min().powi(2);
        assert!(min_det_c_chi(64) >= bound * (1.0 - 1e-12));
        assert!(bound > 90.0);
    }

    #[test]
    fn c_psi_massless_at_origin() {
        assert_eq!(sigma_psi((0.0, 0.0)), 0.0);
        assert_eq!(det2(&c_psi((0.0, 0.0))).norm(), 0.0);
        let fit = dispersion_slope().unwrap();
        assert!((fit.slope + 1.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn kernels_at_origin_and_antiperiodic() {
        let k = LocalizationKernels::new(16, 12).unwrap();
        assert_eq!(k.g((0, 0)), 1.0);
        for x1 in -20..20 {
            for x2 in -15..15 {
                assert_eq!(k.g((x1 + 16, x2)), -k.g((x1, x2)));
                assert_eq!(k.g((x1, x2 + 12)), -k.g((x1, x2)));
                assert_eq!(k.d1((x1 + 16, x2)), -k.d1((x1, x2)));
                assert_eq!(k.d2((x1, x2 + 12)), -k.d2((x1, x2)));
            }
        }
        assert!((k.d1((1, 0)) - 1.0).abs() < 1e-14);
        assert!((k.d2((0, 1)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kernels_quartic() {
        for fit in localization_slopes(512).unwrap() {
            assert!((fit.slope - 4.0).abs() < 0.5, "{fit:?}");
        }
    }

    #[test]
    fn propagator_antiperiodic() {
        let g = single_scale_propagator(ScaleIndex::new(-1).unwrap(), 8, 6, 1.0).unwrap();
        for x1 in -4..4 {
            for x2 in -3..3 {
                assert_eq!(g.at(x1 + 8, x2), g.at(x1, x2).map(|r| r.map(|z| -z)));
                assert_eq!(g.at(x1, x2 + 6), g.at(x1, x2).map(|r| r.map(|z| -z)));
            }
        }
    }

    #[test]
    fn z_scales_inversely() {
        let idx = ScaleIndex::new(0).unwrap();
        let a = single_scale_propagator(idx, 8, 8, 1.0).unwrap();
        let b = single_scale_propagator(idx, 8, 8, 2.0).unwrap();
        assert!((a.sup() - 2.0 * b.sup()).abs() < 1e-14);
    }

    #[test]
    fn chi_propagator_decays() {
        let fit = chi_decay(32).unwrap();
        assert!(fit.slope < -0.5 && fit.r2 > 0.99, "{fit:?}");
    }

    #[test]
    fn linear_fit_exact_line() {
        let fit = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-15 && (fit.intercept - 1.0).abs() < 1e-15);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn scale_law_is_dimensional() {
        let rows = scale_rows(128, &[-4, -3, -2, -1], 4).unwrap();
        let fit = scale_law(&rows).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.1, "{fit:?}");
        // the weighted sups stay below the top-scale one
        let top = scale_rows(128, &[0], 4).unwrap()[0].weighted_sup;
        assert!(rows.iter().all(|r| r.weighted_sup <= top));
    }

    #[test]
    fn free_propagator_is_dirac_like() {
        let a = free_asymptotics(64, (8, 0)).unwrap();
        assert!(a.rel_dev_plus < 0.1 && a.rel_dev_minus < 0.1 && a.off_diagonal < 0.1, "{a:?}");
    }

    #[test]
    fn poisson_defect_shrinks() {
        let (d, fit) = poisson_power(ScaleIndex::new(0).unwrap(), &[32, 64, 128]).unwrap();
        assert!(d.windows(2).all(|w| w[1] < w[0]));
        assert!(fit.slope < -3.5, "{fit:?}");
        // ℓ = 32 sits at 3.2e-3: the compact-support cutoff has a stretched-exponential tail
        assert!(d[0] < 5e-3);
    }

    #[test]
    fn report_runs_every_check() {
        let rep = rg_check(32, 32, (-3, 0), &RgCheck::ALL).unwrap();
        assert!(rep.unity_error.unwrap() < 1e-12);
        assert!(rep.localization.is_some() && rep.poisson_power.is_some());
        assert_eq!(rep.scale_rows.as_ref().unwrap().len(), 4);
        assert!(rg_check(32, 32, (0, -1), &[RgCheck::Unity]).is_err());
        assert_eq!(RgCheck::parse("decay"), Some(RgCheck::Decay));
    }
}
