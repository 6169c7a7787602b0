//! Row-to-row transfer matrix on infinitely long periodic strips.
//!
//! `T = D^{1/2} K D^{1/2}` with `D` the in-row Boltzmann weight and `K` the
//! weight of the vertical bonds and diagonal pairs between two rows. `K` is
//! applied one site at a time, so a matrix-vector product costs
//! `O(ℓ · 2^ℓ)` and the `4^ℓ` entries are never formed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::InteractionSpec;
use crate::lognum::CompensatedSum;

pub const MAX_STRIP_WIDTH: usize = 16;

/// Where the in-row weight is attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Splitting {
    /// `D^{1/2} K D^{1/2}`, symmetric.
    Symmetric,
    /// `K D`, similar to the symmetric form.
    Source,
}

#[derive(Debug, Clone)]
pub struct TransferOperator {
    ell: usize,
    beta: f64,
    j: f64,
    /// `λ · v` of the diagonal shell.
    diag: f64,
    splitting: Splitting,
    /// `exp(β E_row(s) / 2)` (or the full weight for [`Splitting::Source`]).
    row_weight: Vec<f64>,
}

impl TransferOperator {
    pub fn new(ell: usize, beta: f64, spec: &InteractionSpec) -> Result<Self> {
        Self::with_splitting(ell, beta, spec, Splitting::Symmetric)
    }

    pub fn with_splitting(ell: usize, beta: f64, spec: &InteractionSpec, splitting: Splitting) -> Result<Self> {
        spec.validate()?;
        if ell > MAX_STRIP_WIDTH {
            return Err(Error::TooLarge { what: "transfer matrix", detail: format!("width {ell} > {MAX_STRIP_WIDTH}") });
        }
        if ell < 2 || ell % 2 != 0 {
            return Err(Error::InvalidLattice(format!("strip width must be even and >= 2, got {ell}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be >= 0, got {beta}")));
        }
        let mut diag = 0.0;
        for s in &spec.shells {
            if s.v == 0.0 || spec.lambda == 0.0 {
                continue;
            }
            if s.r2 != 2 {
                return Err(Error::InvalidInteraction(format!(
                    "the strip solver couples adjacent rows only; shell r2={} is not supported",
                    s.r2
                )));
            }
            diag = spec.lambda * s.v;
        }
        let exponent = match splitting {
            Splitting::Symmetric => 0.5,
            Splitting::Source => 1.0,
        };
        let row_weight = (0..1usize << ell)
            .map(|s| {
                let bonds: i32 = (0..ell).map(|i| spin(s, i) * spin(s, (i + 1) % ell)).sum();
                (exponent * beta * spec.j_coupling * f64::from(bonds)).exp()
            })
            .collect();
        Ok(TransferOperator { ell, beta, j: spec.j_coupling, diag, splitting, row_weight })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        1 << self.ell
    }

    /// `K · x` by an `ℓ`-step sweep. Intermediate vectors carry two extra
    /// bits: `a` (the old spin left of the current site) and `b` (the old
    /// spin at site 0, needed when the sweep wraps around).
    fn apply_k(&self, x: &[f64]) -> Vec<f64> {
        let ell = self.ell;
        let n = 1usize << ell;
        let a_bit = n;
        let b_bit = 2 * n;
        // w[s'][σ][a][next] = exp(β s'(Jσ + λv(a + next)))
        let mut w = [[[[0.0f64; 2]; 2]; 2]; 2];
        for (sp, ws) in w.iter_mut().enumerate() {
            for (sg, wg) in ws.iter_mut().enumerate() {
                for (a, wa) in wg.iter_mut().enumerate() {
                    for (nx, wn) in wa.iter_mut().enumerate() {
                        let h = self.j * pm(sg) + self.diag * (pm(a) + pm(nx));
                        *wn = (self.beta * pm(sp) * h).exp();
                    }
                }
            }
        }
        let mut cur = vec![0.0; 4 * n];
        // site 0: both aux bits remember the old s_0
        cur.par_chunks_mut(1024.min(4 * n)).enumerate().for_each(|(c, chunk)| {
            for (o, slot) in chunk.iter_mut().enumerate() {
                let idx = c * 1024.min(4 * n) + o;
                let bits = idx & (n - 1);
                let a = (idx >> ell) & 1;
                let b = (idx >> (ell + 1)) & 1;
                if a != b {
                    *slot = 0.0;
                    continue;
                }
                let left = (bits >> (ell - 1)) & 1;
                let right = (bits >> (1 % ell)) & 1;
                let old = (bits & !1) | a;
                let sp = bits & 1;
                let h = self.j * pm(a) + self.diag * (pm(left) + pm(right));
                *slot = (self.beta * pm(sp) * h).exp() * x[old];
            }
        });
        let mut next = vec![0.0; 4 * n];
        for i in 1..ell {
            let chunk_len = 1024.min(4 * n);
            next.par_chunks_mut(chunk_len).enumerate().for_each(|(c, chunk)| {
                for (o, slot) in chunk.iter_mut().enumerate() {
                    let idx = c * chunk_len + o;
                    let bits = idx & (n - 1);
                    let sigma = (idx >> ell) & 1;
                    let b = (idx >> (ell + 1)) & 1;
                    let sp = (bits >> i) & 1;
                    let nx = if i + 1 < ell { (bits >> (i + 1)) & 1 } else { b };
                    let src = (bits & !(1 << i)) | (sigma << i) | (b * b_bit);
                    *slot = w[sp][sigma][0][nx] * cur[src] + w[sp][sigma][1][nx] * cur[src | a_bit];
                }
            });
            std::mem::swap(&mut cur, &mut next);
        }
        (0..n).map(|s| cur[s] + cur[s | a_bit] + cur[s | b_bit] + cur[s | a_bit | b_bit]).collect()
    }

    /// `T · x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Domain(format!("state vector has length {}, expected {}", x.len(), self.dim())));
        }
        let out = match self.splitting {
            Splitting::Symmetric => {
                let y: Vec<f64> = x.iter().zip(&self.row_weight).map(|(a, b)| a * b).collect();
                let mut z = self.apply_k(&y);
                z.iter_mut().zip(&self.row_weight).for_each(|(a, b)| *a *= b);
                z
            }
            Splitting::Source => {
                let y: Vec<f64> = x.iter().zip(&self.row_weight).map(|(a, b)| a * b).collect();
                self.apply_k(&y)
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transfer matrix apply"));
        }
        Ok(out)
    }

    /// Dense matrix, for checks at small widths.
    pub fn to_dense(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        let mut cols = Vec::with_capacity(n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            cols.push(self.apply(&e)?);
        }
        Ok((0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect())
    }
}

fn spin(s: usize, i: usize) -> i32 {
    if (s >> i) & 1 == 1 {
        1
    } else {
        -1
    }
}

fn pm(bit: usize) -> f64 {
    if bit == 1 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub log_lambda1: f64,
    /// `−∞` when the flip-odd sector is annihilated (β = 0).
    pub log_lambda2: f64,
    pub xi: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { tol: 1e-13, max_iter: 50_000 }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Leading eigenpair by power iteration from `start`, optionally kept
/// orthogonal to `deflate`. Returns `(ln λ, eigenvector, iterations)`.
fn power(
    op: &TransferOperator,
    mut v: Vec<f64>,
    deflate: Option<&[f64]>,
    opts: &PowerOptions,
) -> Result<(f64, Vec<f64>, usize)> {
    let symmetric = op.splitting == Splitting::Symmetric;
    let project = |v: &mut Vec<f64>| {
        if let Some(u) = deflate {
            let c = dot(u, v);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
        }
    };
    project(&mut v);
    let n0 = norm(&v);
    if n0 == 0.0 {
        return Err(Error::Domain("start vector vanishes after deflation".into()));
    }
    v.iter_mut().for_each(|a| *a /= n0);
    let mut last = f64::NAN;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let mut w = op.apply(&v)?;
        project(&mut w);
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok((f64::NEG_INFINITY, v, it));
        }
        let est = if symmetric { dot(&v, &w) } else { nw };
        let log_est = est.abs().ln();
        w.iter_mut().for_each(|a| *a /= nw);
        v = w;
        change = (log_est - last).abs();
        if change < opts.tol {
            return Ok((log_est, v, it));
        }
        last = log_est;
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, last_change: change })
}

/// `ln λ1` from a flip-even start, `ln λ2` from a flip-odd start deflated
/// against the converged `λ1` vector.
pub fn dominant_pair(op: &TransferOperator, opts: &PowerOptions) -> Result<SpectralData> {
    let (l1, v1, it1) = power(op, vec![1.0; op.dim()], None, opts)?;
    let odd: Vec<f64> = (0..op.dim())
        .map(|s| {
            let m: i32 = (0..op.ell).map(|i| spin(s, i)).sum();
            f64::from(m) + 0.1 * f64::from(m.signum())
        })
        .collect();
    let (l2, _, it2) = power(op, odd, Some(&v1), opts)?;
    let xi = if l2 == f64::NEG_INFINITY { 0.0 } else { 1.0 / (l1 - l2) };
    Ok(SpectralData { log_lambda1: l1, log_lambda2: l2, xi, iterations: it1 + it2 })
}

/// Dominant eigenvector (normalised, flip-even).
pub fn dominant_vector(op: &TransferOperator, opts: &PowerOptions) -> Result<Vec<f64>> {
    Ok(power(op, vec![1.0; op.dim()], None, opts)?.1)
}

/// `f(ℓ, β) = ln λ1 / ℓ`.
pub fn strip_free_energy(ell: usize, beta: f64, spec: &InteractionSpec, opts: &PowerOptions) -> Result<f64> {
    let op = TransferOperator::new(ell, beta, spec)?;
    Ok(power(&op, vec![1.0; op.dim()], None, opts)?.0 / ell as f64)
}

/// `ξ_ℓ(β) / ℓ`.
pub fn scaled_xi(ell: usize, beta: f64, spec: &InteractionSpec, opts: &PowerOptions) -> Result<f64> {
    let op = TransferOperator::new(ell, beta, spec)?;
    Ok(dominant_pair(&op, opts)?.xi / ell as f64)
}

/// Crossing of `ξ_ℓ/ℓ` and `ξ_ℓ'/ℓ'` inside `bracket`, by the Illinois
/// variant of regula falsi.
pub fn locate_beta_c(
    spec: &InteractionSpec,
    widths: (usize, usize),
    bracket: (f64, f64),
    tol: f64,
    opts: &PowerOptions,
) -> Result<f64> {
    let (l1, l2) = widths;
    if l1 == l2 {
        return Err(Error::Domain(format!("crossing needs two distinct widths, got {l1} twice")));
    }
    let g = |b: f64| -> Result<f64> { Ok(scaled_xi(l1, b, spec, opts)? - scaled_xi(l2, b, spec, opts)?) };
    let (mut lo, mut hi) = bracket;
    let (mut glo, mut ghi) = (g(lo)?, g(hi)?);
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    if glo.signum() == ghi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let mid = (lo * ghi - hi * glo) / (ghi - glo);
        let gm = g(mid)?;
        if gm == 0.0 || (hi - lo).abs() < tol {
            return Ok(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
            if side == -1 {
                ghi /= 2.0;
            }
            side = -1;
        } else {
            hi = mid;
            ghi = gm;
            if side == 1 {
                glo /= 2.0;
            }
            side = 1;
        }
        if (hi - lo).abs() < tol {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::NoConvergence { iterations: 200, last_change: hi - lo })
}

/// `Tr T^L`, by repeated application to each basis vector. Equals the
/// partition function of the `ℓ × L` torus.
pub fn torus_trace(op: &TransferOperator, big_l: usize) -> Result<f64> {
    let n = op.dim();
    let mut total = CompensatedSum::new();
    for c in 0..n {
        let mut v = vec![0.0; n];
        v[c] = 1.0;
        for _ in 0..big_l {
            v = op.apply(&v)?;
        }
        total.add(v[c]);
    }
    Ok(total.value())
}

/// Crossing estimates `β^{(ℓ,ℓ')}` combined assuming
/// `β^{(ℓ,ℓ')} = β_c + A · ℓ̄^{−p}` with `ℓ̄ = (ℓ + ℓ')/2`.
pub fn combine_crossings(crossings: &[((usize, usize), f64)], power: f64) -> Result<f64> {
    if crossings.len() < 2 {
        return Err(Error::InsufficientPoints { need: 2, got: crossings.len() });
    }
    let n = crossings.len();
    let ((a1, a2), b1) = crossings[n - 2];
    let ((c1, c2), b2) = crossings[n - 1];
    let x1 = (0.5 * (a1 + a2) as f64).powf(-power);
    let x2 = (0.5 * (c1 + c2) as f64).powf(-power);
    Ok((b2 * x1 - b1 * x2) / (x1 - x2))
}
