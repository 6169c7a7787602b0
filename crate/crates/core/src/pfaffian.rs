//! Pfaffian of a real antisymmetric matrix by pivoted skew elimination.

use crate::error::{Error, Result};
use crate::lognum::LogNumber;

/// Dense antisymmetric matrix, row-major. Only the caller's writes through
/// [`SkewMatrix::set`] are trusted; the lower triangle is kept in sync there.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SkewMatrix {
    pub fn zeros(n: usize) -> Self {
        SkewMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets `A[i][j] = x` and `A[j][i] = −x`.
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        assert_ne!(i, j, "diagonal of a skew matrix is zero");
        self.data[i * self.n + j] = x;
        self.data[j * self.n + i] = -x;
    }

    /// Adds `x` to `A[i][j]` (and `−x` to `A[j][i]`).
    pub fn add(&mut self, i: usize, j: usize, x: f64) {
        let v = self.get(i, j);
        self.set(i, j, v + x);
    }

    /// `P A Pᵀ` with `perm[i]` the new index of old index `i`.
    pub fn permuted(&self, perm: &[usize]) -> SkewMatrix {
        let mut out = SkewMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.data[perm[i] * self.n + perm[j]] = self.get(i, j);
            }
        }
        out
    }

}

fn swap_index(data: &mut [f64], n: usize, a: usize, b: usize) {
    for c in 0..n {
        data.swap(a * n + c, b * n + c);
    }
    for r in 0..n {
        data.swap(r * n + a, r * n + b);
    }
}

/// Smallest nonzero pivot magnitude accepted before the elimination is
/// declared near-singular.
pub const PIVOT_FLOOR: f64 = 1e-300;

/// Pfaffian as a signed log-magnitude. An exactly zero pivot column gives an
/// exact zero; a tiny nonzero pivot is an error.
pub fn pfaffian(m: &SkewMatrix) -> Result<LogNumber> {
    let n = m.n;
    if n % 2 == 1 {
        return Ok(LogNumber::ZERO);
    }
    let mut a = m.data.clone();
    let mut sign: i8 = 1;
    let mut log_abs = 0.0;
    for k in (0..n).step_by(2) {
        let (mut piv, mut best) = (k + 1, 0.0f64);
        for j in k + 1..n {
            let x = a[k * n + j].abs();
            if x > best {
                best = x;
                piv = j;
            }
        }
        if best == 0.0 {
            return Ok(LogNumber::ZERO);
        }
        if !best.is_finite() {
            return Err(Error::NonFinite("pfaffian"));
        }
        if best < PIVOT_FLOOR {
            return Err(Error::NearSingular { step: k / 2, pivot: best });
        }
        if piv != k + 1 {
            swap_index(&mut a, n, k + 1, piv);
            sign = -sign;
        }
        let p = a[k * n + k + 1];
        if p < 0.0 {
            sign = -sign;
        }
        log_abs += p.abs().ln();
        // Schur complement: B_ij += (A_{i,k+1} A_{j,k} − A_{i,k} A_{j,k+1}) / p
        let inv = 1.0 / p;
        for i in k + 2..n {
            let aik = a[i * n + k] * inv;
            let aik1 = a[i * n + k + 1] * inv;
            if aik == 0.0 && aik1 == 0.0 {
                continue;
            }
            for j in i + 1..n {
                let d = aik1 * a[j * n + k] - aik * a[j * n + k + 1];
                a[i * n + j] += d;
                a[j * n + i] -= d;
            }
        }
    }
    Ok(LogNumber::new(sign, log_abs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Expansion along the first row.
    fn pf_recursive(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        if n == 0 {
            return 1.0;
        }
        let mut total = 0.0;
        for j in 1..n {
            if m[0][j] == 0.0 {
                continue;
            }
            let keep: Vec<usize> = (1..n).filter(|&c| c != j).collect();
            let sub: Vec<Vec<f64>> =
                keep.iter().map(|&r| keep.iter().map(|&c| m[r][c]).collect()).collect();
            let s = if j % 2 == 1 { 1.0 } else { -1.0 };
            total += s * m[0][j] * pf_recursive(&sub);
        }
        total
    }

    fn random(n: usize, rng: &mut ChaCha8Rng, density: f64) -> (SkewMatrix, Vec<Vec<f64>>) {
        let mut m = SkewMatrix::zeros(n);
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < density {
                    let x = rng.gen_range(-2.0..2.0);
                    m.set(i, j, x);
                    d[i][j] = x;
                    d[j][i] = -x;
                }
            }
        }
        (m, d)
    }

    #[test]
    fn two_by_two() {
        let mut m = SkewMatrix::zeros(2);
        m.set(0, 1, -3.5);
        assert!((pfaffian(&m).unwrap().to_f64() + 3.5).abs() < 1e-15);
    }

    #[test]
    fn matches_recursive_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [4, 6, 8, 10] {
            for density in [1.0, 0.4] {
                for _ in 0..5 {
                    let (m, d) = random(n, &mut rng, density);
                    let want = pf_recursive(&d);
                    let got = pfaffian(&m).unwrap().to_f64();
                    assert!((got - want).abs() <= 1e-11 * want.abs().max(1.0), "{got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn square_is_determinant_sign_free() {
        // Pf(A)² = det(A); det from Gaussian elimination with partial pivoting.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, mut d) = random(12, &mut rng, 1.0);
        let n = 12;
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n).max_by(|&a, &b| d[a][c].abs().total_cmp(&d[b][c].abs())).unwrap();
            if p != c {
                d.swap(p, c);
                det = -det;
            }
            det *= d[c][c];
            for r in c + 1..n {
                let f = d[r][c] / d[c][c];
                for k in c..n {
                    d[r][k] -= f * d[c][k];
                }
            }
        }
        let pf = pfaffian(&m).unwrap().to_f64();
        assert!((pf * pf / det - 1.0).abs() < 1e-10);
    }

    #[test]
    fn permutation_changes_sign_by_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, _) = random(8, &mut rng, 1.0);
        let base = pfaffian(&m).unwrap().to_f64();
        let swapped = m.permuted(&[1, 0, 2, 3, 4, 5, 6, 7]);
        assert!((pfaffian(&swapped).unwrap().to_f64() + base).abs() < 1e-12 * base.abs());
        let cyc = m.permuted(&[4, 5, 6, 7, 0, 1, 2, 3]);
        assert!((pfaffian(&cyc).unwrap().to_f64() - base).abs() < 1e-12 * base.abs());
    }

    #[test]
    fn singular_cases() {
        let m = SkewMatrix::zeros(4);
        assert!(pfaffian(&m).unwrap().is_zero());
        let mut tiny = SkewMatrix::zeros(2);
        tiny.set(0, 1, 1e-310);
        assert!(matches!(pfaffian(&tiny), Err(Error::NearSingular { .. })));
    }

    #[test]
    fn large_block_diagonal_stays_finite() {
        let n = 600;
        let mut m = SkewMatrix::zeros(n);
        for k in (0..n).step_by(2) {
            m.set(k, k + 1, 1e3);
        }
        let pf = pfaffian(&m).unwrap();
        assert_eq!(pf.sign, 1);
        assert!((pf.log_abs - 300.0 * 1e3f64.ln()).abs() < 1e-9);
    }
}
