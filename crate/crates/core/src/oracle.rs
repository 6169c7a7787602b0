//! Brute-force ground truth: direct spin sums and cycle-space enumeration of
//! even subgraphs sorted by winding class.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{polygon_pfaffian, BoundarySector, SectorQuartet};
use crate::lattice::{interacting_pairs, Direction, EvenSubgraph, InteractingPair, InteractionSpec, TorusLattice};
use crate::lognum::{CompensatedSum, LogNumber};

pub const MAX_BRUTE_SITES: usize = 24;
pub const MAX_CYCLE_SITES: usize = 20;

/// `Σ_σ exp(−βH(σ))` by exhaustive enumeration.
pub fn brute_force_z(lat: &TorusLattice, spec: &InteractionSpec, beta: f64) -> Result<LogNumber> {
    spec.validate()?;
    let pairs = if spec.lambda == 0.0 { Vec::new() } else { interacting_pairs(lat, spec)? };
    brute_force_z_pairs(lat, spec.j_coupling, spec.lambda, &pairs, beta)
}

/// Spin sum with an explicit pair list (which need not be a full shell).
pub fn brute_force_z_pairs(
    lat: &TorusLattice,
    j: f64,
    lambda: f64,
    pairs: &[InteractingPair],
    beta: f64,
) -> Result<LogNumber> {
    let terms: Vec<(usize, usize, f64)> = lat
        .bonds()
        .map(|b| (b.from, b.to, beta * j))
        .chain(pairs.iter().map(|p| (p.x, p.y, beta * lambda * p.v)))
        .collect();
    ising_sum(lat.n_sites(), &terms)
}

/// `Σ_σ exp(Σ c σ_a σ_b)` over all `2^n` configurations.
pub fn ising_sum(n: usize, terms: &[(usize, usize, f64)]) -> Result<LogNumber> {
    if n > MAX_BRUTE_SITES {
        return Err(Error::TooLarge { what: "spin enumeration", detail: format!("{n} sites > {MAX_BRUTE_SITES}") });
    }
    // every exponent is at most Σ|c|
    let shift: f64 = terms.iter().map(|t| t.2.abs()).sum();
    let log_w = |bits: u64| {
        let mut e = -shift;
        for &(a, b, c) in terms {
            let anti = ((bits >> a) ^ (bits >> b)) & 1;
            e += if anti == 1 { -c } else { c };
        }
        e
    };
    let chunk_bits = n.min(12);
    let partial: Vec<f64> = (0..1u64 << (n - chunk_bits))
        .into_par_iter()
        .map(|hi| {
            let base = hi << chunk_bits;
            let mut acc = CompensatedSum::new();
            for lo in 0..1u64 << chunk_bits {
                acc.add(log_w(base | lo).exp());
            }
            acc.value()
        })
        .collect();
    let total: CompensatedSum = partial.into_iter().collect();
    let z = LogNumber::from_f64(total.value()) * LogNumber::from_ln(shift);
    if !z.is_finite() || z.sign != 1 {
        return Err(Error::NonFinite("spin sum"));
    }
    Ok(z)
}

/// Polygon sums per winding class `(h parity, v parity)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindingClassSums {
    pub z_ee: LogNumber,
    pub z_eo: LogNumber,
    pub z_oe: LogNumber,
    pub z_oo: LogNumber,
}

impl WindingClassSums {
    pub fn class(&self, h: u8, v: u8) -> LogNumber {
        match (h & 1, v & 1) {
            (0, 0) => self.z_ee,
            (0, _) => self.z_eo,
            (_, 0) => self.z_oe,
            _ => self.z_oo,
        }
    }

    /// `Σ_classes s_α(class) z_class`.
    pub fn sector(&self, sector: BoundarySector) -> LogNumber {
        LogNumber::sum(
            [(0, 0), (0, 1), (1, 0), (1, 1)]
                .into_iter()
                .map(|(h, v)| LogNumber::from_f64(f64::from(sector.winding_sign(h, v))) * self.class(h, v)),
        )
    }

    pub fn sectors(&self) -> SectorQuartet<LogNumber> {
        SectorQuartet::from_fn(|s| self.sector(s))
    }

    pub fn total(&self) -> LogNumber {
        LogNumber::sum([self.z_ee, self.z_eo, self.z_oe, self.z_oo])
    }
}

/// Cycle basis: `N − 1` plaquettes, the row-0 loop and the column-0 loop.
pub fn cycle_basis(lat: &TorusLattice) -> Vec<u128> {
    let bit = |x: i64, y: i64, d: Direction| 1u128 << lat.bond_index(lat.site(x, y), d);
    let mut gens = Vec::with_capacity(lat.n_sites() + 1);
    for i in 0..lat.n_sites() - 1 {
        let (x, y) = lat.coords(i);
        let (x, y) = (x as i64, y as i64);
        gens.push(
            bit(x, y, Direction::Horizontal)
                | bit(x, y, Direction::Vertical)
                | bit(x + 1, y, Direction::Vertical)
                | bit(x, y + 1, Direction::Horizontal),
        );
    }
    gens.push((0..lat.ell() as i64).fold(0, |m, x| m | bit(x, 0, Direction::Horizontal)));
    gens.push((0..lat.big_l() as i64).fold(0, |m, y| m | bit(0, y, Direction::Vertical)));
    gens
}

/// Rank over GF(2).
pub fn gf2_rank(vectors: &[u128]) -> usize {
    let mut rows = vectors.to_vec();
    let mut rank = 0;
    for bit in 0..128 {
        let Some(p) = (rank..rows.len()).find(|&r| (rows[r] >> bit) & 1 == 1) else { continue };
        rows.swap(rank, p);
        for r in 0..rows.len() {
            if r != rank && (rows[r] >> bit) & 1 == 1 {
                rows[r] ^= rows[rank];
            }
        }
        rank += 1;
    }
    rank
}

/// Enumerates all `2^{N+1}` even subgraphs and sums `Π_{b∈Γ} t_b` per class.
pub fn cycle_space_sector_sums(lat: &TorusLattice, t_map: &[f64]) -> Result<WindingClassSums> {
    let n = lat.n_sites();
    if n > MAX_CYCLE_SITES {
        return Err(Error::TooLarge { what: "cycle enumeration", detail: format!("{n} sites > {MAX_CYCLE_SITES}") });
    }
    if t_map.len() != lat.n_bonds() {
        return Err(Error::Domain(format!("expected {} bond activities, got {}", lat.n_bonds(), t_map.len())));
    }
    let gens = cycle_basis(lat);
    let dim = gens.len();
    debug_assert_eq!(gf2_rank(&gens), dim);
    let parity: Vec<u8> = gens
        .iter()
        .map(|&g| {
            let h = (g & lat.horizontal_seam_mask()).count_ones() as u8 & 1;
            let v = (g & lat.vertical_seam_mask()).count_ones() as u8 & 1;
            h | (v << 1)
        })
        .collect();
    let weight = |mask: u128| {
        let mut w = 1.0;
        let mut m = mask;
        while m != 0 {
            let b = m.trailing_zeros() as usize;
            w *= t_map[b];
            m &= m - 1;
        }
        w
    };
    // fix the top `split` generators per task, Gray-code the rest
    let split = dim.saturating_sub(12).min(8);
    let low = dim - split;
    let parts: Vec<([CompensatedSum; 4], u64)> = (0..1u64 << split)
        .into_par_iter()
        .map(|hi| {
            let mut mask = 0u128;
            let mut class = 0u8;
            for j in 0..split {
                if (hi >> j) & 1 == 1 {
                    mask ^= gens[low + j];
                    class ^= parity[low + j];
                }
            }
            let mut sums = [CompensatedSum::new(); 4];
            let mut count = 0u64;
            sums[class as usize].add(weight(mask));
            count += 1;
            for i in 1..1u64 << low {
                let g = i.trailing_zeros() as usize;
                mask ^= gens[g];
                class ^= parity[g];
                sums[class as usize].add(weight(mask));
                count += 1;
            }
            (sums, count)
        })
        .collect();
    let count: u64 = parts.iter().map(|p| p.1).sum();
    assert_eq!(count, 1u64 << dim, "cycle space must have 2^(N+1) elements");
    let class_sum = |c: usize| -> LogNumber {
        let s: CompensatedSum = parts.iter().map(|p| p.0[c].value()).collect();
        LogNumber::from_f64(s.value())
    };
    // class index = h | v << 1
    Ok(WindingClassSums { z_ee: class_sum(0), z_oe: class_sum(1), z_eo: class_sum(2), z_oo: class_sum(3) })
}

/// Even subgraph for a cycle-space coordinate vector, mostly for tests.
pub fn subgraph_from_coords(lat: &TorusLattice, coords: u64) -> Result<EvenSubgraph> {
    let gens = cycle_basis(lat);
    let mask = gens.iter().enumerate().filter(|(i, _)| (coords >> i) & 1 == 1).fold(0, |m, (_, g)| m ^ g);
    EvenSubgraph::new(mask, lat)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignTableCell {
    pub sector: BoundarySector,
    pub h: u8,
    pub v: u8,
    pub sign: i8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignTableReport {
    pub cells: Vec<SignTableCell>,
    /// `|Pf − Σ s z| / max(|Pf|, Σ|z|)` per sector, order mm, mp, pm, pp.
    pub residuals: Vec<f64>,
    pub failing: Vec<String>,
    pub passed: bool,
}

/// Compares the Pfaffian in each sector with the signed class recombination.
pub fn verify_sign_table(lat: &TorusLattice, t_map: &[f64], tol: f64) -> Result<SignTableReport> {
    let sums = cycle_space_sector_sums(lat, t_map)?;
    let mut cells = Vec::new();
    let mut residuals = Vec::new();
    let mut failing = Vec::new();
    for sector in BoundarySector::ALL {
        for (h, v) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            cells.push(SignTableCell { sector, h, v, sign: sector.winding_sign(h, v) });
        }
        let pf = polygon_pfaffian(lat, t_map, sector)?;
        let comb = sums.sector(sector);
        let scale = sums.total().to_f64().max(pf.to_f64().abs());
        let r = (pf.to_f64() - comb.to_f64()).abs() / scale;
        if !(r < tol) {
            failing.push(format!("{} (residual {r:.3e})", sector.label()));
        }
        residuals.push(r);
    }
    Ok(SignTableReport { passed: failing.is_empty(), cells, residuals, failing })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityReport {
    /// `(Z_+- + Z_-+) / (Z_-- + Z_-+ + Z_+-)`.
    pub sum_pm_mp: f64,
    pub sum_positive: bool,
    /// `Z / (Z_-- + Z_-+ + Z_+-)`.
    pub ratio: f64,
    pub lower_margin: f64,
    pub upper_margin: f64,
    pub ratio_holds: bool,
}

impl InequalityReport {
    pub fn from_sectors(q: &SectorQuartet<LogNumber>) -> Result<Self> {
        let total = LogNumber::sum([q.mm, q.mp, q.pm, -q.pp]) * LogNumber::from_f64(0.5);
        let denom = LogNumber::sum([q.mm, q.mp, q.pm]);
        let ratio = total.ratio(denom);
        let sum = LogNumber::sum([q.mp, q.pm]);
        if !ratio.is_finite() {
            return Err(Error::NonFinite("inequality ratio"));
        }
        Ok(InequalityReport {
            sum_pm_mp: sum.ratio(denom),
            sum_positive: sum.sign >= 0,
            ratio,
            lower_margin: ratio - 1.0 / 3.0,
            upper_margin: 1.0 - ratio,
            ratio_holds: ratio >= 1.0 / 3.0 - 1e-12 && ratio <= 1.0 + 1e-12,
        })
    }

    pub fn holds(&self) -> bool {
        self.sum_positive && self.ratio_holds
    }
}

/// Nearest-neighbour inequalities `Z_+- + Z_-+ ≥ 0` and
/// `1/3 ≤ Z/(Z_-- + Z_-+ + Z_+-) ≤ 1` from the enumerated class sums.
pub fn lambda0_inequalities(lat: &TorusLattice, t_map: &[f64]) -> Result<InequalityReport> {
    if t_map.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::Domain("all t_b must lie in (0, 1)".into()));
    }
    let sums = cycle_space_sector_sums(lat, t_map)?;
    InequalityReport::from_sectors(&sums.sectors())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{combine_sectors, kasteleyn_pfaffian, sector_partition_uniform, BondCouplings};
    use crate::lattice::winding_parity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lat(a: usize, b: usize) -> TorusLattice {
        TorusLattice::new(a, b).unwrap()
    }

    #[test]
    fn brute_force_small() {
        let l = lat(2, 2);
        let nn = InteractionSpec::nearest_neighbour(1.0);
        assert!((brute_force_z(&l, &nn, 0.0).unwrap().to_f64() - 16.0).abs() < 1e-12);
        // hand loop: 16 configurations, 8 bonds
        let beta = 0.3;
        let mut want = 0.0;
        for bits in 0u32..16 {
            let s = |i: u32| if (bits >> i) & 1 == 1 { 1.0 } else { -1.0 };
            // on 2x2 each neighbour pair is joined by two bonds
            let e = -2.0 * (s(0) * s(1) + s(2) * s(3) + s(0) * s(2) + s(1) * s(3));
            want += f64::exp(-beta * e);
        }
        let got = brute_force_z(&l, &nn, beta).unwrap().to_f64();
        assert!((got / want - 1.0).abs() < 1e-14);
    }

    #[test]
    fn basis_is_independent() {
        for (a, b) in [(2, 2), (2, 4), (4, 4), (4, 2)] {
            let l = lat(a, b);
            let gens = cycle_basis(&l);
            assert_eq!(gens.len(), l.n_sites() + 1);
            assert_eq!(gf2_rank(&gens), gens.len());
            for &g in &gens {
                EvenSubgraph::new(g, &l).unwrap();
            }
        }
    }

    #[test]
    fn zero_couplings() {
        let l = lat(4, 4);
        let s = cycle_space_sector_sums(&l, &vec![0.0; 32]).unwrap();
        assert_eq!(s.z_ee.to_f64(), 1.0);
        assert!(s.z_eo.is_zero() && s.z_oe.is_zero() && s.z_oo.is_zero());
    }

    #[test]
    fn class_parity_matches_winding() {
        let l = lat(2, 4);
        // generators 0..7 are plaquettes, 7 the row loop, 8 the column loop
        for c in [0u64, 1, 0b1000_0000, 0b1_0000_0000, 0b1_1000_0101, 0b0_0111_1111] {
            let g = subgraph_from_coords(&l, c).unwrap();
            assert_eq!(winding_parity(&g, &l), (((c >> 7) & 1) as u8, ((c >> 8) & 1) as u8));
        }
    }

    #[test]
    fn polygon_total_is_spin_sum() {
        let l = lat(2, 2);
        let beta: f64 = 0.37;
        let t = beta.tanh();
        let sums = cycle_space_sector_sums(&l, &vec![t; 8]).unwrap();
        let pref = LogNumber::from_ln(4.0 * std::f64::consts::LN_2 + 8.0 * beta.cosh().ln());
        let z = sums.total() * pref;
        let bf = brute_force_z(&l, &InteractionSpec::nearest_neighbour(1.0), beta).unwrap();
        assert!(z.rel_diff(bf) < 1e-13);
    }

    #[test]
    fn pfaffian_matches_signed_classes_uniform() {
        let l = lat(4, 4);
        let t = 0.4;
        let sums = cycle_space_sector_sums(&l, &vec![t; 32]).unwrap();
        let pref = LogNumber::from_ln(16.0 * std::f64::consts::LN_2 - 16.0 * (1.0 - t * t).ln());
        for s in BoundarySector::ALL {
            let closed = sector_partition_uniform(&l, t, s).unwrap();
            let oracle = sums.sector(s) * pref;
            assert!(closed.rel_diff(oracle) < 1e-10, "{s:?}: {closed} vs {oracle}");
            let pf = polygon_pfaffian(&l, &vec![t; 32], s).unwrap();
            assert!(pf.rel_diff(sums.sector(s)) < 1e-10, "{s:?} pfaffian");
        }
    }

    #[test]
    fn recombination_matches_spin_sum() {
        let nn = InteractionSpec::nearest_neighbour(1.0);
        for (a, b) in [(2, 2), (2, 4), (4, 2), (4, 4), (2, 6), (4, 6)] {
            let l = lat(a, b);
            for t in [0.15, 0.35, 0.5, 0.8] {
                let beta = f64::atanh(t);
                let q = crate::exact::uniform_quartet(&l, t).unwrap();
                let z = combine_sectors(&q).unwrap();
                let bf = brute_force_z(&l, &nn, beta).unwrap();
                assert!(z.rel_diff(bf) < 1e-10, "{a}x{b} t={t}");
                let pf = SectorQuartet::try_from_fn(|s| {
                    kasteleyn_pfaffian(&l, &BondCouplings::uniform(&l, 1.0), beta, s)
                })
                .unwrap();
                for s in BoundarySector::ALL {
                    assert!(pf.get(s).rel_diff(q.get(s)) < 1e-9, "{a}x{b} t={t} {s:?}");
                }
            }
        }
    }

    #[test]
    fn random_couplings_sign_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (a, b) in [(2, 2), (4, 4), (2, 4)] {
            let l = lat(a, b);
            for _ in 0..3 {
                let t: Vec<f64> = (0..l.n_bonds()).map(|_| rng.gen_range(0.05..0.95)).collect();
                let rep = verify_sign_table(&l, &t, 1e-9).unwrap();
                assert!(rep.passed, "{a}x{b}: {:?}", rep.failing);
            }
        }
    }

    #[test]
    fn lambda0_bounds() {
        let l = lat(4, 4);
        let rep = lambda0_inequalities(&l, &vec![0.41; 32]).unwrap();
        assert!(rep.holds() && rep.lower_margin > 0.0 && rep.upper_margin > 0.0);
        let rep = lambda0_inequalities(&l, &vec![1e-9; 32]).unwrap();
        assert!((rep.ratio - 1.0 / 3.0).abs() < 1e-8);
    }
}
