//! Interacting sector partition functions through the string expansion.
//!
//! Each pair term is split into two channels,
//! `e^{Kσσ} = [cosh(K/2)(1 + tanh(K/2) σ_x σ_y)]²` with `K = βλv`, and every
//! present channel replaces `σ_x σ_y` by the bond product along a fixed lattice
//! path. Bonds covered an odd number of times ("blackened") have their
//! activity deformed from `t` to `1/t`, which turns each string configuration
//! into a nearest-neighbour sector value with bond-dependent couplings.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{polygon_pfaffian, BoundarySector, SectorQuartet};
use crate::lattice::{interacting_pairs, Direction, InteractingPair, InteractionSpec, TorusLattice};
use crate::lognum::{CompensatedSum, LogNumber};
use crate::oracle::{brute_force_z_pairs, ising_sum, InequalityReport, MAX_BRUTE_SITES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathShape {
    Horizontal,
    Vertical,
    Corner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LegWay {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Leg {
    pub dir: Direction,
    pub way: LegWay,
    pub steps: usize,
}

/// A simple lattice path joining an interacting pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StringPath {
    pub from: usize,
    pub to: usize,
    pub shape: PathShape,
    pub legs: Vec<Leg>,
    pub bonds: Vec<usize>,
    pub mask: u128,
}

impl StringPath {
    /// `(horizontal seam crossings, vertical seam crossings)` mod 2.
    pub fn seam_parity(&self, lat: &TorusLattice) -> (u8, u8) {
        (
            ((self.mask & lat.horizontal_seam_mask()).count_ones() & 1) as u8,
            ((self.mask & lat.vertical_seam_mask()).count_ones() & 1) as u8,
        )
    }
}

/// Walks `steps` unit moves along `dir` with orientation `s = ±1`.
fn walk(lat: &TorusLattice, start: (i64, i64), dir: Direction, s: i64, steps: usize, bonds: &mut Vec<usize>) -> (i64, i64) {
    let (mut x, mut y) = start;
    for _ in 0..steps {
        let (nx, ny) = match dir {
            Direction::Horizontal => (x + s, y),
            Direction::Vertical => (x, y + s),
        };
        // the bond is owned by the lower-left endpoint
        let owner = if s > 0 { lat.site(x, y) } else { lat.site(nx, ny) };
        bonds.push(lat.bond_index(owner, dir));
        x = nx;
        y = ny;
    }
    (x, y)
}

fn build_path(lat: &TorusLattice, pair: &InteractingPair, legs: &[(Direction, LegWay)]) -> StringPath {
    let (x0, y0) = lat.coords(pair.x);
    let (dx, dy) = pair.disp;
    let mut bonds = Vec::new();
    let mut pos = (x0 as i64, y0 as i64);
    let mut out_legs = Vec::new();
    for &(dir, way) in legs {
        let (d, side) = match dir {
            Direction::Horizontal => (dx, lat.ell() as i64),
            Direction::Vertical => (dy, lat.big_l() as i64),
        };
        let (s, steps) = match way {
            LegWay::Short => (d.signum(), d.unsigned_abs() as usize),
            LegWay::Long => (-d.signum(), (side - d.abs()) as usize),
        };
        pos = walk(lat, pos, dir, s, steps, &mut bonds);
        out_legs.push(Leg { dir, way, steps });
    }
    debug_assert_eq!(lat.site(pos.0, pos.1), pair.y);
    let mask = bonds.iter().fold(0u128, |m, &b| m | (1u128 << b));
    let shape = match (dx != 0, dy != 0) {
        (true, true) => PathShape::Corner,
        (true, false) => PathShape::Horizontal,
        _ => PathShape::Vertical,
    };
    StringPath { from: pair.x, to: pair.y, shape, legs: out_legs, bonds, mask }
}

/// All straight or single-corner paths for one pair, minimal paths first.
pub fn pair_paths(lat: &TorusLattice, pair: &InteractingPair) -> Vec<StringPath> {
    use Direction::{Horizontal as H, Vertical as V};
    use LegWay::{Long, Short};
    let legs: Vec<Vec<(Direction, LegWay)>> = match (pair.disp.0 != 0, pair.disp.1 != 0) {
        (true, false) => vec![vec![(H, Short)], vec![(H, Long)]],
        (false, true) => vec![vec![(V, Short)], vec![(V, Long)]],
        _ => {
            let mut v = vec![vec![(H, Short), (V, Short)], vec![(V, Short), (H, Short)]];
            for first in [H, V] {
                let second = if first == H { V } else { H };
                for (a, b) in [(Long, Short), (Short, Long), (Long, Long)] {
                    v.push(vec![(first, a), (second, b)]);
                }
            }
            v
        }
    };
    let mut out: Vec<StringPath> = Vec::new();
    for l in legs {
        let p = build_path(lat, pair, &l);
        if p.bonds.len() == p.mask.count_ones() as usize && !out.iter().any(|q| q.mask == p.mask) {
            out.push(p);
        }
    }
    out
}

pub const DEFAULT_CATALOG_CAP: usize = 16;

/// Paths per interacting pair.
pub fn string_catalog(
    lat: &TorusLattice,
    spec: &InteractionSpec,
    cap: usize,
) -> Result<Vec<(InteractingPair, Vec<StringPath>)>> {
    if lat.n_bonds() > 128 {
        return Err(Error::TooLarge { what: "string catalog", detail: format!("{} bonds", lat.n_bonds()) });
    }
    let pairs = interacting_pairs(lat, spec)?;
    pairs
        .into_iter()
        .map(|p| {
            let paths = pair_paths(lat, &p);
            if paths.len() > cap {
                return Err(Error::CatalogOverflow { cap, needed: paths.len() });
            }
            Ok((p, paths))
        })
        .collect()
}

/// `t_b = 1/t` on `bl`, `t` elsewhere.
pub fn deformed_couplings(n_bonds: usize, bl: u128, t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("t must lie in (0, 1), got {t}")));
    }
    Ok((0..n_bonds).map(|b| if (bl >> b) & 1 == 1 { 1.0 / t } else { t }).collect())
}

/// Which corner each channel turns at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CornerRule {
    /// Both channels go horizontal first.
    First,
    /// Both channels go vertical first.
    Second,
    /// Channel 1 horizontal first, channel 2 vertical first.
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathConvention {
    pub corner: CornerRule,
    /// Channel 2 runs its first leg the long way round the torus.
    pub long_way: bool,
}

impl PathConvention {
    pub const FIRST: PathConvention = PathConvention { corner: CornerRule::First, long_way: false };
    pub const SECOND: PathConvention = PathConvention { corner: CornerRule::Second, long_way: false };
    pub const SPLIT: PathConvention = PathConvention { corner: CornerRule::Split, long_way: false };

    pub fn tag(&self) -> String {
        let c = match self.corner {
            CornerRule::First => "first",
            CornerRule::Second => "second",
            CornerRule::Split => "split",
        };
        if self.long_way {
            format!("{c}+long")
        } else {
            c.to_string()
        }
    }

    /// Inverse of [`PathConvention::tag`].
    pub fn parse(s: &str) -> Option<Self> {
        let (base, long_way) = match s.strip_suffix("+long") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let corner = match base {
            "first" => CornerRule::First,
            "second" => CornerRule::Second,
            "split" => CornerRule::Split,
            _ => return None,
        };
        Some(PathConvention { corner, long_way })
    }

    /// Path used by `channel` (0 or 1).
    pub fn choose<'a>(&self, paths: &'a [StringPath], channel: usize) -> &'a StringPath {
        let vertical_first = match self.corner {
            CornerRule::First => false,
            CornerRule::Second => true,
            CornerRule::Split => channel == 1,
        };
        let first_way = if self.long_way && channel == 1 { LegWay::Long } else { LegWay::Short };
        paths
            .iter()
            .find(|p| {
                let lead_ok = p.shape != PathShape::Corner || (p.legs[0].dir == Direction::Vertical) == vertical_first;
                let ways_ok = p.legs[0].way == first_way && p.legs[1..].iter().all(|l| l.way == LegWay::Short);
                lead_ok && ways_ok
            })
            .unwrap_or(&paths[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpansionMethod {
    /// Pfaffian sum over string subsets when the slot count allows, else the
    /// twisted spin sums.
    Auto,
    /// Plain subset sum, one deformed Pfaffian per blackened set.
    PfaffianStrings,
    /// The same sum regrouped into four seam-twisted spin sums.
    TwistedSpinSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionOptions {
    pub convention: PathConvention,
    pub method: ExpansionMethod,
    /// Largest number of channel slots enumerated with Pfaffians.
    pub slot_cap: usize,
    pub catalog_cap: usize,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        ExpansionOptions {
            convention: PathConvention::SPLIT,
            method: ExpansionMethod::Auto,
            slot_cap: 16,
            catalog_cap: DEFAULT_CATALOG_CAP,
        }
    }
}

#[derive(Debug, Clone)]
struct Channel {
    pair: usize,
    log_tau: f64,
    mask: u128,
    seam: (u8, u8),
}

/// Channels chosen for a pair list under one convention.
#[derive(Debug, Clone)]
pub struct StringModel {
    lat: TorusLattice,
    t: f64,
    beta_j: f64,
    pairs: Vec<(InteractingPair, f64)>,
    channels: Vec<Channel>,
    log_prefactor: f64,
}

impl StringModel {
    pub fn new(
        lat: &TorusLattice,
        j: f64,
        lambda: f64,
        pairs: &[InteractingPair],
        beta: f64,
        opts: &ExpansionOptions,
    ) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::InvalidInteraction("the string expansion needs lambda >= 0".into()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        if lat.n_bonds() > 128 {
            return Err(Error::TooLarge { what: "string expansion", detail: format!("{} bonds", lat.n_bonds()) });
        }
        let t = (beta * j).tanh();
        let mut log_pref = CompensatedSum::new();
        log_pref.add(lat.n_sites() as f64 * std::f64::consts::LN_2);
        log_pref.add(lat.n_bonds() as f64 * crate::exact::ln_cosh(beta * j));
        let mut channels = Vec::new();
        let mut kept = Vec::new();
        for p in pairs {
            let k = beta * lambda * p.v;
            if k == 0.0 {
                continue;
            }
            let paths = pair_paths(lat, p);
            if paths.len() > opts.catalog_cap {
                return Err(Error::CatalogOverflow { cap: opts.catalog_cap, needed: paths.len() });
            }
            log_pref.add(2.0 * crate::exact::ln_cosh(k / 2.0));
            let log_tau = (k / 2.0).tanh().ln();
            for c in 0..2 {
                let path = opts.convention.choose(&paths, c);
                channels.push(Channel { pair: kept.len(), log_tau, mask: path.mask, seam: path.seam_parity(lat) });
            }
            kept.push((*p, k));
        }
        Ok(StringModel { lat: *lat, t, beta_j: beta * j, pairs: kept, channels, log_prefactor: log_pref.value() })
    }

    pub fn slots(&self) -> usize {
        self.channels.len()
    }

    /// Plain subset sum with one Pfaffian per distinct blackened set.
    pub fn quartet_pfaffian(&self, slot_cap: usize) -> Result<SectorQuartet<LogNumber>> {
        let slots = self.slots();
        if slots > slot_cap.min(30) {
            return Err(Error::TooLarge { what: "string subset enumeration", detail: format!("{slots} slots > {slot_cap}") });
        }
        let ln_t = self.t.ln();
        // group subsets by blackened set: bl -> Σ Π tanh
        let mut groups: HashMap<u128, CompensatedSum> = HashMap::new();
        let mut max_log = f64::NEG_INFINITY;
        let mut terms = Vec::with_capacity(1 << slots);
        for subset in 0u64..1 << slots {
            let mut bl = 0u128;
            let mut log_w = 0.0;
            for (i, ch) in self.channels.iter().enumerate() {
                if (subset >> i) & 1 == 1 {
                    bl ^= ch.mask;
                    log_w += ch.log_tau;
                }
            }
            log_w += bl.count_ones() as f64 * ln_t;
            debug_assert!(log_w.is_finite(), "string weights are positive for lambda >= 0");
            max_log = max_log.max(log_w);
            terms.push((bl, log_w));
        }
        for (bl, log_w) in terms {
            groups.entry(bl).or_default().add((log_w - max_log).exp());
        }
        let mut keys: Vec<u128> = groups.keys().copied().collect();
        keys.sort_unstable();
        let per_bl: Vec<Result<SectorQuartet<LogNumber>>> = keys
            .par_iter()
            .map(|&bl| {
                let t_map = deformed_couplings(self.lat.n_bonds(), bl, self.t)?;
                let w = LogNumber::from_f64(groups[&bl].value());
                SectorQuartet::try_from_fn(|s| Ok(polygon_pfaffian(&self.lat, &t_map, s)? * w))
            })
            .collect();
        let per_bl: Vec<SectorQuartet<LogNumber>> = per_bl.into_iter().collect::<Result<_>>()?;
        let scale = LogNumber::from_ln(self.log_prefactor + max_log);
        Ok(SectorQuartet::from_fn(|s| LogNumber::sum(per_bl.iter().map(|q| q.get(s))) * scale))
    }

    /// Seam-twisted spin sum `Z^{(a,b)}`: bonds on the twisted seams flip
    /// sign, and each pair keeps `e^{±K σσ}` when both channels cross the
    /// twisted seams with equal parity and drops to `1` otherwise.
    pub fn twisted_sum(&self, a: u8, b: u8) -> Result<LogNumber> {
        if self.lat.n_sites() > MAX_BRUTE_SITES {
            return Err(Error::TooLarge {
                what: "twisted spin sums",
                detail: format!("{} sites > {MAX_BRUTE_SITES}", self.lat.n_sites()),
            });
        }
        let hseam = self.lat.horizontal_seam_mask();
        let vseam = self.lat.vertical_seam_mask();
        let mut terms: Vec<(usize, usize, f64)> = self
            .lat
            .bonds()
            .enumerate()
            .map(|(i, bd)| {
                let twisted = (a == 1 && (hseam >> i) & 1 == 1) || (b == 1 && (vseam >> i) & 1 == 1);
                (bd.from, bd.to, if twisted { -self.beta_j } else { self.beta_j })
            })
            .collect();
        let eps = |seam: (u8, u8)| if (a & seam.0) ^ (b & seam.1) == 1 { -1.0 } else { 1.0 };
        for (k, (p, kk)) in self.pairs.iter().enumerate() {
            let e1 = eps(self.channels[2 * k].seam);
            let e2 = eps(self.channels[2 * k + 1].seam);
            debug_assert_eq!(self.channels[2 * k].pair, k);
            if e1 == e2 {
                terms.push((p.x, p.y, kk * e1));
            }
        }
        ising_sum(self.lat.n_sites(), &terms)
    }

    pub fn quartet_twisted(&self) -> Result<SectorQuartet<LogNumber>> {
        let mut z = [[LogNumber::ZERO; 2]; 2];
        for (a, row) in z.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell = self.twisted_sum(a as u8, b as u8)?;
            }
        }
        Ok(SectorQuartet::from_fn(|s| {
            LogNumber::sum((0..4).map(|ab| {
                let (a, b) = (ab & 1, ab >> 1);
                LogNumber::from_f64(twist_coefficient(s, a as u8, b as u8)) * z[a][b]
            }))
        }))
    }

    pub fn quartet(&self, opts: &ExpansionOptions) -> Result<SectorQuartet<LogNumber>> {
        match opts.method {
            ExpansionMethod::PfaffianStrings => self.quartet_pfaffian(opts.slot_cap),
            ExpansionMethod::TwistedSpinSum => self.quartet_twisted(),
            ExpansionMethod::Auto if self.slots() <= opts.slot_cap => self.quartet_pfaffian(opts.slot_cap),
            ExpansionMethod::Auto => self.quartet_twisted(),
        }
    }
}

/// `¼ Σ_{h,v} s_α(h,v) (−1)^{ah + bv}`.
pub fn twist_coefficient(sector: BoundarySector, a: u8, b: u8) -> f64 {
    let mut s = 0i32;
    for h in 0..2u8 {
        for v in 0..2u8 {
            let sign = if (a & h) ^ (b & v) == 1 { -1 } else { 1 };
            s += i32::from(sector.winding_sign(h, v)) * sign;
        }
    }
    f64::from(s) / 4.0
}

/// Sector values for an explicit pair list, with the spin-sum consistency
/// contract enforced when the lattice is small enough to enumerate.
pub fn interacting_quartet_pairs(
    lat: &TorusLattice,
    j: f64,
    lambda: f64,
    pairs: &[InteractingPair],
    beta: f64,
    opts: &ExpansionOptions,
) -> Result<SectorQuartet<LogNumber>> {
    let model = StringModel::new(lat, j, lambda, pairs, beta, opts)?;
    let q = model.quartet(opts)?;
    if lat.n_sites() <= MAX_BRUTE_SITES {
        let assembled = LogNumber::sum([q.mm, q.mp, q.pm, -q.pp]) * LogNumber::from_f64(0.5);
        let brute = brute_force_z_pairs(lat, j, lambda, pairs, beta)?;
        let err = assembled.rel_diff(brute);
        if !(err < CONSISTENCY_TOL) {
            return Err(Error::ConsistencyViolation(err));
        }
    }
    Ok(q)
}

pub const CONSISTENCY_TOL: f64 = 1e-8;

pub fn interacting_quartet(
    lat: &TorusLattice,
    spec: &InteractionSpec,
    beta: f64,
    opts: &ExpansionOptions,
) -> Result<SectorQuartet<LogNumber>> {
    spec.validate()?;
    let pairs = if spec.lambda == 0.0 { Vec::new() } else { interacting_pairs(lat, spec)? };
    interacting_quartet_pairs(lat, spec.j_coupling, spec.lambda, &pairs, beta, opts)
}

pub fn interacting_sector(
    lat: &TorusLattice,
    spec: &InteractionSpec,
    beta: f64,
    sector: BoundarySector,
    opts: &ExpansionOptions,
) -> Result<LogNumber> {
    Ok(interacting_quartet(lat, spec, beta, opts)?.get(sector))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma1Row {
    pub beta: f64,
    pub z: LogNumber,
    pub sectors: SectorQuartet<LogNumber>,
    pub ratio: f64,
    pub sumpos_margin: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
    pub sum_holds: bool,
    /// `|½(Z_-- + Z_-+ + Z_+- − Z_++)/Z − 1|`.
    pub consistency: f64,
    pub convention: String,
}

impl Lemma1Row {
    pub fn holds(&self) -> bool {
        self.lower_holds && self.upper_holds && self.sum_holds
    }
}

/// Evaluates `1/3 ≤ Z/(Z_-- + Z_-+ + Z_+-) ≤ 1` and `Z_-+ + Z_+- ≥ 0`.
pub fn lemma1_check(lat: &TorusLattice, spec: &InteractionSpec, beta: f64, opts: &ExpansionOptions) -> Result<Lemma1Row> {
    let z = crate::oracle::brute_force_z(lat, spec, beta)?;
    let q = interacting_quartet(lat, spec, beta, opts)?;
    let assembled = LogNumber::sum([q.mm, q.mp, q.pm, -q.pp]) * LogNumber::from_f64(0.5);
    let rep = InequalityReport::from_sectors(&q)?;
    let ratio = z.ratio(LogNumber::sum([q.mm, q.mp, q.pm]));
    Ok(Lemma1Row {
        beta,
        z,
        sectors: q,
        ratio,
        sumpos_margin: rep.sum_pm_mp,
        lower_holds: ratio >= 1.0 / 3.0 - 1e-12,
        upper_holds: ratio <= 1.0 + 1e-12,
        sum_holds: rep.sum_positive,
        consistency: assembled.rel_diff(z),
        convention: opts.convention.tag(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{kasteleyn_pfaffian, BondCouplings};
    use crate::lattice::Shell;
    use crate::oracle::{brute_force_z, lambda0_inequalities};

    fn lat(a: usize, b: usize) -> TorusLattice {
        TorusLattice::new(a, b).unwrap()
    }

    fn pair(l: &TorusLattice, x: (i64, i64), d: (i64, i64)) -> InteractingPair {
        InteractingPair { x: l.site(x.0, x.1), y: l.site(x.0 + d.0, x.1 + d.1), v: 1.0, disp: d }
    }

    #[test]
    fn catalog_shapes() {
        let l = lat(6, 6);
        let diag = pair_paths(&l, &pair(&l, (0, 0), (1, 1)));
        assert_eq!(diag.len(), 8);
        let minimal: Vec<_> = diag.iter().filter(|p| p.bonds.len() == 2).collect();
        assert_eq!(minimal.len(), 2);
        let via: Vec<usize> = minimal.iter().map(|p| p.bonds[0]).collect();
        assert_eq!(via, vec![l.bond_index(0, Direction::Horizontal), l.bond_index(0, Direction::Vertical)]);
        let axial = pair_paths(&l, &pair(&l, (0, 0), (2, 0)));
        assert_eq!(axial.iter().map(|p| p.bonds.len()).collect::<Vec<_>>(), vec![2, 4]);
        assert!(axial.iter().all(|p| p.shape == PathShape::Horizontal));
        for p in diag.iter().chain(&axial) {
            // endpoints have odd degree, interior vertices even
            let mut deg = vec![0; l.n_sites()];
            for &b in &p.bonds {
                let bd = l.bond(b);
                deg[bd.from] += 1;
                deg[bd.to] += 1;
            }
            for (i, d) in deg.iter().enumerate() {
                let end = i == p.from || i == p.to;
                assert_eq!(d % 2 == 1, end);
            }
        }
        let spec = InteractionSpec::diagonal(1.0, 0.2);
        assert!(matches!(string_catalog(&l, &spec, 4), Err(Error::CatalogOverflow { .. })));
        assert_eq!(string_catalog(&l, &spec, 16).unwrap().len(), 72);
    }

    #[test]
    fn deformed_map() {
        let d = deformed_couplings(4, 0b10, 0.4).unwrap();
        assert_eq!(d, vec![0.4, 2.5, 0.4, 0.4]);
        assert_eq!(deformed_couplings(3, 0, 0.4).unwrap(), vec![0.4; 3]);
    }

    #[test]
    fn derivative_identity() {
        let l = lat(4, 4);
        let beta: f64 = 0.45;
        let t = beta.tanh();
        for b in [0usize, 7, 30] {
            for s in BoundarySector::ALL {
                let h = 1e-5;
                let mut up = BondCouplings::uniform(&l, 1.0);
                let mut dn = up.clone();
                up.j[b] += h;
                dn.j[b] -= h;
                let fd = (kasteleyn_pfaffian(&l, &up, beta, s).unwrap().to_f64()
                    - kasteleyn_pfaffian(&l, &dn, beta, s).unwrap().to_f64())
                    / (2.0 * h * beta);
                let bl = deformed_couplings(32, 1u128 << b, t).unwrap();
                let pref = 16.0 * std::f64::consts::LN_2 + 32.0 * beta.cosh().ln();
                let want = t * (polygon_pfaffian(&l, &bl, s).unwrap() * LogNumber::from_ln(pref)).to_f64();
                assert!((fd / want - 1.0).abs() < 1e-6, "bond {b} {s:?}: {fd} vs {want}");
            }
        }
    }

    #[test]
    fn twist_coefficients_invert_sign_table() {
        for s in BoundarySector::ALL {
            for h in 0..2u8 {
                for v in 0..2u8 {
                    let back: f64 = (0..4u8)
                        .map(|ab| {
                            let (a, b) = (ab & 1, ab >> 1);
                            twist_coefficient(s, a, b) * if (a & h) ^ (b & v) == 1 { -1.0 } else { 1.0 }
                        })
                        .sum();
                    assert_eq!(back, f64::from(s.winding_sign(h, v)));
                }
            }
        }
    }

    #[test]
    fn lambda_zero_reduces_to_pfaffian() {
        let l = lat(4, 4);
        let beta = 0.3;
        let q = interacting_quartet(&l, &InteractionSpec::diagonal(1.0, 0.0), beta, &ExpansionOptions::default()).unwrap();
        for s in BoundarySector::ALL {
            let pf = kasteleyn_pfaffian(&l, &BondCouplings::uniform(&l, 1.0), beta, s).unwrap();
            assert!(q.get(s).rel_diff(pf) < 1e-12);
        }
    }

    /// A few pairs near both seams so that strings cross them.
    fn seam_pairs(l: &TorusLattice) -> Vec<InteractingPair> {
        vec![
            pair(l, (3, 3), (1, 1)),
            pair(l, (0, 3), (-1, 1)),
            pair(l, (1, 1), (1, 1)),
            pair(l, (3, 0), (1, -1)),
            pair(l, (2, 3), (1, 1)),
        ]
    }

    #[test]
    fn pfaffian_and_twisted_routes_agree() {
        let l = lat(4, 4);
        let pairs = seam_pairs(&l);
        for conv in [PathConvention::FIRST, PathConvention::SECOND, PathConvention::SPLIT] {
            for long_way in [false, true] {
                let conv = PathConvention { long_way, ..conv };
                let opts = ExpansionOptions { convention: conv, ..Default::default() };
                let m = StringModel::new(&l, 1.0, 0.4, &pairs, 0.5, &opts).unwrap();
                let a = m.quartet_pfaffian(16).unwrap();
                let b = m.quartet_twisted().unwrap();
                for s in BoundarySector::ALL {
                    assert!(a.get(s).rel_diff(b.get(s)) < 1e-9, "{} {s:?}", conv.tag());
                }
            }
        }
    }

    #[test]
    fn conventions_change_sectors_not_total() {
        let l = lat(4, 4);
        let pairs = seam_pairs(&l);
        let run = |c| {
            let opts = ExpansionOptions { convention: c, method: ExpansionMethod::PfaffianStrings, ..Default::default() };
            interacting_quartet_pairs(&l, 1.0, 0.3, &pairs, 0.44, &opts).unwrap()
        };
        // homologous paths cross the same seams, so only long legs matter
        let a = run(PathConvention::FIRST);
        let b = run(PathConvention::SECOND);
        let c = run(PathConvention { long_way: true, ..PathConvention::FIRST });
        for s in BoundarySector::ALL {
            assert!(a.get(s).rel_diff(b.get(s)) < 1e-10);
        }
        assert!(a.mm.rel_diff(c.mm) > 1e-6);
    }

    #[test]
    fn full_shell_consistency() {
        let l = lat(4, 4);
        let spec = InteractionSpec::diagonal(1.0, 0.2);
        for c in [PathConvention::FIRST, PathConvention::SECOND] {
            let opts = ExpansionOptions { convention: c, ..Default::default() };
            let q = interacting_quartet(&l, &spec, 0.4, &opts).unwrap();
            let z = brute_force_z(&l, &spec, 0.4).unwrap();
            let asm = LogNumber::sum([q.mm, q.mp, q.pm, -q.pp]) * LogNumber::from_f64(0.5);
            assert!(asm.rel_diff(z) < 1e-10);
        }
    }

    #[test]
    fn lemma1_lambda_zero_matches_oracle() {
        let l = lat(4, 4);
        let beta: f64 = 0.44;
        let row = lemma1_check(&l, &InteractionSpec::nearest_neighbour(1.0), beta, &ExpansionOptions::default()).unwrap();
        let rep = lambda0_inequalities(&l, &vec![beta.tanh(); 32]).unwrap();
        assert!((row.ratio - rep.ratio).abs() < 1e-12);
        assert_eq!(row.holds(), rep.holds());
    }

    #[test]
    fn lemma1_small_beta_ratio() {
        let l = lat(4, 4);
        let spec = InteractionSpec::new(1.0, 0.3, vec![Shell { r2: 2, v: 1.0 }]).unwrap();
        let row = lemma1_check(&l, &spec, 1e-7, &ExpansionOptions::default()).unwrap();
        assert!((row.ratio - 1.0 / 3.0).abs() < 1e-6);
        assert!(row.holds());
    }

    #[test]
    fn convention_tags_parse_back() {
        for corner in [CornerRule::First, CornerRule::Second, CornerRule::Split] {
            for long_way in [false, true] {
                let c = PathConvention { corner, long_way };
                assert_eq!(PathConvention::parse(&c.tag()), Some(c));
            }
        }
        assert_eq!(PathConvention::parse("diagonal"), None);
    }
}
