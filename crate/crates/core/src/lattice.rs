//! Torus geometry, the interaction specification, spin and bond bookkeeping.
//!
//! Sites are numbered row-major, `i = x + ℓ·y`. Bond `2i` joins `i` to its
//! right neighbour, bond `2i + 1` joins it to the site above. Wrap bonds are
//! the horizontal bonds leaving column `ℓ−1` (the horizontal seam) and the
//! vertical bonds leaving row `L−1` (the vertical seam).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub from: usize,
    pub to: usize,
    pub dir: Direction,
    /// Crosses the seam in its own direction.
    pub wraps: bool,
}

/// An even-sided `ℓ × L` torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusLattice {
    ell: usize,
    big_l: usize,
}

impl TorusLattice {
    pub fn new(ell: usize, big_l: usize) -> Result<Self> {
        if ell < 2 || big_l < 2 || ell % 2 != 0 || big_l % 2 != 0 {
            return Err(Error::InvalidLattice(format!(
                "sides must be even and at least 2, got {ell}x{big_l}"
            )));
        }
        Ok(TorusLattice { ell, big_l })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn big_l(&self) -> usize {
        self.big_l
    }

    pub fn n_sites(&self) -> usize {
        self.ell * self.big_l
    }

    pub fn n_bonds(&self) -> usize {
        2 * self.n_sites()
    }

    pub fn site(&self, x: i64, y: i64) -> usize {
        let x = x.rem_euclid(self.ell as i64) as usize;
        let y = y.rem_euclid(self.big_l as i64) as usize;
        x + self.ell * y
    }

    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.ell, i / self.ell)
    }

    pub fn bond_index(&self, site: usize, dir: Direction) -> usize {
        2 * site
            + match dir {
                Direction::Horizontal => 0,
                Direction::Vertical => 1,
            }
    }

    pub fn bond(&self, b: usize) -> Bond {
        let from = b / 2;
        let (x, y) = self.coords(from);
        if b % 2 == 0 {
            Bond {
                from,
                to: self.site(x as i64 + 1, y as i64),
                dir: Direction::Horizontal,
                wraps: x == self.ell - 1,
            }
        } else {
            Bond {
                from,
                to: self.site(x as i64, y as i64 + 1),
                dir: Direction::Vertical,
                wraps: y == self.big_l - 1,
            }
        }
    }

    pub fn bonds(&self) -> impl Iterator<Item = Bond> + '_ {
        (0..self.n_bonds()).map(move |b| self.bond(b))
    }

    /// The four bonds incident to a site: right, up, left, down.
    pub fn incident_bonds(&self, i: usize) -> [usize; 4] {
        let (x, y) = self.coords(i);
        let left = self.site(x as i64 - 1, y as i64);
        let down = self.site(x as i64, y as i64 - 1);
        [2 * i, 2 * i + 1, 2 * left, 2 * down + 1]
    }

    /// Minimal-image displacement from `a` to `b`. Components lie in
    /// `(−ℓ/2, ℓ/2]` and `(−L/2, L/2]`.
    pub fn displacement(&self, a: usize, b: usize) -> (i64, i64) {
        let (xa, ya) = self.coords(a);
        let (xb, yb) = self.coords(b);
        let wrap = |d: i64, n: i64| {
            let d = d.rem_euclid(n);
            if d > n / 2 {
                d - n
            } else {
                d
            }
        };
        (
            wrap(xb as i64 - xa as i64, self.ell as i64),
            wrap(yb as i64 - ya as i64, self.big_l as i64),
        )
    }

    /// Mask with one bit per horizontal-seam bond.
    pub fn horizontal_seam_mask(&self) -> u128 {
        (0..self.big_l)
            .map(|y| self.bond_index(self.site(self.ell as i64 - 1, y as i64), Direction::Horizontal))
            .fold(0u128, |m, b| m | (1u128 << b))
    }

    pub fn vertical_seam_mask(&self) -> u128 {
        (0..self.ell)
            .map(|x| self.bond_index(self.site(x as i64, self.big_l as i64 - 1), Direction::Vertical))
            .fold(0u128, |m, b| m | (1u128 << b))
    }
}

/// One shell `|x|² = r2` of the finite-range potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub r2: u32,
    pub v: f64,
}

impl Shell {
    /// All integer displacements with `dx² + dy² = r2`.
    pub fn vectors(&self) -> Vec<(i64, i64)> {
        let r = (self.r2 as f64).sqrt().ceil() as i64;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if (dx * dx + dy * dy) as u32 == self.r2 {
                    out.push((dx, dy));
                }
            }
        }
        out
    }
}

/// Couplings of the Hamiltonian
/// `H = −J Σ_{nn} σσ − λ Σ_{pairs} v(x−y) σ_x σ_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub j_coupling: f64,
    pub lambda: f64,
    pub shells: Vec<Shell>,
}

impl InteractionSpec {
    pub fn new(j_coupling: f64, lambda: f64, shells: Vec<Shell>) -> Result<Self> {
        let spec = InteractionSpec { j_coupling, lambda, shells };
        spec.validate()?;
        Ok(spec)
    }

    /// Plain nearest-neighbour model.
    pub fn nearest_neighbour(j_coupling: f64) -> Self {
        InteractionSpec { j_coupling, lambda: 0.0, shells: Vec::new() }
    }

    /// Nearest neighbour plus a `v = 1` diagonal (`|x| = √2`) shell.
    pub fn diagonal(j_coupling: f64, lambda: f64) -> Self {
        InteractionSpec { j_coupling, lambda, shells: vec![Shell { r2: 2, v: 1.0 }] }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j_coupling > 0.0 && self.j_coupling.is_finite()) {
            return Err(Error::InvalidInteraction(format!("J must be positive, got {}", self.j_coupling)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInteraction(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        let mut seen = Vec::new();
        for s in &self.shells {
            if s.r2 <= 1 {
                return Err(Error::InvalidInteraction(format!(
                    "shell r2={} overlaps the origin or the nearest-neighbour bond",
                    s.r2
                )));
            }
            if s.vectors().is_empty() {
                return Err(Error::InvalidInteraction(format!("no lattice vector has |x|^2 = {}", s.r2)));
            }
            if !(s.v >= 0.0 && s.v.is_finite()) {
                return Err(Error::InvalidInteraction(format!("shell r2={} has negative v", s.r2)));
            }
            if seen.contains(&s.r2) {
                return Err(Error::InvalidInteraction(format!("duplicate shell r2={}", s.r2)));
            }
            seen.push(s.r2);
        }
        Ok(())
    }

    /// `v(x)` for a displacement; zero off the listed shells.
    pub fn v(&self, dx: i64, dy: i64) -> f64 {
        let r2 = (dx * dx + dy * dy) as u32;
        self.shells.iter().find(|s| s.r2 == r2).map_or(0.0, |s| s.v)
    }

    /// Largest coordinate reach `max(|dx|, |dy|)` over the nonzero shells.
    pub fn range(&self) -> usize {
        self.active_shells()
            .flat_map(|s| s.vectors())
            .map(|(dx, dy)| dx.unsigned_abs().max(dy.unsigned_abs()) as usize)
            .max()
            .unwrap_or(0)
    }

    fn active_shells(&self) -> impl Iterator<Item = &Shell> {
        self.shells.iter().filter(|s| s.v != 0.0)
    }

    pub fn is_nearest_neighbour(&self) -> bool {
        self.lambda == 0.0 || self.active_shells().next().is_none()
    }
}

/// An interacting pair with `v(x − y) ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractingPair {
    pub x: usize,
    pub y: usize,
    pub v: f64,
    /// Minimal-image displacement `y − x`.
    pub disp: (i64, i64),
}

/// Every unordered pair with nonzero `v`, listed once.
pub fn interacting_pairs(lat: &TorusLattice, spec: &InteractionSpec) -> Result<Vec<InteractingPair>> {
    let range = spec.range();
    if range > 0 && 2 * range >= lat.ell().min(lat.big_l()) {
        return Err(Error::AmbiguousImages { range, ell: lat.ell(), big_l: lat.big_l() });
    }
    Ok(shell_pairs_unchecked(lat, spec))
}

/// One entry per site and half-plane shell vector, without the image check.
/// On tori narrower than twice the range the same two sites can appear more
/// than once; that multigraph is what a row transfer matrix counts.
pub fn shell_pairs_unchecked(lat: &TorusLattice, spec: &InteractionSpec) -> Vec<InteractingPair> {
    let mut half: Vec<((i64, i64), f64)> = spec
        .active_shells()
        .flat_map(|s| s.vectors().into_iter().map(move |d| (d, s.v)))
        .filter(|&((dx, dy), _)| dy > 0 || (dy == 0 && dx > 0))
        .collect();
    half.sort_by_key(|&((dx, dy), _)| (dy, dx));
    let mut out = Vec::with_capacity(lat.n_sites() * half.len());
    for x in 0..lat.n_sites() {
        let (cx, cy) = lat.coords(x);
        for &((dx, dy), v) in &half {
            let y = lat.site(cx as i64 + dx, cy as i64 + dy);
            out.push(InteractingPair { x, y, v, disp: (dx, dy) });
        }
    }
    out
}

/// Spin configuration on at most 64 sites, bit `i` set ⇔ `σ_i = +1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    bits: u64,
    n: usize,
}

impl SpinConfig {
    pub fn new(bits: u64, lat: &TorusLattice) -> Result<Self> {
        let n = lat.n_sites();
        if n > 64 {
            return Err(Error::TooLarge { what: "bit-packed spins", detail: format!("{n} sites") });
        }
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        Ok(SpinConfig { bits: bits & mask, n })
    }

    pub fn all_up(lat: &TorusLattice) -> Result<Self> {
        Self::new(u64::MAX, lat)
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn spin(&self, i: usize) -> i32 {
        if (self.bits >> i) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn flipped(&self) -> Self {
        let mask = if self.n == 64 { u64::MAX } else { (1u64 << self.n) - 1 };
        SpinConfig { bits: !self.bits & mask, n: self.n }
    }

    pub fn with_flip(&self, i: usize) -> Self {
        SpinConfig { bits: self.bits ^ (1u64 << i), n: self.n }
    }
}

/// Precomputed bond and pair lists for fast repeated energy evaluation.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    nn: Vec<(usize, usize)>,
    pairs: Vec<(usize, usize, f64)>,
    j: f64,
    lambda: f64,
}

impl EnergyModel {
    pub fn new(lat: &TorusLattice, spec: &InteractionSpec) -> Result<Self> {
        spec.validate()?;
        let pairs = if spec.lambda == 0.0 {
            Vec::new()
        } else {
            interacting_pairs(lat, spec)?.into_iter().map(|p| (p.x, p.y, p.v)).collect()
        };
        Ok(EnergyModel {
            nn: lat.bonds().map(|b| (b.from, b.to)).collect(),
            pairs,
            j: spec.j_coupling,
            lambda: spec.lambda,
        })
    }

    /// `H(σ)` for a bit-packed configuration.
    pub fn energy_bits(&self, bits: u64) -> f64 {
        let s = |i: usize| ((bits >> i) & 1) as i32 * 2 - 1;
        let nn: i32 = self.nn.iter().map(|&(a, b)| s(a) * s(b)).sum();
        let lr: f64 = self.pairs.iter().map(|&(a, b, v)| v * f64::from(s(a) * s(b))).sum();
        -self.j * f64::from(nn) - self.lambda * lr
    }
}

pub fn energy(config: &SpinConfig, lat: &TorusLattice, spec: &InteractionSpec) -> Result<f64> {
    Ok(EnergyModel::new(lat, spec)?.energy_bits(config.bits))
}

/// Bond set with every vertex of even degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EvenSubgraph {
    mask: u128,
}

impl EvenSubgraph {
    pub fn new(mask: u128, lat: &TorusLattice) -> Result<Self> {
        if lat.n_bonds() > 128 {
            return Err(Error::TooLarge { what: "bond masks", detail: format!("{} bonds", lat.n_bonds()) });
        }
        for i in 0..lat.n_sites() {
            let deg = lat.incident_bonds(i).iter().filter(|&&b| (mask >> b) & 1 == 1).count();
            if deg % 2 == 1 {
                return Err(Error::OddVertex(i));
            }
        }
        Ok(EvenSubgraph { mask })
    }

    pub fn mask(&self) -> u128 {
        self.mask
    }
}

/// Winding parities `(h mod 2, v mod 2)` read off seam crossings.
pub fn winding_parity(g: &EvenSubgraph, lat: &TorusLattice) -> (u8, u8) {
    let h = (g.mask & lat.horizontal_seam_mask()).count_ones() % 2;
    let v = (g.mask & lat.vertical_seam_mask()).count_ones() % 2;
    (h as u8, v as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lat(a: usize, b: usize) -> TorusLattice {
        TorusLattice::new(a, b).unwrap()
    }

    #[test]
    fn rejects_odd_sides() {
        assert!(TorusLattice::new(3, 4).is_err());
        assert!(TorusLattice::new(0, 4).is_err());
    }

    #[test]
    fn every_site_has_four_bonds() {
        let l = lat(4, 6);
        let mut deg = vec![0; l.n_sites()];
        for b in l.bonds() {
            deg[b.from] += 1;
            deg[b.to] += 1;
        }
        assert_eq!(l.bonds().count(), 2 * l.n_sites());
        assert!(deg.iter().all(|&d| d == 4));
        for i in 0..l.n_sites() {
            let (x, y) = l.coords(i);
            assert_eq!(l.site(x as i64, y as i64), i);
        }
    }

    #[test]
    fn ground_state_energy_2x2() {
        let l = lat(2, 2);
        let up = SpinConfig::all_up(&l).unwrap();
        let e = energy(&up, &l, &InteractionSpec::nearest_neighbour(1.0)).unwrap();
        assert_eq!(e, -8.0);
    }

    #[test]
    fn single_flip_costs_eight() {
        let l = lat(4, 4);
        let spec = InteractionSpec::nearest_neighbour(1.0);
        let up = SpinConfig::all_up(&l).unwrap();
        let e0 = energy(&up, &l, &spec).unwrap();
        let e1 = energy(&up.with_flip(5), &l, &spec).unwrap();
        assert_eq!(e1 - e0, 8.0);
    }

    /// Double loop over every ordered site pair with coordinate arithmetic.
    fn reference_energy(bits: u64, l: &TorusLattice, spec: &InteractionSpec) -> f64 {
        let (w, h) = (l.ell() as i64, l.big_l() as i64);
        let s = |x: i64, y: i64| {
            let i = (x.rem_euclid(w) + w * y.rem_euclid(h)) as u64;
            ((bits >> i) & 1) as f64 * 2.0 - 1.0
        };
        let mut e = 0.0;
        for y in 0..h {
            for x in 0..w {
                e -= spec.j_coupling * s(x, y) * (s(x + 1, y) + s(x, y + 1));
                for y2 in 0..h {
                    for x2 in 0..w {
                        let mut dx = (x2 - x).rem_euclid(w);
                        if dx > w / 2 {
                            dx -= w;
                        }
                        let mut dy = (y2 - y).rem_euclid(h);
                        if dy > h / 2 {
                            dy -= h;
                        }
                        // each unordered pair visited twice
                        e -= 0.5 * spec.lambda * spec.v(dx, dy) * s(x, y) * s(x2, y2);
                    }
                }
            }
        }
        e
    }

    #[test]
    fn interacting_energy_matches_double_loop() {
        let l = lat(4, 4);
        let spec = InteractionSpec::diagonal(1.0, 0.3);
        for bits in [0u64, 0xBEEF, 0x1234, 0xF0F0, 0x5A5A] {
            let c = SpinConfig::new(bits, &l).unwrap();
            let e = energy(&c, &l, &spec).unwrap();
            assert!((e - reference_energy(bits, &l, &spec)).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_pair_count() {
        let pairs = interacting_pairs(&lat(4, 4), &InteractionSpec::diagonal(1.0, 1.0)).unwrap();
        assert_eq!(pairs.len(), 32);
        let spec = InteractionSpec::new(1.0, 1.0, vec![Shell { r2: 4, v: 0.5 }]).unwrap();
        let pairs = interacting_pairs(&lat(6, 6), &spec).unwrap();
        assert_eq!(pairs.len(), 72);
        assert!(pairs.iter().all(|p| p.v == 0.5));
        let none = interacting_pairs(&lat(4, 4), &InteractionSpec::nearest_neighbour(1.0)).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn ambiguous_range_is_rejected() {
        let spec = InteractionSpec::new(1.0, 1.0, vec![Shell { r2: 4, v: 0.5 }]).unwrap();
        assert!(matches!(interacting_pairs(&lat(4, 4), &spec), Err(Error::AmbiguousImages { .. })));
    }

    #[test]
    fn pairs_match_all_pairs_enumeration() {
        let l = lat(6, 8);
        let spec = InteractionSpec::new(
            1.0,
            0.5,
            vec![Shell { r2: 2, v: 1.0 }, Shell { r2: 5, v: 0.25 }],
        )
        .unwrap();
        let mut got: Vec<(usize, usize)> = interacting_pairs(&l, &spec)
            .unwrap()
            .iter()
            .map(|p| (p.x.min(p.y), p.x.max(p.y)))
            .collect();
        got.sort();
        let mut want = Vec::new();
        for a in 0..l.n_sites() {
            for b in a + 1..l.n_sites() {
                let (dx, dy) = l.displacement(a, b);
                if spec.v(dx, dy) != 0.0 {
                    want.push((a, b));
                }
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn winding_examples() {
        let l = lat(4, 4);
        let empty = EvenSubgraph::new(0, &l).unwrap();
        assert_eq!(winding_parity(&empty, &l), (0, 0));
        let row: u128 = (0..4).map(|x| 1u128 << l.bond_index(x, Direction::Horizontal)).sum();
        assert_eq!(winding_parity(&EvenSubgraph::new(row, &l).unwrap(), &l), (1, 0));
        let s = l.site(1, 1);
        let plaq = (1u128 << l.bond_index(s, Direction::Horizontal))
            | (1u128 << l.bond_index(s, Direction::Vertical))
            | (1u128 << l.bond_index(l.site(2, 1), Direction::Vertical))
            | (1u128 << l.bond_index(l.site(1, 2), Direction::Horizontal));
        assert_eq!(winding_parity(&EvenSubgraph::new(plaq, &l).unwrap(), &l), (0, 0));
        assert!(matches!(EvenSubgraph::new(1, &l), Err(Error::OddVertex(_))));
    }

    proptest! {
        #[test]
        fn energy_symmetries(bits in any::<u64>(), sx in 0i64..4, sy in 0i64..6) {
            let l = lat(4, 6);
            let spec = InteractionSpec::diagonal(1.0, 0.4);
            let model = EnergyModel::new(&l, &spec).unwrap();
            let c = SpinConfig::new(bits, &l).unwrap();
            let e = model.energy_bits(c.bits());
            prop_assert!((e - model.energy_bits(c.flipped().bits())).abs() < 1e-12);
            let mut shifted = 0u64;
            for i in 0..l.n_sites() {
                if c.spin(i) == 1 {
                    let (x, y) = l.coords(i);
                    shifted |= 1 << l.site(x as i64 + sx, y as i64 + sy);
                }
            }
            prop_assert!((e - model.energy_bits(shifted)).abs() < 1e-12);
        }

        #[test]
        fn winding_parity_is_additive(a in 0usize..256, b in 0usize..256) {
            // build even subgraphs from plaquettes and the two seam loops
            let l = lat(4, 4);
            let gens = generators(&l);
            let build = |k: usize| gens.iter().enumerate()
                .filter(|(i, _)| (k >> i) & 1 == 1)
                .fold(0u128, |m, (_, g)| m ^ g);
            let (ga, gb) = (build(a), build(b));
            let pa = winding_parity(&EvenSubgraph::new(ga, &l).unwrap(), &l);
            let pb = winding_parity(&EvenSubgraph::new(gb, &l).unwrap(), &l);
            let pab = winding_parity(&EvenSubgraph::new(ga ^ gb, &l).unwrap(), &l);
            prop_assert_eq!(pab, (pa.0 ^ pb.0, pa.1 ^ pb.1));
        }
    }

    fn generators(l: &TorusLattice) -> Vec<u128> {
        let plaq = |x: i64, y: i64| {
            (1u128 << l.bond_index(l.site(x, y), Direction::Horizontal))
                | (1u128 << l.bond_index(l.site(x, y), Direction::Vertical))
                | (1u128 << l.bond_index(l.site(x + 1, y), Direction::Vertical))
                | (1u128 << l.bond_index(l.site(x, y + 1), Direction::Horizontal))
        };
        let row: u128 = (0..4).map(|x| 1u128 << l.bond_index(x, Direction::Horizontal)).sum();
        let col: u128 = (0..4).map(|y| 1u128 << l.bond_index(4 * y, Direction::Vertical)).sum();
        vec![plaq(0, 0), plaq(1, 2), plaq(3, 3), plaq(2, 0), row, col, plaq(3, 1), plaq(0, 3)]
    }
}
