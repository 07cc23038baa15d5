//! The rotated lattice, its two bond families and the shared uniform field.
//!
//! Sites are pairs `(m, n)` with `n >= 0` and `m + n` even. Every site emits
//! three bonds: the two diagonal bonds `NE`/`NW` to row `n + 1` (open with
//! probability `p`) and the vertical enhancement bond `VERT` to row `n + 2`
//! (open with probability `eps`).
//!
//! Each bond carries one uniform variable `Y`, produced on demand by a
//! counter-based hash of `(seed, m, n, kind)`. A bond is open at level
//! `lambda` iff `Y < lambda`, so a single field realizes every parameter
//! value at once and openness is monotone in the level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A lattice site. `m + n` is always even and `n >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub m: i64,
    pub n: i64,
}

impl Site {
    pub fn new(m: i64, n: i64) -> Result<Self> {
        if n < 0 {
            return Err(Error::InvalidParams(format!("row {n} is negative")));
        }
        if (m + n).rem_euclid(2) != 0 {
            return Err(Error::OddColumn { column: m, row: n });
        }
        Ok(Site { m, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondKind {
    /// `(m, n) -> (m + 1, n + 1)`
    Ne,
    /// `(m, n) -> (m - 1, n + 1)`
    Nw,
    /// `(m, n) -> (m, n + 2)`, the enhancement bond.
    Vert,
}

impl BondKind {
    pub const ALL: [BondKind; 3] = [BondKind::Ne, BondKind::Nw, BondKind::Vert];

    #[inline]
    pub(crate) fn tag(self) -> u64 {
        match self {
            BondKind::Ne => 0,
            BondKind::Nw => 1,
            BondKind::Vert => 2,
        }
    }

    pub fn is_diagonal(self) -> bool {
        !matches!(self, BondKind::Vert)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub tail: Site,
    pub kind: BondKind,
}

impl Bond {
    pub fn new(tail: Site, kind: BondKind) -> Self {
        Bond { tail, kind }
    }

    pub fn head(&self) -> Site {
        let Site { m, n } = self.tail;
        match self.kind {
            BondKind::Ne => Site { m: m + 1, n: n + 1 },
            BondKind::Nw => Site { m: m - 1, n: n + 1 },
            BondKind::Vert => Site { m, n: n + 2 },
        }
    }
}

/// Bond-opening probabilities: `p` for the diagonal bonds, `eps` for the
/// vertical ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: f64,
    pub eps: f64,
}

impl Params {
    pub fn new(p: f64, eps: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("eps", eps)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(Params { p, eps })
    }

    /// `self <= other` in both coordinates.
    pub fn le(&self, other: &Params) -> bool {
        self.p <= other.p && self.eps <= other.eps
    }

    pub(crate) fn thresholds(&self) -> Thresholds {
        Thresholds {
            diag: Threshold::new(self.p),
            vert: Threshold::new(self.eps),
        }
    }
}

/// Number of random bits in a bond uniform.
pub const UNIFORM_BITS: u32 = 53;
const UNIFORM_SCALE: f64 = (1u64 << UNIFORM_BITS) as f64;

/// Integer form of an opening level: a bond with raw uniform `k` is open iff
/// `k < threshold`, which is exactly `k * 2^-53 < lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) struct Threshold(pub(crate) u64);

impl Threshold {
    pub(crate) fn new(lambda: f64) -> Self {
        // lambda * 2^53 is exact for lambda in [0, 1].
        Threshold((lambda * UNIFORM_SCALE).ceil() as u64)
    }

    #[inline]
    pub(crate) fn admits(self, raw: u64) -> bool {
        raw < self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) struct Thresholds {
    pub(crate) diag: Threshold,
    pub(crate) vert: Threshold,
}

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const COL_MUL: u64 = 0xd1b5_4a32_d192_ed03;
const ROW_MUL: u64 = 0xaef1_7502_108e_f2d9;

/// The shared source of bond uniforms, keyed by a 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomField {
    seed: u64,
    key: u64,
}

impl RandomField {
    pub fn new(seed: u64) -> Self {
        RandomField {
            seed,
            key: mix64(seed ^ 0x5851_f42d_4c95_7f2d),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Field for replica `index` of a run keyed by `master`.
    pub fn derive(master: u64, index: u64) -> Self {
        RandomField::new(mix64(master.wrapping_add(mix64(index.wrapping_mul(GOLDEN) ^ 0x2545_f491_4f6c_dd1d))))
    }

    #[inline]
    pub(crate) fn site_hash(&self, m: i64, n: i64) -> u64 {
        let h = mix64(self.key ^ (m as u64).wrapping_mul(COL_MUL));
        mix64(h ^ (n as u64).wrapping_mul(ROW_MUL))
    }

    #[inline]
    pub(crate) fn raw_from_site(site_hash: u64, kind: BondKind) -> u64 {
        mix64(site_hash.wrapping_add((kind.tag() + 1).wrapping_mul(GOLDEN))) >> (64 - UNIFORM_BITS)
    }

    /// Raw 53-bit uniform of the bond leaving `(m, n)` in direction `kind`.
    #[inline]
    pub fn raw_uniform(&self, m: i64, n: i64, kind: BondKind) -> u64 {
        Self::raw_from_site(self.site_hash(m, n), kind)
    }

    pub fn bond_uniform(&self, bond: &Bond) -> f64 {
        self.raw_uniform(bond.tail.m, bond.tail.n, bond.kind) as f64 / UNIFORM_SCALE
    }

    pub fn is_open(&self, bond: &Bond, params: &Params) -> bool {
        let lambda = if bond.kind.is_diagonal() { params.p } else { params.eps };
        Threshold::new(lambda).admits(self.raw_uniform(bond.tail.m, bond.tail.n, bond.kind))
    }
}

/// Anything that can report the uniform attached to a bond.
///
/// [`RandomField`] is the production source; tests pin individual bonds with
/// [`PinnedField`].
pub trait BondUniforms {
    fn uniform(&self, bond: &Bond) -> f64;
}

impl BondUniforms for RandomField {
    fn uniform(&self, bond: &Bond) -> f64 {
        self.bond_uniform(bond)
    }
}

/// A [`RandomField`] with a few bonds overridden by fixed values.
#[derive(Debug, Clone)]
pub struct PinnedField {
    pub base: RandomField,
    pub pins: std::collections::HashMap<Bond, f64>,
}

impl PinnedField {
    pub fn new(base: RandomField) -> Self {
        PinnedField {
            base,
            pins: Default::default(),
        }
    }

    pub fn pin(mut self, bond: Bond, y: f64) -> Self {
        self.pins.insert(bond, y);
        self
    }
}

impl BondUniforms for PinnedField {
    fn uniform(&self, bond: &Bond) -> f64 {
        self.pins.get(bond).copied().unwrap_or_else(|| self.base.bond_uniform(bond))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(m: i64, n: i64) -> Site {
        Site::new(m, n).unwrap()
    }

    #[test]
    fn heads() {
        assert_eq!(Bond::new(site(0, 0), BondKind::Ne).head(), site(1, 1));
        assert_eq!(Bond::new(site(0, 0), BondKind::Vert).head(), site(0, 2));
        assert_eq!(Bond::new(site(4, 2), BondKind::Nw).head(), site(3, 3));
    }

    #[test]
    fn site_validation() {
        assert!(Site::new(1, 0).is_err());
        assert!(Site::new(0, -2).is_err());
        assert!(Site::new(-3, 1).is_ok());
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(1.5, 0.0).is_err());
        assert!(Params::new(0.5, -0.1).is_err());
        assert!(Params::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn uniform_is_deterministic() {
        let f = RandomField::new(17);
        let b = Bond::new(site(-5, 3), BondKind::Nw);
        assert_eq!(f.bond_uniform(&b), f.bond_uniform(&b));
        assert_ne!(f.bond_uniform(&b), RandomField::new(18).bond_uniform(&b));
    }

    #[test]
    fn extreme_levels() {
        let f = RandomField::new(3);
        for m in -20..20i64 {
            let s = site(2 * m, 0);
            assert!(f.is_open(&Bond::new(s, BondKind::Ne), &Params { p: 1.0, eps: 0.0 }));
            assert!(f.is_open(&Bond::new(s, BondKind::Nw), &Params { p: 1.0, eps: 0.0 }));
            assert!(!f.is_open(&Bond::new(s, BondKind::Vert), &Params { p: 1.0, eps: 0.0 }));
            assert!(!f.is_open(&Bond::new(s, BondKind::Ne), &Params { p: 0.0, eps: 1.0 }));
            assert!(f.is_open(&Bond::new(s, BondKind::Vert), &Params { p: 0.0, eps: 1.0 }));
        }
    }

    #[test]
    fn threshold_matches_float_comparison() {
        let f = RandomField::new(99);
        for lambda in [0.0, 1e-9, 0.1, 0.25, 0.5, 0.6447, 0.999, 1.0] {
            let t = Threshold::new(lambda);
            for m in 0..200i64 {
                let raw = f.raw_uniform(2 * m, 0, BondKind::Ne);
                let y = raw as f64 / UNIFORM_SCALE;
                assert_eq!(t.admits(raw), y < lambda);
            }
        }
    }

    #[test]
    fn pinned_field_overrides() {
        let b = Bond::new(site(2, 4), BondKind::Vert);
        let f = PinnedField::new(RandomField::new(1)).pin(b, 0.125);
        assert_eq!(f.uniform(&b), 0.125);
        let other = Bond::new(site(2, 4), BondKind::Ne);
        assert_eq!(f.uniform(&other), RandomField::new(1).bond_uniform(&other));
    }
}
