//! Exact computations on small instances.
//!
//! Subsets are bit masks. Inside a [`DistWindow`] bit `i` is the site with
//! light-cone index `u = origin + i`, i.e. column `2u - row`. Inside a
//! [`WindowLaw`] bit `k` is the column `-2k` relative to the right edge.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Params;

mod domination;
mod scan;

pub use domination::{check_domination, verify_lemma_domination, DominationResult, LemmaReport};
pub use scan::window_law_half_line;

/// Largest row window the row-by-row operator accepts.
pub const MAX_DP_SITES: usize = 12;
/// Largest bond count the brute-force enumeration accepts.
pub const MAX_BRUTE_BONDS: usize = 24;
/// Largest window law width accepted by the domination check.
pub const MAX_LAW_WIDTH: usize = 6;

/// Fixed light-cone window `u in [origin, origin + len)`, the same on every
/// row. Sites outside it are never occupied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistWindow {
    pub origin: i64,
    pub len: usize,
}

impl DistWindow {
    /// Smallest window holding the full forward cone of `init` up to row `n`.
    pub fn cone(init: &[i64], n: usize) -> Result<Self> {
        let lo = init.iter().min().ok_or(Error::EmptyInitial)?;
        let hi = init.iter().max().unwrap();
        Ok(DistWindow {
            origin: lo.div_euclid(2),
            len: ((hi - lo) / 2) as usize + n + 1,
        })
    }

    fn mask_of(&self, init: &[i64]) -> Result<u64> {
        if init.is_empty() {
            return Err(Error::EmptyInitial);
        }
        let mut mask = 0u64;
        for &m in init {
            if m.rem_euclid(2) != 0 {
                return Err(Error::OddColumn { column: m, row: 0 });
            }
            let i = m / 2 - self.origin;
            if !(0..self.len as i64).contains(&i) {
                return Err(Error::InvalidParams(format!("initial column {m} lies outside the window")));
            }
            mask |= 1 << i;
        }
        Ok(mask)
    }

    /// Columns of a row mask.
    pub fn columns(&self, row: i64, mask: u64) -> Vec<i64> {
        (0..self.len)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| 2 * (self.origin + i as i64) - row)
            .collect()
    }
}

/// Exact joint law of `(row n - 1, row n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetDist {
    pub window: DistWindow,
    /// Index of the later row.
    pub row: i64,
    pub probs: BTreeMap<(u64, u64), f64>,
    /// Crude bound on accumulated rounding error.
    pub error_bound: f64,
}

impl SubsetDist {
    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Marginal law of the later row.
    pub fn curr_marginal(&self) -> BTreeMap<u64, f64> {
        let mut out = BTreeMap::new();
        for (&(_, c), &q) in &self.probs {
            *out.entry(c).or_insert(0.0) += q;
        }
        out
    }

    /// Total variation distance to another law on the same window.
    pub fn tv_distance(&self, other: &SubsetDist) -> f64 {
        let mut keys: Vec<_> = self.probs.keys().chain(other.probs.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        0.5 * keys
            .iter()
            .map(|k| (self.probs.get(k).unwrap_or(&0.0) - other.probs.get(k).unwrap_or(&0.0)).abs())
            .sum::<f64>()
    }
}

fn check_params(params: &Params) -> Result<()> {
    Params::new(params.p, params.eps).map(|_| ())
}

/// Law of the next row given the two source rows: independent sites with
/// `q_j = 1 - (1 - p [j in curr]) (1 - p [j-1 in curr]) (1 - eps [j-1 in prev])`.
fn next_row_law(params: &Params, len: usize, prev: u64, curr: u64, mut emit: impl FnMut(u64, f64)) {
    let mut forced = 0u64;
    let mut free: Vec<(usize, f64)> = Vec::new();
    for j in 0..len {
        let nw = curr >> j & 1 == 1;
        let ne = j > 0 && curr >> (j - 1) & 1 == 1;
        let v = j > 0 && prev >> (j - 1) & 1 == 1;
        let closed = (if nw { 1.0 - params.p } else { 1.0 })
            * (if ne { 1.0 - params.p } else { 1.0 })
            * (if v { 1.0 - params.eps } else { 1.0 });
        let q = 1.0 - closed;
        if closed == 0.0 {
            forced |= 1 << j;
        } else if q > 0.0 {
            free.push((j, q));
        }
    }
    // enumerate the uncertain sites
    let k = free.len();
    for pattern in 0u64..(1 << k) {
        let mut mask = forced;
        let mut w = 1.0;
        for (bit, &(j, q)) in free.iter().enumerate() {
            if pattern >> bit & 1 == 1 {
                mask |= 1 << j;
                w *= q;
            } else {
                w *= 1.0 - q;
            }
        }
        emit(mask, w);
    }
}

/// Exact law of `(row n - 1, row n)` started from `init` at row 0, by the
/// row transfer operator.
pub fn exact_row_distribution(params: &Params, init: &[i64], n: usize, window: DistWindow) -> Result<SubsetDist> {
    check_params(params)?;
    if window.len > MAX_DP_SITES || n > 64 {
        return Err(Error::TooLarge(format!(
            "row operator limited to {MAX_DP_SITES} sites and 64 rows, got {} sites and {n} rows",
            window.len
        )));
    }
    let mut states = BTreeMap::new();
    states.insert((0u64, window.mask_of(init)?), 1.0);
    let mut ops = 0usize;
    for _ in 0..n {
        let mut next = BTreeMap::new();
        for (&(prev, curr), &q) in &states {
            next_row_law(params, window.len, prev, curr, |mask, w| {
                *next.entry((curr, mask)).or_insert(0.0) += q * w;
            });
            ops += window.len;
        }
        states = next;
    }
    Ok(SubsetDist {
        window,
        row: n as i64,
        probs: states,
        error_bound: (ops as f64 + 1.0) * 4.0 * f64::EPSILON,
    })
}

/// Same law by enumerating every open/closed configuration of the bonds
/// inside the window. Independent of the row operator.
pub fn brute_force_row_distribution(params: &Params, init: &[i64], n: usize, window: DistWindow) -> Result<SubsetDist> {
    check_params(params)?;
    let len = window.len;
    if len > 63 {
        return Err(Error::TooLarge(format!("{len} sites")));
    }
    // (source row, source index, kind) with kind 0 = NE, 1 = NW, 2 = VERT
    let mut bonds: Vec<(usize, usize, u8)> = Vec::new();
    for k in 0..n {
        for j in 0..len {
            if j + 1 < len {
                bonds.push((k, j, 0));
            }
            bonds.push((k, j, 1));
            if k + 2 <= n && j + 1 < len {
                bonds.push((k, j, 2));
            }
        }
    }
    if bonds.len() > MAX_BRUTE_BONDS {
        return Err(Error::TooLarge(format!("{} bonds exceed {MAX_BRUTE_BONDS}", bonds.len())));
    }
    let init_mask = window.mask_of(init)?;
    let mut probs = BTreeMap::new();
    for config in 0u64..(1 << bonds.len()) {
        let mut weight = 1.0;
        for (b, &(_, _, kind)) in bonds.iter().enumerate() {
            let lambda = if kind == 2 { params.eps } else { params.p };
            weight *= if config >> b & 1 == 1 { lambda } else { 1.0 - lambda };
        }
        if weight == 0.0 {
            continue;
        }
        let mut rows = vec![0u64; n + 1];
        rows[0] = init_mask;
        for k in 0..n {
            let mut next = 0u64;
            for (b, &(row, j, kind)) in bonds.iter().enumerate() {
                if config >> b & 1 == 0 {
                    continue;
                }
                let fires = match kind {
                    0 | 1 => row == k && rows[k] >> j & 1 == 1,
                    _ => row + 1 == k && rows[row] >> j & 1 == 1,
                };
                if fires {
                    next |= 1 << if kind == 1 { j } else { j + 1 };
                }
            }
            rows[k + 1] = next;
        }
        let prev = if n == 0 { 0 } else { rows[n - 1] };
        *probs.entry((prev, rows[n])).or_insert(0.0) += weight;
    }
    Ok(SubsetDist {
        window,
        row: n as i64,
        probs,
        error_bound: (bonds.len() as f64 + 1.0) * f64::EPSILON,
    })
}

/// Probability that rows `1..=n` are all non-empty starting from `{0}`.
pub fn exact_theta(params: &Params, n: usize) -> Result<f64> {
    check_params(params)?;
    let window = DistWindow { origin: 0, len: n + 1 };
    if window.len > MAX_DP_SITES {
        return Err(Error::TooLarge(format!("exact theta limited to depth {}", MAX_DP_SITES - 1)));
    }
    let mut states = BTreeMap::new();
    states.insert((0u64, 1u64), 1.0);
    for _ in 0..n {
        let mut next = BTreeMap::new();
        for (&(prev, curr), &q) in &states {
            next_row_law(params, window.len, prev, curr, |mask, w| {
                // empty rows are absorbed as extinction
                if mask != 0 {
                    *next.entry((curr, mask)).or_insert(0.0) += q * w;
                }
            });
        }
        states = next;
    }
    Ok(states.values().sum())
}

/// Law of a row seen from its right edge, restricted to `w` sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLaw {
    pub w: usize,
    /// Bit `k` of a key is column `-2k`; bit 0 is always set.
    pub masses: BTreeMap<u64, f64>,
    pub mass_extinct: f64,
}

impl WindowLaw {
    pub fn new(w: usize) -> Self {
        WindowLaw {
            w,
            masses: BTreeMap::new(),
            mass_extinct: 0.0,
        }
    }

    pub fn point(w: usize, mask: u64) -> Self {
        let mut law = WindowLaw::new(w);
        law.masses.insert(mask, 1.0);
        law
    }

    /// Law from a map of masks; the empty mask is read as extinction.
    pub fn from_masses(w: usize, masses: impl IntoIterator<Item = (u64, f64)>) -> Self {
        let mut law = WindowLaw::new(w);
        for (mask, q) in masses {
            if mask == 0 {
                law.mass_extinct += q;
            } else {
                *law.masses.entry(mask).or_insert(0.0) += q;
            }
        }
        law
    }

    pub fn full_mask(&self) -> u64 {
        (1u64 << self.w) - 1
    }

    pub fn total(&self) -> f64 {
        self.masses.values().sum::<f64>() + self.mass_extinct
    }

    /// The law conditioned on a non-empty row.
    pub fn conditioned(&self) -> Result<WindowLaw> {
        let alive: f64 = self.masses.values().sum();
        if alive <= 0.0 {
            return Err(Error::EmptySet);
        }
        Ok(WindowLaw {
            w: self.w,
            masses: self.masses.iter().map(|(&k, &q)| (k, q / alive)).collect(),
            mass_extinct: 0.0,
        })
    }

    /// Mass of a family of masks; `0` stands for the empty row.
    pub fn mass_of(&self, family: &[u64]) -> f64 {
        family
            .iter()
            .map(|&m| if m == 0 { self.mass_extinct } else { *self.masses.get(&m).unwrap_or(&0.0) })
            .sum()
    }

    /// Columns of a window mask.
    pub fn columns(mask: u64) -> Vec<i64> {
        let mut cols: Vec<i64> = (0..64).filter(|k| mask >> k & 1 == 1).map(|k| -2 * k as i64).collect();
        cols.reverse();
        cols
    }
}

/// Right-edge-anchored law of the later row of `dist`, cut to `w` sites.
pub fn normalized_window_law(dist: &SubsetDist, w: usize) -> WindowLaw {
    let mut law = WindowLaw::new(w);
    for (curr, q) in dist.curr_marginal() {
        if curr == 0 {
            law.mass_extinct += q;
            continue;
        }
        let top = 63 - curr.leading_zeros() as usize;
        let mut mask = 0u64;
        for k in 0..w.min(top + 1) {
            if curr >> (top - k) & 1 == 1 {
                mask |= 1 << k;
            }
        }
        *law.masses.entry(mask).or_insert(0.0) += q;
    }
    law
}

/// Add a site two columns right of the edge and re-anchor:
/// `S -> (S - 2) ∪ {0}`, cut to the window. The empty row maps to `{0}`.
pub fn shift_and_add_origin(law: &WindowLaw) -> WindowLaw {
    let full = law.full_mask();
    let mut out = WindowLaw::new(law.w);
    for (&mask, &q) in &law.masses {
        *out.masses.entry(((mask << 1) | 1) & full).or_insert(0.0) += q;
    }
    if law.mass_extinct > 0.0 {
        *out.masses.entry(1).or_insert(0.0) += law.mass_extinct;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cone(init: &[i64], n: usize) -> DistWindow {
        DistWindow::cone(init, n).unwrap()
    }

    #[test]
    fn one_step_from_origin() {
        let p = 0.3;
        let params = Params { p, eps: 0.0 };
        let d = exact_row_distribution(&params, &[0], 1, cone(&[0], 1)).unwrap();
        let marg = d.curr_marginal();
        // bit 0 is column -1, bit 1 is column 1
        assert!((marg[&0b11] - p * p).abs() < 1e-15);
        assert!((marg[&0b01] - p * (1.0 - p)).abs() < 1e-15);
        assert!((marg[&0b10] - p * (1.0 - p)).abs() < 1e-15);
        assert!((marg[&0b00] - (1.0 - p) * (1.0 - p)).abs() < 1e-15);
    }

    #[test]
    fn full_cone_at_p_one() {
        let d = exact_row_distribution(&Params { p: 1.0, eps: 0.3 }, &[0], 5, cone(&[0], 5)).unwrap();
        let marg = d.curr_marginal();
        assert_eq!(marg.len(), 1);
        assert_eq!(marg[&0b111111], 1.0);
    }

    #[test]
    fn brute_force_trivia() {
        let params = Params { p: 0.4, eps: 0.2 };
        let d = brute_force_row_distribution(&params, &[0, 2], 0, cone(&[0, 2], 0)).unwrap();
        assert_eq!(d.probs.len(), 1);
        assert_eq!(d.probs[&(0, 0b11)], 1.0);
        let d = brute_force_row_distribution(&Params { p: 0.0, eps: 0.0 }, &[0], 2, cone(&[0], 2)).unwrap();
        assert_eq!(d.probs[&(0, 0)], 1.0);
    }

    #[test]
    fn operator_matches_brute_force_mid_params() {
        let params = Params { p: 0.5, eps: 0.3 };
        let w = cone(&[0], 2);
        let a = exact_row_distribution(&params, &[0], 2, w).unwrap();
        let b = brute_force_row_distribution(&params, &[0], 2, w).unwrap();
        assert!(a.tv_distance(&b) < 1e-12);
    }

    #[test]
    fn limits() {
        let params = Params { p: 0.5, eps: 0.5 };
        let big = DistWindow { origin: 0, len: 13 };
        assert!(matches!(exact_row_distribution(&params, &[0], 1, big), Err(Error::TooLarge(_))));
        assert!(matches!(brute_force_row_distribution(&params, &[0], 4, cone(&[0], 4)), Err(Error::TooLarge(_))));
    }

    #[test]
    fn theta_trivia() {
        assert_eq!(exact_theta(&Params { p: 1.0, eps: 0.0 }, 6).unwrap(), 1.0);
        assert_eq!(exact_theta(&Params { p: 0.0, eps: 1.0 }, 2).unwrap(), 0.0);
    }

    #[test]
    fn window_law_examples() {
        // point mass on {-2, 0} at row 0
        let d = exact_row_distribution(&Params { p: 0.5, eps: 0.5 }, &[-2, 0], 0, cone(&[-2, 0], 0)).unwrap();
        let law = normalized_window_law(&d, 3);
        assert_eq!(law.masses.len(), 1);
        assert_eq!(law.masses[&0b11], 1.0);
        assert_eq!(law.mass_extinct, 0.0);
        let d = exact_row_distribution(&Params { p: 0.5, eps: 0.5 }, &[4], 0, cone(&[4], 0)).unwrap();
        assert_eq!(normalized_window_law(&d, 3).masses[&0b1], 1.0);
    }

    #[test]
    fn shift_examples() {
        assert_eq!(shift_and_add_origin(&WindowLaw::point(4, 0b1)).masses[&0b11], 1.0);
        assert_eq!(shift_and_add_origin(&WindowLaw::point(4, 0b11)).masses[&0b111], 1.0);
        // the far end falls out of the window
        assert_eq!(shift_and_add_origin(&WindowLaw::point(3, 0b101)).masses[&0b011], 1.0);
        let mut law = WindowLaw::point(3, 0b1);
        law.masses.insert(0b1, 0.75);
        law.mass_extinct = 0.25;
        let out = shift_and_add_origin(&law);
        assert_eq!(out.mass_extinct, 0.0);
        assert!((out.total() - 1.0).abs() < 1e-15);
        assert_eq!(out.masses[&0b11], 0.75);
        assert_eq!(out.masses[&0b1], 0.25);
    }

    #[test]
    fn window_columns() {
        assert_eq!(WindowLaw::columns(0b101), vec![-4, 0]);
        let w = DistWindow { origin: -1, len: 3 };
        assert_eq!(w.columns(1, 0b101), vec![-3, 1]);
    }
}
