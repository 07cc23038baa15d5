//! Row-by-row evolution of the occupancy process.
//!
//! Rows are stored bit-packed in the light-cone index `u = (m + n) / 2`.
//! In that index the three bonds feeding site `u` of row `n + 1` leave
//! site `u` of row `n` (NW), site `u - 1` of row `n` (NE) and site `u - 1`
//! of row `n - 1` (VERT), so one step is an AND with the open-bond masks
//! followed by a one-bit shift. Bond uniforms are hashed only for occupied
//! source sites.
//!
//! The previous row and the current row share the same origin `u0`; the
//! current row holds one more site than the previous one, so the window
//! grows by one site at the right edge per step. Its left end sits at
//! column `2 u0 - n`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BondKind, Params, RandomField, Site, Thresholds};

/// Default cap on the number of sites a row window may hold.
pub const DEFAULT_MAX_SITES: usize = 1 << 24;

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// Nothing enters the window from the left.
    Vacuum,
    /// The leftmost window site is forced occupied on every row.
    Saturated,
}

/// When a simulated process counts as dead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurvivalSemantics {
    /// Any empty row after the start is extinction.
    Strict,
    /// Extinction needs two consecutive empty rows; a single empty row can
    /// be bridged by a vertical bond.
    Lenient,
}

/// One bit-packed row. Bit `i` stands for column `2 (origin + i) - row`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowOccupancy {
    row: i64,
    origin: i64,
    len: usize,
    bits: Vec<u64>,
}

impl RowOccupancy {
    pub fn empty(row: i64, origin: i64, len: usize) -> Self {
        RowOccupancy {
            row,
            origin,
            len,
            bits: vec![0; words_for(len)],
        }
    }

    /// Tight row holding exactly `columns` (which must share the row parity).
    pub fn from_columns(row: i64, columns: &[i64]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::EmptyInitial);
        }
        let mut us = Vec::with_capacity(columns.len());
        for &m in columns {
            if (m + row).rem_euclid(2) != 0 {
                return Err(Error::OddColumn { column: m, row });
            }
            us.push((m + row).div_euclid(2));
        }
        let lo = *us.iter().min().unwrap();
        let hi = *us.iter().max().unwrap();
        let mut out = RowOccupancy::empty(row, lo, (hi - lo + 1) as usize);
        for u in us {
            out.set_index((u - lo) as usize);
        }
        Ok(out)
    }

    pub fn row(&self) -> i64 {
        self.row
    }

    /// Column of bit 0.
    pub fn offset(&self) -> i64 {
        2 * self.origin - self.row
    }

    pub fn row_parity(&self) -> u8 {
        self.row.rem_euclid(2) as u8
    }

    /// Number of sites in the window.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Column bounds of the window (inclusive).
    pub fn bounds(&self) -> (i64, i64) {
        (self.offset(), self.offset() + 2 * (self.len as i64 - 1))
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    #[inline]
    fn column_of(&self, i: usize) -> i64 {
        2 * (self.origin + i as i64) - self.row
    }

    fn index_of(&self, m: i64) -> Option<usize> {
        if (m + self.row).rem_euclid(2) != 0 {
            return None;
        }
        let i = (m + self.row) / 2 - self.origin;
        (0..self.len as i64).contains(&i).then_some(i as usize)
    }

    fn set_index(&mut self, i: usize) {
        self.bits[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, m: i64) -> bool {
        self.index_of(m)
            .is_some_and(|i| self.bits[i / 64] >> (i % 64) & 1 == 1)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Occupied columns, ascending.
    pub fn columns(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.count());
        for (j, &w) in self.bits.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                let b = w.trailing_zeros() as usize;
                out.push(self.column_of(64 * j + b));
                w &= w - 1;
            }
        }
        out
    }

    /// Rightmost occupied column, `None` when the row is empty.
    pub fn right_edge(&self) -> Option<i64> {
        self.bits
            .iter()
            .enumerate()
            .rev()
            .find(|(_, &w)| w != 0)
            .map(|(j, &w)| self.column_of(64 * j + 63 - w.leading_zeros() as usize))
    }

    /// The row shifted so that its right edge sits at column 0.
    pub fn normalize(&self) -> Result<Vec<i64>> {
        let r = self.right_edge().ok_or(Error::EmptySet)?;
        Ok(self.columns().into_iter().map(|m| m - r).collect())
    }

    /// Inclusion of occupied sets; rows must share a row index.
    pub fn is_subset_of(&self, other: &RowOccupancy) -> bool {
        if self.row == other.row && self.origin == other.origin && self.len == other.len {
            return self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0);
        }
        self.row == other.row && self.columns().into_iter().all(|m| other.contains(m))
    }

    /// Clear every site whose column lies outside `[lo, hi]`.
    pub fn retain_columns(&mut self, lo: i64, hi: i64) {
        for i in 0..self.len {
            let m = self.column_of(i);
            if m < lo || m > hi {
                self.bits[i / 64] &= !(1 << (i % 64));
            }
        }
    }

    /// Snapshot line `n r <cols...>`, with `X` for an empty row.
    pub fn dump_line(&self) -> String {
        let mut s = format!("{}", self.row);
        match self.right_edge() {
            None => s.push_str(" X"),
            Some(r) => {
                write!(s, " {r}").unwrap();
                for m in self.columns() {
                    write!(s, " {m}").unwrap();
                }
            }
        }
        s
    }
}

/// Per-source open-bond masks for one parameter set.
#[derive(Debug, Default)]
struct BondMasks {
    ne: Vec<u64>,
    nw: Vec<u64>,
    vert: Vec<u64>,
}

impl BondMasks {
    fn zeroed(words: usize) -> Self {
        BondMasks {
            ne: vec![0; words],
            nw: vec![0; words],
            vert: vec![0; words],
        }
    }
}

/// Hash the three bonds out of every set bit of `src` and record, per
/// threshold set, which of them are open.
fn fill_masks(field: &RandomField, row: i64, origin: i64, src: &[u64], thr: &[Thresholds], out: &mut [BondMasks]) {
    for (j, &s) in src.iter().enumerate() {
        let mut w = s;
        while w != 0 {
            let b = w.trailing_zeros() as usize;
            w &= w - 1;
            let u = origin + (64 * j + b) as i64;
            let h = field.site_hash(2 * u - row, row);
            let ne = RandomField::raw_from_site(h, BondKind::Ne);
            let nw = RandomField::raw_from_site(h, BondKind::Nw);
            let v = RandomField::raw_from_site(h, BondKind::Vert);
            let bit = 1u64 << b;
            for (t, m) in thr.iter().zip(out.iter_mut()) {
                if t.diag.admits(ne) {
                    m.ne[j] |= bit;
                }
                if t.diag.admits(nw) {
                    m.nw[j] |= bit;
                }
                if t.vert.admits(v) {
                    m.vert[j] |= bit;
                }
            }
        }
    }
}

/// Only the vertical bonds out of `src`.
fn fill_vert(field: &RandomField, row: i64, origin: i64, src: &[u64], thr: Thresholds) -> Vec<u64> {
    let mut out = vec![0; src.len()];
    if thr.vert.0 == 0 {
        return out;
    }
    for (j, &s) in src.iter().enumerate() {
        let mut w = s;
        while w != 0 {
            let b = w.trailing_zeros() as usize;
            w &= w - 1;
            let u = origin + (64 * j + b) as i64;
            if thr.vert.admits(field.raw_uniform(2 * u - row, row, BondKind::Vert)) {
                out[j] |= 1 << b;
            }
        }
    }
    out
}

/// Two consecutive rows of the process plus boundary metadata.
#[derive(Debug, Clone)]
pub struct FrontState {
    prev: RowOccupancy,
    curr: RowOccupancy,
    mode: BoundaryMode,
    max_sites: usize,
    /// `prev` restricted to sites whose vertical bond is open, valid for
    /// the (seed, threshold) pair in `vert_key`.
    vert_feed: Vec<u64>,
    vert_key: Option<(u64, u64)>,
}

impl PartialEq for FrontState {
    fn eq(&self, other: &Self) -> bool {
        self.prev == other.prev && self.curr == other.curr && self.mode == other.mode
    }
}

impl FrontState {
    fn from_row(curr: RowOccupancy, mode: BoundaryMode) -> Self {
        let prev = RowOccupancy::empty(curr.row - 1, curr.origin, curr.len.saturating_sub(1));
        let mut s = FrontState {
            prev,
            curr,
            mode,
            max_sites: DEFAULT_MAX_SITES,
            vert_feed: Vec::new(),
            vert_key: None,
        };
        s.apply_boundary();
        s
    }

    /// Process started at row 0 from a finite set of even columns.
    pub fn init_finite(columns: &[i64]) -> Result<Self> {
        Self::init_at(0, columns, BoundaryMode::Vacuum)
    }

    /// Process started at an arbitrary row; the row before it is empty.
    pub fn init_at(row: i64, columns: &[i64], mode: BoundaryMode) -> Result<Self> {
        if row < 0 {
            return Err(Error::InvalidParams(format!("start row {row} is negative")));
        }
        Ok(Self::from_row(RowOccupancy::from_columns(row, columns)?, mode))
    }

    /// Truncation of the left half-line: every even column in `[-2M, 0]`.
    pub fn init_left_infinite(truncation: usize, mode: BoundaryMode) -> Result<Self> {
        if truncation < 2 {
            return Err(Error::InvalidParams(format!("truncation {truncation} < 2")));
        }
        let mut row = RowOccupancy::empty(0, -(truncation as i64), truncation + 1);
        for i in 0..=truncation {
            row.set_index(i);
        }
        Ok(Self::from_row(row, mode))
    }

    /// Window law subset: bit `k` of `mask` is column `-2k`, within `w` sites.
    pub fn init_from_mask(mask: u64, w: usize) -> Result<Self> {
        let cols: Vec<i64> = (0..w).filter(|k| mask >> k & 1 == 1).map(|k| -2 * k as i64).collect();
        Self::init_finite(&cols)
    }

    /// A state on the same window as `self` holding only `columns` in its
    /// current row. Lets differently started processes step together.
    pub fn with_columns(&self, columns: &[i64]) -> Result<FrontState> {
        let mut curr = RowOccupancy::empty(self.curr.row, self.curr.origin, self.curr.len);
        for &m in columns {
            if (m + curr.row).rem_euclid(2) != 0 {
                return Err(Error::OddColumn { column: m, row: curr.row });
            }
            let i = curr
                .index_of(m)
                .ok_or_else(|| Error::InvalidParams(format!("column {m} lies outside the window")))?;
            curr.set_index(i);
        }
        let prev = RowOccupancy::empty(self.prev.row, self.prev.origin, self.prev.len);
        let mut s = FrontState {
            prev,
            curr,
            mode: self.mode,
            max_sites: self.max_sites,
            vert_feed: Vec::new(),
            vert_key: None,
        };
        s.apply_boundary();
        Ok(s)
    }

    pub fn with_max_sites(mut self, max_sites: usize) -> Self {
        self.max_sites = max_sites;
        self
    }

    /// Current row index.
    pub fn n(&self) -> i64 {
        self.curr.row
    }

    pub fn prev(&self) -> &RowOccupancy {
        &self.prev
    }

    pub fn curr(&self) -> &RowOccupancy {
        &self.curr
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    /// Column bounds `[lo, hi]` of the current row's window.
    pub fn window(&self) -> (i64, i64) {
        self.curr.bounds()
    }

    /// Both rows empty: no bond can ever reach a later row.
    pub fn is_dead(&self) -> bool {
        self.curr.is_empty() && self.prev.is_empty()
    }

    fn apply_boundary(&mut self) {
        if self.mode == BoundaryMode::Saturated && self.curr.len > 0 {
            self.curr.set_index(0);
        }
    }

    fn same_geometry(&self, other: &FrontState) -> bool {
        self.curr.row == other.curr.row && self.curr.origin == other.curr.origin && self.curr.len == other.curr.len
    }

    fn ensure_vert_feed(&mut self, field: &RandomField, thr: Thresholds) {
        let key = (field.seed(), thr.vert.0);
        if self.vert_key != Some(key) {
            self.vert_feed = fill_vert(field, self.prev.row, self.prev.origin, &self.prev.bits, thr);
            self.vert_key = Some(key);
        }
    }

    /// Clear sites outside the column range `[lo, hi]` of the current row.
    pub fn retain_columns(&mut self, lo: i64, hi: i64) {
        self.curr.retain_columns(lo, hi);
    }

    /// Replace this state by a copy of `other`, keeping nothing but the
    /// row contents (cached bond data is invalidated).
    pub fn reset_to(&mut self, other: &FrontState) {
        self.prev = other.prev.clone();
        self.curr = other.curr.clone();
        self.vert_key = None;
    }

    /// Advance one row in place.
    pub fn advance(&mut self, params: &Params, field: &RandomField) -> Result<()> {
        advance_group(&mut [self], &[*params], field)
    }

    /// The state one row later.
    pub fn step(&self, params: &Params, field: &RandomField) -> Result<FrontState> {
        let mut next = self.clone();
        next.advance(params, field)?;
        Ok(next)
    }
}

/// Advance several states that share a window geometry and a field, each
/// with its own parameters. Bond uniforms are hashed once per occupied site
/// of the union of the current rows.
pub(crate) fn advance_group(states: &mut [&mut FrontState], params: &[Params], field: &RandomField) -> Result<()> {
    assert_eq!(states.len(), params.len());
    let Some((first, rest)) = states.split_first() else {
        return Ok(());
    };
    assert!(rest.iter().all(|s| first.same_geometry(s)), "grouped states must share a window");
    let row = first.curr.row;
    let origin = first.curr.origin;
    let len = first.curr.len;
    let needed = len + 1;
    let max = states.iter().map(|s| s.max_sites).min().unwrap();
    if needed > max {
        return Err(Error::WindowExceeded { needed, max });
    }
    let wc = words_for(len);
    let wn = words_for(needed);

    let thr: Vec<Thresholds> = params.iter().map(Params::thresholds).collect();
    let mut union = states[0].curr.bits.clone();
    for s in states.iter().skip(1) {
        for (u, w) in union.iter_mut().zip(&s.curr.bits) {
            *u |= w;
        }
    }
    let mut masks: Vec<BondMasks> = (0..states.len()).map(|_| BondMasks::zeroed(wc)).collect();
    fill_masks(field, row, origin, &union, &thr, &mut masks);

    for ((state, t), m) in states.iter_mut().zip(&thr).zip(&masks) {
        state.ensure_vert_feed(field, *t);
        let curr = &state.curr.bits;
        let feed = &state.vert_feed;
        let mut next = vec![0u64; wn];
        let mut carry = 0u64;
        for (j, slot) in next.iter_mut().enumerate() {
            let (c, a) = if j < wc {
                let c = curr[j];
                let f = feed.get(j).copied().unwrap_or(0);
                (c & m.nw[j], (c & m.ne[j]) | f)
            } else {
                (0, 0)
            };
            *slot = c | (a << 1) | carry;
            carry = a >> 63;
        }
        let new_feed: Vec<u64> = curr.iter().zip(&m.vert).map(|(c, v)| c & v).collect();
        let new_curr = RowOccupancy {
            row: row + 1,
            origin,
            len: needed,
            bits: next,
        };
        state.prev = std::mem::replace(&mut state.curr, new_curr);
        state.vert_feed = new_feed;
        state.vert_key = Some((field.seed(), t.vert.0));
        state.apply_boundary();
    }
    Ok(())
}

/// Right-edge record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Row index of `r[0]`.
    pub start_row: i64,
    /// Right edge of each row; `None` for an empty row.
    pub r: Vec<Option<i64>>,
    /// First row from which the process is dead under the run's semantics.
    pub extinct_at: Option<i64>,
    #[serde(skip)]
    pub snapshots: Vec<RowOccupancy>,
}

impl Trajectory {
    pub fn from_edges(start_row: i64, r: Vec<Option<i64>>) -> Self {
        Trajectory {
            start_row,
            r,
            extinct_at: None,
            snapshots: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.r.len().saturating_sub(1)
    }

    /// Right edge at absolute row `n`.
    pub fn at(&self, n: i64) -> Option<i64> {
        let k = n - self.start_row;
        if k < 0 {
            return None;
        }
        self.r.get(k as usize).copied().flatten()
    }

    pub fn last(&self) -> Option<i64> {
        self.r.last().copied().flatten()
    }

    /// Snapshot dump, one `n r <cols...>` line per recorded row.
    pub fn dump(&self) -> String {
        self.snapshots.iter().map(|s| s.dump_line() + "\n").collect()
    }
}

/// Run `rows` steps from `init`, recording the right edge of every row.
pub fn simulate(
    params: &Params,
    init: &FrontState,
    rows: usize,
    field: &RandomField,
    semantics: SurvivalSemantics,
) -> Result<Trajectory> {
    simulate_recorded(params, init, rows, field, semantics, None)
}

/// As [`simulate`], additionally keeping every `every`-th row.
pub fn simulate_recorded(
    params: &Params,
    init: &FrontState,
    rows: usize,
    field: &RandomField,
    semantics: SurvivalSemantics,
    every: Option<usize>,
) -> Result<Trajectory> {
    let mut state = init.clone();
    let start = state.n();
    let mut traj = Trajectory::from_edges(start, Vec::with_capacity(rows + 1));
    traj.r.push(state.curr.right_edge());
    let keep = |n: i64| every.is_some_and(|e| e > 0 && (n - start) as usize % e == 0);
    if keep(start) {
        traj.snapshots.push(state.curr.clone());
    }
    for _ in 0..rows {
        if traj.extinct_at.is_some() {
            traj.r.push(None);
            continue;
        }
        state.advance(params, field)?;
        let n = state.n();
        traj.r.push(state.curr.right_edge());
        if keep(n) {
            traj.snapshots.push(state.curr.clone());
        }
        match semantics {
            SurvivalSemantics::Strict if state.curr.is_empty() => traj.extinct_at = Some(n),
            SurvivalSemantics::Lenient if state.is_dead() => traj.extinct_at = Some(n - 1),
            _ => {}
        }
    }
    Ok(traj)
}

/// Vacuum and saturated truncations of the half-line run on one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketRun {
    pub lo: Trajectory,
    pub hi: Trajectory,
    /// Fraction of rows on which the two right edges coincide.
    pub agree: f64,
}

impl BracketRun {
    /// The exact untruncated right edge at relative row `k`, when known.
    pub fn resolved(&self, k: usize) -> Option<i64> {
        match (self.lo.r.get(k), self.hi.r.get(k)) {
            (Some(Some(a)), Some(Some(b))) if a == b => Some(*a),
            _ => None,
        }
    }
}

pub fn bracket_run(params: &Params, truncation: usize, rows: usize, field: &RandomField) -> Result<BracketRun> {
    let mut lo = FrontState::init_left_infinite(truncation, BoundaryMode::Vacuum)?;
    let mut hi = FrontState::init_left_infinite(truncation, BoundaryMode::Saturated)?;
    let mut lo_r = Vec::with_capacity(rows + 1);
    let mut hi_r = Vec::with_capacity(rows + 1);
    lo_r.push(lo.curr.right_edge());
    hi_r.push(hi.curr.right_edge());
    for _ in 0..rows {
        if lo.is_dead() {
            hi.advance(params, field)?;
            lo_r.push(None);
        } else {
            advance_group(&mut [&mut lo, &mut hi], &[*params, *params], field)?;
            lo_r.push(lo.curr.right_edge());
        }
        hi_r.push(hi.curr.right_edge());
    }
    let agree = lo_r.iter().zip(&hi_r).filter(|(a, b)| a == b).count() as f64 / lo_r.len() as f64;
    let lo_extinct = lo_r.windows(2).position(|w| w[0].is_none() && w[1].is_none()).map(|k| k as i64);
    Ok(BracketRun {
        lo: Trajectory {
            extinct_at: lo_extinct,
            ..Trajectory::from_edges(0, lo_r)
        },
        hi: Trajectory::from_edges(0, hi_r),
        agree,
    })
}

pub fn right_edge(row: &RowOccupancy) -> Option<i64> {
    row.right_edge()
}

pub fn normalize(row: &RowOccupancy) -> Result<Vec<i64>> {
    row.normalize()
}

/// Rightmost open path from the initial row to row `start + rows`.
///
/// Reconstructed greedily from the top: starting at the right edge of the
/// last row, each step picks the rightmost occupied predecessor joined by
/// an open bond (NW source, then VERT source, then NE source). Sites forced
/// by a saturated boundary count as sources.
pub fn rightmost_path(params: &Params, init: &FrontState, rows: usize, field: &RandomField) -> Result<Vec<Site>> {
    let mut state = init.clone();
    let start = state.n();
    let mut history = vec![state.curr.clone()];
    for _ in 0..rows {
        state.advance(params, field)?;
        history.push(state.curr.clone());
    }
    let top = start + rows as i64;
    let mut m = history[rows].right_edge().ok_or(Error::NoPath(top))?;
    let mut n = top;
    let mut path = vec![Site { m, n }];
    let occupied = |m: i64, n: i64| n >= start && history[(n - start) as usize].contains(m);
    let open = |m: i64, n: i64, kind: BondKind| field.is_open(&crate::lattice::Bond::new(Site { m, n }, kind), params);
    while n > start {
        let candidates = [(m + 1, n - 1, BondKind::Nw), (m, n - 2, BondKind::Vert), (m - 1, n - 1, BondKind::Ne)];
        let Some(&(pm, pn, _)) = candidates
            .iter()
            .find(|&&(pm, pn, kind)| occupied(pm, pn) && open(pm, pn, kind))
        else {
            // injected by the saturated boundary
            break;
        };
        m = pm;
        n = pn;
        path.push(Site { m, n });
    }
    path.reverse();
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: Params = Params { p: 1.0, eps: 0.0 };

    #[test]
    fn init_finite_basics() {
        let s = FrontState::init_finite(&[0]).unwrap();
        assert_eq!(s.curr().columns(), vec![0]);
        assert!(s.prev().is_empty());
        let s = FrontState::init_finite(&[-4, -2, 0]).unwrap();
        assert_eq!(s.curr().right_edge(), Some(0));
        assert_eq!(FrontState::init_finite(&[1]).unwrap_err(), Error::OddColumn { column: 1, row: 0 });
        assert_eq!(FrontState::init_finite(&[]).unwrap_err(), Error::EmptyInitial);
    }

    #[test]
    fn init_left_infinite_basics() {
        let s = FrontState::init_left_infinite(2, BoundaryMode::Vacuum).unwrap();
        assert_eq!(s.curr().columns(), vec![-4, -2, 0]);
        assert!(FrontState::init_left_infinite(1, BoundaryMode::Vacuum).is_err());
        for m in [2, 7, 40] {
            let s = FrontState::init_left_infinite(m, BoundaryMode::Saturated).unwrap();
            assert_eq!(s.curr().right_edge(), Some(0));
        }
    }

    #[test]
    fn saturated_boundary_stays_occupied() {
        let field = RandomField::new(5);
        let params = Params { p: 0.1, eps: 0.0 };
        let mut s = FrontState::init_left_infinite(4, BoundaryMode::Saturated).unwrap();
        for _ in 0..50 {
            s.advance(&params, &field).unwrap();
            let (lo, _) = s.window();
            assert!(s.curr().contains(lo));
        }
    }

    #[test]
    fn step_examples() {
        let field = RandomField::new(1);
        let s = FrontState::init_finite(&[0]).unwrap().step(&ONE, &field).unwrap();
        assert_eq!(s.curr().columns(), vec![-1, 1]);
        assert_eq!(s.curr().right_edge(), Some(1));

        // prev = {0}, curr = {} : only the vertical feed can act.
        let mut s = FrontState::init_finite(&[0]).unwrap();
        s.advance(&Params { p: 0.0, eps: 0.0 }, &field).unwrap();
        assert!(s.curr().is_empty());
        let s = s.step(&Params { p: 0.0, eps: 1.0 }, &field).unwrap();
        assert_eq!(s.curr().columns(), vec![0]);
        assert_eq!(s.n(), 2);
    }

    #[test]
    fn simulate_examples() {
        let field = RandomField::new(11);
        let init = FrontState::init_finite(&[0]).unwrap();
        let t = simulate(&ONE, &init, 40, &field, SurvivalSemantics::Strict).unwrap();
        assert!(t.r.iter().enumerate().all(|(n, r)| *r == Some(n as i64)));

        let t = simulate(&Params { p: 0.0, eps: 0.0 }, &init, 5, &field, SurvivalSemantics::Lenient).unwrap();
        assert_eq!(t.r[1], None);
        assert_eq!(t.extinct_at, Some(1));
        assert!(t.r[1..].iter().all(Option::is_none));

        let t = simulate(&Params { p: 0.0, eps: 1.0 }, &init, 20, &field, SurvivalSemantics::Lenient).unwrap();
        for (n, r) in t.r.iter().enumerate() {
            assert_eq!(*r, if n % 2 == 0 { Some(0) } else { None });
        }
        let t = simulate(&Params { p: 0.0, eps: 1.0 }, &init, 20, &field, SurvivalSemantics::Strict).unwrap();
        assert_eq!(t.extinct_at, Some(1));
    }

    #[test]
    fn bracket_at_p_one() {
        let field = RandomField::new(2);
        let b = bracket_run(&ONE, 30, 25, &field).unwrap();
        assert_eq!(b.lo.r, b.hi.r);
        assert_eq!(b.agree, 1.0);
        assert_eq!(b.resolved(25), Some(25));
    }

    #[test]
    fn window_cap() {
        let field = RandomField::new(2);
        let mut s = FrontState::init_finite(&[0]).unwrap().with_max_sites(3);
        s.advance(&ONE, &field).unwrap();
        s.advance(&ONE, &field).unwrap();
        assert_eq!(s.advance(&ONE, &field).unwrap_err(), Error::WindowExceeded { needed: 4, max: 3 });
    }

    #[test]
    fn right_edge_and_normalize() {
        let row = RowOccupancy::from_columns(0, &[-4, -2, 0]).unwrap();
        assert_eq!(right_edge(&row), Some(0));
        assert_eq!(normalize(&row).unwrap(), vec![-4, -2, 0]);
        let row = RowOccupancy::from_columns(0, &[2, 6]).unwrap();
        assert_eq!(normalize(&row).unwrap(), vec![-4, 0]);
        let empty = RowOccupancy::empty(0, 0, 4);
        assert_eq!(right_edge(&empty), None);
        assert_eq!(normalize(&empty).unwrap_err(), Error::EmptySet);
    }

    #[test]
    fn dump_format() {
        let row = RowOccupancy::from_columns(3, &[-3, 1]).unwrap();
        assert_eq!(row.dump_line(), "3 1 -3 1");
        assert_eq!(RowOccupancy::empty(4, 0, 3).dump_line(), "4 X");
    }

    #[test]
    fn rightmost_path_examples() {
        let field = RandomField::new(8);
        let init = FrontState::init_finite(&[0]).unwrap();
        let path = rightmost_path(&ONE, &init, 6, &field).unwrap();
        assert_eq!(path.iter().map(|s| s.m).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5, 6]);

        let path = rightmost_path(&Params { p: 0.0, eps: 1.0 }, &init, 6, &field).unwrap();
        assert_eq!(path, (0..=3).map(|k| Site { m: 0, n: 2 * k }).collect::<Vec<_>>());

        let err = rightmost_path(&Params { p: 0.0, eps: 0.0 }, &init, 2, &field).unwrap_err();
        assert_eq!(err, Error::NoPath(2));
    }

    #[test]
    fn retain_columns_clips() {
        let mut row = RowOccupancy::from_columns(0, &[-6, -4, -2, 0, 2]).unwrap();
        row.retain_columns(-4, 0);
        assert_eq!(row.columns(), vec![-4, -2, 0]);
    }
}
