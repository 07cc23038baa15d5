//! Window law of the truncated half-line start by a column scan.
//!
//! Scanning light-cone columns `u` from left to right, the occupation bits
//! of column `u` over rows `0..=n` depend only on the bits of column `u - 1`:
//! site `(u, k)` is fed by `(u, k - 1)` through NW, by `(u - 1, k - 1)`
//! through NE and by `(u - 1, k - 2)` through VERT. This keeps the state at
//! `n + 1` bits however wide the initial set is, where the row operator
//! would need one bit per site of a row.

use std::collections::BTreeMap;

use super::{WindowLaw, MAX_LAW_WIDTH};
use crate::error::{Error, Result};
use crate::lattice::Params;

const MAX_STATES: usize = 1 << 22;

/// Law of the last `n + 1` column bits given the previous column.
fn column_law(params: &Params, rows: usize, seed_bit: u64, prev: u64) -> Vec<(u64, f64)> {
    let mut out = vec![(seed_bit, 1.0)];
    for k in 1..rows {
        let a1 = prev >> (k - 1) & 1 == 1;
        let a2 = k >= 2 && prev >> (k - 2) & 1 == 1;
        let mut next = Vec::with_capacity(out.len() * 2);
        for &(b, w) in &out {
            let b1 = b >> (k - 1) & 1 == 1;
            let closed = (if b1 { 1.0 - params.p } else { 1.0 })
                * (if a1 { 1.0 - params.p } else { 1.0 })
                * (if a2 { 1.0 - params.eps } else { 1.0 });
            if closed < 1.0 {
                next.push((b | 1 << k, w * (1.0 - closed)));
            }
            if closed > 0.0 {
                next.push((b, w * closed));
            }
        }
        out = next;
    }
    out
}

/// Exact window law of row `n` started from every even column in
/// `[-2M, 0]` at row 0.
pub fn window_law_half_line(params: &Params, big_m: usize, n: usize, w: usize) -> Result<WindowLaw> {
    Params::new(params.p, params.eps)?;
    if w == 0 || w > MAX_LAW_WIDTH {
        return Err(Error::InvalidParams(format!("window width {w} outside 1..={MAX_LAW_WIDTH}")));
    }
    if n > 20 {
        return Err(Error::TooLarge(format!("column scan limited to 20 rows, got {n}")));
    }
    let rows = n + 1;
    let full = (1u64 << w) - 1;
    let top = n as u32;
    // transition tables for columns inside and outside the initial segment
    let mut tables: [BTreeMap<u64, Vec<(u64, f64)>>; 2] = Default::default();
    // state: (column bits, last w bits of row n, frozen window)
    let mut states: BTreeMap<(u64, u64, u64), f64> = BTreeMap::new();
    states.insert((0, 0, 0), 1.0);
    let first = -(big_m as i64);
    for u in first..=n as i64 {
        let seed_bit = u64::from(u <= 0);
        let mut next = BTreeMap::new();
        for (&(a, s, f), &q) in &states {
            let law = tables[seed_bit as usize]
                .entry(a)
                .or_insert_with(|| column_law(params, rows, seed_bit, a));
            for &(b, wt) in law.iter() {
                let bn = b >> top & 1;
                let s2 = (s << 1 | bn) & full;
                let f2 = if bn == 1 { s2 } else { f };
                *next.entry((b, s2, f2)).or_insert(0.0) += q * wt;
            }
        }
        if next.len() > MAX_STATES {
            return Err(Error::TooLarge(format!("{} scan states", next.len())));
        }
        states = next;
    }
    // columns right of u = n are empty on row n, so the frozen window is final
    let mut law = WindowLaw::new(w);
    for ((_, _, f), q) in states {
        if f == 0 {
            law.mass_extinct += q;
        } else {
            *law.masses.entry(f).or_insert(0.0) += q;
        }
    }
    Ok(law)
}
