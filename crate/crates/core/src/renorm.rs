//! Block events on tilted parallelograms and the renormalized site field.
//!
//! `D` has vertices `(-0.15 aL, 0)`, `(-0.05 aL, 0)`, `(0.95 aL, 1.1L)` and
//! `(1.05 aL, 1.1L)` for a speed `a > 0`. The event `E` asks for an open path
//! from the base of `D` to its top that never leaves `D`, together with the
//! mirrored crossing of `-D`. Copies of `E` translated by `(0.9 aL m, L n)`
//! give a 1-dependent site field `eta` on the renormalized lattice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::mean_and_stderr;
use crate::front::{BoundaryMode, FrontState};
use crate::lattice::{Params, RandomField};

/// Floor to the nearest column of the given parity at or below `x`.
fn floor_to_parity(x: f64, parity: i64) -> i64 {
    // the small nudge keeps exact products like 0.05 * 40 from flooring down
    let f = (x + 1e-9).floor() as i64;
    if (f - parity).rem_euclid(2) == 0 {
        f
    } else {
        f - 1
    }
}

/// Discretized parallelogram `D`: inclusive column bounds for each row
/// `0..=height`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    #[serde(rename = "L")]
    pub l: usize,
    pub alpha: f64,
    pub height: usize,
    pub bounds: Vec<(i64, i64)>,
}

impl BlockSpec {
    pub fn base(&self) -> (i64, i64) {
        self.bounds[0]
    }

    pub fn top(&self) -> (i64, i64) {
        self.bounds[self.height]
    }

    /// The column-negated region `-D`.
    pub fn mirror(&self) -> BlockSpec {
        BlockSpec {
            bounds: self.bounds.iter().map(|&(lo, hi)| (-hi, -lo)).collect(),
            ..self.clone()
        }
    }

    pub fn contains(&self, m: i64, n: i64) -> bool {
        n >= 0
            && (n as usize) <= self.height
            && (m + n).rem_euclid(2) == 0
            && (self.bounds[n as usize].0..=self.bounds[n as usize].1).contains(&m)
    }

    /// Every site of the region, row by row.
    pub fn sites(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for (n, &(lo, hi)) in self.bounds.iter().enumerate() {
            out.extend((lo..=hi).step_by(2).map(|m| (m, n as i64)));
        }
        out
    }

    fn base_columns(&self, shift: i64) -> Vec<i64> {
        let (lo, hi) = self.base();
        (lo..=hi).step_by(2).map(|m| m + shift).collect()
    }
}

/// Discretize `D` for scale `L` and speed `alpha`: each real column is
/// floored and then moved down by one if its parity is wrong. The base
/// must contain an even column.
pub fn build_parallelogram(l: usize, alpha: f64) -> Result<BlockSpec> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Degenerate(format!("speed {alpha} is not in (0, 1]")));
    }
    if l == 0 {
        return Err(Error::Degenerate("zero block scale".into()));
    }
    let al = alpha * l as f64;
    if (floor_to_parity(-0.05 * al, 0) as f64) < -0.15 * al - 1e-9 {
        return Err(Error::Degenerate(format!("base of the block with L = {l}, alpha = {alpha} holds no even column")));
    }
    let height = (1.1 * l as f64).round() as usize;
    let mut bounds = Vec::with_capacity(height + 1);
    for n in 0..=height {
        let y = alpha * n as f64;
        let parity = (n % 2) as i64;
        let lo = floor_to_parity(-0.15 * al + y, parity);
        let hi = floor_to_parity(-0.05 * al + y, parity);
        bounds.push((lo, hi));
    }
    Ok(BlockSpec { l, alpha, height, bounds })
}

/// Outcome of one confined crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Crossing {
    success: bool,
    /// Rows on which an occupied site lay outside the region.
    escapes: usize,
}

/// Evolve from the base of `spec` shifted by `(dm, dn)`, masking every row
/// to the region.
fn confined_crossing(spec: &BlockSpec, dm: i64, dn: i64, params: &Params, field: &RandomField) -> Result<Crossing> {
    let mut state = FrontState::init_at(dn, &spec.base_columns(dm), BoundaryMode::Vacuum)?;
    let mut escapes = 0;
    for n in 1..=spec.height {
        state.advance(params, field)?;
        let (lo, hi) = spec.bounds[n];
        state.retain_columns(lo + dm, hi + dm);
        let row = state.curr();
        if let (Some(&first), Some(last)) = (row.columns().first(), row.right_edge()) {
            if first < lo + dm || last > hi + dm {
                escapes += 1;
            }
        }
        if state.is_dead() {
            return Ok(Crossing { success: false, escapes });
        }
    }
    Ok(Crossing {
        success: !state.curr().is_empty(),
        escapes,
    })
}

/// Crossing of `D` and of `-D` at the given offset.
fn block_event(spec: &BlockSpec, mirror: &BlockSpec, dm: i64, dn: i64, params: &Params, field: &RandomField) -> Result<(bool, bool, usize)> {
    let a = confined_crossing(spec, dm, dn, params, field)?;
    let b = confined_crossing(mirror, dm, dn, params, field)?;
    Ok((a.success, b.success, a.escapes + b.escapes))
}

/// Monte Carlo estimate of `P(E)` with its two halves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEstimate {
    #[serde(rename = "L")]
    pub l: usize,
    pub alpha: f64,
    pub params: Params,
    pub replicas: usize,
    pub p_event: f64,
    pub stderr: f64,
    pub p_right: f64,
    pub p_left: f64,
    /// Confinement breaches, always zero for a correct engine.
    pub escapes: usize,
}

impl BlockEstimate {
    pub const HEADER: &'static str = "L,alpha,p,eps,replicas,p_event,stderr";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.l, self.alpha, self.params.p, self.params.eps, self.replicas, self.p_event, self.stderr
        )
    }
}

pub fn estimate_block_event(params: &Params, l: usize, alpha: f64, replicas: usize, seed: u64) -> Result<BlockEstimate> {
    Params::new(params.p, params.eps)?;
    if replicas == 0 {
        return Err(Error::InvalidParams("at least one replica is needed".into()));
    }
    let spec = build_parallelogram(l, alpha)?;
    let mirror = spec.mirror();
    let runs: Vec<(bool, bool, usize)> = (0..replicas)
        .into_par_iter()
        .map(|i| block_event(&spec, &mirror, 0, 0, params, &RandomField::derive(seed, i as u64)))
        .collect::<Result<_>>()?;
    let indicator = |f: &dyn Fn(&(bool, bool, usize)) -> bool| runs.iter().map(|r| f64::from(u8::from(f(r)))).collect::<Vec<_>>();
    let (p_event, stderr) = mean_and_stderr(&indicator(&|r| r.0 && r.1));
    Ok(BlockEstimate {
        l,
        alpha,
        params: *params,
        replicas,
        p_event,
        stderr,
        p_right: mean_and_stderr(&indicator(&|r| r.0)).0,
        p_left: mean_and_stderr(&indicator(&|r| r.1)).0,
        escapes: runs.iter().map(|r| r.2).sum(),
    })
}

/// Finite sample of the renormalized field on one shared lattice field.
///
/// Grid cell `(i, j)` is the renormalized site `(m, n) = (2i + j mod 2, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockField {
    pub width: usize,
    pub height: usize,
    /// Row-major, `eta[j][i]`.
    pub eta: Vec<Vec<bool>>,
    pub seed: u64,
    pub escapes: usize,
}

impl BlockField {
    pub fn from_grid(eta: Vec<Vec<bool>>, seed: u64) -> Self {
        BlockField {
            width: eta.first().map_or(0, Vec::len),
            height: eta.len(),
            eta,
            seed,
            escapes: 0,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.eta[j][i]
    }

    /// 0/1 matrix, top row first.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for row in self.eta.iter().rev() {
            out.extend(row.iter().map(|&b| if b { '1' } else { '0' }));
            out.push('\n');
        }
        out
    }
}

/// Lattice offset of the block for renormalized site `(m, n)`.
pub fn block_offset(l: usize, alpha: f64, m: i64, n: i64) -> (i64, i64) {
    let dn = l as i64 * n;
    (floor_to_parity(0.9 * alpha * l as f64 * m as f64, dn.rem_euclid(2)), dn)
}

/// `eta(m, n)`: does the translated event occur on `field`?
pub fn block_event_at(spec: &BlockSpec, params: &Params, m: i64, n: i64, field: &RandomField) -> Result<bool> {
    let (dm, dn) = block_offset(spec.l, spec.alpha, m, n);
    let (a, b, _) = block_event(spec, &spec.mirror(), dm, dn, params, field)?;
    Ok(a && b)
}

/// Evaluate every block of a `grid_w x grid_h` window on one field.
pub fn block_field_sample(params: &Params, l: usize, alpha: f64, grid_w: usize, grid_h: usize, seed: u64) -> Result<BlockField> {
    Params::new(params.p, params.eps)?;
    let spec = build_parallelogram(l, alpha)?;
    let mirror = spec.mirror();
    let cells = grid_w * grid_h * spec.sites().len();
    if cells > crate::front::DEFAULT_MAX_SITES {
        return Err(Error::WindowExceeded {
            needed: cells,
            max: crate::front::DEFAULT_MAX_SITES,
        });
    }
    let field = RandomField::new(seed);
    let results: Vec<(bool, usize)> = (0..grid_w * grid_h)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % grid_w, k / grid_w);
            let (m, n) = (2 * i as i64 + (j % 2) as i64, j as i64);
            let (dm, dn) = block_offset(l, alpha, m, n);
            let (a, b, esc) = block_event(&spec, &mirror, dm, dn, params, &field)?;
            Ok((a && b, esc))
        })
        .collect::<Result<_>>()?;
    let eta = results.chunks(grid_w.max(1)).map(|row| row.iter().map(|r| r.0).collect()).collect();
    Ok(BlockField {
        escapes: results.iter().map(|r| r.1).sum(),
        ..BlockField::from_grid(eta, seed)
    })
}

/// Is there an oriented path of open cells from the bottom grid row to
/// the top one? Cell `(i, j)` feeds the cells of row `j + 1` at
/// renormalized columns `m - 1` and `m + 1`.
pub fn renormalized_percolation_check(field: &BlockField) -> bool {
    if field.height == 0 || field.width == 0 {
        return false;
    }
    let w = field.width;
    let mut reach: Vec<bool> = field.eta[0].clone();
    for j in 1..field.height {
        let mut next = vec![false; w];
        for (i, slot) in next.iter_mut().enumerate() {
            // row j parity: odd rows sit one column right of even rows
            let (a, b) = if j % 2 == 1 { (Some(i), (i + 1 < w).then_some(i + 1)) } else { (i.checked_sub(1), Some(i)) };
            let fed = a.is_some_and(|k| reach[k]) || b.is_some_and(|k| reach[k]);
            *slot = fed && field.eta[j][i];
        }
        reach = next;
        if !reach.iter().any(|&x| x) {
            return false;
        }
    }
    true
}

/// Correlation of `eta` at two renormalized sites over independent fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceTest {
    pub samples: usize,
    pub p_a: f64,
    pub p_b: f64,
    pub correlation: f64,
    /// `correlation * sqrt(samples)`, approximately standard normal under
    /// independence. Zero when either indicator is constant.
    pub z: f64,
}

impl IndependenceTest {
    pub fn passes(&self, sigmas: f64) -> bool {
        self.z.abs() <= sigmas
    }
}

pub fn eta_independence(
    params: &Params,
    l: usize,
    alpha: f64,
    a: (i64, i64),
    b: (i64, i64),
    samples: usize,
    seed: u64,
) -> Result<IndependenceTest> {
    let spec = build_parallelogram(l, alpha)?;
    let pairs: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let field = RandomField::derive(seed, i as u64);
            let x = block_event_at(&spec, params, a.0, a.1, &field)?;
            let y = block_event_at(&spec, params, b.0, b.1, &field)?;
            Ok((f64::from(u8::from(x)), f64::from(u8::from(y))))
        })
        .collect::<Result<_>>()?;
    let n = samples as f64;
    let pa = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let pb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let cov = pairs.iter().map(|p| (p.0 - pa) * (p.1 - pb)).sum::<f64>() / n;
    let var = pa * (1.0 - pa) * pb * (1.0 - pb);
    let correlation = if var > 0.0 { cov / var.sqrt() } else { 0.0 };
    Ok(IndependenceTest {
        samples,
        p_a: pa,
        p_b: pb,
        correlation,
        z: correlation * n.sqrt(),
    })
}
