//! Coupled runs at two enhancement levels on one field, the restart chain
//! of stopping times `tau_k`, and aligned couplings driven by exact laws.
//!
//! Under a shared field the `eps` process is contained in the `eps_tilde`
//! process row by row. `tau_1` is the first row `n >= 2` at which the right
//! edge of the lower process has moved left twice in a row and the vertical
//! bond leaving the edge site of row `n - 2` is closed at `eps` but open at
//! `eps_tilde`, i.e. its uniform lies in `[eps, eps_tilde)`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::front::{advance_group, FrontState, Trajectory};
use crate::lattice::{mix64, Bond, BondKind, BondUniforms, Params, RandomField, Site};

/// Two parameter points sharing `p`, with `lo.eps <= hi.eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledConfig {
    pub lo: Params,
    pub hi: Params,
}

impl CoupledConfig {
    pub fn new(p: f64, eps: f64, eps_tilde: f64) -> Result<Self> {
        let cfg = CoupledConfig {
            lo: Params::new(p, eps)?,
            hi: Params::new(p, eps_tilde)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Params::new(self.lo.p, self.lo.eps)?;
        Params::new(self.hi.p, self.hi.eps)?;
        if self.lo.p != self.hi.p {
            return Err(Error::InvalidParams(format!("coupled runs need equal p, got {} and {}", self.lo.p, self.hi.p)));
        }
        if self.lo.eps > self.hi.eps {
            return Err(Error::InvalidParams(format!("eps {} exceeds eps_tilde {}", self.lo.eps, self.hi.eps)));
        }
        Ok(())
    }
}

/// Right edges of both processes of a coupled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    pub lo: Trajectory,
    pub hi: Trajectory,
    /// Rows on which the lower occupancy was not contained in the upper one.
    pub violations: usize,
    /// Lower right edge at each restart row before the restart replaced it.
    pub pre_restart: Vec<(i64, Option<i64>)>,
}

fn edges_start(state: &FrontState) -> (i64, Vec<Option<i64>>) {
    (state.n(), vec![state.curr().right_edge()])
}

/// Evolve both processes of `config` from `init` for `rows` rows.
pub fn coupled_run(config: &CoupledConfig, init: &FrontState, rows: usize, field: &RandomField) -> Result<CoupledRun> {
    Ok(chain(config, init, rows, field, false)?.1)
}

fn chain(
    config: &CoupledConfig,
    init: &FrontState,
    rows: usize,
    field: &RandomField,
    restart: bool,
) -> Result<(Vec<i64>, CoupledRun)> {
    config.validate()?;
    let mut lo = init.clone();
    let mut hi = init.clone();
    let (start, mut r_lo) = edges_start(&lo);
    let mut r_hi = r_lo.clone();
    let mut violations = 0;
    let mut taus = Vec::new();
    let mut pre_restart = Vec::new();
    for _ in 0..rows {
        if hi.is_dead() {
            r_lo.push(None);
            r_hi.push(None);
            continue;
        }
        advance_group(&mut [&mut lo, &mut hi], &[config.lo, config.hi], field)?;
        if !lo.curr().is_subset_of(hi.curr()) {
            violations += 1;
        }
        r_lo.push(lo.curr().right_edge());
        r_hi.push(hi.curr().right_edge());
        if !restart || config.lo.eps == config.hi.eps {
            continue;
        }
        let n = lo.n();
        let earliest = taus.last().map_or(start + 2, |t| t + 2);
        if n >= earliest && tau_condition(&r_lo, start, n, config.lo.eps, config.hi.eps, field) {
            taus.push(n);
            pre_restart.push((n, lo.curr().right_edge()));
            lo.reset_to(&hi);
            *r_lo.last_mut().unwrap() = hi.curr().right_edge();
        }
    }
    Ok((
        taus,
        CoupledRun {
            lo: Trajectory::from_edges(start, r_lo),
            hi: Trajectory::from_edges(start, r_hi),
            violations,
            pre_restart,
        },
    ))
}

fn tau_condition(r: &[Option<i64>], start: i64, n: i64, eps: f64, eps_tilde: f64, field: &impl BondUniforms) -> bool {
    let k = (n - start) as usize;
    if k < 2 {
        return false;
    }
    let (Some(a), Some(b), Some(c)) = (r[k - 2], r[k - 1], r[k]) else {
        return false;
    };
    if !(b == a - 1 && c == a - 2) {
        return false;
    }
    let bond = Bond::new(Site { m: a, n: n - 2 }, BondKind::Vert);
    let y = field.uniform(&bond);
    eps <= y && y < eps_tilde
}

/// First row `n >= start + 2` of a lower-process run satisfying the `tau`
/// condition, or `None` within the run's horizon.
pub fn detect_tau(run: &Trajectory, eps: f64, eps_tilde: f64, field: &impl BondUniforms) -> Option<i64> {
    detect_tau_from(run, eps, eps_tilde, field, run.start_row + 2)
}

/// As [`detect_tau`], ignoring rows before `earliest`.
pub fn detect_tau_from(run: &Trajectory, eps: f64, eps_tilde: f64, field: &impl BondUniforms, earliest: i64) -> Option<i64> {
    if eps >= eps_tilde {
        return None;
    }
    let first = earliest.max(run.start_row + 2);
    let last = run.start_row + run.r.len() as i64 - 1;
    (first..=last).find(|&n| tau_condition(&run.r, run.start_row, n, eps, eps_tilde, field))
}

/// Stopping times of the restart chain within the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRecord {
    pub taus: Vec<i64>,
    #[serde(rename = "k")]
    pub k_of_t: usize,
    /// `tau_{k+1} - tau_k`.
    pub gaps: Vec<i64>,
    pub rows: usize,
}

impl TauRecord {
    fn new(taus: Vec<i64>, rows: usize) -> Self {
        let gaps = taus.windows(2).map(|w| w[1] - w[0]).collect();
        TauRecord {
            k_of_t: taus.len(),
            taus,
            gaps,
            rows,
        }
    }

    /// `k(T) / T`.
    pub fn rate(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.k_of_t as f64 / self.rows as f64
        }
    }

    /// `{taus, k, rate}` summary.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({ "taus": self.taus, "k": self.k_of_t, "rate": self.rate() })
    }
}

/// Run the restart chain: whenever `tau_k` fires, the lower process is
/// replaced by a copy of the upper one (both stored rows) and the search
/// for `tau_{k+1}` starts two rows later.
pub fn tau_chain(config: &CoupledConfig, init: &FrontState, rows: usize, field: &RandomField) -> Result<TauRecord> {
    Ok(tau_chain_run(config, init, rows, field)?.0)
}

/// [`tau_chain`] together with the coupled run it produced. The lower
/// trajectory is the restarted chain.
pub fn tau_chain_run(
    config: &CoupledConfig,
    init: &FrontState,
    rows: usize,
    field: &RandomField,
) -> Result<(TauRecord, CoupledRun)> {
    let (taus, run) = chain(config, init, rows, field, true)?;
    Ok((TauRecord::new(taus, rows), run))
}

/// `tau_1` of the half-line process truncated to `truncation` sites, or
/// `None` if it does not occur within `horizon` rows.
pub fn first_tau(params: &Params, eps_tilde: f64, truncation: usize, horizon: usize, field: &RandomField) -> Result<Option<i64>> {
    if params.eps >= eps_tilde {
        return Ok(None);
    }
    let mut state = FrontState::init_left_infinite(truncation, crate::front::BoundaryMode::Vacuum)?;
    let mut r = vec![state.curr().right_edge()];
    for _ in 0..horizon {
        if state.is_dead() {
            return Ok(None);
        }
        state.advance(params, field)?;
        r.push(state.curr().right_edge());
        let n = state.n();
        if tau_condition(&r, 0, n, params.eps, eps_tilde, field) {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Independent `tau_1` samples, one per derived replica field.
pub fn sample_first_tau(params: &Params, eps_tilde: f64, horizon: usize, samples: usize, seed: u64) -> Result<Vec<Option<i64>>> {
    Params::new(params.p, params.eps)?;
    // the right edge of the truncated start is exact while it stays right
    // of column n - 2M, which a margin of one horizon guarantees in practice
    let truncation = horizon + 16;
    (0..samples)
        .into_par_iter()
        .map(|i| first_tau(params, eps_tilde, truncation, horizon, &RandomField::derive(seed, i as u64)))
        .collect()
}

/// Least-squares line through the empirical log-survival function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Fitted range `[t0, t1]`: every `t` there has at least `min_count`
    /// samples still above it.
    pub t0: i64,
    pub t1: i64,
    /// Largest excess of observed counts over the fitted line beyond `t1`,
    /// in binomial standard deviations.
    pub tail_excess_sigma: f64,
}

impl TailFit {
    /// Negative slope, good fit, and a tail that stays under the line.
    pub fn is_geometric(&self, min_r2: f64) -> bool {
        self.slope < 0.0 && self.r_squared > min_r2 && self.tail_excess_sigma <= 3.0
    }
}

/// Fit `log P(tau > t)` over the bulk range of the samples. Samples that
/// never fired count as exceeding every tested `t`.
pub fn fit_geometric_tail(samples: &[Option<i64>], t0: i64, min_count: usize) -> Result<TailFit> {
    let total = samples.len() as f64;
    let mut finite: Vec<i64> = samples.iter().flatten().copied().collect();
    finite.sort_unstable();
    let censored = samples.len() - finite.len();
    let above = |t: i64| finite.len() - finite.partition_point(|&x| x <= t) + censored;
    let mut t1 = t0;
    while above(t1 + 1) >= min_count {
        t1 += 1;
    }
    if t1 - t0 < 2 || above(t0) < min_count {
        return Err(Error::Degenerate(format!("fewer than three points with {min_count} samples in the tail")));
    }
    let pts: Vec<(f64, f64)> = (t0..=t1).map(|t| (t as f64, (above(t) as f64 / total).ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let max_t = finite.last().copied().unwrap_or(t1).max(t1);
    let mut excess: f64 = f64::NEG_INFINITY;
    for t in t1 + 1..=max_t {
        let expect = total * (intercept + slope * t as f64).exp();
        let sd = expect.max(1.0).sqrt();
        excess = excess.max((above(t) as f64 - expect) / sd);
    }
    Ok(TailFit {
        slope,
        intercept,
        r_squared,
        t0,
        t1,
        tail_excess_sigma: if excess.is_finite() { excess } else { 0.0 },
    })
}

/// One line of the per-row gain table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub row: i64,
    pub r_lo: Option<i64>,
    pub r_hi: Option<i64>,
    pub gap: Option<i64>,
    pub is_tau: bool,
}

/// Per-row right-edge gap `r_hi - r_lo` with the `tau` markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub rows: Vec<GainRow>,
    pub taus: Vec<i64>,
    pub final_gap: Option<i64>,
    pub mean_gap: f64,
    pub min_gap: Option<i64>,
}

impl GainReport {
    pub const HEADER: &'static str = "row,r_lo,r_hi,gap,is_tau";

    pub fn new(run: &CoupledRun, taus: &[i64]) -> Self {
        let rows: Vec<GainRow> = run
            .lo
            .r
            .iter()
            .zip(&run.hi.r)
            .enumerate()
            .map(|(k, (&a, &b))| {
                let row = run.lo.start_row + k as i64;
                GainRow {
                    row,
                    r_lo: a,
                    r_hi: b,
                    gap: a.zip(b).map(|(a, b)| b - a),
                    is_tau: taus.binary_search(&row).is_ok(),
                }
            })
            .collect();
        let gaps: Vec<i64> = rows.iter().filter_map(|r| r.gap).collect();
        GainReport {
            final_gap: rows.last().and_then(|r| r.gap),
            mean_gap: if gaps.is_empty() {
                f64::NAN
            } else {
                gaps.iter().sum::<i64>() as f64 / gaps.len() as f64
            },
            min_gap: gaps.iter().min().copied(),
            taus: taus.to_vec(),
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let opt = |x: Option<i64>| x.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.row, opt(r.r_lo), opt(r.r_hi), opt(r.gap), u8::from(r.is_tau)));
        }
        out
    }
}

/// Outcome of an aligned coupling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedReport {
    pub replicas: usize,
    pub rows: usize,
    /// `(replica, row)` pairs where `r(N^A') > r(N^B')`.
    pub violations: usize,
    pub first_violation: Option<(usize, i64)>,
    /// Replicas whose sampled pair was `A' = B'`.
    pub identical_pairs: usize,
}

/// A joint law on pairs of finite sets, given as `(A', B', mass)`.
pub type PairSupport = [(Vec<i64>, Vec<i64>, f64)];

fn check_support(support: &PairSupport) -> Result<()> {
    if support.is_empty() {
        return Err(Error::InvalidCoupling("empty support".into()));
    }
    let mut total = 0.0;
    for (a, b, q) in support {
        if !(*q >= 0.0) {
            return Err(Error::InvalidCoupling(format!("negative mass {q}")));
        }
        if let Some(m) = a.iter().find(|m| !b.contains(m)) {
            return Err(Error::InvalidCoupling(format!("column {m} of {a:?} is missing from {b:?}")));
        }
        total += q;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidCoupling(format!("masses sum to {total}")));
    }
    Ok(())
}

/// Sample `(A', B')` pairs from a monotone coupling and evolve both sets
/// under shared bonds, checking `r(N_n^A') <= r(N_n^B')` on every row. An
/// empty set has right edge minus infinity.
pub fn aligned_coupling(support: &PairSupport, params: &Params, rows: usize, replicas: usize, seed: u64) -> Result<AlignedReport> {
    Params::new(params.p, params.eps)?;
    check_support(support)?;
    let weights = WeightedIndex::new(support.iter().map(|s| s.2)).map_err(|e| Error::InvalidCoupling(e.to_string()))?;
    let outcomes: Vec<(Option<i64>, bool)> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x6a09_e667_f3bc_c909).wrapping_add(i as u64));
            let (a, b, _) = &support[weights.sample(&mut rng)];
            let field = RandomField::derive(seed, i as u64);
            let first = aligned_replica(a, b, params, rows, &field)?;
            Ok((first, a == b))
        })
        .collect::<Result<_>>()?;
    let violations = outcomes.iter().filter(|o| o.0.is_some()).count();
    let first_violation = outcomes.iter().enumerate().find_map(|(i, o)| o.0.map(|n| (i, n)));
    Ok(AlignedReport {
        replicas,
        rows,
        violations,
        first_violation,
        identical_pairs: outcomes.iter().filter(|o| o.1).count(),
    })
}

/// First row where the inequality fails, if any.
fn aligned_replica(a: &[i64], b: &[i64], params: &Params, rows: usize, field: &RandomField) -> Result<Option<i64>> {
    if b.is_empty() {
        return Ok(None);
    }
    let mut sb = FrontState::init_finite(b)?;
    let mut sa = sb.with_columns(a)?;
    for _ in 0..rows {
        if sb.is_dead() {
            break;
        }
        advance_group(&mut [&mut sa, &mut sb], &[*params, *params], field)?;
        if let Some(ra) = sa.curr().right_edge() {
            if sb.curr().right_edge().map_or(true, |rb| ra > rb) {
                return Ok(Some(sa.n()));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front::BoundaryMode;
    use crate::lattice::PinnedField;

    fn half_line(m: usize) -> FrontState {
        FrontState::init_left_infinite(m, BoundaryMode::Vacuum).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(CoupledConfig::new(0.6, 0.2, 0.1).is_err());
        assert!(CoupledConfig::new(1.2, 0.0, 0.1).is_err());
        let bad = CoupledConfig {
            lo: Params { p: 0.5, eps: 0.0 },
            hi: Params { p: 0.6, eps: 0.1 },
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn equal_levels_give_identical_runs() {
        let cfg = CoupledConfig::new(0.65, 0.1, 0.1).unwrap();
        let run = coupled_run(&cfg, &half_line(60), 50, &RandomField::new(4)).unwrap();
        assert_eq!(run.lo.r, run.hi.r);
        assert_eq!(run.violations, 0);
        let rec = tau_chain(&cfg, &half_line(60), 50, &RandomField::new(4)).unwrap();
        assert_eq!(rec.k_of_t, 0);
    }

    #[test]
    fn containment_and_ordered_edges() {
        let cfg = CoupledConfig::new(0.62, 0.0, 0.3).unwrap();
        for seed in 0..10 {
            let run = coupled_run(&cfg, &half_line(100), 80, &RandomField::new(seed)).unwrap();
            assert_eq!(run.violations, 0);
            for (a, b) in run.lo.r.iter().zip(&run.hi.r) {
                if let Some(a) = a {
                    assert!(b.unwrap() >= *a);
                }
            }
        }
    }

    #[test]
    fn constructed_tau() {
        // right edge moves left at rows 5 and 6, starting from column 3 at row 4
        let r = vec![Some(0), Some(1), Some(2), Some(3), Some(3), Some(2), Some(1), Some(2)];
        let run = Trajectory::from_edges(0, r);
        let (eps, eps_t) = (0.1, 0.3);
        let bond = Bond::new(Site { m: 3, n: 4 }, BondKind::Vert);
        let field = PinnedField::new(RandomField::new(0)).pin(bond, (eps + eps_t) / 2.0);
        assert_eq!(detect_tau(&run, eps, eps_t, &field), Some(6));
        assert_eq!(detect_tau(&run, eps, eps, &field), None);
        // the uniform must be closed at eps and open at eps_tilde
        let field = PinnedField::new(RandomField::new(0)).pin(bond, 0.05);
        assert_eq!(detect_tau(&run, eps, eps_t, &field), None);
        let field = PinnedField::new(RandomField::new(0)).pin(bond, eps);
        assert_eq!(detect_tau(&run, eps, eps_t, &field), Some(6));
        let field = PinnedField::new(RandomField::new(0)).pin(bond, eps_t);
        assert_eq!(detect_tau(&run, eps, eps_t, &field), None);
    }

    #[test]
    fn chain_at_p_one_is_empty() {
        let cfg = CoupledConfig::new(1.0, 0.0, 0.5).unwrap();
        let rec = tau_chain(&cfg, &half_line(40), 30, &RandomField::new(2)).unwrap();
        assert!(rec.taus.is_empty());
        assert_eq!(rec.rate(), 0.0);
    }

    #[test]
    fn chain_taus_are_spaced_and_replayable() {
        let cfg = CoupledConfig::new(0.64, 0.0, 0.2).unwrap();
        let field = RandomField::new(11);
        let (rec, run) = tau_chain_run(&cfg, &half_line(420), 400, &field).unwrap();
        assert!(rec.k_of_t > 0);
        assert!(rec.taus[0] >= 2);
        assert!(rec.gaps.iter().all(|&g| g >= 2));
        assert_eq!(run.violations, 0);
        // replay against the stored lower trajectory
        let mut earliest = 2;
        for (&t, &(row, edge)) in rec.taus.iter().zip(&run.pre_restart) {
            assert_eq!(row, t);
            let mut lo = run.lo.clone();
            lo.r[t as usize] = edge;
            assert_eq!(detect_tau_from(&lo, 0.0, 0.2, &field, earliest), Some(t));
            earliest = t + 2;
        }
        let report = GainReport::new(&run, &rec.taus);
        assert!(report.min_gap.unwrap() >= 0);
        assert_eq!(report.rows.iter().filter(|r| r.is_tau).count(), rec.k_of_t);
    }

    #[test]
    fn first_tau_matches_chain() {
        let cfg = CoupledConfig::new(0.64, 0.0, 0.2).unwrap();
        let field = RandomField::new(5);
        let rec = tau_chain(&cfg, &half_line(316), 300, &field).unwrap();
        let t = first_tau(&cfg.lo, 0.2, 316, 300, &field).unwrap();
        assert_eq!(t, rec.taus.first().copied());
    }

    #[test]
    fn geometric_fit_on_exact_geometric() {
        // deterministic sample with survival 0.8^t
        let mut samples = Vec::new();
        for t in 1..60i64 {
            let count = (10000.0 * (0.8f64.powi(t as i32 - 1) - 0.8f64.powi(t as i32))).round() as usize;
            samples.extend(std::iter::repeat(Some(t)).take(count));
        }
        let fit = fit_geometric_tail(&samples, 1, 100).unwrap();
        assert!((fit.slope - 0.8f64.ln()).abs() < 0.01, "{fit:?}");
        assert!(fit.is_geometric(0.98));
    }

    #[test]
    fn support_validation() {
        let params = Params { p: 0.5, eps: 0.0 };
        let bad = vec![(vec![-2, 0], vec![0], 1.0)];
        assert!(matches!(aligned_coupling(&bad, &params, 5, 2, 0), Err(Error::InvalidCoupling(_))));
        let short = vec![(vec![0], vec![0], 0.5)];
        assert!(matches!(aligned_coupling(&short, &params, 5, 2, 0), Err(Error::InvalidCoupling(_))));
    }

    #[test]
    fn identity_and_added_site_couplings() {
        let params = Params { p: 0.6, eps: 0.2 };
        let same = vec![(vec![-2, 0], vec![-2, 0], 0.5), (vec![0], vec![0], 0.5)];
        let rep = aligned_coupling(&same, &params, 40, 200, 1).unwrap();
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.identical_pairs, 200);
        let added = vec![(vec![-4, 0], vec![-4, 0, 2], 0.5), (vec![], vec![0], 0.5)];
        let rep = aligned_coupling(&added, &params, 40, 200, 1).unwrap();
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.identical_pairs, 0);
    }
}
