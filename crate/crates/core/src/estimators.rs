//! Monte Carlo estimators: right-edge speed, finite-depth survival and the
//! critical curve `p_c(eps)` located by stochastic bisection.
//!
//! Every replica derives its field from `(seed, replica index)` and results
//! are aggregated in index order, so estimates do not depend on how rayon
//! schedules the work. Bisection reuses the same replica seeds at every
//! probe, which makes per-replica estimates monotone in `p`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::front::{bracket_run, FrontState, SurvivalSemantics};
use crate::lattice::{Params, RandomField};

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;

/// Extra half-line sites beyond the horizon in speed runs.
pub const SPEED_MARGIN: usize = 16;

/// Times a replica with disagreeing brackets is re-run with doubled truncation.
pub const BRACKET_RETRIES: usize = 2;

pub(crate) fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub alpha_hat: f64,
    pub stderr: f64,
    pub rows: usize,
    pub replicas: usize,
    /// Mean fraction of rows on which the two brackets agree.
    pub agree: f64,
    /// Replicas whose brackets still disagreed at the final row after
    /// widening; they are left out of `alpha_hat`.
    pub unresolved: usize,
}

impl SpeedEstimate {
    pub fn ci99(&self) -> (f64, f64) {
        (self.alpha_hat - Z99 * self.stderr, self.alpha_hat + Z99 * self.stderr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SpeedSample {
    /// Exact `r_T / T`, when the brackets agree.
    exact: Option<f64>,
    /// Saturated-bracket value, an upper bound on `r_T / T`.
    upper: f64,
    agree: f64,
}

fn speed_sample(params: &Params, rows: usize, seed: u64, index: u64) -> Result<SpeedSample> {
    let field = RandomField::derive(seed, index);
    let mut truncation = rows + SPEED_MARGIN;
    let t = rows as f64;
    for attempt in 0..=BRACKET_RETRIES {
        let run = bracket_run(params, truncation, rows, &field)?;
        if let Some(r) = run.resolved(rows) {
            return Ok(SpeedSample {
                exact: Some(r as f64 / t),
                upper: r as f64 / t,
                agree: run.agree,
            });
        }
        if attempt == BRACKET_RETRIES {
            let hi = run.hi.last().expect("saturated bracket never empties");
            return Ok(SpeedSample {
                exact: None,
                upper: hi as f64 / t,
                agree: run.agree,
            });
        }
        truncation *= 2;
    }
    unreachable!()
}

fn speed_samples(params: &Params, rows: usize, seed: u64, from: usize, to: usize) -> Result<Vec<SpeedSample>> {
    (from..to)
        .into_par_iter()
        .map(|i| speed_sample(params, rows, seed, i as u64))
        .collect()
}

fn summarize_speed(samples: &[SpeedSample], rows: usize) -> Result<SpeedEstimate> {
    let exact: Vec<f64> = samples.iter().filter_map(|s| s.exact).collect();
    let unresolved = samples.len() - exact.len();
    if exact.is_empty() {
        return Err(Error::BracketFailure {
            unresolved,
            replicas: samples.len(),
            rows,
        });
    }
    let (alpha_hat, stderr) = mean_and_stderr(&exact);
    Ok(SpeedEstimate {
        alpha_hat,
        stderr,
        rows,
        replicas: samples.len(),
        agree: samples.iter().map(|s| s.agree).sum::<f64>() / samples.len() as f64,
        unresolved,
    })
}

fn check_speed_args(rows: usize, replicas: usize) -> Result<()> {
    if rows < 100 {
        return Err(Error::InvalidParams(format!("speed horizon T = {rows} < 100")));
    }
    if replicas < 2 {
        return Err(Error::InvalidParams(format!("speed needs R >= 2, got {replicas}")));
    }
    Ok(())
}

/// Mean of `r_T / T` over `replicas` bracketed half-line runs.
pub fn estimate_speed(params: &Params, rows: usize, replicas: usize, seed: u64) -> Result<SpeedEstimate> {
    check_speed_args(rows, replicas)?;
    summarize_speed(&speed_samples(params, rows, seed, 0, replicas)?, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub theta_hat: f64,
    pub stderr: f64,
    pub rows: usize,
    pub replicas: usize,
    pub semantics: SurvivalSemantics,
}

impl SurvivalEstimate {
    fn from_count(hits: usize, replicas: usize, rows: usize, semantics: SurvivalSemantics) -> Self {
        let theta_hat = hits as f64 / replicas as f64;
        SurvivalEstimate {
            theta_hat,
            stderr: (theta_hat * (1.0 - theta_hat) / replicas as f64).sqrt(),
            rows,
            replicas,
            semantics,
        }
    }
}

/// Largest depth `d <= max_rows` to which the cluster of the origin
/// survives under `semantics`.
pub fn survival_depth(params: &Params, max_rows: usize, field: &RandomField, semantics: SurvivalSemantics) -> Result<usize> {
    let mut state = FrontState::init_finite(&[0])?;
    for k in 1..=max_rows {
        state.advance(params, field)?;
        match semantics {
            SurvivalSemantics::Strict if state.curr().is_empty() => return Ok(k - 1),
            // rows k-1 and k are both empty; row k-1 still counts as alive
            SurvivalSemantics::Lenient if state.is_dead() => return Ok(k - 1),
            _ => {}
        }
    }
    Ok(max_rows)
}

fn survival_depths(params: &Params, rows: usize, seed: u64, from: usize, to: usize, semantics: SurvivalSemantics) -> Result<Vec<usize>> {
    (from..to)
        .into_par_iter()
        .map(|i| survival_depth(params, rows, &RandomField::derive(seed, i as u64), semantics))
        .collect()
}

/// Fraction of replicas whose origin cluster survives to depth `rows`.
pub fn estimate_survival(
    params: &Params,
    rows: usize,
    replicas: usize,
    seed: u64,
    semantics: SurvivalSemantics,
) -> Result<SurvivalEstimate> {
    if rows < 1 || replicas < 1 {
        return Err(Error::InvalidParams("survival needs T >= 1 and R >= 1".into()));
    }
    let depths = survival_depths(params, rows, seed, 0, replicas, semantics)?;
    let hits = depths.iter().filter(|&&d| d >= rows).count();
    Ok(SurvivalEstimate::from_count(hits, replicas, rows, semantics))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcMethod {
    SpeedSign,
    Survival,
}

/// Outcome of one bisection probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    /// The observable is above its target: `p_c` lies below the probe.
    Above,
    /// The observable is below its target: `p_c` lies above the probe.
    Below,
    Unclear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub p: f64,
    pub replicas: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub sign: Sign,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcEstimate {
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub eps: f64,
    pub method: PcMethod,
    /// The ambiguity budget ran out before the bracket reached `tol`.
    pub ambiguous: bool,
    pub diagnostics: Vec<BisectionStep>,
}

impl PcEstimate {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }
}

/// Tuning of the noisy bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionConfig {
    /// Each retry multiplies the replica count by four.
    pub max_retries: usize,
    /// Number of unclear probes tolerated before giving up.
    pub ambiguity_budget: usize,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        BisectionConfig {
            max_retries: 2,
            ambiguity_budget: 4,
        }
    }
}

/// A noisy observable: `probe(p, replicas)` returns `(estimate, stderr, sign)`
/// and must reuse earlier replicas when asked for more of them.
trait Probe {
    fn probe(&mut self, p: f64, replicas: usize) -> Result<(f64, f64, Sign)>;
}

fn decide(estimate: f64, stderr: f64, target: f64) -> Sign {
    if estimate - Z99 * stderr > target {
        Sign::Above
    } else if estimate + Z99 * stderr < target {
        Sign::Below
    } else {
        Sign::Unclear
    }
}

/// Bisection on `[0, 1]` for an observable increasing in `p`.
///
/// An unclear probe is re-sampled with four times the replicas, up to
/// `max_retries` times. A probe that stays unclear means the crossing is
/// near it; the bisection then probes a quarter-bracket on each side and
/// keeps whatever sides are decided, consuming one unit of the ambiguity
/// budget. It stops with `ambiguous = true` once the budget is spent or no
/// side can be decided.
fn stochastic_bisect(
    probe: &mut dyn Probe,
    tol: f64,
    replicas: usize,
    config: BisectionConfig,
) -> Result<(f64, f64, bool, Vec<BisectionStep>)> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut log = Vec::new();
    let mut budget = config.ambiguity_budget;

    let mut eval = |p: f64, lo: &mut f64, hi: &mut f64, log: &mut Vec<BisectionStep>| -> Result<Sign> {
        let mut r = replicas;
        let mut attempt = 0;
        loop {
            let (est, se, sign) = probe.probe(p, r)?;
            match sign {
                Sign::Above => *hi = hi.min(p),
                Sign::Below => *lo = lo.max(p),
                Sign::Unclear => {}
            }
            log.push(BisectionStep {
                p,
                replicas: r,
                estimate: est,
                stderr: se,
                sign,
                bracket: (*lo, *hi),
            });
            if sign != Sign::Unclear || attempt == config.max_retries {
                return Ok(sign);
            }
            attempt += 1;
            r *= 4;
        }
    };

    let mut ambiguous = false;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if eval(mid, &mut lo, &mut hi, &mut log)? != Sign::Unclear {
            continue;
        }
        if budget == 0 {
            ambiguous = true;
            break;
        }
        budget -= 1;
        let q = 0.25 * (hi - lo);
        let before = (lo, hi);
        eval(mid - q, &mut lo, &mut hi, &mut log)?;
        eval(mid + q, &mut lo, &mut hi, &mut log)?;
        if (lo, hi) == before {
            ambiguous = true;
            break;
        }
    }
    Ok((lo, hi, ambiguous, log))
}

struct SpeedProbe {
    eps: f64,
    rows: usize,
    seed: u64,
    cache: Option<(f64, Vec<SpeedSample>)>,
}

impl Probe for SpeedProbe {
    fn probe(&mut self, p: f64, replicas: usize) -> Result<(f64, f64, Sign)> {
        let params = Params::new(p, self.eps)?;
        let mut samples = match self.cache.take() {
            Some((q, s)) if q == p => s,
            _ => Vec::new(),
        };
        if samples.len() < replicas {
            samples.extend(speed_samples(&params, self.rows, self.seed, samples.len(), replicas)?);
        }
        let sign_and_stats = speed_sign(&samples);
        self.cache = Some((p, samples));
        Ok(sign_and_stats)
    }
}

fn speed_sign(samples: &[SpeedSample]) -> (f64, f64, Sign) {
    let exact_only = samples.iter().all(|s| s.exact.is_some());
    if exact_only {
        let xs: Vec<f64> = samples.iter().map(|s| s.exact.unwrap()).collect();
        let (m, se) = mean_and_stderr(&xs);
        return (m, se, decide(m, se, 0.0));
    }
    // Unresolved replicas only bound r_T from above, so they can prove a
    // negative speed but never a positive one.
    let ups: Vec<f64> = samples.iter().map(|s| s.upper).collect();
    let (m, se) = mean_and_stderr(&ups);
    let sign = match decide(m, se, 0.0) {
        Sign::Below => Sign::Below,
        _ => Sign::Unclear,
    };
    (m, se, sign)
}

/// Locate `p_c(eps)` as the sign change of the right-edge speed.
pub fn find_pc_speed(eps: f64, tol: f64, rows: usize, replicas: usize, seed: u64) -> Result<PcEstimate> {
    find_pc_speed_with(eps, tol, rows, replicas, seed, BisectionConfig::default())
}

pub fn find_pc_speed_with(
    eps: f64,
    tol: f64,
    rows: usize,
    replicas: usize,
    seed: u64,
    config: BisectionConfig,
) -> Result<PcEstimate> {
    Params::new(0.0, eps)?;
    if tol < 0.001 {
        return Err(Error::InvalidParams(format!("tol = {tol} < 0.001")));
    }
    check_speed_args(rows, replicas)?;
    let mut probe = SpeedProbe {
        eps,
        rows,
        seed,
        cache: None,
    };
    let (lo, hi, ambiguous, diagnostics) = stochastic_bisect(&mut probe, tol, replicas, config)?;
    Ok(PcEstimate {
        p_hat: 0.5 * (lo + hi),
        lo,
        hi,
        eps,
        method: PcMethod::SpeedSign,
        ambiguous,
        diagnostics,
    })
}

struct SurvivalProbe {
    eps: f64,
    rows: usize,
    seed: u64,
    level: f64,
    semantics: SurvivalSemantics,
    cache: Option<(f64, Vec<usize>)>,
}

impl Probe for SurvivalProbe {
    fn probe(&mut self, p: f64, replicas: usize) -> Result<(f64, f64, Sign)> {
        let params = Params::new(p, self.eps)?;
        let mut depths = match self.cache.take() {
            Some((q, d)) if q == p => d,
            _ => Vec::new(),
        };
        if depths.len() < replicas {
            depths.extend(survival_depths(&params, self.rows, self.seed, depths.len(), replicas, self.semantics)?);
        }
        let hits = depths.iter().filter(|&&d| d >= self.rows).count();
        let est = SurvivalEstimate::from_count(hits, depths.len(), self.rows, self.semantics);
        self.cache = Some((p, depths));
        // A binomial estimate of exactly 0 or 1 has zero stderr; that only
        // happens far from the crossing, where the decision is safe.
        Ok((est.theta_hat, est.stderr, decide(est.theta_hat, est.stderr, self.level)))
    }
}

/// Survival-crossing estimate of `p_c(eps)`: bisection for
/// `theta_T(p, eps) = level` at depths `T` and `2T`. The point estimate is
/// the `2T` crossing; the bracket spans both crossings so the drift between
/// depths shows up as width.
pub fn find_pc_survival(
    eps: f64,
    rows: usize,
    level: f64,
    tol: f64,
    replicas: usize,
    seed: u64,
    semantics: SurvivalSemantics,
) -> Result<PcEstimate> {
    Params::new(0.0, eps)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParams(format!("level = {level} is outside (0, 1)")));
    }
    if tol < 0.001 || rows < 1 || replicas < 1 {
        return Err(Error::InvalidParams("survival bisection needs tol >= 0.001, T >= 1, R >= 1".into()));
    }
    let config = BisectionConfig::default();
    let mut diagnostics = Vec::new();
    let mut run = |depth: usize| -> Result<(f64, f64, bool)> {
        let mut probe = SurvivalProbe {
            eps,
            rows: depth,
            seed,
            level,
            semantics,
            cache: None,
        };
        let (lo, hi, amb, log) = stochastic_bisect(&mut probe, tol, replicas, config)?;
        diagnostics.extend(log);
        Ok((lo, hi, amb))
    };
    let (lo1, hi1, amb1) = run(rows)?;
    let (lo2, hi2, amb2) = run(2 * rows)?;
    Ok(PcEstimate {
        p_hat: 0.5 * (lo2 + hi2),
        lo: lo1.min(lo2),
        hi: hi1.max(hi2),
        eps,
        method: PcMethod::Survival,
        ambiguous: amb1 || amb2,
        diagnostics,
    })
}

/// One line of the estimator CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub method: String,
    pub eps: f64,
    pub p: f64,
    #[serde(rename = "T")]
    pub rows: usize,
    #[serde(rename = "R")]
    pub replicas: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

impl EstimateRow {
    pub const HEADER: &'static str = "method,eps,p,T,R,estimate,stderr,lo,hi,seed";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.method, self.eps, self.p, self.rows, self.replicas, self.estimate, self.stderr, self.lo, self.hi, self.seed
        )
    }

    pub fn from_speed(params: &Params, est: &SpeedEstimate, seed: u64) -> Self {
        let (lo, hi) = est.ci99();
        EstimateRow {
            method: "speed".into(),
            eps: params.eps,
            p: params.p,
            rows: est.rows,
            replicas: est.replicas,
            estimate: est.alpha_hat,
            stderr: est.stderr,
            lo,
            hi,
            seed,
        }
    }

    pub fn from_survival(params: &Params, est: &SurvivalEstimate, seed: u64) -> Self {
        let method = match est.semantics {
            SurvivalSemantics::Strict => "survival_strict",
            SurvivalSemantics::Lenient => "survival_lenient",
        };
        EstimateRow {
            method: method.into(),
            eps: params.eps,
            p: params.p,
            rows: est.rows,
            replicas: est.replicas,
            estimate: est.theta_hat,
            stderr: est.stderr,
            lo: (est.theta_hat - Z99 * est.stderr).max(0.0),
            hi: (est.theta_hat + Z99 * est.stderr).min(1.0),
            seed,
        }
    }

    /// `p` is left as NaN; the `stderr` column holds the bracket half-width.
    pub fn from_pc(est: &PcEstimate, rows: usize, replicas: usize, seed: u64) -> Self {
        let method = match est.method {
            PcMethod::SpeedSign => "pc_speed",
            PcMethod::Survival => "pc_survival",
        };
        EstimateRow {
            method: method.into(),
            eps: est.eps,
            p: f64::NAN,
            rows,
            replicas,
            estimate: est.p_hat,
            stderr: 0.5 * est.width(),
            lo: est.lo,
            hi: est.hi,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_at_p_one_is_exactly_one() {
        let est = estimate_speed(&Params { p: 1.0, eps: 0.0 }, 100, 4, 7).unwrap();
        assert_eq!(est.alpha_hat, 1.0);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.unresolved, 0);
    }

    #[test]
    fn speed_at_p_zero_fails_to_bracket() {
        let err = estimate_speed(&Params { p: 0.0, eps: 0.0 }, 100, 3, 7).unwrap_err();
        assert_eq!(
            err,
            Error::BracketFailure {
                unresolved: 3,
                replicas: 3,
                rows: 100
            }
        );
    }

    #[test]
    fn speed_argument_checks() {
        assert!(estimate_speed(&Params { p: 0.5, eps: 0.0 }, 99, 4, 0).is_err());
        assert!(estimate_speed(&Params { p: 0.5, eps: 0.0 }, 100, 1, 0).is_err());
    }

    #[test]
    fn survival_trivial_limits() {
        for sem in [SurvivalSemantics::Strict, SurvivalSemantics::Lenient] {
            let e = estimate_survival(&Params { p: 1.0, eps: 0.0 }, 30, 10, 1, sem).unwrap();
            assert_eq!(e.theta_hat, 1.0);
        }
        let vertical = Params { p: 0.0, eps: 1.0 };
        let strict = estimate_survival(&vertical, 30, 10, 1, SurvivalSemantics::Strict).unwrap();
        let lenient = estimate_survival(&vertical, 30, 10, 1, SurvivalSemantics::Lenient).unwrap();
        assert_eq!(strict.theta_hat, 0.0);
        assert_eq!(lenient.theta_hat, 1.0);
    }

    #[test]
    fn survival_depth_semantics() {
        let field = RandomField::new(0);
        let dead = Params { p: 0.0, eps: 0.0 };
        assert_eq!(survival_depth(&dead, 10, &field, SurvivalSemantics::Strict).unwrap(), 0);
        // rows 1 and 2 both empty: row 1 is the last one counted alive
        assert_eq!(survival_depth(&dead, 10, &field, SurvivalSemantics::Lenient).unwrap(), 1);
    }

    #[test]
    fn decide_uses_99_percent() {
        assert_eq!(decide(1.0, 0.3, 0.0), Sign::Above);
        assert_eq!(decide(1.0, 0.5, 0.0), Sign::Unclear);
        assert_eq!(decide(-1.0, 0.3, 0.0), Sign::Below);
    }

    struct Exact(f64);
    impl Probe for Exact {
        fn probe(&mut self, p: f64, _: usize) -> Result<(f64, f64, Sign)> {
            let v = p - self.0;
            Ok((v, 0.0, decide(v, 0.0, 0.0)))
        }
    }

    #[test]
    fn bisection_on_noiseless_observable() {
        let (lo, hi, amb, _) = stochastic_bisect(&mut Exact(0.3141), 0.001, 1, BisectionConfig::default()).unwrap();
        assert!(!amb);
        assert!(lo <= 0.3141 && 0.3141 <= hi && hi - lo <= 0.001);
    }

    /// Unclear within 0.01 of the root, exact elsewhere.
    struct Fuzzy(f64);
    impl Probe for Fuzzy {
        fn probe(&mut self, p: f64, _: usize) -> Result<(f64, f64, Sign)> {
            let v = p - self.0;
            let sign = if v.abs() < 0.01 { Sign::Unclear } else { decide(v, 0.0, 0.0) };
            Ok((v, 0.01, sign))
        }
    }

    #[test]
    fn bisection_reports_ambiguity() {
        let (lo, hi, amb, log) = stochastic_bisect(&mut Fuzzy(0.37), 0.001, 1, BisectionConfig::default()).unwrap();
        assert!(amb);
        assert!(lo <= 0.37 && 0.37 <= hi);
        assert!(hi - lo > 0.001);
        assert!(log.iter().any(|s| s.sign == Sign::Unclear));
    }

    #[test]
    fn csv_row_layout() {
        let row = EstimateRow {
            method: "speed".into(),
            eps: 0.1,
            p: 0.5,
            rows: 100,
            replicas: 4,
            estimate: 1.0,
            stderr: 0.0,
            lo: 1.0,
            hi: 1.0,
            seed: 7,
        };
        assert_eq!(row.to_csv(), "speed,0.1,0.5,100,4,1,0,1,1,7");
        assert_eq!(EstimateRow::HEADER.split(',').count(), row.to_csv().split(',').count());
    }
}
