use enhperc::coupling::{tau_chain_run, CoupledConfig, GainReport};
use enhperc::estimators::{
    estimate_speed, estimate_survival, find_pc_speed, find_pc_survival, EstimateRow, PcEstimate,
};
use enhperc::front::simulate_recorded;
use enhperc::oracle::{
    brute_force_row_distribution, exact_row_distribution, exact_theta, normalized_window_law, verify_lemma_domination,
    DistWindow, WindowLaw, MAX_DP_SITES,
};
use enhperc::renorm::{block_field_sample, estimate_block_event, renormalized_percolation_check, BlockEstimate};
use enhperc::{BoundaryMode, FrontState, Params, RandomField, SurvivalSemantics};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::args::{Command, Method, Mode, Opts, Semantics};
use crate::CliError;

/// Everything a subcommand produces.
pub struct Report {
    pub config: Map<String, Value>,
    /// CSV lines, column names first.
    pub csv: Vec<String>,
    pub json: Value,
    /// Set when a verification returned false.
    pub failure: Option<String>,
}

impl Report {
    fn new(config: Map<String, Value>) -> Self {
        Report {
            config,
            csv: Vec::new(),
            json: Value::Null,
            failure: None,
        }
    }
}

struct Cfg(Map<String, Value>);

impl Cfg {
    fn new() -> Self {
        Cfg(Map::new())
    }

    fn set(&mut self, key: &str, v: impl serde::Serialize) -> &mut Self {
        self.0.insert(key.into(), json!(v));
        self
    }
}

fn args_err(msg: impl Into<String>) -> CliError {
    CliError::Args(msg.into())
}

fn prob(name: &str, v: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(args_err(format!("--{name} {v} is outside [0, 1]")))
    }
}

fn single(name: &str, vs: &[f64], default: Option<f64>) -> Result<f64, CliError> {
    match (vs, default) {
        ([v], _) => prob(name, *v),
        ([], Some(d)) => Ok(d),
        ([], None) => Err(args_err(format!("--{name} is required"))),
        _ => Err(args_err(format!("--{name} takes a single value here"))),
    }
}

fn list(name: &str, vs: &[f64], default: Option<f64>) -> Result<Vec<f64>, CliError> {
    if vs.is_empty() {
        return default.map(|d| vec![d]).ok_or_else(|| args_err(format!("--{name} is required")));
    }
    vs.iter().map(|&v| prob(name, v)).collect()
}

fn positive(name: &str, v: Option<usize>, default: usize) -> Result<usize, CliError> {
    match v.unwrap_or(default) {
        0 => Err(args_err(format!("--{name} must be positive"))),
        x => Ok(x),
    }
}

fn mode(o: &Opts) -> BoundaryMode {
    o.mode.unwrap_or(Mode::Vacuum).into()
}

fn semantics(o: &Opts) -> SurvivalSemantics {
    o.semantics.unwrap_or(Semantics::Strict).into()
}

fn sem_name(s: SurvivalSemantics) -> &'static str {
    match s {
        SurvivalSemantics::Strict => "strict",
        SurvivalSemantics::Lenient => "lenient",
    }
}

fn mode_name(m: BoundaryMode) -> &'static str {
    match m {
        BoundaryMode::Vacuum => "vacuum",
        BoundaryMode::Saturated => "saturated",
    }
}

pub fn run(command: Command, o: &Opts) -> Result<Report, CliError> {
    match command {
        Command::Simulate => simulate(o),
        Command::Speed => speed(o),
        Command::Survival => survival(o),
        Command::Pc => pc(o),
        Command::Couple => couple(o),
        Command::Tau => tau(o),
        Command::VerifyDomination => verify_domination(o),
        Command::Oracle => oracle(o),
        Command::Block => block(o),
        Command::Sweep => sweep(o),
    }
}

fn simulate(o: &Opts) -> Result<Report, CliError> {
    let params = Params::new(single("p", &o.p, None)?, single("eps", &o.eps, Some(0.0))?)?;
    let rows = positive("T", o.rows, 100)?;
    let every = positive("every", o.every, 1)?;
    let (mode, sem) = (mode(o), semantics(o));
    let init = match o.truncation {
        Some(m) => FrontState::init_left_infinite(m, mode)?,
        None => FrontState::init_at(0, &[0], mode)?,
    };
    let mut cfg = Cfg::new();
    cfg.set("p", params.p)
        .set("eps", params.eps)
        .set("T", rows)
        .set("seed", o.seed)
        .set("M", o.truncation)
        .set("mode", mode_name(mode))
        .set("semantics", sem_name(sem))
        .set("every", every);
    let traj = simulate_recorded(&params, &init, rows, &RandomField::new(o.seed), sem, Some(every))?;
    let mut rep = Report::new(cfg.0);
    rep.csv = traj.dump().lines().map(str::to_string).collect();
    rep.json = json!({
        "r": traj.r,
        "extinct_at": traj.extinct_at,
        "snapshots": traj.snapshots.iter().map(|s| json!({"n": s.row(), "cols": s.columns()})).collect::<Vec<_>>(),
    });
    Ok(rep)
}

fn speed(o: &Opts) -> Result<Report, CliError> {
    let params = Params::new(single("p", &o.p, None)?, single("eps", &o.eps, Some(0.0))?)?;
    let rows = positive("T", o.rows, 2000)?;
    let replicas = positive("replicas", o.replicas, 200)?;
    let mut cfg = Cfg::new();
    cfg.set("p", params.p)
        .set("eps", params.eps)
        .set("T", rows)
        .set("replicas", replicas)
        .set("seed", o.seed);
    let est = estimate_speed(&params, rows, replicas, o.seed)?;
    let row = EstimateRow::from_speed(&params, &est, o.seed);
    let mut rep = Report::new(cfg.0);
    rep.csv = vec![EstimateRow::HEADER.into(), row.to_csv()];
    rep.json = json!(est);
    Ok(rep)
}

fn survival(o: &Opts) -> Result<Report, CliError> {
    let params = Params::new(single("p", &o.p, None)?, single("eps", &o.eps, Some(0.0))?)?;
    let rows = positive("T", o.rows, 1000)?;
    let replicas = positive("replicas", o.replicas, 1000)?;
    let sem = semantics(o);
    let mut cfg = Cfg::new();
    cfg.set("p", params.p)
        .set("eps", params.eps)
        .set("T", rows)
        .set("replicas", replicas)
        .set("seed", o.seed)
        .set("semantics", sem_name(sem));
    let est = estimate_survival(&params, rows, replicas, o.seed, sem)?;
    let mut rep = Report::new(cfg.0);
    rep.csv = vec![EstimateRow::HEADER.into(), EstimateRow::from_survival(&params, &est, o.seed).to_csv()];
    rep.json = json!(est);
    Ok(rep)
}

fn pc(o: &Opts) -> Result<Report, CliError> {
    let eps = single("eps", &o.eps, Some(0.0))?;
    let tol = o.tol.unwrap_or(0.005);
    let method = o.method.unwrap_or(Method::Speed);
    let level = o.level.unwrap_or(0.5);
    let sem = semantics(o);
    let use_speed = matches!(method, Method::Speed | Method::Both);
    let use_surv = matches!(method, Method::Survival | Method::Both);
    let speed_rows = positive("T", o.rows, 2000)?;
    let speed_reps = positive("replicas", o.replicas, 200)?;
    let surv_rows = positive("T", o.rows, 1000)?;
    let surv_reps = positive("replicas", o.replicas, 1000)?;
    let mut cfg = Cfg::new();
    cfg.set("eps", eps).set("tol", tol).set("seed", o.seed).set(
        "method",
        match method {
            Method::Speed => "speed",
            Method::Survival => "survival",
            Method::Both => "both",
        },
    );
    let mut rep_rows = vec![EstimateRow::HEADER.to_string()];
    let mut results: Vec<PcEstimate> = Vec::new();
    if use_speed {
        cfg.set("speed_T", speed_rows).set("speed_replicas", speed_reps);
        let est = find_pc_speed(eps, tol, speed_rows, speed_reps, o.seed)?;
        rep_rows.push(EstimateRow::from_pc(&est, speed_rows, speed_reps, o.seed).to_csv());
        results.push(est);
    }
    if use_surv {
        cfg.set("survival_T", surv_rows)
            .set("survival_replicas", surv_reps)
            .set("level", level)
            .set("semantics", sem_name(sem));
        let est = find_pc_survival(eps, surv_rows, level, tol, surv_reps, o.seed, sem)?;
        rep_rows.push(EstimateRow::from_pc(&est, surv_rows, surv_reps, o.seed).to_csv());
        results.push(est);
    }
    let mut rep = Report::new(cfg.0);
    rep.csv = rep_rows;
    rep.json = json!(results);
    Ok(rep)
}

fn coupled_config(o: &Opts) -> Result<CoupledConfig, CliError> {
    let p = single("p", &o.p, None)?;
    let eps = single("eps", &o.eps, Some(0.0))?;
    let eps2 = prob("eps2", o.eps2.ok_or_else(|| args_err("--eps2 is required"))?)?;
    if eps2 < eps {
        return Err(args_err(format!("--eps2 {eps2} is below --eps {eps}")));
    }
    Ok(CoupledConfig::new(p, eps, eps2)?)
}

fn couple(o: &Opts) -> Result<Report, CliError> {
    let config = coupled_config(o)?;
    let rows = positive("T", o.rows, 500)?;
    let m = positive("M", o.truncation, rows + 16)?;
    let mut cfg = Cfg::new();
    cfg.set("p", config.lo.p)
        .set("eps", config.lo.eps)
        .set("eps2", config.hi.eps)
        .set("T", rows)
        .set("M", m)
        .set("seed", o.seed);
    let init = FrontState::init_left_infinite(m, BoundaryMode::Vacuum)?;
    let (record, run) = tau_chain_run(&config, &init, rows, &RandomField::new(o.seed))?;
    let gain = GainReport::new(&run, &record.taus);
    let mut rep = Report::new(cfg.0);
    rep.csv = gain.to_csv().lines().map(str::to_string).collect();
    rep.json = json!({
        "summary": record.summary_json(),
        "violations": run.violations,
        "final_gap": gain.final_gap,
        "mean_gap": gain.mean_gap,
        "rows": gain.rows,
    });
    if run.violations > 0 {
        rep.failure = Some(format!("containment failed on {} rows", run.violations));
    }
    Ok(rep)
}

fn tau(o: &Opts) -> Result<Report, CliError> {
    let config = coupled_config(o)?;
    let rows = positive("T", o.rows, 5000)?;
    let replicas = positive("replicas", o.replicas, 50)?;
    let m = positive("M", o.truncation, rows + 16)?;
    let mut cfg = Cfg::new();
    cfg.set("p", config.lo.p)
        .set("eps", config.lo.eps)
        .set("eps2", config.hi.eps)
        .set("T", rows)
        .set("M", m)
        .set("replicas", replicas)
        .set("seed", o.seed);
    let init = FrontState::init_left_infinite(m, BoundaryMode::Vacuum)?;
    let runs = (0..replicas)
        .into_par_iter()
        .map(|i| tau_chain_run(&config, &init, rows, &RandomField::derive(o.seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rep = Report::new(cfg.0);
    rep.csv.push("replica,k,rate,first_tau,mean_gap,violations".into());
    let mut summaries = Vec::new();
    let mut violations = 0;
    for (i, (rec, run)) in runs.iter().enumerate() {
        let mean_gap = if rec.gaps.is_empty() {
            f64::NAN
        } else {
            rec.gaps.iter().sum::<i64>() as f64 / rec.gaps.len() as f64
        };
        let first = rec.taus.first().map_or_else(|| "NA".into(), |t| t.to_string());
        rep.csv.push(format!("{i},{},{},{first},{mean_gap},{}", rec.k_of_t, rec.rate(), run.violations));
        summaries.push(rec.summary_json());
        violations += run.violations;
    }
    let rates: Vec<f64> = runs.iter().map(|r| r.0.rate()).collect();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let spread = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rates.len() as f64;
    rep.json = json!({
        "replicas": summaries,
        "rate_mean": mean,
        "rate_rel_spread": if mean > 0.0 { spread.sqrt() / mean } else { f64::NAN },
        "violations": violations,
    });
    if violations > 0 {
        rep.failure = Some(format!("containment failed on {violations} rows"));
    }
    Ok(rep)
}

fn verify_domination(o: &Opts) -> Result<Report, CliError> {
    let ps = list("p", &o.p, None)?;
    let epss = list("eps", &o.eps, Some(0.0))?;
    let n = positive("n", o.n, 3)?;
    let w = positive("w", o.w, 4)?;
    let m = positive("M", o.truncation, 10)?;
    let mut cfg = Cfg::new();
    cfg.set("p", &ps).set("eps", &epss).set("n", n).set("w", w).set("M", m).set("seed", o.seed);
    let mut rep = Report::new(cfg.0);
    rep.csv.push("p,eps,n,w,M,dominated,max_flow_deficit,witness".into());
    let mut reports = Vec::new();
    for &p in &ps {
        for &eps in &epss {
            let r = verify_lemma_domination(&Params::new(p, eps)?, n, w, m)?;
            let witness = r.witness.as_ref().map_or(String::new(), |sets| {
                sets.iter()
                    .map(|s| s.iter().map(i64::to_string).collect::<Vec<_>>().join(" "))
                    .collect::<Vec<_>>()
                    .join(";")
            });
            rep.csv.push(format!(
                "{p},{eps},{n},{w},{m},{},{},{witness}",
                r.dominated,
                r.max_flow_deficit.unwrap_or(0.0)
            ));
            if !r.dominated && rep.failure.is_none() {
                rep.failure = Some(format!("domination fails at p = {p}, eps = {eps}; witness {witness}"));
            }
            reports.push(r);
        }
    }
    rep.json = if reports.len() == 1 { json!(reports[0]) } else { json!(reports) };
    Ok(rep)
}

fn set_cols(cols: &[i64]) -> String {
    if cols.is_empty() {
        "-".into()
    } else {
        cols.iter().map(i64::to_string).collect::<Vec<_>>().join(" ")
    }
}

fn oracle(o: &Opts) -> Result<Report, CliError> {
    let params = Params::new(single("p", &o.p, None)?, single("eps", &o.eps, Some(0.0))?)?;
    let n = o.n.unwrap_or(2);
    let init: Vec<i64> = match o.truncation {
        Some(m) => (0..=m as i64).map(|k| -2 * k).collect(),
        None => vec![0],
    };
    let window = DistWindow::cone(&init, n)?;
    let mut cfg = Cfg::new();
    cfg.set("p", params.p).set("eps", params.eps).set("n", n).set("M", o.truncation).set("w", o.w);
    let dist = exact_row_distribution(&params, &init, n, window)?;
    let brute = match brute_force_row_distribution(&params, &init, n, window) {
        Ok(b) => Some(b),
        Err(enhperc::Error::TooLarge(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let tv = brute.as_ref().map(|b| dist.tv_distance(b));
    let theta = if o.truncation.is_none() && n < MAX_DP_SITES {
        Some(exact_theta(&params, n)?)
    } else {
        None
    };
    let mut rep = Report::new(cfg.0);
    match o.w {
        Some(w) => {
            if w == 0 || w > 64 {
                return Err(args_err("--w must be in 1..=64"));
            }
            let law = normalized_window_law(&dist, w);
            rep.csv.push("window,prob".into());
            if law.mass_extinct > 0.0 {
                rep.csv.push(format!("-,{}", law.mass_extinct));
            }
            for (&mask, &q) in &law.masses {
                rep.csv.push(format!("{},{q}", set_cols(&WindowLaw::columns(mask))));
            }
            rep.json = json!({"law": law, "tv_brute_force": tv, "theta": theta});
        }
        None => {
            rep.csv.push("prev,curr,prob".into());
            for (&(a, b), &q) in &dist.probs {
                let prev = set_cols(&window.columns(n as i64 - 1, a));
                let curr = set_cols(&window.columns(n as i64, b));
                rep.csv.push(format!("{prev},{curr},{q}"));
            }
            rep.json = json!({
                "probs": dist.probs.iter().map(|(&(a, b), &q)| json!({
                    "prev": window.columns(n as i64 - 1, a),
                    "curr": window.columns(n as i64, b),
                    "prob": q,
                })).collect::<Vec<_>>(),
                "error_bound": dist.error_bound,
                "tv_brute_force": tv,
                "theta": theta,
            });
        }
    }
    if let Some(tv) = tv.filter(|&tv| tv > 1e-12) {
        rep.failure = Some(format!("row operator and enumeration differ by {tv} in total variation"));
    }
    Ok(rep)
}

fn block(o: &Opts) -> Result<Report, CliError> {
    let params = Params::new(single("p", &o.p, None)?, single("eps", &o.eps, Some(0.0))?)?;
    let alpha = o.alpha.ok_or_else(|| args_err("--alpha is required"))?;
    let scales = if o.scale.is_empty() { vec![50, 100, 200, 400] } else { o.scale.clone() };
    let mut cfg = Cfg::new();
    cfg.set("p", params.p).set("eps", params.eps).set("alpha", alpha).set("seed", o.seed);
    if let Some(grid) = o.grid {
        let l = scales[0];
        cfg.set("L", l).set("grid", format!("{}x{}", grid.width, grid.height));
        let field = block_field_sample(&params, l, alpha, grid.width, grid.height, o.seed)?;
        let crossing = renormalized_percolation_check(&field);
        let mut rep = Report::new(cfg.0);
        rep.csv = field.dump().lines().map(str::to_string).collect();
        rep.json = json!({"eta": field.eta, "crossing": crossing, "escapes": field.escapes});
        if field.escapes > 0 {
            rep.failure = Some(format!("{} block confinement breaches", field.escapes));
        }
        return Ok(rep);
    }
    let replicas = positive("replicas", o.replicas, 1000)?;
    cfg.set("L", &scales).set("replicas", replicas);
    let mut rep = Report::new(cfg.0);
    rep.csv.push(BlockEstimate::HEADER.into());
    let mut ests = Vec::new();
    for &l in &scales {
        let est = estimate_block_event(&params, l, alpha, replicas, o.seed)?;
        rep.csv.push(est.to_csv());
        if est.escapes > 0 && rep.failure.is_none() {
            rep.failure = Some(format!("{} block confinement breaches at L = {l}", est.escapes));
        }
        ests.push(est);
    }
    rep.json = json!(ests);
    Ok(rep)
}

fn sweep(o: &Opts) -> Result<Report, CliError> {
    let ps = list("p", &o.p, None)?;
    let epss = list("eps", &o.eps, Some(0.0))?;
    let method = o.method.unwrap_or(Method::Speed);
    let sem = semantics(o);
    let (rows, replicas) = match method {
        Method::Speed => (positive("T", o.rows, 2000)?, positive("replicas", o.replicas, 200)?),
        Method::Survival => (positive("T", o.rows, 1000)?, positive("replicas", o.replicas, 1000)?),
        Method::Both => return Err(args_err("sweep takes --method speed or survival")),
    };
    let mut cfg = Cfg::new();
    cfg.set("p", &ps)
        .set("eps", &epss)
        .set("T", rows)
        .set("replicas", replicas)
        .set("seed", o.seed)
        .set("method", if method == Method::Speed { "speed" } else { "survival" });
    if method == Method::Survival {
        cfg.set("semantics", sem_name(sem));
    }
    let mut rep = Report::new(cfg.0);
    rep.csv.push(EstimateRow::HEADER.into());
    let mut rows_out = Vec::new();
    for &eps in &epss {
        for &p in &ps {
            let params = Params::new(p, eps)?;
            let row = match method {
                Method::Speed => EstimateRow::from_speed(&params, &estimate_speed(&params, rows, replicas, o.seed)?, o.seed),
                _ => EstimateRow::from_survival(&params, &estimate_survival(&params, rows, replicas, o.seed, sem)?, o.seed),
            };
            rep.csv.push(row.to_csv());
            rows_out.push(row);
        }
    }
    rep.json = json!(rows_out);
    Ok(rep)
}
