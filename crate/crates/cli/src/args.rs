use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use enhperc::{BoundaryMode, SurvivalSemantics};

#[derive(Parser, Debug)]
#[command(name = "enhperc", version, about = "Oriented bond percolation with vertical enhancement bonds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// One run from {0} (or the truncated half-line with --M), dumped row by row.
    Simulate,
    /// Right-edge speed of the half-line process.
    Speed,
    /// Finite-depth survival probability from {0}.
    Survival,
    /// Critical point by stochastic bisection.
    Pc,
    /// One coupled run at eps and eps2 with the tau restart chain.
    Couple,
    /// tau statistics over replicas.
    Tau,
    /// Exact domination check of the window law by its shifted version.
    VerifyDomination,
    /// Exact law of the last two rows, cross-checked by enumeration.
    Oracle,
    /// Block crossing probabilities or a renormalized field sample.
    Block,
    /// One estimate per cell of a (p, eps) grid.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Speed => "speed",
            Command::Survival => "survival",
            Command::Pc => "pc",
            Command::Couple => "couple",
            Command::Tau => "tau",
            Command::VerifyDomination => "verify-domination",
            Command::Oracle => "oracle",
            Command::Block => "block",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Vacuum,
    Saturated,
}

impl From<Mode> for BoundaryMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Vacuum => BoundaryMode::Vacuum,
            Mode::Saturated => BoundaryMode::Saturated,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semantics {
    Strict,
    Lenient,
}

impl From<Semantics> for SurvivalSemantics {
    fn from(s: Semantics) -> Self {
        match s {
            Semantics::Strict => SurvivalSemantics::Strict,
            Semantics::Lenient => SurvivalSemantics::Lenient,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Speed,
    Survival,
    Both,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    let grid = Grid {
        width: parse(w)?,
        height: parse(h)?,
    };
    if grid.width == 0 || grid.height == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok(grid)
}

/// Every flag is accepted by every subcommand; each one reads what it needs.
#[derive(Args, Debug, Clone)]
pub struct Opts {
    /// Diagonal bond probability; a comma list for sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    pub p: Vec<f64>,
    /// Vertical bond probability; a comma list for sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// Upper enhancement level of a coupled run.
    #[arg(long, global = true)]
    pub eps2: Option<f64>,
    /// Number of rows.
    #[arg(long = "T", global = true)]
    pub rows: Option<usize>,
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Half-line truncation: start from the even columns in [-2M, 0].
    #[arg(long = "M", global = true)]
    pub truncation: Option<usize>,
    /// Window width of exact laws.
    #[arg(long, global = true)]
    pub w: Option<usize>,
    /// Row of exact laws.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, global = true, value_enum)]
    pub semantics: Option<Semantics>,
    /// Block scale; a comma list.
    #[arg(long = "L", global = true, value_delimiter = ',')]
    pub scale: Vec<usize>,
    /// Speed used in the block geometry.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Renormalized grid, e.g. 8x6.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub grid: Option<Grid>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Survival level of the survival bisection.
    #[arg(long, global = true)]
    pub level: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<Method>,
    /// Keep every k-th row in simulate dumps.
    #[arg(long, global = true)]
    pub every: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads; output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}
