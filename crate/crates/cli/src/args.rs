//! Command-line surface. Every command record doubles as the echoed
//! experiment config, so replaying a saved config reruns the same command.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gcsd::estimators::DEFAULT_NOISE_SCALE;
use gcsd::robust::HuberConfig;
use gcsd::BuiltinKernel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "gcsd", version, about = "Cross-spectral analysis of bivariate graph signals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Build or load a graph and report its Laplacian spectrum.
    Graph(GraphCmd),
    /// Draw a jointly stationary pair, or synthesize signals from eigenvectors.
    Generate(GenerateCmd),
    /// Estimate a power or cross-spectral density.
    Estimate(EstimateCmd),
    /// Estimate graph coherence.
    Coherence(CoherenceCmd),
    /// Huber M-type density estimate, optionally with injected outliers.
    Robust(RobustCmd),
    /// Monte-Carlo checks of estimator moments against closed forms.
    Validate(ValidateCmd),
    /// Rerun a saved config.
    #[serde(skip)]
    Replay(ReplayCmd),
}

/// `karate`, `path:N`, `sensor:N:K:SEED`, or a path to an edge-list CSV or
/// graph JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GraphSource {
    Karate,
    Path(usize),
    Sensor { n: usize, k: usize, seed: u64 },
    File(PathBuf),
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Karate => f.write_str("karate"),
            Self::Path(n) => write!(f, "path:{n}"),
            Self::Sensor { n, k, seed } => write!(f, "sensor:{n}:{k}:{seed}"),
            Self::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl FromStr for GraphSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |v: &str, what: &str| v.parse::<u64>().map_err(|_| format!("bad {what} `{v}` in `{s}`"));
        match s.split(':').collect::<Vec<_>>().as_slice() {
            ["karate"] => Ok(Self::Karate),
            ["path", n] => Ok(Self::Path(num(n, "node count")? as usize)),
            ["sensor", n, k, seed] => Ok(Self::Sensor {
                n: num(n, "node count")? as usize,
                k: num(k, "neighbour count")? as usize,
                seed: num(seed, "seed")?,
            }),
            ["path" | "sensor", ..] => Err(format!("expected `path:N` or `sensor:N:K:SEED`, got `{s}`")),
            _ if s.is_empty() => Err("empty graph source".into()),
            _ => Ok(Self::File(PathBuf::from(s))),
        }
    }
}

impl From<GraphSource> for String {
    fn from(g: GraphSource) -> Self {
        g.to_string()
    }
}

impl TryFrom<String> for GraphSource {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shift {
    Laplacian,
    Adjacency,
}

/// `index:value`, used for outliers and eigenvector components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexValue {
    pub index: usize,
    pub value: f64,
}

impl FromStr for IndexValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (i, v) = s.split_once(':').ok_or_else(|| format!("expected `index:value`, got `{s}`"))?;
        let index = i.trim().parse().map_err(|_| format!("bad index `{i}`"))?;
        let value: f64 = v.trim().parse().map_err(|_| format!("bad value `{v}`"))?;
        if !value.is_finite() {
            return Err(format!("value must be finite, got `{v}`"));
        }
        Ok(Self { index, value })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GraphOpts {
    /// karate | path:N | sensor:N:K:SEED | FILE (edge-list CSV or graph JSON)
    #[arg(long, default_value = "karate")]
    pub graph: GraphSource,
    #[arg(long, value_enum, default_value_t = Shift::Laplacian)]
    pub shift: Shift,
}

/// Either a generated pair (`--kernels`, `--R`, `--rho`, `--seed`) or
/// signal files (`--x`, optional `--y`).
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SignalOpts {
    /// Filters shaping x and y; a single kernel is used for both.
    #[arg(long, value_delimiter = ',', default_value = "mex,heat")]
    pub kernels: Vec<BuiltinKernel>,
    /// Realizations to generate.
    #[arg(long = "R", default_value_t = 100)]
    pub realizations: usize,
    /// Correlation of the two white inputs; 1 shares one input.
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    pub rho: f64,
    /// Signal CSV for x (one realization per row); overrides generation.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Signal CSV for y; defaults to x.
    #[arg(long, requires = "x")]
    pub y: Option<PathBuf>,
    /// Estimate the power density of x alone.
    #[arg(long)]
    pub psd: bool,
    #[arg(long, env = "GCSD_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OutOpts {
    /// Output prefix; files are written as PREFIX.<part>.<ext>. Without it
    /// a JSON document goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GraphCmd {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateCmd {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphOpts,
    #[arg(long, value_delimiter = ',', default_value = "mex,heat")]
    pub kernels: Vec<BuiltinKernel>,
    #[arg(long = "R", default_value_t = 100)]
    pub realizations: usize,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    pub rho: f64,
    /// Deterministic x as a sum of scaled eigenvectors, e.g. `19:5,29:20`.
    #[arg(long, value_delimiter = ',')]
    pub components: Vec<IndexValue>,
    /// Deterministic y, same syntax as `--components`.
    #[arg(long, value_delimiter = ',', requires = "components")]
    pub components_y: Vec<IndexValue>,
    #[arg(long, env = "GCSD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output prefix; writes PREFIX.x.csv and PREFIX.y.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    /// Graph periodogram of x.
    Periodogram,
    /// Cross-periodogram of (x, y) over all realizations.
    Cross,
    /// Random-window average on one realization.
    WindowedAverage,
    /// Windowed graph Fourier transform on one realization.
    Wft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormChoice {
    Periodogram,
    Correlogram,
    LeastSquares,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct WindowOpts {
    /// Number of random windows.
    #[arg(long = "M", default_value_t = 100)]
    pub windows: usize,
    #[arg(long, allow_negative_numbers = true, default_value_t = DEFAULT_NOISE_SCALE)]
    pub noise_scale: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimateCmd {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub signals: SignalOpts,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::Cross)]
    pub estimator: EstimatorChoice,
    /// Algebraic form of the cross-periodogram.
    #[arg(long, value_enum, default_value_t = FormChoice::Periodogram)]
    pub form: FormChoice,
    #[command(flatten)]
    #[serde(flatten)]
    pub window: WindowOpts,
    /// Number of WFT grid points.
    #[arg(long = "K", default_value_t = 30)]
    pub wft_points: usize,
    /// Add the WFT grid point at frequency zero.
    #[arg(long)]
    pub include_zero: bool,
    /// Apply WFT filters through a Chebyshev fit of this order.
    #[arg(long)]
    pub chebyshev: Option<usize>,
    /// Realization used by the single-signal estimators.
    #[arg(long, default_value_t = 0)]
    pub realization: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CoherenceCmd {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub signals: SignalOpts,
    /// Use the population densities of the kernels instead of estimates.
    #[arg(long)]
    pub population: bool,
    /// Denominator floor; defaults to 1e-12 times the peak of p_x.
    #[arg(long, allow_negative_numbers = true)]
    pub floor: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RobustCmd {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub signals: SignalOpts,
    /// Huber threshold.
    #[arg(long, allow_negative_numbers = true, default_value_t = HuberConfig::default().c)]
    pub huber_c: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = HuberConfig::default().tol)]
    pub irls_tol: f64,
    #[arg(long, default_value_t = HuberConfig::default().max_iter)]
    pub irls_max_iter: usize,
    /// Set node values of every x realization, e.g. `24:4.0`.
    #[arg(long, value_delimiter = ',')]
    pub outlier: Vec<IndexValue>,
    /// Set node values of every y realization.
    #[arg(long, value_delimiter = ',')]
    pub outlier_y: Vec<IndexValue>,
    /// Use the windowed-average covariance with this many random windows.
    #[arg(long = "M")]
    pub windows: Option<usize>,
    #[arg(long, allow_negative_numbers = true, default_value_t = DEFAULT_NOISE_SCALE)]
    pub noise_scale: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Cross-periodogram mean and variance.
    Moments,
    /// Windowed-average mean.
    Bias,
    /// Windowed-average variance trace.
    Trace,
    All,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ValidateCmd {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphOpts,
    #[arg(long, value_enum, default_value_t = Suite::Moments)]
    pub suite: Suite,
    #[arg(long, value_delimiter = ',', default_value = "mex,heat")]
    pub kernels: Vec<BuiltinKernel>,
    #[arg(long = "R", default_value_t = 100)]
    pub realizations: usize,
    /// Monte-Carlo trials; defaults to each check's minimum.
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub window: WindowOpts,
    #[arg(long, env = "GCSD_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutOpts,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayCmd {
    /// Config JSON written by an earlier run.
    pub config: PathBuf,
    /// Replace the recorded output prefix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The echoed record of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub command: Command,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            tool: "gcsd".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
        }
    }
}
