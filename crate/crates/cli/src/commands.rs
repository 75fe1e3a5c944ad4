//! Command implementations. Each one delegates to the library and hands
//! its results to an [`Output`].

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gcsd::estimators::{
    coherence, cross_periodogram, random_window_bank, windowed_average_cross_periodogram, windowed_expectation,
    wft_estimator, EstimatorForm, WftOptions, WftPath, WindowBank,
};
use gcsd::graph::sensor::{sensor_graph, DEFAULT_SIDE};
use gcsd::graph::{adjacency, load_edge_list};
use gcsd::processes::{generate_jws_pair_with, population_densities, substream_seed, InputCoupling, PopulationDensities};
use gcsd::robust::{m_type_csd, HuberConfig};
use gcsd::validation::{
    mc_cross_periodogram_moments, mc_windowed_bias, mc_windowed_variance_trace, McReport, MAX_NODES_TRACE,
    MIN_TRIALS_BIAS, MIN_TRIALS_MOMENTS, MIN_TRIALS_TRACE,
};
use gcsd::{
    builtin_kernel, eigendecompose, karate_club, laplacian, BuiltinKernel, FilterKernel, Graph, ShiftOperator,
    SignalEnsemble, SpectralBasis,
};
use nalgebra::DVector;
use serde::Serialize;

use crate::args::*;
use crate::output::Output;

/// RNG stream index reserved for random windows, so they never reuse the
/// streams that drive signal generation under the same seed.
pub const WINDOW_STREAM: u64 = 1 << 32;

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    GateFailed,
}

/// Rewrites library parameter errors in terms of the flag that set them.
fn flagged(e: gcsd::Error) -> anyhow::Error {
    let flag = match &e {
        gcsd::Error::InvalidParameter { name, .. } => match *name {
            "R" => "--R",
            "K" => "--K",
            "M" => "--M",
            "c" => "--huber-c",
            "tol" => "--irls-tol",
            "max_iter" => "--irls-max-iter",
            "noise_scale" => "--noise-scale",
            "rho" => "--rho",
            "floor" => "--floor",
            "trials" => "--trials",
            "order" => "--chebyshev",
            "n" | "k" | "side" | "n_nodes" => "--graph",
            _ => return e.into(),
        },
        _ => return e.into(),
    };
    anyhow!("{flag}: {e}")
}

trait Flag<T> {
    fn flag(self, flag: &str) -> Result<T>;
}

impl<T> Flag<T> for gcsd::Result<T> {
    fn flag(self, flag: &str) -> Result<T> {
        self.map_err(|e| match e {
            gcsd::Error::InvalidParameter { .. } => flagged(e),
            other => anyhow!("{flag}: {other}"),
        })
    }
}

pub struct LoadedGraph {
    pub graph: Graph,
    pub shift: ShiftOperator,
    pub basis: SpectralBasis,
    pub sensor: Option<SensorInfo>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensorInfo {
    pub coords: Vec<[f64; 2]>,
    pub ave: f64,
}

pub fn load_graph(opts: &GraphOpts) -> Result<LoadedGraph> {
    let mut sensor = None;
    let graph = match &opts.graph {
        GraphSource::Karate => karate_club(),
        GraphSource::Path(n) => Graph::path(*n).flag("--graph")?,
        GraphSource::Sensor { n, k, seed } => {
            let s = sensor_graph(*n, *k, DEFAULT_SIDE, *seed).flag("--graph")?;
            if !s.connected {
                eprintln!("warning: sensor graph {} is not connected", opts.graph);
            }
            sensor = Some(SensorInfo { coords: s.coords, ave: s.ave });
            s.graph
        }
        GraphSource::File(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("--graph: reading {}", path.display()))?;
            let parsed = if path.extension().is_some_and(|e| e == "json") {
                Graph::from_json(&text)
            } else {
                load_edge_list(&text)
            };
            parsed.map_err(|e| anyhow!("--graph: {}: {e}", path.display()))?
        }
    };
    let shift = match opts.shift {
        Shift::Laplacian => laplacian(&graph),
        Shift::Adjacency => adjacency(&graph),
    };
    let basis = eigendecompose(&shift).flag("--shift")?;
    Ok(LoadedGraph { graph, shift, basis, sensor })
}

fn kernels(list: &[BuiltinKernel]) -> Result<(FilterKernel, FilterKernel)> {
    let (a, b) = match list {
        [a] => (*a, *a),
        [a, b] => (*a, *b),
        _ => bail!("--kernels: expected one or two kernels, got {}", list.len()),
    };
    Ok((builtin_kernel(a).flag("--kernels")?, builtin_kernel(b).flag("--kernels")?))
}

fn coupling(rho: f64) -> InputCoupling {
    if rho == 1.0 {
        InputCoupling::Shared
    } else {
        InputCoupling::Correlated { rho }
    }
}

fn read_ensemble(path: &Path, flag: &str, n: usize) -> Result<SignalEnsemble> {
    let text = fs::read_to_string(path).with_context(|| format!("{flag}: reading {}", path.display()))?;
    let e = SignalEnsemble::from_csv(&text).map_err(|e| anyhow!("{flag}: {}: {e}", path.display()))?;
    if e.n() != n {
        bail!("{flag}: {} has {} nodes but the graph has {n}", path.display(), e.n());
    }
    Ok(e)
}

pub struct Signals {
    pub x: SignalEnsemble,
    pub y: SignalEnsemble,
    /// Known when the signals were generated from kernels.
    pub population: Option<PopulationDensities>,
    pub psd: bool,
}

fn load_signals(opts: &SignalOpts, basis: &SpectralBasis) -> Result<Signals> {
    if let Some(xp) = &opts.x {
        let x = read_ensemble(xp, "--x", basis.n())?;
        let y = match &opts.y {
            Some(yp) => read_ensemble(yp, "--y", basis.n())?,
            None => x.clone(),
        };
        if x.realizations() != y.realizations() {
            bail!("--y: {} realizations, but --x has {}", y.realizations(), x.realizations());
        }
        let psd = opts.psd || opts.y.is_none();
        let y = if psd { x.clone() } else { y };
        return Ok(Signals { x, y, population: None, psd });
    }
    let (k1, k2) = kernels(&opts.kernels)?;
    let c = coupling(opts.rho);
    let (x, y) = generate_jws_pair_with(basis, &k1, &k2, opts.realizations, opts.seed, c).flag("--rho")?;
    let population = population_densities(basis, &k1, &k2, c).flag("--kernels")?;
    let y = if opts.psd { x.clone() } else { y };
    Ok(Signals { x, y, population: Some(population), psd: opts.psd })
}

fn window_bank(basis: &SpectralBasis, m: usize, noise_scale: f64, seed: u64) -> Result<WindowBank> {
    random_window_bank(basis, m, noise_scale, substream_seed(seed, WINDOW_STREAM)).flag("--M")
}

fn with_outliers(e: &SignalEnsemble, outliers: &[IndexValue], flag: &str) -> Result<SignalEnsemble> {
    if outliers.is_empty() {
        return Ok(e.clone());
    }
    let mut data = e.data().clone();
    for o in outliers {
        if o.index >= e.n() {
            bail!("{flag}: node {} out of range for {} nodes", o.index, e.n());
        }
        data.column_mut(o.index).fill(o.value);
    }
    SignalEnsemble::new(data, e.seed()).flag(flag)
}

pub fn run(command: &Command) -> Result<Status> {
    let config = ExperimentConfig::new(command.clone());
    match command {
        Command::Graph(c) => graph(c, &config),
        Command::Generate(c) => generate(c, &config),
        Command::Estimate(c) => estimate(c, &config),
        Command::Coherence(c) => coherence_cmd(c, &config),
        Command::Robust(c) => robust(c, &config),
        Command::Validate(c) => validate(c, &config),
        Command::Replay(c) => replay(c),
    }
}

#[derive(Serialize)]
struct GraphSummary<'a> {
    n_nodes: usize,
    n_edges: usize,
    connected: bool,
    lambda_max: f64,
    eigenvalues: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sensor: Option<&'a SensorInfo>,
}

fn graph(c: &GraphCmd, config: &ExperimentConfig) -> Result<Status> {
    let g = load_graph(&c.graph)?;
    let eigenvalues: Vec<f64> = g.basis.eigenvalues().iter().copied().collect();
    let summary = GraphSummary {
        n_nodes: g.graph.n_nodes(),
        n_edges: g.graph.edges().len(),
        connected: g.graph.is_connected(),
        lambda_max: g.basis.lambda_max(),
        eigenvalues: eigenvalues.clone(),
        sensor: g.sensor.as_ref(),
    };
    let mut out = Output::new(c.out.out.clone());
    out.value("summary", &summary)?;
    out.raw("graph.json", &g.graph.to_json())?;
    let mut csv = String::from("index,lambda\n");
    for (i, l) in eigenvalues.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    out.raw("spectrum.csv", &csv)?;
    out.finish(config)?;
    Ok(Status::Ok)
}

fn synthesize(basis: &SpectralBasis, comps: &[IndexValue], flag: &str) -> Result<SignalEnsemble> {
    let mut x = DVector::<f64>::zeros(basis.n());
    for c in comps {
        let v = basis.eigenvector(c.index).map_err(|e| anyhow!("{flag}: {e}"))?;
        x.axpy(c.value, &v, 1.0);
    }
    SignalEnsemble::from_signal(&x).flag(flag)
}

fn generate(c: &GenerateCmd, config: &ExperimentConfig) -> Result<Status> {
    let g = load_graph(&c.graph)?;
    let (x, y) = if c.components.is_empty() {
        let opts = SignalOpts {
            kernels: c.kernels.clone(),
            realizations: c.realizations,
            rho: c.rho,
            x: None,
            y: None,
            psd: false,
            seed: c.seed,
        };
        let s = load_signals(&opts, &g.basis)?;
        (s.x, Some(s.y))
    } else {
        let x = synthesize(&g.basis, &c.components, "--components")?;
        let y = if c.components_y.is_empty() {
            None
        } else {
            Some(synthesize(&g.basis, &c.components_y, "--components-y")?)
        };
        (x, y)
    };
    let mut out = Output::new(Some(c.out.clone()));
    out.raw("x.csv", &x.to_csv())?;
    if let Some(y) = &y {
        out.raw("y.csv", &y.to_csv())?;
    }
    out.finish(config)?;
    Ok(Status::Ok)
}

fn estimate(c: &EstimateCmd, config: &ExperimentConfig) -> Result<Status> {
    let g = load_graph(&c.graph)?;
    let mut s = load_signals(&c.signals, &g.basis)?;
    if c.estimator == EstimatorChoice::Periodogram {
        s.psd = true;
        s.y = s.x.clone();
    }
    let truth = s.population.as_ref().map(|p| if s.psd { p.p_x.clone() } else { p.p_xy.clone() });
    let r = c.realization;
    if r >= s.x.realizations() {
        bail!("--realization: {r} out of range for {} realizations", s.x.realizations());
    }
    let mut out = Output::new(c.out.out.clone());
    let density = match c.estimator {
        EstimatorChoice::Periodogram | EstimatorChoice::Cross => {
            let form = match c.form {
                FormChoice::Periodogram => EstimatorForm::Periodogram,
                FormChoice::Correlogram => EstimatorForm::Correlogram,
                FormChoice::LeastSquares => EstimatorForm::LeastSquares,
            };
            cross_periodogram(&g.basis, &s.x, &s.y, form).flag("--form")?
        }
        EstimatorChoice::WindowedAverage => {
            let bank = window_bank(&g.basis, c.window.windows, c.window.noise_scale, c.signals.seed)?;
            if let Some(t) = &truth {
                out.density("expected", &windowed_expectation(&g.basis, &bank, t).flag("--M")?)?;
            }
            windowed_average_cross_periodogram(&g.basis, &s.x.realization(r), &s.y.realization(r), &bank)
                .flag("--M")?
        }
        EstimatorChoice::Wft => {
            let opts = WftOptions {
                k: c.wft_points,
                include_zero: c.include_zero,
                path: c.chebyshev.map_or(WftPath::Exact, |order| WftPath::Chebyshev { order }),
            };
            let x = s.x.realization(r);
            let y = (!s.psd).then(|| s.y.realization(r));
            wft_estimator(&g.basis, Some(&g.shift), &x, y.as_ref(), &opts).flag("--K")?
        }
    };
    out.density("density", &density)?;
    if let Some(t) = &truth {
        out.density("truth", t)?;
    }
    out.finish(config)?;
    Ok(Status::Ok)
}

fn coherence_cmd(c: &CoherenceCmd, config: &ExperimentConfig) -> Result<Status> {
    let g = load_graph(&c.graph)?;
    let est = if c.population {
        let (k1, k2) = kernels(&c.signals.kernels)?;
        let p = population_densities(&g.basis, &k1, &k2, coupling(c.signals.rho)).flag("--rho")?;
        coherence(&p.p_x, &p.p_y, &p.p_xy, c.floor).flag("--floor")?
    } else {
        let s = load_signals(&c.signals, &g.basis)?;
        let p = |a: &SignalEnsemble, b: &SignalEnsemble| cross_periodogram(&g.basis, a, b, EstimatorForm::Periodogram);
        let p_x = p(&s.x, &s.x).flag("--x")?;
        let p_y = p(&s.y, &s.y).flag("--y")?;
        let p_xy = p(&s.x, &s.y).flag("--y")?;
        coherence(&p_x, &p_y, &p_xy, c.floor).flag("--floor")?
    };
    let clipped: Vec<usize> = est.clipped.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i).collect();
    if !clipped.is_empty() {
        eprintln!("warning: {} coherence value(s) exceeded 1 and were clipped", clipped.len());
    }
    let mut out = Output::new(c.out.out.clone());
    out.density("coherence", &est.density)?;
    out.value("clipped", &clipped)?;
    out.finish(config)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct RobustReport {
    converged: bool,
    iterations: usize,
    objective: Vec<f64>,
}

fn robust(c: &RobustCmd, config: &ExperimentConfig) -> Result<Status> {
    let g = load_graph(&c.graph)?;
    let s = load_signals(&c.signals, &g.basis)?;
    let x = with_outliers(&s.x, &c.outlier, "--outlier")?;
    let y = if s.psd {
        if !c.outlier_y.is_empty() {
            bail!("--outlier-y: a power density has no y signal");
        }
        x.clone()
    } else {
        with_outliers(&s.y, &c.outlier_y, "--outlier-y")?
    };
    let bank = c
        .windows
        .map(|m| window_bank(&g.basis, m, c.noise_scale, c.signals.seed))
        .transpose()?;
    let cfg = HuberConfig {
        c: c.huber_c,
        max_iter: c.irls_max_iter,
        tol: c.irls_tol,
        ..HuberConfig::default()
    };
    cfg.validate().map_err(flagged)?;
    let est = m_type_csd(&g.basis, &x, &y, bank.as_ref(), &cfg).map_err(flagged)?;
    if !est.converged {
        eprintln!("warning: IRLS did not converge in {} iterations", est.iterations);
    }
    let mut out = Output::new(c.out.out.clone());
    out.density("robust", &est.density)?;
    out.density("plain", &est.initial)?;
    if let Some(p) = &s.population {
        out.density("truth", if s.psd { &p.p_x } else { &p.p_xy })?;
    }
    out.value(
        "report",
        &RobustReport { converged: est.converged, iterations: est.iterations, objective: est.objective },
    )?;
    out.finish(config)?;
    Ok(Status::Ok)
}

fn validate(c: &ValidateCmd, config: &ExperimentConfig) -> Result<Status> {
    let g = load_graph(&c.graph)?;
    let (k1, k2) = kernels(&c.kernels)?;
    let b = &g.basis;
    let run_moments = matches!(c.suite, Suite::Moments | Suite::All);
    let run_bias = matches!(c.suite, Suite::Bias | Suite::All);
    let run_trace = match c.suite {
        Suite::Trace => true,
        Suite::All if b.n() > MAX_NODES_TRACE => {
            eprintln!("note: skipping the trace check, which needs at most {MAX_NODES_TRACE} nodes");
            false
        }
        Suite::All => true,
        _ => false,
    };
    let mut reports: Vec<McReport> = Vec::new();
    if run_moments {
        let t = c.trials.unwrap_or(MIN_TRIALS_MOMENTS);
        reports.push(mc_cross_periodogram_moments(b, &k1, &k2, c.realizations, t, c.seed).map_err(flagged)?);
    }
    if run_bias || run_trace {
        let bank = window_bank(b, c.window.windows, c.window.noise_scale, c.seed)?;
        if run_bias {
            let t = c.trials.unwrap_or(MIN_TRIALS_BIAS);
            reports.push(mc_windowed_bias(b, &bank, &k1, &k2, t, c.seed).map_err(flagged)?);
        }
        if run_trace {
            let t = c.trials.unwrap_or(MIN_TRIALS_TRACE);
            reports.push(mc_windowed_variance_trace(b, &bank, &k1, &k2, t, c.seed).flag("--graph")?);
        }
    }
    let to_stderr = c.out.out.is_none();
    for r in &reports {
        if to_stderr {
            eprintln!("{}", r.to_text());
        } else {
            println!("{}", r.to_text());
        }
    }
    let passed = reports.iter().all(McReport::passed);
    let mut out = Output::new(c.out.out.clone());
    out.value("reports", &reports)?;
    out.finish(config)?;
    Ok(if passed { Status::Ok } else { Status::GateFailed })
}

fn replay(c: &ReplayCmd) -> Result<Status> {
    let text = fs::read_to_string(&c.config).with_context(|| format!("reading {}", c.config.display()))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("{}: not a gcsd config", c.config.display()))?;
    let mut command = cfg.command;
    if let Some(prefix) = &c.out {
        match &mut command {
            Command::Graph(x) => x.out.out = Some(prefix.clone()),
            Command::Generate(x) => x.out = prefix.clone(),
            Command::Estimate(x) => x.out.out = Some(prefix.clone()),
            Command::Coherence(x) => x.out.out = Some(prefix.clone()),
            Command::Robust(x) => x.out.out = Some(prefix.clone()),
            Command::Validate(x) => x.out.out = Some(prefix.clone()),
            Command::Replay(_) => unreachable!("replay configs are never written"),
        }
    }
    run(&command)
}
