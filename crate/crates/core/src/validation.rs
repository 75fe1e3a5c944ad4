//! Monte-Carlo checks of estimator moments against their closed forms, and
//! the shared-frequency detection experiment.
//!
//! Trials run in parallel on per-trial seeds derived from the master seed,
//! and are reduced in trial order, so a report depends only on its inputs.
//! Every theoretical column comes from [`crate::estimators`] or
//! [`crate::processes`].

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::density::SpectralDensity;
use crate::error::{invalid, Error, Result};
use crate::estimators::{
    cross_periodogram, periodogram, theoretical_variance, windowed_average_cross_periodogram, windowed_expectation,
    windowed_variance_trace, wft_estimator, random_window_bank, EstimatorForm, WftOptions, WindowBank,
};
use crate::filters::FilterKernel;
use crate::graph::SpectralBasis;
use crate::processes::{generate_jws_pair, population_densities, substream_seed, InputCoupling, SignalEnsemble};

/// Mean gates accept deviations up to this many standard errors.
pub const MEAN_GATE_SE: f64 = 5.0;
/// Accepted range of empirical over theoretical variance.
pub const VARIANCE_RATIO_GATE: (f64, f64) = (0.7, 1.4);
/// Standard errors below this are treated as exactly-determined entries.
pub const SE_FLOOR: f64 = 1e-10;

pub const MIN_TRIALS_MOMENTS: usize = 100;
pub const MIN_TRIALS_BIAS: usize = 500;
pub const MIN_TRIALS_TRACE: usize = 2000;
pub const MAX_NODES_TRACE: usize = 10;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GateResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub name: String,
    pub config: serde_json::Value,
    pub trials: usize,
    pub frequencies: Vec<f64>,
    pub empirical_mean: Vec<f64>,
    pub theoretical_mean: Vec<f64>,
    pub empirical_variance: Vec<f64>,
    /// Per-frequency closed form when one exists; empty for trace-only checks.
    pub theoretical_variance: Vec<f64>,
    /// Fraction of frequencies whose mean lies within [`MEAN_GATE_SE`] standard errors.
    pub mean_within_gate: f64,
    pub max_mean_deviation_se: f64,
    pub max_relative_deviation: f64,
    pub variance_ratio: Vec<f64>,
    pub empirical_trace: Option<f64>,
    pub theoretical_trace: Option<f64>,
    pub mean_gate_se: f64,
    pub variance_ratio_gate: (f64, f64),
    pub gates: Vec<GateResult>,
    pub wall_clock_s: f64,
}

impl McReport {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialisation cannot fail")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} ({} trials, {:.2}s)\n", self.name, self.trials, self.wall_clock_s);
        for g in &self.gates {
            out.push_str(&format!("  [{}] {}: {}\n", if g.passed { "PASS" } else { "FAIL" }, g.name, g.detail));
        }
        out
    }

    /// Equality of everything except the wall-clock time.
    pub fn same_results(&self, other: &Self) -> bool {
        let strip = |r: &Self| {
            let mut v = serde_json::to_value(r).expect("report serialises");
            v.as_object_mut().map(|o| o.remove("wall_clock_s"));
            v
        };
        strip(self) == strip(other)
    }
}

/// Per-frequency sample mean and unbiased sample variance of real parts,
/// accumulated in trial order.
fn moments(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let t = samples.len() as f64;
    let n = samples[0].len();
    let mut mean = vec![0.0; n];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t);
    let mut var = vec![0.0; n];
    for s in samples {
        for ((acc, v), m) in var.iter_mut().zip(s).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= t - 1.0);
    (mean, var)
}

struct MeanGate {
    within: f64,
    max_se: f64,
    max_rel: f64,
}

fn mean_gate(mean: &[f64], truth: &[f64], se: &[f64]) -> MeanGate {
    let mut within = 0usize;
    let mut max_se: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let scale = truth.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    for ((m, t), s) in mean.iter().zip(truth).zip(se) {
        let dev = (m - t).abs();
        let z = dev / s.max(SE_FLOOR);
        if z <= MEAN_GATE_SE {
            within += 1;
        }
        max_se = max_se.max(z);
        max_rel = max_rel.max(dev / scale);
    }
    MeanGate { within: within as f64 / mean.len() as f64, max_se, max_rel }
}

fn in_ratio_gate(r: f64) -> bool {
    (VARIANCE_RATIO_GATE.0..=VARIANCE_RATIO_GATE.1).contains(&r)
}

fn require_trials(trials: usize, min: usize) -> Result<()> {
    if trials < min {
        return Err(invalid("trials", format!("need at least {min}, got {trials}")));
    }
    Ok(())
}

/// Empirical moments of the cross-periodogram over `trials` independent
/// ensembles of `R` realizations, against the unbiasedness and variance
/// closed forms.
///
/// Gates: mean within 5 SE at every frequency, and the variance ratio in
/// [0.7, 1.4] wherever the theoretical variance is not negligible.
pub fn mc_cross_periodogram_moments(
    basis: &SpectralBasis,
    k1: &FilterKernel,
    k2: &FilterKernel,
    realizations: usize,
    trials: usize,
    seed: u64,
) -> Result<McReport> {
    require_trials(trials, MIN_TRIALS_MOMENTS)?;
    let start = Instant::now();
    let pop = population_densities(basis, k1, k2, InputCoupling::Shared)?;
    let truth = pop.p_xy.re();
    let theo_var: Vec<f64> = theoretical_variance(&pop.p_x, &pop.p_y, &pop.p_xy, realizations)?.iter().copied().collect();

    let samples = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (ex, ey) = generate_jws_pair(basis, k1, k2, realizations, substream_seed(seed, t as u64))?;
            Ok(cross_periodogram(basis, &ex, &ey, EstimatorForm::Periodogram)?.re())
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, var) = moments(&samples);
    let se: Vec<f64> = theo_var.iter().map(|v| (v / trials as f64).sqrt()).collect();
    let mg = mean_gate(&mean, &truth, &se);

    let vmax = theo_var.iter().fold(0.0f64, |a, &b| a.max(b));
    let ratio: Vec<f64> = var
        .iter()
        .zip(&theo_var)
        .map(|(e, t)| if *t > 1e-12 * vmax { e / t } else { f64::NAN })
        .collect();
    let checked: Vec<f64> = ratio.iter().copied().filter(|r| !r.is_nan()).collect();
    let (rmin, rmax) = checked.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));

    let gates = vec![
        GateResult {
            name: "mean".into(),
            passed: mg.within == 1.0,
            detail: format!("{:.1}% within {MEAN_GATE_SE} SE, worst {:.2} SE", 100.0 * mg.within, mg.max_se),
        },
        GateResult {
            name: "variance_ratio".into(),
            passed: checked.iter().all(|&r| in_ratio_gate(r)),
            detail: format!("ratios in [{rmin:.3}, {rmax:.3}] over {} frequencies", checked.len()),
        },
    ];
    Ok(McReport {
        name: "cross_periodogram_moments".into(),
        config: serde_json::json!({
            "k1": k1.name(), "k2": k2.name(), "R": realizations, "trials": trials, "seed": seed, "n": basis.n(),
        }),
        trials,
        frequencies: pop.p_xy.frequencies().to_vec(),
        empirical_mean: mean,
        theoretical_mean: truth,
        empirical_variance: var,
        theoretical_variance: theo_var,
        mean_within_gate: mg.within,
        max_mean_deviation_se: mg.max_se,
        max_relative_deviation: mg.max_rel,
        variance_ratio: ratio,
        empirical_trace: None,
        theoretical_trace: None,
        mean_gate_se: MEAN_GATE_SE,
        variance_ratio_gate: VARIANCE_RATIO_GATE,
        gates,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

fn windowed_samples(
    basis: &SpectralBasis,
    bank: &WindowBank,
    k1: &FilterKernel,
    k2: &FilterKernel,
    trials: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let (ex, ey) = generate_jws_pair(basis, k1, k2, 1, substream_seed(seed, t as u64))?;
            Ok(windowed_average_cross_periodogram(basis, &ex.realization(0), &ey.realization(0), bank)?.re())
        })
        .collect()
}

/// Mean of the windowed-average cross-periodogram against
/// `(1/M) Σ (W̃_m ∘ W̃_m) p_XY`, with empirical standard errors.
pub fn mc_windowed_bias(
    basis: &SpectralBasis,
    bank: &WindowBank,
    k1: &FilterKernel,
    k2: &FilterKernel,
    trials: usize,
    seed: u64,
) -> Result<McReport> {
    require_trials(trials, MIN_TRIALS_BIAS)?;
    let start = Instant::now();
    let pop = population_densities(basis, k1, k2, InputCoupling::Shared)?;
    let expected = windowed_expectation(basis, bank, &pop.p_xy)?.re();
    let samples = windowed_samples(basis, bank, k1, k2, trials, seed)?;
    let (mean, var) = moments(&samples);
    let se: Vec<f64> = var.iter().map(|v| (v / trials as f64).sqrt()).collect();
    let mg = mean_gate(&mean, &expected, &se);
    let gates = vec![GateResult {
        name: "windowed_mean".into(),
        passed: mg.within == 1.0,
        detail: format!("{:.1}% within {MEAN_GATE_SE} SE, worst {:.2} SE", 100.0 * mg.within, mg.max_se),
    }];
    Ok(McReport {
        name: "windowed_bias".into(),
        config: serde_json::json!({
            "k1": k1.name(), "k2": k2.name(), "M": bank.len(), "trials": trials, "seed": seed, "n": basis.n(),
        }),
        trials,
        frequencies: pop.p_xy.frequencies().to_vec(),
        empirical_mean: mean,
        theoretical_mean: expected,
        empirical_variance: var,
        theoretical_variance: Vec::new(),
        mean_within_gate: mg.within,
        max_mean_deviation_se: mg.max_se,
        max_relative_deviation: mg.max_rel,
        variance_ratio: Vec::new(),
        empirical_trace: None,
        theoretical_trace: None,
        mean_gate_se: MEAN_GATE_SE,
        variance_ratio_gate: VARIANCE_RATIO_GATE,
        gates,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Summed per-frequency sample variance of the windowed-average estimator
/// against the closed-form trace.
pub fn mc_windowed_variance_trace(
    basis: &SpectralBasis,
    bank: &WindowBank,
    k1: &FilterKernel,
    k2: &FilterKernel,
    trials: usize,
    seed: u64,
) -> Result<McReport> {
    require_trials(trials, MIN_TRIALS_TRACE)?;
    if basis.n() > MAX_NODES_TRACE {
        return Err(invalid("n", format!("trace check supports n <= {MAX_NODES_TRACE}, got {}", basis.n())));
    }
    let start = Instant::now();
    let pop = population_densities(basis, k1, k2, InputCoupling::Shared)?;
    let theo = windowed_variance_trace(basis, bank, &pop.p_x, &pop.p_y, &pop.p_xy)?;
    let expected = windowed_expectation(basis, bank, &pop.p_xy)?.re();
    let samples = windowed_samples(basis, bank, k1, k2, trials, seed)?;
    let (mean, var) = moments(&samples);
    let emp: f64 = var.iter().sum();
    let ratio = emp / theo;
    let gates = vec![GateResult {
        name: "trace_ratio".into(),
        passed: in_ratio_gate(ratio),
        detail: format!("empirical {emp:.6e} / closed form {theo:.6e} = {ratio:.4}"),
    }];
    Ok(McReport {
        name: "windowed_variance_trace".into(),
        config: serde_json::json!({
            "k1": k1.name(), "k2": k2.name(), "M": bank.len(), "trials": trials, "seed": seed, "n": basis.n(),
        }),
        trials,
        frequencies: pop.p_xy.frequencies().to_vec(),
        empirical_mean: mean,
        theoretical_mean: expected,
        empirical_variance: var,
        theoretical_variance: Vec::new(),
        mean_within_gate: f64::NAN,
        max_mean_deviation_se: f64::NAN,
        max_relative_deviation: (ratio - 1.0).abs(),
        variance_ratio: vec![ratio],
        empirical_trace: Some(emp),
        theoretical_trace: Some(theo),
        mean_gate_se: MEAN_GATE_SE,
        variance_ratio_gate: VARIANCE_RATIO_GATE,
        gates,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Mean squared modulus of `est - truth` over the grid.
pub fn mse(est: &SpectralDensity, truth: &SpectralDensity) -> Result<f64> {
    est.check_grid(truth)?;
    if est.is_empty() {
        return Err(invalid("est", "empty density"));
    }
    let s: f64 = est.values().iter().zip(truth.values()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(s / est.len() as f64)
}

/// Cross-periodogram MSE against the true GCSD for each `R`, using the
/// first `R` realizations of one seeded stream.
pub fn mse_by_realizations(
    basis: &SpectralBasis,
    k1: &FilterKernel,
    k2: &FilterKernel,
    realizations: &[usize],
    seed: u64,
) -> Result<Vec<f64>> {
    let rmax = realizations.iter().copied().max().ok_or_else(|| invalid("R", "no realization counts given"))?;
    let truth = population_densities(basis, k1, k2, InputCoupling::Shared)?.p_xy;
    let (ex, ey) = generate_jws_pair(basis, k1, k2, rmax, seed)?;
    realizations
        .iter()
        .map(|&r| {
            if r == 0 {
                return Err(invalid("R", "must be at least 1"));
            }
            let head = |e: &SignalEnsemble| SignalEnsemble::new(e.data().rows(0, r).into_owned(), e.seed());
            let est = cross_periodogram(basis, &head(&ex)?, &head(&ey)?, EstimatorForm::Periodogram)?;
            mse(&est, &truth)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SharedEstimator {
    WindowedAverage { m: usize, noise_scale: f64, seed: u64 },
    Wft { k: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct SharedComponentReport {
    pub estimator: SharedEstimator,
    /// Index into the estimate's grid that represents the shared frequency.
    pub target: usize,
    pub gcsd_argmax: usize,
    pub psd_x_argmax: usize,
    pub psd_y_argmax: usize,
    pub local_max_at_target: bool,
    pub global_max_at_target: bool,
    pub psd_avoids_target: bool,
    pub gcsd: SpectralDensity,
    pub psd_x: SpectralDensity,
    pub psd_y: SpectralDensity,
}

impl SharedComponentReport {
    /// Global `|GCSD|` peak at the target while neither GPSD peaks there.
    pub fn detected(&self) -> bool {
        self.global_max_at_target && self.psd_avoids_target
    }
}

/// Two signals sharing one eigenvector component,
/// `x = a_s v_s + a_p v_x` and `y = a_s v_s + a_p v_y`, run through one
/// estimator to see whether the cross estimate singles out `λ_s`.
pub fn shared_component_experiment(
    basis: &SpectralBasis,
    shift: Option<&crate::graph::ShiftOperator>,
    indices: (usize, usize, usize),
    amp_shared: f64,
    amp_private: f64,
    estimator: SharedEstimator,
) -> Result<SharedComponentReport> {
    let (i_s, i_x, i_y) = indices;
    if i_s == i_x || i_s == i_y || i_x == i_y {
        return Err(invalid("indices", format!("eigenvector indices must be distinct, got {indices:?}")));
    }
    for i in [i_s, i_x, i_y] {
        if i >= basis.n() {
            return Err(Error::IndexOutOfRange { index: i, len: basis.n() });
        }
    }
    let vs = basis.eigenvector(i_s)?;
    let x = &vs * amp_shared + basis.eigenvector(i_x)? * amp_private;
    let y = &vs * amp_shared + basis.eigenvector(i_y)? * amp_private;

    let (gcsd, psd_x, psd_y, target) = match estimator {
        SharedEstimator::WindowedAverage { m, noise_scale, seed } => {
            let bank = random_window_bank(basis, m, noise_scale, seed)?;
            (
                windowed_average_cross_periodogram(basis, &x, &y, &bank)?,
                windowed_average_cross_periodogram(basis, &x, &x, &bank)?,
                windowed_average_cross_periodogram(basis, &y, &y, &bank)?,
                i_s,
            )
        }
        SharedEstimator::Wft { k } => {
            let opts = WftOptions::new(k);
            let gcsd = wft_estimator(basis, shift, &x, Some(&y), &opts)?;
            let lambda = basis.eigenvalues()[i_s];
            let target = nearest(gcsd.frequencies(), lambda);
            (gcsd, wft_estimator(basis, shift, &x, None, &opts)?, wft_estimator(basis, shift, &y, None, &opts)?, target)
        }
    };
    let mags = gcsd.abs();
    let gcsd_argmax = gcsd.argmax_abs().expect("nonempty grid");
    let psd_x_argmax = psd_x.argmax_re().expect("nonempty grid");
    let psd_y_argmax = psd_y.argmax_re().expect("nonempty grid");
    let left = target.checked_sub(1).map_or(true, |j| mags[target] > mags[j]);
    let right = mags.get(target + 1).map_or(true, |&v| mags[target] > v);
    Ok(SharedComponentReport {
        estimator,
        target,
        gcsd_argmax,
        psd_x_argmax,
        psd_y_argmax,
        local_max_at_target: left && right && mags[target] > 0.0,
        global_max_at_target: gcsd_argmax == target && mags[target] > 0.0,
        psd_avoids_target: psd_x_argmax != target && psd_y_argmax != target,
        gcsd,
        psd_x,
        psd_y,
    })
}

fn nearest(grid: &[f64], value: f64) -> usize {
    let mut best = 0;
    for (i, g) in grid.iter().enumerate() {
        if (g - value).abs() < (grid[best] - value).abs() {
            best = i;
        }
    }
    best
}

/// Self-case MSE of the graph periodogram averaged over trials, divided by
/// its closed form `(2/R)‖p‖² / N`.
pub fn periodogram_mse_ratio(
    basis: &SpectralBasis,
    kernel: &FilterKernel,
    realizations: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    require_trials(trials, MIN_TRIALS_MOMENTS)?;
    let pop = population_densities(basis, kernel, kernel, InputCoupling::Shared)?;
    let theo: f64 = theoretical_variance(&pop.p_x, &pop.p_x, &pop.p_x, realizations)?.mean();
    let errs = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (ex, _) = generate_jws_pair(basis, kernel, kernel, realizations, substream_seed(seed, t as u64))?;
            mse(&periodogram(basis, &ex)?, &pop.p_x)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(errs.iter().sum::<f64>() / trials as f64 / theo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityKind;
    use crate::filters::{builtin_kernel, BuiltinKernel};
    use crate::graph::{eigendecompose, karate_club, laplacian, Graph};

    fn karate_basis() -> SpectralBasis {
        eigendecompose(&laplacian(&karate_club())).unwrap()
    }

    fn ring(n: usize) -> SpectralBasis {
        let g = Graph::new(n, (0..n).map(|i| (i, (i + 1) % n, 1.0 + 0.1 * i as f64))).unwrap();
        eigendecompose(&laplacian(&g)).unwrap()
    }

    #[test]
    fn mse_cases() {
        let f = vec![0.0, 1.0, 2.0];
        let a = SpectralDensity::from_real(f.clone(), vec![1.0, 2.0, 3.0], DensityKind::Csd).unwrap();
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = SpectralDensity::from_real(f, vec![1.5, 2.5, 3.5], DensityKind::Csd).unwrap();
        assert!((mse(&b, &a).unwrap() - 0.25).abs() < 1e-15);
        let c = SpectralDensity::from_real(vec![0.0, 1.0, 3.0], vec![0.0; 3], DensityKind::Csd).unwrap();
        assert!(matches!(mse(&a, &c), Err(Error::GridMismatch)));
    }

    #[test]
    fn moments_self_case_and_r_scaling() {
        let b = ring(8);
        let heat = builtin_kernel(BuiltinKernel::Heat).unwrap();
        let r1 = mc_cross_periodogram_moments(&b, &heat, &heat, 1, 2000, 3).unwrap();
        assert!(r1.passed(), "{}", r1.to_text());
        let r4 = mc_cross_periodogram_moments(&b, &heat, &heat, 4, 2000, 3).unwrap();
        assert!(r4.passed(), "{}", r4.to_text());
        for (a, c) in r4.empirical_variance.iter().zip(&r1.empirical_variance) {
            let ratio = a / c * 4.0;
            assert!(in_ratio_gate(ratio), "{ratio}");
        }
        // self case variance is 2p²
        for (v, p) in r1.theoretical_variance.iter().zip(&r1.theoretical_mean) {
            assert!((v - 2.0 * p * p).abs() < 1e-15);
        }
        assert!(mc_cross_periodogram_moments(&b, &heat, &heat, 1, 10, 3).is_err());
    }

    #[test]
    fn reports_are_seed_deterministic() {
        let b = ring(6);
        let mex = builtin_kernel(BuiltinKernel::Mex).unwrap();
        let heat = builtin_kernel(BuiltinKernel::Heat).unwrap();
        let a = mc_cross_periodogram_moments(&b, &mex, &heat, 2, 200, 9).unwrap();
        let c = mc_cross_periodogram_moments(&b, &mex, &heat, 2, 200, 9).unwrap();
        assert!(a.same_results(&c));
        let d = mc_cross_periodogram_moments(&b, &mex, &heat, 2, 200, 10).unwrap();
        assert!(!a.same_results(&d));
        assert!(a.to_json().contains("\"variance_ratio_gate\""));
    }

    #[test]
    fn windowed_bias_identity_and_adversarial() {
        let b = ring(8);
        let heat = builtin_kernel(BuiltinKernel::Heat).unwrap();
        let ds = builtin_kernel(BuiltinKernel::Ds).unwrap();
        let id = WindowBank::identity(8, 1).unwrap();
        let r = mc_windowed_bias(&b, &id, &heat, &ds, 1000, 1).unwrap();
        let truth = population_densities(&b, &heat, &ds, InputCoupling::Shared).unwrap().p_xy.re();
        for (a, c) in r.theoretical_mean.iter().zip(&truth) {
            assert!((a - c).abs() < 1e-14);
        }
        assert!(r.passed(), "{}", r.to_text());
        let rough = random_window_bank(&b, 5, 2.0, 4).unwrap();
        let r = mc_windowed_bias(&b, &rough, &heat, &ds, 1000, 2).unwrap();
        assert!(r.passed(), "{}", r.to_text());
    }

    #[test]
    fn windowed_trace_collapse() {
        let b = ring(6);
        let heat = builtin_kernel(BuiltinKernel::Heat).unwrap();
        let mex = builtin_kernel(BuiltinKernel::Mex).unwrap();
        let id = WindowBank::identity(6, 1).unwrap();
        let r = mc_windowed_variance_trace(&b, &id, &heat, &mex, 2000, 5).unwrap();
        let pop = population_densities(&b, &heat, &mex, InputCoupling::Shared).unwrap();
        let tv: f64 = theoretical_variance(&pop.p_x, &pop.p_y, &pop.p_xy, 1).unwrap().sum();
        assert!((r.theoretical_trace.unwrap() - tv).abs() < 1e-12);
        assert!(r.passed(), "{}", r.to_text());
        assert!(mc_windowed_variance_trace(&karate_basis(), &WindowBank::identity(34, 1).unwrap(), &heat, &mex, 2000, 5).is_err());
    }

    #[test]
    fn r_scaling_reduces_mse() {
        let b = karate_basis();
        let mex = builtin_kernel(BuiltinKernel::Mex).unwrap();
        let heat = builtin_kernel(BuiltinKernel::Heat).unwrap();
        let m = mse_by_realizations(&b, &mex, &heat, &[1, 10, 1000], 4).unwrap();
        assert!(m[0] > m[1] && m[1] > m[2], "{m:?}");
    }

    #[test]
    fn shared_component_karate() {
        let b = karate_basis();
        let est = SharedEstimator::WindowedAverage { m: 100, noise_scale: 0.1, seed: 2 };
        let r = shared_component_experiment(&b, None, (19, 29, 9), 5.0, 20.0, est).unwrap();
        assert_eq!(r.target, 19);
        assert!(r.psd_avoids_target);
        let none = shared_component_experiment(&b, None, (19, 29, 9), 0.0, 20.0, est).unwrap();
        assert!(!none.global_max_at_target);
        assert!(shared_component_experiment(&b, None, (19, 19, 9), 5.0, 20.0, est).is_err());
        assert!(shared_component_experiment(&b, None, (19, 40, 9), 5.0, 20.0, est).is_err());
    }

    #[test]
    fn periodogram_mse_matches_closed_form() {
        let b = karate_basis();
        let heat = builtin_kernel(BuiltinKernel::Heat).unwrap();
        let ratio = periodogram_mse_ratio(&b, &heat, 3, 2000, 6).unwrap();
        assert!(in_ratio_gate(ratio), "{ratio}");
    }
}
