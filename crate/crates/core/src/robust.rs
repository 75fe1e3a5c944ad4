//! Huber M-type estimators of spectral densities.
//!
//! The plain and windowed periodograms are least-squares fits of the
//! vectorised (windowed) sample covariance onto `G = [vec(v_ℓ v_ℓᵀ)]`.
//! Swapping the squared loss for the Huber loss and solving by
//! iteratively reweighted least squares gives estimates that tolerate a
//! few corrupted nodes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::{DensityKind, SpectralDensity};
use crate::error::{invalid, Error, Result};
use crate::estimators::{design_matrix, WindowBank};
use crate::graph::SpectralBasis;
use crate::processes::{check_pair, SignalEnsemble};

const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuberConfig {
    pub c: f64,
    pub max_iter: usize,
    /// Stop once `‖p_{k+1} - p_k‖ / ‖p_k‖` drops below this.
    pub tol: f64,
    pub weight_floor: f64,
}

impl Default for HuberConfig {
    fn default() -> Self {
        Self { c: 0.25, max_iter: 200, tol: 1e-8, weight_floor: 1e-8 }
    }
}

impl HuberConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", format!("must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor <= 1.0) {
            return Err(invalid("weight_floor", format!("must lie in (0, 1], got {}", self.weight_floor)));
        }
        Ok(())
    }
}

/// `t²` for `|t| ≤ c`, `2c(|t| - c/2)` beyond.
pub fn huber_loss(t: f64, c: f64) -> f64 {
    let a = t.abs();
    if a <= c {
        t * t
    } else {
        2.0 * c * (a - 0.5 * c)
    }
}

/// Output of an IRLS run. `objective` holds the loss at the initial point
/// and after every accepted iteration; it never increases.
#[derive(Debug, Clone)]
pub struct IrlsResult {
    pub estimate: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: Vec<f64>,
}

fn objective(g: &DMatrix<f64>, s: &DVector<f64>, p: &DVector<f64>, c: f64) -> f64 {
    (s - g * p).iter().map(|&r| huber_loss(r, c)).sum()
}

/// Minimises `Σ_i ρ_c((s - G p)_i)` starting from `init`.
///
/// Each step solves `GᵀWG p = GᵀW s` with `w_i = max(min(1, c/|r_i|), floor)`.
/// A step that would raise the objective is halved back towards the
/// previous iterate; if no halving helps the run stops there.
pub fn irls_solve(g: &DMatrix<f64>, s: &DVector<f64>, init: &DVector<f64>, cfg: &HuberConfig) -> Result<IrlsResult> {
    cfg.validate()?;
    if g.nrows() != s.len() {
        return Err(Error::DimensionMismatch { expected: g.nrows(), got: s.len() });
    }
    if g.ncols() != init.len() {
        return Err(Error::DimensionMismatch { expected: g.ncols(), got: init.len() });
    }
    if init.iter().chain(s.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("init", "non-finite starting point or data"));
    }
    let mut p = init.clone();
    let mut obj = objective(g, s, &p, cfg.c);
    let mut history = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let r = s - g * &p;
        let w = r.map(|ri| {
            let a = ri.abs();
            let base = if a <= cfg.c { 1.0 } else { cfg.c / a };
            base.max(cfg.weight_floor)
        });
        let mut wg = g.clone();
        for (mut row, &wi) in wg.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        let lhs = g.tr_mul(&wg);
        let rhs = wg.tr_mul(s);
        let target = match lhs.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => lhs
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Degenerate("singular reweighted normal equations".into()))?,
        };

        let mut step = &target - &p;
        let mut next = &p + &step;
        let mut next_obj = objective(g, s, &next, cfg.c);
        let mut halvings = 0;
        while next_obj > obj && halvings < MAX_HALVINGS {
            step *= 0.5;
            next = &p + &step;
            next_obj = objective(g, s, &next, cfg.c);
            halvings += 1;
        }
        if next_obj > obj {
            // no descent along the reweighted direction: p is optimal to rounding
            converged = true;
            break;
        }
        assert!(next_obj <= obj, "IRLS objective increased");
        let change = step.norm() / p.norm().max(f64::MIN_POSITIVE);
        p = next;
        obj = next_obj;
        history.push(obj);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(IrlsResult { estimate: p, converged, iterations, objective: history })
}

/// Complex data: real and imaginary parts are fitted independently, so
/// the loss is `Σ ρ_c(Re r_i) + ρ_c(Im r_i)`.
pub fn irls_solve_complex(
    g: &DMatrix<f64>,
    s: &DVector<Complex64>,
    init: &DVector<Complex64>,
    cfg: &HuberConfig,
) -> Result<(DVector<Complex64>, IrlsResult, IrlsResult)> {
    let re = irls_solve(g, &s.map(|v| v.re), &init.map(|v| v.re), cfg)?;
    let im = irls_solve(g, &s.map(|v| v.im), &init.map(|v| v.im), cfg)?;
    let z = re.estimate.zip_map(&im.estimate, Complex64::new);
    Ok((z, re, im))
}

/// Robust density estimate with its solver diagnostics.
#[derive(Debug, Clone)]
pub struct RobustEstimate {
    pub density: SpectralDensity,
    /// The non-robust least-squares estimate used as the starting point.
    pub initial: SpectralDensity,
    pub converged: bool,
    pub iterations: usize,
    pub objective: Vec<f64>,
}

/// `(1/R) Σ_r x_r y_rᵀ`, or with a bank `(1/M) Σ_m (1/R) Σ_r (w_m∘x_r)(w_m∘y_r)ᵀ`.
pub fn sample_covariance_matrix(
    ex: &SignalEnsemble,
    ey: &SignalEnsemble,
    bank: Option<&WindowBank>,
) -> Result<DMatrix<f64>> {
    check_pair(ex, ey)?;
    let n = ex.n();
    let sigma = ex.data().tr_mul(ey.data()) / ex.realizations() as f64;
    let Some(bank) = bank else { return Ok(sigma) };
    if bank.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: bank.n() });
    }
    // (w∘x)(w∘y)ᵀ = (x yᵀ) ∘ (w wᵀ), so average the window outer products once
    let mut omega = DMatrix::<f64>::zeros(n, n);
    for w in bank.windows() {
        omega.ger(1.0, w, w, 1.0);
    }
    omega /= bank.len() as f64;
    Ok(sigma.component_mul(&omega))
}

/// Huber M-type GCSD estimate; `bank` selects the windowed-average form.
pub fn m_type_csd(
    basis: &SpectralBasis,
    ex: &SignalEnsemble,
    ey: &SignalEnsemble,
    bank: Option<&WindowBank>,
    cfg: &HuberConfig,
) -> Result<RobustEstimate> {
    basis.check_signal(ex.n())?;
    let sigma = sample_covariance_matrix(ex, ey, bank)?;
    let g = design_matrix(basis);
    let s = DVector::from_column_slice(sigma.as_slice());
    let init = g.tr_mul(&s);
    let res = irls_solve(&g, &s, &init, cfg)?;
    let kind = if ex.data() == ey.data() { DensityKind::Psd } else { DensityKind::Csd };
    let freqs: Vec<f64> = basis.eigenvalues().iter().copied().collect();
    let to_c = |v: &DVector<f64>| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    // robust PSD estimates can dip below zero, so the kind checks are skipped
    let density = SpectralDensity::unchecked(freqs.clone(), to_c(&res.estimate), kind)?;
    let initial = SpectralDensity::unchecked(freqs, to_c(&init), kind)?;
    Ok(RobustEstimate {
        density,
        initial,
        converged: res.converged,
        iterations: res.iterations,
        objective: res.objective,
    })
}

/// Huber M-type GPSD estimate.
pub fn m_type_psd(
    basis: &SpectralBasis,
    ex: &SignalEnsemble,
    bank: Option<&WindowBank>,
    cfg: &HuberConfig,
) -> Result<RobustEstimate> {
    m_type_csd(basis, ex, ex, bank, cfg)
}

/// Copy of `x` with entry `node` set to `value`.
pub fn inject_outlier(x: &DVector<f64>, node: usize, value: f64) -> Result<DVector<f64>> {
    if node >= x.len() {
        return Err(Error::IndexOutOfRange { index: node, len: x.len() });
    }
    let mut y = x.clone();
    y[node] = value;
    Ok(y)
}
