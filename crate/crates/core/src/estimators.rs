//! Nonparametric estimators of graph power and cross spectral densities.
//!
//! Every estimator here is a pure function of its inputs. Window banks and
//! WFT grid points are processed in parallel, but results are always
//! combined in index order so the output does not depend on scheduling.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensityKind, SpectralDensity};
use crate::error::{invalid, Error, Result};
use crate::filters::{chebyshev_apply, chebyshev_fit, FilterKernel};
use crate::graph::{ShiftOperator, SpectralBasis};
use crate::processes::{check_pair, SignalEnsemble};

/// Relative tolerance on `‖w‖² = N` for analysis windows.
pub const WINDOW_NORM_TOL: f64 = 1e-8;
/// Tolerance on `GᵀG = I` in the least-squares form.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;
pub const DEFAULT_NOISE_SCALE: f64 = 0.1;
pub const DEFAULT_COHERENCE_FLOOR_REL: f64 = 1e-12;
pub const COHERENCE_CLIP_TOL: f64 = 1e-10;
const MAX_WINDOW_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorForm {
    /// `(1/R) Σ (Vᵀx_r) ∘ (Vᵀy_r)`.
    Periodogram,
    /// `diag(Vᵀ Σ̂ V)`.
    Correlogram,
    /// `(GᵀG)⁻¹ Gᵀ vec(Σ̂)` with `G = [vec(v₁v₁ᵀ) | … | vec(v_Nv_Nᵀ)]`.
    LeastSquares,
}

fn eigen_grid(basis: &SpectralBasis) -> Vec<f64> {
    basis.eigenvalues().iter().copied().collect()
}

fn real_density(basis: &SpectralBasis, values: &DVector<f64>, self_case: bool) -> Result<SpectralDensity> {
    let kind = if self_case { DensityKind::Psd } else { DensityKind::Csd };
    SpectralDensity::new(eigen_grid(basis), values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), kind)
}

/// GCSD estimate from paired ensembles. Passing the same ensemble twice
/// gives the graph periodogram, tagged as a PSD.
pub fn cross_periodogram(
    basis: &SpectralBasis,
    ex: &SignalEnsemble,
    ey: &SignalEnsemble,
    form: EstimatorForm,
) -> Result<SpectralDensity> {
    check_pair(ex, ey)?;
    basis.check_signal(ex.n())?;
    let values = match form {
        EstimatorForm::Periodogram => {
            let v = basis.eigenvectors();
            let zx = ex.data() * v;
            let zy = ey.data() * v;
            let r = ex.realizations() as f64;
            DVector::from_iterator(ex.n(), (0..ex.n()).map(|l| zx.column(l).dot(&zy.column(l)) / r))
        }
        EstimatorForm::Correlogram => {
            let sigma = covariance(ex, ey);
            let v = basis.eigenvectors();
            let sv = &sigma * v;
            DVector::from_iterator(ex.n(), (0..ex.n()).map(|l| v.column(l).dot(&sv.column(l))))
        }
        EstimatorForm::LeastSquares => least_squares(basis, &covariance(ex, ey), false)?,
    };
    real_density(basis, &values, ex.data() == ey.data())
}

/// Graph periodogram `(1/R) Σ |Vᵀx_r|²`.
pub fn periodogram(basis: &SpectralBasis, ex: &SignalEnsemble) -> Result<SpectralDensity> {
    cross_periodogram(basis, ex, ex, EstimatorForm::Periodogram)
}

fn covariance(ex: &SignalEnsemble, ey: &SignalEnsemble) -> DMatrix<f64> {
    ex.data().tr_mul(ey.data()) / ex.realizations() as f64
}

/// `G = [vec(v₁v₁ᵀ) | … | vec(v_Nv_Nᵀ)]`, `N² × N`, column-major `vec`.
pub fn design_matrix(basis: &SpectralBasis) -> DMatrix<f64> {
    let n = basis.n();
    let v = basis.eigenvectors();
    DMatrix::from_fn(n * n, n, |row, l| v[(row % n, l)] * v[(row / n, l)])
}

/// Least-squares fit of `vec(sigma)` onto the columns of [`design_matrix`].
///
/// By default asserts `GᵀG = I` and returns `Gᵀ vec(sigma)`; with
/// `general_solve` the normal equations are solved instead.
pub fn least_squares(basis: &SpectralBasis, sigma: &DMatrix<f64>, general_solve: bool) -> Result<DVector<f64>> {
    let n = basis.n();
    if sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: sigma.nrows() });
    }
    let g = design_matrix(basis);
    let gtg = g.tr_mul(&g);
    let s = DVector::from_column_slice(sigma.as_slice());
    let rhs = g.tr_mul(&s);
    if general_solve {
        return gtg
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::Degenerate("GᵀG is not positive definite".into()));
    }
    let dev = (gtg - DMatrix::<f64>::identity(n, n)).amax();
    if dev > ORTHONORMALITY_TOL {
        return Err(Error::Degenerate(format!("GᵀG deviates from I by {dev:e}")));
    }
    Ok(rhs)
}

/// Bank of analysis windows `w_m` with `‖w_m‖² = N`.
#[derive(Debug, Clone)]
pub struct WindowBank {
    windows: Vec<DVector<f64>>,
    duals: Option<Vec<DMatrix<f64>>>,
}

impl WindowBank {
    pub fn new(windows: Vec<DVector<f64>>) -> Result<Self> {
        if windows.is_empty() {
            return Err(invalid("M", "window bank is empty"));
        }
        let n = windows[0].len();
        for (index, w) in windows.iter().enumerate() {
            if w.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: w.len() });
            }
            check_window(w).map_err(|e| match e {
                Error::WindowNorm { norm_sq, expected, .. } => Error::WindowNorm { index, norm_sq, expected },
                other => other,
            })?;
        }
        Ok(Self { windows, duals: None })
    }

    /// `M` copies of the all-ones window.
    pub fn identity(n: usize, m: usize) -> Result<Self> {
        Self::new(vec![DVector::from_element(n, 1.0); m])
    }

    /// Caches `W̃_m = Vᵀ diag(w_m) V`.
    pub fn with_duals(mut self, basis: &SpectralBasis) -> Result<Self> {
        basis.check_signal(self.n())?;
        self.duals = Some(self.windows.par_iter().map(|w| window_dual(basis, w)).collect());
        Ok(self)
    }

    pub fn windows(&self) -> &[DVector<f64>] {
        &self.windows
    }

    pub fn duals(&self) -> Option<&[DMatrix<f64>]> {
        self.duals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn n(&self) -> usize {
        self.windows[0].len()
    }

    fn duals_for(&self, basis: &SpectralBasis) -> Result<Vec<DMatrix<f64>>> {
        basis.check_signal(self.n())?;
        match &self.duals {
            Some(d) => Ok(d.clone()),
            None => Ok(self.windows.par_iter().map(|w| window_dual(basis, w)).collect()),
        }
    }
}

fn check_window(w: &DVector<f64>) -> Result<()> {
    let n = w.len() as f64;
    let norm_sq = w.norm_squared();
    if (norm_sq - n).abs() > WINDOW_NORM_TOL * n {
        return Err(Error::WindowNorm { index: 0, norm_sq, expected: n });
    }
    Ok(())
}

/// `W̃ = Vᵀ diag(w) V`.
pub fn window_dual(basis: &SpectralBasis, w: &DVector<f64>) -> DMatrix<f64> {
    let v = basis.eigenvectors();
    let mut wv = v.clone();
    for (mut row, &wi) in wv.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    v.tr_mul(&wv)
}

/// Windows from perturbed identity duals: `W̃_m = I + s E_m`,
/// `w_m = diag(V W̃_m Vᵀ)`, rescaled to `‖w_m‖² = N`.
pub fn random_window_bank(basis: &SpectralBasis, m: usize, noise_scale: f64, seed: u64) -> Result<WindowBank> {
    if m == 0 {
        return Err(invalid("M", "must be at least 1"));
    }
    if !(noise_scale > 0.0 && noise_scale.is_finite()) {
        return Err(invalid("noise_scale", format!("must be positive, got {noise_scale}")));
    }
    let n = basis.n();
    let v = basis.eigenvectors();
    let windows = (0..m)
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            for _ in 0..MAX_WINDOW_ATTEMPTS {
                let mut dual = DMatrix::<f64>::identity(n, n);
                for x in dual.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *x += noise_scale * e;
                }
                let vd = v * dual;
                let w = DVector::from_iterator(n, (0..n).map(|i| vd.row(i).dot(&v.row(i))));
                let norm = w.norm();
                if norm > 0.0 && norm.is_finite() {
                    return Ok(w * ((n as f64).sqrt() / norm));
                }
            }
            Err(Error::Degenerate(format!("window {idx} stayed zero after {MAX_WINDOW_ATTEMPTS} draws")))
        })
        .collect::<Result<Vec<_>>>()?;
    WindowBank::new(windows)
}

/// `(Vᵀ(w∘x)) ∘ (Vᵀ(w∘y))`.
pub fn windowed_cross_periodogram(
    basis: &SpectralBasis,
    x: &DVector<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<SpectralDensity> {
    let values = windowed_values(basis, x, y, w)?;
    real_density(basis, &values, x == y)
}

fn windowed_values(basis: &SpectralBasis, x: &DVector<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    basis.check_signal(x.len())?;
    basis.check_signal(y.len())?;
    basis.check_signal(w.len())?;
    check_window(w)?;
    let v = basis.eigenvectors();
    let fx = v.tr_mul(&w.component_mul(x));
    let fy = v.tr_mul(&w.component_mul(y));
    Ok(fx.component_mul(&fy))
}

/// Mean of the single-window estimates over the bank.
pub fn windowed_average_cross_periodogram(
    basis: &SpectralBasis,
    x: &DVector<f64>,
    y: &DVector<f64>,
    bank: &WindowBank,
) -> Result<SpectralDensity> {
    let parts = bank
        .windows()
        .par_iter()
        .map(|w| windowed_values(basis, x, y, w))
        .collect::<Result<Vec<_>>>()?;
    let mut acc = DVector::zeros(basis.n());
    for p in &parts {
        acc += p;
    }
    acc /= bank.len() as f64;
    real_density(basis, &acc, x == y)
}

/// Closed-form mean of the windowed-average estimator,
/// `(1/M) Σ (W̃_m ∘ W̃_m) p`.
pub fn windowed_expectation(basis: &SpectralBasis, bank: &WindowBank, p_true: &SpectralDensity) -> Result<SpectralDensity> {
    let n = basis.n();
    if p_true.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p_true.len() });
    }
    let p = DVector::from_column_slice(p_true.values());
    let mut acc = DVector::<Complex64>::zeros(n);
    for d in bank.duals_for(basis)? {
        let sq = d.component_mul(&d).map(|v| Complex64::new(v, 0.0));
        acc += sq * &p;
    }
    acc /= Complex64::new(bank.len() as f64, 0.0);
    SpectralDensity::new(p_true.frequencies().to_vec(), acc.iter().copied().collect(), p_true.kind())
}

/// How the WFT filters `g_k(S)` are applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WftPath {
    /// `V diag(g_k(λ)) Vᵀ` from the eigendecomposition.
    Exact,
    /// Chebyshev approximation of each `g_k` applied through the shift.
    Chebyshev { order: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WftOptions {
    pub k: usize,
    /// Adds the grid point `λ = 0` (k = 0) in front of `τ, …, Kτ`.
    pub include_zero: bool,
    pub path: WftPath,
}

impl WftOptions {
    pub fn new(k: usize) -> Self {
        Self { k, include_zero: false, path: WftPath::Exact }
    }

    /// `(τ, σ²) = (λ_max/K, (K+1)λ_max/K²)`.
    pub fn grid(&self, lambda_max: f64) -> (f64, f64) {
        let k = self.k as f64;
        (lambda_max / k, (k + 1.0) * lambda_max / (k * k))
    }

    fn indices(&self) -> std::ops::RangeInclusive<usize> {
        if self.include_zero {
            0..=self.k
        } else {
            1..=self.k
        }
    }
}

/// The translated Gaussian `g_k(λ) = exp(-(λ - kτ)² / σ²)`.
pub fn wft_kernel(center: f64, sigma2: f64) -> Result<FilterKernel> {
    FilterKernel::new(format!("wft_gaussian@{center}"), false, move |l| {
        let d = l - center;
        (-d * d / sigma2).exp()
    })
}

/// Windowed graph Fourier estimate `⟨g_k(S)x, g_k(S)y⟩ / ‖g_k(S)‖²_F` on
/// the grid `kτ`. `y = None` estimates the PSD of `x`.
///
/// The Chebyshev path needs `shift`; it uses the basis only for `λ_max`
/// and the Frobenius normaliser of the approximated filter.
pub fn wft_estimator(
    basis: &SpectralBasis,
    shift: Option<&ShiftOperator>,
    x: &DVector<f64>,
    y: Option<&DVector<f64>>,
    opts: &WftOptions,
) -> Result<SpectralDensity> {
    if opts.k < 2 {
        return Err(invalid("K", format!("need K >= 2, got {}", opts.k)));
    }
    basis.check_signal(x.len())?;
    if let Some(y) = y {
        basis.check_signal(y.len())?;
    }
    let lmax = basis.lambda_max();
    if !(lmax > 0.0) {
        return Err(Error::Degenerate("λ_max must be positive for the WFT grid".into()));
    }
    let (tau, sigma2) = opts.grid(lmax);
    let ks: Vec<usize> = opts.indices().collect();
    let v = basis.eigenvectors();
    let xh = v.tr_mul(x);
    let yh = y.map(|y| v.tr_mul(y));

    let values = ks
        .par_iter()
        .map(|&k| -> Result<f64> {
            let center = k as f64 * tau;
            let kernel = wft_kernel(center, sigma2)?;
            match opts.path {
                WftPath::Exact => {
                    let g = kernel.responses(basis);
                    let norm = g.norm_squared();
                    if norm == 0.0 {
                        return Err(Error::Degenerate(format!("‖g_{k}(S)‖_F = 0")));
                    }
                    let gx = v * xh.component_mul(&g);
                    let gy = match &yh {
                        Some(yh) => v * yh.component_mul(&g),
                        None => gx.clone(),
                    };
                    Ok(gx.dot(&gy) / norm)
                }
                WftPath::Chebyshev { order } => {
                    let s = shift.ok_or_else(|| invalid("shift", "the Chebyshev path needs the shift operator"))?;
                    let fit = chebyshev_fit(&kernel, order, lmax)?;
                    let norm = fit.filter.responses(basis).norm_squared();
                    if norm == 0.0 {
                        return Err(Error::Degenerate(format!("‖g_{k}(S)‖_F = 0")));
                    }
                    let gx = chebyshev_apply(s, &fit.filter, x)?;
                    let gy = match y {
                        Some(y) => chebyshev_apply(s, &fit.filter, y)?,
                        None => gx.clone(),
                    };
                    Ok(gx.dot(&gy) / norm)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let freqs = ks.iter().map(|&k| k as f64 * tau).collect();
    let kind = if y.is_none() || y == Some(x) { DensityKind::Psd } else { DensityKind::Csd };
    SpectralDensity::new(freqs, values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(), kind)
}

/// Coherence together with the entries that had to be clipped into `[0, 1]`.
#[derive(Debug, Clone)]
pub struct CoherenceEstimate {
    pub density: SpectralDensity,
    pub clipped: Vec<bool>,
}

impl CoherenceEstimate {
    pub fn any_clipped(&self) -> bool {
        self.clipped.iter().any(|&c| c)
    }
}

/// `|p_xy|² / (max(p_x, floor) · max(p_y, floor))`, clipped to `[0, 1]`.
///
/// `floor = None` uses `1e-12 · max(p_x)`. Entries are flagged as clipped
/// when they exceed 1 by more than [`COHERENCE_CLIP_TOL`]; smaller excess
/// is rounding in `|p_xy|²` versus `p_x p_y` and is clamped unflagged.
pub fn coherence(
    p_x: &SpectralDensity,
    p_y: &SpectralDensity,
    p_xy: &SpectralDensity,
    floor: Option<f64>,
) -> Result<CoherenceEstimate> {
    p_x.check_grid(p_y)?;
    p_x.check_grid(p_xy)?;
    let floor = match floor {
        Some(f) if f >= 0.0 && f.is_finite() => f,
        Some(f) => return Err(invalid("floor", format!("must be finite and nonnegative, got {f}"))),
        None => DEFAULT_COHERENCE_FLOOR_REL * p_x.re().into_iter().fold(0.0, f64::max),
    };
    let floor = floor.max(f64::MIN_POSITIVE);
    let mut clipped = Vec::with_capacity(p_x.len());
    let values = p_x
        .values()
        .iter()
        .zip(p_y.values())
        .zip(p_xy.values())
        .map(|((px, py), pxy)| {
            let c = pxy.norm_sqr() / (px.re.max(floor) * py.re.max(floor));
            let cl = c.clamp(0.0, 1.0);
            clipped.push(c > 1.0 + COHERENCE_CLIP_TOL);
            Complex64::new(cl, 0.0)
        })
        .collect();
    let density = SpectralDensity::new(p_x.frequencies().to_vec(), values, DensityKind::Coherence)?;
    Ok(CoherenceEstimate { density, clipped })
}

/// Per-frequency variance `(|p_xy|² + p_x p_y) / R` of the cross-periodogram.
pub fn theoretical_variance(
    p_x: &SpectralDensity,
    p_y: &SpectralDensity,
    p_xy: &SpectralDensity,
    realizations: usize,
) -> Result<DVector<f64>> {
    if realizations == 0 {
        return Err(invalid("R", "must be at least 1"));
    }
    p_x.check_grid(p_y)?;
    p_x.check_grid(p_xy)?;
    let r = realizations as f64;
    Ok(DVector::from_iterator(
        p_x.len(),
        p_x.values()
            .iter()
            .zip(p_y.values())
            .zip(p_xy.values())
            .map(|((px, py), pxy)| (pxy.norm_sqr() + px.re * py.re) / r),
    ))
}

/// Per-pair terms of the windowed variance trace. Entry `[m][m']` holds
/// `(‖W̃_{mm'} p_xy‖², ⟨W̃_{mm'} p_x, W̃_{mm'} p_y⟩)` with
/// `W̃_{mm'} = W̃_m ∘ W̃_{m'}`.
pub fn windowed_variance_terms(
    basis: &SpectralBasis,
    bank: &WindowBank,
    p_x: &SpectralDensity,
    p_y: &SpectralDensity,
    p_xy: &SpectralDensity,
) -> Result<Vec<Vec<(f64, f64)>>> {
    p_x.check_grid(p_y)?;
    p_x.check_grid(p_xy)?;
    let n = basis.n();
    if p_x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p_x.len() });
    }
    let duals = bank.duals_for(basis)?;
    let px = DVector::from_iterator(n, p_x.values().iter().map(|v| v.re));
    let py = DVector::from_iterator(n, p_y.values().iter().map(|v| v.re));
    let pxy_re = DVector::from_iterator(n, p_xy.values().iter().map(|v| v.re));
    let pxy_im = DVector::from_iterator(n, p_xy.values().iter().map(|v| v.im));
    Ok(duals
        .par_iter()
        .map(|da| {
            duals
                .iter()
                .map(|db| {
                    let w = da.component_mul(db);
                    let cross = (&w * &pxy_re).norm_squared() + (&w * &pxy_im).norm_squared();
                    (cross, (&w * &px).dot(&(&w * &py)))
                })
                .collect()
        })
        .collect())
}

/// Trace of the covariance of the windowed-average estimator for a single
/// realization, `(1/M²) Σ_{m,m'}` of the [`windowed_variance_terms`].
pub fn windowed_variance_trace(
    basis: &SpectralBasis,
    bank: &WindowBank,
    p_x: &SpectralDensity,
    p_y: &SpectralDensity,
    p_xy: &SpectralDensity,
) -> Result<f64> {
    let terms = windowed_variance_terms(basis, bank, p_x, p_y, p_xy)?;
    let m = terms.len();
    let total: f64 = terms.iter().flatten().map(|(a, b)| a + b).sum();
    Ok(total / (m * m) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{builtin_kernel, BuiltinKernel};
    use crate::graph::{eigendecompose, karate_club, laplacian, Graph};
    use crate::processes::{generate_white, population_densities, InputCoupling};
    use proptest::prelude::*;

    fn basis_of(g: &Graph) -> SpectralBasis {
        eigendecompose(&laplacian(g)).unwrap()
    }

    fn rows(r: usize, n: usize, vals: &[f64]) -> SignalEnsemble {
        SignalEnsemble::new(DMatrix::from_row_slice(r, n, vals), None).unwrap()
    }

    // the three estimator definitions evaluated with explicit index loops
    fn naive_forms(b: &SpectralBasis, ex: &SignalEnsemble, ey: &SignalEnsemble) -> [Vec<f64>; 3] {
        let n = ex.n();
        let r = ex.realizations();
        let v = b.eigenvectors();
        let mut per = vec![0.0; n];
        for l in 0..n {
            for t in 0..r {
                let (mut a, mut c) = (0.0, 0.0);
                for i in 0..n {
                    a += v[(i, l)] * ex.data()[(t, i)];
                    c += v[(i, l)] * ey.data()[(t, i)];
                }
                per[l] += a * c / r as f64;
            }
        }
        let mut sigma = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                for t in 0..r {
                    sigma[i][j] += ex.data()[(t, i)] * ey.data()[(t, j)] / r as f64;
                }
            }
        }
        let mut cor = vec![0.0; n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    cor[l] += v[(i, l)] * sigma[i][j] * v[(j, l)];
                }
            }
        }
        // normal equations solved by Gaussian elimination
        let g = |row: usize, l: usize| v[(row % n, l)] * v[(row / n, l)];
        let mut a = vec![vec![0.0; n + 1]; n];
        for p in 0..n {
            for q in 0..n {
                a[p][q] = (0..n * n).map(|row| g(row, p) * g(row, q)).sum();
            }
            a[p][n] = (0..n * n).map(|row| g(row, p) * sigma[row % n][row / n]).sum();
        }
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for rr in 0..n {
                if rr != c {
                    let f = a[rr][c] / a[c][c];
                    for k in c..=n {
                        a[rr][k] -= f * a[c][k];
                    }
                }
            }
        }
        let ls = (0..n).map(|p| a[p][n] / a[p][p]).collect();
        [per, cor, ls]
    }

    #[test]
    fn forms_match_naive_oracle() {
        let g = Graph::new(5, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (3, 4, 1.5), (0, 4, 0.7), (1, 3, 1.1)]).unwrap();
        let b = basis_of(&g);
        let ex = rows(3, 5, &[0.3, -1.2, 0.8, 2.0, -0.4, 1.1, 0.0, -0.7, 0.5, 0.9, -2.2, 0.6, 1.4, -0.3, 0.2]);
        let ey = rows(3, 5, &[1.0, 0.4, -0.9, 0.3, 1.7, -0.5, 2.1, 0.2, -1.3, 0.8, 0.1, -0.6, 0.7, 1.2, -1.1]);
        let oracle = naive_forms(&b, &ex, &ey);
        for (form, want) in [EstimatorForm::Periodogram, EstimatorForm::Correlogram, EstimatorForm::LeastSquares]
            .into_iter()
            .zip(&oracle)
        {
            let got = cross_periodogram(&b, &ex, &ey, form).unwrap();
            assert_eq!(got.kind(), DensityKind::Csd);
            for (g, w) in got.re().iter().zip(want) {
                assert!((g - w).abs() < 1e-10, "{form:?}: {g} vs {w}");
            }
        }
        for f in 1..3 {
            for (a, c) in oracle[0].iter().zip(&oracle[f]) {
                assert!((a - c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn self_case_and_zero() {
        let b = basis_of(&karate_club());
        let ex = generate_white(34, 4, 5).unwrap();
        let p = periodogram(&b, &ex).unwrap();
        assert_eq!(p.kind(), DensityKind::Psd);
        let z = ex.data() * b.eigenvectors();
        for l in 0..34 {
            let want = z.column(l).norm_squared() / 4.0;
            assert!((p.values()[l].re - want).abs() < 1e-12);
        }
        assert_eq!(p, cross_periodogram(&b, &ex, &ex, EstimatorForm::Periodogram).unwrap());
        let zero = SignalEnsemble::new(DMatrix::zeros(4, 34), None).unwrap();
        for form in [EstimatorForm::Periodogram, EstimatorForm::Correlogram, EstimatorForm::LeastSquares] {
            let d = cross_periodogram(&b, &ex, &zero, form).unwrap();
            assert!(d.values().iter().all(|v| v.norm() == 0.0));
        }
        let bad = generate_white(34, 3, 5).unwrap();
        assert!(cross_periodogram(&b, &ex, &bad, EstimatorForm::Periodogram).is_err());
    }

    #[test]
    fn general_least_squares_agrees() {
        let b = basis_of(&karate_club());
        let ex = generate_white(34, 3, 1).unwrap();
        let ey = generate_white(34, 3, 2).unwrap();
        let s = ex.data().tr_mul(ey.data()) / 3.0;
        let a = least_squares(&b, &s, false).unwrap();
        let c = least_squares(&b, &s, true).unwrap();
        assert!((a - c).amax() < 1e-10);
    }

    fn random_graph() -> impl Strategy<Value = Graph> {
        (3usize..=12).prop_flat_map(|n| {
            proptest::collection::vec(proptest::option::weighted(0.5, 0.1f64..3.0), n * (n - 1) / 2).prop_map(
                move |ws| {
                    let mut edges = Vec::new();
                    let mut it = ws.into_iter();
                    for i in 0..n {
                        for j in i + 1..n {
                            if let Some(Some(w)) = it.next() {
                                edges.push((i, j, w));
                            }
                        }
                    }
                    Graph::new(n, edges).unwrap()
                },
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn estimator_forms_agree(g in random_graph(), r in 1usize..=5, seed in any::<u64>()) {
            let n = g.n_nodes();
            let b = basis_of(&g);
            let ex = generate_white(n, r, seed).unwrap();
            let ey = generate_white(n, r, seed.wrapping_add(1)).unwrap();
            let p = cross_periodogram(&b, &ex, &ey, EstimatorForm::Periodogram).unwrap();
            let scale = p.abs().into_iter().fold(1e-300, f64::max);
            for form in [EstimatorForm::Correlogram, EstimatorForm::LeastSquares] {
                let q = cross_periodogram(&b, &ex, &ey, form).unwrap();
                for (a, c) in p.re().iter().zip(q.re()) {
                    prop_assert!((a - c).abs() <= 1e-8 * scale);
                }
            }
            // p_XY is the conjugate of p_YX; both real here
            let rev = cross_periodogram(&b, &ey, &ex, EstimatorForm::Periodogram).unwrap();
            prop_assert_eq!(rev.conj(), p);
        }
    }

    fn path3() -> SpectralBasis {
        basis_of(&Graph::path(3).unwrap())
    }

    #[test]
    fn windowed_periodogram_cases() {
        let b = path3();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y = DVector::from_vec(vec![0.3, 0.4, -1.0]);
        let ones = DVector::from_element(3, 1.0);
        let plain = cross_periodogram(
            &b,
            &SignalEnsemble::from_signal(&x).unwrap(),
            &SignalEnsemble::from_signal(&y).unwrap(),
            EstimatorForm::Periodogram,
        )
        .unwrap();
        assert!((DVector::from_vec(windowed_cross_periodogram(&b, &x, &y, &ones).unwrap().re())
            - DVector::from_vec(plain.re()))
        .amax()
            < 1e-14);

        let w = DVector::from_vec(vec![1.2, 0.9, 0.0]);
        let w = &w * (3.0f64.sqrt() / w.norm());
        // path-3 Laplacian eigenvectors in closed form
        let s2 = 2.0f64.sqrt();
        let s3 = 3.0f64.sqrt();
        let s6 = 6.0f64.sqrt();
        let vv = [[1.0 / s3, 1.0 / s3, 1.0 / s3], [1.0 / s2, 0.0, -1.0 / s2], [1.0 / s6, -2.0 / s6, 1.0 / s6]];
        let got = windowed_cross_periodogram(&b, &x, &y, &w).unwrap();
        for l in 0..3 {
            let a: f64 = (0..3).map(|i| vv[l][i] * w[i] * x[i]).sum();
            let c: f64 = (0..3).map(|i| vv[l][i] * w[i] * y[i]).sum();
            assert!((got.values()[l].re - a * c).abs() < 1e-12);
        }
        let selfp = windowed_cross_periodogram(&b, &x, &x, &w).unwrap();
        assert_eq!(selfp.kind(), DensityKind::Psd);
        assert!(selfp.re().iter().all(|&v| v >= 0.0));
        assert!(matches!(
            windowed_cross_periodogram(&b, &x, &y, &DVector::from_element(3, 2.0)),
            Err(Error::WindowNorm { .. })
        ));
    }

    #[test]
    fn windowed_average_cases() {
        let b = basis_of(&karate_club());
        let x = generate_white(34, 1, 3).unwrap().realization(0);
        let y = generate_white(34, 1, 4).unwrap().realization(0);
        let ones = DVector::from_element(34, 1.0);
        let bank = WindowBank::identity(34, 5).unwrap();
        let avg = windowed_average_cross_periodogram(&b, &x, &y, &bank).unwrap();
        let single = windowed_cross_periodogram(&b, &x, &y, &ones).unwrap();
        assert!((DVector::from_vec(avg.re()) - DVector::from_vec(single.re())).amax() < 1e-12);

        let bank2 = random_window_bank(&b, 2, 0.3, 8).unwrap();
        let one = WindowBank::new(vec![bank2.windows()[0].clone()]).unwrap();
        assert_eq!(
            windowed_average_cross_periodogram(&b, &x, &y, &one).unwrap(),
            windowed_cross_periodogram(&b, &x, &y, &bank2.windows()[0]).unwrap()
        );
        let a = windowed_cross_periodogram(&b, &x, &y, &bank2.windows()[0]).unwrap().re();
        let c = windowed_cross_periodogram(&b, &x, &y, &bank2.windows()[1]).unwrap().re();
        let got = windowed_average_cross_periodogram(&b, &x, &y, &bank2).unwrap().re();
        for l in 0..34 {
            assert!((got[l] - 0.5 * (a[l] + c[l])).abs() < 1e-12);
        }
        assert!(WindowBank::new(vec![]).is_err());
    }

    #[test]
    fn random_bank_properties() {
        let b = basis_of(&karate_club());
        let bank = random_window_bank(&b, 100, 0.1, 11).unwrap();
        assert_eq!(bank.len(), 100);
        for w in bank.windows() {
            assert!((w.norm_squared() - 34.0).abs() < 1e-8 * 34.0);
        }
        let again = random_window_bank(&b, 100, 0.1, 11).unwrap();
        assert_eq!(bank.windows(), again.windows());
        let tiny = random_window_bank(&b, 3, 1e-12, 1).unwrap();
        for w in tiny.windows() {
            assert!((w - DVector::from_element(34, 1.0)).amax() < 1e-9);
        }
        // duals rebuilt from w are diagonal-dominant but not the generating I + sE
        let d = window_dual(&b, &bank.windows()[0]);
        assert!((&d - d.transpose()).amax() < 1e-12);
        assert!(random_window_bank(&b, 0, 0.1, 1).is_err());
        assert!(random_window_bank(&b, 1, 0.0, 1).is_err());
    }

    #[test]
    fn windowed_expectation_cases() {
        let g = Graph::new(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 2.0), (0, 3, 0.5)]).unwrap();
        let b = basis_of(&g);
        let p = SpectralDensity::from_real(eigen_grid(&b), vec![1.0, 0.5, 2.0, 0.25], DensityKind::Psd).unwrap();
        let id = WindowBank::identity(4, 2).unwrap();
        let e = windowed_expectation(&b, &id, &p).unwrap();
        assert!((DVector::from_vec(e.re()) - DVector::from_vec(p.re())).amax() < 1e-12);
        let zero = SpectralDensity::from_real(eigen_grid(&b), vec![0.0; 4], DensityKind::Psd).unwrap();
        let bank = random_window_bank(&b, 3, 0.5, 2).unwrap();
        assert!(windowed_expectation(&b, &bank, &zero).unwrap().abs().iter().all(|&v| v == 0.0));

        let v = b.eigenvectors();
        let got = windowed_expectation(&b, &bank, &p).unwrap().re();
        for l in 0..4 {
            let mut want = 0.0;
            for w in bank.windows() {
                for k in 0..4 {
                    let mut d = 0.0;
                    for i in 0..4 {
                        d += v[(i, l)] * w[i] * v[(i, k)];
                    }
                    want += d * d * p.values()[k].re / 3.0;
                }
            }
            assert!((got[l] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn wft_cases() {
        let g = karate_club();
        let b = basis_of(&g);
        let opts = WftOptions::new(10);
        let v5 = b.eigenvector(5).unwrap();
        let est = wft_estimator(&b, None, &v5, None, &opts).unwrap();
        assert_eq!(est.len(), 10);
        assert_eq!(est.kind(), DensityKind::Psd);
        let (tau, sigma2) = opts.grid(b.lambda_max());
        for (k, f) in est.frequencies().iter().enumerate() {
            assert!((f - (k + 1) as f64 * tau).abs() < 1e-12);
        }
        for k in 1..=10 {
            let c = k as f64 * tau;
            let gk = |l: f64| (-(l - c) * (l - c) / sigma2).exp();
            let denom: f64 = b.eigenvalues().iter().map(|&l| gk(l).powi(2)).sum();
            let want = gk(b.eigenvalues()[5]).powi(2) / denom;
            assert!((est.values()[k - 1].re - want).abs() < 1e-12);
        }
        assert!(wft_estimator(&b, None, &v5, None, &WftOptions::new(1)).is_err());

        let x = generate_white(34, 1, 1).unwrap().realization(0);
        let y = generate_white(34, 1, 2).unwrap().realization(0);
        let cross = wft_estimator(&b, None, &x, Some(&y), &opts).unwrap();
        assert_eq!(cross.kind(), DensityKind::Csd);
        let with_zero = wft_estimator(&b, None, &x, Some(&y), &WftOptions { include_zero: true, ..opts }).unwrap();
        assert_eq!(with_zero.len(), 11);
        assert_eq!(with_zero.frequencies()[0], 0.0);
        assert_eq!(&with_zero.values()[1..], cross.values());

        let s = laplacian(&g);
        let cheb = WftOptions { path: WftPath::Chebyshev { order: 60 }, ..opts };
        let approx = wft_estimator(&b, Some(&s), &x, Some(&y), &cheb).unwrap();
        let scale = cross.abs().into_iter().fold(0.0, f64::max);
        for (a, c) in approx.re().iter().zip(cross.re()) {
            assert!((a - c).abs() < 1e-3 * scale);
        }
        assert!(wft_estimator(&b, None, &x, Some(&y), &cheb).is_err());
    }

    #[test]
    fn wft_constant_signal_concentrates_low() {
        let b = basis_of(&karate_club());
        let x = b.eigenvector(0).unwrap();
        let est = wft_estimator(&b, None, &x, None, &WftOptions::new(10)).unwrap().re();
        let total: f64 = est.iter().sum();
        assert!(est[0] / total > est[9] / total);
    }

    #[test]
    fn coherence_cases() {
        let b = basis_of(&karate_club());
        let heat = builtin_kernel(BuiltinKernel::Heat).unwrap();
        let ds = builtin_kernel(BuiltinKernel::Ds).unwrap();
        let pop = population_densities(&b, &heat, &ds, InputCoupling::Correlated { rho: 0.5 }).unwrap();
        let c = coherence(&pop.p_x, &pop.p_y, &pop.p_xy, None).unwrap();
        assert!(!c.any_clipped());
        for (v, (px, py)) in c.density.values().iter().zip(pop.p_x.re().into_iter().zip(pop.p_y.re())) {
            if px > 1e-8 && py > 1e-8 {
                assert!((v.re - 0.25).abs() < 1e-10);
            }
        }
        let one = coherence(&pop.p_x, &pop.p_x, &pop.p_x, None).unwrap();
        for (v, px) in one.density.values().iter().zip(pop.p_x.re()) {
            if px > 1e-12 {
                assert!((v.re - 1.0).abs() < 1e-10);
            }
        }
        let zero = SpectralDensity::from_real(eigen_grid(&b), vec![0.0; 34], DensityKind::Csd).unwrap();
        let z = coherence(&pop.p_x, &pop.p_y, &zero, None).unwrap();
        assert!(z.density.abs().iter().all(|&v| v == 0.0));
        let big = SpectralDensity::from_real(eigen_grid(&b), vec![10.0; 34], DensityKind::Csd).unwrap();
        let clipped = coherence(&pop.p_x, &pop.p_y, &big, None).unwrap();
        assert!(clipped.any_clipped());
        assert!(clipped.density.re().iter().all(|&v| v <= 1.0));
        let other = SpectralDensity::from_real(vec![0.0; 34], vec![1.0; 34], DensityKind::Psd).unwrap();
        assert!(matches!(coherence(&pop.p_x, &other, &pop.p_xy, None), Err(Error::GridMismatch)));
        assert!(coherence(&pop.p_x, &pop.p_y, &pop.p_xy, Some(-1.0)).is_err());
    }

    #[test]
    fn theoretical_variance_cases() {
        let f = vec![0.0, 1.0, 2.0];
        let p = SpectralDensity::from_real(f.clone(), vec![1.0, 2.0, 0.5], DensityKind::Psd).unwrap();
        let v = theoretical_variance(&p, &p, &p, 4).unwrap();
        for (a, b) in v.iter().zip(p.re()) {
            assert!((a - 2.0 * b * b / 4.0).abs() < 1e-15);
        }
        let v8 = theoretical_variance(&p, &p, &p, 8).unwrap();
        assert!((v8 * 2.0 - &v).amax() < 1e-15);
        let z = SpectralDensity::from_real(f, vec![0.0; 3], DensityKind::Psd).unwrap();
        assert_eq!(theoretical_variance(&z, &z, &z, 1).unwrap().amax(), 0.0);
        assert!(theoretical_variance(&p, &p, &p, 0).is_err());
    }

    #[test]
    fn windowed_variance_trace_cases() {
        let g = Graph::new(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 2.0), (0, 3, 0.5), (0, 2, 0.3)]).unwrap();
        let b = basis_of(&g);
        let grid = eigen_grid(&b);
        let px = SpectralDensity::from_real(grid.clone(), vec![1.0, 0.5, 2.0, 0.25], DensityKind::Psd).unwrap();
        let py = SpectralDensity::from_real(grid.clone(), vec![0.3, 1.5, 0.7, 1.0], DensityKind::Psd).unwrap();
        let pxy = SpectralDensity::from_real(grid.clone(), vec![0.4, -0.6, 1.1, 0.2], DensityKind::Csd).unwrap();

        let id = WindowBank::identity(4, 1).unwrap();
        let t = windowed_variance_trace(&b, &id, &px, &py, &pxy).unwrap();
        let want: f64 = theoretical_variance(&px, &py, &pxy, 1).unwrap().sum();
        assert!((t - want).abs() < 1e-12);

        let zero = SpectralDensity::from_real(grid, vec![0.0; 4], DensityKind::Psd).unwrap();
        assert_eq!(windowed_variance_trace(&b, &id, &zero, &zero, &zero).unwrap(), 0.0);

        let bank = random_window_bank(&b, 2, 0.4, 6).unwrap();
        let d: Vec<DMatrix<f64>> = bank.windows().iter().map(|w| window_dual(&b, w)).collect();
        let (x, y, xy) = (px.re(), py.re(), pxy.re());
        let mut want = 0.0;
        for a in 0..2 {
            for c in 0..2 {
                for l in 0..4 {
                    let (mut u, mut ux, mut uy) = (0.0, 0.0, 0.0);
                    for k in 0..4 {
                        let w = d[a][(l, k)] * d[c][(l, k)];
                        u += w * xy[k];
                        ux += w * x[k];
                        uy += w * y[k];
                    }
                    want += (u * u + ux * uy) / 4.0;
                }
            }
        }
        let got = windowed_variance_trace(&b, &bank.with_duals(&b).unwrap(), &px, &py, &pxy).unwrap();
        assert!((got - want).abs() < 1e-12);
    }
}
