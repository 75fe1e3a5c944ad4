//! Weakly stationary graph processes.
//!
//! Processes are generated constructively: white Gaussian noise pushed
//! through shift-invariant filters. Two outputs driven by inputs whose
//! cross-covariance is diagonal in the graph Fourier basis are jointly
//! weakly stationary.
//!
//! Randomness comes from ChaCha8 with one stream per realization, so a
//! realization depends only on `(seed, index)` and can be produced in any
//! order.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::{DensityKind, SpectralDensity};
use crate::error::{invalid, Error, Result};
use crate::filters::{filter_matrix, FilterKernel};
use crate::graph::SpectralBasis;

/// `R` realizations of an `N`-dimensional graph signal, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalEnsemble {
    data: DMatrix<f64>,
    seed: Option<u64>,
}

impl SignalEnsemble {
    pub fn new(data: DMatrix<f64>, seed: Option<u64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(invalid("R", "ensemble needs at least one realization"));
        }
        if data.ncols() == 0 {
            return Err(invalid("n", "signals must have at least one entry"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("data", "non-finite signal value"));
        }
        Ok(Self { data, seed })
    }

    /// Single realization.
    pub fn from_signal(x: &DVector<f64>) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, x.len(), x.as_slice()), None)
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn realizations(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn realization(&self, r: usize) -> DVector<f64> {
        self.data.row(r).transpose()
    }

    /// One realization per row, preceded by `# n=<N> R=<R> seed=<seed>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        let _ = writeln!(out, "# n={} R={} seed={}", self.n(), self.realizations(), seed);
        for row in self.data.row_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut seed = None;
        let mut header_dims: Option<(usize, usize)> = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let (mut n, mut r) = (None, None);
                for tok in header.split_whitespace() {
                    match tok.split_once('=') {
                        Some(("n", v)) => n = v.parse().ok(),
                        Some(("R", v)) => r = v.parse().ok(),
                        Some(("seed", v)) => seed = v.parse().ok(),
                        _ => {}
                    }
                }
                if let (Some(n), Some(r)) = (n, r) {
                    header_dims = Some((n, r));
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Parse { line: lineno + 1, msg: "non-numeric value".into() })?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: format!("expected {} columns, got {}", first.len(), row.len()),
                    });
                }
            }
            rows.push(row);
        }
        let r = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some((hn, hr)) = header_dims {
            if hn != n || hr != r {
                return Err(Error::ShapeMismatch(format!(
                    "header declares n={hn} R={hr}, body has n={n} R={r}"
                )));
            }
        }
        let data = DMatrix::from_row_iterator(r, n, rows.into_iter().flatten());
        Self::new(data, seed)
    }
}

fn realization_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives an independent seed for sub-experiment `index` (SplitMix64 finaliser).
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// I.i.d. standard normal ensemble.
pub fn generate_white(n: usize, realizations: usize, seed: u64) -> Result<SignalEnsemble> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if realizations == 0 {
        return Err(invalid("R", "must be at least 1"));
    }
    let mut data = DMatrix::<f64>::zeros(realizations, n);
    for r in 0..realizations {
        let mut rng = realization_rng(seed, r as u64);
        for j in 0..n {
            data[(r, j)] = StandardNormal.sample(&mut rng);
        }
    }
    SignalEnsemble::new(data, Some(seed))
}

/// Cross-covariance of the two white inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputCoupling {
    /// One input feeds both filters, `Cov(ε₁, ε₂) = I`.
    Shared,
    /// `ε₂ = ρ ε₁ + √(1 - ρ²) ε′`, so `Cov(ε₁, ε₂) = ρ I`.
    Correlated { rho: f64 },
}

impl InputCoupling {
    pub fn rho(&self) -> f64 {
        match *self {
            Self::Shared => 1.0,
            Self::Correlated { rho } => rho,
        }
    }
}

/// Jointly stationary pair `(H₁ε₁, H₂ε₂)` with a shared input.
pub fn generate_jws_pair(
    basis: &SpectralBasis,
    k1: &FilterKernel,
    k2: &FilterKernel,
    realizations: usize,
    seed: u64,
) -> Result<(SignalEnsemble, SignalEnsemble)> {
    generate_jws_pair_with(basis, k1, k2, realizations, seed, InputCoupling::Shared)
}

pub fn generate_jws_pair_with(
    basis: &SpectralBasis,
    k1: &FilterKernel,
    k2: &FilterKernel,
    realizations: usize,
    seed: u64,
    coupling: InputCoupling,
) -> Result<(SignalEnsemble, SignalEnsemble)> {
    if realizations == 0 {
        return Err(invalid("R", "must be at least 1"));
    }
    let n = basis.n();
    let h1 = filter_matrix(basis, k1)?;
    let h2 = filter_matrix(basis, k2)?;
    let mut e1 = DMatrix::<f64>::zeros(realizations, n);
    let mut e2 = DMatrix::<f64>::zeros(realizations, n);
    let rho = coupling.rho();
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid("rho", format!("must lie in [0, 1], got {rho}")));
    }
    let tail = (1.0 - rho * rho).sqrt();
    for r in 0..realizations {
        let mut rng = realization_rng(seed, r as u64);
        for j in 0..n {
            e1[(r, j)] = StandardNormal.sample(&mut rng);
        }
        match coupling {
            InputCoupling::Shared => e2.set_row(r, &e1.row(r)),
            InputCoupling::Correlated { .. } => {
                for j in 0..n {
                    let extra: f64 = StandardNormal.sample(&mut rng);
                    e2[(r, j)] = rho * e1[(r, j)] + tail * extra;
                }
            }
        }
    }
    // rows are realizations and H is symmetric, so row-wise H x = x H
    let x = e1 * h1;
    let y = e2 * h2;
    Ok((SignalEnsemble::new(x, Some(seed))?, SignalEnsemble::new(y, Some(seed))?))
}

/// `Vᵀx`.
pub fn gft(basis: &SpectralBasis, x: &DVector<f64>) -> Result<DVector<f64>> {
    basis.check_signal(x.len())?;
    Ok(basis.eigenvectors().tr_mul(x))
}

/// `V x̃`.
pub fn igft(basis: &SpectralBasis, x_hat: &DVector<f64>) -> Result<DVector<f64>> {
    basis.check_signal(x_hat.len())?;
    Ok(basis.eigenvectors() * x_hat)
}

/// Graph Fourier coefficients of every realization, one per row.
pub fn gft_ensemble(basis: &SpectralBasis, e: &SignalEnsemble) -> Result<SignalEnsemble> {
    basis.check_signal(e.n())?;
    SignalEnsemble::new(e.data() * basis.eigenvectors(), e.seed())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    Auto,
    Cross,
}

#[derive(Debug, Clone)]
pub struct CrossCovariance {
    pub matrix: DMatrix<f64>,
    pub kind: CovarianceKind,
}

/// `(1/R) Σ_r x_r y_rᵀ`.
pub fn sample_cross_covariance(ex: &SignalEnsemble, ey: &SignalEnsemble) -> Result<CrossCovariance> {
    check_pair(ex, ey)?;
    let r = ex.realizations() as f64;
    let matrix = ex.data().tr_mul(ey.data()) / r;
    let kind = if ex.data() == ey.data() { CovarianceKind::Auto } else { CovarianceKind::Cross };
    Ok(CrossCovariance { matrix, kind })
}

pub(crate) fn check_pair(ex: &SignalEnsemble, ey: &SignalEnsemble) -> Result<()> {
    if ex.n() != ey.n() || ex.realizations() != ey.realizations() {
        return Err(Error::ShapeMismatch(format!(
            "ensembles are {}x{} and {}x{}",
            ex.realizations(),
            ex.n(),
            ey.realizations(),
            ey.n()
        )));
    }
    Ok(())
}

/// `‖diag(VᵀΣV)‖₂ / ‖VᵀΣV‖_F`; 1 exactly when `Σ` is diagonal in the basis.
pub fn stationarity_measure(basis: &SpectralBasis, c: &CrossCovariance) -> Result<f64> {
    let n = basis.n();
    if c.matrix.nrows() != n || c.matrix.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: c.matrix.nrows() });
    }
    let v = basis.eigenvectors();
    let m = v.tr_mul(&(&c.matrix * v));
    let total = m.norm();
    if total == 0.0 {
        return Err(Error::Degenerate("zero covariance matrix".into()));
    }
    Ok(m.diagonal().norm() / total)
}

/// Population densities `(p_X, p_Y, p_XY)` of a filtered pair.
#[derive(Debug, Clone)]
pub struct PopulationDensities {
    pub p_x: SpectralDensity,
    pub p_y: SpectralDensity,
    pub p_xy: SpectralDensity,
}

/// `h₁(λ) h₂(λ)`, the cross density of filters driven by a shared white input.
pub fn true_gcsd(basis: &SpectralBasis, k1: &FilterKernel, k2: &FilterKernel) -> Result<SpectralDensity> {
    Ok(population_densities(basis, k1, k2, InputCoupling::Shared)?.p_xy)
}

/// Densities of `(H₁ε₁, H₂ε₂)`: `h₁²`, `h₂²` and `ρ h₁ h₂`.
pub fn population_densities(
    basis: &SpectralBasis,
    k1: &FilterKernel,
    k2: &FilterKernel,
    coupling: InputCoupling,
) -> Result<PopulationDensities> {
    let lmax = basis.lambda_max();
    k1.check_finite_on(lmax)?;
    k2.check_finite_on(lmax)?;
    let h1 = k1.responses(basis);
    let h2 = k2.responses(basis);
    let freqs: Vec<f64> = basis.eigenvalues().iter().copied().collect();
    let rho = coupling.rho();
    let to_c = |v: DVector<f64>| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    let p_x = SpectralDensity::new(freqs.clone(), to_c(h1.map(|h| h * h)), DensityKind::Psd)?;
    let p_y = SpectralDensity::new(freqs.clone(), to_c(h2.map(|h| h * h)), DensityKind::Psd)?;
    let p_xy = SpectralDensity::new(freqs, to_c(h1.component_mul(&h2) * rho), DensityKind::Csd)?;
    Ok(PopulationDensities { p_x, p_y, p_xy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{builtin_kernel, chebyshev_fit, BuiltinKernel};
    use crate::graph::{eigendecompose, karate_club, laplacian, Graph};

    fn karate_basis() -> SpectralBasis {
        eigendecompose(&laplacian(&karate_club())).unwrap()
    }

    #[test]
    fn white_noise_deterministic_and_validated() {
        let a = generate_white(3, 1, 42).unwrap();
        let b = generate_white(3, 1, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_white(3, 1, 43).unwrap());
        assert!(generate_white(3, 0, 42).is_err());
        // realizations are keyed by index, so a longer run extends a shorter one
        let long = generate_white(3, 5, 42).unwrap();
        assert_eq!(long.data().row(0), a.data().row(0));
    }

    #[test]
    fn white_noise_covariance() {
        let e = generate_white(50, 10_000, 9).unwrap();
        let c = sample_cross_covariance(&e, &e).unwrap();
        assert_eq!(c.kind, CovarianceKind::Auto);
        assert!((c.matrix - DMatrix::<f64>::identity(50, 50)).amax() < 0.1);
    }

    #[test]
    fn jws_pair_special_kernels() {
        let b = karate_basis();
        let id = FilterKernel::identity();
        let (x, y) = generate_jws_pair(&b, &id, &id, 4, 1).unwrap();
        let eps = generate_white(34, 4, 1).unwrap();
        assert!((x.data() - eps.data()).amax() < 1e-12);
        assert_eq!(x, y);
        let (_, z) = generate_jws_pair(&b, &id, &FilterKernel::zero(), 4, 1).unwrap();
        assert_eq!(z.data().amax(), 0.0);
    }

    #[test]
    fn jws_pair_sample_gcsd_converges() {
        let b = karate_basis();
        let mex = builtin_kernel(BuiltinKernel::Mex).unwrap();
        let heat = builtin_kernel(BuiltinKernel::Heat).unwrap();
        let (x, y) = generate_jws_pair(&b, &mex, &heat, 20_000, 3).unwrap();
        let c = sample_cross_covariance(&x, &y).unwrap();
        let v = b.eigenvectors();
        let sample = (v.transpose() * &c.matrix * v).diagonal();
        let truth = true_gcsd(&b, &mex, &heat).unwrap();
        for (s, t) in sample.iter().zip(truth.values()) {
            // h1 h2 sqrt(2/R) is the standard error of each entry
            let se = (2.0 / 20_000.0f64).sqrt() * t.re.abs();
            assert!((s - t.re).abs() <= 5.0 * se + 1e-12, "{s} vs {}", t.re);
        }
        assert!(stationarity_measure(&b, &c).unwrap() > 0.95);
    }

    #[test]
    fn gft_decorrelates() {
        let b = karate_basis();
        let heat = builtin_kernel(BuiltinKernel::Heat).unwrap();
        let ds = builtin_kernel(BuiltinKernel::Ds).unwrap();
        let r = 20_000;
        let (x, y) = generate_jws_pair(&b, &heat, &ds, r, 8).unwrap();
        let xt = gft_ensemble(&b, &x).unwrap();
        let yt = gft_ensemble(&b, &y).unwrap();
        let c = sample_cross_covariance(&xt, &yt).unwrap().matrix;
        let hx = heat.responses(&b);
        let hy = ds.responses(&b);
        for i in 0..34 {
            for j in 0..34 {
                if i != j {
                    let se = (hx[i] * hy[j]).abs() / (r as f64).sqrt();
                    assert!(c[(i, j)].abs() <= 5.0 * se + 1e-12);
                }
            }
        }
    }

    #[test]
    fn gft_cases() {
        let g = Graph::path(3).unwrap();
        let b = eigendecompose(&laplacian(&g)).unwrap();
        let v1 = b.eigenvector(1).unwrap();
        let e = gft(&b, &v1).unwrap();
        assert!((e - DVector::from_vec(vec![0.0, 1.0, 0.0])).amax() < 1e-12);
        assert_eq!(gft(&b, &DVector::zeros(3)).unwrap().amax(), 0.0);
        let x = DVector::from_vec(vec![0.7, -0.2, 1.9]);
        let xt = gft(&b, &x).unwrap();
        let v = b.eigenvectors();
        for l in 0..3 {
            let want: f64 = (0..3).map(|i| v[(i, l)] * x[i]).sum();
            assert!((xt[l] - want).abs() < 1e-14);
        }
        assert!((igft(&b, &xt).unwrap() - &x).amax() < 1e-10);
        assert!((xt.norm() - x.norm()).abs() <= 1e-10 * x.norm());
        assert!(gft(&b, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn sample_cross_covariance_cases() {
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let e = SignalEnsemble::from_signal(&x).unwrap();
        let c = sample_cross_covariance(&e, &e).unwrap();
        assert_eq!(c.matrix, &x * x.transpose());

        let zero = SignalEnsemble::new(DMatrix::zeros(1, 2), None).unwrap();
        assert_eq!(sample_cross_covariance(&e, &zero).unwrap().matrix.amax(), 0.0);

        let ex = SignalEnsemble::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, -1.0]), None).unwrap();
        let ey = SignalEnsemble::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 2.0, 4.0]), None).unwrap();
        let c = sample_cross_covariance(&ex, &ey).unwrap();
        assert_eq!(c.kind, CovarianceKind::Cross);
        // (x1 y1ᵀ + x2 y2ᵀ) / 2 by hand
        let want = DMatrix::from_row_slice(2, 2, &[(0.5 + 6.0) / 2.0, (0.0 + 12.0) / 2.0, (1.0 - 2.0) / 2.0, (0.0 - 4.0) / 2.0]);
        assert!((c.matrix - want).amax() < 1e-15);
        let bad = SignalEnsemble::new(DMatrix::zeros(3, 2), None).unwrap();
        assert!(sample_cross_covariance(&ex, &bad).is_err());
    }

    #[test]
    fn stationarity_measure_cases() {
        let b = karate_basis();
        let d = DVector::from_iterator(34, (0..34).map(|i| (i as f64 * 0.37).sin()));
        let diag = CrossCovariance { matrix: b.synthesize(&d), kind: CovarianceKind::Cross };
        assert!((stationarity_measure(&b, &diag).unwrap() - 1.0).abs() < 1e-10);
        let id = CrossCovariance { matrix: DMatrix::identity(34, 34), kind: CovarianceKind::Auto };
        assert!((stationarity_measure(&b, &id).unwrap() - 1.0).abs() < 1e-12);
        let mut off = DMatrix::zeros(34, 34);
        off[(0, 1)] = 1.0;
        off[(1, 0)] = -2.0;
        let v = b.eigenvectors();
        let c = CrossCovariance { matrix: v * off * v.transpose(), kind: CovarianceKind::Cross };
        assert!(stationarity_measure(&b, &c).unwrap().abs() < 1e-12);
        let zero = CrossCovariance { matrix: DMatrix::zeros(34, 34), kind: CovarianceKind::Cross };
        assert!(matches!(stationarity_measure(&b, &zero), Err(Error::Degenerate(_))));
    }

    #[test]
    fn true_gcsd_cases() {
        let b = karate_basis();
        let heat = builtin_kernel(BuiltinKernel::Heat).unwrap();
        let mex = builtin_kernel(BuiltinKernel::Mex).unwrap();
        let hh = true_gcsd(&b, &heat, &heat).unwrap();
        assert!(hh.values().iter().all(|v| v.re >= 0.0));
        let mh = true_gcsd(&b, &mex, &heat).unwrap();
        let lmax = b.lambda_max();
        for (l, v) in b.eigenvalues().iter().zip(mh.values()) {
            let t = l / lmax;
            let want = 5.0 * t * (-25.0 * t * t).exp() * (-10.0 * t).exp();
            assert!((v.re - want).abs() < 1e-15);
        }
        let z = true_gcsd(&b, &heat, &FilterKernel::zero()).unwrap();
        assert!(z.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn population_cross_covariance_is_local() {
        let g = karate_club();
        let l = laplacian(&g);
        let heat = builtin_kernel(BuiltinKernel::Heat).unwrap();
        let ds = builtin_kernel(BuiltinKernel::Ds).unwrap();
        // degree d filters give L = d + 1 taps in the hop bound
        for (d1, d2) in [(1, 1), (1, 2), (2, 1)] {
            let h1 = chebyshev_fit(&heat, d1, l.gershgorin_bound()).unwrap().filter.matrix(&l);
            let h2 = chebyshev_fit(&ds, d2, l.gershgorin_bound()).unwrap().filter.matrix(&l);
            let sigma = &h1 * h2.transpose();
            for i in 0..34 {
                let hops = g.hop_distances_from(i).unwrap();
                for j in 0..34 {
                    if hops[j].map_or(true, |h| h > d1 + d2) {
                        assert!(sigma[(i, j)].abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn correlated_mode_and_csv() {
        let b = karate_basis();
        let id = FilterKernel::identity();
        assert!(generate_jws_pair_with(&b, &id, &id, 2, 1, InputCoupling::Correlated { rho: 1.5 }).is_err());
        let (x, y) = generate_jws_pair_with(&b, &id, &id, 3, 1, InputCoupling::Correlated { rho: 1.0 }).unwrap();
        assert!((x.data() - y.data()).amax() < 1e-12);
        let back = SignalEnsemble::from_csv(&x.to_csv()).unwrap();
        assert_eq!(back, x);
        assert!(x.to_csv().starts_with("# n=34 R=3 seed=1\n"));
        assert!(SignalEnsemble::from_csv("# n=2 R=1 seed=1\n1,2\n3,4\n").is_err());
        assert!(SignalEnsemble::from_csv("1,2\n3\n").is_err());
    }
}
