//! Spectral kernels, exact spectral filtering and Chebyshev polynomial filters.
//!
//! A kernel `h` acts on a signal through the shift operator's spectrum,
//! `H = V diag(h(λ)) Vᵀ`. [`exact_filter`] forms that product directly from a
//! [`SpectralBasis`]; [`ChebyshevFilter`] approximates `h` by a polynomial in
//! `S` and applies it with the three-term recurrence, so it never needs the
//! eigendecomposition and is local: an order-`L` filter mixes only nodes
//! within `L` hops.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{ShiftOperator, SpectralBasis};

/// Points used to check finiteness and to measure Chebyshev fit error.
pub const GRID_POINTS: usize = 1024;

/// Default polynomial order for Chebyshev filters.
pub const DEFAULT_CHEBYSHEV_ORDER: usize = 30;

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Scalar frequency response.
///
/// When `normalized_domain` is set the evaluator expects `λ / λ_max ∈ [0, 1]`
/// and callers supply the scale through [`FilterKernel::response`].
#[derive(Clone)]
pub struct FilterKernel {
    name: String,
    normalized_domain: bool,
    evaluator: Evaluator,
}

impl fmt::Debug for FilterKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilterKernel")
            .field("name", &self.name)
            .field("normalized_domain", &self.normalized_domain)
            .finish()
    }
}

impl FilterKernel {
    /// Wraps `evaluator`, checking it is finite on `[0, 1]`.
    pub fn new(
        name: impl Into<String>,
        normalized_domain: bool,
        evaluator: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let k = Self {
            name: name.into(),
            normalized_domain,
            evaluator: Arc::new(evaluator),
        };
        k.check_finite_on(1.0)?;
        Ok(k)
    }

    pub fn constant(value: f64) -> Self {
        Self::new(format!("constant({value})"), false, move |_| value)
            .expect("finite constant kernel")
    }

    pub fn identity() -> Self {
        Self::new("identity", false, |_| 1.0).expect("identity kernel")
    }

    pub fn zero() -> Self {
        Self::new("zero", false, |_| 0.0).expect("zero kernel")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn normalized_domain(&self) -> bool {
        self.normalized_domain
    }

    /// `h(λ)`, with `λ` rescaled by `lambda_max` for normalized kernels.
    pub fn response(&self, lambda: f64, lambda_max: f64) -> f64 {
        if self.normalized_domain {
            (self.evaluator)(lambda / lambda_max)
        } else {
            (self.evaluator)(lambda)
        }
    }

    /// Frequency response at every eigenvalue of `basis`.
    pub fn responses(&self, basis: &SpectralBasis) -> DVector<f64> {
        let lmax = basis.lambda_max();
        basis.eigenvalues().map(|l| self.response(l, lmax))
    }

    /// Samples the kernel at [`GRID_POINTS`] points of `[0, lambda_max]`.
    pub fn check_finite_on(&self, lambda_max: f64) -> Result<()> {
        for i in 0..GRID_POINTS {
            let lambda = lambda_max * i as f64 / (GRID_POINTS - 1) as f64;
            let v = self.response(lambda, lambda_max);
            if !v.is_finite() {
                return Err(Error::NonFiniteKernel { name: self.name.clone(), lambda });
            }
        }
        Ok(())
    }
}

/// Kernels with closed forms used throughout the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKernel {
    /// `5λ exp(-25λ²)` on normalized frequency.
    Mex,
    /// `exp(-10λ)` on normalized frequency.
    Heat,
    /// `sin(15λ) exp(-5λ)` on normalized frequency.
    Ds,
    /// `λ exp(-λ)` on normalized frequency.
    High,
    /// `exp(-λ² / σ²)` on raw frequency.
    WftGaussian { sigma2: f64 },
    Identity,
    Zero,
}

impl fmt::Display for BuiltinKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mex => f.write_str("mex"),
            Self::Heat => f.write_str("heat"),
            Self::Ds => f.write_str("ds"),
            Self::High => f.write_str("high"),
            Self::WftGaussian { sigma2 } => write!(f, "wft_gaussian:{sigma2}"),
            Self::Identity => f.write_str("identity"),
            Self::Zero => f.write_str("zero"),
        }
    }
}

impl FromStr for BuiltinKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "mex" => Ok(Self::Mex),
            "heat" => Ok(Self::Heat),
            "ds" => Ok(Self::Ds),
            "high" => Ok(Self::High),
            "identity" => Ok(Self::Identity),
            "zero" => Ok(Self::Zero),
            _ => match s.strip_prefix("wft_gaussian:") {
                Some(v) => {
                    let sigma2 = v.parse::<f64>().map_err(|_| Error::UnknownKernel(s.into()))?;
                    Ok(Self::WftGaussian { sigma2 })
                }
                None => Err(Error::UnknownKernel(s.into())),
            },
        }
    }
}

pub fn builtin_kernel(kind: BuiltinKernel) -> Result<FilterKernel> {
    let name = kind.to_string();
    match kind {
        BuiltinKernel::Mex => FilterKernel::new(name, true, |l| 5.0 * l * (-25.0 * l * l).exp()),
        BuiltinKernel::Heat => FilterKernel::new(name, true, |l| (-10.0 * l).exp()),
        BuiltinKernel::Ds => FilterKernel::new(name, true, |l| (15.0 * l).sin() * (-5.0 * l).exp()),
        BuiltinKernel::High => FilterKernel::new(name, true, |l| l * (-l).exp()),
        BuiltinKernel::WftGaussian { sigma2 } => {
            if !(sigma2 > 0.0 && sigma2.is_finite()) {
                return Err(invalid("sigma2", format!("must be positive, got {sigma2}")));
            }
            FilterKernel::new(name, false, move |l| (-l * l / sigma2).exp())
        }
        BuiltinKernel::Identity => Ok(FilterKernel::identity()),
        BuiltinKernel::Zero => Ok(FilterKernel::zero()),
    }
}

/// `V diag(h(λ)) Vᵀ x`.
pub fn exact_filter(basis: &SpectralBasis, kernel: &FilterKernel, x: &DVector<f64>) -> Result<DVector<f64>> {
    basis.check_signal(x.len())?;
    kernel.check_finite_on(basis.lambda_max())?;
    let h = kernel.responses(basis);
    let v = basis.eigenvectors();
    let mut spec = v.tr_mul(x);
    spec.component_mul_assign(&h);
    Ok(v * spec)
}

/// The dense filter matrix `V diag(h(λ)) Vᵀ`.
pub fn filter_matrix(basis: &SpectralBasis, kernel: &FilterKernel) -> Result<DMatrix<f64>> {
    kernel.check_finite_on(basis.lambda_max())?;
    Ok(basis.synthesize(&kernel.responses(basis)))
}

/// `diag(Vᵀ H V)`.
pub fn frequency_response(basis: &SpectralBasis, filter_matrix: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = basis.n();
    if filter_matrix.nrows() != n || filter_matrix.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "filter matrix is {}x{}, basis has dimension {n}",
            filter_matrix.nrows(),
            filter_matrix.ncols()
        )));
    }
    let v = basis.eigenvectors();
    let hv = filter_matrix * v;
    Ok(DVector::from_iterator(n, (0..n).map(|l| v.column(l).dot(&hv.column(l)))))
}

/// Chebyshev series `c₀/2 + Σ_{k≥1} c_k T_k(2λ/λ_max - 1)` on `[0, λ_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevFilter {
    coeffs: Vec<f64>,
    lambda_max: f64,
}

/// A fitted filter together with its maximum absolute error against the
/// kernel on a [`GRID_POINTS`]-point grid of the interval.
#[derive(Debug, Clone)]
pub struct ChebyshevFit {
    pub filter: ChebyshevFilter,
    pub grid_error: f64,
}

#[derive(Serialize, Deserialize)]
struct FilterJson {
    kind: String,
    order: usize,
    lambda_max: f64,
    coeffs: Vec<f64>,
}

impl ChebyshevFilter {
    pub fn from_coeffs(coeffs: Vec<f64>, lambda_max: f64) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(invalid("coeffs", "order must be at least 1"));
        }
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(invalid("lambda_max", format!("must be positive, got {lambda_max}")));
        }
        Ok(Self { coeffs, lambda_max })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Polynomial value at `lambda` (Clenshaw recurrence).
    pub fn eval(&self, lambda: f64) -> f64 {
        let t = 2.0 * lambda / self.lambda_max - 1.0;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + 0.5 * self.coeffs[0]
    }

    /// Polynomial frequency response at every eigenvalue of `basis`.
    pub fn responses(&self, basis: &SpectralBasis) -> DVector<f64> {
        basis.eigenvalues().map(|l| self.eval(l))
    }

    /// Dense matrix `p(S)`, built column by column with the recurrence.
    pub fn matrix(&self, s: &ShiftOperator) -> DMatrix<f64> {
        let n = s.n();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            out.set_column(j, &recurrence(s, self, &e));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&FilterJson {
            kind: "chebyshev".into(),
            order: self.order(),
            lambda_max: self.lambda_max,
            coeffs: self.coeffs.clone(),
        })
        .expect("filter serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FilterJson = serde_json::from_str(text)?;
        if doc.kind != "chebyshev" {
            return Err(invalid("kind", format!("expected `chebyshev`, got `{}`", doc.kind)));
        }
        if doc.coeffs.len() != doc.order + 1 {
            return Err(invalid(
                "coeffs",
                format!("order {} needs {} coefficients, got {}", doc.order, doc.order + 1, doc.coeffs.len()),
            ));
        }
        Self::from_coeffs(doc.coeffs, doc.lambda_max)
    }
}

/// Interpolates `kernel` at the `order + 1` Chebyshev–Gauss nodes of
/// `[0, lambda_max]`. Normalized kernels are scaled by the same `lambda_max`.
pub fn chebyshev_fit(kernel: &FilterKernel, order: usize, lambda_max: f64) -> Result<ChebyshevFit> {
    if order == 0 {
        return Err(invalid("order", "must be at least 1"));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(invalid("lambda_max", format!("must be positive, got {lambda_max}")));
    }
    kernel.check_finite_on(lambda_max)?;
    let m = order + 1;
    let theta: Vec<f64> = (0..m)
        .map(|j| std::f64::consts::PI * (j as f64 + 0.5) / m as f64)
        .collect();
    let samples: Vec<f64> = theta
        .iter()
        .map(|&th| kernel.response(0.5 * lambda_max * (th.cos() + 1.0), lambda_max))
        .collect();
    let coeffs: Vec<f64> = (0..m)
        .map(|k| {
            let s: f64 = theta
                .iter()
                .zip(&samples)
                .map(|(&th, &f)| f * (k as f64 * th).cos())
                .sum();
            2.0 * s / m as f64
        })
        .collect();
    let filter = ChebyshevFilter { coeffs, lambda_max };
    let grid_error = (0..GRID_POINTS)
        .map(|i| {
            let l = lambda_max * i as f64 / (GRID_POINTS - 1) as f64;
            (filter.eval(l) - kernel.response(l, lambda_max)).abs()
        })
        .fold(0.0, f64::max);
    Ok(ChebyshevFit { filter, grid_error })
}

/// Applies `filter` to `x` without diagonalising `s`.
///
/// Accurate only when `filter.lambda_max()` bounds the spectrum of `s`.
pub fn chebyshev_apply(s: &ShiftOperator, filter: &ChebyshevFilter, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), got: x.len() });
    }
    Ok(recurrence(s, filter, x))
}

fn recurrence(s: &ShiftOperator, filter: &ChebyshevFilter, x: &DVector<f64>) -> DVector<f64> {
    let scale = 2.0 / filter.lambda_max;
    // shifted operator S' = (2/λmax) S - I maps the spectrum into [-1, 1]
    let apply = |v: &DVector<f64>| -> DVector<f64> { s.matrix() * v * scale - v };
    let c = &filter.coeffs;
    let mut t_prev = x.clone();
    let mut t_cur = apply(x);
    let mut out = &t_prev * (0.5 * c[0]) + &t_cur * c[1];
    for &ck in c.iter().skip(2) {
        let t_next = apply(&t_cur) * 2.0 - &t_prev;
        out += &t_next * ck;
        t_prev = t_cur;
        t_cur = t_next;
    }
    out
}
