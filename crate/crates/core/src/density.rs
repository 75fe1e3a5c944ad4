//! Spectral densities indexed by graph frequency, and their file formats.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    Psd,
    Csd,
    Coherence,
}

/// Complex-valued density on a frequency grid.
///
/// Periodogram-type estimates live on the eigenvalues (ties allowed, in
/// basis order); windowed graph Fourier estimates live on the grid `kτ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    frequencies: Vec<f64>,
    values: Vec<Complex64>,
    kind: DensityKind,
}

#[derive(Serialize, Deserialize)]
struct DensityJson {
    kind: DensityKind,
    frequencies: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

const KIND_TOL: f64 = 1e-10;

impl SpectralDensity {
    /// Builds a density, enforcing the per-kind invariants: `psd` values are
    /// real and nonnegative, `coherence` values lie in `[0, 1]` (both up to
    /// `1e-10`), and frequencies never decrease.
    pub fn new(frequencies: Vec<f64>, values: Vec<Complex64>, kind: DensityKind) -> Result<Self> {
        let d = Self::unchecked(frequencies, values, kind)?;
        match kind {
            DensityKind::Psd => {
                if let Some(v) = d.values.iter().find(|v| v.re < -KIND_TOL || v.im.abs() > KIND_TOL) {
                    return Err(invalid("values", format!("psd value {v} is not real nonnegative")));
                }
            }
            DensityKind::Coherence => {
                if let Some(v) = d
                    .values
                    .iter()
                    .find(|v| v.re < -KIND_TOL || v.re > 1.0 + KIND_TOL || v.im.abs() > KIND_TOL)
                {
                    return Err(invalid("values", format!("coherence value {v} outside [0, 1]")));
                }
            }
            DensityKind::Csd => {}
        }
        Ok(d)
    }

    pub fn from_real(frequencies: Vec<f64>, values: Vec<f64>, kind: DensityKind) -> Result<Self> {
        Self::new(frequencies, values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(), kind)
    }

    /// Skips the per-kind value checks; grid checks still apply. Used for
    /// M-type estimates, which are not constrained to be nonnegative.
    pub(crate) fn unchecked(frequencies: Vec<f64>, values: Vec<Complex64>, kind: DensityKind) -> Result<Self> {
        if frequencies.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: frequencies.len(), got: values.len() });
        }
        if frequencies.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("frequencies", "must be nondecreasing"));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(invalid("values", "non-finite density value"));
        }
        Ok(Self { frequencies, values, kind })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.im).collect()
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Elementwise conjugate, same kind and grid.
    pub fn conj(&self) -> Self {
        Self {
            frequencies: self.frequencies.clone(),
            values: self.values.iter().map(|v| v.conj()).collect(),
            kind: self.kind,
        }
    }

    /// Index of the largest modulus; first index on ties.
    pub fn argmax_abs(&self) -> Option<usize> {
        argmax(self.values.iter().map(|v| v.norm()))
    }

    /// Index of the largest real part; first index on ties.
    pub fn argmax_re(&self) -> Option<usize> {
        argmax(self.values.iter().map(|v| v.re))
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.frequencies == other.frequencies
    }

    pub(crate) fn check_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `{ "kind": ..., "frequencies": [...], "re": [...], "im": [...] }`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("density serialisation cannot fail")
    }

    /// Parses the JSON form; per-kind value checks are not re-applied so
    /// that every written file reads back.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(serde_json::from_str(text)?)
    }

    fn from_doc(doc: DensityJson) -> Result<Self> {
        if doc.re.len() != doc.im.len() {
            return Err(Error::DimensionMismatch { expected: doc.re.len(), got: doc.im.len() });
        }
        let values = doc.re.into_iter().zip(doc.im).map(|(re, im)| Complex64::new(re, im)).collect();
        Self::unchecked(doc.frequencies, values, doc.kind)
    }

    /// CSV with header `lambda,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,re,im\n");
        for (f, v) in self.frequencies.iter().zip(&self.values) {
            let _ = writeln!(out, "{f},{},{}", v.re, v.im);
        }
        out
    }

    pub fn from_csv(text: &str, kind: DensityKind) -> Result<Self> {
        let mut freqs = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("lambda")) {
                continue;
            }
            let err = |msg: &str| Error::Parse { line: lineno + 1, msg: msg.to_string() };
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err("non-numeric field"))?;
            if fields.len() != 3 {
                return Err(err("expected `lambda,re,im`"));
            }
            freqs.push(fields[0]);
            values.push(Complex64::new(fields[1], fields[2]));
        }
        Self::unchecked(freqs, values, kind)
    }
}

impl Serialize for SpectralDensity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DensityJson { kind: self.kind, frequencies: self.frequencies.clone(), re: self.re(), im: self.im() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpectralDensity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = DensityJson::deserialize(d)?;
        Self::from_doc(doc).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
