//! Kernel matrices over a dataset and the standard twelve-kernel bank.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{check_finite, SymmetricMatrix};

/// Feature matrix with one column per sample, plus optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(values: DMatrix<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        check_finite(&values)?;
        if let Some(l) = &labels {
            validate_labels(l, values.ncols())?;
        }
        Ok(Self { values, labels })
    }

    pub fn features(&self) -> usize {
        self.values.nrows()
    }

    pub fn samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn with_labels(self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.values, Some(labels))
    }

    pub fn without_labels(self) -> Self {
        Self {
            values: self.values,
            labels: None,
        }
    }
}

/// Labels must cover `0..k` with no gaps, `k` the number of distinct values.
pub(crate) fn validate_labels(labels: &[usize], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::InvalidLabels(format!(
            "{} labels for {} samples",
            labels.len(),
            n
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; k];
    for &l in labels {
        seen[l] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidLabels(format!(
            "label {missing} unused while max label is {}",
            k - 1
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `exp(-|x - y|² / (t * d_max²))`
    Gaussian { t: f64 },
    /// `(a + xᵀy)^b`
    Polynomial { a: f64, b: u32 },
    Linear,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { t } if !(t > 0.0 && t.is_finite()) => {
                Err(Error::InvalidKernel(format!("gaussian scale t must be positive, got {t}")))
            }
            KernelSpec::Polynomial { a, .. } if !a.is_finite() => {
                Err(Error::InvalidKernel(format!("polynomial offset must be finite, got {a}")))
            }
            KernelSpec::Polynomial { b: 0, .. } => {
                Err(Error::InvalidKernel("polynomial exponent must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::Linear => "linear",
        }
    }

    /// Evaluates this kernel on `x`.
    pub fn build(&self, x: &Dataset) -> Result<KernelMatrix> {
        match *self {
            KernelSpec::Gaussian { t } => gaussian_kernel(x, t),
            KernelSpec::Polynomial { a, b } => polynomial_kernel(x, a, b),
            KernelSpec::Linear => linear_kernel(x),
        }
    }
}

impl fmt::Display for KernelSpec {
    /// Same syntax the command line accepts.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { t } => write!(f, "gaussian:{t}"),
            KernelSpec::Polynomial { a, b } => write!(f, "poly:{a},{b}"),
            KernelSpec::Linear => write!(f, "linear"),
        }
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidKernel(format!("cannot parse kernel `{s}`"));
        let spec = match s.split_once(':') {
            None if s == "linear" => KernelSpec::Linear,
            Some(("gaussian", t)) => KernelSpec::Gaussian {
                t: t.trim().parse().map_err(|_| bad())?,
            },
            Some(("poly", ab)) => {
                let (a, b) = ab.split_once(',').ok_or_else(bad)?;
                KernelSpec::Polynomial {
                    a: a.trim().parse().map_err(|_| bad())?,
                    b: b.trim().parse().map_err(|_| bad())?,
                }
            }
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A kernel evaluated on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    matrix: SymmetricMatrix,
    spec: Option<KernelSpec>,
    normalized: bool,
}

impl KernelMatrix {
    /// A kernel supplied directly, e.g. loaded from disk.
    pub fn precomputed(matrix: SymmetricMatrix) -> Self {
        Self {
            matrix,
            spec: None,
            normalized: false,
        }
    }

    pub(crate) fn from_parts(matrix: SymmetricMatrix, spec: Option<KernelSpec>, normalized: bool) -> Self {
        Self {
            matrix,
            spec,
            normalized,
        }
    }

    pub fn order(&self) -> usize {
        self.matrix.order()
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.matrix.as_matrix()
    }

    /// Generating kernel function; `None` for precomputed or combined kernels.
    pub fn spec(&self) -> Option<KernelSpec> {
        self.spec
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }
}

fn require_samples(x: &Dataset, min: usize) -> Result<()> {
    if x.samples() < min {
        return Err(Error::DegenerateDataset(format!(
            "need at least {min} samples, got {}",
            x.samples()
        )));
    }
    Ok(())
}

/// Squared Euclidean distances between sample columns.
pub fn pairwise_sq_dist(x: &Dataset) -> Result<SymmetricMatrix> {
    require_samples(x, 2)?;
    let v = x.values();
    let n = x.samples();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let s = v
                .column(i)
                .iter()
                .zip(v.column(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            d[(i, j)] = s;
            d[(j, i)] = s;
        }
    }
    Ok(SymmetricMatrix::from_exact(d))
}

pub fn gaussian_kernel(x: &Dataset, t: f64) -> Result<KernelMatrix> {
    let spec = KernelSpec::Gaussian { t };
    spec.validate()?;
    let d = pairwise_sq_dist(x)?;
    let d_max_sq = d.as_matrix().max();
    if d_max_sq <= 0.0 {
        return Err(Error::DegenerateDataset("all samples identical (d_max = 0)".into()));
    }
    let scale = t * d_max_sq;
    let k = d.as_matrix().map(|v| (-v / scale).exp());
    Ok(KernelMatrix::from_parts(SymmetricMatrix::from_exact(k), Some(spec), false))
}

/// Gram matrix `G[i][j] = x_iᵀ x_j`, computed once per unordered pair.
fn gram(x: &Dataset) -> DMatrix<f64> {
    let v = x.values();
    let n = x.samples();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let s = v.column(i).dot(&v.column(j));
            g[(i, j)] = s;
            g[(j, i)] = s;
        }
    }
    g
}

pub fn polynomial_kernel(x: &Dataset, a: f64, b: u32) -> Result<KernelMatrix> {
    let spec = KernelSpec::Polynomial { a, b };
    spec.validate()?;
    require_samples(x, 1)?;
    let k = gram(x).map(|g| (a + g).powi(b as i32));
    check_finite(&k)?;
    Ok(KernelMatrix::from_parts(SymmetricMatrix::from_exact(k), Some(spec), false))
}

pub fn linear_kernel(x: &Dataset) -> Result<KernelMatrix> {
    require_samples(x, 1)?;
    Ok(KernelMatrix::from_parts(
        SymmetricMatrix::from_exact(gram(x)),
        Some(KernelSpec::Linear),
        false,
    ))
}

/// Global min-max scaling of all entries onto `[0, 1]`.
pub fn normalize_kernel(k: &KernelMatrix) -> Result<KernelMatrix> {
    let m = k.as_matrix();
    let (lo, hi) = (m.min(), m.max());
    if hi <= lo {
        return Err(Error::ConstantKernel(lo));
    }
    let span = hi - lo;
    // Map the extremes exactly so the output range is [0, 1] regardless of rounding.
    let scaled = m.map(|v| {
        if v == lo {
            0.0
        } else if v == hi {
            1.0
        } else {
            ((v - lo) / span).clamp(0.0, 1.0)
        }
    });
    Ok(KernelMatrix::from_parts(
        SymmetricMatrix::from_exact(scaled),
        k.spec(),
        true,
    ))
}

/// Gaussian scales of the standard bank, ascending.
pub const BANK_GAUSSIAN_T: [f64; 7] = [0.01, 0.05, 0.1, 1.0, 10.0, 50.0, 100.0];
/// Polynomial `(a, b)` pairs of the standard bank, lexicographic.
pub const BANK_POLYNOMIAL: [(f64, u32); 4] = [(0.0, 2), (0.0, 4), (1.0, 2), (1.0, 4)];

/// Kernel specs of the standard bank in their fixed order.
pub fn standard_bank_specs() -> Vec<KernelSpec> {
    BANK_GAUSSIAN_T
        .iter()
        .map(|&t| KernelSpec::Gaussian { t })
        .chain(BANK_POLYNOMIAL.iter().map(|&(a, b)| KernelSpec::Polynomial { a, b }))
        .chain(std::iter::once(KernelSpec::Linear))
        .collect()
}

/// Seven gaussian, four polynomial and one linear kernel, each min-max normalized.
pub fn build_standard_bank(x: &Dataset) -> Result<Vec<KernelMatrix>> {
    standard_bank_specs()
        .iter()
        .map(|spec| normalize_kernel(&spec.build(x)?))
        .collect()
}
