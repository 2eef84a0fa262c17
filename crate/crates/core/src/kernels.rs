//! Positive definite kernels and Gram matrices.
//!
//! Two kernels are provided: the normalized Gaussian kernel on `R^d`
//!
//! ```text
//! k(x, y) = 1 / (sqrt(2 pi) sigma) * exp(-|x - y|^2 / (2 sigma^2))
//! ```
//!
//! with a single shared bandwidth and the Euclidean norm, and the delta
//! (indicator) kernel on a finite list of class labels.

use std::borrow::Borrow;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{KbrError, Result};

/// Bandwidth of the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernelParams {
    sigma: f64,
}

impl GaussianKernelParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(KbrError::invalid(format!(
                "kernel bandwidth must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Index into an ordered class list `{C_1, ..., C_g}` (zero based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassLabel(pub usize);

impl ClassLabel {
    pub fn id(self) -> usize {
        self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0 + 1)
    }
}

/// Identifies the kernel (and parameters) that produced a matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelDescriptor {
    Gaussian { sigma: f64 },
    Delta,
    /// Entries supplied directly by the caller.
    Precomputed,
}

impl KernelDescriptor {
    pub fn sigma(&self) -> Option<f64> {
        match self {
            KernelDescriptor::Gaussian { sigma } => Some(*sigma),
            _ => None,
        }
    }
}

pub trait Kernel: Sync {
    type Input: ?Sized;

    fn eval(&self, a: &Self::Input, b: &Self::Input) -> Result<f64>;

    fn descriptor(&self) -> KernelDescriptor;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    pub params: GaussianKernelParams,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        Ok(Self {
            params: GaussianKernelParams::new(sigma)?,
        })
    }
}

impl Kernel for GaussianKernel {
    type Input = [f64];

    fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        gaussian_kernel(a, b, &self.params)
    }

    fn descriptor(&self) -> KernelDescriptor {
        KernelDescriptor::Gaussian {
            sigma: self.params.sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeltaKernel;

impl Kernel for DeltaKernel {
    type Input = ClassLabel;

    fn eval(&self, a: &ClassLabel, b: &ClassLabel) -> Result<f64> {
        Ok(delta_kernel(*a, *b))
    }

    fn descriptor(&self) -> KernelDescriptor {
        KernelDescriptor::Delta
    }
}

pub fn gaussian_kernel(x: &[f64], y: &[f64], params: &GaussianKernelParams) -> Result<f64> {
    if x.is_empty() {
        return Err(KbrError::invalid("kernel inputs must have dimension >= 1"));
    }
    if x.len() != y.len() {
        return Err(KbrError::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let sigma = params.sigma;
    Ok((-sq / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma))
}

pub fn delta_kernel(a: ClassLabel, b: ClassLabel) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Symmetric kernel evaluation matrix together with the kernel that made it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    kernel: KernelDescriptor,
}

impl GramMatrix {
    /// Wraps caller-supplied entries. The matrix must be square and exactly
    /// symmetric.
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(KbrError::invalid(format!(
                "gram matrix must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries != entries.transpose() {
            return Err(KbrError::invalid("gram matrix must be symmetric"));
        }
        Ok(Self {
            entries,
            kernel: KernelDescriptor::Precomputed,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn kernel(&self) -> KernelDescriptor {
        self.kernel
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }
}

pub fn gram_matrix<K, P>(points: &[P], kernel: &K) -> Result<GramMatrix>
where
    K: Kernel + ?Sized,
    P: Borrow<K::Input>,
{
    let n = points.len();
    if n == 0 {
        return Err(KbrError::invalid("gram matrix needs at least one point"));
    }
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(points[i].borrow(), points[j].borrow())?;
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(GramMatrix {
        entries,
        kernel: kernel.descriptor(),
    })
}

/// `(k(points[0], query), ..., k(points[n-1], query))`.
pub fn kernel_vector<K, P>(points: &[P], query: &K::Input, kernel: &K) -> Result<DVector<f64>>
where
    K: Kernel + ?Sized,
    P: Borrow<K::Input>,
{
    let values = points
        .iter()
        .map(|p| kernel.eval(p.borrow(), query))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}
