//! Dense complex linear algebra on small tensor-product Hilbert spaces.
//!
//! Subsystems are ordered system first, environment second. For dims
//! `[d0, d1, ..., dn]` the flat index of the product basis state
//! `|i0>|i1>...|in>` is `((i0 * d1 + i1) * d2 + i2) ...`, i.e. the last factor
//! varies fastest, which is the index order produced by the Kronecker product.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Absolute tolerance on `max|A - A^dagger|` for an operator to count as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Tolerance used for the density-matrix invariants (Hermiticity, unit trace,
/// positivity).
pub const DENSITY_TOL: f64 = 1e-10;

pub const DEFAULT_MAX_DIMENSION: usize = 4096;

/// Environment variable overriding [`DEFAULT_MAX_DIMENSION`].
pub const MAX_DIMENSION_VAR: &str = "POINTER_SIM_MAX_DIM";

/// The largest total Hilbert-space dimension any operation will build.
///
/// Read once from `POINTER_SIM_MAX_DIM`; falls back to 4096 when the variable
/// is unset or unparsable.
pub fn max_dimension() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var(MAX_DIMENSION_VAR)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&v| v > 0)
            .unwrap_or(DEFAULT_MAX_DIMENSION)
    })
}

pub(crate) fn check_capacity(requested: usize, limit: usize) -> Result<()> {
    if requested > limit {
        Err(Error::Capacity { requested, limit })
    } else {
        Ok(())
    }
}

fn check_dims(field: &str, dims: &[usize], len: usize) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::validation(field, "subsystem dimensions must be positive"));
    }
    let product = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::validation(field, "dimension product overflows"))?;
    if product != len {
        return Err(Error::validation(
            field,
            format!("dimension product {product} does not match length {len}"),
        ));
    }
    Ok(())
}

fn all_finite<'a>(mut values: impl Iterator<Item = &'a C64>) -> bool {
    values.all(|z| z.re.is_finite() && z.im.is_finite())
}

pub(crate) fn hermitian_residual(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn kron_matrix(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    DMatrix::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// A square operator on a tensor-product space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dims: Vec<usize>,
    matrix: DMatrix<C64>,
    hermitian: bool,
}

impl Operator {
    pub fn new(dims: Vec<usize>, matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::validation("operator", "matrix is not square"));
        }
        check_dims("operator.dims", &dims, matrix.nrows())?;
        if !all_finite(matrix.iter()) {
            return Err(Error::validation("operator", "entries must be finite"));
        }
        let hermitian = hermitian_residual(&matrix) <= HERMITIAN_TOL;
        Ok(Self {
            dims,
            matrix,
            hermitian,
        })
    }

    /// Operator on a single subsystem of dimension `matrix.nrows()`.
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        let n = matrix.nrows();
        Self::new(vec![n], matrix)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            dims: vec![n],
            matrix: DMatrix::identity(n, n),
            hermitian: true,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            dims: vec![n],
            matrix: DMatrix::zeros(n, n),
            hermitian: true,
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self {
            dims: vec![n],
            matrix,
            hermitian: values.iter().all(|v| v.is_finite()),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn hermitian_residual(&self) -> f64 {
        hermitian_residual(&self.matrix)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            dims: self.dims.clone(),
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    /// Kronecker product `self ⊗ other` with the process-wide dimension cap.
    pub fn kron(&self, other: &Operator) -> Result<Operator> {
        self.kron_with_limit(other, max_dimension())
    }

    pub fn kron_with_limit(&self, other: &Operator, limit: usize) -> Result<Operator> {
        let requested = self
            .dim()
            .checked_mul(other.dim())
            .ok_or(Error::Capacity {
                requested: usize::MAX,
                limit,
            })?;
        check_capacity(requested, limit)?;
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Ok(Operator {
            dims,
            matrix: kron_matrix(&self.matrix, &other.matrix),
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn plus(&self, other: &Operator) -> Result<Operator> {
        if self.dims != other.dims {
            return Err(Error::validation(
                "operator",
                format!("cannot add operators with dims {:?} and {:?}", self.dims, other.dims),
            ));
        }
        let matrix = &self.matrix + &other.matrix;
        let hermitian = hermitian_residual(&matrix) <= HERMITIAN_TOL;
        Ok(Operator {
            dims: self.dims.clone(),
            matrix,
            hermitian,
        })
    }

    pub fn scaled(&self, factor: f64) -> Operator {
        Operator {
            dims: self.dims.clone(),
            matrix: &self.matrix * C64::new(factor, 0.0),
            hermitian: self.hermitian && factor.is_finite(),
        }
    }

    /// `self * other - other * self`, as a plain matrix (generally not Hermitian).
    pub fn commutator(&self, other: &Operator) -> Result<DMatrix<C64>> {
        if self.dim() != other.dim() {
            return Err(Error::validation("operator", "commutator of mismatched dimensions"));
        }
        Ok(&self.matrix * &other.matrix - &other.matrix * &self.matrix)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return Err(Error::validation(
                "state",
                format!("state of dimension {} for operator of dimension {}", psi.dim(), self.dim()),
            ));
        }
        Ok(StateVector {
            dims: psi.dims.clone(),
            amplitudes: &self.matrix * &psi.amplitudes,
        })
    }

    /// `<psi|A|psi>` without normalization.
    pub fn expectation(&self, psi: &StateVector) -> Result<C64> {
        let applied = self.apply(psi)?;
        Ok(psi.amplitudes.dotc(&applied.amplitudes))
    }
}

/// Kronecker product `a ⊗ b`; dims are concatenated.
pub fn tensor_product(a: &Operator, b: &Operator) -> Result<Operator> {
    a.kron(b)
}

/// Eigendecomposition `H = V diag(E) V^dagger` of a Hermitian operator, reused
/// for every time at which the generated propagator is needed.
#[derive(Clone, Debug)]
pub struct Spectrum {
    dims: Vec<usize>,
    energies: DVector<f64>,
    vectors: DMatrix<C64>,
}

impl Spectrum {
    pub fn of(h: &Operator) -> Result<Self> {
        if !h.is_hermitian() {
            return Err(Error::validation(
                "hamiltonian",
                format!("operator is not Hermitian (residual {:e})", h.hermitian_residual()),
            ));
        }
        // symmetrize so round-off in the input cannot leak anti-Hermitian parts
        let sym = (h.matrix() + h.matrix().adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(sym);
        Ok(Self {
            dims: h.dims.clone(),
            energies: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    pub fn vectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    fn phases(&self, dt: f64, hbar: f64) -> DVector<C64> {
        self.energies
            .map(|e| C64::from_polar(1.0, -e * dt / hbar))
    }

    /// `exp(-i H dt / hbar)`.
    pub fn propagator(&self, dt: f64, hbar: f64) -> Operator {
        let phases = self.phases(dt, hbar);
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        Operator {
            dims: self.dims.clone(),
            matrix: scaled * self.vectors.adjoint(),
            hermitian: false,
        }
    }

    /// Coefficients of `psi` in the eigenbasis, `V^dagger psi`.
    pub fn coefficients(&self, psi: &StateVector) -> Result<DVector<C64>> {
        if psi.dim() != self.energies.len() {
            return Err(Error::validation("state", "dimension does not match the Hamiltonian"));
        }
        Ok(self.vectors.adjoint() * &psi.amplitudes)
    }

    /// Rebuilds the state evolved by `dt` from eigenbasis coefficients.
    pub fn evolve_coefficients(&self, coefficients: &DVector<C64>, dt: f64, hbar: f64) -> DVector<C64> {
        let phased = coefficients.component_mul(&self.phases(dt, hbar));
        &self.vectors * phased
    }

    pub fn evolve(&self, psi: &StateVector, dt: f64, hbar: f64) -> Result<StateVector> {
        let c = self.coefficients(psi)?;
        Ok(StateVector {
            dims: psi.dims.clone(),
            amplitudes: self.evolve_coefficients(&c, dt, hbar),
        })
    }
}

/// `U = exp(-i h dt / hbar)` from the eigendecomposition of `h`.
pub fn hermitian_propagator(h: &Operator, dt: f64, hbar: f64) -> Result<Operator> {
    if !dt.is_finite() {
        return Err(Error::validation("dt", "time step must be finite"));
    }
    if !(hbar > 0.0) {
        return Err(Error::validation("hbar", "must be positive"));
    }
    Ok(Spectrum::of(h)?.propagator(dt, hbar))
}

/// A vector of complex amplitudes over a tensor-product basis. Not required to
/// be normalized; propagation preserves whatever norm it is given.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dims: Vec<usize>,
    amplitudes: DVector<C64>,
}

impl StateVector {
    pub fn new(dims: Vec<usize>, amplitudes: DVector<C64>) -> Result<Self> {
        check_dims("state.dims", &dims, amplitudes.len())?;
        if !all_finite(amplitudes.iter()) {
            return Err(Error::validation("state", "amplitudes must be finite"));
        }
        Ok(Self { dims, amplitudes })
    }

    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let n = amplitudes.len();
        Self::new(vec![n], DVector::from_vec(amplitudes))
    }

    /// The `k`-th computational basis vector of an `n`-dimensional space.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut amplitudes = DVector::zeros(n);
        amplitudes[k] = C64::new(1.0, 0.0);
        Self {
            dims: vec![n],
            amplitudes,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<StateVector> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(Error::validation("state", "cannot normalize a zero vector"));
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, factor: C64) -> StateVector {
        StateVector {
            dims: self.dims.clone(),
            amplitudes: &self.amplitudes * factor,
        }
    }

    pub fn plus(&self, other: &StateVector) -> Result<StateVector> {
        if self.dims != other.dims {
            return Err(Error::validation("state", "cannot add states with different dims"));
        }
        Ok(StateVector {
            dims: self.dims.clone(),
            amplitudes: &self.amplitudes + &other.amplitudes,
        })
    }

    /// Adds `factor * other` in place.
    pub fn accumulate(&mut self, factor: C64, other: &StateVector) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::validation("state", "cannot add states with different dims"));
        }
        self.amplitudes.axpy(factor, &other.amplitudes, C64::new(1.0, 0.0));
        Ok(())
    }

    pub fn kron(&self, other: &StateVector) -> Result<StateVector> {
        let n = self.dim() * other.dim();
        check_capacity(n, max_dimension())?;
        let m = other.dim();
        let amplitudes = DVector::from_fn(n, |i, _| self.amplitudes[i / m] * other.amplitudes[i % m]);
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Ok(StateVector { dims, amplitudes })
    }

    /// The same amplitudes viewed with a different factorization.
    pub fn with_dims(&self, dims: Vec<usize>) -> Result<StateVector> {
        check_dims("state.dims", &dims, self.dim())?;
        Ok(StateVector {
            dims,
            amplitudes: self.amplitudes.clone(),
        })
    }
}

/// `<a|b>`, conjugate-linear in `a`.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<C64> {
    if a.dims != b.dims {
        return Err(Error::validation(
            "state",
            format!("inner product of dims {:?} and {:?}", a.dims, b.dims),
        ));
    }
    Ok(a.amplitudes.dotc(&b.amplitudes))
}

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::validation("density", "matrix must be square and non-empty"));
        }
        if !all_finite(matrix.iter()) {
            return Err(Error::validation("density", "entries must be finite"));
        }
        let residual = hermitian_residual(&matrix);
        if residual > DENSITY_TOL {
            return Err(Error::validation("density", format!("not Hermitian (residual {residual:e})")));
        }
        let trace = matrix.trace();
        if (trace - C64::new(1.0, 0.0)).norm() > DENSITY_TOL {
            return Err(Error::validation("density", format!("trace {trace} is not 1")));
        }
        let rho = Self { matrix };
        let min_eig = rho.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -DENSITY_TOL {
            return Err(Error::validation("density", format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(rho)
    }

    /// `|psi><psi|` for a normalized state.
    pub fn from_pure(psi: &StateVector) -> Result<Self> {
        if !psi.is_normalized(1e-9) {
            return Err(Error::validation("state", format!("norm {} is not 1", psi.norm())));
        }
        Self::new(&psi.amplitudes * psi.amplitudes.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn element(&self, i: usize, j: usize) -> C64 {
        self.matrix[(i, j)]
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(sym).eigenvalues.iter().copied().collect()
    }

    /// `B^dagger rho B` for a unitary change of basis whose columns are the new
    /// basis vectors.
    pub fn in_basis(&self, basis: &DMatrix<C64>) -> Result<DensityMatrix> {
        if basis.shape() != self.matrix.shape() {
            return Err(Error::validation("basis", "shape does not match the density matrix"));
        }
        Ok(DensityMatrix {
            matrix: basis.adjoint() * &self.matrix * basis,
        })
    }
}

struct Split {
    keep_dim: usize,
    stride: usize,
}

fn split(dims: &[usize], keep: usize) -> Result<Split> {
    if keep >= dims.len() {
        return Err(Error::validation(
            "keep",
            format!("subsystem index {keep} out of range for {} subsystems", dims.len()),
        ));
    }
    Ok(Split {
        keep_dim: dims[keep],
        stride: dims[keep + 1..].iter().product(),
    })
}

impl Split {
    /// Flat indices whose `keep` digit is zero; each labels one configuration
    /// of the traced-out subsystems.
    fn rest_offsets(&self, total: usize) -> impl Iterator<Item = usize> + '_ {
        (0..total).filter(move |i| (i / self.stride).is_multiple_of(self.keep_dim))
    }
}

/// Traces out every subsystem except `keep`.
pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], keep: usize) -> Result<DensityMatrix> {
    check_dims("dims", dims, rho.dim())?;
    let s = split(dims, keep)?;
    let mut out = DMatrix::<C64>::zeros(s.keep_dim, s.keep_dim);
    for r in s.rest_offsets(rho.dim()) {
        for a in 0..s.keep_dim {
            for b in 0..s.keep_dim {
                out[(a, b)] += rho.matrix[(r + a * s.stride, r + b * s.stride)];
            }
        }
    }
    DensityMatrix::new(out)
}

/// Reduced density matrix of subsystem `keep` for a normalized pure state,
/// without forming the full projector.
pub fn reduce_pure(psi: &StateVector, keep: usize) -> Result<DensityMatrix> {
    if !psi.is_normalized(1e-9) {
        return Err(Error::validation("state", format!("norm {} is not 1", psi.norm())));
    }
    let s = split(&psi.dims, keep)?;
    let amps = &psi.amplitudes;
    let mut out = DMatrix::<C64>::zeros(s.keep_dim, s.keep_dim);
    for r in s.rest_offsets(psi.dim()) {
        for a in 0..s.keep_dim {
            let pa = amps[r + a * s.stride];
            for b in 0..s.keep_dim {
                out[(a, b)] += pa * amps[r + b * s.stride].conj();
            }
        }
    }
    DensityMatrix::new(out)
}
