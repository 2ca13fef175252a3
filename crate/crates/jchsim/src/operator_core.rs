//! Truncated Fock/two-level operator algebra.
//!
//! Per-site basis index is `2 * photons + atom` with `atom = 0` for |g> and
//! `atom = 1` for |e>. Site 0 is the leftmost (slowest-varying) tensor factor.

use std::ops::{Add, Mul, Sub};

use ndarray::{linalg::kron, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, re};
use crate::C64;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const POSITIVITY_TOL: f64 = 1e-8;
const NORM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertDims {
    n_fock: usize,
    n_cavities: usize,
}

impl HilbertDims {
    pub fn new(n_fock: usize, n_cavities: usize) -> Result<Self> {
        if n_fock < 2 {
            return Err(Error::InvalidDims(format!(
                "n_fock = {n_fock}, the two-excitation manifold needs n_fock >= 2"
            )));
        }
        if !(1..=2).contains(&n_cavities) {
            return Err(Error::InvalidDims(format!(
                "n_cavities = {n_cavities}, must be 1 or 2"
            )));
        }
        Ok(Self { n_fock, n_cavities })
    }

    pub fn n_fock(&self) -> usize {
        self.n_fock
    }

    pub fn n_cavities(&self) -> usize {
        self.n_cavities
    }

    pub fn photon_dim(&self) -> usize {
        self.n_fock + 1
    }

    pub fn site_dim(&self) -> usize {
        2 * (self.n_fock + 1)
    }

    pub fn total_dim(&self) -> usize {
        self.site_dim().pow(self.n_cavities as u32)
    }

    /// Same cutoff, one cavity.
    pub fn single_site(&self) -> HilbertDims {
        HilbertDims {
            n_fock: self.n_fock,
            n_cavities: 1,
        }
    }

    pub fn site_index(photons: usize, excited: bool) -> usize {
        2 * photons + usize::from(excited)
    }

    /// (photons, excited) of a per-site index.
    pub fn site_state(index: usize) -> (usize, bool) {
        (index / 2, index % 2 == 1)
    }

    /// Full-space index of a product of per-site basis indices.
    pub fn product_index(&self, site_indices: &[usize]) -> Result<usize> {
        if site_indices.len() != self.n_cavities {
            return Err(Error::DimensionMismatch {
                op: "product_index",
                expected: self.n_cavities,
                found: site_indices.len(),
            });
        }
        let d = self.site_dim();
        let mut idx = 0;
        for &s in site_indices {
            if s >= d {
                return Err(Error::InvalidState(format!("site index {s} >= {d}")));
            }
            idx = idx * d + s;
        }
        Ok(idx)
    }

    /// Per-site indices of a full-space index.
    pub fn split_index(&self, mut index: usize) -> Vec<usize> {
        let d = self.site_dim();
        let mut out = vec![0; self.n_cavities];
        for slot in out.iter_mut().rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    /// Total excitation number (photons plus excited atoms) of a basis state.
    pub fn excitations(&self, index: usize) -> usize {
        self.split_index(index)
            .into_iter()
            .map(|s| {
                let (n, e) = Self::site_state(s);
                n + usize::from(e)
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dims: HilbertDims,
    data: Array2<C64>,
}

impl Operator {
    pub fn new(dims: HilbertDims, data: Array2<C64>) -> Result<Self> {
        let n = dims.total_dim();
        if data.nrows() != n || data.ncols() != n {
            return Err(Error::DimensionMismatch {
                op: "Operator::new",
                expected: n,
                found: if data.nrows() != n { data.nrows() } else { data.ncols() },
            });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: HilbertDims) -> Self {
        let n = dims.total_dim();
        Self {
            dims,
            data: Array2::zeros((n, n)),
        }
    }

    pub fn identity(dims: HilbertDims) -> Self {
        let n = dims.total_dim();
        Self {
            dims,
            data: Array2::eye(n),
        }
    }

    /// |ket><bra|
    pub fn outer(ket: &Ket, bra: &Ket) -> Result<Self> {
        check_dims("Operator::outer", ket.dims, bra.dims)?;
        let n = ket.dims.total_dim();
        let mut data = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                data[[i, j]] = ket.amplitudes[i] * bra.amplitudes[j].conj();
            }
        }
        Ok(Self {
            dims: ket.dims,
            data,
        })
    }

    pub fn dims(&self) -> HilbertDims {
        self.dims
    }

    pub fn data(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<C64> {
        self.data
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dims: self.dims,
            data: linalg::adjoint(&self.data.view()),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.mapv(|z| z * s),
        }
    }

    pub fn try_add(&self, other: &Operator) -> Result<Self> {
        check_dims("Operator::add", self.dims, other.dims)?;
        Ok(Self {
            dims: self.dims,
            data: &self.data + &other.data,
        })
    }

    pub fn try_sub(&self, other: &Operator) -> Result<Self> {
        check_dims("Operator::sub", self.dims, other.dims)?;
        Ok(Self {
            dims: self.dims,
            data: &self.data - &other.data,
        })
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Self> {
        check_dims("Operator::mul", self.dims, other.dims)?;
        Ok(Self {
            dims: self.dims,
            data: self.data.dot(&other.data),
        })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        self.try_mul(other)?.try_sub(&other.try_mul(self)?)
    }

    pub fn apply(&self, ket: &Ket) -> Result<Array1<C64>> {
        check_dims("Operator::apply", self.dims, ket.dims)?;
        Ok(self.data.dot(&ket.amplitudes))
    }

    /// <bra| op |ket>
    pub fn matrix_element(&self, bra: &Ket, ket: &Ket) -> Result<C64> {
        let v = self.apply(ket)?;
        Ok(bra.amplitudes.iter().zip(v.iter()).map(|(b, x)| b.conj() * x).sum())
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.data.view())
    }

    pub fn frobenius_norm(&self) -> f64 {
        linalg::frobenius(&self.data.view())
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.data.view())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Kronecker product, self on the left. Both factors must be single-site.
    pub fn kron(&self, right: &Operator) -> Result<Self> {
        if self.dims.n_cavities != 1 || right.dims.n_cavities != 1 {
            return Err(Error::InvalidDims(
                "kron expects two single-site operators".into(),
            ));
        }
        check_dims("Operator::kron", self.dims, right.dims)?;
        let dims = HilbertDims::new(self.dims.n_fock, 2)?;
        Ok(Self {
            dims,
            data: kron(&self.data, &right.data),
        })
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $inner:ident) => {
        impl $tr<&Operator> for &Operator {
            type Output = Operator;
            /// Panics on a dimension mismatch; use the `try_` method to handle it.
            fn $method(self, rhs: &Operator) -> Operator {
                self.$inner(rhs).expect("operator dimension mismatch")
            }
        }
    };
}

binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

fn check_dims(op: &'static str, a: HilbertDims, b: HilbertDims) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            op,
            expected: a.total_dim(),
            found: b.total_dim(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    dims: HilbertDims,
    amplitudes: Array1<C64>,
}

impl Ket {
    pub fn new(dims: HilbertDims, amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() != dims.total_dim() {
            return Err(Error::DimensionMismatch {
                op: "Ket::new",
                expected: dims.total_dim(),
                found: amplitudes.len(),
            });
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("ket norm {norm}")));
        }
        Ok(Self { dims, amplitudes })
    }

    /// Rescales to unit norm.
    pub fn normalized(dims: HilbertDims, amplitudes: Array1<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite ket".into()));
        }
        Self::new(dims, amplitudes.mapv(|z| z / norm))
    }

    pub fn basis(dims: HilbertDims, index: usize) -> Result<Self> {
        let n = dims.total_dim();
        if index >= n {
            return Err(Error::InvalidState(format!("basis index {index} >= {n}")));
        }
        let mut amps = Array1::zeros(n);
        amps[index] = re(1.0);
        Ok(Self {
            dims,
            amplitudes: amps,
        })
    }

    /// |photons, atom> on a single site.
    pub fn fock(dims: HilbertDims, photons: usize, excited: bool) -> Result<Self> {
        if photons > dims.n_fock() {
            return Err(Error::ManifoldAboveCutoff {
                n: photons,
                n_fock: dims.n_fock(),
            });
        }
        Self::basis(dims.single_site(), HilbertDims::site_index(photons, excited))
    }

    pub fn dims(&self) -> HilbertDims {
        self.dims
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn inner(&self, other: &Ket) -> Result<C64> {
        check_dims("Ket::inner", self.dims, other.dims)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// |self> (x) |right>, both single-site.
    pub fn kron(&self, right: &Ket) -> Result<Self> {
        if self.dims.n_cavities != 1 || right.dims.n_cavities != 1 {
            return Err(Error::InvalidDims("kron expects single-site kets".into()));
        }
        check_dims("Ket::kron", self.dims, right.dims)?;
        let d = self.amplitudes.len();
        let mut amps = Array1::zeros(d * d);
        for i in 0..d {
            for j in 0..d {
                amps[i * d + j] = self.amplitudes[i] * right.amplitudes[j];
            }
        }
        Ok(Self {
            dims: HilbertDims::new(self.dims.n_fock, 2)?,
            amplitudes: amps,
        })
    }

    pub fn projector(&self) -> Operator {
        Operator::outer(self, self).expect("same dims")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dims: HilbertDims,
    data: Array2<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(dims: HilbertDims, data: Array2<C64>) -> Result<Self> {
        let op = Operator::new(dims, data)?;
        let herm = op.hermiticity_defect();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "density matrix not Hermitian (defect {herm:e})"
            )));
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("density matrix trace {tr}")));
        }
        let min_eig = linalg::eigvalsh(&op.data.view())?
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "density matrix eigenvalue {min_eig:e} below zero"
            )));
        }
        Ok(Self {
            dims,
            data: op.data,
        })
    }

    /// Skips validation; callers track trace and Hermiticity drift themselves.
    pub(crate) fn new_unchecked(dims: HilbertDims, data: Array2<C64>) -> Self {
        Self { dims, data }
    }

    pub fn pure(ket: &Ket) -> Self {
        Self {
            dims: ket.dims,
            data: ket.projector().data,
        }
    }

    pub fn dims(&self) -> HilbertDims {
        self.dims
    }

    pub fn data(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.data.view())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(linalg::eigvalsh(&self.data.view())?
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min))
    }

    /// <ket| rho |ket>
    pub fn population(&self, ket: &Ket) -> Result<f64> {
        check_dims("DensityMatrix::population", self.dims, ket.dims)?;
        let v = self.data.dot(&ket.amplitudes);
        Ok(ket
            .amplitudes
            .iter()
            .zip(v.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            .re)
    }

    pub fn as_operator(&self) -> Operator {
        Operator {
            dims: self.dims,
            data: self.data.clone(),
        }
    }
}

/// Photon lowering operator `a` on one site of `dims` (identity on the atom).
pub fn fock_annihilation(dims: HilbertDims) -> Operator {
    let site = dims.single_site();
    let mut op = Operator::zeros(site);
    for n in 1..=dims.n_fock() {
        for e in [false, true] {
            let from = HilbertDims::site_index(n, e);
            let to = HilbertDims::site_index(n - 1, e);
            op.data[[to, from]] = re((n as f64).sqrt());
        }
    }
    op
}

/// Atomic lowering operator sigma^- = |g><e| on one site (identity on the photon).
pub fn atomic_lowering(dims: HilbertDims) -> Operator {
    let site = dims.single_site();
    let mut op = Operator::zeros(site);
    for n in 0..=dims.n_fock() {
        op.data[[
            HilbertDims::site_index(n, false),
            HilbertDims::site_index(n, true),
        ]] = re(1.0);
    }
    op
}

/// Places a single-site operator on `site` of `dims`.
pub fn embed_site(op: &Operator, site: usize, dims: HilbertDims) -> Result<Operator> {
    if site >= dims.n_cavities() {
        return Err(Error::SiteOutOfRange {
            site,
            n_cavities: dims.n_cavities(),
        });
    }
    if op.dims != dims.single_site() {
        return Err(Error::DimensionMismatch {
            op: "embed_site",
            expected: dims.site_dim(),
            found: op.dims.total_dim(),
        });
    }
    let eye: Array2<C64> = Array2::eye(dims.site_dim());
    let mut data: Array2<C64> = Array2::eye(1);
    for s in 0..dims.n_cavities() {
        let factor = if s == site { &op.data } else { &eye };
        data = kron(&data, factor);
    }
    Operator::new(dims, data)
}

/// `a` acting on `site` of the full space.
pub fn site_annihilation(dims: HilbertDims, site: usize) -> Result<Operator> {
    embed_site(&fock_annihilation(dims), site, dims)
}

/// `sigma^-` acting on `site` of the full space.
pub fn site_lowering(dims: HilbertDims, site: usize) -> Result<Operator> {
    embed_site(&atomic_lowering(dims), site, dims)
}

/// Local excitation number a^dagger a + sigma^+ sigma^- on `site`.
pub fn number_operator(dims: HilbertDims, site: usize) -> Result<Operator> {
    let a = fock_annihilation(dims);
    let s = atomic_lowering(dims);
    let local = &(&a.adjoint() * &a) + &(&s.adjoint() * &s);
    embed_site(&local, site, dims)
}

/// Sum of local excitation numbers over all sites.
pub fn total_excitation(dims: HilbertDims) -> Operator {
    let mut total = Operator::zeros(dims);
    for site in 0..dims.n_cavities() {
        total = &total + &number_operator(dims, site).expect("site in range");
    }
    total
}

/// Reduced state of `keep_site` for a two-cavity density matrix.
pub fn partial_trace(rho: &DensityMatrix, keep_site: usize) -> Result<DensityMatrix> {
    let dims = rho.dims;
    if dims.n_cavities() != 2 {
        return Err(Error::RequiresTwoCavities("partial_trace"));
    }
    if keep_site >= 2 {
        return Err(Error::SiteOutOfRange {
            site: keep_site,
            n_cavities: 2,
        });
    }
    let d = dims.site_dim();
    let mut out = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                let (r, c) = if keep_site == 0 {
                    (i * d + k, j * d + k)
                } else {
                    (k * d + i, k * d + j)
                };
                acc += rho.data[[r, c]];
            }
            out[[i, j]] = acc;
        }
    }
    Ok(DensityMatrix::new_unchecked(dims.single_site(), out))
}

/// Tr(op rho) split into its real part and imaginary residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expectation {
    pub value: f64,
    pub imaginary_residual: f64,
}

impl Expectation {
    pub fn complex(&self) -> C64 {
        C64::new(self.value, self.imaginary_residual)
    }
}

pub fn expectation(op: &Operator, rho: &DensityMatrix) -> Result<Expectation> {
    check_dims("expectation", op.dims, rho.dims)?;
    let tr = trace_product(&op.data, &rho.data);
    Ok(Expectation {
        value: tr.re,
        imaginary_residual: tr.im,
    })
}

/// Tr(A B) without forming the product.
pub(crate) fn trace_product(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[[i, k]] * b[[k, i]];
        }
    }
    acc
}
