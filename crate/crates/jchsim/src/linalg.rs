//! Thin dense linear-algebra helpers over `ndarray` / `ndarray-linalg`.

use ndarray::{Array1, Array2, ArrayView2, ShapeBuilder};
use ndarray_linalg::{Eig, EigVals, Eigh, EigValsh, Inverse, UPLO};

use crate::error::Result;
use crate::C64;

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn im(x: f64) -> C64 {
    C64::new(0.0, x)
}

pub fn adjoint(a: &ArrayView2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn trace(a: &ArrayView2<C64>) -> C64 {
    a.diag().sum()
}

pub fn frobenius(a: &ArrayView2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &ArrayView2<C64>) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Largest entry of |A - A^dagger|.
pub fn hermiticity_defect(a: &ArrayView2<C64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

pub fn hermitize(a: &ArrayView2<C64>) -> Array2<C64> {
    (&a.to_owned() + &adjoint(a)).mapv(|z| z * 0.5)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(a: &ArrayView2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    // row-major complex input comes back with conjugated eigenvectors
    Ok(fortran(&hermitize(a).view()).eigh(UPLO::Lower)?)
}

fn fortran(a: &ArrayView2<C64>) -> Array2<C64> {
    let mut f = Array2::zeros(a.raw_dim().f());
    f.assign(a);
    f
}

pub fn eigvalsh(a: &ArrayView2<C64>) -> Result<Array1<f64>> {
    Ok(hermitize(a).eigvalsh(UPLO::Lower)?)
}

/// General complex eigen-decomposition (right eigenvectors as columns).
pub fn eig(a: &ArrayView2<C64>) -> Result<(Array1<C64>, Array2<C64>)> {
    Ok(fortran(a).eig()?)
}

pub fn eigvals(a: &ArrayView2<C64>) -> Result<Array1<C64>> {
    Ok(a.to_owned().eigvals()?)
}

pub fn inv(a: &ArrayView2<C64>) -> Result<Array2<C64>> {
    Ok(a.to_owned().inv()?)
}

/// One-norm (maximum absolute column sum).
pub fn norm1(a: &ArrayView2<C64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// exp(-i H t) for Hermitian H.
pub fn expm_hermitian(h: &ArrayView2<C64>, t: f64) -> Result<Array2<C64>> {
    let (e, v) = eigh(h)?;
    Ok(unitary_from_eigh(&e, &v, t))
}

pub fn unitary_from_eigh(e: &Array1<f64>, v: &Array2<C64>, t: f64) -> Array2<C64> {
    let mut scaled = v.clone();
    for (k, mut col) in scaled.columns_mut().into_iter().enumerate() {
        let phase = C64::from_polar(1.0, -e[k] * t);
        col.mapv_inplace(|z| z * phase);
    }
    scaled.dot(&adjoint(&v.view()))
}

/// Trace distance 1/2 ||A - B||_1 between Hermitian matrices.
pub fn trace_distance(a: &ArrayView2<C64>, b: &ArrayView2<C64>) -> Result<f64> {
    let d = &a.to_owned() - &b.to_owned();
    Ok(0.5 * eigvalsh(&d.view())?.iter().map(|x| x.abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn expm_of_pauli_x_rotates() {
        let x = array![[re(0.0), re(1.0)], [re(1.0), re(0.0)]];
        let t = 0.3;
        let u = expm_hermitian(&x.view(), t).unwrap();
        assert!((u[[0, 0]] - re(t.cos())).norm() < 1e-14);
        assert!((u[[0, 1]] - im(-t.sin())).norm() < 1e-14);
    }

    #[test]
    fn trace_distance_of_orthogonal_projectors_is_one() {
        let a = array![[re(1.0), re(0.0)], [re(0.0), re(0.0)]];
        let b = array![[re(0.0), re(0.0)], [re(0.0), re(1.0)]];
        assert!((trace_distance(&a.view(), &b.view()).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_reconstructs_nonnormal_matrix() {
        let a = array![[re(1.0), re(2.0)], [im(0.5), re(-1.0)]];
        let (l, v) = eig(&a.view()).unwrap();
        let vinv = inv(&v.view()).unwrap();
        let rebuilt = v.dot(&Array2::from_diag(&l)).dot(&vinv);
        assert!(max_abs(&(&rebuilt - &a).view()) < 1e-12);
    }
}
