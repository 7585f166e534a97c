//! Dense linear-algebra helpers: Kronecker/vec bookkeeping, spectral
//! quantities, rank tests and a Lyapunov solver.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{dim_err, Error, Result};
use crate::scalar::Scalar;

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a.kronecker(b)
}

/// Column-major vectorisation, `vec(X) = col(X_1, ..., X_q)`.
pub fn vec_col<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_col`].
pub fn unvec<T: Scalar>(v: &DVector<T>, rows: usize, cols: usize) -> Result<DMatrix<T>> {
    if v.len() != rows * cols {
        return Err(dim_err(
            "unvec",
            format!("length {} != {}x{}", v.len(), rows, cols),
        ));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

pub fn singular_values<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Largest singular value (spectral norm).
pub fn sigma_max<T: Scalar>(m: &DMatrix<T>) -> T {
    singular_values(m).iter().copied().fold(T::zero(), T::max)
}

/// Smallest singular value among the `min(rows, cols)` values.
pub fn sigma_min<T: Scalar>(m: &DMatrix<T>) -> T {
    let sv = singular_values(m);
    if sv.is_empty() {
        return T::zero();
    }
    sv.iter().copied().fold(sv[0], T::min)
}

pub fn spectral_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    sigma_max(m)
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn rank<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> usize {
    let sv = singular_values(m);
    let smax = sv.iter().copied().fold(T::zero(), T::max);
    if smax <= T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Numerical rank of a complex matrix.
pub fn rank_complex<T: Scalar>(m: &DMatrix<Complex<T>>, rel_tol: T) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(T::zero(), T::max);
    if smax <= T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

pub fn to_complex<T: Scalar>(m: &DMatrix<T>) -> DMatrix<Complex<T>> {
    m.map(|x| Complex::new(x, T::zero()))
}

/// Eigenvalues of a general square matrix via the real Schur form.
pub fn eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    if !m.is_square() {
        return Err(dim_err("eigenvalues", "matrix is not square"));
    }
    if m.is_empty() {
        return Ok(Vec::new());
    }
    // nalgebra's Schur iteration cycles on some Hamiltonians (real and
    // complex shifts alike), so the spectrum comes from faer's QR instead.
    let f = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].to_f64_lossy());
    let ev = f.eigenvalues().map_err(|_| Error::NotConverged("eigenvalue QR iteration"))?;
    Ok(ev.iter().map(|z| Complex::new(T::lit(z.re), T::lit(z.im))).collect())
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    let s = symmetrize(m);
    let mut ev: Vec<T> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    DVector::from_vec(ev)
}

pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa<T: Scalar>(m: &DMatrix<T>) -> Result<T> {
    let ev = eigenvalues(m)?;
    Ok(ev.iter().map(|z| z.re).fold(T::lit(f64::NEG_INFINITY), T::max))
}

pub fn is_hurwitz<T: Scalar>(m: &DMatrix<T>) -> Result<bool> {
    Ok(spectral_abscissa(m)? < T::zero())
}

/// Symmetric positive definiteness via the smallest eigenvalue of the symmetric part.
pub fn is_positive_definite<T: Scalar>(m: &DMatrix<T>) -> bool {
    let ev = sym_eigenvalues(m);
    ev.len() > 0 && ev[0] > T::zero()
}

/// Solves `Aᵀ X + X A + Q = 0` by Kronecker vectorisation.
pub fn solve_lyapunov<T: Scalar>(a: &DMatrix<T>, q: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(dim_err("solve_lyapunov", "A and Q must be square and equal size"));
    }
    let eye = DMatrix::<T>::identity(n, n);
    let at = a.transpose();
    let op = kron(&eye, &at) + kron(&at, &eye);
    let rhs = -vec_col(q);
    let x = op.lu().solve(&rhs).ok_or(Error::Singular("Lyapunov operator"))?;
    Ok(symmetrize(&unvec(&x, n, n)?))
}

/// Matrix sign function by scaled Newton iteration.
///
/// Fails when the iterate becomes singular, which happens when `h` has
/// eigenvalues on (or numerically near) the imaginary axis.
pub fn matrix_sign<T: Scalar>(h: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = h.nrows();
    let mut z = h.clone();
    let half = T::lit(0.5);
    let tol = T::lit(100.0) * T::default_epsilon() * T::count(n.max(1));
    for _ in 0..200 {
        let inv = z
            .clone()
            .try_inverse()
            .ok_or(Error::Singular("matrix sign iteration"))?;
        // determinant scaling speeds up the early iterations
        let det = z.clone().lu().determinant().abs();
        let c = if det > T::zero() && det.is_finite() {
            det.powf(-T::one() / T::count(n))
        } else {
            T::one()
        };
        let next = (&z * c + inv * (T::one() / c)) * half;
        let diff = (&next - &z).abs().row_sum().max();
        let scale = next.abs().row_sum().max();
        z = next;
        if !scale.is_finite() {
            return Err(Error::NotConverged("matrix sign iteration"));
        }
        if diff <= tol * scale {
            // one unscaled polish step
            let inv = z
                .clone()
                .try_inverse()
                .ok_or(Error::Singular("matrix sign iteration"))?;
            return Ok((&z + inv) * half);
        }
    }
    Err(Error::NotConverged("matrix sign iteration"))
}

/// Block-diagonal stacking of square or rectangular blocks.
pub fn block_diag<T: Scalar>(blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Frobenius norm.
pub fn fro<T: Scalar>(m: &DMatrix<T>) -> T {
    m.norm()
}
