//! Twin-layer protocols: the distributed observer of the leader dynamics and
//! the resilient distributed state estimator.
//!
//! Both run on the DoS-gated graph only. Nothing here reads exchanged
//! physical outputs, so FDI and camouflage cannot reach these states.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::topology::{GraphMatrices, Topology};

/// Per-follower estimates `Υ̂_i = [Ŝ_i; R̂_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState<T: Scalar> {
    pub upsilon_hat: Vec<DMatrix<T>>,
}

impl<T: Scalar> ObserverState<T> {
    pub fn zeros(n: usize, q: usize, p: usize) -> Self {
        Self {
            upsilon_hat: vec![DMatrix::zeros(q + p, q); n],
        }
    }

    /// `Ŝ_i`, the top `q` rows of `Υ̂_i`.
    pub fn s_hat(&self, i: usize) -> DMatrix<T> {
        let u = &self.upsilon_hat[i];
        u.rows(0, u.ncols()).into_owned()
    }

    /// `R̂_i`, the bottom `p` rows of `Υ̂_i`.
    pub fn r_hat(&self, i: usize) -> DMatrix<T> {
        let u = &self.upsilon_hat[i];
        let q = u.ncols();
        u.rows(q, u.nrows() - q).into_owned()
    }

    /// `max_i ‖Υ̂_i − Υ‖_F`.
    pub fn max_error(&self, upsilon: &DMatrix<T>) -> T {
        self.upsilon_hat
            .iter()
            .map(|u| (u - upsilon).norm())
            .fold(T::zero(), T::max)
    }
}

/// Per-follower virtual states `z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState<T: Scalar> {
    pub z: Vec<DVector<T>>,
}

impl<T: Scalar> EstimatorState<T> {
    pub fn zeros(n: usize, q: usize) -> Self {
        Self {
            z: vec![DVector::zeros(q); n],
        }
    }
}

/// Observer derivative on the graph described by `topology`, with every
/// weight zeroed while DoS is active.
pub fn observer_rhs<T: Scalar>(
    obs: &ObserverState<T>,
    upsilon_true: &DMatrix<T>,
    topology: &Topology<T>,
    dos_active_now: bool,
    mu1: T,
) -> Vec<DMatrix<T>> {
    if dos_active_now {
        return obs
            .upsilon_hat
            .iter()
            .map(|u| DMatrix::zeros(u.nrows(), u.ncols()))
            .collect();
    }
    observer_rhs_weighted(
        &obs.upsilon_hat,
        upsilon_true,
        &topology.follower_adjacency,
        &topology.pinning,
        mu1,
    )
}

/// Observer derivative for explicit (already gated) weights `d_ij`, `d_ik`.
///
/// `Υ` enters follower `i`'s derivative only if some `d_ik` is nonzero.
pub fn observer_rhs_weighted<T: Scalar>(
    upsilon_hat: &[DMatrix<T>],
    upsilon_true: &DMatrix<T>,
    adjacency: &DMatrix<T>,
    pinning: &DMatrix<T>,
    mu1: T,
) -> Vec<DMatrix<T>> {
    let n = upsilon_hat.len();
    (0..n)
        .map(|i| {
            let ui = &upsilon_hat[i];
            let mut d = DMatrix::zeros(ui.nrows(), ui.ncols());
            for j in 0..n {
                let a = adjacency[(i, j)];
                if a != T::zero() {
                    d += (&upsilon_hat[j] - ui) * a;
                }
            }
            let g: T = pinning.row(i).sum();
            if g != T::zero() {
                d += (upsilon_true - ui) * g;
            }
            d * mu1
        })
        .collect()
}

/// Estimator derivative with `Ŝ_i` taken from the observer.
pub fn estimator_rhs<T: Scalar>(
    est: &EstimatorState<T>,
    obs: &ObserverState<T>,
    leader_states: &[DVector<T>],
    topology: &Topology<T>,
    dos_active_now: bool,
    mu2: T,
    g: &DMatrix<T>,
) -> Vec<DVector<T>> {
    let s_hat: Vec<DMatrix<T>> = (0..est.z.len()).map(|i| obs.s_hat(i)).collect();
    if dos_active_now {
        return est.z.iter().zip(&s_hat).map(|(z, s)| s * z).collect();
    }
    estimator_rhs_weighted(
        &est.z,
        &s_hat,
        leader_states,
        &topology.follower_adjacency,
        &topology.pinning,
        mu2,
        g,
    )
}

/// `ż_i = Ŝ_i z_i − μ₂G(Σ_j d_ij(z_i − z_j) + Σ_k d_ik(z_i − x_k))`.
pub fn estimator_rhs_weighted<T: Scalar>(
    z: &[DVector<T>],
    s_hat: &[DMatrix<T>],
    leader_states: &[DVector<T>],
    adjacency: &DMatrix<T>,
    pinning: &DMatrix<T>,
    mu2: T,
    g: &DMatrix<T>,
) -> Vec<DVector<T>> {
    let n = z.len();
    (0..n)
        .map(|i| {
            let zi = &z[i];
            let mut c = DVector::zeros(zi.len());
            for j in 0..n {
                let a = adjacency[(i, j)];
                if a != T::zero() {
                    c += (zi - &z[j]) * a;
                }
            }
            for (k, xk) in leader_states.iter().enumerate() {
                let w = pinning[(i, k)];
                if w != T::zero() {
                    c += (zi - xk) * w;
                }
            }
            &s_hat[i] * zi - g * c * mu2
        })
        .collect()
}

/// Stacked `z̃ = z − (Ψ̄⊗I)⁻¹ Σ_k (Ψ_k⊗I)(1⊗x_k)`.
pub fn estimator_error<T: Scalar>(
    est: &EstimatorState<T>,
    leader_states: &[DVector<T>],
    gm: &GraphMatrices<T>,
) -> Result<DVector<T>> {
    let w = gm.leader_weights()?;
    let n = est.z.len();
    if n != gm.n() || leader_states.len() != w.ncols() {
        return Err(dim_err("estimator_error", "follower or leader count mismatch"));
    }
    let q = leader_states.first().map_or(0, |x| x.len());
    let mut out = DVector::zeros(n * q);
    for i in 0..n {
        let mut target = DVector::zeros(q);
        for (k, xk) in leader_states.iter().enumerate() {
            target += xk * w[(i, k)];
        }
        out.rows_mut(i * q, q).copy_from(&(&est.z[i] - target));
    }
    Ok(out)
}

/// `‖(Ψ̄⊗I)⁻¹Σ_k(Ψ_k⊗I)(I_N⊗S) − (I_N⊗S)(Ψ̄⊗I)⁻¹Σ_k(Ψ_k⊗I)‖_F`,
/// formed with explicit Kronecker products.
pub fn kronecker_commutation_residual<T: Scalar>(gm: &GraphMatrices<T>, s: &DMatrix<T>) -> Result<T> {
    let n = gm.n();
    let q = s.nrows();
    let iq = DMatrix::<T>::identity(q, q);
    let psi_bar = linalg::kron(&gm.psi_bar, &iq);
    let inv = psi_bar.try_inverse().ok_or(Error::Singular("Ψ̄"))?;
    let sum = gm
        .psi_per_leader
        .iter()
        .fold(DMatrix::zeros(n * q, n * q), |acc, p| acc + linalg::kron(p, &iq));
    let w = inv * sum;
    let is = linalg::kron(&DMatrix::identity(n, n), s);
    Ok((&w * &is - &is * &w).norm())
}
