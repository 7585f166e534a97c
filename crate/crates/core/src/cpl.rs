//! Physical-layer algorithms: the regulator-equation gradient flow with its
//! direct-solve counterpart, and the adaptive attack-compensating controller.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::FollowerModel;
use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Default smoothing constant of the compensation law.
pub const DEFAULT_OMEGA: f64 = 0.01;

/// `M = [A B; C 0]` and `N = [I 0; 0 0]`, both `(n+p)×(n+m)`.
pub fn regulator_blocks<T: Scalar>(fm: &FollowerModel<T>) -> (DMatrix<T>, DMatrix<T>) {
    let (n, m, p) = (fm.n(), fm.m(), fm.p());
    let mut mm = DMatrix::zeros(n + p, n + m);
    mm.view_mut((0, 0), (n, n)).copy_from(&fm.a);
    mm.view_mut((0, n), (n, m)).copy_from(&fm.b);
    mm.view_mut((n, 0), (p, n)).copy_from(&fm.c);
    let mut nn = DMatrix::zeros(n + p, n + m);
    nn.view_mut((0, 0), (n, n)).fill_with_identity();
    (mm, nn)
}

/// `Φ = I_q ⊗ M − Sᵀ ⊗ N`.
pub fn regulator_phi<T: Scalar>(fm: &FollowerModel<T>, s: &DMatrix<T>) -> DMatrix<T> {
    let (mm, nn) = regulator_blocks(fm);
    let q = s.nrows();
    linalg::kron(&DMatrix::identity(q, q), &mm) - linalg::kron(&s.transpose(), &nn)
}

/// `vec([0; R])` with `n` zero rows on top.
pub fn regulator_rhs_vec<T: Scalar>(n: usize, r: &DMatrix<T>) -> DVector<T> {
    let mut stacked = DMatrix::zeros(n + r.nrows(), r.ncols());
    stacked.rows_mut(n, r.nrows()).copy_from(r);
    linalg::vec_col(&stacked)
}

/// The linear system `Φ Δ = 𝓡` for one follower.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorProblem<T: Scalar> {
    pub m_block: DMatrix<T>,
    pub n_block: DMatrix<T>,
    pub phi: DMatrix<T>,
    pub rvec: DVector<T>,
}

impl<T: Scalar> RegulatorProblem<T> {
    pub fn new(fm: &FollowerModel<T>, s: &DMatrix<T>, r: &DMatrix<T>) -> Result<Self> {
        let q = s.nrows();
        if !s.is_square() || r.ncols() != q {
            return Err(dim_err("RegulatorProblem", "S must be q×q and R p×q"));
        }
        if r.nrows() != fm.p() {
            return Err(dim_err(
                "RegulatorProblem",
                format!("leader output dimension {} != follower output dimension {}", r.nrows(), fm.p()),
            ));
        }
        let (m_block, n_block) = regulator_blocks(fm);
        Ok(Self {
            phi: regulator_phi(fm, s),
            rvec: regulator_rhs_vec(fm.n(), r),
            m_block,
            n_block,
        })
    }

    pub fn residual(&self, delta: &DVector<T>) -> DVector<T> {
        &self.phi * delta - &self.rvec
    }
}

/// Solution `(Π, Γ)` of `AΠ + BΓ = ΠS`, `CΠ = R`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorSolution<T: Scalar> {
    pub pi: DMatrix<T>,
    pub gamma: DMatrix<T>,
    /// `‖AΠ + BΓ − ΠS‖_F`.
    pub state_residual: T,
    /// `‖CΠ − R‖_F`.
    pub output_residual: T,
}

/// Solves the regulator equations as one dense vectorised system.
pub fn regulator_direct_solve<T: Scalar>(
    s: &DMatrix<T>,
    r: &DMatrix<T>,
    fm: &FollowerModel<T>,
) -> Result<RegulatorSolution<T>> {
    let prob = RegulatorProblem::new(fm, s, r)?;
    let sv = linalg::singular_values(&prob.phi);
    let smax = sv.iter().copied().fold(T::zero(), T::max);
    let smin = sv.iter().copied().fold(smax, T::min);
    if sv.len() < prob.phi.ncols() || !(smin > T::lit(1e-12) * smax) {
        return Err(Error::Assumption {
            assumption: "Assumption 4",
            detail: "Φ does not have full column rank".into(),
        });
    }
    let delta = if prob.phi.is_square() {
        prob.phi.clone().lu().solve(&prob.rvec)
    } else {
        prob.phi
            .clone()
            .svd(true, true)
            .solve(&prob.rvec, T::default_epsilon())
            .ok()
    }
    .ok_or(Error::Singular("Φ"))?;
    let (pi, gamma) = unpack_delta(&delta, fm, s.nrows())?;
    let state_residual = (&fm.a * &pi + &fm.b * &gamma - &pi * s).norm();
    let output_residual = (&fm.c * &pi - r).norm();
    Ok(RegulatorSolution {
        pi,
        gamma,
        state_residual,
        output_residual,
    })
}

/// `vec([Π; Γ])`, column-major.
pub fn pack_delta<T: Scalar>(pi: &DMatrix<T>, gamma: &DMatrix<T>) -> Result<DVector<T>> {
    if pi.ncols() != gamma.ncols() {
        return Err(dim_err("pack_delta", "Π and Γ must have the same column count"));
    }
    let mut y = DMatrix::zeros(pi.nrows() + gamma.nrows(), pi.ncols());
    y.rows_mut(0, pi.nrows()).copy_from(pi);
    y.rows_mut(pi.nrows(), gamma.nrows()).copy_from(gamma);
    Ok(linalg::vec_col(&y))
}

/// Inverse of [`pack_delta`]: `(Π̂ (n×q), Γ̂ (m×q))`.
pub fn unpack_delta<T: Scalar>(
    delta: &DVector<T>,
    fm: &FollowerModel<T>,
    q: usize,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let (n, m) = (fm.n(), fm.m());
    let y = linalg::unvec(delta, n + m, q)?;
    Ok((y.rows(0, n).into_owned(), y.rows(n, m).into_owned()))
}

/// `dΔ̂/dt = −μ₃ Φ̂ᵀ(Φ̂Δ̂ − 𝓡̂)`, evaluated without forming `Φ̂`.
///
/// With `Y = [Π̂; Γ̂]` the residual is `M Y − N Y Ŝ − [0; R̂]` and the
/// transpose action is `MᵀX − NᵀX Ŝᵀ`.
pub fn regulator_flow_rhs<T: Scalar>(
    delta_hat: &DVector<T>,
    s_hat: &DMatrix<T>,
    r_hat: &DMatrix<T>,
    fm: &FollowerModel<T>,
    mu3: T,
) -> Result<DVector<T>> {
    let q = s_hat.nrows();
    let (n, m, p) = (fm.n(), fm.m(), fm.p());
    if r_hat.shape() != (p, q) {
        return Err(dim_err("regulator_flow_rhs", "R̂ must be p×q"));
    }
    let y = linalg::unvec(delta_hat, n + m, q)?;
    let pi = y.rows(0, n);
    let gamma = y.rows(n, m);

    // residual blocks: top = AΠ + BΓ − ΠŜ, bottom = CΠ − R̂
    let top = &fm.a * &pi + &fm.b * &gamma - &pi * s_hat;
    let bottom = &fm.c * &pi - r_hat;

    // Mᵀ X − Nᵀ X Ŝᵀ, split by rows of Y
    let d_pi = fm.a.transpose() * &top + fm.c.transpose() * &bottom - &top * s_hat.transpose();
    let d_gamma = fm.b.transpose() * &top;

    let mut dy = DMatrix::zeros(n + m, q);
    dy.rows_mut(0, n).copy_from(&d_pi);
    dy.rows_mut(n, m).copy_from(&d_gamma);
    Ok(linalg::vec_col(&dy) * (-mu3))
}

/// Integrates the regulator flow with `Ŝ = S`, `R̂ = R` frozen, starting
/// from `delta0`, using RK4 with a step matched to the stiffest mode.
///
/// Returns the final estimate. `t_end` defaults to `20 / (μ₃ λ_min(ΦᵀΦ))`.
pub fn integrate_regulator_flow<T: Scalar>(
    s: &DMatrix<T>,
    r: &DMatrix<T>,
    fm: &FollowerModel<T>,
    mu3: T,
    delta0: &DVector<T>,
    t_end: Option<T>,
) -> Result<DVector<T>> {
    let phi = regulator_phi(fm, s);
    let ev = linalg::sym_eigenvalues(&(phi.transpose() * &phi));
    let (lmin, lmax) = (ev[0], ev[ev.len() - 1]);
    if !(lmin > T::zero()) {
        return Err(Error::Assumption {
            assumption: "Assumption 4",
            detail: "ΦᵀΦ is singular".into(),
        });
    }
    let t_end = t_end.unwrap_or(T::lit(20.0) / (mu3 * lmin));
    let h_max = T::one() / (mu3 * lmax);
    let steps = (t_end / h_max).ceil().to_f64_lossy().max(1.0) as usize;
    let h = t_end / T::count(steps);
    let half = T::lit(0.5);
    let f = |d: &DVector<T>| regulator_flow_rhs(d, s, r, fm, mu3);
    let mut d = delta0.clone();
    for _ in 0..steps {
        let k1 = f(&d)?;
        let k2 = f(&(&d + &k1 * (h * half)))?;
        let k3 = f(&(&d + &k2 * (h * half)))?;
        let k4 = f(&(&d + &k3 * h))?;
        d += (k1 + (k2 + k3) * T::lit(2.0) + k4) * (h / T::lit(6.0));
    }
    Ok(d)
}

/// Adaptive compensation parameters and estimates, one entry per follower.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveControllerState<T: Scalar> {
    pub rho_hat: Vec<T>,
    pub omega: T,
    pub dbar: Vec<T>,
}

impl<T: Scalar> AdaptiveControllerState<T> {
    pub fn new(n_followers: usize, omega: T, dbar: Vec<T>) -> Result<Self> {
        if !(omega > T::zero()) {
            return Err(Error::InvalidArgument("ω must be positive".into()));
        }
        if dbar.len() != n_followers || dbar.iter().any(|d| !(*d > T::zero())) {
            return Err(Error::InvalidArgument(
                "one positive derivative bound per follower is required".into(),
            ));
        }
        Ok(Self {
            rho_hat: vec![T::zero(); n_followers],
            omega,
            dbar,
        })
    }
}

/// `εᵀPB` as a column vector.
pub fn eps_pb<T: Scalar>(eps: &DVector<T>, p: &DMatrix<T>, b: &DMatrix<T>) -> DVector<T> {
    b.transpose() * (p * eps)
}

/// `χ̂ = BᵀPε ρ̂ / (‖εᵀPB‖ + ω)`.
pub fn compensation_signal<T: Scalar>(
    eps: &DVector<T>,
    p: &DMatrix<T>,
    b: &DMatrix<T>,
    acs: &AdaptiveControllerState<T>,
    i: usize,
) -> DVector<T> {
    compensation_from(&eps_pb(eps, p, b), acs.rho_hat[i], acs.omega)
}

pub fn compensation_from<T: Scalar>(s: &DVector<T>, rho_hat: T, omega: T) -> DVector<T> {
    s * (rho_hat / (s.norm() + omega))
}

/// Rate of `ρ̂` as a function of `‖εᵀPB‖`.
pub fn rho_rate<T: Scalar>(s_norm: T, dbar: T, omega: T) -> T {
    let two = T::lit(2.0);
    if s_norm >= dbar {
        s_norm + two * omega
    } else {
        s_norm + two * omega * s_norm / dbar
    }
}

pub fn rho_rhs<T: Scalar>(
    eps: &DVector<T>,
    p: &DMatrix<T>,
    b: &DMatrix<T>,
    acs: &AdaptiveControllerState<T>,
    i: usize,
) -> T {
    rho_rate(eps_pb(eps, p, b).norm(), acs.dbar[i], acs.omega)
}

/// `u = Γ̂z + Kε − χ̂`.
pub fn control_input<T: Scalar>(
    eps: &DVector<T>,
    z: &DVector<T>,
    gamma_hat: &DMatrix<T>,
    k: &DMatrix<T>,
    chi_hat: &DVector<T>,
) -> DVector<T> {
    gamma_hat * z + k * eps - chi_hat
}

/// `ε = x − Π̂z`.
pub fn tracking_error<T: Scalar>(x: &DVector<T>, pi_hat: &DMatrix<T>, z: &DVector<T>) -> DVector<T> {
    x - pi_hat * z
}
