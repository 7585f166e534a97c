//! Leader and follower models, Riccati-based gain design and the structural
//! checks every gain condition depends on.

use nalgebra::{Complex, DMatrix};

use crate::cpl::regulator_phi;
use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::topology::{min_eig_omega_theta_inv, GraphMatrices};

/// Tolerance on `Re(λ(S))` when checking that the leader is not stable.
pub const ASSUMPTION2_TOL: f64 = -1e-9;
/// Relative singular-value threshold used by every rank test.
pub const RANK_TOL: f64 = 1e-9;
/// Relative distance under which two eigenvalues of `S` are treated as one.
pub const EIG_CLUSTER_TOL: f64 = 1e-8;

/// Leader dynamics `ẋ_k = S x_k`, `y_k = R x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderModel<T: Scalar> {
    pub s: DMatrix<T>,
    pub r: DMatrix<T>,
}

impl<T: Scalar> LeaderModel<T> {
    pub fn new(s: DMatrix<T>, r: DMatrix<T>) -> Result<Self> {
        if !s.is_square() || s.nrows() == 0 {
            return Err(dim_err("LeaderModel", "S must be square and nonempty"));
        }
        if r.ncols() != s.nrows() {
            return Err(dim_err(
                "LeaderModel",
                format!("R has {} columns, expected q = {}", r.ncols(), s.nrows()),
            ));
        }
        Ok(Self { s, r })
    }

    /// State dimension `q`.
    pub fn q(&self) -> usize {
        self.s.nrows()
    }

    /// Output dimension `p`.
    pub fn p(&self) -> usize {
        self.r.nrows()
    }

    /// Stacked `Υ = [S; R]`, `(q+p)×q`.
    pub fn upsilon(&self) -> DMatrix<T> {
        stack_upsilon(&self.s, &self.r)
    }

    /// Assumption 2: all eigenvalues of `S` have nonnegative real part.
    pub fn check_assumption2(&self) -> Result<()> {
        let ev = linalg::eigenvalues(&self.s)?;
        if let Some(z) = ev.iter().find(|z| z.re < T::lit(ASSUMPTION2_TOL)) {
            return Err(Error::Assumption {
                assumption: "Assumption 2",
                detail: format!("S has eigenvalue {:e}{:+e}i", z.re, z.im),
            });
        }
        Ok(())
    }
}

pub fn stack_upsilon<T: Scalar>(s: &DMatrix<T>, r: &DMatrix<T>) -> DMatrix<T> {
    let q = s.ncols();
    let mut u = DMatrix::zeros(s.nrows() + r.nrows(), q);
    u.rows_mut(0, s.nrows()).copy_from(s);
    u.rows_mut(s.nrows(), r.nrows()).copy_from(r);
    u
}

/// Follower dynamics `ẋ_i = A x_i + B u_i`, `y_i = C x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerModel<T: Scalar> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
}

impl<T: Scalar> FollowerModel<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || n == 0 {
            return Err(dim_err("FollowerModel", "A must be square and nonempty"));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(dim_err("FollowerModel", format!("B must be {n}×m")));
        }
        if c.ncols() != n {
            return Err(dim_err("FollowerModel", format!("C must be p×{n}")));
        }
        Ok(Self { a, b, c })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Assumption 3: `(A, B)` stabilizable and `(A, C)` detectable.
    pub fn check_assumption3(&self) -> Result<()> {
        if !is_stabilizable(&self.a, &self.b)? {
            return Err(Error::Assumption {
                assumption: "Assumption 3",
                detail: "(A, B) is not stabilizable".into(),
            });
        }
        if !is_detectable(&self.a, &self.c)? {
            return Err(Error::Assumption {
                assumption: "Assumption 3",
                detail: "(A, C) is not detectable".into(),
            });
        }
        Ok(())
    }
}

/// LQR design of one follower.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains<T: Scalar> {
    /// Stabilizing Riccati solution.
    pub p: DMatrix<T>,
    /// Feedback gain `K = -R⁻¹BᵀP`.
    pub k: DMatrix<T>,
    pub q_weight: DMatrix<T>,
    pub r_weight: DMatrix<T>,
}

impl<T: Scalar> ControllerGains<T> {
    /// Frobenius norm of `AᵀP + PA + Q − PBR⁻¹BᵀP`.
    pub fn care_residual(&self, a: &DMatrix<T>, b: &DMatrix<T>) -> Result<T> {
        care_residual(a, b, &self.q_weight, &self.r_weight, &self.p)
    }
}

pub fn care_residual<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    rw: &DMatrix<T>,
    p: &DMatrix<T>,
) -> Result<T> {
    let rinv = rw
        .clone()
        .try_inverse()
        .ok_or(Error::Singular("R weight"))?;
    let res = a.transpose() * p + p * a + q - p * b * rinv * b.transpose() * p;
    Ok(res.norm())
}

/// Solves `AᵀP + PA + Q − PBRw⁻¹BᵀP = 0` for the stabilizing `P` and returns
/// `K = −Rw⁻¹BᵀP`.
///
/// The stable invariant subspace of the Hamiltonian
/// `[A, −BRw⁻¹Bᵀ; −Q, −Aᵀ]` is extracted with the matrix sign function and
/// the result is polished with Newton–Kleinman steps.
pub fn care_solve<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    rw: &DMatrix<T>,
) -> Result<ControllerGains<T>> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || rw.shape() != (m, m) {
        return Err(dim_err("care_solve", "expected A n×n, B n×m, Q n×n, Rw m×m"));
    }
    if !linalg::is_positive_definite(rw) {
        return Err(Error::InvalidArgument("Rw must be symmetric positive definite".into()));
    }
    let q = linalg::symmetrize(q);
    let rw = linalg::symmetrize(rw);
    let rinv = rw.clone().try_inverse().ok_or(Error::Singular("Rw"))?;
    let brb = b * &rinv * b.transpose();

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&brb));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let hscale = linalg::fro(&h).max(T::one());
    let ev = linalg::eigenvalues(&h)?;
    if let Some(z) = ev
        .iter()
        .find(|z| z.re.abs() <= T::lit(1e-9) * hscale)
    {
        return Err(Error::NoStabilizingSolution(format!(
            "Hamiltonian eigenvalue {:e}{:+e}i on the imaginary axis",
            z.re, z.im
        )));
    }

    let w = linalg::matrix_sign(&h)?;
    // W [I; P] = −[I; P]  =>  [W12; W22 + I] P = −[W11 + I; W21]
    let eye = DMatrix::<T>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.rows_mut(0, n).copy_from(&w.view((0, n), (n, n)));
    lhs.rows_mut(n, n)
        .copy_from(&(w.view((n, n), (n, n)).into_owned() + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.rows_mut(0, n)
        .copy_from(&(-(w.view((0, 0), (n, n)).into_owned() + &eye)));
    rhs.rows_mut(n, n).copy_from(&(-w.view((n, 0), (n, n)).into_owned()));

    let sv = linalg::singular_values(&lhs);
    let smax = sv.iter().copied().fold(T::zero(), T::max);
    let smin = sv.iter().copied().fold(smax, T::min);
    if !(smin > T::lit(1e-12) * smax) {
        return Err(Error::NoStabilizingSolution(
            "ill-conditioned invariant subspace basis".into(),
        ));
    }
    let p0 = lhs
        .svd(true, true)
        .solve(&rhs, T::default_epsilon())
        .map_err(|_| Error::Singular("invariant subspace least squares"))?;
    let mut p = linalg::symmetrize(&p0);

    let gain = |p: &DMatrix<T>| -(&rinv * b.transpose() * p);
    let mut res = care_residual(a, b, &q, &rw, &p)?;
    // Newton steps. The full update is usually the more accurate one, while
    // the correction form keeps large solutions from losing digits in the
    // Lyapunov solve; take whichever lowers the residual.
    for _ in 0..6 {
        let k = gain(&p);
        let ac = a + b * &k;
        if !linalg::is_hurwitz(&ac)? {
            break;
        }
        let full = linalg::solve_lyapunov(&ac, &(&q + k.transpose() * &rw * &k)).ok();
        let defect = a.transpose() * &p + &p * a + &q - &p * &brb * &p;
        let corrected = linalg::solve_lyapunov(&ac, &linalg::symmetrize(&defect))
            .ok()
            .map(|dx| linalg::symmetrize(&(&p + dx)));
        let mut best: Option<(DMatrix<T>, T)> = None;
        for cand in full.into_iter().chain(corrected) {
            let r = care_residual(a, b, &q, &rw, &cand)?;
            if best.as_ref().map_or(true, |(_, br)| r < *br) {
                best = Some((cand, r));
            }
        }
        match best {
            Some((next, next_res)) if next_res < res => {
                p = next;
                res = next_res;
            }
            _ => break,
        }
    }

    let k = gain(&p);
    if !linalg::is_hurwitz(&(a + b * &k))? {
        return Err(Error::NoStabilizingSolution(
            "closed loop A + BK is not Hurwitz".into(),
        ));
    }
    let pev = linalg::sym_eigenvalues(&p);
    if pev.len() > 0 && pev[0] < -T::lit(1e-10) * linalg::fro(&p).max(T::one()) {
        return Err(Error::NoStabilizingSolution(
            "Riccati solution is not positive semidefinite".into(),
        ));
    }
    Ok(ControllerGains {
        p,
        k,
        q_weight: q,
        r_weight: rw,
    })
}

/// Free constants of the estimator gain design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlDesignParams<T: Scalar> {
    pub alpha1_tilde: T,
    pub k1: T,
    /// State weight regularising the Riccati form of the design equation.
    pub epsilon: T,
}

impl<T: Scalar> Default for TlDesignParams<T> {
    fn default() -> Self {
        Self {
            alpha1_tilde: T::one(),
            k1: T::lit(0.01),
            epsilon: T::lit(1e-9),
        }
    }
}

/// Estimator coupling gain and the decay/growth constants behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct TlGainDesign<T: Scalar> {
    pub p2: DMatrix<T>,
    pub g: DMatrix<T>,
    pub alpha1: T,
    pub alpha2: T,
    pub alpha1_tilde: T,
    pub alpha2_tilde: T,
    pub k1: T,
    /// `‖P̄S + SᵀP̄ − μ₂²P̄² + α̃₁P̄‖_F`.
    pub design_residual: T,
    /// `λ_max(P̄S + SᵀP̄ − α̃₂P̄)`.
    pub growth_margin: T,
    /// `α₁ / (α₁ + α₂)`.
    pub duty_threshold: T,
    pub tau_a: f64,
    /// `1/τ_a < α₁/(α₁ + α₂)` with `α₁ > 0` and `τ_a > 1`.
    pub duty_feasible: bool,
}

/// Residuals of the two matrix conditions on `P̄` for given constants.
pub fn tl_design_residuals<T: Scalar>(
    p2: &DMatrix<T>,
    s: &DMatrix<T>,
    mu2: T,
    alpha1_tilde: T,
    alpha2_tilde: T,
) -> (T, T) {
    let sym = p2 * s + s.transpose() * p2;
    let eq = &sym - p2.transpose() * p2 * (mu2 * mu2) + p2 * alpha1_tilde;
    let ineq = &sym - p2 * alpha2_tilde;
    let max_eig = linalg::sym_eigenvalues(&ineq)
        .iter()
        .copied()
        .fold(T::lit(f64::NEG_INFINITY), T::max);
    (eq.norm(), max_eig)
}

/// Smallest `α` with `P̄S + SᵀP̄ − αP̄ ⪯ 0`, i.e. the largest generalized
/// eigenvalue of `(P̄S + SᵀP̄, P̄)`.
pub fn growth_rate<T: Scalar>(p2: &DMatrix<T>, s: &DMatrix<T>) -> Result<T> {
    let chol = p2
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Infeasible("P̄ is not positive definite".into()))?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or(Error::Singular("Cholesky factor"))?;
    let sym = p2 * s + s.transpose() * p2;
    let scaled = &linv * sym * linv.transpose();
    Ok(linalg::sym_eigenvalues(&scaled)
        .iter()
        .copied()
        .fold(T::lit(f64::NEG_INFINITY), T::max))
}

/// Designs `P̄`, `G` and the decay/growth constants of the estimator and
/// checks the dwell condition against `τ_a`.
pub fn design_tl_gain<T: Scalar>(
    s: &DMatrix<T>,
    mu2: T,
    theta: &DMatrix<T>,
    omega: &DMatrix<T>,
    tau_a: f64,
    params: TlDesignParams<T>,
) -> Result<TlGainDesign<T>> {
    let q = s.nrows();
    if !(mu2 > T::zero()) {
        return Err(Error::InvalidArgument("μ₂ must be positive".into()));
    }
    if !(params.alpha1_tilde > T::zero()) || !(params.k1 > T::zero()) {
        return Err(Error::InvalidArgument("α̃₁ and k₁ must be positive".into()));
    }
    let eye = DMatrix::<T>::identity(q, q);
    let shifted = s + &eye * (params.alpha1_tilde * T::lit(0.5));
    let rw = &eye * (T::one() / (mu2 * mu2));
    let care = care_solve(&shifted, &eye, &(&eye * params.epsilon), &rw)
        .map_err(|e| Error::Infeasible(format!("no positive definite P̄: {e}")))?;
    let p2 = care.p;
    if !linalg::is_positive_definite(&p2) {
        return Err(Error::Infeasible("P̄ is not positive definite".into()));
    }
    let alpha2_tilde = growth_rate(&p2, s)?.max(T::zero());
    let (design_residual, growth_margin) =
        tl_design_residuals(&p2, s, mu2, params.alpha1_tilde, alpha2_tilde);

    let coupling = params.k1 * linalg::spectral_norm(theta) * linalg::spectral_norm(&p2);
    let alpha1 = params.alpha1_tilde - coupling;
    let alpha2 = alpha2_tilde + coupling;

    let omega_inv = omega
        .clone()
        .try_inverse()
        .ok_or(Error::Singular("Ω"))?;
    let lam = linalg::eigenvalues(&(omega_inv * theta))?
        .iter()
        .map(|z| z.re)
        .fold(T::lit(f64::NEG_INFINITY), T::max);
    let g = &p2 * (mu2 * lam);

    let duty_threshold = alpha1 / (alpha1 + alpha2);
    let duty_feasible = tau_a > 1.0
        && alpha1 > T::zero()
        && (1.0 / tau_a) < duty_threshold.to_f64_lossy();
    Ok(TlGainDesign {
        p2,
        g,
        alpha1,
        alpha2,
        alpha1_tilde: params.alpha1_tilde,
        alpha2_tilde,
        k1: params.k1,
        design_residual,
        growth_margin,
        duty_threshold,
        tau_a,
        duty_feasible,
    })
}

/// Eigenvalues of `m` with near-duplicates merged.
pub fn distinct_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    let ev = linalg::eigenvalues(m)?;
    let mut out: Vec<Complex<T>> = Vec::new();
    for z in ev {
        let dup = out.iter().any(|w| {
            let scale = cabs(z).max(cabs(*w)).max(T::one());
            cabs(z - w) <= T::lit(EIG_CLUSTER_TOL) * scale
        });
        if !dup {
            out.push(z);
        }
    }
    Ok(out)
}

fn cabs<T: Scalar>(z: Complex<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}

fn pbh_rank<T: Scalar>(a: &DMatrix<T>, other: &DMatrix<T>, lambda: Complex<T>, stack_right: bool) -> usize {
    let n = a.nrows();
    let shifted = linalg::to_complex(a)
        - DMatrix::<Complex<T>>::identity(n, n) * lambda;
    let o = linalg::to_complex(other);
    let m = if stack_right {
        let mut m = DMatrix::zeros(n, n + o.ncols());
        m.columns_mut(0, n).copy_from(&shifted);
        m.columns_mut(n, o.ncols()).copy_from(&o);
        m
    } else {
        let mut m = DMatrix::zeros(n + o.nrows(), n);
        m.rows_mut(0, n).copy_from(&shifted);
        m.rows_mut(n, o.nrows()).copy_from(&o);
        m
    };
    linalg::rank_complex(&m, T::lit(RANK_TOL))
}

/// PBH test over the eigenvalues of `A` with `Re(λ) ≥ −tol`.
pub fn is_stabilizable<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<bool> {
    let n = a.nrows();
    Ok(distinct_eigenvalues(a)?
        .into_iter()
        .filter(|z| z.re >= T::lit(ASSUMPTION2_TOL))
        .all(|z| pbh_rank(a, b, z, true) == n))
}

pub fn is_detectable<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<bool> {
    let n = a.nrows();
    Ok(distinct_eigenvalues(a)?
        .into_iter()
        .filter(|z| z.re >= T::lit(ASSUMPTION2_TOL))
        .all(|z| pbh_rank(a, c, z, false) == n))
}

/// PBH controllability over the whole spectrum of `A`.
pub fn is_controllable_pbh<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<bool> {
    let n = a.nrows();
    Ok(distinct_eigenvalues(a)?
        .into_iter()
        .all(|z| pbh_rank(a, b, z, true) == n))
}

/// Assumption 4: `rank [A − λI, B; C, 0] = n + p` for every `λ ∈ σ(S)`.
pub fn check_rank_condition<T: Scalar>(fm: &FollowerModel<T>, s: &DMatrix<T>) -> bool {
    let n = fm.n();
    let m = fm.m();
    let p = fm.p();
    let Ok(eigs) = distinct_eigenvalues(s) else {
        return false;
    };
    eigs.into_iter().all(|lambda| {
        let mut mat = DMatrix::<Complex<T>>::zeros(n + p, n + m);
        let shifted = linalg::to_complex(&fm.a)
            - DMatrix::<Complex<T>>::identity(n, n) * lambda;
        mat.view_mut((0, 0), (n, n)).copy_from(&shifted);
        mat.view_mut((0, n), (n, m)).copy_from(&linalg::to_complex(&fm.b));
        mat.view_mut((n, 0), (p, n)).copy_from(&linalg::to_complex(&fm.c));
        linalg::rank_complex(&mat, T::lit(RANK_TOL)) == n + p
    })
}

/// Strict lower bound on the observer gain:
/// `σ_max(S) / (λ_min(ΩΘ⁻¹)(1 − 1/τ_a))`.
pub fn observer_gain_bound<T: Scalar>(
    s: &DMatrix<T>,
    gm: &GraphMatrices<T>,
    tau_a: f64,
) -> Result<T> {
    if !(tau_a > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "τ_a = {tau_a} must exceed 1 for the observer bound"
        )));
    }
    let lam = min_eig_omega_theta_inv(gm)?;
    let duty = T::lit(1.0 - 1.0 / tau_a);
    Ok(linalg::sigma_max(s) / (lam * duty))
}

/// Strict lower bound on the regulator-solver gain:
/// `σ_max(S) / λ_min(ΦᵀΦ)`.
pub fn regulator_gain_bound<T: Scalar>(s: &DMatrix<T>, fm: &FollowerModel<T>) -> Result<T> {
    let phi = regulator_phi(fm, s);
    let gram = phi.transpose() * &phi;
    let ev = linalg::sym_eigenvalues(&gram);
    let lmax = ev[ev.len() - 1];
    let lmin = ev[0];
    if !(lmin > T::lit(1e-12) * lmax.max(T::one())) {
        return Err(Error::Assumption {
            assumption: "Assumption 4",
            detail: format!("ΦᵀΦ is numerically singular (λ_min = {lmin:e})"),
        });
    }
    Ok(linalg::sigma_max(s) / lmin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_graph_matrices, Topology};
    use approx::assert_relative_eq;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn care_scalar_integrator() {
        let g = care_solve(&m(1, 1, &[0.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]))
            .unwrap();
        assert_relative_eq!(g.p[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.k[(0, 0)], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn care_scalar_stable() {
        let g = care_solve(&m(1, 1, &[-1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]))
            .unwrap();
        let root = 2f64.sqrt() - 1.0;
        assert_relative_eq!(g.p[(0, 0)], root, epsilon = 1e-12);
        assert_relative_eq!(g.k[(0, 0)], -root, epsilon = 1e-12);
    }

    #[test]
    fn care_rejects_uncontrollable_unstable_mode() {
        let r = care_solve(&m(1, 1, &[1.0]), &m(1, 1, &[0.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]));
        assert!(r.is_err());
    }

    #[test]
    fn care_double_integrator_known_solution() {
        // P = [[√3, 1], [1, √3]] for A = [[0,1],[0,0]], B = [0;1], Q = I, R = 1
        let a = m(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let g = care_solve(&a, &b, &DMatrix::identity(2, 2), &m(1, 1, &[1.0])).unwrap();
        let s3 = 3f64.sqrt();
        assert_relative_eq!(g.p, m(2, 2, &[s3, 1.0, 1.0, s3]), epsilon = 1e-10);
        assert!(g.care_residual(&a, &b).unwrap() < 1e-10);
    }

    #[test]
    fn tl_gain_scalar() {
        let t = Topology::<f64>::from_edges(1, 1, &[], &[(0, 0, 1.0)]).unwrap();
        let gm = build_graph_matrices(&t).unwrap();
        let d = design_tl_gain(&m(1, 1, &[0.0]), 1.0, &gm.theta, &gm.omega, 2.0, TlDesignParams::default())
            .unwrap();
        assert_relative_eq!(d.p2[(0, 0)], 1.0, epsilon = 1e-8);
        assert_eq!(d.alpha2_tilde, 0.0);
        assert!(d.design_residual < 1e-8);
        assert!(d.growth_margin <= 1e-9);
        // G = μ₂ λ_max(Ω⁻¹Θ) P̄ = 1 · 0.5 · 1
        assert_relative_eq!(d.g[(0, 0)], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn duty_flag_follows_inequality() {
        let t = Topology::<f64>::from_edges(1, 1, &[], &[(0, 0, 1.0)]).unwrap();
        let gm = build_graph_matrices(&t).unwrap();
        let s = m(2, 2, &[0.5, -0.4, 0.8, 0.5]);
        let d = design_tl_gain(&s, 0.5, &gm.theta, &gm.omega, 1.05, TlDesignParams::default())
            .unwrap();
        assert!(1.0 / 1.05 > d.duty_threshold);
        assert!(!d.duty_feasible);
        let d = design_tl_gain(&s, 0.5, &gm.theta, &gm.omega, 100.0, TlDesignParams::default())
            .unwrap();
        assert!(d.duty_feasible);
    }

    #[test]
    fn rank_condition_cases() {
        let s = m(1, 1, &[0.0]);
        let zero_b = FollowerModel::new(m(1, 1, &[0.0]), m(1, 1, &[0.0]), m(1, 1, &[1.0])).unwrap();
        assert!(!check_rank_condition(&zero_b, &s));
        let unit = FollowerModel::new(m(1, 1, &[0.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        assert!(check_rank_condition(&unit, &s));
    }

    #[test]
    fn observer_bound_edge_cases() {
        let t = Topology::<f64>::from_edges(1, 1, &[], &[(0, 0, 1.0)]).unwrap();
        let gm = build_graph_matrices(&t).unwrap();
        assert_eq!(observer_gain_bound(&m(2, 2, &[0.0; 4]), &gm, 2.0).unwrap(), 0.0);
        assert!(observer_gain_bound(&m(1, 1, &[1.0]), &gm, 1.0).is_err());
    }

    #[test]
    fn regulator_bound_scalar() {
        let fm = FollowerModel::new(m(1, 1, &[0.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        assert_eq!(regulator_gain_bound(&m(1, 1, &[0.0]), &fm).unwrap(), 0.0);
    }

    #[test]
    fn assumption2_rejects_stable_leader() {
        let lm = LeaderModel::new(-DMatrix::<f64>::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        assert!(lm.check_assumption2().is_err());
        let lm = LeaderModel::new(m(2, 2, &[0.0, 1.0, -1.0, 0.0]), m(1, 2, &[1.0, 0.0])).unwrap();
        assert!(lm.check_assumption2().is_ok());
    }

    #[test]
    fn stabilizable_but_not_controllable() {
        let a = m(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        assert!(is_stabilizable(&a, &b).unwrap());
        assert!(!is_controllable_pbh(&a, &b).unwrap());
        let b = m(2, 1, &[1.0, 0.0]);
        assert!(!is_stabilizable(&a, &b).unwrap());
    }
}
