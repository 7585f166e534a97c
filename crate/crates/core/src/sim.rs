//! Closed-loop assembly and fixed-step RK4 integration.
//!
//! Everything (leaders, followers, observer, estimator, regulator flow and
//! adaptive gains) lives in one flat state vector and advances in a single
//! coupled Runge–Kutta step. The DoS indicator is sampled once per step at
//! the step midpoint, so attack edges that fall on the time grid switch
//! exactly between steps.

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::attacks::{
    corrupted_xi, dos_active, dos_duty_fit, gated_weights, ActuationAttack, CamouflageSource,
    DosSchedule, FdiModel, Node,
};
use crate::cpl::{
    compensation_from, pack_delta, regulator_direct_solve, regulator_flow_rhs, rho_rate,
    unpack_delta, RegulatorProblem,
};
use crate::dynamics::{
    check_rank_condition, design_tl_gain, is_detectable, is_stabilizable, observer_gain_bound,
    regulator_gain_bound, ControllerGains, FollowerModel, LeaderModel, TlDesignParams,
};
use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::metrics::{
    containment_error_with_weights, fit_decay_rate_above_floor, hull_distance, uub_bounds,
    ContainmentReport, UubBound, TAIL_FRACTION,
};
use crate::scalar::Scalar;
use crate::topology::{build_graph_matrices, check_leader_reachability, min_eig_omega_theta_inv, GraphMatrices, Topology};
use crate::twinlayer::{estimator_rhs_weighted, observer_rhs_weighted};

/// One follower's plant, controller and attack.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerSetup<T: Scalar> {
    pub model: FollowerModel<T>,
    pub gains: ControllerGains<T>,
    pub x0: DVector<T>,
    pub attack: ActuationAttack<T>,
}

/// Optional overrides of the zero initial estimates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitialEstimates<T: Scalar> {
    pub upsilon_hat: Option<Vec<DMatrix<T>>>,
    pub z: Option<Vec<DVector<T>>>,
    pub delta_hat: Option<Vec<DVector<T>>>,
    pub rho_hat: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopConfig<T: Scalar> {
    pub topology: Topology<T>,
    pub leader: LeaderModel<T>,
    pub leader_x0: Vec<DVector<T>>,
    pub followers: Vec<FollowerSetup<T>>,
    pub mu1: T,
    pub mu2: T,
    pub mu3: T,
    /// Estimator coupling gain.
    pub g: DMatrix<T>,
    /// Constants used to re-derive the dwell condition at assembly.
    pub tl_params: TlDesignParams<T>,
    pub omega: T,
    pub dos: DosSchedule,
    pub fdi: FdiModel<T>,
    pub camouflage: Vec<CamouflageSource<T>>,
    pub initial: InitialEstimates<T>,
    pub dt: f64,
    pub horizon: f64,
    pub stride: usize,
    /// Start the regulator estimates at the exact solution and freeze them.
    pub preconverge_regulator: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

/// Sizes of the blocks of the stacked state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSizes {
    pub leaders: usize,
    pub followers: usize,
    pub observer: usize,
    pub estimator: usize,
    pub regulator: usize,
    pub adaptive: usize,
    pub total: usize,
}

/// Scalar quantities behind the gain conditions.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Quantities {
    pub sigma_max_s: f64,
    pub lambda_min_omega_theta_inv: Option<f64>,
    pub tau_a: Option<f64>,
    pub t0: Option<f64>,
    pub mu1_bound: Option<f64>,
    pub mu3_bounds: Vec<Option<f64>>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub duty_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub items: Vec<CheckItem>,
    pub sizes: StateSizes,
    pub quantities: Quantities,
}

impl ValidationReport {
    pub fn has_failures(&self) -> bool {
        self.items.iter().any(|c| c.status == CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckItem> {
        self.items.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &CheckItem> {
        self.items.iter().filter(|c| c.status == CheckStatus::Warn)
    }

    fn push(&mut self, name: impl Into<String>, status: CheckStatus, detail: impl Into<String>) {
        self.items.push(CheckItem {
            name: name.into(),
            status,
            detail: detail.into(),
        });
    }
}

/// Offsets of each block inside the flat state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub q: usize,
    pub p: usize,
    pub leaders: usize,
    pub followers: Vec<usize>,
    pub observer: usize,
    pub estimator: usize,
    pub regulator: Vec<usize>,
    pub adaptive: usize,
    pub len: usize,
}

impl StateLayout {
    fn new(q: usize, p: usize, m_leaders: usize, dims: &[(usize, usize)]) -> Self {
        let nf = dims.len();
        let mut off = 0;
        let leaders = off;
        off += m_leaders * q;
        let mut followers = Vec::with_capacity(nf);
        for &(n, _) in dims {
            followers.push(off);
            off += n;
        }
        let observer = off;
        off += nf * (q + p) * q;
        let estimator = off;
        off += nf * q;
        let mut regulator = Vec::with_capacity(nf);
        for &(n, m) in dims {
            regulator.push(off);
            off += (n + m) * q;
        }
        let adaptive = off;
        off += nf;
        Self {
            q,
            p,
            leaders,
            followers,
            observer,
            estimator,
            regulator,
            adaptive,
            len: off,
        }
    }

    fn sizes(&self, m_leaders: usize) -> StateSizes {
        let nf = self.followers.len();
        StateSizes {
            leaders: m_leaders * self.q,
            followers: self.observer - self.followers.first().copied().unwrap_or(self.observer),
            observer: nf * (self.q + self.p) * self.q,
            estimator: nf * self.q,
            regulator: self.adaptive - self.regulator.first().copied().unwrap_or(self.adaptive),
            adaptive: nf,
            total: self.len,
        }
    }

    fn upsilon_offset(&self, i: usize) -> usize {
        self.observer + i * (self.q + self.p) * self.q
    }
}

fn dims_of<T: Scalar>(cfg: &ClosedLoopConfig<T>) -> Vec<(usize, usize)> {
    cfg.followers
        .iter()
        .map(|f| (f.model.n(), f.model.m()))
        .collect()
}

fn check_dimensions<T: Scalar>(cfg: &ClosedLoopConfig<T>) -> Result<()> {
    let topo = &cfg.topology;
    let q = cfg.leader.q();
    let p = cfg.leader.p();
    let ctx = "closed-loop config";
    if !(cfg.dt > 0.0) || !(cfg.horizon > 0.0) || cfg.stride == 0 {
        return Err(Error::InvalidArgument("dt, horizon and stride must be positive".into()));
    }
    if cfg.horizon / cfg.dt > 1e9 {
        return Err(Error::InvalidArgument("horizon/dt is too large".into()));
    }
    if !(cfg.mu1 > T::zero() && cfg.mu2 > T::zero() && cfg.mu3 > T::zero() && cfg.omega > T::zero()) {
        return Err(Error::InvalidArgument("μ₁, μ₂, μ₃ and ω must be positive".into()));
    }
    if cfg.leader_x0.len() != topo.m_leaders || cfg.leader_x0.iter().any(|x| x.len() != q) {
        return Err(dim_err(ctx, format!("need {} leader initial states of length {q}", topo.m_leaders)));
    }
    if cfg.followers.len() != topo.n_followers {
        return Err(dim_err(ctx, format!("need {} followers", topo.n_followers)));
    }
    if cfg.g.shape() != (q, q) {
        return Err(dim_err(ctx, format!("G must be {q}×{q}")));
    }
    for (i, f) in cfg.followers.iter().enumerate() {
        let (n, m) = (f.model.n(), f.model.m());
        if f.model.p() != p {
            return Err(dim_err(ctx, format!("follower {} output dimension {} != {p}", i + 1, f.model.p())));
        }
        if f.x0.len() != n {
            return Err(dim_err(ctx, format!("follower {} initial state must have length {n}", i + 1)));
        }
        if f.gains.k.shape() != (m, n) || f.gains.p.shape() != (n, n) {
            return Err(dim_err(ctx, format!("follower {} needs K {m}×{n} and P {n}×{n}", i + 1)));
        }
        if let Some(d) = f.attack.dim() {
            if d != m {
                return Err(dim_err(ctx, format!("follower {} actuation attack must have length {m}", i + 1)));
            }
        }
    }
    for c in &cfg.camouflage {
        if c.output(0.0).len() != p {
            return Err(dim_err(ctx, format!("camouflage signal must have length {p}")));
        }
    }
    for e in &cfg.fdi.entries {
        let from_ok = match e.from {
            Node::Follower(j) => j < topo.n_followers,
            Node::Leader(k) => k < topo.m_leaders,
        };
        if e.to >= topo.n_followers || !from_ok {
            return Err(dim_err(ctx, "FDI entry refers to an unknown node"));
        }
    }
    let init = &cfg.initial;
    if let Some(u) = &init.upsilon_hat {
        if u.len() != topo.n_followers || u.iter().any(|m| m.shape() != (q + p, q)) {
            return Err(dim_err(ctx, format!("initial Υ̂ must be {} matrices of {}×{q}", topo.n_followers, q + p)));
        }
    }
    if let Some(z) = &init.z {
        if z.len() != topo.n_followers || z.iter().any(|v| v.len() != q) {
            return Err(dim_err(ctx, "initial z has wrong shape"));
        }
    }
    if let Some(d) = &init.delta_hat {
        let ok = d.len() == topo.n_followers
            && d.iter().zip(&cfg.followers).all(|(v, f)| v.len() == (f.model.n() + f.model.m()) * q);
        if !ok {
            return Err(dim_err(ctx, "initial Δ̂ has wrong shape"));
        }
    }
    if let Some(r) = &init.rho_hat {
        if r.len() != topo.n_followers || r.iter().any(|x| !(*x >= T::zero())) {
            return Err(dim_err(ctx, "initial ρ̂ must be nonnegative, one per follower"));
        }
    }
    Ok(())
}

/// Runs every structural and gain check. Dimension errors are returned as
/// `Err`; everything else is reported item by item.
pub fn validate<T: Scalar>(cfg: &ClosedLoopConfig<T>) -> Result<ValidationReport> {
    check_dimensions(cfg)?;
    let layout = StateLayout::new(cfg.leader.q(), cfg.leader.p(), cfg.topology.m_leaders, &dims_of(cfg));
    let mut rep = ValidationReport {
        items: Vec::new(),
        sizes: layout.sizes(cfg.topology.m_leaders),
        quantities: Quantities::default(),
    };
    use CheckStatus::*;
    let s = &cfg.leader.s;
    let sigma_s = linalg::sigma_max(s);
    rep.quantities.sigma_max_s = sigma_s.to_f64_lossy();

    let reachable = check_leader_reachability(&cfg.topology);
    let gm = if reachable {
        match build_graph_matrices(&cfg.topology) {
            Ok(gm) => {
                rep.push("Assumption 1: leader reachability", Pass, "every follower has a path from a leader");
                Some(gm)
            }
            Err(e) => {
                rep.push("Assumption 1: leader reachability", Fail, e.to_string());
                None
            }
        }
    } else {
        rep.push(
            "Assumption 1: leader reachability",
            Fail,
            "some follower has no directed path from any leader",
        );
        None
    };

    match cfg.leader.check_assumption2() {
        Ok(()) => rep.push("Assumption 2: leader spectrum", Pass, "Re λ(S) ≥ 0"),
        Err(e) => rep.push("Assumption 2: leader spectrum", Fail, e.to_string()),
    }

    for (i, f) in cfg.followers.iter().enumerate() {
        let id = i + 1;
        let fm = &f.model;
        let stab = is_stabilizable(&fm.a, &fm.b).unwrap_or(false);
        let det = is_detectable(&fm.a, &fm.c).unwrap_or(false);
        let name = format!("Assumption 3: follower {id} stabilizable/detectable");
        match (stab, det) {
            (true, true) => rep.push(name, Pass, ""),
            (false, _) => rep.push(name, Fail, "(A, B) not stabilizable"),
            (_, false) => rep.push(name, Fail, "(A, C) not detectable"),
        }
        let name = format!("Assumption 4: follower {id} rank condition");
        if check_rank_condition(fm, s) {
            rep.push(name, Pass, "");
        } else {
            rep.push(name, Fail, "rank [A − λI, B; C, 0] < n + p for some λ ∈ σ(S)");
        }
        rep.push(
            format!("Assumption 5: follower {id} actuation derivative"),
            Pass,
            format!("d̄ = {:e}", f.attack.dbar()),
        );
        let ac = &fm.a + &fm.b * &f.gains.k;
        let name = format!("Controller: follower {id} A + BK Hurwitz");
        match linalg::spectral_abscissa(&ac) {
            Ok(a) if a < T::zero() => rep.push(name, Pass, format!("spectral abscissa {:.6e}", a)),
            Ok(a) => rep.push(name, Fail, format!("spectral abscissa {:.6e}", a)),
            Err(e) => rep.push(name, Fail, e.to_string()),
        }
        let smin = linalg::sigma_min(&(&f.gains.p * &fm.b));
        let name = format!("Controller: follower {id} σ_min(PB) > 0");
        if smin > T::zero() && linalg::is_positive_definite(&f.gains.p) {
            rep.push(name, Pass, format!("σ_min(PB) = {:.6e}", smin));
        } else {
            rep.push(name, Fail, "P must be positive definite and PB full column rank");
        }
    }

    let tau = if cfg.dos.is_empty() {
        rep.push("DoS duty fit", Pass, "no DoS attacks");
        Some(f64::INFINITY)
    } else {
        match dos_duty_fit(&cfg.dos, cfg.horizon) {
            Ok(fit) => {
                rep.quantities.tau_a = Some(fit.tau_a);
                rep.quantities.t0 = Some(fit.t0);
                rep.push("DoS duty fit", Pass, format!("τ_a = {:.6}, T_0 = {:.6}", fit.tau_a, fit.t0));
                Some(fit.tau_a)
            }
            Err(e) => {
                rep.push("DoS duty fit", Warn, e.to_string());
                None
            }
        }
    };

    if let Some(gm) = &gm {
        match min_eig_omega_theta_inv(gm) {
            Ok(l) => rep.quantities.lambda_min_omega_theta_inv = Some(l.to_f64_lossy()),
            Err(e) => rep.push("Graph: ΩΘ⁻¹ positive", Fail, e.to_string()),
        }
        let name = "Observer: gain μ₁ above bound";
        match tau.map(|t| observer_gain_bound(s, gm, t)) {
            Some(Ok(b)) => {
                rep.quantities.mu1_bound = Some(b.to_f64_lossy());
                let detail = format!("μ₁ = {:.6}, bound = {:.6}", cfg.mu1, b);
                rep.push(name, if cfg.mu1 > b { Pass } else { Warn }, detail);
            }
            Some(Err(e)) => rep.push(name, Warn, e.to_string()),
            None => rep.push(name, Warn, "bound undefined without a feasible τ_a"),
        }
        let name = "Estimator: dwell condition";
        match design_tl_gain(s, cfg.mu2, &gm.theta, &gm.omega, tau.unwrap_or(1.0), cfg.tl_params) {
            Ok(d) => {
                rep.quantities.alpha1 = Some(d.alpha1.to_f64_lossy());
                rep.quantities.alpha2 = Some(d.alpha2.to_f64_lossy());
                rep.quantities.duty_threshold = Some(d.duty_threshold.to_f64_lossy());
                let detail = format!(
                    "α₁ = {:.6}, α₂ = {:.6}, need 1/τ_a < {:.6}",
                    d.alpha1, d.alpha2, d.duty_threshold
                );
                rep.push(name, if d.duty_feasible { Pass } else { Warn }, detail);
            }
            Err(e) => rep.push(name, Warn, e.to_string()),
        }
    }
    let name = "Estimator: gain G positive definite";
    if linalg::is_positive_definite(&cfg.g) {
        rep.push(name, Pass, "");
    } else {
        rep.push(name, Warn, "G is not symmetric positive definite");
    }

    for (i, f) in cfg.followers.iter().enumerate() {
        let name = format!("Regulator: follower {} gain μ₃ above bound", i + 1);
        match regulator_gain_bound(s, &f.model) {
            Ok(b) => {
                rep.quantities.mu3_bounds.push(Some(b.to_f64_lossy()));
                let detail = format!("μ₃ = {:.6}, bound = {:.6}", cfg.mu3, b);
                rep.push(name, if cfg.mu3 > b { Pass } else { Warn }, detail);
            }
            Err(e) => {
                rep.quantities.mu3_bounds.push(None);
                rep.push(name, Fail, e.to_string());
            }
        }
    }
    Ok(rep)
}

/// Assembled closed loop ready to integrate.
#[derive(Debug, Clone)]
pub struct ClosedLoop<T: Scalar> {
    cfg: ClosedLoopConfig<T>,
    gm: GraphMatrices<T>,
    weights: DMatrix<T>,
    upsilon: DMatrix<T>,
    layout: StateLayout,
    report: ValidationReport,
    reg_exact: Vec<DVector<T>>,
    bounds: Vec<UubBound<T>>,
    dbar: Vec<T>,
    open_weights: (DMatrix<T>, DMatrix<T>),
    gated: (DMatrix<T>, DMatrix<T>),
}

/// Builds the closed loop, failing on any hard check.
pub fn assemble<T: Scalar>(cfg: ClosedLoopConfig<T>) -> Result<ClosedLoop<T>> {
    let report = validate(&cfg)?;
    if let Some(f) = report.failures().next() {
        let assumption = ["Assumption 1", "Assumption 2", "Assumption 3", "Assumption 4"]
            .into_iter()
            .find(|a| f.name.starts_with(a))
            .unwrap_or("closed-loop check");
        return Err(Error::Assumption {
            assumption,
            detail: format!("{}: {}", f.name, f.detail),
        });
    }
    for w in report.warnings() {
        warn!("{}: {}", w.name, w.detail);
    }
    assemble_with_report(cfg, report)
}

/// Builds the closed loop without enforcing the hard checks. Only the graph
/// matrices must exist. Meant for ablations and degenerate test systems.
pub fn assemble_unchecked<T: Scalar>(cfg: ClosedLoopConfig<T>) -> Result<ClosedLoop<T>> {
    check_dimensions(&cfg)?;
    let layout = StateLayout::new(cfg.leader.q(), cfg.leader.p(), cfg.topology.m_leaders, &dims_of(&cfg));
    let report = ValidationReport {
        items: Vec::new(),
        sizes: layout.sizes(cfg.topology.m_leaders),
        quantities: Quantities::default(),
    };
    assemble_with_report(cfg, report)
}

fn assemble_with_report<T: Scalar>(cfg: ClosedLoopConfig<T>, report: ValidationReport) -> Result<ClosedLoop<T>> {
    let gm = build_graph_matrices(&cfg.topology)?;
    let weights = gm.leader_weights()?;
    let layout = StateLayout::new(cfg.leader.q(), cfg.leader.p(), cfg.topology.m_leaders, &dims_of(&cfg));
    let upsilon = cfg.leader.upsilon();
    let q = cfg.leader.q();
    let reg_exact = cfg
        .followers
        .iter()
        .map(|f| match regulator_direct_solve(&cfg.leader.s, &cfg.leader.r, &f.model) {
            Ok(sol) => pack_delta(&sol.pi, &sol.gamma),
            Err(_) => Ok(DVector::from_element((f.model.n() + f.model.m()) * q, T::lit(f64::NAN))),
        })
        .collect::<Result<Vec<_>>>()?;
    let models: Vec<FollowerModel<T>> = cfg.followers.iter().map(|f| f.model.clone()).collect();
    let gains: Vec<ControllerGains<T>> = cfg.followers.iter().map(|f| f.gains.clone()).collect();
    let dbar: Vec<T> = cfg.followers.iter().map(|f| f.attack.dbar()).collect();
    let bounds = uub_bounds(&models, &gains, &dbar).unwrap_or_else(|_| {
        vec![
            UubBound {
                e_bar: T::lit(f64::INFINITY),
                eps_bar: T::lit(f64::INFINITY),
            };
            models.len()
        ]
    });
    let open_weights = (cfg.topology.follower_adjacency.clone(), cfg.topology.pinning.clone());
    let gated = gated_weights(&cfg.topology, &cfg.dos, true);
    info!(
        "assembled closed loop: {} leaders, {} followers, state dimension {}",
        cfg.topology.m_leaders,
        cfg.topology.n_followers,
        layout.len
    );
    Ok(ClosedLoop {
        cfg,
        gm,
        weights,
        upsilon,
        layout,
        report,
        reg_exact,
        bounds,
        dbar,
        open_weights,
        gated,
    })
}

fn block<T: Scalar>(x: &DVector<T>, off: usize, len: usize) -> DVector<T> {
    DVector::from_column_slice(&x.as_slice()[off..off + len])
}

fn mat<T: Scalar>(x: &DVector<T>, off: usize, r: usize, c: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(r, c, &x.as_slice()[off..off + r * c])
}

/// Per-follower controller quantities at one state.
struct ControlTerms<T: Scalar> {
    eps: DVector<T>,
    spb: DVector<T>,
    chi_hat: DVector<T>,
    u: DVector<T>,
}

/// One recorded instant, in `f64`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub dos: bool,
    pub xk: Vec<Vec<f64>>,
    pub yk: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    /// `‖e_i‖`.
    pub e_norm: Vec<f64>,
    /// `‖Υ̂_i − Υ‖_F`.
    pub obs_err: Vec<f64>,
    /// `max_i ‖dΥ̂_i/dt‖_F` under the gating of the step starting here.
    pub obs_deriv_norm: f64,
    /// `‖z̃‖`.
    pub z_err_norm: f64,
    /// `‖Φ̂Δ̂ − 𝓡̂‖` with the current observer estimates.
    pub reg_res: Vec<f64>,
    /// `‖Δ̂_i − Δ_i‖` against the exact regulator solution.
    pub reg_err: Vec<f64>,
    pub eps_norm: Vec<f64>,
    pub rho: Vec<f64>,
    pub chi_hat_norm: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    /// Attacked measurement `ξ̄_i` (diagnostic only).
    pub xi_bar: Vec<Vec<f64>>,
}

/// Result of a run: recorded rows, the assembly report and a summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
    pub validation: ValidationReport,
    pub bounds: Vec<UubBound<f64>>,
    pub summary: ContainmentReport,
    pub dt: f64,
    pub horizon: f64,
}

impl SimTrace {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// `max_i ‖Υ̂_i − Υ‖_F` per row.
    pub fn max_obs_err(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.obs_err.iter().copied().fold(0.0, f64::max))
            .collect()
    }

    /// Euclidean norm of the stacked containment error per row.
    pub fn e_total_norm(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.e_norm.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

fn to_vec<T: Scalar>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

impl<T: Scalar> ClosedLoop<T> {
    pub fn config(&self) -> &ClosedLoopConfig<T> {
        &self.cfg
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn graph(&self) -> &GraphMatrices<T> {
        &self.gm
    }

    pub fn bounds(&self) -> &[UubBound<T>] {
        &self.bounds
    }

    /// Exact regulator solutions `vec([Π_i; Γ_i])`.
    pub fn regulator_solutions(&self) -> &[DVector<T>] {
        &self.reg_exact
    }

    pub fn n_steps(&self) -> usize {
        (self.cfg.horizon / self.cfg.dt).round() as usize
    }

    pub fn initial_state(&self) -> DVector<T> {
        let l = &self.layout;
        let cfg = &self.cfg;
        let (q, p) = (l.q, l.p);
        let mut x = DVector::zeros(l.len);
        for (k, xk) in cfg.leader_x0.iter().enumerate() {
            x.rows_mut(l.leaders + k * q, q).copy_from(xk);
        }
        for (i, f) in cfg.followers.iter().enumerate() {
            x.rows_mut(l.followers[i], f.model.n()).copy_from(&f.x0);
        }
        if let Some(u) = &cfg.initial.upsilon_hat {
            for (i, ui) in u.iter().enumerate() {
                x.rows_mut(l.upsilon_offset(i), (q + p) * q)
                    .copy_from(&linalg::vec_col(ui));
            }
        }
        if let Some(z) = &cfg.initial.z {
            for (i, zi) in z.iter().enumerate() {
                x.rows_mut(l.estimator + i * q, q).copy_from(zi);
            }
        }
        for (i, f) in cfg.followers.iter().enumerate() {
            let len = (f.model.n() + f.model.m()) * q;
            let init = if cfg.preconverge_regulator {
                Some(self.reg_exact[i].clone())
            } else {
                cfg.initial.delta_hat.as_ref().map(|d| d[i].clone())
            };
            if let Some(d) = init {
                x.rows_mut(l.regulator[i], len).copy_from(&d);
            }
        }
        if let Some(r) = &cfg.initial.rho_hat {
            for (i, &ri) in r.iter().enumerate() {
                x[l.adaptive + i] = ri;
            }
        }
        x
    }

    /// DoS indicator applied to the step `[t, t + dt)`.
    pub fn dos_for_step(&self, t: f64, dt: f64) -> bool {
        dos_active(&self.cfg.dos, t + 0.5 * dt)
    }

    fn weights_for(&self, dos: bool) -> (&DMatrix<T>, &DMatrix<T>) {
        if dos {
            (&self.gated.0, &self.gated.1)
        } else {
            (&self.open_weights.0, &self.open_weights.1)
        }
    }

    fn upsilon_hats(&self, x: &DVector<T>) -> Vec<DMatrix<T>> {
        let l = &self.layout;
        (0..self.cfg.followers.len())
            .map(|i| mat(x, l.upsilon_offset(i), l.q + l.p, l.q))
            .collect()
    }

    fn estimates(&self, x: &DVector<T>) -> Vec<DVector<T>> {
        let l = &self.layout;
        (0..self.cfg.followers.len())
            .map(|i| block(x, l.estimator + i * l.q, l.q))
            .collect()
    }

    fn leader_states(&self, x: &DVector<T>) -> Vec<DVector<T>> {
        let l = &self.layout;
        (0..self.cfg.topology.m_leaders)
            .map(|k| block(x, l.leaders + k * l.q, l.q))
            .collect()
    }

    fn follower_state(&self, x: &DVector<T>, i: usize) -> DVector<T> {
        block(x, self.layout.followers[i], self.cfg.followers[i].model.n())
    }

    fn delta_hat(&self, x: &DVector<T>, i: usize) -> DVector<T> {
        let f = &self.cfg.followers[i].model;
        block(x, self.layout.regulator[i], (f.n() + f.m()) * self.layout.q)
    }

    fn control_terms(&self, x: &DVector<T>, z: &[DVector<T>], i: usize) -> Result<ControlTerms<T>> {
        let f = &self.cfg.followers[i];
        let xi = self.follower_state(x, i);
        let (pi_hat, gamma_hat) = unpack_delta(&self.delta_hat(x, i), &f.model, self.layout.q)?;
        let eps = &xi - &pi_hat * &z[i];
        let spb = f.model.b.transpose() * (&f.gains.p * &eps);
        let rho = x[self.layout.adaptive + i];
        let chi_hat = compensation_from(&spb, rho, self.cfg.omega);
        let u = &gamma_hat * &z[i] + &f.gains.k * &eps - &chi_hat;
        Ok(ControlTerms {
            eps,
            spb,
            chi_hat,
            u,
        })
    }

    /// Full right-hand side at `(t, x)` with the given DoS indicator.
    pub fn rhs(&self, t: f64, x: &DVector<T>, dos: bool) -> Result<DVector<T>> {
        let l = &self.layout;
        let cfg = &self.cfg;
        let (q, p) = (l.q, l.p);
        let s = &cfg.leader.s;
        let mut dx = DVector::zeros(l.len);
        let (adj, pin) = self.weights_for(dos);

        let xk = self.leader_states(x);
        for (k, xkk) in xk.iter().enumerate() {
            dx.rows_mut(l.leaders + k * q, q).copy_from(&(s * xkk));
        }

        let ups = self.upsilon_hats(x);
        let d_ups = observer_rhs_weighted(&ups, &self.upsilon, adj, pin, cfg.mu1);
        for (i, d) in d_ups.iter().enumerate() {
            dx.rows_mut(l.upsilon_offset(i), (q + p) * q)
                .copy_from_slice(d.as_slice());
        }

        let s_hat: Vec<DMatrix<T>> = ups.iter().map(|u| u.rows(0, q).into_owned()).collect();
        let z = self.estimates(x);
        let dz = estimator_rhs_weighted(&z, &s_hat, &xk, adj, pin, cfg.mu2, &cfg.g);
        for (i, d) in dz.iter().enumerate() {
            dx.rows_mut(l.estimator + i * q, q).copy_from(d);
        }

        for (i, f) in cfg.followers.iter().enumerate() {
            let fm = &f.model;
            let terms = self.control_terms(x, &z, i)?;
            let chi = f.attack.signal(t, fm.m());
            let xi = self.follower_state(x, i);
            let dxi = &fm.a * &xi + &fm.b * (&terms.u + chi);
            dx.rows_mut(l.followers[i], fm.n()).copy_from(&dxi);

            if !cfg.preconverge_regulator {
                let r_hat = ups[i].rows(q, p).into_owned();
                let dd = regulator_flow_rhs(&self.delta_hat(x, i), &s_hat[i], &r_hat, fm, cfg.mu3)?;
                dx.rows_mut(l.regulator[i], dd.len()).copy_from(&dd);
            }
            dx[l.adaptive + i] = rho_rate(terms.spb.norm(), self.dbar[i], cfg.omega);
        }
        Ok(dx)
    }

    /// Classical RK4 step over `[t, t + dt)` with the DoS indicator sampled at
    /// the step midpoint and actuation signals at the stage times.
    pub fn step(&self, x: &DVector<T>, t: f64, dt: f64) -> Result<DVector<T>> {
        let dos = self.dos_for_step(t, dt);
        let h = T::lit(dt);
        let half = T::lit(0.5);
        let k1 = self.rhs(t, x, dos)?;
        let k2 = self.rhs(t + 0.5 * dt, &(x + &k1 * (h * half)), dos)?;
        let k3 = self.rhs(t + 0.5 * dt, &(x + &k2 * (h * half)), dos)?;
        let k4 = self.rhs(t + dt, &(x + &k3 * h), dos)?;
        let sixth = h / T::lit(6.0);
        Ok(x + (k1 + (k2 + k3) * T::lit(2.0) + k4) * sixth)
    }

    fn check_finite(&self, x: &DVector<T>, t: f64) -> Result<()> {
        if let Some(idx) = x.iter().position(|v| !v.is_finite()) {
            let l = &self.layout;
            let part = if idx < l.followers.first().copied().unwrap_or(l.observer) {
                "leader"
            } else if idx < l.observer {
                "follower"
            } else if idx < l.estimator {
                "observer"
            } else if idx < l.regulator.first().copied().unwrap_or(l.adaptive) {
                "estimator"
            } else if idx < l.adaptive {
                "regulator"
            } else {
                "adaptive gain"
            };
            return Err(Error::NonFinite {
                time: t,
                detail: format!("{part} state component {idx} is not finite"),
            });
        }
        Ok(())
    }

    /// Recorded quantities at `(t, x)`.
    pub fn snapshot(&self, t: f64, x: &DVector<T>) -> Result<TraceRow> {
        let l = &self.layout;
        let cfg = &self.cfg;
        let (q, p) = (l.q, l.p);
        let dos = self.dos_for_step(t, cfg.dt);
        let xk = self.leader_states(x);
        let yk: Vec<DVector<T>> = xk.iter().map(|v| &cfg.leader.r * v).collect();
        let xs: Vec<DVector<T>> = (0..cfg.followers.len()).map(|i| self.follower_state(x, i)).collect();
        let ys: Vec<DVector<T>> = xs
            .iter()
            .zip(&cfg.followers)
            .map(|(xi, f)| &f.model.c * xi)
            .collect();
        let e = containment_error_with_weights(&self.weights, &ys, &yk)?;
        let e_norm = (0..ys.len()).map(|i| e.rows(i * p, p).norm().to_f64_lossy()).collect();

        let ups = self.upsilon_hats(x);
        let obs_err = ups.iter().map(|u| (u - &self.upsilon).norm().to_f64_lossy()).collect();
        let (adj, pin) = self.weights_for(dos);
        let obs_deriv_norm = observer_rhs_weighted(&ups, &self.upsilon, adj, pin, cfg.mu1)
            .iter()
            .map(|d| d.norm().to_f64_lossy())
            .fold(0.0, f64::max);

        let z = self.estimates(x);
        let mut z_err_sq = 0.0;
        for (i, zi) in z.iter().enumerate() {
            let mut target = DVector::zeros(q);
            for (k, xkk) in xk.iter().enumerate() {
                target += xkk * self.weights[(i, k)];
            }
            z_err_sq += (zi - target).norm_squared().to_f64_lossy();
        }

        let mut reg_res = Vec::new();
        let mut reg_err = Vec::new();
        let mut eps_norm = Vec::new();
        let mut chi_hat_norm = Vec::new();
        let mut u = Vec::new();
        for (i, f) in cfg.followers.iter().enumerate() {
            let s_hat = ups[i].rows(0, q).into_owned();
            let r_hat = ups[i].rows(q, p).into_owned();
            let delta = self.delta_hat(x, i);
            let prob = RegulatorProblem::new(&f.model, &s_hat, &r_hat)?;
            reg_res.push(prob.residual(&delta).norm().to_f64_lossy());
            reg_err.push((&delta - &self.reg_exact[i]).norm().to_f64_lossy());
            let terms = self.control_terms(x, &z, i)?;
            eps_norm.push(terms.eps.norm().to_f64_lossy());
            chi_hat_norm.push(terms.chi_hat.norm().to_f64_lossy());
            u.push(to_vec(&terms.u));
        }
        let rho = (0..cfg.followers.len())
            .map(|i| x[l.adaptive + i].to_f64_lossy())
            .collect();
        let xi_bar = corrupted_xi(&cfg.topology, &cfg.fdi, &cfg.camouflage, &cfg.dos, &ys, &yk, t)
            .iter()
            .map(to_vec)
            .collect();
        Ok(TraceRow {
            t,
            dos,
            xk: xk.iter().map(to_vec).collect(),
            yk: yk.iter().map(to_vec).collect(),
            x: xs.iter().map(to_vec).collect(),
            y: ys.iter().map(to_vec).collect(),
            z: z.iter().map(to_vec).collect(),
            e_norm,
            obs_err,
            obs_deriv_norm,
            z_err_norm: z_err_sq.sqrt(),
            reg_res,
            reg_err,
            eps_norm,
            rho,
            chi_hat_norm,
            u,
            xi_bar,
        })
    }

    /// Integrates over `[0, T]`, recording every `stride`-th step and the
    /// final step.
    pub fn run(&self) -> Result<SimTrace> {
        let dt = self.cfg.dt;
        let n = self.n_steps();
        let stride = self.cfg.stride;
        let mut x = self.initial_state();
        self.check_finite(&x, 0.0)?;
        let mut rows = Vec::with_capacity(n / stride + 2);
        for k in 0..n {
            let t = k as f64 * dt;
            if k % stride == 0 {
                rows.push(self.snapshot(t, &x)?);
            }
            x = self.step(&x, t, dt)?;
            self.check_finite(&x, t + dt)?;
        }
        rows.push(self.snapshot(n as f64 * dt, &x)?);
        debug!("recorded {} rows", rows.len());
        let bounds: Vec<UubBound<f64>> = self
            .bounds
            .iter()
            .map(|b| UubBound {
                e_bar: b.e_bar.to_f64_lossy(),
                eps_bar: b.eps_bar.to_f64_lossy(),
            })
            .collect();
        let summary = summarize(&rows, &bounds, n as f64 * dt);
        Ok(SimTrace {
            rows,
            validation: self.report.clone(),
            bounds,
            summary,
            dt,
            horizon: n as f64 * dt,
        })
    }
}

/// Builds the run summary from recorded rows.
pub fn summarize(rows: &[TraceRow], bounds: &[UubBound<f64>], horizon: f64) -> ContainmentReport {
    let tail_start = TAIL_FRACTION * horizon;
    let nf = bounds.len();
    let last = rows.last();
    let tail: Vec<&TraceRow> = rows.iter().filter(|r| r.t >= tail_start - 1e-9).collect();
    let tail_max = |f: &dyn Fn(&TraceRow) -> f64| tail.iter().map(|r| f(r)).fold(0.0, f64::max);
    let e_tail_max: Vec<f64> = (0..nf).map(|i| tail_max(&|r| r.e_norm[i])).collect();
    let eps_tail_max: Vec<f64> = (0..nf).map(|i| tail_max(&|r| r.eps_norm[i])).collect();
    let e_within: Vec<bool> = (0..nf).map(|i| e_tail_max[i] <= bounds[i].e_bar).collect();
    let eps_within: Vec<bool> = (0..nf).map(|i| eps_tail_max[i] <= bounds[i].eps_bar).collect();

    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let obs: Vec<f64> = rows
        .iter()
        .map(|r| r.obs_err.iter().copied().fold(0.0, f64::max))
        .collect();
    let zerr: Vec<f64> = rows.iter().map(|r| r.z_err_norm).collect();
    let reg: Vec<f64> = rows
        .iter()
        .map(|r| r.reg_err.iter().copied().fold(0.0, f64::max))
        .collect();
    let floor = 1e-9;
    let hull_distance_final = last.map_or_else(Vec::new, |r| {
        let leaders: Vec<DVector<f64>> = r.yk.iter().map(|v| DVector::from_vec(v.clone())).collect();
        r.y.iter()
            .map(|y| hull_distance(&DVector::from_vec(y.clone()), &leaders))
            .collect()
    });
    ContainmentReport {
        horizon,
        tail_start,
        e_final: last.map_or_else(Vec::new, |r| r.e_norm.clone()),
        e_tail_max,
        eps_tail_max,
        e_bar: bounds.iter().map(|b| b.e_bar).collect(),
        eps_bar: bounds.iter().map(|b| b.eps_bar).collect(),
        bounds_satisfied: e_within.iter().chain(&eps_within).all(|&b| b),
        e_within_bound: e_within,
        eps_within_bound: eps_within,
        observer_error_final: obs.last().copied().unwrap_or(0.0),
        estimator_error_final: zerr.last().copied().unwrap_or(0.0),
        regulator_error_final: last.map_or_else(Vec::new, |r| r.reg_err.clone()),
        observer_rate: fit_decay_rate_above_floor(&times, &obs, 0.0, floor).ok(),
        estimator_rate: fit_decay_rate_above_floor(&times, &zerr, 0.1 * horizon, floor).ok(),
        regulator_rate: fit_decay_rate_above_floor(&times, &reg, 0.0, floor).ok(),
        hull_distance_final,
    }
}

/// Assembles and runs in one call.
pub fn run<T: Scalar>(cfg: ClosedLoopConfig<T>) -> Result<SimTrace> {
    assemble(cfg)?.run()
}
