//! Containment errors, ultimate bounds, convex-hull membership and decay-rate
//! fitting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControllerGains, FollowerModel};
use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::topology::{GraphMatrices, Topology};

/// Fraction of the horizon after which ultimate bounds are checked.
pub const TAIL_FRACTION: f64 = 0.8;

/// Leader count up to which hull membership is exact.
pub const EXACT_HULL_MAX_LEADERS: usize = 4;

/// `ξ_i = Σ_j a_ij(y_j − y_i) + Σ_k g_ik(y_k − y_i)`.
pub fn local_xi<T: Scalar>(
    topology: &Topology<T>,
    outputs: &[DVector<T>],
    leader_outputs: &[DVector<T>],
) -> Vec<DVector<T>> {
    let n = topology.n_followers;
    (0..n)
        .map(|i| {
            let yi = &outputs[i];
            let mut xi = DVector::zeros(yi.len());
            for j in 0..n {
                let a = topology.follower_adjacency[(i, j)];
                if a != T::zero() {
                    xi += (&outputs[j] - yi) * a;
                }
            }
            for (k, yk) in leader_outputs.iter().enumerate() {
                let g = topology.pinning[(i, k)];
                if g != T::zero() {
                    xi += (yk - yi) * g;
                }
            }
            xi
        })
        .collect()
}

/// Stacked `e = y − (Ψ̄⊗I)⁻¹ Σ_k (Ψ_k⊗I) ȳ_k`.
pub fn global_containment_error<T: Scalar>(
    gm: &GraphMatrices<T>,
    outputs: &[DVector<T>],
    leader_outputs: &[DVector<T>],
) -> Result<DVector<T>> {
    let w = gm.leader_weights()?;
    containment_error_with_weights(&w, outputs, leader_outputs)
}

/// Same as [`global_containment_error`] with precomputed leader weights.
pub fn containment_error_with_weights<T: Scalar>(
    w: &DMatrix<T>,
    outputs: &[DVector<T>],
    leader_outputs: &[DVector<T>],
) -> Result<DVector<T>> {
    let n = outputs.len();
    if w.shape() != (n, leader_outputs.len()) {
        return Err(dim_err("containment error", "weights do not match follower/leader counts"));
    }
    let p = outputs.first().map_or(0, |y| y.len());
    let mut e = DVector::zeros(n * p);
    for i in 0..n {
        let mut target = DVector::zeros(p);
        for (k, yk) in leader_outputs.iter().enumerate() {
            target += yk * w[(i, k)];
        }
        e.rows_mut(i * p, p).copy_from(&(&outputs[i] - target));
    }
    Ok(e)
}

/// Ultimate bounds of one follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UubBound<T> {
    /// `ē_i = d̄‖C_i‖₂ / σ_min(P_iB_i)`.
    pub e_bar: T,
    /// `ε̄_i = d̄ / σ_min(P_iB_i)`.
    pub eps_bar: T,
}

pub fn uub_bounds<T: Scalar>(
    fms: &[FollowerModel<T>],
    gains: &[ControllerGains<T>],
    dbar: &[T],
) -> Result<Vec<UubBound<T>>> {
    if fms.len() != gains.len() || fms.len() != dbar.len() {
        return Err(dim_err("uub_bounds", "one model, gain and d̄ per follower"));
    }
    fms.iter()
        .zip(gains)
        .zip(dbar)
        .enumerate()
        .map(|(i, ((fm, g), &d))| {
            let smin = linalg::sigma_min(&(&g.p * &fm.b));
            if !(smin > T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "σ_min(P B) = 0 for follower {i}; bound undefined"
                )));
            }
            let eps_bar = d / smin;
            Ok(UubBound {
                e_bar: eps_bar * linalg::spectral_norm(&fm.c),
                eps_bar,
            })
        })
        .collect()
}

/// Euclidean distance from `y` to the convex hull of `vertices`.
///
/// Exact for up to four vertices (every face is tried); beyond that the
/// distance to the affine hull is returned, which is a lower bound.
pub fn hull_distance<T: Scalar>(y: &DVector<T>, vertices: &[DVector<T>]) -> T {
    if vertices.is_empty() {
        return T::lit(f64::INFINITY);
    }
    if vertices.len() > EXACT_HULL_MAX_LEADERS {
        let all: Vec<usize> = (0..vertices.len()).collect();
        return affine_projection(y, vertices, &all).1;
    }
    let m = vertices.len();
    let mut best = T::lit(f64::INFINITY);
    for mask in 1u32..(1 << m) {
        let subset: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
        let (alpha, dist) = affine_projection(y, vertices, &subset);
        let tol = T::lit(-1e-12);
        if alpha.iter().all(|&a| a >= tol) && dist < best {
            best = dist;
        }
    }
    best
}

/// Least-squares affine weights over `subset` and the residual distance.
fn affine_projection<T: Scalar>(y: &DVector<T>, vertices: &[DVector<T>], subset: &[usize]) -> (Vec<T>, T) {
    let v0 = &vertices[subset[0]];
    if subset.len() == 1 {
        return (vec![T::one()], (y - v0).norm());
    }
    let p = y.len();
    let r = subset.len() - 1;
    let d = DMatrix::from_fn(p, r, |row, c| vertices[subset[c + 1]][row] - v0[row]);
    let rhs = y - v0;
    let beta = d
        .clone()
        .svd(true, true)
        .solve(&rhs, T::lit(1e-12))
        .unwrap_or_else(|_| DVector::zeros(r));
    let proj = v0 + &d * &beta;
    let mut alpha = vec![T::one() - beta.sum()];
    alpha.extend(beta.iter().copied());
    (alpha, (y - proj).norm())
}

/// Per-follower test `dist(y_i, conv{y_k}) ≤ tol`.
pub fn containment_membership<T: Scalar>(
    outputs: &[DVector<T>],
    leader_outputs: &[DVector<T>],
    tol: T,
) -> Vec<bool> {
    outputs
        .iter()
        .map(|y| hull_distance(y, leader_outputs) <= tol)
        .collect()
}

/// `−slope` of the least-squares line through `(t, ln norm)` for `t ≥ t_start`.
pub fn fit_decay_rate(times: &[f64], norms: &[f64], t_start: f64) -> Result<f64> {
    fit_decay_rate_window(times, norms, t_start, f64::INFINITY)
}

/// Like [`fit_decay_rate`] restricted to `t_start ≤ t ≤ t_end`.
pub fn fit_decay_rate_window(times: &[f64], norms: &[f64], t_start: f64, t_end: f64) -> Result<f64> {
    if times.len() != norms.len() {
        return Err(dim_err("fit_decay_rate", "times and norms differ in length"));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .filter(|(&t, _)| t >= t_start && t <= t_end)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs at least 10 samples, got {}",
            pts.len()
        )));
    }
    if let Some(&(t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs positive finite norms (value {v} at t = {t})"
        )));
    }
    let n = pts.len() as f64;
    // logs relative to the first sample keep a constant signal exactly flat
    let l0 = pts[0].1.ln();
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = pts.iter().map(|p| p.1.ln() - l0).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, v) in &pts {
        sxy += (t - tm) * (v.ln() - l0 - lm);
        sxx += (t - tm) * (t - tm);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("decay fit needs distinct times".into()));
    }
    Ok(-(sxy / sxx))
}

/// Decay rate over the span where the signal is still above `floor` times
/// its peak, so round-off plateaus do not flatten the fit.
pub fn fit_decay_rate_above_floor(times: &[f64], norms: &[f64], t_start: f64, floor: f64) -> Result<f64> {
    let peak = norms
        .iter()
        .zip(times)
        .filter(|(_, &t)| t >= t_start)
        .map(|(&v, _)| v)
        .fold(0.0, f64::max);
    let cutoff = peak * floor;
    let t_end = times
        .iter()
        .zip(norms)
        .find(|(&t, &v)| t >= t_start && v <= cutoff)
        .map_or(f64::INFINITY, |(&t, _)| t);
    fit_decay_rate_window(times, norms, t_start, t_end)
}

/// Summary of a closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub horizon: f64,
    pub tail_start: f64,
    /// `‖e_i(T)‖`.
    pub e_final: Vec<f64>,
    /// `max ‖e_i(t)‖` over `t ≥ tail_start`.
    pub e_tail_max: Vec<f64>,
    pub eps_tail_max: Vec<f64>,
    pub e_bar: Vec<f64>,
    pub eps_bar: Vec<f64>,
    pub e_within_bound: Vec<bool>,
    pub eps_within_bound: Vec<bool>,
    pub bounds_satisfied: bool,
    pub observer_error_final: f64,
    pub estimator_error_final: f64,
    pub regulator_error_final: Vec<f64>,
    pub observer_rate: Option<f64>,
    pub estimator_rate: Option<f64>,
    pub regulator_rate: Option<f64>,
    /// Distance of each follower's final output to the leaders' hull.
    pub hull_distance_final: Vec<f64>,
}
