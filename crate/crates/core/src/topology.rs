//! Follower/leader communication graph and the matrices derived from it.
//!
//! Followers are indexed `0..N` and leaders `0..M` internally. The pinning
//! matrix holds `g_ik`, the weight of the edge from leader `k` to follower
//! `i`. Camouflage attackers only ever enter corrupted measurements, never
//! the graph matrices.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Weighted edge from a camouflage attacker to a follower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamouflageEdge {
    pub follower: usize,
    pub attacker: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology<T: Scalar> {
    pub n_followers: usize,
    pub m_leaders: usize,
    /// `a_ij`: weight of the edge from follower `j` to follower `i`.
    pub follower_adjacency: DMatrix<T>,
    /// `g_ik`: weight of the edge from leader `k` to follower `i` (N×M).
    pub pinning: DMatrix<T>,
    pub camouflage_edges: Vec<CamouflageEdge>,
}

/// Graph-derived matrices used by every gain condition.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMatrices<T: Scalar> {
    /// Laplacian `L_f` of the follower subgraph.
    pub laplacian: DMatrix<T>,
    /// `Ψ_k = L_f / M + diag(g_·k)` for each leader.
    pub psi_per_leader: Vec<DMatrix<T>>,
    /// `Ψ̄ = Σ_k Ψ_k`.
    pub psi_bar: DMatrix<T>,
    /// `Θ = diag(Ψ̄⁻¹ 1)`.
    pub theta: DMatrix<T>,
    /// `Ω = ΘΨ̄ + Ψ̄ᵀΘ`.
    pub omega: DMatrix<T>,
}

impl<T: Scalar> Topology<T> {
    pub fn new(
        follower_adjacency: DMatrix<T>,
        pinning: DMatrix<T>,
        camouflage_edges: Vec<CamouflageEdge>,
    ) -> Result<Self> {
        let topo = Self {
            n_followers: follower_adjacency.nrows(),
            m_leaders: pinning.ncols(),
            follower_adjacency,
            pinning,
            camouflage_edges,
        };
        topo.validate()?;
        Ok(topo)
    }

    /// Builds a topology from 0-based weighted edge lists.
    pub fn from_edges(
        n_followers: usize,
        m_leaders: usize,
        follower_edges: &[(usize, usize, f64)],
        pinning_edges: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut adj = DMatrix::zeros(n_followers, n_followers);
        for &(from, to, w) in follower_edges {
            if from >= n_followers || to >= n_followers {
                return Err(Error::Topology(format!(
                    "follower edge ({from}, {to}) out of range"
                )));
            }
            adj[(to, from)] = T::lit(w);
        }
        let mut pin = DMatrix::zeros(n_followers, m_leaders);
        for &(leader, follower, w) in pinning_edges {
            if leader >= m_leaders || follower >= n_followers {
                return Err(Error::Topology(format!(
                    "pinning edge ({leader}, {follower}) out of range"
                )));
            }
            pin[(follower, leader)] = T::lit(w);
        }
        Self::new(adj, pin, Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_followers;
        if self.n_followers == 0 || self.m_leaders == 0 {
            return Err(Error::Topology("need at least one follower and one leader".into()));
        }
        if self.follower_adjacency.shape() != (n, n) {
            return Err(Error::Topology("adjacency must be N×N".into()));
        }
        if self.pinning.shape() != (n, self.m_leaders) {
            return Err(Error::Topology("pinning must be N×M".into()));
        }
        for i in 0..n {
            if self.follower_adjacency[(i, i)] != T::zero() {
                return Err(Error::Topology(format!("self-loop at follower {i}")));
            }
        }
        let bad = self
            .follower_adjacency
            .iter()
            .chain(self.pinning.iter())
            .any(|&w| !(w >= T::zero()) || !w.is_finite());
        if bad {
            return Err(Error::Topology("edge weights must be finite and nonnegative".into()));
        }
        for e in &self.camouflage_edges {
            if e.follower >= n {
                return Err(Error::Topology(format!(
                    "camouflage edge targets unknown follower {}",
                    e.follower
                )));
            }
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(Error::Topology("camouflage weights must be nonnegative".into()));
            }
        }
        Ok(())
    }

    /// Total pinning weight `Σ_k g_ik` of follower `i`.
    pub fn pinning_weight(&self, i: usize) -> T {
        self.pinning.row(i).sum()
    }

    pub fn laplacian(&self) -> DMatrix<T> {
        let n = self.n_followers;
        let degrees = DVector::from_fn(n, |i, _| self.follower_adjacency.row(i).sum());
        DMatrix::from_diagonal(&degrees) - &self.follower_adjacency
    }
}

/// True iff every follower can be reached from some leader through pinning
/// and follower edges.
pub fn check_leader_reachability<T: Scalar>(topology: &Topology<T>) -> bool {
    let n = topology.n_followers;
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        if topology.pinning.row(i).iter().any(|&g| g > T::zero()) {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !seen[i] && topology.follower_adjacency[(i, j)] > T::zero() {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Assembles `L_f`, `Ψ_k`, `Ψ̄`, `Θ` and `Ω`.
pub fn build_graph_matrices<T: Scalar>(topology: &Topology<T>) -> Result<GraphMatrices<T>> {
    topology.validate()?;
    let n = topology.n_followers;
    let m = topology.m_leaders;
    let laplacian = topology.laplacian();
    let share = &laplacian * (T::one() / T::count(m));
    let psi_per_leader: Vec<DMatrix<T>> = (0..m)
        .map(|k| &share + DMatrix::from_diagonal(&topology.pinning.column(k).into_owned()))
        .collect();
    let psi_bar = psi_per_leader
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, p| acc + p);

    let v = psi_bar
        .clone()
        .lu()
        .solve(&DVector::from_element(n, T::one()))
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::Assumption {
            assumption: "Assumption 1",
            detail: "Ψ̄ is singular: some follower has no directed path from a leader".into(),
        })?;
    if linalg::sigma_min(&psi_bar) <= T::lit(1e-12) * linalg::sigma_max(&psi_bar) {
        return Err(Error::Assumption {
            assumption: "Assumption 1",
            detail: "Ψ̄ is numerically singular".into(),
        });
    }
    if let Some(i) = v.iter().position(|&x| x <= T::zero()) {
        return Err(Error::Topology(format!(
            "Θ has nonpositive entry at follower {i}"
        )));
    }
    let theta = DMatrix::from_diagonal(&v);
    let omega = linalg::symmetrize(&(&theta * &psi_bar + psi_bar.transpose() * &theta));
    Ok(GraphMatrices {
        laplacian,
        psi_per_leader,
        psi_bar,
        theta,
        omega,
    })
}

impl<T: Scalar> GraphMatrices<T> {
    pub fn n(&self) -> usize {
        self.psi_bar.nrows()
    }

    /// `Θ^{-1/2} Ω Θ^{-1/2}`, symmetric and similar to `ΩΘ⁻¹`.
    fn scaled_omega(&self) -> DMatrix<T> {
        let d = self.theta.diagonal().map(|x| T::one() / x.sqrt());
        let dm = DMatrix::from_diagonal(&d);
        linalg::symmetrize(&(&dm * &self.omega * &dm))
    }

    /// `λ_max(Ω⁻¹Θ) = 1 / λ_min(ΩΘ⁻¹)`.
    pub fn lambda_max_omega_inv_theta(&self) -> Result<T> {
        Ok(T::one() / min_eig_omega_theta_inv(self)?)
    }

    /// `(Ψ̄⁻¹ Σ_k Ψ_k ⊗ ·)` weights: row `i` gives the convex weights of the
    /// leaders in follower `i`'s containment target.
    pub fn leader_weights(&self) -> Result<DMatrix<T>> {
        let n = self.n();
        let m = self.psi_per_leader.len();
        let lu = self.psi_bar.clone().lu();
        let ones = DVector::from_element(n, T::one());
        let mut w = DMatrix::zeros(n, m);
        for (k, psi) in self.psi_per_leader.iter().enumerate() {
            let col = lu
                .solve(&(psi * &ones))
                .ok_or(Error::Singular("Ψ̄"))?;
            w.set_column(k, &col);
        }
        Ok(w)
    }
}

/// `λ_min(ΩΘ⁻¹)`, computed on the symmetric similarity transform.
pub fn min_eig_omega_theta_inv<T: Scalar>(gm: &GraphMatrices<T>) -> Result<T> {
    if gm.theta.diagonal().iter().any(|&x| x <= T::zero()) {
        return Err(Error::Topology("Θ must be positive".into()));
    }
    let ev = linalg::sym_eigenvalues(&gm.scaled_omega());
    let lmin = ev[0];
    if !(lmin > T::zero()) {
        return Err(Error::Assumption {
            assumption: "graph weighting",
            detail: format!("ΩΘ⁻¹ has nonpositive eigenvalue {lmin:e}"),
        });
    }
    Ok(lmin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn chain() -> Topology<f64> {
        Topology::from_edges(2, 1, &[(0, 1, 1.0)], &[(0, 0, 1.0)]).unwrap()
    }

    #[test]
    fn single_node() {
        let t = Topology::<f64>::from_edges(1, 1, &[], &[(0, 0, 1.0)]).unwrap();
        let gm = build_graph_matrices(&t).unwrap();
        assert_eq!(gm.psi_per_leader[0][(0, 0)], 1.0);
        assert_eq!(gm.theta[(0, 0)], 1.0);
        assert_eq!(gm.omega[(0, 0)], 2.0);
        assert_relative_eq!(min_eig_omega_theta_inv(&gm).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn two_follower_chain() {
        let gm = build_graph_matrices(&chain()).unwrap();
        assert_eq!(gm.laplacian, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 1.0]));
        assert_eq!(
            gm.psi_per_leader[0],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0])
        );
        assert_relative_eq!(
            gm.theta,
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            gm.omega,
            DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 4.0]),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            min_eig_omega_theta_inv(&gm).unwrap(),
            2.0 - 2f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn reachability() {
        assert!(check_leader_reachability(&chain()));
        let t = Topology::<f64>::from_edges(2, 1, &[], &[(0, 0, 1.0)]).unwrap();
        assert!(!check_leader_reachability(&t));
        assert!(matches!(
            build_graph_matrices(&t),
            Err(Error::Assumption { .. })
        ));
    }

    #[test]
    fn rejects_bad_weights() {
        let adj = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0]);
        let pin = DMatrix::from_element(2, 1, 1.0);
        assert!(Topology::new(adj, pin.clone(), vec![]).is_err());
        let adj = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(Topology::new(adj, pin, vec![]).is_err());
    }

    #[test]
    fn leader_weights_are_convex() {
        let t = Topology::<f64>::from_edges(
            3,
            2,
            &[(0, 1, 1.0), (1, 2, 1.0)],
            &[(0, 0, 1.0), (1, 2, 1.0)],
        )
        .unwrap();
        let w = build_graph_matrices(&t).unwrap().leader_weights().unwrap();
        for i in 0..3 {
            assert_relative_eq!(w.row(i).sum(), 1.0, epsilon = 1e-12);
            assert!(w.row(i).iter().all(|&x| x >= -1e-12));
        }
    }
}
