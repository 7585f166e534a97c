//! JSON experiment files and their translation into a closed-loop setup.
//!
//! Node ids are global and 1-based: followers are `1..=N`, leaders
//! `N+1..=N+M`, camouflage attackers anything above `N+M`.

use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use containment_core::attacks::{
    dos_duty_fit, ActuationAttack, ActuationKind, CamouflageSignal, CamouflageSource, Distortion,
    DosLink, DosSchedule, DosScope, FdiEntry, FdiModel, Node, PeriodicDos,
};
use containment_core::cpl::DEFAULT_OMEGA;
use containment_core::dynamics::{
    care_solve, design_tl_gain, FollowerModel, LeaderModel, TlDesignParams,
};
use containment_core::sim::{ClosedLoopConfig, FollowerSetup, InitialEstimates};
use containment_core::topology::{build_graph_matrices, CamouflageEdge, Topology};

pub const FORMAT_VERSION: &str = "1";

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: String,
    #[serde(default)]
    pub name: Option<String>,
    pub topology: TopologySection,
    pub leader: LeaderSection,
    pub followers: Vec<FollowerSection>,
    pub gains: GainsSection,
    #[serde(default)]
    pub attacks: AttacksSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub followers: usize,
    pub leaders: usize,
    /// Follower→follower and leader→follower edges.
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSection {
    #[serde(rename = "S")]
    pub s: Matrix,
    #[serde(rename = "R")]
    pub r: Matrix,
    pub initial_states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerSection {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
    #[serde(rename = "C")]
    pub c: Matrix,
    pub x0: Vec<f64>,
    /// LQR state weight, identity when absent.
    #[serde(rename = "Q", default)]
    pub q: Option<Matrix>,
    /// LQR input weight, identity when absent.
    #[serde(rename = "Rw", default)]
    pub rw: Option<Matrix>,
    /// Feedback gain overriding the LQR design.
    #[serde(rename = "K", default)]
    pub k: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    #[serde(rename = "G", default)]
    pub g: Option<Matrix>,
    #[serde(default)]
    pub alpha1_tilde: Option<f64>,
    #[serde(default)]
    pub k1: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
    /// Derivative bound for followers without an actuation entry.
    #[serde(default)]
    pub dbar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttacksSection {
    #[serde(default)]
    pub dos: Option<DosSection>,
    #[serde(default)]
    pub actuation: Vec<ActuationSection>,
    #[serde(default)]
    pub fdi: Vec<FdiSection>,
    #[serde(default)]
    pub camouflage: Vec<CamouflageSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicSection {
    pub period: f64,
    pub start_offset: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosSection {
    #[serde(default)]
    pub periodic: Option<PeriodicSection>,
    /// `[start, duration]` pairs.
    #[serde(default)]
    pub intervals: Vec<[f64; 2]>,
    /// Restrict the attack to these `[from, to]` links; all links when absent.
    #[serde(default)]
    pub links: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSection {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuationSection {
    pub follower: usize,
    /// `χ(t) = offset + ramp·t`.
    #[serde(default)]
    pub ramp: Option<Vec<f64>>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    #[serde(default)]
    pub table: Option<TableSection>,
    pub dbar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdiKind {
    Identity,
    Bias,
    Sine,
    Gain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdiSection {
    pub from: usize,
    pub to: usize,
    pub kind: FdiKind,
    /// bias: the offset vector; sine: `[amplitude, frequency_hz]`; gain: `[g]`.
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SignalSection {
    Constant {
        value: Vec<f64>,
    },
    Sine {
        offset: Vec<f64>,
        amplitude: Vec<f64>,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Table {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamouflageSection {
    pub target: usize,
    pub weight: f64,
    pub signal: SignalSection,
    /// Attacker id, assigned after the leaders when absent.
    #[serde(default)]
    pub attacker: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub upsilon_hat: Option<Vec<Matrix>>,
    #[serde(default)]
    pub z: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub delta_hat: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub rho_hat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub preconverge_regulator: bool,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    30.0
}
fn default_stride() -> usize {
    10
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            horizon: default_horizon(),
            stride: default_stride(),
            preconverge_regulator: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

/// Malformed or inconsistent experiment file.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Reads and parses a config file. Parse failures carry line and column.
pub fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    parse(&text).map_err(|e| anyhow::Error::new(ConfigError(format!("{}: {e}", path.display()))))
}

pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    let cfg: ExperimentConfig = serde_json::from_str(text)
        .map_err(|e| {
            // serde_json appends the same position; keep it in front only
            let msg = e.to_string();
            let suffix = format!(" at line {} column {}", e.line(), e.column());
            let msg = msg.strip_suffix(&suffix).unwrap_or(&msg);
            format!("line {}, column {}: {msg}", e.line(), e.column())
        })?;
    if cfg.version != FORMAT_VERSION {
        return Err(format!(
            "field `version`: expected \"{FORMAT_VERSION}\", found \"{}\"",
            cfg.version
        ));
    }
    Ok(cfg)
}

fn matrix(m: &Matrix, field: &str) -> Result<DMatrix<f64>, ConfigError> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || m.iter().any(|r| r.len() != cols) {
        return Err(ConfigError(format!("field `{field}`: expected a nonempty rectangular matrix")));
    }
    if m.iter().flatten().any(|x| !x.is_finite()) {
        return Err(ConfigError(format!("field `{field}`: entries must be finite")));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| m[i][j]))
}

fn vector(v: &[f64], field: &str) -> Result<DVector<f64>, ConfigError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ConfigError(format!("field `{field}`: entries must be finite")));
    }
    Ok(DVector::from_column_slice(v))
}

/// Everything derived from the file besides the closed-loop setup.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub closed_loop: ClosedLoopConfig<f64>,
    /// Whether each follower's `K` came from the file.
    pub k_supplied: Vec<bool>,
    pub g_supplied: bool,
}

impl ExperimentConfig {
    pub fn n_followers(&self) -> usize {
        self.topology.followers
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| "experiment".into())
    }

    fn dos_schedule(&self) -> Result<DosSchedule, ConfigError> {
        let n = self.topology.followers;
        let m = self.topology.leaders;
        let Some(d) = &self.attacks.dos else {
            return Ok(DosSchedule::none());
        };
        let scope = match &d.links {
            None => DosScope::Global,
            Some(links) => DosScope::Links(
                links
                    .iter()
                    .map(|&[from, to]| {
                        if to == 0 || to > n {
                            return Err(ConfigError(format!("attacks.dos.links: {to} is not a follower")));
                        }
                        if (1..=n).contains(&from) {
                            Ok(DosLink::Follower { from: from - 1, to: to - 1 })
                        } else if (n + 1..=n + m).contains(&from) {
                            Ok(DosLink::Pinning { leader: from - n - 1, follower: to - 1 })
                        } else {
                            Err(ConfigError(format!("attacks.dos.links: unknown node {from}")))
                        }
                    })
                    .collect::<Result<_, _>>()?,
            ),
        };
        let sched = DosSchedule {
            intervals: d.intervals.iter().map(|&[t, dur]| (t, dur)).collect(),
            periodic: d.periodic.as_ref().map(|p| PeriodicDos {
                period: p.period,
                start_offset: p.start_offset,
                duration: p.duration,
            }),
            scope,
        };
        sched
            .validate()
            .map_err(|e| ConfigError(format!("attacks.dos: {e}")))?;
        Ok(sched)
    }

    /// Builds the closed-loop setup, designing `K_i` and `G` where absent.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let n = self.topology.followers;
        let m = self.topology.leaders;
        if n == 0 || m == 0 {
            return Err(ConfigError("topology: need at least one follower and one leader".into()));
        }
        if self.followers.len() != n {
            return Err(ConfigError(format!(
                "followers: {} entries for {n} followers",
                self.followers.len()
            )));
        }
        let mut follower_edges = Vec::new();
        let mut pinning_edges = Vec::new();
        for (idx, e) in self.topology.edges.iter().enumerate() {
            let field = format!("topology.edges[{idx}]");
            if e.to == 0 || e.to > n {
                return Err(ConfigError(format!("{field}: `to` = {} is not a follower id", e.to)));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(ConfigError(format!("{field}: weight must be positive")));
            }
            if (1..=n).contains(&e.from) {
                if e.from == e.to {
                    return Err(ConfigError(format!("{field}: self-loop")));
                }
                follower_edges.push((e.from - 1, e.to - 1, e.weight));
            } else if (n + 1..=n + m).contains(&e.from) {
                pinning_edges.push((e.from - n - 1, e.to - 1, e.weight));
            } else {
                return Err(ConfigError(format!("{field}: `from` = {} is not a follower or leader id", e.from)));
            }
        }
        let mut topology = Topology::<f64>::from_edges(n, m, &follower_edges, &pinning_edges)
            .map_err(|e| ConfigError(format!("topology: {e}")))?;

        let s = matrix(&self.leader.s, "leader.S")?;
        let r = matrix(&self.leader.r, "leader.R")?;
        let leader = LeaderModel::new(s, r).map_err(|e| ConfigError(format!("leader: {e}")))?;
        let (q, p) = (leader.q(), leader.p());
        if self.leader.initial_states.len() != m {
            return Err(ConfigError(format!("leader.initial_states: need {m} states")));
        }
        let leader_x0 = self
            .leader
            .initial_states
            .iter()
            .enumerate()
            .map(|(k, x)| {
                if x.len() != q {
                    return Err(ConfigError(format!("leader.initial_states[{k}]: need length {q}")));
                }
                vector(x, "leader.initial_states")
            })
            .collect::<Result<Vec<_>, _>>()?;

        let omega = self.gains.omega.unwrap_or(DEFAULT_OMEGA);
        let mut actuation: Vec<Option<&ActuationSection>> = vec![None; n];
        for a in &self.attacks.actuation {
            if a.follower == 0 || a.follower > n {
                return Err(ConfigError(format!("attacks.actuation: unknown follower {}", a.follower)));
            }
            if actuation[a.follower - 1].replace(a).is_some() {
                return Err(ConfigError(format!(
                    "attacks.actuation: follower {} listed twice",
                    a.follower
                )));
            }
        }
        let default_dbar = self.gains.dbar.unwrap_or_else(|| {
            self.attacks
                .actuation
                .iter()
                .map(|a| a.dbar)
                .fold(0.0, f64::max)
        });

        let mut followers = Vec::with_capacity(n);
        let mut k_supplied = Vec::with_capacity(n);
        for (i, f) in self.followers.iter().enumerate() {
            let id = i + 1;
            let field = |name: &str| format!("followers[{i}].{name}");
            let model = FollowerModel::new(
                matrix(&f.a, &field("A"))?,
                matrix(&f.b, &field("B"))?,
                matrix(&f.c, &field("C"))?,
            )
            .map_err(|e| ConfigError(format!("followers[{i}]: {e}")))?;
            let (ni, mi) = (model.n(), model.m());
            if model.p() != p {
                return Err(ConfigError(format!(
                    "{}: output dimension {} differs from the leaders' {p}",
                    field("C"),
                    model.p()
                )));
            }
            if f.x0.len() != ni {
                return Err(ConfigError(format!("{}: need length {ni}", field("x0"))));
            }
            let qw = match &f.q {
                Some(m) => matrix(m, &field("Q"))?,
                None => DMatrix::identity(ni, ni),
            };
            let rw = match &f.rw {
                Some(m) => matrix(m, &field("Rw"))?,
                None => DMatrix::identity(mi, mi),
            };
            let mut gains = care_solve(&model.a, &model.b, &qw, &rw)
                .map_err(|e| ConfigError(format!("followers[{i}]: LQR design failed: {e}")))?;
            if let Some(k) = &f.k {
                let k = matrix(k, &field("K"))?;
                if k.shape() != (mi, ni) {
                    return Err(ConfigError(format!("{}: must be {mi}×{ni}", field("K"))));
                }
                gains.k = k;
            }
            k_supplied.push(f.k.is_some());

            let attack = match actuation[i] {
                None => {
                    if !(default_dbar > 0.0) {
                        return Err(ConfigError(format!(
                            "follower {id} has no actuation entry and gains.dbar is not set"
                        )));
                    }
                    ActuationAttack::none(default_dbar)
                }
                Some(a) => {
                    let kind = match (&a.ramp, &a.table) {
                        (Some(rate), None) => ActuationKind::Ramp {
                            offset: match &a.offset {
                                Some(o) => vector(o, "attacks.actuation.offset")?,
                                None => DVector::zeros(rate.len()),
                            },
                            rate: vector(rate, "attacks.actuation.ramp")?,
                        },
                        (None, Some(t)) => ActuationKind::Table {
                            times: t.times.clone(),
                            values: t
                                .values
                                .iter()
                                .map(|v| vector(v, "attacks.actuation.table"))
                                .collect::<Result<_, _>>()?,
                        },
                        (None, None) => ActuationKind::None,
                        (Some(_), Some(_)) => {
                            return Err(ConfigError(format!(
                                "attacks.actuation for follower {id}: give either `ramp` or `table`"
                            )))
                        }
                    };
                    ActuationAttack::new(kind, a.dbar)
                        .map_err(|e| ConfigError(format!("attacks.actuation for follower {id}: {e}")))?
                }
            };
            if attack.dim().is_some_and(|d| d != mi) {
                return Err(ConfigError(format!(
                    "attacks.actuation for follower {id}: need length {mi}"
                )));
            }
            followers.push(FollowerSetup {
                model,
                gains,
                x0: vector(&f.x0, &field("x0"))?,
                attack,
            });
        }

        let dos = self.dos_schedule()?;

        let mut fdi = FdiModel::default();
        for (idx, e) in self.attacks.fdi.iter().enumerate() {
            let field = format!("attacks.fdi[{idx}]");
            if e.to == 0 || e.to > n {
                return Err(ConfigError(format!("{field}: `to` must be a follower id")));
            }
            let from = if (1..=n).contains(&e.from) {
                Node::Follower(e.from - 1)
            } else if (n + 1..=n + m).contains(&e.from) {
                Node::Leader(e.from - n - 1)
            } else {
                return Err(ConfigError(format!("{field}: `from` must be a follower or leader id")));
            };
            let distortion = match (&e.kind, e.params.as_slice()) {
                (FdiKind::Identity, _) => Distortion::Identity,
                (FdiKind::Bias, b) if b.len() == p => Distortion::Bias(vector(b, &field)?),
                (FdiKind::Sine, &[amplitude, frequency]) => Distortion::Sine { amplitude, frequency },
                (FdiKind::Gain, &[g]) => Distortion::Gain(g),
                _ => {
                    return Err(ConfigError(format!(
                        "{field}: params do not match kind (bias: {p} values, sine: [amplitude, frequency], gain: [g])"
                    )))
                }
            };
            fdi.entries.push(FdiEntry {
                to: e.to - 1,
                from,
                distortion,
            });
        }

        let mut camouflage = Vec::new();
        for (idx, c) in self.attacks.camouflage.iter().enumerate() {
            let field = format!("attacks.camouflage[{idx}]");
            if c.target == 0 || c.target > n {
                return Err(ConfigError(format!("{field}: `target` must be a follower id")));
            }
            let attacker = c.attacker.unwrap_or(n + m + 1 + idx);
            if attacker <= n + m {
                return Err(ConfigError(format!("{field}: attacker id must exceed {}", n + m)));
            }
            let signal = match &c.signal {
                SignalSection::Constant { value } => CamouflageSignal::Constant(vector(value, &field)?),
                SignalSection::Sine {
                    offset,
                    amplitude,
                    frequency,
                    phase,
                } => CamouflageSignal::Sine {
                    offset: vector(offset, &field)?,
                    amplitude: vector(amplitude, &field)?,
                    frequency: *frequency,
                    phase: *phase,
                },
                SignalSection::Table { times, values } => CamouflageSignal::Table {
                    times: times.clone(),
                    values: values.iter().map(|v| vector(v, &field)).collect::<Result<_, _>>()?,
                },
            };
            if !camouflage.iter().any(|s: &CamouflageSource<f64>| s.attacker == attacker) {
                camouflage.push(
                    CamouflageSource::new(attacker, signal, p)
                        .map_err(|e| ConfigError(format!("{field}: {e}")))?,
                );
            }
            topology.camouflage_edges.push(CamouflageEdge {
                follower: c.target - 1,
                attacker,
                weight: c.weight,
            });
        }
        topology
            .validate()
            .map_err(|e| ConfigError(format!("attacks.camouflage: {e}")))?;

        let defaults = TlDesignParams::<f64>::default();
        let tl_params = TlDesignParams {
            alpha1_tilde: self.gains.alpha1_tilde.unwrap_or(defaults.alpha1_tilde),
            k1: self.gains.k1.unwrap_or(defaults.k1),
            epsilon: self.gains.epsilon.unwrap_or(defaults.epsilon),
        };
        let g = match &self.gains.g {
            Some(g) => matrix(g, "gains.G")?,
            None => {
                let gm = build_graph_matrices(&topology)
                    .map_err(|e| ConfigError(format!("cannot design G: {e}")))?;
                let tau = if dos.is_empty() {
                    f64::INFINITY
                } else {
                    dos_duty_fit(&dos, self.sim.horizon).map_or(1.0, |f| f.tau_a)
                };
                design_tl_gain(&leader.s, self.gains.mu2, &gm.theta, &gm.omega, tau, tl_params)
                    .map_err(|e| ConfigError(format!("cannot design G: {e}")))?
                    .g
            }
        };

        let init = &self.initial;
        let initial = InitialEstimates {
            upsilon_hat: init
                .upsilon_hat
                .as_ref()
                .map(|v| v.iter().map(|m| matrix(m, "initial.upsilon_hat")).collect())
                .transpose()?,
            z: init
                .z
                .as_ref()
                .map(|v| v.iter().map(|x| vector(x, "initial.z")).collect())
                .transpose()?,
            delta_hat: init
                .delta_hat
                .as_ref()
                .map(|v| v.iter().map(|x| vector(x, "initial.delta_hat")).collect())
                .transpose()?,
            rho_hat: init.rho_hat.clone(),
        };

        Ok(Resolved {
            closed_loop: ClosedLoopConfig {
                topology,
                leader,
                leader_x0,
                followers,
                mu1: self.gains.mu1,
                mu2: self.gains.mu2,
                mu3: self.gains.mu3,
                g,
                tl_params,
                omega,
                dos,
                fdi,
                camouflage,
                initial,
                dt: self.sim.dt,
                horizon: self.sim.horizon,
                stride: self.sim.stride,
                preconverge_regulator: self.sim.preconverge_regulator,
            },
            k_supplied,
            g_supplied: self.gains.g.is_some(),
        })
    }
}

/// Rejects an obviously broken config before any numerics run.
pub fn sanity(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    if !(cfg.sim.dt > 0.0) || !(cfg.sim.horizon > 0.0) || cfg.sim.stride == 0 {
        bail!(ConfigError("sim: dt, horizon and stride must be positive".into()));
    }
    Ok(())
}
