//! Attack models: DoS schedules, actuation injection, FDI distortion of
//! exchanged outputs and camouflage impostor signals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::topology::Topology;

/// Periodic DoS generator: attacks on `[start_offset + k·period, … + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicDos {
    pub period: f64,
    pub start_offset: f64,
    pub duration: f64,
}

/// A communication link that DoS can cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DosLink {
    /// Follower `from` → follower `to`.
    Follower { from: usize, to: usize },
    /// Leader → follower pinning edge.
    Pinning { leader: usize, follower: usize },
}

/// Where an active DoS interval applies.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum DosScope {
    #[default]
    Global,
    Links(Vec<DosLink>),
}

/// Union of explicit half-open intervals and an optional periodic generator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DosSchedule {
    /// `(start, duration)` pairs.
    pub intervals: Vec<(f64, f64)>,
    pub periodic: Option<PeriodicDos>,
    pub scope: DosScope,
}

impl DosSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_intervals(intervals: Vec<(f64, f64)>) -> Result<Self> {
        let s = Self {
            intervals,
            ..Self::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn periodic(period: f64, start_offset: f64, duration: f64) -> Result<Self> {
        let s = Self {
            periodic: Some(PeriodicDos {
                period,
                start_offset,
                duration,
            }),
            ..Self::default()
        };
        s.validate()?;
        Ok(s)
    }

    /// Attack active on every link for the whole horizon.
    pub fn permanent(horizon: f64) -> Self {
        Self {
            intervals: vec![(0.0, horizon)],
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty() && self.periodic.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        for &(t, d) in &self.intervals {
            if !(t >= 0.0 && d > 0.0 && t.is_finite() && d.is_finite()) {
                return Err(Error::Attack(format!(
                    "DoS interval ({t}, {d}) needs finite start ≥ 0 and duration > 0"
                )));
            }
        }
        if let Some(p) = self.periodic {
            if !(p.period > 0.0 && p.duration > 0.0 && p.start_offset >= 0.0) {
                return Err(Error::Attack("periodic DoS needs period, duration > 0".into()));
            }
            if p.duration >= p.period {
                return Err(Error::Attack(
                    "periodic DoS duration must be shorter than its period".into(),
                ));
            }
        }
        let mut spans: Vec<(f64, f64)> = self.intervals.iter().map(|&(t, d)| (t, t + d)).collect();
        if let Some(p) = self.periodic {
            let last = spans.iter().map(|s| s.1).fold(0.0, f64::max);
            spans.extend(periodic_spans(&p, last + p.period));
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in spans.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::Attack(format!(
                    "DoS intervals [{}, {}) and [{}, {}) overlap or touch",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(())
    }

    /// Active spans `[a, b)` with `a < t_end`, sorted, unclipped.
    pub fn spans_until(&self, t_end: f64) -> Vec<(f64, f64)> {
        let mut spans: Vec<(f64, f64)> = self
            .intervals
            .iter()
            .filter(|&&(t, _)| t < t_end)
            .map(|&(t, d)| (t, t + d))
            .collect();
        if let Some(p) = self.periodic {
            spans.extend(periodic_spans(&p, t_end));
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        spans
    }

    /// Whether the link is affected when the schedule is active.
    pub fn covers(&self, link: DosLink) -> bool {
        match &self.scope {
            DosScope::Global => true,
            DosScope::Links(l) => l.contains(&link),
        }
    }
}

fn periodic_spans(p: &PeriodicDos, t_end: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let a = p.start_offset + k as f64 * p.period;
        if a >= t_end {
            break;
        }
        out.push((a, a + p.duration));
        k += 1;
    }
    out
}

/// True iff `t` lies in some `[t_l, t_l + Δ_l)`.
pub fn dos_active(sched: &DosSchedule, t: f64) -> bool {
    if sched
        .intervals
        .iter()
        .any(|&(a, d)| t >= a && t < a + d)
    {
        return true;
    }
    match sched.periodic {
        Some(p) if t >= p.start_offset => {
            let k = ((t - p.start_offset) / p.period).floor();
            let a = p.start_offset + k * p.period;
            // guard against floor landing one period off
            (t >= a && t < a + p.duration)
                || (t >= a + p.period && t < a + p.period + p.duration)
        }
        _ => false,
    }
}

/// Count, total duration and frequency of attacks over `[t1, t2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DosMetrics {
    pub count: usize,
    pub total_time: f64,
    pub frequency: f64,
}

pub fn dos_metrics(sched: &DosSchedule, t1: f64, t2: f64) -> DosMetrics {
    let mut count = 0;
    let mut total = 0.0;
    for (a, b) in sched.spans_until(t2) {
        if a < t2 && b > t1 {
            count += 1;
            total += b.min(t2) - a.max(t1);
        }
    }
    let len = t2 - t1;
    DosMetrics {
        count,
        total_time: total,
        frequency: if len > 0.0 { count as f64 / len } else { 0.0 },
    }
}

/// Average-dwell parameters `(τ_a, T_0)` with `T_a(t1,t2) ≤ T_0 + (t2−t1)/τ_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DutyFit {
    pub tau_a: f64,
    pub t0: f64,
}

/// Fits `(τ_a, T_0)` over `[0, horizon]`.
///
/// `1/τ_a` is the worst attacked fraction over windows running from one
/// attack onset to a later one, which gives exactly `duration/period` for a
/// periodic schedule. `T_0` is then the smallest offset making the bound hold
/// on every window whose endpoints are attack onsets, attack ends, 0 or the
/// horizon.
pub fn dos_duty_fit(sched: &DosSchedule, horizon: f64) -> Result<DutyFit> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let spans: Vec<(f64, f64)> = sched
        .spans_until(horizon)
        .into_iter()
        .map(|(a, b)| (a.max(0.0), b.min(horizon)))
        .filter(|(a, b)| b > a)
        .collect();
    if spans.is_empty() {
        return Ok(DutyFit {
            tau_a: f64::INFINITY,
            t0: 0.0,
        });
    }

    // cumulative attacked time F(t) = |[0, t) ∩ attacks|
    let cum = |t: f64| -> f64 {
        spans
            .iter()
            .map(|&(a, b)| (b.min(t) - a).max(0.0))
            .sum()
    };

    let starts: Vec<f64> = spans.iter().map(|s| s.0).collect();
    let mut ratio: f64 = 0.0;
    if starts.len() >= 2 {
        let f: Vec<f64> = starts.iter().map(|&s| cum(s)).collect();
        for i in 0..starts.len() {
            for j in i + 1..starts.len() {
                ratio = ratio.max((f[j] - f[i]) / (starts[j] - starts[i]));
            }
        }
    } else {
        ratio = cum(horizon) / horizon;
    }
    if ratio >= 1.0 {
        return Err(Error::Infeasible(
            "attack occupies whole windows, so τ_a would not exceed 1".into(),
        ));
    }
    let tau_a = if ratio > 0.0 { 1.0 / ratio } else { f64::INFINITY };

    let pts = duty_scan_points(sched, horizon);
    let f: Vec<f64> = pts.iter().map(|&t| cum(t)).collect();
    let mut t0: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            t0 = t0.max(f[j] - f[i] - (pts[j] - pts[i]) / tau_a);
        }
    }
    // lift T_0 by ulps until the bound holds in floating point for the
    // attacked time as `dos_metrics` reports it
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let ta = dos_metrics(sched, pts[i], pts[j]).total_time;
            while ta > t0 + (pts[j] - pts[i]) / tau_a {
                t0 = next_up(t0);
            }
        }
    }
    Ok(DutyFit { tau_a, t0 })
}

/// Window endpoints used by [`dos_duty_fit`], exposed for checking.
pub fn duty_scan_points(sched: &DosSchedule, horizon: f64) -> Vec<f64> {
    let mut pts = vec![0.0, horizon];
    for (a, b) in sched.spans_until(horizon) {
        pts.push(a.max(0.0));
        pts.push(b.min(horizon));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        return f64::from_bits(1);
    }
    f64::from_bits(x.to_bits() + 1)
}

/// Shape of an actuation attack signal.
#[derive(Debug, Clone, PartialEq)]
pub enum ActuationKind<T: Scalar> {
    None,
    /// `χ(t) = offset + rate·t`.
    Ramp { offset: DVector<T>, rate: DVector<T> },
    /// Piecewise-linear interpolation of samples, held constant outside.
    Table { times: Vec<f64>, values: Vec<DVector<T>> },
}

/// Additive input attack `χ_i` with derivative bound `d̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuationAttack<T: Scalar> {
    kind: ActuationKind<T>,
    dbar: T,
}

impl<T: Scalar> ActuationAttack<T> {
    /// Validates `‖dχ/dt‖ ≤ d̄` over the signal's definition.
    pub fn new(kind: ActuationKind<T>, dbar: T) -> Result<Self> {
        if !(dbar > T::zero()) {
            return Err(Error::Attack("derivative bound d̄ must be positive".into()));
        }
        let tol = dbar * T::lit(1e-12);
        match &kind {
            ActuationKind::None => {}
            ActuationKind::Ramp { offset, rate } => {
                if offset.len() != rate.len() {
                    return Err(Error::Attack("ramp offset and rate lengths differ".into()));
                }
                if rate.norm() > dbar + tol {
                    return Err(Error::Attack(format!(
                        "ramp derivative norm {:e} exceeds d̄ = {:e}",
                        rate.norm(),
                        dbar
                    )));
                }
            }
            ActuationKind::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::Attack("table needs matching nonempty times and values".into()));
                }
                let dim = values[0].len();
                if values.iter().any(|v| v.len() != dim) {
                    return Err(Error::Attack("table values have mixed lengths".into()));
                }
                for w in 0..times.len().saturating_sub(1) {
                    let dt = times[w + 1] - times[w];
                    if !(dt > 0.0) {
                        return Err(Error::Attack("table times must increase".into()));
                    }
                    let slope = (&values[w + 1] - &values[w]).norm() / T::lit(dt);
                    if slope > dbar + tol {
                        return Err(Error::Attack(format!(
                            "table derivative {:e} on [{}, {}] exceeds d̄ = {:e}",
                            slope,
                            times[w],
                            times[w + 1],
                            dbar
                        )));
                    }
                }
            }
        }
        Ok(Self { kind, dbar })
    }

    pub fn none(dbar: T) -> Self {
        Self {
            kind: ActuationKind::None,
            dbar,
        }
    }

    pub fn ramp(offset: DVector<T>, rate: DVector<T>, dbar: T) -> Result<Self> {
        Self::new(ActuationKind::Ramp { offset, rate }, dbar)
    }

    pub fn kind(&self) -> &ActuationKind<T> {
        &self.kind
    }

    pub fn dbar(&self) -> T {
        self.dbar
    }

    /// Signal dimension, if the kind fixes one.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            ActuationKind::None => None,
            ActuationKind::Ramp { rate, .. } => Some(rate.len()),
            ActuationKind::Table { values, .. } => Some(values[0].len()),
        }
    }

    /// `χ(t)` as an `m`-vector.
    pub fn signal(&self, t: f64, m: usize) -> DVector<T> {
        match &self.kind {
            ActuationKind::None => DVector::zeros(m),
            ActuationKind::Ramp { offset, rate } => offset + rate * T::lit(t),
            ActuationKind::Table { times, values } => interpolate(times, values, t),
        }
    }
}

pub fn actuation_signal<T: Scalar>(att: &ActuationAttack<T>, t: f64, m: usize) -> DVector<T> {
    att.signal(t, m)
}

fn interpolate<T: Scalar>(times: &[f64], values: &[DVector<T>], t: f64) -> DVector<T> {
    if t <= times[0] {
        return values[0].clone();
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return values[last].clone();
    }
    let j = times.partition_point(|&s| s <= t);
    let (t0, t1) = (times[j - 1], times[j]);
    let w = T::lit((t - t0) / (t1 - t0));
    &values[j - 1] * (T::one() - w) + &values[j] * w
}

/// Source of an output exchanged over the physical network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Node {
    Follower(usize),
    Leader(usize),
}

/// Distortion applied to a transmitted output.
#[derive(Debug, Clone, PartialEq)]
pub enum Distortion<T: Scalar> {
    Identity,
    Bias(DVector<T>),
    /// Adds `amplitude · sin(2π·frequency·t)` to every component.
    Sine { amplitude: T, frequency: f64 },
    Gain(T),
}

impl<T: Scalar> Distortion<T> {
    pub fn apply(&self, y: &DVector<T>, t: f64) -> DVector<T> {
        match self {
            Distortion::Identity => y.clone(),
            Distortion::Bias(b) => y + b,
            Distortion::Sine {
                amplitude,
                frequency,
            } => y.add_scalar(*amplitude * T::lit((2.0 * std::f64::consts::PI * frequency * t).sin())),
            Distortion::Gain(g) => y * *g,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdiEntry<T: Scalar> {
    /// Receiving follower.
    pub to: usize,
    /// Originating node; `Node::Follower(to)` distorts the follower's own measurement.
    pub from: Node,
    pub distortion: Distortion<T>,
}

/// Per-link distortions; unlisted links are untouched.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FdiModel<T: Scalar> {
    pub entries: Vec<FdiEntry<T>>,
}

impl<T: Scalar> FdiModel<T> {
    /// `ȳ_{to,from}` at time `t`.
    pub fn received(&self, to: usize, from: Node, y: &DVector<T>, t: f64) -> DVector<T> {
        self.entries
            .iter()
            .find(|e| e.to == to && e.from == from)
            .map(|e| e.distortion.apply(y, t))
            .unwrap_or_else(|| y.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CamouflageSignal<T: Scalar> {
    Constant(DVector<T>),
    /// `offset + amplitude ⊙ sin(2π·frequency·t + phase)`.
    Sine {
        offset: DVector<T>,
        amplitude: DVector<T>,
        frequency: f64,
        phase: f64,
    },
    Table { times: Vec<f64>, values: Vec<DVector<T>> },
}

/// Impostor output `y_l(t)` injected by attacker `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct CamouflageSource<T: Scalar> {
    pub attacker: usize,
    pub signal: CamouflageSignal<T>,
}

impl<T: Scalar> CamouflageSource<T> {
    pub fn new(attacker: usize, signal: CamouflageSignal<T>, p: usize) -> Result<Self> {
        let ok = match &signal {
            CamouflageSignal::Constant(v) => v.len() == p,
            CamouflageSignal::Sine {
                offset, amplitude, ..
            } => offset.len() == p && amplitude.len() == p,
            CamouflageSignal::Table { times, values } => {
                !times.is_empty()
                    && times.len() == values.len()
                    && values.iter().all(|v| v.len() == p)
                    && times.windows(2).all(|w| w[1] > w[0])
            }
        };
        if !ok {
            return Err(Error::Attack(format!(
                "camouflage signal of attacker {attacker} must be {p}-dimensional"
            )));
        }
        Ok(Self { attacker, signal })
    }

    pub fn output(&self, t: f64) -> DVector<T> {
        match &self.signal {
            CamouflageSignal::Constant(v) => v.clone(),
            CamouflageSignal::Sine {
                offset,
                amplitude,
                frequency,
                phase,
            } => {
                let s = T::lit((2.0 * std::f64::consts::PI * frequency * t + phase).sin());
                offset + amplitude * s
            }
            CamouflageSignal::Table { times, values } => interpolate(times, values, t),
        }
    }
}

/// DoS-gated adjacency and pinning at one instant.
pub fn gated_weights<T: Scalar>(
    topology: &Topology<T>,
    sched: &DosSchedule,
    active: bool,
) -> (DMatrix<T>, DMatrix<T>) {
    if !active {
        return (topology.follower_adjacency.clone(), topology.pinning.clone());
    }
    match &sched.scope {
        DosScope::Global => (
            DMatrix::zeros(topology.n_followers, topology.n_followers),
            DMatrix::zeros(topology.n_followers, topology.m_leaders),
        ),
        DosScope::Links(links) => {
            let mut adj = topology.follower_adjacency.clone();
            let mut pin = topology.pinning.clone();
            for l in links {
                match *l {
                    DosLink::Follower { from, to } if from < adj.ncols() && to < adj.nrows() => {
                        adj[(to, from)] = T::zero()
                    }
                    DosLink::Pinning { leader, follower }
                        if leader < pin.ncols() && follower < pin.nrows() =>
                    {
                        pin[(follower, leader)] = T::zero()
                    }
                    _ => {}
                }
            }
            (adj, pin)
        }
    }
}

/// Attacked local containment measurement `ξ̄_i` for every follower.
///
/// Diagnostic only: the twin-layer protocols never read it.
pub fn corrupted_xi<T: Scalar>(
    topology: &Topology<T>,
    fdi: &FdiModel<T>,
    camouflage: &[CamouflageSource<T>],
    dos: &DosSchedule,
    outputs: &[DVector<T>],
    leader_outputs: &[DVector<T>],
    t: f64,
) -> Vec<DVector<T>> {
    let (adj, pin) = gated_weights(topology, dos, dos_active(dos, t));
    let n = topology.n_followers;
    let p = outputs.first().map_or(0, |y| y.len());
    (0..n)
        .map(|i| {
            let own = fdi.received(i, Node::Follower(i), &outputs[i], t);
            let mut xi = DVector::zeros(p);
            for j in 0..n {
                let a = adj[(i, j)];
                if a != T::zero() {
                    xi += (fdi.received(i, Node::Follower(j), &outputs[j], t) - &own) * a;
                }
            }
            for (k, yk) in leader_outputs.iter().enumerate() {
                let g = pin[(i, k)];
                if g != T::zero() {
                    xi += (fdi.received(i, Node::Leader(k), yk, t) - &own) * g;
                }
            }
            for e in topology.camouflage_edges.iter().filter(|e| e.follower == i) {
                if let Some(src) = camouflage.iter().find(|c| c.attacker == e.attacker) {
                    xi += (src.output(t) - &own) * T::lit(e.weight);
                }
            }
            xi
        })
        .collect()
}
