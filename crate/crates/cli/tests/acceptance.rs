//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use containment_cli::commands::{cmd_run, RunOverrides};
use containment_cli::config::{self, CamouflageSection, ExperimentConfig, FdiKind, FdiSection, SignalSection};
use containment_cli::output::{trace_record, num};
use containment_core::attacks::{dos_duty_fit, DosSchedule};
use containment_core::cpl::{integrate_regulator_flow, pack_delta, regulator_direct_solve, rho_rate};
use containment_core::dynamics::{care_residual, care_solve, design_tl_gain, is_stabilizable};
use containment_core::metrics::{global_containment_error, local_xi};
use containment_core::sim::{assemble_unchecked, run, SimTrace};
use containment_core::topology::{build_graph_matrices, Topology};
use containment_core::twinlayer::kronecker_commutation_residual;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn example(name: &str) -> ExperimentConfig {
    config::load(&configs_dir().join(format!("{name}.json"))).expect("shipped config parses")
}

fn simulate(cfg: &ExperimentConfig) -> SimTrace {
    run(cfg.resolve().expect("config resolves").closed_loop).expect("run succeeds")
}

struct Timed {
    trace: SimTrace,
    elapsed: Duration,
}

fn timed(name: &str) -> Timed {
    let cfg = example(name);
    let start = Instant::now();
    let trace = simulate(&cfg);
    Timed {
        trace,
        elapsed: start.elapsed(),
    }
}

fn ex1() -> &'static Timed {
    static CELL: OnceLock<Timed> = OnceLock::new();
    CELL.get_or_init(|| timed("example1"))
}

fn ex2() -> &'static Timed {
    static CELL: OnceLock<Timed> = OnceLock::new();
    CELL.get_or_init(|| timed("example2"))
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn regulator_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst_diff: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    let mut count = 0;
    for name in ["example1", "example2"] {
        let cl = example(name).resolve().unwrap().closed_loop;
        let (s, r) = (&cl.leader.s, &cl.leader.r);
        for f in &cl.followers {
            let direct = regulator_direct_solve(s, r, &f.model).unwrap();
            let exact = pack_delta(&direct.pi, &direct.gamma).unwrap();
            let flow =
                integrate_regulator_flow(s, r, &f.model, cl.mu3, &DVector::zeros(exact.len()), None).unwrap();
            worst_diff = worst_diff.max((&flow - &exact).norm());
            worst_res = worst_res.max(direct.state_residual.max(direct.output_residual));
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        count == 9 && worst_diff < 1e-6 && worst_res < 1e-9 && secs < 5.0,
        format!("{count} followers, max ‖Δ̂−Δ‖ = {worst_diff:.2e} (< 1e-6), max residual = {worst_res:.2e} (< 1e-9), {secs:.2} s (< 5 s)"),
    )
}

fn observer_under_dos() -> Outcome {
    let cfg = example("example1");
    let p = cfg.attacks.dos.as_ref().and_then(|d| d.periodic.clone()).unwrap();
    let setup_ok = cfg.gains.mu1 == 2.0 && p.period == 2.0 && p.start_offset == 0.5 && p.duration == 1.03;
    let tr = &ex1().trace;
    let err = tr.max_obs_err();
    let after10 = max_of(tr.rows.iter().zip(&err).filter(|(r, _)| r.t >= 10.0).map(|(_, &e)| e));

    // Negative control: the whole horizon under DoS.
    let mut cl = cfg.resolve().unwrap().closed_loop;
    cl.horizon = 10.0;
    cl.dos = DosSchedule::permanent(cl.horizon);
    let blocked = assemble_unchecked(cl).unwrap().run().unwrap();
    let berr = blocked.max_obs_err();
    let ratio = berr.iter().copied().fold(f64::INFINITY, f64::min) / berr[0];
    outcome(
        setup_ok && after10 < 1e-3 && ratio >= 0.1,
        format!("max_i‖Υ̂_i−Υ‖_F over t ≥ 10 s = {after10:.2e} (< 1e-3); full-DoS control min/initial = {ratio:.3} (≥ 0.1)"),
    )
}

fn estimator_convergence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, t) in [("ex1", ex1()), ("ex2", ex2())] {
        let tr = &t.trace;
        let z_final = tr.rows.last().unwrap().z_err_norm;
        let dos_rows: Vec<_> = tr.rows.iter().filter(|r| r.dos).collect();
        let frozen = dos_rows.iter().all(|r| r.obs_deriv_norm == 0.0);
        let rate = tr.summary.estimator_rate;
        let ok = z_final < 1e-3 && !dos_rows.is_empty() && frozen && rate.is_some_and(|r| r > 0.0);
        pass &= ok;
        parts.push(format!(
            "{name}: ‖z̃(T)‖ = {z_final:.2e}, {} DoS rows with dΥ̂ = 0: {frozen}, rate = {:.3}",
            dos_rows.len(),
            rate.unwrap_or(f64::NAN)
        ));
    }
    outcome(pass, parts.join("; "))
}

fn uub_bound() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, t) in [("ex1", ex1()), ("ex2", ex2())] {
        let tr = &t.trace;
        let tail = 0.8 * tr.horizon;
        let mut e_margin = f64::INFINITY;
        let mut eps_margin = f64::INFINITY;
        for r in tr.rows.iter().filter(|r| r.t >= tail) {
            for (i, b) in tr.bounds.iter().enumerate() {
                e_margin = e_margin.min(b.e_bar - r.e_norm[i]);
                eps_margin = eps_margin.min(b.eps_bar - r.eps_norm[i]);
            }
        }
        let secs = t.elapsed.as_secs_f64();
        let ok = e_margin >= 0.0 && eps_margin >= 0.0 && secs < 60.0 && tr.dt == 1e-3 && tr.horizon == 30.0;
        pass &= ok;
        parts.push(format!(
            "{name}: min(ē−‖e‖) = {e_margin:.3e}, min(ε̄−‖ε‖) = {eps_margin:.3e}, {secs:.1} s"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn gain_regression() -> Outcome {
    let expected: [f64; 2] = [-0.4142, -0.6818];
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let axis = care_solve(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap();
    let axis_err = (0..2).map(|j| (axis.k[(0, j)] - expected[j]).abs()).fold(0.0, f64::max);

    // The full follower is three decoupled copies of the axis model.
    let cl = example("example2").resolve().unwrap().closed_loop;
    let k = &cl.followers[0].gains.k;
    let mut full_err: f64 = 0.0;
    for d in 0..3 {
        for c in 0..6 {
            let want = if c == d {
                expected[0]
            } else if c == d + 3 {
                expected[1]
            } else {
                0.0
            };
            full_err = full_err.max((k[(d, c)] - want).abs());
        }
    }
    outcome(
        axis_err < 1e-3 && full_err < 1e-3,
        format!(
            "K_1 = [{:.4}, {:.4}], max entry error {axis_err:.1e} (axis) / {full_err:.1e} (6-state) (< 1e-3)",
            axis.k[(0, 0)],
            axis.k[(0, 1)]
        ),
    )
}

fn duty_fit() -> Outcome {
    let cl = example("example1").resolve().unwrap().closed_loop;
    let fit = dos_duty_fit(&cl.dos, cl.horizon).unwrap();
    let gm = build_graph_matrices(&cl.topology).unwrap();
    let d = design_tl_gain(&cl.leader.s, cl.mu2, &gm.theta, &gm.omega, fit.tau_a, cl.tl_params).unwrap();
    let recomputed = fit.tau_a > 1.0 && d.alpha1 > 0.0 && 1.0 / fit.tau_a < d.alpha1 / (d.alpha1 + d.alpha2);
    outcome(
        (1.93..=1.95).contains(&fit.tau_a) && recomputed == d.duty_feasible,
        format!(
            "τ_a = {:.6} (in [1.93, 1.95]); α₁ = {:.4}, α₂ = {:.4}, 1/τ_a = {:.4} vs α₁/(α₁+α₂) = {:.4}; feasible = {} (flag {})",
            fit.tau_a,
            d.alpha1,
            d.alpha2,
            1.0 / fit.tau_a,
            d.alpha1 / (d.alpha1 + d.alpha2),
            recomputed,
            d.duty_feasible
        ),
    )
}

fn random_topology(rng: &mut ChaCha8Rng) -> Topology<f64> {
    let n = rng.gen_range(2..=8);
    let m = rng.gen_range(1..=4);
    let mut fe = Vec::new();
    for i in 1..n {
        fe.push((rng.gen_range(0..i), i, rng.gen_range(0.2..2.0)));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(0.2) && !fe.iter().any(|&(a, b, _)| a == j && b == i) {
                fe.push((j, i, rng.gen_range(0.2..2.0)));
            }
        }
    }
    let mut pe = vec![(0, 0, rng.gen_range(0.2..2.0))];
    for k in 0..m {
        for i in 0..n {
            if (k, i) != (0, 0) && rng.gen_bool(0.3) {
                pe.push((k, i, rng.gen_range(0.2..2.0)));
            }
        }
    }
    Topology::from_edges(n, m, &fe, &pe).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-2.0..2.0))
}

fn algebraic_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut kron_worst: f64 = 0.0;
    let mut xi_worst: f64 = 0.0;
    for _ in 0..50 {
        let topo = random_topology(&mut rng);
        let gm = build_graph_matrices(&topo).unwrap();
        let q = rng.gen_range(1..=4);
        let s = random_matrix(&mut rng, q, q);
        kron_worst = kron_worst.max(kronecker_commutation_residual(&gm, &s).unwrap());

        let p = rng.gen_range(1..=3);
        let y: Vec<DVector<f64>> = (0..topo.n_followers).map(|_| random_matrix(&mut rng, p, 1).column(0).into()).collect();
        let yk: Vec<DVector<f64>> = (0..topo.m_leaders).map(|_| random_matrix(&mut rng, p, 1).column(0).into()).collect();
        let xi = local_xi(&topo, &y, &yk);
        let e = global_containment_error(&gm, &y, &yk).unwrap();
        let n = topo.n_followers;
        let mut rhs = DVector::zeros(n * p);
        for psi in &gm.psi_per_leader {
            for i in 0..n {
                for j in 0..n {
                    let w = psi[(i, j)];
                    let mut blk = rhs.rows_mut(i * p, p);
                    blk -= e.rows(j * p, p) * w;
                }
            }
        }
        for i in 0..n {
            xi_worst = xi_worst.max((&xi[i] - rhs.rows(i * p, p)).norm());
        }
    }

    let mut care_worst: f64 = 0.0;
    let mut solved = 0;
    while solved < 100 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=3);
        let a = random_matrix(&mut rng, n, n);
        let b = random_matrix(&mut rng, n, m);
        if !is_stabilizable(&a, &b).unwrap() {
            continue;
        }
        let q = DMatrix::identity(n, n);
        let rw = DMatrix::identity(m, m);
        let g = care_solve(&a, &b, &q, &rw).unwrap();
        care_worst = care_worst.max(care_residual(&a, &b, &q, &rw, &g.p).unwrap());
        solved += 1;
    }
    outcome(
        kron_worst < 1e-10 && xi_worst < 1e-10 && care_worst < 1e-8,
        format!("Kronecker residual {kron_worst:.1e}, ξ identity {xi_worst:.1e} (< 1e-10); CARE residual {care_worst:.1e} (< 1e-8) on 100 systems"),
    )
}

fn fdi_immunity() -> Outcome {
    let base = example("example1");
    let mut attacked = base.clone();
    let n = attacked.topology.followers;
    let m = attacked.topology.leaders;
    for e in attacked.topology.edges.clone() {
        attacked.attacks.fdi.push(FdiSection {
            from: e.from,
            to: e.to,
            kind: FdiKind::Bias,
            params: vec![25.0, -40.0],
        });
    }
    for i in 1..=n {
        attacked.attacks.fdi.push(FdiSection {
            from: i,
            to: i,
            kind: FdiKind::Gain,
            params: vec![-3.0],
        });
    }
    attacked.attacks.camouflage.push(CamouflageSection {
        target: 2,
        weight: 5.0,
        signal: SignalSection::Sine {
            offset: vec![50.0, -50.0],
            amplitude: vec![10.0, 10.0],
            frequency: 0.5,
            phase: 0.0,
        },
        attacker: Some(n + m + 1),
    });
    let a = &ex1().trace;
    let b = simulate(&attacked);
    let same_len = a.rows.len() == b.rows.len();
    let identical = same_len && a.rows.iter().zip(&b.rows).all(|(x, y)| trace_record(x) == trace_record(y));
    let xi_diff = max_of(
        a.rows
            .iter()
            .zip(&b.rows)
            .flat_map(|(x, y)| x.xi_bar.iter().flatten().zip(y.xi_bar.iter().flatten()).map(|(u, v)| (u - v).abs())),
    );
    outcome(
        identical && xi_diff > 0.0,
        format!("trace rows bit-identical: {identical}; max |Δξ̄| = {xi_diff:.3e} (> 0)"),
    )
}

fn adaptive_law() -> Outcome {
    let mut monotone = true;
    let mut bounded = true;
    let mut steps = 0;
    for t in [ex1(), ex2()] {
        let rows = &t.trace.rows;
        for w in rows.windows(2) {
            monotone &= w[0].rho.iter().zip(&w[1].rho).all(|(a, b)| b >= a);
        }
        for r in rows {
            bounded &= r.chi_hat_norm.iter().zip(&r.rho).all(|(c, p)| c <= p);
            steps += 1;
        }
    }
    let mut jump: f64 = 0.0;
    for (dbar, omega) in [(0.03_f64, 0.01_f64), (0.035, 0.01), (1.0, 0.5), (1e-3, 2.0)] {
        let upper = rho_rate(dbar, dbar, omega);
        let lower_formula = dbar + 2.0 * omega * dbar / dbar;
        let below = rho_rate(f64::from_bits(dbar.to_bits() - 1), dbar, omega);
        jump = jump.max((upper - lower_formula).abs()).max((upper - below).abs());
    }
    outcome(
        monotone && bounded && jump < 1e-12,
        format!("{steps} recorded steps: ρ̂ nondecreasing {monotone}, ‖χ̂‖ ≤ ρ̂ {bounded}; branch jump at d̄ = {jump:.1e} (< 1e-12)"),
    )
}

fn determinism_and_order() -> Outcome {
    let cfg = configs_dir().join("example1.json");
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cmd_run(&cfg, &a, RunOverrides::default()).unwrap();
    cmd_run(&cfg, &b, RunOverrides::default()).unwrap();
    let same = ["trace.csv", "diagnostics.csv", "report.json"]
        .iter()
        .all(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap());

    let mut half = example("example1").resolve().unwrap().closed_loop;
    half.dt /= 2.0;
    half.stride *= 2;
    let fine = run(half).unwrap();
    let coarse = &ex1().trace;
    let (ef, ec) = (&fine.rows.last().unwrap(), &coarse.rows.last().unwrap());
    let per_follower = max_of(ef.e_norm.iter().zip(&ec.e_norm).map(|(x, y)| (x - y).abs()));
    let total = (fine.e_total_norm().last().unwrap() - coarse.e_total_norm().last().unwrap()).abs();
    outcome(
        same && ef.t == ec.t && per_follower < 1e-6 && total < 1e-6,
        format!(
            "reruns byte-identical: {same}; terminal ‖e_i‖ change {per_follower:.2e}, ‖e‖ change {total:.2e} at t = {} (< 1e-6)",
            num(ef.t)
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("regulator oracle equivalence", regulator_oracle),
        ("observer convergence under DoS", observer_under_dos),
        ("estimator convergence", estimator_convergence),
        ("ultimate bound", uub_bound),
        ("gain regression", gain_regression),
        ("duty-cycle fit", duty_fit),
        ("algebraic identities", algebraic_identities),
        ("FDI/camouflage immunity", fdi_immunity),
        ("adaptive-law properties", adaptive_law),
        ("determinism and step-size order", determinism_and_order),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (idx, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        let tag = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {tag} {name}: {} [{:.1} s]",
            idx + 1,
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
