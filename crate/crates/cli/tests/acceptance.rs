//! Acceptance suite: one pass/fail line per criterion, non-zero exit on any
//! failure. Tolerances are pinned below.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use qtraj_cli::commands::{floyd_checks, qshje_checks, spin_checks, Check};
use qtraj_cli::Scenario;
use qtraj_core::floyd::{default_step, ehrenfest_check, floyd_time, identity_wp_wpe, legendre_check, EnergyStencil, Packet};
use qtraj_core::numerics::EDGE_MARGIN;
use qtraj_core::qshje::{build_slice, mobius_apply, verify_script_w, SolveOptions};
use qtraj_core::spin3d::{
    cross, current_vs_trajectory_report, dot, norm, quantum_potential_3d, solve_spin, spin_constraints,
    stationary_residual, FieldScene, Grid3D, Jet3, Multiplicity, PlaneWaveFamily, Representation, ScalarField, Vec3,
};
use qtraj_core::{Constants, Grid1D, Microstate, Potential};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL_FREE_Q: f64 = 1e-9;
const TOL_FREE_SCRIPT_W: f64 = 1e-9;
const TOL_FREE_KINEMATICS: f64 = 1e-6;
const TOL_FREE_MASS: f64 = 1e-8;
const TOL_QSHJE: f64 = 1e-9;
const TOL_SCRIPT_W: f64 = 1e-5;
const TOL_MOBIUS: f64 = 1e-6;
const TOL_IDENTITY: f64 = 1e-4;
const MIN_ORDER: f64 = 2.0;
const TOL_TIME: f64 = 1e-5;
const TOL_Q_ROUTES: f64 = 1e-5;
const TOL_LEGENDRE: f64 = 1e-5;
const TOL_EHRENFEST: f64 = 1e-6;
const TOL_SPIN: f64 = 1e-10;
const TOL_SAMPLED: f64 = 1e-6;
const TOL_ANALYTIC: f64 = 1e-10;
const TOL_MISMATCH: f64 = 1e-6;
const VERDICT_FLOOR: f64 = 0.1;
const NON_SOLUTION_FLOOR: f64 = 1e-2;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn check<'a>(checks: &'a [Check], name: &str) -> &'a Check {
    checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no check {name}"))
}

/// Collects `(pass, detail)` lines for one criterion.
#[derive(Default)]
struct Criterion {
    pass: bool,
    notes: Vec<String>,
}

impl Criterion {
    fn new() -> Self {
        Criterion {
            pass: true,
            notes: Vec::new(),
        }
    }

    fn upper(&mut self, what: &str, value: f64, tol: f64) {
        let ok = value.is_finite() && value <= tol;
        self.pass &= ok;
        self.notes.push(format!("{what}={value:.2e}{}{tol:.0e}", if ok { "<=" } else { ">" }));
    }

    fn lower(&mut self, what: &str, value: f64, floor: f64) {
        let ok = value.is_finite() && value >= floor;
        self.pass &= ok;
        self.notes.push(format!("{what}={value:.3e}{}{floor:.1e}", if ok { ">=" } else { "<" }));
    }

    fn truth(&mut self, what: &str, ok: bool) {
        self.pass &= ok;
        self.notes.push(format!("{what}={ok}"));
    }
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn criterion_1() -> Criterion {
    let mut c = Criterion::new();
    let k = Constants::natural();
    let grid = Grid1D::new(-10.0, 10.0, 2001).unwrap();
    let st = EnergyStencil::build(&Potential::Free, &Microstate::identity(), 0.5, default_step(0.5), &grid, &k).unwrap();
    let d = st.derivatives().unwrap();
    let s = st.center();
    let inner = grid.interior(EDGE_MARGIN);
    c.upper("max|Q|", max_abs(inner.clone().map(|i| s.q.values()[i])), TOL_FREE_Q);
    c.upper(
        "max|scriptW+E|",
        max_abs(inner.clone().map(|i| s.script_w.values()[i] + 0.5)),
        TOL_FREE_SCRIPT_W,
    );
    let traj = floyd_time(s, &d, 0.0).unwrap();
    c.upper("max|t-q|", max_abs(traj.t.iter().zip(&traj.q).map(|(t, q)| t - q)), TOL_FREE_KINEMATICS);
    c.upper("max|tau-q|", max_abs(traj.tau.iter().zip(&traj.q).map(|(t, q)| t - q)), TOL_FREE_KINEMATICS);
    c.upper("max|qdot-1|", max_abs(traj.qdot.iter().map(|v| v - 1.0)), TOL_FREE_KINEMATICS);
    c.upper("max|m_Q-m|", max_abs(inner.map(|i| d.m_q.values()[i] - 1.0)), TOL_FREE_MASS);
    c
}

fn criterion_2() -> Criterion {
    let mut c = Criterion::new();
    for name in ["free", "free_mixed", "linear", "harmonic", "square_well"] {
        let checks = qshje_checks(&scenario(name)).unwrap();
        c.upper(name, check(&checks, "qshje_identity").value, TOL_QSHJE);
    }
    c
}

fn criterion_3() -> Criterion {
    let mut c = Criterion::new();
    let k = Constants::natural();
    let pot = Potential::linear(1.0).unwrap();
    let grid = Grid1D::new(-8.0, 4.0, 4001).unwrap();
    let base = build_slice(&pot, 1.0, &grid, &Microstate::identity(), &k, SolveOptions::default()).unwrap();
    let r0 = verify_script_w(&base, &pot).unwrap();
    c.upper("scriptW-(V-E)", r0.max, TOL_SCRIPT_W);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut spread = 0.0f64;
    let mut maps = 0;
    while maps < 20 {
        let m: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        if (m[0] * m[3] - m[1] * m[2]).abs() < 0.1 {
            continue;
        }
        let micro = mobius_apply(&Microstate::identity(), m[0], m[1], m[2], m[3]).unwrap();
        let s = build_slice(&pot, 1.0, &grid, &micro, &k, SolveOptions::default()).unwrap();
        let n = base.script_w.values().len();
        spread = spread.max(max_abs(
            (EDGE_MARGIN..n - EDGE_MARGIN).map(|i| s.script_w.values()[i] - base.script_w.values()[i]),
        ));
        maps += 1;
    }
    c.upper("mobius_spread(20 maps)", spread, TOL_MOBIUS);
    c
}

fn criterion_4() -> Criterion {
    let mut c = Criterion::new();
    let k = Constants::natural();
    let mixed = Microstate::new(2.0, 0.0, 0.0, 1.0, 0.0, 0.0).unwrap();
    let free_grid = Grid1D::new(-10.0, 10.0, 2001).unwrap();
    let cases = [
        ("free(2,0,0,1)", Potential::Free, free_grid, mixed, 0.5),
        (
            "linear",
            Potential::linear(1.0).unwrap(),
            Grid1D::new(-8.0, 4.0, 2401).unwrap(),
            Microstate::identity(),
            1.0,
        ),
    ];
    for (name, pot, grid, micro, e) in &cases {
        let st = EnergyStencil::build(pot, micro, *e, default_step(*e), grid, &k).unwrap();
        let r = identity_wp_wpe(st.center(), &st.derivatives().unwrap()).unwrap();
        c.upper(name, r.relative, TOL_IDENTITY);
    }
    // convergence is measured where truncation dominates roundoff
    let res: Vec<f64> = [0.01, 0.005, 0.0025]
        .iter()
        .map(|&h| {
            let st = EnergyStencil::build(&Potential::Free, &mixed, 0.5, h, &free_grid, &k).unwrap();
            identity_wp_wpe(st.center(), &st.derivatives().unwrap()).unwrap().residual.max
        })
        .collect();
    let order = res.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);
    c.lower("order(step_E halving)", order, MIN_ORDER);
    c
}

fn criterion_5() -> Criterion {
    let mut c = Criterion::new();
    for name in ["free", "linear", "harmonic", "square_well"] {
        let s = scenario(name);
        let (floyd, _) = floyd_checks(&s).unwrap();
        c.upper(&format!("{name}.time"), check(&floyd, "time_formula_agreement").value, TOL_TIME);
        let q = qshje_checks(&s).unwrap();
        c.upper(&format!("{name}.Q_routes"), check(&q, "quantum_potential_routes").value, TOL_Q_ROUTES);
    }
    c
}

fn criterion_6() -> Criterion {
    let mut c = Criterion::new();
    let k = Constants::natural();
    let free = legendre_check(
        &Potential::Free,
        &Microstate::identity(),
        &[0.49, 0.495, 0.5, 0.505, 0.51],
        1.0,
        &Grid1D::new(-10.0, 10.0, 2001).unwrap(),
        &k,
    )
    .unwrap();
    let linear = legendre_check(
        &Potential::linear(1.0).unwrap(),
        &Microstate::identity(),
        &[0.99, 0.995, 1.0, 1.005, 1.01],
        -3.0,
        &Grid1D::new(-8.0, 4.0, 2401).unwrap(),
        &k,
    )
    .unwrap();
    for (name, r) in [("free", free), ("linear", linear)] {
        c.upper(&format!("{name}.roundtrip"), r.roundtrip.max, TOL_LEGENDRE);
        c.upper(&format!("{name}.dS/dt-E"), r.conjugate.max, TOL_LEGENDRE);
    }
    c
}

fn criterion_7() -> Criterion {
    let mut c = Criterion::new();
    let k = Constants::natural();
    let runs = [
        (
            "free",
            Potential::Free,
            (-20.0, 20.0),
            Packet {
                center: -5.0,
                width: 1.0,
                momentum: 1.0,
            },
            2.0,
            1e-3,
        ),
        (
            "harmonic",
            Potential::harmonic(1.0).unwrap(),
            (-12.0, 12.0),
            Packet {
                center: 1.0,
                width: 0.8,
                momentum: 0.0,
            },
            3.0,
            5e-4,
        ),
    ];
    for (name, pot, bounds, packet, span, dt) in runs {
        let r = ehrenfest_check(&pot, &k, bounds, 400, packet, span, dt).unwrap();
        c.upper(&format!("{name}.commutator"), r.commutator.max, TOL_EHRENFEST);
        c.lower(&format!("{name}.margin"), r.min_margin, 0.0);
    }
    c
}

fn fibonacci_sphere(n: usize) -> impl Iterator<Item = Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n).map(move |i| {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        [r * phi.cos(), r * phi.sin(), z]
    })
}

fn exp_scene() -> FieldScene {
    let grid = Grid3D::new((-0.5, 0.5, 41), (0.0, 1.0, 41), (-0.5, 0.5, 41)).unwrap();
    FieldScene::new(
        grid,
        0.5,
        ScalarField::analytic(|p| {
            let e = (2.0 * p[1]).exp();
            let mut hess = [[0.0; 3]; 3];
            hess[1][1] = 4.0 * e;
            Jet3 {
                value: e,
                grad: [0.0, 2.0 * e, 0.0],
                hess,
            }
        }),
        ScalarField::analytic(|p| Jet3 {
            value: p[0],
            grad: [1.0, 0.0, 0.0],
            hess: [[0.0; 3]; 3],
        }),
        ScalarField::analytic(|_| Jet3::constant(0.0)),
    )
    .unwrap()
}

fn criterion_8() -> Criterion {
    let mut c = Criterion::new();
    // closed-form spin against a brute-force scan of the sphere
    let (v_b, v_s) = ([1.5, -0.4, 0.3], [0.2, -0.7, 0.5]);
    let sol = solve_spin(v_b, v_s);
    c.truth("isolated_pair", sol.multiplicity == Multiplicity::IsolatedPair);
    let s = sol.s.unwrap();
    c.upper("constraints", max_abs(spin_constraints(v_b, v_s, s)), TOL_SPIN);
    let n = 1_000_000;
    let spacing = (4.0 * PI / n as f64).sqrt();
    let bxs = cross(v_b, v_s);
    let (a, b) = (norm(v_s), norm(bxs));
    let mut nearest = f64::INFINITY;
    let mut stray = 0;
    for p in fibonacci_sphere(n) {
        let g = (dot(v_s, p) / a).abs().max((dot(bxs, p) / b).abs());
        if g < 3.0 * spacing {
            let d = norm([p[0] - s[0], p[1] - s[1], p[2] - s[2]]).min(norm([p[0] + s[0], p[1] + s[1], p[2] + s[2]]));
            if d > 20.0 * spacing {
                stray += 1;
            }
            nearest = nearest.min(d);
        }
    }
    c.truth("scan_no_other_solutions", stray == 0 && nearest < 2.0 * spacing);

    let k = Constants::natural();
    let scene = exp_scene();
    c.upper("Q_routes.analytic", quantum_potential_3d(&scene, &k).unwrap().difference.max, TOL_ANALYTIC);
    c.upper(
        "Q_routes.sampled",
        quantum_potential_3d(&scene.sampled(), &k).unwrap().difference.max,
        TOL_SAMPLED,
    );

    let (checks, _) = spin_checks(&scenario("spin_linear_density")).unwrap();
    for name in [
        "hamilton_jacobi",
        "continuity",
        "speed_energy_form",
        "current_vs_eta",
        "energy_balance",
        "density_identity",
        "current_divergence",
    ] {
        c.upper(&format!("linear_density.{name}"), check(&checks, name).value, TOL_SAMPLED);
    }
    let (checks, _) = spin_checks(&scenario("spin_linear_density_analytic")).unwrap();
    c.upper("linear_density_analytic.density_identity", check(&checks, "density_identity").value, 0.0);
    c
}

fn criterion_9() -> Criterion {
    let mut c = Criterion::new();
    let k = Constants::natural();
    let fam = PlaneWaveFamily {
        grid: Grid3D::new((-0.5, 0.5, 13), (0.0, 1.0, 13), (-0.5, 0.5, 13)).unwrap(),
        constants: k,
        representation: Representation::Sampled,
    };
    let v = current_vs_trajectory_report(&fam, 0.5, &k, default_step(0.5)).unwrap();
    c.upper("plane_wave|mismatch-2|", (v.mismatch_min - 2.0).abs(), TOL_MISMATCH);
    for name in ["spin_plane_wave", "spin_linear_density", "spin_linear_density_analytic", "spin_interference"] {
        let (checks, _) = spin_checks(&scenario(name)).unwrap();
        c.lower(name, check(&checks, "velocity_mismatch").value, VERDICT_FLOOR);
    }
    c
}

fn criterion_10() -> Criterion {
    let mut c = Criterion::new();
    let out = tempfile::tempdir().unwrap();
    let run = Command::new(env!("CARGO_BIN_EXE_qtraj"))
        .args(["verify", "--scenario"])
        .arg(scenario_path("tampered_linear"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    c.truth("tampered_exit_1", run.status.code() == Some(1));
    let stderr = String::from_utf8_lossy(&run.stderr);
    c.truth("names_scriptW_check", stderr.contains("failed check: scriptW_vs_V_minus_E"));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.5..1.5));
    let grid = Grid3D::new((-0.5, 0.5, 13), (0.0, 1.0, 13), (-0.5, 0.5, 13)).unwrap();
    let sample = |f: &dyn Fn(Vec3) -> f64| (0..grid.len()).map(|i| f(grid.point(i))).collect::<Vec<f64>>();
    let scene = FieldScene::new(
        grid,
        1.0,
        ScalarField::Sampled(sample(&|p| 1.5 + 0.4 * (a[0] * p[0] + a[1] * p[1]).sin() * (a[2] * p[2]).cos())),
        ScalarField::Sampled(sample(&|p| p[0] + 0.5 * (a[3] * p[1] * p[2]).sin() + 0.3 * p[1] * p[1])),
        ScalarField::Sampled(vec![0.0; grid.len()]),
    )
    .unwrap();
    let st = stationary_residual(&scene, &Constants::natural()).unwrap();
    c.lower("non_solution.hamilton_jacobi", st.hamilton_jacobi.max, NON_SOLUTION_FLOOR);
    c.lower("non_solution.continuity", st.continuity.max, NON_SOLUTION_FLOOR);
    c
}

fn main() {
    let criteria: [(&str, fn() -> Criterion); 10] = [
        ("free-particle closed forms", criterion_1),
        ("QSHJE identity on shipped scenarios", criterion_2),
        ("state function and Mobius invariance", criterion_3),
        ("energy-derivative identity and order", criterion_4),
        ("time formulas and quantum-potential routes", criterion_5),
        ("Legendre duality", criterion_6),
        ("Ehrenfest commutator and uncertainty margin", criterion_7),
        ("spin constraints, 3-D routes, solvable family", criterion_8),
        ("current vs trajectory velocity verdict", criterion_9),
        ("negative controls", criterion_10),
    ];
    let mut failures = 0;
    for (k, (title, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|_| Criterion {
            pass: false,
            notes: vec!["panicked".into()],
        });
        if !r.pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {} {title} [{:.1}s] {}",
            k + 1,
            if r.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            r.notes.join(" ")
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
