//! The four commands and their verification suites.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use qtraj_core::floyd::{
    ehrenfest_check, floyd_time, identity_wp_wpe, legendre_check, uncertainty_report, EnergyStencil, Packet,
};
use qtraj_core::qshje::{microstate_action, solve_basis, verify_script_w};
use qtraj_core::spin3d::{
    current_decomposition, current_vs_trajectory_report, quantum_potential_3d, speed_identity, spin_field,
    stationary_residual, write_scene_csv, LinearDensityFamily, LinearDensityReport, InterferenceFamily, PlaneWaveFamily,
    SceneFamily, VectorField, ANALYTIC_TOL,
};
use qtraj_core::Residual;

use crate::output::OutDir;
use crate::scenario::{EhrenfestSpec, FamilyKind, RepresentationSpec, Scenario, SpinSpec};
use crate::{svg, CliError, EXIT_FAILURE, EXIT_OK};

pub const TOL_QSHJE: f64 = 1e-9;
pub const TOL_SCRIPT_W: f64 = 1e-5;
pub const TOL_CONTINUITY: f64 = 1e-6;
pub const TOL_WRONSKIAN: f64 = 1e-8;
pub const TOL_Q_ROUTES: f64 = 1e-5;
pub const TOL_SCHRODINGER: f64 = 1e-7;
pub const TOL_ENERGY_IDENTITY: f64 = 1e-4;
pub const TOL_TIME_FORMULAS: f64 = 1e-5;
pub const TOL_QUANTUM_MASS: f64 = 1e-4;
pub const TOL_DTAU: f64 = 1e-6;
pub const TOL_LEGENDRE: f64 = 1e-5;
pub const TOL_EHRENFEST: f64 = 1e-6;
pub const TOL_GAUGE: f64 = 1e-8;
pub const TOL_TIME_FIELD: f64 = 1e-5;
pub const TOL_FLUX_DERIVATIVE: f64 = 1e-6;
pub const VERDICT_LOWER_BOUND: f64 = 0.1;

/// Relative spacing of the energy grid used by the Legendre check.
const LEGENDRE_SPACING: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Trajectory,
    Verify,
    Spin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Qshje,
    Floyd,
    Spin,
    All,
}

impl Suite {
    pub fn parse(name: &str) -> Result<Suite, CliError> {
        match name {
            "qshje" => Ok(Suite::Qshje),
            "floyd" => Ok(Suite::Floyd),
            "spin" => Ok(Suite::Spin),
            "all" => Ok(Suite::All),
            other => Err(CliError::input(format!(
                "unknown suite `{other}` (expected qshje, floyd, spin or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub scenario: PathBuf,
    pub out: Option<PathBuf>,
    pub svg: bool,
    pub suite: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    /// Names of failed checks.
    pub failed: Vec<String>,
}

fn failed(checks: &[Check]) -> Vec<String> {
    checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Passes when `value ≤ tolerance`.
    Upper,
    /// Passes when `value ≥ tolerance`.
    Lower,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    pub fn upper(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            bound: Bound::Upper,
            pass: value.is_finite() && value <= tolerance,
        }
    }

    pub fn lower(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            bound: Bound::Lower,
            pass: value.is_finite() && value >= tolerance,
        }
    }

    fn residual(name: &str, r: &Residual, tolerance: f64) -> Self {
        Check::upper(name, r.max, tolerance)
    }
}

/// Output directory: `--out`, else the scenario's `output` relative to its
/// file, else `qtraj-out` in the working directory.
pub fn resolve_out(opts: &Options, scenario: Option<&Scenario>) -> PathBuf {
    if let Some(o) = &opts.out {
        return o.clone();
    }
    if let Some(s) = scenario {
        if let Some(o) = &s.output {
            return if o.is_absolute() { o.clone() } else { s.base_dir.join(o) };
        }
    }
    PathBuf::from("qtraj-out")
}

pub fn run(cmd: Command, opts: &Options) -> Result<Outcome, CliError> {
    let scenario = Scenario::load(&opts.scenario)?;
    let suite = match (&opts.suite, &scenario.suites) {
        (Some(name), _) => vec![Suite::parse(name)?],
        (None, Some(list)) if !list.is_empty() => list.iter().map(|s| Suite::parse(s)).collect::<Result<_, _>>()?,
        _ => vec![Suite::All],
    };
    if opts.suite.is_some() && cmd != Command::Verify {
        return Err(CliError::input("--suite only applies to `verify`"));
    }
    if opts.svg && cmd != Command::Trajectory {
        return Err(CliError::input("--svg only applies to `trajectory`"));
    }
    let out = resolve_out(opts, Some(&scenario));
    match cmd {
        Command::Solve => cmd_solve(&scenario, &out),
        Command::Trajectory => cmd_trajectory(&scenario, &out, opts.svg),
        Command::Verify => cmd_verify(&scenario, &suite, &out),
        Command::Spin => cmd_spin(&scenario, &out),
    }
}

#[derive(Serialize)]
struct GridSummary {
    q_min: f64,
    q_max: f64,
    n: usize,
}

#[derive(Serialize)]
struct SolveSummary {
    schema: &'static str,
    scenario: String,
    potential: &'static str,
    energy: f64,
    grid: GridSummary,
    substeps: usize,
    wronskian_drift: f64,
    residuals: Vec<Residual>,
}

pub fn cmd_solve(s: &Scenario, out: &Path) -> Result<Outcome, CliError> {
    let c = s.constants()?;
    let pot = s.potential()?;
    let grid = s.grid()?;
    let energy = s.energy()?;
    let micro = s.microstate()?;
    let basis = solve_basis(&pot, energy, &grid, &c)?;
    let slice = microstate_action(&basis, &micro, &c)?;
    let summary = SolveSummary {
        schema: "qtraj.solve/1",
        scenario: s.label(),
        potential: pot.name(),
        energy,
        grid: GridSummary {
            q_min: grid.q_min(),
            q_max: grid.q_max(),
            n: grid.len(),
        },
        substeps: basis.substeps,
        wronskian_drift: basis.wronskian_drift(),
        residuals: vec![
            slice.qshje_residual(),
            verify_script_w(&slice, &s.check_potential()?)?,
            slice.continuity_residual(),
            slice.quantum_potential_routes()?,
        ],
    };
    let dir = OutDir::create(out)?;
    let files = vec![
        dir.write_with("slice.csv", |w| slice.write_csv(w))?,
        dir.write_json("summary.json", &summary)?,
    ];
    Ok(Outcome {
        exit_code: EXIT_OK,
        files,
        failed: Vec::new(),
    })
}

#[derive(Serialize)]
struct TrajectorySummary {
    schema: &'static str,
    scenario: String,
    energy: f64,
    q0: f64,
    step_e: f64,
    /// Range of the monotone `t(q)` window around `q0`.
    monotone_q: [f64; 2],
    monotone_t: [f64; 2],
    time_formula_agreement: Residual,
}

pub fn cmd_trajectory(s: &Scenario, out: &Path, with_svg: bool) -> Result<Outcome, CliError> {
    let c = s.constants()?;
    let energy = s.energy()?;
    let step = s.step_e()?;
    let stencil = EnergyStencil::build(&s.potential()?, &s.microstate()?, energy, step, &s.grid()?, &c)?;
    let deriv = stencil.derivatives()?;
    let traj = floyd_time(stencil.center(), &deriv, s.time_origin()?)?;
    let window = traj.monotone_window();
    let ends = |v: &[f64]| [v[0], v[v.len() - 1]];
    let summary = TrajectorySummary {
        schema: "qtraj.trajectory/1",
        scenario: s.label(),
        energy,
        q0: traj.q0,
        step_e: step,
        monotone_q: ends(&window.q),
        monotone_t: ends(&window.t),
        time_formula_agreement: traj.time_formula_agreement(),
    };
    let dir = OutDir::create(out)?;
    let mut files = vec![
        dir.write_with("trajectory.csv", |w| traj.write_csv(w))?,
        dir.write_json("trajectory.json", &summary)?,
    ];
    if with_svg {
        let doc = svg::line_plot(&window.t, &window.q, "t", "q", &format!("{} E = {energy}", s.label()));
        files.push(dir.write_with("trajectory.svg", |w| w.write_all(doc.as_bytes()))?);
    }
    Ok(Outcome {
        exit_code: EXIT_OK,
        files,
        failed: Vec::new(),
    })
}

pub fn qshje_checks(s: &Scenario) -> Result<Vec<Check>, CliError> {
    let c = s.constants()?;
    let pot = s.potential()?;
    let grid = s.grid()?;
    let basis = solve_basis(&pot, s.energy()?, &grid, &c)?;
    let slice = microstate_action(&basis, &s.microstate()?, &c)?;
    Ok(vec![
        Check::residual("qshje_identity", &slice.qshje_residual(), TOL_QSHJE),
        Check::residual("scriptW_vs_V_minus_E", &verify_script_w(&slice, &s.check_potential()?)?, TOL_SCRIPT_W),
        Check::residual("continuity_rho_wp", &slice.continuity_residual(), TOL_CONTINUITY),
        Check::upper("wronskian_drift", basis.wronskian_drift(), TOL_WRONSKIAN),
        Check::residual("quantum_potential_routes", &slice.quantum_potential_routes()?, TOL_Q_ROUTES),
        Check::residual("schrodinger_residual", &basis.schrodinger_residual(&c)?, TOL_SCHRODINGER),
    ])
}

pub fn floyd_checks(s: &Scenario) -> Result<(Vec<Check>, Value), CliError> {
    let c = s.constants()?;
    let pot = s.potential()?;
    let grid = s.grid()?;
    let micro = s.microstate()?;
    let energy = s.energy()?;
    let stencil = EnergyStencil::build(&pot, &micro, energy, s.step_e()?, &grid, &c)?;
    let deriv = stencil.derivatives()?;
    let identity = identity_wp_wpe(stencil.center(), &deriv)?;
    let traj = floyd_time(stencil.center(), &deriv, s.time_origin()?)?;
    let (eq4, dtau) = traj.chain_residuals(stencil.center(), &deriv);

    let probe = s.probe_q()?;
    let de = LEGENDRE_SPACING * energy.abs().max(1.0);
    let energies: Vec<f64> = (-2..=2).map(|k| energy + k as f64 * de).collect();
    let legendre = legendre_check(&pot, &micro, &energies, probe, &grid, &c)?;

    let e = s.ehrenfest.unwrap_or_default();
    let packet = Packet {
        center: e.center,
        width: e.width,
        momentum: e.momentum,
    };
    let ehr = ehrenfest_check(&pot, &c, e.bounds, e.n, packet, e.t_span, e.dt)?;

    let agreement = traj.time_formula_agreement();
    let checks = vec![
        Check::upper("energy_derivative_identity", identity.relative, TOL_ENERGY_IDENTITY),
        Check::residual("time_formula_agreement", &agreement, TOL_TIME_FORMULAS),
        Check::residual("quantum_mass_velocity", &eq4, TOL_QUANTUM_MASS),
        Check::residual("dtau_dt_chain", &dtau, TOL_DTAU),
        Check::residual("legendre_roundtrip", &legendre.roundtrip, TOL_LEGENDRE),
        Check::residual("legendre_conjugate_energy", &legendre.conjugate, TOL_LEGENDRE),
        Check::residual("ehrenfest_commutator", &ehr.commutator, TOL_EHRENFEST),
        Check::lower("ehrenfest_uncertainty_margin", ehr.min_margin, 0.0),
    ];
    let uncertainty = match uncertainty_report(&deriv, probe, &c) {
        Ok(r) => serde_json::to_value(r).expect("report serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let diagnostics = json!({
        "time_formula_nodes": agreement.nodes,
        "legendre_q": probe,
        "ehrenfest": ehrenfest_summary(&e, &ehr),
        "uncertainty": uncertainty,
    });
    Ok((checks, diagnostics))
}

fn ehrenfest_summary(e: &EhrenfestSpec, r: &qtraj_core::floyd::EhrenfestReport) -> Value {
    json!({
        "box": [e.bounds.0, e.bounds.1],
        "n": e.n,
        "dt": r.dt,
        "steps": r.steps,
        "momentum_residual": r.momentum.max,
        "min_margin_commutator": r.min_margin_commutator,
        "max_norm_drift": r.max_norm_drift,
        "max_energy_drift": r.max_energy_drift,
    })
}

enum Family {
    PlaneWave(PlaneWaveFamily),
    LinearDensity(LinearDensityFamily),
    Interference(InterferenceFamily),
}

impl Family {
    fn from_spec(spec: &SpinSpec, c: qtraj_core::Constants) -> Result<Family, CliError> {
        let grid = spec.grid()?;
        let representation = spec.representation();
        Ok(match spec.family {
            FamilyKind::PlaneWave => Family::PlaneWave(PlaneWaveFamily {
                grid,
                constants: c,
                representation,
            }),
            FamilyKind::LinearDensity => Family::LinearDensity(LinearDensityFamily {
                grid,
                constants: c,
                alpha: spec.alpha.unwrap_or(1.0),
                beta: spec.beta.unwrap_or(1.0),
                representation,
            }),
            FamilyKind::Interference => Family::Interference(InterferenceFamily {
                grid,
                constants: c,
                representation,
            }),
        })
    }

    fn as_dyn(&self) -> &dyn SceneFamily {
        match self {
            Family::PlaneWave(f) => f,
            Family::LinearDensity(f) => f,
            Family::Interference(f) => f,
        }
    }
}

struct SpinRun {
    checks: Vec<Check>,
    report: Value,
    scene: qtraj_core::spin3d::FieldScene,
    spin: qtraj_core::spin3d::SpinScene,
}

fn spin_run(s: &Scenario) -> Result<SpinRun, CliError> {
    let c = s.constants()?;
    let spec = s.spin()?;
    let family = Family::from_spec(spec, c)?;
    let fam = family.as_dyn();
    let scene = fam.scene(spec.energy)?;
    let tol = scene.tolerance();
    let mut eta: Option<VectorField> = None;
    let mut example: Option<LinearDensityReport> = None;
    if let Family::LinearDensity(f) = &family {
        let ex = f.build(spec.energy)?;
        eta = Some(ex.eta);
        example = Some(ex.report);
    }
    let qp = quantum_potential_3d(&scene, &c)?;
    let st = stationary_residual(&scene, &c)?;
    let speed = speed_identity(&scene, &c)?;
    let field = spin_field(&scene, &c)?;
    let cur = current_decomposition(&scene, &field.filled(), eta.as_ref(), &c)?;
    let verdict = current_vs_trajectory_report(fam, spec.energy, &c, spec.step_e())?;

    let mut checks = vec![
        Check::residual("quantum_potential_routes_3d", &qp.difference, tol),
        Check::residual("hamilton_jacobi", &st.hamilton_jacobi, tol),
        Check::residual("continuity", &st.continuity, tol),
        Check::residual("speed_pythagoras", &speed.pythagoras, ANALYTIC_TOL),
        Check::residual("speed_energy_form", &speed.energy_form, tol),
        Check::residual("spin_constraints", &field.constraints, ANALYTIC_TOL),
        Check::residual("current_divergence", &cur.div_j, tol),
        Check::residual("gauge_shift", &cur.gauge_shift, TOL_GAUGE),
        Check::residual("gauge_div_curl", &cur.gauge_div_curl, TOL_GAUGE),
        Check::residual("v_dot_vB", &cur.v_dot_vb, ANALYTIC_TOL),
    ];
    if let Some(r) = &cur.j_vs_eta {
        checks.push(Check::residual("current_vs_eta", r, tol));
    }
    if let Some(r) = &example {
        checks.push(Check::residual("energy_balance", &r.energy_balance, tol));
        checks.push(Check::residual("density_identity", &r.density_identity, tol));
        checks.push(Check::residual("gradient_direction", &r.gradient_direction, tol));
    }
    checks.push(Check::residual("time_identity", &verdict.time_identity, TOL_TIME_FIELD));
    checks.push(Check::residual(
        "flux_derivative_divergence",
        &verdict.flux_derivative_div,
        TOL_FLUX_DERIVATIVE,
    ));
    checks.push(Check::lower("velocity_mismatch", verdict.mismatch_min, VERDICT_LOWER_BOUND));

    let representation = match spec.representation {
        RepresentationSpec::Analytic => "analytic",
        RepresentationSpec::Sampled => "sampled",
    };
    let report = json!({
        "family": fam.name(),
        "representation": representation,
        "energy": spec.energy,
        "spin_counts": field.counts,
        "verdict": verdict,
    });
    Ok(SpinRun {
        checks,
        report,
        scene,
        spin: cur,
    })
}

pub fn spin_checks(s: &Scenario) -> Result<(Vec<Check>, Value), CliError> {
    let r = spin_run(s)?;
    Ok((r.checks, r.report))
}

#[derive(Serialize)]
struct SpinDoc<'a> {
    schema: &'static str,
    scenario: String,
    pass: bool,
    checks: &'a [Check],
    report: &'a Value,
}

pub fn cmd_spin(s: &Scenario, out: &Path) -> Result<Outcome, CliError> {
    let r = spin_run(s)?;
    let pass = r.checks.iter().all(|c| c.pass);
    let dir = OutDir::create(out)?;
    let files = vec![
        dir.write_with("scene.csv", |w| write_scene_csv(w, &r.scene, &r.spin))?,
        dir.write_json(
            "verdict.json",
            &SpinDoc {
                schema: "qtraj.spin/1",
                scenario: s.label(),
                pass,
                checks: &r.checks,
                report: &r.report,
            },
        )?,
    ];
    Ok(Outcome {
        exit_code: if pass { EXIT_OK } else { EXIT_FAILURE },
        files,
        failed: failed(&r.checks),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub scenario: String,
    pub suites: Vec<Suite>,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub diagnostics: Value,
}

/// Runs the selected suites. `all` covers the one-dimensional suites when
/// the scenario has a potential and the spin suite when it has a spin block.
pub fn verify_report(s: &Scenario, suites: &[Suite]) -> Result<VerifyReport, CliError> {
    let mut want = [false; 3];
    for suite in suites {
        match suite {
            Suite::Qshje => want[0] = true,
            Suite::Floyd => want[1] = true,
            Suite::Spin => want[2] = true,
            Suite::All => {
                let one_d = s.potential.is_some();
                want[0] |= one_d;
                want[1] |= one_d;
                want[2] |= s.spin.is_some();
            }
        }
    }
    if !want.iter().any(|&w| w) {
        return Err(CliError::input("scenario has neither a potential nor a spin block"));
    }
    let mut checks = Vec::new();
    let mut diagnostics = serde_json::Map::new();
    if want[0] {
        checks.extend(qshje_checks(s)?);
    }
    if want[1] {
        let (c, d) = floyd_checks(s)?;
        checks.extend(c);
        diagnostics.insert("floyd".into(), d);
    }
    if want[2] {
        let (c, d) = spin_checks(s)?;
        checks.extend(c);
        diagnostics.insert("spin".into(), d);
    }
    Ok(VerifyReport {
        schema: "qtraj.verify/1",
        scenario: s.label(),
        suites: suites.to_vec(),
        pass: checks.iter().all(|c| c.pass),
        checks,
        diagnostics: Value::Object(diagnostics),
    })
}

pub fn cmd_verify(s: &Scenario, suites: &[Suite], out: &Path) -> Result<Outcome, CliError> {
    let report = verify_report(s, suites)?;
    let dir = OutDir::create(out)?;
    let files = vec![dir.write_json("verify.json", &report)?];
    Ok(Outcome {
        exit_code: if report.pass { EXIT_OK } else { EXIT_FAILURE },
        files,
        failed: failed(&report.checks),
    })
}
