//! Scenario files: one JSON document with a versioned `schema` field.
//!
//! Unknown keys are rejected at every level. One-dimensional blocks are
//! optional at parse time and required by `solve`, `trajectory` and `verify`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use qtraj_core::potentials::TabulatedPotential;
use qtraj_core::spin3d::{Grid3D, Representation};
use qtraj_core::{Constants, Grid1D, Microstate, Potential};

use crate::CliError;

pub const SCHEMA: &str = "qtraj.scenario/1";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    #[serde(default)]
    pub name: Option<String>,
    pub constants: ConstantsSpec,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub energy: Option<f64>,
    #[serde(default)]
    pub microstate: Option<MicrostateSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default, rename = "step_E")]
    pub step_e: Option<f64>,
    #[serde(default)]
    pub trajectory: Option<TrajectorySpec>,
    /// Suites run by `verify` when `--suite` is absent.
    #[serde(default)]
    pub suites: Option<Vec<String>>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Potential used by the `V − E` check in place of `potential`;
    /// a mismatching value makes `verify` fail.
    #[serde(default)]
    pub check_potential: Option<PotentialSpec>,
    #[serde(default)]
    pub ehrenfest: Option<EhrenfestSpec>,
    #[serde(default)]
    pub spin: Option<SpinSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    pub m: f64,
    pub hbar: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Free {},
    Linear { slope: f64 },
    Harmonic { stiffness: f64 },
    SquareWell { depth: f64, half_width: f64 },
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrostateSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    #[serde(rename = "W0")]
    pub w0: f64,
    pub q0: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Time origin `t(q0) = 0`.
    pub q0: f64,
    /// Position of the fixed-`q` energy checks.
    #[serde(default)]
    pub probe_q: Option<f64>,
}

/// Wave-packet run for the Ehrenfest check.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EhrenfestSpec {
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
    #[serde(rename = "box")]
    pub bounds: (f64, f64),
    pub n: usize,
    pub t_span: f64,
    pub dt: f64,
}

impl Default for EhrenfestSpec {
    fn default() -> Self {
        EhrenfestSpec {
            center: 0.0,
            width: 1.0,
            momentum: 1.0,
            bounds: (-20.0, 20.0),
            n: 400,
            t_span: 1.0,
            dt: 5e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    PlaneWave,
    #[serde(rename = "linear_density")]
    LinearDensity,
    Interference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationSpec {
    Analytic,
    Sampled,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid3Spec {
    pub x: (f64, f64, usize),
    pub y: (f64, f64, usize),
    pub z: (f64, f64, usize),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSpec {
    pub family: FamilyKind,
    pub energy: f64,
    pub grid: Grid3Spec,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_representation")]
    pub representation: RepresentationSpec,
    #[serde(default, rename = "step_E")]
    pub step_e: Option<f64>,
}

fn default_representation() -> RepresentationSpec {
    RepresentationSpec::Analytic
}

fn finite(name: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::input(format!("{name} must be finite (got {x})")))
    }
}

fn missing(field: &str) -> CliError {
    CliError::input(format!("scenario is missing field `{field}`"))
}

impl Scenario {
    pub fn from_str(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut s: Scenario =
            serde_json::from_str(text).map_err(|e| CliError::input(format!("scenario schema error: {e}")))?;
        if s.schema != SCHEMA {
            return Err(CliError::input(format!(
                "unsupported scenario schema `{}` (expected `{SCHEMA}`)",
                s.schema
            )));
        }
        s.base_dir = base_dir.to_path_buf();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read scenario {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Scenario::from_str(&text, &base)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.constants()?;
        if let Some(e) = self.energy {
            finite("energy", e)?;
        }
        if let Some(m) = &self.microstate {
            self.microstate_from(m)?;
        }
        if let Some(g) = &self.grid {
            Grid1D::new(g.q_min, g.q_max, g.n)?;
        }
        if let Some(h) = self.step_e {
            if !(h.is_finite() && h > 0.0) {
                return Err(CliError::input(format!("step_E must be positive (got {h})")));
            }
        }
        if let Some(t) = &self.trajectory {
            finite("trajectory.q0", t.q0)?;
            if let Some(q) = t.probe_q {
                finite("trajectory.probe_q", q)?;
            }
        }
        for p in self.potential.iter().chain(&self.check_potential) {
            self.potential_from(p)?;
        }
        if let Some(suites) = &self.suites {
            for s in suites {
                crate::commands::Suite::parse(s)?;
            }
        }
        if let Some(e) = &self.ehrenfest {
            for (name, x) in [
                ("center", e.center),
                ("width", e.width),
                ("momentum", e.momentum),
                ("box[0]", e.bounds.0),
                ("box[1]", e.bounds.1),
                ("t_span", e.t_span),
                ("dt", e.dt),
            ] {
                finite(&format!("ehrenfest.{name}"), x)?;
            }
        }
        if let Some(spin) = &self.spin {
            spin.validate()?;
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "scenario".into())
    }

    pub fn constants(&self) -> Result<Constants, CliError> {
        Ok(Constants::new(self.constants.m, self.constants.hbar)?)
    }

    fn potential_from(&self, p: &PotentialSpec) -> Result<Potential, CliError> {
        Ok(match p {
            PotentialSpec::Free {} => Potential::Free,
            PotentialSpec::Linear { slope } => Potential::linear(*slope)?,
            PotentialSpec::Harmonic { stiffness } => Potential::harmonic(*stiffness)?,
            PotentialSpec::SquareWell { depth, half_width } => Potential::square_well(*depth, *half_width)?,
            PotentialSpec::Tabulated { path } => {
                let full = if path.is_absolute() { path.clone() } else { self.base_dir.join(path) };
                Potential::Tabulated(
                    TabulatedPotential::from_csv_path(&full).map_err(|e| CliError::input(e.to_string()))?,
                )
            }
        })
    }

    pub fn potential(&self) -> Result<Potential, CliError> {
        self.potential_from(self.potential.as_ref().ok_or_else(|| missing("potential"))?)
    }

    /// Potential for the `V − E` check.
    pub fn check_potential(&self) -> Result<Potential, CliError> {
        match &self.check_potential {
            Some(p) => self.potential_from(p),
            None => self.potential(),
        }
    }

    pub fn energy(&self) -> Result<f64, CliError> {
        self.energy.ok_or_else(|| missing("energy"))
    }

    fn microstate_from(&self, m: &MicrostateSpec) -> Result<Microstate, CliError> {
        for (name, x) in [("a", m.a), ("b", m.b), ("c", m.c), ("d", m.d), ("W0", m.w0), ("q0", m.q0)] {
            finite(&format!("microstate.{name}"), x)?;
        }
        Ok(Microstate::new(m.a, m.b, m.c, m.d, m.w0, m.q0)?)
    }

    pub fn microstate(&self) -> Result<Microstate, CliError> {
        self.microstate_from(self.microstate.as_ref().ok_or_else(|| missing("microstate"))?)
    }

    pub fn grid(&self) -> Result<Grid1D, CliError> {
        let g = self.grid.as_ref().ok_or_else(|| missing("grid"))?;
        Ok(Grid1D::new(g.q_min, g.q_max, g.n)?)
    }

    pub fn step_e(&self) -> Result<f64, CliError> {
        Ok(self.step_e.unwrap_or(qtraj_core::floyd::default_step(self.energy()?)))
    }

    /// Time origin; the microstate anchor when no trajectory block is given.
    pub fn time_origin(&self) -> Result<f64, CliError> {
        match &self.trajectory {
            Some(t) => Ok(t.q0),
            None => Ok(self.microstate()?.q0),
        }
    }

    /// Position of the fixed-`q` energy checks: `probe_q` when given, else a
    /// quarter of the grid away from the time origin towards the far edge.
    pub fn probe_q(&self) -> Result<f64, CliError> {
        if let Some(q) = self.trajectory.and_then(|t| t.probe_q) {
            return Ok(q);
        }
        let g = self.grid()?;
        let q0 = self.time_origin()?;
        let quarter = 0.25 * (g.q_max() - g.q_min());
        let mid = 0.5 * (g.q_min() + g.q_max());
        Ok(if q0 > mid { q0 - quarter } else { q0 + quarter })
    }

    pub fn spin(&self) -> Result<&SpinSpec, CliError> {
        self.spin.as_ref().ok_or_else(|| missing("spin"))
    }
}

impl SpinSpec {
    fn validate(&self) -> Result<(), CliError> {
        finite("spin.energy", self.energy)?;
        self.grid()?;
        if self.family != FamilyKind::LinearDensity && (self.alpha.is_some() || self.beta.is_some()) {
            return Err(CliError::input("spin.alpha and spin.beta only apply to the linear_density family"));
        }
        for (name, x) in [("spin.alpha", self.alpha), ("spin.beta", self.beta)] {
            if let Some(x) = x {
                finite(name, x)?;
            }
        }
        if let Some(h) = self.step_e {
            if !(h.is_finite() && h > 0.0) {
                return Err(CliError::input(format!("spin.step_E must be positive (got {h})")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid3D, CliError> {
        Ok(Grid3D::new(self.grid.x, self.grid.y, self.grid.z)?)
    }

    pub fn representation(&self) -> Representation {
        match self.representation {
            RepresentationSpec::Analytic => Representation::Analytic,
            RepresentationSpec::Sampled => Representation::Sampled,
        }
    }

    pub fn step_e(&self) -> f64 {
        self.step_e.unwrap_or(qtraj_core::floyd::default_step(self.energy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario, CliError> {
        Scenario::from_str(text, Path::new("."))
    }

    const FREE: &str = r#"{
        "schema": "qtraj.scenario/1",
        "constants": {"m": 1, "hbar": 1},
        "potential": {"kind": "free"},
        "energy": 0.5,
        "microstate": {"a": 1, "b": 0, "c": 0, "d": 1, "W0": 0, "q0": 0},
        "grid": {"q_min": -10, "q_max": 10, "n": 2001}
    }"#;

    #[test]
    fn parses_minimal_scenario() {
        let s = parse(FREE).unwrap();
        assert_eq!(s.potential().unwrap(), Potential::Free);
        assert_eq!(s.grid().unwrap().len(), 2001);
        assert_eq!(s.step_e().unwrap(), 1e-4);
    }

    #[test]
    fn rejects_unknown_keys_and_schema() {
        let extra = FREE.replace("\"energy\": 0.5,", "\"energy\": 0.5, \"colour\": 3,");
        assert_eq!(parse(&extra).unwrap_err().exit_code(), 2);
        let nested = FREE.replace("{\"kind\": \"free\"}", "{\"kind\": \"free\", \"slope\": 1}");
        assert_eq!(parse(&nested).unwrap_err().exit_code(), 2);
        let v2 = FREE.replace("qtraj.scenario/1", "qtraj.scenario/2");
        assert_eq!(parse(&v2).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn degenerate_microstate_names_determinant() {
        let bad = FREE.replace(
            "\"a\": 1, \"b\": 0, \"c\": 0, \"d\": 1",
            "\"a\": 1, \"b\": 2, \"c\": 2, \"d\": 4",
        );
        let err = parse(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("determinant"), "{err}");
    }

    #[test]
    fn missing_blocks_fail_on_use() {
        let s = parse(&FREE.replace("\"potential\": {\"kind\": \"free\"},", "")).unwrap();
        assert_eq!(s.potential().unwrap_err().exit_code(), 2);
        assert_eq!(s.spin().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn spin_block_validation() {
        let with_spin = FREE.replace(
            "\"energy\": 0.5,",
            r#""energy": 0.5, "spin": {"family": "plane_wave", "energy": 0.5, "alpha": 1,
               "grid": {"x": [0, 1, 9], "y": [0, 1, 9], "z": [0, 1, 9]}},"#,
        );
        assert_eq!(parse(&with_spin).unwrap_err().exit_code(), 2);
    }
}
