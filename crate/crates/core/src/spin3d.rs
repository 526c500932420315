//! Stationary Madelung fields in three dimensions, the spin-vector
//! constraints and the current-velocity versus trajectory-velocity verdict.
//!
//! Scenes come in two representations. Analytic scenes carry closures that
//! return value, gradient and Hessian; sampled scenes carry node values and
//! every derivative is a 5-point stencil. Quantities built from derived
//! fields (`∇·J`, `∇×s`, `∇·[∂_E(ρ∇W)]`) are always differentiated by stencil.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{derivative_values, five_point_first, EDGE_MARGIN, MIN_NODES};
use crate::qshje::Constants;
use crate::report::{fmt17, Residual};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Identity tolerance for analytic scenes.
pub const ANALYTIC_TOL: f64 = 1e-10;
/// Identity tolerance for sampled scenes.
pub const SAMPLED_TOL: f64 = 1e-6;

/// Relative threshold below which `v_S` or `v_B × v_S` count as zero.
const DEGENERACY: f64 = 1e-12;

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.max
        } else {
            self.min + i as f64 * self.spacing()
        }
    }
}

/// Uniform box; node `(i, j, k)` is stored at `i + nx (j + ny k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid3D {
    pub axes: [Axis; 3],
}

impl Grid3D {
    pub fn new(x: (f64, f64, usize), y: (f64, f64, usize), z: (f64, f64, usize)) -> Result<Self> {
        let mut axes = [Axis { min: 0.0, max: 0.0, n: 0 }; 3];
        for (a, (min, max, n)) in [x, y, z].into_iter().enumerate() {
            if !(min.is_finite() && max.is_finite() && max > min) {
                return Err(Error::InvalidInput(format!(
                    "axis {a} needs finite bounds with max > min (got {min}, {max})"
                )));
            }
            if n < MIN_NODES {
                return Err(Error::InvalidInput(format!(
                    "axis {a} needs at least {MIN_NODES} nodes (got {n})"
                )));
            }
            axes[a] = Axis { min, max, n };
        }
        Ok(Grid3D { axes })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.axes[0].n * (j + self.axes[1].n * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.axes[0].n;
        let ny = self.axes[1].n;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn point(&self, idx: usize) -> Vec3 {
        let c = self.coords(idx);
        std::array::from_fn(|a| self.axes[a].node(c[a]))
    }

    /// Nodes at least `margin` nodes away from every face.
    pub fn interior(&self, margin: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&idx| {
                let c = self.coords(idx);
                (0..3).all(|a| c[a] >= margin && c[a] + margin < self.axes[a].n)
            })
            .collect()
    }

    fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.axes[0].n,
            _ => self.axes[0].n * self.axes[1].n,
        }
    }

    /// Stencil derivative of node values along one axis.
    pub fn partial(&self, values: &[f64], axis: usize, order: usize) -> Result<Vec<f64>> {
        if values.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for a grid of {}",
                values.len(),
                self.len()
            )));
        }
        let n = self.axes[axis].n;
        let h = self.axes[axis].spacing();
        let stride = self.stride(axis);
        let mut out = vec![0.0; values.len()];
        let starts: Vec<usize> = (0..self.len()).filter(|&idx| self.coords(idx)[axis] == 0).collect();
        let lines: Vec<(usize, Vec<f64>)> = starts
            .par_iter()
            .map(|&s| {
                let line: Vec<f64> = (0..n).map(|t| values[s + t * stride]).collect();
                derivative_values(&line, h, order).map(|d| (s, d))
            })
            .collect::<Result<_>>()?;
        for (s, d) in lines {
            for (t, v) in d.into_iter().enumerate() {
                out[s + t * stride] = v;
            }
        }
        Ok(out)
    }

    pub fn gradient(&self, values: &[f64]) -> Result<Vec<Vec3>> {
        let g: Vec<Vec<f64>> = (0..3).map(|a| self.partial(values, a, 1)).collect::<Result<_>>()?;
        Ok((0..self.len()).map(|i| [g[0][i], g[1][i], g[2][i]]).collect())
    }

    pub fn laplacian(&self, values: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.partial(values, 0, 2)?;
        for a in 1..3 {
            for (o, d) in out.iter_mut().zip(self.partial(values, a, 2)?) {
                *o += d;
            }
        }
        Ok(out)
    }

    fn component(field: &[Vec3], c: usize) -> Vec<f64> {
        field.iter().map(|v| v[c]).collect()
    }

    /// `J[i][c][a] = ∂_a F_c`.
    pub fn jacobian(&self, field: &[Vec3]) -> Result<Vec<Mat3>> {
        let mut d = [[Vec::new(), Vec::new(), Vec::new()], [Vec::new(), Vec::new(), Vec::new()], [Vec::new(), Vec::new(), Vec::new()]];
        for (c, row) in d.iter_mut().enumerate() {
            let comp = Self::component(field, c);
            for (a, slot) in row.iter_mut().enumerate() {
                *slot = self.partial(&comp, a, 1)?;
            }
        }
        Ok((0..self.len())
            .map(|i| std::array::from_fn(|c| std::array::from_fn(|a| d[c][a][i])))
            .collect())
    }

    pub fn divergence(&self, field: &[Vec3]) -> Result<Vec<f64>> {
        Ok(self.jacobian(field)?.iter().map(div_of).collect())
    }

    pub fn curl(&self, field: &[Vec3]) -> Result<Vec<Vec3>> {
        Ok(self.jacobian(field)?.iter().map(curl_of).collect())
    }
}

fn div_of(j: &Mat3) -> f64 {
    j[0][0] + j[1][1] + j[2][2]
}

fn curl_of(j: &Mat3) -> Vec3 {
    [j[2][1] - j[1][2], j[0][2] - j[2][0], j[1][0] - j[0][1]]
}

/// Value, gradient and Hessian of a scalar at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet3 {
    pub value: f64,
    pub grad: Vec3,
    pub hess: Mat3,
}

impl Jet3 {
    pub fn constant(value: f64) -> Self {
        Jet3 {
            value,
            ..Default::default()
        }
    }

    pub fn laplacian(&self) -> f64 {
        self.hess[0][0] + self.hess[1][1] + self.hess[2][2]
    }
}

pub type JetFn = Arc<dyn Fn(Vec3) -> Jet3 + Send + Sync>;

#[derive(Clone)]
pub enum ScalarField {
    Analytic(JetFn),
    Sampled(Vec<f64>),
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarField::Analytic(_) => write!(f, "Analytic(..)"),
            ScalarField::Sampled(v) => write!(f, "Sampled({} values)", v.len()),
        }
    }
}

impl ScalarField {
    pub fn analytic(f: impl Fn(Vec3) -> Jet3 + Send + Sync + 'static) -> Self {
        ScalarField::Analytic(Arc::new(f))
    }

    pub fn values(&self, grid: &Grid3D) -> Vec<f64> {
        match self {
            ScalarField::Analytic(f) => (0..grid.len()).into_par_iter().map(|i| f(grid.point(i)).value).collect(),
            ScalarField::Sampled(v) => v.clone(),
        }
    }

    fn jets(&self, grid: &Grid3D) -> Option<Vec<Jet3>> {
        match self {
            ScalarField::Analytic(f) => Some((0..grid.len()).into_par_iter().map(|i| f(grid.point(i))).collect()),
            ScalarField::Sampled(_) => None,
        }
    }
}

/// Value and Jacobian `jacobian[c][a] = ∂_a F_c` of a vector field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VecJet {
    pub value: Vec3,
    pub jacobian: Mat3,
}

#[derive(Clone)]
pub enum VectorField {
    Analytic(Arc<dyn Fn(Vec3) -> VecJet + Send + Sync>),
    Sampled(Vec<Vec3>),
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VectorField::Analytic(_) => write!(f, "Analytic(..)"),
            VectorField::Sampled(v) => write!(f, "Sampled({} values)", v.len()),
        }
    }
}

impl VectorField {
    pub fn values(&self, grid: &Grid3D) -> Vec<Vec3> {
        match self {
            VectorField::Analytic(f) => (0..grid.len()).map(|i| f(grid.point(i)).value).collect(),
            VectorField::Sampled(v) => v.clone(),
        }
    }

    pub fn divergence(&self, grid: &Grid3D) -> Result<Vec<f64>> {
        match self {
            VectorField::Analytic(f) => Ok((0..grid.len()).map(|i| div_of(&f(grid.point(i)).jacobian)).collect()),
            VectorField::Sampled(v) => grid.divergence(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Analytic,
    Sampled,
}

/// Stationary scene: `ρ > 0`, `W`, potential `V` and energy `E`.
#[derive(Debug, Clone)]
pub struct FieldScene {
    pub grid: Grid3D,
    pub energy: f64,
    pub rho: ScalarField,
    pub w: ScalarField,
    /// Only values are used.
    pub potential: ScalarField,
}

impl FieldScene {
    pub fn new(grid: Grid3D, energy: f64, rho: ScalarField, w: ScalarField, potential: ScalarField) -> Result<Self> {
        if !energy.is_finite() {
            return Err(Error::InvalidInput(format!("energy must be finite (got {energy})")));
        }
        let analytic = matches!(rho, ScalarField::Analytic(_));
        for (name, f) in [("rho", &rho), ("W", &w), ("V", &potential)] {
            match f {
                ScalarField::Sampled(v) if v.len() != grid.len() => {
                    return Err(Error::InvalidInput(format!(
                        "{name} has {} values for a grid of {}",
                        v.len(),
                        grid.len()
                    )))
                }
                ScalarField::Analytic(_) if !analytic => {
                    return Err(Error::InvalidInput("scene mixes analytic and sampled fields".into()))
                }
                ScalarField::Sampled(_) if analytic => {
                    return Err(Error::InvalidInput("scene mixes analytic and sampled fields".into()))
                }
                _ => {}
            }
            if f.values(&grid).iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} has non-finite values")));
            }
        }
        let rv = rho.values(&grid);
        if let Some(i) = rv.iter().position(|&r| r <= 0.0) {
            return Err(Error::Domain(format!(
                "rho must be positive; rho = {} at {:?}",
                rv[i],
                grid.point(i)
            )));
        }
        Ok(FieldScene {
            grid,
            energy,
            rho,
            w,
            potential,
        })
    }

    pub fn representation(&self) -> Representation {
        match self.rho {
            ScalarField::Analytic(_) => Representation::Analytic,
            ScalarField::Sampled(_) => Representation::Sampled,
        }
    }

    /// Same scene with every field replaced by its node values.
    pub fn sampled(&self) -> FieldScene {
        FieldScene {
            grid: self.grid,
            energy: self.energy,
            rho: ScalarField::Sampled(self.rho.values(&self.grid)),
            w: ScalarField::Sampled(self.w.values(&self.grid)),
            potential: ScalarField::Sampled(self.potential.values(&self.grid)),
        }
    }

    pub fn tolerance(&self) -> f64 {
        match self.representation() {
            Representation::Analytic => ANALYTIC_TOL,
            Representation::Sampled => SAMPLED_TOL,
        }
    }
}

/// Node values of the local quantities every operation needs.
struct Local {
    rho: Vec<f64>,
    grad_rho: Vec<Vec3>,
    lap_rho: Vec<f64>,
    /// `ΔR/R` with `R = √ρ`.
    lap_r_over_r: Vec<f64>,
    grad_w: Vec<Vec3>,
    v: Vec<f64>,
    /// `∇·(ρ∇W)`.
    flux_div: Vec<f64>,
}

fn local(scene: &FieldScene) -> Result<Local> {
    let g = &scene.grid;
    let v = scene.potential.values(g);
    match (scene.rho.jets(g), scene.w.jets(g)) {
        (Some(rj), Some(wj)) => {
            let lap_rho: Vec<f64> = rj.iter().map(Jet3::laplacian).collect();
            let lap_r_over_r = rj
                .iter()
                .map(|j| j.laplacian() / (2.0 * j.value) - dot(j.grad, j.grad) / (4.0 * j.value * j.value))
                .collect();
            let flux_div = rj
                .iter()
                .zip(&wj)
                .map(|(r, w)| r.value * w.laplacian() + dot(r.grad, w.grad))
                .collect();
            Ok(Local {
                rho: rj.iter().map(|j| j.value).collect(),
                grad_rho: rj.iter().map(|j| j.grad).collect(),
                lap_rho,
                lap_r_over_r,
                grad_w: wj.iter().map(|j| j.grad).collect(),
                v,
                flux_div,
            })
        }
        _ => {
            let rho = scene.rho.values(g);
            let w = scene.w.values(g);
            let r: Vec<f64> = rho.iter().map(|x| x.sqrt()).collect();
            let lap_r = g.laplacian(&r)?;
            let grad_w = g.gradient(&w)?;
            let flux: Vec<Vec3> = rho.iter().zip(&grad_w).map(|(p, gw)| scale(*gw, *p)).collect();
            Ok(Local {
                grad_rho: g.gradient(&rho)?,
                lap_rho: g.laplacian(&rho)?,
                lap_r_over_r: lap_r.iter().zip(&r).map(|(l, r)| l / r).collect(),
                flux_div: g.divergence(&flux)?,
                rho,
                grad_w,
                v,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct Velocities {
    /// `∇W/m`.
    pub v_b: Vec<Vec3>,
    /// `ħ∇ρ/(2mρ)`.
    pub v_s: Vec<Vec3>,
}

fn velocities(l: &Local, c: &Constants) -> Velocities {
    Velocities {
        v_b: l.grad_w.iter().map(|g| scale(*g, 1.0 / c.m)).collect(),
        v_s: l
            .grad_rho
            .iter()
            .zip(&l.rho)
            .map(|(g, r)| scale(*g, c.hbar / (2.0 * c.m * r)))
            .collect(),
    }
}

pub fn madelung_velocities(scene: &FieldScene, constants: &Constants) -> Result<Velocities> {
    Ok(velocities(&local(scene)?, constants))
}

#[derive(Debug, Clone)]
pub struct QuantumPotential3D {
    /// `−(ħ²/2m) ΔR/R`.
    pub laplacian_route: Vec<f64>,
    /// `−(m/2)|v_S|² − (ħ/2)∇·v_S`.
    pub velocity_route: Vec<f64>,
    pub difference: Residual,
}

fn q_laplacian(l: &Local, c: &Constants) -> Vec<f64> {
    l.lap_r_over_r.iter().map(|x| -c.hbar * c.hbar / (2.0 * c.m) * x).collect()
}

pub fn quantum_potential_3d(scene: &FieldScene, constants: &Constants) -> Result<QuantumPotential3D> {
    let g = &scene.grid;
    let l = local(scene)?;
    let vel = velocities(&l, constants);
    let div_vs: Vec<f64> = match scene.representation() {
        Representation::Analytic => (0..g.len())
            .map(|i| {
                let r = l.rho[i];
                constants.hbar / (2.0 * constants.m)
                    * (l.lap_rho[i] / r - dot(l.grad_rho[i], l.grad_rho[i]) / (r * r))
            })
            .collect(),
        Representation::Sampled => g.divergence(&vel.v_s)?,
    };
    let laplacian_route = q_laplacian(&l, constants);
    let velocity_route: Vec<f64> = (0..g.len())
        .map(|i| -0.5 * constants.m * dot(vel.v_s[i], vel.v_s[i]) - 0.5 * constants.hbar * div_vs[i])
        .collect();
    let difference = Residual::from_values(
        "quantum_potential_routes",
        g.interior(EDGE_MARGIN)
            .into_iter()
            .map(|i| laplacian_route[i] - velocity_route[i]),
    );
    Ok(QuantumPotential3D {
        laplacian_route,
        velocity_route,
        difference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    /// `s = ±ŝ`, unique up to sign.
    IsolatedPair,
    /// Any unit `s ⊥ v_S` solves; `s` holds one representative.
    OneParameterFamily,
    /// `v_S = 0`: only `|s| = 1` binds.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpinSolution {
    pub s: Option<Vec3>,
    pub multiplicity: Multiplicity,
}

/// `|s|² − 1`, `v_S·s`, `v_B·(v_S × s)`.
pub fn spin_constraints(v_b: Vec3, v_s: Vec3, s: Vec3) -> [f64; 3] {
    [dot(s, s) - 1.0, dot(v_s, s), dot(v_b, cross(v_s, s))]
}

/// Solves `|s| = 1`, `v_S·s = 0`, `v_B·(v_S × s) = 0` in closed form.
///
/// The second and third constraints say `s ⊥ v_S` and `s ⊥ v_B × v_S`, so
/// for non-parallel velocities `s ∝ v_S × (v_B × v_S)`, the part of `v_B`
/// orthogonal to `v_S`.
pub fn solve_spin(v_b: Vec3, v_s: Vec3) -> SpinSolution {
    let nb = norm(v_b);
    let ns = norm(v_s);
    let big = nb.max(ns);
    if big == 0.0 || !(ns > DEGENERACY * big) {
        return SpinSolution {
            s: None,
            multiplicity: Multiplicity::Degenerate,
        };
    }
    let bxs = cross(v_b, v_s);
    if norm(bxs) > DEGENERACY * nb * ns {
        let dir = cross(v_s, bxs);
        return SpinSolution {
            s: Some(scale(dir, 1.0 / norm(dir))),
            multiplicity: Multiplicity::IsolatedPair,
        };
    }
    // representative orthogonal to v_S built from the least aligned axis
    let u = scale(v_s, 1.0 / ns);
    let axis = (0..3).min_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs())).unwrap_or(0);
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let perp = sub(e, scale(u, dot(e, u)));
    SpinSolution {
        s: Some(scale(perp, 1.0 / norm(perp))),
        multiplicity: Multiplicity::OneParameterFamily,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpinCounts {
    pub isolated_pair: usize,
    pub one_parameter_family: usize,
    pub degenerate: usize,
}

#[derive(Debug, Clone)]
pub struct SpinField {
    pub solutions: Vec<SpinSolution>,
    pub counts: SpinCounts,
    /// Largest constraint residual over nodes where `s` is set.
    pub constraints: Residual,
}

impl SpinField {
    /// Spin values with degenerate nodes filled by `x̂`; there `v_S = 0`, so
    /// the fill does not change `v = v_B + v_S × s`.
    pub fn filled(&self) -> Vec<Vec3> {
        self.solutions.iter().map(|s| s.s.unwrap_or([1.0, 0.0, 0.0])).collect()
    }
}

fn spin_from(vel: &Velocities) -> SpinField {
    let solutions: Vec<SpinSolution> = vel.v_b.par_iter().zip(&vel.v_s).map(|(b, s)| solve_spin(*b, *s)).collect();
    let count = |m: Multiplicity| solutions.iter().filter(|s| s.multiplicity == m).count();
    let counts = SpinCounts {
        isolated_pair: count(Multiplicity::IsolatedPair),
        one_parameter_family: count(Multiplicity::OneParameterFamily),
        degenerate: count(Multiplicity::Degenerate),
    };
    let constraints = Residual::from_values(
        "spin_constraints",
        solutions.iter().enumerate().filter_map(|(i, sol)| {
            sol.s.map(|s| {
                spin_constraints(vel.v_b[i], vel.v_s[i], s)
                    .iter()
                    .fold(0.0f64, |a, x| a.max(x.abs()))
            })
        }),
    );
    SpinField {
        solutions,
        counts,
        constraints,
    }
}

pub fn spin_field(scene: &FieldScene, constants: &Constants) -> Result<SpinField> {
    Ok(spin_from(&madelung_velocities(scene, constants)?))
}

#[derive(Debug, Clone)]
pub struct SpinScene {
    pub s: Vec<Vec3>,
    pub v_b: Vec<Vec3>,
    pub v_s: Vec<Vec3>,
    /// `v_B + v_S × s`.
    pub v: Vec<Vec3>,
    /// `(ħρ/2m)∇×s`.
    pub j0: Vec<Vec3>,
    /// `ρv + J0`.
    pub j: Vec<Vec3>,
    /// `∇·J`.
    pub div_j: Residual,
    /// `J − η` when `η` is supplied.
    pub j_vs_eta: Option<Residual>,
    /// `∇·(J + ∇×b) − ∇·J` for `b = (0, 0, xy)`.
    pub gauge_shift: Residual,
    /// `∇·(∇×b)`.
    pub gauge_div_curl: Residual,
    /// `v·v_B − |v_B|²`.
    pub v_dot_vb: Residual,
}

pub fn current_decomposition(
    scene: &FieldScene,
    s: &[Vec3],
    eta: Option<&VectorField>,
    constants: &Constants,
) -> Result<SpinScene> {
    let g = &scene.grid;
    if s.len() != g.len() {
        return Err(Error::InvalidInput(format!(
            "spin field has {} values for a grid of {}",
            s.len(),
            g.len()
        )));
    }
    if let Some(i) = s.iter().position(|x| (dot(*x, *x) - 1.0).abs() > 1e-10) {
        return Err(Error::InvalidInput(format!(
            "spin field is not unit at {:?}",
            g.point(i)
        )));
    }
    let tol = scene.tolerance();
    let interior = g.interior(EDGE_MARGIN);
    if let Some(eta) = eta {
        let div = eta.divergence(g)?;
        let worst = interior.iter().map(|&i| div[i].abs()).fold(0.0, f64::max);
        if worst > tol {
            return Err(Error::InvalidInput(format!(
                "eta is not divergence-free: max |div eta| = {worst:e}"
            )));
        }
    }
    let l = local(scene)?;
    let vel = velocities(&l, constants);
    let curl_s = g.curl(s)?;
    let n = g.len();
    let v: Vec<Vec3> = (0..n).map(|i| add(vel.v_b[i], cross(vel.v_s[i], s[i]))).collect();
    let j0: Vec<Vec3> = (0..n)
        .map(|i| scale(curl_s[i], constants.hbar * l.rho[i] / (2.0 * constants.m)))
        .collect();
    let j: Vec<Vec3> = (0..n).map(|i| add(scale(v[i], l.rho[i]), j0[i])).collect();
    let div = g.divergence(&j)?;
    let div_j = Residual::from_values("current_divergence", interior.iter().map(|&i| div[i]));

    let j_vs_eta = eta.map(|eta| {
        let e = eta.values(g);
        Residual::from_values(
            "current_vs_eta",
            interior.iter().map(|&i| norm(sub(j[i], e[i]))),
        )
    });

    let b: Vec<Vec3> = (0..n)
        .map(|i| {
            let p = g.point(i);
            [0.0, 0.0, p[0] * p[1]]
        })
        .collect();
    let curl_b = g.curl(&b)?;
    let div_curl_b = g.divergence(&curl_b)?;
    let shifted: Vec<Vec3> = (0..n).map(|i| add(j[i], curl_b[i])).collect();
    let div_shifted = g.divergence(&shifted)?;
    let gauge_shift = Residual::from_values(
        "gauge_shift",
        interior.iter().map(|&i| div_shifted[i] - div[i]),
    );
    let gauge_div_curl = Residual::from_values("gauge_div_curl", interior.iter().map(|&i| div_curl_b[i]));
    let v_dot_vb = Residual::from_values(
        "v_dot_vB",
        (0..n).map(|i| dot(v[i], vel.v_b[i]) - dot(vel.v_b[i], vel.v_b[i])),
    );
    Ok(SpinScene {
        s: s.to_vec(),
        v_b: vel.v_b,
        v_s: vel.v_s,
        v,
        j0,
        j,
        div_j,
        j_vs_eta,
        gauge_shift,
        gauge_div_curl,
        v_dot_vb,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedReport {
    /// `|v|² − (|v_B|² + |v_S|²)`.
    pub pythagoras: Residual,
    /// `|v_B|² + |v_S|² − [(2/m)(E − V) + (ħ²/2m²)Δρ/ρ]`.
    pub energy_form: Residual,
}

pub fn speed_identity(scene: &FieldScene, constants: &Constants) -> Result<SpeedReport> {
    let g = &scene.grid;
    let l = local(scene)?;
    let vel = velocities(&l, constants);
    let spin = spin_from(&vel);
    let (m, hbar, e) = (constants.m, constants.hbar, scene.energy);
    let interior = g.interior(EDGE_MARGIN);
    let pythagoras = Residual::from_values(
        "speed_pythagoras",
        interior.iter().map(|&i| {
            let v = match spin.solutions[i].s {
                Some(s) => add(vel.v_b[i], cross(vel.v_s[i], s)),
                None => vel.v_b[i],
            };
            dot(v, v) - dot(vel.v_b[i], vel.v_b[i]) - dot(vel.v_s[i], vel.v_s[i])
        }),
    );
    let energy_form = Residual::from_values(
        "speed_energy_form",
        interior.iter().map(|&i| {
            let lhs = dot(vel.v_b[i], vel.v_b[i]) + dot(vel.v_s[i], vel.v_s[i]);
            let rhs = 2.0 / m * (e - l.v[i]) + hbar * hbar / (2.0 * m * m) * l.lap_rho[i] / l.rho[i];
            lhs - rhs
        }),
    );
    Ok(SpeedReport {
        pythagoras,
        energy_form,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryReport {
    /// `(1/2m)|∇W|² − (ħ²/2m)ΔR/R + V − E`.
    pub hamilton_jacobi: Residual,
    /// `∇·(ρ∇W)`.
    pub continuity: Residual,
}

pub fn stationary_residual(scene: &FieldScene, constants: &Constants) -> Result<StationaryReport> {
    let g = &scene.grid;
    let l = local(scene)?;
    let (m, hbar) = (constants.m, constants.hbar);
    let interior = g.interior(EDGE_MARGIN);
    let hamilton_jacobi = Residual::from_values(
        "stationary_hamilton_jacobi",
        interior.iter().map(|&i| {
            dot(l.grad_w[i], l.grad_w[i]) / (2.0 * m) - hbar * hbar / (2.0 * m) * l.lap_r_over_r[i] + l.v[i]
                - scene.energy
        }),
    );
    let continuity = Residual::from_values("stationary_continuity", interior.iter().map(|&i| l.flux_div[i]));
    Ok(StationaryReport {
        hamilton_jacobi,
        continuity,
    })
}

/// Energy-parametrised family of stationary scenes on a fixed grid.
pub trait SceneFamily: Sync {
    fn name(&self) -> &str;
    fn scene(&self, energy: f64) -> Result<FieldScene>;
}

#[derive(Debug, Clone)]
pub struct TimeField {
    pub energy: f64,
    pub step_e: f64,
    /// `∇t = ∇W_E`.
    pub grad_t: Vec<Vec3>,
    pub q_e: Vec<f64>,
    /// `ẋ_i = |∇W|²/(m(1 − Q_E)∂_iW)`; `None` where `∂_iW = 0`.
    pub xdot: Vec<[Option<f64>; 3]>,
    /// `ẋ_i = 1/∂_iW_E`; `None` where `∂_iW_E = 0`.
    pub xdot_inverse: Vec<[Option<f64>; 3]>,
    /// `∇W·∇t − m(1 − Q_E)`.
    pub time_identity: Residual,
    /// `∇·[∂_E(ρ∇W)]`.
    pub flux_derivative_div: Residual,
    pub singular_components: usize,
}

pub fn time_field_3d(family: &dyn SceneFamily, energy: f64, constants: &Constants, step_e: f64) -> Result<TimeField> {
    if !(step_e > 0.0 && step_e.is_finite()) {
        return Err(Error::InvalidInput(format!("step_E must be positive (got {step_e})")));
    }
    let locals: Vec<(Local, Vec<f64>)> = [-2.0, -1.0, 0.0, 1.0, 2.0]
        .par_iter()
        .map(|k| {
            let scene = family.scene(energy + k * step_e)?;
            let l = local(&scene)?;
            let q = q_laplacian(&l, constants);
            Ok((l, q))
        })
        .collect::<Result<_>>()?;
    let g = family.scene(energy)?.grid;
    let n = g.len();
    let de = |f: &dyn Fn(&Local, &Vec<f64>) -> f64| -> f64 {
        let v: [f64; 5] = std::array::from_fn(|k| f(&locals[k].0, &locals[k].1));
        five_point_first(v[0], v[1], v[3], v[4], step_e)
    };
    let mut grad_t = Vec::with_capacity(n);
    let mut q_e = Vec::with_capacity(n);
    let mut d_flux = Vec::with_capacity(n);
    for i in 0..n {
        grad_t.push(std::array::from_fn(|a| de(&|l, _| l.grad_w[i][a])));
        q_e.push(de(&|_, q| q[i]));
        d_flux.push(std::array::from_fn(|a| de(&|l, _| l.rho[i] * l.grad_w[i][a])));
    }
    let center = &locals[2].0;
    let m = constants.m;
    let mut singular = 0;
    let mut xdot = Vec::with_capacity(n);
    let mut xdot_inverse = Vec::with_capacity(n);
    for i in 0..n {
        let gw = center.grad_w[i];
        let gw2 = dot(gw, gw);
        let gn = gw2.sqrt();
        let gt = norm(grad_t[i]);
        let row: [Option<f64>; 3] = std::array::from_fn(|a| {
            (gw[a].abs() > DEGENERACY * gn).then(|| gw2 / (m * (1.0 - q_e[i]) * gw[a]))
        });
        singular += row.iter().filter(|x| x.is_none()).count();
        xdot.push(row);
        xdot_inverse.push(std::array::from_fn(|a| {
            (grad_t[i][a].abs() > DEGENERACY * gt).then(|| 1.0 / grad_t[i][a])
        }));
    }
    let interior = g.interior(EDGE_MARGIN);
    let time_identity = Residual::from_values(
        "time_identity",
        interior
            .iter()
            .map(|&i| dot(center.grad_w[i], grad_t[i]) - m * (1.0 - q_e[i])),
    )
    .with_param("step_E", step_e);
    let div = g.divergence(&d_flux)?;
    let flux_derivative_div = Residual::from_values("flux_energy_derivative_div", interior.iter().map(|&i| div[i]))
        .with_param("step_E", step_e);
    Ok(TimeField {
        energy,
        step_e,
        grad_t,
        q_e,
        xdot,
        xdot_inverse,
        time_identity,
        flux_derivative_div,
        singular_components: singular,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub family: String,
    pub energy: f64,
    pub one_minus_qe_min: f64,
    pub one_minus_qe_max: f64,
    /// The value `(1 − Q_E)` would need if the current velocity were the
    /// trajectory velocity.
    pub three_m: f64,
    /// `min |(1 − Q_E) − 3m|` over interior nodes.
    pub mismatch_min: f64,
    pub mismatch_max: f64,
    /// `min |(1 − Q_E) − 3|`.
    pub dimensionless_mismatch_min: f64,
    /// Smallest number of nonsingular velocity components at a node.
    pub nonsingular_components_min: usize,
    /// `m(1 − Q_E) ẋ·∇W − 3|∇W|²` with the per-component `ẋ`.
    pub trajectory_projection: Residual,
    pub v_dot_vb: Residual,
    pub time_identity: Residual,
    pub flux_derivative_div: Residual,
    pub distinct: bool,
}

/// Threshold on the mismatch for declaring the two velocities distinct.
pub const VERDICT_THRESHOLD: f64 = 0.1;

pub fn current_vs_trajectory_report(
    family: &dyn SceneFamily,
    energy: f64,
    constants: &Constants,
    step_e: f64,
) -> Result<Verdict> {
    let tf = time_field_3d(family, energy, constants, step_e)?;
    let scene = family.scene(energy)?;
    let g = scene.grid;
    let l = local(&scene)?;
    let vel = velocities(&l, constants);
    let spin = spin_from(&vel);
    let interior = g.interior(EDGE_MARGIN);
    let m = constants.m;
    let omq: Vec<f64> = interior.iter().map(|&i| 1.0 - tf.q_e[i]).collect();
    let mismatch: Vec<f64> = omq.iter().map(|x| (x - 3.0 * m).abs()).collect();
    let mismatch_min = mismatch.iter().copied().fold(f64::INFINITY, f64::min);
    let v_dot_vb = Residual::from_values(
        "v_dot_vB",
        interior.iter().map(|&i| {
            let v = match spin.solutions[i].s {
                Some(s) => add(vel.v_b[i], cross(vel.v_s[i], s)),
                None => vel.v_b[i],
            };
            dot(v, vel.v_b[i]) - dot(vel.v_b[i], vel.v_b[i])
        }),
    );
    let trajectory_projection = Residual::from_values(
        "trajectory_projection",
        interior.iter().map(|&i| {
            let gw = l.grad_w[i];
            let proj: f64 = (0..3).filter_map(|a| tf.xdot[i][a].map(|x| x * gw[a])).sum();
            m * (1.0 - tf.q_e[i]) * proj - 3.0 * dot(gw, gw)
        }),
    );
    Ok(Verdict {
        family: family.name().to_string(),
        energy,
        one_minus_qe_min: omq.iter().copied().fold(f64::INFINITY, f64::min),
        one_minus_qe_max: omq.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        three_m: 3.0 * m,
        mismatch_min,
        mismatch_max: mismatch.iter().copied().fold(0.0, f64::max),
        dimensionless_mismatch_min: omq.iter().map(|x| (x - 3.0).abs()).fold(f64::INFINITY, f64::min),
        nonsingular_components_min: interior
            .iter()
            .map(|&i| tf.xdot[i].iter().filter(|x| x.is_some()).count())
            .min()
            .unwrap_or(0),
        trajectory_projection,
        v_dot_vb,
        time_identity: tf.time_identity,
        flux_derivative_div: tf.flux_derivative_div,
        distinct: mismatch_min > VERDICT_THRESHOLD,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearDensityReport {
    /// `J − η` with `s = x̂`.
    pub current_vs_eta: Residual,
    /// `(2ρ²/m)(E − V) + ħ²ρρ₂₂/(2m²) − (ρ²/m²)(W₁² + W₂²) − ħ²ρ₂²/(4m²)`.
    pub energy_balance: Residual,
    /// `ρρ₂₂ − ρ₂²/2`.
    pub density_identity: Residual,
    /// `|ρ₁| + |ρ₃|`; zero when `α, β` are constant.
    pub gradient_direction: Residual,
    pub stationary: StationaryReport,
    pub speed: SpeedReport,
    pub spin: SpinCounts,
}

#[derive(Debug, Clone)]
pub struct LinearDensity {
    pub scene: FieldScene,
    pub eta: VectorField,
    pub spin: SpinScene,
    pub report: LinearDensityReport,
}

/// Jet of `f(x, z)`; a nonzero `y`-derivative is rejected at build time.
pub type PlaneJetFn = JetFn;

fn density_jet(alpha: &Jet3, beta: &Jet3, y: f64) -> Jet3 {
    // ρ = R², R = (αy + β)/2
    let r = 0.5 * (alpha.value * y + beta.value);
    let gr: Vec3 = std::array::from_fn(|a| {
        0.5 * (alpha.grad[a] * y + beta.grad[a]) + if a == 1 { 0.5 * alpha.value } else { 0.0 }
    });
    let hr: Mat3 = std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            let mut h = 0.5 * (alpha.hess[a][b] * y + beta.hess[a][b]);
            if a == 1 {
                h += 0.5 * alpha.grad[b];
            }
            if b == 1 {
                h += 0.5 * alpha.grad[a];
            }
            h
        })
    });
    Jet3 {
        value: r * r,
        grad: scale(gr, 2.0 * r),
        hess: std::array::from_fn(|a| std::array::from_fn(|b| 2.0 * (gr[a] * gr[b] + r * hr[a][b]))),
    }
}

/// Builds the solvable `s = x̂` configuration: `2ρ^{1/2} = αy + β`,
/// `V = E − (W₁² + W₂²)/2m` and `η = (ρW₁/m, ρW₂/m, −ħρ₂/2m)`.
pub fn linear_density_build(
    grid: Grid3D,
    alpha: JetFn,
    beta: JetFn,
    w: JetFn,
    energy: f64,
    constants: &Constants,
) -> Result<LinearDensity> {
    let (m, hbar) = (constants.m, constants.hbar);
    for i in 0..grid.len() {
        let p = grid.point(i);
        let (a, b, wj) = (alpha(p), beta(p), w(p));
        if a.grad[1] != 0.0 || b.grad[1] != 0.0 {
            return Err(Error::InvalidInput("alpha and beta must not depend on y".into()));
        }
        if wj.grad[2].abs() > 1e-12 * norm(wj.grad).max(1.0) {
            return Err(Error::InvalidInput(format!("W must not depend on z (dW/dz = {} at {p:?})", wj.grad[2])));
        }
        let r2 = a.value * p[1] + b.value;
        if !(r2 > 0.0) {
            return Err(Error::Domain(format!("alpha*y + beta must be positive (got {r2} at {p:?})")));
        }
    }
    let (a1, b1) = (alpha.clone(), beta.clone());
    let rho = ScalarField::analytic(move |p| density_jet(&a1(p), &b1(p), p[1]));
    let w1 = w.clone();
    let potential = ScalarField::analytic(move |p| {
        let g = w1(p).grad;
        Jet3::constant(energy - (g[0] * g[0] + g[1] * g[1]) / (2.0 * m))
    });
    let scene = FieldScene::new(grid, energy, rho, ScalarField::Analytic(w.clone()), potential)?;

    let (a2, b2, w2) = (alpha.clone(), beta.clone(), w.clone());
    let eta = VectorField::Analytic(Arc::new(move |p| {
        let r = density_jet(&a2(p), &b2(p), p[1]);
        let wj = w2(p);
        let value = [r.value * wj.grad[0] / m, r.value * wj.grad[1] / m, -hbar * r.grad[1] / (2.0 * m)];
        let jacobian = std::array::from_fn(|c| {
            std::array::from_fn(|a| match c {
                0 => (r.grad[a] * wj.grad[0] + r.value * wj.hess[0][a]) / m,
                1 => (r.grad[a] * wj.grad[1] + r.value * wj.hess[1][a]) / m,
                _ => -hbar * r.hess[1][a] / (2.0 * m),
            })
        });
        VecJet { value, jacobian }
    }));

    let s = vec![[1.0, 0.0, 0.0]; grid.len()];
    let spin = current_decomposition(&scene, &s, Some(&eta), constants)?;
    let interior = grid.interior(EDGE_MARGIN);
    let jets: Vec<(Jet3, Jet3, f64)> = interior
        .iter()
        .map(|&i| {
            let p = grid.point(i);
            let r = density_jet(&alpha(p), &beta(p), p[1]);
            let g = w(p).grad;
            (r, w(p), energy - (g[0] * g[0] + g[1] * g[1]) / (2.0 * m))
        })
        .collect();
    let energy_balance = Residual::from_values(
        "energy_balance",
        jets.iter().map(|(r, wj, v)| {
            let (rho, r2, r22) = (r.value, r.grad[1], r.hess[1][1]);
            let w2 = wj.grad[0] * wj.grad[0] + wj.grad[1] * wj.grad[1];
            2.0 * rho * rho / m * (energy - v) + hbar * hbar * rho * r22 / (2.0 * m * m)
                - rho * rho / (m * m) * w2
                - hbar * hbar * r2 * r2 / (4.0 * m * m)
        }),
    );
    let density_identity = Residual::from_values(
        "density_identity",
        jets.iter().map(|(r, _, _)| r.value * r.hess[1][1] - 0.5 * r.grad[1] * r.grad[1]),
    );
    let gradient_direction = Residual::from_values(
        "density_gradient_direction",
        jets.iter().map(|(r, _, _)| r.grad[0].abs() + r.grad[2].abs()),
    );
    let report = LinearDensityReport {
        current_vs_eta: spin.j_vs_eta.clone().unwrap_or_else(|| Residual::from_values("current_vs_eta", [])),
        energy_balance,
        density_identity,
        gradient_direction,
        stationary: stationary_residual(&scene, constants)?,
        speed: speed_identity(&scene, constants)?,
        spin: spin_field(&scene, constants)?.counts,
    };
    Ok(LinearDensity {
        scene,
        eta,
        spin,
        report,
    })
}

/// Plane wave `W = √(2mE) x`, `ρ = 1`, `V = 0`.
#[derive(Debug, Clone)]
pub struct PlaneWaveFamily {
    pub grid: Grid3D,
    pub constants: Constants,
    pub representation: Representation,
}

impl SceneFamily for PlaneWaveFamily {
    fn name(&self) -> &str {
        "plane_wave"
    }

    fn scene(&self, energy: f64) -> Result<FieldScene> {
        if !(energy > 0.0) {
            return Err(Error::InvalidInput(format!("plane wave needs E > 0 (got {energy})")));
        }
        let k = (2.0 * self.constants.m * energy).sqrt();
        let scene = FieldScene::new(
            self.grid,
            energy,
            ScalarField::analytic(|_| Jet3::constant(1.0)),
            ScalarField::analytic(move |p| Jet3 {
                value: k * p[0],
                grad: [k, 0.0, 0.0],
                hess: [[0.0; 3]; 3],
            }),
            ScalarField::analytic(|_| Jet3::constant(0.0)),
        )?;
        Ok(represent(scene, self.representation))
    }
}

fn represent(scene: FieldScene, r: Representation) -> FieldScene {
    match r {
        Representation::Analytic => scene,
        Representation::Sampled => scene.sampled(),
    }
}

/// `s = x̂` family with `2ρ^{1/2} = αy + β` (constant `α, β`),
/// `W = √(2mE) x` and `V = 0`.
#[derive(Debug, Clone)]
pub struct LinearDensityFamily {
    pub grid: Grid3D,
    pub constants: Constants,
    pub alpha: f64,
    pub beta: f64,
    pub representation: Representation,
}

impl LinearDensityFamily {
    pub fn build(&self, energy: f64) -> Result<LinearDensity> {
        if !(energy > 0.0) {
            return Err(Error::InvalidInput(format!("family needs E > 0 (got {energy})")));
        }
        let k = (2.0 * self.constants.m * energy).sqrt();
        let (a, b) = (self.alpha, self.beta);
        linear_density_build(
            self.grid,
            Arc::new(move |_| Jet3::constant(a)),
            Arc::new(move |_| Jet3::constant(b)),
            Arc::new(move |p| Jet3 {
                value: k * p[0],
                grad: [k, 0.0, 0.0],
                hess: [[0.0; 3]; 3],
            }),
            energy,
            &self.constants,
        )
    }
}

impl SceneFamily for LinearDensityFamily {
    fn name(&self) -> &str {
        "linear_density"
    }

    fn scene(&self, energy: f64) -> Result<FieldScene> {
        Ok(represent(self.build(energy)?.scene, self.representation))
    }
}

/// Free one-dimensional microstate `(2, 0, 0, 1)` along `x`:
/// `ρ = (1 + 3cos²kx)/k`, `W' = 2ħk/(1 + 3cos²kx)`.
#[derive(Debug, Clone)]
pub struct InterferenceFamily {
    pub grid: Grid3D,
    pub constants: Constants,
    pub representation: Representation,
}

impl SceneFamily for InterferenceFamily {
    fn name(&self) -> &str {
        "interference"
    }

    fn scene(&self, energy: f64) -> Result<FieldScene> {
        if !(energy > 0.0) {
            return Err(Error::InvalidInput(format!("family needs E > 0 (got {energy})")));
        }
        let hbar = self.constants.hbar;
        let k = (2.0 * self.constants.m * energy).sqrt() / hbar;
        let rho = ScalarField::analytic(move |p| {
            let th = k * p[0];
            let mut hess = [[0.0; 3]; 3];
            hess[0][0] = -6.0 * k * (2.0 * th).cos();
            Jet3 {
                value: (1.0 + 3.0 * th.cos().powi(2)) / k,
                grad: [-3.0 * (2.0 * th).sin(), 0.0, 0.0],
                hess,
            }
        });
        let w = ScalarField::analytic(move |p| {
            let th = k * p[0];
            let d = 1.0 + 3.0 * th.cos().powi(2);
            let mut hess = [[0.0; 3]; 3];
            hess[0][0] = 6.0 * hbar * k * k * (2.0 * th).sin() / (d * d);
            Jet3 {
                value: hbar * ((th.tan() / 2.0).atan() + std::f64::consts::PI * (th / std::f64::consts::PI).round()),
                grad: [2.0 * hbar * k / d, 0.0, 0.0],
                hess,
            }
        });
        let scene = FieldScene::new(self.grid, energy, rho, w, ScalarField::analytic(|_| Jet3::constant(0.0)))?;
        Ok(represent(scene, self.representation))
    }
}

/// CSV with columns `x,y,z,rho,W,sx,sy,sz,Jx,Jy,Jz`.
pub fn write_scene_csv<W: Write>(mut out: W, scene: &FieldScene, spin: &SpinScene) -> std::io::Result<()> {
    let g = &scene.grid;
    let rho = scene.rho.values(g);
    let w = scene.w.values(g);
    writeln!(out, "x,y,z,rho,W,sx,sy,sz,Jx,Jy,Jz")?;
    for i in 0..g.len() {
        let p = g.point(i);
        let row = [
            p[0], p[1], p[2], rho[i], w[i], spin.s[i][0], spin.s[i][1], spin.s[i][2], spin.j[i][0], spin.j[i][1],
            spin.j[i][2],
        ];
        let cells: Vec<String> = row.iter().map(|x| fmt17(*x)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
