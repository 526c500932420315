//! Quantum stationary Hamilton–Jacobi equation.
//!
//! A real basis `(u, v)` of the stationary Schrödinger equation is
//! integrated from the grid midpoint. A microstate `(a, b, c, d, W0, q0)`
//! mixes it into `p = a u + b v`, `r = c u + d v`; then `ρ = p² + r²`,
//! `W' = ħ (ad − bc) w / ρ` with `w` the basis Wronskian, and the quantum
//! potential is `Q = (ħ²/4m){W, q}`. The state function
//! `𝒲 = −(ħ²/4m){exp(2iW/ħ), q}` is evaluated from the same closed-form
//! derivatives, so that `(W')²/2m + 𝒲 + Q = 0` and `𝒲 = V − E` can both be
//! checked node by node.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{diff_central, fornberg_weights, Antiderivative, Grid1D, SampledField1D, EDGE_MARGIN};
use crate::potentials::Potential;
use crate::report::{write_csv, Residual};

/// Guard on basis amplitudes before the integration is declared divergent.
pub const OVERFLOW_GUARD: f64 = 1e150;

/// Target `κ·δ` per RK4 sub-step when choosing sub-steps automatically.
const PHASE_PER_STEP: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub m: f64,
    pub hbar: f64,
}

impl Constants {
    pub fn new(m: f64, hbar: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0 && hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidInput(format!(
                "m and hbar must be positive and finite (got m = {m}, hbar = {hbar})"
            )));
        }
        Ok(Constants { m, hbar })
    }

    /// `m = ħ = 1`.
    pub fn natural() -> Self {
        Constants { m: 1.0, hbar: 1.0 }
    }

    /// `2m/ħ²`.
    fn kinetic_factor(&self) -> f64 {
        2.0 * self.m / (self.hbar * self.hbar)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    /// RK4 sub-steps per grid cell; chosen from the largest local wave
    /// number when `None`.
    pub substeps: Option<usize>,
}

/// Real solution pair of `−(ħ²/2m)ψ'' + Vψ = Eψ` with unit Wronskian.
#[derive(Debug, Clone)]
pub struct BasisPair {
    pub grid: Grid1D,
    pub energy: f64,
    pub anchor: f64,
    pub substeps: usize,
    pub u: SampledField1D,
    pub v: SampledField1D,
    pub du: SampledField1D,
    pub dv: SampledField1D,
    /// `V` sampled at the nodes.
    pub potential: SampledField1D,
    /// Discontinuities of `V`.
    pub breakpoints: Vec<f64>,
    pub wronskian: f64,
}

#[derive(Clone, Copy)]
struct State([f64; 4]);

impl State {
    fn axpy(&self, h: f64, k: &State) -> State {
        State(std::array::from_fn(|i| self.0[i] + h * k.0[i]))
    }
}

fn rhs(k2: f64, y: &State) -> State {
    State([y.0[1], k2 * y.0[0], y.0[3], k2 * y.0[2]])
}

/// Integrates `y` across `[a, b]` with RK4, splitting at discontinuities of
/// the potential so that no stage straddles one.
fn advance(
    y: State,
    a: f64,
    b: f64,
    steps_per_cell: usize,
    h_cell: f64,
    breaks: &[f64],
    k2: &dyn Fn(f64) -> Result<f64>,
) -> Result<State> {
    let (lo, hi) = (a.min(b), a.max(b));
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
    if b < a {
        cuts.reverse();
    }
    let mut pieces = Vec::with_capacity(cuts.len() + 2);
    pieces.push(a);
    pieces.extend(cuts);
    pieces.push(b);

    let mut y = y;
    for w in pieces.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let len = x1 - x0;
        let nsteps = ((steps_per_cell as f64) * len.abs() / h_cell).ceil().max(1.0) as usize;
        let dx = len / nsteps as f64;
        let (plo, phi) = (x0.min(x1), x0.max(x1));
        let nudge = 1e-13 * (phi - plo);
        // stage positions stay strictly inside the piece
        let eval = |x: f64| k2(x.clamp(plo + nudge, phi - nudge));
        for s in 0..nsteps {
            let x = x0 + s as f64 * dx;
            let k1 = rhs(eval(x)?, &y);
            let k2m = eval(x + 0.5 * dx)?;
            let s2 = rhs(k2m, &y.axpy(0.5 * dx, &k1));
            let s3 = rhs(k2m, &y.axpy(0.5 * dx, &s2));
            let s4 = rhs(eval(x + dx)?, &y.axpy(dx, &s3));
            y = State(std::array::from_fn(|i| {
                y.0[i] + dx / 6.0 * (k1.0[i] + 2.0 * s2.0[i] + 2.0 * s3.0[i] + s4.0[i])
            }));
        }
    }
    Ok(y)
}

/// Solves for the basis pair with automatically chosen sub-steps.
pub fn solve_basis(potential: &Potential, energy: f64, grid: &Grid1D, constants: &Constants) -> Result<BasisPair> {
    solve_basis_with(potential, energy, grid, constants, SolveOptions::default())
}

pub fn solve_basis_with(
    potential: &Potential,
    energy: f64,
    grid: &Grid1D,
    constants: &Constants,
    options: SolveOptions,
) -> Result<BasisPair> {
    if !energy.is_finite() {
        return Err(Error::InvalidInput(format!("energy must be finite (got {energy})")));
    }
    let n = grid.len();
    let h = grid.spacing();
    let nodes = grid.nodes();
    let vs: Vec<f64> = nodes
        .iter()
        .map(|&q| potential.evaluate(q))
        .collect::<Result<_>>()?;
    let factor = constants.kinetic_factor();
    let substeps = match options.substeps {
        Some(0) => return Err(Error::InvalidInput("substeps must be positive".into())),
        Some(s) => s,
        None => auto_substeps(&vs, energy, factor, h),
    };

    let mid = (n - 1) / 2;
    let anchor = nodes[mid];
    // unit-Wronskian basis scaled by the local wave number at the anchor
    let kappa0 = {
        let k = (factor * (energy - vs[mid]).abs()).sqrt();
        if k.is_finite() && k > 1e-12 {
            k
        } else {
            1.0
        }
    };
    let breaks = potential.breakpoints();
    let k2 = |q: f64| -> Result<f64> { Ok(factor * (potential.evaluate(q)? - energy)) };

    let mut states = vec![State([0.0; 4]); n];
    states[mid] = State([kappa0.powf(-0.5), 0.0, 0.0, kappa0.sqrt()]);
    let guard = |y: &State, q: f64| -> Result<()> {
        if y.0.iter().any(|x| !x.is_finite() || x.abs() > OVERFLOW_GUARD) {
            Err(Error::Divergence {
                q,
                guard: OVERFLOW_GUARD,
            })
        } else {
            Ok(())
        }
    };
    for i in mid + 1..n {
        let y = advance(states[i - 1], nodes[i - 1], nodes[i], substeps, h, &breaks, &k2)?;
        guard(&y, nodes[i])?;
        states[i] = y;
    }
    for i in (0..mid).rev() {
        let y = advance(states[i + 1], nodes[i + 1], nodes[i], substeps, h, &breaks, &k2)?;
        guard(&y, nodes[i])?;
        states[i] = y;
    }

    let column = |k: usize| SampledField1D::new(*grid, states.iter().map(|s| s.0[k]).collect());
    Ok(BasisPair {
        grid: *grid,
        energy,
        anchor,
        substeps,
        u: column(0)?,
        du: column(1)?,
        v: column(2)?,
        dv: column(3)?,
        potential: SampledField1D::new(*grid, vs)?,
        breakpoints: breaks,
        wronskian: 1.0,
    })
}

fn auto_substeps(vs: &[f64], energy: f64, factor: f64, h: f64) -> usize {
    let kappa_max = vs
        .iter()
        .map(|v| (factor * (v - energy).abs()).sqrt())
        .fold(0.0, f64::max);
    ((h * kappa_max / PHASE_PER_STEP).ceil() as usize).clamp(1, 4000)
}

impl BasisPair {
    /// Max over nodes of `|w(q) − w| / max(1, |u v'| + |u' v|)`.
    pub fn wronskian_drift(&self) -> f64 {
        let (u, v, du, dv) = (
            self.u.values(),
            self.v.values(),
            self.du.values(),
            self.dv.values(),
        );
        (0..u.len())
            .map(|i| {
                let w = u[i] * dv[i] - du[i] * v[i];
                let scale = (u[i] * dv[i]).abs() + (du[i] * v[i]).abs();
                (w - self.wronskian).abs() / scale.max(1.0)
            })
            .fold(0.0, f64::max)
    }

    /// Finite-difference residual of the Schrödinger equation for `u` and
    /// `v`, in units of `max(1, |V − E|)·√(u² + v²)`, over nodes away from
    /// the edges and from discontinuities of `V`.
    pub fn schrodinger_residual(&self, constants: &Constants) -> Result<Residual> {
        let kin = constants.hbar * constants.hbar / (2.0 * constants.m);
        let mask = fd_mask(&self.grid, &self.breakpoints);
        let (u, v, vv) = (self.u.values(), self.v.values(), self.potential.values());
        // 7-point second derivative keeps the measurement below the solver error
        let offsets = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
        let w = &fornberg_weights(0.0, &offsets, 2)[2];
        let h2 = self.grid.spacing().powi(2);
        let dd = |f: &[f64], i: usize| -> f64 { (0..7).map(|k| w[k] * f[i + k - 3]).sum::<f64>() / h2 };
        let values = (0..u.len()).filter(|&i| mask[i]).map(|i| {
            let de = vv[i] - self.energy;
            let ru = -kin * dd(u, i) + de * u[i];
            let rv = -kin * dd(v, i) + de * v[i];
            let scale = de.abs().max(1.0) * (u[i] * u[i] + v[i] * v[i]).sqrt();
            ru.abs().max(rv.abs()) / scale
        });
        Ok(Residual::from_values("schrodinger_residual", values).with_param("E", self.energy))
    }
}

/// Nodes usable for finite-difference checks: away from the grid edges and
/// more than four spacings from any discontinuity of the potential.
pub fn fd_mask(grid: &Grid1D, breakpoints: &[f64]) -> Vec<bool> {
    let h = grid.spacing();
    let interior = grid.interior(EDGE_MARGIN);
    (0..grid.len())
        .map(|i| {
            let q = grid.node(i);
            interior.contains(&i) && breakpoints.iter().all(|b| (q - b).abs() > 4.0 * h)
        })
        .collect()
}

/// Mixing coefficients of a microstate plus the action anchor `W(q0) = W0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Microstate {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub w0: f64,
    pub q0: f64,
}

impl Microstate {
    pub fn new(a: f64, b: f64, c: f64, d: f64, w0: f64, q0: f64) -> Result<Self> {
        let m = Microstate { a, b, c, d, w0, q0 };
        m.validate()?;
        Ok(m)
    }

    /// `(1, 0, 0, 1)` anchored at `W(0) = 0`.
    pub fn identity() -> Self {
        Microstate {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 1.0,
            w0: 0.0,
            q0: 0.0,
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.a, self.b, self.c, self.d, self.w0, self.q0];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("microstate entries must be finite".into()));
        }
        let norm2 = self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d;
        let det = self.det();
        if det == 0.0 || det.abs() <= 1e-14 * norm2 {
            return Err(Error::DegenerateMicrostate { det });
        }
        Ok(())
    }
}

/// Applies the Möbius map `x ↦ (A x + B)/(C x + D)` to the ratio `r/p`.
///
/// Composition follows the matrix product: applying `M1` then `M2` equals
/// applying `M2·M1`.
pub fn mobius_apply(micro: &Microstate, a: f64, b: f64, c: f64, d: f64) -> Result<Microstate> {
    let det = a * d - b * c;
    if !(det.is_finite() && det != 0.0) {
        return Err(Error::InvalidInput(format!(
            "Möbius map needs AD − BC ≠ 0 (got {det})"
        )));
    }
    // p' = C r + D p, r' = A r + B p
    let m = micro;
    let out = Microstate {
        a: c * m.c + d * m.a,
        b: c * m.d + d * m.b,
        c: a * m.c + b * m.a,
        d: a * m.d + b * m.b,
        w0: m.w0,
        q0: m.q0,
    };
    out.validate()?;
    Ok(out)
}

/// Reduced action of one microstate sampled at fixed energy.
#[derive(Debug, Clone)]
pub struct ActionSlice {
    pub grid: Grid1D,
    pub energy: f64,
    pub constants: Constants,
    pub microstate: Microstate,
    pub w: SampledField1D,
    pub wp: SampledField1D,
    pub wpp: SampledField1D,
    pub wppp: SampledField1D,
    pub r: SampledField1D,
    pub rho: SampledField1D,
    pub q: SampledField1D,
    pub script_w: SampledField1D,
    /// Potential used to build the slice.
    pub potential: SampledField1D,
    /// Discontinuities of the potential used to build the slice.
    pub breakpoints: Vec<f64>,
}

/// Pointwise Schwarzian `{f, q} = f'''/f' − (3/2)(f''/f')²`.
pub fn schwarzian(
    f: &SampledField1D,
    f1: &SampledField1D,
    f2: &SampledField1D,
    f3: &SampledField1D,
) -> Result<SampledField1D> {
    let grid = *f.grid();
    if [f1, f2, f3].iter().any(|g| g.grid() != &grid) {
        return Err(Error::InvalidInput("Schwarzian inputs live on different grids".into()));
    }
    let values = (0..grid.len())
        .map(|i| {
            let d1 = f1.values()[i];
            if d1 == 0.0 {
                return Err(Error::Singular {
                    what: "Schwarzian (f' = 0)",
                    node: i,
                    q: grid.node(i),
                });
            }
            let a = f2.values()[i] / d1;
            Ok(f3.values()[i] / d1 - 1.5 * a * a)
        })
        .collect::<Result<Vec<_>>>()?;
    SampledField1D::new(grid, values)
}

/// `{exp(2iW/ħ), q}` from `W', W'', W'''`, carried out in complex arithmetic
/// with every derivative divided by `f' = (2i/ħ) W' f`.
fn schwarzian_of_phase(wp: f64, wpp: f64, wppp: f64, hbar: f64) -> Complex64 {
    let ia = Complex64::new(0.0, 2.0 / hbar);
    let h2 = wpp / wp + ia * wp;
    let h3 = wppp / wp + ia * (3.0 * wpp) + ia * ia * (wp * wp);
    h3 - 1.5 * h2 * h2
}

pub fn microstate_action(basis: &BasisPair, micro: &Microstate, constants: &Constants) -> Result<ActionSlice> {
    micro.validate()?;
    let grid = basis.grid;
    if !grid.contains(micro.q0) {
        return Err(Error::OutOfRange {
            what: "microstate anchor q0",
            value: micro.q0,
            lo: grid.q_min(),
            hi: grid.q_max(),
        });
    }
    let n = grid.len();
    let factor = constants.kinetic_factor();
    let hbar = constants.hbar;
    let cw = hbar * micro.det() * basis.wronskian;
    let (u, v, du, dv, pot) = (
        basis.u.values(),
        basis.v.values(),
        basis.du.values(),
        basis.dv.values(),
        basis.potential.values(),
    );

    let mut wp = Vec::with_capacity(n);
    let mut wpp = Vec::with_capacity(n);
    let mut wppp = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n);
    for i in 0..n {
        let k2 = factor * (pot[i] - basis.energy);
        let p = micro.a * u[i] + micro.b * v[i];
        let r = micro.c * u[i] + micro.d * v[i];
        let dp = micro.a * du[i] + micro.b * dv[i];
        let dr = micro.c * du[i] + micro.d * dv[i];
        let rh = p * p + r * r;
        if !(rh > 0.0) {
            return Err(Error::Singular {
                what: "density rho",
                node: i,
                q: grid.node(i),
            });
        }
        let rh1 = 2.0 * (p * dp + r * dr);
        let rh2 = 2.0 * (dp * dp + dr * dr) + 2.0 * k2 * rh;
        wp.push(cw / rh);
        wpp.push(-cw * rh1 / (rh * rh));
        wppp.push(-cw * (rh2 / (rh * rh) - 2.0 * rh1 * rh1 / (rh * rh * rh)));
        rho.push(rh);
    }

    let wp = SampledField1D::new(grid, wp)?;
    let wpp = SampledField1D::new(grid, wpp)?;
    let wppp = SampledField1D::new(grid, wppp)?;
    let rho = SampledField1D::new(grid, rho)?;
    let w = Antiderivative::new(&wp)
        .anchored(micro.q0)?
        .map(|x| x + micro.w0)?;

    let qfac = hbar * hbar / (4.0 * constants.m);
    let q = schwarzian(&w, &wp, &wpp, &wppp)?.map(|s| qfac * s)?;
    let script_w = SampledField1D::new(
        grid,
        (0..n)
            .map(|i| {
                -qfac * schwarzian_of_phase(wp.values()[i], wpp.values()[i], wppp.values()[i], hbar).re
            })
            .collect(),
    )?;
    let r = rho.map(f64::sqrt)?;

    Ok(ActionSlice {
        grid,
        energy: basis.energy,
        constants: *constants,
        microstate: *micro,
        w,
        wp,
        wpp,
        wppp,
        r,
        rho,
        q,
        script_w,
        potential: basis.potential.clone(),
        breakpoints: basis.breakpoints.clone(),
    })
}

/// Solves the basis and builds the microstate action in one call.
pub fn build_slice(
    potential: &Potential,
    energy: f64,
    grid: &Grid1D,
    micro: &Microstate,
    constants: &Constants,
    options: SolveOptions,
) -> Result<ActionSlice> {
    let basis = solve_basis_with(potential, energy, grid, constants, options)?;
    microstate_action(&basis, micro, constants)
}

/// Max and RMS of `|𝒲(q) − (V(q) − E)|` over interior nodes.
pub fn verify_script_w(slice: &ActionSlice, potential: &Potential) -> Result<Residual> {
    let mut diffs = Vec::new();
    for i in slice.grid.interior(EDGE_MARGIN) {
        let q = slice.grid.node(i);
        let v = potential.evaluate(q)?;
        diffs.push(slice.script_w.values()[i] - (v - slice.energy));
    }
    Ok(Residual::from_values("scriptW_vs_V_minus_E", diffs).with_param("E", slice.energy))
}

impl ActionSlice {
    /// `(W')²/2m + 𝒲 + Q` per node, divided by `max(1, |(W')²/2m|, |𝒲|, |Q|)`.
    pub fn qshje_residual(&self) -> Residual {
        let m = self.constants.m;
        let values = self.grid.interior(EDGE_MARGIN).map(|i| {
            let kin = self.wp.values()[i].powi(2) / (2.0 * m);
            let sw = self.script_w.values()[i];
            let q = self.q.values()[i];
            (kin + sw + q) / 1f64.max(kin.abs()).max(sw.abs()).max(q.abs())
        });
        Residual::from_values("qshje_identity", values).with_param("E", self.energy)
    }

    /// Relative spatial drift of `ρ W'`.
    pub fn continuity_residual(&self) -> Residual {
        let c = self.rho.values()[0] * self.wp.values()[0];
        let values = (0..self.grid.len()).map(|i| (self.rho.values()[i] * self.wp.values()[i] - c) / c.abs());
        Residual::from_values("continuity_rho_wp", values).with_param("E", self.energy)
    }

    /// Schwarzian-route `Q` against `−(ħ²/2m) R''/R` with `R''` from
    /// finite differences, per node relative to `max(1, |Q|)`.
    pub fn quantum_potential_routes(&self) -> Result<Residual> {
        let rpp = diff_central(&self.r, 2)?;
        let fac = self.constants.hbar.powi(2) / (2.0 * self.constants.m);
        let mask = fd_mask(&self.grid, &self.breakpoints);
        let values = (0..self.grid.len()).filter(|&i| mask[i]).map(|i| {
            let q_bohm = -fac * rpp.values()[i] / self.r.values()[i];
            let q = self.q.values()[i];
            (q - q_bohm) / q.abs().max(1.0)
        });
        Ok(Residual::from_values("quantum_potential_routes", values).with_param("E", self.energy))
    }

    /// CSV with columns `q,W,Wp,Wpp,R,rho,Q,scriptW`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows = (0..self.grid.len()).map(|i| {
            vec![
                self.grid.node(i),
                self.w.values()[i],
                self.wp.values()[i],
                self.wpp.values()[i],
                self.r.values()[i],
                self.rho.values()[i],
                self.q.values()[i],
                self.script_w.values()[i],
            ]
        });
        write_csv(out, &["q", "W", "Wp", "Wpp", "R", "rho", "Q", "scriptW"], rows)
    }
}

/// Power of `W'` in the wavefunction prefactor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentMode {
    /// `(W')^{-1}`.
    Reciprocal,
    /// `(W')^{-1/2}`.
    Standard,
}

#[derive(Debug, Clone)]
pub struct Wavefunction {
    pub grid: Grid1D,
    pub mode: ExponentMode,
    pub psi: Vec<Complex64>,
    /// `max|−(ħ²/2m)ψ'' + 𝒲ψ| / max(max(1,|𝒲|)|ψ|)` over checkable nodes.
    pub residual: f64,
}

/// `ψ = (W')^{-s} [A e^{−iW/ħ} + B e^{iW/ħ}]` with `s = 1` (reciprocal mode) or
/// `s = 1/2` (standard mode), plus its Schrödinger residual.
pub fn wavefunction(slice: &ActionSlice, a: Complex64, b: Complex64, mode: ExponentMode) -> Result<Wavefunction> {
    let hbar = slice.constants.hbar;
    let power = match mode {
        ExponentMode::Reciprocal => -1.0,
        ExponentMode::Standard => -0.5,
    };
    let psi: Vec<Complex64> = (0..slice.grid.len())
        .map(|i| {
            let wp = slice.wp.values()[i];
            let phase = slice.w.values()[i] / hbar;
            let pre = wp.abs().powf(power) * if wp < 0.0 && mode == ExponentMode::Reciprocal { -1.0 } else { 1.0 };
            pre * (a * Complex64::from_polar(1.0, -phase) + b * Complex64::from_polar(1.0, phase))
        })
        .collect();

    let re = SampledField1D::new(slice.grid, psi.iter().map(|z| z.re).collect())?;
    let im = SampledField1D::new(slice.grid, psi.iter().map(|z| z.im).collect())?;
    let (dre, dim) = (diff_central(&re, 2)?, diff_central(&im, 2)?);
    let kin = hbar * hbar / (2.0 * slice.constants.m);
    let mask = fd_mask(&slice.grid, &slice.breakpoints);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in (0..slice.grid.len()).filter(|&i| mask[i]) {
        let sw = slice.script_w.values()[i];
        let d2 = Complex64::new(dre.values()[i], dim.values()[i]);
        let res = -kin * d2 + sw * psi[i];
        worst = worst.max(res.norm());
        scale = scale.max(sw.abs().max(1.0) * psi[i].norm());
    }
    let residual = if scale > 0.0 { worst / scale } else { 0.0 };
    Ok(Wavefunction {
        grid: slice.grid,
        mode,
        psi,
        residual,
    })
}
