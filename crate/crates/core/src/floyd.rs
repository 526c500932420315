//! Floydian time, quantum mass and trajectories.
//!
//! Energy derivatives are taken with the microstate coefficients and the
//! action anchor held fixed: the basis is re-solved at `E ± δ, E ± 2δ` and
//! each slice is rebuilt from the same `(a, b, c, d, W0, q0)`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{
    five_point_first, fornberg_weights, invert_monotone, richardson_second, Antiderivative, Grid1D,
    SampledField1D, EDGE_MARGIN,
};
use crate::potentials::Potential;
use crate::qshje::{build_slice, microstate_action, solve_basis, ActionSlice, Constants, Microstate, SolveOptions};
use crate::report::{write_csv, Residual};

/// Turning-point neighbourhoods `E − U < TURNING_POINT_GAP` are excluded
/// from the `U`-form time quadrature.
pub const TURNING_POINT_GAP: f64 = 0.1;

/// Default energy increment `10⁻⁴·max(|E|, 1)`.
pub fn default_step(energy: f64) -> f64 {
    1e-4 * energy.abs().max(1.0)
}

/// `∂_E` quantities sampled at fixed microstate.
#[derive(Debug, Clone)]
pub struct EnergyDerivatives {
    pub grid: Grid1D,
    pub energy: f64,
    pub step_e: f64,
    pub constants: Constants,
    pub w_e: SampledField1D,
    pub w_ee: SampledField1D,
    pub wp_e: SampledField1D,
    pub q_e: SampledField1D,
    /// `m (1 − Q_E)`.
    pub m_q: SampledField1D,
}

/// Five slices at `E + kδ`, `k = −2..=2`, sharing one sub-step count.
#[derive(Debug, Clone)]
pub struct EnergyStencil {
    pub step_e: f64,
    pub slices: [ActionSlice; 5],
}

impl EnergyStencil {
    pub fn build(
        potential: &Potential,
        micro: &Microstate,
        energy: f64,
        step_e: f64,
        grid: &Grid1D,
        constants: &Constants,
    ) -> Result<Self> {
        if !(step_e > 0.0 && step_e.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "step_E must be positive (got {step_e})"
            )));
        }
        let center = solve_basis(potential, energy, grid, constants)?;
        let options = SolveOptions {
            substeps: Some(center.substeps),
        };
        let shifted: Vec<Result<ActionSlice>> = [-2.0, -1.0, 1.0, 2.0]
            .par_iter()
            .map(|k| build_slice(potential, energy + k * step_e, grid, micro, constants, options))
            .collect();
        let mut it = shifted.into_iter();
        let (m2, m1, p1, p2) = (
            it.next().unwrap()?,
            it.next().unwrap()?,
            it.next().unwrap()?,
            it.next().unwrap()?,
        );
        let mid = microstate_action(&center, micro, constants)?;
        Ok(EnergyStencil {
            step_e,
            slices: [m2, m1, mid, p1, p2],
        })
    }

    pub fn center(&self) -> &ActionSlice {
        &self.slices[2]
    }

    pub fn derivatives(&self) -> Result<EnergyDerivatives> {
        let c = self.center();
        let grid = c.grid;
        let h = self.step_e;
        let pick = |f: fn(&ActionSlice) -> &SampledField1D, i: usize| -> [f64; 5] {
            std::array::from_fn(|k| f(&self.slices[k]).values()[i])
        };
        let n = grid.len();
        let (mut w_e, mut w_ee, mut wp_e, mut q_e, mut m_q) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for i in 0..n {
            let w = pick(|s| &s.w, i);
            let wp = pick(|s| &s.wp, i);
            let q = pick(|s| &s.q, i);
            w_e.push(five_point_first(w[0], w[1], w[3], w[4], h));
            w_ee.push(richardson_second(w[0], w[1], w[2], w[3], w[4], h));
            wp_e.push(five_point_first(wp[0], wp[1], wp[3], wp[4], h));
            let qe = five_point_first(q[0], q[1], q[3], q[4], h);
            q_e.push(qe);
            m_q.push(c.constants.m * (1.0 - qe));
        }
        Ok(EnergyDerivatives {
            grid,
            energy: c.energy,
            step_e: h,
            constants: c.constants,
            w_e: SampledField1D::new(grid, w_e)?,
            w_ee: SampledField1D::new(grid, w_ee)?,
            wp_e: SampledField1D::new(grid, wp_e)?,
            q_e: SampledField1D::new(grid, q_e)?,
            m_q: SampledField1D::new(grid, m_q)?,
        })
    }
}

pub fn energy_derivatives(
    potential: &Potential,
    micro: &Microstate,
    energy: f64,
    step_e: f64,
    grid: &Grid1D,
    constants: &Constants,
) -> Result<EnergyDerivatives> {
    EnergyStencil::build(potential, micro, energy, step_e, grid, constants)?.derivatives()
}

/// Samples of one microstate trajectory parametrised by position.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub energy: f64,
    pub q0: f64,
    pub q: Vec<f64>,
    /// `t − t0 = ∂_E ∫_{q0}^q W' dx`.
    pub t: Vec<f64>,
    /// `t − t0` from `√(m/2) ∫ (1 − Q_E)/√(E − U) dx`; `None` where the
    /// integrand is unavailable (turning-point neighbourhoods and beyond).
    pub t_u_form: Vec<Option<f64>>,
    /// `τ − τ0 = m ∫_{q0}^q dx/W'`.
    pub tau: Vec<f64>,
    /// `dq/dt = W'/(m (1 − Q_E))`.
    pub qdot: Vec<f64>,
    /// `dτ/dt = 1/(1 − Q_E)`.
    pub dtau_dt: Vec<f64>,
}

fn check_matching(slice: &ActionSlice, deriv: &EnergyDerivatives) -> Result<()> {
    let scale = slice.energy.abs().max(1.0);
    if slice.grid != deriv.grid || (slice.energy - deriv.energy).abs() > 1e-12 * scale {
        return Err(Error::InvalidInput(
            "slice and energy derivatives differ in grid or energy".into(),
        ));
    }
    Ok(())
}

pub fn floyd_time(slice: &ActionSlice, deriv: &EnergyDerivatives, q0: f64) -> Result<Trajectory> {
    check_matching(slice, deriv)?;
    let grid = slice.grid;
    let n = grid.len();
    let m = slice.constants.m;
    let wp = slice.wp.values();
    if let Some(i) = wp.iter().position(|&x| x == 0.0) {
        return Err(Error::Singular {
            what: "tau integrand 1/W'",
            node: i,
            q: grid.node(i),
        });
    }
    let w_e0 = deriv.w_e.interpolate(q0)?;
    let t: Vec<f64> = deriv.w_e.values().iter().map(|x| x - w_e0).collect();

    let inv = SampledField1D::new(grid, wp.iter().map(|x| m / x).collect())?;
    let tau = Antiderivative::new(&inv).anchored(q0)?.into_values();

    let qe = deriv.q_e.values();
    let qdot = (0..n).map(|i| wp[i] / (m * (1.0 - qe[i]))).collect();
    let dtau_dt = qe.iter().map(|x| 1.0 / (1.0 - x)).collect();
    let t_u_form = u_form_time(slice, deriv, q0)?;

    Ok(Trajectory {
        energy: slice.energy,
        q0,
        q: grid.nodes(),
        t,
        t_u_form,
        tau,
        qdot,
        dtau_dt,
    })
}

fn u_form_time(slice: &ActionSlice, deriv: &EnergyDerivatives, q0: f64) -> Result<Vec<Option<f64>>> {
    let grid = slice.grid;
    let n = grid.len();
    let m = slice.constants.m;
    let gap: Vec<f64> = (0..n)
        .map(|i| slice.energy - slice.potential.values()[i] - slice.q.values()[i])
        .collect();
    let ok: Vec<bool> = gap.iter().map(|&g| g >= TURNING_POINT_GAP).collect();
    let mut out = vec![None; n];

    // contiguous available run containing both nodes around q0
    let h = grid.spacing();
    let s = (q0 - grid.q_min()) / h;
    let (a, b) = (s.floor().max(0.0) as usize, (s.ceil() as usize).min(n - 1));
    if !(ok[a] && ok[b]) {
        return Ok(out);
    }
    let mut lo = a;
    while lo > 0 && ok[lo - 1] {
        lo -= 1;
    }
    let mut hi = b;
    while hi + 1 < n && ok[hi + 1] {
        hi += 1;
    }
    if hi - lo + 1 < crate::numerics::MIN_NODES {
        return Ok(out);
    }
    let sub = grid.subgrid(lo, hi)?;
    let integrand: Vec<f64> = (lo..=hi)
        .map(|i| {
            let sign = slice.wp.values()[i].signum();
            sign * (m / 2.0).sqrt() * (1.0 - deriv.q_e.values()[i]) / gap[i].sqrt()
        })
        .collect();
    let field = SampledField1D::new(sub, integrand)?;
    let t = Antiderivative::new(&field).anchored(q0)?;
    for (k, v) in t.values().iter().enumerate() {
        out[lo + k] = Some(*v);
    }
    Ok(out)
}

impl Trajectory {
    /// `|t − t_U|` over nodes where the `U`-form is available.
    pub fn time_formula_agreement(&self) -> Residual {
        let values = self
            .t
            .iter()
            .zip(&self.t_u_form)
            .filter_map(|(t, u)| u.map(|u| t - u));
        Residual::from_values("time_formula_agreement", values).with_param("E", self.energy)
    }

    /// Relative residuals of `m (1 − Q_E) q̇ = W'` and `(dτ/dt)(1 − Q_E) = 1`.
    pub fn chain_residuals(&self, slice: &ActionSlice, deriv: &EnergyDerivatives) -> (Residual, Residual) {
        let m = slice.constants.m;
        let qe = deriv.q_e.values();
        let wp = slice.wp.values();
        let eq4 = (0..self.q.len()).map(|i| {
            let lhs = m * (1.0 - qe[i]) * self.qdot[i];
            (lhs - wp[i]) / wp[i].abs().max(f64::MIN_POSITIVE)
        });
        let tau = (0..self.q.len()).map(|i| self.dtau_dt[i] * (1.0 - qe[i]) - 1.0);
        (
            Residual::from_values("quantum_mass_velocity", eq4),
            Residual::from_values("dtau_dt_chain", tau),
        )
    }

    /// Longest run of strictly monotone `t` containing the node nearest `q0`.
    pub fn monotone_window(&self) -> Trajectory {
        let n = self.q.len();
        let k = self
            .q
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - self.q0).abs().total_cmp(&(b.1 - self.q0).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let up = |i: usize| self.t[i + 1] > self.t[i];
        let dir = if k + 1 < n { up(k) } else { up(k - 1) };
        let same = |i: usize| up(i) == dir && self.t[i + 1] != self.t[i];
        let mut lo = k;
        while lo > 0 && same(lo - 1) {
            lo -= 1;
        }
        let mut hi = k;
        while hi + 1 < n && same(hi) {
            hi += 1;
        }
        let r = lo..hi + 1;
        Trajectory {
            energy: self.energy,
            q0: self.q0,
            q: self.q[r.clone()].to_vec(),
            t: self.t[r.clone()].to_vec(),
            t_u_form: self.t_u_form[r.clone()].to_vec(),
            tau: self.tau[r.clone()].to_vec(),
            qdot: self.qdot[r.clone()].to_vec(),
            dtau_dt: self.dtau_dt[r].to_vec(),
        }
    }

    /// CSV with columns `q,t,tau,qdot,dtau_dt`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows = (0..self.q.len()).map(|i| vec![self.q[i], self.t[i], self.tau[i], self.qdot[i], self.dtau_dt[i]]);
        write_csv(out, &["q", "t", "tau", "qdot", "dtau_dt"], rows)
    }
}

/// Position at time `t` by inverting the sampled `t(q)` table.
pub fn trajectory_at(traj: &Trajectory, t: f64) -> Result<f64> {
    if traj.t.first() > traj.t.last() {
        let rev_q: Vec<f64> = traj.q.iter().rev().map(|x| -x).collect();
        let rev_t: Vec<f64> = traj.t.iter().rev().copied().collect();
        // t decreasing in q: invert on the mirrored axis
        return invert_monotone(&rev_q, &rev_t, t).map(|x| -x);
    }
    invert_monotone(&traj.q, &traj.t, t)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub residual: Residual,
    pub relative: f64,
}

/// `W' W'_E − m (1 − Q_E)` over interior nodes.
pub fn identity_wp_wpe(slice: &ActionSlice, deriv: &EnergyDerivatives) -> Result<IdentityReport> {
    check_matching(slice, deriv)?;
    let m = slice.constants.m;
    let mut diffs = Vec::new();
    let mut scale: f64 = 0.0;
    for i in slice.grid.interior(EDGE_MARGIN) {
        let lhs = slice.wp.values()[i] * deriv.wp_e.values()[i];
        let rhs = m * (1.0 - deriv.q_e.values()[i]);
        diffs.push(lhs - rhs);
        scale = scale.max(lhs.abs()).max(rhs.abs());
    }
    let residual = Residual::from_values("wp_wpe_identity", diffs)
        .with_param("E", slice.energy)
        .with_param("step_E", deriv.step_e);
    let relative = residual.max / scale.max(f64::MIN_POSITIVE);
    Ok(IdentityReport {
        residual: residual.with_param("relative", relative),
        relative,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LegendreReport {
    pub q: f64,
    pub energies: Vec<f64>,
    pub w: Vec<f64>,
    /// `t = ∂_E W` at fixed `q`.
    pub t: Vec<f64>,
    /// `𝒮 = E W_E − W`.
    pub s: Vec<f64>,
    /// `d𝒮/dt` along the energy family.
    pub ds_dt: Vec<f64>,
    /// `W − (E t − 𝒮)`.
    pub roundtrip: Residual,
    /// `d𝒮/dt − E`.
    pub conjugate: Residual,
}

pub fn legendre_check(
    potential: &Potential,
    micro: &Microstate,
    energies: &[f64],
    q: f64,
    grid: &Grid1D,
    constants: &Constants,
) -> Result<LegendreReport> {
    if energies.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "Legendre check needs at least 5 energies (got {})",
            energies.len()
        )));
    }
    if energies.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("energies must be strictly increasing".into()));
    }
    let rows: Vec<Result<(f64, f64)>> = energies
        .par_iter()
        .map(|&e| {
            let stencil = EnergyStencil::build(potential, micro, e, default_step(e), grid, constants)?;
            let w: [f64; 5] = {
                let mut out = [0.0; 5];
                for (k, s) in stencil.slices.iter().enumerate() {
                    out[k] = s.w.interpolate(q)?;
                }
                out
            };
            Ok((w[2], five_point_first(w[0], w[1], w[3], w[4], stencil.step_e)))
        })
        .collect();
    let mut w = Vec::new();
    let mut t = Vec::new();
    for r in rows {
        let (a, b) = r?;
        w.push(a);
        t.push(b);
    }
    let s: Vec<f64> = (0..energies.len()).map(|j| energies[j] * t[j] - w[j]).collect();
    let ds_dt: Vec<f64> = (0..energies.len())
        .map(|j| {
            let weights = &fornberg_weights(energies[j], energies, 1)[1];
            let ds: f64 = weights.iter().zip(&s).map(|(a, b)| a * b).sum();
            let dt: f64 = weights.iter().zip(&t).map(|(a, b)| a * b).sum();
            ds / dt
        })
        .collect();
    let roundtrip = Residual::from_values(
        "legendre_roundtrip",
        (0..energies.len()).map(|j| w[j] - (energies[j] * t[j] - s[j])),
    )
    .with_param("q", q);
    let conjugate = Residual::from_values(
        "legendre_conjugate_energy",
        (0..energies.len()).map(|j| ds_dt[j] - energies[j]),
    )
    .with_param("q", q);
    Ok(LegendreReport {
        q,
        energies: energies.to_vec(),
        w,
        t,
        s,
        ds_dt,
        roundtrip,
        conjugate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Feasibility {
    /// `(1 − Q_E)/W_EE > 0`: no positive infinitesimal `δE` is compatible.
    RequiresNonpositiveRatio,
    /// `(1 − Q_E)/W_EE ≤ 0`.
    AdmitsPositiveDeltaE,
}

#[derive(Debug, Clone, Serialize)]
pub struct UncertaintyReport {
    pub q: f64,
    pub one_minus_qe: f64,
    pub w_ee: f64,
    /// `(1 − Q_E) ħ / (2 W_EE)`, the lower bound on `(δE)²`.
    pub threshold: f64,
    pub ratio_sign: f64,
    pub feasibility: Feasibility,
}

/// Diagnostic only; nothing is imposed on the solver.
pub fn uncertainty_report(deriv: &EnergyDerivatives, q: f64, constants: &Constants) -> Result<UncertaintyReport> {
    let q_e = deriv.q_e.interpolate(q)?;
    let w_ee = deriv.w_ee.interpolate(q)?;
    Ok(classify_uncertainty(q, 1.0 - q_e, w_ee, constants.hbar)?)
}

pub fn classify_uncertainty(q: f64, one_minus_qe: f64, w_ee: f64, hbar: f64) -> Result<UncertaintyReport> {
    if w_ee == 0.0 || !w_ee.is_finite() {
        return Err(Error::DegenerateCurvature { w_ee, q });
    }
    let ratio = one_minus_qe / w_ee;
    let ratio_sign = if ratio > 0.0 {
        1.0
    } else if ratio < 0.0 {
        -1.0
    } else {
        0.0
    };
    let feasibility = if ratio_sign > 0.0 {
        Feasibility::RequiresNonpositiveRatio
    } else {
        Feasibility::AdmitsPositiveDeltaE
    };
    Ok(UncertaintyReport {
        q,
        one_minus_qe,
        w_ee,
        threshold: one_minus_qe * hbar / (2.0 * w_ee),
        ratio_sign,
        feasibility,
    })
}

/// Gaussian packet `exp(−(x − center)²/(4 width²) + i momentum x/ħ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Packet {
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EhrenfestReport {
    pub steps: usize,
    pub dt: f64,
    /// `|d⟨Q⟩/dt − (1/ħ)⟨i[H, Q]⟩|` with the time derivative from central
    /// differences of successive steps.
    pub commutator: Residual,
    /// `|d⟨Q⟩/dt − ⟨p⟩/m|` with the central-difference momentum operator.
    pub momentum: Residual,
    /// `min_t [ΔE ΔQ − (ħ/2)|d⟨Q⟩/dt|]`.
    pub min_margin: f64,
    /// Same margin using the commutator expectation.
    pub min_margin_commutator: f64,
    pub max_norm_drift: f64,
    pub max_energy_drift: f64,
}

/// Tridiagonal `H` on a Dirichlet box and Crank–Nicolson steps.
struct BoxHamiltonian {
    x: Vec<f64>,
    h: f64,
    diag: Vec<f64>,
    off: f64,
}

impl BoxHamiltonian {
    fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let n = psi.len();
        (0..n)
            .map(|j| {
                let mut acc = self.diag[j] * psi[j];
                if j > 0 {
                    acc += self.off * psi[j - 1];
                }
                if j + 1 < n {
                    acc += self.off * psi[j + 1];
                }
                acc
            })
            .collect()
    }

    fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>() * self.h
    }
}

/// `(1 + iHdt/2ħ)ψ' = (1 − iHdt/2ħ)ψ` via a pre-factorised Thomas solve.
struct CrankNicolson {
    alpha: Complex64,
    lower: Vec<Complex64>,
    inv_pivot: Vec<Complex64>,
}

impl CrankNicolson {
    fn new(ham: &BoxHamiltonian, dt: f64, hbar: f64) -> Self {
        let alpha = Complex64::new(0.0, dt / (2.0 * hbar));
        let n = ham.diag.len();
        let off = alpha * ham.off;
        let mut inv_pivot = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n);
        let mut prev = Complex64::new(1.0, 0.0) + alpha * ham.diag[0];
        inv_pivot.push(prev.inv());
        lower.push(Complex64::new(0.0, 0.0));
        for j in 1..n {
            let l = off / prev;
            prev = Complex64::new(1.0, 0.0) + alpha * ham.diag[j] - l * off;
            lower.push(l);
            inv_pivot.push(prev.inv());
        }
        CrankNicolson {
            alpha,
            lower,
            inv_pivot,
        }
    }

    fn step(&self, ham: &BoxHamiltonian, psi: &[Complex64]) -> Vec<Complex64> {
        let hpsi = ham.apply(psi);
        let n = psi.len();
        let mut y: Vec<Complex64> = (0..n).map(|j| psi[j] - self.alpha * hpsi[j]).collect();
        for j in 1..n {
            let prev = y[j - 1];
            y[j] -= self.lower[j] * prev;
        }
        let off = self.alpha * ham.off;
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        x[n - 1] = y[n - 1] * self.inv_pivot[n - 1];
        for j in (0..n - 1).rev() {
            x[j] = (y[j] - off * x[j + 1]) * self.inv_pivot[j];
        }
        x
    }
}

struct Moments {
    mean_q: f64,
    delta_q: f64,
    delta_e: f64,
    energy: f64,
    norm: f64,
    commutator_rate: f64,
    momentum: f64,
}

fn moments(ham: &BoxHamiltonian, psi: &[Complex64], constants: &Constants) -> Moments {
    let hpsi = ham.apply(psi);
    let norm = ham.inner(psi, psi).re;
    let energy = ham.inner(psi, &hpsi).re / norm;
    let shifted: Vec<Complex64> = hpsi.iter().zip(psi).map(|(a, b)| a - energy * b).collect();
    let delta_e = (ham.inner(&shifted, &shifted).re / norm).sqrt();
    let qpsi: Vec<Complex64> = psi.iter().zip(&ham.x).map(|(p, x)| p * x).collect();
    let mean_q = ham.inner(psi, &qpsi).re / norm;
    let q2 = ham.inner(&qpsi, &qpsi).re / norm;
    let delta_q = (q2 - mean_q * mean_q).max(0.0).sqrt();
    // ⟨HQ − QH⟩ = 2i Im⟨Hψ|Qψ⟩
    let commutator_rate = -2.0 * ham.inner(&hpsi, &qpsi).im / (constants.hbar * norm);
    let n = psi.len();
    let zero = Complex64::new(0.0, 0.0);
    let p: Complex64 = (0..n)
        .map(|j| {
            let up = if j + 1 < n { psi[j + 1] } else { zero };
            let dn = if j > 0 { psi[j - 1] } else { zero };
            psi[j].conj() * (up - dn)
        })
        .sum::<Complex64>()
        * Complex64::new(0.0, -constants.hbar / 2.0);
    Moments {
        mean_q,
        delta_q,
        delta_e,
        energy,
        norm,
        commutator_rate,
        momentum: p.re / norm,
    }
}

/// Evolves a Gaussian packet on a Dirichlet box and checks
/// `d⟨Q⟩/dt = (1/ħ)⟨i[H, Q]⟩` and `ΔE ΔQ ≥ (ħ/2)|d⟨Q⟩/dt|` at every step.
pub fn ehrenfest_check(
    potential: &Potential,
    constants: &Constants,
    bounds: (f64, f64),
    n_grid: usize,
    packet: Packet,
    t_span: f64,
    dt: f64,
) -> Result<EhrenfestReport> {
    if n_grid < 200 {
        return Err(Error::InvalidInput(format!(
            "Ehrenfest box needs at least 200 nodes (got {n_grid})"
        )));
    }
    if !(dt > 0.0 && t_span > 0.0 && dt.is_finite() && t_span.is_finite()) {
        return Err(Error::InvalidInput("dt and t_span must be positive".into()));
    }
    if !(packet.width > 0.0) {
        return Err(Error::InvalidInput("packet width must be positive".into()));
    }
    let (x_min, x_max) = bounds;
    if !(x_max > x_min) {
        return Err(Error::InvalidInput("box needs x_max > x_min".into()));
    }
    let steps = (t_span / dt).round() as usize;
    if steps < 2 {
        return Err(Error::InvalidInput("t_span must cover at least two steps".into()));
    }
    let h = (x_max - x_min) / (n_grid + 1) as f64;
    let x: Vec<f64> = (1..=n_grid).map(|j| x_min + j as f64 * h).collect();
    let kin = constants.hbar * constants.hbar / (2.0 * constants.m * h * h);
    let diag = x
        .iter()
        .map(|&xj| Ok(2.0 * kin + potential.evaluate(xj)?))
        .collect::<Result<Vec<f64>>>()?;
    let ham = BoxHamiltonian { x, h, diag, off: -kin };

    let mut psi: Vec<Complex64> = ham
        .x
        .iter()
        .map(|&xj| {
            let g = -(xj - packet.center).powi(2) / (4.0 * packet.width * packet.width);
            Complex64::from_polar(g.exp(), packet.momentum * xj / constants.hbar)
        })
        .collect();
    let norm0 = ham.inner(&psi, &psi).re.sqrt();
    psi.iter_mut().for_each(|p| *p /= norm0);

    let cn = CrankNicolson::new(&ham, dt, constants.hbar);
    let mut history = Vec::with_capacity(steps + 1);
    history.push(moments(&ham, &psi, constants));
    for _ in 0..steps {
        psi = cn.step(&ham, &psi);
        let mo = moments(&ham, &psi, constants);
        let reach = 6.0 * mo.delta_q;
        if mo.mean_q - reach < x_min || mo.mean_q + reach > x_max {
            return Err(Error::InvalidInput(format!(
                "packet came within 6 widths of the box wall (⟨Q⟩ = {}, ΔQ = {})",
                mo.mean_q, mo.delta_q
            )));
        }
        history.push(mo);
    }

    let e0 = history[0].energy;
    let max_norm_drift = history.iter().map(|m| (m.norm - 1.0).abs()).fold(0.0, f64::max);
    let max_energy_drift = history
        .iter()
        .map(|m| (m.energy - e0).abs() / e0.abs().max(1.0))
        .fold(0.0, f64::max);
    if max_norm_drift > 1e-6 {
        return Err(Error::Integrator(format!("norm drift {max_norm_drift:e} exceeds 1e-6")));
    }
    if max_energy_drift > 1e-8 {
        return Err(Error::Integrator(format!("energy drift {max_energy_drift:e} exceeds 1e-8")));
    }

    let mut comm = Vec::with_capacity(steps);
    let mut mom = Vec::with_capacity(steps);
    let mut min_margin = f64::INFINITY;
    let mut min_margin_commutator = f64::INFINITY;
    for k in 1..steps {
        let rate = (history[k + 1].mean_q - history[k - 1].mean_q) / (2.0 * dt);
        let mo = &history[k];
        comm.push(rate - mo.commutator_rate);
        mom.push(rate - mo.momentum / constants.m);
        let product = mo.delta_e * mo.delta_q;
        min_margin = min_margin.min(product - 0.5 * constants.hbar * rate.abs());
        min_margin_commutator = min_margin_commutator.min(product - 0.5 * constants.hbar * mo.commutator_rate.abs());
    }
    Ok(EhrenfestReport {
        steps,
        dt,
        commutator: Residual::from_values("ehrenfest_commutator", comm).with_param("dt", dt),
        momentum: Residual::from_values("ehrenfest_momentum", mom).with_param("dt", dt),
        min_margin,
        min_margin_commutator,
        max_norm_drift,
        max_energy_drift,
    })
}
