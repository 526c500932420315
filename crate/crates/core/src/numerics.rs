//! Uniform-grid algebra: finite-difference stencils, quadrature, monotone
//! table inversion and derivatives with respect to a scalar parameter.
//!
//! Every derivative stencil is at least fourth-order accurate in the grid
//! spacing. Boundary nodes use one-sided stencils of matching order so that
//! a sampled field keeps its full length after differentiation.

use serde::Serialize;

use crate::error::{Error, Result};

/// Minimum number of nodes on any grid.
pub const MIN_NODES: usize = 9;

/// Number of nodes at each edge excluded from verification suites.
pub const EDGE_MARGIN: usize = 4;

/// Uniform 1-D grid `q_min, q_min + h, ..., q_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1D {
    q_min: f64,
    q_max: f64,
    n: usize,
}

impl Grid1D {
    pub fn new(q_min: f64, q_max: f64, n: usize) -> Result<Self> {
        if !q_min.is_finite() || !q_max.is_finite() {
            return Err(Error::InvalidInput("grid bounds must be finite".into()));
        }
        if q_max <= q_min {
            return Err(Error::InvalidInput(format!(
                "grid requires q_max > q_min (got {q_min}, {q_max})"
            )));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {MIN_NODES} nodes (got {n})"
            )));
        }
        Ok(Grid1D { q_min, q_max, n })
    }

    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.q_max - self.q_min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.q_max
        } else {
            self.q_min + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Nodes `margin..n-margin`.
    pub fn interior(&self, margin: usize) -> std::ops::Range<usize> {
        let m = margin.min(self.n / 2);
        m..self.n - m
    }

    pub fn contains(&self, q: f64) -> bool {
        let slack = 1e-12 * (self.q_max - self.q_min);
        q >= self.q_min - slack && q <= self.q_max + slack
    }

    pub fn nearest_index(&self, q: f64) -> usize {
        let s = ((q - self.q_min) / self.spacing()).round();
        (s.max(0.0) as usize).min(self.n - 1)
    }

    /// Cell index `i` with `q` in `[q_i, q_{i+1}]` and the local coordinate
    /// `(q - q_i)/h` in `[0, 1]`.
    fn locate(&self, q: f64) -> (usize, f64) {
        let h = self.spacing();
        let s = (q - self.q_min) / h;
        let i = (s.floor().max(0.0) as usize).min(self.n - 2);
        (i, (q - self.node(i)) / h)
    }

    /// Sub-grid spanning nodes `lo..=hi` with the same spacing.
    pub fn subgrid(&self, lo: usize, hi: usize) -> Result<Grid1D> {
        if hi >= self.n || hi < lo {
            return Err(Error::InvalidInput(format!(
                "bad sub-grid range {lo}..={hi}"
            )));
        }
        Grid1D::new(self.node(lo), self.node(hi), hi - lo + 1)
    }

    fn check_inside(&self, what: &'static str, q: f64) -> Result<f64> {
        if !q.is_finite() || !self.contains(q) {
            return Err(Error::OutOfRange {
                what,
                value: q,
                lo: self.q_min,
                hi: self.q_max,
            });
        }
        Ok(q.clamp(self.q_min, self.q_max))
    }
}

/// Real values sampled on every node of a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField1D {
    grid: Grid1D,
    values: Vec<f64>,
}

impl SampledField1D {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at node {i} (q = {})",
                grid.node(i)
            )));
        }
        Ok(SampledField1D { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().into_iter().map(f).collect();
        SampledField1D::new(grid, values)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        SampledField1D::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Cubic (4-point Lagrange) interpolation at `q`.
    pub fn interpolate(&self, q: f64) -> Result<f64> {
        let q = self.grid.check_inside("q", q)?;
        let (i, t) = self.grid.locate(q);
        let j0 = window_start(i, self.len());
        let rel: [f64; 4] = std::array::from_fn(|k| (j0 + k) as f64 - i as f64);
        let w = lagrange_basis(&rel, t);
        Ok((0..4).map(|k| w[k] * self.values[j0 + k]).sum())
    }

    /// Sub-field on nodes `lo..=hi`.
    pub fn restrict(&self, lo: usize, hi: usize) -> Result<Self> {
        let grid = self.grid.subgrid(lo, hi)?;
        SampledField1D::new(grid, self.values[lo..=hi].to_vec())
    }
}

/// Fornberg's recursion: weights `c[k][j]` of the `k`-th derivative at `z`
/// for nodes `x[j]`, `k = 0..=m`.
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    if n == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Stencil weights for one derivative order on `n` uniformly spaced nodes.
///
/// Interior nodes use the centered stencil (5 points for orders 1 and 2,
/// 7 points for order 3); the `half` nodes closest to each edge use a
/// one-sided window of `order + 4` points.
pub(crate) struct StencilSet {
    order: usize,
    half: usize,
    centered: Vec<f64>,
    // (window start relative to node, weights) for each edge node
    left: Vec<(isize, Vec<f64>)>,
    right: Vec<(isize, Vec<f64>)>,
}

impl StencilSet {
    pub(crate) fn new(n: usize, order: usize) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidInput(format!(
                "derivative order must be 1, 2 or 3 (got {order})"
            )));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidInput(format!(
                "differentiation needs at least {MIN_NODES} nodes (got {n})"
            )));
        }
        let width = if order == 3 { 7 } else { 5 };
        let half = width / 2;
        let offsets: Vec<f64> = (0..width).map(|k| k as f64 - half as f64).collect();
        let centered = fornberg_weights(0.0, &offsets, order).swap_remove(order);

        let side = order + 4;
        let mut left = Vec::with_capacity(half);
        let mut right = Vec::with_capacity(half);
        for i in 0..half {
            // left edge: window [0, side), node i
            let rel: Vec<f64> = (0..side).map(|k| k as f64 - i as f64).collect();
            left.push((-(i as isize), fornberg_weights(0.0, &rel, order).swap_remove(order)));
            // right edge: window [n-side, n), node n-1-i
            let start = -((side - 1 - i) as isize);
            let rel: Vec<f64> = (0..side).map(|k| (start + k as isize) as f64).collect();
            right.push((start, fornberg_weights(0.0, &rel, order).swap_remove(order)));
        }
        Ok(StencilSet {
            order,
            half,
            centered,
            left,
            right,
        })
    }

    pub(crate) fn apply(&self, values: &[f64], h: f64) -> Vec<f64> {
        let n = values.len();
        let scale = h.powi(self.order as i32);
        let dot = |start: isize, w: &[f64], i: usize| -> f64 {
            let base = i as isize + start;
            w.iter()
                .enumerate()
                .map(|(k, wk)| wk * values[(base + k as isize) as usize])
                .sum::<f64>()
        };
        (0..n)
            .map(|i| {
                let raw = if i < self.half {
                    let (s, w) = &self.left[i];
                    dot(*s, w, i)
                } else if i + self.half >= n {
                    let (s, w) = &self.right[n - 1 - i];
                    dot(*s, w, i)
                } else {
                    dot(-(self.half as isize), &self.centered, i)
                };
                raw / scale
            })
            .collect()
    }
}

/// Derivative of raw uniformly spaced samples.
pub(crate) fn derivative_values(values: &[f64], h: f64, order: usize) -> Result<Vec<f64>> {
    Ok(StencilSet::new(values.len(), order)?.apply(values, h))
}

/// `order`-th derivative of a sampled field (order 1, 2 or 3).
pub fn diff_central(field: &SampledField1D, order: usize) -> Result<SampledField1D> {
    let d = derivative_values(field.values(), field.grid().spacing(), order)?;
    SampledField1D::new(*field.grid(), d)
}

/// Lagrange basis values at `t` for the given nodes.
pub(crate) fn lagrange_basis<const N: usize>(nodes: &[f64; N], t: f64) -> [f64; N] {
    std::array::from_fn(|j| {
        let mut p = 1.0;
        for k in 0..N {
            if k != j {
                p *= (t - nodes[k]) / (nodes[j] - nodes[k]);
            }
        }
        p
    })
}

/// `∫_a^b L_j(s) ds` for each cubic Lagrange basis polynomial.
fn lagrange_integrals(nodes: &[f64; 4], a: f64, b: f64) -> [f64; 4] {
    std::array::from_fn(|j| {
        // expand L_j into monomial coefficients
        let mut coef = [0.0f64; 4];
        coef[0] = 1.0;
        let mut deg = 0;
        for k in 0..4 {
            if k == j {
                continue;
            }
            let d = nodes[j] - nodes[k];
            let mut next = [0.0f64; 4];
            for p in 0..=deg {
                next[p + 1] += coef[p] / d;
                next[p] -= coef[p] * nodes[k] / d;
            }
            coef = next;
            deg += 1;
        }
        coef.iter()
            .enumerate()
            .map(|(p, c)| {
                let e = (p + 1) as i32;
                c * (b.powi(e) - a.powi(e)) / e as f64
            })
            .sum()
    })
}

fn window_start(cell: usize, n: usize) -> usize {
    cell.saturating_sub(1).min(n - 4)
}

/// Cumulative quadrature table built from piecewise cubic interpolants.
///
/// Exact on cubics and fourth-order accurate for smooth integrands.
#[derive(Debug, Clone)]
pub struct Antiderivative {
    grid: Grid1D,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Antiderivative {
    pub fn new(field: &SampledField1D) -> Self {
        let grid = *field.grid();
        let n = grid.len();
        let h = grid.spacing();
        let f = field.values();
        let first = lagrange_integrals(&[0.0, 1.0, 2.0, 3.0], 0.0, 1.0);
        let inner = lagrange_integrals(&[-1.0, 0.0, 1.0, 2.0], 0.0, 1.0);
        let last = lagrange_integrals(&[-2.0, -1.0, 0.0, 1.0], 0.0, 1.0);
        let mut cumulative = Vec::with_capacity(n);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for i in 0..n - 1 {
            let j0 = window_start(i, n);
            let w = if i == 0 {
                &first
            } else if i == n - 2 {
                &last
            } else {
                &inner
            };
            acc += h * (0..4).map(|k| w[k] * f[j0 + k]).sum::<f64>();
            cumulative.push(acc);
        }
        Antiderivative {
            grid,
            values: f.to_vec(),
            cumulative,
        }
    }

    /// `∫_{q_min}^{q} f`.
    pub fn at(&self, q: f64) -> Result<f64> {
        let q = self.grid.check_inside("integration limit", q)?;
        let (i, t) = self.grid.locate(q);
        if t == 0.0 {
            return Ok(self.cumulative[i]);
        }
        let n = self.grid.len();
        let j0 = window_start(i, n);
        let rel: [f64; 4] = std::array::from_fn(|k| (j0 + k) as f64 - i as f64);
        let w = lagrange_integrals(&rel, 0.0, t);
        let part: f64 = (0..4).map(|k| w[k] * self.values[j0 + k]).sum();
        Ok(self.cumulative[i] + self.grid.spacing() * part)
    }

    /// Antiderivative sampled on the grid, zero at `anchor`.
    pub fn anchored(&self, anchor: f64) -> Result<SampledField1D> {
        let offset = self.at(anchor)?;
        SampledField1D::new(
            self.grid,
            self.cumulative.iter().map(|c| c - offset).collect(),
        )
    }
}

/// `∫_{q_lo}^{q_hi} f dq`; antisymmetric in the limits.
pub fn integrate(field: &SampledField1D, q_lo: f64, q_hi: f64) -> Result<f64> {
    let table = Antiderivative::new(field);
    let a = table.at(q_lo)?;
    let b = table.at(q_hi)?;
    Ok(b - a)
}

/// Returns `x` with `y(x) = y` for a strictly monotone table, using the
/// cubic interpolant through the four nodes around the bracketing interval.
pub fn invert_monotone(xs: &[f64], ys: &[f64], y: f64) -> Result<f64> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::InvalidInput(format!(
            "table columns differ in length ({n} vs {})",
            ys.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput("table needs at least two rows".into()));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("xs must be strictly increasing".into()));
    }
    let increasing = ys[1] > ys[0];
    let monotone = ys.windows(2).all(|w| {
        if increasing {
            w[1] > w[0]
        } else {
            w[1] < w[0]
        }
    });
    if !monotone || ys.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("ys must be strictly monotone".into()));
    }
    let (lo, hi) = if increasing {
        (ys[0], ys[n - 1])
    } else {
        (ys[n - 1], ys[0])
    };
    if !(y >= lo && y <= hi) {
        return Err(Error::OutOfRange {
            what: "y",
            value: y,
            lo,
            hi,
        });
    }
    // bracket k with y between ys[k] and ys[k+1]
    let k = {
        let pos = if increasing {
            ys.partition_point(|&v| v <= y)
        } else {
            ys.partition_point(|&v| v >= y)
        };
        pos.saturating_sub(1).min(n - 2)
    };
    if ys[k] == y {
        return Ok(xs[k]);
    }
    if ys[k + 1] == y {
        return Ok(xs[k + 1]);
    }
    if n < 4 {
        let t = (y - ys[k]) / (ys[k + 1] - ys[k]);
        return Ok(xs[k] + t * (xs[k + 1] - xs[k]));
    }
    let j0 = window_start(k, n);
    let nodes: [f64; 4] = std::array::from_fn(|i| xs[j0 + i]);
    let vals: [f64; 4] = std::array::from_fn(|i| ys[j0 + i]);
    let p = |x: f64| -> f64 {
        let w = lagrange_basis(&nodes, x);
        (0..4).map(|i| w[i] * vals[i]).sum::<f64>() - y
    };
    // the cubic matches the table at xs[k] and xs[k+1], so the bracket holds a root
    let (mut a, mut b) = (xs[k], xs[k + 1]);
    let a_positive = p(a) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = p(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == a_positive {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Fourth-order central first derivative from samples at `x±h`, `x±2h`.
pub fn five_point_first(fm2: f64, fm1: f64, fp1: f64, fp2: f64, h: f64) -> f64 {
    (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h)
}

/// Second difference at spacing `h` refined by one Richardson step with the
/// spacing-`2h` difference.
pub fn richardson_second(fm2: f64, fm1: f64, f0: f64, fp1: f64, fp2: f64, h: f64) -> f64 {
    let d_h = (fp1 - 2.0 * f0 + fm1) / (h * h);
    let d_2h = (fp2 - 2.0 * f0 + fm2) / (4.0 * h * h);
    (4.0 * d_h - d_2h) / 3.0
}

/// Derivative of a scalar function of one parameter at `x0`.
pub fn param_derivative(f: impl Fn(f64) -> f64, x0: f64, step: f64, order: usize) -> Result<f64> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidInput(format!(
            "step must be positive (got {step})"
        )));
    }
    let fm2 = f(x0 - 2.0 * step);
    let fm1 = f(x0 - step);
    let fp1 = f(x0 + step);
    let fp2 = f(x0 + 2.0 * step);
    match order {
        1 => Ok(five_point_first(fm2, fm1, fp1, fp2, step)),
        2 => Ok(richardson_second(fm2, fm1, f(x0), fp1, fp2, step)),
        _ => Err(Error::InvalidInput(format!(
            "parameter derivative order must be 1 or 2 (got {order})"
        ))),
    }
}

/// Max and root-mean-square of `|values|`.
pub fn max_rms(values: impl IntoIterator<Item = f64>) -> (f64, f64, usize) {
    let mut max: f64 = 0.0;
    let mut sq = 0.0;
    let mut n = 0usize;
    for v in values {
        let a = v.abs();
        if a.is_nan() {
            max = f64::NAN;
        } else if a > max {
            max = a;
        }
        sq += a * a;
        n += 1;
    }
    let rms = if n == 0 { 0.0 } else { (sq / n as f64).sqrt() };
    (max, rms, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(a: f64, b: f64, n: usize) -> Grid1D {
        Grid1D::new(a, b, n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(0.0, 1.0, 8).is_err());
        assert!(Grid1D::new(1.0, 1.0, 20).is_err());
        assert!(Grid1D::new(0.0, f64::NAN, 20).is_err());
        let g = grid(-1.0, 1.0, 21);
        assert_eq!(g.node(20), 1.0);
        assert!((g.spacing() - 0.1).abs() < 1e-15);
        assert_eq!(g.interior(EDGE_MARGIN), 4..17);
    }

    #[test]
    fn field_rejects_bad_values() {
        let g = grid(0.0, 1.0, 10);
        assert!(SampledField1D::new(g, vec![0.0; 9]).is_err());
        let mut v = vec![0.0; 10];
        v[3] = f64::INFINITY;
        assert!(SampledField1D::new(g, v).is_err());
    }

    #[test]
    fn fornberg_reproduces_textbook_weights() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let c = fornberg_weights(0.0, &x, 2);
        let d1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let d2 = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
        for j in 0..5 {
            assert!((c[1][j] - d1[j]).abs() < 1e-14);
            assert!((c[2][j] - d2[j]).abs() < 1e-14);
        }
        let x7 = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
        let c3 = &fornberg_weights(0.0, &x7, 3)[3];
        let d3 = [1.0 / 8.0, -1.0, 13.0 / 8.0, 0.0, -13.0 / 8.0, 1.0, -1.0 / 8.0];
        for j in 0..7 {
            assert!((c3[j] - d3[j]).abs() < 1e-13, "{j}: {}", c3[j]);
        }
    }

    #[test]
    fn derivative_of_square_is_exact() {
        let f = SampledField1D::from_fn(grid(0.0, 1.0, 21), |q| q * q).unwrap();
        let d = diff_central(&f, 1).unwrap();
        for (q, v) in f.grid().nodes().iter().zip(d.values()) {
            assert!((v - 2.0 * q).abs() < 1e-12);
        }
        let d2 = diff_central(&f, 2).unwrap();
        assert!(d2.values().iter().all(|v| (v - 2.0).abs() < 1e-9));
    }

    #[test]
    fn derivative_of_sine_matches_cosine() {
        let f = SampledField1D::from_fn(grid(0.0, PI, 315), f64::sin).unwrap();
        let d = diff_central(&f, 1).unwrap();
        let err = f
            .grid()
            .nodes()
            .iter()
            .zip(d.values())
            .map(|(q, v)| (v - q.cos()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "max error {err}");
    }

    #[test]
    fn higher_orders_converge() {
        for order in 1..=3 {
            let exact = |q: f64| match order {
                1 => q.cos(),
                2 => -q.sin(),
                _ => -q.cos(),
            };
            let err = |n: usize| {
                let f = SampledField1D::from_fn(grid(0.0, 2.0, n), f64::sin).unwrap();
                let d = diff_central(&f, order).unwrap();
                f.grid()
                    .nodes()
                    .iter()
                    .zip(d.values())
                    .map(|(q, v)| (v - exact(*q)).abs())
                    .fold(0.0, f64::max)
            };
            let rate = (err(41) / err(81)).log2();
            assert!(rate > 3.5, "order {order}: rate {rate}");
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let f = SampledField1D::from_fn(grid(-3.0, 2.0, 30), |_| 7.0).unwrap();
        for order in 1..=3 {
            let d = diff_central(&f, order).unwrap();
            assert!(d.values().iter().all(|v| v.abs() < 1e-9), "order {order}");
        }
    }

    #[test]
    fn bad_order_is_rejected() {
        let f = SampledField1D::from_fn(grid(0.0, 1.0, 10), |q| q).unwrap();
        assert!(diff_central(&f, 0).is_err());
        assert!(diff_central(&f, 4).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let one = SampledField1D::from_fn(grid(0.0, 1.0, 11), |_| 1.0).unwrap();
        assert!((integrate(&one, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let sine = SampledField1D::from_fn(grid(0.0, PI, 1001), f64::sin).unwrap();
        assert!((integrate(&sine, 0.0, PI).unwrap() - 2.0).abs() < 1e-8);
        let cube = SampledField1D::from_fn(grid(0.0, 1.0, 13), |q| q * q * q).unwrap();
        assert!((integrate(&cube, 0.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        // off-node limits stay exact on cubics
        let v = integrate(&cube, 0.137, 0.861).unwrap();
        let exact = (0.861f64.powi(4) - 0.137f64.powi(4)) / 4.0;
        assert!((v - exact).abs() < 1e-14);
    }

    #[test]
    fn quadrature_limits_are_checked() {
        let f = SampledField1D::from_fn(grid(0.0, 1.0, 11), |q| q).unwrap();
        assert!(matches!(
            integrate(&f, -0.5, 1.0),
            Err(Error::OutOfRange { .. })
        ));
        assert!(integrate(&f, 0.0, 1.5).is_err());
    }

    #[test]
    fn integral_of_derivative_is_difference() {
        let f = SampledField1D::from_fn(grid(-1.0, 2.0, 301), |q| (2.0 * q).sin() + q * q).unwrap();
        let d = diff_central(&f, 1).unwrap();
        let v = integrate(&d, -0.7, 1.6).unwrap();
        let exact = |q: f64| (2.0 * q).sin() + q * q;
        assert!((v - (exact(1.6) - exact(-0.7))).abs() < 1e-6);
    }

    #[test]
    fn inversion_examples() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        assert!((invert_monotone(&xs, &xs, 0.3).unwrap() - 0.3).abs() < 1e-15);

        let xs: Vec<f64> = (0..21).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
        assert!((invert_monotone(&xs, &ys, 1.0).unwrap() - 1.0).abs() < 1e-6);
        let x = invert_monotone(&xs, &ys, 2.5).unwrap();
        assert!((x - 2.5f64.cbrt()).abs() < 1e-12);

        let mut rep = ys.clone();
        rep[5] = rep[4];
        assert!(matches!(
            invert_monotone(&xs, &rep, 1.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            invert_monotone(&xs, &ys, 9.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn inversion_of_decreasing_table() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (-x).exp()).collect();
        let x = invert_monotone(&xs, &ys, 0.5).unwrap();
        assert!((x - 2f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn parameter_derivatives() {
        let d = param_derivative(|e| e * e, 1.0, 1e-2, 1).unwrap();
        assert!((d - 2.0).abs() < 1e-13);
        let d = param_derivative(f64::exp, 0.0, 1e-3, 1).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
        let d = param_derivative(|e| e * e * e, 1.0, 1e-3, 2).unwrap();
        assert!((d - 6.0).abs() < 1e-6);
        assert!(param_derivative(f64::exp, 0.0, 0.0, 1).is_err());
        assert!(param_derivative(f64::exp, 0.0, -1.0, 1).is_err());
        assert!(param_derivative(f64::exp, 0.0, 1e-3, 3).is_err());
    }

    #[test]
    fn interpolation_is_cubic_exact() {
        let f = SampledField1D::from_fn(grid(-1.0, 1.0, 17), |q| 1.0 - q + 2.0 * q.powi(3)).unwrap();
        for q in [-1.0f64, -0.93, -0.2, 0.0, 0.51, 0.999, 1.0] {
            let exact = 1.0 - q + 2.0 * q.powi(3);
            assert!((f.interpolate(q).unwrap() - exact).abs() < 1e-13);
        }
        assert!(f.interpolate(1.5).is_err());
    }
}
