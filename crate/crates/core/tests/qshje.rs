use proptest::prelude::*;
use qtraj_core::qshje::{
    build_slice, mobius_apply, schwarzian, solve_basis, verify_script_w, Constants, Microstate, SolveOptions,
};
use qtraj_core::{Grid1D, Potential, SampledField1D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central differences written out by hand so the oracle shares no code with
/// the library stencils.
fn fd_schwarzian(f: &[f64], i: usize, h: f64) -> f64 {
    let d1 = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
    let d2 = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) / (12.0 * h * h);
    let d3 = (f[i - 3] - 8.0 * f[i - 2] + 13.0 * f[i - 1] - 13.0 * f[i + 1] + 8.0 * f[i + 2] - f[i + 3])
        / (8.0 * h * h * h);
    d3 / d1 - 1.5 * (d2 / d1).powi(2)
}

#[test]
fn schwarzian_matches_finite_difference_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..5 {
        let terms: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| (rng.gen_range(-0.1..0.1), rng.gen_range(0.5..2.0), rng.gen_range(0.0..6.0)))
            .collect();
        // f = q + Σ a sin(kq + φ) + (sum)² keeps f' > 0 for small amplitudes
        let f = |q: f64, order: usize| -> f64 {
            let mut s = if order == 0 { q } else if order == 1 { 1.0 } else { 0.0 };
            for &(a, k, p) in &terms {
                let ph = k * q + p;
                s += a * k.powi(order as i32)
                    * match order % 4 {
                        0 => ph.sin(),
                        1 => ph.cos(),
                        2 => -ph.sin(),
                        _ => -ph.cos(),
                    };
            }
            s
        };
        let grid = Grid1D::new(-3.0, 3.0, 601).unwrap();
        let field = |o: usize| SampledField1D::from_fn(grid, |q| f(q, o)).unwrap();
        let s = schwarzian(&field(0), &field(1), &field(2), &field(3)).unwrap();
        let vals = field(0).into_values();
        let h = grid.spacing();
        for i in 3..grid.len() - 3 {
            let oracle = fd_schwarzian(&vals, i, h);
            assert!((s.values()[i] - oracle).abs() < 1e-5, "node {i}: {} vs {oracle}", s.values()[i]);
        }
    }
}

#[test]
fn harmonic_basis_self_convergence() {
    let c = Constants::natural();
    let pot = Potential::harmonic(1.0).unwrap();
    let coarse = solve_basis(&pot, 0.75, &Grid1D::new(-6.0, 6.0, 1201).unwrap(), &c).unwrap();
    let fine = solve_basis(&pot, 0.75, &Grid1D::new(-6.0, 6.0, 4801).unwrap(), &c).unwrap();
    let scale = coarse.u.values().iter().chain(coarse.v.values()).fold(0.0f64, |a, x| a.max(x.abs()));
    for i in 0..coarse.grid.len() {
        let du = coarse.u.values()[i] - fine.u.values()[4 * i];
        let dv = coarse.v.values()[i] - fine.v.values()[4 * i];
        assert!(du.abs().max(dv.abs()) / scale < 1e-7, "node {i}");
    }
    let r = coarse.schrodinger_residual(&c).unwrap();
    assert!(r.within(1e-7), "{r:?}");
}

#[test]
fn linear_script_w_and_mobius_invariance() {
    let c = Constants::natural();
    let pot = Potential::linear(1.0).unwrap();
    let grid = Grid1D::new(-8.0, 4.0, 4001).unwrap();
    let base = build_slice(&pot, 1.0, &grid, &Microstate::identity(), &c, SolveOptions::default()).unwrap();
    let r0 = verify_script_w(&base, &pot).unwrap();
    assert!(r0.within(1e-5), "{r0:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut done = 0;
    while done < 20 {
        let m: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        if (m[0] * m[3] - m[1] * m[2]).abs() < 0.1 {
            continue;
        }
        let micro = mobius_apply(&Microstate::identity(), m[0], m[1], m[2], m[3]).unwrap();
        let s = build_slice(&pot, 1.0, &grid, &micro, &c, SolveOptions::default()).unwrap();
        let r = verify_script_w(&s, &pot).unwrap();
        assert!((r.max - r0.max).abs() <= 1e-6);
        assert!(s.qshje_residual().within(1e-9));
        done += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn wronskian_conserved(k in 0.2f64..2.0, e in 0.3f64..3.0) {
        let c = Constants::natural();
        let b = solve_basis(&Potential::harmonic(k).unwrap(), e, &Grid1D::new(-4.0, 4.0, 801).unwrap(), &c).unwrap();
        prop_assert!(b.wronskian_drift() <= 1e-8);
    }

    #[test]
    fn density_positive_and_flux_constant(
        a in -3.0f64..3.0, b in -3.0f64..3.0, cc in -3.0f64..3.0, d in -3.0f64..3.0,
        slope in -1.0f64..1.0,
    ) {
        prop_assume!((a * d - b * cc).abs() > 0.05);
        let micro = Microstate::new(a, b, cc, d, 0.0, 0.0).unwrap();
        let pot = Potential::linear(slope).unwrap();
        let grid = Grid1D::new(-3.0, 3.0, 601).unwrap();
        let s = build_slice(&pot, 2.0, &grid, &micro, &Constants::natural(), SolveOptions::default()).unwrap();
        prop_assert!(s.rho.values().iter().all(|x| *x > 0.0));
        prop_assert!(s.continuity_residual().within(1e-6));
        prop_assert!(s.qshje_residual().within(1e-9));
        let sign = s.wp.values()[0].signum();
        prop_assert!(s.wp.values().iter().all(|x| x.signum() == sign));
    }

    #[test]
    fn mobius_composition(m1 in prop::array::uniform4(-2.0f64..2.0), m2 in prop::array::uniform4(-2.0f64..2.0)) {
        prop_assume!((m1[0] * m1[3] - m1[1] * m1[2]).abs() > 0.05);
        prop_assume!((m2[0] * m2[3] - m2[1] * m2[2]).abs() > 0.05);
        let base = Microstate::new(1.0, 0.3, -0.2, 0.9, 0.0, 0.0).unwrap();
        let two = mobius_apply(&mobius_apply(&base, m1[0], m1[1], m1[2], m1[3]).unwrap(), m2[0], m2[1], m2[2], m2[3]).unwrap();
        // M2·M1
        let p = [
            m2[0] * m1[0] + m2[1] * m1[2],
            m2[0] * m1[1] + m2[1] * m1[3],
            m2[2] * m1[0] + m2[3] * m1[2],
            m2[2] * m1[1] + m2[3] * m1[3],
        ];
        let one = mobius_apply(&base, p[0], p[1], p[2], p[3]).unwrap();
        for (x, y) in [(two.a, one.a), (two.b, one.b), (two.c, one.c), (two.d, one.d)] {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}
