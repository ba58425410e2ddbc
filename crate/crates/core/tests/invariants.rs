//! Convergence and stability invariants that need several grids or runs.

use levyfront::asymptotics::{fit_front_rate, FrontTrace};
use levyfront::bounds::acc_constant;
use levyfront::discretize::{
    assemble_line_operator, assemble_torus_operator, fourier_symbol, Field, LineGrid, LineGridParams, TailModel,
    TorusGrid,
};
use levyfront::evolve::{initial_field, integrate, IntegrateOptions};
use levyfront::model::{InitialData, KernelSpec, ProblemSpec, ReactionSpec, TrigPoly};
use levyfront::spectral::principal_eigenpair;
use std::f64::consts::PI;

fn rayleigh_symbol(alpha: f64, n: usize, m: f64) -> f64 {
    let k = KernelSpec::homogeneous(1, alpha).unwrap();
    let op = assemble_torus_operator(&k, &TorusGrid::new(n).unwrap()).unwrap();
    let c = Field::from_fn(op.grid().clone(), |x| (2.0 * PI * m * x).cos());
    op.apply(&c).unwrap().inner(&c) / c.inner(&c)
}

#[test]
fn symbol_exponent_matches_order() {
    let ms = [1.0f64, 2.0, 4.0, 8.0];
    let n = 4096;
    for alpha in [0.5, 1.0, 1.5] {
        let k = KernelSpec::homogeneous(1, alpha).unwrap();
        let op = assemble_torus_operator(&k, &TorusGrid::new(n).unwrap()).unwrap();
        let (lx, ly): (Vec<f64>, Vec<f64>) = ms
            .iter()
            .map(|&m| {
                let c = Field::from_fn(op.grid().clone(), |x| (2.0 * PI * m * x).cos());
                (m.ln(), (op.apply(&c).unwrap().inner(&c) / c.inner(&c)).ln())
            })
            .unzip();
        let (mx, my) = (lx.iter().sum::<f64>() / 4.0, ly.iter().sum::<f64>() / 4.0);
        let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope / alpha - 1.0).abs() < 0.01, "alpha {alpha}: exponent {slope}");
    }
}

#[test]
fn torus_error_falls_at_the_expected_rate() {
    for alpha in [0.5, 1.0, 1.5] {
        let exact = fourier_symbol(alpha, 1.0);
        let errs: Vec<f64> =
            [32, 64, 128, 256].iter().map(|&n| (rayleigh_symbol(alpha, n, 1.0) - exact).abs()).collect();
        let need = 0.8 * 2f64.powf(2.0 - alpha);
        for w in errs.windows(2) {
            assert!(w[0] / w[1] >= need, "alpha {alpha}: errors {errs:?}, need ratio {need}");
        }
    }
}

#[test]
fn principal_eigenvalue_converges_geometrically() {
    let k = KernelSpec::new(1, 1.0, TrigPoly::cosine(0.0, 0.3)).unwrap();
    let lambda = |n: usize| {
        let op = assemble_torus_operator(&k, &TorusGrid::new(n).unwrap()).unwrap();
        let mu = Field::from_fn(op.grid().clone(), |x| 1.0 + 0.5 * (2.0 * PI * x).cos());
        principal_eigenpair(&op, &mu, 1e-12).unwrap().lambda1
    };
    let (a, b, c) = (lambda(64), lambda(128), lambda(256));
    assert!((a - b).abs() <= 10.0 * (b - c).abs(), "{a} {b} {c}");
    assert!((b - c).abs() < (a - b).abs());
}

#[test]
fn halving_the_step_halves_the_error() {
    let k = KernelSpec::new(1, 1.0, TrigPoly::cosine(0.0, 0.3)).unwrap();
    let op = assemble_torus_operator(&k, &TorusGrid::new(64).unwrap()).unwrap();
    let r = ReactionSpec::logistic(1.0, 0.5).unwrap();
    let u0 = Field::from_fn(op.grid().clone(), |x| 0.2 + 0.1 * (2.0 * PI * x).sin());
    let solve = |dt: f64| {
        let t = integrate(&op, Some(&r), u0.clone(), 1.0, dt, &[1.0], IntegrateOptions::default()).unwrap();
        t.final_state().clone()
    };
    let u: Vec<Field> = [0.04, 0.02, 0.01].iter().map(|&dt| solve(dt)).collect();
    let diff = |a: &Field, b: &Field| a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let ratio = diff(&u[0], &u[1]) / diff(&u[1], &u[2]);
    assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
}

#[test]
fn decay_constant_is_stable_under_refinement() {
    let k = KernelSpec::homogeneous(1, 1.0).unwrap();
    let times = [0.0, 1.0, 2.0, 4.0];
    let grid = |cells: usize| {
        LineGrid::new(LineGridParams { core_half_width: 8.0, core_cells: cells, outer_nodes: 3 * cells, r_max: 1e10 })
            .unwrap()
    };
    let coarse = acc_constant(&k, 1.0, &grid(128), &times).unwrap().d_hat;
    let fine = acc_constant(&k, 1.0, &grid(256), &times).unwrap().d_hat;
    assert!((coarse / fine - 1.0).abs() <= 0.25, "{coarse} vs {fine}");
}

#[test]
fn front_rate_is_universal_in_level_and_modulation() {
    let alpha = 1.5;
    let p = 1.0 + alpha;
    let horizon = 40.0;
    let line =
        LineGrid::new(LineGridParams { core_half_width: 8.0, core_cells: 128, outer_nodes: 896, r_max: 1e14 }).unwrap();
    let times: Vec<f64> = (0..=160).map(|k| k as f64 * 0.25).collect();
    let mut normalized = Vec::new();
    for amp in [0.0, 0.25, 0.5] {
        let k = KernelSpec::new(1, alpha, TrigPoly::cosine(0.0, amp)).unwrap();
        let r = ReactionSpec::logistic(1.0, 0.0).unwrap();
        let spec = ProblemSpec::new(k.clone(), r.clone(), InitialData::algebraic(1.0, &k).unwrap()).unwrap();
        let torus = assemble_torus_operator(&k, &TorusGrid::new(256).unwrap()).unwrap();
        let mu = Field::constant(torus.grid().clone(), 1.0);
        let l1 = principal_eigenpair(&torus, &mu, 1e-11).unwrap().lambda1;
        let op = assemble_line_operator(&k, &line, TailModel::Algebraic).unwrap();
        let traj = integrate(
            &op,
            Some(&r),
            initial_field(&spec, op.grid()),
            horizon,
            0.01,
            &times,
            IntegrateOptions::default(),
        )
        .unwrap();
        let slopes: Vec<f64> = [1e-2, 1e-4]
            .iter()
            .map(|&h| {
                let trace = FrontTrace::from_trajectory(&traj, h);
                fit_front_rate(&trace, (0.5 * horizon, 0.9 * horizon), horizon).unwrap().slope
            })
            .collect();
        assert!((slopes[0] / slopes[1] - 1.0).abs() <= 0.05, "amp {amp}: {slopes:?}");
        normalized.push(slopes[0] * p / l1.abs());
    }
    let (lo, hi) = normalized.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    assert!(hi / lo - 1.0 <= 0.05, "{normalized:?}");
}
