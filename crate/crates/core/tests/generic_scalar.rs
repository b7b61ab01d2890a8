//! The core is generic over the scalar type: exercise the main paths at f32
//! (with correspondingly loose tolerances) to keep that contract honest.

use npde_core::grid::{gauss_hermite, weighted_inner, Dim, Grid, WeightFn};
use npde_core::hermite::{free_evolution, HermiteBasis, HermiteState};
use npde_core::parabolic::{
    solve_forward, CoefficientFields, ParabolicProblem, Sigma, Trajectory,
};
use npde_core::stencil::{assemble_kdelta_1d, CoefficientSlice, OperatorForm};

#[test]
fn grid_and_quadrature_at_f32() {
    let g = Grid::<f32>::new(Dim::One, 2.0, 16).unwrap();
    assert_eq!(g.n_total(), 33);
    let ones = vec![1.0f32; g.n_total()];
    let mass = weighted_inner(&ones, &ones, &WeightFn::Gaussian, &g).unwrap();
    let want = std::f32::consts::PI.sqrt() * libm::erff(2.0);
    assert!((mass - want).abs() < 5e-3, "{mass} vs {want}");

    let q = gauss_hermite::<f32>(8).unwrap();
    let s: f32 = q.weights.iter().sum();
    assert!((s - std::f32::consts::PI.sqrt()).abs() < 1e-5);
}

#[test]
fn stencil_exact_on_quadratics_at_f32() {
    let g = Grid::<f32>::new(Dim::One, 1.0, 8).unwrap();
    let c = CoefficientSlice::constant(&g, &[0.0], &[1.0], 0.0);
    let op = assemble_kdelta_1d(&c, &g, OperatorForm::Divergence).unwrap();
    let f = g.field_from_fn(|x| x[0] * x[0]);
    let y = op.apply(&f);
    for i in 1..g.n_total() - 1 {
        assert!((y[i] - 2.0).abs() < 1e-4, "y[{i}] = {}", y[i]);
    }
}

#[test]
fn parabolic_solve_at_f32() {
    let grid = Grid::<f32>::new(Dim::One, 1.0, 12).unwrap();
    let coeffs = CoefficientFields::constant(&grid, 10, &[0.0], &[1.0], 0.0, 0.0);
    let m0 = grid.field_from_fn(|x| (1.0 - x[0] * x[0]).max(0.0));
    let p = ParabolicProblem {
        grid,
        t_final: 0.1f32,
        nt: 10,
        coeffs,
        sigma: Sigma::Tanh,
        m0: m0.clone(),
        weight: WeightFn::polynomial(2.0f32).unwrap(),
    };
    let traj: Trajectory<f32> = solve_forward(&p).unwrap();
    assert_eq!(traj.snapshots.len(), 11);
    let norm = |v: &[f32]| v.iter().map(|x| x * x).sum::<f32>().sqrt();
    assert!(norm(traj.terminal()) < norm(&m0));
}

#[test]
fn hermite_flow_at_f32() {
    let basis = HermiteBasis::<f32>::with_default_order(Dim::One, 6).unwrap();
    // orthonormality at single precision
    for i in 0..basis.mode_count() {
        for j in 0..basis.mode_count() {
            let mut acc = 0.0f32;
            for q in 0..basis.node_count() {
                acc += basis.node_weight(q) * basis.mode_at_node(i, q) * basis.mode_at_node(j, q);
            }
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((acc - want).abs() < 1e-4, "<{i},{j}> = {acc}");
        }
    }
    let s = HermiteState::new(basis.unit_mode([2, 0]).unwrap(), vec![0.0f32; 7]).unwrap();
    let period = 2.0 * std::f32::consts::PI / 2.0f32;
    let back = free_evolution(&s, &basis, period);
    assert!(s.distance(&back, &basis) < 1e-4);
}
