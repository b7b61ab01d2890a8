//! Property tests for the structural invariants.

use npde_core::bilinear::ControlLaw;
use npde_core::grid::{weighted_inner, Dim, Grid, WeightFn};
use npde_core::hermite::{free_evolution, hermite_eval, HermiteBasis, HermiteState};
use npde_core::optimize::{project, ConstraintBox};
use npde_core::parabolic::CoefficientFields;
use proptest::prelude::*;

fn feasible_box() -> ConstraintBox<f64> {
    ConstraintBox::new(1.0, 0.1, 2.0, 1.0, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_idempotent_and_feasible(
        alpha in prop::collection::vec(-10.0f64..10.0, 9),
        beta in prop::collection::vec(-10.0f64..10.0, 9),
        gamma in -10.0f64..10.0,
        theta in -10.0f64..10.0,
    ) {
        let grid = Grid::<f64>::new(Dim::One, 1.0, 4).unwrap();
        let boxc = feasible_box();
        let mut coeffs = CoefficientFields::constant(&grid, 1, &[0.0], &[1.0], gamma, theta);
        coeffs.levels[0].lin.alpha.copy_from_slice(&alpha);
        coeffs.levels[0].lin.beta.copy_from_slice(&beta);
        let once = project(&coeffs, &boxc, &grid);
        let twice = project(&once, &boxc, &grid);
        prop_assert_eq!(&once, &twice);
        for level in &once.levels {
            for &a in &level.lin.alpha {
                prop_assert!(a.abs() <= boxc.alpha_max + 1e-12);
            }
            for &b in &level.lin.beta {
                prop_assert!(b >= boxc.beta_min - 1e-12 && b <= boxc.beta_max + 1e-12);
            }
            for &g in &level.gamma {
                prop_assert!(g.abs() <= boxc.gamma_max + 1e-12);
            }
            for &t in &level.lin.theta {
                prop_assert!(t.abs() <= boxc.theta_max + 1e-12);
            }
        }
    }

    #[test]
    fn weighted_inner_symmetric_bilinear(
        f in prop::collection::vec(-5.0f64..5.0, 17),
        g in prop::collection::vec(-5.0f64..5.0, 17),
        scale in -3.0f64..3.0,
    ) {
        let grid = Grid::<f64>::new(Dim::One, 2.0, 8).unwrap();
        let w = WeightFn::Gaussian;
        let fg = weighted_inner(&f, &g, &w, &grid).unwrap();
        let gf = weighted_inner(&g, &f, &w, &grid).unwrap();
        prop_assert_eq!(fg, gf);
        let fs: Vec<f64> = f.iter().map(|&x| scale * x).collect();
        let scaled = weighted_inner(&fs, &g, &w, &grid).unwrap();
        prop_assert!((scaled - scale * fg).abs() <= 1e-12 * (scaled.abs().max(1.0)));
        let ff = weighted_inner(&f, &f, &w, &grid).unwrap();
        prop_assert!(ff >= 0.0);
    }

    #[test]
    fn free_evolution_group_property(
        raw_a in prop::collection::vec(-2.0f64..2.0, 7),
        raw_b in prop::collection::vec(-2.0f64..2.0, 7),
        t1 in 0.0f64..5.0,
        t2 in 0.0f64..5.0,
    ) {
        let basis = HermiteBasis::<f64>::with_default_order(Dim::One, 6).unwrap();
        let s = HermiteState::new(raw_a, raw_b).unwrap();
        let chained = free_evolution(&free_evolution(&s, &basis, t1), &basis, t2);
        let direct = free_evolution(&s, &basis, t1 + t2);
        prop_assert!(chained.distance(&direct, &basis) <= 1e-11);
    }

    #[test]
    fn control_law_concatenation(
        d1 in 0.01f64..3.0,
        d2 in 0.01f64..3.0,
        v1 in -2.0f64..2.0,
        v2 in -2.0f64..2.0,
        frac in 0.0f64..1.0,
    ) {
        let p = ControlLaw::constant(vec![v1, 0.0, 0.0], d1).unwrap();
        let q = ControlLaw::constant(vec![v2, 0.0, 0.0], d2).unwrap();
        let pq = p.concatenate(&q);
        prop_assert!((pq.duration() - (d1 + d2)).abs() <= 1e-12 * (d1 + d2));
        // the left operand acts first in time
        let t = frac * d1 * 0.999;
        prop_assert_eq!(pq.value_at(t).unwrap()[0], v1);
        let t = d1 + frac * d2 * 0.999 + 1e-12;
        if t <= pq.duration() {
            prop_assert_eq!(pq.value_at(t).unwrap()[0], v2);
        }
    }

    #[test]
    fn hermite_parity(n in 0usize..11, x in -3.0f64..3.0) {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let lhs = hermite_eval::<f64>(n, -x);
        let rhs = sign * hermite_eval::<f64>(n, x);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
    }
}
