//! Property tests for the structural identities: kernel symmetries, the
//! change-of-measure relations between the kernel family, and the
//! polynomial recurrences.

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use branchfk::grid::Grid;
use branchfk::hermite;
use branchfk::model::{reduce, ModelSpec};
use branchfk::semigroup::KernelEvaluator;
use branchfk::spectral::solve_eigen;

fn small_eval() -> &'static KernelEvaluator {
    static E: OnceLock<KernelEvaluator> = OnceLock::new();
    E.get_or_init(|| {
        let grid = Grid::new(10.0, 1601).unwrap();
        let spec = ModelSpec::hermite(1.0, 0.7).unwrap();
        let reduced = reduce(&spec, &grid).unwrap();
        let basis = Arc::new(solve_eigen(&reduced, 16).unwrap());
        KernelEvaluator::new(basis, &reduced)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ptilde_symmetry_exact(
        t in 0.2f64..3.0,
        x in -6.0f64..6.0,
        y in -6.0f64..6.0,
    ) {
        let ev = small_eval();
        let a = ev.ptilde(t, x, y).unwrap();
        let b = ev.ptilde(t, y, x).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn detailed_balance_between_p_and_r(
        t in 0.2f64..3.0,
        x in -5.0f64..5.0,
        y in -5.0f64..5.0,
    ) {
        let ev = small_eval();
        // r symmetric; p(t,x,y) e^{2 ell(y)} = p(t,y,x) e^{2 ell(x)}
        let r_xy = ev.r(t, x, y).unwrap();
        let r_yx = ev.r(t, y, x).unwrap();
        prop_assert!((r_xy - r_yx).abs() <= 1e-12 * r_xy.abs().max(1e-12));
        let lhs = ev.p(t, x, y).unwrap() * (2.0 * ev.ell_at(y)).exp();
        let rhs = ev.p(t, y, x).unwrap() * (2.0 * ev.ell_at(x)).exp();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1e-12));
    }

    #[test]
    fn kernel_family_consistency(
        t in 0.2f64..3.0,
        x in -5.0f64..5.0,
        y in -5.0f64..5.0,
    ) {
        let ev = small_eval();
        let pt = ev.ptilde(t, x, y).unwrap();
        let p = ev.p(t, x, y).unwrap();
        let r = ev.r(t, x, y).unwrap();
        let (lx, ly) = (ev.ell_at(x), ev.ell_at(y));
        prop_assert!((p - (lx - ly).exp() * pt).abs() <= 1e-9 * p.abs().max(1e-12));
        prop_assert!((r - (lx + ly).exp() * pt).abs() <= 1e-9 * r.abs().max(1e-12));
        prop_assert!(pt >= 0.0 && p >= 0.0 && r >= 0.0);
    }

    #[test]
    fn hermite_recurrence_matches_explicit_forms(
        k in 0usize..6,
        x in -4.0f64..4.0,
    ) {
        let explicit = match k {
            0 => 1.0,
            1 => 2.0 * x,
            2 => 4.0 * x * x - 2.0,
            3 => 8.0 * x.powi(3) - 12.0 * x,
            4 => 16.0 * x.powi(4) - 48.0 * x * x + 12.0,
            5 => 32.0 * x.powi(5) - 160.0 * x.powi(3) + 120.0 * x,
            _ => unreachable!(),
        };
        let ours = hermite::hermite_poly(k, x).unwrap();
        prop_assert!((ours - explicit).abs() <= 1e-10 * explicit.abs().max(1.0));
    }

    #[test]
    fn grid_is_symmetric_and_uniform(
        l in 0.5f64..20.0,
        half in 2usize..400,
    ) {
        let n = 2 * half + 1;
        let grid = Grid::new(l, n).unwrap();
        prop_assert_eq!(grid.node(half), 0.0);
        prop_assert_eq!(grid.node(0), -l);
        prop_assert_eq!(grid.node(n - 1), l);
        for i in 0..n - 1 {
            let d = grid.node(i + 1) - grid.node(i);
            prop_assert!((d - grid.spacing()).abs() < 1e-13 * l.max(1.0));
        }
        // symmetry of nodes
        for i in 0..n {
            prop_assert!((grid.node(i) + grid.node(n - 1 - i)).abs() < 1e-13 * l.max(1.0));
        }
    }
}
