use pinn_observer::expr::{parse, Expr};
use pinn_observer::linalg::{lu_solve, sylvester_solve, Matrix};
use pinn_observer::metrics::{norms, percentile, summarize};
use pinn_observer::mlp::{forward, init_random, input_jacobian, pack, unpack, MlpConfig};
use proptest::prelude::*;

fn matrix(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parsed_polynomial_matches_direct(a in -3.0f64..3.0, b in -3.0f64..3.0, x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let e = parse(&format!("{a}*x1^2 - x1*x2 + {b}*x2^3 + 1"), 2).unwrap();
        let direct = a * x * x - x * y + b * y * y * y + 1.0;
        prop_assert!((e.eval(&[x, y]).unwrap() - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn display_round_trips(a in -3.0f64..3.0, x in -0.4f64..0.4, y in -0.4f64..0.4) {
        let e = parse(&format!("exp({a}*x1)*sqrt(1+x2) - ln(1+x1*x2)/(2+x1)"), 2).unwrap();
        let again = parse(&e.to_string_with(&["x1", "x2"]), 2).unwrap();
        prop_assert_eq!(e.eval(&[x, y]).unwrap(), again.eval(&[x, y]).unwrap());
    }

    #[test]
    fn series_value_matches_eval(cx in -0.3f64..0.3, cy in -0.3f64..0.3, dx in -0.01f64..0.01, dy in -0.01f64..0.01) {
        let e = parse("exp(x1)*ln(1+x2) + sqrt(1+x1+x2)", 2).unwrap();
        let s = e.series_eval(&[cx, cy], 6).unwrap();
        let exact = e.eval(&[cx + dx, cy + dy]).unwrap();
        prop_assert!((s.eval_at(&[dx, dy]) - exact).abs() <= 1e-12);
    }

    #[test]
    fn lu_residual_is_small(m in matrix(4), rhs in prop::collection::vec(-1.0f64..1.0, 4)) {
        let mut data = m;
        for i in 0..4 {
            data[i * 4 + i] += 5.0;
        }
        let a = Matrix::from_row_major(4, 4, data).unwrap();
        let x = lu_solve(&a, &rhs).unwrap();
        let r = a.matvec(&x);
        for i in 0..4 {
            prop_assert!((r[i] - rhs[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn sylvester_residual_is_small(f in matrix(2), a in matrix(2), c in matrix(2)) {
        // Shift F away from A so the spectra stay separated.
        let mut fd = f;
        fd[0] += 4.0;
        fd[3] += 4.0;
        let f = Matrix::from_row_major(2, 2, fd).unwrap();
        let a = Matrix::from_row_major(2, 2, a.iter().map(|v| v * 0.5).collect()).unwrap();
        let c = Matrix::from_row_major(2, 2, c).unwrap();
        let j = sylvester_solve(&f, &a, &c).unwrap();
        let r = (&j * &f).sub(&(&a * &j)).sub(&c);
        prop_assert!(r.max_abs() <= 1e-12);
    }

    #[test]
    fn mlp_jacobian_matches_fd(seed in 0u64..10_000, x in -0.5f64..0.5, y in -0.5f64..0.5) {
        let cfg = MlpConfig::default_for(2);
        let p = init_random(&cfg, seed);
        let j = input_jacobian(&cfg, &p, &[x, y]).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut up = [x, y];
            let mut down = [x, y];
            up[k] += h;
            down[k] -= h;
            let fu = forward(&cfg, &p, &up).unwrap();
            let fd = forward(&cfg, &p, &down).unwrap();
            for row in 0..2 {
                let approx = (fu[row] - fd[row]) / (2.0 * h);
                prop_assert!((approx - j[(row, k)]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn pack_inverts_unpack(seed in 0u64..10_000) {
        let cfg = MlpConfig::default_for(2);
        let p = init_random(&cfg, seed);
        prop_assert_eq!(pack(&unpack(&cfg, &p).unwrap()), p);
    }

    #[test]
    fn norms_are_ordered_and_homogeneous(v in prop::collection::vec(-10.0f64..10.0, 1..50), c in -5.0f64..5.0) {
        let n = norms(&v);
        prop_assert!(n.linf <= n.l2 * (1.0 + 1e-12));
        prop_assert!(n.l2 <= n.l1 * (1.0 + 1e-12));
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let s = norms(&scaled);
        prop_assert!((s.l1 - c.abs() * n.l1).abs() <= 1e-10 * (1.0 + n.l1));
        prop_assert!((s.l2 - c.abs() * n.l2).abs() <= 1e-10 * (1.0 + n.l2));
        prop_assert!((s.linf - c.abs() * n.linf).abs() <= 1e-12 * (1.0 + n.linf));
    }

    #[test]
    fn norms_ignore_order(mut v in prop::collection::vec(-10.0f64..10.0, 1..50)) {
        let before = norms(&v);
        v.reverse();
        let half = v.len() / 2;
        v.rotate_left(half);
        let after = norms(&v);
        prop_assert!((before.l1 - after.l1).abs() <= 1e-10);
        prop_assert!((before.l2 - after.l2).abs() <= 1e-10);
        prop_assert_eq!(before.linf, after.linf);
    }

    #[test]
    fn percentiles_are_monotone(v in prop::collection::vec(-10.0f64..10.0, 2..60)) {
        let s = summarize(&v);
        prop_assert!(s.p05 <= s.median && s.median <= s.p95);
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(percentile(&sorted, 0.0), sorted[0]);
        prop_assert_eq!(percentile(&sorted, 1.0), *sorted.last().unwrap());
    }
}

#[test]
fn constant_expression_ignores_point() {
    assert_eq!(Expr::constant(2.5).eval(&[9.0, -9.0]).unwrap(), 2.5);
}
