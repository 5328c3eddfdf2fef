//! Randomized invariants.

mod common;

use std::sync::Arc;

use common::*;
use jumpsmooth::chaos::{chaos_eval, eval_m, CoefficientGrid, Partition};
use jumpsmooth::dsl::{parse, BinOp, Expr, ExprKind, Func, JumpWeight, Lipschitz};
use jumpsmooth::malliavin::{chain_rule_check, product_rule_check, DerivativePoint};
use jumpsmooth::orlicz::young_check;
use jumpsmooth::{BoxSet, Jump, JumpPath};
use proptest::prelude::*;

fn jump() -> impl Strategy<Value = Jump> {
    (0.0..1.0f64, prop_oneof![Just(1.0), -2.0..-0.5f64, 0.5..1.5f64]).prop_map(|(t, x)| Jump { t, x })
}

fn path() -> impl Strategy<Value = JumpPath> {
    prop::collection::vec(jump(), 0..12).prop_map(|j| JumpPath::from_jumps(j).unwrap())
}

fn point() -> impl Strategy<Value = DerivativePoint> {
    (0.0..1.0f64, prop_oneof![0.5..1.5f64, -2.0..-0.5f64]).prop_map(|(t, x)| DerivativePoint::new(t, x).unwrap())
}

const SOURCES: [&str; 6] = [
    "count(A)",
    "count(A) * sumjumps(B, x2) + 1",
    "clamp(XT, -1, 2)",
    "exp(-count(A)) - sumjumps(C, absx)",
    "pow(count(A), 2) + max(sumjumps(B, x), -1)",
    "indicator(count(A), 1) * XT",
];

fn leaf() -> impl Strategy<Value = Expr> {
    let name = prop::sample::select(vec!["A", "B", "C", "E"]);
    prop_oneof![
        (0.0..100.0f64).prop_map(|v| Expr::synthetic(ExprKind::Num(v))),
        Just(Expr::synthetic(ExprKind::Terminal)),
        name.clone().prop_map(|b| Expr::synthetic(ExprKind::Count(b.to_string()))),
        (name, prop::sample::select(JumpWeight::ALL.to_vec()))
            .prop_map(|(b, g)| Expr::synthetic(ExprKind::SumJumps(b.to_string(), g))),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 32, 3, |inner| {
        let op = prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div]);
        prop_oneof![
            inner.clone().prop_map(|e| Expr::synthetic(ExprKind::Neg(Box::new(e)))),
            (op, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::synthetic(ExprKind::Binary(
                op,
                Box::new(a),
                Box::new(b)
            ))),
            (prop::sample::select(Func::ALL.to_vec()), prop::collection::vec(inner, 3)).prop_map(|(f, mut args)| {
                args.truncate(f.arity());
                Expr::synthetic(ExprKind::Call(f, args))
            }),
        ]
    })
}

fn partition() -> Arc<Partition> {
    let m = mixed_model();
    let cells = vec![
        BoxSet::rect(0.0, 0.5, 0.5, 1.5).unwrap(),
        BoxSet::rect(0.5, 1.0, 0.5, 1.5).unwrap(),
        BoxSet::rect(0.0, 1.0, -2.0, -1.0).unwrap(),
    ];
    Arc::new(Partition::new(&m, cells).unwrap())
}

fn finer() -> (Arc<Partition>, Vec<usize>) {
    let m = mixed_model();
    let cells = vec![
        BoxSet::rect(0.0, 0.25, 0.5, 1.5).unwrap(),
        BoxSet::rect(0.25, 0.5, 0.5, 1.5).unwrap(),
        BoxSet::rect(0.5, 1.0, 0.5, 1.5).unwrap(),
        BoxSet::rect(0.0, 1.0, -2.0, -1.5).unwrap(),
        BoxSet::rect(0.0, 1.0, -1.5, -1.0).unwrap(),
    ];
    (Arc::new(Partition::new(&m, cells).unwrap()), vec![0, 0, 1, 2, 2])
}

fn grid() -> impl Strategy<Value = CoefficientGrid> {
    prop::collection::vec(-2.0..2.0f64, 1 + 3 + 9 + 27).prop_map(|v| {
        let mut g = CoefficientGrid::zeros(partition(), 3).unwrap();
        let mut it = v.into_iter();
        g.set(&[], it.next().unwrap()).unwrap();
        for i in 0..3 {
            g.set(&[i], it.next().unwrap()).unwrap();
        }
        for i in 0..3 {
            for j in 0..3 {
                g.set(&[i, j], it.next().unwrap()).unwrap();
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    g.set(&[i, j, k], it.next().unwrap()).unwrap();
                }
            }
        }
        g
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn compensated_measure_is_additive(p in path(), cut in 0.01..0.99f64, lo in 0.05..2.0f64, w in 0.1..2.0f64, neg in any::<bool>()) {
        let m = mixed_model();
        let (x0, x1) = if neg { (-lo - w, -lo) } else { (lo, lo + w) };
        let whole = BoxSet::rect(0.0, 1.0, x0, x1).unwrap();
        let left = BoxSet::rect(0.0, cut, x0, x1).unwrap();
        let right = BoxSet::rect(cut, 1.0, x0, x1).unwrap();
        let sum = eval_m(&m, &p, &left).unwrap() + eval_m(&m, &p, &right).unwrap();
        prop_assert!(close(eval_m(&m, &p, &whole).unwrap(), sum));
        let mw = m.m_measure(&whole).unwrap();
        prop_assert!(close(mw, m.m_measure(&left).unwrap() + m.m_measure(&right).unwrap()));
        prop_assert!(m.m_measure(&left).unwrap() <= mw + 1e-15);
        prop_assert!(m.expected_count(&right) <= m.expected_count(&whole) + 1e-15);
    }

    #[test]
    fn evaluation_ignores_jump_order(jumps in prop::collection::vec(jump(), 0..10), which in 0..SOURCES.len()) {
        let m = mixed_model();
        let f = compile(SOURCES[which], &m);
        let forward = JumpPath::from_jumps(jumps.clone()).unwrap();
        let mut rev = jumps;
        rev.reverse();
        let backward = JumpPath::from_jumps(rev).unwrap();
        prop_assert_eq!(f.evaluate(&forward).unwrap().to_bits(), f.evaluate(&backward).unwrap().to_bits());
    }

    #[test]
    fn certified_functionals_ignore_jumps_outside(p in path(), q in path()) {
        let m = mixed_model();
        let outside = a().complement(m.horizon()).unwrap();
        for src in ["count(A)", "pow(sumjumps(A, tx), 2) - count(A)", "exp(-sumjumps(A, x))"] {
            let f = compile(src, &m);
            prop_assert!(f.measurability(&a()).certified);
            let swapped = p.restrict(&a()).merge(&q.restrict(&outside));
            prop_assert_eq!(f.evaluate(&p).unwrap().to_bits(), f.evaluate(&swapped).unwrap().to_bits());
        }
    }

    #[test]
    fn printed_expressions_parse_back(e in expr()) {
        let printed = e.to_string();
        let back = parse(&printed).unwrap();
        prop_assert_eq!(&back, &e, "{}", printed);
    }

    #[test]
    fn product_rule_holds(p in path(), pt in point(), i in 0..SOURCES.len(), j in 0..SOURCES.len()) {
        let m = mixed_model();
        let (f, g) = (compile(SOURCES[i], &m), compile(SOURCES[j], &m));
        let c = product_rule_check(&f, &g, &p, pt).unwrap();
        prop_assert!(c.pass, "{:?}", c);
    }

    #[test]
    fn chain_rule_holds(p in path(), pt in point(), i in 0..SOURCES.len(), lo in -2.0..0.0f64, w in 0.0..3.0f64) {
        let m = mixed_model();
        let f = compile(SOURCES[i], &m);
        for g in [Lipschitz::Clamp { lo, hi: lo + w }, Lipschitz::Min(lo), Lipschitz::Max(lo), Lipschitz::Abs] {
            let c = chain_rule_check(g, &f, &p, pt).unwrap();
            prop_assert!(c.pass, "{:?} {:?}", g, c);
        }
    }

    #[test]
    fn symmetrization_is_idempotent(g in grid(), p in path()) {
        let m = mixed_model();
        let once = g.symmetrize();
        let twice = once.symmetrize();
        for n in 0..=3usize {
            let mut idx = vec![0usize; n];
            loop {
                prop_assert!(close(once.get(&idx), twice.get(&idx)));
                let mut d = 0;
                while d < n && idx[d] == 2 { idx[d] = 0; d += 1; }
                if d == n { break; }
                idx[d] += 1;
            }
        }
        prop_assert!(close(chaos_eval(&m, &p, &g), chaos_eval(&m, &p, &once)));
    }

    #[test]
    fn refinement_preserves_the_functional(g in grid(), p in path()) {
        let m = mixed_model();
        let (fine, parent) = finer();
        let r = g.symmetrize().refine(fine, &parent).unwrap();
        let coarse = chaos_eval(&m, &p, &g);
        let refined = chaos_eval(&m, &p, &r);
        prop_assert!((coarse - refined).abs() <= 1e-10 * (1.0 + coarse.abs()), "{coarse} vs {refined}");
        prop_assert!(close(g.symmetrize().norm_sq(), r.norm_sq()));
    }

    #[test]
    fn young_inequality(x in 0.0..50.0f64, y in 0.0..50.0f64) {
        let (lhs, rhs) = young_check(x, y).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-14) + 1e-14);
    }
}
