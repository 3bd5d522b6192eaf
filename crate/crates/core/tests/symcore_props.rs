use std::collections::BTreeMap;

use proptest::prelude::*;
use repargen::symcore::{parse_expr, rat, Expr, RatFunc, Rational};

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![(-5i64..=5).prop_map(Expr::num), prop::sample::select(vec!["a", "b", "c"]).prop_map(Expr::sym)];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Add),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Mul),
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            (inner, -2i64..=3).prop_map(|(e, k)| Expr::Pow(Box::new(e), rat(k))),
        ]
    })
}

fn point() -> impl Strategy<Value = BTreeMap<String, Rational>> {
    (1i64..40, 1i64..40, -40i64..40).prop_map(|(a, b, c)| {
        BTreeMap::from([("a".to_string(), rat(a)), ("b".to_string(), rat(b) / rat(7)), ("c".to_string(), rat(c))])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_form_preserves_values(e in expr(), p in point()) {
        let Ok(c) = e.canonical() else { return Ok(()) };
        // Where the tree is defined its canonical form agrees with it.
        if let Ok(v) = e.evaluate(&p) {
            prop_assert_eq!(c.evaluate(&p).unwrap(), v);
        }
    }

    #[test]
    fn canonical_form_is_idempotent(e in expr()) {
        let Ok(c) = e.canonical() else { return Ok(()) };
        prop_assert_eq!(Expr::from_ratfunc(&c).canonical().unwrap(), c.clone());
        let printed = Expr::from_ratfunc(&c).to_string();
        prop_assert_eq!(parse_expr(&printed).unwrap().canonical().unwrap(), c);
    }

    #[test]
    fn arithmetic_is_commutative(a in expr(), b in expr()) {
        let (Ok(x), Ok(y)) = (a.canonical(), b.canonical()) else { return Ok(()) };
        prop_assert_eq!(x.add(&y), y.add(&x));
        prop_assert_eq!(x.mul(&y), y.mul(&x));
        prop_assert!(x.sub(&x).is_zero());
        if !y.is_zero() {
            prop_assert_eq!(x.mul(&y).div(&y).unwrap(), x);
        }
    }

    #[test]
    fn derivative_commutes_with_canonical_form(e in expr()) {
        let Ok(c) = e.canonical() else { return Ok(()) };
        let d = e.differentiate("a").unwrap().canonical().unwrap();
        prop_assert_eq!(c.diff("a"), d);
    }

    #[test]
    fn substitution_matches_evaluation(e in expr(), p in point(), k in 1i64..9) {
        let Ok(c) = e.canonical() else { return Ok(()) };
        let bindings = BTreeMap::from([("a".to_string(), RatFunc::sym("b").add(&RatFunc::int(k)))]);
        let Ok(s) = c.try_substitute(&bindings) else { return Ok(()) };
        let mut q = p.clone();
        q.insert("a".into(), &p["b"] + rat(k));
        if let Ok(v) = c.evaluate(&q) {
            prop_assert_eq!(s.evaluate(&p).unwrap(), v);
        }
    }
}
