use irealize_core::arith::{ATerm, SymbolTable};
use irealize_core::corpus::{em_table, DerivGen};
use irealize_core::deduction::{check_derivation, Rule, Sequent};
use irealize_core::extraction::{decorate, outer_type};
use irealize_core::learning::State;
use irealize_core::monads::{check_laws, MonadKind, MonadSpec};
use irealize_core::normalizer::{normalize_derivation, NormOptions};
use irealize_core::reals::{add, constant, least_element, mul, neg, op_at, two_pow_neg, Rat, Real};
use irealize_core::syntax::{derivation_to_string, parse_derivation, parse_term, read_one, term_to_string};
use irealize_core::term::typecheck;
use num::BigInt;
use proptest::prelude::*;

/// A real expression paired with its exact value.
#[derive(Debug, Clone)]
enum Expr {
    Const(i64, i64),
    Add(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    fn real(&self) -> Real {
        match self {
            Expr::Const(p, q) => constant(Rat::new(BigInt::from(*p), BigInt::from(*q))),
            Expr::Add(a, b) => add(&a.real(), &b.real()),
            Expr::Neg(a) => neg(&a.real()),
            Expr::Mul(a, b) => mul(&a.real(), &b.real()),
        }
    }

    fn exact(&self) -> Rat {
        match self {
            Expr::Const(p, q) => Rat::new(BigInt::from(*p), BigInt::from(*q)),
            Expr::Add(a, b) => a.exact() + b.exact(),
            Expr::Neg(a) => -a.exact(),
            Expr::Mul(a, b) => a.exact() * b.exact(),
        }
    }
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = (-20i64..=20, 1i64..=7).prop_map(|(p, q)| Expr::Const(p, q));
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
        ]
    })
}

fn subst_seq(s: &Sequent, x: &str, t: &ATerm) -> Sequent {
    Sequent::new(
        s.ctx.iter().map(|(l, f)| (l.clone(), f.subst(x, t))).collect(),
        s.goal.subst(x, t),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn real_intervals_are_nested_and_contain_value(e in expr()) {
        let r = e.real();
        prop_assert!(r.validate(10).is_ok());
        let v = e.exact();
        for k in 0..10 {
            let (lo, hi) = r.interval(k).unwrap();
            prop_assert!(lo <= v && v <= hi, "k = {}", k);
            prop_assert!(&hi - &lo <= two_pow_neg(k));
        }
    }

    #[test]
    fn op_is_irreflexive_and_monotone(a in expr(), b in expr(), k in 0u32..10, d in 0u32..4) {
        let (r, s) = (a.real(), b.real());
        prop_assert!(!op_at(&r, &r, k).unwrap());
        if op_at(&r, &s, k).unwrap() {
            prop_assert!(op_at(&r, &s, k + d).unwrap());
            prop_assert!(a.exact() < b.exact());
            prop_assert!(!op_at(&s, &r, k).unwrap());
        }
    }

    #[test]
    fn least_element_finds_argmin(vals in prop::collection::btree_set((-40i64..=40, 1i64..=5), 1..8)) {
        let vals: Vec<Rat> = vals.into_iter().map(|(p, q)| Rat::new(BigInt::from(p), BigInt::from(q))).collect();
        let min = vals.iter().min().unwrap().clone();
        let reals: Vec<Real> = vals.iter().cloned().map(constant).collect();
        let le = least_element(&reals, 2, None, &State::new()).unwrap();
        prop_assert_eq!(&vals[le.index], &min);
    }

    #[test]
    fn monad_laws_hold_for_any_seed(seed in any::<u64>()) {
        for k in MonadKind::all() {
            prop_assert!(check_laws(&MonadSpec::new(k), 20, seed).is_ok(), "{}", k);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn derivation_print_parse_round_trip(seed in any::<u64>(), em in any::<bool>()) {
        let table = em_table();
        let d = DerivGen::new(seed, &table, em).derivation(4);
        let s = derivation_to_string(&d);
        let back = parse_derivation(&read_one(&s).unwrap(), &table).unwrap();
        prop_assert_eq!(derivation_to_string(&back), s);
    }

    #[test]
    fn substitution_commutes_with_conclusion(seed in any::<u64>(), n in 0u64..20) {
        let table = SymbolTable::standard();
        let d = DerivGen::new(seed, &table, false).derivation(4);
        let t = ATerm::Num(n);
        for x in d.free_term_vars().iter().chain(std::iter::once(&"z".to_string())) {
            let e = d.subst(x, &t).unwrap();
            let seq = check_derivation(&e, &table).unwrap();
            prop_assert!(seq.equiv(&subst_seq(&d.seq, x, &t)));
        }
    }

    #[test]
    fn normalization_preserves_conclusion(seed in any::<u64>(), em in any::<bool>()) {
        let table = em_table();
        let d = DerivGen::new(seed, &table, em).derivation(4);
        let n = normalize_derivation(&d, 10_000, NormOptions { full: true }, &table).unwrap();
        let seq = check_derivation(&n.derivation, &table).unwrap();
        prop_assert!(seq.equiv(&d.seq));
        prop_assert!(n.derivation.free_term_vars().is_subset(&d.free_term_vars()));
    }

    #[test]
    fn decorations_type_and_round_trip(seed in any::<u64>()) {
        let table = SymbolTable::standard();
        let d = DerivGen::new(seed, &table, false).derivation(3);
        let em_free = d.paths().iter().all(|p| !matches!(d.get(p).unwrap().rule, Rule::EM { .. }));
        prop_assert!(em_free);
        for k in MonadKind::all() {
            let m = MonadSpec::new(k);
            let dec = decorate(&d, &m, &table).unwrap();
            prop_assert_eq!(typecheck(&dec.term, &dec.ctx).unwrap(), outer_type(d.goal(), &m));
            let s = term_to_string(&dec.term);
            let back = parse_term(&read_one(&s).unwrap(), &table).unwrap();
            prop_assert_eq!(term_to_string(&back), s);
        }
    }
}
