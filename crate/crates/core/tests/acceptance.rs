//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use irealize_core::arith::{atomic_truth, ATerm, Formula, SymbolTable};
use irealize_core::corpus::{brute_force_witness, em_corpus, em_table, sigma01_corpus, DerivGen};
use irealize_core::deduction::{check_derivation, Derivation, Rule};
use irealize_core::extraction::{decorate, em_realizer, extract, outer_type};
use irealize_core::learning::{classify, run_realizer, spot_check_realizes, AtomRel, Decidable, Outcome, State};
use irealize_core::monads::{check_laws, MonadKind, MonadSpec};
use irealize_core::normalizer::{all_cuts, apply_head_reduction, extract_witness, NormOptions};
use irealize_core::reals::{
    add, constant, convex_angle, exact_side, least_element, mul, neg, op_at, Point, Rat, Real, Side,
};
use irealize_core::term::{as_numeral, normalize, typecheck, ConstId, Term};
use num::BigInt;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

const SEED: u64 = 20_240_611;
const FUEL: usize = 1_000_000;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn monad_laws() -> Verdict {
    let mut total = 0;
    for k in MonadKind::all() {
        let r = check_laws(&MonadSpec::new(k), 1000, SEED).map_err(|v| v.to_string())?;
        ensure(r.samples >= 1000, || format!("{k}: only {} samples", r.samples))?;
        total += r.checks;
    }
    Ok(format!("3 monads x 1000 samples, {total} law checks, 0 violations"))
}

fn decoration_typing() -> Verdict {
    let table = SymbolTable::standard();
    let mut count = 0;
    let mut typed = 0;
    for (i, em) in (0..240u64).map(|i| (i, i % 3 == 0)) {
        let d = DerivGen::new(SEED + i, &table, em).derivation(4);
        let uses_em = d
            .paths()
            .iter()
            .any(|p| matches!(d.get(p).unwrap().rule, Rule::EM { .. }));
        let monads: Vec<MonadSpec> = if uses_em {
            vec![MonadSpec::INTERACTIVE]
        } else {
            MonadKind::all().into_iter().map(MonadSpec::new).collect()
        };
        for m in monads {
            let dec = decorate(&d, &m, &table).map_err(|e| format!("derivation {i}, {}: {e}", m.name()))?;
            let ty = typecheck(&dec.term, &dec.ctx).map_err(|e| format!("derivation {i}, {}: {e}", m.name()))?;
            ensure(ty == outer_type(d.goal(), &m), || {
                format!("derivation {i}, {}: {ty} is not {}", m.name(), outer_type(d.goal(), &m))
            })?;
            typed += 1;
        }
        count += 1;
    }
    Ok(format!("{count} checked derivations, {typed} decorations typed"))
}

fn pair_head(v: &Term) -> Option<u64> {
    let (h, args) = v.spine();
    match (h, args.as_slice()) {
        (Term::Const(ConstId::Pair, _), [n, _]) => as_numeral(n),
        _ => None,
    }
}

fn ha_soundness() -> Verdict {
    let table = SymbolTable::standard();
    let corpus = sigma01_corpus(&table);
    let m = MonadSpec::INTERACTIVE;
    for it in &corpus {
        let r = extract(&it.derivation, &m, &table).map_err(|e| format!("{}: {e}", it.name))?;
        let out = run_realizer(&r, &State::new(), FUEL).map_err(|e| format!("{}: {e}", it.name))?;
        let Outcome::Regular(v) = out else {
            return Err(format!("{}: exceptional outcome under the empty state", it.name));
        };
        let verdict = spot_check_realizes(&v, it.derivation.goal(), &State::new(), 8, FUEL);
        ensure(verdict.is_ok(), || format!("{}: spot check {verdict:?}", it.name))?;
        let w = pair_head(&v).ok_or_else(|| format!("{}: no witness in {v:?}", it.name))?;
        let brute = brute_force_witness(it.derivation.goal(), 10_000);
        ensure(Some(w) == brute, || {
            format!("{}: witness {w}, brute force {brute:?}", it.name)
        })?;
    }
    Ok(format!(
        "{} closed derivations, witnesses match brute force",
        corpus.len()
    ))
}

fn em_soundness() -> Verdict {
    let table = SymbolTable::standard();
    let mut rng = StdRng::seed_from_u64(SEED);
    let rels = ["eq", "lt", "le", "not-eq"];
    let (mut raised, mut passed) = (0, 0);
    for case in 0..500 {
        let rel = table.rel(rels[rng.gen_range(0..rels.len())]).unwrap();
        let mul = table.func("mul").unwrap();
        let lhs = if rng.gen_bool(0.5) {
            ATerm::var("x")
        } else {
            ATerm::app(&mul, vec![ATerm::var("x"), ATerm::Num(rng.gen_range(1..4))])
        };
        let atom = Formula::atom(&rel, vec![lhs, ATerm::var("a")]);
        let p = rng.gen_range(0..20u64);
        let r = em_realizer(&atom, "x", &[p]).map_err(|e| e.to_string())?;
        let dec = AtomRel::new(&atom, "x").map_err(|e| e.to_string())?;

        // (a) the empty state answers with the universal branch
        let Outcome::Regular(v) = run_realizer(&r, &State::new(), FUEL).map_err(|e| e.to_string())? else {
            return Err(format!("case {case}: exception from the empty state"));
        };
        let (h, args) = v.spine();
        ensure(matches!(h, Term::Const(ConstId::Inl, _)), || {
            format!("case {case}: not the universal branch")
        })?;
        let univ = args[0].clone();
        for n in 0..6 {
            let t = Term::app(Term::app(univ.clone(), Term::Num(n)), Term::state(State::new()));
            let out = classify(&normalize(&t, FUEL).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let holds = dec.holds(&[p], n)?;
            match out {
                Outcome::Regular(_) => {
                    ensure(holds, || format!("case {case}: instance {n} false but accepted"))?;
                    passed += 1;
                }
                Outcome::Exceptional(e) => {
                    ensure(!holds, || format!("case {case}: instance {n} true but raised"))?;
                    ensure(State::new().properly_extended_by(&e), || {
                        format!("case {case}: improper extension")
                    })?;
                    ensure(e.witness() == n && e.args() == [p], || {
                        format!("case {case}: wrong exception")
                    })?;
                    raised += 1;
                }
            }
        }

        // (b) a seeded state answers with the stored witness
        let Some(w) = (0..200).find(|&w| !dec.holds(&[p], w).unwrap()) else {
            continue;
        };
        let e = irealize_core::learning::Exception::new(std::sync::Arc::new(dec.clone()), vec![p], w)
            .map_err(|e| format!("case {case}: {e}"))?;
        let s = State::new().extend(&e).unwrap();
        let Outcome::Regular(v) = run_realizer(&r, &s, FUEL).map_err(|e| e.to_string())? else {
            return Err(format!("case {case}: exception from a seeded state"));
        };
        let (h, args) = v.spine();
        ensure(matches!(h, Term::Const(ConstId::Inr, _)), || {
            format!("case {case}: not the existential branch")
        })?;
        let got = pair_head(args[0]).ok_or_else(|| format!("case {case}: no witness"))?;
        ensure(got == w, || format!("case {case}: witness {got}, stored {w}"))?;
        ensure(!dec.holds(&[p], got).unwrap(), || {
            format!("case {case}: ¬P fails at {got}")
        })?;
    }
    Ok(format!("500 cases, {passed} instances accepted, {raised} raised"))
}

fn witness_extraction() -> Verdict {
    let table = em_table();
    let corpus = em_corpus(&table);
    ensure(corpus.len() >= 10, || format!("only {} corpus items", corpus.len()))?;
    let mut steps = 0;
    for it in &corpus {
        let w = extract_witness(&it.derivation, 100_000, &table).map_err(|e| format!("{}: {e}", it.name))?;
        ensure(matches!(w.normal.rule, Rule::ExistsI(_)), || {
            format!("{}: normal form ends in {}", it.name, w.normal.rule.name())
        })?;
        let Formula::Exists(x, a) = it.derivation.goal() else {
            return Err(format!("{}: not existential", it.name));
        };
        let ok = atomic_truth(&a.subst(x, &ATerm::Num(w.value))).map_err(|e| e.to_string())?;
        ensure(ok, || format!("{}: witness {} fails the atom", it.name, w.value))?;
        steps += w.trace.len();
    }
    Ok(format!("{} derivations, {steps} rewrites in total", corpus.len()))
}

fn random_rat(rng: &mut StdRng, span: i64) -> Rat {
    Rat::new(
        BigInt::from(rng.gen_range(-span..=span)),
        BigInt::from(rng.gen_range(1..=6i64)),
    )
}

fn least_element_demo() -> Verdict {
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut worst = 0;
    for trial in 0..100 {
        let n = rng.gen_range(1..=10usize);
        let mut vals: Vec<Rat> = Vec::new();
        while vals.len() < n {
            let q = random_rat(&mut rng, 50);
            if !vals.contains(&q) {
                vals.push(q);
            }
        }
        let reals: Vec<Real> = vals.iter().cloned().map(constant).collect();
        let le = least_element(&reals, 2, None, &State::new()).map_err(|e| format!("trial {trial}: {e}"))?;
        let argmin = (0..n).min_by(|&i, &j| vals[i].cmp(&vals[j])).unwrap();
        ensure(le.index == argmin, || {
            format!("trial {trial}: index {} not argmin {argmin}", le.index)
        })?;
        let b = le.learned.backtracks();
        ensure(b < 1 << n, || format!("trial {trial}: {b} backtracks for n = {n}"))?;
        worst = worst.max(b);

        let mut sorted = reals.clone();
        sorted.swap(0, argmin);
        let first = least_element(&sorted, 2, None, &State::new()).map_err(|e| e.to_string())?;
        ensure(first.index == 0 && first.learned.backtracks() == 0, || {
            format!(
                "trial {trial}: minimal-first input backtracked {} times",
                first.learned.backtracks()
            )
        })?;
    }
    Ok(format!("100/100 argmin, max {worst} backtracks, minimal-first 0"))
}

fn random_real(rng: &mut StdRng, depth: u32) -> Real {
    if depth == 0 || rng.gen_bool(0.3) {
        return constant(random_rat(rng, 6));
    }
    match rng.gen_range(0..3) {
        0 => add(&random_real(rng, depth - 1), &random_real(rng, depth - 1)),
        1 => neg(&random_real(rng, depth - 1)),
        _ => mul(&random_real(rng, depth - 1), &random_real(rng, depth - 1)),
    }
}

fn op_rules() -> Verdict {
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut trans_used = 0;
    for i in 0..1000 {
        let (r, s, t) = (
            random_real(&mut rng, 3),
            random_real(&mut rng, 3),
            random_real(&mut rng, 3),
        );
        let (k, l) = (rng.gen_range(0..12u32), rng.gen_range(0..12u32));
        let op = |a: &Real, b: &Real, k| op_at(a, b, k).map_err(|e| format!("sample {i}: {e}"));
        if op(&r, &s, k)? {
            ensure(op(&r, &s, k + 1 + rng.gen_range(0..4))?, || {
                format!("sample {i}: OP-mon fails")
            })?;
        }
        ensure(!op(&r, &r, k)?, || format!("sample {i}: OP-irrefl fails"))?;
        if op(&r, &s, k)? && op(&s, &t, l)? {
            ensure(op(&r, &t, k.max(l))?, || format!("sample {i}: OP-trans fails"))?;
            trans_used += 1;
        }
    }
    ensure(trans_used > 50, || {
        format!("OP-trans premisses held only {trans_used} times")
    })?;
    Ok(format!("1000 samples, OP-trans premisses held {trans_used} times"))
}

fn convex_angle_demo() -> Verdict {
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut backtracks = 0;
    let mut trial = 0;
    while trial < 50 {
        let n = rng.gen_range(3..=8usize);
        let pts: Vec<(Rat, Rat)> = (0..n)
            .map(|_| (random_rat(&mut rng, 20), random_rat(&mut rng, 20)))
            .collect();
        let collinear =
            (0..n).any(|i| (i + 1..n).any(|j| (j + 1..n).any(|k| exact_side(&pts[i], &pts[j], &pts[k]).is_none())));
        if collinear {
            continue;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let points: Vec<Point> = order
            .iter()
            .map(|&i| Point::rational(pts[i].0.clone(), pts[i].1.clone()))
            .collect();
        let exact: Vec<(Rat, Rat)> = order.iter().map(|&i| pts[i].clone()).collect();
        let r = convex_angle(&points, 64, &State::new()).map_err(|e| format!("trial {trial}: {e}"))?;
        for d in 0..n {
            if d == r.a {
                continue;
            }
            if d != r.b {
                ensure(
                    exact_side(&exact[r.a], &exact[r.b], &exact[d]) == Some(Side::Left),
                    || format!("trial {trial}: point {d} not left of ({}, {})", r.a, r.b),
                )?;
            }
            if d != r.c {
                ensure(
                    exact_side(&exact[r.a], &exact[r.c], &exact[d]) == Some(Side::Right),
                    || format!("trial {trial}: point {d} not right of ({}, {})", r.a, r.c),
                )?;
            }
        }
        backtracks += r.learned.backtracks();
        trial += 1;
    }
    Ok(format!(
        "50 point sets, bounding condition exact, {backtracks} backtracks in total"
    ))
}

fn subject_reduction() -> Verdict {
    let table = em_table();
    let em_items = em_corpus(&table);
    let mut rng = StdRng::seed_from_u64(SEED);
    let opts = NormOptions { full: true };
    let mut rewrites = 0;
    let mut seed = SEED;
    let mut kinds = std::collections::BTreeSet::new();
    while rewrites < 1000 {
        seed += 1;
        let mut d: Derivation = if seed.is_multiple_of(7) {
            em_items[(seed / 7) as usize % em_items.len()].derivation.clone()
        } else {
            DerivGen::new(seed, &table, seed.is_multiple_of(2)).derivation(5)
        };
        for _ in 0..4 {
            let cuts = all_cuts(&d, opts);
            let Some(cut) = cuts.choose(&mut rng) else { break };
            let next = apply_head_reduction(&d, cut, &table).map_err(|e| format!("seed {seed}: {e}"))?;
            let seq = check_derivation(&next, &table).map_err(|e| format!("seed {seed}, {}: {e}", cut.kind))?;
            ensure(seq.equiv(&d.seq), || {
                format!("seed {seed}, {}: conclusion changed", cut.kind)
            })?;
            ensure(next.free_term_vars().is_subset(&d.free_term_vars()), || {
                format!("seed {seed}, {}: new free term variables", cut.kind)
            })?;
            kinds.insert(cut.kind.to_string());
            d = next;
            rewrites += 1;
        }
    }
    let kinds: Vec<String> = kinds.into_iter().collect();
    Ok(format!("{rewrites} rewrites ({})", kinds.join(" ")))
}

/// Name, check and time limit in seconds.
type Criterion = (&'static str, fn() -> Verdict, u64);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("monad laws", monad_laws, 10),
        ("decoration typing", decoration_typing, 30),
        ("HA soundness", ha_soundness, 30),
        ("EM realizer", em_soundness, 30),
        ("witness extraction", witness_extraction, 60),
        ("least element", least_element_demo, 10),
        ("op rules", op_rules, 30),
        ("convex angle", convex_angle_demo, 60),
        ("subject reduction", subject_reduction, 60),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let r = f();
        let dt = t0.elapsed();
        let r = r.and_then(|m| {
            if dt > Duration::from_secs(*limit) {
                Err(format!("took {dt:.1?}, limit {limit} s"))
            } else {
                Ok(m)
            }
        });
        match r {
            Ok(msg) => println!("criterion {} {name}: PASS ({dt:.2?}) {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({dt:.2?}) {msg}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
