use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use irealize_core::arith::SymbolTable;
use irealize_core::corpus::{em_corpus, em_table, sigma01_corpus};
use irealize_core::extraction::extract;
use irealize_core::learning::{learn, State};
use irealize_core::monads::MonadSpec;
use irealize_core::normalizer::{extract_witness, normalize_derivation, NormOptions};
use irealize_core::reals::{constant, convex_angle, least_element, Point, Rat};
use irealize_core::term::normalize;
use num::BigInt;

const FUEL: usize = 1_000_000;

fn rat(p: i64, q: i64) -> Rat {
    Rat::new(BigInt::from(p), BigInt::from(q))
}

fn realizers(c: &mut Criterion) {
    let table = SymbolTable::standard();
    let items = sigma01_corpus(&table);
    let terms: Vec<_> = items
        .iter()
        .map(|i| extract(&i.derivation, &MonadSpec::IDENTITY, &table).expect("extractable"))
        .collect();
    c.bench_function("evaluate sigma01 realizers", |b| {
        b.iter(|| {
            for t in &terms {
                black_box(normalize(t, FUEL).expect("normalizes"));
            }
        })
    });

    let em = em_table();
    let em_items = em_corpus(&em);
    let ir: Vec<_> = em_items
        .iter()
        .map(|i| extract(&i.derivation, &MonadSpec::INTERACTIVE, &em).expect("extractable"))
        .collect();
    c.bench_function("learn em realizers", |b| {
        b.iter(|| {
            for t in &ir {
                black_box(learn(t, &State::new(), FUEL, None).expect("learns"));
            }
        })
    });
    c.bench_function("normalize em derivations", |b| {
        b.iter(|| {
            for i in &em_items {
                black_box(normalize_derivation(&i.derivation, FUEL, NormOptions::default(), &em).expect("normal"));
            }
        })
    });
    c.bench_function("extract em witnesses", |b| {
        b.iter(|| {
            for i in &em_items {
                black_box(extract_witness(&i.derivation, FUEL, &em).expect("witness"));
            }
        })
    });
}

fn reals(c: &mut Criterion) {
    let mut g = c.benchmark_group("least element");
    for n in [4usize, 8, 16] {
        let vals: Vec<_> = (0..n as i64).rev().map(|i| constant(rat(7 * i - 3, 3))).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &vals, |b, vals| {
            b.iter(|| black_box(least_element(vals, 2, None, &State::new()).expect("argmin")))
        });
    }
    g.finish();

    let pts: Vec<Point> = [(0, 0), (7, 1), (2, 9), (3, 4), (1, 5), (6, 3)]
        .iter()
        .map(|&(x, y)| Point::rational(rat(x, 1), rat(y, 1)))
        .collect();
    c.bench_function("convex angle", |b| {
        b.iter(|| black_box(convex_angle(&pts, 64, &State::new()).expect("angle")))
    });
}

criterion_group!(benches, realizers, reals);
criterion_main!(benches);
