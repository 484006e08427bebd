//! Syntactic monads: identity, exceptions and interactive realizability,
//! with the `star_k` / `raise_k` families and an extensional law checker.

use std::fmt;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::arith::{ATerm, Formula, SymbolTable};
use crate::learning::{AtomRel, Decidable, Exception, State};
use crate::term::build::{lam, Ne};
use crate::term::{normalize, typecheck, ConstId, Term, TermError, Ty, TyCtx};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonadKind {
    Identity,
    Exception,
    Interactive,
}

impl MonadKind {
    pub fn all() -> [MonadKind; 3] {
        [MonadKind::Identity, MonadKind::Exception, MonadKind::Interactive]
    }
}

impl std::str::FromStr for MonadKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "id" | "identity" => Ok(MonadKind::Identity),
            "exc" | "exception" => Ok(MonadKind::Exception),
            "ir" | "interactive" => Ok(MonadKind::Interactive),
            _ => Err(format!("unknown monad {s} (expected id, exc or ir)")),
        }
    }
}

impl fmt::Display for MonadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MonadKind::Identity => "identity",
            MonadKind::Exception => "exception",
            MonadKind::Interactive => "interactive",
        })
    }
}

/// A type operator with closed `unit`, `star` and `merge` terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonadSpec {
    pub kind: MonadKind,
}

fn ex() -> Ty {
    Ty::Ex
}

fn c(c: ConstId, tys: Vec<Ty>) -> Ne {
    Ne::c(c, tys)
}

impl MonadSpec {
    pub const IDENTITY: MonadSpec = MonadSpec {
        kind: MonadKind::Identity,
    };
    pub const EXCEPTION: MonadSpec = MonadSpec {
        kind: MonadKind::Exception,
    };
    pub const INTERACTIVE: MonadSpec = MonadSpec {
        kind: MonadKind::Interactive,
    };

    pub fn new(kind: MonadKind) -> MonadSpec {
        MonadSpec { kind }
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    /// `T A`
    pub fn t(&self, a: &Ty) -> Ty {
        match self.kind {
            MonadKind::Identity => a.clone(),
            MonadKind::Exception => Ty::sum(a.clone(), ex()),
            MonadKind::Interactive => Ty::arrow(Ty::State, Ty::sum(a.clone(), ex())),
        }
    }

    pub fn unit_ne(&self, a: &Ty) -> Ne {
        let a = a.clone();
        match self.kind {
            MonadKind::Identity => lam(a, |x| x),
            MonadKind::Exception => lam(a.clone(), |x| c(ConstId::Inl, vec![a, ex()]).app(x)),
            MonadKind::Interactive => lam(a.clone(), |x| lam(Ty::State, |_| c(ConstId::Inl, vec![a, ex()]).app(x))),
        }
    }

    pub fn star_ne(&self, a: &Ty, b: &Ty) -> Ne {
        let (a, b) = (a.clone(), b.clone());
        let fty = Ty::arrow(a.clone(), self.t(&b));
        match self.kind {
            MonadKind::Identity => lam(fty, |f| lam(a, |x| f.app(x))),
            MonadKind::Exception => lam(fty, |f| {
                lam(self.t(&a), |m| {
                    c(ConstId::Case, vec![a.clone(), ex(), Ty::sum(b.clone(), ex())]).apps([
                        m,
                        f,
                        c(ConstId::Inr, vec![b.clone(), ex()]),
                    ])
                })
            }),
            MonadKind::Interactive => lam(fty, |f| {
                lam(self.t(&a), |m| {
                    lam(Ty::State, |s| {
                        c(ConstId::Case, vec![a.clone(), ex(), Ty::sum(b.clone(), ex())]).apps([
                            m.app(s.clone()),
                            lam(a.clone(), |x| f.app(x).app(s)),
                            c(ConstId::Inr, vec![b.clone(), ex()]),
                        ])
                    })
                })
            }),
        }
    }

    pub fn merge_ne(&self, a: &Ty, b: &Ty) -> Ne {
        let (a, b) = (a.clone(), b.clone());
        let ab = Ty::prod(a.clone(), b.clone());
        let out = Ty::sum(ab.clone(), ex());
        // case analysis shared by the exception and interactive monads
        let body = |ma: Ne, mb: Ne| {
            c(ConstId::Case, vec![a.clone(), ex(), out.clone()]).apps([
                ma,
                lam(a.clone(), |x| {
                    c(ConstId::Case, vec![b.clone(), ex(), out.clone()]).apps([
                        mb.clone(),
                        lam(b.clone(), |y| {
                            c(ConstId::Inl, vec![ab.clone(), ex()])
                                .app(c(ConstId::Pair, vec![a.clone(), b.clone()]).apps([x, y]))
                        }),
                        c(ConstId::Inr, vec![ab.clone(), ex()]),
                    ])
                }),
                lam(ex(), |e1| {
                    c(ConstId::Case, vec![b.clone(), ex(), out.clone()]).apps([
                        mb.clone(),
                        lam(b.clone(), |_| c(ConstId::Inr, vec![ab.clone(), ex()]).app(e1.clone())),
                        lam(ex(), |e2| {
                            c(ConstId::Inr, vec![ab.clone(), ex()])
                                .app(c(ConstId::ExMerge, vec![]).apps([e1.clone(), e2]))
                        }),
                    ])
                }),
            ])
        };
        match self.kind {
            MonadKind::Identity => lam(a.clone(), |x| {
                lam(b.clone(), |y| c(ConstId::Pair, vec![a.clone(), b.clone()]).apps([x, y]))
            }),
            MonadKind::Exception => lam(self.t(&a), |ma| lam(self.t(&b), |mb| body(ma, mb))),
            MonadKind::Interactive => lam(self.t(&a), |ma| {
                lam(self.t(&b), |mb| lam(Ty::State, |s| body(ma.app(s.clone()), mb.app(s))))
            }),
        }
    }

    pub fn unit_of(&self, a: &Ty) -> Term {
        self.unit_ne(a).closed()
    }
    pub fn star_of(&self, a: &Ty, b: &Ty) -> Term {
        self.star_ne(a, b).closed()
    }
    pub fn merge_of(&self, a: &Ty, b: &Ty) -> Term {
        self.merge_ne(a, b).closed()
    }

    /// The computation that raises `e` at type `a`.
    pub fn raise_exc(&self, a: &Ty, e: Term) -> Result<Term, TermError> {
        let inr = Term::inr(a, &Ty::Ex, e);
        match self.kind {
            MonadKind::Identity => Err(TermError::IllTyped("the identity monad has no exceptions".into())),
            MonadKind::Exception => Ok(inr),
            MonadKind::Interactive => Ok(Term::lam(Ty::State, inr)),
        }
    }
}

/// `(unit, star, merge)` at `A`, `B`.
pub fn monad_terms(m: &MonadSpec, a: &Ty, b: &Ty) -> (Term, Term, Term) {
    (m.unit_of(a), m.star_of(a, b), m.merge_of(a, b))
}

/// `star_k : (A1 → … → Ak → TB) → (TA1 → … → TAk → TB)`.
pub fn star_n_ne(m: &MonadSpec, args: &[Ty], b: &Ty) -> Ne {
    match args {
        [] => lam(m.t(b), |f| f),
        [a] => m.star_ne(a, b),
        [a1, a2, rest @ ..] => {
            let fty = Ty::arrows(args, m.t(b));
            let pair_ty = Ty::prod(a1.clone(), a2.clone());
            let mut inner_args = vec![pair_ty.clone()];
            inner_args.extend(rest.iter().cloned());
            lam(fty, |f| {
                lam(m.t(a1), |x| {
                    lam(m.t(a2), |y| {
                        let uncurried = lam(pair_ty.clone(), |z| {
                            f.apps([
                                c(ConstId::Prl, vec![a1.clone(), a2.clone()]).app(z.clone()),
                                c(ConstId::Prr, vec![a1.clone(), a2.clone()]).app(z),
                            ])
                        });
                        star_n_ne(m, &inner_args, b).apps([uncurried, m.merge_ne(a1, a2).apps([x, y])])
                    })
                })
            })
        }
    }
}

pub fn star_n(m: &MonadSpec, args: &[Ty], b: &Ty) -> Term {
    star_n_ne(m, args, b).closed()
}

/// `raise_k : (A1 → … → Ak → B) → (TA1 → … → TAk → TB)`.
pub fn raise_n_ne(m: &MonadSpec, args: &[Ty], b: &Ty) -> Ne {
    lam(Ty::arrows(args, b.clone()), |f| {
        let body = curried(args, f, &|applied| m.unit_ne(b).app(applied));
        star_n_ne(m, args, b).app(body)
    })
}

/// `λx1..xk. k(f x1 .. xk)`
fn curried(args: &[Ty], f: Ne, k: &dyn Fn(Ne) -> Ne) -> Ne {
    match args {
        [] => k(f),
        [a, rest @ ..] => lam(a.clone(), |x| curried(rest, f.app(x), k)),
    }
}

pub fn raise_n(m: &MonadSpec, args: &[Ty], b: &Ty) -> Term {
    raise_n_ne(m, args, b).closed()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Law {
    M1,
    M2,
    M3,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{monad} monad violates {law:?}: {lhs} vs {rhs}")]
pub struct LawViolation {
    pub monad: String,
    pub law: Law,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LawReport {
    pub monad: String,
    pub samples: usize,
    pub checks: usize,
}

/// Random ground data for law checking.
pub struct Sampler {
    rng: StdRng,
    rel: Arc<AtomRel>,
}

impl Sampler {
    pub fn new(seed: u64) -> Sampler {
        let table = SymbolTable::standard();
        let eq = table.rel("eq").expect("standard eq");
        let atom = Formula::atom(&eq, vec![ATerm::var("a"), ATerm::var("x")]);
        Sampler {
            rng: StdRng::seed_from_u64(seed),
            rel: Arc::new(AtomRel::new(&atom, "x").expect("atom")),
        }
    }

    pub fn rng(&mut self) -> &mut StdRng {
        &mut self.rng
    }

    pub fn ty(&mut self) -> Ty {
        match self.rng.gen_range(0..4) {
            0 => Ty::Nat,
            1 => Ty::Unit,
            2 => Ty::prod(Ty::Nat, Ty::Nat),
            _ => Ty::sum(Ty::Nat, Ty::Unit),
        }
    }

    pub fn value(&mut self, ty: &Ty) -> Term {
        match ty {
            Ty::Unit => Term::unit(),
            Ty::Prod(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                Term::pair(a, b, x, y)
            }
            Ty::Sum(a, b) => {
                if self.rng.gen_bool(0.5) {
                    let x = self.value(a);
                    Term::inl(a, b, x)
                } else {
                    let y = self.value(b);
                    Term::inr(a, b, y)
                }
            }
            _ => Term::Num(self.rng.gen_range(0..20)),
        }
    }

    /// A counterexample to `a = x`: key `a`, witness `w ≠ a`.
    pub fn exception(&mut self) -> Exception {
        let a = self.rng.gen_range(0..4);
        let w = a + self.rng.gen_range(1..5);
        Exception::new(self.rel.clone() as Arc<dyn Decidable>, vec![a], w).expect("a ≠ w")
    }

    pub fn state(&mut self) -> State {
        let mut s = State::new();
        for _ in 0..self.rng.gen_range(0..4) {
            let e = self.exception();
            if let Some(t) = s.extend(&e) {
                s = t;
            }
        }
        s
    }

    fn exc_term(&mut self) -> Term {
        Term::c(ConstId::ExcLit(self.exception()), vec![])
    }

    /// A computation of type `T a`, possibly exceptional or state dependent.
    pub fn computation(&mut self, m: &MonadSpec, a: &Ty) -> Term {
        let v = self.value(a);
        let choice = match m.kind {
            MonadKind::Identity => 0,
            MonadKind::Exception => self.rng.gen_range(0..2),
            MonadKind::Interactive => self.rng.gen_range(0..3),
        };
        match choice {
            0 => Term::app(m.unit_of(a), v),
            1 => {
                let e = self.exc_term();
                m.raise_exc(a, e).expect("monad with exceptions")
            }
            _ => {
                // λs. case (query s n) (λ_. inl v) (λ_. inl v' or inr e)
                let v2 = self.value(a);
                let other = if self.rng.gen_bool(0.5) {
                    Term::inl(a, &Ty::Ex, v2)
                } else {
                    Term::inr(a, &Ty::Ex, self.exc_term())
                };
                let n = self.rng.gen_range(0..4);
                let out = Ty::sum(a.clone(), Ty::Ex);
                let q = Term::apps(
                    Term::c(ConstId::Query(self.rel.clone()), vec![]),
                    [Term::Var(0), Term::Num(n)],
                );
                Term::lam(
                    Ty::State,
                    Term::apps(
                        Term::c(ConstId::Case, vec![Ty::Unit, Ty::Nat, out]),
                        [
                            q,
                            Term::lam(Ty::Unit, Term::inl(a, &Ty::Ex, v)),
                            Term::lam(Ty::Nat, other),
                        ],
                    ),
                )
            }
        }
    }

    /// A function `a → T b` ignoring or passing on its argument.
    pub fn function(&mut self, m: &MonadSpec, a: &Ty, b: &Ty) -> Term {
        if a == b && self.rng.gen_bool(0.3) {
            return m.unit_of(a);
        }
        let body = self.computation(m, b).shift(1, 0);
        Term::lam(a.clone(), body)
    }
}

/// Applies a computation to a state when the monad is interactive, then
/// normalizes to a ground observation.
fn observe(m: &MonadSpec, t: Term, s: &State, fuel: usize) -> Result<Term, TermError> {
    let t = match m.kind {
        MonadKind::Interactive => Term::app(t, Term::state(s.clone())),
        _ => t,
    };
    normalize(&t, fuel)
}

/// Checks M1–M3 on `samples` random instances of each law.
pub fn check_laws(m: &MonadSpec, samples: usize, seed: u64) -> Result<LawReport, LawViolation> {
    let mut g = Sampler::new(seed);
    let fuel = 100_000;
    let mut checks = 0;
    let states: Vec<State> = (0..3).map(|_| g.state()).collect();
    let show = |r: Result<Term, TermError>| match r {
        Ok(t) => crate::syntax::term_to_string(&t),
        Err(e) => format!("<{e}>"),
    };
    for _ in 0..samples {
        let a = g.ty();
        let b = g.ty();
        let mv = g.computation(m, &a);
        let f = g.function(m, &a, &b);
        let x = g.value(&a);
        let y = g.value(&b);
        let laws = [
            (Law::M1, Term::apps(m.star_of(&a, &a), [m.unit_of(&a), mv.clone()]), mv),
            (
                Law::M2,
                Term::apps(m.star_of(&a, &b), [f.clone(), Term::app(m.unit_of(&a), x.clone())]),
                Term::app(f, x.clone()),
            ),
            (
                Law::M3,
                Term::apps(
                    m.merge_of(&a, &b),
                    [Term::app(m.unit_of(&a), x.clone()), Term::app(m.unit_of(&b), y.clone())],
                ),
                Term::app(m.unit_of(&Ty::prod(a.clone(), b.clone())), Term::pair(&a, &b, x, y)),
            ),
        ];
        for (law, lhs, rhs) in laws {
            for s in &states {
                let l = observe(m, lhs.clone(), s, fuel);
                let r = observe(m, rhs.clone(), s, fuel);
                checks += 1;
                if l.is_err() || l != r {
                    return Err(LawViolation {
                        monad: m.name(),
                        law,
                        lhs: show(l),
                        rhs: show(r),
                    });
                }
                if m.kind != MonadKind::Interactive {
                    break;
                }
            }
        }
    }
    Ok(LawReport {
        monad: m.name(),
        samples,
        checks,
    })
}

/// Typechecks `unit`, `star` and `merge` at `a`, `b` against their signatures.
pub fn check_signatures(m: &MonadSpec, a: &Ty, b: &Ty) -> Result<(), TermError> {
    let (u, s, mg) = monad_terms(m, a, b);
    let expect = [
        (u, Ty::arrow(a.clone(), m.t(a))),
        (s, Ty::arrow(Ty::arrow(a.clone(), m.t(b)), Ty::arrow(m.t(a), m.t(b)))),
        (mg, Ty::arrows(&[m.t(a), m.t(b)], m.t(&Ty::prod(a.clone(), b.clone())))),
    ];
    for (t, ty) in expect {
        let got = typecheck(&t, &TyCtx::new())?;
        if got != ty {
            return Err(TermError::TypeMismatch {
                expected: ty,
                found: got,
                position: "root".into(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_unit_is_identity() {
        assert_eq!(MonadSpec::IDENTITY.unit_of(&Ty::Nat), Term::lam(Ty::Nat, Term::Var(0)));
    }

    #[test]
    fn interactive_unit_shape() {
        let u = MonadSpec::INTERACTIVE.unit_of(&Ty::Nat);
        let expected = Term::lam(
            Ty::Nat,
            Term::lam(Ty::State, Term::inl(&Ty::Nat, &Ty::Ex, Term::Var(1))),
        );
        assert_eq!(u, expected);
    }

    #[test]
    fn signatures_typecheck() {
        let tys = [
            Ty::Nat,
            Ty::Unit,
            Ty::prod(Ty::Nat, Ty::Unit),
            Ty::arrow(Ty::Nat, Ty::Nat),
        ];
        for m in MonadKind::all() {
            for a in &tys {
                for b in &tys {
                    check_signatures(&MonadSpec::new(m), a, b).unwrap();
                }
            }
        }
    }

    #[test]
    fn star_n_types() {
        for m in MonadKind::all() {
            let m = MonadSpec::new(m);
            for k in 0..5 {
                let args: Vec<Ty> = (0..k).map(|i| if i % 2 == 0 { Ty::Nat } else { Ty::Unit }).collect();
                let b = Ty::Nat;
                let expected = Ty::arrow(
                    Ty::arrows(&args, m.t(&b)),
                    Ty::arrows(&args.iter().map(|a| m.t(a)).collect::<Vec<_>>(), m.t(&b)),
                );
                assert_eq!(typecheck(&star_n(&m, &args, &b), &TyCtx::new()).unwrap(), expected);
                let expected = Ty::arrow(
                    Ty::arrows(&args, b.clone()),
                    Ty::arrows(&args.iter().map(|a| m.t(a)).collect::<Vec<_>>(), m.t(&b)),
                );
                assert_eq!(typecheck(&raise_n(&m, &args, &b), &TyCtx::new()).unwrap(), expected);
            }
        }
    }

    #[test]
    fn star_zero_and_one() {
        let m = MonadSpec::EXCEPTION;
        assert_eq!(star_n(&m, &[], &Ty::Nat), Term::lam(m.t(&Ty::Nat), Term::Var(0)));
        assert_eq!(star_n(&m, &[Ty::Unit], &Ty::Nat), m.star_of(&Ty::Unit, &Ty::Nat));
    }

    #[test]
    fn exception_merge_of_two_exceptions() {
        let m = MonadSpec::EXCEPTION;
        let mut g = Sampler::new(7);
        let e1 = g.exception();
        let e2 = g.exception();
        let lit = |e: &Exception| Term::c(ConstId::ExcLit(e.clone()), vec![]);
        let t = Term::apps(
            m.merge_of(&Ty::Nat, &Ty::Nat),
            [
                Term::inr(&Ty::Nat, &Ty::Ex, lit(&e1)),
                Term::inr(&Ty::Nat, &Ty::Ex, lit(&e2)),
            ],
        );
        let pair = Ty::prod(Ty::Nat, Ty::Nat);
        assert_eq!(normalize(&t, 1000).unwrap(), Term::inr(&pair, &Ty::Ex, lit(&e1)));
    }

    #[test]
    fn raise_one_of_identity_function() {
        for k in MonadKind::all() {
            let m = MonadSpec::new(k);
            let t = Term::apps(
                raise_n(&m, &[Ty::Nat], &Ty::Nat),
                [
                    Term::lam(Ty::Nat, Term::Var(0)),
                    Term::app(m.unit_of(&Ty::Nat), Term::Num(5)),
                ],
            );
            let s = State::new();
            assert_eq!(
                observe(&m, t, &s, 1000).unwrap(),
                observe(&m, Term::app(m.unit_of(&Ty::Nat), Term::Num(5)), &s, 1000).unwrap()
            );
        }
    }

    #[test]
    fn laws_hold_small() {
        for k in MonadKind::all() {
            check_laws(&MonadSpec::new(k), 50, 1).unwrap();
        }
    }
}
