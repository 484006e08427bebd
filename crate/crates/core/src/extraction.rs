//! Realizer types of formulas and decoration of derivations with monadic
//! realizers, including the interactive realizer of excluded middle.

use std::sync::Arc;

use thiserror::Error;

use crate::arith::{ATerm, Formula, SymbolTable};
use crate::deduction::{Derivation, Rule};
use crate::learning::AtomRel;
use crate::monads::{raise_n_ne, star_n_ne, MonadKind, MonadSpec};
use crate::term::build::{fresh, lam, Ne};
use crate::term::{ConstId, Guard, Term, TermError, Ty, TyCtx};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error("rule {0} has no decoration in this monad")]
    UnsupportedRule(String),
    #[error("unbound variable {0} during decoration")]
    Unbound(String),
    #[error("malformed derivation: {0}")]
    Malformed(String),
    #[error(transparent)]
    Term(#[from] TermError),
}

/// `|A|`, the type of inner realizers.
pub fn inner_type(a: &Formula, m: &MonadSpec) -> Ty {
    match a {
        Formula::Atom(..) => Ty::Unit,
        Formula::And(x, y) => Ty::prod(inner_type(x, m), inner_type(y, m)),
        Formula::Or(x, y) => Ty::sum(inner_type(x, m), inner_type(y, m)),
        Formula::Imply(x, y) => Ty::arrow(inner_type(x, m), outer_type(y, m)),
        Formula::Forall(_, b) => Ty::arrow(Ty::Nat, outer_type(b, m)),
        Formula::Exists(_, b) => Ty::prod(Ty::Nat, inner_type(b, m)),
    }
}

/// `‖A‖ = T|A|`
pub fn outer_type(a: &Formula, m: &MonadSpec) -> Ty {
    m.t(&inner_type(a, m))
}

pub fn realizer_types(a: &Formula, m: &MonadSpec) -> (Ty, Ty) {
    (inner_type(a, m), outer_type(a, m))
}

/// Canonical inner realizer of `¬P` for an atom: `λ_. unit(unit)`.
fn w_not(m: &MonadSpec) -> Ne {
    lam(Ty::Unit, |_| m.unit_ne(&Ty::Unit).app(Ne::c(ConstId::Unit, vec![])))
}

/// The realizer of `(∀x P) ∨ (∃x ¬P)` with parameters `params`, which
/// replace the free variables of the atom other than `x` in sorted order.
pub fn em_realizer_ne(rel: &Arc<AtomRel>, params: Vec<Ne>) -> Ne {
    let m = MonadSpec::INTERACTIVE;
    let t_unit = m.t(&Ty::Unit);
    let all_ty = Ty::arrow(Ty::Nat, t_unit.clone());
    let ex_ty = Ty::prod(Ty::Nat, Ty::arrow(Ty::Unit, t_unit));
    let em_ty = Ty::sum(all_ty.clone(), ex_ty.clone());
    let query = Ne::c(ConstId::Query(rel.clone()), vec![]);
    let eval = Ne::c(ConstId::Eval(rel.clone()), vec![]);
    lam(Ty::State, |s| {
        let universal = lam(Ty::Nat, |y| {
            lam(Ty::State, |_| eval.clone().apps(params.iter().cloned()).app(y))
        });
        let existential = lam(Ty::Nat, |y| {
            Ne::c(ConstId::Inr, vec![all_ty.clone(), ex_ty.clone()])
                .app(Ne::c(ConstId::Pair, vec![Ty::Nat, Ty::arrow(Ty::Unit, m.t(&Ty::Unit))]).apps([y, w_not(&m)]))
        });
        let body = Ne::c(ConstId::Case, vec![Ty::Unit, Ty::Nat, em_ty.clone()]).apps([
            query.app(s).apps(params.iter().cloned()),
            lam(Ty::Unit, |_| {
                Ne::c(ConstId::Inl, vec![all_ty.clone(), ex_ty.clone()]).app(universal)
            }),
            existential,
        ]);
        Ne::c(ConstId::Inl, vec![em_ty.clone(), Ty::Ex]).app(body)
    })
}

/// Closed EM realizer for an atom whose parameters are given as numerals.
pub fn em_realizer(atom: &Formula, x: &str, params: &[u64]) -> Result<Term, ExtractError> {
    let rel = Arc::new(AtomRel::new(atom, x).map_err(ExtractError::Malformed)?);
    if rel.params.len() != params.len() {
        return Err(ExtractError::Malformed(format!(
            "{} expects {} parameters",
            rel.id,
            rel.params.len()
        )));
    }
    Ok(em_realizer_ne(&rel, params.iter().map(|n| Ne::num(*n)).collect()).closed())
}

/// A decorated derivation: the realizer and the context it lives in.
#[derive(Debug, Clone)]
pub struct Decorated {
    pub term: Term,
    /// Inner types of the root assumptions followed by `Nat` for each free
    /// term variable; the last entry is de Bruijn index 0.
    pub ctx: TyCtx,
    pub names: Vec<String>,
}

struct Decorator<'a> {
    m: MonadSpec,
    table: &'a SymbolTable,
    env: Vec<(String, Ne)>,
}

impl Decorator<'_> {
    fn lookup(&self, name: &str) -> Result<Ne, ExtractError> {
        self.env
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| ExtractError::Unbound(name.to_string()))
    }

    fn aterm(&self, t: &ATerm) -> Result<Ne, ExtractError> {
        Ok(match t {
            ATerm::Var(x) => self.lookup(x)?,
            ATerm::Num(n) => Ne::num(*n),
            ATerm::App(f, args) if args.is_empty() => {
                Ne::num(f.apply(&[]).map_err(|e| ExtractError::Malformed(e.to_string()))?)
            }
            ATerm::App(f, args) => {
                let mut out = Ne::c(ConstId::Fn(f.clone()), vec![]);
                for a in args {
                    out = out.app(self.aterm(a)?);
                }
                out
            }
        })
    }

    fn inner(&self, a: &Formula) -> Ty {
        inner_type(a, &self.m)
    }

    /// Runs `k` with `name` bound to a fresh variable of the given type,
    /// returning the abstraction.
    fn bind(
        &mut self,
        name: &str,
        ty: Ty,
        k: impl FnOnce(&mut Self) -> Result<Ne, ExtractError>,
    ) -> Result<Ne, ExtractError> {
        let id = fresh();
        self.env.push((name.to_string(), Ne::Var(id)));
        let body = k(self);
        self.env.pop();
        Ok(Ne::Lam(id, ty, Box::new(body?)))
    }

    fn dec(&mut self, d: &Derivation) -> Result<Ne, ExtractError> {
        let m = self.m;
        let g = d.goal();
        let ig = self.inner(g);
        let raise = |args: &[Ty], b: &Ty| raise_n_ne(&m, args, b);
        let star = |args: &[Ty], b: &Ty| star_n_ne(&m, args, b);
        Ok(match &d.rule {
            Rule::Id(l) => raise(&[], &ig).app(self.lookup(l)?),
            Rule::AtomI | Rule::AtomE | Rule::FalseE0 | Rule::AtomPost(..) => {
                let k = d.prem.len();
                let units = vec![Ty::Unit; k];
                let mut f = Ne::c(ConstId::Unit, vec![]);
                for _ in 0..k {
                    f = lam(Ty::Unit, |_| f);
                }
                let mut out = raise(&units, &Ty::Unit).app(f);
                for p in &d.prem {
                    out = out.app(self.dec(p)?);
                }
                out
            }
            Rule::AndI => {
                let (a, b) = (self.inner(d.prem[0].goal()), self.inner(d.prem[1].goal()));
                let r1 = self.dec(&d.prem[0])?;
                let r2 = self.dec(&d.prem[1])?;
                raise(&[a.clone(), b.clone()], &ig).apps([Ne::c(ConstId::Pair, vec![a, b]), r1, r2])
            }
            Rule::AndEL | Rule::AndER => {
                let ab = self.inner(d.prem[0].goal());
                let Ty::Prod(a, b) = ab.clone() else {
                    return Err(ExtractError::Malformed("and-elimination on a non-conjunction".into()));
                };
                let c = if d.rule == Rule::AndEL {
                    ConstId::Prl
                } else {
                    ConstId::Prr
                };
                let r = self.dec(&d.prem[0])?;
                raise(&[ab], &ig).apps([Ne::c(c, vec![*a, *b]), r])
            }
            Rule::OrIL | Rule::OrIR => {
                let Ty::Sum(a, b) = ig.clone() else {
                    return Err(ExtractError::Malformed("or-introduction to a non-disjunction".into()));
                };
                let (c, arg) = if d.rule == Rule::OrIL {
                    (ConstId::Inl, (*a).clone())
                } else {
                    (ConstId::Inr, (*b).clone())
                };
                let r = self.dec(&d.prem[0])?;
                raise(&[arg], &ig).apps([Ne::c(c, vec![*a, *b]), r])
            }
            Rule::OrE(l) => {
                let ab = self.inner(d.prem[0].goal());
                let Ty::Sum(a, b) = ab.clone() else {
                    return Err(ExtractError::Malformed("or-elimination on a non-disjunction".into()));
                };
                let r = self.dec(&d.prem[0])?;
                let left = self.bind(l, (*a).clone(), |s| s.dec(&d.prem[1]))?;
                let right = self.bind(l, (*b).clone(), |s| s.dec(&d.prem[2]))?;
                let tc = m.t(&ig);
                let f = lam(ab.clone(), |gamma| {
                    Ne::c(ConstId::Case, vec![*a, *b, tc]).apps([gamma, left, right])
                });
                star(&[ab], &ig).apps([f, r])
            }
            Rule::ImplyI(l) => {
                let Formula::Imply(a, _) = g else {
                    return Err(ExtractError::Malformed("imp-i to a non-implication".into()));
                };
                let ia = self.inner(a);
                let body = self.bind(l, ia, |s| s.dec(&d.prem[0]))?;
                raise(&[], &ig).app(body)
            }
            Rule::ImplyE => {
                let fty = self.inner(d.prem[0].goal());
                let aty = self.inner(d.prem[1].goal());
                let r = self.dec(&d.prem[0])?;
                let ra = self.dec(&d.prem[1])?;
                let apply = lam(fty.clone(), |g1| lam(aty.clone(), |g2| g1.app(g2)));
                star(&[fty, aty], &ig).apps([apply, r, ra])
            }
            Rule::ForallI(y) => {
                let body = self.bind(y, Ty::Nat, |s| s.dec(&d.prem[0]))?;
                raise(&[], &ig).app(body)
            }
            Rule::ForallE(t) => {
                let fty = self.inner(d.prem[0].goal());
                let tt = self.aterm(t)?;
                let r = self.dec(&d.prem[0])?;
                star(std::slice::from_ref(&fty), &ig).apps([lam(fty, |gamma| gamma.app(tt)), r])
            }
            Rule::ExistsI(t) => {
                let a = self.inner(d.prem[0].goal());
                let tt = self.aterm(t)?;
                let r = self.dec(&d.prem[0])?;
                let f = lam(a.clone(), |gamma| {
                    Ne::c(ConstId::Pair, vec![Ty::Nat, a.clone()]).apps([tt, gamma])
                });
                raise(&[a], &ig).apps([f, r])
            }
            Rule::ExistsE(l, y) => {
                let na = self.inner(d.prem[0].goal());
                let Ty::Prod(_, a) = na.clone() else {
                    return Err(ExtractError::Malformed("exists-e on a non-existential".into()));
                };
                let r1 = self.dec(&d.prem[0])?;
                let inner_fn = self.bind(y, Ty::Nat, |s| s.bind(l, (*a).clone(), |s| s.dec(&d.prem[1])))?;
                let f = lam(na.clone(), |gamma| {
                    inner_fn.apps([
                        Ne::c(ConstId::Prl, vec![Ty::Nat, (*a).clone()]).app(gamma.clone()),
                        Ne::c(ConstId::Prr, vec![Ty::Nat, (*a).clone()]).app(gamma),
                    ])
                });
                star(&[na], &ig).apps([f, r1])
            }
            Rule::CInd(l, y) => {
                let Formula::Forall(_, a) = g else {
                    return Err(ExtractError::Malformed("cind to a non-universal".into()));
                };
                let ta = m.t(&self.inner(a));
                let hyp_ty = Ty::arrow(Ty::Nat, m.t(&Ty::arrow(Ty::Unit, ta.clone())));
                let raise0 = raise(&[], &Ty::arrow(Ty::Unit, ta.clone()));
                let body = self.bind(y, Ty::Nat, |s| {
                    let alpha_fn = s.bind(l, hyp_ty.clone(), |s| s.dec(&d.prem[0]))?;
                    Ok(lam(Ty::arrow(Ty::Nat, ta.clone()), |beta| {
                        alpha_fn.app(lam(Ty::Nat, |z| raise0.app(lam(Ty::Unit, |_| beta.app(z)))))
                    }))
                })?;
                let rec = Ne::c(ConstId::Rec(Guard::Inf), vec![ta]).app(body);
                raise(&[], &ig).app(rec)
            }
            Rule::Ind { label, var, main, .. } => {
                // course-of-values recursion with a zero test through eval
                let ta = m.t(&ig);
                let zero_rel = self.zero_test()?;
                let pred = self
                    .table
                    .func("pred")
                    .map_err(|e| ExtractError::Malformed(e.to_string()))?;
                let base = self.dec(&d.prem[0])?;
                let step = self.bind(var, Ty::Nat, |s| s.bind(label, ig.clone(), |s| s.dec(&d.prem[1])))?;
                let main = self.aterm(main)?;
                let h = lam(Ty::Nat, |n| {
                    lam(Ty::arrow(Ty::Nat, ta.clone()), |beta| {
                        let prev = Ne::c(ConstId::Fn(pred), vec![]).app(n.clone());
                        let succ_case = lam(Ty::Ex, |_| {
                            let with_y = step.clone().app(prev.clone());
                            star(std::slice::from_ref(&ig), &ig).apps([with_y, beta.app(prev)])
                        });
                        Ne::c(ConstId::Case, vec![Ty::Unit, Ty::Ex, ta.clone()]).apps([
                            Ne::c(ConstId::Eval(zero_rel), vec![]).app(n),
                            lam(Ty::Unit, |_| base),
                            succ_case,
                        ])
                    })
                });
                Ne::c(ConstId::Rec(Guard::Inf), vec![ta]).apps([h, main])
            }
            Rule::EM { label, var, x, atom } => {
                if m.kind != MonadKind::Interactive {
                    return Err(ExtractError::UnsupportedRule(format!("em under the {} monad", m.kind)));
                }
                let rel = Arc::new(AtomRel::new(atom, x).map_err(ExtractError::Malformed)?);
                let params = rel
                    .params
                    .iter()
                    .map(|p| self.lookup(p))
                    .collect::<Result<Vec<_>, _>>()?;
                let t_unit = m.t(&Ty::Unit);
                let all_ty = Ty::arrow(Ty::Nat, t_unit.clone());
                let neg_ty = Ty::arrow(Ty::Unit, t_unit);
                let ex_ty = Ty::prod(Ty::Nat, neg_ty.clone());
                let em_ty = Ty::sum(all_ty.clone(), ex_ty.clone());
                let left = self.bind(label, all_ty.clone(), |s| s.dec(&d.prem[0]))?;
                let right = self.bind(var, Ty::Nat, |s| s.bind(label, neg_ty.clone(), |s| s.dec(&d.prem[1])))?;
                let tc = m.t(&ig);
                let f = lam(em_ty.clone(), |gamma| {
                    let split = lam(ex_ty.clone(), |g2| {
                        right.apps([
                            Ne::c(ConstId::Prl, vec![Ty::Nat, neg_ty.clone()]).app(g2.clone()),
                            Ne::c(ConstId::Prr, vec![Ty::Nat, neg_ty.clone()]).app(g2),
                        ])
                    });
                    Ne::c(ConstId::Case, vec![all_ty.clone(), ex_ty.clone(), tc]).apps([gamma, left, split])
                });
                star(&[em_ty], &ig).apps([f, em_realizer_ne(&rel, params)])
            }
        })
    }

    fn zero_test(&self) -> Result<Arc<AtomRel>, ExtractError> {
        let eq = self
            .table
            .rel("eq")
            .map_err(|e| ExtractError::Malformed(e.to_string()))?;
        let atom = Formula::atom(&eq, vec![ATerm::var("n"), ATerm::Num(0)]);
        AtomRel::new(&atom, "n").map(Arc::new).map_err(ExtractError::Malformed)
    }
}

/// Decorates a checked derivation with realizers of the given monad.
pub fn decorate(d: &Derivation, m: &MonadSpec, table: &SymbolTable) -> Result<Decorated, ExtractError> {
    let mut dec = Decorator {
        m: *m,
        table,
        env: Vec::new(),
    };
    let mut ids = Vec::new();
    let mut names = Vec::new();
    let mut tys = Vec::new();
    for (l, f) in &d.seq.ctx {
        let id = fresh();
        dec.env.push((l.clone(), Ne::Var(id)));
        ids.push(id);
        names.push(l.clone());
        tys.push(inner_type(f, m));
    }
    let mut fv: Vec<String> = d.free_term_vars().into_iter().collect();
    for (_, f) in &d.seq.ctx {
        fv.extend(f.free_vars());
    }
    fv.sort();
    fv.dedup();
    for x in fv {
        let id = fresh();
        dec.env.push((x.clone(), Ne::Var(id)));
        ids.push(id);
        names.push(x);
        tys.push(Ty::Nat);
    }
    let ne = dec.dec(d)?;
    let term = ne.to_term(&mut ids)?;
    Ok(Decorated {
        term,
        ctx: TyCtx(tys),
        names,
    })
}

/// Realizer of a closed derivation with no open assumptions.
pub fn extract(d: &Derivation, m: &MonadSpec, table: &SymbolTable) -> Result<Term, ExtractError> {
    let dd = decorate(d, m, table)?;
    if !dd.names.is_empty() {
        return Err(ExtractError::Malformed(format!(
            "derivation is open in {}",
            dd.names.join(", ")
        )));
    }
    Ok(dd.term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deduction::build::*;
    use crate::deduction::{check_derivation, PostRule};
    use crate::learning::{run_realizer, Outcome, State};
    use crate::term::{normalize, typecheck};

    fn eq(a: ATerm, b: ATerm) -> Formula {
        Formula::atom(&SymbolTable::standard().rel("eq").unwrap(), vec![a, b])
    }

    #[test]
    fn atom_types() {
        let m = MonadSpec::INTERACTIVE;
        let p = eq(ATerm::Num(0), ATerm::Num(0));
        assert_eq!(realizer_types(&p, &m), (Ty::Unit, m.t(&Ty::Unit)));
        let pq = Formula::and(p.clone(), p.clone());
        assert_eq!(inner_type(&pq, &m), Ty::prod(Ty::Unit, Ty::Unit));
    }

    #[test]
    fn em_inner_type() {
        let table = SymbolTable::standard();
        let m = MonadSpec::INTERACTIVE;
        let p = eq(ATerm::var("x"), ATerm::var("a"));
        let em = Formula::or(
            Formula::forall("x", p.clone()),
            Formula::exists("x", Formula::not(p, &table.bot())),
        );
        let tu = m.t(&Ty::Unit);
        let want = Ty::sum(
            Ty::arrow(Ty::Nat, tu.clone()),
            Ty::prod(Ty::Nat, Ty::arrow(Ty::Unit, tu)),
        );
        assert_eq!(inner_type(&em, &m), want);
        let r = em_realizer(&eq(ATerm::var("x"), ATerm::var("a")), "x", &[3]).unwrap();
        assert_eq!(typecheck(&r, &TyCtx::new()).unwrap(), m.t(&want));
    }

    #[test]
    fn exists_two_extracts_pair() {
        let table = SymbolTable::standard();
        let goal = Formula::exists("x", eq(ATerm::var("x"), ATerm::Num(2)));
        let d = exists_i(goal, ATerm::Num(2), atom_i(eq(ATerm::Num(2), ATerm::Num(2)))).with_context(vec![], &table);
        check_derivation(&d, &table).unwrap();
        let r = extract(&d, &MonadSpec::INTERACTIVE, &table).unwrap();
        match run_realizer(&r, &State::new(), 10_000).unwrap() {
            Outcome::Regular(v) => assert_eq!(v, Term::pair(&Ty::Nat, &Ty::Unit, Term::Num(2), Term::unit())),
            other => panic!("{other:?}"),
        }
        let id = extract(&d, &MonadSpec::IDENTITY, &table).unwrap();
        assert_eq!(
            normalize(&id, 1000).unwrap(),
            Term::pair(&Ty::Nat, &Ty::Unit, Term::Num(2), Term::unit())
        );
    }

    #[test]
    fn em_realizer_branches() {
        let atom = eq(ATerm::var("x"), ATerm::var("a"));
        let r = em_realizer(&atom, "x", &[4]).unwrap();
        // empty state: universal branch
        let Outcome::Regular(v) = run_realizer(&r, &State::new(), 10_000).unwrap() else {
            panic!()
        };
        let (h, _) = v.spine();
        assert!(matches!(h, Term::Const(ConstId::Inl, _)));
        // the universal realizer at a refuting point raises
        let rel = Arc::new(AtomRel::new(&atom, "x").unwrap());
        let uni = Term::app(
            Term::app(v.spine().1[0].clone(), Term::Num(5)),
            Term::state(State::new()),
        );
        let out = crate::learning::classify(&normalize(&uni, 10_000).unwrap()).unwrap();
        let Outcome::Exceptional(e) = out else { panic!() };
        assert_eq!(
            (e.rel_id(), e.args().to_vec(), e.witness()),
            (rel.id.clone(), vec![4], 5)
        );
        // seeded state: existential branch with the stored witness
        let s = State::new().extend(&e).unwrap();
        let Outcome::Regular(v) = run_realizer(&r, &s, 10_000).unwrap() else {
            panic!()
        };
        let (h, args) = v.spine();
        assert!(matches!(h, Term::Const(ConstId::Inr, _)));
        let (_, pair) = args[0].spine();
        assert_eq!(pair[0], &Term::Num(5));
    }

    #[test]
    fn cind_decorates_at_outer_type() {
        let table = SymbolTable::standard();
        // ∀x (x = x) by complete induction, ignoring the hypothesis
        let goal = Formula::forall("x", eq(ATerm::var("x"), ATerm::var("x")));
        let prem = post(PostRule::EqRefl, vec![ATerm::var("y")], vec![], &table);
        let d =
            Derivation::node(Rule::CInd("h".into(), "y".into()), goal.clone(), vec![prem]).with_context(vec![], &table);
        check_derivation(&d, &table).unwrap();
        for k in MonadKind::all() {
            let m = MonadSpec::new(k);
            let r = extract(&d, &m, &table).unwrap();
            assert_eq!(typecheck(&r, &TyCtx::new()).unwrap(), outer_type(&goal, &m));
        }
    }
}
