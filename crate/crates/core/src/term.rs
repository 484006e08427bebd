//! System T' with state and exception constants: types, de Bruijn terms,
//! type checking and leftmost-innermost reduction.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::arith::FnSym;
use crate::learning::{AtomRel, Decidable, Exception, State};

pub const DEFAULT_FUEL: usize = 1_000_000;

/// Fuel from `REALIZER_FUEL`, falling back to [`DEFAULT_FUEL`].
pub fn default_fuel() -> usize {
    std::env::var("REALIZER_FUEL")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_FUEL)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ty {
    Unit,
    Nat,
    State,
    Ex,
    Arrow(Box<Ty>, Box<Ty>),
    Prod(Box<Ty>, Box<Ty>),
    Sum(Box<Ty>, Box<Ty>),
}

impl Ty {
    pub fn arrow(a: Ty, b: Ty) -> Ty {
        Ty::Arrow(Box::new(a), Box::new(b))
    }
    pub fn prod(a: Ty, b: Ty) -> Ty {
        Ty::Prod(Box::new(a), Box::new(b))
    }
    pub fn sum(a: Ty, b: Ty) -> Ty {
        Ty::Sum(Box::new(a), Box::new(b))
    }
    /// `a1 -> .. -> an -> r`
    pub fn arrows(args: &[Ty], r: Ty) -> Ty {
        args.iter().rev().fold(r, |acc, a| Ty::arrow(a.clone(), acc))
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Unit => write!(f, "Unit"),
            Ty::Nat => write!(f, "Nat"),
            Ty::State => write!(f, "State"),
            Ty::Ex => write!(f, "Ex"),
            Ty::Arrow(a, b) => write!(f, "(-> {a} {b})"),
            Ty::Prod(a, b) => write!(f, "(* {a} {b})"),
            Ty::Sum(a, b) => write!(f, "(+ {a} {b})"),
        }
    }
}

/// Bound of a guarded recursor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Guard {
    Fin(u64),
    Inf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstId {
    Unit,
    Pair,
    Prl,
    Prr,
    Inl,
    Inr,
    Case,
    Zero,
    Succ,
    Rec(Guard),
    ExMerge,
    Query(Arc<AtomRel>),
    Eval(Arc<AtomRel>),
    Fn(Arc<FnSym>),
    StateLit(Arc<State>),
    ExcLit(Exception),
}

impl ConstId {
    /// Number of type parameters the constant expects.
    pub fn type_params(&self) -> usize {
        match self {
            ConstId::Pair | ConstId::Prl | ConstId::Prr | ConstId::Inl | ConstId::Inr => 2,
            ConstId::Case => 3,
            ConstId::Rec(_) => 1,
            _ => 0,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ConstId::Unit => "unit".into(),
            ConstId::Pair => "pair".into(),
            ConstId::Prl => "prl".into(),
            ConstId::Prr => "prr".into(),
            ConstId::Inl => "inl".into(),
            ConstId::Inr => "inr".into(),
            ConstId::Case => "case".into(),
            ConstId::Zero => "zero".into(),
            ConstId::Succ => "succ".into(),
            ConstId::Rec(Guard::Inf) => "rec-inf".into(),
            ConstId::Rec(Guard::Fin(n)) => format!("rec-{n}"),
            ConstId::ExMerge => "exmerge".into(),
            ConstId::Query(p) => format!("query[{}]", p.id),
            ConstId::Eval(p) => format!("eval[{}]", p.id),
            ConstId::Fn(f) => f.name.clone(),
            ConstId::StateLit(_) => "state".into(),
            ConstId::ExcLit(_) => "exc".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(usize),
    Lam(Ty, Box<Term>),
    App(Box<Term>, Box<Term>),
    Const(ConstId, Vec<Ty>),
    Num(u64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TermError {
    #[error("unbound variable {0}")]
    UnboundVariable(usize),
    #[error("type mismatch at {position}: expected {expected}, found {found}")]
    TypeMismatch { expected: Ty, found: Ty, position: String },
    #[error("ill-typed term: {0}")]
    IllTyped(String),
    #[error("fuel exhausted after {0} steps")]
    FuelExhausted(usize),
    #[error("no dummy value of type {0}")]
    NoDummy(Ty),
    #[error("evaluation failed: {0}")]
    Eval(String),
}

/// De Bruijn typing context; the last entry is variable 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TyCtx(pub Vec<Ty>);

impl TyCtx {
    pub fn new() -> Self {
        TyCtx(Vec::new())
    }
    pub fn lookup(&self, i: usize) -> Option<&Ty> {
        let n = self.0.len();
        if i < n {
            Some(&self.0[n - 1 - i])
        } else {
            None
        }
    }
}

impl Term {
    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }
    pub fn apps(f: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(f, Term::app)
    }
    pub fn lam(ty: Ty, body: Term) -> Term {
        Term::Lam(ty, Box::new(body))
    }
    pub fn c(c: ConstId, tys: Vec<Ty>) -> Term {
        Term::Const(c, tys)
    }
    pub fn unit() -> Term {
        Term::Const(ConstId::Unit, vec![])
    }
    pub fn pair(a: &Ty, b: &Ty, x: Term, y: Term) -> Term {
        Term::apps(Term::c(ConstId::Pair, vec![a.clone(), b.clone()]), [x, y])
    }
    pub fn inl(a: &Ty, b: &Ty, x: Term) -> Term {
        Term::app(Term::c(ConstId::Inl, vec![a.clone(), b.clone()]), x)
    }
    pub fn inr(a: &Ty, b: &Ty, x: Term) -> Term {
        Term::app(Term::c(ConstId::Inr, vec![a.clone(), b.clone()]), x)
    }
    pub fn state(s: State) -> Term {
        Term::Const(ConstId::StateLit(Arc::new(s)), vec![])
    }

    /// Head and argument list of an application spine.
    pub fn spine(&self) -> (&Term, Vec<&Term>) {
        let mut args = Vec::new();
        let mut t = self;
        while let Term::App(f, a) = t {
            args.push(&**a);
            t = f;
        }
        args.reverse();
        (t, args)
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Const(..) | Term::Num(_) => 1,
            Term::Lam(_, b) => 1 + b.size(),
            Term::App(f, a) => 1 + f.size() + a.size(),
        }
    }

    fn max_free(&self, depth: usize) -> Option<usize> {
        match self {
            Term::Var(i) if *i >= depth => Some(i - depth),
            Term::Var(_) | Term::Const(..) | Term::Num(_) => None,
            Term::Lam(_, b) => b.max_free(depth + 1),
            Term::App(f, a) => match (f.max_free(depth), a.max_free(depth)) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn is_closed(&self) -> bool {
        self.max_free(0).is_none()
    }

    /// Shifts free variables at or above `cutoff` by `d`.
    pub fn shift(&self, d: usize, cutoff: usize) -> Term {
        match self {
            Term::Var(i) if *i >= cutoff => Term::Var(i + d),
            Term::Var(_) | Term::Const(..) | Term::Num(_) => self.clone(),
            Term::Lam(ty, b) => Term::lam(ty.clone(), b.shift(d, cutoff + 1)),
            Term::App(f, a) => Term::app(f.shift(d, cutoff), a.shift(d, cutoff)),
        }
    }

    /// `self[0 := s]`, lowering the remaining free variables.
    pub fn instantiate(&self, s: &Term) -> Term {
        let closed = s.is_closed();
        self.subst_at(0, s, closed)
    }

    fn subst_at(&self, depth: usize, s: &Term, closed: bool) -> Term {
        match self {
            Term::Var(i) if *i == depth => {
                if closed || depth == 0 {
                    s.clone()
                } else {
                    s.shift(depth, 0)
                }
            }
            Term::Var(i) if *i > depth => Term::Var(i - 1),
            Term::Var(_) | Term::Const(..) | Term::Num(_) => self.clone(),
            Term::Lam(ty, b) => Term::lam(ty.clone(), b.subst_at(depth + 1, s, closed)),
            Term::App(f, a) => Term::app(f.subst_at(depth, s, closed), a.subst_at(depth, s, closed)),
        }
    }

    /// Rewrites `succ` chains over zero to compact numerals.
    pub fn canonical(&self) -> Term {
        if let Some(n) = as_numeral(self) {
            return Term::Num(n);
        }
        match self {
            Term::Lam(ty, b) => Term::lam(ty.clone(), b.canonical()),
            Term::App(f, a) => Term::app(f.canonical(), a.canonical()),
            _ => self.clone(),
        }
    }
}

/// Returns `n` iff `t` is `succ^n(0)` (in either numeral representation).
pub fn as_numeral(t: &Term) -> Option<u64> {
    match t {
        Term::Num(n) => Some(*n),
        Term::Const(ConstId::Zero, _) => Some(0),
        Term::App(f, a) => match &**f {
            Term::Const(ConstId::Succ, _) => as_numeral(a)?.checked_add(1),
            _ => None,
        },
        _ => None,
    }
}

fn param(tys: &[Ty], i: usize, c: &ConstId) -> Result<Ty, TermError> {
    tys.get(i).cloned().ok_or_else(|| {
        TermError::IllTyped(format!(
            "constant {} expects {} type parameters",
            c.name(),
            c.type_params()
        ))
    })
}

/// The type of a constant at its type parameters.
pub fn const_type(c: &ConstId, tys: &[Ty]) -> Result<Ty, TermError> {
    if tys.len() != c.type_params() {
        return Err(TermError::IllTyped(format!(
            "constant {} expects {} type parameters, got {}",
            c.name(),
            c.type_params(),
            tys.len()
        )));
    }
    let p = |i| param(tys, i, c);
    Ok(match c {
        ConstId::Unit => Ty::Unit,
        ConstId::Pair => Ty::arrows(&[p(0)?, p(1)?], Ty::prod(p(0)?, p(1)?)),
        ConstId::Prl => Ty::arrow(Ty::prod(p(0)?, p(1)?), p(0)?),
        ConstId::Prr => Ty::arrow(Ty::prod(p(0)?, p(1)?), p(1)?),
        ConstId::Inl => Ty::arrow(p(0)?, Ty::sum(p(0)?, p(1)?)),
        ConstId::Inr => Ty::arrow(p(1)?, Ty::sum(p(0)?, p(1)?)),
        ConstId::Case => Ty::arrows(
            &[Ty::sum(p(0)?, p(1)?), Ty::arrow(p(0)?, p(2)?), Ty::arrow(p(1)?, p(2)?)],
            p(2)?,
        ),
        ConstId::Zero => Ty::Nat,
        ConstId::Succ => Ty::arrow(Ty::Nat, Ty::Nat),
        ConstId::Rec(_) => {
            let cty = p(0)?;
            let h = Ty::arrows(&[Ty::Nat, Ty::arrow(Ty::Nat, cty.clone())], cty.clone());
            Ty::arrows(&[h, Ty::Nat], cty)
        }
        ConstId::ExMerge => Ty::arrows(&[Ty::Ex, Ty::Ex], Ty::Ex),
        ConstId::Query(p) => {
            let mut args = vec![Ty::State];
            args.extend(std::iter::repeat_n(Ty::Nat, p.params.len()));
            Ty::arrows(&args, Ty::sum(Ty::Unit, Ty::Nat))
        }
        ConstId::Eval(p) => {
            let args: Vec<Ty> = std::iter::repeat_n(Ty::Nat, p.params.len() + 1).collect();
            Ty::arrows(&args, Ty::sum(Ty::Unit, Ty::Ex))
        }
        ConstId::Fn(f) => {
            let args: Vec<Ty> = std::iter::repeat_n(Ty::Nat, f.arity()).collect();
            Ty::arrows(&args, Ty::Nat)
        }
        ConstId::StateLit(_) => Ty::State,
        ConstId::ExcLit(_) => Ty::Ex,
    })
}

/// The unique type of `t` under `ctx`.
pub fn typecheck(t: &Term, ctx: &TyCtx) -> Result<Ty, TermError> {
    let mut ctx = ctx.clone();
    let mut path = Vec::new();
    tc(t, &mut ctx, &mut path)
}

fn tc(t: &Term, ctx: &mut TyCtx, path: &mut Vec<&'static str>) -> Result<Ty, TermError> {
    match t {
        Term::Var(i) => ctx.lookup(*i).cloned().ok_or(TermError::UnboundVariable(*i)),
        Term::Num(_) => Ok(Ty::Nat),
        Term::Const(c, tys) => const_type(c, tys),
        Term::Lam(ty, b) => {
            ctx.0.push(ty.clone());
            path.push("body");
            let r = tc(b, ctx, path);
            path.pop();
            ctx.0.pop();
            Ok(Ty::arrow(ty.clone(), r?))
        }
        Term::App(f, a) => {
            path.push("fn");
            let ft = tc(f, ctx, path)?;
            path.pop();
            path.push("arg");
            let at = tc(a, ctx, path)?;
            path.pop();
            match ft {
                Ty::Arrow(dom, cod) => {
                    if *dom == at {
                        Ok(*cod)
                    } else {
                        Err(TermError::TypeMismatch {
                            expected: *dom,
                            found: at,
                            position: position(path),
                        })
                    }
                }
                other => Err(TermError::TypeMismatch {
                    expected: Ty::arrow(at, Ty::Unit),
                    found: other,
                    position: position(path),
                }),
            }
        }
    }
}

fn position(path: &[&'static str]) -> String {
    if path.is_empty() {
        "root".into()
    } else {
        path.join(".")
    }
}

/// The default inhabitant of a type, used when a guarded recursor runs out.
pub fn dummy(ty: &Ty) -> Result<Term, TermError> {
    Ok(match ty {
        Ty::Unit => Term::unit(),
        Ty::Nat => Term::Num(0),
        Ty::Arrow(a, b) => Term::lam((**a).clone(), dummy(b)?),
        Ty::Prod(a, b) => Term::pair(a, b, dummy(a)?, dummy(b)?),
        Ty::Sum(a, b) => Term::inl(a, b, dummy(a)?),
        Ty::State | Ty::Ex => return Err(TermError::NoDummy(ty.clone())),
    })
}

/// Arity of the delta rule of a constant, when it has one.
fn redex_arity(c: &ConstId) -> Option<usize> {
    match c {
        ConstId::Prl | ConstId::Prr => Some(1),
        ConstId::Case => Some(3),
        ConstId::Rec(_) => Some(2),
        ConstId::ExMerge => Some(2),
        ConstId::Query(p) => Some(p.params.len() + 1),
        ConstId::Eval(p) => Some(p.params.len() + 1),
        ConstId::Fn(f) if f.arity() > 0 => Some(f.arity()),
        _ => None,
    }
}

/// Observer for query evaluations, used to count the keys a run touches.
pub trait QueryObserver {
    fn queried(&mut self, rel: &AtomRel, args: &[u64]);
}

impl QueryObserver for () {
    fn queried(&mut self, _: &AtomRel, _: &[u64]) {}
}

/// Contracts `t` when it is itself a redex.
fn contract(t: &Term, obs: &mut dyn QueryObserver) -> Result<Option<Term>, TermError> {
    if let Term::App(f, a) = t {
        if let Term::Lam(_, b) = &**f {
            return Ok(Some(b.instantiate(a)));
        }
    }
    let (head, args) = t.spine();
    let (c, tys) = match head {
        Term::Const(c, tys) => (c, tys),
        _ => return Ok(None),
    };
    match redex_arity(c) {
        Some(n) if n == args.len() => {}
        _ => return Ok(None),
    }
    let numerals = |xs: &[&Term]| -> Option<Vec<u64>> { xs.iter().map(|x| as_numeral(x)).collect() };
    match c {
        ConstId::Prl | ConstId::Prr => {
            let (h, xs) = args[0].spine();
            if matches!(h, Term::Const(ConstId::Pair, _)) && xs.len() == 2 {
                let i = if matches!(c, ConstId::Prl) { 0 } else { 1 };
                return Ok(Some(xs[i].clone()));
            }
            Ok(None)
        }
        ConstId::Case => {
            let (h, xs) = args[0].spine();
            if xs.len() != 1 {
                return Ok(None);
            }
            match h {
                Term::Const(ConstId::Inl, _) => Ok(Some(Term::app(args[1].clone(), xs[0].clone()))),
                Term::Const(ConstId::Inr, _) => Ok(Some(Term::app(args[2].clone(), xs[0].clone()))),
                _ => Ok(None),
            }
        }
        ConstId::Rec(g) => {
            let Some(m) = as_numeral(args[1]) else {
                return Ok(None);
            };
            let unfold = match g {
                Guard::Inf => true,
                Guard::Fin(n) => m < *n,
            };
            if unfold {
                let inner = Term::app(Term::Const(ConstId::Rec(Guard::Fin(m)), tys.clone()), args[0].clone());
                Ok(Some(Term::apps(args[0].clone(), [Term::Num(m), inner])))
            } else {
                Ok(Some(dummy(&tys[0])?))
            }
        }
        ConstId::ExMerge => Ok(Some(args[0].clone())),
        ConstId::Fn(f) => match numerals(&args) {
            Some(ns) => Ok(Some(Term::Num(
                f.apply(&ns).map_err(|e| TermError::Eval(e.to_string()))?,
            ))),
            None => Ok(None),
        },
        ConstId::Query(p) => {
            let Term::Const(ConstId::StateLit(s), _) = args[0] else {
                return Ok(None);
            };
            let Some(ns) = numerals(&args[1..]) else {
                return Ok(None);
            };
            obs.queried(p, &ns);
            Ok(Some(match s.query(&p.id, &ns) {
                None => Term::inl(&Ty::Unit, &Ty::Nat, Term::unit()),
                Some(w) => Term::inr(&Ty::Unit, &Ty::Nat, Term::Num(w)),
            }))
        }
        ConstId::Eval(p) => {
            let Some(ns) = numerals(&args) else {
                return Ok(None);
            };
            let (params, w) = ns.split_at(ns.len() - 1);
            let holds = p.holds(params, w[0]).map_err(TermError::Eval)?;
            if holds {
                Ok(Some(Term::inl(&Ty::Unit, &Ty::Ex, Term::unit())))
            } else {
                let e = Exception::new(p.clone(), params.to_vec(), w[0]).map_err(TermError::Eval)?;
                Ok(Some(Term::inr(
                    &Ty::Unit,
                    &Ty::Ex,
                    Term::Const(ConstId::ExcLit(e), vec![]),
                )))
            }
        }
        _ => Ok(None),
    }
}

fn step_in(t: &Term, leftmost: bool, obs: &mut dyn QueryObserver) -> Result<Option<Term>, TermError> {
    match t {
        Term::Var(_) | Term::Const(..) | Term::Num(_) => Ok(None),
        Term::Lam(ty, b) => Ok(step_in(b, leftmost, obs)?.map(|b2| Term::lam(ty.clone(), b2))),
        Term::App(f, a) => {
            if leftmost {
                if let Some(f2) = step_in(f, leftmost, obs)? {
                    return Ok(Some(Term::app(f2, (**a).clone())));
                }
                if let Some(a2) = step_in(a, leftmost, obs)? {
                    return Ok(Some(Term::app((**f).clone(), a2)));
                }
            } else {
                if let Some(a2) = step_in(a, leftmost, obs)? {
                    return Ok(Some(Term::app((**f).clone(), a2)));
                }
                if let Some(f2) = step_in(f, leftmost, obs)? {
                    return Ok(Some(Term::app(f2, (**a).clone())));
                }
            }
            contract(t, obs)
        }
    }
}

/// One leftmost-innermost reduction step; absent on normal forms.
/// Refuses ill-typed closed terms.
pub fn step(t: &Term) -> Result<Option<Term>, TermError> {
    if t.is_closed() {
        typecheck(t, &TyCtx::new())?;
    }
    step_in(t, true, &mut ())
}

/// One rightmost-innermost step, used to sample confluence.
pub fn step_rightmost(t: &Term) -> Result<Option<Term>, TermError> {
    step_in(t, false, &mut ())
}

/// Normalization by iterating a single-step strategy.
pub fn normalize_by_steps(t: &Term, fuel: usize, leftmost: bool) -> Result<Term, TermError> {
    let mut cur = t.clone();
    for _ in 0..fuel {
        match step_in(&cur, leftmost, &mut ())? {
            Some(next) => cur = next,
            None => return Ok(cur.canonical()),
        }
    }
    Err(TermError::FuelExhausted(fuel))
}

struct Machine<'a> {
    fuel: usize,
    used: usize,
    obs: &'a mut dyn QueryObserver,
}

impl Machine<'_> {
    fn tick(&mut self) -> Result<(), TermError> {
        if self.used >= self.fuel {
            return Err(TermError::FuelExhausted(self.used));
        }
        self.used += 1;
        Ok(())
    }

    fn nf(&mut self, t: &Term) -> Result<Term, TermError> {
        match t {
            Term::Var(_) | Term::Const(..) | Term::Num(_) => Ok(t.clone()),
            Term::Lam(ty, b) => Ok(Term::lam(ty.clone(), self.nf(b)?)),
            Term::App(f, a) => {
                let f2 = self.nf(f)?;
                let a2 = self.nf(a)?;
                self.reduce_app(f2, a2)
            }
        }
    }

    /// Applies a normal function to a normal argument and normalizes.
    fn reduce_app(&mut self, f: Term, a: Term) -> Result<Term, TermError> {
        if let Term::Lam(_, b) = &f {
            self.tick()?;
            let r = b.instantiate(&a);
            return self.nf(&r);
        }
        let t = Term::app(f, a);
        match contract(&t, self.obs)? {
            Some(r) => {
                self.tick()?;
                self.nf(&r)
            }
            None => Ok(t),
        }
    }
}

/// Normal form of `t` within `fuel` contractions, innermost first.
pub fn normalize(t: &Term, fuel: usize) -> Result<Term, TermError> {
    normalize_observed(t, fuel, &mut ()).map(|(t, _)| t)
}

/// Like [`normalize`], reporting queries and the number of contractions.
pub fn normalize_observed(t: &Term, fuel: usize, obs: &mut dyn QueryObserver) -> Result<(Term, usize), TermError> {
    let mut m = Machine { fuel, used: 0, obs };
    let r = m.nf(t)?;
    Ok((r.canonical(), m.used))
}

/// Terms with named binders, converted to de Bruijn form on demand.
pub mod build {
    use super::*;

    pub type Id = usize;

    static NEXT: AtomicUsize = AtomicUsize::new(1);

    pub fn fresh() -> Id {
        NEXT.fetch_add(1, Ordering::Relaxed)
    }

    #[derive(Debug, Clone)]
    pub enum Ne {
        Var(Id),
        Lam(Id, Ty, Box<Ne>),
        App(Box<Ne>, Box<Ne>),
        /// A closed de Bruijn term.
        Closed(Term),
    }

    impl Ne {
        pub fn c(c: ConstId, tys: Vec<Ty>) -> Ne {
            Ne::Closed(Term::Const(c, tys))
        }
        pub fn num(n: u64) -> Ne {
            Ne::Closed(Term::Num(n))
        }
        pub fn app(self, a: Ne) -> Ne {
            Ne::App(Box::new(self), Box::new(a))
        }
        pub fn apps(self, args: impl IntoIterator<Item = Ne>) -> Ne {
            args.into_iter().fold(self, Ne::app)
        }

        /// Converts to a de Bruijn term; `scope` lists enclosing binders,
        /// innermost last.
        pub fn to_term(&self, scope: &mut Vec<Id>) -> Result<Term, TermError> {
            Ok(match self {
                Ne::Var(id) => {
                    let pos = scope
                        .iter()
                        .rposition(|x| x == id)
                        .ok_or_else(|| TermError::IllTyped(format!("unbound named variable {id}")))?;
                    Term::Var(scope.len() - 1 - pos)
                }
                Ne::Lam(id, ty, b) => {
                    scope.push(*id);
                    let body = b.to_term(scope);
                    scope.pop();
                    Term::lam(ty.clone(), body?)
                }
                Ne::App(f, a) => Term::app(f.to_term(scope)?, a.to_term(scope)?),
                Ne::Closed(t) => t.clone(),
            })
        }

        pub fn closed(&self) -> Term {
            self.to_term(&mut Vec::new()).expect("closed named term")
        }

        pub fn free_ids(&self, bound: &mut Vec<Id>, out: &mut BTreeSet<Id>) {
            match self {
                Ne::Var(id) => {
                    if !bound.contains(id) {
                        out.insert(*id);
                    }
                }
                Ne::Lam(id, _, b) => {
                    bound.push(*id);
                    b.free_ids(bound, out);
                    bound.pop();
                }
                Ne::App(f, a) => {
                    f.free_ids(bound, out);
                    a.free_ids(bound, out);
                }
                Ne::Closed(_) => {}
            }
        }
    }

    /// `λx:ty. body(x)` with a fresh binder.
    pub fn lam(ty: Ty, body: impl FnOnce(Ne) -> Ne) -> Ne {
        let id = fresh();
        Ne::Lam(id, ty, Box::new(body(Ne::Var(id))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::SymbolTable;

    fn succ(t: Term) -> Term {
        Term::app(Term::c(ConstId::Succ, vec![]), t)
    }

    #[test]
    fn pair_typechecks() {
        let t = Term::pair(&Ty::Nat, &Ty::Unit, Term::Num(0), Term::unit());
        assert_eq!(typecheck(&t, &TyCtx::new()).unwrap(), Ty::prod(Ty::Nat, Ty::Unit));
    }

    #[test]
    fn recursor_signature() {
        let t = Term::c(ConstId::Rec(Guard::Inf), vec![Ty::Nat]);
        let expected = Ty::arrow(
            Ty::arrow(Ty::Nat, Ty::arrow(Ty::arrow(Ty::Nat, Ty::Nat), Ty::Nat)),
            Ty::arrow(Ty::Nat, Ty::Nat),
        );
        assert_eq!(typecheck(&t, &TyCtx::new()).unwrap(), expected);
    }

    #[test]
    fn case_branch_types_checked() {
        let id = Term::lam(Ty::Nat, Term::Var(0));
        let one = Term::lam(Ty::Unit, Term::Num(1));
        let scrut = Term::inl(&Ty::Nat, &Ty::Unit, Term::Num(0));
        let ok = Term::apps(
            Term::c(ConstId::Case, vec![Ty::Nat, Ty::Unit, Ty::Nat]),
            [scrut.clone(), id.clone(), one.clone()],
        );
        assert_eq!(typecheck(&ok, &TyCtx::new()).unwrap(), Ty::Nat);
        let bad = Term::apps(
            Term::c(ConstId::Case, vec![Ty::Nat, Ty::Unit, Ty::Nat]),
            [scrut, one, id],
        );
        assert!(matches!(
            typecheck(&bad, &TyCtx::new()),
            Err(TermError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn projection_reduces() {
        let t = Term::app(
            Term::c(ConstId::Prl, vec![Ty::Nat, Ty::Unit]),
            Term::pair(&Ty::Nat, &Ty::Unit, Term::Num(4), Term::unit()),
        );
        assert_eq!(step(&t).unwrap(), Some(Term::Num(4)));
    }

    #[test]
    fn exhausted_guard_gives_dummy() {
        let h = Term::lam(Ty::Nat, Term::lam(Ty::arrow(Ty::Nat, Ty::Nat), Term::Num(9)));
        let t = Term::apps(Term::c(ConstId::Rec(Guard::Fin(3)), vec![Ty::Nat]), [h, Term::Num(5)]);
        assert_eq!(step(&t).unwrap(), Some(Term::Num(0)));
    }

    #[test]
    fn numerals_are_normal() {
        assert_eq!(step(&Term::Num(7)).unwrap(), None);
        assert_eq!(step(&succ(succ(Term::c(ConstId::Zero, vec![])))).unwrap(), None);
        assert_eq!(normalize(&Term::Num(7), 10).unwrap(), Term::Num(7));
    }

    #[test]
    fn as_numeral_examples() {
        assert_eq!(as_numeral(&succ(succ(Term::c(ConstId::Zero, vec![])))), Some(2));
        assert_eq!(as_numeral(&Term::lam(Ty::Nat, Term::Var(0))), None);
    }

    #[test]
    fn addition_constant_computes() {
        let t = SymbolTable::standard();
        let add = t.func("add").unwrap();
        let e = Term::apps(Term::c(ConstId::Fn(add), vec![]), [Term::Num(2), Term::Num(3)]);
        assert_eq!(as_numeral(&normalize(&e, 100).unwrap()), Some(5));
    }

    #[test]
    fn case_on_inr_takes_right_branch() {
        let f = Term::lam(Ty::Nat, Term::Num(1));
        let g = Term::lam(Ty::Unit, Term::Num(2));
        let t = Term::apps(
            Term::c(ConstId::Case, vec![Ty::Nat, Ty::Unit, Ty::Nat]),
            [Term::inr(&Ty::Nat, &Ty::Unit, Term::unit()), f, g.clone()],
        );
        assert_eq!(step(&t).unwrap(), Some(Term::app(g, Term::unit())));
        assert_eq!(normalize(&t, 10).unwrap(), Term::Num(2));
    }

    #[test]
    fn fuel_exhaustion_reported() {
        let h = Term::lam(
            Ty::Nat,
            Term::lam(Ty::arrow(Ty::Nat, Ty::Nat), Term::app(Term::Var(0), Term::Num(0))),
        );
        let t = Term::apps(Term::c(ConstId::Rec(Guard::Inf), vec![Ty::Nat]), [h, Term::Num(50)]);
        assert!(matches!(normalize(&t, 3), Err(TermError::FuelExhausted(_))));
        assert_eq!(normalize(&t, 1000).unwrap(), Term::Num(0));
    }

    #[test]
    fn ill_typed_terms_do_not_step() {
        let t = Term::app(Term::Num(1), Term::Num(2));
        assert!(step(&t).is_err());
    }
}
