//! Knowledge states, exceptions and the learning loop of the interactive monad.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::arith::{atomic_truth, reduce_aterm, ATerm, Formula};
use crate::term::{as_numeral, normalize_observed, ConstId, QueryObserver, Term, TermError};

/// A decidable relation `P(params, w)` whose counterexamples populate states.
pub trait Decidable: Send + Sync + fmt::Debug {
    fn id(&self) -> String;
    /// Number of parameters, excluding the witness position.
    fn arity(&self) -> usize;
    fn holds(&self, params: &[u64], w: u64) -> Result<bool, String>;
    /// The atom behind the relation, when it is one.
    fn as_atom_rel(&self) -> Option<&AtomRel> {
        None
    }
}

/// An atom `P(y1..yk, x)` read as a relation of its parameters and `x`.
#[derive(Debug, Clone)]
pub struct AtomRel {
    pub id: String,
    pub params: Vec<String>,
    pub var: String,
    pub atom: Formula,
}

impl PartialEq for AtomRel {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl AtomRel {
    /// Builds the relation for atom `atom` with bound variable `var`;
    /// parameters are the remaining free variables in sorted order.
    /// The id is the atom printed with positional names, so alpha-variants
    /// share state keys.
    pub fn new(atom: &Formula, var: &str) -> Result<AtomRel, String> {
        if !atom.is_atomic() {
            return Err(format!("not an atom: {atom}"));
        }
        let params: Vec<String> = atom.free_vars().into_iter().filter(|v| v != var).collect();
        let mut shown = atom.subst(var, &ATerm::var("$x"));
        for (i, p) in params.iter().enumerate() {
            shown = shown.subst(p, &ATerm::var(&format!("${i}")));
        }
        Ok(AtomRel {
            id: shown.to_string(),
            params,
            var: var.to_string(),
            atom: atom.clone(),
        })
    }

    /// The instance `P(params, w)` as a closed formula.
    pub fn instance(&self, params: &[u64], w: u64) -> Formula {
        let mut f = self.atom.subst(&self.var, &ATerm::Num(w));
        for (p, n) in self.params.iter().zip(params) {
            f = f.subst(p, &ATerm::Num(*n));
        }
        f
    }
}

impl Decidable for AtomRel {
    fn id(&self) -> String {
        self.id.clone()
    }
    fn arity(&self) -> usize {
        self.params.len()
    }
    fn as_atom_rel(&self) -> Option<&AtomRel> {
        Some(self)
    }
    fn holds(&self, params: &[u64], w: u64) -> Result<bool, String> {
        if params.len() != self.params.len() {
            return Err(format!(
                "arity mismatch for {}: expected {}, found {}",
                self.id,
                self.params.len(),
                params.len()
            ));
        }
        let Formula::Atom(r, args) = &self.atom else {
            unreachable!("AtomRel holds an atom")
        };
        let mut env: BTreeMap<String, u64> = self.params.iter().cloned().zip(params.iter().copied()).collect();
        env.insert(self.var.clone(), w);
        let vals = args
            .iter()
            .map(|a| reduce_aterm(a, &env))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        r.holds(&vals).map_err(|e| e.to_string())
    }
}

/// A counterexample `¬P(args, witness)`, checked at construction.
#[derive(Clone)]
pub struct Exception {
    rel: Arc<dyn Decidable>,
    args: Vec<u64>,
    witness: u64,
}

impl Exception {
    pub fn new(rel: Arc<dyn Decidable>, args: Vec<u64>, witness: u64) -> Result<Exception, String> {
        if rel.holds(&args, witness)? {
            return Err(format!(
                "{} holds at {:?}, {witness}: not a counterexample",
                rel.id(),
                args
            ));
        }
        Ok(Exception { rel, args, witness })
    }
    pub fn rel(&self) -> &Arc<dyn Decidable> {
        &self.rel
    }
    pub fn rel_id(&self) -> String {
        self.rel.id()
    }
    pub fn args(&self) -> &[u64] {
        &self.args
    }
    pub fn witness(&self) -> u64 {
        self.witness
    }
    pub fn key(&self) -> (String, Vec<u64>) {
        (self.rel.id(), self.args.clone())
    }
}

impl PartialEq for Exception {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key() && self.witness == other.witness
    }
}

impl fmt::Debug for Exception {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Exception({} {:?} -> {})", self.rel.id(), self.args, self.witness)
    }
}

/// Left projection; satisfies the merge requirement on exceptions.
pub fn merge_exc(e1: &Exception, _e2: &Exception) -> Exception {
    e1.clone()
}

#[derive(Clone)]
struct Entry {
    witness: u64,
    rel: Arc<dyn Decidable>,
}

/// A finite sound map from EM keys to counterexample witnesses.
#[derive(Clone, Default)]
pub struct State {
    entries: BTreeMap<(String, Vec<u64>), Entry>,
}

impl PartialEq for State {
    fn eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((k1, e1), (k2, e2))| k1 == k2 && e1.witness == e2.witness)
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(
                self.entries
                    .iter()
                    .map(|((id, args), e)| (format!("{id}{args:?}"), e.witness)),
            )
            .finish()
    }
}

impl State {
    pub fn new() -> State {
        State::default()
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn query(&self, id: &str, args: &[u64]) -> Option<u64> {
        self.entries.get(&(id.to_string(), args.to_vec())).map(|e| e.witness)
    }

    /// Lookup with an arity check; a mismatched key is absent with a diagnostic.
    pub fn query_checked(&self, rel: &dyn Decidable, args: &[u64]) -> (Option<u64>, Option<String>) {
        if args.len() != rel.arity() {
            return (
                None,
                Some(format!(
                    "arity mismatch for {}: expected {}, found {}",
                    rel.id(),
                    rel.arity(),
                    args.len()
                )),
            );
        }
        (self.query(&rel.id(), args), None)
    }

    /// `e(s)`: adds the key if new, unchanged if already present with the
    /// same witness, absent on a conflicting witness.
    pub fn extend(&self, e: &Exception) -> Option<State> {
        match self.entries.get(&e.key()) {
            None => {
                let mut s = self.clone();
                s.entries.insert(
                    e.key(),
                    Entry {
                        witness: e.witness,
                        rel: e.rel.clone(),
                    },
                );
                Some(s)
            }
            Some(en) if en.witness == e.witness => Some(self.clone()),
            Some(_) => None,
        }
    }

    /// `e(s)` defined and different from `s`.
    pub fn properly_extended_by(&self, e: &Exception) -> bool {
        !self.entries.contains_key(&e.key())
    }

    /// Extension order: `other` agrees with `self` on `dom(self)`.
    pub fn le(&self, other: &State) -> bool {
        self.entries
            .iter()
            .all(|(k, e)| other.entries.get(k).is_some_and(|o| o.witness == e.witness))
    }

    /// Re-validates every entry against its relation.
    pub fn is_sound(&self) -> bool {
        self.entries
            .values()
            .zip(self.entries.keys())
            .all(|(e, (_, args))| matches!(e.rel.holds(args, e.witness), Ok(false)))
    }

    pub fn keys(&self) -> impl Iterator<Item = (&(String, Vec<u64>), u64)> {
        self.entries.iter().map(|(k, e)| (k, e.witness))
    }

    pub fn exceptions(&self) -> Vec<Exception> {
        self.entries
            .iter()
            .map(|((_, args), e)| Exception {
                rel: e.rel.clone(),
                args: args.clone(),
                witness: e.witness,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Regular(Term),
    Exceptional(Exception),
}

/// `eval_P(args, n)`: regular unit iff `P(args, n)`, else a fresh counterexample.
pub fn eval_pred(rel: &Arc<dyn Decidable>, args: &[u64], n: u64) -> Result<Outcome, LearnError> {
    if args.len() != rel.arity() {
        return Err(LearnError::ArityMismatch {
            rel: rel.id(),
            expected: rel.arity(),
            found: args.len(),
        });
    }
    if rel.holds(args, n).map_err(LearnError::Eval)? {
        Ok(Outcome::Regular(Term::unit()))
    } else {
        let e = Exception::new(rel.clone(), args.to_vec(), n).map_err(LearnError::Eval)?;
        Ok(Outcome::Exceptional(e))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error(transparent)]
    Term(#[from] TermError),
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("exception {0:?} conflicts with the current state")]
    ConflictingExtension(Exception),
    #[error("arity mismatch for {rel}: expected {expected}, found {found}")]
    ArityMismatch { rel: String, expected: usize, found: usize },
    #[error("realizer did not produce an outcome: {0}")]
    NotAnOutcome(String),
    #[error("{0}")]
    Eval(String),
}

/// Splits a normal `inl v` / `inr e` into an outcome.
pub fn classify(t: &Term) -> Result<Outcome, LearnError> {
    let (head, args) = t.spine();
    match (head, args.as_slice()) {
        (Term::Const(ConstId::Inl, _), [v]) => Ok(Outcome::Regular((*v).clone())),
        (Term::Const(ConstId::Inr, _), [Term::Const(ConstId::ExcLit(e), _)]) => Ok(Outcome::Exceptional(e.clone())),
        _ => Err(LearnError::NotAnOutcome(crate::syntax::term_to_string(t))),
    }
}

#[derive(Default)]
struct KeyLog(BTreeSet<(String, Vec<u64>)>);

impl QueryObserver for KeyLog {
    fn queried(&mut self, rel: &AtomRel, args: &[u64]) {
        self.0.insert((rel.id.clone(), args.to_vec()));
    }
}

/// Runs an outer realizer of the interactive monad on `s`.
pub fn run_realizer(r: &Term, s: &State, fuel: usize) -> Result<Outcome, LearnError> {
    run_logged(r, s, fuel, &mut KeyLog::default())
}

fn run_logged(r: &Term, s: &State, fuel: usize, log: &mut KeyLog) -> Result<Outcome, LearnError> {
    let t = Term::app(r.clone(), Term::state(s.clone()));
    let (nf, _) = normalize_observed(&t, fuel, log)?;
    classify(&nf)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutcomeTag {
    Regular,
    Exception,
}

/// One iteration of the learning loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub key: Option<(String, Vec<u64>)>,
    pub witness: Option<u64>,
    pub outcome: OutcomeTag,
}

impl fmt::Display for IterRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let key = match &self.key {
            Some((id, args)) => {
                let a: Vec<String> = args.iter().map(|n| n.to_string()).collect();
                format!("{id}({})", a.join(","))
            }
            None => "-".into(),
        };
        let w = self.witness.map_or("-".to_string(), |w| w.to_string());
        let tag = match self.outcome {
            OutcomeTag::Regular => "regular",
            OutcomeTag::Exception => "exception",
        };
        write!(f, "iter={} key={} witness={} outcome={}", self.iteration, key, w, tag)
    }
}

#[derive(Debug, Clone)]
pub struct Learned<T> {
    pub state: State,
    pub value: T,
    pub trace: Vec<IterRecord>,
}

impl<T> Learned<T> {
    /// Number of state extensions, i.e. backtrackings.
    pub fn backtracks(&self) -> usize {
        self.trace.iter().filter(|r| r.outcome == OutcomeTag::Exception).count()
    }
}

/// The learning loop over any state-dependent computation.
/// `limit(iterations_so_far)` reports the iteration bound.
pub fn learn_with<T>(
    s0: &State,
    mut run: impl FnMut(&State) -> Result<Result<T, Exception>, LearnError>,
    mut limit: impl FnMut() -> usize,
) -> Result<Learned<T>, LearnError> {
    let mut s = s0.clone();
    let mut trace = Vec::new();
    loop {
        let iteration = trace.len();
        match run(&s)? {
            Ok(value) => {
                trace.push(IterRecord {
                    iteration,
                    key: None,
                    witness: None,
                    outcome: OutcomeTag::Regular,
                });
                return Ok(Learned { state: s, value, trace });
            }
            Err(e) => {
                let next = s
                    .extend(&e)
                    .ok_or_else(|| LearnError::ConflictingExtension(e.clone()))?;
                if next == s {
                    // an exception that teaches nothing would loop forever
                    return Err(LearnError::ConflictingExtension(e));
                }
                trace.push(IterRecord {
                    iteration,
                    key: Some(e.key()),
                    witness: Some(e.witness()),
                    outcome: OutcomeTag::Exception,
                });
                s = next;
                let lim = limit();
                if trace.len() >= lim {
                    return Err(LearnError::IterationLimit(lim));
                }
            }
        }
    }
}

/// Iterates `s ↦ e(s)` until `r` returns a regular value. Without
/// `max_iters` the bound is `2^n`, n the number of distinct keys queried.
pub fn learn(r: &Term, s0: &State, fuel: usize, max_iters: Option<usize>) -> Result<Learned<Term>, LearnError> {
    let log = std::cell::RefCell::new(KeyLog::default());
    learn_with(
        s0,
        |s| {
            Ok(match run_logged(r, s, fuel, &mut log.borrow_mut())? {
                Outcome::Regular(v) => Ok(v),
                Outcome::Exceptional(e) => Err(e),
            })
        },
        || max_iters.unwrap_or_else(|| 1usize << log.borrow().0.len().min(40)),
    )
}

/// Three-valued result of checking a realizer against a formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails(String),
    SampledOk,
}

impl Verdict {
    fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fails(w), _) | (_, Verdict::Fails(w)) => Verdict::Fails(w),
            (Verdict::SampledOk, _) | (_, Verdict::SampledOk) => Verdict::SampledOk,
            _ => Verdict::Holds,
        }
    }
    pub fn is_ok(&self) -> bool {
        !matches!(self, Verdict::Fails(_))
    }
}

/// Checks the inner realizability clauses of `v` for the closed formula `a`,
/// sampling universal and implicational positions up to `budget`.
pub fn spot_check_realizes(v: &Term, a: &Formula, s: &State, budget: u64, fuel: usize) -> Verdict {
    let a = match a.normalize_terms() {
        Ok(a) => a,
        Err(e) => return Verdict::Fails(e.to_string()),
    };
    inner(v, &a, s, budget, fuel)
}

fn outer(r: &Term, a: &Formula, s: &State, budget: u64, fuel: usize) -> Verdict {
    match run_realizer(r, s, fuel) {
        Ok(Outcome::Regular(v)) => inner(&v, a, s, budget, fuel),
        Ok(Outcome::Exceptional(e)) => {
            if s.properly_extended_by(&e) {
                Verdict::Holds
            } else {
                Verdict::Fails(format!("exception {e:?} does not extend the state"))
            }
        }
        Err(e) => Verdict::Fails(e.to_string()),
    }
}

fn inner(v: &Term, a: &Formula, s: &State, budget: u64, fuel: usize) -> Verdict {
    let (head, args) = v.spine();
    let fail = |what: &str| Verdict::Fails(format!("{what}: {} against {a}", crate::syntax::term_to_string(v)));
    match a {
        Formula::Atom(..) => match atomic_truth(a) {
            Ok(true) if matches!(v, Term::Const(ConstId::Unit, _)) => Verdict::Holds,
            Ok(true) => fail("not unit"),
            Ok(false) => fail("false atom"),
            Err(e) => Verdict::Fails(e.to_string()),
        },
        Formula::And(x, y) => match (head, args.as_slice()) {
            (Term::Const(ConstId::Pair, _), [l, r]) => inner(l, x, s, budget, fuel).and(inner(r, y, s, budget, fuel)),
            _ => fail("not a pair"),
        },
        Formula::Or(x, y) => match (head, args.as_slice()) {
            (Term::Const(ConstId::Inl, _), [l]) => inner(l, x, s, budget, fuel),
            (Term::Const(ConstId::Inr, _), [r]) => inner(r, y, s, budget, fuel),
            _ => fail("not an injection"),
        },
        Formula::Exists(x, body) => match (head, args.as_slice()) {
            (Term::Const(ConstId::Pair, _), [n, r]) => match as_numeral(n) {
                Some(n) => match body.subst(x, &ATerm::Num(n)).normalize_terms() {
                    Ok(b) => inner(r, &b, s, budget, fuel),
                    Err(e) => Verdict::Fails(e.to_string()),
                },
                None => fail("witness is not a numeral"),
            },
            _ => fail("not a pair"),
        },
        Formula::Forall(x, body) => {
            let mut verdict = Verdict::SampledOk;
            for n in 0..budget {
                let inst = match body.subst(x, &ATerm::Num(n)).normalize_terms() {
                    Ok(b) => b,
                    Err(e) => return Verdict::Fails(e.to_string()),
                };
                verdict = verdict.and(outer(&Term::app(v.clone(), Term::Num(n)), &inst, s, budget, fuel));
                if !verdict.is_ok() {
                    break;
                }
            }
            verdict
        }
        Formula::Imply(x, y) => {
            if x.is_atomic() && x.is_closed() {
                match atomic_truth(x) {
                    Ok(true) => outer(&Term::app(v.clone(), Term::unit()), y, s, budget, fuel),
                    Ok(false) => Verdict::Holds,
                    Err(e) => Verdict::Fails(e.to_string()),
                }
            } else {
                Verdict::SampledOk
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::SymbolTable;

    fn eq_rel() -> Arc<dyn Decidable> {
        let t = SymbolTable::standard();
        let eq = t.rel("eq").unwrap();
        let atom = Formula::atom(&eq, vec![ATerm::var("a"), ATerm::var("x")]);
        Arc::new(AtomRel::new(&atom, "x").unwrap())
    }

    #[test]
    fn empty_state_has_no_answers() {
        assert_eq!(State::new().query("anything", &[1, 2]), None);
    }

    #[test]
    fn eval_examples() {
        let p = eq_rel();
        assert_eq!(eval_pred(&p, &[4], 4).unwrap(), Outcome::Regular(Term::unit()));
        match eval_pred(&p, &[4], 5).unwrap() {
            Outcome::Exceptional(e) => {
                assert_eq!(e.args(), &[4]);
                assert_eq!(e.witness(), 5);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            eval_pred(&p, &[4, 1], 5),
            Err(LearnError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn extend_cases() {
        let p = eq_rel();
        let e = Exception::new(p.clone(), vec![1], 3).unwrap();
        let s1 = State::new().extend(&e).unwrap();
        assert_eq!(s1.len(), 1);
        assert_eq!(s1.extend(&e).unwrap(), s1);
        let other = Exception::new(p.clone(), vec![1], 4).unwrap();
        assert!(s1.extend(&other).is_none());
        assert!(State::new().le(&s1) && !s1.le(&State::new()));
    }

    #[test]
    fn exception_must_be_a_counterexample() {
        assert!(Exception::new(eq_rel(), vec![2], 2).is_err());
    }

    #[test]
    fn mismatched_arity_is_absent_with_diagnostic() {
        let p = eq_rel();
        let e = Exception::new(p.clone(), vec![1], 3).unwrap();
        let s = State::new().extend(&e).unwrap();
        let (v, diag) = s.query_checked(&*p, &[1, 0]);
        assert_eq!(v, None);
        assert!(diag.is_some());
        assert_eq!(s.query_checked(&*p, &[1]).0, Some(3));
    }

    #[test]
    fn alpha_variant_atoms_share_ids() {
        let t = SymbolTable::standard();
        let eq = t.rel("eq").unwrap();
        let a = AtomRel::new(&Formula::atom(&eq, vec![ATerm::var("a"), ATerm::var("x")]), "x").unwrap();
        let b = AtomRel::new(&Formula::atom(&eq, vec![ATerm::var("b"), ATerm::var("y")]), "y").unwrap();
        assert_eq!(a.id, b.id);
    }

    #[test]
    fn regular_realizer_is_a_fixed_point() {
        let r = Term::lam(
            crate::term::Ty::State,
            Term::inl(&crate::term::Ty::Nat, &crate::term::Ty::Ex, Term::Num(3)),
        );
        let l = learn(&r, &State::new(), 100, None).unwrap();
        assert_eq!(l.value, Term::Num(3));
        assert_eq!(l.backtracks(), 0);
        assert!(l.state.is_empty());
    }
}
