//! Primitive recursive functions and relations, arithmetic terms, first-order
//! formulas, the syntactic arithmetical hierarchy and dualization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArithError {
    #[error("arity mismatch: {what} expects {expected} arguments, got {found}")]
    ArityMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("malformed primitive recursive definition: {0}")]
    Malformed(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("formula is not closed: {0}")]
    NotClosed(String),
    #[error("formula is not in prenex form")]
    NotPrenex,
    #[error("arithmetic overflow while evaluating {0}")]
    Overflow(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
}

/// A primitive recursive function given by its defining schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PrimFn {
    /// The 0-ary constant 0.
    Zero,
    /// The 1-ary successor.
    Succ,
    /// `Proj { n, i }` returns the i-th of n arguments, 1-based.
    Proj { n: usize, i: usize },
    /// `g(h1(x..), .., hk(x..))`, an `arity`-ary function.
    Comp {
        arity: usize,
        g: Arc<PrimFn>,
        hs: Vec<Arc<PrimFn>>,
    },
    /// Recursion on the first argument:
    /// `f(0, x..) = base(x..)`, `f(S y, x..) = step(y, f(y, x..), x..)`.
    PRec { base: Arc<PrimFn>, step: Arc<PrimFn> },
}

impl PrimFn {
    pub fn arity(&self) -> usize {
        match self {
            PrimFn::Zero => 0,
            PrimFn::Succ => 1,
            PrimFn::Proj { n, .. } => *n,
            PrimFn::Comp { arity, .. } => *arity,
            PrimFn::PRec { base, .. } => base.arity() + 1,
        }
    }

    /// Checks the arity constraints of every schema in the definition.
    pub fn validate(&self) -> Result<(), ArithError> {
        match self {
            PrimFn::Zero | PrimFn::Succ => Ok(()),
            PrimFn::Proj { n, i } => {
                if *i >= 1 && i <= n {
                    Ok(())
                } else {
                    Err(ArithError::Malformed(format!("projection {i} of {n}")))
                }
            }
            PrimFn::Comp { arity, g, hs } => {
                g.validate()?;
                if g.arity() != hs.len() {
                    return Err(ArithError::Malformed(format!(
                        "composition of a {}-ary function with {} functions",
                        g.arity(),
                        hs.len()
                    )));
                }
                for h in hs {
                    h.validate()?;
                    if h.arity() != *arity {
                        return Err(ArithError::Malformed(format!(
                            "inner function of arity {} in a {arity}-ary composition",
                            h.arity()
                        )));
                    }
                }
                Ok(())
            }
            PrimFn::PRec { base, step } => {
                base.validate()?;
                step.validate()?;
                if step.arity() != base.arity() + 2 {
                    return Err(ArithError::Malformed(format!(
                        "recursion step of arity {} for base of arity {}",
                        step.arity(),
                        base.arity()
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn proj(n: usize, i: usize) -> Arc<PrimFn> {
        Arc::new(PrimFn::Proj { n, i })
    }

    pub fn comp(arity: usize, g: Arc<PrimFn>, hs: Vec<Arc<PrimFn>>) -> Arc<PrimFn> {
        Arc::new(PrimFn::Comp { arity, g, hs })
    }

    pub fn prec(base: Arc<PrimFn>, step: Arc<PrimFn>) -> Arc<PrimFn> {
        Arc::new(PrimFn::PRec { base, step })
    }

    /// The `arity`-ary constant function with value `n`.
    pub fn constant(arity: usize, n: u64) -> Arc<PrimFn> {
        let mut f = Arc::new(PrimFn::Zero);
        for _ in 0..n {
            f = PrimFn::comp(0, Arc::new(PrimFn::Succ), vec![f]);
        }
        if arity == 0 {
            f
        } else {
            PrimFn::comp(arity, f, vec![])
        }
    }
}

/// Evaluates a primitive recursive function by its defining equations.
/// Recursion is unrolled iteratively.
pub fn eval_prim(f: &PrimFn, args: &[u64]) -> Result<u64, ArithError> {
    if args.len() != f.arity() {
        return Err(ArithError::ArityMismatch {
            what: "primitive recursive function".into(),
            expected: f.arity(),
            found: args.len(),
        });
    }
    eval_unchecked(f, args)
}

fn eval_unchecked(f: &PrimFn, args: &[u64]) -> Result<u64, ArithError> {
    match f {
        PrimFn::Zero => Ok(0),
        PrimFn::Succ => args[0]
            .checked_add(1)
            .ok_or_else(|| ArithError::Overflow("successor".into())),
        PrimFn::Proj { i, .. } => Ok(args[i - 1]),
        PrimFn::Comp { g, hs, .. } => {
            let mut inner = Vec::with_capacity(hs.len());
            for h in hs {
                inner.push(eval_unchecked(h, args)?);
            }
            eval_unchecked(g, &inner)
        }
        PrimFn::PRec { base, step } => {
            let n = args[0];
            let rest = &args[1..];
            let mut acc = eval_unchecked(base, rest)?;
            let mut buf = Vec::with_capacity(args.len() + 1);
            for y in 0..n {
                buf.clear();
                buf.push(y);
                buf.push(acc);
                buf.extend_from_slice(rest);
                acc = eval_unchecked(step, &buf)?;
            }
            Ok(acc)
        }
    }
}

/// Fast evaluator attached to a standard symbol; must agree with the definition.
pub type NativeFn = fn(&[u64]) -> Option<u64>;

/// A named function symbol.
#[derive(Clone)]
pub struct FnSym {
    pub name: String,
    pub def: Arc<PrimFn>,
    pub native: Option<NativeFn>,
}

impl FnSym {
    pub fn new(name: impl Into<String>, def: Arc<PrimFn>) -> Result<Arc<FnSym>, ArithError> {
        def.validate()?;
        Ok(Arc::new(FnSym {
            name: name.into(),
            def,
            native: None,
        }))
    }

    pub fn arity(&self) -> usize {
        self.def.arity()
    }

    pub fn apply(&self, args: &[u64]) -> Result<u64, ArithError> {
        if args.len() != self.arity() {
            return Err(ArithError::ArityMismatch {
                what: self.name.clone(),
                expected: self.arity(),
                found: args.len(),
            });
        }
        match self.native {
            Some(native) => native(args).ok_or_else(|| ArithError::Overflow(self.name.clone())),
            None => eval_unchecked(&self.def, args),
        }
    }
}

impl PartialEq for FnSym {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.arity() == other.arity()
    }
}
impl Eq for FnSym {}

impl fmt::Debug for FnSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity())
    }
}

/// A named primitive recursive relation; it holds iff its characteristic
/// function returns 1.
#[derive(Clone)]
pub struct RelSym {
    pub name: String,
    pub chi: Arc<FnSym>,
    /// Set on complement relations: the relation this one negates.
    pub complement_of: Option<Arc<RelSym>>,
}

impl RelSym {
    pub fn new(name: impl Into<String>, chi: Arc<FnSym>) -> Arc<RelSym> {
        Arc::new(RelSym {
            name: name.into(),
            chi,
            complement_of: None,
        })
    }

    pub fn arity(&self) -> usize {
        self.chi.arity()
    }

    pub fn holds(&self, args: &[u64]) -> Result<bool, ArithError> {
        Ok(self.chi.apply(args)? == 1)
    }

    /// The complement relation, whose characteristic is `chi != 1`.
    /// Complementing twice returns the original symbol.
    pub fn complement(self: &Arc<Self>) -> Arc<RelSym> {
        if let Some(base) = &self.complement_of {
            return base.clone();
        }
        let arity = self.arity();
        let ne1 = std_ne1();
        let args: Vec<Arc<PrimFn>> = vec![self.chi.def.clone()];
        let def = PrimFn::comp(arity, ne1.def.clone(), args);
        let chi = Arc::new(FnSym {
            name: format!("chi-not-{}", self.name),
            def,
            native: None,
        });
        Arc::new(RelSym {
            name: format!("not-{}", self.name),
            chi,
            complement_of: Some(self.clone()),
        })
    }
}

impl PartialEq for RelSym {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.arity() == other.arity()
    }
}
impl Eq for RelSym {}

impl fmt::Debug for RelSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity())
    }
}

fn native_sym(name: &str, def: Arc<PrimFn>, native: NativeFn) -> Arc<FnSym> {
    Arc::new(FnSym {
        name: name.into(),
        def,
        native: Some(native),
    })
}

fn std_pred() -> Arc<FnSym> {
    let def = PrimFn::prec(Arc::new(PrimFn::Zero), PrimFn::proj(2, 1));
    native_sym("pred", def, |a| Some(a[0].saturating_sub(1)))
}

fn std_add() -> Arc<FnSym> {
    let step = PrimFn::comp(3, Arc::new(PrimFn::Succ), vec![PrimFn::proj(3, 2)]);
    let def = PrimFn::prec(PrimFn::proj(1, 1), step);
    native_sym("add", def, |a| a[0].checked_add(a[1]))
}

fn std_mul() -> Arc<FnSym> {
    let add = std_add();
    let step = PrimFn::comp(3, add.def.clone(), vec![PrimFn::proj(3, 2), PrimFn::proj(3, 3)]);
    let def = PrimFn::prec(PrimFn::constant(1, 0), step);
    native_sym("mul", def, |a| a[0].checked_mul(a[1]))
}

fn std_sub() -> Arc<FnSym> {
    // r(x, y) = y - x by recursion on x, then swap the arguments.
    let step = PrimFn::comp(3, std_pred().def.clone(), vec![PrimFn::proj(3, 2)]);
    let r = PrimFn::prec(PrimFn::proj(1, 1), step);
    let def = PrimFn::comp(2, r, vec![PrimFn::proj(2, 2), PrimFn::proj(2, 1)]);
    native_sym("sub", def, |a| Some(a[0].saturating_sub(a[1])))
}

fn std_sg() -> Arc<FnSym> {
    let def = PrimFn::prec(Arc::new(PrimFn::Zero), PrimFn::constant(2, 1));
    native_sym("sg", def, |a| Some(u64::from(a[0] != 0)))
}

fn std_nsg() -> Arc<FnSym> {
    let def = PrimFn::prec(PrimFn::constant(0, 1), PrimFn::constant(2, 0));
    native_sym("nsg", def, |a| Some(u64::from(a[0] == 0)))
}

fn std_ne1() -> Arc<FnSym> {
    let step = PrimFn::comp(2, std_sg().def.clone(), vec![PrimFn::proj(2, 1)]);
    let def = PrimFn::prec(PrimFn::constant(0, 1), step);
    native_sym("ne1", def, |a| Some(u64::from(a[0] != 1)))
}

fn std_chi_eq() -> Arc<FnSym> {
    let sub = std_sub().def.clone();
    let d1 = PrimFn::comp(2, sub.clone(), vec![PrimFn::proj(2, 1), PrimFn::proj(2, 2)]);
    let d2 = PrimFn::comp(2, sub, vec![PrimFn::proj(2, 2), PrimFn::proj(2, 1)]);
    let sum = PrimFn::comp(2, std_add().def.clone(), vec![d1, d2]);
    let def = PrimFn::comp(2, std_nsg().def.clone(), vec![sum]);
    native_sym("chi-eq", def, |a| Some(u64::from(a[0] == a[1])))
}

fn std_chi_lt() -> Arc<FnSym> {
    let d = PrimFn::comp(2, std_sub().def.clone(), vec![PrimFn::proj(2, 2), PrimFn::proj(2, 1)]);
    let def = PrimFn::comp(2, std_sg().def.clone(), vec![d]);
    native_sym("chi-lt", def, |a| Some(u64::from(a[0] < a[1])))
}

fn std_chi_le() -> Arc<FnSym> {
    let d = PrimFn::comp(2, std_sub().def.clone(), vec![PrimFn::proj(2, 1), PrimFn::proj(2, 2)]);
    let def = PrimFn::comp(2, std_nsg().def.clone(), vec![d]);
    native_sym("chi-le", def, |a| Some(u64::from(a[0] <= a[1])))
}

/// Function and relation symbols in scope for a proof file.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    fns: BTreeMap<String, Arc<FnSym>>,
    rels: BTreeMap<String, Arc<RelSym>>,
}

impl Default for SymbolTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl SymbolTable {
    pub fn empty() -> Self {
        SymbolTable {
            fns: BTreeMap::new(),
            rels: BTreeMap::new(),
        }
    }

    /// Zero, successor, predecessor, +, *, truncated subtraction, signum,
    /// and the relations =, <, <=, true, false with their complements.
    pub fn standard() -> Self {
        let mut t = SymbolTable::empty();
        let zero = Arc::new(FnSym {
            name: "zero".into(),
            def: Arc::new(PrimFn::Zero),
            native: None,
        });
        let succ = native_sym("S", Arc::new(PrimFn::Succ), |a| a[0].checked_add(1));
        for f in [
            zero,
            succ,
            std_pred(),
            std_add(),
            std_mul(),
            std_sub(),
            std_sg(),
            std_nsg(),
            std_ne1(),
        ] {
            t.fns.insert(f.name.clone(), f);
        }
        t.alias_fn("0", "zero");
        t.alias_fn("succ", "S");
        t.alias_fn("+", "add");
        t.alias_fn("*", "mul");
        t.alias_fn("-", "sub");
        let eq = RelSym::new("eq", std_chi_eq());
        let lt = RelSym::new("lt", std_chi_lt());
        let le = RelSym::new("le", std_chi_le());
        let tru = RelSym::new(
            "true",
            Arc::new(FnSym {
                name: "chi-true".into(),
                def: PrimFn::constant(0, 1),
                native: None,
            }),
        );
        let fal = RelSym::new(
            "false",
            Arc::new(FnSym {
                name: "chi-false".into(),
                def: Arc::new(PrimFn::Zero),
                native: None,
            }),
        );
        for r in [eq, lt, le, tru, fal] {
            t.add_rel(r);
        }
        t.alias_rel("=", "eq");
        t.alias_rel("<", "lt");
        t.alias_rel("<=", "le");
        t.alias_rel("top", "true");
        t.alias_rel("bot", "false");
        t.alias_rel("neq", "not-eq");
        t
    }

    fn alias_fn(&mut self, alias: &str, target: &str) {
        let f = self.fns[target].clone();
        self.fns.insert(alias.into(), f);
    }

    fn alias_rel(&mut self, alias: &str, target: &str) {
        let r = self.rels[target].clone();
        self.rels.insert(alias.into(), r);
    }

    /// Registers a relation together with its complement and characteristic function.
    pub fn add_rel(&mut self, r: Arc<RelSym>) {
        let c = r.complement();
        self.fns.insert(r.chi.name.clone(), r.chi.clone());
        self.fns.insert(c.chi.name.clone(), c.chi.clone());
        self.rels.insert(c.name.clone(), c);
        self.rels.insert(r.name.clone(), r);
    }

    pub fn define_fn(&mut self, name: &str, def: Arc<PrimFn>) -> Result<Arc<FnSym>, ArithError> {
        let f = FnSym::new(name, def)?;
        self.fns.insert(name.into(), f.clone());
        Ok(f)
    }

    pub fn define_rel(&mut self, name: &str, chi: Arc<PrimFn>) -> Result<Arc<RelSym>, ArithError> {
        let f = FnSym::new(format!("chi-{name}"), chi)?;
        let r = RelSym::new(name, f);
        self.add_rel(r.clone());
        Ok(r)
    }

    pub fn func(&self, name: &str) -> Result<Arc<FnSym>, ArithError> {
        self.fns
            .get(name)
            .cloned()
            .ok_or_else(|| ArithError::UnknownSymbol(name.into()))
    }

    pub fn rel(&self, name: &str) -> Result<Arc<RelSym>, ArithError> {
        self.rels
            .get(name)
            .cloned()
            .ok_or_else(|| ArithError::UnknownSymbol(name.into()))
    }

    pub fn has_fn(&self, name: &str) -> bool {
        self.fns.contains_key(name)
    }

    pub fn has_rel(&self, name: &str) -> bool {
        self.rels.contains_key(name)
    }

    pub fn functions(&self) -> impl Iterator<Item = (&String, &Arc<FnSym>)> {
        self.fns.iter()
    }

    pub fn relations(&self) -> impl Iterator<Item = (&String, &Arc<RelSym>)> {
        self.rels.iter()
    }

    pub fn bot(&self) -> Formula {
        Formula::Atom(self.rels["false"].clone(), vec![])
    }
}

/// An arithmetic term. `Num(n)` is the compact form of `S(..S(0)..)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ATerm {
    Var(String),
    App(Arc<FnSym>, Vec<ATerm>),
    Num(u64),
}

impl ATerm {
    pub fn var(name: &str) -> ATerm {
        ATerm::Var(name.into())
    }

    pub fn app(f: &Arc<FnSym>, args: Vec<ATerm>) -> ATerm {
        ATerm::App(f.clone(), args)
    }

    pub fn free_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            ATerm::Var(x) => {
                out.insert(x.clone());
            }
            ATerm::App(_, args) => args.iter().for_each(|a| a.free_vars(out)),
            ATerm::Num(_) => {}
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        self.free_vars(&mut s);
        s
    }

    pub fn is_closed(&self) -> bool {
        match self {
            ATerm::Var(_) => false,
            ATerm::App(_, args) => args.iter().all(ATerm::is_closed),
            ATerm::Num(_) => true,
        }
    }

    pub fn contains_var(&self, x: &str) -> bool {
        match self {
            ATerm::Var(y) => y == x,
            ATerm::App(_, args) => args.iter().any(|a| a.contains_var(x)),
            ATerm::Num(_) => false,
        }
    }

    pub fn subst(&self, x: &str, t: &ATerm) -> ATerm {
        match self {
            ATerm::Var(y) if y == x => t.clone(),
            ATerm::Var(_) | ATerm::Num(_) => self.clone(),
            ATerm::App(f, args) => ATerm::App(f.clone(), args.iter().map(|a| a.subst(x, t)).collect()),
        }
    }

    /// Rewrites every closed subterm to a numeral; open structure is kept.
    pub fn normalize(&self) -> Result<ATerm, ArithError> {
        match self {
            ATerm::Var(_) | ATerm::Num(_) => Ok(self.clone()),
            ATerm::App(f, args) => {
                let args = args.iter().map(ATerm::normalize).collect::<Result<Vec<_>, _>>()?;
                let nums: Option<Vec<u64>> = args
                    .iter()
                    .map(|a| match a {
                        ATerm::Num(n) => Some(*n),
                        _ => None,
                    })
                    .collect();
                match nums {
                    Some(ns) => Ok(ATerm::Num(f.apply(&ns)?)),
                    None => Ok(ATerm::App(f.clone(), args)),
                }
            }
        }
    }

    /// Splits a term of the form `S(t)` (or a positive numeral) into `t`.
    pub fn as_succ(&self) -> Option<ATerm> {
        match self {
            ATerm::Num(n) if *n > 0 => Some(ATerm::Num(n - 1)),
            ATerm::App(f, args) if f.name == "S" && args.len() == 1 => Some(args[0].clone()),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ATerm::Num(0) => true,
            ATerm::App(f, args) => f.name == "zero" && args.is_empty(),
            _ => false,
        }
    }
}

impl fmt::Display for ATerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ATerm::Var(x) => write!(f, "{x}"),
            ATerm::Num(n) => write!(f, "{n}"),
            ATerm::App(g, args) if args.is_empty() => write!(f, "{}", g.name),
            ATerm::App(g, args) => {
                write!(f, "({}", g.name)?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Value of an arithmetic term under an environment.
pub fn reduce_aterm(t: &ATerm, env: &BTreeMap<String, u64>) -> Result<u64, ArithError> {
    match t {
        ATerm::Var(x) => env
            .get(x)
            .copied()
            .ok_or_else(|| ArithError::UnboundVariable(x.clone())),
        ATerm::Num(n) => Ok(*n),
        ATerm::App(f, args) => {
            let vals = args
                .iter()
                .map(|a| reduce_aterm(a, env))
                .collect::<Result<Vec<_>, _>>()?;
            f.apply(&vals)
        }
    }
}

/// A first-order arithmetic formula with named bound variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    Atom(Arc<RelSym>, Vec<ATerm>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Imply(Box<Formula>, Box<Formula>),
    Forall(String, Box<Formula>),
    Exists(String, Box<Formula>),
}

static FRESH: AtomicUsize = AtomicUsize::new(0);

/// A variable name derived from `base` that is globally fresh.
pub fn fresh_name(base: &str) -> String {
    let root = base.split('#').next().unwrap_or(base);
    let n = FRESH.fetch_add(1, Ordering::Relaxed);
    format!("{root}#{n}")
}

fn avoid_name(base: &str, avoid: &BTreeSet<String>) -> String {
    let root = base.split('#').next().unwrap_or(base);
    (1..)
        .map(|i| format!("{root}#{i}"))
        .find(|c| !avoid.contains(c))
        .expect("unbounded search")
}

impl Formula {
    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }
    pub fn imply(a: Formula, b: Formula) -> Formula {
        Formula::Imply(Box::new(a), Box::new(b))
    }
    pub fn forall(x: &str, a: Formula) -> Formula {
        Formula::Forall(x.into(), Box::new(a))
    }
    pub fn exists(x: &str, a: Formula) -> Formula {
        Formula::Exists(x.into(), Box::new(a))
    }
    pub fn atom(r: &Arc<RelSym>, args: Vec<ATerm>) -> Formula {
        Formula::Atom(r.clone(), args)
    }

    /// `a -> false`, with `bot` the falsity atom.
    pub fn not(a: Formula, bot: &Formula) -> Formula {
        Formula::imply(a, bot.clone())
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Formula::Atom(..))
    }

    pub fn is_bot(&self) -> bool {
        matches!(self, Formula::Atom(r, args) if r.name == "false" && args.is_empty())
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::Atom(..) => true,
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imply(a, b) => {
                a.is_quantifier_free() && b.is_quantifier_free()
            }
            Formula::Forall(..) | Formula::Exists(..) => false,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out, &mut Vec::new());
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<String>, bound: &mut Vec<String>) {
        match self {
            Formula::Atom(_, args) => {
                for a in args {
                    for v in a.vars() {
                        if !bound.contains(&v) {
                            out.insert(v);
                        }
                    }
                }
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imply(a, b) => {
                a.collect_free(out, bound);
                b.collect_free(out, bound);
            }
            Formula::Forall(x, a) | Formula::Exists(x, a) => {
                bound.push(x.clone());
                a.collect_free(out, bound);
                bound.pop();
            }
        }
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    pub fn has_free(&self, x: &str) -> bool {
        self.free_vars().contains(x)
    }

    /// Every variable name occurring in the formula, bound or free.
    pub fn all_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Atom(_, args) => args.iter().for_each(|a| a.free_vars(out)),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imply(a, b) => {
                a.all_vars(out);
                b.all_vars(out);
            }
            Formula::Forall(x, a) | Formula::Exists(x, a) => {
                out.insert(x.clone());
                a.all_vars(out);
            }
        }
    }

    /// Capture-avoiding substitution of `t` for the free variable `x`.
    pub fn subst(&self, x: &str, t: &ATerm) -> Formula {
        let tv = t.vars();
        self.subst_with(x, t, &tv)
    }

    fn subst_with(&self, x: &str, t: &ATerm, tv: &BTreeSet<String>) -> Formula {
        match self {
            Formula::Atom(r, args) => Formula::Atom(r.clone(), args.iter().map(|a| a.subst(x, t)).collect()),
            Formula::And(a, b) => Formula::and(a.subst_with(x, t, tv), b.subst_with(x, t, tv)),
            Formula::Or(a, b) => Formula::or(a.subst_with(x, t, tv), b.subst_with(x, t, tv)),
            Formula::Imply(a, b) => Formula::imply(a.subst_with(x, t, tv), b.subst_with(x, t, tv)),
            Formula::Forall(y, a) | Formula::Exists(y, a) => {
                let is_all = matches!(self, Formula::Forall(..));
                if y == x || !a.has_free(x) {
                    return self.clone();
                }
                let (y2, body) = if tv.contains(y) {
                    let mut avoid = tv.clone();
                    a.all_vars(&mut avoid);
                    avoid.insert(x.to_string());
                    let y2 = avoid_name(y, &avoid);
                    let renamed = a.subst(y, &ATerm::Var(y2.clone()));
                    (y2, renamed)
                } else {
                    (y.clone(), (**a).clone())
                };
                let body = body.subst_with(x, t, tv);
                if is_all {
                    Formula::Forall(y2, Box::new(body))
                } else {
                    Formula::Exists(y2, Box::new(body))
                }
            }
        }
    }

    /// Rewrites closed subterms to numerals.
    pub fn normalize_terms(&self) -> Result<Formula, ArithError> {
        Ok(match self {
            Formula::Atom(r, args) => {
                Formula::Atom(r.clone(), args.iter().map(ATerm::normalize).collect::<Result<_, _>>()?)
            }
            Formula::And(a, b) => Formula::and(a.normalize_terms()?, b.normalize_terms()?),
            Formula::Or(a, b) => Formula::or(a.normalize_terms()?, b.normalize_terms()?),
            Formula::Imply(a, b) => Formula::imply(a.normalize_terms()?, b.normalize_terms()?),
            Formula::Forall(x, a) => Formula::Forall(x.clone(), Box::new(a.normalize_terms()?)),
            Formula::Exists(x, a) => Formula::Exists(x.clone(), Box::new(a.normalize_terms()?)),
        })
    }

    /// Equality up to renaming of bound variables and normalization of
    /// closed subterms.
    pub fn equiv(&self, other: &Formula) -> bool {
        match (self.normalize_terms(), other.normalize_terms()) {
            (Ok(a), Ok(b)) => alpha_eq(&a, &b, &mut Vec::new()),
            _ => false,
        }
    }
}

fn term_alpha_eq(a: &ATerm, b: &ATerm, bound: &[(String, String)]) -> bool {
    match (a, b) {
        (ATerm::Var(x), ATerm::Var(y)) => {
            for (l, r) in bound.iter().rev() {
                if l == x || r == y {
                    return l == x && r == y;
                }
            }
            x == y
        }
        (ATerm::Num(m), ATerm::Num(n)) => m == n,
        (ATerm::App(f, xs), ATerm::App(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| term_alpha_eq(x, y, bound))
        }
        _ => false,
    }
}

fn alpha_eq(a: &Formula, b: &Formula, bound: &mut Vec<(String, String)>) -> bool {
    match (a, b) {
        (Formula::Atom(r, xs), Formula::Atom(s, ys)) => {
            r == s && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| term_alpha_eq(x, y, bound))
        }
        (Formula::And(a1, a2), Formula::And(b1, b2))
        | (Formula::Or(a1, a2), Formula::Or(b1, b2))
        | (Formula::Imply(a1, a2), Formula::Imply(b1, b2)) => alpha_eq(a1, b1, bound) && alpha_eq(a2, b2, bound),
        (Formula::Forall(x, a1), Formula::Forall(y, b1)) | (Formula::Exists(x, a1), Formula::Exists(y, b1)) => {
            bound.push((x.clone(), y.clone()));
            let r = alpha_eq(a1, b1, bound);
            bound.pop();
            r
        }
        _ => false,
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(r, args) => {
                write!(f, "(atom {}", r.name)?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
            Formula::And(a, b) => write!(f, "(and {a} {b})"),
            Formula::Or(a, b) => write!(f, "(or {a} {b})"),
            Formula::Imply(a, b) => write!(f, "(imp {a} {b})"),
            Formula::Forall(x, a) => write!(f, "(forall {x} {a})"),
            Formula::Exists(x, a) => write!(f, "(exists {x} {a})"),
        }
    }
}

/// Truth of a closed atomic formula.
pub fn atomic_truth(a: &Formula) -> Result<bool, ArithError> {
    match a {
        Formula::Atom(r, args) => {
            let env = BTreeMap::new();
            let mut vals = Vec::with_capacity(args.len());
            for t in args {
                match reduce_aterm(t, &env) {
                    Ok(v) => vals.push(v),
                    Err(ArithError::UnboundVariable(_)) => return Err(ArithError::NotClosed(a.to_string())),
                    Err(e) => return Err(e),
                }
            }
            r.holds(&vals)
        }
        _ => Err(ArithError::NotClosed(format!("not an atom: {a}"))),
    }
}

/// Level of a prenex formula in the syntactic hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HierLevel {
    /// Quantifier free: both Sigma-0 and Pi-0.
    Zero,
    Sigma(usize),
    Pi(usize),
}

/// The least hierarchy level of `a` (absent when not prenex) and its dual.
pub fn classify_dual(a: &Formula, bot: &Formula) -> Result<(Option<HierLevel>, Formula), ArithError> {
    let level = classify(a);
    if level.is_none() {
        return Err(ArithError::NotPrenex);
    }
    Ok((level, dual(a, bot)?))
}

pub fn classify(a: &Formula) -> Option<HierLevel> {
    if a.is_quantifier_free() {
        return Some(HierLevel::Zero);
    }
    match a {
        Formula::Forall(_, b) => match classify(b)? {
            HierLevel::Zero => Some(HierLevel::Pi(1)),
            HierLevel::Sigma(n) => Some(HierLevel::Pi(n + 1)),
            HierLevel::Pi(n) => Some(HierLevel::Pi(n)),
        },
        Formula::Exists(_, b) => match classify(b)? {
            HierLevel::Zero => Some(HierLevel::Sigma(1)),
            HierLevel::Pi(n) => Some(HierLevel::Sigma(n + 1)),
            HierLevel::Sigma(n) => Some(HierLevel::Sigma(n)),
        },
        _ => None,
    }
}

/// The dual of a prenex formula: quantifiers swapped, matrix negated.
pub fn dual(a: &Formula, bot: &Formula) -> Result<Formula, ArithError> {
    if a.is_quantifier_free() {
        return Ok(Formula::not(a.clone(), bot));
    }
    match a {
        Formula::Forall(x, b) => Ok(Formula::exists(x, dual(b, bot)?)),
        Formula::Exists(x, b) => Ok(Formula::forall(x, dual(b, bot)?)),
        _ => Err(ArithError::NotPrenex),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_picks_argument() {
        assert_eq!(eval_prim(&PrimFn::Proj { n: 3, i: 2 }, &[4, 7, 9]).unwrap(), 7);
    }

    #[test]
    fn recursion_at_zero_is_base() {
        let base = PrimFn::proj(1, 1);
        let step = PrimFn::comp(3, Arc::new(PrimFn::Succ), vec![PrimFn::proj(3, 2)]);
        let f = PrimFn::prec(base.clone(), step);
        assert_eq!(eval_prim(&f, &[0, 11]).unwrap(), eval_prim(&base, &[11]).unwrap());
    }

    #[test]
    fn arity_mismatch_is_reported() {
        assert!(matches!(
            eval_prim(&PrimFn::Succ, &[1, 2]),
            Err(ArithError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn malformed_recursion_rejected() {
        let bad = PrimFn::prec(PrimFn::proj(1, 1), PrimFn::proj(2, 1));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn standard_natives_agree_with_definitions() {
        let t = SymbolTable::standard();
        for name in [
            "pred", "add", "mul", "sub", "sg", "nsg", "ne1", "chi-eq", "chi-lt", "chi-le",
        ] {
            let f = t.func(name).unwrap();
            for a in 0..6u64 {
                for b in 0..6u64 {
                    let args: Vec<u64> = [a, b][..f.arity()].to_vec();
                    assert_eq!(
                        f.apply(&args).unwrap(),
                        eval_prim(&f.def, &args).unwrap(),
                        "{name} {args:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn complement_is_involutive() {
        let t = SymbolTable::standard();
        let eq = t.rel("eq").unwrap();
        let ne = eq.complement();
        assert_eq!(ne.name, "not-eq");
        assert!(Arc::ptr_eq(&ne.complement(), &eq));
        assert!(ne.holds(&[2, 3]).unwrap());
        assert!(!ne.holds(&[3, 3]).unwrap());
    }

    #[test]
    fn atomic_truth_examples() {
        let t = SymbolTable::standard();
        let eq = t.rel("eq").unwrap();
        let lt = t.rel("lt").unwrap();
        assert!(atomic_truth(&Formula::atom(&eq, vec![ATerm::Num(2), ATerm::Num(2)])).unwrap());
        assert!(!atomic_truth(&t.bot()).unwrap());
        assert!(!atomic_truth(&Formula::atom(&lt, vec![ATerm::Num(3), ATerm::Num(2)])).unwrap());
        assert!(matches!(
            atomic_truth(&Formula::atom(&eq, vec![ATerm::var("x"), ATerm::Num(2)])),
            Err(ArithError::NotClosed(_))
        ));
    }

    #[test]
    fn substitution_avoids_capture() {
        let t = SymbolTable::standard();
        let eq = t.rel("eq").unwrap();
        let f = Formula::forall("y", Formula::atom(&eq, vec![ATerm::var("x"), ATerm::var("y")]));
        let g = f.subst("x", &ATerm::var("y"));
        match &g {
            Formula::Forall(z, body) => {
                assert_ne!(z, "y");
                assert!(body.has_free("y"));
            }
            _ => panic!("shape"),
        }
    }

    #[test]
    fn equivalence_normalizes_closed_terms() {
        let t = SymbolTable::standard();
        let eq = t.rel("eq").unwrap();
        let add = t.func("add").unwrap();
        let a = Formula::atom(
            &eq,
            vec![ATerm::app(&add, vec![ATerm::Num(2), ATerm::Num(3)]), ATerm::var("x")],
        );
        let b = Formula::atom(&eq, vec![ATerm::Num(5), ATerm::var("x")]);
        assert!(a.equiv(&b));
        let c = Formula::forall("u", Formula::atom(&eq, vec![ATerm::var("u"), ATerm::Num(0)]));
        let d = Formula::forall("v", Formula::atom(&eq, vec![ATerm::var("v"), ATerm::Num(0)]));
        assert!(c.equiv(&d));
    }

    #[test]
    fn dual_examples() {
        let t = SymbolTable::standard();
        let bot = t.bot();
        let eq = t.rel("eq").unwrap();
        let p = Formula::atom(&eq, vec![ATerm::var("x"), ATerm::var("y")]);
        let (lvl, d) = classify_dual(&Formula::forall("x", p.clone()), &bot).unwrap();
        assert_eq!(lvl, Some(HierLevel::Pi(1)));
        assert_eq!(d, Formula::exists("x", Formula::not(p.clone(), &bot)));
        let (lvl, d) = classify_dual(&p, &bot).unwrap();
        assert_eq!(lvl, Some(HierLevel::Zero));
        assert_eq!(d, Formula::not(p.clone(), &bot));
        let ea = Formula::exists("x", Formula::forall("y", p.clone()));
        let (lvl, d) = classify_dual(&ea, &bot).unwrap();
        assert_eq!(lvl, Some(HierLevel::Sigma(2)));
        assert_eq!(d, Formula::forall("x", Formula::exists("y", Formula::not(p, &bot))));
    }
}
