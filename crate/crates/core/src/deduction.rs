//! Sequent-style natural deduction for HA with the EM rule.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::arith::{atomic_truth, fresh_name, ATerm, Formula, RelSym, SymbolTable};

/// Atomic rules beyond the closed-atom axioms: equality, successor,
/// addition, multiplication and characteristic-function rules.
#[derive(Debug, Clone, PartialEq)]
pub enum PostRule {
    /// `⊢ t = t`
    EqRefl,
    /// `t = s ⊢ s = t`
    EqSym,
    /// `t = s, s = u ⊢ t = u`
    EqTrans,
    /// `t = s ⊢ S t = S s`
    EqCongS,
    /// `t = s, A[x:=t] ⊢ A[x:=s]` for an atom `A`
    Leibniz { var: String, atom: Formula },
    /// `S t = 0 ⊢ ⊥`
    SuccNeZero,
    /// `S t = S s ⊢ t = s`
    SuccInj,
    /// `⊢ t + 0 = t`
    AddZero,
    /// `⊢ t + S s = S (t + s)`
    AddSucc,
    /// `⊢ t * 0 = 0`
    MulZero,
    /// `⊢ t * S s = t * s + t`
    MulSucc,
    /// `χ_R(t̄) = 1 ⊢ R(t̄)`
    ChiOne(Arc<RelSym>),
    /// `χ_R(t̄) = 0 ⊢ R̄(t̄)`
    ChiZero(Arc<RelSym>),
    /// `χ_R(t̄) = S (S w) ⊢ R̄(t̄)`, last term is `w`
    ChiBig(Arc<RelSym>),
}

impl PostRule {
    pub fn name(&self) -> String {
        match self {
            PostRule::EqRefl => "eq-refl".into(),
            PostRule::EqSym => "eq-sym".into(),
            PostRule::EqTrans => "eq-trans".into(),
            PostRule::EqCongS => "eq-cong-s".into(),
            PostRule::Leibniz { .. } => "leibniz".into(),
            PostRule::SuccNeZero => "succ-ne-zero".into(),
            PostRule::SuccInj => "succ-inj".into(),
            PostRule::AddZero => "add-zero".into(),
            PostRule::AddSucc => "add-succ".into(),
            PostRule::MulZero => "mul-zero".into(),
            PostRule::MulSucc => "mul-succ".into(),
            PostRule::ChiOne(r) => format!("chi-one {}", r.name),
            PostRule::ChiZero(r) => format!("chi-zero {}", r.name),
            PostRule::ChiBig(r) => format!("chi-big {}", r.name),
        }
    }

    /// Number of terms the rule is instantiated with; `None` for the
    /// characteristic rules, whose count follows the relation.
    pub fn term_count(&self) -> usize {
        match self {
            PostRule::EqRefl | PostRule::SuccNeZero | PostRule::AddZero | PostRule::MulZero => 1,
            PostRule::EqSym
            | PostRule::EqCongS
            | PostRule::Leibniz { .. }
            | PostRule::SuccInj
            | PostRule::AddSucc
            | PostRule::MulSucc => 2,
            PostRule::EqTrans => 3,
            PostRule::ChiOne(r) | PostRule::ChiZero(r) => r.arity(),
            PostRule::ChiBig(r) => r.arity() + 1,
        }
    }

    /// Premisses and conclusion of the instance at `ts`.
    pub fn instance(&self, ts: &[ATerm], table: &SymbolTable) -> Result<(Vec<Formula>, Formula), String> {
        if ts.len() != self.term_count() {
            return Err(format!(
                "{} expects {} terms, got {}",
                self.name(),
                self.term_count(),
                ts.len()
            ));
        }
        let f = |n: &str| table.func(n).map_err(|e| e.to_string());
        let eq_rel = table.rel("eq").map_err(|e| e.to_string())?;
        let eq = |a: &ATerm, b: &ATerm| Formula::atom(&eq_rel, vec![a.clone(), b.clone()]);
        let s = f("S")?;
        let succ = |a: &ATerm| ATerm::app(&s, vec![a.clone()]);
        let add = f("add")?;
        let mul = f("mul")?;
        let zero = ATerm::Num(0);
        Ok(match self {
            PostRule::EqRefl => (vec![], eq(&ts[0], &ts[0])),
            PostRule::EqSym => (vec![eq(&ts[0], &ts[1])], eq(&ts[1], &ts[0])),
            PostRule::EqTrans => (vec![eq(&ts[0], &ts[1]), eq(&ts[1], &ts[2])], eq(&ts[0], &ts[2])),
            PostRule::EqCongS => (vec![eq(&ts[0], &ts[1])], eq(&succ(&ts[0]), &succ(&ts[1]))),
            PostRule::Leibniz { var, atom } => {
                if !atom.is_atomic() {
                    return Err("leibniz needs an atomic template".into());
                }
                (
                    vec![eq(&ts[0], &ts[1]), atom.subst(var, &ts[0])],
                    atom.subst(var, &ts[1]),
                )
            }
            PostRule::SuccNeZero => (vec![eq(&succ(&ts[0]), &zero)], table.bot()),
            PostRule::SuccInj => (vec![eq(&succ(&ts[0]), &succ(&ts[1]))], eq(&ts[0], &ts[1])),
            PostRule::AddZero => (vec![], eq(&ATerm::app(&add, vec![ts[0].clone(), zero]), &ts[0])),
            PostRule::AddSucc => (
                vec![],
                eq(
                    &ATerm::app(&add, vec![ts[0].clone(), succ(&ts[1])]),
                    &succ(&ATerm::app(&add, vec![ts[0].clone(), ts[1].clone()])),
                ),
            ),
            PostRule::MulZero => (vec![], eq(&ATerm::app(&mul, vec![ts[0].clone(), zero.clone()]), &zero)),
            PostRule::MulSucc => (
                vec![],
                eq(
                    &ATerm::app(&mul, vec![ts[0].clone(), succ(&ts[1])]),
                    &ATerm::app(
                        &add,
                        vec![ATerm::app(&mul, vec![ts[0].clone(), ts[1].clone()]), ts[0].clone()],
                    ),
                ),
            ),
            PostRule::ChiOne(r) => {
                let chi = ATerm::app(&r.chi, ts.to_vec());
                (vec![eq(&chi, &succ(&zero))], Formula::atom(r, ts.to_vec()))
            }
            PostRule::ChiZero(r) => {
                let chi = ATerm::app(&r.chi, ts.to_vec());
                (vec![eq(&chi, &zero)], Formula::atom(&r.complement(), ts.to_vec()))
            }
            PostRule::ChiBig(r) => {
                let (args, w) = ts.split_at(ts.len() - 1);
                let chi = ATerm::app(&r.chi, args.to_vec());
                (
                    vec![eq(&chi, &succ(&succ(&w[0])))],
                    Formula::atom(&r.complement(), args.to_vec()),
                )
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    Id(String),
    /// A true closed atom.
    AtomI,
    /// A false closed atom yields falsity.
    AtomE,
    AtomPost(PostRule, Vec<ATerm>),
    /// Ex falso restricted to atomic conclusions.
    FalseE0,
    AndI,
    AndEL,
    AndER,
    OrIL,
    OrIR,
    OrE(String),
    ImplyI(String),
    ImplyE,
    ForallI(String),
    ForallE(ATerm),
    ExistsI(ATerm),
    ExistsE(String, String),
    /// Complete induction with label and eigenvariable `y`: the premiss
    /// proves `A[x:=y]` from `∀z (z < y → A[x:=z])`.
    CInd(String, String),
    /// Simple induction on `A` over `x` with main term `main`; the step
    /// premiss proves `A[x:=S y]` from `A[x:=y]`.
    Ind {
        label: String,
        var: String,
        x: String,
        motive: Formula,
        main: ATerm,
    },
    /// Excluded middle on the atom `P` over `x`: the left premiss assumes
    /// `∀x P`, the right one `¬P[x:=y]`.
    EM {
        label: String,
        var: String,
        x: String,
        atom: Formula,
    },
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::Id(_) => "id",
            Rule::AtomI => "atom-i",
            Rule::AtomE => "atom-e",
            Rule::AtomPost(..) => "atom",
            Rule::FalseE0 => "false-e",
            Rule::AndI => "and-i",
            Rule::AndEL => "and-el",
            Rule::AndER => "and-er",
            Rule::OrIL => "or-il",
            Rule::OrIR => "or-ir",
            Rule::OrE(_) => "or-e",
            Rule::ImplyI(_) => "imp-i",
            Rule::ImplyE => "imp-e",
            Rule::ForallI(_) => "forall-i",
            Rule::ForallE(_) => "forall-e",
            Rule::ExistsI(_) => "exists-i",
            Rule::ExistsE(..) => "exists-e",
            Rule::CInd(..) => "cind",
            Rule::Ind { .. } => "ind",
            Rule::EM { .. } => "em",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Rule::Id(_) | Rule::AtomI => 0,
            Rule::AtomPost(r, _) => match r {
                PostRule::EqRefl | PostRule::AddZero | PostRule::AddSucc | PostRule::MulZero | PostRule::MulSucc => 0,
                PostRule::EqTrans | PostRule::Leibniz { .. } => 2,
                _ => 1,
            },
            Rule::AtomE
            | Rule::FalseE0
            | Rule::AndEL
            | Rule::AndER
            | Rule::OrIL
            | Rule::OrIR
            | Rule::ImplyI(_)
            | Rule::ForallI(_)
            | Rule::ForallE(_)
            | Rule::ExistsI(_)
            | Rule::CInd(..) => 1,
            Rule::AndI | Rule::ImplyE | Rule::ExistsE(..) | Rule::Ind { .. } | Rule::EM { .. } => 2,
            Rule::OrE(_) => 3,
        }
    }

    pub fn is_elim(&self) -> bool {
        matches!(
            self,
            Rule::AndEL | Rule::AndER | Rule::OrE(_) | Rule::ImplyE | Rule::ForallE(_) | Rule::ExistsE(..)
        )
    }

    pub fn is_intro(&self) -> bool {
        matches!(
            self,
            Rule::AndI
                | Rule::OrIL
                | Rule::OrIR
                | Rule::ImplyI(_)
                | Rule::ForallI(_)
                | Rule::ExistsI(_)
                | Rule::CInd(..)
        )
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Rule::AtomI | Rule::AtomE | Rule::AtomPost(..) | Rule::FalseE0)
    }

    /// Assumption label discharged by the rule.
    pub fn discharged(&self) -> Option<&str> {
        match self {
            Rule::OrE(l) | Rule::ImplyI(l) | Rule::ExistsE(l, _) | Rule::CInd(l, _) => Some(l),
            Rule::Ind { label, .. } | Rule::EM { label, .. } => Some(label),
            _ => None,
        }
    }

    /// Premisses in which the discharged label is in scope.
    pub fn discharging_premisses(&self) -> &'static [usize] {
        match self {
            Rule::OrE(_) => &[1, 2],
            Rule::ImplyI(_) | Rule::CInd(..) => &[0],
            Rule::ExistsE(..) | Rule::Ind { .. } => &[1],
            Rule::EM { .. } => &[0, 1],
            _ => &[],
        }
    }

    /// Eigenvariable and the premiss it is bound in.
    pub fn binder(&self) -> Option<(&str, usize)> {
        match self {
            Rule::ForallI(y) | Rule::CInd(_, y) => Some((y, 0)),
            Rule::ExistsE(_, y) => Some((y, 1)),
            Rule::Ind { var, .. } | Rule::EM { var, .. } => Some((var, 1)),
            _ => None,
        }
    }

    /// Free variables of the terms and formulas carried by the rule.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        match self {
            Rule::ForallE(t) | Rule::ExistsI(t) => t.free_vars(&mut out),
            Rule::AtomPost(r, ts) => {
                for t in ts {
                    t.free_vars(&mut out);
                }
                if let PostRule::Leibniz { var, atom } = r {
                    out.extend(Formula::forall(var, atom.clone()).free_vars());
                }
            }
            Rule::Ind { x, motive, main, .. } => {
                out.extend(Formula::forall(x, motive.clone()).free_vars());
                main.free_vars(&mut out);
            }
            Rule::EM { x, atom, .. } => out.extend(Formula::forall(x, atom.clone()).free_vars()),
            _ => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequent {
    pub ctx: Vec<(String, Formula)>,
    pub goal: Formula,
}

impl Sequent {
    pub fn new(ctx: Vec<(String, Formula)>, goal: Formula) -> Sequent {
        Sequent { ctx, goal }
    }
    pub fn lookup(&self, label: &str) -> Option<&Formula> {
        self.ctx.iter().find(|(l, _)| l == label).map(|(_, f)| f)
    }
    pub fn ctx_free_vars(&self) -> BTreeSet<String> {
        self.ctx.iter().flat_map(|(_, f)| f.free_vars()).collect()
    }
    /// Same labels with equivalent formulas, in any order.
    pub fn ctx_equiv(&self, other: &[(String, Formula)]) -> bool {
        self.ctx.len() == other.len()
            && self
                .ctx
                .iter()
                .all(|(l, f)| other.iter().any(|(l2, f2)| l == l2 && f.equiv(f2)))
    }
    pub fn equiv(&self, other: &Sequent) -> bool {
        self.goal.equiv(&other.goal) && self.ctx_equiv(&other.ctx)
    }
}

impl fmt::Display for Sequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ctx: Vec<String> = self.ctx.iter().map(|(l, a)| format!("{l}: {a}")).collect();
        write!(f, "{} ⊢ {}", ctx.join(", "), self.goal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub rule: Rule,
    pub seq: Sequent,
    pub prem: Vec<Derivation>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeductionError {
    #[error("rule shape error at {path}: {msg}")]
    RuleShape { path: String, msg: String },
    #[error("eigenvariable {var} violates its side condition at {path}")]
    Eigenvariable { var: String, path: String },
    #[error("discharge mismatch for {label} at {path}")]
    DischargeMismatch { label: String, path: String },
    #[error("substituting for {var} would capture {captured}")]
    CaptureRisk { var: String, captured: String },
}

pub type Path = Vec<usize>;

pub fn path_string(p: &[usize]) -> String {
    let mut s = String::from("root");
    for i in p {
        s.push('.');
        s.push_str(&i.to_string());
    }
    s
}

fn fa_parts(f: &Formula) -> Option<(&str, &Formula)> {
    match f {
        Formula::Forall(x, a) => Some((x, a)),
        _ => None,
    }
}

fn ex_parts(f: &Formula) -> Option<(&str, &Formula)> {
    match f {
        Formula::Exists(x, a) => Some((x, a)),
        _ => None,
    }
}

/// `∀z (z < y → A[x:=z])`, the hypothesis of complete induction.
pub fn cind_hypothesis(x: &str, a: &Formula, y: &str, table: &SymbolTable) -> Formula {
    let lt = table.rel("lt").expect("standard lt");
    let mut avoid = a.free_vars();
    avoid.insert(y.to_string());
    let z = if avoid.contains(x) || x == y {
        fresh_name(x)
    } else {
        x.to_string()
    };
    Formula::forall(
        &z,
        Formula::imply(
            Formula::atom(&lt, vec![ATerm::var(&z), ATerm::var(y)]),
            a.subst(x, &ATerm::var(&z)),
        ),
    )
}

impl Derivation {
    /// A node with an empty context; see [`Derivation::recontext`].
    pub fn node(rule: Rule, goal: Formula, prem: Vec<Derivation>) -> Derivation {
        Derivation {
            rule,
            seq: Sequent::new(vec![], goal),
            prem,
        }
    }

    pub fn goal(&self) -> &Formula {
        &self.seq.goal
    }

    pub fn size(&self) -> usize {
        1 + self.prem.iter().map(|p| p.size()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.prem.iter().map(|p| p.depth()).max().unwrap_or(0)
    }

    pub fn get(&self, path: &[usize]) -> Option<&Derivation> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.prem.get(*i)?.get(rest),
        }
    }

    pub fn get_mut(&mut self, path: &[usize]) -> Option<&mut Derivation> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.prem.get_mut(*i)?.get_mut(rest),
        }
    }

    /// All node paths in preorder.
    pub fn paths(&self) -> Vec<Path> {
        let mut out = Vec::new();
        fn go(d: &Derivation, cur: &mut Path, out: &mut Vec<Path>) {
            out.push(cur.clone());
            for (i, p) in d.prem.iter().enumerate() {
                cur.push(i);
                go(p, cur, out);
                cur.pop();
            }
        }
        go(self, &mut Vec::new(), &mut out);
        out
    }

    /// The assumption a rule adds for premiss `i`, computed from the node.
    pub fn assumption_for(&self, i: usize, table: &SymbolTable) -> Option<(String, Formula)> {
        let l = self.rule.discharged()?;
        if !self.rule.discharging_premisses().contains(&i) {
            return None;
        }
        let f = match &self.rule {
            Rule::OrE(_) => match self.prem.first()?.goal() {
                Formula::Or(a, b) => {
                    if i == 1 {
                        (**a).clone()
                    } else {
                        (**b).clone()
                    }
                }
                _ => return None,
            },
            Rule::ImplyI(_) => match self.goal() {
                Formula::Imply(a, _) => (**a).clone(),
                _ => return None,
            },
            Rule::ExistsE(_, y) => {
                let (x, a) = ex_parts(self.prem.first()?.goal())?;
                a.subst(x, &ATerm::var(y))
            }
            Rule::CInd(_, y) => {
                let (x, a) = fa_parts(self.goal())?;
                cind_hypothesis(x, a, y, table)
            }
            Rule::Ind { var, x, motive, .. } => motive.subst(x, &ATerm::var(var)),
            Rule::EM { var, x, atom, .. } => {
                if i == 0 {
                    Formula::forall(x, atom.clone())
                } else {
                    Formula::not(atom.subst(x, &ATerm::var(var)), &table.bot())
                }
            }
            _ => return None,
        };
        Some((l.to_string(), f))
    }

    /// Recomputes every context top-down from `ctx` at the root.
    pub fn recontext(&mut self, ctx: Vec<(String, Formula)>, table: &SymbolTable) {
        self.seq.ctx = ctx;
        for i in 0..self.prem.len() {
            let mut c = self.seq.ctx.clone();
            if let Some(a) = self.assumption_for(i, table) {
                c.retain(|(l, _)| *l != a.0);
                c.push(a);
            }
            self.prem[i].recontext(c, table);
        }
    }

    pub fn with_context(mut self, ctx: Vec<(String, Formula)>, table: &SymbolTable) -> Derivation {
        self.recontext(ctx, table);
        self
    }

    /// Whether an `Id` leaf for `label` occurs free (not under a rebinding).
    pub fn uses_label(&self, label: &str) -> bool {
        match &self.rule {
            Rule::Id(l) => l == label,
            r => self.prem.iter().enumerate().any(|(i, p)| {
                let rebinds = r.discharged() == Some(label) && r.discharging_premisses().contains(&i);
                !rebinds && p.uses_label(label)
            }),
        }
    }

    /// Variables free in some formula occurrence and not bound by a rule.
    pub fn free_term_vars(&self) -> BTreeSet<String> {
        let mut out = self.goal().free_vars();
        out.extend(self.rule.free_vars());
        let binder = self.rule.binder();
        for (i, p) in self.prem.iter().enumerate() {
            let mut fv = p.free_term_vars();
            if let Some((y, j)) = binder {
                if i == j {
                    fv.remove(y);
                }
            }
            out.extend(fv);
        }
        out
    }

    pub fn is_closed(&self) -> bool {
        self.free_term_vars().is_empty()
    }

    /// Labels of `Id` leaves that are not discharged inside the derivation.
    pub fn open_assumptions(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        match &self.rule {
            Rule::Id(l) => {
                out.insert(l.clone());
            }
            r => {
                for (i, p) in self.prem.iter().enumerate() {
                    let mut inner = p.open_assumptions();
                    if r.discharging_premisses().contains(&i) {
                        if let Some(l) = r.discharged() {
                            inner.remove(l);
                        }
                    }
                    out.extend(inner);
                }
            }
        }
        out
    }

    /// Every variable name occurring anywhere, bound or free.
    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.goal().all_vars(&mut out);
        out.extend(self.rule.free_vars());
        if let Some((y, _)) = self.rule.binder() {
            out.insert(y.to_string());
        }
        for p in &self.prem {
            out.extend(p.all_vars());
        }
        out
    }

    fn subst_rule(rule: &Rule, x: &str, t: &ATerm) -> Rule {
        match rule {
            Rule::ForallE(s) => Rule::ForallE(s.subst(x, t)),
            Rule::ExistsI(s) => Rule::ExistsI(s.subst(x, t)),
            Rule::AtomPost(r, ts) => {
                let r = match r {
                    PostRule::Leibniz { var, atom } if var != x => match Formula::forall(var, atom.clone()).subst(x, t)
                    {
                        Formula::Forall(v, a) => PostRule::Leibniz { var: v, atom: *a },
                        _ => unreachable!(),
                    },
                    other => other.clone(),
                };
                Rule::AtomPost(r, ts.iter().map(|s| s.subst(x, t)).collect())
            }
            Rule::Ind {
                label,
                var,
                x: mx,
                motive,
                main,
            } => {
                let (mx2, motive2) = match Formula::forall(mx, motive.clone()).subst(x, t) {
                    Formula::Forall(v, a) => (v, *a),
                    _ => unreachable!(),
                };
                Rule::Ind {
                    label: label.clone(),
                    var: var.clone(),
                    x: mx2,
                    motive: motive2,
                    main: main.subst(x, t),
                }
            }
            Rule::EM {
                label,
                var,
                x: bx,
                atom,
            } => {
                let (bx2, atom2) = match Formula::forall(bx, atom.clone()).subst(x, t) {
                    Formula::Forall(v, a) => (v, *a),
                    _ => unreachable!(),
                };
                Rule::EM {
                    label: label.clone(),
                    var: var.clone(),
                    x: bx2,
                    atom: atom2,
                }
            }
            other => other.clone(),
        }
    }

    /// Substitution without capture checks; binders of `x` stop it.
    pub(crate) fn subst_raw(&self, x: &str, t: &ATerm) -> Derivation {
        let binder = self.rule.binder();
        let prem = self
            .prem
            .iter()
            .enumerate()
            .map(|(i, p)| match binder {
                Some((y, j)) if j == i && y == x => p.clone(),
                _ => p.subst_raw(x, t),
            })
            .collect();
        Derivation {
            rule: Self::subst_rule(&self.rule, x, t),
            seq: Sequent {
                ctx: self.seq.ctx.iter().map(|(l, f)| (l.clone(), f.subst(x, t))).collect(),
                goal: self.seq.goal.subst(x, t),
            },
            prem,
        }
    }

    fn capture_check(&self, x: &str, tvars: &BTreeSet<String>) -> Result<(), DeductionError> {
        if let Some((y, j)) = self.rule.binder() {
            if y != x && tvars.contains(y) && self.prem[j].free_term_vars().contains(x) {
                return Err(DeductionError::CaptureRisk {
                    var: x.to_string(),
                    captured: y.to_string(),
                });
            }
        }
        for (i, p) in self.prem.iter().enumerate() {
            if matches!(self.rule.binder(), Some((y, j)) if j == i && y == x) {
                continue;
            }
            p.capture_check(x, tvars)?;
        }
        Ok(())
    }

    /// `d[x := t]` on every formula occurrence.
    pub fn subst(&self, x: &str, t: &ATerm) -> Result<Derivation, DeductionError> {
        self.capture_check(x, &t.vars())?;
        Ok(self.subst_raw(x, t))
    }

    /// Renames `Id` leaves for `from` to `to`, respecting rebinding.
    fn rename_label(&mut self, from: &str, to: &str) {
        for (l, _) in self.seq.ctx.iter_mut() {
            if l == from {
                *l = to.to_string();
            }
        }
        if let Rule::Id(l) = &mut self.rule {
            if l == from {
                *l = to.to_string();
            }
            return;
        }
        let rebinds = self.rule.discharged() == Some(from);
        let scoped = self.rule.discharging_premisses();
        for (i, p) in self.prem.iter_mut().enumerate() {
            if !(rebinds && scoped.contains(&i)) {
                p.rename_label(from, to);
            }
        }
    }

    fn set_discharged(&mut self, to: String) {
        match &mut self.rule {
            Rule::OrE(l) | Rule::ImplyI(l) | Rule::ExistsE(l, _) | Rule::CInd(l, _) => *l = to,
            Rule::Ind { label, .. } | Rule::EM { label, .. } => *label = to,
            _ => {}
        }
    }

    fn set_binder(&mut self, to: String) {
        match &mut self.rule {
            Rule::ForallI(y) | Rule::CInd(_, y) | Rule::ExistsE(_, y) => *y = to,
            Rule::Ind { var, .. } | Rule::EM { var, .. } => *var = to,
            _ => {}
        }
    }

    /// Renames every discharged label and eigenvariable to a globally fresh
    /// name, so copies of a derivation can be grafted without clashes.
    pub fn freshen(&self) -> Derivation {
        let mut d = self.clone();
        if let Some(l) = d.rule.discharged().map(str::to_string) {
            let l2 = fresh_name(&l);
            for &i in d.rule.discharging_premisses() {
                if let Some(p) = d.prem.get_mut(i) {
                    p.rename_label(&l, &l2);
                }
            }
            d.set_discharged(l2);
        }
        if let Some((y, j)) = d.rule.binder().map(|(y, j)| (y.to_string(), j)) {
            let y2 = fresh_name(&y);
            if let Some(p) = d.prem.get(j) {
                d.prem[j] = p.subst_raw(&y, &ATerm::var(&y2));
            }
            d.set_binder(y2);
        }
        d.prem = d.prem.iter().map(|p| p.freshen()).collect();
        d
    }

    /// Normalizes closed arithmetic subterms in all formulas and rule terms.
    pub fn normalize_terms(&self) -> Derivation {
        let nf = |f: &Formula| f.normalize_terms().unwrap_or_else(|_| f.clone());
        let nt = |t: &ATerm| t.normalize().unwrap_or_else(|_| t.clone());
        let rule = match &self.rule {
            Rule::ForallE(t) => Rule::ForallE(nt(t)),
            Rule::ExistsI(t) => Rule::ExistsI(nt(t)),
            Rule::AtomPost(r, ts) => Rule::AtomPost(r.clone(), ts.iter().map(nt).collect()),
            Rule::Ind {
                label,
                var,
                x,
                motive,
                main,
            } => Rule::Ind {
                label: label.clone(),
                var: var.clone(),
                x: x.clone(),
                motive: nf(motive),
                main: nt(main),
            },
            r => r.clone(),
        };
        Derivation {
            rule,
            seq: Sequent {
                ctx: self.seq.ctx.iter().map(|(l, f)| (l.clone(), nf(f))).collect(),
                goal: nf(&self.seq.goal),
            },
            prem: self.prem.iter().map(|p| p.normalize_terms()).collect(),
        }
    }
}

struct Checker<'a> {
    table: &'a SymbolTable,
}

fn shape(path: &[usize], msg: impl Into<String>) -> DeductionError {
    DeductionError::RuleShape {
        path: path_string(path),
        msg: msg.into(),
    }
}

impl Checker<'_> {
    fn expect(&self, path: &[usize], got: &Formula, want: &Formula, what: &str) -> Result<(), DeductionError> {
        if got.equiv(want) {
            Ok(())
        } else {
            Err(shape(path, format!("{what}: expected {want}, found {got}")))
        }
    }

    fn eigen(&self, path: &[usize], y: &str, forbidden: &[&Formula], ctx: &Sequent) -> Result<(), DeductionError> {
        if forbidden.iter().any(|f| f.has_free(y)) || ctx.ctx_free_vars().contains(y) {
            return Err(DeductionError::Eigenvariable {
                var: y.to_string(),
                path: path_string(path),
            });
        }
        Ok(())
    }

    fn check(&self, d: &Derivation, path: &mut Path) -> Result<(), DeductionError> {
        let n = d.rule.arity();
        if d.prem.len() != n {
            return Err(shape(
                path,
                format!("{} expects {n} premisses, found {}", d.rule.name(), d.prem.len()),
            ));
        }
        let mut seen = BTreeSet::new();
        for (l, _) in &d.seq.ctx {
            if !seen.insert(l) {
                return Err(shape(path, format!("label {l} occurs twice in the context")));
            }
        }
        if let Some(l) = d.rule.discharged() {
            if d.seq.lookup(l).is_some() {
                return Err(DeductionError::DischargeMismatch {
                    label: l.to_string(),
                    path: path_string(path),
                });
            }
        }
        // premiss contexts
        for (i, p) in d.prem.iter().enumerate() {
            let mut want = d.seq.ctx.clone();
            if d.rule.discharging_premisses().contains(&i) {
                match d.assumption_for(i, self.table) {
                    Some(a) => want.push(a),
                    None => return Err(shape(path, "cannot determine the discharged assumption")),
                }
            }
            if !p.seq.ctx_equiv(&want) {
                return match d.rule.discharged() {
                    Some(l) if d.rule.discharging_premisses().contains(&i) => Err(DeductionError::DischargeMismatch {
                        label: l.to_string(),
                        path: path_string(path),
                    }),
                    _ => Err(shape(path, format!("premiss {i} has a different context"))),
                };
            }
        }
        self.check_rule(d, path)?;
        for (i, p) in d.prem.iter().enumerate() {
            path.push(i);
            self.check(p, path)?;
            path.pop();
        }
        Ok(())
    }

    fn check_rule(&self, d: &Derivation, path: &[usize]) -> Result<(), DeductionError> {
        let g = d.goal();
        let pg = |i: usize| d.prem[i].goal();
        let bot = self.table.bot();
        match &d.rule {
            Rule::Id(l) => match d.seq.lookup(l) {
                Some(a) => self.expect(path, g, a, "identity"),
                None => Err(DeductionError::DischargeMismatch {
                    label: l.clone(),
                    path: path_string(path),
                }),
            },
            Rule::AtomI => match atomic_truth(g) {
                Ok(true) => Ok(()),
                Ok(false) => Err(shape(path, format!("{g} is false"))),
                Err(e) => Err(shape(path, e.to_string())),
            },
            Rule::AtomE => {
                self.expect(path, g, &bot, "conclusion")?;
                match atomic_truth(pg(0)) {
                    Ok(false) => Ok(()),
                    Ok(true) => Err(shape(path, format!("{} is true", pg(0)))),
                    Err(e) => Err(shape(path, e.to_string())),
                }
            }
            Rule::FalseE0 => {
                self.expect(path, pg(0), &bot, "premiss")?;
                if g.is_atomic() {
                    Ok(())
                } else {
                    Err(shape(path, "ex falso needs an atomic conclusion"))
                }
            }
            Rule::AtomPost(r, ts) => {
                let (ps, c) = r.instance(ts, self.table).map_err(|m| shape(path, m))?;
                self.expect(path, g, &c, "conclusion")?;
                for (i, p) in ps.iter().enumerate() {
                    self.expect(path, pg(i), p, "premiss")?;
                }
                Ok(())
            }
            Rule::AndI => match g {
                Formula::And(a, b) => {
                    self.expect(path, pg(0), a, "left premiss")?;
                    self.expect(path, pg(1), b, "right premiss")
                }
                _ => Err(shape(path, "conclusion is not a conjunction")),
            },
            Rule::AndEL | Rule::AndER => match pg(0) {
                Formula::And(a, b) => {
                    let want = if d.rule == Rule::AndEL { a } else { b };
                    self.expect(path, g, want, "conclusion")
                }
                _ => Err(shape(path, "premiss is not a conjunction")),
            },
            Rule::OrIL | Rule::OrIR => match g {
                Formula::Or(a, b) => {
                    let want = if d.rule == Rule::OrIL { a } else { b };
                    self.expect(path, pg(0), want, "premiss")
                }
                _ => Err(shape(path, "conclusion is not a disjunction")),
            },
            Rule::OrE(_) => match pg(0) {
                Formula::Or(..) => {
                    self.expect(path, pg(1), g, "left minor")?;
                    self.expect(path, pg(2), g, "right minor")
                }
                _ => Err(shape(path, "major premiss is not a disjunction")),
            },
            Rule::ImplyI(_) => match g {
                Formula::Imply(_, b) => self.expect(path, pg(0), b, "premiss"),
                _ => Err(shape(path, "conclusion is not an implication")),
            },
            Rule::ImplyE => match pg(0) {
                Formula::Imply(a, b) => {
                    self.expect(path, g, b, "conclusion")?;
                    self.expect(path, pg(1), a, "minor premiss")
                }
                _ => Err(shape(path, "major premiss is not an implication")),
            },
            Rule::ForallI(y) => match fa_parts(g) {
                Some((x, a)) => {
                    self.expect(path, pg(0), &a.subst(x, &ATerm::var(y)), "premiss")?;
                    self.eigen(path, y, &[g], &d.seq)
                }
                None => Err(shape(path, "conclusion is not universal")),
            },
            Rule::ForallE(t) => match fa_parts(pg(0)) {
                Some((x, a)) => self.expect(path, g, &a.subst(x, t), "conclusion"),
                None => Err(shape(path, "premiss is not universal")),
            },
            Rule::ExistsI(t) => match ex_parts(g) {
                Some((x, a)) => self.expect(path, pg(0), &a.subst(x, t), "premiss"),
                None => Err(shape(path, "conclusion is not existential")),
            },
            Rule::ExistsE(_, y) => match ex_parts(pg(0)) {
                Some(_) => {
                    self.expect(path, pg(1), g, "minor premiss")?;
                    self.eigen(path, y, &[g, pg(0)], &d.seq)
                }
                None => Err(shape(path, "major premiss is not existential")),
            },
            Rule::CInd(_, y) => match fa_parts(g) {
                Some((x, a)) => {
                    self.expect(path, pg(0), &a.subst(x, &ATerm::var(y)), "premiss")?;
                    self.eigen(path, y, &[g], &d.seq)
                }
                None => Err(shape(path, "conclusion is not universal")),
            },
            Rule::Ind {
                var, x, motive, main, ..
            } => {
                let s = self.table.func("S").map_err(|e| shape(path, e.to_string()))?;
                self.expect(path, g, &motive.subst(x, main), "conclusion")?;
                self.expect(path, pg(0), &motive.subst(x, &ATerm::Num(0)), "base")?;
                let step = motive.subst(x, &ATerm::app(&s, vec![ATerm::var(var)]));
                self.expect(path, pg(1), &step, "step")?;
                self.eigen(path, var, &[&Formula::forall(x, motive.clone())], &d.seq)
            }
            Rule::EM { var, x, atom, .. } => {
                if !atom.is_atomic() {
                    return Err(shape(path, "excluded middle needs an atom"));
                }
                self.expect(path, pg(0), g, "left premiss")?;
                self.expect(path, pg(1), g, "right premiss")?;
                self.eigen(path, var, &[g, &Formula::forall(x, atom.clone())], &d.seq)
            }
        }
    }
}

/// Validates every node of `d` and returns its root sequent.
pub fn check_derivation(d: &Derivation, table: &SymbolTable) -> Result<Sequent, DeductionError> {
    Checker { table }.check(d, &mut Vec::new())?;
    Ok(d.seq.clone())
}

/// Builders for common derivation shapes.
pub mod build {
    use super::*;

    pub fn id(label: &str, goal: Formula) -> Derivation {
        Derivation::node(Rule::Id(label.into()), goal, vec![])
    }

    pub fn atom_i(goal: Formula) -> Derivation {
        Derivation::node(Rule::AtomI, goal, vec![])
    }

    pub fn post(r: PostRule, ts: Vec<ATerm>, prem: Vec<Derivation>, table: &SymbolTable) -> Derivation {
        let (_, c) = r.instance(&ts, table).expect("well-formed atomic rule");
        Derivation::node(Rule::AtomPost(r, ts), c, prem)
    }

    pub fn exists_i(goal: Formula, t: ATerm, prem: Derivation) -> Derivation {
        Derivation::node(Rule::ExistsI(t), goal, vec![prem])
    }

    pub fn forall_e(t: ATerm, prem: Derivation) -> Derivation {
        let goal = match prem.goal() {
            Formula::Forall(x, a) => a.subst(x, &t),
            g => panic!("forall_e on {g}"),
        };
        Derivation::node(Rule::ForallE(t), goal, vec![prem])
    }

    pub fn imply_e(major: Derivation, minor: Derivation) -> Derivation {
        let goal = match major.goal() {
            Formula::Imply(_, b) => (**b).clone(),
            g => panic!("imply_e on {g}"),
        };
        Derivation::node(Rule::ImplyE, goal, vec![major, minor])
    }

    /// `(∀x P) ∨ (∃x ¬P)` from the EM rule and two disjunction introductions.
    pub fn em_axiom(x: &str, atom: &Formula, table: &SymbolTable) -> Derivation {
        let bot = table.bot();
        let y = fresh_name(x);
        let all = Formula::forall(x, atom.clone());
        let ex = Formula::exists(x, Formula::not(atom.clone(), &bot));
        let goal = Formula::or(all.clone(), ex.clone());
        let left = Derivation::node(Rule::OrIL, goal.clone(), vec![id("a", all)]);
        let neg = Formula::not(atom.subst(x, &ATerm::var(&y)), &bot);
        let right = Derivation::node(
            Rule::OrIR,
            goal.clone(),
            vec![exists_i(ex, ATerm::var(&y), id("a", neg))],
        );
        Derivation::node(
            Rule::EM {
                label: "a".into(),
                var: y,
                x: x.into(),
                atom: atom.clone(),
            },
            goal,
            vec![left, right],
        )
        .with_context(vec![], table)
    }
}
