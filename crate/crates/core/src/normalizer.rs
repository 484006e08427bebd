//! Derivation rewriting for HA+EM: head-cuts, proper, induction, witness and
//! permutative reductions, normalization and witness extraction.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};

use thiserror::Error;

use crate::arith::{atomic_truth, fresh_name, ATerm, Formula, SymbolTable};
use crate::deduction::{check_derivation, path_string, DeductionError, Derivation, Path, Rule, Sequent};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connective {
    And,
    Or,
    Imply,
    Forall,
    Exists,
}

impl fmt::Display for Connective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Connective::And => "and",
            Connective::Or => "or",
            Connective::Imply => "imp",
            Connective::Forall => "forall",
            Connective::Exists => "exists",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutKind {
    Proper(Connective),
    Ind,
    EMWitness,
    /// An elimination (named by its rule) whose major premiss comes from EM.
    EMPermute(&'static str),
    OrExistsPermute,
    ImmediateSimpl,
}

impl fmt::Display for CutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CutKind::Proper(c) => write!(f, "proper-{c}"),
            CutKind::Ind => f.write_str("ind"),
            CutKind::EMWitness => f.write_str("em-witness"),
            CutKind::EMPermute(r) => write!(f, "em-perm-{r}"),
            CutKind::OrExistsPermute => f.write_str("perm"),
            CutKind::ImmediateSimpl => f.write_str("simpl"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadCut {
    pub path: Path,
    pub kind: CutKind,
}

impl fmt::Display for HeadCut {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.kind, path_string(&self.path))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormOptions {
    /// Also perform the ∨E/∃E permutations and immediate simplifications,
    /// and look for cuts off the principal branches once those are normal.
    pub full: bool,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { full: true }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormError {
    #[error("no {kind} redex at {path}")]
    InvalidCut { kind: CutKind, path: String },
    #[error("fuel exhausted after {steps} rewrites")]
    FuelExhausted { steps: usize, stuck: Box<Derivation> },
    #[error("invariant violated by {kind} at {path}: {msg}")]
    Invariant { kind: CutKind, path: String, msg: String },
    #[error("derivation is not closed: {0}")]
    NotClosed(String),
    #[error("conclusion {0} is not simply existential")]
    NotSimplyExistential(String),
    #[error("normal form has the wrong shape: {0}")]
    ShapeViolation(String),
    #[error(transparent)]
    Deduction(#[from] DeductionError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub kind: CutKind,
    pub path: Path,
    pub conclusion_hash: u64,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {:016x}",
            self.kind,
            path_string(&self.path),
            self.conclusion_hash
        )
    }
}

pub fn conclusion_hash(s: &Sequent) -> u64 {
    let mut h = DefaultHasher::new();
    s.goal.to_string().hash(&mut h);
    for (l, a) in &s.ctx {
        l.hash(&mut h);
        a.to_string().hash(&mut h);
    }
    h.finish()
}

/// Premisses lying on principal branches through `d`.
fn principal_premisses(d: &Derivation) -> std::ops::Range<usize> {
    if d.rule.is_elim() || matches!(d.rule, Rule::EM { .. }) {
        0..d.prem.len().min(1)
    } else {
        0..d.prem.len()
    }
}

/// Paths (relative to `d`) of `∀E` instances of the free assumption `label`
/// with a closed conclusion.
fn universal_instances(d: &Derivation, label: &str) -> Vec<Path> {
    let mut out = Vec::new();
    fn go(d: &Derivation, label: &str, cur: &mut Path, out: &mut Vec<Path>) {
        if let Rule::ForallE(_) = d.rule {
            if d.prem[0].rule == Rule::Id(label.to_string()) && d.goal().is_closed() {
                out.push(cur.clone());
                return;
            }
        }
        for (i, p) in d.prem.iter().enumerate() {
            if d.rule.discharged() == Some(label) && d.rule.discharging_premisses().contains(&i) {
                continue;
            }
            cur.push(i);
            go(p, label, cur, out);
            cur.pop();
        }
    }
    go(d, label, &mut Vec::new(), &mut out);
    out
}

fn reducible_main(main: &ATerm) -> Option<Option<ATerm>> {
    let m = main.normalize().ok()?;
    if m.is_zero() {
        Some(None)
    } else {
        m.as_succ().map(Some)
    }
}

/// The reduction applicable at the root of `d`, if any.
pub fn cut_at(d: &Derivation, opts: NormOptions) -> Option<CutKind> {
    if d.rule.is_elim() {
        let major = &d.prem[0].rule;
        let kind = match (&d.rule, major) {
            (Rule::AndEL | Rule::AndER, Rule::AndI) => Some(CutKind::Proper(Connective::And)),
            (Rule::OrE(_), Rule::OrIL | Rule::OrIR) => Some(CutKind::Proper(Connective::Or)),
            (Rule::ImplyE, Rule::ImplyI(_)) => Some(CutKind::Proper(Connective::Imply)),
            (Rule::ForallE(_), Rule::ForallI(_)) => Some(CutKind::Proper(Connective::Forall)),
            (Rule::ExistsE(..), Rule::ExistsI(_)) => Some(CutKind::Proper(Connective::Exists)),
            (r, Rule::EM { .. }) => Some(CutKind::EMPermute(r.name())),
            (_, Rule::OrE(_) | Rule::ExistsE(..)) if opts.full => Some(CutKind::OrExistsPermute),
            _ => None,
        };
        if kind.is_some() {
            return kind;
        }
    }
    match &d.rule {
        Rule::Ind { main, .. } if reducible_main(main).is_some() => Some(CutKind::Ind),
        Rule::EM { label, .. } => {
            let left = &d.prem[0];
            if !left.uses_label(label) || !universal_instances(left, label).is_empty() {
                Some(CutKind::EMWitness)
            } else if opts.full && !d.prem[1].uses_label(label) {
                Some(CutKind::ImmediateSimpl)
            } else {
                None
            }
        }
        Rule::OrE(l) if opts.full && (!d.prem[1].uses_label(l) || !d.prem[2].uses_label(l)) => {
            Some(CutKind::ImmediateSimpl)
        }
        Rule::ExistsE(l, _) if opts.full && !d.prem[1].uses_label(l) => Some(CutKind::ImmediateSimpl),
        _ => None,
    }
}

fn bfs(d: &Derivation, opts: NormOptions, principal_only: bool) -> Option<HeadCut> {
    let mut queue = VecDeque::from([Vec::new()]);
    while let Some(path) = queue.pop_front() {
        let n = d.get(&path).expect("queued paths exist");
        if let Some(kind) = cut_at(n, opts) {
            return Some(HeadCut { path, kind });
        }
        let range = if principal_only {
            principal_premisses(n)
        } else {
            0..n.prem.len()
        };
        for i in range {
            let mut p = path.clone();
            p.push(i);
            queue.push_back(p);
        }
    }
    None
}

/// The outermost head-cut, leftmost among those at equal depth. With
/// `opts.full`, cuts off the principal branches are returned once the
/// principal branches are cut-free.
pub fn find_head_cut(d: &Derivation, opts: NormOptions) -> Option<HeadCut> {
    bfs(d, opts, true).or_else(|| if opts.full { bfs(d, opts, false) } else { None })
}

/// Every position where some reduction applies.
pub fn all_cuts(d: &Derivation, opts: NormOptions) -> Vec<HeadCut> {
    d.paths()
        .into_iter()
        .filter_map(|path| {
            let kind = cut_at(d.get(&path)?, opts)?;
            Some(HeadCut { path, kind })
        })
        .collect()
}

/// Replaces the free `Id(label)` leaves of `d` by `f(leaf)`.
fn replace_leaves(d: &Derivation, label: &str, f: &mut dyn FnMut(&Derivation) -> Derivation) -> Derivation {
    if d.rule == Rule::Id(label.to_string()) {
        return f(d);
    }
    let rebinds = d.rule.discharged() == Some(label);
    let prem = d
        .prem
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if rebinds && d.rule.discharging_premisses().contains(&i) {
                p.clone()
            } else {
                replace_leaves(p, label, f)
            }
        })
        .collect();
    Derivation {
        rule: d.rule.clone(),
        seq: d.seq.clone(),
        prem,
    }
}

/// Grafts a fresh copy of `repl` at every free occurrence of `label`.
fn graft(d: &Derivation, label: &str, repl: &Derivation) -> Derivation {
    replace_leaves(d, label, &mut |_| repl.freshen())
}

fn reduce_node(n: &Derivation, kind: CutKind, table: &SymbolTable) -> Result<Derivation, String> {
    let bad = || format!("node does not match {kind}");
    let subst = |d: &Derivation, y: &str, t: &ATerm| d.subst(y, t).map_err(|e| e.to_string());
    match kind {
        CutKind::Proper(c) => {
            let major = &n.prem[0];
            match (c, &n.rule, &major.rule) {
                (Connective::And, r, Rule::AndI) => Ok(major.prem[usize::from(*r == Rule::AndER)].clone()),
                (Connective::Or, Rule::OrE(l), r) => {
                    let i = if *r == Rule::OrIL { 1 } else { 2 };
                    Ok(graft(&n.prem[i], l, &major.prem[0]))
                }
                (Connective::Imply, _, Rule::ImplyI(l)) => Ok(graft(&major.prem[0], l, &n.prem[1])),
                (Connective::Forall, Rule::ForallE(t), Rule::ForallI(y)) => subst(&major.prem[0], y, t),
                (Connective::Exists, Rule::ExistsE(l, y), Rule::ExistsI(t)) => {
                    Ok(graft(&subst(&n.prem[1], y, t)?, l, &major.prem[0]))
                }
                _ => Err(bad()),
            }
        }
        CutKind::Ind => {
            let Rule::Ind {
                label,
                var,
                x,
                motive,
                main,
            } = &n.rule
            else {
                return Err(bad());
            };
            match reducible_main(main).ok_or_else(bad)? {
                None => Ok(n.prem[0].clone()),
                Some(b) => {
                    let inner = Derivation {
                        rule: Rule::Ind {
                            label: label.clone(),
                            var: var.clone(),
                            x: x.clone(),
                            motive: motive.clone(),
                            main: b.clone(),
                        },
                        seq: Sequent::new(vec![], motive.subst(x, &b)),
                        prem: n.prem.clone(),
                    };
                    Ok(graft(&subst(&n.prem[1], var, &b)?, label, &inner))
                }
            }
        }
        CutKind::EMWitness => {
            let Rule::EM { label, var, .. } = &n.rule else {
                return Err(bad());
            };
            let left = &n.prem[0];
            let sites = universal_instances(left, label);
            let mut counterexample = None;
            for p in &sites {
                let inst = left.get(p).expect("site exists");
                match atomic_truth(inst.goal()) {
                    Ok(true) => {}
                    Ok(false) => {
                        let Rule::ForallE(t) = &inst.rule else { unreachable!() };
                        counterexample = Some(t.clone());
                        break;
                    }
                    Err(e) => return Err(e.to_string()),
                }
            }
            match counterexample {
                None => {
                    let mut left2 = left.clone();
                    for p in &sites {
                        let node = left2.get_mut(p).expect("site exists");
                        *node = Derivation::node(Rule::AtomI, node.goal().clone(), vec![]);
                    }
                    if left2.uses_label(label) {
                        let mut out = n.clone();
                        out.prem[0] = left2;
                        Ok(out)
                    } else {
                        Ok(left2)
                    }
                }
                Some(t) => {
                    let right = subst(&n.prem[1], var, &t)?;
                    let bot = table.bot();
                    Ok(replace_leaves(&right, label, &mut |leaf| {
                        let Formula::Imply(atom, _) = leaf.goal() else {
                            return leaf.clone();
                        };
                        let beta = fresh_name("w");
                        let refute = Derivation::node(
                            Rule::AtomE,
                            bot.clone(),
                            vec![Derivation::node(Rule::Id(beta.clone()), (**atom).clone(), vec![])],
                        );
                        Derivation::node(Rule::ImplyI(beta), leaf.goal().clone(), vec![refute])
                    }))
                }
            }
        }
        CutKind::EMPermute(_) => {
            let em = &n.prem[0];
            if !matches!(em.rule, Rule::EM { .. }) {
                return Err(bad());
            }
            let push = |branch: &Derivation, fresh: bool| {
                let mut e = n.clone();
                e.prem[0] = branch.clone();
                if fresh {
                    for m in e.prem.iter_mut().skip(1) {
                        *m = m.freshen();
                    }
                }
                e
            };
            Ok(Derivation {
                rule: em.rule.clone(),
                seq: n.seq.clone(),
                prem: vec![push(&em.prem[0], false), push(&em.prem[1], true)],
            })
        }
        CutKind::OrExistsPermute => {
            let inner = &n.prem[0];
            let minors: Vec<usize> = match inner.rule {
                Rule::OrE(_) => vec![1, 2],
                Rule::ExistsE(..) => vec![1],
                _ => return Err(bad()),
            };
            let mut out = inner.clone();
            out.seq = n.seq.clone();
            for (k, &i) in minors.iter().enumerate() {
                let mut e = n.clone();
                e.prem[0] = inner.prem[i].clone();
                if k > 0 {
                    for m in e.prem.iter_mut().skip(1) {
                        *m = m.freshen();
                    }
                }
                out.prem[i] = e;
            }
            Ok(out)
        }
        CutKind::ImmediateSimpl => match &n.rule {
            Rule::OrE(l) => {
                let i = if !n.prem[1].uses_label(l) { 1 } else { 2 };
                Ok(n.prem[i].clone())
            }
            Rule::ExistsE(_, y) => subst(&n.prem[1], y, &ATerm::Num(0)),
            Rule::EM { var, .. } => subst(&n.prem[1], var, &ATerm::Num(0)),
            _ => Err(bad()),
        },
    }
}

/// Performs one rewrite. The conclusion sequent is preserved and no new free
/// term variable appears; both are checked.
pub fn apply_head_reduction(d: &Derivation, cut: &HeadCut, table: &SymbolTable) -> Result<Derivation, NormError> {
    let opts = NormOptions { full: true };
    let node = d.get(&cut.path).ok_or_else(|| NormError::InvalidCut {
        kind: cut.kind,
        path: path_string(&cut.path),
    })?;
    if cut_at(node, opts) != Some(cut.kind) && !cut_applies(node, cut.kind) {
        return Err(NormError::InvalidCut {
            kind: cut.kind,
            path: path_string(&cut.path),
        });
    }
    let invariant = |msg: String| NormError::Invariant {
        kind: cut.kind,
        path: path_string(&cut.path),
        msg,
    };
    // distinct binder names make grafting and substitution capture-free
    let node = node.freshen();
    let replacement = reduce_node(&node, cut.kind, table).map_err(invariant)?;
    if !replacement.goal().equiv(node.goal()) {
        return Err(invariant(format!(
            "conclusion changed from {} to {}",
            node.goal(),
            replacement.goal()
        )));
    }
    let mut out = d.clone();
    *out.get_mut(&cut.path).expect("path checked") = replacement;
    out.recontext(d.seq.ctx.clone(), table);
    let before = d.free_term_vars();
    let extra: BTreeSet<_> = out.free_term_vars().difference(&before).cloned().collect();
    if !extra.is_empty() {
        return Err(invariant(format!(
            "new free term variables {}",
            extra.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    if !out.open_assumptions().is_subset(&d.open_assumptions()) {
        return Err(invariant("new open assumptions".into()));
    }
    Ok(out)
}

/// Whether `kind` applies at the root of `n` under some options.
fn cut_applies(n: &Derivation, kind: CutKind) -> bool {
    cut_at(n, NormOptions { full: false }) == Some(kind)
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub derivation: Derivation,
    pub trace: Vec<TraceEntry>,
}

/// Rewrites head-cuts until none remain, then normalizes arithmetic terms.
/// `fuel` bounds the number of rewrites.
pub fn normalize_derivation(
    d: &Derivation,
    fuel: usize,
    opts: NormOptions,
    table: &SymbolTable,
) -> Result<Normalized, NormError> {
    let mut cur = d.freshen();
    let mut trace = Vec::new();
    while let Some(cut) = find_head_cut(&cur, opts) {
        if trace.len() >= fuel {
            return Err(NormError::FuelExhausted {
                steps: trace.len(),
                stuck: Box::new(cur),
            });
        }
        cur = apply_head_reduction(&cur, &cut, table)?;
        trace.push(TraceEntry {
            kind: cut.kind,
            path: cut.path,
            conclusion_hash: conclusion_hash(&cur.seq),
        });
    }
    Ok(Normalized {
        derivation: cur.normalize_terms(),
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct Witness {
    pub value: u64,
    pub normal: Derivation,
    pub trace: Vec<TraceEntry>,
}

/// Normalizes a closed derivation of `∃x P` with `P` atomic and reads the
/// witness off the final `∃I`.
pub fn extract_witness(d: &Derivation, fuel: usize, table: &SymbolTable) -> Result<Witness, NormError> {
    check_derivation(d, table)?;
    let open = d.open_assumptions();
    if !open.is_empty() {
        return Err(NormError::NotClosed(format!(
            "open assumptions {}",
            open.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let fv = d.free_term_vars();
    if !fv.is_empty() {
        return Err(NormError::NotClosed(format!(
            "free term variables {}",
            fv.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let (x, atom) = match d.goal() {
        Formula::Exists(x, a) if a.is_atomic() => (x.clone(), (**a).clone()),
        g => return Err(NormError::NotSimplyExistential(g.to_string())),
    };
    let n = normalize_derivation(d, fuel, NormOptions::default(), table)?;
    let Rule::ExistsI(t) = &n.derivation.rule else {
        return Err(NormError::ShapeViolation(format!(
            "normal form ends in {}",
            n.derivation.rule.name()
        )));
    };
    let value = match t.normalize() {
        Ok(ATerm::Num(v)) => v,
        _ => return Err(NormError::ShapeViolation(format!("witness {t} is not a numeral"))),
    };
    if atomic_truth(&atom.subst(&x, &ATerm::Num(value))) != Ok(true) {
        return Err(NormError::ShapeViolation(format!(
            "witness {value} does not satisfy {atom}"
        )));
    }
    Ok(Witness {
        value,
        normal: n.derivation,
        trace: n.trace,
    })
}

/// Principal branches of `d`, each as the node paths from the top
/// occurrence down to the root.
pub fn principal_branches(d: &Derivation) -> Vec<Vec<Path>> {
    let mut out = Vec::new();
    fn go(d: &Derivation, cur: &mut Path, stack: &mut Vec<Path>, out: &mut Vec<Vec<Path>>) {
        stack.push(cur.clone());
        if d.prem.is_empty() {
            out.push(stack.iter().rev().cloned().collect());
        }
        for i in principal_premisses(d) {
            cur.push(i);
            go(&d.prem[i], cur, stack, out);
            cur.pop();
        }
        stack.pop();
    }
    go(d, &mut Vec::new(), &mut Vec::new(), &mut out);
    out
}

/// Whether a principal branch starts at an open assumption and then runs
/// through eliminations, then atomic or EM rules, then introduction or EM
/// rules, any part possibly empty.
pub fn is_open_normal_form(d: &Derivation, branch: &[Path]) -> bool {
    let Some(top) = branch.first().and_then(|p| d.get(p)) else {
        return false;
    };
    let Rule::Id(l) = &top.rule else {
        return false;
    };
    if !d.open_assumptions().contains(l) {
        return false;
    }
    // 0 eliminations, 1 atomic/EM, 2 introductions/EM
    let mut phase = 0;
    for p in &branch[1..] {
        let r = &d.get(p).expect("branch paths exist").rule;
        let em = matches!(r, Rule::EM { .. });
        phase = if r.is_elim() && phase == 0 {
            0
        } else if (r.is_atomic() || em) && phase <= 1 {
            1
        } else if r.is_intro() || (em && phase == 2) {
            2
        } else {
            return false;
        };
    }
    true
}

/// Principal branches beginning with an open assumption that are not in
/// open normal form.
pub fn open_normal_form_violations(d: &Derivation) -> Vec<Vec<Path>> {
    let open = d.open_assumptions();
    principal_branches(d)
        .into_iter()
        .filter(|b| {
            let top = d.get(&b[0]).expect("branch paths exist");
            matches!(&top.rule, Rule::Id(l) if open.contains(l)) && !is_open_normal_form(d, b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deduction::build::*;
    use crate::deduction::PostRule;

    fn eq(a: ATerm, b: ATerm) -> Formula {
        Formula::atom(&SymbolTable::standard().rel("eq").unwrap(), vec![a, b])
    }

    fn n(k: u64) -> ATerm {
        ATerm::Num(k)
    }

    #[test]
    fn and_redex_is_proper() {
        let t = SymbolTable::standard();
        let a = eq(n(1), n(1));
        let b = eq(n(2), n(2));
        let pair = Derivation::node(
            Rule::AndI,
            Formula::and(a.clone(), b),
            vec![atom_i(a.clone()), atom_i(eq(n(2), n(2)))],
        );
        let d = Derivation::node(Rule::AndEL, a.clone(), vec![pair]).with_context(vec![], &t);
        check_derivation(&d, &t).unwrap();
        let cut = find_head_cut(&d, NormOptions::default()).unwrap();
        assert_eq!(cut.kind, CutKind::Proper(Connective::And));
        let r = apply_head_reduction(&d, &cut, &t).unwrap();
        assert_eq!(r.rule, Rule::AtomI);
        assert!(find_head_cut(&r, NormOptions::default()).is_none());
    }

    #[test]
    fn normal_exists_i_has_no_cut() {
        let t = SymbolTable::standard();
        let d = exists_i(
            Formula::exists("x", eq(ATerm::var("x"), n(2))),
            n(2),
            atom_i(eq(n(2), n(2))),
        )
        .with_context(vec![], &t);
        assert!(find_head_cut(&d, NormOptions::default()).is_none());
        let w = extract_witness(&d, 10, &t).unwrap();
        assert_eq!(w.value, 2);
        assert!(w.trace.is_empty());
    }

    fn ind_refl(main: ATerm, t: &SymbolTable) -> Derivation {
        // x = x by induction, step ignoring the hypothesis
        let motive = eq(ATerm::var("x"), ATerm::var("x"));
        let s = t.func("S").unwrap();
        let sy = ATerm::app(&s, vec![ATerm::var("y")]);
        Derivation::node(
            Rule::Ind {
                label: "h".into(),
                var: "y".into(),
                x: "x".into(),
                motive: motive.clone(),
                main: main.clone(),
            },
            motive.subst("x", &main),
            vec![
                post(PostRule::EqRefl, vec![n(0)], vec![], t),
                post(PostRule::EqRefl, vec![sy], vec![], t),
            ],
        )
        .with_context(vec![], t)
    }

    #[test]
    fn ind_unfolds_numeral() {
        let t = SymbolTable::standard();
        let d = ind_refl(n(2), &t);
        check_derivation(&d, &t).unwrap();
        assert_eq!(find_head_cut(&d, NormOptions::default()).unwrap().kind, CutKind::Ind);
        let out = normalize_derivation(&d, 100, NormOptions::default(), &t).unwrap();
        assert_eq!(out.trace.len(), 1);
        check_derivation(&out.derivation, &t).unwrap();
        assert!(out.derivation.goal().equiv(&eq(n(2), n(2))));
    }

    #[test]
    fn ind_uses_hypothesis_unrolls_twice() {
        let t = SymbolTable::standard();
        // S(x) = S(x) from x = x via congruence
        let motive = eq(ATerm::var("x"), ATerm::var("x"));
        let step = post(
            PostRule::EqCongS,
            vec![ATerm::var("y"), ATerm::var("y")],
            vec![id("h", eq(ATerm::var("y"), ATerm::var("y")))],
            &t,
        );
        let d = Derivation::node(
            Rule::Ind {
                label: "h".into(),
                var: "y".into(),
                x: "x".into(),
                motive: motive.clone(),
                main: n(2),
            },
            eq(n(2), n(2)),
            vec![post(PostRule::EqRefl, vec![n(0)], vec![], &t), step],
        )
        .with_context(vec![], &t);
        check_derivation(&d, &t).unwrap();
        let out = normalize_derivation(&d, 100, NormOptions::default(), &t).unwrap();
        assert_eq!(out.trace.iter().filter(|e| e.kind == CutKind::Ind).count(), 3);
        check_derivation(&out.derivation, &t).unwrap();
        assert!(!out
            .derivation
            .paths()
            .iter()
            .any(|p| matches!(out.derivation.get(p).unwrap().rule, Rule::Ind { .. })));
    }

    fn em_search(zero_at: u64, t: &SymbolTable) -> Derivation {
        // ∃x. x = k, by EM on ∀x ¬(x = k) read as the atom neq(x, k)
        let neq = t.rel("neq").unwrap();
        let k = n(zero_at);
        let p = Formula::atom(&neq, vec![ATerm::var("x"), k.clone()]);
        let goal = Formula::exists("x", eq(ATerm::var("x"), k.clone()));
        // left: instantiate at k, get neq(k,k) false, ex falso
        let inst = forall_e(k.clone(), id("a", Formula::forall("x", p.clone())));
        let bot = Derivation::node(Rule::AtomE, t.bot(), vec![inst]);
        let left = exists_i(
            goal.clone(),
            k.clone(),
            Derivation::node(Rule::FalseE0, eq(k.clone(), k.clone()), vec![bot]),
        );
        // right: the counterexample itself is the witness
        let right = exists_i(goal.clone(), k.clone(), atom_i(eq(k.clone(), k.clone())));
        Derivation::node(
            Rule::EM {
                label: "a".into(),
                var: "y".into(),
                x: "x".into(),
                atom: p,
            },
            goal,
            vec![left, right],
        )
        .with_context(vec![], t)
    }

    #[test]
    fn em_witness_counterexample() {
        let t = SymbolTable::standard();
        let d = em_search(4, &t);
        check_derivation(&d, &t).unwrap();
        let w = extract_witness(&d, 100, &t).unwrap();
        assert_eq!(w.value, 4);
        assert_eq!(w.trace[0].kind, CutKind::EMWitness);
        check_derivation(&w.normal, &t).unwrap();
    }

    #[test]
    fn em_unused_left_collapses() {
        let t = SymbolTable::standard();
        let p = eq(ATerm::var("x"), n(0));
        let goal = Formula::exists("x", eq(ATerm::var("x"), n(3)));
        let body = exists_i(goal.clone(), n(3), atom_i(eq(n(3), n(3))));
        let d = Derivation::node(
            Rule::EM {
                label: "a".into(),
                var: "y".into(),
                x: "x".into(),
                atom: p,
            },
            goal,
            vec![body.clone(), body],
        )
        .with_context(vec![], &t);
        check_derivation(&d, &t).unwrap();
        let cut = find_head_cut(&d, NormOptions::default()).unwrap();
        assert_eq!(cut.kind, CutKind::EMWitness);
        let r = apply_head_reduction(&d, &cut, &t).unwrap();
        assert!(matches!(r.rule, Rule::ExistsI(_)));
    }

    #[test]
    fn open_normal_form_of_elim_chain() {
        let t = SymbolTable::standard();
        let a = Formula::forall("x", eq(ATerm::var("x"), ATerm::var("x")));
        let d = exists_i(
            Formula::exists("z", eq(ATerm::var("z"), ATerm::var("z"))),
            n(1),
            forall_e(n(1), id("h", a.clone())),
        )
        .with_context(vec![("h".into(), a)], &t);
        check_derivation(&d, &t).unwrap();
        assert!(open_normal_form_violations(&d).is_empty());
        assert_eq!(principal_branches(&d).len(), 1);
    }

    #[test]
    fn rejects_open_and_non_existential() {
        let t = SymbolTable::standard();
        let g = Formula::exists("z", eq(ATerm::var("z"), ATerm::var("x")));
        let d = exists_i(
            g,
            ATerm::var("x"),
            post(PostRule::EqRefl, vec![ATerm::var("x")], vec![], &t),
        )
        .with_context(vec![], &t);
        assert!(matches!(extract_witness(&d, 10, &t), Err(NormError::NotClosed(_))));
        let c = atom_i(eq(n(1), n(1))).with_context(vec![], &t);
        assert!(matches!(
            extract_witness(&c, 10, &t),
            Err(NormError::NotSimplyExistential(_))
        ));
    }
}
