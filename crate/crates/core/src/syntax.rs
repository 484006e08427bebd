//! S-expression reading and printing for types, terms, formulas,
//! derivations and proof files.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::arith::{ATerm, Formula, PrimFn, SymbolTable};
use crate::deduction::{Derivation, Path, PostRule, Rule, Sequent};
use crate::learning::{AtomRel, Decidable, Exception, State};
use crate::term::{ConstId, Guard, Term, Ty};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExp {
    Atom(String, Pos),
    List(Vec<SExp>, Pos),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl SExp {
    pub fn pos(&self) -> Pos {
        match self {
            SExp::Atom(_, p) | SExp::List(_, p) => *p,
        }
    }
    pub fn atom(&self) -> Option<&str> {
        match self {
            SExp::Atom(a, _) => Some(a),
            SExp::List(..) => None,
        }
    }
    pub fn list(&self) -> Option<&[SExp]> {
        match self {
            SExp::List(xs, _) => Some(xs),
            SExp::Atom(..) => None,
        }
    }
    /// Head symbol and tail of a list `(head ...)`.
    pub fn head(&self) -> Option<(&str, &[SExp])> {
        let xs = self.list()?;
        let h = xs.first()?.atom()?;
        Some((h, &xs[1..]))
    }
    pub fn err(&self, msg: impl Into<String>) -> ParseError {
        let p = self.pos();
        ParseError {
            line: p.line,
            col: p.col,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for SExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExp::Atom(a, _) => write!(f, "{a}"),
            SExp::List(xs, _) => {
                write!(f, "(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Reads every top-level s-expression; `;` starts a line comment.
pub fn read_all(src: &str) -> Result<Vec<SExp>, ParseError> {
    let mut stack: Vec<(Vec<SExp>, Pos)> = Vec::new();
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let mut chars = src.chars().peekable();
    let mut tok = String::new();
    let mut tok_pos = Pos::default();

    fn flush(tok: &mut String, pos: Pos, stack: &mut [(Vec<SExp>, Pos)], out: &mut Vec<SExp>) {
        if tok.is_empty() {
            return;
        }
        let a = SExp::Atom(std::mem::take(tok), pos);
        match stack.last_mut() {
            Some((xs, _)) => xs.push(a),
            None => out.push(a),
        }
    }

    while let Some(c) = chars.next() {
        let here = Pos { line, col };
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
        match c {
            ';' => {
                flush(&mut tok, tok_pos, &mut stack, &mut out);
                for d in chars.by_ref() {
                    if d == '\n' {
                        line += 1;
                        col = 1;
                        break;
                    }
                }
            }
            '(' => {
                flush(&mut tok, tok_pos, &mut stack, &mut out);
                stack.push((Vec::new(), here));
            }
            ')' => {
                flush(&mut tok, tok_pos, &mut stack, &mut out);
                let (xs, p) = stack.pop().ok_or(ParseError {
                    line: here.line,
                    col: here.col,
                    msg: "unbalanced ')'".into(),
                })?;
                let l = SExp::List(xs, p);
                match stack.last_mut() {
                    Some((ys, _)) => ys.push(l),
                    None => out.push(l),
                }
            }
            c if c.is_whitespace() => flush(&mut tok, tok_pos, &mut stack, &mut out),
            c => {
                if tok.is_empty() {
                    tok_pos = here;
                }
                tok.push(c);
            }
        }
    }
    flush(&mut tok, tok_pos, &mut stack, &mut out);
    if let Some((_, p)) = stack.last() {
        return Err(ParseError {
            line: p.line,
            col: p.col,
            msg: "unclosed '('".into(),
        });
    }
    Ok(out)
}

pub fn read_one(src: &str) -> Result<SExp, ParseError> {
    let mut xs = read_all(src)?;
    match xs.len() {
        1 => Ok(xs.pop().unwrap()),
        0 => Err(ParseError {
            line: 1,
            col: 1,
            msg: "empty input".into(),
        }),
        _ => Err(xs[1].err("trailing input")),
    }
}

fn arity_err(e: &SExp, what: &str, n: usize) -> ParseError {
    e.err(format!("{what} expects {n} argument(s)"))
}

fn expect_n<'a>(e: &SExp, what: &str, tail: &'a [SExp], n: usize) -> Result<&'a [SExp], ParseError> {
    if tail.len() == n {
        Ok(tail)
    } else {
        Err(arity_err(e, what, n))
    }
}

fn sym(e: &SExp) -> Result<&str, ParseError> {
    e.atom().ok_or_else(|| e.err("expected a symbol"))
}

pub fn parse_u64(e: &SExp) -> Result<u64, ParseError> {
    sym(e)?.parse().map_err(|_| e.err("expected a natural number"))
}

fn parse_usize(e: &SExp) -> Result<usize, ParseError> {
    sym(e)?.parse().map_err(|_| e.err("expected a natural number"))
}

// ---- types

pub fn parse_ty(e: &SExp) -> Result<Ty, ParseError> {
    if let Some(a) = e.atom() {
        return match a {
            "Unit" => Ok(Ty::Unit),
            "Nat" => Ok(Ty::Nat),
            "State" => Ok(Ty::State),
            "Ex" => Ok(Ty::Ex),
            _ => Err(e.err(format!("unknown type {a}"))),
        };
    }
    let (h, t) = e.head().ok_or_else(|| e.err("expected a type"))?;
    let t = expect_n(e, h, t, 2)?;
    let (a, b) = (parse_ty(&t[0])?, parse_ty(&t[1])?);
    match h {
        "->" => Ok(Ty::arrow(a, b)),
        "*" => Ok(Ty::prod(a, b)),
        "+" => Ok(Ty::sum(a, b)),
        _ => Err(e.err(format!("unknown type constructor {h}"))),
    }
}

// ---- arithmetic terms and formulas

pub fn parse_aterm(e: &SExp, table: &SymbolTable) -> Result<ATerm, ParseError> {
    match e {
        SExp::Atom(a, _) => {
            if let Ok(n) = a.parse::<u64>() {
                Ok(ATerm::Num(n))
            } else if table.has_fn(a) {
                let f = table.func(a).map_err(|x| e.err(x.to_string()))?;
                if f.arity() != 0 {
                    return Err(e.err(format!("function {a} used without arguments")));
                }
                Ok(ATerm::App(f, vec![]))
            } else {
                Ok(ATerm::var(a))
            }
        }
        SExp::List(..) => {
            let (h, t) = e.head().ok_or_else(|| e.err("expected a term"))?;
            let f = table.func(h).map_err(|x| e.err(x.to_string()))?;
            if f.arity() != t.len() {
                return Err(arity_err(e, h, f.arity()));
            }
            let args = t.iter().map(|x| parse_aterm(x, table)).collect::<Result<_, _>>()?;
            Ok(ATerm::App(f, args))
        }
    }
}

pub fn parse_formula(e: &SExp, table: &SymbolTable) -> Result<Formula, ParseError> {
    if e.atom() == Some("bot") {
        return Ok(table.bot());
    }
    let (h, t) = e.head().ok_or_else(|| e.err("expected a formula"))?;
    match h {
        "atom" => {
            let r = t.first().ok_or_else(|| e.err("atom needs a relation"))?;
            let rel = table.rel(sym(r)?).map_err(|x| r.err(x.to_string()))?;
            if rel.arity() != t.len() - 1 {
                return Err(arity_err(e, &rel.name, rel.arity()));
            }
            let args = t[1..].iter().map(|x| parse_aterm(x, table)).collect::<Result<_, _>>()?;
            Ok(Formula::Atom(rel, args))
        }
        "and" | "or" | "imp" => {
            let t = expect_n(e, h, t, 2)?;
            let (a, b) = (parse_formula(&t[0], table)?, parse_formula(&t[1], table)?);
            Ok(match h {
                "and" => Formula::and(a, b),
                "or" => Formula::or(a, b),
                _ => Formula::imply(a, b),
            })
        }
        "not" => {
            let t = expect_n(e, h, t, 1)?;
            Ok(Formula::not(parse_formula(&t[0], table)?, &table.bot()))
        }
        "forall" | "exists" => {
            let t = expect_n(e, h, t, 2)?;
            let x = sym(&t[0])?;
            let a = parse_formula(&t[1], table)?;
            Ok(if h == "forall" {
                Formula::forall(x, a)
            } else {
                Formula::exists(x, a)
            })
        }
        _ => Err(e.err(format!("unknown formula form {h}"))),
    }
}

// ---- primitive recursive definitions

pub fn parse_prim(e: &SExp, table: &SymbolTable) -> Result<Arc<PrimFn>, ParseError> {
    if let Some(a) = e.atom() {
        return match a {
            "zero" | "Z" => Ok(Arc::new(PrimFn::Zero)),
            "S" | "succ" => Ok(Arc::new(PrimFn::Succ)),
            name => Ok(table.func(name).map_err(|x| e.err(x.to_string()))?.def.clone()),
        };
    }
    let (h, t) = e.head().ok_or_else(|| e.err("expected a function definition"))?;
    let f = match h {
        "proj" => {
            let t = expect_n(e, h, t, 2)?;
            PrimFn::proj(parse_usize(&t[0])?, parse_usize(&t[1])?)
        }
        "const" => {
            let t = expect_n(e, h, t, 2)?;
            PrimFn::constant(parse_usize(&t[0])?, parse_u64(&t[1])?)
        }
        "comp" => {
            if t.is_empty() {
                return Err(e.err("comp needs a function"));
            }
            let g = parse_prim(&t[0], table)?;
            let hs: Vec<Arc<PrimFn>> = t[1..].iter().map(|x| parse_prim(x, table)).collect::<Result<_, _>>()?;
            let arity = match hs.first() {
                Some(h0) => h0.arity(),
                None => 0,
            };
            PrimFn::comp(arity, g, hs)
        }
        "prec" => {
            let t = expect_n(e, h, t, 2)?;
            PrimFn::prec(parse_prim(&t[0], table)?, parse_prim(&t[1], table)?)
        }
        _ => return Err(e.err(format!("unknown definition form {h}"))),
    };
    f.validate().map_err(|x| e.err(x.to_string()))?;
    Ok(f)
}

pub fn prim_to_string(f: &PrimFn) -> String {
    match f {
        PrimFn::Zero => "zero".into(),
        PrimFn::Succ => "S".into(),
        PrimFn::Proj { n, i } => format!("(proj {n} {i})"),
        PrimFn::Comp { g, hs, .. } => {
            let mut s = format!("(comp {}", prim_to_string(g));
            for h in hs {
                s.push(' ');
                s.push_str(&prim_to_string(h));
            }
            s.push(')');
            s
        }
        PrimFn::PRec { base, step } => format!("(prec {} {})", prim_to_string(base), prim_to_string(step)),
    }
}

// ---- terms

fn parse_atomrel(e: &SExp, table: &SymbolTable) -> Result<Arc<AtomRel>, ParseError> {
    let (h, t) = e.head().ok_or_else(|| e.err("expected (atomrel VAR ATOM)"))?;
    if h != "atomrel" {
        return Err(e.err("expected (atomrel VAR ATOM)"));
    }
    let t = expect_n(e, h, t, 2)?;
    let x = sym(&t[0])?;
    let atom = parse_formula(&t[1], table)?;
    AtomRel::new(&atom, x).map(Arc::new).map_err(|m| e.err(m))
}

fn atomrel_to_string(r: &AtomRel) -> String {
    format!("(atomrel {} {})", r.var, r.atom)
}

fn dec_to_string(r: &Arc<dyn Decidable>) -> String {
    match r.as_atom_rel() {
        Some(a) => atomrel_to_string(a),
        None => format!("(opaque {})", r.id()),
    }
}

fn nums(xs: &[u64]) -> String {
    let v: Vec<String> = xs.iter().map(|n| n.to_string()).collect();
    format!("({})", v.join(" "))
}

fn parse_nums(e: &SExp) -> Result<Vec<u64>, ParseError> {
    e.list()
        .ok_or_else(|| e.err("expected a list of naturals"))?
        .iter()
        .map(parse_u64)
        .collect()
}

pub fn parse_exception(e: &SExp, table: &SymbolTable) -> Result<Exception, ParseError> {
    let (_, t) = e.head().ok_or_else(|| e.err("expected (exc REL (ARGS) W)"))?;
    let t = expect_n(e, "exc", t, 3)?;
    let r = parse_atomrel(&t[0], table)?;
    Exception::new(r, parse_nums(&t[1])?, parse_u64(&t[2])?).map_err(|m| e.err(m))
}

pub fn parse_state(e: &SExp, table: &SymbolTable) -> Result<State, ParseError> {
    let (_, t) = e.head().ok_or_else(|| e.err("expected (state ...)"))?;
    let mut s = State::new();
    for en in t {
        let ex = parse_exception(en, table)?;
        s = s.extend(&ex).ok_or_else(|| en.err("conflicting state entry"))?;
    }
    Ok(s)
}

pub fn exception_to_string(e: &Exception) -> String {
    format!("(exc {} {} {})", dec_to_string(e.rel()), nums(e.args()), e.witness())
}

pub fn state_to_string(s: &State) -> String {
    let mut out = String::from("(state");
    for e in s.exceptions() {
        out.push(' ');
        out.push_str(&exception_to_string(&e));
    }
    out.push(')');
    out
}

fn const_to_string(c: &ConstId, tys: &[Ty]) -> String {
    let base = match c {
        ConstId::Unit | ConstId::Zero | ConstId::Succ | ConstId::ExMerge => return c.name(),
        ConstId::Pair => "pair".to_string(),
        ConstId::Prl => "prl".into(),
        ConstId::Prr => "prr".into(),
        ConstId::Inl => "inl".into(),
        ConstId::Inr => "inr".into(),
        ConstId::Case => "case".into(),
        ConstId::Rec(Guard::Inf) => "rec inf".into(),
        ConstId::Rec(Guard::Fin(n)) => format!("rec {n}"),
        ConstId::Query(p) => return format!("(query {})", atomrel_to_string(p)),
        ConstId::Eval(p) => return format!("(eval {})", atomrel_to_string(p)),
        ConstId::Fn(f) => return format!("(fn {})", f.name),
        ConstId::StateLit(s) => return state_to_string(s),
        ConstId::ExcLit(e) => return exception_to_string(e),
    };
    let mut s = format!("({base}");
    for t in tys {
        s.push_str(&format!(" {t}"));
    }
    s.push(')');
    s
}

pub fn term_to_string(t: &Term) -> String {
    match t {
        Term::Var(i) => format!("(var {i})"),
        Term::Num(n) => n.to_string(),
        Term::Lam(ty, b) => format!("(lam {ty} {})", term_to_string(b)),
        Term::Const(c, tys) => const_to_string(c, tys),
        Term::App(..) => {
            let (h, args) = t.spine();
            let mut s = format!("(app {}", term_to_string(h));
            for a in args {
                s.push(' ');
                s.push_str(&term_to_string(a));
            }
            s.push(')');
            s
        }
    }
}

pub fn parse_term(e: &SExp, table: &SymbolTable) -> Result<Term, ParseError> {
    if let Some(a) = e.atom() {
        if let Ok(n) = a.parse::<u64>() {
            return Ok(Term::Num(n));
        }
        return match a {
            "unit" => Ok(Term::unit()),
            "zero" => Ok(Term::c(ConstId::Zero, vec![])),
            "succ" => Ok(Term::c(ConstId::Succ, vec![])),
            "exmerge" => Ok(Term::c(ConstId::ExMerge, vec![])),
            _ => Err(e.err(format!("unknown term symbol {a}"))),
        };
    }
    let (h, t) = e.head().ok_or_else(|| e.err("expected a term"))?;
    let tys = |n: usize| -> Result<Vec<Ty>, ParseError> { expect_n(e, h, t, n)?.iter().map(parse_ty).collect() };
    let c = |c: ConstId, n: usize| -> Result<Term, ParseError> { Ok(Term::c(c, tys(n)?)) };
    match h {
        "var" => Ok(Term::Var(parse_usize(&expect_n(e, h, t, 1)?[0])?)),
        "lam" => {
            let t = expect_n(e, h, t, 2)?;
            Ok(Term::lam(parse_ty(&t[0])?, parse_term(&t[1], table)?))
        }
        "app" => {
            if t.len() < 2 {
                return Err(e.err("app needs a function and at least one argument"));
            }
            let f = parse_term(&t[0], table)?;
            let args: Vec<Term> = t[1..].iter().map(|x| parse_term(x, table)).collect::<Result<_, _>>()?;
            Ok(Term::apps(f, args))
        }
        "pair" => c(ConstId::Pair, 2),
        "prl" => c(ConstId::Prl, 2),
        "prr" => c(ConstId::Prr, 2),
        "inl" => c(ConstId::Inl, 2),
        "inr" => c(ConstId::Inr, 2),
        "case" => c(ConstId::Case, 3),
        "rec" => {
            let t = expect_n(e, h, t, 2)?;
            let g = match t[0].atom() {
                Some("inf") => Guard::Inf,
                _ => Guard::Fin(parse_u64(&t[0])?),
            };
            Ok(Term::c(ConstId::Rec(g), vec![parse_ty(&t[1])?]))
        }
        "fn" => {
            let t = expect_n(e, h, t, 1)?;
            let f = table.func(sym(&t[0])?).map_err(|x| t[0].err(x.to_string()))?;
            Ok(Term::c(ConstId::Fn(f), vec![]))
        }
        "query" => Ok(Term::c(
            ConstId::Query(parse_atomrel(&expect_n(e, h, t, 1)?[0], table)?),
            vec![],
        )),
        "eval" => Ok(Term::c(
            ConstId::Eval(parse_atomrel(&expect_n(e, h, t, 1)?[0], table)?),
            vec![],
        )),
        "state" => Ok(Term::state(parse_state(e, table)?)),
        "exc" => Ok(Term::c(ConstId::ExcLit(parse_exception(e, table)?), vec![])),
        _ => Err(e.err(format!("unknown term form {h}"))),
    }
}

// ---- derivations

fn post_rule(e: &SExp, table: &SymbolTable) -> Result<PostRule, ParseError> {
    let rel_of = |x: &SExp| table.rel(sym(x)?).map_err(|m| x.err(m.to_string()));
    if let Some((h, t)) = e.head() {
        return match h {
            "leibniz" => {
                let t = expect_n(e, h, t, 2)?;
                let atom = parse_formula(&t[1], table)?;
                if !atom.is_atomic() {
                    return Err(t[1].err("leibniz needs an atomic template"));
                }
                Ok(PostRule::Leibniz {
                    var: sym(&t[0])?.to_string(),
                    atom,
                })
            }
            "chi-one" => Ok(PostRule::ChiOne(rel_of(&expect_n(e, h, t, 1)?[0])?)),
            "chi-zero" => Ok(PostRule::ChiZero(rel_of(&expect_n(e, h, t, 1)?[0])?)),
            "chi-big" => Ok(PostRule::ChiBig(rel_of(&expect_n(e, h, t, 1)?[0])?)),
            _ => Err(e.err(format!("unknown atomic rule {h}"))),
        };
    }
    Ok(match sym(e)? {
        "eq-refl" => PostRule::EqRefl,
        "eq-sym" => PostRule::EqSym,
        "eq-trans" => PostRule::EqTrans,
        "eq-cong-s" => PostRule::EqCongS,
        "succ-ne-zero" => PostRule::SuccNeZero,
        "succ-inj" => PostRule::SuccInj,
        "add-zero" => PostRule::AddZero,
        "add-succ" => PostRule::AddSucc,
        "mul-zero" => PostRule::MulZero,
        "mul-succ" => PostRule::MulSucc,
        other => return Err(e.err(format!("unknown atomic rule {other}"))),
    })
}

fn post_rule_to_string(r: &PostRule) -> String {
    match r {
        PostRule::Leibniz { var, atom } => format!("(leibniz {var} {atom})"),
        PostRule::ChiOne(_) | PostRule::ChiZero(_) | PostRule::ChiBig(_) => format!("({})", r.name()),
        _ => r.name(),
    }
}

pub fn parse_rule(e: &SExp, table: &SymbolTable) -> Result<Rule, ParseError> {
    if let Some(a) = e.atom() {
        return Ok(match a {
            "atom-i" => Rule::AtomI,
            "atom-e" => Rule::AtomE,
            "false-e" => Rule::FalseE0,
            "and-i" => Rule::AndI,
            "and-el" => Rule::AndEL,
            "and-er" => Rule::AndER,
            "or-il" => Rule::OrIL,
            "or-ir" => Rule::OrIR,
            "imp-e" => Rule::ImplyE,
            _ => return Err(e.err(format!("unknown rule {a}"))),
        });
    }
    let (h, t) = e.head().ok_or_else(|| e.err("expected a rule"))?;
    let name = |x: &SExp| sym(x).map(str::to_string);
    Ok(match h {
        "id" => Rule::Id(name(&expect_n(e, h, t, 1)?[0])?),
        "or-e" => Rule::OrE(name(&expect_n(e, h, t, 1)?[0])?),
        "imp-i" => Rule::ImplyI(name(&expect_n(e, h, t, 1)?[0])?),
        "forall-i" => Rule::ForallI(name(&expect_n(e, h, t, 1)?[0])?),
        "forall-e" => Rule::ForallE(parse_aterm(&expect_n(e, h, t, 1)?[0], table)?),
        "exists-i" => Rule::ExistsI(parse_aterm(&expect_n(e, h, t, 1)?[0], table)?),
        "exists-e" => {
            let t = expect_n(e, h, t, 2)?;
            Rule::ExistsE(name(&t[0])?, name(&t[1])?)
        }
        "cind" => {
            let t = expect_n(e, h, t, 2)?;
            Rule::CInd(name(&t[0])?, name(&t[1])?)
        }
        "ind" => {
            let t = expect_n(e, h, t, 5)?;
            Rule::Ind {
                label: name(&t[0])?,
                var: name(&t[1])?,
                x: name(&t[2])?,
                motive: parse_formula(&t[3], table)?,
                main: parse_aterm(&t[4], table)?,
            }
        }
        "em" => {
            let t = expect_n(e, h, t, 4)?;
            let atom = parse_formula(&t[3], table)?;
            if !atom.is_atomic() {
                return Err(t[3].err("em needs an atom"));
            }
            Rule::EM {
                label: name(&t[0])?,
                var: name(&t[1])?,
                x: name(&t[2])?,
                atom,
            }
        }
        "atom" => {
            let r = t.first().ok_or_else(|| e.err("atom rule needs a name"))?;
            let r = post_rule(r, table)?;
            let ts = t[1..]
                .iter()
                .map(|x| parse_aterm(x, table))
                .collect::<Result<Vec<_>, _>>()?;
            if ts.len() != r.term_count() {
                return Err(arity_err(e, &r.name(), r.term_count() + 1));
            }
            Rule::AtomPost(r, ts)
        }
        _ => return Err(e.err(format!("unknown rule {h}"))),
    })
}

pub fn rule_to_string(r: &Rule) -> String {
    let join = |xs: &[String]| format!("({} {})", r.name(), xs.join(" "));
    match r {
        Rule::Id(l) | Rule::OrE(l) | Rule::ImplyI(l) | Rule::ForallI(l) => join(std::slice::from_ref(l)),
        Rule::ForallE(t) | Rule::ExistsI(t) => join(&[t.to_string()]),
        Rule::ExistsE(l, y) | Rule::CInd(l, y) => join(&[l.clone(), y.clone()]),
        Rule::Ind {
            label,
            var,
            x,
            motive,
            main,
        } => join(&[
            label.clone(),
            var.clone(),
            x.clone(),
            motive.to_string(),
            main.to_string(),
        ]),
        Rule::EM { label, var, x, atom } => join(&[label.clone(), var.clone(), x.clone(), atom.to_string()]),
        Rule::AtomPost(p, ts) => {
            let mut xs = vec![post_rule_to_string(p)];
            xs.extend(ts.iter().map(ToString::to_string));
            join(&xs)
        }
        _ => r.name().to_string(),
    }
}

fn parse_ctx(e: &SExp, table: &SymbolTable) -> Result<Vec<(String, Formula)>, ParseError> {
    let (h, t) = e.head().ok_or_else(|| e.err("expected (ctx (LABEL FORMULA) ...)"))?;
    if h != "ctx" {
        return Err(e.err("expected (ctx (LABEL FORMULA) ...)"));
    }
    t.iter()
        .map(|en| {
            let xs = en
                .list()
                .filter(|xs| xs.len() == 2)
                .ok_or_else(|| en.err("expected (LABEL FORMULA)"))?;
            Ok((sym(&xs[0])?.to_string(), parse_formula(&xs[1], table)?))
        })
        .collect()
}

/// Source positions of the nodes of a parsed derivation, by path.
pub type PosMap = BTreeMap<Path, Pos>;

struct RawNode {
    ctx: Option<(Vec<(String, Formula)>, Pos)>,
}

fn parse_der_raw(
    e: &SExp,
    table: &SymbolTable,
    path: &mut Path,
    pos: &mut PosMap,
    given: &mut BTreeMap<Path, RawNode>,
) -> Result<Derivation, ParseError> {
    let (h, t) = e
        .head()
        .ok_or_else(|| e.err("expected (der RULE SEQUENT PREMISSES...)"))?;
    if h != "der" || t.len() < 2 {
        return Err(e.err("expected (der RULE SEQUENT PREMISSES...)"));
    }
    let rule = parse_rule(&t[0], table)?;
    let (ctx, goal) = match t[1].head() {
        Some(("seq", st)) => {
            let st = expect_n(&t[1], "seq", st, 2)?;
            (
                Some((parse_ctx(&st[0], table)?, st[0].pos())),
                parse_formula(&st[1], table)?,
            )
        }
        _ => (None, parse_formula(&t[1], table)?),
    };
    if t.len() - 2 != rule.arity() {
        return Err(e.err(format!(
            "{} takes {} premiss(es), found {}",
            rule.name(),
            rule.arity(),
            t.len() - 2
        )));
    }
    pos.insert(path.clone(), e.pos());
    given.insert(path.clone(), RawNode { ctx });
    let mut prem = Vec::new();
    for (i, p) in t[2..].iter().enumerate() {
        path.push(i);
        prem.push(parse_der_raw(p, table, path, pos, given)?);
        path.pop();
    }
    Ok(Derivation::node(rule, goal, prem))
}

/// Parses `(der RULE (seq (ctx ...) GOAL) PREM...)`. A bare goal may stand
/// for the sequent; contexts are inherited from the root and any explicit
/// context must match the inherited one.
pub fn parse_derivation_at(e: &SExp, table: &SymbolTable) -> Result<(Derivation, PosMap), ParseError> {
    let mut pos = PosMap::new();
    let mut given = BTreeMap::new();
    let d = parse_der_raw(e, table, &mut Vec::new(), &mut pos, &mut given)?;
    let root_ctx = given
        .get(&Vec::new())
        .and_then(|n: &RawNode| n.ctx.as_ref())
        .map(|c| c.0.clone())
        .unwrap_or_default();
    let d = d.with_context(root_ctx, table);
    for (path, node) in &given {
        if let Some((ctx, p)) = &node.ctx {
            let sub = d.get(path).expect("parsed path");
            if !sub.seq.ctx_equiv(ctx) {
                return Err(ParseError {
                    line: p.line,
                    col: p.col,
                    msg: format!("context differs from the inherited one ({})", sub.seq),
                });
            }
        }
    }
    Ok((d, pos))
}

pub fn parse_derivation(e: &SExp, table: &SymbolTable) -> Result<Derivation, ParseError> {
    parse_derivation_at(e, table).map(|x| x.0)
}

fn seq_to_string(s: &Sequent) -> String {
    let ctx: Vec<String> = s.ctx.iter().map(|(l, a)| format!(" ({l} {a})")).collect();
    format!("(seq (ctx{}) {})", ctx.concat(), s.goal)
}

/// Prints with one node per line, indented by depth. Only the root carries
/// its context; the others are inherited on parsing.
pub fn derivation_to_string(d: &Derivation) -> String {
    fn go(d: &Derivation, depth: usize, out: &mut String) {
        let seq = if depth == 0 {
            seq_to_string(&d.seq)
        } else {
            d.goal().to_string()
        };
        out.push_str(&format!("(der {} {seq}", rule_to_string(&d.rule)));
        for p in &d.prem {
            out.push('\n');
            out.push_str(&"  ".repeat(depth + 1));
            go(p, depth + 1, out);
        }
        out.push(')');
    }
    let mut out = String::new();
    go(d, 0, &mut out);
    out
}

// ---- proof files

#[derive(Debug, Clone)]
pub enum Item {
    Fn(String, Arc<PrimFn>),
    Rel(String, Arc<PrimFn>),
    Der(String, Derivation),
    Term(String, Term),
}

impl Item {
    pub fn name(&self) -> &str {
        match self {
            Item::Fn(n, _) | Item::Rel(n, _) | Item::Der(n, _) | Item::Term(n, _) => n,
        }
    }
}

/// Prelude definitions followed by named derivations and terms.
#[derive(Debug, Clone)]
pub struct ProofFile {
    pub table: SymbolTable,
    pub items: Vec<Item>,
    /// Position of each item and, for derivations, of each node.
    pub positions: BTreeMap<String, (Pos, PosMap)>,
}

impl ProofFile {
    pub fn parse(src: &str) -> Result<ProofFile, ParseError> {
        ProofFile::parse_with(src, SymbolTable::standard())
    }

    pub fn parse_with(src: &str, mut table: SymbolTable) -> Result<ProofFile, ParseError> {
        let mut items = Vec::new();
        let mut positions = BTreeMap::new();
        for e in read_all(src)? {
            let (h, t) = e.head().ok_or_else(|| e.err("expected a top-level form"))?;
            let t = expect_n(&e, h, t, 2)?;
            let name = sym(&t[0])?.to_string();
            if positions.contains_key(&name) {
                return Err(t[0].err(format!("duplicate name {name}")));
            }
            let mut nodes = PosMap::new();
            let item = match h {
                "deffn" => {
                    let f = parse_prim(&t[1], &table)?;
                    table.define_fn(&name, f.clone()).map_err(|m| e.err(m.to_string()))?;
                    Item::Fn(name.clone(), f)
                }
                "defrel" => {
                    let f = parse_prim(&t[1], &table)?;
                    table.define_rel(&name, f.clone()).map_err(|m| e.err(m.to_string()))?;
                    Item::Rel(name.clone(), f)
                }
                "defder" => {
                    let (d, p) = parse_derivation_at(&t[1], &table)?;
                    nodes = p;
                    Item::Der(name.clone(), d)
                }
                "defterm" => Item::Term(name.clone(), parse_term(&t[1], &table)?),
                _ => return Err(e.err(format!("unknown top-level form {h}"))),
            };
            positions.insert(name, (e.pos(), nodes));
            items.push(item);
        }
        Ok(ProofFile {
            table,
            items,
            positions,
        })
    }

    pub fn derivation(&self, name: &str) -> Option<&Derivation> {
        self.items.iter().find_map(|i| match i {
            Item::Der(n, d) if n == name => Some(d),
            _ => None,
        })
    }

    pub fn term(&self, name: &str) -> Option<&Term> {
        self.items.iter().find_map(|i| match i {
            Item::Term(n, t) if n == name => Some(t),
            _ => None,
        })
    }

    pub fn derivations(&self) -> impl Iterator<Item = (&str, &Derivation)> {
        self.items.iter().filter_map(|i| match i {
            Item::Der(n, d) => Some((n.as_str(), d)),
            _ => None,
        })
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &Term)> {
        self.items.iter().filter_map(|i| match i {
            Item::Term(n, t) => Some((n.as_str(), t)),
            _ => None,
        })
    }

    /// Source position of node `path` of derivation `name`, falling back
    /// to the nearest enclosing node.
    pub fn position(&self, name: &str, path: &[usize]) -> Option<Pos> {
        let (item, nodes) = self.positions.get(name)?;
        (0..=path.len())
            .rev()
            .find_map(|n| nodes.get(&path[..n]).copied())
            .or(Some(*item))
    }
}

impl fmt::Display for ProofFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for item in &self.items {
            match item {
                Item::Fn(n, p) => writeln!(f, "(deffn {n} {})", prim_to_string(p))?,
                Item::Rel(n, p) => writeln!(f, "(defrel {n} {})", prim_to_string(p))?,
                Item::Der(n, d) => writeln!(f, "(defder {n}\n  {})", derivation_to_string(d).replace('\n', "\n  "))?,
                Item::Term(n, t) => writeln!(f, "(defterm {n} {})", term_to_string(t))?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reader_reports_positions() {
        let err = read_all("(a\n  (b c)").unwrap_err();
        assert_eq!((err.line, err.col), (1, 1));
        let err = read_all("(a))").unwrap_err();
        assert_eq!((err.line, err.col), (1, 4));
    }

    #[test]
    fn comments_are_skipped() {
        let xs = read_all("; hi\n(a b) ; there\nc").unwrap();
        assert_eq!(xs.len(), 2);
    }

    #[test]
    fn term_round_trip() {
        let table = SymbolTable::standard();
        let src = "(lam Nat (app (case Nat Unit Nat) (app (inl Nat Unit) (var 0)) (lam Nat (var 0)) (lam Unit 3)))";
        let t = parse_term(&read_one(src).unwrap(), &table).unwrap();
        assert_eq!(term_to_string(&t), src);
    }

    #[test]
    fn formula_round_trip() {
        let table = SymbolTable::standard();
        let src = "(forall x (exists y (and (atom lt x y) (imp (atom eq y (S x)) (atom true)))))";
        let f = parse_formula(&read_one(src).unwrap(), &table).unwrap();
        assert_eq!(f.to_string(), src);
    }
}
