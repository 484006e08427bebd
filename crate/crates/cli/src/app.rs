use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use irealize_core::arith::{ATerm, Formula};
use irealize_core::deduction::{check_derivation, DeductionError, Derivation};
use irealize_core::extraction::{extract, ExtractError};
use irealize_core::learning::{learn, run_realizer, AtomRel, Exception, LearnError, Outcome, State};
use irealize_core::monads::{MonadKind, MonadSpec};
use irealize_core::normalizer::{extract_witness, normalize_derivation, NormError, NormOptions, TraceEntry};
use irealize_core::reals::{constant, convex_angle, least_element, parse_rat, Point, Rat, RealError};
use irealize_core::syntax::{
    derivation_to_string, exception_to_string, parse_formula, read_one, state_to_string, term_to_string, ParseError,
    ProofFile,
};
use irealize_core::term::{default_fuel, normalize, typecheck, TermError, Ty, TyCtx};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::{Cli, Command, Demo, Format};

pub enum Failure {
    User(String),
    Internal(String),
}

impl Failure {
    pub fn message(&self) -> &str {
        match self {
            Failure::User(m) | Failure::Internal(m) => m,
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::User(_) => 1,
            Failure::Internal(_) => 2,
        }
    }
}

fn user(m: impl Into<String>) -> Failure {
    Failure::User(m.into())
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::User(e.to_string())
    }
}

impl From<TermError> for Failure {
    fn from(e: TermError) -> Self {
        match e {
            TermError::FuelExhausted(_) => Failure::User(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl From<LearnError> for Failure {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Term(t) => t.into(),
            LearnError::IterationLimit(_) | LearnError::ArityMismatch { .. } | LearnError::Eval(_) => {
                Failure::User(e.to_string())
            }
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl From<NormError> for Failure {
    fn from(e: NormError) -> Self {
        match e {
            NormError::Invariant { .. } | NormError::ShapeViolation(_) | NormError::InvalidCut { .. } => {
                Failure::Internal(e.to_string())
            }
            _ => Failure::User(e.to_string()),
        }
    }
}

impl From<ExtractError> for Failure {
    fn from(e: ExtractError) -> Self {
        match e {
            ExtractError::UnsupportedRule(_) | ExtractError::Malformed(_) => Failure::User(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl From<RealError> for Failure {
    fn from(e: RealError) -> Self {
        match e {
            RealError::Learn(l) => l.into(),
            _ => Failure::User(e.to_string()),
        }
    }
}

fn located(file: &Path, e: &ParseError) -> Failure {
    user(format!("{}:{}:{}: {}", file.display(), e.line, e.col, e.msg))
}

fn load(file: &Path) -> Result<ProofFile, Failure> {
    let src = std::fs::read_to_string(file).map_err(|e| user(format!("{}: {e}", file.display())))?;
    ProofFile::parse(&src).map_err(|e| located(file, &e))
}

fn derivation<'a>(pf: &'a ProofFile, name: &str) -> Result<&'a Derivation, Failure> {
    pf.derivation(name)
        .ok_or_else(|| user(format!("no derivation named {name}")))
}

/// Path of a node from its `root.i.j` rendering.
fn parse_path(s: &str) -> Vec<usize> {
    s.split('.').skip(1).filter_map(|x| x.parse().ok()).collect()
}

fn check_named(file: &Path, pf: &ProofFile, name: &str, d: &Derivation) -> Result<(), Failure> {
    check_derivation(d, &pf.table).map(|_| ()).map_err(|e| {
        let path = match &e {
            DeductionError::RuleShape { path, .. }
            | DeductionError::Eigenvariable { path, .. }
            | DeductionError::DischargeMismatch { path, .. } => parse_path(path),
            DeductionError::CaptureRisk { .. } => vec![],
        };
        match pf.position(name, &path) {
            Some(p) => user(format!("{}:{}:{}: {name}: {e}", file.display(), p.line, p.col)),
            None => user(format!("{}: {name}: {e}", file.display())),
        }
    })
}

fn fuel_or_default(f: Option<usize>) -> usize {
    f.unwrap_or_else(default_fuel)
}

fn print_trace(out: &mut dyn Write, trace: &[TraceEntry]) -> std::io::Result<()> {
    for t in trace {
        writeln!(out, "{t}")?;
    }
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let sexpr = cli.format == Format::Sexpr;
    match &cli.command {
        Command::Check { file } => {
            let pf = load(file)?;
            for (name, d) in pf.derivations() {
                check_named(file, &pf, name, d)?;
                if sexpr {
                    writeln!(out, "(checked {name} {})", d.goal())?;
                } else {
                    writeln!(out, "{name}: ok  {}", d.seq)?;
                }
            }
            for (name, t) in pf.terms() {
                let ty = typecheck(t, &TyCtx::new()).map_err(|e| user(format!("{}: {name}: {e}", file.display())))?;
                if sexpr {
                    writeln!(out, "(typed {name} {ty})")?;
                } else {
                    writeln!(out, "{name}: {ty}")?;
                }
            }
        }
        Command::Extract { file, deriv, monad } => {
            let pf = load(file)?;
            let d = derivation(&pf, deriv)?;
            check_named(file, &pf, deriv, d)?;
            let kind: MonadKind = monad.parse().map_err(user)?;
            let m = MonadSpec::new(kind);
            let r = extract(d, &m, &pf.table)?;
            let ty = typecheck(&r, &TyCtx::new())?;
            if sexpr {
                writeln!(out, "{}", term_to_string(&r))?;
            } else {
                writeln!(out, "monad: {kind}")?;
                writeln!(out, "type: {ty}")?;
                writeln!(out, "realizer: {}", term_to_string(&r))?;
            }
        }
        Command::Run {
            file,
            term,
            state,
            learn: learning,
            fuel,
            trace,
        } => {
            let pf = load(file)?;
            let t = pf.term(term).ok_or_else(|| user(format!("no term named {term}")))?;
            let ty = typecheck(t, &TyCtx::new()).map_err(|e| user(format!("{term}: {e}")))?;
            let fuel = fuel_or_default(*fuel);
            let mut s0 = State::new();
            for entry in state {
                let e = parse_state_entry(entry, &pf)?;
                s0 = s0
                    .extend(&e)
                    .ok_or_else(|| user(format!("state entry {entry} conflicts with an earlier one")))?;
            }
            let interactive = matches!(&ty, Ty::Arrow(a, _) if **a == Ty::State);
            if !interactive {
                if *learning || !state.is_empty() {
                    return Err(user(format!("{term} has type {ty}, not a state-passing realizer")));
                }
                let v = normalize(t, fuel)?;
                if sexpr {
                    writeln!(out, "{}", term_to_string(&v))?;
                } else {
                    writeln!(out, "value: {}", term_to_string(&v))?;
                }
            } else if *learning {
                let res = learn(t, &s0, fuel, None)?;
                if *trace {
                    for r in &res.trace {
                        writeln!(out, "{r}")?;
                    }
                }
                if sexpr {
                    writeln!(
                        out,
                        "(learned {} {})",
                        term_to_string(&res.value),
                        state_to_string(&res.state)
                    )?;
                } else {
                    writeln!(out, "value: {}", term_to_string(&res.value))?;
                    writeln!(out, "state: {}", state_to_string(&res.state))?;
                    writeln!(out, "backtracks: {}", res.backtracks())?;
                }
            } else {
                match run_realizer(t, &s0, fuel)? {
                    Outcome::Regular(v) => {
                        if sexpr {
                            writeln!(out, "(regular {})", term_to_string(&v))?;
                        } else {
                            writeln!(out, "regular: {}", term_to_string(&v))?;
                        }
                    }
                    Outcome::Exceptional(e) => {
                        if sexpr {
                            writeln!(out, "(exception {})", exception_to_string(&e))?;
                        } else {
                            writeln!(out, "exception: {}", exception_to_string(&e))?;
                        }
                    }
                }
            }
        }
        Command::Normalize {
            file,
            deriv,
            fuel,
            trace,
        } => {
            let pf = load(file)?;
            let d = derivation(&pf, deriv)?;
            check_named(file, &pf, deriv, d)?;
            let n = normalize_derivation(d, fuel_or_default(*fuel), NormOptions::default(), &pf.table)?;
            if *trace {
                print_trace(out, &n.trace)?;
            }
            if !sexpr {
                writeln!(out, "; {} rewrites", n.trace.len())?;
            }
            writeln!(out, "{}", derivation_to_string(&n.derivation))?;
        }
        Command::ExtractWitness {
            file,
            deriv,
            fuel,
            trace,
        } => {
            let pf = load(file)?;
            let d = derivation(&pf, deriv)?;
            check_named(file, &pf, deriv, d)?;
            let w = extract_witness(d, fuel.unwrap_or(100_000), &pf.table)?;
            if *trace {
                print_trace(out, &w.trace)?;
            }
            if sexpr {
                writeln!(out, "(witness {deriv} {})", w.value)?;
            } else {
                writeln!(out, "{deriv}: witness {} after {} rewrites", w.value, w.trace.len())?;
            }
        }
        Command::Demo(demo) => run_demo(demo, cli.seed, sexpr, out)?,
    }
    Ok(())
}

/// `REL[a,b]=W` over `(atom REL a b x)`, or `(atomrel x ATOM)[a,b]=W`.
fn parse_state_entry(entry: &str, pf: &ProofFile) -> Result<Exception, Failure> {
    let bad = |m: &str| user(format!("bad state entry {entry}: {m}"));
    let (key, w) = entry.rsplit_once('=').ok_or_else(|| bad("expected KEY=W"))?;
    let w: u64 = w.trim().parse().map_err(|_| bad("witness is not a natural number"))?;
    let (head, args) = match key.rfind('[') {
        Some(i) if key.ends_with(']') => (&key[..i], &key[i + 1..key.len() - 1]),
        _ => (key, ""),
    };
    let args: Vec<u64> = args
        .split(',')
        .filter(|a| !a.trim().is_empty())
        .map(|a| a.trim().parse().map_err(|_| bad("arguments must be natural numbers")))
        .collect::<Result<_, _>>()?;
    let rel = if head.trim_start().starts_with('(') {
        let e = read_one(head).map_err(|e| bad(&e.to_string()))?;
        let xs = e.list().filter(|xs| xs.len() == 3 && xs[0].atom() == Some("atomrel"));
        let xs = xs.ok_or_else(|| bad("expected (atomrel VAR ATOM)"))?;
        let x = xs[1].atom().ok_or_else(|| bad("expected a variable"))?;
        let atom = parse_formula(&xs[2], &pf.table).map_err(|e| bad(&e.to_string()))?;
        AtomRel::new(&atom, x).map_err(|m| bad(&m))?
    } else {
        let r = pf.table.rel(head.trim()).map_err(|e| bad(&e.to_string()))?;
        if r.arity() != args.len() + 1 {
            return Err(bad(&format!(
                "{} takes {} parameters",
                r.name,
                r.arity().saturating_sub(1)
            )));
        }
        let mut ts: Vec<ATerm> = (0..args.len()).map(|i| ATerm::var(&format!("p{i:02}"))).collect();
        ts.push(ATerm::var("x"));
        AtomRel::new(&Formula::atom(&r, ts), "x").map_err(|m| bad(&m))?
    };
    Exception::new(Arc::new(rel), args, w).map_err(|m| bad(&m))
}

fn parse_values(s: &str) -> Result<Vec<Rat>, Failure> {
    s.split(',').map(|v| parse_rat(v).map_err(Failure::from)).collect()
}

fn random_rat(rng: &mut StdRng) -> Rat {
    let (p, q) = (rng.gen_range(-99i64..=99), rng.gen_range(1i64..=9));
    parse_rat(&format!("{p}/{q}")).expect("well-formed literal")
}

fn run_demo(demo: &Demo, seed: u64, sexpr: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let mut rng = StdRng::seed_from_u64(seed);
    match demo {
        Demo::LeastElement {
            values,
            random,
            precision,
            trace,
        } => {
            let vals = match (values, random) {
                (Some(v), _) => parse_values(v)?,
                (None, Some(n)) => (0..*n).map(|_| random_rat(&mut rng)).collect(),
                (None, None) => return Err(user("give --values or --random")),
            };
            let reals: Vec<_> = vals.iter().cloned().map(constant).collect();
            let le = least_element(&reals, *precision, None, &State::new())?;
            if *trace {
                for r in &le.learned.trace {
                    writeln!(out, "{r}")?;
                }
            }
            if sexpr {
                writeln!(
                    out,
                    "(least-element (index {}) (value {}) (backtracks {}))",
                    le.index,
                    vals[le.index],
                    le.learned.backtracks()
                )?;
            } else {
                writeln!(out, "index {}", le.index)?;
                writeln!(out, "value {}", vals[le.index])?;
                writeln!(out, "backtracks {}", le.learned.backtracks())?;
            }
        }
        Demo::ConvexAngle {
            points,
            random,
            precision,
            trace,
        } => {
            let pts: Vec<(Rat, Rat)> = match (points, random) {
                (Some(p), _) => p
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| match parse_values(s)?.as_slice() {
                        [x, y] => Ok((x.clone(), y.clone())),
                        _ => Err(user(format!("point `{s}` needs two coordinates"))),
                    })
                    .collect::<Result<_, _>>()?,
                (None, Some(n)) => (0..*n).map(|_| (random_rat(&mut rng), random_rat(&mut rng))).collect(),
                (None, None) => return Err(user("give --points or --random")),
            };
            let ps: Vec<Point> = pts.iter().map(|(x, y)| Point::rational(x.clone(), y.clone())).collect();
            let ca = convex_angle(&ps, *precision, &State::new())?;
            if *trace {
                for r in &ca.learned.trace {
                    writeln!(out, "{r}")?;
                }
            }
            let show = |i: usize| format!("{},{}", pts[i].0, pts[i].1);
            if sexpr {
                writeln!(out, "(convex-angle (a {}) (b {}) (c {}))", ca.a, ca.b, ca.c)?;
            } else {
                writeln!(out, "a {} ({})", ca.a, show(ca.a))?;
                writeln!(out, "b {} ({})", ca.b, show(ca.b))?;
                writeln!(out, "c {} ({})", ca.c, show(ca.c))?;
                for c in &ca.checks {
                    let side = |s: Option<(irealize_core::reals::Side, u32)>| {
                        s.map_or("-".to_string(), |(s, k)| format!("{s}@{k}"))
                    };
                    writeln!(out, "point {} ab:{} ac:{}", c.point, side(c.wrt_b), side(c.wrt_c))?;
                }
                writeln!(out, "backtracks {}", ca.learned.backtracks())?;
            }
        }
    }
    Ok(())
}
