//! Exact reals as nested rational intervals, the order predicate, real
//! arithmetic, orientation, and the least-element and convex-angle learners.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use num::{BigInt, BigRational, One, Signed, Zero};
use thiserror::Error;

use crate::learning::{learn_with, Decidable, Exception, LearnError, Learned, State};

pub type Rat = BigRational;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RealError {
    #[error("nested interval condition `{conjunct}` fails at precision {k}")]
    InvariantViolation { conjunct: &'static str, k: u32 },
    #[error("table has no interval at precision {0}")]
    OutOfTable(u32),
    #[error("no product precision found for precision {0}")]
    PrecisionSearchExhausted(u32),
    #[error("sign undecided up to precision {0}; collinear points?")]
    PrecisionExhausted(u32),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// `2^-k`
pub fn two_pow_neg(k: u32) -> Rat {
    Rat::new(BigInt::one(), BigInt::one() << k)
}

/// Parses `p/q`, `p` or a decimal like `-1.25`.
pub fn parse_rat(s: &str) -> Result<Rat, RealError> {
    let s = s.trim();
    let bad = || RealError::Input(format!("bad rational literal `{s}`"));
    if let Some((int, frac)) = s.split_once('.') {
        let digits = format!("{int}{frac}");
        let n: BigInt = digits.parse().map_err(|_| bad())?;
        let d = num::pow(BigInt::from(10), frac.len());
        return Ok(Rat::new(n, d));
    }
    let r: Rat = s.parse().map_err(|_| bad())?;
    Ok(r)
}

enum Node {
    Const(Rat),
    Add(Real, Real),
    Neg(Real),
    Mul(Real, Real),
    Table(Vec<(Rat, Rat)>),
}

/// A real number given by nested intervals `[lo(k), hi(k)]` of width at
/// most `2^-k`.
pub struct RealRep {
    node: Node,
    memo: Mutex<HashMap<u32, (Rat, Rat)>>,
}

pub type Real = Arc<RealRep>;

impl fmt::Debug for RealRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for RealRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Const(q) => write!(f, "{q}"),
            Node::Add(a, b) => write!(f, "(+ {a} {b})"),
            Node::Neg(a) => write!(f, "(- {a})"),
            Node::Mul(a, b) => write!(f, "(* {a} {b})"),
            Node::Table(t) => write!(f, "(table {})", t.len()),
        }
    }
}

fn mk(node: Node) -> Real {
    Arc::new(RealRep {
        node,
        memo: Mutex::new(HashMap::new()),
    })
}

pub fn constant(q: Rat) -> Real {
    mk(Node::Const(q))
}

pub fn int(n: i64) -> Real {
    constant(Rat::from_integer(n.into()))
}

pub fn add(a: &Real, b: &Real) -> Real {
    mk(Node::Add(a.clone(), b.clone()))
}

pub fn neg(a: &Real) -> Real {
    mk(Node::Neg(a.clone()))
}

pub fn sub(a: &Real, b: &Real) -> Real {
    add(a, &neg(b))
}

pub fn mul(a: &Real, b: &Real) -> Real {
    mk(Node::Mul(a.clone(), b.clone()))
}

/// A real given by an explicit finite list of intervals; not validated.
pub fn table(intervals: Vec<(Rat, Rat)>) -> Real {
    mk(Node::Table(intervals))
}

/// Limit on how far past `k` the product precision search looks.
const MUL_SEARCH: u32 = 4096;

impl RealRep {
    pub fn is_constant(&self) -> Option<&Rat> {
        match &self.node {
            Node::Const(q) => Some(q),
            _ => None,
        }
    }

    /// The `k`-th interval.
    pub fn interval(&self, k: u32) -> Result<(Rat, Rat), RealError> {
        if let Some(iv) = self.memo.lock().expect("memo lock").get(&k) {
            return Ok(iv.clone());
        }
        let iv = match &self.node {
            Node::Const(q) => (q.clone(), q.clone()),
            Node::Add(a, b) => {
                let (al, ah) = a.interval(k + 1)?;
                let (bl, bh) = b.interval(k + 1)?;
                (al + bl, ah + bh)
            }
            Node::Neg(a) => {
                let (l, h) = a.interval(k)?;
                (-h, -l)
            }
            Node::Mul(a, b) => {
                let l = self.mul_precision(a, b, k)?;
                let (al, ah) = a.interval(l)?;
                let (bl, bh) = b.interval(l)?;
                let ps = [&al * &bl, &al * &bh, &ah * &bl, &ah * &bh];
                let lo = ps.iter().min().expect("four products").clone();
                let hi = ps.iter().max().expect("four products").clone();
                (lo, hi)
            }
            Node::Table(t) => t.get(k as usize).cloned().ok_or(RealError::OutOfTable(k))?,
        };
        self.memo.lock().expect("memo lock").insert(k, iv.clone());
        Ok(iv)
    }

    /// Smallest `l` with `(|a|(l) + |b|(l)) 2^-l <= 2^-k`, where `|x|(l)` is
    /// the largest absolute endpoint of the `l`-th interval.
    fn mul_precision(&self, a: &Real, b: &Real, k: u32) -> Result<u32, RealError> {
        let target = two_pow_neg(k);
        for l in 0..=k.saturating_add(MUL_SEARCH) {
            let (al, ah) = a.interval(l)?;
            let (bl, bh) = b.interval(l)?;
            let env = al.abs().max(ah.abs()) + bl.abs().max(bh.abs());
            if env * two_pow_neg(l) <= target {
                return Ok(l);
            }
        }
        Err(RealError::PrecisionSearchExhausted(k))
    }

    pub fn lo(&self, k: u32) -> Result<Rat, RealError> {
        Ok(self.interval(k)?.0)
    }

    pub fn hi(&self, k: u32) -> Result<Rat, RealError> {
        Ok(self.interval(k)?.1)
    }

    /// Checks the four nested-interval conjuncts for `k < depth`.
    pub fn validate(&self, depth: u32) -> Result<(), RealError> {
        for k in 0..depth {
            let (l, h) = self.interval(k)?;
            let (l1, h1) = self.interval(k + 1)?;
            let fail = |conjunct| Err(RealError::InvariantViolation { conjunct, k });
            if l > h {
                return fail("lo <= hi");
            }
            if l > l1 {
                return fail("lo nondecreasing");
            }
            if h < h1 {
                return fail("hi nonincreasing");
            }
            if &h - &l > two_pow_neg(k) {
                return fail("width <= 2^-k");
            }
        }
        Ok(())
    }
}

/// `op(r, s, k)`: `r⁺(k) < s⁻(k)`.
pub fn op_at(r: &RealRep, s: &RealRep, k: u32) -> Result<bool, RealError> {
    Ok(r.hi(k)? < s.lo(k)?)
}

/// A point of the real plane.
#[derive(Debug, Clone)]
pub struct Point {
    pub x: Real,
    pub y: Real,
}

impl Point {
    pub fn rational(x: Rat, y: Rat) -> Point {
        Point {
            x: constant(x),
            y: constant(y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// `(x_B − x_A)(y_C − y_A) − (x_C − x_A)(y_B − y_A)`
pub fn determinant(a: &Point, b: &Point, c: &Point) -> Real {
    sub(
        &mul(&sub(&b.x, &a.x), &sub(&c.y, &a.y)),
        &mul(&sub(&c.x, &a.x), &sub(&b.y, &a.y)),
    )
}

/// Side of `c` with respect to the line through `a` and `b`, with the first
/// precision at which the sign of the determinant is decided.
pub fn orientation(a: &Point, b: &Point, c: &Point, max_precision: u32) -> Result<(Side, u32), RealError> {
    let det = determinant(a, b, c);
    let zero = int(0);
    for k in 0..=max_precision {
        if op_at(&zero, &det, k)? {
            return Ok((Side::Left, k));
        }
        if op_at(&det, &zero, k)? {
            return Ok((Side::Right, k));
        }
    }
    Err(RealError::PrecisionExhausted(max_precision))
}

/// `r_i ≤ r_j` read as the universal `∀k ¬op(r_j, r_i, k)`; a witness is a
/// precision at which `r_j` is strictly below `r_i`.
#[derive(Debug)]
pub struct RealLe {
    pub reals: Vec<Real>,
}

impl Decidable for RealLe {
    fn id(&self) -> String {
        "le".into()
    }
    fn arity(&self) -> usize {
        2
    }
    fn holds(&self, params: &[u64], w: u64) -> Result<bool, String> {
        let get = |i: u64| {
            self.reals
                .get(i as usize)
                .ok_or_else(|| format!("no real with index {i}"))
        };
        let k = u32::try_from(w).map_err(|_| format!("precision {w} too large"))?;
        op_at(get(params[1])?, get(params[0])?, k)
            .map(|b| !b)
            .map_err(|e| e.to_string())
    }
}

/// One run of the least-element proof against a state.
#[derive(Debug, Clone)]
pub struct LeastPass {
    pub candidate: usize,
    /// For a former candidate `j`, the candidate it replaced and the
    /// precision at which `r_j < r_prev` is known.
    pub below: Vec<Option<(usize, u64)>>,
    /// For a non-candidate index, the candidate `c` it was compared with,
    /// where `r_c ≤ r_i` was guessed.
    pub guessed: Vec<Option<usize>>,
}

impl LeastPass {
    pub fn run(n: usize, s: &State) -> LeastPass {
        let mut below = vec![None; n];
        let mut guessed = vec![None; n];
        let mut cand = 0;
        for j in 1..n {
            match s.query("le", &[cand as u64, j as u64]) {
                Some(w) => {
                    below[j] = Some((cand, w));
                    cand = j;
                }
                None => guessed[j] = Some(cand),
            }
        }
        LeastPass {
            candidate: cand,
            below,
            guessed,
        }
    }

    /// Turns a counterexample `op(r_i, r_cand, k)` to `r_cand ≤ r_i` into
    /// the exception for the guess it was derived from. Precisions combine
    /// by maximum along the chain of known strict comparisons.
    pub fn refute(&self, rel: &Arc<RealLe>, i: usize, k: u64) -> Result<Exception, RealError> {
        let Some(target) = self.guessed[i] else {
            return Err(RealError::Input(format!(
                "index {i} is known to lie above the candidate; no guess to refute"
            )));
        };
        let mut w = k;
        let mut cur = self.candidate;
        while cur != target {
            let (prev, wk) = self.below[cur].ok_or_else(|| RealError::Input("broken candidate chain".into()))?;
            w = w.max(wk);
            cur = prev;
        }
        let d: Arc<dyn Decidable> = rel.clone();
        Exception::new(d, vec![target as u64, i as u64], w).map_err(RealError::Input)
    }
}

fn run_learner<T>(
    n: usize,
    s0: &State,
    mut pass: impl FnMut(&State) -> Result<Result<T, Exception>, RealError>,
) -> Result<Learned<T>, RealError> {
    let failure = RefCell::new(None);
    let out = learn_with(
        s0,
        |s| match pass(s) {
            Ok(r) => Ok(r),
            Err(e) => {
                let msg = e.to_string();
                *failure.borrow_mut() = Some(e);
                Err(LearnError::Eval(msg))
            }
        },
        || 1usize << n.min(40),
    );
    match (out, failure.into_inner()) {
        (_, Some(e)) => Err(e),
        (r, None) => Ok(r?),
    }
}

#[derive(Debug, Clone)]
pub struct LeastElement {
    pub index: usize,
    pub learned: Learned<usize>,
}

/// The interactive least-element computation. The usage step checks
/// `¬op(r_j, r_min, k)` for every `j` (in `usage_order`, default ascending)
/// and every `k ≤ precision`; a failure refutes a guessed comparison.
pub fn least_element(
    values: &[Real],
    precision: u32,
    usage_order: Option<&[usize]>,
    s0: &State,
) -> Result<LeastElement, RealError> {
    let n = values.len();
    if n == 0 {
        return Err(RealError::Input("no values".into()));
    }
    let order: Vec<usize> = usage_order.map_or_else(|| (0..n).collect(), <[usize]>::to_vec);
    if let Some(&j) = order.iter().find(|&&j| j >= n) {
        return Err(RealError::Input(format!("usage index {j} out of range")));
    }
    let rel = Arc::new(RealLe { reals: values.to_vec() });
    let learned = run_learner(n, s0, |s| {
        let pass = LeastPass::run(n, s);
        let c = pass.candidate;
        for &j in &order {
            for k in 0..=precision {
                if j != c && op_at(&values[j], &values[c], k)? {
                    return Ok(Err(pass.refute(&rel, j, u64::from(k))?));
                }
            }
        }
        Ok(Ok(c))
    })?;
    Ok(LeastElement {
        index: learned.value,
        learned,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundCheck {
    pub point: usize,
    /// Side of the point w.r.t. `a b` and the deciding precision.
    pub wrt_b: Option<(Side, u32)>,
    /// Side of the point w.r.t. `a c` and the deciding precision.
    pub wrt_c: Option<(Side, u32)>,
}

#[derive(Debug, Clone)]
pub struct ConvexAngle {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub checks: Vec<BoundCheck>,
    pub learned: Learned<(usize, usize, usize)>,
}

/// Orientation of `(a, b, c)` and the precision that decided it.
type SideMemo = HashMap<(usize, usize, usize), (Side, u32)>;

struct Geometry<'a> {
    pts: &'a [Point],
    max_precision: u32,
    memo: RefCell<SideMemo>,
}

impl Geometry<'_> {
    fn side(&self, a: usize, b: usize, c: usize) -> Result<(Side, u32), RealError> {
        if let Some(r) = self.memo.borrow().get(&(a, b, c)) {
            return Ok(*r);
        }
        let r = orientation(&self.pts[a], &self.pts[b], &self.pts[c], self.max_precision)?;
        self.memo.borrow_mut().insert((a, b, c), r);
        Ok(r)
    }

    fn left(&self, a: usize, b: usize, c: usize) -> Result<bool, RealError> {
        Ok(self.side(a, b, c)?.0 == Side::Left)
    }

    /// Given three points cyclically on one side of each other around `a`,
    /// one of them is strictly below `a`; find it and the precision.
    fn lower_than(&self, a: usize, qs: [usize; 3]) -> Result<(usize, u32), RealError> {
        for k in 0..=self.max_precision {
            for &q in &qs {
                if op_at(&self.pts[q].y, &self.pts[a].y, k)? {
                    return Ok((q, k));
                }
            }
        }
        Err(RealError::PrecisionExhausted(self.max_precision))
    }
}

/// Convex angle: indices `a, b, c` with every other point left of `ab` and
/// right of `ac`. The lowest point comes from the least-element learner on
/// the `y` coordinates; impossible configurations refute its guesses.
pub fn convex_angle(points: &[Point], max_precision: u32, s0: &State) -> Result<ConvexAngle, RealError> {
    let n = points.len();
    if n < 3 {
        return Err(RealError::Input("need at least three points".into()));
    }
    let geo = Geometry {
        pts: points,
        max_precision,
        memo: RefCell::new(HashMap::new()),
    };
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if let Err(RealError::PrecisionExhausted(_)) = geo.side(i, j, k) {
                    return Err(RealError::Input(format!("points {i}, {j}, {k} look collinear")));
                }
            }
        }
    }
    let rel = Arc::new(RealLe {
        reals: points.iter().map(|p| p.y.clone()).collect(),
    });
    let learned = run_learner(n, s0, |s| {
        let pass = LeastPass::run(n, s);
        let a = pass.candidate;
        let refute = |qs: [usize; 3]| -> Result<Result<(usize, usize, usize), Exception>, RealError> {
            let (q, k) = geo.lower_than(a, qs)?;
            Ok(Err(pass.refute(&rel, q, u64::from(k))?))
        };
        let others: Vec<usize> = (0..n).filter(|&i| i != a).collect();
        let (mut b, mut c) = (others[0], others[1]);
        // keep c to the left of ab
        if !geo.left(a, b, c)? {
            std::mem::swap(&mut b, &mut c);
        }
        let mut accepted: Vec<usize> = Vec::new();
        for &d in &others[2..] {
            let lb = geo.left(a, b, d)?;
            let rc = !geo.left(a, c, d)?;
            match (lb, rc) {
                (true, true) => accepted.push(d),
                (false, false) => return refute([b, c, d]),
                (false, true) => {
                    for &e in accepted.iter().chain([&c]) {
                        if !geo.left(a, d, e)? {
                            return refute([b, d, e]);
                        }
                    }
                    accepted.push(b);
                    b = d;
                }
                (true, false) => {
                    for &e in accepted.iter().chain([&b]) {
                        if geo.left(a, d, e)? {
                            return refute([c, d, e]);
                        }
                    }
                    accepted.push(c);
                    c = d;
                }
            }
        }
        Ok(Ok((a, b, c)))
    })?;
    let (a, b, c) = learned.value;
    let mut checks = Vec::new();
    for d in (0..n).filter(|&d| d != a) {
        let wrt_b = if d != b { Some(geo.side(a, b, d)?) } else { None };
        let wrt_c = if d != c { Some(geo.side(a, c, d)?) } else { None };
        if wrt_b.is_some_and(|s| s.0 != Side::Left) || wrt_c.is_some_and(|s| s.0 != Side::Right) {
            return Err(RealError::Input(format!("bounding condition fails at point {d}")));
        }
        checks.push(BoundCheck { point: d, wrt_b, wrt_c });
    }
    Ok(ConvexAngle {
        a,
        b,
        c,
        checks,
        learned,
    })
}

/// Exact sign of the determinant for rational points.
pub fn exact_side(a: &(Rat, Rat), b: &(Rat, Rat), c: &(Rat, Rat)) -> Option<Side> {
    let det = (&b.0 - &a.0) * (&c.1 - &a.1) - (&c.0 - &a.0) * (&b.1 - &a.1);
    if det.is_zero() {
        None
    } else if det.is_positive() {
        Some(Side::Left)
    } else {
        Some(Side::Right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Rat {
        parse_rat(s).unwrap()
    }

    fn consts(vs: &[i64]) -> Vec<Real> {
        vs.iter().map(|&v| int(v)).collect()
    }

    #[test]
    fn constants_and_sums() {
        assert_eq!(int(1).interval(7).unwrap(), (q("1"), q("1")));
        assert_eq!(add(&int(1), &int(2)).interval(3).unwrap(), (q("3"), q("3")));
        assert_eq!(parse_rat("-1.25").unwrap(), q("-5/4"));
    }

    #[test]
    fn product_precision_of_ones() {
        let one = int(1);
        let p = mul(&one, &one);
        for k in 0..10 {
            assert_eq!(p.mul_precision(&one, &one, k).unwrap(), k + 1);
        }
        assert_eq!(p.interval(4).unwrap(), (q("1"), q("1")));
    }

    #[test]
    fn bad_table_is_caught() {
        let t = table(vec![(q("0"), q("1")), (q("-1/2"), q("1/2")), (q("0"), q("1/4"))]);
        assert_eq!(
            t.validate(2),
            Err(RealError::InvariantViolation {
                conjunct: "lo nondecreasing",
                k: 0
            })
        );
    }

    #[test]
    fn op_basics() {
        assert!(op_at(&int(1), &int(2), 0).unwrap());
        let r = add(&int(1), &neg(&int(3)));
        for k in 0..8 {
            assert!(!op_at(&r, &r, k).unwrap());
        }
        let nn = neg(&neg(&r));
        assert_eq!(nn.interval(5).unwrap(), r.interval(5).unwrap());
    }

    #[test]
    fn orientation_examples() {
        let p = |x: &str, y: &str| Point::rational(q(x), q(y));
        let (a, b, c) = (p("0", "0"), p("1", "0"), p("0", "1"));
        assert_eq!(orientation(&a, &b, &c, 32).unwrap().0, Side::Left);
        assert_eq!(orientation(&a, &c, &b, 32).unwrap().0, Side::Right);
        let d = p("2", "0");
        assert_eq!(orientation(&a, &b, &d, 16), Err(RealError::PrecisionExhausted(16)));
    }

    #[test]
    fn least_element_cli_example() {
        let le = least_element(&consts(&[5, 7, 3, 1, 6, 4]), 2, None, &State::new()).unwrap();
        assert_eq!(le.index, 3);
        assert!(le.learned.backtracks() < 1 << 5);
    }

    #[test]
    fn least_element_single_and_minimal_first() {
        let le = least_element(&consts(&[4]), 3, None, &State::new()).unwrap();
        assert_eq!((le.index, le.learned.state.len()), (0, 0));
        let le = least_element(&consts(&[1, 5, 3, 9]), 3, None, &State::new()).unwrap();
        assert_eq!((le.index, le.learned.backtracks()), (0, 0));
    }

    #[test]
    fn first_pass_picks_zero() {
        let pass = LeastPass::run(6, &State::new());
        assert_eq!(pass.candidate, 0);
    }

    #[test]
    fn convex_triangle() {
        let pts = vec![
            Point::rational(q("0"), q("0")),
            Point::rational(q("1"), q("0")),
            Point::rational(q("0"), q("1")),
        ];
        let r = convex_angle(&pts, 64, &State::new()).unwrap();
        let mut idx = [r.a, r.b, r.c];
        idx.sort();
        assert_eq!(idx, [0, 1, 2]);
    }
}
