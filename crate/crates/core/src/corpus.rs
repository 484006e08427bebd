//! Derivation builders: the Σ⁰₁ corpus, the EM witness corpus and a
//! seeded random generator of checked derivations.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::arith::{fresh_name, reduce_aterm, ATerm, Formula, PrimFn, RelSym, SymbolTable};
use crate::deduction::build::{exists_i, forall_e, id, post};
use crate::deduction::{check_derivation, Derivation, PostRule, Rule};

/// Standard symbols the builders use, looked up once.
#[derive(Clone)]
pub struct Kit {
    pub table: SymbolTable,
    pub eq: Arc<RelSym>,
    pub lt: Arc<RelSym>,
    pub le: Arc<RelSym>,
    pub tru: Arc<RelSym>,
}

impl Kit {
    pub fn new(table: &SymbolTable) -> Kit {
        let r = |n: &str| table.rel(n).expect("standard relation");
        Kit {
            table: table.clone(),
            eq: r("eq"),
            lt: r("lt"),
            le: r("le"),
            tru: r("true"),
        }
    }

    pub fn app(&self, f: &str, args: Vec<ATerm>) -> ATerm {
        ATerm::app(&self.table.func(f).expect("known function"), args)
    }

    pub fn s(&self, t: ATerm) -> ATerm {
        self.app("S", vec![t])
    }

    pub fn eq(&self, a: ATerm, b: ATerm) -> Formula {
        Formula::atom(&self.eq, vec![a, b])
    }

    pub fn bot(&self) -> Formula {
        self.table.bot()
    }

    pub fn top(&self) -> Formula {
        Formula::atom(&self.tru, vec![])
    }

    fn refl(&self, t: ATerm) -> Derivation {
        post(PostRule::EqRefl, vec![t], vec![], &self.table)
    }
}

fn node(rule: Rule, goal: Formula, prem: Vec<Derivation>) -> Derivation {
    Derivation::node(rule, goal, prem)
}

fn false_e(goal: Formula, bot: Derivation) -> Derivation {
    node(Rule::FalseE0, goal, vec![bot])
}

fn imply_e(kit: &Kit, major: Derivation, minor: Derivation) -> Derivation {
    let goal = match major.goal() {
        Formula::Imply(_, b) => (**b).clone(),
        _ => kit.bot(),
    };
    node(Rule::ImplyE, goal, vec![major, minor])
}

/// `⊢ u = 0 ∨ ∃m u = S m`, by simple induction on `u`.
pub fn zero_or_succ(kit: &Kit, u: &ATerm) -> Derivation {
    let (z, m, v, h) = (fresh_name("z"), fresh_name("m"), fresh_name("v"), fresh_name("h"));
    let motive = |t: ATerm| {
        Formula::or(
            kit.eq(t.clone(), ATerm::Num(0)),
            Formula::exists(&m, kit.eq(t, kit.s(ATerm::var(&m)))),
        )
    };
    let base = node(Rule::OrIL, motive(ATerm::Num(0)), vec![kit.refl(ATerm::Num(0))]);
    let sv = kit.s(ATerm::var(&v));
    let step = node(
        Rule::OrIR,
        motive(sv.clone()),
        vec![exists_i(
            Formula::exists(&m, kit.eq(sv.clone(), kit.s(ATerm::var(&m)))),
            ATerm::var(&v),
            kit.refl(sv),
        )],
    );
    node(
        Rule::Ind {
            label: h,
            var: v,
            x: z.clone(),
            motive: motive(ATerm::var(&z)),
            main: u.clone(),
        },
        motive(u.clone()),
        vec![base, step],
    )
}

/// `nh: ¬R̄(ts) ⊢ R(ts)`: stability of a decidable atom, by cases on the
/// value of its characteristic function.
pub fn stable_atom(kit: &Kit, r: &Arc<RelSym>, ts: &[ATerm], nh: &str) -> Derivation {
    let t = &kit.table;
    let goal = Formula::atom(r, ts.to_vec());
    let neg = Formula::imply(Formula::atom(&r.complement(), ts.to_vec()), kit.bot());
    let chi = ATerm::app(&r.chi, ts.to_vec());
    let (l1, l2, l3, l4) = (fresh_name("d"), fresh_name("d"), fresh_name("d"), fresh_name("d"));
    let (m, w) = (fresh_name("m"), fresh_name("w"));
    let mv = ATerm::var(&m);
    let wv = ATerm::var(&w);
    let refute = |complement: Derivation| false_e(goal.clone(), imply_e(kit, id(nh, neg.clone()), complement));

    // chi = 0
    let is_zero = kit.eq(chi.clone(), ATerm::Num(0));
    let case_zero = refute(post(
        PostRule::ChiZero(r.clone()),
        ts.to_vec(),
        vec![id(&l1, is_zero)],
        t,
    ));

    // chi = S m, then m = 0 or m = S w
    let chi_sm = kit.eq(chi.clone(), kit.s(mv.clone()));
    let m_zero = kit.eq(mv.clone(), ATerm::Num(0));
    let one = post(
        PostRule::EqTrans,
        vec![chi.clone(), kit.s(mv.clone()), kit.s(ATerm::Num(0))],
        vec![
            id(&l2, chi_sm.clone()),
            post(
                PostRule::EqCongS,
                vec![mv.clone(), ATerm::Num(0)],
                vec![id(&l3, m_zero)],
                t,
            ),
        ],
        t,
    );
    let case_one = post(PostRule::ChiOne(r.clone()), ts.to_vec(), vec![one], t);
    let m_sw = kit.eq(mv.clone(), kit.s(wv.clone()));
    let big = post(
        PostRule::EqTrans,
        vec![chi.clone(), kit.s(mv.clone()), kit.s(kit.s(wv.clone()))],
        vec![
            id(&l2, chi_sm),
            post(
                PostRule::EqCongS,
                vec![mv.clone(), kit.s(wv.clone())],
                vec![id(&l4, m_sw)],
                t,
            ),
        ],
        t,
    );
    let mut big_ts = ts.to_vec();
    big_ts.push(wv);
    let case_big = refute(post(PostRule::ChiBig(r.clone()), big_ts, vec![big], t));
    let ex_w = Formula::exists(&w, kit.eq(mv.clone(), kit.s(ATerm::var(&w))));
    let case_big = node(
        Rule::ExistsE(l4, w.clone()),
        goal.clone(),
        vec![id(&l3, ex_w), case_big],
    );
    let inner = node(
        Rule::OrE(l3),
        goal.clone(),
        vec![zero_or_succ(kit, &mv), case_one, case_big],
    );
    let ex_m = Formula::exists(&m, kit.eq(chi.clone(), kit.s(ATerm::var(&m))));
    let case_succ = node(Rule::ExistsE(l2, m), goal.clone(), vec![id(&l1, ex_m), inner]);
    node(Rule::OrE(l1), goal, vec![zero_or_succ(kit, &chi), case_zero, case_succ])
}

/// A closed derivation of `∃x R(ts)` by EM on `R̄(ts)`: the universal branch
/// is refuted at `k`, the counterexample branch uses stability.
pub fn em_root(kit: &Kit, r: &Arc<RelSym>, ts: &[ATerm], x: &str, k: ATerm) -> Derivation {
    let a = Formula::atom(r, ts.to_vec());
    let p = Formula::atom(&r.complement(), ts.to_vec());
    let goal = Formula::exists(x, a.clone());
    let (label, y) = (fresh_name("a"), fresh_name("y"));
    let inst = forall_e(k.clone(), id(&label, Formula::forall(x, p.clone())));
    let left = exists_i(
        goal.clone(),
        k.clone(),
        false_e(a.subst(x, &k), node(Rule::AtomE, kit.bot(), vec![inst])),
    );
    let yv = ATerm::var(&y);
    let ts_y: Vec<ATerm> = ts.iter().map(|t| t.subst(x, &yv)).collect();
    let right = exists_i(goal.clone(), yv, stable_atom(kit, r, &ts_y, &label));
    node(
        Rule::EM {
            label,
            var: y,
            x: x.into(),
            atom: p,
        },
        goal,
        vec![left, right],
    )
    .with_context(vec![], &kit.table)
}

/// A named closed derivation of `∃x A` and its intended witness.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub name: String,
    pub derivation: Derivation,
    pub witness: u64,
}

fn item(kit: &Kit, name: String, d: Derivation, witness: u64) -> CorpusItem {
    CorpusItem {
        name,
        derivation: d.with_context(vec![], &kit.table),
        witness,
    }
}

/// Least `x ≤ bound` with `A[x]` true, for a closed `∃x A`, `A` atomic.
pub fn brute_force_witness(goal: &Formula, bound: u64) -> Option<u64> {
    let Formula::Exists(x, a) = goal else { return None };
    (0..=bound).find(|&n| crate::arith::atomic_truth(&a.subst(x, &ATerm::Num(n))).unwrap_or(false))
}

/// Closed HA derivations of `∃x t = c`-shaped formulas built from seven
/// templates over `n = 0..8`: direct, ∀-instance, induction, →-cut, ∧-cut,
/// case split on `n`, and ∃-cut.
pub fn sigma01_corpus(table: &SymbolTable) -> Vec<CorpusItem> {
    let kit = Kit::new(table);
    let mut out = Vec::new();
    for n in 0..8u64 {
        let nn = ATerm::Num(n);
        let ex = |t: &ATerm| Formula::exists("x", kit.eq(ATerm::var("x"), t.clone()));

        let t = kit.app("add", vec![nn.clone(), ATerm::Num(2)]);
        out.push(item(
            &kit,
            format!("direct-{n}"),
            exists_i(ex(&t), t.clone(), kit.refl(t.clone())),
            n + 2,
        ));

        let z = fresh_name("z");
        let sz = kit.s(ATerm::var(&z));
        let body = exists_i(ex(&sz), sz.clone(), kit.refl(sz.clone()));
        let all = node(Rule::ForallI(z.clone()), Formula::forall(&z, ex(&sz)), vec![body]);
        out.push(item(&kit, format!("instance-{n}"), forall_e(nn.clone(), all), n + 1));

        out.push(item(&kit, format!("induction-{n}"), count_up(&kit, &nn), n));

        let t = kit.app("mul", vec![nn.clone(), ATerm::Num(3)]);
        let h = fresh_name("h");
        let a = kit.eq(t.clone(), t.clone());
        let lam = node(
            Rule::ImplyI(h.clone()),
            Formula::imply(a.clone(), ex(&t)),
            vec![exists_i(ex(&t), t.clone(), id(&h, a))],
        );
        out.push(item(
            &kit,
            format!("modus-ponens-{n}"),
            imply_e(&kit, lam, kit.refl(t.clone())),
            3 * n,
        ));

        let t = kit.app("add", vec![nn.clone(), nn.clone()]);
        let pair = node(
            Rule::AndI,
            Formula::and(ex(&t), kit.top()),
            vec![
                exists_i(ex(&t), t.clone(), kit.refl(t.clone())),
                node(Rule::AtomI, kit.top(), vec![]),
            ],
        );
        out.push(item(
            &kit,
            format!("projection-{n}"),
            node(Rule::AndEL, ex(&t), vec![pair]),
            2 * n,
        ));

        out.push(item(&kit, format!("cases-{n}"), by_cases(&kit, &nn), n));

        let t = kit.s(kit.s(nn.clone()));
        let (l, w) = (fresh_name("l"), fresh_name("w"));
        let major = exists_i(ex(&t), t.clone(), kit.refl(t.clone()));
        let wv = ATerm::var(&w);
        let minor = exists_i(ex(&t), wv.clone(), id(&l, kit.eq(wv, t.clone())));
        out.push(item(
            &kit,
            format!("unpack-{n}"),
            node(Rule::ExistsE(l, w), ex(&t), vec![major, minor]),
            n + 2,
        ));
    }
    out
}

/// `∃y y = u` by induction on `u`, unpacking the hypothesis in the step.
pub fn count_up(kit: &Kit, u: &ATerm) -> Derivation {
    let (z, y, v, h, l, w) = (
        fresh_name("z"),
        fresh_name("y"),
        fresh_name("v"),
        fresh_name("h"),
        fresh_name("l"),
        fresh_name("w"),
    );
    let motive = |t: ATerm| Formula::exists(&y, kit.eq(ATerm::var(&y), t));
    let base = exists_i(motive(ATerm::Num(0)), ATerm::Num(0), kit.refl(ATerm::Num(0)));
    let (vv, wv) = (ATerm::var(&v), ATerm::var(&w));
    let sv = kit.s(vv.clone());
    let step = node(
        Rule::ExistsE(l.clone(), w.clone()),
        motive(sv.clone()),
        vec![
            id(&h, motive(vv.clone())),
            exists_i(
                motive(sv),
                kit.s(wv.clone()),
                post(
                    PostRule::EqCongS,
                    vec![wv.clone(), vv.clone()],
                    vec![id(&l, kit.eq(wv, vv))],
                    &kit.table,
                ),
            ),
        ],
    );
    node(
        Rule::Ind {
            label: h,
            var: v,
            x: z.clone(),
            motive: motive(ATerm::var(&z)),
            main: u.clone(),
        },
        motive(u.clone()),
        vec![base, step],
    )
}

/// `∃x x = u` by the case split `u = 0 ∨ ∃m u = S m`.
pub fn by_cases(kit: &Kit, u: &ATerm) -> Derivation {
    let goal = Formula::exists("x", kit.eq(ATerm::var("x"), u.clone()));
    let (l, l2, m) = (fresh_name("l"), fresh_name("l"), fresh_name("m"));
    let t = &kit.table;
    let zero = exists_i(
        goal.clone(),
        ATerm::Num(0),
        post(
            PostRule::EqSym,
            vec![u.clone(), ATerm::Num(0)],
            vec![id(&l, kit.eq(u.clone(), ATerm::Num(0)))],
            t,
        ),
    );
    let sm = kit.s(ATerm::var(&m));
    let succ = node(
        Rule::ExistsE(l2.clone(), m.clone()),
        goal.clone(),
        vec![
            id(&l, Formula::exists(&m, kit.eq(u.clone(), sm.clone()))),
            exists_i(
                goal.clone(),
                sm.clone(),
                post(
                    PostRule::EqSym,
                    vec![u.clone(), sm.clone()],
                    vec![id(&l2, kit.eq(u.clone(), sm))],
                    t,
                ),
            ),
        ],
    );
    node(Rule::OrE(l), goal, vec![zero_or_succ(kit, u), zero, succ])
}

/// Function definitions the EM corpus relies on beyond the standard table.
pub fn em_prelude() -> Vec<(String, Arc<PrimFn>)> {
    let p = PrimFn::proj;
    let succ = || Arc::new(PrimFn::Succ);
    // dbl(0) = 0, dbl(S y) = S (S dbl(y))
    let dbl = PrimFn::prec(
        Arc::new(PrimFn::Zero),
        PrimFn::comp(2, succ(), vec![PrimFn::comp(2, succ(), vec![p(2, 2)])]),
    );
    // tri(0) = 0, tri(S y) = tri(y) + S y
    let add = SymbolTable::standard().func("add").expect("add").def.clone();
    let tri = PrimFn::prec(
        Arc::new(PrimFn::Zero),
        PrimFn::comp(2, add, vec![p(2, 2), PrimFn::comp(2, succ(), vec![p(2, 1)])]),
    );
    vec![("dbl".into(), dbl), ("tri".into(), tri)]
}

/// Table with [`em_prelude`] defined.
pub fn em_table() -> SymbolTable {
    let mut t = SymbolTable::standard();
    for (n, f) in em_prelude() {
        t.define_fn(&n, f).expect("valid definition");
    }
    t
}

/// Closed HA+EM derivations of simply existential formulas.
pub fn em_corpus(table: &SymbolTable) -> Vec<CorpusItem> {
    let kit = Kit::new(table);
    let x = || ATerm::var("x");
    let n = ATerm::Num;
    let eq = kit.eq.clone();
    let sq = kit.app("mul", vec![x(), x()]);
    let mut out = Vec::new();
    let mut push = |name: &str, d: Derivation, w: u64| out.push(item(&kit, name.into(), d, w));

    push("square-49", em_root(&kit, &eq, &[sq.clone(), n(49)], "x", n(7)), 7);
    push(
        "shift-10",
        em_root(&kit, &eq, &[kit.app("add", vec![x(), n(3)]), n(10)], "x", n(7)),
        7,
    );
    let lin = kit.app("sub", vec![kit.app("mul", vec![x(), n(3)]), n(2)]);
    push("linear-13", em_root(&kit, &eq, &[lin, n(13)], "x", n(5)), 5);
    let pron = kit.app("mul", vec![x(), kit.s(x())]);
    push("pronic-42", em_root(&kit, &eq, &[pron, n(42)], "x", n(6)), 6);
    push(
        "double-14",
        em_root(&kit, &eq, &[kit.app("dbl", vec![x()]), n(14)], "x", n(7)),
        7,
    );
    push(
        "triangle-21",
        em_root(&kit, &eq, &[kit.app("tri", vec![x()]), n(21)], "x", n(6)),
        6,
    );
    push("lt-square", em_root(&kit, &kit.lt, &[n(30), sq.clone()], "x", n(6)), 6);
    let k = kit.app("add", vec![n(2), n(5)]);
    push(
        "computed-instance",
        em_root(&kit, &eq, &[kit.app("add", vec![x(), n(3)]), n(10)], "x", k),
        7,
    );

    let root = em_root(&kit, &eq, &[sq.clone(), n(64)], "x", n(8));
    let goal = root.goal().clone();
    let h = fresh_name("h");
    let lam = node(Rule::ImplyI(h), Formula::imply(kit.top(), goal.clone()), vec![root]);
    push(
        "under-implication",
        imply_e(&kit, lam, node(Rule::AtomI, kit.top(), vec![])),
        8,
    );

    let root = em_root(&kit, &eq, &[kit.app("dbl", vec![x()]), n(10)], "x", n(5));
    let goal = root.goal().clone();
    let (l, w) = (fresh_name("l"), fresh_name("w"));
    let a_w = kit.eq(kit.app("dbl", vec![ATerm::var(&w)]), n(10));
    let minor = exists_i(goal.clone(), ATerm::var(&w), id(&l, a_w));
    push("unpacked", node(Rule::ExistsE(l, w), goal, vec![root, minor]), 5);

    let r1 = em_root(&kit, &eq, &[sq.clone(), n(9)], "x", n(3));
    let goal = r1.goal().clone();
    let pair = node(
        Rule::AndI,
        Formula::and(goal.clone(), kit.top()),
        vec![r1, node(Rule::AtomI, kit.top(), vec![])],
    );
    push("projected", node(Rule::AndEL, goal, vec![pair]), 3);

    // the universal branch never uses its hypothesis
    let a = kit.eq(kit.app("add", vec![x(), x()]), n(12));
    let goal = Formula::exists("x", a.clone());
    let direct = || exists_i(goal.clone(), n(6), node(Rule::AtomI, a.subst("x", &n(6)), vec![]));
    let (label, y) = (fresh_name("a"), fresh_name("y"));
    push(
        "vacuous",
        node(
            Rule::EM {
                label,
                var: y,
                x: "x".into(),
                atom: Formula::atom(&kit.le, vec![n(0), x()]),
            },
            goal.clone(),
            vec![direct(), direct()],
        ),
        6,
    );

    // case split on the EM axiom
    let ts = [kit.app("add", vec![sq.clone(), x()]), n(20)];
    let p = Formula::atom(&eq.complement(), ts.to_vec());
    let a = Formula::atom(&eq, ts.to_vec());
    let goal = Formula::exists("x", a.clone());
    let ax = crate::deduction::build::em_axiom("x", &p, table);
    let (l, l2, y) = (fresh_name("l"), fresh_name("l"), fresh_name("y"));
    let all = Formula::forall("x", p.clone());
    let refuted = exists_i(
        goal.clone(),
        n(4),
        false_e(
            a.subst("x", &n(4)),
            node(Rule::AtomE, kit.bot(), vec![forall_e(n(4), id(&l, all))]),
        ),
    );
    let yv = ATerm::var(&y);
    let ts_y: Vec<ATerm> = ts.iter().map(|t| t.subst("x", &yv)).collect();
    let counter = node(
        Rule::ExistsE(l2.clone(), y.clone()),
        goal.clone(),
        vec![
            id(&l, Formula::exists("x", Formula::not(p.clone(), &kit.bot()))),
            exists_i(goal.clone(), yv, stable_atom(&kit, &eq, &ts_y, &l2)),
        ],
    );
    push(
        "em-axiom-cases",
        node(Rule::OrE(l), goal, vec![ax, refuted, counter]),
        4,
    );
    out
}

/// Seeded generator of random checked derivations, with cuts of every kind.
pub struct DerivGen {
    rng: StdRng,
    kit: Kit,
    /// Whether EM may occur.
    pub em: bool,
    hyps: Vec<(String, Formula)>,
}

const POOL: [&str; 2] = ["u", "v"];

impl DerivGen {
    pub fn new(seed: u64, table: &SymbolTable, em: bool) -> DerivGen {
        DerivGen {
            rng: StdRng::seed_from_u64(seed),
            kit: Kit::new(table),
            em,
            hyps: Vec::new(),
        }
    }

    fn term_over(&mut self, vars: &[&str], depth: u32) -> ATerm {
        if depth == 0 || self.rng.gen_bool(0.4) {
            return if !vars.is_empty() && self.rng.gen_bool(0.5) {
                ATerm::var(vars[self.rng.gen_range(0..vars.len())])
            } else {
                ATerm::Num(self.rng.gen_range(0..4))
            };
        }
        match self.rng.gen_range(0..3) {
            0 => {
                let t = self.term_over(vars, depth - 1);
                self.kit.s(t)
            }
            1 => {
                let (a, b) = (self.term_over(vars, depth - 1), self.term_over(vars, depth - 1));
                self.kit.app("add", vec![a, b])
            }
            _ => {
                let (a, b) = (self.term_over(vars, depth - 1), self.term_over(vars, depth - 1));
                self.kit.app("mul", vec![a, b])
            }
        }
    }

    fn term(&mut self) -> ATerm {
        self.term_over(&POOL, 2)
    }

    fn atom(&mut self) -> Formula {
        let (a, b) = (self.term(), self.term());
        let r = [&self.kit.eq, &self.kit.lt, &self.kit.le][self.rng.gen_range(0..3)].clone();
        Formula::atom(&r, vec![a, b])
    }

    fn atomic_proof(&mut self) -> Derivation {
        let (a, b) = (self.term(), self.term());
        let t = &self.kit.table;
        match self.rng.gen_range(0..6) {
            0 => post(PostRule::AddZero, vec![a], vec![], t),
            1 => post(PostRule::AddSucc, vec![a, b], vec![], t),
            2 => post(PostRule::MulZero, vec![a], vec![], t),
            3 => post(PostRule::MulSucc, vec![a, b], vec![], t),
            4 => {
                let (x, y) = (self.rng.gen_range(0..9u64), self.rng.gen_range(0..9u64));
                let (lo, hi) = (x.min(y), x.max(y) + 1);
                node(
                    Rule::AtomI,
                    Formula::atom(&self.kit.lt, vec![ATerm::Num(lo), ATerm::Num(hi)]),
                    vec![],
                )
            }
            _ => self.kit.refl(a),
        }
    }

    fn leaf(&mut self) -> Derivation {
        if !self.hyps.is_empty() && self.rng.gen_bool(0.3) {
            let (l, a) = self.hyps[self.rng.gen_range(0..self.hyps.len())].clone();
            return id(&l, a);
        }
        self.atomic_proof()
    }

    fn with_hyp<T>(&mut self, l: &str, a: Formula, f: impl FnOnce(&mut Self) -> T) -> T {
        self.hyps.push((l.to_string(), a));
        let out = f(self);
        self.hyps.pop();
        out
    }

    /// `∃x B` from `d`, abstracting a free variable of `d`'s goal.
    fn exists_intro(&mut self, d: Derivation) -> Derivation {
        let fv: Vec<String> = d.goal().free_vars().into_iter().collect();
        let x = fresh_name("x");
        if fv.is_empty() || self.rng.gen_bool(0.2) {
            let goal = Formula::exists(&x, d.goal().clone());
            let t = self.term();
            return exists_i(goal, t, d);
        }
        let z = fv[self.rng.gen_range(0..fv.len())].clone();
        let goal = Formula::exists(&x, d.goal().subst(&z, &ATerm::var(&x)));
        exists_i(goal, ATerm::var(&z), d)
    }

    fn forall_intro(&mut self, d: Derivation) -> Derivation {
        let blocked: std::collections::BTreeSet<String> = self.hyps.iter().flat_map(|(_, a)| a.free_vars()).collect();
        let cands: Vec<String> = d
            .goal()
            .free_vars()
            .into_iter()
            .filter(|v| !blocked.contains(v))
            .collect();
        let y = if cands.is_empty() {
            fresh_name("y")
        } else {
            cands[self.rng.gen_range(0..cands.len())].clone()
        };
        let x = fresh_name("x");
        let goal = Formula::forall(&x, d.goal().subst(&y, &ATerm::var(&x)));
        node(Rule::ForallI(y), goal, vec![d])
    }

    /// `∃x R(t(x), t(k))` for a random `t` and `k`, by [`em_root`].
    fn em_witness(&mut self) -> Derivation {
        let t = self.term_over(&["x"], 2);
        let k = self.rng.gen_range(0..5u64);
        let env = BTreeMap::from([("x".to_string(), k)]);
        let v = reduce_aterm(&t, &env).unwrap_or(0);
        let eq = self.kit.eq.clone();
        em_root(&self.kit, &eq, &[t, ATerm::Num(v)], "x", ATerm::Num(k))
    }

    fn gen(&mut self, depth: u32) -> Derivation {
        if depth == 0 || self.rng.gen_bool(0.15) {
            return self.leaf();
        }
        let choices = if self.em { 15 } else { 13 };
        match self.rng.gen_range(0..choices) {
            0 => {
                let (a, b) = (self.gen(depth - 1), self.gen(depth - 1));
                node(Rule::AndI, Formula::and(a.goal().clone(), b.goal().clone()), vec![a, b])
            }
            1 => {
                let (a, b) = (self.gen(depth - 1), self.gen(depth - 1));
                let pair = node(
                    Rule::AndI,
                    Formula::and(a.goal().clone(), b.goal().clone()),
                    vec![a.clone(), b.clone()],
                );
                if self.rng.gen_bool(0.5) {
                    node(Rule::AndEL, a.goal().clone(), vec![pair])
                } else {
                    node(Rule::AndER, b.goal().clone(), vec![pair])
                }
            }
            2 => {
                let d = self.gen(depth - 1);
                let other = self.atom();
                if self.rng.gen_bool(0.5) {
                    node(Rule::OrIL, Formula::or(d.goal().clone(), other), vec![d])
                } else {
                    node(Rule::OrIR, Formula::or(other, d.goal().clone()), vec![d])
                }
            }
            3 => {
                let (l, a) = (fresh_name("h"), self.atom());
                let body = self.with_hyp(&l, a.clone(), |g| g.gen(depth - 1));
                node(Rule::ImplyI(l), Formula::imply(a, body.goal().clone()), vec![body])
            }
            4 => {
                let minor = self.atomic_proof();
                let (l, a) = (fresh_name("h"), minor.goal().clone());
                let body = self.with_hyp(&l, a.clone(), |g| g.gen(depth - 1));
                let lam = node(Rule::ImplyI(l), Formula::imply(a, body.goal().clone()), vec![body]);
                imply_e(&self.kit, lam, minor)
            }
            5 => {
                let d = self.gen(depth - 1);
                self.forall_intro(d)
            }
            6 => {
                let d = self.gen(depth - 1);
                let all = self.forall_intro(d);
                let t = self.term();
                forall_e(t, all)
            }
            7 => {
                let d = self.gen(depth - 1);
                self.exists_intro(d)
            }
            8 => self.exists_cut(depth),
            9 => self.or_cut(depth),
            10 => {
                let u = self.term();
                zero_or_succ(&self.kit, &u)
            }
            11 => {
                let u = self.term_over(&[], 2);
                if self.rng.gen_bool(0.5) {
                    count_up(&self.kit, &u)
                } else {
                    by_cases(&self.kit, &u)
                }
            }
            12 => {
                let (l, y, x) = (fresh_name("c"), fresh_name("y"), fresh_name("x"));
                let goal = Formula::forall(&x, self.kit.eq(ATerm::var(&x), ATerm::var(&x)));
                node(Rule::CInd(l, y.clone()), goal, vec![self.kit.refl(ATerm::var(&y))])
            }
            13 => self.em_witness(),
            _ => {
                let a = self.term_over(&["x"], 2);
                let b = self.term_over(&["x"], 1);
                let atom = Formula::atom(&self.kit.eq, vec![a, b]);
                crate::deduction::build::em_axiom("x", &atom, &self.kit.table)
            }
        }
    }

    fn exists_cut(&mut self, depth: u32) -> Derivation {
        let d = self.gen(depth - 1);
        let major = self.exists_intro(d);
        let Formula::Exists(x, b) = major.goal().clone() else {
            unreachable!()
        };
        let (l, y) = (fresh_name("l"), fresh_name("y"));
        let hyp = b.subst(&x, &ATerm::var(&y));
        let minor = self.with_hyp(&l, hyp, |g| g.gen(depth - 1));
        if minor.goal().has_free(&y) {
            return major;
        }
        node(Rule::ExistsE(l, y), minor.goal().clone(), vec![major, minor])
    }

    fn or_cut(&mut self, depth: u32) -> Derivation {
        let d = self.gen(depth - 1);
        let a = d.goal().clone();
        let b = if self.rng.gen_bool(0.5) { a.clone() } else { self.atom() };
        let major = node(Rule::OrIL, Formula::or(a.clone(), b.clone()), vec![d]);
        let l = fresh_name("l");
        let m1 = self.with_hyp(&l, a.clone(), |g| g.gen(depth - 1));
        let m2 = if a == b || !m1.uses_label(&l) {
            m1.clone()
        } else {
            return m1_fallback(m1, &l);
        };
        node(Rule::OrE(l), m1.goal().clone(), vec![major, m1, m2])
    }

    /// A random derivation that passes the checker. Each attempt is
    /// generated afresh; attempts failing the checker are discarded.
    pub fn derivation(&mut self, depth: u32) -> Derivation {
        loop {
            self.hyps.clear();
            let d = self.gen(depth).with_context(vec![], &self.kit.table);
            if check_derivation(&d, &self.kit.table).is_ok() {
                return d;
            }
        }
    }
}

/// An ∨-minor that used its label cannot serve the other branch; keep it
/// under an implication instead.
fn m1_fallback(m1: Derivation, l: &str) -> Derivation {
    let a = m1.get(&[]).and_then(|_| find_label(&m1, l)).expect("label is used");
    node(Rule::ImplyI(l.into()), Formula::imply(a, m1.goal().clone()), vec![m1])
}

fn find_label(d: &Derivation, l: &str) -> Option<Formula> {
    match &d.rule {
        Rule::Id(x) if x == l => Some(d.goal().clone()),
        _ => d.prem.iter().find_map(|p| find_label(p, l)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalizer::extract_witness;

    #[test]
    fn lemmas_check() {
        let table = SymbolTable::standard();
        let kit = Kit::new(&table);
        let d = zero_or_succ(&kit, &ATerm::var("u")).with_context(vec![], &table);
        check_derivation(&d, &table).unwrap();
        let ts = [kit.app("mul", vec![ATerm::var("u"), ATerm::var("u")]), ATerm::Num(4)];
        let neg = Formula::imply(Formula::atom(&kit.eq.complement(), ts.to_vec()), kit.bot());
        let d = stable_atom(&kit, &kit.eq, &ts, "nh").with_context(vec![("nh".into(), neg)], &table);
        check_derivation(&d, &table).unwrap();
    }

    #[test]
    fn corpora_check() {
        let table = em_table();
        let s = sigma01_corpus(&table);
        assert!(s.len() >= 50);
        for it in s.iter().chain(em_corpus(&table).iter()) {
            check_derivation(&it.derivation, &table).unwrap_or_else(|e| panic!("{}: {e}", it.name));
            assert!(it.derivation.is_closed(), "{}", it.name);
            let w = brute_force_witness(it.derivation.goal(), 1000);
            assert_eq!(w, Some(it.witness), "{}", it.name);
        }
    }

    #[test]
    fn em_root_extracts() {
        let table = em_table();
        let it = &em_corpus(&table)[0];
        let w = extract_witness(&it.derivation, 100_000, &table).unwrap();
        assert_eq!(w.value, 7);
    }

    #[test]
    fn generator_is_seeded() {
        let table = SymbolTable::standard();
        let shape = |d: Derivation| crate::syntax::derivation_to_string(&d).len();
        let a = shape(DerivGen::new(5, &table, true).derivation(4));
        let b = shape(DerivGen::new(5, &table, true).derivation(4));
        assert_eq!(a, b);
    }
}
