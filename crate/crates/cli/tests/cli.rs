use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(name)
}

fn irealize(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irealize"))
        .args(args)
        .env_remove("REALIZER_FUEL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn least_element_example() {
    let o = irealize(&["demo", "least-element", "--values", "5,7,3,1,6,4", "--precision", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().next(), Some("index 3"));
}

#[test]
fn least_element_sexpr() {
    let o = irealize(&["--format", "sexpr", "demo", "least-element", "--values", "1/2,-3/4,1/3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stdout(&o).starts_with("(least-element (index 1) (value -3/4)"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn least_element_random_is_seeded() {
    let a = irealize(&["demo", "least-element", "--random", "12", "--seed", "9"]);
    let b = irealize(&["demo", "least-element", "--random", "12", "--seed", "9"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn bad_rational_is_user_error() {
    let o = irealize(&["demo", "least-element", "--values", "1,x/2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn convex_angle_triangle() {
    let o = irealize(&["demo", "convex-angle", "--points", "0,0;1,0;0,1;1/3,1/3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("a 0 (0,0)"), "{out}");
}

#[test]
fn convex_angle_collinear_rejected() {
    let o = irealize(&["demo", "convex-angle", "--points", "0,0;1,1;2,2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eigenvariable_violation_reports_position() {
    let f = corpus("bad_eigenvariable.proof");
    let o = irealize(&["check", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad_eigenvariable.proof:3:3:"), "{err}");
    assert!(err.contains("eigenvariable x"), "{err}");
}

#[test]
fn parse_error_reports_position() {
    let dir = std::env::temp_dir().join(format!("irealize-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("broken.proof");
    std::fs::write(&f, "(defder d\n  (der atom-i (atom eq 0 0))\n").unwrap();
    let o = irealize(&["check", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("broken.proof:"), "{}", stderr(&o));
}

#[test]
fn corpus_files_check() {
    for name in ["sigma01.proof", "witness.proof", "terms.proof"] {
        let f = corpus(name);
        let o = irealize(&["check", f.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
    }
}

#[test]
fn extract_witness_from_em_corpus() {
    let f = corpus("witness.proof");
    for (deriv, w) in [("square-49", "7"), ("linear-13", "5"), ("pronic-42", "6")] {
        let o = irealize(&[
            "--format",
            "sexpr",
            "extract-witness",
            f.to_str().unwrap(),
            "--deriv",
            deriv,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(stdout(&o).trim(), format!("(witness {deriv} {w})"));
    }
}

#[test]
fn normalize_trace_one_line_per_rewrite() {
    let f = corpus("witness.proof");
    let o = irealize(&["normalize", f.to_str().unwrap(), "--deriv", "linear-13", "--trace"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let summary = out.lines().find(|l| l.starts_with("; ")).unwrap();
    let n: usize = summary[2..].split_whitespace().next().unwrap().parse().unwrap();
    let traced = out.lines().take_while(|l| !l.starts_with("; ")).count();
    assert!(n > 0);
    assert_eq!(traced, n);
}

#[test]
fn normalize_output_reparses() {
    let f = corpus("witness.proof");
    let o = irealize(&[
        "--format",
        "sexpr",
        "normalize",
        f.to_str().unwrap(),
        "--deriv",
        "square-49",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let src = std::fs::read_to_string(&f).unwrap();
    let prelude: String = src
        .lines()
        .filter(|l| l.starts_with("(deffn"))
        .map(|l| format!("{l}\n"))
        .collect();
    let dir = std::env::temp_dir().join(format!("irealize-norm-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let g = dir.join("normal.proof");
    std::fs::write(&g, format!("{prelude}(defder n\n{})\n", stdout(&o))).unwrap();
    let c = irealize(&["check", g.to_str().unwrap()]);
    assert_eq!(c.status.code(), Some(0), "{}", stderr(&c));
}

#[test]
fn extract_under_each_monad() {
    let f = corpus("sigma01.proof");
    for m in ["id", "exc", "ir"] {
        let o = irealize(&["extract", f.to_str().unwrap(), "--deriv", "direct-0", "--monad", m]);
        assert_eq!(o.status.code(), Some(0), "{m}: {}", stderr(&o));
        assert!(stdout(&o).contains("realizer: "));
    }
    let o = irealize(&["extract", f.to_str().unwrap(), "--deriv", "direct-0", "--monad", "list"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn em_rule_outside_interactive_monad_is_user_error() {
    let f = corpus("witness.proof");
    let o = irealize(&["extract", f.to_str().unwrap(), "--deriv", "square-49", "--monad", "exc"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_raises_then_learns() {
    let f = corpus("terms.proof");
    let p = f.to_str().unwrap();
    let o = irealize(&["run", p, "--term", "square-49"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("exception: "), "{}", stdout(&o));

    let o = irealize(&["run", p, "--term", "square-49", "--learn", "--trace"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("iter=0 "), "{out}");
    assert!(out.contains("value: (app (pair Nat Unit) 7 unit)"), "{out}");
}

#[test]
fn run_with_initial_state() {
    let f = corpus("terms.proof");
    let o = irealize(&[
        "run",
        f.to_str().unwrap(),
        "--term",
        "square-49",
        "--state",
        "(atomrel x (atom not-eq (mul x x) 49))[]=7",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "regular: (app (pair Nat Unit) 7 unit)");
}

#[test]
fn low_fuel_env_is_user_error() {
    let f = corpus("terms.proof");
    let o = Command::new(env!("CARGO_BIN_EXE_irealize"))
        .args(["run", f.to_str().unwrap(), "--term", "square-49", "--learn"])
        .env("REALIZER_FUEL", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn unknown_names_are_user_errors() {
    let f = corpus("terms.proof");
    let o = irealize(&["run", f.to_str().unwrap(), "--term", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    let o = irealize(&["normalize", f.to_str().unwrap(), "--deriv", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(irealize(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(irealize(&["--help"]).status.code(), Some(0));
}
