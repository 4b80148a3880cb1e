use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hamlet::LocalHamiltonianInstance;
use serde_json::Value;
use tempfile::TempDir;

fn hamlet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamlet"))
        .args(args)
        .current_dir(dir)
        .env_remove("HAMLET_MAX_DIM")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

const EPR_CLAUSE: &str = r#"{"n":2,"d":2,"k":2,"terms":[{"sites":[0,1],"matrix":[
 [[0.5,0],[0,0],[0,0],[0.5,0]],
 [[0,0],[0,0],[0,0],[0,0]],
 [[0,0],[0,0],[0,0],[0,0]],
 [[0.5,0],[0,0],[0,0],[0.5,0]]]}]}"#;

fn pair_zero(n: usize) -> String {
    let mut terms = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            terms.push(format!(
                r#"{{"sites":[{a},{b}],"matrix":[[[1,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]]]}}"#
            ));
        }
    }
    format!(r#"{{"n":{n},"d":2,"k":2,"terms":[{}]}}"#, terms.join(","))
}

#[test]
fn gen_random_writes_a_valid_instance() {
    let dir = TempDir::new().unwrap();
    let out = hamlet(
        &["gen", "random", "--n", "6", "--d", "2", "--k", "2", "--seed", "7", "--output", "inst.json"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let inst = LocalHamiltonianInstance::from_json(&fs::read_to_string(dir.path().join("inst.json")).unwrap()).unwrap();
    assert!(inst.is_valid());
    assert_eq!(inst.terms().len(), 15);

    let v = hamlet(&["validate", "inst.json"], dir.path());
    assert_eq!(code(&v), 0);
    let report = json_stdout(&v);
    assert_eq!(report["valid"], true);
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn gen_random_is_deterministic() {
    let dir = TempDir::new().unwrap();
    for name in ["a.json", "b.json"] {
        let out = hamlet(&["gen", "random", "--n", "4", "--seed", "11", "--output", name], dir.path());
        assert_eq!(code(&out), 0);
    }
    assert_eq!(fs::read(dir.path().join("a.json")).unwrap(), fs::read(dir.path().join("b.json")).unwrap());
}

// brute force over every assignment of the formula below
fn min_unsat(n: usize, clauses: &[Vec<i32>]) -> usize {
    (0..1usize << n)
        .map(|bits| {
            clauses
                .iter()
                .filter(|c| {
                    !c.iter().any(|&lit| {
                        let v = (bits >> (n - lit.unsigned_abs() as usize)) & 1 == 1;
                        if lit > 0 {
                            v
                        } else {
                            !v
                        }
                    })
                })
                .count()
        })
        .min()
        .unwrap()
}

#[test]
fn csp_instance_minimum_counts_unsatisfied_clauses() {
    let clauses = vec![
        vec![1, 2, 3],
        vec![-1, -2, 4],
        vec![-3, -4, 5],
        vec![1, -5, 6],
        vec![-1],
        vec![-2],
        vec![-6, 2],
        vec![3, 4, -1],
        vec![-3],
        vec![-4, -5],
    ];
    let mut cnf = format!("c small formula\np cnf 6 {}\n", clauses.len());
    for c in &clauses {
        cnf += &c.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ");
        cnf += " 0\n";
    }
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("f.cnf"), cnf).unwrap();
    let out = hamlet(&["gen", "csp", "--dimacs", "f.cnf", "--output", "csp.json"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let o = hamlet(&["oracle", "csp.json", "--which", "min"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lambda = json_stdout(&o)["eigenvalue"].as_f64().unwrap();
    assert!((lambda - min_unsat(6, &clauses) as f64).abs() <= 1e-8, "λ_min {lambda}");
}

#[test]
fn csp_reward_form_maximum_counts_satisfied_clauses() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("f.cnf"), "p cnf 2 2\n1 0\n-1 0\n").unwrap();
    let out = hamlet(&["gen", "csp", "--dimacs", "f.cnf", "--reward", "--output", "r.json"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let o = hamlet(&["oracle", "r.json", "--which", "max"], dir.path());
    assert!((json_stdout(&o)["eigenvalue"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn clock_instance_terms_are_at_most_five_local() {
    let dir = TempDir::new().unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let circuit = format!(
        r#"{{"n_proof":1,"n_ancilla":1,"gates":[
          {{"targets":[0],"matrix":[[[{h},0],[{h},0]],[[{h},0],[{m},0]]]}},
          {{"targets":[0,1],"matrix":[[[1,0],[0,0],[0,0],[0,0]],[[0,0],[1,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[1,0]],[[0,0],[0,0],[1,0],[0,0]]]}},
          {{"targets":[1],"matrix":[[[0,0],[1,0]],[[1,0],[0,0]]]}}]}}"#,
        m = -h
    );
    fs::write(dir.path().join("c.json"), circuit).unwrap();
    let out = hamlet(&["gen", "clock", "--circuit", "c.json", "--output", "clock.json"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let inst =
        LocalHamiltonianInstance::from_json(&fs::read_to_string(dir.path().join("clock.json")).unwrap()).unwrap();
    assert_eq!(inst.n(), 2 + 3);
    assert!(inst.is_valid());
    assert!(inst.terms().iter().all(|t| t.sites().len() <= 5));
}

#[test]
fn clock_rejects_a_non_unitary_gate() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"n_proof":1,"n_ancilla":0,"gates":[{"targets":[0],"matrix":[[[2,0],[0,0]],[[0,0],[1,0]]]}]}"#,
    )
    .unwrap();
    let out = hamlet(&["gen", "clock", "--circuit", "c.json", "--output", "x.json"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("c.json"));
}

#[test]
fn densify_adds_pairwise_terms() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("epr.json"), EPR_CLAUSE).unwrap();
    let out = hamlet(&["gen", "densify", "--input", "epr.json", "--extra", "3", "--output", "dense.json"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let inst =
        LocalHamiltonianInstance::from_json(&fs::read_to_string(dir.path().join("dense.json")).unwrap()).unwrap();
    assert_eq!(inst.n(), 5);
    assert_eq!(inst.terms().len(), 1 + 3);
    let o = hamlet(&["oracle", "dense.json"], dir.path());
    assert!((json_stdout(&o)["eigenvalue"].as_f64().unwrap() - 4.0).abs() < 1e-9);
}

#[test]
fn oracle_on_epr_clause() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("epr.json"), EPR_CLAUSE).unwrap();
    let o = hamlet(&["oracle", "epr.json", "--which", "max", "--product"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json_stdout(&o);
    assert!((v["eigenvalue"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["product_value"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn solve_practical_writes_report_csv_and_model() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("p.json"), pair_zero(4)).unwrap();
    let args = [
        "solve",
        "p.json",
        "--mode",
        "practical",
        "--sample-size",
        "2",
        "--delta",
        "0.5",
        "--eps-prime",
        "0.5",
        "--seed",
        "1",
        "--no-timings",
    ];
    let mut first = args.to_vec();
    first.extend(["--output", "out.json", "--csv", "out.csv", "--dump-model", "model.txt"]);
    let out = hamlet(&first, dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json_file(&dir.path().join("out.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["partial"], false);
    assert!(report["best_assignment"].is_array());
    let rounded = report["rounded_value"].as_f64().unwrap();
    assert!((6.0 - 0.5 * 16.0..=6.0 + 1e-9).contains(&rounded));

    let csv = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let rows = csv.lines().count() - 1;
    assert_eq!(rows as u64, report["iterations_run"].as_u64().unwrap());
    let model = fs::read_to_string(dir.path().join("model.txt")).unwrap();
    assert!(model.starts_with("hamlet-sdp 1\nblocks 4 2\n"));
    assert!(model.trim_end().ends_with("end"));

    let mut second = args.to_vec();
    second.extend(["--output", "again.json"]);
    assert_eq!(code(&hamlet(&second, dir.path())), 0);
    assert_eq!(fs::read(dir.path().join("out.json")).unwrap(), fs::read(dir.path().join("again.json")).unwrap());
}

#[test]
fn solve_stops_at_the_iteration_cap_with_exit_two() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("p.json"), pair_zero(4)).unwrap();
    let out =
        hamlet(&["solve", "p.json", "--sample-size", "2", "--iteration-cap", "4", "--output", "out.json"], dir.path());
    assert_eq!(code(&out), 2);
    let report = json_file(&dir.path().join("out.json"));
    assert_eq!(report["partial"], true);
    assert_eq!(report["iterations_run"], 4);
}

#[test]
fn theory_dry_run_prints_parameters() {
    let dir = TempDir::new().unwrap();
    let out = hamlet(&["solve", "--mode", "theory", "--eps", "0.5", "--dry-run"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let p = &json_stdout(&out)["params"];
    assert!((p["delta"].as_f64().unwrap() - 0.016475).abs() < 1e-6);
    assert!((p["eps_prime"].as_f64().unwrap() - 0.255368).abs() < 1e-6);
    assert!((p["f"].as_f64().unwrap() - 3.25).abs() < 1e-6);
    assert_eq!(p["sample_size"], 47894);
    assert_eq!(p["ladder"].as_array().unwrap().len(), 2);
    assert!((p["log10_iterations"].as_f64().unwrap() - 471775.9).abs() < 0.1);
}

#[test]
fn theory_without_eps_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = hamlet(&["solve", "--mode", "theory", "--dry-run"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--eps"));
}

#[test]
fn compare_batch_has_summary_stats() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("p.json"), pair_zero(3)).unwrap();
    let out = hamlet(
        &[
            "compare",
            "p.json",
            "--sample-size",
            "1",
            "--seeds",
            "3",
            "--seed",
            "5",
            "--output",
            "cmp.json",
            "--csv",
            "cmp.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json_file(&dir.path().join("cmp.json"));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["runs"].as_array().unwrap().len(), 3);
    let s = &v["summary"];
    assert_eq!(s["seeds"], 3);
    assert_eq!(s["ratio_to_extreme"]["count"], 3);
    let lo = s["ratio_to_extreme"]["min"].as_f64().unwrap();
    let hi = s["ratio_to_extreme"]["max"].as_f64().unwrap();
    assert!(lo <= hi && hi <= 1.0 + 1e-9);
    let csv = fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("3,3,"));
}

#[test]
fn missing_file_names_the_path() {
    let dir = TempDir::new().unwrap();
    for sub in [&["oracle", "nowhere.json"][..], &["solve", "nowhere.json"], &["validate", "nowhere.json"]] {
        let out = hamlet(sub, dir.path());
        assert_eq!(code(&out), 1);
        assert!(stderr(&out).contains("nowhere.json"), "{}", stderr(&out));
    }
}

#[test]
fn capacity_cap_gives_exit_three() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("epr.json"), EPR_CLAUSE).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hamlet"))
        .args(["oracle", "epr.json"])
        .current_dir(dir.path())
        .env("HAMLET_MAX_DIM", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("cap 2"));
}

#[test]
fn validate_flags_a_norm_violation() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        r#"{"n":2,"d":2,"k":2,"terms":[{"sites":[0,1],"matrix":[[[2,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]]]}]}"#,
    )
    .unwrap();
    let out = hamlet(&["validate", "bad.json"], dir.path());
    assert_eq!(code(&out), 1);
    let v = json_stdout(&out);
    assert_eq!(v["valid"], false);
    assert_eq!(v["diagnostics"][0]["kind"], "norm_exceeded");
    // the pipeline refuses it before doing any work
    assert_eq!(code(&hamlet(&["solve", "bad.json"], dir.path())), 1);
}

#[test]
fn truncated_instance_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("t.json"), &EPR_CLAUSE[..40]).unwrap();
    let out = hamlet(&["validate", "t.json"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("parse error"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&hamlet(&["solve", "--bogus"], dir.path())), 1);
    assert_eq!(code(&hamlet(&["gen", "random"], dir.path())), 1);
    assert_eq!(code(&hamlet(&["--help"], dir.path())), 0);
}
