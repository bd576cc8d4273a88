use std::path::PathBuf;

use fracparts::cli::run_args;
use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fracparts-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Vec<Value> {
    let mut argv = vec!["fracparts"];
    argv.extend_from_slice(args);
    let out = run_args(argv).unwrap();
    out.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn write(dir: &PathBuf, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const IRRATIONAL: &str = r#"{"k": 2, "d": 2, "coeffs": [["sqrt(2)", "0"], ["1/3", "pi"]], "epsilons": ["1/100", "1/100"]}"#;
const RATIONAL: &str = r#"{"k": 1, "d": 2, "coeffs": [["1/7", "2/7"]], "epsilons": ["1/100"]}"#;

#[test]
fn header_records_seed() {
    let dir = scratch("header");
    let sys = write(&dir, "s.json", IRRATIONAL);
    let lines = run(&["search", "--system", &sys, "--x", "2000", "--seed", "42"]);
    assert_eq!(lines[0]["run"]["seed"], 42);
    assert_eq!(lines[0]["run"]["command"], "search");
    assert_eq!(lines[1]["hit"], 886);
}

#[test]
fn denominator_examples() {
    let gp = run(&["denoms", "gp", "--b", "6,10"]);
    assert_eq!(gp[1]["gp"], "15");
    assert_eq!(gp[1]["equal"], true);
    let sd = run(&["denoms", "sum-den", "--fracs", "1/2,1/3"]);
    assert_eq!(sd[1]["denominator"], "6");
    let sd = run(&["denoms", "sum-den", "--fracs", "1/2,1/2"]);
    assert_eq!(sd[1]["denominator"], "1");
    let cr = run(&["denoms", "count-r", "--B", "32", "--r", "2", "--delta", "0.5"]);
    let summary = &cr.last().unwrap()["summary"];
    assert_eq!(summary["violations"], 0);
    assert_eq!(summary["tuples"], 306);
    let floor = run(&["denoms", "floor", "--B", "16", "--r", "3", "--delta", "1/2"]);
    assert_eq!(floor.last().unwrap()["summary"]["violations"], 0);
}

#[test]
fn precision_is_validated() {
    let dir = scratch("precision");
    let sys = write(&dir, "s.json", IRRATIONAL);
    let err = run_args(["fracparts", "search", "--system", &sys, "--x", "10", "--precision", "32"]).unwrap_err();
    assert!(err.to_string().contains("64"));
}

#[test]
fn bucket_and_relations_verify() {
    let dir = scratch("bucket");
    let sys = write(&dir, "s.json", RATIONAL);
    let out = run_args(["fracparts", "dichotomy", "--system", &sys, "--x", "300"]).unwrap();
    let probe = write(&dir, "probe.jsonl", &out);
    let v = run(&["verify", "--kind", "bucket", "--artifact", &probe, "--system", &sys, "--x", "300"]);
    assert_eq!(v[1]["passed"], true);

    let out = run_args(["fracparts", "harvest", "--system", &sys, "--x", "300"]).unwrap();
    let rel = write(&dir, "rel.jsonl", &out);
    let v = run(&["verify", "--kind", "relation-set", "--artifact", &rel, "--system", &sys]);
    assert_eq!(v[1]["passed"], true);
    assert!(v[1]["checked"].as_u64().unwrap() > 0);
}

#[test]
fn reduce_then_verify() {
    let dir = scratch("reduce");
    let sys = write(
        &dir,
        "s.json",
        r#"{"k": 2, "d": 2, "coeffs": [["1/1000000000", "0"], ["7/17", "3/11"]]}"#,
    );
    let rel = write(&dir, "pairs.json", r#"[{"a": [0, 0], "h": [1, 0]}]"#);
    let out = run_args([
        "fracparts", "reduce", "--system", &sys, "--relations", &rel, "--q0", "1", "--Q", "16", "--eta", "1/1000",
        "--x", "5000", "--caps", "4,4", "--eps", "1/10", "--delta", "1/2", "--c-select", "100",
    ])
    .unwrap();
    let rec: Value = serde_json::from_str(out.lines().nth(1).unwrap()).unwrap();
    assert_eq!(rec["k_reduced"], 1);
    let art = write(&dir, "rec.jsonl", &out);
    let v = run(&["verify", "--kind", "reduction", "--artifact", &art]);
    assert_eq!(v[1]["passed"], true);
}

#[test]
fn pipeline_trace_verifies() {
    let dir = scratch("pipeline");
    let sys = write(&dir, "s.json", IRRATIONAL);
    let out = run_args(["fracparts", "pipeline", "--system", &sys, "--x", "4096"]).unwrap();
    let tail: Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(tail["status"]["WitnessFound"]["n"], 886);
    let art = write(&dir, "trace.jsonl", &out);
    let v = run(&["verify", "--kind", "trace", "--artifact", &art]);
    assert_eq!(v[1]["passed"], true);
}

#[test]
fn expansion_replays() {
    let dir = scratch("expansion");
    let s = write(
        &dir,
        "s.json",
        r#"[{"a": [1, 1], "q": [3, 3], "h": [1]}, {"a": [1, 2], "q": [3, 3], "h": [2]},
            {"a": [2, 1], "q": [3, 3], "h": [3]}, {"a": [1, 1], "q": [5, 7], "h": [4]}]"#,
    );
    let out = run_args([
        "fracparts", "denoms", "expansion", "--input", &s, "--r", "2", "--delta", "1/2", "--eps", "1/10", "--X", "4",
        "--Q", "16",
    ])
    .unwrap();
    let o: Value = serde_json::from_str(out.lines().nth(1).unwrap()).unwrap();
    assert_eq!(o["max_multiplicity"], 3);
    assert_eq!(o["same_denominator"], true);
    let art = write(&dir, "dump.jsonl", &out);
    let v = run(&["verify", "--kind", "expansion", "--artifact", &art]);
    assert_eq!(v[1]["passed"], true);
}

#[test]
fn exponent_csv_has_seed_comment() {
    let out = run_args([
        "fracparts", "exponent", "--k", "1", "--d", "2", "--x-min-exp", "6", "--x-max-exp", "10", "--trials", "2",
        "--seed", "5",
    ])
    .unwrap();
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("# seed=5 "));
    assert_eq!(lines.next().unwrap(), "trial,x,min_value_num,min_value_den,slope");
    assert_eq!(lines.count(), 10);
}

#[test]
fn refine_reads_family() {
    let dir = scratch("refine");
    let fam: Vec<Vec<u64>> = (1..=40u64).map(|i| vec![6 * i, 10 * i]).collect();
    let f = write(&dir, "fam.json", &serde_json::to_string(&fam).unwrap());
    let v = run(&["denoms", "refine", "--input", &f, "--eps1", "1/2", "--delta", "1/2"]);
    assert_eq!(v[1]["m"], serde_json::json!([6, 10]));
}
