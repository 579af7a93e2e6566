use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use extremal_tree::pipeline::PipelineReport;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_extremal-tree"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const MODEL: &str = r#"{"d":5,"edges":[[0,1],[1,2],[1,3],[3,4]],"names":["a","b","c","d","e"],
 "edge_models":{"0-1":{"family":"husler_reiss","gamma":0.3},"1-2":{"family":"husler_reiss","gamma":0.3},
 "1-3":{"family":"husler_reiss","gamma":0.3},"3-4":{"family":"husler_reiss","gamma":0.3}}}"#;

/// Simulates `n` max-stable rows from the five-node model into `dir`.
fn simulated(dir: &TempDir, n: usize) -> PathBuf {
    let model = dir.path().join("model.json");
    std::fs::write(&model, MODEL).unwrap();
    let csv = dir.path().join("x.csv");
    let o = run(&["--seed", "5", "--out", path_str(&csv), "simulate", "--model", path_str(&model), "--n", &n.to_string()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    csv
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("valid JSON")
}

fn edges(v: &serde_json::Value) -> Vec<(u64, u64)> {
    v["edges"].as_array().unwrap().iter().map(|e| (e[0].as_u64().unwrap(), e[1].as_u64().unwrap())).collect()
}

#[test]
fn simulate_writes_headered_csv_with_17_digits() {
    let dir = TempDir::new().unwrap();
    let csv = std::fs::read_to_string(simulated(&dir, 50)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("a,b,c,d,e"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 50);
    for cell in rows.iter().flat_map(|r| r.split(',')) {
        let (mantissa, _) = cell.split_once('e').unwrap();
        let digits = mantissa.chars().filter(char::is_ascii_digit).count();
        assert_eq!(digits, 17, "{cell}");
        assert!(cell.parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn simulate_learn_recovers_generating_tree() {
    let dir = TempDir::new().unwrap();
    let csv = simulated(&dir, 20_000);
    for method in ["gamma", "chi", "gamma-root=2"] {
        let o = run(&["learn", "--input", path_str(&csv), "--q", "0.05", "--method", method]);
        assert_eq!(code(&o), 0);
        let v = json(&o);
        assert_eq!(edges(&v), [(0, 1), (1, 2), (1, 3), (3, 4)], "{method}");
        assert_eq!(v["names"][4], "e");
        assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn pipeline_end_to_end() {
    let dir = TempDir::new().unwrap();
    let csv = simulated(&dir, 20_000);
    let o = run(&["--seed", "1", "pipeline", "--input", path_str(&csv), "-B", "0"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v.get("bootstrap").is_none());
    assert_eq!(v["k"], 1000);
    assert_eq!(edges(&v["tree"]), [(0, 1), (1, 2), (1, 3), (3, 4)]);
    assert_eq!(v["chi_table"].as_array().unwrap().len(), 10);
    let report = PipelineReport::from_json(&text).unwrap();
    assert_eq!(report.to_json().unwrap() + "\n", text);

    let o = run(&["--seed", "1", "pipeline", "--input", path_str(&csv), "-B", "10", "--pairs", "0-1,2-4"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["bootstrap"]["replicates"], 10);
    assert_eq!(v["chi_curves"]["curves"].as_array().unwrap().len(), 2);
}

#[test]
fn outputs_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let csv = simulated(&dir, 3000);
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"d":6,"n_list":[300,900],"k_rule":{"rule":"power08"},"model_family":{"family":"m2"},
            "noise":"n2","methods":["chi","gamma-root","gamma-combined"],"repetitions":8,"seed":3}"#,
    )
    .unwrap();
    let mut reports = Vec::new();
    let mut experiments = Vec::new();
    let mut sims = Vec::new();
    let model = dir.path().join("model.json");
    for threads in ["1", "4", "8"] {
        let p = run(&["--threads", threads, "--seed", "9", "pipeline", "--input", path_str(&csv), "-B", "12"]);
        assert_eq!(code(&p), 0);
        reports.push(p.stdout);
        let e = run(&["--threads", threads, "experiment", "--config", path_str(&config)]);
        assert_eq!(code(&e), 0);
        experiments.push(e.stdout);
        let s = run(&["--threads", threads, "--seed", "2", "simulate", "--model", path_str(&model), "--n", "500", "--kind", "noisy"]);
        sims.push(s.stdout);
    }
    for outputs in [&reports, &experiments, &sims] {
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[0], outputs[2]);
    }
    let header = String::from_utf8(experiments[0].clone()).unwrap();
    assert!(header.starts_with("method,n,k,q,err_mean,err_se,srr_mean,srr_se,reps\n"));
    assert_eq!(header.lines().count(), 7);
}

#[test]
fn estimate_fit_bootstrap_and_chi_curve() {
    let dir = TempDir::new().unwrap();
    let csv = simulated(&dir, 4000);
    let input = path_str(&csv);

    let v = json(&run(&["estimate", "--input", input, "--k", "200"]));
    assert_eq!((v["root"].as_str(), v["k"].as_u64(), v["n"].as_u64()), (Some("combined"), Some(200), Some(4000)));
    let v = json(&run(&["estimate", "--input", input, "--root", "3"]));
    assert_eq!(v["root"], 3);
    assert_eq!(v["k"], 761);

    let v = json(&run(&["fit-hr", "--input", input, "--q", "0.05"]));
    assert_eq!(v["k"], 200);
    for key in ["tree", "edge_gamma", "full_gamma", "implied_chi", "version"] {
        assert!(v.get(key).is_some(), "{key}");
    }

    let v = json(&run(&["--seed", "4", "bootstrap", "--input", input, "--q", "0.05", "-B", "7"]));
    assert_eq!(v["replicates"], 7);
    assert_eq!(v["method"], "gamma");
    let counts = v["counts"].as_array().unwrap();
    let upper: u64 = (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j))).map(|(i, j)| counts[i][j].as_u64().unwrap()).sum();
    assert_eq!(upper, 4 * 7);

    let o = run(&["chi-curve", "--input", input, "--pairs", "0-1", "--levels", "0.9,0.95"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "i,j,name_i,name_j,level,tail_fraction,k,chi");
    assert!(lines[1].starts_with("0,1,a,b,0.9,0.1,400,"));
    assert!(lines[2].starts_with("0,1,a,b,0.95,0.05,200,"));
    assert_eq!(lines.len(), 3);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let write = |name: &str, s: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, s).unwrap();
        p
    };
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&run(&["learn", "--input", path_str(&missing)])), 2);
    let ragged = write("ragged.csv", "a,b\n1,2\n3\n4,5\n");
    let o = run(&["learn", "--input", path_str(&ragged)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));
    assert_eq!(code(&run(&["learn", "--input", path_str(&ragged), "--bogus"])), 2);

    // two blocks whose upper tails never meet: χ̂ = 0 across blocks
    let mut s = String::from("a,b,c,d\n");
    for t in 1..=10 {
        s.push_str(&format!("{t},{t},{},{}\n", -t, -t));
    }
    let split = write("split.csv", &s);
    assert_eq!(code(&run(&["learn", "--input", path_str(&split), "--method", "chi", "--k", "2"])), 3);
    assert_eq!(code(&run(&["learn", "--input", path_str(&split), "--method", "gamma", "--k", "1"])), 2);
    assert_eq!(code(&run(&["learn", "--input", path_str(&split), "--method", "nonsense"])), 2);
    assert_eq!(code(&run(&["pipeline", "--input", path_str(&split), "--q", "1.5"])), 2);

    let abs = write("abs.csv", "x,y\n-1,2\n3,-4\n5,6\n");
    let v = json(&run(&["estimate", "--input", path_str(&abs), "--abs", "--k", "2"]));
    assert_eq!(v["n"], 3);
}
