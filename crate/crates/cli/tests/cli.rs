use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triplet-nn")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_stats_and_search() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("u.csv");
    let tree = dir.path().join("t.json");
    assert!(run(&["bench", "gen", "--kind", "uniform-cube", "--n", "300", "--dim", "2", "--seed", "3", "--out", s(&data)])
        .status
        .success());
    assert!(run(&["tree", "build", "--data", s(&data), "--n0", "8", "--seed", "1", "--out", s(&tree)]).status.success());

    let stats = json(&run(&["tree", "stats", "--tree", s(&tree)]));
    assert_eq!(stats["n"], 300);
    let height = stats["height"].as_u64().unwrap();

    let hit = json(&run(&["tree", "search", "--tree", s(&tree), "--data", s(&data), "--leave-one-out", "5"]));
    assert_ne!(hit["neighbor"], 5);
    assert!(hit["triplets_used"].as_u64().unwrap() <= height + 7);

    let ranked = json(&run(&["tree", "search", "--tree", s(&tree), "--data", s(&data), "--query", "0.5,0.5", "--k", "3"]));
    let neighbors = ranked["neighbors"].as_array().unwrap();
    assert!((1..=3).contains(&neighbors.len()));

    let kd = dir.path().join("kd.json");
    assert!(run(&["tree", "build", "--data", s(&data), "--method", "kdtree", "--n0", "8", "--out", s(&kd)]).status.success());
    let hit = json(&run(&["tree", "search", "--tree", s(&kd), "--data", s(&data), "--point", "9"]));
    assert_eq!(hit["distance"], 0.0);
}

#[test]
fn bounds_and_expansion() {
    let b = json(&run(&["theory", "bounds", "--n", "1000", "--n0", "10", "--c-tilde", "2", "--big-c", "2", "--alpha", "0.5"]));
    assert!((b["h_star"].as_f64().unwrap() - 1780.4).abs() < 0.1);
    assert_eq!(b["error_bound_clamped"], 1.0);

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("line.csv");
    fs::write(&data, (0..8).map(|i| format!("{i}\n")).collect::<String>()).unwrap();
    let csv = dir.path().join("c.csv");
    let e = json(&run(&["theory", "expansion", "--data", s(&data), "--csv", s(&csv)]));
    assert_eq!(e["dataset_max"], 3.0);
    assert_eq!(e["min"], 2.0);
    assert!(fs::read_to_string(&csv).unwrap().starts_with("point_id,c_tilde"));

    let l = json(&run(&["theory", "split-balance", "--data", s(&data), "--delta", "0.9", "--trials", "50"]));
    assert_eq!(l["fraction"], 1.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(run(&["tree", "build", "--data", s(&missing), "--n0", "4", "--out", "x"]).status.code(), Some(3));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,x\n").unwrap();
    let out = run(&["theory", "expansion", "--data", s(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    assert_eq!(run(&["theory", "bounds", "--n", "5", "--n0", "10", "--c-tilde", "1"]).status.code(), Some(2));

    let conf = dir.path().join("b.conf");
    fs::write(&conf, "dataset = d.csv\nmethods = comptree\nn0 = 4\nseeds = 0\nbogus = 1\n").unwrap();
    assert_eq!(run(&["bench", "run", "--config", s(&conf)]).status.code(), Some(2));

    fs::write(&conf, "dataset = d.csv\nmethods = comptree\nn0 = 4\nseeds = 0\n").unwrap();
    assert_eq!(run(&["bench", "run", "--config", s(&conf)]).status.code(), Some(3));
}
