mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use corr_rr::harness::CSV_HEADER;

fn corr_rr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corr-rr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_writes_coded_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("binary.csv");
    let res = corr_rr(&["synth", "--n", "2000", "--d", "3", "--k", "2", "--rho", "0.9", "--seed", "5", "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("attr_0,attr_1,attr_2"));
    assert_eq!(lines.count(), 2000);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("binary.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["synth"]["rho"], 0.9);
    let corr = meta["correlation"].as_array().unwrap();
    assert_eq!(corr.len(), 3);
    let c01 = corr[0][1].as_f64().unwrap();
    assert!((c01 - 0.9).abs() < 3.0 / 2000f64.sqrt(), "{c01}");
}

#[test]
fn ingest_builtin_recipe() {
    let dir = tempfile::tempdir().unwrap();
    let raw = common::write_fixture(dir.path(), "nursery.data", &common::nursery_text());
    let out = dir.path().join("nursery.csv");
    let res = corr_rr(&["ingest", "--input", path_str(&raw), "--recipe", "nursery", "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(stdout(&res).contains("n=12960 d=8 k=3"), "{}", stdout(&res));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("nursery.meta.json")).unwrap()).unwrap();
    assert_eq!((meta["d"].as_u64(), meta["k"].as_u64()), (Some(8), Some(3)));
    assert_eq!(meta["correlation"].as_array().unwrap().len(), 8);
}

#[test]
fn ingest_custom_recipe_file() {
    let dir = tempfile::tempdir().unwrap();
    let raw = common::write_fixture(dir.path(), "t.csv", "colour,size,shape\nred,1,a\nblue,2,b\nred,2,?\nred,1,b\n");
    let recipe = common::write_fixture(
        dir.path(),
        "recipe.json",
        r#"{"name":"custom","steps":[{"drop_columns":["size"]},"frequency_rank_encode"]}"#,
    );
    let out = dir.path().join("coded.csv");
    let res = corr_rr(&["ingest", "--input", path_str(&raw), "--recipe", path_str(&recipe), "--out", path_str(&out), "--header"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap(), "attr_0,attr_1\n0,1\n1,0\n0,0\n");
}

#[test]
fn ingest_reports_ragged_rows() {
    let dir = tempfile::tempdir().unwrap();
    let raw = common::write_fixture(dir.path(), "bad.data", "a,b,c\nd,e\n");
    let out = dir.path().join("o.csv");
    let res = corr_rr(&["ingest", "--input", path_str(&raw), "--recipe", "mushroom", "--out", path_str(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
}

const CONFIG: &str = r#"{
  "datasets": [{"kind": "synth", "n": 1500, "d": 2, "k": 3, "rho": 0.5}],
  "mechanisms": ["SPL", "RSFD", "RSRFD", "CORR_RR"],
  "epsilons": [1, 2],
  "phase1_fractions": [0.1, 0.3],
  "repetitions": 5,
  "seed": 11,
  "record_timing": false
}"#;

#[test]
fn run_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_fixture(dir.path(), "cfg.json", CONFIG);
    let outputs: Vec<String> = [("a.csv", "1", None), ("b.csv", "2", None), ("c.csv", "1", Some("12"))]
        .iter()
        .map(|(name, workers, seed)| {
            let out = dir.path().join(name);
            let mut args = vec!["run", "--config", path_str(&cfg), "--out", path_str(&out), "--workers", workers];
            if let Some(s) = seed {
                args.extend(["--seed", s]);
            }
            let res = corr_rr(&args);
            assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
            fs::read_to_string(&out).unwrap()
        })
        .collect();
    assert_eq!(outputs[0].lines().next(), Some(CSV_HEADER));
    assert_eq!(outputs[0].lines().count(), 1 + 4 * 2 * 2);
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0], outputs[2]);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.meta.json")).unwrap()).unwrap();
    let amp = meta["amplified"][0]["amplified_epsilon"].as_f64().unwrap();
    assert!((amp - (2.0 * (1f64.exp() - 1.0) + 1.0).ln()).abs() < 1e-12);
}

#[test]
fn run_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_fixture(
        dir.path(),
        "cfg.json",
        r#"{"datasets":[{"kind":"synth","n":10,"d":2,"k":2,"rho":0.5}],"mechanisms":["CORR_RR"],"epsilons":[1],"phase1_fractions":[1.5]}"#,
    );
    let res = corr_rr(&["run", "--config", path_str(&cfg), "--out", path_str(&dir.path().join("o.csv"))]);
    assert!(!res.status.success());
}

#[test]
fn check_ldp_passes_for_every_mechanism() {
    for mech in ["SPL", "RSFD", "RSRFD", "CORR_RR", "CORR_RR_PHASE1"] {
        let res = corr_rr(&["check-ldp", "--mechanism", mech, "--epsilon", "1", "--d", "3", "--k", "2"]);
        assert!(res.status.success(), "{mech}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(stdout(&res).contains("PASS"), "{}", stdout(&res));
    }
    let res = corr_rr(&["check-ldp", "--mechanism", "RSRFD", "--epsilon", "0.5", "--d", "2", "--k", "4", "--prior", "0.7,0.1,0.1,0.1"]);
    assert!(stdout(&res).contains("PASS"));
    let res = corr_rr(&["check-ldp", "--mechanism", "CORR_RR", "--epsilon", "3", "--d", "2", "--k", "2", "--py", "1"]);
    assert!(stdout(&res).contains("PASS"));
}

#[test]
fn check_ldp_refuses_oversized_channel() {
    let res = corr_rr(&["check-ldp", "--mechanism", "SPL", "--epsilon", "1", "--d", "6", "--k", "10"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("enumeration limit"));
}

#[test]
fn pyopt_prints_optimum_and_endpoints() {
    let res = corr_rr(&["pyopt", "--fa", "0.3,0.7", "--fb", "0.6,0.4", "--epsilon", "1", "--n-prime", "9000"]);
    assert!(res.status.success());
    let text = stdout(&res);
    for key in ["p_y* =", "avg_mse(0)", "avg_mse(p_y*)", "avg_mse(1)"] {
        assert!(text.contains(key), "{text}");
    }
    let res = corr_rr(&["pyopt", "--fa", "0.3,0.7", "--fb", "0.6,0.4", "--epsilon", "1", "--n-prime", "9000", "--json"]);
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let (p, at_p, at0, at1) = (
        report["p_y"].as_f64().unwrap(),
        report["mse_at_opt"].as_f64().unwrap(),
        report["mse_at_0"].as_f64().unwrap(),
        report["mse_at_1"].as_f64().unwrap(),
    );
    assert!((0.0..=1.0).contains(&p));
    assert!(at_p <= at0 && at_p <= at1);
    let res = corr_rr(&["pyopt", "--fa", "0.3,0.7", "--fb", "0.2,0.3,0.5", "--epsilon", "1", "--n-prime", "10"]);
    assert!(!res.status.success());
}
