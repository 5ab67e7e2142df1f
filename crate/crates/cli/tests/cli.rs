use std::process::Command;

use clap::Parser;
use serde_json::Value;

use sensel::generate::{generate_instance, KRule};
use sensel_cli::report::statistic;
use sensel_cli::{parse_graph, random_selections, run, Config, Format, KRuleArg, Report};

fn config(args: &[&str]) -> Config {
    Config::parse_from(std::iter::once("sensel").chain(args.iter().copied()))
}

fn column(report: &Report, name: &str) -> Vec<f64> {
    let j = report.column(name).unwrap();
    report.rows.iter().map(|r| r[j].as_f64().unwrap()).collect()
}

#[test]
fn oracle_compare_ratios_and_summary() {
    let cfg = config(&["--mode", "oracle-compare", "--n", "10", "--p", "3", "--instances", "50", "--criterion", "both"]);
    let report = run(&cfg).unwrap();
    assert_eq!(report.rows.len(), 50);
    for name in ["r_R-KL", "r_R-C"] {
        let r = column(&report, name);
        assert!(r.iter().all(|&v| v <= 1.0 + 1e-9));
        let j = report.column(name).unwrap();
        for (row, stat) in report.summary.iter().zip(["max", "avg", "min", "dev"]) {
            assert_eq!(row[0], Value::from(stat));
            assert_eq!(row[j].as_f64().unwrap().to_bits(), statistic(stat, &r).to_bits());
        }
    }
    // Drifting means: the mean-difference solvers are skipped.
    assert!(report.column("r_MD-KL").is_none());
}

#[test]
fn hardness_k4() {
    let report = run(&config(&["--mode", "hardness", "--graph", "K4", "--p", "2", "--criterion", "kl"])).unwrap();
    let row = &report.rows[0];
    assert!((row[report.column("optimum").unwrap()].as_f64().unwrap() - 0.142857).abs() < 1e-6);
    assert_eq!(row[report.column("clique_found").unwrap()], Value::Bool(true));
    let path = run(&config(&["--mode", "hardness", "--graph", "P5", "--p", "3"])).unwrap();
    assert!(path.rows.iter().all(|r| r[6] == Value::Bool(false) && r[7] == Value::Bool(false)));
}

#[test]
fn detection_eval_lists_every_selection() {
    let cfg = config(&["--mode", "detection-eval", "--n", "5", "--p", "2", "--trials", "4000", "--k-rule", "infinity"]);
    let report = run(&cfg).unwrap();
    let count = |kind: &str| report.rows.iter().filter(|r| r[0] == Value::from(kind)).count();
    assert_eq!(count("selection"), 10);
    assert_eq!(count("roc"), 10 * sensel::evaluation::ROC_THRESHOLDS);
    assert_eq!(count("envelope"), sensel_cli::ENVELOPE_POINTS);
    for kind in ["kl-best", "c-best", "bayes-best", "worst", "average"] {
        assert_eq!(count(kind), 1, "{kind}");
    }
    let pe = report.column("pe").unwrap();
    let get = |kind: &str| report.rows.iter().find(|r| r[0] == Value::from(kind)).unwrap()[pe].as_f64().unwrap();
    assert!(get("bayes-best") <= get("average") && get("average") <= get("worst"));
}

#[test]
fn reports_reproduce_from_their_embedded_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    let bin = env!("CARGO_BIN_EXE_sensel");
    let status = Command::new(bin)
        .args(["--mode", "detection-eval", "--n", "4", "--p", "2", "--trials", "2000", "--seed", "7"])
        .args(["--k-rule", "infinity", "--out"])
        .arg(&first)
        .status()
        .unwrap();
    assert!(status.success());
    let status = Command::new(bin).arg("--replay").arg(&first).arg("--out").arg(&second).status().unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(&first).unwrap(), std::fs::read_to_string(&second).unwrap());

    // JSON reports carry the same configuration.
    let cfg = config(&["--mode", "random-compare", "--n", "7", "--p", "2", "--instances", "2", "--random-budget", "15"]);
    let report = run(&cfg).unwrap();
    let mut json = Vec::new();
    report.write(Format::Json, &mut json).unwrap();
    let back = Report::embedded_config(std::str::from_utf8(&json).unwrap()).unwrap();
    assert_eq!(back, cfg);
    let again = run(&back).unwrap();
    for name in ["rho_R-KL", "rho_R-C", "budget"] {
        assert_eq!(column(&report, name), column(&again, name));
    }
}

#[test]
fn oracle_cap_failure_exits_nonzero() {
    let out = Command::new(env!("CARGO_BIN_EXE_sensel"))
        .args(["--mode", "oracle-compare", "--n", "30", "--p", "15", "--instances", "1", "--oracle-cap", "1000"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn mean_difference_requires_exact_means() {
    let err = run(&config(&["--mode", "solve", "--algorithm", "md", "--k-rule", "drift:0.15"])).unwrap_err();
    assert!(err.to_string().contains("exact means"));
}

#[test]
fn instance_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    let inst = generate_instance(6, 2, 3, KRule::Infinity).unwrap();
    std::fs::write(&path, inst.to_json()).unwrap();
    let cfg = config(&["--mode", "solve", "--instance", path.to_str().unwrap(), "--criterion", "kl"]);
    let report = run(&cfg).unwrap();
    assert_eq!(report.rows.len(), 2);
    let sel = report.column("selection").unwrap();
    assert_eq!(report.rows[0][sel].as_str().unwrap().split(' ').count(), 2);
}

#[test]
fn k_rule_text_round_trips() {
    for text in ["infinity", "drift:0.15", "paper-det:0.2", "explicit:3,4.5"] {
        let rule: KRuleArg = text.parse().unwrap();
        assert_eq!(rule.to_string(), text);
    }
    assert!("sideways".parse::<KRuleArg>().is_err());
    assert!(Config::try_parse_from(["sensel", "--p", "3", "--p-frac", "0.5"]).is_err());
    assert!(config(&["--n", "4", "--p", "5"]).validate().is_err());
}

#[test]
fn random_selections_respect_budget() {
    let all = random_selections(6, 2, 100, 1).unwrap();
    assert_eq!(all.len(), 15);
    let some = random_selections(6, 2, 10, 1).unwrap();
    assert_eq!(some.len(), 10);
    let mut keys: Vec<_> = some.iter().map(|s| s.indices().to_vec()).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 10);
    assert_eq!(random_selections(40, 5, 50, 2).unwrap().len(), 50);
}

#[test]
fn graphs_parse() {
    assert_eq!(parse_graph("K5").unwrap().edges().count(), 10);
    assert_eq!(parse_graph("4:1-2,3-4").unwrap().edges().count(), 2);
    assert!(parse_graph("Q3").is_err());
}

#[test]
fn sweep_reports_each_p() {
    let cfg = config(&["--mode", "sweep", "--n", "8", "--p", "3", "--instances", "2", "--k-rule", "infinity", "--criterion", "kl"]);
    let report = run(&cfg).unwrap();
    assert_eq!(report.rows.len(), 3 * 2);
}
