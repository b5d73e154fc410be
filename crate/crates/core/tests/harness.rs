use std::fs;
use std::path::Path;
use std::process::Command;

use sibre::agents::Budget;
use sibre::harness::{preset, read_curve_csv, run_experiment, run_transfer, Aggregate, Arm, EnvSpec, ExperimentConfig};

fn small(name: &str, budget: Budget) -> ExperimentConfig {
    let mut c = preset(name).unwrap();
    c.seeds = vec![4, 9];
    c.agent.budget = budget;
    if c.agent.num_envs > 2 {
        c.agent.num_envs = 2;
    }
    c
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv" || x == "toml") && !p.ends_with("meta.toml") {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    for (name, budget) in [
        ("frozenlake", Budget::Episodes(200)),
        ("cartpole_cont", Budget::Frames(3_000)),
        ("doorkey6", Budget::Frames(3_000)),
    ] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let c = small(name, budget);
        run_experiment(&c, a.path()).unwrap();
        run_experiment(&c, b.path()).unwrap();
        let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
        assert!(fa.len() >= 6, "{name}");
        assert_eq!(fa, fb, "{name}");
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn aggregates_rederive_from_seed_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = small("frozenlake", Budget::Episodes(150));
    run_experiment(&c, dir.path()).unwrap();
    for arm in ["baseline", "sibre"] {
        let curves: Vec<_> = c
            .seeds
            .iter()
            .map(|s| read_curve_csv(&dir.path().join(arm).join(format!("seed_{s}.csv"))).unwrap())
            .collect();
        let agg = Aggregate::read_csv(&dir.path().join(arm).join("aggregate.csv")).unwrap();
        assert_eq!(agg.rows.len(), 150);
        for (i, row) in agg.rows.iter().enumerate() {
            let rets: Vec<f64> = curves.iter().map(|c| c.ret[i]).collect();
            let (m, se) = mean_se(&rets);
            assert!((row.return_mean - m).abs() <= 1e-12 && (row.return_se - se).abs() <= 1e-12);
            match row.rho_mean {
                Some(r) => {
                    let rhos: Vec<f64> = curves.iter().map(|c| c.rho[i].unwrap()).collect();
                    let (m, se) = mean_se(&rhos);
                    assert!((r - m).abs() <= 1e-12 && (row.rho_se.unwrap() - se).abs() <= 1e-12);
                }
                None => assert_eq!(arm, "baseline"),
            }
        }
    }
}

fn tiny_transfer(stage2: u64) -> ExperimentConfig {
    let mut c = small("transfer_doorkey", Budget::Frames(2_000));
    let t = c.transfer.as_mut().unwrap();
    t.target_budget = Budget::Frames(stage2);
    t.target = EnvSpec::DoorKey { size: 8, turn_limit: 200 };
    c.environment = EnvSpec::DoorKey { size: 5, turn_limit: 100 };
    c
}

#[test]
fn transfer_carries_threshold_and_frame_axis() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_transfer(&tiny_transfer(1_500), dir.path()).unwrap();
    for (s1, s2) in out.stage1[&Arm::Sibre].iter().zip(&out.stage2[&Arm::Sibre]) {
        assert_eq!(s2.curve[0].rho, Some(s1.threshold.as_ref().unwrap().rho()));
        assert!(s2.curve[0].steps > s1.frames);
        assert_eq!(s2.frames, s1.frames + 1_500);
    }
    assert!(out.stage2[&Arm::Baseline]
        .iter()
        .all(|r| r.threshold.is_none() && r.curve.iter().all(|p| p.rho.is_none())));
    assert!(dir.path().join("stage2/sibre/aggregate.csv").exists());
    assert!(dir.path().join("checkpoints/sibre/seed_4_threshold.toml").exists());
}

#[test]
fn zero_stage_two_budget_returns_stage_one_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_transfer(&tiny_transfer(0), dir.path()).unwrap();
    assert!(out.stage2.is_empty());
    assert_eq!(out.stage1[&Arm::Sibre].len(), 2);
    assert!(!dir.path().join("stage2").exists());
}

fn sibre() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sibre"))
}

#[test]
fn cli_reports_errors_as_json_lines() {
    let out = sibre().args(["run", "--preset", "pong"]).output().unwrap();
    assert!(!out.status.success());
    let line = String::from_utf8(out.stderr).unwrap();
    assert!(line.trim().starts_with("{\"error\":{\"kind\":\"unknown_preset\""), "{line}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = 3").unwrap();
    let out = sibre().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("\"kind\":\"config\""));

    let out = sibre().args(["sweep", "--preset", "frozenlake", "--out"]).arg(dir.path()).output().unwrap();
    assert!(String::from_utf8(out.stderr).unwrap().contains("\"kind\":\"invalid_sweep\""));

    let out = sibre().args(["plot", "--out"]).arg(dir.path().join("nothing")).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn cli_runs_a_config_file_and_plots_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("lake.toml");
    fs::write(&config, small("frozenlake", Budget::Episodes(120)).to_toml().unwrap()).unwrap();
    let out_dir = dir.path().join("run");
    let status = sibre()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seeds", "0..3", "--out"])
        .arg(&out_dir)
        .env("SIBRE_WORKERS", "2")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("sibre/seed_2.csv").exists());
    let status = sibre().args(["plot", "--out"]).arg(&out_dir).status().unwrap();
    assert!(status.success());
    assert!(fs::read_to_string(out_dir.join("curves.svg")).unwrap().contains("<svg"));

    let status = sibre()
        .args(["sweep", "--config"])
        .arg(&config)
        .args(["--axis", "learning-rate", "--values", "0.3,0.01", "--out"])
        .arg(dir.path().join("sweep"))
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read_to_string(dir.path().join("sweep/summary.csv")).unwrap().lines().count(), 5);
}

#[test]
fn cli_verifies_threshold_dynamics() {
    let dir = tempfile::tempdir().unwrap();
    let out = sibre()
        .args(["verify-theorem", "--trials", "2000", "--updates", "20", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("dynamics_seed0_case2.csv").exists());
}
