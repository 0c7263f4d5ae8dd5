use std::fs;
use std::path::Path;
use std::process::Command;

use irs_odrl::drl::AgentKind;
use irs_odrl::harness::commands::converged_window;
use irs_odrl::harness::{
    cmd_scalability, cmd_scaling_law, cmd_sweep_position, cmd_train, cmd_validate_solver,
    ExperimentConfig,
};

fn tiny() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.experiment.episodes = 3;
    c.experiment.repetitions = 2;
    c.system.m = 2;
    c.system.n = 4;
    c.system.episode_len = 10;
    c.agent.hidden = vec![16, 16];
    c.agent.batch = 8;
    c.agent.warmup = 8;
    c.agent.ao_rho_grid = 3;
    c
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn single_short_run_has_one_row_per_step() {
    let mut c = tiny();
    c.experiment.repetitions = 1;
    c.experiment.episodes = 1;
    c.system.episode_len = 5;
    let dir = tempfile::tempdir().unwrap();
    cmd_train(&c, dir.path()).unwrap();
    let (header, rows) = read_rows(&dir.path().join("od-ddpg_records.csv"));
    assert_eq!(header[0], "seed");
    assert_eq!(rows.len(), 5);
    assert!(!dir.path().join("od-ddpg_summary.csv").exists());
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn reruns_are_byte_identical() {
    let mut c = tiny();
    c.sweep.positions = vec![12.0, 16.0];
    c.solver.instances = 5;
    c.solver.restarts = 5;
    c.scaling_law.n_list = vec![2, 4];
    c.scaling_law.draws = 50;
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        for kind in [AgentKind::OdDdpg, AgentKind::MfDdpg, AgentKind::OdDqn] {
            let mut k = c.clone();
            k.experiment.agent = kind;
            cmd_train(&k, dir.path()).unwrap();
        }
        cmd_sweep_position(&c, dir.path()).unwrap();
        cmd_validate_solver(&c, dir.path()).unwrap();
        cmd_scaling_law(&c, dir.path()).unwrap();
        outputs.push((dir_bytes(dir.path()), dir));
    }
    assert_eq!(outputs[0].0.len(), 13);
    assert_eq!(outputs[0].0, outputs[1].0);
}

#[test]
fn summaries_match_an_independent_recomputation() {
    let c = tiny();
    let dir = tempfile::tempdir().unwrap();
    cmd_train(&c, dir.path()).unwrap();
    let (header, rows) = read_rows(&dir.path().join("od-ddpg_records.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (seed_c, ep_c, p_c) = (col("seed"), col("episode"), col("p_tx_w"));

    // per (seed, episode) mean transmit power, in file order
    let mut seeds: Vec<String> = Vec::new();
    let mut table: Vec<Vec<(f64, usize)>> = Vec::new();
    for r in &rows {
        let si = match seeds.iter().position(|s| *s == r[seed_c]) {
            Some(i) => i,
            None => {
                seeds.push(r[seed_c].clone());
                table.push(vec![(0.0, 0); c.experiment.episodes]);
                seeds.len() - 1
            }
        };
        let ep: usize = r[ep_c].parse().unwrap();
        let v: f64 = r[p_c].parse().unwrap();
        table[si][ep].0 += v;
        table[si][ep].1 += 1;
    }
    let nearest_rank = |vals: &mut Vec<f64>, p: f64| {
        vals.sort_by(f64::total_cmp);
        let rank = ((p / 100.0) * vals.len() as f64).ceil().max(1.0) as usize;
        vals[rank - 1]
    };

    let (sh, srows) = read_rows(&dir.path().join("od-ddpg_summary.csv"));
    assert_eq!(sh, ["metric", "x", "median", "p10", "p90", "variance", "mean_epoch_time_s"]);
    let ptx: Vec<&Vec<String>> = srows.iter().filter(|r| r[0] == "p_tx_w").collect();
    assert_eq!(ptx.len(), c.experiment.episodes);
    for (ep, row) in ptx.iter().enumerate() {
        let mut vals: Vec<f64> = table.iter().map(|t| t[ep].0 / t[ep].1 as f64).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        assert_eq!(row[1].parse::<f64>().unwrap(), ep as f64);
        assert_eq!(row[2].parse::<f64>().unwrap(), nearest_rank(&mut vals, 50.0));
        assert_eq!(row[3].parse::<f64>().unwrap(), nearest_rank(&mut vals, 10.0));
        assert_eq!(row[4].parse::<f64>().unwrap(), nearest_rank(&mut vals, 90.0));
        assert_eq!(row[5].parse::<f64>().unwrap(), var);
        assert_eq!(row[6], "");
    }

    let window = converged_window(c.experiment.episodes);
    let (_, crows) = read_rows(&dir.path().join("od-ddpg_converged.csv"));
    let conv = crows.iter().find(|r| r[0] == "p_tx_w").unwrap();
    let mut vals: Vec<f64> = rows
        .iter()
        .fold(vec![(0.0, 0usize); seeds.len()], |mut acc, r| {
            let ep: usize = r[ep_c].parse().unwrap();
            if window.contains(&ep) {
                let si = seeds.iter().position(|s| *s == r[seed_c]).unwrap();
                acc[si].0 += r[p_c].parse::<f64>().unwrap();
                acc[si].1 += 1;
            }
            acc
        })
        .into_iter()
        .map(|(s, n)| s / n as f64)
        .collect();
    assert_eq!(conv[2].parse::<f64>().unwrap(), nearest_rank(&mut vals, 50.0));
}

#[test]
fn sweep_single_position_gives_one_row_per_demand() {
    let mut c = tiny();
    c.experiment.episodes = 2;
    c.sweep.positions = vec![15.0];
    let dir = tempfile::tempdir().unwrap();
    let rep = cmd_sweep_position(&c, dir.path()).unwrap();
    assert_eq!(rep.rows.len(), 2);
    let (_, rows) = read_rows(&dir.path().join("sweep_position.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[1][0], "0.00002");
}

#[test]
fn scalability_single_size_gives_two_positive_rows() {
    let mut c = tiny();
    c.scalability.sizes = vec![[2, 4]];
    c.scalability.episodes = 2;
    c.scalability.ao_epochs = 5;
    let dir = tempfile::tempdir().unwrap();
    let rep = cmd_scalability(&c, dir.path()).unwrap();
    assert_eq!(rep.rows.len(), 2);
    for r in &rep.rows {
        assert!(r.summary.mean_epoch_time_s.unwrap() > 0.0);
        assert!(r.summary.p10 > 0.0);
    }
    let (_, rows) = read_rows(&dir.path().join("scalability.csv"));
    assert_eq!(rows.len(), 2);
    let (_, fit) = read_rows(&dir.path().join("scalability_fit.csv"));
    assert_eq!(fit.len(), 2);
}

#[test]
fn solver_validation_report() {
    let mut c = ExperimentConfig::default();
    c.solver.instances = 100;
    let dir = tempfile::tempdir().unwrap();
    let checks = cmd_validate_solver(&c, dir.path()).unwrap();
    assert_eq!(checks.len(), 100);
    let (_, rows) = read_rows(&dir.path().join("validate_solver.csv"));
    assert_eq!(rows.len(), 100);
    for ch in &checks {
        assert!(ch.rel_gap <= 0.01, "{ch:?}");
        assert!(ch.snr_slack >= -1e-9 && ch.harvest_slack >= -1e-9);
    }

    c.solver.harvest = false;
    c.solver.instances = 50;
    for ch in cmd_validate_solver(&c, dir.path()).unwrap() {
        assert!(ch.rel_gap.abs() <= 1e-9, "{ch:?}");
    }
}

#[test]
fn scaling_law_baseline_and_ratios() {
    let mut c = ExperimentConfig::default();
    c.scaling_law.n_list = vec![1, 2, 4, 8, 16];
    let dir = tempfile::tempdir().unwrap();
    let rows = cmd_scaling_law(&c, dir.path()).unwrap();
    assert!(rows[0].aligned_power > 0.0 && rows[0].aligned_ratio.is_none());
    for r in &rows[2..] {
        let a = r.aligned_ratio.unwrap();
        assert!(a > 3.0 && a < 4.5, "N={} ratio {a}", r.n);
        let b = r.random_ratio.unwrap();
        assert!(b > 1.6 && b < 2.4, "N={} random ratio {b}", r.n);
    }
}

#[test]
fn cli_reports_bad_config_and_succeeds_on_good_one() {
    let bin = env!("CARGO_BIN_EXE_irs-odrl");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[agent]\ntau = 2.0\n").unwrap();
    let out = Command::new(bin)
        .args(["train", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("agent") && err.contains("tau"), "{err}");

    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, "[system]\nfoo = 1\n").unwrap();
    let out = Command::new(bin)
        .args(["scaling-law", "--config"])
        .arg(&unknown)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));

    let good = dir.path().join("good.toml");
    fs::write(&good, "[scaling_law]\nn_list = [2, 4]\ndraws = 20\n").unwrap();
    let target = dir.path().join("out");
    let out = Command::new(bin)
        .args(["scaling-law", "--seed", "9", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&target)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("scaling_law.csv").exists());

    let out = Command::new(bin)
        .args(["train", "--agent", "ppo"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
