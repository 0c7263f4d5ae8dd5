//! Experiment commands. Each returns its results in memory and writes them
//! as CSV files under the output directory.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::channel::{sample_channels, ChannelView, Geometry};
use crate::drl::{run_training, AgentKind, TrainingOutput};
use crate::env::{composite_channel, Env, SystemConfig};
use crate::error::{validation, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::stats::{mean, polyfit, spearman, SummaryRow};
use crate::inneropt::oracle::{dense_grid_m2, random_restart_descent, PowerInstance};
use crate::inneropt::{align_phases_to, ao_baseline, solve_active};
use crate::numerics::{CVec, RngStream, C64};

/// Stream id of every environment's channel generator.
pub const CHANNEL_STREAM: u64 = 1;
const SOLVER_STREAM: u64 = 40;
const SCALING_STREAM: u64 = 41;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    PTx,
    Rho,
    Reward,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::PTx, Metric::Rho, Metric::Reward];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::PTx => "p_tx_w",
            Metric::Rho => "rho",
            Metric::Reward => "reward",
        }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn summary_fields(r: &SummaryRow) -> Vec<String> {
    vec![
        fmt_f(r.x),
        fmt_f(r.median),
        fmt_f(r.p10),
        fmt_f(r.p90),
        fmt_f(r.variance),
        fmt_opt(r.mean_epoch_time_s),
    ]
}

const SUMMARY_HEADER: [&str; 6] = ["x", "median", "p10", "p90", "variance", "mean_epoch_time_s"];

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

/// Episodes forming the converged window: the final 10%, at least one.
pub fn converged_window(episodes: usize) -> std::ops::Range<usize> {
    let len = episodes.div_ceil(10).max(1);
    episodes - len..episodes
}

/// Per-episode mean of `metric` for one run.
pub fn episode_means(run: &TrainingOutput, metric: Metric) -> Vec<f64> {
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for r in &run.records {
        if sums.len() <= r.episode {
            sums.resize(r.episode + 1, (0.0, 0));
        }
        let v = match metric {
            Metric::PTx => r.p_tx_w,
            Metric::Rho => r.rho,
            Metric::Reward => r.reward_raw,
        };
        sums[r.episode].0 += v;
        sums[r.episode].1 += 1;
    }
    sums.into_iter().map(|(s, n)| s / n as f64).collect()
}

/// Mean of `metric` over the episodes in `window`, one value per run.
pub fn window_means(runs: &[TrainingOutput], metric: Metric, window: std::ops::Range<usize>) -> Vec<f64> {
    runs.iter()
        .map(|run| {
            let mut s = 0.0;
            let mut n = 0;
            for r in run.records.iter().filter(|r| window.contains(&r.episode)) {
                s += match metric {
                    Metric::PTx => r.p_tx_w,
                    Metric::Rho => r.rho,
                    Metric::Reward => r.reward_raw,
                };
                n += 1;
            }
            s / n as f64
        })
        .collect()
}

/// Independent trainings with seeds `base_seed + i`, in seed order.
pub fn train_runs(cfg: &ExperimentConfig, kind: AgentKind) -> Result<Vec<TrainingOutput>> {
    let e = &cfg.experiment;
    (0..e.repetitions)
        .into_par_iter()
        .map(|i| {
            let seed = e.base_seed + i as u64;
            let mut env = Env::new(
                cfg.system.clone(),
                cfg.geometry,
                cfg.channel,
                RngStream::new(seed, CHANNEL_STREAM),
            )?;
            run_training(kind, &mut env, &cfg.agent, e.episodes, seed)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub kind: AgentKind,
    pub runs: Vec<TrainingOutput>,
    /// Per-episode summaries across repetitions, per metric.
    pub summary: Vec<(Metric, SummaryRow)>,
    /// Converged-window summaries, per metric.
    pub converged: Vec<(Metric, SummaryRow)>,
}

pub const RECORD_HEADER: [&str; 8] = [
    "seed",
    "episode",
    "step",
    "reward_raw",
    "p_tx_w",
    "rho",
    "feasible",
    "executed_was_optimized",
];

/// Train `experiment.agent`. Writes `<agent>_records.csv` and, with at
/// least two repetitions, `<agent>_summary.csv` and `<agent>_converged.csv`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainReport> {
    cfg.validate()?;
    prepare_out(out)?;
    let kind = cfg.experiment.agent;
    let runs = train_runs(cfg, kind)?;
    let episodes = cfg.experiment.episodes;

    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for run in &runs {
        for r in &run.records {
            rows.push(vec![
                r.seed.to_string(),
                r.episode.to_string(),
                r.step.to_string(),
                fmt_f(r.reward_raw),
                fmt_f(r.p_tx_w),
                fmt_f(r.rho),
                r.feasible.to_string(),
                r.executed_was_optimized.to_string(),
            ]);
            timing.push(vec![
                r.seed.to_string(),
                r.episode.to_string(),
                r.step.to_string(),
                fmt_f(r.epoch_wall_time_s),
            ]);
        }
    }
    write_csv(&out.join(format!("{kind}_records.csv")), &RECORD_HEADER, &rows)?;
    if cfg.experiment.record_timing {
        write_csv(
            &out.join(format!("{kind}_timing.csv")),
            &["seed", "episode", "step", "epoch_wall_time_s"],
            &timing,
        )?;
    }

    let mut summary = Vec::new();
    let mut converged = Vec::new();
    if runs.len() >= 2 {
        for metric in Metric::ALL {
            let per_run: Vec<Vec<f64>> = runs.iter().map(|r| episode_means(r, metric)).collect();
            for ep in 0..episodes {
                let vals: Vec<f64> = per_run.iter().map(|v| v[ep]).collect();
                summary.push((metric, SummaryRow::from_values(ep as f64, &vals)?));
            }
            let window = converged_window(episodes);
            let start = window.start;
            let vals = window_means(&runs, metric, window);
            converged.push((metric, SummaryRow::from_values(start as f64, &vals)?));
        }
        let mut header = vec!["metric"];
        header.extend(SUMMARY_HEADER);
        let to_rows = |v: &[(Metric, SummaryRow)]| -> Vec<Vec<String>> {
            v.iter()
                .map(|(m, r)| {
                    let mut row = vec![m.as_str().to_string()];
                    row.extend(summary_fields(r));
                    row
                })
                .collect()
        };
        write_csv(&out.join(format!("{kind}_summary.csv")), &header, &to_rows(&summary))?;
        write_csv(&out.join(format!("{kind}_converged.csv")), &header, &to_rows(&converged))?;
    }
    Ok(TrainReport {
        kind,
        runs,
        summary,
        converged,
    })
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    /// `(p_irs_w, row)` with `row.x` the IRS position.
    pub rows: Vec<(f64, SummaryRow)>,
    /// `(p_irs_w, Spearman correlation of median p_tx with position)`.
    pub trends: Vec<(f64, f64)>,
}

/// Converged transmit power versus IRS position, for every demand level.
/// Writes `sweep_position.csv` and `sweep_trend.csv`.
pub fn cmd_sweep_position(cfg: &ExperimentConfig, out: &Path) -> Result<SweepReport> {
    cfg.validate()?;
    if cfg.experiment.repetitions < 2 {
        return Err(validation("sweep-position needs at least 2 repetitions"));
    }
    prepare_out(out)?;
    let sw = &cfg.sweep;
    let mut rows = Vec::new();
    let mut trends = Vec::new();
    for &p_irs in &sw.p_irs_levels {
        let mut medians = Vec::new();
        for &x in &sw.positions {
            let mut c = cfg.clone();
            c.geometry = Geometry::planar(cfg.geometry.d_ap_user, x, sw.irs_height)?;
            c.system.p_irs_w = p_irs;
            let runs = train_runs(&c, cfg.experiment.agent)?;
            let window = converged_window(cfg.experiment.episodes);
            let vals = window_means(&runs, Metric::PTx, window);
            let row = SummaryRow::from_values(x, &vals)?;
            medians.push(row.median);
            rows.push((p_irs, row));
        }
        let trend = if sw.positions.len() >= 2 {
            spearman(&sw.positions, &medians)?
        } else {
            f64::NAN
        };
        trends.push((p_irs, trend));
    }
    let mut header = vec!["p_irs_w"];
    header.extend(SUMMARY_HEADER);
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(p, r)| {
            let mut row = vec![fmt_f(*p)];
            row.extend(summary_fields(r));
            row
        })
        .collect();
    write_csv(&out.join("sweep_position.csv"), &header, &csv_rows)?;
    let trend_rows: Vec<Vec<String>> = trends
        .iter()
        .map(|(p, s)| vec![fmt_f(*p), fmt_f(*s)])
        .collect();
    write_csv(&out.join("sweep_trend.csv"), &["p_irs_w", "spearman"], &trend_rows)?;
    Ok(SweepReport { rows, trends })
}

#[derive(Clone, Debug)]
pub struct ScalabilityRow {
    pub method: &'static str,
    pub m: usize,
    pub n: usize,
    /// Statistics of per-epoch wall time; `x = M·N`.
    pub summary: SummaryRow,
}

#[derive(Clone, Debug)]
pub struct ScalabilityReport {
    pub rows: Vec<ScalabilityRow>,
    /// `(method, coefficients)` of the fit of mean epoch time against `M·N`.
    pub fits: Vec<(&'static str, Vec<f64>)>,
}

impl ScalabilityReport {
    pub fn mean_time(&self, method: &str, m: usize, n: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.m == m && r.n == n)
            .and_then(|r| r.summary.mean_epoch_time_s)
    }
}

pub const OD_DDPG: &str = "od-ddpg";
pub const AO: &str = "ao";

fn time_row(method: &'static str, m: usize, n: usize, times: &[f64]) -> Result<ScalabilityRow> {
    let mut summary = SummaryRow::from_values((m * n) as f64, times)?;
    summary.mean_epoch_time_s = Some(mean(times));
    Ok(ScalabilityRow {
        method,
        m,
        n,
        summary,
    })
}

/// Per-decision-epoch wall time of od-ddpg (after replay warmup) and of the
/// AO baseline, on the same channel sequence. Writes `scalability.csv` and
/// `scalability_fit.csv`. Timings are wall-clock measurements.
pub fn cmd_scalability(cfg: &ExperimentConfig, out: &Path) -> Result<ScalabilityReport> {
    cfg.validate()?;
    prepare_out(out)?;
    let sc = &cfg.scalability;
    let seed = cfg.experiment.base_seed;
    let mut rows = Vec::new();
    for &[m, n] in &sc.sizes {
        let system = SystemConfig {
            m,
            n,
            ..cfg.system.clone()
        };
        let mut env = Env::new(
            system.clone(),
            cfg.geometry,
            cfg.channel,
            RngStream::new(seed, CHANNEL_STREAM),
        )?;
        let run = run_training(AgentKind::OdDdpg, &mut env, &cfg.agent, sc.episodes, seed)?;
        let times: Vec<f64> = run
            .records
            .iter()
            .skip(cfg.agent.warmup)
            .map(|r| r.epoch_wall_time_s)
            .collect();
        if times.len() < 2 {
            return Err(validation(
                "scalability.episodes too small to time any epoch past replay warmup",
            ));
        }
        rows.push(time_row(OD_DDPG, m, n, &times)?);

        let mut env = Env::new(
            system.clone(),
            cfg.geometry,
            cfg.channel,
            RngStream::new(seed, CHANNEL_STREAM),
        )?;
        env.reset()?;
        let mut ao_times = Vec::with_capacity(sc.ao_epochs);
        for _ in 0..sc.ao_epochs {
            if env.is_done() {
                env.reset()?;
            }
            let ch = env.channels().expect("reset above");
            let ao = ao_baseline(ch, &system, cfg.agent.ao_rho_grid)?;
            ao_times.push(ao.wall_time_s);
            env.step(&ao.solution.action())?;
        }
        if ao_times.len() == 1 {
            ao_times.push(ao_times[0]);
        }
        rows.push(time_row(AO, m, n, &ao_times)?);
    }

    let mut fits = Vec::new();
    for method in [OD_DDPG, AO] {
        let pts: Vec<&ScalabilityRow> = rows.iter().filter(|r| r.method == method).collect();
        let x: Vec<f64> = pts.iter().map(|r| r.summary.x).collect();
        let y: Vec<f64> = pts.iter().map(|r| r.summary.mean_epoch_time_s.unwrap()).collect();
        let mut distinct = x.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let degree = sc.fit_degree.min(distinct.len() - 1);
        fits.push((method, polyfit(&x, &y, degree)?));
    }

    let mut header = vec!["method", "m", "n"];
    header.extend(SUMMARY_HEADER);
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.method.to_string(), r.m.to_string(), r.n.to_string()];
            row.extend(summary_fields(&r.summary));
            row
        })
        .collect();
    write_csv(&out.join("scalability.csv"), &header, &csv_rows)?;
    let mut fit_rows = Vec::new();
    for (method, c) in &fits {
        for (p, v) in c.iter().enumerate() {
            fit_rows.push(vec![method.to_string(), p.to_string(), fmt_f(*v)]);
        }
    }
    write_csv(&out.join("scalability_fit.csv"), &["method", "power", "coefficient"], &fit_rows)?;
    Ok(ScalabilityReport { rows, fits })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverCheck {
    pub instance: usize,
    pub solver_p: f64,
    pub oracle_p: f64,
    /// `solver / oracle − 1`; negative when the solver beats the oracle.
    pub rel_gap: f64,
    pub snr_slack: f64,
    pub harvest_slack: f64,
    pub feasible: bool,
}

/// Compare `solve_active` with an independent oracle on random instances.
/// Writes `validate_solver.csv`, one row per instance.
pub fn cmd_validate_solver(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SolverCheck>> {
    cfg.validate()?;
    prepare_out(out)?;
    let so = &cfg.solver;
    let mut rng = RngStream::new(cfg.experiment.base_seed, SOLVER_STREAM);
    let mut checks = Vec::with_capacity(so.instances);
    for instance in 0..so.instances {
        let inst = if so.harvest {
            PowerInstance::random_both_active(&mut rng, so.m, so.n)
        } else {
            PowerInstance::random_snr_only(&mut rng, so.m, so.n)
        };
        let sys = inst.system_config();
        let sol = solve_active(&inst.g, &inst.h, 0.0, Vec::new(), &sys)?;
        let oracle_p = if !so.harvest {
            inst.c1 / inst.g.norm_sqr()
        } else if so.m == 2 {
            dense_grid_m2(&inst, so.grid_points)
        } else {
            random_restart_descent(&inst, so.restarts, &mut rng)
        };
        let snr = inst.g.dot(&sol.w).norm_sqr();
        let harvest = inst.h.mul_vec(&sol.w).norm_sqr();
        checks.push(SolverCheck {
            instance,
            solver_p: sol.p_tx_w,
            oracle_p,
            rel_gap: sol.p_tx_w / oracle_p - 1.0,
            snr_slack: snr / inst.c1 - 1.0,
            harvest_slack: if inst.c2 > 0.0 { harvest / inst.c2 - 1.0 } else { f64::INFINITY },
            feasible: sol.feasible,
        });
    }
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.instance.to_string(),
                fmt_f(c.solver_p),
                fmt_f(c.oracle_p),
                fmt_f(c.rel_gap),
                fmt_f(c.snr_slack),
                fmt_f(c.harvest_slack),
                c.feasible.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("validate_solver.csv"),
        &["instance", "solver_p_w", "oracle_p_w", "rel_gap", "snr_slack", "harvest_slack", "feasible"],
        &rows,
    )?;
    Ok(checks)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub aligned_power: f64,
    pub random_power: f64,
    /// Ratio to the previous N in the list.
    pub aligned_ratio: Option<f64>,
    pub random_ratio: Option<f64>,
}

fn received_power(view: ChannelView<'_>, theta: &[f64], w: &CVec) -> f64 {
    composite_channel(view, theta, 1.0).dot(w).norm_sqr()
}

/// Mean reflected-only received power versus N, with aligned and with
/// random phases. Writes `scaling_law.csv`.
pub fn cmd_scaling_law(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ScalingRow>> {
    cfg.validate()?;
    prepare_out(out)?;
    let sl = &cfg.scaling_law;
    let m = cfg.system.m;
    let w: CVec = (0..m)
        .map(|_| C64::new((cfg.system.p_max_w / m as f64).sqrt(), 0.0))
        .collect();
    let zero = CVec::zeros(m);
    let mut rng = RngStream::new(cfg.experiment.base_seed, SCALING_STREAM);
    let mut rows: Vec<ScalingRow> = Vec::new();
    for &n in &sl.n_list {
        let mut aligned = 0.0;
        let mut random = 0.0;
        for _ in 0..sl.draws {
            let ch = sample_channels(&cfg.geometry, &cfg.channel, m, n, &mut rng)?;
            let view = ChannelView {
                h_d: &zero,
                h: &ch.h,
                h_r: &ch.h_r,
            };
            let theta = align_phases_to(view, &w);
            aligned += received_power(view, &theta, &w);
            let rand_theta: Vec<f64> = (0..n).map(|_| TAU * rng.uniform()).collect();
            random += received_power(view, &rand_theta, &w);
        }
        let aligned_power = aligned / sl.draws as f64;
        let random_power = random / sl.draws as f64;
        let prev = rows.last();
        rows.push(ScalingRow {
            n,
            aligned_power,
            random_power,
            aligned_ratio: prev.map(|p| aligned_power / p.aligned_power),
            random_ratio: prev.map(|p| random_power / p.random_power),
        });
    }
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt_f(r.aligned_power),
                fmt_f(r.random_power),
                fmt_opt(r.aligned_ratio),
                fmt_opt(r.random_ratio),
            ]
        })
        .collect();
    write_csv(
        &out.join("scaling_law.csv"),
        &["n", "aligned_power_w", "random_power_w", "aligned_ratio", "random_ratio"],
        &csv_rows,
    )?;
    Ok(rows)
}

/// Output directory: the override when given, else the configured one.
pub fn output_dir(cfg: &ExperimentConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.experiment.output.clone())
}
