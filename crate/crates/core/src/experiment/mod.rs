//! Staged experiment runner: data preparation, predictor, agent and
//! estimator training, evaluation, and the artifacts of a run directory.

pub mod config;

pub use config::{EstimatorKind, ExperimentConfig, PolicyKind, PredictorKind, Preset, SignalVar};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controller::{state_dim, DrqnAgent, DrqnPolicy, Policy, UniformPolicy};
use crate::data::{load_csv, split_locations, EpisodeInstance, Normalizer, RawDataset};
use crate::error::{Error, Result};
use crate::estimator::{train_estimator, CollectedProfile, Estimator, EstimatorReport};
use crate::exec::{derive_seed, Execution};
use crate::metrics::{MetricReport, CSV_HEADER};
use crate::neural::checkpoint::save_file;
use crate::predictor::lstm::{train_predictor, PredictorReport};
use crate::predictor::Predictor;
use crate::sim::{
    evaluate_configuration, run_episode, run_training_validated, EpisodeConfig, EpisodeLog, TrainingRow,
    TRAINING_LOG_HEADER,
};
use config::stage;

/// Normalized episodes of the three partitions.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub normalizer: Normalizer,
    pub train: Vec<EpisodeInstance>,
    pub val: Vec<EpisodeInstance>,
    pub test: Vec<EpisodeInstance>,
    /// Variance of the normalized training values.
    pub train_variance: f64,
}

fn cap(ds: RawDataset, n: usize) -> RawDataset {
    if n == 0 || n >= ds.num_locations() {
        ds
    } else {
        ds.truncate_locations(n)
    }
}

pub fn prepare_data(ds: &RawDataset, cfg: &ExperimentConfig, exec: Execution) -> Result<PreparedData> {
    let (train, val, test) = split_locations(ds, &cfg.split_spec())?;
    let train = cap(train, cfg.train_locations);
    let val = cap(val, cfg.val_locations);
    let test = cap(test, cfg.test_locations);
    let normalizer = Normalizer::fit(&train)?;

    let episodes = |part: &RawDataset, what: &str| -> Result<Vec<EpisodeInstance>> {
        let eps: Vec<EpisodeInstance> = part
            .episodes(exec)
            .into_iter()
            .filter(|ep| cfg.episodes_per_location == 0 || ep.window < cfg.episodes_per_location)
            .map(|ep| normalizer.apply_episode(&ep))
            .collect();
        if eps.is_empty() {
            return Err(Error::Structure(format!("the {what} partition yields no episodes")));
        }
        Ok(eps)
    };
    let train_eps = episodes(&train, "training")?;
    let val_eps = episodes(&val, "validation")?;
    let test_eps = episodes(&test, "test")?;

    let values: Vec<f64> = train.series.iter().flatten().map(|&v| normalizer.apply(v)).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let train_variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;

    Ok(PreparedData {
        normalizer,
        train: train_eps,
        val: val_eps,
        test: test_eps,
        train_variance,
    })
}

pub fn build_predictor(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    exec: Execution,
) -> Result<(Predictor, Option<PredictorReport>)> {
    Ok(match cfg.predictor {
        PredictorKind::Lstm => {
            let (p, report) = train_predictor(&data.train, &data.val, &cfg.predictor_config(), exec)?;
            log::info!(
                "predictor: validation RMSE {:.5} -> {:.5} (best epoch {:?})",
                report.initial_val_rmse,
                report.best_val_rmse,
                report.best_epoch
            );
            (Predictor::Lstm(p), Some(report))
        }
        PredictorKind::ArKalman => (Predictor::ArKalman, None),
        PredictorKind::None => (Predictor::Persistence, None),
    })
}

pub fn build_agent(
    cfg: &ExperimentConfig,
    predictor: &Predictor,
    data: &PreparedData,
    exec: Execution,
) -> Result<(DrqnAgent, Vec<TrainingRow>, Vec<(usize, f64)>)> {
    let mut agent = DrqnAgent::new(state_dim(cfg.k), cfg.drqn_config());
    let (rows, validation) = run_training_validated(
        &mut agent,
        predictor,
        &data.train,
        &data.val,
        &cfg.episode_config(),
        &cfg.training_config(),
        exec,
    )?;
    if let Some(last) = rows.len().checked_sub(1) {
        let tail = &rows[last.saturating_sub(49)..];
        let mean = tail.iter().map(|r| r.total_return).sum::<f64>() / tail.len() as f64;
        log::info!(
            "agent: {} episodes, mean return over the last {} {:.4}",
            rows.len(),
            tail.len(),
            mean
        );
    }
    Ok((agent, rows, validation))
}

/// The evaluation-time policy: greedy DRQN or uniform.
pub fn make_policy<'a>(cfg: &ExperimentConfig, agent: Option<&'a DrqnAgent>) -> Result<Box<dyn Policy + Sync + 'a>> {
    match (cfg.policy, agent) {
        (PolicyKind::Uniform, _) => Ok(Box::new(UniformPolicy {
            interval: cfg.episode_config().uniform_interval(),
            horizon: cfg.horizon,
        })),
        (PolicyKind::Drqn, Some(a)) => Ok(Box::new(DrqnPolicy {
            net: &a.online,
            epsilon: 0.0,
            seq_len: cfg.seq_len,
        })),
        (PolicyKind::Drqn, None) => Err(Error::Usage("drqn policy needs a trained agent".into())),
    }
}

/// Profiles collected by running `policy` over `episodes`.
pub fn collect_profiles(
    episodes: &[EpisodeInstance],
    predictor: &Predictor,
    policy: &(dyn Policy + Sync),
    ecfg: &EpisodeConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<CollectedProfile>> {
    let idx: Vec<usize> = (0..episodes.len()).collect();
    exec.try_map(&idx, |&i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        run_episode(&episodes[i], predictor, policy, ecfg, &mut rng).map(|log| log.profile)
    })
}

pub fn build_estimator(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    predictor: &Predictor,
    policy: &(dyn Policy + Sync),
    exec: Execution,
) -> Result<(Estimator, Option<EstimatorReport>)> {
    Ok(match cfg.estimator {
        EstimatorKind::None => (Estimator::None, None),
        EstimatorKind::Gpr => (Estimator::Gpr(cfg.gpr_params(data.train_variance)), None),
        EstimatorKind::Lstm => {
            let ecfg = cfg.episode_config();
            let train_p = collect_profiles(
                &data.train,
                predictor,
                policy,
                &ecfg,
                derive_seed(cfg.seed, stage::PROFILES_TRAIN),
                exec,
            )?;
            let val_p = collect_profiles(
                &data.val,
                predictor,
                policy,
                &ecfg,
                derive_seed(cfg.seed, stage::PROFILES_VAL),
                exec,
            )?;
            let train_t: Vec<Vec<f64>> = data.train.iter().map(|e| e.target.clone()).collect();
            let val_t: Vec<Vec<f64>> = data.val.iter().map(|e| e.target.clone()).collect();
            let (est, report) = train_estimator((&train_p, &train_t), (&val_p, &val_t), &cfg.estimator_config(), exec)?;
            log::info!(
                "estimator: validation RMSE {:.5} (profile) -> {:.5} (best epoch {:?})",
                report.profile_val_rmse,
                report.best_val_rmse,
                report.best_epoch
            );
            (Estimator::Lstm(est), Some(report))
        }
    })
}

/// Observation counts by day of the horizon (rows) and hour of day
/// (columns). Only agent-chosen observations count, so `t = 0` is skipped.
pub fn action_histogram(logs: &[EpisodeLog]) -> [[usize; 24]; 7] {
    let mut h = [[0usize; 24]; 7];
    for log in logs {
        for &t in &log.observation_times {
            if t == 0 {
                continue;
            }
            let day = (t / 24).min(6);
            h[day][log.profile.hour_at(t) as usize] += 1;
        }
    }
    h
}

/// Mean agent-chosen observations per episode on each day.
pub fn observations_per_day(logs: &[EpisodeLog]) -> [f64; 7] {
    let h = action_histogram(logs);
    let n = logs.len().max(1) as f64;
    let mut out = [0.0; 7];
    for (o, row) in out.iter_mut().zip(&h) {
        *o = row.iter().sum::<usize>() as f64 / n;
    }
    out
}

pub fn histogram_csv(logs: &[EpisodeLog]) -> String {
    let h = action_histogram(logs);
    let n = logs.len().max(1) as f64;
    let mut s = String::from("day");
    for hour in 0..24 {
        let _ = write!(s, ",h{hour:02}");
    }
    s.push_str(",total,mean_per_episode\n");
    for (d, row) in h.iter().enumerate() {
        let _ = write!(s, "{}", d + 1);
        for c in row {
            let _ = write!(s, ",{c}");
        }
        let total: usize = row.iter().sum();
        let _ = writeln!(s, ",{total},{:.4}", total as f64 / n);
    }
    s
}

pub const PLOT_HEADER: &str = "t,gt,profile,estimate,observed_flag";

/// One episode's overlay in original units: ground truth, collected
/// profile, final estimate and the observation flag.
pub fn emit_plot_data(log: &EpisodeLog, ground_truth: &[f64], estimate: &[f64], normalizer: &Normalizer) -> String {
    let mut s = String::from(PLOT_HEADER);
    s.push('\n');
    for t in 0..log.profile.values.len() {
        let _ = writeln!(
            s,
            "{t},{:.6},{:.6},{:.6},{}",
            normalizer.invert(ground_truth[t]),
            normalizer.invert(log.profile.values[t]),
            normalizer.invert(estimate[t]),
            u8::from(log.profile.observed[t])
        );
    }
    s
}

/// Step log of every test episode in original units.
fn episodes_csv(logs: &[EpisodeLog], normalizer: &Normalizer) -> String {
    let mut s = String::from("episode,location,window,t,observed,value,forecast,reward\n");
    for (i, log) in logs.iter().enumerate() {
        let mut rewards = vec![None; log.profile.values.len()];
        for ((t, _), r) in log.decisions.iter().zip(&log.rewards) {
            rewards[*t] = Some(*r);
        }
        for t in 0..log.profile.values.len() {
            let _ = write!(
                s,
                "{i},{},{},{t},{},{:.6},{:.6},",
                log.location_id,
                log.window,
                u8::from(log.profile.observed[t]),
                normalizer.invert(log.profile.values[t]),
                normalizer.invert(log.forecasts[t])
            );
            if let Some(r) = rewards[t] {
                let _ = write!(s, "{r:.6}");
            }
            s.push('\n');
        }
    }
    s
}

fn estimates_csv(logs: &[EpisodeLog], truths: &[EpisodeInstance], estimates: &[Vec<f64>], n: &Normalizer) -> String {
    let mut s = format!("episode,{PLOT_HEADER}\n");
    for (i, ((log, ep), est)) in logs.iter().zip(truths).zip(estimates).enumerate() {
        for line in emit_plot_data(log, &ep.target, est, n).lines().skip(1) {
            let _ = writeln!(s, "{i},{line}");
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub name: String,
    pub out: PathBuf,
    pub report: MetricReport,
    /// Stages that trained a network.
    pub trained: Vec<&'static str>,
    pub observations_per_day: [f64; 7],
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::File {
        path: path.into(),
        msg: e.to_string(),
    })
}

pub fn load_dataset(path: &Path) -> Result<RawDataset> {
    if !path.is_file() {
        return Err(Error::File {
            path: path.into(),
            msg: "data file not found".into(),
        });
    }
    load_csv(path)
}

/// Train every stage the configuration needs, evaluate on the test
/// partition and write the run directory.
pub fn run(cfg: &ExperimentConfig, exec: Execution) -> Result<RunSummary> {
    cfg.validate()?;
    let ds = load_dataset(&cfg.data)?;
    let data = prepare_data(&ds, cfg, exec)?;
    let out = cfg.out.clone();
    fs::create_dir_all(&out).map_err(|e| Error::File {
        path: out.clone(),
        msg: e.to_string(),
    })?;
    write(&out.join("config.txt"), &cfg.to_text())?;
    log::info!(
        "data: {} train, {} val, {} test episodes",
        data.train.len(),
        data.val.len(),
        data.test.len()
    );

    let mut trained = Vec::new();
    let (predictor, p_report) = build_predictor(cfg, &data, exec)?;
    if let (Predictor::Lstm(p), Some(r)) = (&predictor, &p_report) {
        trained.push("predictor");
        save_file(&p.net, &p.meta(), out.join("predictor.ckpt"))?;
        let mut s = String::from("epoch,p_tf,train_loss,val_rmse\n");
        let _ = writeln!(s, "0,,,{:.6}", r.initial_val_rmse);
        for e in &r.epochs {
            let _ = writeln!(s, "{},{:.4},{:.6},{:.6}", e.epoch + 1, e.p_tf, e.train_loss, e.val_rmse);
        }
        write(&out.join("predictor_training.csv"), &s)?;
    }

    let agent = if cfg.policy == PolicyKind::Drqn {
        let (agent, rows, validation) = build_agent(cfg, &predictor, &data, exec)?;
        trained.push("agent");
        save_file(&agent.online, &agent.meta(), out.join("drqn.ckpt"))?;
        let mut s = format!("{TRAINING_LOG_HEADER}\n");
        for r in &rows {
            let _ = writeln!(s, "{}", r.to_csv_row());
        }
        write(&out.join("drqn_training.csv"), &s)?;
        let mut s = String::from("episode,val_return\n");
        for (e, r) in &validation {
            let _ = writeln!(s, "{e},{r:.6}");
        }
        write(&out.join("drqn_validation.csv"), &s)?;
        Some(agent)
    } else {
        None
    };
    let policy = make_policy(cfg, agent.as_ref())?;

    let (estimator, e_report) = build_estimator(cfg, &data, &predictor, policy.as_ref(), exec)?;
    if let (Estimator::Lstm(e), Some(r)) = (&estimator, &e_report) {
        trained.push("estimator");
        save_file(&e.net, &e.meta(), out.join("estimator.ckpt"))?;
        let mut s = String::from("epoch,train_loss,val_rmse\n");
        let _ = writeln!(s, "0,,{:.6}", r.profile_val_rmse);
        for (i, (l, v)) in r.train_loss.iter().zip(&r.val_rmse).enumerate() {
            let _ = writeln!(s, "{},{l:.6},{v:.6}", i + 1);
        }
        write(&out.join("estimator_training.csv"), &s)?;
    }

    let eval = evaluate_configuration(
        &data.test,
        &predictor,
        policy.as_ref(),
        &estimator,
        &cfg.episode_config(),
        &data.normalizer,
        derive_seed(cfg.seed, stage::EVAL),
        exec,
    )?;
    let name = cfg.config_name();
    write(
        &out.join("metrics.csv"),
        &format!("{CSV_HEADER}\n{}\n", eval.report.to_csv_row(&name)),
    )?;
    write(
        &out.join("metrics.txt"),
        &format!("config={name}\n{}", eval.report.to_key_values()),
    )?;
    write(&out.join("episodes.csv"), &episodes_csv(&eval.logs, &data.normalizer))?;
    write(
        &out.join("estimates.csv"),
        &estimates_csv(&eval.logs, &data.test, &eval.estimates, &data.normalizer),
    )?;
    write(&out.join("action_histogram.csv"), &histogram_csv(&eval.logs))?;

    Ok(RunSummary {
        name,
        out,
        report: eval.report,
        trained,
        observations_per_day: observations_per_day(&eval.logs),
    })
}

pub fn read_metrics(run_dir: &Path) -> Result<(String, MetricReport)> {
    let path = run_dir.join("metrics.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::File {
        path: run_dir.into(),
        msg: format!("cannot read metrics.csv ({e})"),
    })?;
    let row = text.lines().nth(1).ok_or_else(|| Error::File {
        path: run_dir.into(),
        msg: "metrics.csv has no data row".into(),
    })?;
    MetricReport::parse_csv_row(row).map_err(|e| Error::File {
        path: run_dir.into(),
        msg: e.to_string(),
    })
}

/// Relative change in percent, `"-12.20%"` style.
pub fn relative_delta(value: f64, reference: f64) -> String {
    if reference == 0.0 || !reference.is_finite() || !value.is_finite() {
        return "n/a".into();
    }
    let d = (value - reference) / reference * 100.0;
    // Avoid printing "-0.00%".
    let d = if d.abs() < 5e-3 { 0.0 } else { d };
    format!("{d:+.2}%")
}

/// Side-by-side metrics of the given runs. Columns are ordered by config
/// name; deltas are relative to the first run given.
pub fn compare_reports(runs: &[(String, String, MetricReport)]) -> Result<String> {
    if runs.len() < 2 {
        return Err(Error::Usage(format!(
            "compare needs at least 2 runs, got {}",
            runs.len()
        )));
    }
    let reference = runs[0].2;
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| runs[a].1.cmp(&runs[b].1));

    type Getter = fn(&MetricReport) -> f64;
    let metrics: [(&str, Getter); 4] = [
        ("rmse", |m| m.rmse),
        ("mae", |m| m.mae),
        ("mape_pct", |m| m.mape_pct),
        ("coverage", |m| m.coverage),
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();
    rows.push(
        std::iter::once("config".to_string())
            .chain(order.iter().map(|&i| runs[i].1.clone()))
            .collect(),
    );
    rows.push(
        std::iter::once("run".to_string())
            .chain(order.iter().map(|&i| runs[i].0.clone()))
            .collect(),
    );
    for (label, get) in metrics {
        let mut row = vec![label.to_string()];
        for &i in &order {
            let v = get(&runs[i].2);
            row.push(format!("{v:.6} ({})", relative_delta(v, get(&reference))));
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for r in &rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(s, "{}", cells.join("  ").trim_end());
    }
    Ok(s)
}

pub fn compare(run_dirs: &[PathBuf]) -> Result<String> {
    let runs = run_dirs
        .iter()
        .map(|d| read_metrics(d).map(|(name, m)| (d.display().to_string(), name, m)))
        .collect::<Result<Vec<_>>>()?;
    compare_reports(&runs)
}

/// Plot rows for test episode `episode` of a finished run.
pub fn plot(run_dir: &Path, episode: usize) -> Result<String> {
    let path = run_dir.join("estimates.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::File {
        path: run_dir.into(),
        msg: format!("cannot read estimates.csv ({e})"),
    })?;
    let mut s = format!("{PLOT_HEADER}\n");
    let mut episodes = 0;
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let (ep, rest) = line.split_once(',').ok_or_else(|| Error::File {
            path: path.clone(),
            msg: format!("malformed row {line:?}"),
        })?;
        let ep: usize = ep.parse().map_err(|_| Error::File {
            path: path.clone(),
            msg: format!("bad episode index in {line:?}"),
        })?;
        episodes = episodes.max(ep + 1);
        if ep == episode {
            s.push_str(rest);
            s.push('\n');
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(Error::Usage(format!(
            "episode {episode} is not in {} ({episodes} test episodes)",
            run_dir.display()
        )));
    }
    Ok(s)
}
