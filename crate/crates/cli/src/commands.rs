use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use relay_core::calibration::{self, BudgetTable, CalibrationError};
use relay_core::eval::{self, EpisodeRecord, EpisodeSettings, MetricsRow};
use relay_core::policy::{ExternalPolicy, ExternalSpec};
use relay_core::{BaselinePolicy, Policy, Scenario, ScenarioParams};

use crate::config::{PolicyKind, RunConfig};

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub const OTHER: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const CALIBRATION: u8 = 3;
    pub const PROTOCOL: u8 = 4;

    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self::new(Self::CONFIG, error)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self::new(Self::OTHER, error)
    }
}

impl From<eval::EvalError> for Failure {
    fn from(error: eval::EvalError) -> Self {
        Self::new(Self::OTHER, error)
    }
}

pub type Outcome = Result<(), Failure>;

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create_file(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn echo_config(config: &RunConfig) -> anyhow::Result<()> {
    create_dir(&config.out)?;
    let path = config.out.join("config.toml");
    fs::write(&path, config.to_toml()).with_context(|| format!("writing {}", path.display()))
}

/// Budgets only depend on `K` and the shared physical parameters, so any
/// scenario's parameters identify the table.
fn calibration_params() -> ScenarioParams {
    ScenarioParams::default()
}

pub fn calibrate(config: &RunConfig) -> Outcome {
    create_dir(&config.budgets)?;
    let params = calibration_params();
    println!(
        "{:>3}  {:>8}  {:>8}  {:>12}  {:>12}  {:>12}  {:>10}",
        "K", "R_min", "R_max", "a0", "a1", "a2", "max_rel"
    );
    for &k in &config.agents {
        let path = calibration::table_path(&config.budgets, k);
        let table = match calibration::load_table(&config.budgets, k, &params, config.grid_points) {
            Ok(t) => {
                eprintln!("K={k}: {} is up to date, skipped", path.display());
                t
            }
            Err(CalibrationError::Missing { .. } | CalibrationError::Stale { .. }) => {
                let started = Instant::now();
                let t = calibration::fit_budget(k, &params, config.grid_points)
                    .with_context(|| format!("calibrating K={k}"))?;
                t.save(&path)
                    .with_context(|| format!("writing {}", path.display()))?;
                eprintln!(
                    "K={k}: wrote {} in {:.1?}",
                    path.display(),
                    started.elapsed()
                );
                t
            }
            Err(e) => {
                return Err(anyhow!(e)
                    .context(format!("reading {}", path.display()))
                    .into())
            }
        };
        let [a0, a1, a2] = table.coefficients;
        println!(
            "{k:>3}  {:>8.3}  {:>8.3}  {a0:>12.5}  {a1:>12.5}  {a2:>12.5}  {:>10.2e}",
            table.r_min,
            table.r_max,
            table.max_relative_error()
        );
    }
    Ok(())
}

fn load_budget(config: &RunConfig, k: usize) -> Result<BudgetTable, Failure> {
    calibration::load_table(
        &config.budgets,
        k,
        &calibration_params(),
        config.grid_points,
    )
    .map_err(|e| {
        let hint = format!(
            "{e}; run `relay calibrate --agents {k} --budgets {}` first",
            config.budgets.display()
        );
        match e {
            CalibrationError::Missing { .. } | CalibrationError::Stale { .. } => {
                Failure::new(Failure::CALIBRATION, anyhow!(hint))
            }
            other => Failure::from(anyhow!(other)),
        }
    })
}

fn policy_factory(
    config: &RunConfig,
    agents: usize,
    params: ScenarioParams,
) -> impl Fn() -> Result<Box<dyn Policy>, relay_core::policy::PolicyError> + Sync + '_ {
    move || match config.policy {
        PolicyKind::Baseline => Ok(Box::new(BaselinePolicy::new()) as Box<dyn Policy>),
        PolicyKind::External => {
            let spec = ExternalSpec {
                command: config.policy_cmd.clone().unwrap_or_default(),
                encoding: config.encoding,
                action_mode: config.action_mode,
            };
            Ok(Box::new(ExternalPolicy::spawn(spec, agents, &params)?) as Box<dyn Policy>)
        }
    }
}

pub fn results_path(out: &Path, scenario: Scenario, agents: usize) -> PathBuf {
    out.join(format!("results_{scenario}_K{agents}.csv"))
}

fn trajectory_path(out: &Path, scenario: Scenario, agents: usize, episode: u64) -> PathBuf {
    out.join("trajectories")
        .join(format!("{scenario}_K{agents}_ep{episode}.jsonl"))
}

fn write_trajectories(out: &Path, records: &[EpisodeRecord]) -> anyhow::Result<()> {
    for r in records.iter().filter(|r| r.trajectory.is_some()) {
        let path = trajectory_path(out, r.scenario, r.agents, r.episode_id);
        create_dir(path.parent().expect("trajectory dir"))?;
        eval::write_trajectory(create_file(&path)?, r)?;
    }
    Ok(())
}

fn print_metrics_header() {
    println!(
        "{:<10} {:<10} {:>3} {:>7} {:>6} {:>8} {:>6} {:>7} {:>6}",
        "policy", "scenario", "K", "n", "S", "V", "T_del", "D_tot", "fail"
    );
}

fn print_metrics(m: &MetricsRow) {
    let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
    println!(
        "{:<10} {:<10} {:>3} {:>7} {:>6.3} {:>8} {:>6} {:>7} {:>6}",
        m.policy,
        m.scenario.name(),
        m.agents,
        m.episodes,
        m.success_rate,
        opt(m.median_value, 3),
        opt(m.median_delivery_time, 0),
        opt(m.median_distance, 2),
        m.failures
    );
}

pub fn evaluate(config: &RunConfig) -> Outcome {
    echo_config(config)?;
    let budgets = config
        .agents
        .iter()
        .map(|&k| load_budget(config, k))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut protocol_errors = 0;
    print_metrics_header();
    for &scenario in &config.scenarios {
        let params = ScenarioParams::for_scenario(scenario);
        for (&k, budget) in config.agents.iter().zip(&budgets) {
            let settings = EpisodeSettings {
                agents: k,
                params: &params,
                c_time: config.c_time,
                budget,
                record: config.record,
            };
            let run = eval::evaluate(
                policy_factory(config, k, params),
                config.episodes,
                config.seed,
                &settings,
                config.workers(),
            );
            let run = match run {
                Ok(run) => run,
                Err(eval::EvalError::Policy(e)) => {
                    return Err(Failure::new(
                        Failure::PROTOCOL,
                        anyhow!(e).context(format!("{scenario}, K={k}")),
                    ))
                }
                Err(e) => return Err(anyhow!(e).context(format!("{scenario}, K={k}")).into()),
            };
            let path = results_path(&config.out, scenario, k);
            eval::write_results(create_file(&path)?, &run.records)
                .with_context(|| format!("writing {}", path.display()))?;
            if config.record {
                write_trajectories(&config.out, &run.records)?;
            }
            for r in run
                .records
                .iter()
                .filter_map(|r| r.failure.as_ref().map(|f| (r.episode_id, f)))
            {
                eprintln!("{scenario} K={k} episode {}: {}", r.0, r.1);
            }
            protocol_errors += run.metrics.failures;
            print_metrics(&run.metrics);
            rows.push(run.metrics);
        }
    }
    let path = config.out.join("metrics.csv");
    eval::write_metrics(create_file(&path)?, &rows)
        .with_context(|| format!("writing {}", path.display()))?;
    if protocol_errors > 0 {
        return Err(Failure::new(
            Failure::PROTOCOL,
            anyhow!("{protocol_errors} episodes ended on an external policy failure"),
        ));
    }
    Ok(())
}

pub fn rollout(config: &RunConfig, episode: u64) -> Outcome {
    let (&[scenario], &[k]) = (config.scenarios.as_slice(), config.agents.as_slice()) else {
        return Err(Failure::config(anyhow!(
            "rollout needs exactly one scenario and one agent count"
        )));
    };
    echo_config(config)?;
    let budget = load_budget(config, k)?;
    let params = ScenarioParams::for_scenario(scenario);
    let settings = EpisodeSettings {
        agents: k,
        params: &params,
        c_time: config.c_time,
        budget: &budget,
        record: true,
    };
    let mut policy = policy_factory(config, k, params)()
        .map_err(|e| Failure::new(Failure::PROTOCOL, anyhow!(e)))?;
    let seed = eval::episode_seed(config.seed, episode);
    let record =
        eval::run_episode(policy.as_mut(), episode, seed, &settings).map_err(|e| anyhow!(e))?;
    let path = trajectory_path(&config.out, scenario, k, episode);
    create_dir(path.parent().expect("trajectory dir"))?;
    eval::write_trajectory(create_file(&path)?, &record)?;
    println!(
        "episode {episode} seed {seed}: R={:.3} success={} V={:.4} T_del={} D_tot={:.3}",
        record.base_distance,
        record.success,
        record.value,
        record.delivery_time.map_or("-".into(), |t| t.to_string()),
        record.total_distance
    );
    println!("trajectory: {}", path.display());
    if let Some(f) = record.failure {
        return Err(Failure::new(Failure::PROTOCOL, anyhow!(f)));
    }
    Ok(())
}

pub fn read_results_file(path: &Path) -> anyhow::Result<Vec<EpisodeRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    eval::read_results(f).with_context(|| format!("reading {}", path.display()))
}

pub fn compare(a: &Path, b: &Path, out: &Path) -> Outcome {
    let (ra, rb) = (read_results_file(a)?, read_results_file(b)?);
    let rows = eval::compare(&ra, &rb).map_err(|e| Failure::config(anyhow!(e)))?;
    create_dir(out)?;
    let path = out.join("paired.csv");
    eval::write_paired(create_file(&path)?, &rows)?;

    let both: Vec<_> = rows.iter().filter(|r| r.success_a && r.success_b).collect();
    let diff: Vec<f64> = both.iter().map(|r| r.value_a - r.value_b).collect();
    let a_better = diff.iter().filter(|&&d| d > 0.0).count();
    println!("episodes: {}", rows.len());
    println!(
        "success: a {} / b {} / both {}",
        rows.iter().filter(|r| r.success_a).count(),
        rows.iter().filter(|r| r.success_b).count(),
        both.len()
    );
    if let Some(m) = eval::lower_median(&diff) {
        println!("median V_a - V_b over shared successes: {m:.4}");
        println!("a strictly better on {a_better} of {}", both.len());
    }
    println!("paired rows: {}", path.display());
    Ok(())
}
