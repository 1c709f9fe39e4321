//! Seeded rollouts, episode metrics, aggregation and paired comparison.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::RelayPlan;
use crate::game::{
    sample_initial_state, settle_initial_state, step, t_max, AgentAction, GameError, GameState,
    JointAction, Phase, Scenario, ScenarioParams, TerminalBudget,
};
use crate::geometry::Vec2;
use crate::policy::{Policy, PolicyError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("cannot pair runs: {0}")]
    Mismatch(String),
    #[error("results file: {0}")]
    Csv(#[from] csv::Error),
    #[error("trajectory log: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 64-bit seed of episode `index` under `master`, a splitmix64 finalizer
/// applied to the master seed advanced by `index + 1` golden-ratio steps.
pub fn episode_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Settled initial state of an episode seed.
pub fn initial_state(
    seed: u64,
    agents: usize,
    params: &ScenarioParams,
) -> Result<GameState, GameError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = sample_initial_state(params, agents, &mut rng)?;
    settle_initial_state(&mut state, params);
    Ok(state)
}

/// One step of a recorded trajectory: the state at time `t`, and the action
/// and reward taken from it (absent for the final state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub positions: Vec<Vec2>,
    pub orientations: Vec<f64>,
    pub carrying: Vec<bool>,
    pub jammer: Vec2,
    pub jammer_step: Vec2,
    pub w: Phase,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub actions: Option<Vec<AgentAction>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reward: Option<f64>,
}

impl StepRecord {
    fn of(t: usize, s: &GameState) -> Self {
        Self {
            t,
            positions: s.positions.clone(),
            orientations: s.orientations.clone(),
            carrying: s.carrying.clone(),
            jammer: s.jammer,
            jammer_step: s.jammer_step,
            w: s.phase,
            actions: None,
            reward: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub base_distance: f64,
    pub plan: Option<RelayPlan>,
    pub steps: Vec<StepRecord>,
}

/// Result of [`rollout`].
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutcome {
    pub value: f64,
    /// Index of the first state with `w = 1`.
    pub delivery_time: Option<usize>,
    /// `Σ_t Σ_k ‖δp_{k,t}‖`.
    pub total_distance: f64,
    /// `Σ_t γ^t Σ_k ‖δp_{k,t}‖²`.
    pub discounted_motion: f64,
    pub rewards: Vec<f64>,
    pub clipped: usize,
    pub final_state: GameState,
    pub trajectory: Option<Trajectory>,
}

/// Runs `policy` from a settled initial state for at most `horizon` policy
/// steps. If the message is delivered, the terminal step from `w = 1` is
/// taken as well so that the budget enters the value.
pub fn rollout(
    initial: GameState,
    params: &ScenarioParams,
    policy: &mut dyn Policy,
    budget: &dyn TerminalBudget,
    horizon: usize,
    record: bool,
) -> Result<RolloutOutcome, EvalError> {
    let mut state = initial;
    policy.begin_episode(&state, params)?;
    let mut trajectory = record.then(|| Trajectory {
        base_distance: state.base_distance,
        plan: policy.plan().cloned(),
        steps: Vec::new(),
    });
    let check = policy.action_check();
    let mut out = RolloutOutcome {
        value: 0.0,
        delivery_time: (state.phase == Phase::Delivered).then_some(0),
        total_distance: 0.0,
        discounted_motion: 0.0,
        rewards: Vec::new(),
        clipped: 0,
        final_state: state.clone(),
        trajectory: None,
    };
    let mut discount = 1.0;
    let mut t = 0;
    loop {
        let joint = match state.phase {
            Phase::Active if t < horizon => policy.act(t, &state, params)?,
            Phase::Active | Phase::Terminated => break,
            Phase::Delivered => JointAction::still(state.agents()),
        };
        let tr = step(&state, &joint, params, budget, check)?;
        if let Some(traj) = trajectory.as_mut() {
            let mut rec = StepRecord::of(t, &state);
            rec.actions = Some(joint.actions.clone());
            rec.reward = Some(tr.reward);
            traj.steps.push(rec);
        }
        out.value += discount * tr.reward;
        out.discounted_motion += discount * tr.motion_sq;
        out.total_distance += tr.distance;
        out.clipped += tr.clipped;
        out.rewards.push(tr.reward);
        t += 1;
        discount *= params.gamma;
        if tr.state.phase == Phase::Delivered && state.phase == Phase::Active {
            out.delivery_time = Some(t);
        }
        state = tr.state;
    }
    if let Some(traj) = trajectory.as_mut() {
        traj.steps.push(StepRecord::of(t, &state));
    }
    out.final_state = state;
    out.trajectory = trajectory;
    Ok(out)
}

/// Metrics of one evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: u64,
    pub seed: u64,
    #[serde(rename = "K")]
    pub agents: usize,
    pub scenario: Scenario,
    #[serde(rename = "R")]
    pub base_distance: f64,
    pub success: bool,
    #[serde(rename = "V")]
    pub value: f64,
    #[serde(rename = "T_del")]
    pub delivery_time: Option<usize>,
    #[serde(rename = "D_tot")]
    pub total_distance: f64,
    #[serde(skip)]
    pub clipped: usize,
    #[serde(skip)]
    pub failure: Option<String>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

/// Fixed settings of an evaluation run.
#[derive(Clone, Copy)]
pub struct EpisodeSettings<'a> {
    pub agents: usize,
    pub params: &'a ScenarioParams,
    pub c_time: f64,
    pub budget: &'a dyn TerminalBudget,
    pub record: bool,
}

/// Runs one seeded episode. Policy failures end the episode unsuccessfully
/// and are reported in `failure`.
pub fn run_episode(
    policy: &mut dyn Policy,
    episode_id: u64,
    seed: u64,
    settings: &EpisodeSettings<'_>,
) -> Result<EpisodeRecord, EvalError> {
    let params = settings.params;
    let state = initial_state(seed, settings.agents, params)?;
    let horizon = t_max(settings.agents, params, settings.c_time);
    let mut record = EpisodeRecord {
        episode_id,
        seed,
        agents: settings.agents,
        scenario: params.scenario(),
        base_distance: state.base_distance,
        success: false,
        value: 0.0,
        delivery_time: None,
        total_distance: 0.0,
        clipped: 0,
        failure: None,
        trajectory: None,
    };
    match rollout(
        state,
        params,
        policy,
        settings.budget,
        horizon,
        settings.record,
    ) {
        Ok(out) => {
            record.success = out.delivery_time.is_some_and(|t| t <= horizon);
            record.value = out.value;
            record.delivery_time = out.delivery_time;
            record.total_distance = out.total_distance;
            record.clipped = out.clipped;
            record.trajectory = out.trajectory;
        }
        Err(EvalError::Policy(e)) => record.failure = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(record)
}

/// Lower median (element `⌊(n − 1)/2⌋` of the sorted values).
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

/// Aggregate metrics of one (policy, scenario, K) cell; medians are over
/// successful episodes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub policy: String,
    pub scenario: Scenario,
    #[serde(rename = "K")]
    pub agents: usize,
    pub episodes: usize,
    pub successes: usize,
    #[serde(rename = "S")]
    pub success_rate: f64,
    #[serde(rename = "V")]
    pub median_value: Option<f64>,
    #[serde(rename = "T_del")]
    pub median_delivery_time: Option<f64>,
    #[serde(rename = "D_tot")]
    pub median_distance: Option<f64>,
    pub clipped: usize,
    pub failures: usize,
}

pub fn aggregate(policy: &str, records: &[EpisodeRecord]) -> Option<MetricsRow> {
    let first = records.first()?;
    let ok: Vec<&EpisodeRecord> = records.iter().filter(|r| r.success).collect();
    let column =
        |f: fn(&EpisodeRecord) -> f64| lower_median(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
    Some(MetricsRow {
        policy: policy.to_string(),
        scenario: first.scenario,
        agents: first.agents,
        episodes: records.len(),
        successes: ok.len(),
        success_rate: ok.len() as f64 / records.len() as f64,
        median_value: column(|r| r.value),
        median_delivery_time: column(|r| r.delivery_time.unwrap_or(0) as f64),
        median_distance: column(|r| r.total_distance),
        clipped: records.iter().map(|r| r.clipped).sum(),
        failures: records.iter().filter(|r| r.failure.is_some()).count(),
    })
}

/// Evaluation of one cell: records sorted by episode id plus aggregates.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub records: Vec<EpisodeRecord>,
    pub metrics: MetricsRow,
}

/// Runs `episodes` seeded episodes on `workers` threads, one policy per
/// worker built by `make_policy`. Episode `i` uses
/// `episode_seed(master_seed, i)`, so results do not depend on the worker
/// count or scheduling.
pub fn evaluate<F>(
    make_policy: F,
    episodes: usize,
    master_seed: u64,
    settings: &EpisodeSettings<'_>,
    workers: usize,
) -> Result<Evaluation, EvalError>
where
    F: Fn() -> Result<Box<dyn Policy>, PolicyError> + Sync,
{
    assert!(episodes >= 1, "at least one episode");
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<EpisodeRecord>> = Mutex::new(Vec::with_capacity(episodes));
    let first_error: Mutex<Option<EvalError>> = Mutex::new(None);
    let mut name = String::new();
    let names: Mutex<Vec<String>> = Mutex::new(Vec::new());
    let workers = workers.clamp(1, episodes);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut policy = match make_policy() {
                    Ok(p) => p,
                    Err(e) => {
                        first_error.lock().unwrap().get_or_insert(e.into());
                        return;
                    }
                };
                names.lock().unwrap().push(policy.name());
                loop {
                    if first_error.lock().unwrap().is_some() {
                        return;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= episodes {
                        return;
                    }
                    let id = i as u64;
                    match run_episode(policy.as_mut(), id, episode_seed(master_seed, id), settings)
                    {
                        Ok(rec) => {
                            let broken = rec.failure.is_some();
                            results.lock().unwrap().push(rec);
                            if broken {
                                // a failed external process cannot serve further episodes
                                match make_policy() {
                                    Ok(p) => policy = p,
                                    Err(e) => {
                                        first_error.lock().unwrap().get_or_insert(e.into());
                                        return;
                                    }
                                }
                            }
                        }
                        Err(e) => {
                            first_error.lock().unwrap().get_or_insert(e);
                            return;
                        }
                    }
                }
            });
        }
    });

    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    if let Some(n) = names.into_inner().unwrap().into_iter().next() {
        name = n;
    }
    let mut records = results.into_inner().unwrap();
    records.sort_by_key(|r| r.episode_id);
    let metrics = aggregate(&name, &records).expect("at least one record");
    Ok(Evaluation { records, metrics })
}

/// Paired per-episode metrics of two runs over the same initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub episode_id: u64,
    pub seed: u64,
    pub success_a: bool,
    pub success_b: bool,
    pub value_a: f64,
    pub value_b: f64,
    pub delivery_a: Option<usize>,
    pub delivery_b: Option<usize>,
    pub distance_a: f64,
    pub distance_b: f64,
}

pub fn compare(a: &[EpisodeRecord], b: &[EpisodeRecord]) -> Result<Vec<PairedRow>, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Mismatch(format!(
            "{} episodes against {}",
            a.len(),
            b.len()
        )));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x.episode_id != y.episode_id || x.seed != y.seed {
                return Err(EvalError::Mismatch(format!(
                    "episode {} has seed {} in one run and episode {} seed {} in the other",
                    x.episode_id, x.seed, y.episode_id, y.seed
                )));
            }
            if x.agents != y.agents || x.scenario != y.scenario {
                return Err(EvalError::Mismatch(format!(
                    "episode {}: {} / K={} against {} / K={}",
                    x.episode_id, x.scenario, x.agents, y.scenario, y.agents
                )));
            }
            Ok(PairedRow {
                episode_id: x.episode_id,
                seed: x.seed,
                success_a: x.success,
                success_b: y.success,
                value_a: x.value,
                value_b: y.value,
                delivery_a: x.delivery_time,
                delivery_b: y.delivery_time,
                distance_a: x.total_distance,
                distance_b: y.total_distance,
            })
        })
        .collect()
}

pub fn write_results<W: Write>(out: W, records: &[EpisodeRecord]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(input: R) -> Result<Vec<EpisodeRecord>, EvalError> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize()
        .map(|r| r.map_err(EvalError::from))
        .collect()
}

pub fn write_metrics<W: Write>(out: W, rows: &[MetricsRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_paired<W: Write>(out: W, rows: &[PairedRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Header line of a trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub episode_id: u64,
    pub seed: u64,
    #[serde(rename = "K")]
    pub agents: usize,
    pub scenario: Scenario,
    #[serde(rename = "R")]
    pub base_distance: f64,
    pub plan: Option<RelayPlan>,
}

/// Writes a trajectory as JSON lines: the header, then one line per state.
pub fn write_trajectory<W: Write>(mut out: W, record: &EpisodeRecord) -> Result<(), EvalError> {
    let Some(traj) = &record.trajectory else {
        return Ok(());
    };
    let header = TrajectoryHeader {
        episode_id: record.episode_id,
        seed: record.seed,
        agents: record.agents,
        scenario: record.scenario,
        base_distance: traj.base_distance,
        plan: traj.plan.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for s in &traj.steps {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectory<R: Read>(
    input: R,
) -> Result<(TrajectoryHeader, Vec<StepRecord>), EvalError> {
    use std::io::BufRead;
    let mut lines = std::io::BufReader::new(input).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| EvalError::Mismatch("empty trajectory log".into()))??;
    let header: TrajectoryHeader = serde_json::from_str(&header_line)?;
    let mut steps = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            steps.push(serde_json::from_str(&line)?);
        }
    }
    Ok((header, steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{rollout_value, FixedBudget};
    use crate::policy::{BaselinePolicy, ZeroPolicy};

    fn settings<'a>(params: &'a ScenarioParams, budget: &'a FixedBudget) -> EpisodeSettings<'a> {
        EpisodeSettings {
            agents: 3,
            params,
            c_time: 1.5,
            budget,
            record: true,
        }
    }

    #[test]
    fn seeds_differ_and_repeat() {
        assert_eq!(episode_seed(7, 3), episode_seed(7, 3));
        assert_ne!(episode_seed(7, 3), episode_seed(7, 4));
        assert_ne!(episode_seed(7, 3), episode_seed(8, 3));
    }

    #[test]
    fn lower_median_convention() {
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(lower_median(&[5.0]), Some(5.0));
        assert_eq!(lower_median(&[]), None);
    }

    #[test]
    fn baseline_episode_succeeds_and_value_matches_rewards() {
        let params = ScenarioParams::default();
        let budget = FixedBudget(2.0);
        let mut p = BaselinePolicy::new();
        let rec = run_episode(&mut p, 0, 42, &settings(&params, &budget)).unwrap();
        assert!(rec.success);
        let traj = rec.trajectory.as_ref().unwrap();
        let rewards: Vec<f64> = traj.steps.iter().filter_map(|s| s.reward).collect();
        assert!((rollout_value(&rewards, params.gamma) - rec.value).abs() < 1e-12);
        assert_eq!(traj.steps.last().unwrap().w, Phase::Terminated);
    }

    #[test]
    fn zero_policy_on_sparse_seed_fails_with_zero_value() {
        let params = ScenarioParams::default();
        let budget = FixedBudget(2.0);
        let mut id = 0;
        let rec = loop {
            let rec = run_episode(
                &mut ZeroPolicy,
                id,
                episode_seed(1, id),
                &settings(&params, &budget),
            )
            .unwrap();
            if !rec.success {
                break rec;
            }
            id += 1;
        };
        assert_eq!(rec.value, 0.0);
        assert_eq!(rec.total_distance, 0.0);
    }

    #[test]
    fn evaluation_is_worker_independent() {
        let params = ScenarioParams::for_scenario(Scenario::IsoJam);
        let budget = FixedBudget(1.0);
        let s = EpisodeSettings {
            record: false,
            ..settings(&params, &budget)
        };
        let make = || Ok(Box::new(BaselinePolicy::new()) as Box<dyn Policy>);
        let one = evaluate(make, 12, 5, &s, 1).unwrap();
        let four = evaluate(make, 12, 5, &s, 4).unwrap();
        assert_eq!(one.records, four.records);
        assert_eq!(one.metrics, four.metrics);
    }

    #[test]
    fn results_round_trip_through_csv() {
        let params = ScenarioParams::default();
        let budget = FixedBudget(1.0);
        let s = EpisodeSettings {
            record: false,
            ..settings(&params, &budget)
        };
        let ev = evaluate(
            || Ok(Box::new(BaselinePolicy::new()) as Box<dyn Policy>),
            5,
            9,
            &s,
            2,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_results(&mut buf, &ev.records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("episode_id,seed,K,scenario,R,success,V,T_del,D_tot\n"));
        assert_eq!(read_results(&buf[..]).unwrap(), ev.records);
    }

    #[test]
    fn compare_rejects_mismatched_seeds() {
        let params = ScenarioParams::default();
        let budget = FixedBudget(1.0);
        let s = EpisodeSettings {
            record: false,
            ..settings(&params, &budget)
        };
        let make = || Ok(Box::new(BaselinePolicy::new()) as Box<dyn Policy>);
        let a = evaluate(make, 3, 1, &s, 1).unwrap();
        let b = evaluate(make, 3, 2, &s, 1).unwrap();
        assert!(compare(&a.records, &b.records).is_err());
        let same = compare(&a.records, &a.records).unwrap();
        assert!(same.iter().all(|r| r.value_a == r.value_b));
    }

    #[test]
    fn trajectory_log_round_trips() {
        let params = ScenarioParams::default();
        let budget = FixedBudget(2.0);
        let rec = run_episode(
            &mut BaselinePolicy::new(),
            0,
            3,
            &settings(&params, &budget),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &rec).unwrap();
        let (header, steps) = read_trajectory(&buf[..]).unwrap();
        assert_eq!(header.seed, 3);
        assert!(header.plan.is_some());
        assert_eq!(&steps, &rec.trajectory.unwrap().steps);
    }
}
