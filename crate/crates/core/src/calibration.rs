//! Terminal budget: baseline rollouts from the dimensioning state, a
//! quadratic fit in `R`, and content-addressed table files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{rollout, EvalError};
use crate::game::{settle_initial_state, FixedBudget, GameState, ScenarioParams, TerminalBudget};
use crate::geometry::Vec2;
use crate::policy::BaselinePolicy;

pub const DEFAULT_GRID_POINTS: usize = 41;

/// Steps allowed for a dimensioning rollout before it counts as a failure.
const DIMENSIONING_STEP_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("baseline did not deliver from the dimensioning state (K = {agents}, R = {r})")]
    NoDelivery { agents: usize, r: f64 },
    #[error("rollout failed: {0}")]
    Rollout(#[from] EvalError),
    #[error("grid needs at least 3 points, got {0}")]
    Grid(usize),
    #[error("no budget table for K = {agents} at {path}; run the calibrate command first")]
    Missing { agents: usize, path: PathBuf },
    #[error(
        "budget table {path} was computed with different parameters; rerun the calibrate command"
    )]
    Stale { path: PathBuf },
    #[error("budget table {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("budget table {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// All agents stacked at `(1.1 R, 0)` behind the receiver.
pub fn dimensioning_state(base_distance: f64, agents: usize) -> GameState {
    GameState::with_positions(
        base_distance,
        vec![Vec2::new(1.1 * base_distance, 0.0); agents],
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensioningRun {
    pub delivery_time: usize,
    /// `Σ_{t < T#} γ^t Σ_k ‖δp_{k,t}‖²`.
    pub discounted_motion: f64,
    /// `γ^{−T#}` times the discounted motion.
    pub budget: f64,
}

/// Baseline rollout from the dimensioning state, isotropic and unjammed.
pub fn dimensioning_run(
    base_distance: f64,
    agents: usize,
    params: &ScenarioParams,
    policy: &mut BaselinePolicy,
) -> Result<DimensioningRun, CalibrationError> {
    let params = params.without_scenario_effects();
    let mut state = dimensioning_state(base_distance, agents);
    settle_initial_state(&mut state, &params);
    let out = rollout(
        state,
        &params,
        policy,
        &FixedBudget(0.0),
        DIMENSIONING_STEP_CAP,
        false,
    )?;
    let t = out.delivery_time.ok_or(CalibrationError::NoDelivery {
        agents,
        r: base_distance,
    })?;
    Ok(DimensioningRun {
        delivery_time: t,
        discounted_motion: out.discounted_motion,
        budget: out.discounted_motion / params.gamma.powi(t as i32),
    })
}

/// Unsmoothed `budget(R, 1; K)`.
pub fn budget_raw(
    base_distance: f64,
    agents: usize,
    params: &ScenarioParams,
) -> Result<f64, CalibrationError> {
    Ok(dimensioning_run(base_distance, agents, params, &mut BaselinePolicy::new())?.budget)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSample {
    #[serde(rename = "R")]
    pub r: f64,
    pub raw: f64,
}

/// Quadratic fit of the budget for one agent count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetTable {
    #[serde(rename = "K")]
    pub agents: usize,
    pub params_hash: String,
    pub grid_points: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// `(q0, q1, q2)` of `q0 + q1 R + q2 R²`.
    pub coefficients: [f64; 3],
    pub samples: Vec<BudgetSample>,
}

impl BudgetTable {
    /// Fitted budget at `r`.
    pub fn evaluate(&self, r: f64) -> f64 {
        let [q0, q1, q2] = self.coefficients;
        q0 + r * (q1 + r * q2)
    }

    /// Largest `|fit − raw| / raw` over the grid points with a positive
    /// raw budget.
    pub fn max_relative_error(&self) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.raw > 0.0)
            .map(|s| (self.evaluate(s.r) - s.raw).abs() / s.raw)
            .fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (self.evaluate(s.r) - s.raw).abs())
            .fold(0.0, f64::max)
    }

    /// Largest jump between consecutive raw samples.
    pub fn max_raw_step(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].raw - w[0].raw).abs())
            .fold(0.0, f64::max)
    }

    pub fn matches(&self, params: &ScenarioParams, grid_points: usize) -> bool {
        self.params_hash == params_hash(params, self.agents, grid_points)
            && self.grid_points == grid_points
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        let io = |source| CalibrationError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        fs::write(path, self.to_json()).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        let text = fs::read_to_string(path).map_err(|source| CalibrationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CalibrationError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl TerminalBudget for BudgetTable {
    fn terminal_reward(&self, base_distance: f64) -> f64 {
        self.evaluate(base_distance)
    }
}

/// Hex SHA-256 over the parameters that shape the budget.
pub fn params_hash(params: &ScenarioParams, agents: usize, grid_points: usize) -> String {
    let key = format!(
        "budget-v1|K={agents}|grid={grid_points}|r_com={:?}|threshold={:?}|sigma_p={:?}|gamma={:?}",
        params.r_com, params.sinr_threshold, params.sigma_p, params.gamma
    );
    Sha256::digest(key.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Least-squares `(q0, q1, q2)` for `y ≈ q0 + q1 x + q2 x²`. The abscissae are
/// centred and scaled before solving the normal equations.
pub fn fit_quadratic(xs: &[f64], ys: &[f64]) -> [f64; 3] {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let scale = xs
        .iter()
        .map(|x| (x - mean).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let z = (x - mean) / scale;
        let basis = [1.0, z, z * z];
        for i in 0..3 {
            rhs[i] += basis[i] * y;
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
        }
    }
    let [c0, c1, c2] = solve3(m, rhs);
    // expand c0 + c1 z + c2 z² with z = (x − mean) / scale
    let (s, s2) = (scale, scale * scale);
    [
        c0 - c1 * mean / s + c2 * mean * mean / s2,
        c1 / s - 2.0 * c2 * mean / s2,
        c2 / s2,
    ]
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty range");
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / m[row][row];
    }
    x
}

/// Samples the raw budget on `grid_points` evenly spaced `R` over
/// `[R_min, R_max]` and fits the quadratic. Grid points run in parallel.
pub fn fit_budget(
    agents: usize,
    params: &ScenarioParams,
    grid_points: usize,
) -> Result<BudgetTable, CalibrationError> {
    if grid_points < 3 {
        return Err(CalibrationError::Grid(grid_points));
    }
    let (lo, hi) = (params.r_min(agents), params.r_max(agents));
    let rs: Vec<f64> = (0..grid_points)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_points - 1) as f64)
        .collect();
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(grid_points);
    let chunk = grid_points.div_ceil(threads);
    let raws: Vec<Result<f64, CalibrationError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = rs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&r| budget_raw(r, agents, params))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("calibration worker panicked"))
            .collect()
    });
    let raws = raws.into_iter().collect::<Result<Vec<f64>, _>>()?;
    Ok(BudgetTable {
        agents,
        params_hash: params_hash(params, agents, grid_points),
        grid_points,
        r_min: lo,
        r_max: hi,
        coefficients: fit_quadratic(&rs, &raws),
        samples: rs
            .iter()
            .zip(&raws)
            .map(|(&r, &raw)| BudgetSample { r, raw })
            .collect(),
    })
}

pub fn table_path(dir: &Path, agents: usize) -> PathBuf {
    dir.join(format!("budget_K{agents}.json"))
}

/// Loads the table for `agents` from `dir`, refusing missing or stale files.
pub fn load_table(
    dir: &Path,
    agents: usize,
    params: &ScenarioParams,
    grid_points: usize,
) -> Result<BudgetTable, CalibrationError> {
    let path = table_path(dir, agents);
    if !path.exists() {
        return Err(CalibrationError::Missing { agents, path });
    }
    let table = BudgetTable::load(&path)?;
    if table.agents != agents || !table.matches(params, grid_points) {
        return Err(CalibrationError::Stale { path });
    }
    Ok(table)
}
