//! Experiment orchestration: run matrices, the evaluation protocol, result
//! persistence and aggregation into per-figure tables.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{self, EnvConfig, Episode};
use crate::error::{Error, Result};
use crate::fairness::{team_fairness, CaptureTally, FairnessScore, OutcomeRecord};
use crate::io::{self, fmt_f64, parse_f64, Table};
use crate::policy::{Greedy, JointPolicy};
use crate::train::{self, Checkpoint, CheckpointTag, Strategy, TrainConfig};

/// What a matrix row runs; `FairEr` is expanded over the configured lambdas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Individual,
    Mutual,
    FairE,
    FairEr,
    Greedy,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Individual,
        StrategyKind::Mutual,
        StrategyKind::FairE,
        StrategyKind::FairEr,
        StrategyKind::Greedy,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            StrategyKind::Individual => "individual",
            StrategyKind::Mutual => "mutual",
            StrategyKind::FairE => "fair-e",
            StrategyKind::FairEr => "fair-er",
            StrategyKind::Greedy => "greedy",
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == label)
            .ok_or_else(|| Error::Config(format!("unknown strategy {label:?}")))
    }

    /// Training strategy, `None` for the hand-crafted baseline.
    pub fn training(&self, lambda: f64) -> Option<Strategy> {
        match self {
            StrategyKind::Individual => Some(Strategy::IndividualReward),
            StrategyKind::Mutual => Some(Strategy::MutualReward),
            StrategyKind::FairE => Some(Strategy::FairE),
            StrategyKind::FairEr => Some(Strategy::FairEr { lambda }),
            StrategyKind::Greedy => None,
        }
    }

    pub fn of(strategy: &Strategy) -> Self {
        match strategy {
            Strategy::IndividualReward => StrategyKind::Individual,
            Strategy::MutualReward => StrategyKind::Mutual,
            Strategy::FairE => StrategyKind::FairE,
            Strategy::FairEr { .. } => StrategyKind::FairEr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub strategies: Vec<StrategyKind>,
    pub test_velocities: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub master_seed: u64,
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategies: vec![
                StrategyKind::Individual,
                StrategyKind::Mutual,
                StrategyKind::FairE,
                StrategyKind::FairEr,
                StrategyKind::Greedy,
            ],
            test_velocities: (0..9).map(|k| (12 - k) as f64 / 10.0).collect(),
            lambdas: vec![0.0, 0.1, 0.5, 0.9, 1.0],
            seeds: (0..5).collect(),
            eval_episodes: 100,
            master_seed: 0,
            train: TrainConfig::default(),
            env: EnvConfig::default(),
            output_dir: PathBuf::from("fairpursuit-out"),
        }
    }
}

impl ExperimentConfig {
    /// The desk-scale matrix: learned strategies on three seeds at the speeds
    /// 1.0, 0.9 and 0.8, with Fair-ER at λ ∈ {0, 0.5, 0.9}.
    pub fn desk() -> Self {
        Self {
            strategies: vec![
                StrategyKind::Individual,
                StrategyKind::Mutual,
                StrategyKind::FairE,
                StrategyKind::FairEr,
            ],
            test_velocities: vec![1.0, 0.9, 0.8],
            lambdas: vec![0.0, 0.5, 0.9],
            seeds: vec![0, 1, 2],
            train: TrainConfig::desk(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() || self.test_velocities.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "strategies, velocities and seeds must be non-empty".into(),
            ));
        }
        if self.strategies.contains(&StrategyKind::FairEr) && self.lambdas.is_empty() {
            return Err(Error::Config("fair-er needs at least one lambda".into()));
        }
        if let Some(v) = self
            .test_velocities
            .iter()
            .find(|v| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Config(format!("velocity {v} must be positive")));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        self.train.validate()?;
        self.env.validate()
    }

    /// Every (strategy, lambda, seed) the matrix trains, in a fixed order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &kind in &self.strategies {
            let lambdas: &[f64] = if kind == StrategyKind::FairEr {
                &self.lambdas
            } else {
                &[0.0]
            };
            for &lambda in lambdas {
                for &seed in &self.seeds {
                    cells.push(Cell { kind, lambda, seed });
                }
            }
        }
        cells
    }
}

/// One training run of the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: StrategyKind,
    pub lambda: f64,
    pub seed: u64,
}

impl Cell {
    pub fn id(&self) -> String {
        match self.kind {
            StrategyKind::FairEr => {
                format!("{}_l{}_s{}", self.kind.label(), self.lambda, self.seed)
            }
            _ => format!("{}_s{}", self.kind.label(), self.seed),
        }
    }
}

/// Seed derived by hashing `parts` with the master seed.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Training seed of a cell.
pub fn cell_seed(master: u64, cell: &Cell) -> u64 {
    derive_seed(
        master,
        &[
            "train",
            cell.kind.label(),
            &cell.lambda.to_string(),
            &cell.seed.to_string(),
        ],
    )
}

/// Evaluation seed; shared across strategies so they face the same start states.
pub fn eval_seed(master: u64, seed: u64, velocity: f64) -> u64 {
    derive_seed(
        master,
        &["eval", &seed.to_string(), &format!("{velocity:.6}")],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub strategy: String,
    pub velocity: f64,
    pub lambda: f64,
    pub seed: u64,
    pub success_rate: f64,
    pub fairness: FairnessScore,
    /// Mean episode length over captured episodes; NaN when nothing was caught.
    pub mean_steps: f64,
    /// Captures credited to each pursuer; shared captures are split evenly.
    pub captures_per_agent: Vec<f64>,
    pub no_capture_count: usize,
    pub episodes: usize,
}

impl EvalResult {
    pub fn from_outcomes(
        strategy: &str,
        velocity: f64,
        lambda: f64,
        seed: u64,
        outcomes: &[OutcomeRecord],
        n: usize,
    ) -> Result<Self> {
        let fairness = team_fairness(outcomes, n)?;
        let tally = CaptureTally::from_outcomes(outcomes, n)?;
        let caught: Vec<_> = outcomes.iter().filter(|o| o.captured()).collect();
        let mean_steps = if caught.is_empty() {
            f64::NAN
        } else {
            caught.iter().map(|o| o.steps as f64).sum::<f64>() / caught.len() as f64
        };
        Ok(Self {
            strategy: strategy.to_string(),
            velocity,
            lambda,
            seed,
            success_rate: tally.success_rate(),
            fairness,
            mean_steps,
            captures_per_agent: tally.per_agent.clone(),
            no_capture_count: tally.no_capture,
            episodes: outcomes.len(),
        })
    }
}

/// Roll `episodes` noise-free episodes of `policy` at pursuer speed
/// `velocity`, starting states drawn from `seed`.
pub fn run_episodes(
    policy: &dyn JointPolicy,
    env_config: &EnvConfig,
    velocity: f64,
    episodes: usize,
    seed: u64,
) -> Result<Vec<OutcomeRecord>> {
    if !(velocity.is_finite() && velocity > 0.0) {
        return Err(Error::Config(format!(
            "velocity {velocity} must be positive"
        )));
    }
    let config = env_config.with_pursuer_speed(velocity);
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcomes = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let state = env::reset(&mut rng, &config)?;
        let mut episode = Episode::new(config.clone(), state)?;
        while !episode.is_done() {
            let action = policy.joint_action(episode.state())?;
            episode.step(&action)?;
        }
        outcomes.push(
            episode
                .outcome()
                .cloned()
                .expect("finished episode has an outcome"),
        );
    }
    Ok(outcomes)
}

/// Evaluate a frozen policy. Zero episodes is an error.
pub fn evaluate(
    policy: &dyn JointPolicy,
    label: &str,
    lambda: f64,
    env_config: &EnvConfig,
    velocity: f64,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::EmptyOutcomes);
    }
    let outcomes = run_episodes(policy, env_config, velocity, episodes, seed)?;
    EvalResult::from_outcomes(label, velocity, lambda, seed, &outcomes, policy.n_agents())
}

/// Evaluate the actors stored in a checkpoint directory.
pub fn evaluate_checkpoint_dir(
    dir: &Path,
    env_config: &EnvConfig,
    velocity: f64,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    let ckpt = Checkpoint::load(dir)?;
    let team = ckpt.team()?;
    let label = if ckpt.tied { "fair-e" } else { "checkpoint" };
    evaluate(&team, label, 0.0, env_config, velocity, episodes, seed)
}

pub const RESULTS_HEADER: [&str; 11] = [
    "strategy",
    "velocity",
    "lambda",
    "seed",
    "success_rate",
    "fairness_bits",
    "mean_steps",
    "captures_agent_1",
    "captures_agent_2",
    "captures_agent_3",
    "no_capture_count",
];

/// A row of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub strategy: String,
    pub velocity: f64,
    pub lambda: f64,
    pub seed: u64,
    pub success_rate: f64,
    pub fairness_bits: f64,
    pub mean_steps: f64,
    pub captures: [f64; 3],
    pub no_capture_count: usize,
}

impl ResultRow {
    pub fn from_eval(r: &EvalResult) -> Result<Self> {
        let captures: [f64; 3] = r
            .captures_per_agent
            .as_slice()
            .try_into()
            .map_err(|_| Error::Csv("results table holds exactly three pursuers".into()))?;
        Ok(Self {
            strategy: r.strategy.clone(),
            velocity: r.velocity,
            lambda: r.lambda,
            seed: r.seed,
            success_rate: r.success_rate,
            fairness_bits: r.fairness.bits,
            mean_steps: r.mean_steps,
            captures,
            no_capture_count: r.no_capture_count,
        })
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![
            self.strategy.clone(),
            fmt_f64(self.velocity),
            fmt_f64(self.lambda),
            self.seed.to_string(),
            fmt_f64(self.success_rate),
            fmt_f64(self.fairness_bits),
            fmt_f64(self.mean_steps),
        ];
        f.extend(self.captures.iter().map(|c| fmt_f64(*c)));
        f.push(self.no_capture_count.to_string());
        f
    }

    fn sort_key(&self) -> (String, u64, u64, u64) {
        // velocities descend, matching the curriculum
        (
            self.strategy.clone(),
            self.lambda.to_bits(),
            self.seed,
            u64::MAX - self.velocity.to_bits(),
        )
    }
}

pub fn results_table(rows: &[ResultRow]) -> Table {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.sort_key());
    let mut table = Table::new(RESULTS_HEADER);
    for r in &sorted {
        table.push(r.fields()).expect("fixed width");
    }
    table
}

pub fn parse_results(table: &Table) -> Result<Vec<ResultRow>> {
    let col: Vec<usize> = RESULTS_HEADER
        .iter()
        .map(|h| table.column(h))
        .collect::<Result<_>>()?;
    table
        .rows
        .iter()
        .map(|row| {
            let f = |k: usize| row[col[k]].as_str();
            let int = |k: usize| {
                f(k).parse::<u64>()
                    .map_err(|_| Error::Csv(format!("not an integer: {:?}", f(k))))
            };
            Ok(ResultRow {
                strategy: f(0).to_string(),
                velocity: parse_f64(f(1))?,
                lambda: parse_f64(f(2))?,
                seed: int(3)?,
                success_rate: parse_f64(f(4))?,
                fairness_bits: parse_f64(f(5))?,
                mean_steps: parse_f64(f(6))?,
                captures: [parse_f64(f(7))?, parse_f64(f(8))?, parse_f64(f(9))?],
                no_capture_count: int(10)? as usize,
            })
        })
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    parse_results(&Table::read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok {
        log_checksum: Option<String>,
        checkpoints: Vec<PathBuf>,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: String,
    pub cell: Cell,
    pub cell_seed: u64,
    #[serde(flatten)]
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellRecord>,
    pub results_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOutcome {
    pub rows: Vec<ResultRow>,
    pub manifest: Manifest,
}

impl MatrixOutcome {
    pub fn failed_cells(&self) -> Vec<&CellRecord> {
        self.manifest
            .cells
            .iter()
            .filter(|c| matches!(c.status, CellStatus::Failed { .. }))
            .collect()
    }
}

/// Train and evaluate one cell, saving its run artifacts under `run_dir`.
pub fn run_cell(
    config: &ExperimentConfig,
    cell: &Cell,
    run_dir: &Path,
) -> Result<(Vec<EvalResult>, CellStatus)> {
    let seed = cell_seed(config.master_seed, cell);
    let label = cell.kind.label();
    let Some(strategy) = cell.kind.training(cell.lambda) else {
        let greedy = Greedy {
            n_agents: config.env.n_pursuers,
        };
        let results = config
            .test_velocities
            .iter()
            .map(|&v| {
                let es = eval_seed(config.master_seed, cell.seed, v);
                evaluate(
                    &greedy,
                    label,
                    cell.lambda,
                    &config.env,
                    v,
                    config.eval_episodes,
                    es,
                )
                .map(|r| EvalResult {
                    seed: cell.seed,
                    ..r
                })
            })
            .collect::<Result<_>>()?;
        return Ok((
            results,
            CellStatus::Ok {
                log_checksum: None,
                checkpoints: Vec::new(),
            },
        ));
    };
    let train_cfg = TrainConfig {
        strategy,
        seed,
        ..config.train.clone()
    };
    let artifacts = train::train(&train_cfg, &config.env, &config.test_velocities)?;
    artifacts.save(run_dir)?;
    let mut results = Vec::new();
    let mut checkpoints = Vec::new();
    for &v in &config.test_velocities {
        let ckpt = artifacts.crossing(v).ok_or_else(|| {
            Error::Config(format!("velocity {v} is outside the training curriculum"))
        })?;
        checkpoints.push(run_dir.join("checkpoints").join(ckpt.dir_name()));
        let team = ckpt.team()?;
        let es = eval_seed(config.master_seed, cell.seed, v);
        let r = evaluate(
            &team,
            label,
            cell.lambda,
            &config.env,
            v,
            config.eval_episodes,
            es,
        )?;
        results.push(EvalResult {
            seed: cell.seed,
            ..r
        });
    }
    debug_assert!(artifacts
        .checkpoints
        .iter()
        .any(|c| c.tag == CheckpointTag::Initial));
    Ok((
        results,
        CellStatus::Ok {
            log_checksum: Some(artifacts.log_checksum()),
            checkpoints,
        },
    ))
}

/// Run every cell (in parallel), writing `results.csv` after each finished
/// cell and `manifest.json` at the end. Failed cells are recorded and skipped.
pub fn run_matrix(config: &ExperimentConfig) -> Result<MatrixOutcome> {
    run_matrix_with_progress(config, |_| {})
}

pub fn run_matrix_with_progress(
    config: &ExperimentConfig,
    mut on_cell: impl FnMut(&CellRecord),
) -> Result<MatrixOutcome> {
    config.validate()?;
    if config.env.n_pursuers != 3 {
        return Err(Error::Config(
            "the results table holds exactly three pursuers".into(),
        ));
    }
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let results_path = out.join("results.csv");
    let cells = config.cells();

    let (tx, rx) = mpsc::channel::<(usize, Result<(Vec<EvalResult>, CellStatus)>)>();
    let mut records: Vec<Option<CellRecord>> = vec![None; cells.len()];
    let mut rows: Vec<ResultRow> = Vec::new();
    let mut writer_error = None;

    std::thread::scope(|scope| {
        let cells_ref = &cells;
        scope.spawn(move || {
            cells_ref
                .par_iter()
                .enumerate()
                .for_each_with(tx, |tx, (k, cell)| {
                    let dir = out.join("runs").join(cell.id());
                    let _ = tx.send((k, run_cell(config, cell, &dir)));
                });
        });
        // single writer: the results file is only touched from this thread
        for (k, outcome) in rx {
            let cell = cells[k];
            let status = match outcome.and_then(|(results, status)| {
                let new = results
                    .iter()
                    .map(ResultRow::from_eval)
                    .collect::<Result<Vec<_>>>()?;
                Ok((new, status))
            }) {
                Ok((new, status)) => {
                    rows.extend(new);
                    if let Err(e) = results_table(&rows).write(&results_path) {
                        writer_error.get_or_insert(e);
                    }
                    status
                }
                Err(e) => CellStatus::Failed {
                    error: e.to_string(),
                },
            };
            let record = CellRecord {
                id: cell.id(),
                cell,
                cell_seed: cell_seed(config.master_seed, &cell),
                status,
            };
            on_cell(&record);
            records[k] = Some(record);
        }
    });
    if let Some(e) = writer_error {
        return Err(e);
    }

    let table = results_table(&rows);
    let csv = table.to_csv();
    io::write_atomic(&results_path, csv.as_bytes())?;
    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        cells: records
            .into_iter()
            .map(|r| r.expect("every cell reports"))
            .collect(),
        results_sha256: hex::encode(Sha256::digest(csv.as_bytes())),
    };
    io::write_json_atomic(&out.join("manifest.json"), &manifest)?;
    Ok(MatrixOutcome {
        rows: parse_results(&table)?,
        manifest,
    })
}

/// Mean and sample standard deviation (0 for a single value). NaN entries are
/// skipped; the mean of nothing is NaN.
pub fn mean_std(values: &[f64]) -> (f64, f64, usize) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    let n = finite.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = finite.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    (mean, std, n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let (mean, std, n) = mean_std(values);
        Self { mean, std, n }
    }
}

/// Seed-aggregated statistics of one (strategy, velocity, lambda) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub strategy: String,
    pub velocity: f64,
    pub lambda: f64,
    pub seeds: usize,
    pub success: Stat,
    pub fairness: Stat,
    pub mean_steps: Stat,
}

type CellKey = (String, u64, u64);

fn cell_key(strategy: &str, velocity: f64, lambda: f64) -> CellKey {
    (
        strategy.to_string(),
        u64::MAX - velocity.to_bits(),
        lambda.to_bits(),
    )
}

/// Per-cell means and dispersions over seeds, in a canonical order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<CellKey, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry(cell_key(&r.strategy, r.velocity, r.lambda))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let pick = |f: fn(&ResultRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<_>>();
            CellSummary {
                strategy: g[0].strategy.clone(),
                velocity: g[0].velocity,
                lambda: g[0].lambda,
                seeds: g.len(),
                success: Stat::of(&pick(|r| r.success_rate)),
                fairness: Stat::of(&pick(|r| r.fairness_bits)),
                mean_steps: Stat::of(&pick(|r| r.mean_steps)),
            }
        })
        .collect()
}

/// Requested (strategy, velocity, lambda, seed) combinations with no row.
pub fn missing_cells(
    config: &ExperimentConfig,
    rows: &[ResultRow],
) -> Vec<(String, f64, f64, u64)> {
    let present: BTreeSet<(String, u64, u64, u64)> = rows
        .iter()
        .map(|r| {
            (
                r.strategy.clone(),
                r.velocity.to_bits(),
                r.lambda.to_bits(),
                r.seed,
            )
        })
        .collect();
    let mut missing = Vec::new();
    for cell in config.cells() {
        for &v in &config.test_velocities {
            let key = (
                cell.kind.label().to_string(),
                v.to_bits(),
                cell.lambda.to_bits(),
                cell.seed,
            );
            if !present.contains(&key) {
                missing.push((key.0, v, cell.lambda, cell.seed));
            }
        }
    }
    missing
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    /// Capture success, mutual vs individual reward.
    F2,
    /// Team fairness against pursuer speed.
    F3b,
    /// Team utility against pursuer speed.
    F3c,
    /// Fairness and utility of the regularized strategy across lambda.
    F5,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::F2, Figure::F3b, Figure::F3c, Figure::F5];

    pub fn name(&self) -> &'static str {
        match self {
            Figure::F2 => "f2",
            Figure::F3b => "f3b",
            Figure::F3c => "f3c",
            Figure::F5 => "f5",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown figure {name:?}")))
    }

    pub fn title(&self) -> &'static str {
        match self {
            Figure::F2 => "Capture success: mutual vs individual reward",
            Figure::F3b => "Team fairness I(R;Z) by pursuer speed",
            Figure::F3c => "Team utility by pursuer speed",
            Figure::F5 => "Fair-ER across lambda",
        }
    }

    fn metrics(&self) -> &'static [Metric] {
        match self {
            Figure::F2 | Figure::F3c => &[Metric::Success],
            Figure::F3b => &[Metric::Fairness],
            Figure::F5 => &[Metric::Fairness, Metric::Success],
        }
    }

    fn includes(&self, s: &CellSummary) -> bool {
        match self {
            Figure::F2 => matches!(s.strategy.as_str(), "mutual" | "individual"),
            Figure::F3b | Figure::F3c => {
                matches!(
                    s.strategy.as_str(),
                    "mutual" | "individual" | "fair-e" | "greedy"
                )
            }
            Figure::F5 => matches!(s.strategy.as_str(), "fair-er" | "fair-e"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Success,
    Fairness,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Success => "success_rate",
            Metric::Fairness => "fairness_bits",
        }
    }
}

pub const FIGURE_HEADER: [&str; 6] = ["metric", "series", "velocity", "mean", "std", "n_seeds"];

fn series_label(s: &CellSummary) -> String {
    if s.strategy == "fair-er" {
        format!("fair-er lambda={}", s.lambda)
    } else {
        s.strategy.clone()
    }
}

/// Tidy table backing one figure: `metric,series,velocity,mean,std,n_seeds`.
pub fn figure_table(figure: Figure, summaries: &[CellSummary]) -> Table {
    let mut table = Table::new(FIGURE_HEADER);
    for metric in figure.metrics() {
        for s in summaries.iter().filter(|s| figure.includes(s)) {
            let stat = match metric {
                Metric::Success => s.success,
                Metric::Fairness => s.fairness,
            };
            table
                .push(vec![
                    metric.name().to_string(),
                    series_label(s),
                    fmt_f64(s.velocity),
                    fmt_f64(stat.mean),
                    fmt_f64(stat.std),
                    stat.n.to_string(),
                ])
                .expect("fixed width");
        }
    }
    table
}

/// Write `figure_<name>.csv` for every figure into `dir`.
pub fn write_figure_tables(dir: &Path, summaries: &[CellSummary]) -> Result<Vec<PathBuf>> {
    Figure::ALL
        .iter()
        .map(|f| {
            let path = dir.join(format!("figure_{}.csv", f.name()));
            figure_table(*f, summaries).write(&path)?;
            Ok(path)
        })
        .collect()
}

/// Human-readable per-cell table.
pub fn format_report(summaries: &[CellSummary]) -> String {
    use std::fmt::Write as _;
    let mut out = format!(
        "{:<12} {:>6} {:>6} {:>5}  {:>15}  {:>15}  {:>9}\n",
        "strategy", "v_p", "lambda", "seeds", "success", "fairness_bits", "steps"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<12} {:>6.2} {:>6.2} {:>5}  {:>7.3} ± {:<5.3}  {:>7.4} ± {:<5.3}  {:>9.1}",
            s.strategy,
            s.velocity,
            s.lambda,
            s.seeds,
            s.success.mean,
            s.success.std,
            s.fairness.mean,
            s.fairness.std,
            s.mean_steps.mean
        );
    }
    out
}
