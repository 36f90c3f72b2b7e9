//! Monte Carlo experiments over strategy arms, metrics and CSV output.
//!
//! Every run index maps to one seed. All arms evaluated at a given
//! `(n, run)` see the same scenario and fading draws, so arm comparisons are
//! paired. Runs execute in parallel; results are reassembled in
//! `(n, arm, run)` order so output bytes do not depend on scheduling.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde_json::Value;

use crate::association::{associate, build_preferences, feasible, AssociationMode, Matching, PreferenceLists};
use crate::channel::ChannelState;
use crate::compute::{split_ratio, task_delay, waterfill, AllocationResult, OffloadDemand};
use crate::error::{Result, SimError};
use crate::noma::SicMode;
use crate::scenario::{make_grid_topology, populate_devices, Scenario, SimParams};

/// One strategy: association rule plus SIC decoding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Arm {
    pub association: AssociationMode,
    pub sic: SicMode,
}

impl Arm {
    pub const GAME_DEADLINE: Arm = Arm {
        association: AssociationMode::Game,
        sic: SicMode::DeadlineAscending,
    };
    pub const DIST_DEADLINE: Arm = Arm {
        association: AssociationMode::Distance,
        sic: SicMode::DeadlineAscending,
    };
    pub const DIST_CHANNEL: Arm = Arm {
        association: AssociationMode::Distance,
        sic: SicMode::ChannelDescending,
    };

    /// Proposed scheme followed by the two reference schemes.
    pub const DEFAULTS: [Arm; 3] = [Arm::GAME_DEADLINE, Arm::DIST_DEADLINE, Arm::DIST_CHANNEL];
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let assoc = match self.association {
            AssociationMode::Game => "game",
            AssociationMode::Distance => "dist",
        };
        write!(f, "{assoc}-{}", self.sic)
    }
}

impl FromStr for Arm {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let (assoc, sic) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| SimError::Config(format!("arm {s:?} is not of the form <association>-<sic_order>")))?;
        Ok(Arm {
            association: assoc.parse()?,
            sic: sic.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sim_params: SimParams<f64>,
    pub n_devices_sweep: Vec<usize>,
    pub runs_per_point: usize,
    pub arms: Vec<Arm>,
    pub base_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sim_params: SimParams::default(),
            n_devices_sweep: (10..=55).step_by(5).collect(),
            runs_per_point: 100,
            arms: Arm::DEFAULTS.to_vec(),
            base_seed: 0,
        }
    }
}

const EXPERIMENT_KEYS: [&str; 6] = [
    "association",
    "sic_order",
    "arms",
    "runs_per_point",
    "n_devices_sweep",
    "base_seed",
];

fn config_err(key: &str, expected: &str) -> SimError {
    SimError::Config(format!("key `{key}` must be {expected}"))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim_params.validate()?;
        if self.runs_per_point == 0 {
            return Err(SimError::param("runs_per_point", "must be >= 1"));
        }
        if self.n_devices_sweep.is_empty() {
            return Err(SimError::param("n_devices_sweep", "must not be empty"));
        }
        if self.arms.is_empty() {
            return Err(SimError::param("arms", "must not be empty"));
        }
        Ok(())
    }

    /// Flat JSON object: every [`SimParams`] key plus the optional experiment
    /// keys `association`, `sic_order`, `arms`, `runs_per_point`,
    /// `n_devices_sweep` and `base_seed`. Unknown keys are rejected.
    ///
    /// `association`/`sic_order` select a single arm (missing half defaults to
    /// `game`/`deadline`); `arms` takes a list of arm ids instead.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        let Value::Object(mut map) = value else {
            return Err(SimError::Config("top level must be a JSON object".into()));
        };
        let mut extracted = serde_json::Map::new();
        for key in EXPERIMENT_KEYS {
            if let Some(v) = map.remove(key) {
                extracted.insert(key.to_string(), v);
            }
        }
        let sim_params = SimParams::from_json_value(Value::Object(map))?;
        let mut cfg = ExperimentConfig {
            base_seed: sim_params.seed,
            sim_params,
            ..Default::default()
        };

        let str_of = |key: &str| -> Result<Option<String>> {
            match extracted.get(key) {
                None => Ok(None),
                Some(Value::String(s)) => Ok(Some(s.clone())),
                Some(_) => Err(config_err(key, "a string")),
            }
        };
        let assoc = str_of("association")?;
        let sic = str_of("sic_order")?;
        if assoc.is_some() || sic.is_some() {
            cfg.arms = vec![Arm {
                association: assoc.as_deref().unwrap_or("game").parse()?,
                sic: sic.as_deref().unwrap_or("deadline").parse()?,
            }];
        }
        if let Some(v) = extracted.get("arms") {
            let list = v.as_array().ok_or_else(|| config_err("arms", "a list of arm ids"))?;
            cfg.arms = list
                .iter()
                .map(|a| a.as_str().ok_or_else(|| config_err("arms", "a list of arm ids"))?.parse())
                .collect::<Result<_>>()?;
        }
        if let Some(v) = extracted.get("runs_per_point") {
            cfg.runs_per_point = v
                .as_u64()
                .ok_or_else(|| config_err("runs_per_point", "a positive integer"))? as usize;
        }
        if let Some(v) = extracted.get("n_devices_sweep") {
            let list = v
                .as_array()
                .ok_or_else(|| config_err("n_devices_sweep", "a list of device counts"))?;
            cfg.n_devices_sweep = list
                .iter()
                .map(|n| {
                    n.as_u64()
                        .map(|n| n as usize)
                        .ok_or_else(|| config_err("n_devices_sweep", "a list of device counts"))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = extracted.get("base_seed") {
            cfg.base_seed = v.as_u64().ok_or_else(|| config_err("base_seed", "an unsigned integer"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Seed of run `index`.
pub fn run_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// Per-device outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceOutcome {
    pub bs: Option<usize>,
    pub deadline_s: f64,
    /// `None` when unassociated.
    pub allocation: Option<AllocationResult<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub arm: Arm,
    pub n_devices: usize,
    pub seed: u64,
    /// Realized delays of served devices plus the penalty for every unserved one.
    pub total_delay_s: f64,
    pub unassociated_fraction: f64,
    pub bs_load: Vec<usize>,
    pub bs_capacity: Vec<f64>,
    pub devices: Vec<DeviceOutcome>,
}

/// Scenario, channel and preferences shared by every arm of one run.
#[derive(Debug, Clone)]
pub struct World {
    pub seed: u64,
    pub scenario: Scenario<f64>,
    pub channel: ChannelState<f64>,
    pub prefs: PreferenceLists,
}

impl World {
    pub fn generate(params: &SimParams<f64>, seed: u64, n: usize) -> Result<Self> {
        let topology = make_grid_topology(SimParams {
            seed,
            ..params.clone()
        })?;
        let scenario = populate_devices(&topology, n, seed);
        let channel = ChannelState::draw(&scenario, seed)?;
        let prefs = build_preferences(&scenario, &channel);
        Ok(World {
            seed,
            scenario,
            channel,
            prefs,
        })
    }

    pub fn run(&self, arm: Arm) -> Result<RunMetrics> {
        let matching = associate(arm.association, &self.scenario, &self.prefs, &self.channel, arm.sic)?;
        evaluate(self, arm, &matching)
    }
}

/// Uplink plan, water-filling and staged transmission for each served cell.
pub fn evaluate(world: &World, arm: Arm, matching: &Matching) -> Result<RunMetrics> {
    let scenario = &world.scenario;
    let params = scenario.params();
    let devices = scenario.devices();
    let n = devices.len();
    let m = scenario.num_bss();
    let mut outcomes: Vec<DeviceOutcome> = devices
        .iter()
        .enumerate()
        .map(|(v, d)| DeviceOutcome {
            bs: matching.assignment[v],
            deadline_s: d.deadline_s,
            allocation: None,
        })
        .collect();

    for b in 0..m {
        let members = matching.members(b);
        if members.is_empty() {
            continue;
        }
        let admission = feasible(scenario, &world.channel, arm.sic, b, &members)?.ok_or_else(|| {
            SimError::domain("evaluate", format!("association left bs {b} with an infeasible set"))
        })?;
        let mut plan = admission.plan;
        let demands: Vec<OffloadDemand<f64>> = plan
            .order
            .iter()
            .zip(&plan.rates_bps)
            .zip(&admission.min_rates)
            .map(|((&v, &r), &u)| OffloadDemand {
                workload_bits: devices[v].workload_bits,
                deadline_s: devices[v].deadline_s,
                local_rate_bps: devices[v].local_rate_bps,
                uplink_rate_bps: r,
                min_rate_bps: u,
            })
            .collect();
        let rates = waterfill(&demands, scenario.bss()[b].capacity_bps)?;

        let mut alphas = Vec::with_capacity(demands.len());
        let mut planned = Vec::with_capacity(demands.len());
        for (d, &u) in demands.iter().zip(&rates) {
            alphas.push(split_ratio(d.local_rate_bps, d.uplink_rate_bps, u)?);
            planned.push(task_delay(d.workload_bits, d.local_rate_bps, d.uplink_rate_bps, u)?);
        }
        let bits: Vec<f64> = demands.iter().zip(&alphas).map(|(d, a)| a * d.workload_bits).collect();
        let upload_done = plan.run_timeline(&bits, world.channel.noise_w(), params.bandwidth_hz)?;

        for (k, &v) in plan.order.iter().enumerate() {
            let d = &demands[k];
            let (alpha, u) = (alphas[k], rates[k]);
            let local = (1.0 - alpha) * d.workload_bits / d.local_rate_bps;
            let offload = if alpha > 0.0 {
                upload_done[k] + bits[k] / u
            } else {
                0.0
            };
            let realized = local.max(offload);
            outcomes[v].allocation = Some(AllocationResult {
                alpha,
                mec_rate_bps: u,
                planned_delay_s: planned[k],
                realized_delay_s: realized,
                met_deadline: realized <= d.deadline_s * (1.0 + 1e-9),
            });
        }
    }

    let unassociated = matching.unassociated();
    let served: f64 = outcomes
        .iter()
        .filter_map(|o| o.allocation.map(|a| a.realized_delay_s))
        .sum();
    Ok(RunMetrics {
        arm,
        n_devices: n,
        seed: world.seed,
        total_delay_s: served + params.penalty_delay_s * unassociated as f64,
        unassociated_fraction: if n == 0 {
            0.0
        } else {
            unassociated as f64 / n as f64
        },
        bs_load: matching.load(m),
        bs_capacity: scenario.bss().iter().map(|b| b.capacity_bps).collect(),
        devices: outcomes,
    })
}

/// Full pipeline for one `(seed, n, arm)`.
pub fn run_once(params: &SimParams<f64>, scenario_seed: u64, n: usize, arm: Arm) -> Result<RunMetrics> {
    World::generate(params, scenario_seed, n)?.run(arm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub arm: Arm,
    pub n_devices: usize,
    pub mean_total_delay_s: f64,
    pub std_total_delay_s: f64,
    pub mean_unassoc_frac: f64,
    pub std_unassoc_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// Ordered by sweep point, then arm, then run index.
    pub runs: Vec<RunMetrics>,
    /// Ordered by sweep point, then arm.
    pub aggregates: Vec<AggregateRow>,
}

impl SweepTable {
    pub fn aggregate(&self, arm: Arm, n: usize) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|r| r.arm == arm && r.n_devices == n)
    }
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepTable> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = config
        .n_devices_sweep
        .iter()
        .flat_map(|&n| (0..config.runs_per_point).map(move |r| (n, r)))
        .collect();
    let per_job: Vec<Vec<RunMetrics>> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let world = World::generate(&config.sim_params, run_seed(config.base_seed, r), n)?;
            config.arms.iter().map(|&arm| world.run(arm)).collect()
        })
        .collect::<Result<_>>()?;

    let runs_per_point = config.runs_per_point;
    let mut runs = Vec::with_capacity(jobs.len() * config.arms.len());
    let mut aggregates = Vec::new();
    for (p, &n) in config.n_devices_sweep.iter().enumerate() {
        let block = &per_job[p * runs_per_point..(p + 1) * runs_per_point];
        for (a, &arm) in config.arms.iter().enumerate() {
            let arm_runs: Vec<&RunMetrics> = block.iter().map(|job| &job[a]).collect();
            let delays: Vec<f64> = arm_runs.iter().map(|r| r.total_delay_s).collect();
            let fracs: Vec<f64> = arm_runs.iter().map(|r| r.unassociated_fraction).collect();
            let (mean_total_delay_s, std_total_delay_s) = mean_std(&delays);
            let (mean_unassoc_frac, std_unassoc_frac) = mean_std(&fracs);
            aggregates.push(AggregateRow {
                arm,
                n_devices: n,
                mean_total_delay_s,
                std_total_delay_s,
                mean_unassoc_frac,
                std_unassoc_frac,
            });
            runs.extend(arm_runs.into_iter().cloned());
        }
    }
    Ok(SweepTable { runs, aggregates })
}

pub const RUNS_CSV: &str = "runs.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const BS_LOAD_CSV: &str = "bs_load.csv";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let io = |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    Ok(())
}

pub fn runs_csv(table: &SweepTable) -> String {
    let mut out = String::from("arm,n_devices,seed,total_delay_s,unassociated_fraction\n");
    for r in &table.runs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.arm, r.n_devices, r.seed, r.total_delay_s, r.unassociated_fraction
        ));
    }
    out
}

pub fn aggregate_csv(table: &SweepTable) -> String {
    let mut out = String::from(
        "arm,n_devices,mean_total_delay_s,std_total_delay_s,mean_unassoc_frac,std_unassoc_frac\n",
    );
    for a in &table.aggregates {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            a.arm, a.n_devices, a.mean_total_delay_s, a.std_total_delay_s, a.mean_unassoc_frac, a.std_unassoc_frac
        ));
    }
    out
}

pub fn bs_load_csv(table: &SweepTable) -> String {
    let mut out = String::from("arm,n_devices,seed,bs_id,capacity_bps,load\n");
    for r in &table.runs {
        for (b, (cap, load)) in r.bs_capacity.iter().zip(&r.bs_load).enumerate() {
            out.push_str(&format!("{},{},{},{},{},{}\n", r.arm, r.n_devices, r.seed, b, cap, load));
        }
    }
    out
}

/// Writes the per-run, aggregate and per-BS load CSVs into `dir` and returns their paths.
pub fn emit_results(table: &SweepTable, dir: &Path) -> Result<Vec<PathBuf>> {
    if table.runs.is_empty() {
        return Err(SimError::Empty("emit_results"));
    }
    fs::create_dir_all(dir).map_err(|source| SimError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let files = [
        (RUNS_CSV, runs_csv(table)),
        (AGGREGATE_CSV, aggregate_csv(table)),
        (BS_LOAD_CSV, bs_load_csv(table)),
    ];
    let mut paths = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = dir.join(name);
        write_file(&path, &contents)?;
        paths.push(path);
    }
    Ok(paths)
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with tied values sharing their average rank.
/// `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "spearman: length mismatch");
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_ids_round_trip() {
        for arm in Arm::DEFAULTS {
            assert_eq!(arm.to_string().parse::<Arm>().unwrap(), arm);
        }
        assert_eq!(Arm::GAME_DEADLINE.to_string(), "game-deadline");
        assert_eq!(Arm::DIST_CHANNEL.to_string(), "dist-channel");
        assert!("game".parse::<Arm>().is_err());
        assert!("game-fastest".parse::<Arm>().is_err());
    }

    #[test]
    fn config_keys() {
        let cfg = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let cfg = ExperimentConfig::from_json_str(
            r#"{"association": "distance", "sic_order": "channel", "seed": 9, "runs_per_point": 3}"#,
        )
        .unwrap();
        assert_eq!(cfg.arms, vec![Arm::DIST_CHANNEL]);
        assert_eq!(cfg.base_seed, 9);
        assert_eq!(cfg.runs_per_point, 3);
        assert!(ExperimentConfig::from_json_str(r#"{"sic_order": "random"}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"colour": 1}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"runs_per_point": 0}"#).is_err());
        assert!(ExperimentConfig::from_json_str("[]").is_err());
    }

    #[test]
    fn empty_population() {
        let m = run_once(&SimParams::default(), 3, 0, Arm::GAME_DEADLINE).unwrap();
        assert_eq!(m.total_delay_s, 0.0);
        assert_eq!(m.unassociated_fraction, 0.0);
        assert_eq!(m.bs_load, vec![0; 9]);
    }

    #[test]
    fn single_run_std_is_zero() {
        let cfg = ExperimentConfig {
            n_devices_sweep: vec![5],
            runs_per_point: 1,
            ..Default::default()
        };
        let t = run_sweep(&cfg).unwrap();
        assert!(t.aggregates.iter().all(|a| a.std_total_delay_s == 0.0 && a.std_unassoc_frac == 0.0));
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), None);
        // ties share ranks: x ranks (1,2,3,4), y ranks (1.5,1.5,3,4)
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 1.0, 2.0]).unwrap();
        let (rx, ry) = ([1.0, 2.0, 3.0, 4.0], [1.5, 1.5, 3.0, 4.0]);
        let mean = 2.5;
        let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
        let sxx: f64 = rx.iter().map(|a| (a - mean).powi(2)).sum();
        let syy: f64 = ry.iter().map(|b| (b - mean).powi(2)).sum();
        assert!((r - sxy / (sxx * syy).sqrt()).abs() < 1e-15);
    }
}
