//! Experiment registry (the eleven churn/drift scenarios), the batch runner
//! that executes NISR seeded runs, and CSV/manifest emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{self, SeriesPoint, WindowSummary, DEFAULT_ALPHA};
use crate::engine::{self, InteractionRecord, RoundStats, SimulationConfig};
use crate::population::ConsumerGroup;
use crate::{CaAuditEntry, Error};

/// Default base seed; run `i` uses `base_seed + i`.
pub const DEFAULT_BASE_SEED: u64 = 42;

/// A registry entry plus batch parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: u32,
    /// Number of independent simulation runs.
    pub nisr: u32,
    pub base_seed: u64,
    pub sim: SimulationConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(1..=11).contains(&self.id) {
            return Err(Error::UnknownExperiment(self.id));
        }
        if self.nisr == 0 {
            return Err(Error::InvalidConfig("nisr must be at least 1".into()));
        }
        self.sim.validate()
    }

    /// Canonical flat key=value form; parses back with [`ExperimentConfig::from_flat`].
    pub fn to_flat(&self) -> String {
        let mut s = String::new();
        let d = &self.sim.dynamics;
        let f = &self.sim.fire;
        let c = &self.sim.ca;
        let w = &self.sim.world;
        let n = &self.sim.counts;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("id", self.id.to_string());
        kv("rounds", self.sim.rounds.to_string());
        kv("nisr", self.nisr.to_string());
        kv("base_seed", self.base_seed.to_string());
        kv("n_good", n.good.to_string());
        kv("n_ordinary", n.ordinary.to_string());
        kv("n_intermittent", n.intermittent.to_string());
        kv("n_bad", n.bad.to_string());
        kv("n_consumers", n.consumers.to_string());
        kv("p_ppc", d.p_ppc.to_string());
        kv("p_cpc", d.p_cpc.to_string());
        kv("p_plc", d.p_plc.to_string());
        kv("p_clc", d.p_clc.to_string());
        kv("delta_phi_max", d.delta_phi_max.to_string());
        kv("p_mu_c", d.p_mu_c.to_string());
        kv("drift_magnitude", d.drift_magnitude.to_string());
        kv("p_profile_switch", d.p_profile_switch.to_string());
        kv("waiting_time_ms", d.waiting_time_ms.to_string());
        kv("ca_threshold", c.threshold.to_string());
        kv("ca_alpha", c.alpha.to_string());
        kv("ca_beta", c.beta.to_string());
        kv("fire_history_size", f.history_size.to_string());
        kv("fire_lambda", f.lambda.to_string());
        kv("fire_branching_factor", f.branching_factor.to_string());
        kv("fire_referral_length", f.referral_length.to_string());
        kv("fire_w_it", f.w_it.to_string());
        kv("fire_w_rt", f.w_rt.to_string());
        kv("fire_w_wr", f.w_wr.to_string());
        kv("fire_w_cr", f.w_cr.to_string());
        kv("fire_gamma_it", f.gamma_it.to_string());
        kv("fire_gamma_rt", f.gamma_rt.to_string());
        kv("fire_gamma_wr", f.gamma_wr.to_string());
        kv("fire_gamma_cr", f.gamma_cr.to_string());
        kv("fire_certified_capacity", f.certified_capacity.to_string());
        kv("fire_exploration", f.exploration.to_string());
        kv("fire_witness_response", f.witness_response.to_string());
        kv("radius_of_operation", w.radius_of_operation.to_string());
        kv("degradation_slope", w.degradation_slope.to_string());
        s
    }

    /// Parses a flat config. The `id` key is required; remaining keys
    /// override that experiment's registry entry, so partial files work.
    pub fn from_flat(text: &str) -> Result<Self, Error> {
        let pairs = parse_pairs(text)?;
        let id = pairs
            .iter()
            .find(|(_, k, _)| k == "id")
            .ok_or_else(|| Error::InvalidConfig("config file is missing the id key".into()))?;
        let id: u32 = id
            .2
            .parse()
            .map_err(|e| Error::ConfigParse { line: id.0, message: format!("id: {e}") })?;
        let mut cfg = experiment_config(id)?;
        cfg.apply_pairs(&pairs)?;
        Ok(cfg)
    }

    /// Applies flat key=value overrides on top of this config.
    pub fn apply_flat(&mut self, text: &str) -> Result<(), Error> {
        let pairs = parse_pairs(text)?;
        self.apply_pairs(&pairs)
    }

    fn apply_pairs(&mut self, pairs: &[(usize, String, String)]) -> Result<(), Error> {
        for (line, key, value) in pairs {
            self.apply_one(key, value).map_err(|message| Error::ConfigParse {
                line: *line,
                message,
            })?;
        }
        Ok(())
    }

    fn apply_one(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| format!("{key}: {e}"))
        }
        let d = &mut self.sim.dynamics;
        let f = &mut self.sim.fire;
        let c = &mut self.sim.ca;
        let w = &mut self.sim.world;
        let n = &mut self.sim.counts;
        match key {
            "id" => self.id = num(key, value)?,
            "rounds" => self.sim.rounds = num(key, value)?,
            "nisr" => self.nisr = num(key, value)?,
            "base_seed" => self.base_seed = num(key, value)?,
            "n_good" => n.good = num(key, value)?,
            "n_ordinary" => n.ordinary = num(key, value)?,
            "n_intermittent" => n.intermittent = num(key, value)?,
            "n_bad" => n.bad = num(key, value)?,
            "n_consumers" => n.consumers = num(key, value)?,
            "p_ppc" => d.p_ppc = num(key, value)?,
            "p_cpc" => d.p_cpc = num(key, value)?,
            "p_plc" => d.p_plc = num(key, value)?,
            "p_clc" => d.p_clc = num(key, value)?,
            "delta_phi_max" => d.delta_phi_max = num(key, value)?,
            "p_mu_c" => d.p_mu_c = num(key, value)?,
            "drift_magnitude" => d.drift_magnitude = num(key, value)?,
            "p_profile_switch" => d.p_profile_switch = num(key, value)?,
            "waiting_time_ms" => d.waiting_time_ms = num(key, value)?,
            "ca_threshold" => c.threshold = num(key, value)?,
            "ca_alpha" => c.alpha = num(key, value)?,
            "ca_beta" => c.beta = num(key, value)?,
            "fire_history_size" => f.history_size = num(key, value)?,
            "fire_lambda" => f.lambda = num(key, value)?,
            "fire_branching_factor" => f.branching_factor = num(key, value)?,
            "fire_referral_length" => f.referral_length = num(key, value)?,
            "fire_w_it" => f.w_it = num(key, value)?,
            "fire_w_rt" => f.w_rt = num(key, value)?,
            "fire_w_wr" => f.w_wr = num(key, value)?,
            "fire_w_cr" => f.w_cr = num(key, value)?,
            "fire_gamma_it" => f.gamma_it = num(key, value)?,
            "fire_gamma_rt" => f.gamma_rt = num(key, value)?,
            "fire_gamma_wr" => f.gamma_wr = num(key, value)?,
            "fire_gamma_cr" => f.gamma_cr = num(key, value)?,
            "fire_certified_capacity" => f.certified_capacity = num(key, value)?,
            "fire_exploration" => f.exploration = num(key, value)?,
            "fire_witness_response" => f.witness_response = num(key, value)?,
            "radius_of_operation" => w.radius_of_operation = num(key, value)?,
            "degradation_slope" => w.degradation_slope = num(key, value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// One-line description of the dynamics for listings.
    pub fn dynamics_summary(&self) -> String {
        let d = &self.sim.dynamics;
        let mut parts = Vec::new();
        if d.p_ppc > 0.0 {
            parts.push(format!("p_ppc={}", d.p_ppc));
        }
        if d.p_cpc > 0.0 {
            parts.push(format!("p_cpc={}", d.p_cpc));
        }
        if d.p_mu_c > 0.0 {
            parts.push(format!("p_mu_c={} M={}", d.p_mu_c, d.drift_magnitude));
        }
        if d.p_profile_switch > 0.0 {
            parts.push(format!("p_profile_switch={}", d.p_profile_switch));
        }
        if parts.is_empty() {
            "static".to_string()
        } else {
            parts.join(" ")
        }
    }
}

fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>, Error> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::ConfigParse {
                line: i + 1,
                message: format!("expected key=value, got '{line}'"),
            });
        };
        pairs.push((i + 1, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Registry of the eleven experiments. Dynamics per id:
/// 1 static; 2-4 provider churn at 2/5/10%; 5-7 consumer churn at 2/5/10%;
/// 8 both at 2%+5%; 9 both at 10%; 10 performance drift; 11 profile switch.
pub fn experiment_config(id: u32) -> Result<ExperimentConfig, Error> {
    let mut sim = SimulationConfig::default();
    let d = &mut sim.dynamics;
    match id {
        1 => {}
        2 => d.p_ppc = 0.02,
        3 => d.p_ppc = 0.05,
        4 => d.p_ppc = 0.10,
        5 => d.p_cpc = 0.02,
        6 => d.p_cpc = 0.05,
        7 => d.p_cpc = 0.10,
        8 => {
            d.p_ppc = 0.02;
            d.p_cpc = 0.05;
        }
        9 => {
            d.p_ppc = 0.10;
            d.p_cpc = 0.10;
        }
        10 => {
            d.p_mu_c = 0.10;
            d.drift_magnitude = 1.0;
        }
        11 => d.p_profile_switch = 0.02,
        _ => return Err(Error::UnknownExperiment(id)),
    }
    sim.rounds = match id {
        7..=9 => 1000,
        _ => 500,
    };
    let nisr = match id {
        1 | 2 | 6 | 8 | 10 | 11 => 30,
        3 | 4 | 5 | 7 => 10,
        9 => 12,
        _ => unreachable!(),
    };
    Ok(ExperimentConfig {
        id,
        nisr,
        base_seed: DEFAULT_BASE_SEED,
        sim,
    })
}

/// All registry entries, for `--list` style output.
pub fn list_experiments() -> Vec<ExperimentConfig> {
    (1..=11).map(|id| experiment_config(id).expect("registry id")).collect()
}

/// Batch execution knobs.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Rounds whose unserved CA consumers are audited.
    pub audit_rounds: Vec<u64>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            jobs: 0,
            audit_rounds: Vec::new(),
        }
    }
}

/// Everything a finished experiment yields, plus the paths written.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub records: Vec<InteractionRecord>,
    pub series: Vec<SeriesPoint>,
    /// Per interaction index: rank per group (None where the group lacks a
    /// point). Ranks run 3 (best) down to 1.
    pub ranks: BTreeMap<u32, [Option<u32>; 3]>,
    pub summaries: Vec<WindowSummary>,
    /// Per run, per round service accounting.
    pub round_stats: Vec<Vec<RoundStats>>,
    /// Per run audit entries for the sampled rounds.
    pub ca_audit: Vec<Vec<CaAuditEntry>>,
    pub run_seeds: Vec<u64>,
    pub interactions_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub manifest_path: PathBuf,
}

impl ExperimentOutput {
    /// Mean pooled UG of a group over an inclusive interaction window.
    pub fn window_mean(&self, group: ConsumerGroup, start: u32, end: u32) -> Option<f64> {
        let values: Vec<f64> = self
            .series
            .iter()
            .filter(|p| p.group == group && p.interaction_index >= start && p.interaction_index <= end)
            .map(|p| p.pooled_mean)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    /// Largest interaction index at which every group still has a point.
    pub fn max_common_index(&self) -> Option<u32> {
        let mut per_group = [0u32; 3];
        for p in &self.series {
            let g = p.group.index();
            per_group[g] = per_group[g].max(p.interaction_index);
        }
        per_group.iter().copied().min().filter(|&m| m > 0)
    }
}

/// Runs the experiment's NISR seeded simulations, aggregates and ranks the
/// records, and writes the per-interaction CSV, the summary CSV and a run
/// manifest into `opts.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput, Error> {
    cfg.validate()?;
    fs::create_dir_all(&opts.out_dir)?;
    let interactions_csv = opts.out_dir.join(format!("exp{}_interactions.csv", cfg.id));
    let summary_csv = opts.out_dir.join(format!("exp{}_summary.csv", cfg.id));
    let manifest_path = opts.out_dir.join(format!("exp{}_manifest.txt", cfg.id));

    let run_seeds: Vec<u64> = (0..cfg.nisr).map(|i| cfg.base_seed + i as u64).collect();
    // The manifest goes first: an unwritable output directory must abort
    // before any simulation work starts.
    fs::write(&manifest_path, manifest_text(cfg, &run_seeds))?;

    let runs = execute_runs(cfg, &run_seeds, opts)?;

    let mut records = Vec::new();
    let mut round_stats = Vec::with_capacity(runs.len());
    let mut ca_audit = Vec::with_capacity(runs.len());
    for run in runs {
        records.extend(run.records);
        round_stats.push(run.round_stats);
        ca_audit.push(run.ca_audit);
    }

    let series = analysis::aggregate(&records, cfg.nisr);
    let ranks = rank_series(&series);
    let n_max = series.iter().map(|p| p.interaction_index).max().unwrap_or(0);
    let windows = summary_windows(n_max);
    let summaries = analysis::summarize(&series, &windows);

    fs::write(&interactions_csv, interactions_csv_text(&series, &ranks))?;
    fs::write(&summary_csv, summary_csv_text(&summaries, n_max))?;

    Ok(ExperimentOutput {
        config: cfg.clone(),
        records,
        series,
        ranks,
        summaries,
        round_stats,
        ca_audit,
        run_seeds,
        interactions_csv,
        summary_csv,
        manifest_path,
    })
}

fn execute_runs(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    opts: &RunOptions,
) -> Result<Vec<engine::RunOutput>, Error> {
    use rayon::prelude::*;
    let run = |(i, seed): (usize, u64)| engine::run_simulation(&cfg.sim, seed, i as u32, &opts.audit_rounds);
    let indexed: Vec<(usize, u64)> = seeds.iter().copied().enumerate().collect();
    if opts.jobs == 1 {
        indexed.into_iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
        pool.install(|| indexed.into_par_iter().map(run).collect())
    }
}

/// Steady-state style windows: early, mid, late, plus overall.
pub fn summary_windows(n_max: u32) -> Vec<(u32, u32)> {
    vec![(1, 50), (51, 200), (201, n_max), (1, n_max)]
}

/// Per-index group ranks from pairwise Welch tests over the per-run means.
fn rank_series(series: &[SeriesPoint]) -> BTreeMap<u32, [Option<u32>; 3]> {
    let mut by_index: BTreeMap<u32, Vec<&SeriesPoint>> = BTreeMap::new();
    for p in series {
        by_index.entry(p.interaction_index).or_default().push(p);
    }
    let mut ranks = BTreeMap::new();
    for (k, points) in by_index {
        let means: Vec<f64> = points.iter().map(|p| p.pooled_mean).collect();
        let mut sig = vec![vec![false; points.len()]; points.len()];
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let s = analysis::welch_t_test(
                    &points[i].per_run_means,
                    &points[j].per_run_means,
                    DEFAULT_ALPHA,
                )
                .significant;
                sig[i][j] = s;
                sig[j][i] = s;
            }
        }
        let group_ranks = analysis::rank_groups(&means, &sig);
        let mut row = [None; 3];
        for (p, r) in points.iter().zip(group_ranks) {
            row[p.group.index()] = Some(r);
        }
        ranks.insert(k, row);
    }
    ranks
}

const INTERACTIONS_HEADER: &str = "interaction,mean_ug_notrust,mean_ug_fire,mean_ug_ca,rank_notrust,rank_fire,rank_ca,n_runs_notrust,n_runs_fire,n_runs_ca";

fn interactions_csv_text(series: &[SeriesPoint], ranks: &BTreeMap<u32, [Option<u32>; 3]>) -> String {
    let mut points: BTreeMap<(u32, usize), &SeriesPoint> = BTreeMap::new();
    for p in series {
        points.insert((p.interaction_index, p.group.index()), p);
    }
    let mut out = String::from(INTERACTIONS_HEADER);
    out.push('\n');
    for (&k, rank_row) in ranks {
        let cell = |g: usize| points.get(&(k, g));
        let mean = |g: usize| cell(g).map_or(String::new(), |p| p.pooled_mean.to_string());
        let rank = |g: usize| rank_row[g].map_or(String::new(), |r| r.to_string());
        let n_runs = |g: usize| cell(g).map_or(String::new(), |p| p.per_run_means.len().to_string());
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{},{},{},{},{}",
            mean(0),
            mean(1),
            mean(2),
            rank(0),
            rank(1),
            rank(2),
            n_runs(0),
            n_runs(1),
            n_runs(2),
        );
    }
    out
}

const SUMMARY_HEADER: &str = "group,window,start,end,mean_ug,n_points";

fn summary_csv_text(summaries: &[WindowSummary], n_max: u32) -> String {
    let labels = ["early", "mid", "late", "overall"];
    let windows = summary_windows(n_max);
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for group in ConsumerGroup::ALL {
        for (label, (start, end)) in labels.iter().zip(&windows) {
            let s = summaries
                .iter()
                .find(|w| w.group == group && w.start == *start && w.end == *end)
                .expect("summary row for every window");
            let mean = s.mean.map_or(String::new(), |m| m.to_string());
            let _ = writeln!(
                out,
                "{},{label},{start},{end},{mean},{}",
                group.key(),
                s.n_points
            );
        }
    }
    out
}

fn manifest_text(cfg: &ExperimentConfig, seeds: &[u64]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# experiment run manifest");
    let _ = writeln!(out, "code_version=trustbed-core {}", env!("CARGO_PKG_VERSION"));
    out.push_str(&cfg.to_flat());
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "run_seeds={}", seeds.join(","));
    out
}

/// Reads back the interactions CSV (used by tests and determinism checks).
pub fn read_file(path: &Path) -> Result<String, Error> {
    Ok(fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn desk(id: u32, rounds: u64, nisr: u32) -> ExperimentConfig {
        let mut cfg = experiment_config(id).unwrap();
        cfg.sim.rounds = rounds;
        cfg.nisr = nisr;
        cfg
    }

    #[test]
    fn registry_matches_the_experiment_table() {
        let e1 = experiment_config(1).unwrap();
        assert_eq!(e1.dynamics_summary(), "static");
        assert_eq!((e1.nisr, e1.sim.rounds), (30, 500));

        let e4 = experiment_config(4).unwrap();
        assert_eq!(e4.sim.dynamics.p_ppc, 0.10);
        assert_eq!((e4.nisr, e4.sim.rounds), (10, 500));

        let e7 = experiment_config(7).unwrap();
        assert_eq!(e7.sim.dynamics.p_cpc, 0.10);
        assert_eq!((e7.nisr, e7.sim.rounds), (10, 1000));

        let e8 = experiment_config(8).unwrap();
        assert_eq!((e8.sim.dynamics.p_ppc, e8.sim.dynamics.p_cpc), (0.02, 0.05));
        assert_eq!((e8.nisr, e8.sim.rounds), (30, 1000));

        let e9 = experiment_config(9).unwrap();
        assert_eq!((e9.sim.dynamics.p_ppc, e9.sim.dynamics.p_cpc), (0.10, 0.10));
        assert_eq!((e9.nisr, e9.sim.rounds), (12, 1000));

        let e10 = experiment_config(10).unwrap();
        assert_eq!((e10.sim.dynamics.p_mu_c, e10.sim.dynamics.drift_magnitude), (0.10, 1.0));
        assert_eq!(e10.nisr, 30);

        let e11 = experiment_config(11).unwrap();
        assert_eq!(e11.sim.dynamics.p_profile_switch, 0.02);
        assert_eq!(e11.nisr, 30);

        for id in [2u32, 3] {
            let e = experiment_config(id).unwrap();
            assert_eq!(e.sim.dynamics.p_ppc, if id == 2 { 0.02 } else { 0.05 });
        }
        for id in [5u32, 6] {
            let e = experiment_config(id).unwrap();
            assert_eq!(e.sim.dynamics.p_cpc, if id == 5 { 0.02 } else { 0.05 });
        }
    }

    #[test]
    fn unknown_id_is_rejected_with_the_valid_range() {
        let err = experiment_config(12).unwrap_err();
        assert!(err.to_string().contains("1..=11"), "{err}");
    }

    #[test]
    fn overrides_apply_on_top_of_the_registry() {
        let mut cfg = experiment_config(1).unwrap();
        cfg.apply_flat("rounds=50\n").unwrap();
        assert_eq!(cfg.sim.rounds, 50);
        assert_eq!(cfg.dynamics_summary(), "static");
    }

    #[test]
    fn flat_round_trips_every_registry_entry() {
        for id in 1..=11 {
            let cfg = experiment_config(id).unwrap();
            let parsed = ExperimentConfig::from_flat(&cfg.to_flat()).unwrap();
            assert_eq!(parsed, cfg, "round-trip failed for experiment {id}");
        }
        // And an entry with non-default values everywhere.
        let mut cfg = experiment_config(9).unwrap();
        cfg.base_seed = 777;
        cfg.nisr = 3;
        cfg.sim.rounds = 123;
        cfg.sim.fire.exploration = 0.35;
        cfg.sim.ca.alpha = 0.17;
        cfg.sim.world.radius_of_operation = 0.41;
        let parsed = ExperimentConfig::from_flat(&cfg.to_flat()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn flat_parser_rejects_unknown_keys_and_garbage() {
        assert!(ExperimentConfig::from_flat("id=1\nnope=3\n").is_err());
        assert!(ExperimentConfig::from_flat("id=1\nrounds\n").is_err());
        assert!(ExperimentConfig::from_flat("rounds=5\n").is_err());
        let mut cfg = experiment_config(1).unwrap();
        assert!(cfg.apply_flat("rounds=abc\n").is_err());
    }

    #[test]
    fn flat_parser_skips_comments_and_blank_lines() {
        let cfg = ExperimentConfig::from_flat("# comment\n\nid=2\nrounds=7\n").unwrap();
        assert_eq!(cfg.id, 2);
        assert_eq!(cfg.sim.rounds, 7);
        assert_eq!(cfg.sim.dynamics.p_ppc, 0.02);
    }

    #[test]
    fn run_experiment_writes_the_three_files() {
        let dir = tempdir().unwrap();
        let cfg = desk(1, 10, 2);
        let out = run_experiment(&cfg, &RunOptions::new(dir.path())).unwrap();
        let text = read_file(&out.interactions_csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), INTERACTIONS_HEADER);
        // Interaction indices are bounded by the round count.
        let body: Vec<&str> = lines.collect();
        assert!(!body.is_empty());
        assert!(body.len() <= 10);
        for line in &body {
            let k: u32 = line.split(',').next().unwrap().parse().unwrap();
            assert!(k >= 1 && k <= 10);
        }
        let summary = read_file(&out.summary_csv).unwrap();
        assert_eq!(summary.lines().next().unwrap(), SUMMARY_HEADER);
        assert_eq!(summary.lines().count(), 1 + 12);
        let manifest = read_file(&out.manifest_path).unwrap();
        assert!(manifest.contains("id=1"));
        assert!(manifest.contains("run_seeds=42,43"));
        assert!(manifest.contains("code_version=trustbed-core"));
    }

    #[test]
    fn identical_config_and_seed_produce_bit_identical_csvs() {
        let cfg = desk(1, 15, 2);
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let a = run_experiment(&cfg, &RunOptions::new(dir_a.path())).unwrap();
        let b = run_experiment(&cfg, &RunOptions::new(dir_b.path())).unwrap();
        assert_eq!(
            read_file(&a.interactions_csv).unwrap(),
            read_file(&b.interactions_csv).unwrap()
        );
        assert_eq!(read_file(&a.summary_csv).unwrap(), read_file(&b.summary_csv).unwrap());
    }

    #[test]
    fn worker_count_does_not_change_the_output() {
        let cfg = desk(1, 12, 3);
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let mut serial = RunOptions::new(dir_a.path());
        serial.jobs = 1;
        let mut parallel = RunOptions::new(dir_b.path());
        parallel.jobs = 3;
        let a = run_experiment(&cfg, &serial).unwrap();
        let b = run_experiment(&cfg, &parallel).unwrap();
        assert_eq!(
            read_file(&a.interactions_csv).unwrap(),
            read_file(&b.interactions_csv).unwrap()
        );
    }

    #[test]
    fn rank_cells_are_valid_when_present() {
        let dir = tempdir().unwrap();
        let cfg = desk(1, 25, 3);
        let out = run_experiment(&cfg, &RunOptions::new(dir.path())).unwrap();
        let mut saw_rank = false;
        for row in out.ranks.values() {
            for rank in row.iter().flatten() {
                saw_rank = true;
                assert!((1..=3).contains(rank));
            }
        }
        assert!(saw_rank);
    }

    #[test]
    fn unwritable_out_dir_aborts_before_simulating() {
        let dir = tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        // Huge config would take minutes; the write failure must come first.
        let mut cfg = experiment_config(9).unwrap();
        cfg.sim.rounds = 1_000_000;
        let t0 = std::time::Instant::now();
        let err = run_experiment(&cfg, &RunOptions::new(blocker.join("sub"))).unwrap_err();
        assert!(t0.elapsed().as_secs() < 5, "did not abort early");
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn csv_row_count_matches_aggregate_points() {
        let dir = tempdir().unwrap();
        let cfg = desk(1, 20, 2);
        let out = run_experiment(&cfg, &RunOptions::new(dir.path())).unwrap();
        let text = read_file(&out.interactions_csv).unwrap();
        let body_rows = text.lines().count() - 1;
        let distinct: std::collections::BTreeSet<u32> =
            out.series.iter().map(|p| p.interaction_index).collect();
        assert_eq!(body_rows, distinct.len());
        let cells: usize = text
            .lines()
            .skip(1)
            .map(|l| {
                let parts: Vec<&str> = l.split(',').collect();
                (1..=3).filter(|&i| !parts[i].is_empty()).count()
            })
            .sum();
        assert_eq!(cells, out.series.len());
    }
}
