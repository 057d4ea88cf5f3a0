//! Batch experiments: a JSON manifest describes a grid of sizes, every instance gets an
//! index-derived seed, per-instance records go to a JSON-lines log and aggregates to CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basic::{self, BpConfig, BpStatus, Scheme};
use crate::epra::{self, EpraConfig, EpraStatus, RescaleMode};
use crate::error::{Error, Result};
use crate::instances::{derive_seed, gen_controlled, gen_naive, gen_partitioned, DEFAULT_DELTA_CAP};
use crate::oracle::verify_relint_pair;
use crate::subspace::{primal_projector, Instance, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    BpNaive,
    BpControlled,
    EpraControlled,
    EpraPartition,
    EpraNaive,
    RescaleModeCompare,
}

impl Experiment {
    pub fn tag(self) -> &'static str {
        match self {
            Experiment::BpNaive => "BpNaive",
            Experiment::BpControlled => "BpControlled",
            Experiment::EpraControlled => "EpraControlled",
            Experiment::EpraPartition => "EpraPartition",
            Experiment::EpraNaive => "EpraNaive",
            Experiment::RescaleModeCompare => "RescaleModeCompare",
        }
    }

    fn is_bp(self) -> bool {
        matches!(self, Experiment::BpNaive | Experiment::BpControlled)
    }
}

fn default_u() -> f64 {
    1e10
}

fn default_parallelism() -> usize {
    1
}

fn default_max_rounds() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub experiment: Experiment,
    /// `[m, n]` pairs, or `[n]` for `EpraPartition`.
    pub sizes: Vec<Vec<usize>>,
    pub instances_per_cell: usize,
    pub epsilon: f64,
    /// Basic-procedure iteration cap; 0 means none (inside EPRA: the solver default).
    pub iter_limit: usize,
    #[serde(rename = "U", default = "default_u")]
    pub u_cap: f64,
    pub base_seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Schemes to run; defaults to all four for BP experiments, smooth otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schemes: Option<Vec<String>>,
    /// Small-entry cap for generated instances; see [`crate::GenSpec::delta_cap`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_cap: Option<f64>,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
}

impl ExperimentManifest {
    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidInput(s));
        if self.instances_per_cell < 1 {
            return bad("instances_per_cell must be at least 1".into());
        }
        if self.sizes.is_empty() {
            return bad("sizes must not be empty".into());
        }
        for s in &self.sizes {
            match (self.experiment, s.len()) {
                (Experiment::EpraPartition, 1 | 2) => {}
                (_, 2) => {}
                _ => return bad(format!("bad size entry {s:?} for {}", self.experiment.tag())),
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must be in (0, 1), got {}", self.epsilon));
        }
        if !(self.u_cap > 1.0 && self.u_cap.is_finite()) {
            return bad(format!("U must exceed 1, got {}", self.u_cap));
        }
        if self.max_rounds < 1 {
            return bad("max_rounds must be at least 1".into());
        }
        self.scheme_list()?;
        Ok(())
    }

    fn scheme_list(&self) -> Result<Vec<Scheme>> {
        match &self.schemes {
            None if self.experiment.is_bp() => Ok(Scheme::ALL.to_vec()),
            None => Ok(vec![Scheme::SmoothPerceptron]),
            Some(v) if v.is_empty() => Err(Error::InvalidInput("schemes must not be empty".into())),
            Some(v) => v
                .iter()
                .map(|s| {
                    Scheme::from_tag(s).ok_or_else(|| Error::InvalidInput(format!("unknown scheme {s}")))
                })
                .collect(),
        }
    }

    /// `(m, n)` of a size entry; `m` is `None` for partitioned cells.
    fn cell(&self, idx: usize) -> (Option<usize>, usize) {
        match self.sizes[idx].as_slice() {
            [n] => (None, *n),
            [m, n] => (Some(*m), *n),
            _ => unreachable!("validated"),
        }
    }
}

/// One solver run on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub experiment: Experiment,
    pub m: usize,
    pub n: usize,
    pub scheme: String,
    pub index: usize,
    pub seed: u64,
    pub status: String,
    pub iterations: usize,
    pub rounds: usize,
    pub total_bp_iterations: usize,
    pub cpu_seconds: f64,
    pub success: bool,
    pub primal_feasible: bool,
    /// Row count of the generated instance.
    pub m_actual: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: Experiment,
    pub m: usize,
    pub n: usize,
    pub scheme: String,
    pub avg_iterations: f64,
    pub avg_cpu_seconds: f64,
    pub success_rate: f64,
    pub avg_rescaling_rounds: Option<f64>,
    pub avg_total_bp_iterations: Option<f64>,
    pub fraction_primal_feasible: Option<f64>,
    pub avg_m: Option<f64>,
}

pub const CSV_HEADER: [&str; 11] = [
    "experiment",
    "m",
    "n",
    "scheme",
    "avg_iterations",
    "avg_cpu_seconds",
    "success_rate",
    "avg_rescaling_rounds",
    "avg_total_bp_iterations",
    "fraction_primal_feasible",
    "avg_m",
];

/// Fields accepted by [`emit_histogram`].
pub const HISTOGRAM_FIELDS: [&str; 4] = ["iterations", "rounds", "total_bp_iterations", "m_actual"];

/// A unit of work: one instance of one cell under one solver variant.
#[derive(Debug, Clone, Copy)]
struct Job {
    cell: usize,
    index: usize,
    variant: Variant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Variant {
    scheme: Scheme,
    mode: RescaleMode,
}

impl Variant {
    fn label(self, exp: Experiment) -> String {
        if exp == Experiment::RescaleModeCompare {
            format!("{}:{}", self.scheme.tag(), self.mode.tag())
        } else {
            self.scheme.tag().to_string()
        }
    }
}

fn variants(man: &ExperimentManifest) -> Result<Vec<Variant>> {
    let modes: &[RescaleMode] = if man.experiment == Experiment::RescaleModeCompare {
        &[RescaleMode::AllDirections, RescaleMode::SingleDirection]
    } else {
        &[RescaleMode::AllDirections]
    };
    let mut out = Vec::new();
    for scheme in man.scheme_list()? {
        for &mode in modes {
            out.push(Variant { scheme, mode });
        }
    }
    Ok(out)
}

/// Seed of instance `index` in cell `cell`; independent of scheduling and of the variant.
pub fn instance_seed(base_seed: u64, cell: usize, index: usize) -> u64 {
    derive_seed(derive_seed(base_seed, cell as u64), index as u64)
}

fn generate(man: &ExperimentManifest, cell: usize, seed: u64) -> Result<Instance> {
    let (m, n) = man.cell(cell);
    match man.experiment {
        Experiment::BpNaive | Experiment::EpraNaive => gen_naive(m.unwrap_or(n / 2), n, seed),
        Experiment::BpControlled | Experiment::EpraControlled | Experiment::RescaleModeCompare => {
            gen_controlled(
                m.unwrap_or(n / 2),
                n,
                man.delta_cap.unwrap_or(DEFAULT_DELTA_CAP),
                None,
                seed,
            )
        }
        Experiment::EpraPartition => gen_partitioned(n, seed, None, man.delta_cap, None),
    }
}

fn run_job(man: &ExperimentManifest, job: Job) -> InstanceRecord {
    let (m, n) = man.cell(job.cell);
    let seed = instance_seed(man.base_seed, job.cell, job.index);
    let mut rec = InstanceRecord {
        experiment: man.experiment,
        m: m.unwrap_or(0),
        n,
        scheme: job.variant.label(man.experiment),
        index: job.index,
        seed,
        status: "error".into(),
        iterations: 0,
        rounds: 0,
        total_bp_iterations: 0,
        cpu_seconds: 0.0,
        success: false,
        primal_feasible: false,
        m_actual: 0,
        error: None,
    };
    if let Err(e) = run_job_inner(man, job, seed, &mut rec) {
        rec.status = "error".into();
        rec.success = false;
        rec.error = Some(e.to_string());
    }
    rec
}

fn run_job_inner(man: &ExperimentManifest, job: Job, seed: u64, rec: &mut InstanceRecord) -> Result<()> {
    let inst = generate(man, job.cell, seed)?;
    rec.m_actual = inst.m();
    if man.experiment.is_bp() {
        let p = primal_projector(&inst.a, &vec![1.0; inst.n()], DEFAULT_RANK_TOL)?;
        let cfg = BpConfig::new(job.variant.scheme, man.epsilon, man.iter_limit)?;
        let z0 = basic::uniform(inst.n());
        let t0 = Instant::now();
        let out = basic::run(&p, &z0, &cfg)?;
        rec.cpu_seconds = t0.elapsed().as_secs_f64();
        rec.iterations = out.iterations;
        rec.total_bp_iterations = out.iterations;
        rec.status = format!("{:?}", out.status);
        rec.success = out.status != BpStatus::IterLimit;
        rec.primal_feasible = out.status == BpStatus::InteriorFound;
        return Ok(());
    }
    let cfg = EpraConfig {
        u_cap: man.u_cap,
        epsilon: man.epsilon,
        scheme: job.variant.scheme,
        max_rounds: man.max_rounds,
        bp_max_iters: if man.iter_limit == 0 {
            BpConfig::EPRA_MAX_ITERS
        } else {
            man.iter_limit
        },
        rescale_mode: job.variant.mode,
        ..EpraConfig::default()
    };
    let t0 = Instant::now();
    let res = epra::solve(&inst, &cfg)?;
    rec.cpu_seconds = t0.elapsed().as_secs_f64();
    rec.iterations = res.total_bp_iters();
    rec.total_bp_iterations = res.total_bp_iters();
    rec.rounds = res.rounds;
    rec.status = format!("{:?}", res.status);
    rec.primal_feasible = res.status == EpraStatus::TrivialPrimal;
    let report = verify_relint_pair(&inst, &res, cfg.u_cap, cfg.membership_tol);
    rec.success = match man.experiment {
        Experiment::EpraPartition => {
            res.status.is_solved() && report.partition_matches_ground_truth == Some(true)
        }
        _ => res.status.is_solved() && report.relint_ok,
    };
    Ok(())
}

/// Runs every job of the manifest on a pool of `parallelism` workers. Records come back in
/// job order whatever the scheduling.
pub fn run_records(man: &ExperimentManifest) -> Result<Vec<InstanceRecord>> {
    man.validate()?;
    let vars = variants(man)?;
    let mut jobs = Vec::new();
    for cell in 0..man.sizes.len() {
        for &variant in &vars {
            for index in 0..man.instances_per_cell {
                jobs.push(Job { cell, index, variant });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(man.parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(pool.install(|| jobs.par_iter().map(|&j| run_job(man, j)).collect()))
}

/// One row per `(cell, scheme)` in first-appearance order.
pub fn aggregate(records: &[InstanceRecord]) -> Vec<ResultRow> {
    let mut order: Vec<(Experiment, usize, usize, String)> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&InstanceRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.experiment, r.m, r.n, r.scheme.clone());
        let pos = match order.iter().position(|k| *k == key) {
            Some(p) => p,
            None => {
                order.push(key);
                order.len() - 1
            }
        };
        groups.entry(pos).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(pos, rs)| {
            let (experiment, m, n, scheme) = order[pos].clone();
            let k = rs.len() as f64;
            let mean = |f: &dyn Fn(&InstanceRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / k;
            let epra = !experiment.is_bp();
            ResultRow {
                experiment,
                m,
                n,
                scheme,
                avg_iterations: mean(&|r| r.iterations as f64),
                avg_cpu_seconds: mean(&|r| r.cpu_seconds),
                success_rate: mean(&|r| r.success as u8 as f64),
                avg_rescaling_rounds: epra.then(|| mean(&|r| r.rounds as f64)),
                avg_total_bp_iterations: epra.then(|| mean(&|r| r.total_bp_iterations as f64)),
                fraction_primal_feasible: (experiment == Experiment::EpraNaive)
                    .then(|| mean(&|r| r.primal_feasible as u8 as f64)),
                avg_m: (experiment == Experiment::EpraPartition).then(|| mean(&|r| r.m_actual as f64)),
            }
        })
        .collect()
}

/// Runs the manifest; with `out_dir`, writes `<experiment>.jsonl` (per instance, before
/// aggregation) and `<experiment>.csv`.
pub fn run_experiment(man: &ExperimentManifest, out_dir: Option<&Path>) -> Result<Vec<ResultRow>> {
    let records = run_records(man)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_records(&dir.join(format!("{}.jsonl", man.experiment.tag())), &records)?;
    }
    let rows = aggregate(&records);
    if let Some(dir) = out_dir {
        write_rows(&dir.join(format!("{}.csv", man.experiment.tag())), &rows)?;
    }
    Ok(rows)
}

pub fn write_records(path: &Path, records: &[InstanceRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<InstanceRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn rows_to_csv<W: std::io::Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.experiment.tag().to_string(),
            r.m.to_string(),
            r.n.to_string(),
            r.scheme.clone(),
            r.avg_iterations.to_string(),
            r.avg_cpu_seconds.to_string(),
            r.success_rate.to_string(),
            opt(r.avg_rescaling_rounds),
            opt(r.avg_total_bp_iterations),
            opt(r.fraction_primal_feasible),
            opt(r.avg_m),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    rows_to_csv(std::fs::File::create(path)?, rows)
}

/// `(value, count)` pairs of a counted field, ascending by value.
pub fn histogram(records: &[InstanceRecord], field: &str) -> Result<Vec<(usize, usize)>> {
    let get: fn(&InstanceRecord) -> usize = match field {
        "iterations" => |r| r.iterations,
        "rounds" => |r| r.rounds,
        "total_bp_iterations" => |r| r.total_bp_iterations,
        "m_actual" => |r| r.m_actual,
        _ => {
            return Err(Error::InvalidInput(format!(
                "unknown histogram field {field}; expected one of {HISTOGRAM_FIELDS:?}"
            )))
        }
    };
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(get(r)).or_insert(0usize) += 1;
    }
    Ok(counts.into_iter().collect())
}

/// Histogram CSV with header `value,count`.
pub fn emit_histogram<W: std::io::Write>(out: W, records: &[InstanceRecord], field: &str) -> Result<()> {
    let bins = histogram(records, field)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value", "count"]).map_err(csv_err)?;
    for (v, c) in bins {
        w.write_record([v.to_string(), c.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(exp: Experiment, sizes: Vec<Vec<usize>>, k: usize) -> ExperimentManifest {
        ExperimentManifest {
            experiment: exp,
            sizes,
            instances_per_cell: k,
            epsilon: 0.1,
            iter_limit: 10000,
            u_cap: 1e10,
            base_seed: 7,
            parallelism: 1,
            schemes: None,
            delta_cap: None,
            max_rounds: 100,
        }
    }

    #[test]
    fn manifest_parsing() {
        let m = ExperimentManifest::from_json(
            r#"{"experiment":"EpraPartition","sizes":[[20]],"instances_per_cell":3,
                "epsilon":0.5,"iter_limit":0,"U":1e10,"base_seed":1,"parallelism":2}"#,
        )
        .unwrap();
        assert_eq!(m.cell(0), (None, 20));
        assert_eq!(m.max_rounds, 100);
        let bad = r#"{"experiment":"BpNaive","sizes":[[20]],"instances_per_cell":3,
                "epsilon":0.5,"iter_limit":0,"U":1e10,"base_seed":1,"parallelism":2}"#;
        assert!(ExperimentManifest::from_json(bad).is_err());
        let zero = r#"{"experiment":"BpNaive","sizes":[[5,10]],"instances_per_cell":0,
                "epsilon":0.5,"iter_limit":0,"U":1e10,"base_seed":1,"parallelism":2}"#;
        assert!(ExperimentManifest::from_json(zero).is_err());
    }

    #[test]
    fn bp_rows_per_scheme() {
        let man = manifest(Experiment::BpNaive, vec![vec![5, 10]], 4);
        let rows = run_experiment(&man, None).unwrap();
        assert_eq!(rows.len(), 4);
        let schemes: Vec<_> = rows.iter().map(|r| r.scheme.as_str()).collect();
        assert_eq!(schemes, ["perceptron", "vn", "vna", "smooth"]);
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.success_rate));
            assert!(r.avg_rescaling_rounds.is_none());
        }
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let mut man = manifest(Experiment::EpraNaive, vec![vec![3, 8], vec![4, 8]], 6);
        let strip = |mut v: Vec<InstanceRecord>| {
            v.iter_mut().for_each(|r| r.cpu_seconds = 0.0);
            v
        };
        let a = strip(run_records(&man).unwrap());
        man.parallelism = 3;
        let b = strip(run_records(&man).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn aggregates_recompute_from_log() {
        let man = manifest(Experiment::EpraPartition, vec![vec![12]], 3);
        let dir = tempfile::tempdir().unwrap();
        let rows = run_experiment(&man, Some(dir.path())).unwrap();
        let recs = read_records(&dir.path().join("EpraPartition.jsonl")).unwrap();
        assert_eq!(recs.len(), 3);
        let again = aggregate(&recs);
        assert_eq!(rows.len(), again.len());
        assert_eq!(rows[0].avg_rescaling_rounds, again[0].avg_rescaling_rounds);
        assert_eq!(rows[0].success_rate, again[0].success_rate);
        let csv = std::fs::read_to_string(dir.path().join("EpraPartition.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
        assert!(rows[0].avg_m.is_some());
    }

    #[test]
    fn histogram_cases() {
        let mut out = Vec::new();
        emit_histogram(&mut out, &[], "rounds").unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "value,count\n");
        assert!(histogram(&[], "avg_iterations").is_err());

        let man = manifest(Experiment::EpraNaive, vec![vec![2, 10]], 5);
        let recs = run_records(&man).unwrap();
        assert_eq!(histogram(&recs, "rounds").unwrap(), vec![(0, 5)]);
    }

    #[test]
    fn failures_are_recorded() {
        // controlled needs m >= 2
        let man = manifest(Experiment::EpraControlled, vec![vec![1, 5]], 2);
        let recs = run_records(&man).unwrap();
        assert!(recs.iter().all(|r| !r.success && r.error.is_some()));
        assert_eq!(aggregate(&recs)[0].success_rate, 0.0);
    }
}
