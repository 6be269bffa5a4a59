//! Campaign orchestration: the cross product of layouts, trajectories,
//! seeds and feedback sources, each run written out as a flight record
//! CSV with a JSON metadata sidecar, a ranges CSV and a per-run report.
//! Runs are independent and dispatched in parallel when the `parallel`
//! feature is enabled; each run owns a seeded RNG stream, so outputs are
//! deterministic either way.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::error::FlightError;
use crate::flightsim::{
    flight_sample_csv_line, run_flight, FeedbackSource, FlightConfig, FlightMeta, FlightRecord,
    FlightSample, Trajectory, FLIGHT_CSV_HEADER,
};
use crate::geometry::{Pose, TransceiverLayout, Vec3};
use crate::metrics::{box_stats, navigation_errors, positioning_errors, BoxStats, ErrorSeries};
use crate::ranging::{measurement_csv_line, NoiseModel, RANGES_CSV_HEADER};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("run {run_id} failed: {source}")]
    Run { run_id: String, source: FlightError },
    #[error("io error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io { path: path.display().to_string(), source }
}

/// One planned run of the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub run_id: String,
    pub layout_label: String,
    pub separation: f64,
    pub layout: TransceiverLayout,
    pub trajectory: Trajectory,
    pub base_seed: u64,
    pub derived_seed: u64,
    pub sigma: f64,
    pub feedback: FeedbackSource,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Independent per-run RNG seed from the user seed and run coordinates.
pub fn derive_seed(base: u64, layout_idx: usize, traj_idx: usize, feedback: FeedbackSource) -> u64 {
    let fb = match feedback {
        FeedbackSource::Truth => 0u64,
        FeedbackSource::Uwb => 1u64,
    };
    let mut s = splitmix64(base);
    s = splitmix64(s ^ layout_idx as u64);
    s = splitmix64(s ^ traj_idx as u64);
    splitmix64(s ^ fb)
}

/// Enumerate every run of the campaign in a stable order.
pub fn plan_runs(config: &ExperimentConfig) -> Result<Vec<RunSpec>, crate::config::ConfigError> {
    let layouts = config.layouts()?;
    let trajectories = config.trajectories();
    let mut runs = Vec::new();
    for (li, (layout_label, layout)) in layouts.iter().enumerate() {
        for (ti, (traj_label, traj)) in trajectories.iter().enumerate() {
            for &seed in &config.noise.seeds {
                for feedback in [FeedbackSource::Truth, FeedbackSource::Uwb] {
                    runs.push(RunSpec {
                        run_id: format!("{layout_label}_{traj_label}_s{seed}_{feedback}"),
                        layout_label: layout_label.clone(),
                        separation: config.separation_of(li),
                        layout: layout.clone(),
                        trajectory: *traj,
                        base_seed: seed,
                        derived_seed: derive_seed(seed, li, ti, feedback),
                        sigma: config.noise.sigma,
                        feedback,
                    });
                }
            }
        }
    }
    Ok(runs)
}

/// Execute one planned run in memory.
pub fn execute_run(spec: &RunSpec, config: &ExperimentConfig) -> Result<FlightRecord, FlightError> {
    let noise = NoiseModel::new(spec.sigma, spec.derived_seed);
    let flight_config = FlightConfig {
        controller: config.controller,
        solver: config.solver,
        estimate: true,
        record_ranges: true,
    };
    run_flight(&spec.trajectory, &spec.layout, &noise, spec.feedback, &flight_config)
}

/// Per-run report: config echo plus box statistics per error kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub separation: f64,
    pub feedback: FeedbackSource,
    pub trajectory: Trajectory,
    pub seed: u64,
    pub sigma: f64,
    pub positioning_xy: Option<BoxStats>,
    pub positioning_z: Option<BoxStats>,
    pub navigation_xy: Option<BoxStats>,
}

pub fn run_report(spec: &RunSpec, record: &FlightRecord) -> RunReport {
    let pos = positioning_errors(record).ok();
    let nav = navigation_errors(record).ok();
    RunReport {
        run_id: spec.run_id.clone(),
        separation: spec.separation,
        feedback: spec.feedback,
        trajectory: spec.trajectory,
        seed: spec.base_seed,
        sigma: spec.sigma,
        positioning_xy: pos.as_ref().and_then(|e| box_stats(&e.xy).ok()),
        positioning_z: pos
            .as_ref()
            .and_then(|e| e.z.as_ref())
            .and_then(|z| box_stats(z).ok()),
        navigation_xy: nav.as_ref().and_then(|e| box_stats(&e.xy).ok()),
    }
}

/// Write a file atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<(), CampaignError> {
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(content).map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

pub fn record_to_csv(record: &FlightRecord) -> String {
    let mut out = String::with_capacity(record.samples.len() * 80);
    out.push_str(FLIGHT_CSV_HEADER);
    out.push('\n');
    for s in &record.samples {
        out.push_str(&flight_sample_csv_line(s));
        out.push('\n');
    }
    out
}

pub fn ranges_to_csv(record: &FlightRecord) -> String {
    let mut out = String::with_capacity(record.ranges.len() * 40);
    out.push_str(RANGES_CSV_HEADER);
    out.push('\n');
    for m in &record.ranges {
        out.push_str(&measurement_csv_line(m));
        out.push('\n');
    }
    out
}

/// Parse a flight record CSV written by [`record_to_csv`] back into
/// samples; the metadata comes from the JSON sidecar.
pub fn record_from_csv(csv: &str, meta: FlightMeta) -> Result<FlightRecord, String> {
    let mut samples = Vec::new();
    for (lineno, line) in csv.lines().enumerate() {
        if lineno == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(format!("line {}: expected 11 fields", lineno + 1));
        }
        let num = |i: usize| -> Result<f64, String> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| format!("line {}: field {}: {}", lineno + 1, i + 1, e))
        };
        let est = (num(5)?, num(6)?, num(7)?);
        let estimated_position = if est.0.is_nan() {
            None
        } else {
            Some(Vec3::new(est.0, est.1, est.2))
        };
        samples.push(FlightSample {
            t: num(0)?,
            true_pose: Pose::new(Vec3::new(num(1)?, num(2)?, num(3)?), num(4)?),
            estimated_position,
            setpoint: Vec3::new(num(8)?, num(9)?, num(10)?),
        });
    }
    Ok(FlightRecord { meta, samples, ranges: Vec::new() })
}

/// Long-form error CSV header shared by campaign output and `report`.
pub const LONG_CSV_HEADER: &str = "run_id,separation_m,kind,axis,t,error_m";

fn append_long_rows(out: &mut String, run_id: &str, separation: f64, series: &ErrorSeries) {
    let kind = match series.kind {
        crate::metrics::ErrorKind::Positioning => "positioning",
        crate::metrics::ErrorKind::Navigation => "navigation",
    };
    for (t, e) in series.t.iter().zip(&series.xy) {
        out.push_str(&format!("{run_id},{separation},{kind},xy,{t},{e}\n"));
    }
    if let Some(z) = &series.z {
        for (t, e) in series.t.iter().zip(z) {
            out.push_str(&format!("{run_id},{separation},{kind},z,{t},{e}\n"));
        }
    }
}

pub struct CampaignSummary {
    pub reports: Vec<RunReport>,
    pub failures: Vec<CampaignError>,
}

fn persist_run(
    spec: &RunSpec,
    record: &FlightRecord,
    out_dir: &Path,
) -> Result<RunReport, CampaignError> {
    let records_dir = out_dir.join("records");
    let reports_dir = out_dir.join("reports");

    // run ids contain dots (separation labels), so extend by formatting
    // rather than with_extension
    let base = records_dir.join(format!("{}.csv", spec.run_id));
    write_atomic(&base, record_to_csv(record).as_bytes())?;
    write_atomic(
        &records_dir.join(format!("{}.ranges.csv", spec.run_id)),
        ranges_to_csv(record).as_bytes(),
    )?;
    let sidecar = serde_json::json!({
        "run_id": spec.run_id,
        "separation_m": spec.separation,
        "derived_seed": spec.derived_seed,
        "meta": record.meta,
    });
    write_atomic(
        &records_dir.join(format!("{}.meta.json", spec.run_id)),
        serde_json::to_string_pretty(&sidecar)?.as_bytes(),
    )?;

    let report = run_report(spec, record);
    write_atomic(
        &reports_dir.join(format!("{}.json", spec.run_id)),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    Ok(report)
}

fn execute_and_persist(
    spec: &RunSpec,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<(RunReport, String), CampaignError> {
    let record = execute_run(spec, config).map_err(|source| CampaignError::Run {
        run_id: spec.run_id.clone(),
        source,
    })?;
    let report = persist_run(spec, &record, out_dir)?;

    let mut long_rows = String::new();
    if let Ok(pos) = positioning_errors(&record) {
        append_long_rows(&mut long_rows, &spec.run_id, spec.separation, &pos);
    }
    if let Ok(nav) = navigation_errors(&record) {
        append_long_rows(&mut long_rows, &spec.run_id, spec.separation, &nav);
    }
    Ok((report, long_rows))
}

/// Run the whole campaign. Every run writes its outputs independently;
/// failures are collected so partial results survive.
pub fn run_campaign(
    config: &ExperimentConfig,
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<CampaignSummary, CampaignError> {
    let runs = plan_runs(config)
        .map_err(|e| CampaignError::Io {
            path: "config".into(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()),
        })?;
    fs::create_dir_all(out_dir.join("records")).map_err(io_err(out_dir))?;
    fs::create_dir_all(out_dir.join("reports")).map_err(io_err(out_dir))?;

    let results: Vec<Result<(RunReport, String), CampaignError>> =
        dispatch(&runs, jobs, |spec| execute_and_persist(spec, config, out_dir));

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut long_csv = String::from(LONG_CSV_HEADER);
    long_csv.push('\n');
    for result in results {
        match result {
            Ok((report, rows)) => {
                long_csv.push_str(&rows);
                reports.push(report);
            }
            Err(e) => failures.push(e),
        }
    }
    write_atomic(&out_dir.join("errors_long.csv"), long_csv.as_bytes())?;
    write_atomic(
        &out_dir.join("summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "config": config,
            "reports": reports,
        }))?
        .as_bytes(),
    )?;
    Ok(CampaignSummary { reports, failures })
}

#[cfg(feature = "parallel")]
fn dispatch<T: Send, F: Fn(&RunSpec) -> T + Sync>(
    runs: &[RunSpec],
    jobs: Option<usize>,
    f: F,
) -> Vec<T> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .expect("thread pool");
    pool.install(|| runs.par_iter().map(|r| f(r)).collect())
}

#[cfg(not(feature = "parallel"))]
fn dispatch<T: Send, F: Fn(&RunSpec) -> T + Sync>(
    runs: &[RunSpec],
    _jobs: Option<usize>,
    f: F,
) -> Vec<T> {
    runs.iter().map(|r| f(r)).collect()
}

/// Sequential batch execution (no file output), kept for the benchmark
/// suite as the baseline against the default dispatch path.
pub fn run_batch_sequential(
    runs: &[RunSpec],
    config: &ExperimentConfig,
) -> Vec<Result<FlightRecord, FlightError>> {
    runs.iter().map(|r| execute_run(r, config)).collect()
}

/// Batch execution through the default dispatcher (rayon when the
/// `parallel` feature is on).
pub fn run_batch(
    runs: &[RunSpec],
    config: &ExperimentConfig,
    jobs: Option<usize>,
) -> Vec<Result<FlightRecord, FlightError>> {
    dispatch(runs, jobs, |r| execute_run(r, config))
}

/// Lexicographically sorted record stems (run ids) found in a campaign
/// output directory.
pub fn list_record_ids(out_dir: &Path) -> Result<Vec<String>, CampaignError> {
    let records_dir = out_dir.join("records");
    let mut ids = Vec::new();
    for entry in fs::read_dir(&records_dir).map_err(io_err(&records_dir))? {
        let entry = entry.map_err(io_err(&records_dir))?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(stem) = name.strip_suffix(".meta.json") {
            ids.push(stem.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::repro_defaults(vec![42]);
        cfg.layout.separations = vec![3.0];
        cfg.trajectories.vertical_target = 3.0;
        cfg.trajectories.square_altitudes = vec![];
        cfg
    }

    #[test]
    fn plan_counts_runs() {
        let cfg = small_config();
        // 1 layout x 1 trajectory x 1 seed x 2 feedback sources
        assert_eq!(plan_runs(&cfg).unwrap().len(), 2);

        let full = ExperimentConfig::repro_defaults(vec![1, 2]);
        assert_eq!(plan_runs(&full).unwrap().len(), 6 * 4 * 2 * 2);
    }

    #[test]
    fn derived_seeds_differ_per_run() {
        let cfg = ExperimentConfig::repro_defaults(vec![1]);
        let runs = plan_runs(&cfg).unwrap();
        let mut seeds: Vec<u64> = runs.iter().map(|r| r.derived_seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), runs.len());
    }

    #[test]
    fn campaign_outputs_are_deterministic() {
        let cfg = small_config();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_campaign(&cfg, dir_a.path(), Some(1)).unwrap();
        run_campaign(&cfg, dir_b.path(), Some(2)).unwrap();
        for name in ["errors_long.csv", "summary.json"] {
            let a = fs::read(dir_a.path().join(name)).unwrap();
            let b = fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
        for id in list_record_ids(dir_a.path()).unwrap() {
            let a = fs::read(dir_a.path().join("records").join(format!("{id}.csv"))).unwrap();
            let b = fs::read(dir_b.path().join("records").join(format!("{id}.csv"))).unwrap();
            assert_eq!(a, b, "{id} differs");
        }
    }

    #[test]
    fn record_csv_roundtrip() {
        let cfg = small_config();
        let runs = plan_runs(&cfg).unwrap();
        let record = execute_run(&runs[1], &cfg).unwrap();
        let csv = record_to_csv(&record);
        let back = record_from_csv(&csv, record.meta.clone()).unwrap();
        assert_eq!(record.samples.len(), back.samples.len());
        for (a, b) in record.samples.iter().zip(&back.samples) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert_eq!(
                a.estimated_position.unwrap().x.to_bits(),
                b.estimated_position.unwrap().x.to_bits()
            );
        }
    }
}
