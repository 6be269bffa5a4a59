use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use uwbnav::campaign::{
    self, record_from_csv, run_campaign, write_atomic, LONG_CSV_HEADER,
};
use uwbnav::config::ExperimentConfig;
use uwbnav::error::TrackError;
use uwbnav::estimator::{solve_position, SolverConfig};
use uwbnav::flightsim::FlightMeta;
use uwbnav::geometry::{TransceiverLayout, Vec3};
use uwbnav::groundtruth::{
    read_frame_bin, read_frame_csv, track_step, TrackState, DEFAULT_K_NEIGHBORS,
    DEFAULT_MAX_RADIUS,
};
use uwbnav::metrics::{box_stats, navigation_errors, positioning_errors};
use uwbnav::ranging::RangeMeasurement;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "uwbnav", version, about = "Cooperative UWB localization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full simulation campaign from a config file.
    Simulate(SimulateArgs),
    /// Estimate per-sweep positions from a ranges CSV.
    Estimate(EstimateArgs),
    /// Track a target through a directory of point-cloud frames.
    Track(TrackArgs),
    /// Recompute reports from an existing campaign output directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Campaign config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the campaign; default = available processors.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV: t,initiator_id,responder_id,range_m.
    ranges_csv: PathBuf,
    /// Layout description: a campaign config whose first layout is used.
    #[arg(long, conflicts_with = "separation")]
    config: Option<PathBuf>,
    /// Shorthand: square anchor layout with this separation.
    #[arg(long)]
    separation: Option<f64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct TrackArgs {
    /// Directory of frame files (.csv or .bin), ordered by name.
    frames_dir: PathBuf,
    /// Initial position "x,y,z" (required).
    #[arg(long)]
    init_pos: Option<String>,
    /// Initial velocity "x,y,z".
    #[arg(long, default_value = "0,0,0")]
    init_vel: String,
    #[arg(long, default_value_t = 10.0)]
    frame_rate: f64,
    #[arg(long, default_value_t = DEFAULT_K_NEIGHBORS)]
    k_neighbors: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_RADIUS)]
    max_radius: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct ReportArgs {
    /// Campaign output directory (as written by `simulate`).
    out_dir: PathBuf,
    /// Where to write the regenerated report files; defaults to out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got '{s}'"));
    }
    let mut v = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        v[i] = p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"))?;
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), (u8, String)> {
    let mut config = ExperimentConfig::from_path(&args.config)
        .map_err(|e| (EXIT_USAGE, e.to_string()))?;
    if let Some(seed) = args.seed {
        config.noise.seeds = vec![seed];
    }
    let out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&config.output_dir));
    let summary = run_campaign(&config, &out_dir, args.jobs)
        .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
    println!(
        "campaign complete: {} runs ok, {} failed, output in {}",
        summary.reports.len(),
        summary.failures.len(),
        out_dir.display()
    );
    if !summary.failures.is_empty() {
        for f in &summary.failures {
            eprintln!("error: {f}");
        }
        return Err((EXIT_RUNTIME, "some runs failed; partial results kept".into()));
    }
    Ok(())
}

fn load_layout(args: &EstimateArgs) -> Result<TransceiverLayout, (u8, String)> {
    if let Some(sep) = args.separation {
        return TransceiverLayout::single_initiator_square(sep)
            .map_err(|e| (EXIT_USAGE, e.to_string()));
    }
    if let Some(path) = &args.config {
        let config =
            ExperimentConfig::from_path(path).map_err(|e| (EXIT_USAGE, e.to_string()))?;
        let layouts = config.layouts().map_err(|e| (EXIT_USAGE, e.to_string()))?;
        return Ok(layouts.into_iter().next().expect("validated non-empty").1);
    }
    Err((EXIT_USAGE, "either --config or --separation is required".into()))
}

fn parse_ranges_csv(path: &Path) -> Result<Vec<RangeMeasurement>, (u8, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (EXIT_USAGE, format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line.starts_with('t') {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err((
                EXIT_USAGE,
                format!("{}:{}: expected 4 fields, got {}", path.display(), lineno + 1, fields.len()),
            ));
        }
        let bad = |field: &str, e: &dyn std::fmt::Display| {
            (
                EXIT_USAGE,
                format!("{}:{}: bad {field}: {e}", path.display(), lineno + 1),
            )
        };
        out.push(RangeMeasurement {
            timestamp: fields[0].trim().parse().map_err(|e| bad("t", &e))?,
            initiator_id: fields[1].trim().parse().map_err(|e| bad("initiator_id", &e))?,
            responder_id: fields[2].trim().parse().map_err(|e| bad("responder_id", &e))?,
            range: fields[3].trim().parse().map_err(|e| bad("range_m", &e))?,
        });
    }
    Ok(out)
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), (u8, String)> {
    match out {
        Some(path) => write_atomic(path, content.as_bytes())
            .map_err(|e| (EXIT_RUNTIME, e.to_string())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), (u8, String)> {
    let layout = load_layout(args)?;
    let measurements = parse_ranges_csv(&args.ranges_csv)?;
    for m in &measurements {
        if m.responder_id >= layout.num_responders() {
            return Err((EXIT_USAGE, format!("unknown responder id {}", m.responder_id)));
        }
    }

    // group into sweeps by timestamp, preserving order
    let mut sweeps: Vec<(f64, Vec<RangeMeasurement>)> = Vec::new();
    for m in measurements {
        match sweeps.last_mut() {
            Some((t, group)) if *t == m.timestamp => group.push(m),
            _ => sweeps.push((m.timestamp, vec![m])),
        }
    }

    let solver = SolverConfig::default();
    let mut warm = layout.responder_centroid() + Vec3::new(0.0, 0.0, 1.0);
    let mut rows = Vec::new();
    for (t, group) in &sweeps {
        let est = solve_position(group, &layout.responders, &warm, &solver)
            .map_err(|e| (EXIT_RUNTIME, format!("sweep at t={t}: {e}")))?;
        // mirror run_flight's warm-start handling so estimates from a
        // recorded ranges CSV reproduce the in-flight ones bit-exactly
        warm = est.position;
        let plane_z = layout.responder_centroid().z;
        if warm.z < plane_z + 1.0 {
            warm.z = plane_z + 1.0;
        }
        rows.push((*t, est));
    }

    let content = match args.format {
        OutputFormat::Csv => {
            let mut s = String::from("t,x,y,z,residual_rms,converged\n");
            for (t, e) in &rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    t, e.position.x, e.position.y, e.position.z, e.residual_rms, e.converged
                ));
            }
            s
        }
        OutputFormat::Json => {
            let vals: Vec<_> = rows
                .iter()
                .map(|(t, e)| serde_json::json!({ "t": t, "estimate": e }))
                .collect();
            serde_json::to_string_pretty(&vals).unwrap() + "\n"
        }
    };
    emit(&args.out, &content)
}

fn cmd_track(args: &TrackArgs) -> Result<(), (u8, String)> {
    let Some(init_pos) = &args.init_pos else {
        return Err((EXIT_USAGE, "--init-pos is required".into()));
    };
    let position = parse_vec3(init_pos).map_err(|e| (EXIT_USAGE, e))?;
    let velocity = parse_vec3(&args.init_vel).map_err(|e| (EXIT_USAGE, e))?;

    let mut entries: Vec<PathBuf> = std::fs::read_dir(&args.frames_dir)
        .map_err(|e| (EXIT_USAGE, format!("{}: {e}", args.frames_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("csv") | Some("bin")
            )
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err((EXIT_USAGE, "no frame files found".into()));
    }

    let mut state = TrackState { position, velocity };
    let mut rows = Vec::with_capacity(entries.len());
    for (idx, path) in entries.iter().enumerate() {
        let t = idx as f64 / args.frame_rate;
        let frame = if path.extension().and_then(|e| e.to_str()) == Some("bin") {
            read_frame_bin(path, t)
        } else {
            read_frame_csv(path, t)
        }
        .map_err(|e| (EXIT_USAGE, e.to_string()))?;
        state = track_step(&frame, &state, args.frame_rate, args.k_neighbors, args.max_radius)
            .map_err(|e| match e {
                TrackError::TrackLost { .. } => {
                    (EXIT_RUNTIME, format!("frame {idx} ({}): {e}", path.display()))
                }
                other => (EXIT_RUNTIME, format!("frame {idx}: {other}")),
            })?;
        rows.push((t, state));
    }

    let content = match args.format {
        OutputFormat::Csv => {
            let mut s = String::from("t,x,y,z,vx,vy,vz\n");
            for (t, st) in &rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    t,
                    st.position.x,
                    st.position.y,
                    st.position.z,
                    st.velocity.x,
                    st.velocity.y,
                    st.velocity.z
                ));
            }
            s
        }
        OutputFormat::Json => {
            let vals: Vec<_> =
                rows.iter().map(|(t, st)| serde_json::json!({ "t": t, "state": st })).collect();
            serde_json::to_string_pretty(&vals).unwrap() + "\n"
        }
    };
    emit(&args.out, &content)
}

fn cmd_report(args: &ReportArgs) -> Result<(), (u8, String)> {
    let out_dir = args.out.clone().unwrap_or_else(|| args.out_dir.clone());
    let ids = campaign::list_record_ids(&args.out_dir)
        .map_err(|e| (EXIT_USAGE, e.to_string()))?;
    if ids.is_empty() {
        return Err((EXIT_USAGE, "no records found".into()));
    }
    std::fs::create_dir_all(out_dir.join("reports"))
        .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;

    let mut long_csv = String::from(LONG_CSV_HEADER);
    long_csv.push('\n');
    let mut reports = Vec::new();
    for id in &ids {
        // ids contain dots, so never go through with_extension
        let records_dir = args.out_dir.join("records");
        let sidecar: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(records_dir.join(format!("{id}.meta.json")))
                .map_err(|e| (EXIT_USAGE, format!("{id}: {e}")))?,
        )
        .map_err(|e| (EXIT_USAGE, format!("{id}: {e}")))?;
        let meta: FlightMeta = serde_json::from_value(sidecar["meta"].clone())
            .map_err(|e| (EXIT_USAGE, format!("{id}: {e}")))?;
        let separation = sidecar["separation_m"].as_f64().unwrap_or(f64::NAN);
        let csv = std::fs::read_to_string(records_dir.join(format!("{id}.csv")))
            .map_err(|e| (EXIT_USAGE, format!("{id}: {e}")))?;
        let record = record_from_csv(&csv, meta)
            .map_err(|e| (EXIT_USAGE, format!("{id}: {e}")))?;

        let pos = positioning_errors(&record).ok();
        let nav = navigation_errors(&record).ok();
        let report = serde_json::json!({
            "run_id": id,
            "separation_m": separation,
            "positioning_xy": pos.as_ref().and_then(|e| box_stats(&e.xy).ok()),
            "positioning_z": pos.as_ref().and_then(|e| e.z.as_ref()).and_then(|z| box_stats(z).ok()),
            "navigation_xy": nav.as_ref().and_then(|e| box_stats(&e.xy).ok()),
        });
        write_atomic(
            &out_dir.join("reports").join(format!("{id}.json")),
            serde_json::to_string_pretty(&report).unwrap().as_bytes(),
        )
        .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;

        if let Some(e) = &pos {
            for (t, v) in e.t.iter().zip(&e.xy) {
                long_csv.push_str(&format!("{id},{separation},positioning,xy,{t},{v}\n"));
            }
            if let Some(z) = &e.z {
                for (t, v) in e.t.iter().zip(z) {
                    long_csv.push_str(&format!("{id},{separation},positioning,z,{t},{v}\n"));
                }
            }
        }
        if let Some(e) = &nav {
            for (t, v) in e.t.iter().zip(&e.xy) {
                long_csv.push_str(&format!("{id},{separation},navigation,xy,{t},{v}\n"));
            }
        }
        reports.push(report);
    }
    write_atomic(&out_dir.join("errors_long.csv"), long_csv.as_bytes())
        .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
    println!("wrote {} reports to {}", reports.len(), out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Track(args) => cmd_track(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
