//! `paramedic` — operator CLI for the monitor-and-repair harness.
//!
//! Subcommands: `run` (one mission), `bench` (a misconfiguration suite),
//! `replay` (detectors over a recorded trace), `params` (registry listing).
//! Exit codes: 0 success (for `run`: mission passed), 1 mission failed,
//! 2 configuration/file/schema errors.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::Rng;

use paramedic::bench::{self, export, RunOptions, SuiteContext};
use paramedic::paramdb::ParamSet;
use paramedic::repair::{run_mission, MissionOutcome, TraceLine};
use paramedic::sim::SimVehicle;
use paramedic::telemetry::wire::{serve, ServeOptions, WireLink};
use paramedic::telemetry::{MissionPlan, VehicleLink};

use config::{check_config, AdvisorSelector, HarnessConfig};

#[derive(Parser)]
#[command(
    name = "paramedic",
    version,
    about = "Runtime monitor-and-repair harness for flight-control configurations"
)]
struct Cli {
    /// TOML config file; every key has a default and can be overridden here.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parameter registry JSON (default: the built-in registry).
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    /// Where run directories are created.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Advisor backend selection.
    #[arg(long, global = true, value_enum)]
    advisor: Option<AdvisorSelector>,
    /// Simulator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fly one mission; writes record.json, trace.jsonl and the advisor
    /// audit log under a fresh run directory.
    Run {
        /// JSON parameter overrides applied on top of the registry defaults.
        #[arg(long)]
        params: PathBuf,
        /// JSON mission plan (waypoints + cruise speed).
        #[arg(long)]
        plan: PathBuf,
        /// Vehicle link: sim | subprocess | tcp://host:port.
        #[arg(long)]
        link: Option<String>,
    },
    /// Run a misconfiguration suite and write report.json / report.csv.
    Bench {
        /// Suite file: a JSON plans header followed by JSON-lines of cases.
        #[arg(long)]
        suite: PathBuf,
        /// Worker pool size.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Re-run the detectors over a recorded trace and print the anomaly
    /// timeline.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// The plan the trace was flown against (needed for cross-track).
        #[arg(long)]
        plan: PathBuf,
    },
    /// Print the parameter registry.
    Params,
    /// Serve the simulator over stdio speaking the telemetry wire protocol.
    #[command(hide = true)]
    SimWire {
        /// Virtual-time speedup (1 = real time).
        #[arg(long)]
        time_scale: Option<f64>,
    },
    /// Regenerate the standard 200-case suite file.
    #[command(hide = true)]
    GenSuite {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let mut config = HarnessConfig::load(cli.config.as_deref())?;
    if let Some(registry) = cli.registry {
        config.registry = Some(registry);
    }
    if let Some(output_dir) = cli.output_dir {
        config.output_dir = output_dir;
    }
    if let Some(selector) = cli.advisor {
        config.select_advisor(selector);
    }
    if let Some(seed) = cli.seed {
        config.sim.seed = seed;
    }

    match cli.command {
        Command::Run { params, plan, link } => {
            if let Some(link) = link {
                config.link = link;
            }
            cmd_run(&config, &params, &plan)
        }
        Command::Bench { suite, parallelism } => {
            if let Some(parallelism) = parallelism {
                config.parallelism = parallelism;
            }
            cmd_bench(&config, &suite)
        }
        Command::Replay { trace, plan } => cmd_replay(&config, &trace, &plan),
        Command::Params => cmd_params(&config),
        Command::SimWire { time_scale } => cmd_sim_wire(&config, time_scale),
        Command::GenSuite { out } => cmd_gen_suite(&config, &out),
    }
}

/// Timestamp plus a short random suffix; retried on collision so re-running
/// never overwrites a prior run.
fn create_run_dir(output_dir: &Path) -> Result<(String, PathBuf)> {
    std::fs::create_dir_all(output_dir)
        .with_context(|| format!("cannot create output dir {}", output_dir.display()))?;
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut rng = rand::thread_rng();
    for _ in 0..64 {
        let run_id = format!("{now}-{:04x}", rng.gen::<u16>());
        let dir = output_dir.join(&run_id);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok((run_id, dir)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).context("cannot create run directory"),
        }
    }
    bail!("could not allocate a fresh run directory under {}", output_dir.display())
}

fn write_manifest(dir: &Path, run_id: &str, command: &str, files: &[&str]) -> Result<()> {
    let manifest = serde_json::json!({
        "run_id": run_id,
        "command": command,
        "created_unix": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "files": files,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")
        .context("cannot write manifest")?;
    Ok(())
}

fn write_mission_outputs(dir: &Path, outcome: &MissionOutcome) -> Result<()> {
    std::fs::write(
        dir.join("record.json"),
        serde_json::to_string_pretty(&outcome.record)? + "\n",
    )?;
    export::write_trace(&outcome.trace, dir.join("trace.jsonl"))?;
    let mut audit = std::fs::File::create(dir.join("advisor_audit.jsonl"))?;
    for entry in &outcome.audit {
        writeln!(audit, "{}", serde_json::to_string(entry)?)?;
    }
    Ok(())
}

fn cmd_run(config: &HarnessConfig, params_path: &Path, plan_path: &Path) -> Result<i32> {
    let registry = Arc::new(config.load_registry()?);
    check_config(config, &registry)?;

    let overrides: ParamSet = serde_json::from_str(
        &std::fs::read_to_string(params_path)
            .with_context(|| format!("cannot read params file {}", params_path.display()))?,
    )
    .with_context(|| format!("cannot parse params file {}", params_path.display()))?;
    let plan: MissionPlan = serde_json::from_str(
        &std::fs::read_to_string(plan_path)
            .with_context(|| format!("cannot read plan file {}", plan_path.display()))?,
    )
    .with_context(|| format!("cannot parse plan file {}", plan_path.display()))?;
    plan.check().context("invalid mission plan")?;

    let advisor = config.build_advisor(Arc::clone(&registry))?;
    let p_initial = registry.defaults().merged(&overrides);
    registry
        .validate(&p_initial)
        .context("initial parameters fail validation")?;

    // Spawned vehicle process, when the link needs one.
    let mut child = None;
    let mut link: Box<dyn VehicleLink> = match config.link.as_str() {
        "sim" => Box::new(
            SimVehicle::new(Arc::clone(&registry), config.sim.clone())
                .context("cannot construct the simulator")?,
        ),
        "subprocess" => {
            let exe = std::env::current_exe().context("cannot locate own executable")?;
            let mut cmd = std::process::Command::new(exe);
            cmd.arg("sim-wire")
                .arg("--time-scale")
                .arg(config.wire_time_scale.to_string())
                .stdin(Stdio::piped())
                .stdout(Stdio::piped());
            if let Some(registry_path) = &config.registry {
                cmd.arg("--registry").arg(registry_path);
            }
            let mut spawned = cmd.spawn().context("cannot spawn the vehicle subprocess")?;
            let stdout = spawned.stdout.take().expect("piped stdout");
            let stdin = spawned.stdin.take().expect("piped stdin");
            child = Some(spawned);
            Box::new(WireLink::from_streams(stdout, stdin))
        }
        other => {
            let addr_text = other
                .strip_prefix("tcp://")
                .with_context(|| format!("unknown link {other:?} (expected sim | subprocess | tcp://host:port)"))?;
            let addr = addr_text
                .parse()
                .with_context(|| format!("invalid TCP address {addr_text:?}"))?;
            Box::new(
                WireLink::connect_tcp(addr, std::time::Duration::from_secs(5))
                    .context("cannot connect to the vehicle")?,
            )
        }
    };

    let outcome = run_mission(
        link.as_mut(),
        &p_initial,
        &plan,
        &advisor,
        &registry,
        &config.detector,
        &config.orchestrator,
    )
    .context("mission could not be started")?;
    drop(link);
    if let Some(mut child) = child {
        let _ = child.wait();
    }

    let (run_id, dir) = create_run_dir(&config.output_dir)?;
    write_mission_outputs(&dir, &outcome)?;
    write_manifest(
        &dir,
        &run_id,
        "run",
        &["record.json", "trace.jsonl", "advisor_audit.jsonl", "manifest.json"],
    )?;

    let record = &outcome.record;
    println!(
        "result={} repair_count={} anomalies={} run_dir={}",
        record.result,
        record.repair_count,
        record
            .anomaly_record
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(";"),
        dir.display()
    );
    Ok(if record.result.passed() { 0 } else { 1 })
}

fn cmd_bench(config: &HarnessConfig, suite_path: &Path) -> Result<i32> {
    let registry = Arc::new(config.load_registry()?);
    check_config(config, &registry)?;
    let suite = bench::load_suite(suite_path, &registry)
        .with_context(|| format!("cannot load suite {}", suite_path.display()))?;
    let advisor = config.build_advisor(Arc::clone(&registry))?;
    let ctx = SuiteContext {
        advisor: &advisor,
        registry: Arc::clone(&registry),
        detector: config.detector.clone(),
        orchestrator: config.orchestrator.clone(),
        sim: config.sim.clone(),
    };
    let run = bench::run_suite(
        &suite,
        &ctx,
        &RunOptions { parallelism: config.parallelism.max(1), keep_outcomes: false },
    )
    .map_err(anyhow::Error::msg)?;

    let (run_id, dir) = create_run_dir(&config.output_dir)?;
    export::write_report_json(&run.report, dir.join("report.json"))?;
    export::write_report_csv(&run.report, dir.join("report.csv"))?;
    write_manifest(&dir, &run_id, "bench", &["report.json", "report.csv", "manifest.json"])?;

    let report = &run.report;
    println!(
        "ttc={} triggered={} nrc={} tra={} rsr={} rsr_over_triggered={} anr={} run_dir={}",
        report.ttc,
        report.triggered,
        report.nrc,
        report.tra,
        report
            .rsr_percent
            .map(|p| format!("{p}%"))
            .unwrap_or_else(|| "undefined".into()),
        report
            .rsr_over_triggered_percent
            .map(|p| format!("{p}%"))
            .unwrap_or_else(|| "undefined".into()),
        report.anr.clone().unwrap_or_else(|| "undefined".into()),
        dir.display()
    );
    Ok(0)
}

fn cmd_replay(config: &HarnessConfig, trace_path: &Path, plan_path: &Path) -> Result<i32> {
    use paramedic::anomaly::DetectorState;

    let registry = config.load_registry()?;
    check_config(config, &registry)?;
    let plan: MissionPlan = serde_json::from_str(
        &std::fs::read_to_string(plan_path)
            .with_context(|| format!("cannot read plan file {}", plan_path.display()))?,
    )
    .context("cannot parse plan file")?;
    plan.check().context("invalid mission plan")?;

    let text = std::fs::read_to_string(trace_path)
        .with_context(|| format!("cannot read trace {}", trace_path.display()))?;
    let mut detector = DetectorState::new(&plan);
    let mut found = 0u64;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(line)
            .with_context(|| format!("line {}: malformed trace line", i + 1))?;
        match parsed {
            TraceLine::Event(event) => {
                let fired = detector
                    .update(&config.detector, &event, &plan)
                    .with_context(|| format!("line {}: waypoint order violation", i + 1))?;
                if let Some(anomaly) = fired {
                    println!("t={:.2} {}: {}", anomaly.t, anomaly.kind, anomaly.detail);
                    found += 1;
                }
            }
            TraceLine::Marker(_) => {} // recorded markers are not monitor input
        }
    }
    log::info!("replay finished: {found} anomalies");
    Ok(0)
}

fn cmd_params(config: &HarnessConfig) -> Result<i32> {
    let registry = config.load_registry()?;
    println!(
        "{:<16} {:>10} {:>10} {:>8} {:>10}  DESCRIPTION",
        "NAME", "MIN", "MAX", "STEP", "DEFAULT",
    );
    for spec in registry.iter() {
        println!(
            "{:<16} {:>10} {:>10} {:>8} {:>10}  {}",
            spec.name, spec.min, spec.max, spec.step, spec.default, spec.description
        );
    }
    Ok(0)
}

fn cmd_sim_wire(config: &HarnessConfig, time_scale: Option<f64>) -> Result<i32> {
    let registry = Arc::new(config.load_registry()?);
    check_config(config, &registry)?;
    let mut link = SimVehicle::new(Arc::clone(&registry), config.sim.clone())
        .context("cannot construct the simulator")?;
    let options = ServeOptions { time_scale: time_scale.unwrap_or(config.wire_time_scale) };
    serve(&mut link, std::io::stdin(), std::io::stdout(), options)
        .context("wire session failed")?;
    Ok(0)
}

fn cmd_gen_suite(config: &HarnessConfig, out: &Path) -> Result<i32> {
    let registry = config.load_registry()?;
    let suite = bench::gen::generate_standard_suite(&registry, &config.sim.fault_table);
    std::fs::write(out, bench::suite_to_jsonl(&suite))
        .with_context(|| format!("cannot write {}", out.display()))?;
    println!("wrote {} cases to {}", suite.cases.len(), out.display());
    Ok(0)
}
