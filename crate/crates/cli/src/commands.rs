use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use xrflux_core::delay::DelayModelConfig;
use xrflux_core::replay::{
    depth_rows, qoe_rows, read_depth_csv, read_qoe_csv, read_sweep_csv, read_users_csv, sweep, sweep_rows, user_rows,
    write_depth_csv, write_qoe_csv, write_sweep_csv, write_users_csv, DepthRow, LabeledTrace, QoeRow, SweepCell,
    SweepRow, UserRow,
};
use xrflux_core::scenario::{read_log_file, run_simulation, write_log};
use xrflux_core::trace::{derive_requests, generate_irm, read_trace_file, write_trace, Strategy};
use xrflux_edge::{EdgeClient, ServiceConfig};

use crate::config::{parse_capacities, PipelineConfig};
use crate::output::StageOutput;
use crate::{Cli, Command, Common, ReplayArgs, ServeArgs};

pub const LOG_FILE: &str = "visibility.log";
pub const IRM_FILE: &str = "irm.trace";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const USERS_FILE: &str = "users.csv";
pub const QOE_FILE: &str = "qoe.csv";
pub const DEPTH_FILE: &str = "depth_sweep.csv";

pub fn trace_file(strategy: Strategy) -> String {
    format!("{strategy}.trace")
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let c = &cli.common;
    match &cli.command {
        Command::Simulate => simulate(c),
        Command::Derive { log, strategy } => derive(c, log, strategy),
        Command::Irm { trace } => irm(c, trace),
        Command::Replay(args) => replay(c, args),
        Command::Serve(args) => serve(c, args).map(|()| Vec::new()),
        Command::ReplayHttp { endpoint, replay } => replay_http(c, endpoint, replay),
        Command::Report { inputs } => report(c, inputs),
    }
}

fn out_dir(c: &Common) -> Result<&Path> {
    c.out.as_deref().ok_or_else(|| anyhow!("--out is required for this command"))
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let cfg = PipelineConfig::load(c.config.as_deref())?;
    cfg.validate()?;
    Ok(cfg)
}

fn render(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

fn simulate(c: &Common) -> Result<Vec<PathBuf>> {
    let out = out_dir(c)?;
    let mut cfg = load_config(c)?;
    if let Some(seed) = c.seed {
        cfg.scenario.seed = seed;
    }
    let log = run_simulation(&cfg.scenario)?;
    tracing::info!(events = log.events.len(), seed = cfg.scenario.seed, "simulation finished");
    let mut stage = StageOutput::new(out, "simulate", c.config.as_deref(), Some(cfg.scenario.seed));
    stage.note("config_hash", cfg.scenario.config_hash());
    stage.add(LOG_FILE, render(|w| write_log(&log, w)));
    stage.commit()
}

fn derive(c: &Common, log_path: &Path, names: &[String]) -> Result<Vec<PathBuf>> {
    let out = out_dir(c)?;
    let strategies: Vec<Strategy> = if names.is_empty() || names.iter().any(|n| n == "all") {
        Strategy::ALL.to_vec()
    } else {
        names.iter().map(|n| n.parse()).collect::<Result<_, _>>()?
    };
    let log = read_log_file(log_path)?;
    let mut stage = StageOutput::new(out, "derive", None, Some(log.provenance.seed));
    stage.input(log_path);
    for s in strategies {
        let trace = derive_requests(&log, s).with_context(|| format!("{}", log_path.display()))?;
        let name = trace_file(s);
        tracing::info!(strategy = %s, records = trace.records.len(), "derived trace");
        stage.note(&name, s.semantics());
        stage.add(&name, render(|w| write_trace(&trace, w)));
    }
    stage.commit()
}

fn irm(c: &Common, trace_path: &Path) -> Result<Vec<PathBuf>> {
    let out = out_dir(c)?;
    let trace = read_trace_file(trace_path)?;
    let seed = c.seed.unwrap_or(trace.provenance.seed);
    let irm = generate_irm(&trace, seed).with_context(|| format!("{}", trace_path.display()))?;
    let mut stage = StageOutput::new(out, "irm", None, Some(seed));
    stage.input(trace_path);
    stage.add(IRM_FILE, render(|w| write_trace(&irm, w)));
    stage.commit()
}

/// `label=path`, or a bare path labelled by its file stem.
fn parse_trace_arg(arg: &str) -> Result<(String, PathBuf)> {
    if let Some((label, path)) = arg.split_once('=') {
        if !label.is_empty() && !label.contains(['/', '\\', ',']) {
            return Ok((label.to_string(), PathBuf::from(path)));
        }
    }
    let path = PathBuf::from(arg);
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty() && !s.contains(','))
        .ok_or_else(|| anyhow!("cannot derive a label from `{arg}`; use label=path"))?
        .to_string();
    Ok((label, path))
}

pub fn load_traces(args: &[String]) -> Result<Vec<LabeledTrace>> {
    let mut seen = HashSet::new();
    let mut traces = Vec::new();
    for arg in args {
        let (label, path) = parse_trace_arg(arg)?;
        if !seen.insert(label.clone()) {
            bail!("duplicate trace label `{label}`");
        }
        let trace = read_trace_file(&path)?;
        traces.push(LabeledTrace { label, trace });
    }
    Ok(traces)
}

struct ReplayPlan {
    traces: Vec<LabeledTrace>,
    inputs: Vec<PathBuf>,
    capacities: Vec<usize>,
    user_capacity: usize,
    /// Requested capacities plus the per-user one.
    run_capacities: Vec<usize>,
    depth: Option<f64>,
    cfg: PipelineConfig,
    delays: DelayModelConfig,
}

fn plan_replay(c: &Common, args: &ReplayArgs) -> Result<ReplayPlan> {
    let cfg = load_config(c)?;
    let capacities = match &args.capacities {
        Some(s) => parse_capacities(s)?,
        None => cfg.replay.capacities.clone(),
    };
    let user_capacity = args.user_capacity.unwrap_or(cfg.replay.user_capacity);
    if user_capacity < 1 {
        bail!("--user-capacity must be >= 1");
    }
    if let Some(d) = args.depth {
        if !(d > 0.0 && d.is_finite()) {
            bail!("--depth must be > 0");
        }
    }
    let mut run_capacities = capacities.clone();
    if !run_capacities.contains(&user_capacity) {
        run_capacities.push(user_capacity);
    }
    let mut delays = cfg.delays.clone();
    if let Some(seed) = c.seed {
        delays.seed = seed;
    }
    let traces = load_traces(&args.trace)?;
    let inputs = args.trace.iter().map(|a| parse_trace_arg(a).map(|(_, p)| p)).collect::<Result<_>>()?;
    Ok(ReplayPlan {
        traces,
        inputs,
        capacities,
        user_capacity,
        run_capacities,
        depth: args.depth,
        cfg,
        delays,
    })
}

/// Renders the report tables for one replay run.
fn replay_tables(plan: &ReplayPlan, cells: &[SweepCell]) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let requested: Vec<SweepCell> = cells
        .iter()
        .filter(|c| plan.capacities.contains(&c.report.capacity))
        .cloned()
        .collect();
    let mut files = vec![
        (SWEEP_FILE, render(|w| write_sweep_csv(&sweep_rows(&requested), w))),
        (USERS_FILE, render(|w| write_users_csv(&user_rows(cells, plan.user_capacity), w))),
        (QOE_FILE, render(|w| write_qoe_csv(&qoe_rows(&requested), w))),
    ];
    if let Some(depth) = plan.depth {
        let standard: Vec<SweepCell> = requested
            .iter()
            .filter(|c| c.label == Strategy::Standard.as_str())
            .cloned()
            .collect();
        if standard.is_empty() {
            bail!("--depth needs a trace labelled `standard`");
        }
        files.push((DEPTH_FILE, render(|w| write_depth_csv(&depth_rows(depth, &standard), w))));
    }
    Ok(files)
}

fn commit_replay(c: &Common, stage_name: &str, plan: &ReplayPlan, cells: &[SweepCell]) -> Result<Vec<PathBuf>> {
    let out = out_dir(c)?;
    let files = replay_tables(plan, cells)?;
    let mut stage = StageOutput::new(out, stage_name, c.config.as_deref(), Some(plan.delays.seed));
    for p in &plan.inputs {
        stage.input(p);
    }
    stage.note("policy", plan.cfg.replay.policy.as_str());
    stage.note("hit_rate", "demand hits / demand requests of each trace");
    for t in &plan.traces {
        if let Ok(s) = t.label.parse::<Strategy>() {
            stage.note(&format!("strategy.{}", t.label), s.semantics());
        }
    }
    for (name, bytes) in files {
        stage.add(name, bytes);
    }
    stage.commit()
}

fn replay(c: &Common, args: &ReplayArgs) -> Result<Vec<PathBuf>> {
    out_dir(c)?;
    let mut plan = plan_replay(c, args)?;
    if let Some(p) = args.policy {
        plan.cfg.replay.policy = p;
    }
    let cells = sweep(&plan.traces, &plan.run_capacities, plan.cfg.replay.policy, &plan.delays)?;
    commit_replay(c, "replay", &plan, &cells)
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")
}

fn replay_http(c: &Common, endpoint: &str, args: &ReplayArgs) -> Result<Vec<PathBuf>> {
    out_dir(c)?;
    if args.policy.is_some() {
        bail!("--policy is fixed by the service; set it when starting `serve`");
    }
    let plan = plan_replay(c, args)?;
    let client = EdgeClient::new(endpoint);
    let cells = runtime()?.block_on(client.sweep(&plan.traces, &plan.run_capacities, plan.delays.deadline_ms))?;
    commit_replay(c, "replay-http", &plan, &cells)
}

pub fn service_config(c: &Common, args: &ServeArgs) -> Result<ServiceConfig> {
    let cfg = load_config(c)?;
    let mut sc = cfg.service_config();
    if let Some(v) = args.listen {
        sc.listen = v;
    }
    if let Some(v) = args.capacity {
        sc.capacity = v;
    }
    if let Some(v) = args.mode {
        sc.mode = v;
    }
    if let Some(v) = args.payload_bytes {
        sc.payload_bytes = v;
    }
    if let Some(v) = args.catalog {
        sc.catalog_size = v;
    }
    if let Some(v) = args.policy {
        sc.policy = v;
    }
    if let Some(seed) = c.seed {
        sc.delays.seed = seed;
    }
    sc.validate()?;
    Ok(sc)
}

fn serve(c: &Common, args: &ServeArgs) -> Result<()> {
    let sc = service_config(c, args)?;
    runtime()?.block_on(async {
        let server = xrflux_edge::spawn(&sc).await?;
        println!("{}", server.url());
        tokio::signal::ctrl_c().await.context("waiting for ctrl-c")?;
        tracing::info!("shutting down");
        server.shutdown().await?;
        Ok(())
    })
}

/// standard, extended, prefetch, irm, then anything else by name.
fn strategy_rank(label: &str) -> (usize, String) {
    let rank = ["standard", "extended", "prefetch", "irm"]
        .iter()
        .position(|s| *s == label)
        .unwrap_or(4);
    (rank, label.to_string())
}

fn read_table<T>(path: &Path, read: impl FnOnce(BufReader<File>, &Path) -> xrflux_core::Result<Vec<T>>) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read(BufReader::new(f), path)?)
}

fn merge<T, K: Ord + std::fmt::Debug>(
    table: &str,
    mut rows: Vec<T>,
    key: impl Fn(&T) -> K,
) -> Result<Vec<T>> {
    rows.sort_by_key(&key);
    let mut seen = BTreeSet::new();
    for r in &rows {
        let k = key(r);
        if seen.contains(&k) {
            bail!("{table}: duplicate row for {k:?} across inputs");
        }
        seen.insert(k);
    }
    Ok(rows)
}

fn report(c: &Common, inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let out = out_dir(c)?;
    let mut sweep: Vec<SweepRow> = Vec::new();
    let mut users: Vec<UserRow> = Vec::new();
    let mut qoe: Vec<QoeRow> = Vec::new();
    let mut depth: Vec<DepthRow> = Vec::new();
    let (mut have_users, mut have_qoe, mut have_depth) = (false, false, false);
    let mut stage = StageOutput::new(out, "report", None, None);
    for dir in inputs {
        let sweep_path = dir.join(SWEEP_FILE);
        if !sweep_path.is_file() {
            bail!("{} has no {SWEEP_FILE}", dir.display());
        }
        stage.input(&sweep_path);
        sweep.extend(read_table(&sweep_path, read_sweep_csv)?);
        let p = dir.join(USERS_FILE);
        if p.is_file() {
            have_users = true;
            stage.input(&p);
            users.extend(read_table(&p, read_users_csv)?);
        }
        let p = dir.join(QOE_FILE);
        if p.is_file() {
            have_qoe = true;
            stage.input(&p);
            qoe.extend(read_table(&p, read_qoe_csv)?);
        }
        let p = dir.join(DEPTH_FILE);
        if p.is_file() {
            have_depth = true;
            stage.input(&p);
            depth.extend(read_table(&p, read_depth_csv)?);
        }
    }
    let sweep = merge(SWEEP_FILE, sweep, |r| (r.capacity, strategy_rank(&r.strategy)))?;
    stage.add(SWEEP_FILE, render(|w| write_sweep_csv(&sweep, w)));
    if have_users {
        let users = merge(USERS_FILE, users, |r| (r.user_id, strategy_rank(&r.strategy)))?;
        stage.add(USERS_FILE, render(|w| write_users_csv(&users, w)));
    }
    if have_qoe {
        let qoe = merge(QOE_FILE, qoe, |r| (r.capacity, strategy_rank(&r.strategy)))?;
        stage.add(QOE_FILE, render(|w| write_qoe_csv(&qoe, w)));
    }
    if have_depth {
        // Depth is a float column; order on its bit pattern, which matches
        // numeric order for the positive values a depth can take.
        let depth = merge(DEPTH_FILE, depth, |r| (r.depth.to_bits(), r.capacity))?;
        stage.add(DEPTH_FILE, render(|w| write_depth_csv(&depth, w)));
    }
    stage.commit()
}
