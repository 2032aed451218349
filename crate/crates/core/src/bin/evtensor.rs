use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use evtensor::duration::DurationModel;
use evtensor::ir::validate_graph;
use evtensor::kernel::CompiledKernel;
use evtensor::materialize::{check_trace, instantiate_seeded, RoutingRealization};
use evtensor::metrics::{compare, compute_metrics, export_trace, Metrics, TraceFormat};
use evtensor::sched_dynamic::{lower_dynamic, DynamicOptions};
use evtensor::sched_static::{guarded_task_graph, lower_static, select_queues, worst_case_rewrite, Instr, StaticOptions};
use evtensor::sim::{simulate, simulate_barrier_baseline, SimConfig, SimError};
use evtensor::symshape::ShapeBinding;
use evtensor::trace::Trace;
use evtensor::workload_file::{builtin, KernelArtifact, WorkloadSpec, BUILTINS};

#[derive(Parser)]
#[command(name = "evtensor", version, about = "Event-tensor megakernel compiler and multi-SM simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lower a workload spec to a megakernel.
    Compile(CompileArgs),
    /// Simulate a compiled kernel for one shape binding.
    Run(RunArgs),
    /// Simulate the unfused barrier-synchronized reference.
    Baseline(BaselineArgs),
    /// Tabulate makespan ratios of run reports against a baseline.
    Compare(CompareArgs),
    /// Summarize a compiled kernel.
    Inspect { kernel: PathBuf },
    /// Built-in workload specs.
    Workload {
        #[command(subcommand)]
        cmd: WorkloadCmd,
    },
}

#[derive(Subcommand)]
enum WorkloadCmd {
    List,
    Emit {
        name: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheduler {
    Static,
    Dynamic,
}

#[derive(Args)]
struct CompileArgs {
    spec: PathBuf,
    #[arg(long, value_enum)]
    scheduler: Scheduler,
    /// Sampled values of the size symbol, e.g. `1,2,4,8`.
    #[arg(long, value_delimiter = ',')]
    samples: Vec<i64>,
    /// Full sample binding such as `n=2,m=4`; repeatable.
    #[arg(long = "sample")]
    sample_bindings: Vec<String>,
    #[arg(long, default_value_t = 4)]
    sms: usize,
    #[arg(long)]
    early_push: bool,
    #[arg(long)]
    no_prefetch: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Shape binding such as `n=3`.
    #[arg(long, default_value = "")]
    bind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    sms: Option<usize>,
    #[arg(long)]
    notify_cost: Option<u64>,
    #[arg(long)]
    pop_cost: Option<u64>,
    #[arg(long)]
    push_cost: Option<u64>,
    #[arg(long)]
    poll_quantum: Option<u64>,
    /// `FUNC=MODEL` or `MODEL` for every function; MODEL is `const:V`,
    /// `uniform:LO:HI`, `table:AXIS:V1/V2` or `skew:AXIS:GS:HOT:BASE:HOTV`.
    #[arg(long = "duration-model")]
    duration_models: Vec<String>,
    /// Write the execution trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "chrome-trace")]
    trace_format: TraceFormatArg,
    /// Write the run report JSON here.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Label used by `compare`; defaults to the scheduling mode.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceFormatArg {
    ChromeTrace,
    Csv,
}

#[derive(Args)]
struct RunArgs {
    kernel: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct BaselineArgs {
    spec: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(required = true, num_args = 2..)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    baseline: String,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunReport {
    label: String,
    mode: String,
    binding: ShapeBinding,
    config: SimConfig,
    duration_models: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    selected_sample: Option<ShapeBinding>,
    masked_tasks: usize,
    violations: usize,
    metrics: Metrics,
}

enum Failure {
    Validation(anyhow::Error),
    Simulation(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Validation(e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Simulation(e.into())
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_spec(path: &Path) -> anyhow::Result<WorkloadSpec> {
    let spec = WorkloadSpec::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let diags = validate_graph(&spec.graph);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        bail!("invalid graph:\n  {}", lines.join("\n  "));
    }
    Ok(spec)
}

fn parse_binding(text: &str) -> anyhow::Result<ShapeBinding> {
    ShapeBinding::parse(text).map_err(|e| anyhow!("bad binding {text:?}: {e}"))
}

fn compile(a: &CompileArgs) -> Result<(), Failure> {
    let spec = load_spec(&a.spec)?;
    let kernel: CompiledKernel = match a.scheduler {
        Scheduler::Static => {
            let mut samples: Vec<ShapeBinding> =
                a.sample_bindings.iter().map(|s| parse_binding(s)).collect::<anyhow::Result<_>>()?;
            if !a.samples.is_empty() {
                let sym = spec
                    .graph
                    .size_symbol
                    .clone()
                    .or_else(|| (spec.graph.symbols.len() == 1).then(|| spec.graph.symbols[0].clone()))
                    .ok_or_else(|| anyhow!("--samples needs a graph with a size symbol; use --sample instead"))?;
                samples.extend(a.samples.iter().map(|&v| ShapeBinding::new().with(sym.clone(), v)));
            }
            if samples.is_empty() && spec.graph.symbols.is_empty() {
                samples.push(ShapeBinding::new());
            }
            let g = if spec.graph.has_data_dependence() {
                eprintln!("note: data-dependent edges replaced by worst-case barriers for static lowering");
                worst_case_rewrite(&spec.graph)
            } else {
                spec.graph.clone()
            };
            let opts = StaticOptions { prefetch: !a.no_prefetch };
            lower_static(&g, &samples, a.sms, opts).map_err(anyhow::Error::from)?.into()
        }
        Scheduler::Dynamic => {
            let opts = DynamicOptions { early_push: a.early_push, no_prefetch: a.no_prefetch };
            lower_dynamic(&spec.graph, opts).map_err(anyhow::Error::from)?.into()
        }
    };
    let mode = kernel.mode();
    let artifact = KernelArtifact { kernel, sim: spec.sim, routing: spec.routing };
    write(&a.output, &artifact.to_json())?;
    println!("compiled {} kernel -> {}", mode, a.output.display());
    Ok(())
}

fn apply_durations(g: &mut evtensor::ir::GraphFunction, specs: &[String]) -> anyhow::Result<()> {
    for s in specs {
        let (func, model) = match s.split_once('=') {
            Some((f, m)) => (Some(f.trim()), m),
            None => (None, s.as_str()),
        };
        let model = DurationModel::parse_cli(model)?;
        let mut hit = false;
        for d in g.device_functions.iter_mut().filter(|d| func.is_none_or(|f| d.name == f)) {
            d.duration = model.clone();
            hit = true;
        }
        if !hit {
            bail!("no device function named {:?}", func.unwrap_or_default());
        }
    }
    Ok(())
}

fn sim_config(base: Option<&SimConfig>, a: &SimArgs, default_sms: usize) -> SimConfig {
    let mut cfg = base.cloned().unwrap_or_else(|| SimConfig::with_sms(default_sms));
    cfg.seed = a.seed;
    if base.is_none() || a.sms.is_some() {
        cfg.num_sms = a.sms.unwrap_or(default_sms);
    }
    if let Some(v) = a.notify_cost {
        cfg.notify_cost = v;
    }
    if let Some(v) = a.pop_cost {
        cfg.pop_cost = v;
    }
    if let Some(v) = a.push_cost {
        cfg.push_cost = v;
    }
    if let Some(v) = a.poll_quantum {
        cfg.poll_quantum = v;
    }
    cfg
}

#[allow(clippy::too_many_arguments)]
fn finish_run(
    a: &SimArgs,
    mode: &str,
    g: &evtensor::ir::GraphFunction,
    binding: ShapeBinding,
    real: Option<&RoutingRealization>,
    cfg: SimConfig,
    trace: Trace,
    selected_sample: Option<ShapeBinding>,
) -> Result<(), Failure> {
    let m = instantiate_seeded(&guarded_task_graph(g), &binding, real, cfg.seed).map_err(SimError::from)?;
    let violations = check_trace(&trace, &m);
    let metrics = compute_metrics(&trace).map_err(|e| Failure::Simulation(e.into()))?;
    if let Some(path) = &a.trace {
        let fmt = match a.trace_format {
            TraceFormatArg::ChromeTrace => TraceFormat::ChromeTrace,
            TraceFormatArg::Csv => TraceFormat::Csv,
        };
        export_trace(&trace, fmt, path).map_err(anyhow::Error::from)?;
    }
    let masked_tasks = trace.tasks.iter().filter(|t| t.masked).count();
    let report = RunReport {
        label: a.label.clone().unwrap_or_else(|| mode.to_string()),
        mode: mode.to_string(),
        binding,
        config: cfg,
        duration_models: a.duration_models.clone(),
        selected_sample,
        masked_tasks,
        violations: violations.len(),
        metrics,
    };
    println!(
        "{}: makespan {} | tasks {} (masked {}) | notifies {} wait-blocks {} pushes {} pops {} empty-polls {}",
        report.label,
        report.metrics.makespan,
        trace.tasks.len(),
        masked_tasks,
        report.metrics.notifies,
        report.metrics.wait_blocks,
        report.metrics.pushes,
        report.metrics.pops,
        report.metrics.empty_polls
    );
    for r in &report.metrics.resources {
        println!("  {:<6} busy {:.3} spin {:.3} idle {:.3}", r.name, r.busy, r.spin_wait, r.idle);
    }
    if let Some(path) = &a.output {
        write(path, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    if !violations.is_empty() {
        let first: Vec<String> = violations.iter().take(5).map(|v| format!("{v:?}")).collect();
        return Err(Failure::Simulation(anyhow!("{} dependency violations: {}", violations.len(), first.join("; "))));
    }
    Ok(())
}

fn run(a: &RunArgs) -> Result<(), Failure> {
    let mut artifact = KernelArtifact::from_json(&read(&a.kernel)?)
        .with_context(|| format!("parsing {}", a.kernel.display()))?;
    apply_durations(artifact.kernel.graph_mut(), &a.sim.duration_models)?;
    let binding = parse_binding(&a.sim.bind)?;
    let default_sms = match &artifact.kernel {
        CompiledKernel::Static(k) => k.num_sms,
        CompiledKernel::Dynamic(_) => 4,
    };
    let cfg = sim_config(artifact.sim.as_ref(), &a.sim, default_sms);
    let real = artifact.realize(&binding, cfg.seed).map_err(SimError::from)?;
    let selected = match &artifact.kernel {
        CompiledKernel::Static(k) => Some(select_queues(k, &binding).map_err(SimError::from)?.schedule.binding.clone()),
        CompiledKernel::Dynamic(_) => None,
    };
    let trace = simulate(&artifact.kernel, &binding, real.as_ref(), &cfg)?;
    let mode = artifact.kernel.mode();
    finish_run(&a.sim, mode, artifact.kernel.graph(), binding, real.as_ref(), cfg, trace, selected)
}

fn baseline(a: &BaselineArgs) -> Result<(), Failure> {
    let mut spec = load_spec(&a.spec)?;
    apply_durations(&mut spec.graph, &a.sim.duration_models)?;
    let binding = parse_binding(&a.sim.bind)?;
    let cfg = sim_config(spec.sim.as_ref(), &a.sim, 4);
    let real = spec.realize(&binding, cfg.seed).map_err(SimError::from)?;
    let trace = simulate_barrier_baseline(&spec.graph, &binding, real.as_ref(), &cfg)?;
    finish_run(&a.sim, "unfused", &spec.graph, binding, real.as_ref(), cfg, trace, None)
}

fn compare_runs(a: &CompareArgs) -> Result<(), Failure> {
    let mut runs = Vec::new();
    for path in &a.runs {
        let report: RunReport = serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
        runs.push((report.label, report.metrics));
    }
    let c = compare(&runs, &a.baseline).map_err(anyhow::Error::from)?;
    print!("{}", c.table());
    if let Some(path) = &a.output {
        write(path, &serde_json::to_string_pretty(&c).expect("comparison serializes"))?;
    }
    Ok(())
}

fn inspect(path: &Path) -> Result<(), Failure> {
    let artifact = KernelArtifact::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let g = artifact.kernel.graph();
    println!("mode: {}", artifact.kernel.mode());
    println!("calls: {}  event tensors: {}  runtime tensors: {}", g.calls.len(), g.event_tensors.len(), g.runtime_tensors.len());
    match &artifact.kernel {
        CompiledKernel::Static(k) => {
            println!("sms: {}  prefetch: {}  schedules: {}", k.num_sms, k.prefetch, k.schedules.len());
            for s in &k.schedules {
                let count = |f: fn(&Instr) -> bool| s.entries().flat_map(|e| &e.instrs).filter(|i| f(i)).count();
                let lens: Vec<String> = s.sm_queues.iter().map(|q| q.len().to_string()).collect();
                println!(
                    "  sample [{}]: sm queues [{}] dma {} | waits {} notifies {} | counters {}",
                    s.binding,
                    lens.join(" "),
                    s.dma_queue.len(),
                    count(|i| matches!(i, Instr::Wait { .. })),
                    count(|i| matches!(i, Instr::Notify { .. })),
                    s.layout.initial.len()
                );
            }
        }
        CompiledKernel::Dynamic(k) => {
            println!("early push: {}  prefetch: {}", k.early_push, k.prefetch);
            for t in &k.templates {
                let ops: Vec<String> = t
                    .instrs
                    .iter()
                    .map(|i| serde_json::to_value(i).expect("instr serializes")["op"].as_str().unwrap_or("?").to_string())
                    .collect();
                println!("  call {} {}: {}", t.call, t.func, ops.join(" "));
            }
            println!("complete-on entries: {}  trigger entries: {}", k.complete_on.len(), k.triggers.len());
        }
    }
    Ok(())
}

fn workload(cmd: &WorkloadCmd) -> Result<(), Failure> {
    match cmd {
        WorkloadCmd::List => {
            for name in BUILTINS {
                println!("{name}");
            }
        }
        WorkloadCmd::Emit { name, output } => {
            let text = builtin(name).map_err(anyhow::Error::from)?.to_json();
            match output {
                Some(path) => write(path, &text)?,
                None => println!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.cmd {
        Command::Compile(a) => compile(a),
        Command::Run(a) => run(a),
        Command::Baseline(a) => baseline(a),
        Command::Compare(a) => compare_runs(a),
        Command::Inspect { kernel } => inspect(kernel),
        Command::Workload { cmd } => workload(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Simulation(e)) => {
            eprintln!("simulation error: {e:#}");
            ExitCode::from(2)
        }
    }
}
