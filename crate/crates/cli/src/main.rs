//! Command-line front end: plan parsing, world simulation, benchmark
//! runs, an interactive session, and the numeric self-check.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rdmm_core::bench::{load_dataset, run_benchmark, DatasetRecord, RunOptions};
use rdmm_core::perception::MemoryProfile;
use rdmm_core::plan::{line_col, parse_plan, print_canonical, ParseError};
use rdmm_core::planner::{
    build_system_prompt, CorruptingPlanner, DecodeParams, GoldenPlanner, Planner, PlannerRequest,
    RemoteConfig, RemotePlanner, ScriptedPlanner,
};
use rdmm_core::validate;
use rdmm_core::world::{execute_plan, load_world, ExecutionTrace, RobotState, StepStatus};
use rdmm_quant::selfcheck::{run_selfcheck, Fault};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "rdmm", about = "Household robot plan toolchain", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Backend {
    /// Replay the dataset's own gold plans.
    Golden,
    /// Look up plans in a JSON instruction-to-plan map.
    Scripted,
    /// Gold plans with seeded random mutations.
    Corrupt,
    /// Chat-completions HTTP endpoint.
    Remote,
}

#[derive(clap::Args)]
struct BackendArgs {
    /// Plan source for generation.
    #[arg(long, value_enum)]
    backend: Backend,
    /// Instruction-to-plan JSON map (scripted backend).
    #[arg(long)]
    map: Option<PathBuf>,
    /// Chat-completions URL (remote backend); a bearer token is read
    /// from the RDMM_API_KEY environment variable if set.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent to the remote endpoint.
    #[arg(long, default_value = "local")]
    model: String,
    /// Corruption probability per record (corrupt backend).
    #[arg(long, default_value_t = 0.25)]
    rate: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a plan file and print its canonical form.
    Parse {
        /// Plan file to check.
        file: PathBuf,
    },
    /// Validate and execute a plan against a world file.
    Simulate {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Run a backend over a dataset and write accuracy reports.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        /// Use the first N records as prompt examples and skip them
        /// during evaluation.
        #[arg(long, default_value_t = 0)]
        shots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Directory for report.json and report.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Memory profile JSON included in the system prompt.
        #[arg(long)]
        memory: Option<PathBuf>,
        /// Record this timestamp instead of the wall clock, for
        /// byte-stable reports.
        #[arg(long)]
        fixed_timestamp: Option<String>,
    },
    /// Interactive session: type an instruction, watch the plan run.
    Repl {
        #[arg(long)]
        world: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        /// Dataset supplying gold plans (golden/corrupt backends).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the quantization and adapter-math property suite.
    QuantSelfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Deliberately corrupt the codebook to prove the checks bite.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Parse { file } => cmd_parse(&file),
        Command::Simulate { world, plan } => cmd_simulate(&world, &plan),
        Command::Bench { dataset, backend, shots, seed, parallelism, out, memory, fixed_timestamp } => {
            cmd_bench(&dataset, &backend, shots, seed, parallelism, &out, memory.as_deref(), fixed_timestamp)
        }
        Command::Repl { world, backend, dataset, seed } => {
            cmd_repl(&world, &backend, dataset.as_deref(), seed)
        }
        Command::QuantSelfcheck { seed, inject_fault } => cmd_quant_selfcheck(seed, inject_fault),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn print_parse_errors(text: &str, errors: &[ParseError]) {
    for e in errors {
        let (line, col) = line_col(text, e.span.start);
        eprintln!("{line}:{col}: {e}");
    }
}

fn cmd_parse(file: &Path) -> Result<ExitCode> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    match parse_plan(&text) {
        Ok(plan) => {
            let canonical = print_canonical(&plan);
            if !canonical.is_empty() {
                println!("{canonical}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(errors) => {
            print_parse_errors(&text, &errors);
            Ok(ExitCode::FAILURE)
        }
    }
}

fn render_trace(trace: &ExecutionTrace) {
    for (i, step) in trace.steps.iter().enumerate() {
        let status = match step.status {
            StepStatus::Ok => "ok".to_string(),
            StepStatus::Failed(code) => format!("failed: {code}"),
        };
        println!("step {i}: {} ... {status}", step.action);
        if let Some(text) = &step.utterance {
            println!("  says: {text}");
        }
        if !step.state_delta.is_empty() {
            println!("  {}", step.state_delta);
        }
    }
    match trace.final_status {
        rdmm_core::world::FinalStatus::Completed => println!("completed"),
        rdmm_core::world::FinalStatus::HaltedAt(i) => println!("halted at step {i}"),
    }
}

fn render_robot(robot: &RobotState) {
    println!(
        "robot: room={} held={} focus={} answer={}",
        robot.room,
        robot.held.as_deref().unwrap_or("-"),
        robot.focus.as_ref().map(|f| format!("{f:?}")).unwrap_or_else(|| "-".into()),
        robot.answer.as_deref().unwrap_or("-"),
    );
}

fn cmd_simulate(world_file: &Path, plan_file: &Path) -> Result<ExitCode> {
    let (world, robot) = load_world(world_file)?;
    let text = std::fs::read_to_string(plan_file)
        .with_context(|| format!("reading {}", plan_file.display()))?;
    let plan = match parse_plan(&text) {
        Ok(plan) => plan,
        Err(errors) => {
            print_parse_errors(&text, &errors);
            return Ok(ExitCode::FAILURE);
        }
    };
    let report = validate(&plan);
    for d in report.errors.iter().chain(&report.warnings) {
        eprintln!("validation: step {}: {}", d.step, d.message);
    }
    let (_, robot_after, trace) = execute_plan(&world, &robot, &plan);
    render_trace(&trace);
    render_robot(&robot_after);
    Ok(if trace.completed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn build_backend(
    args: &BackendArgs,
    records: &[DatasetRecord],
    seed: u64,
) -> Result<Box<dyn Planner + Sync>> {
    Ok(match args.backend {
        Backend::Golden => Box::new(GoldenPlanner::new(records)),
        Backend::Scripted => {
            let path = args.map.as_ref().context("--backend scripted requires --map")?;
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Box::new(ScriptedPlanner::from_json(&text)?)
        }
        Backend::Corrupt => {
            Box::new(CorruptingPlanner::new(GoldenPlanner::new(records), args.rate, seed))
        }
        Backend::Remote => {
            let endpoint = args.endpoint.clone().context("--backend remote requires --endpoint")?;
            Box::new(RemotePlanner::new(RemoteConfig {
                endpoint,
                model: args.model.clone(),
                timeout: Duration::from_secs(30),
            }))
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    dataset: &Path,
    backend_args: &BackendArgs,
    shots: usize,
    seed: u64,
    parallelism: usize,
    out: &Path,
    memory: Option<&Path>,
    fixed_timestamp: Option<String>,
) -> Result<ExitCode> {
    if parallelism == 0 {
        bail!("--parallelism must be at least 1");
    }
    let records = load_dataset(dataset)?;
    if shots > records.len() {
        bail!("--shots {} exceeds the {} dataset records", shots, records.len());
    }
    let backend = build_backend(backend_args, &records, seed)?;
    let (shot_records, eval) = records.split_at(shots);
    if eval.is_empty() {
        bail!("no records left to evaluate after taking {shots} shots");
    }
    let memory = match memory {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<MemoryProfile>(&text)?
        }
        None => MemoryProfile::default(),
    };
    let opts = RunOptions {
        parallelism,
        seed,
        memory,
        decode: DecodeParams { seed: Some(seed), ..DecodeParams::default() },
        timestamp: fixed_timestamp,
    };
    let report = run_benchmark(backend.as_ref(), eval, shot_records, &opts);

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("report.json"), report.to_json())?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;
    println!("{}", report.render_table());
    if report.metadata.backend_errors > 0 {
        eprintln!("{} backend errors (scored as incorrect)", report.metadata.backend_errors);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_repl(
    world_file: &Path,
    backend_args: &BackendArgs,
    dataset: Option<&Path>,
    seed: u64,
) -> Result<ExitCode> {
    let records = match dataset {
        Some(path) => load_dataset(path)?,
        None => Vec::new(),
    };
    if matches!(backend_args.backend, Backend::Golden | Backend::Corrupt) && records.is_empty() {
        bail!("--backend {:?} requires --dataset", backend_args.backend);
    }
    let backend = build_backend(backend_args, &records, seed)?;
    let (mut world, mut robot) = load_world(world_file)?;
    let system_prompt = build_system_prompt(rdmm_core::registry(), &robot.memory, &[]);

    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            break; // end of input
        }
        let instruction = line.trim();
        if instruction == ":quit" {
            break;
        }
        if instruction.is_empty() {
            continue;
        }
        let request = PlannerRequest {
            system_prompt: system_prompt.clone(),
            instruction: instruction.to_string(),
            decode: DecodeParams { seed: Some(seed), ..DecodeParams::default() },
        };
        let response = match backend.generate(&request) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("generation failed: {e}");
                continue;
            }
        };
        let plan = match parse_plan(&response.plan_text) {
            Ok(plan) => plan,
            Err(errors) => {
                print_parse_errors(&response.plan_text, &errors);
                continue;
            }
        };
        println!("{}", print_canonical(&plan));
        let report = validate(&plan);
        for d in report.errors.iter().chain(&report.warnings) {
            eprintln!("validation: step {}: {}", d.step, d.message);
        }
        let (w2, r2, trace) = execute_plan(&world, &robot, &plan);
        render_trace(&trace);
        world = w2;
        robot = r2;
        render_robot(&robot);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_quant_selfcheck(seed: u64, inject_fault: bool) -> Result<ExitCode> {
    let fault = inject_fault.then_some(Fault::CorruptCodebook);
    let report = run_selfcheck(seed, fault);
    for c in &report.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {} ({})", c.name, c.detail);
    }
    Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
