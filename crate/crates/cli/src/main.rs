use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spatial_csp::harness::{evaluate, read_records, synth_scene, EngineConfig, EvalMode, EvalOptions, GeneratorSpec, SceneStore};
use spatial_csp::llm_gateway::{default_labels, LlmClient, LlmError};
use spatial_csp::program::{compile, registry_signatures, render_diagnostics, score_function_list};
use spatial_csp::solver::{ground, Engine, Heuristic, SolveStatus};
use spatial_csp::{load_scene, Scene};

/// Ground natural-language object references in 3D scenes by solving spatial
/// constraint programs.
#[derive(Parser)]
#[command(name = "spatial-csp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and lower a program in strict mode and print its diagnostics.
    Check {
        /// Program file, or `-` for stdin.
        program: PathBuf,
    },
    /// Ground one program in one scene and print the result document.
    Solve {
        #[arg(long)]
        scene: PathBuf,
        /// Program file, or `-` for stdin.
        #[arg(long)]
        program: PathBuf,
        /// Reject imperfect programs instead of repairing them.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        engine: EngineFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ask the configured chat model for a program.
    Gen {
        #[arg(long)]
        query: String,
        #[arg(long)]
        scene: PathBuf,
        /// Comma-separated relevant labels; defaults to every label in the scene.
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<String>>,
        #[command(flatten)]
        llm: LlmFlags,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a query file against a directory of scenes.
    Eval {
        /// Directory holding `<scene_id>.json` scene documents.
        #[arg(long)]
        scenes: PathBuf,
        /// Newline-delimited query records.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value = "bbox")]
        mode: EvalMode,
        /// Directory of `<record index>.txt` programs.
        #[arg(long)]
        programs: Option<PathBuf>,
        /// Generate programs that are neither stored nor on disk.
        #[arg(long)]
        llm: bool,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        engine: EngineFlags,
        #[command(flatten)]
        llm_flags: LlmFlags,
        /// Report path; the per-record log goes next to it.
        #[arg(long, default_value = "eval_report.json")]
        out: PathBuf,
    },
    /// Print the builtin function signatures.
    Signatures {
        /// Print the score-function list instead.
        #[arg(long)]
        score_functions: bool,
    },
    /// Generate a synthetic scene document.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EngineFlags {
    /// JSON file with defaults for every flag below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    near: Option<f64>,
    #[arg(long)]
    far: Option<f64>,
    #[arg(long)]
    above_below_horizontal: Option<f64>,
    #[arg(long)]
    between: Option<f64>,
    #[arg(long)]
    on_max_center_distance: Option<f64>,
    /// min, max, first, random or random:<seed>.
    #[arg(long)]
    heuristic: Option<String>,
    /// Seed for the random heuristic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    engine: Option<Engine>,
    /// Skip min/max constraints.
    #[arg(long)]
    no_minmax: bool,
    #[arg(long)]
    max_solutions: Option<usize>,
}

#[derive(Args)]
struct LlmFlags {
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    timeout: Option<u64>,
    #[arg(long)]
    audit_log: Option<PathBuf>,
    /// Directory with the prompt template files.
    #[arg(long)]
    prompts: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Usage,
    Data,
    Program,
    Solver,
    Llm,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Program => "program",
            Kind::Solver => "solver",
            Kind::Llm => "llm",
        }
    }

    fn exit_code(self) -> u8 {
        match self {
            Kind::Usage => 1,
            Kind::Data | Kind::Program => 2,
            Kind::Solver | Kind::Llm => 3,
        }
    }
}

#[derive(Debug)]
struct CliError {
    kind: Kind,
    message: String,
    status: Option<u16>,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn fail(kind: Kind, message: impl Into<String>) -> anyhow::Error {
    CliError { kind, message: message.into(), status: None }.into()
}

fn llm_failure(e: LlmError) -> anyhow::Error {
    let status = match &e {
        LlmError::Status { status, .. } => Some(*status),
        _ => None,
    };
    let kind = match e {
        LlmError::Config(_) | LlmError::Template(_) => Kind::Data,
        _ => Kind::Llm,
    };
    CliError { kind, message: e.to_string(), status }.into()
}

fn read_text(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).context("reading stdin")?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| fail(Kind::Data, format!("{}: {e}", path.display())))
}

fn read_scene(path: &Path) -> Result<Scene> {
    let file = File::open(path).map_err(|e| fail(Kind::Data, format!("{}: {e}", path.display())))?;
    load_scene(BufReader::new(file)).map_err(|e| fail(Kind::Data, format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| fail(Kind::Data, format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                // a closed pipe (`| head`) is not a failure
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::load(p).map_err(|e| fail(Kind::Data, e.to_string())),
        None => Ok(EngineConfig::default()),
    }
}

impl EngineFlags {
    fn apply(&self, mut cfg: EngineConfig) -> Result<EngineConfig> {
        let th = &mut cfg.thresholds;
        th.near_distance = self.near.unwrap_or(th.near_distance);
        th.far_distance = self.far.unwrap_or(th.far_distance);
        th.above_below_horizontal_distance = self.above_below_horizontal.unwrap_or(th.above_below_horizontal_distance);
        th.between_distance = self.between.unwrap_or(th.between_distance);
        if self.on_max_center_distance.is_some() {
            th.on_max_center_distance = self.on_max_center_distance;
        }
        match (self.heuristic.as_deref(), self.seed) {
            (Some("random"), Some(seed)) => cfg.heuristic = Heuristic::Random { seed },
            (Some("random"), None) => return Err(fail(Kind::Usage, "--heuristic random needs --seed")),
            (Some(h), _) => cfg.heuristic = h.parse().map_err(|e: String| fail(Kind::Usage, e))?,
            (None, Some(seed)) => {
                if let Heuristic::Random { .. } = cfg.heuristic {
                    cfg.heuristic = Heuristic::Random { seed };
                }
            }
            (None, None) => {}
        }
        if let Some(e) = self.engine {
            cfg.engine = e;
        }
        if self.no_minmax {
            cfg.minmax = false;
        }
        if let Some(m) = self.max_solutions {
            cfg.max_solutions = m;
        }
        cfg.solver_config().validate().map_err(|e| fail(Kind::Usage, e))?;
        Ok(cfg)
    }
}

impl LlmFlags {
    fn apply(&self, cfg: &mut EngineConfig) {
        let llm = &mut cfg.llm;
        if let Some(v) = &self.endpoint {
            llm.endpoint_url = v.clone();
        }
        if let Some(v) = &self.model {
            llm.model_name = v.clone();
        }
        if let Some(v) = &self.api_key_env {
            llm.api_key_env = v.clone();
        }
        if let Some(v) = self.timeout {
            llm.timeout_secs = v;
        }
        if self.audit_log.is_some() {
            llm.audit_log = self.audit_log.clone();
        }
        if self.prompts.is_some() {
            llm.prompts_dir = self.prompts.clone();
        }
    }
}

fn check(program: &Path) -> Result<()> {
    let text = read_text(program)?;
    match compile(&text, true) {
        Ok(lowered) => {
            let csp = &lowered.csp;
            println!("ok: {} variables, {} constraints, target {}", csp.variables.len(), csp.constraints.len(), csp.target);
            Ok(())
        }
        Err(e) => {
            let diags = e.diagnostics();
            println!("{}", render_diagnostics(&diags));
            let errors = diags.iter().filter(|d| d.severity == spatial_csp::program::Severity::Error).count();
            Err(fail(Kind::Program, format!("{}: {errors} error(s)", program.display())))
        }
    }
}

fn solve(scene: &Path, program: &Path, strict: bool, flags: &EngineFlags, out: Option<&Path>) -> Result<()> {
    let cfg = flags.apply(load_config(flags.config.as_deref())?)?;
    let scene = read_scene(scene)?;
    let text = read_text(program)?;
    let result = match compile(&text, strict) {
        Ok(lowered) => {
            for d in &lowered.diagnostics {
                eprintln!("{d}");
            }
            ground(&lowered.csp, &scene, &cfg.solver_config())
        }
        Err(e) => {
            let diags = e.diagnostics();
            spatial_csp::solver::GroundingResult::invalid_program(diags.iter().map(ToString::to_string))
        }
    };
    let doc = serde_json::to_string_pretty(&result)? + "\n";
    emit(out, &doc)?;
    match result.status {
        SolveStatus::Solved => Ok(()),
        SolveStatus::InvalidProgram => Err(fail(Kind::Program, "invalid program")),
        SolveStatus::Unsatisfiable => Err(fail(Kind::Solver, "no valid grounding")),
    }
}

fn gen(
    query: &str,
    scene: &Path,
    labels: Option<Vec<String>>,
    flags: &LlmFlags,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    flags.apply(&mut cfg);
    let scene = read_scene(scene)?;
    let labels = labels.unwrap_or_else(|| default_labels(&scene));
    let client = LlmClient::new(cfg.llm).map_err(llm_failure)?;
    let program = client.generate_program(query, &labels).map_err(llm_failure)?;
    emit(out, &(program + "\n"))
}

#[allow(clippy::too_many_arguments)]
fn eval(
    scenes: &Path,
    queries: &Path,
    mode: EvalMode,
    programs: Option<&Path>,
    use_llm: bool,
    jobs: Option<usize>,
    engine: &EngineFlags,
    llm_flags: &LlmFlags,
    out: &Path,
) -> Result<()> {
    let mut cfg = engine.apply(load_config(engine.config.as_deref())?)?;
    llm_flags.apply(&mut cfg);
    let jobs = jobs.unwrap_or(cfg.jobs);
    if jobs == 0 {
        return Err(fail(Kind::Usage, "--jobs must be at least 1"));
    }
    if !scenes.is_dir() {
        return Err(fail(Kind::Data, format!("{}: not a directory", scenes.display())));
    }
    let file = File::open(queries).map_err(|e| fail(Kind::Data, format!("{}: {e}", queries.display())))?;
    let records = read_records(BufReader::new(file)).map_err(|e| fail(Kind::Data, e.to_string()))?;
    let client = if use_llm { Some(LlmClient::new(cfg.llm.clone()).map_err(llm_failure)?) } else { None };
    let opts = EvalOptions { mode, programs_dir: programs, llm: client.as_ref(), jobs, strict: cfg.strict };
    let evaluation = evaluate(&records, &SceneStore::Dir(scenes.to_path_buf()), &cfg.solver_config(), &opts)
        .map_err(|e| fail(Kind::Data, e.to_string()))?;

    let report = serde_json::to_string_pretty(&evaluation.report)? + "\n";
    emit(Some(out), &report)?;
    let mut log = String::new();
    for o in &evaluation.outcomes {
        log.push_str(&serde_json::to_string(o)?);
        log.push('\n');
    }
    emit(Some(&out.with_extension("records.jsonl")), &log)?;
    emit(None, &report)
}

fn synth(seed: u64, spec: &Path, out: Option<&Path>) -> Result<()> {
    let text = read_text(spec)?;
    let spec: GeneratorSpec = serde_json::from_str(&text).map_err(|e| fail(Kind::Data, format!("{}: {e}", spec.display())))?;
    let generated = synth_scene(seed, &spec).map_err(|e| fail(Kind::Data, e.to_string()))?;
    emit(out, &(generated.scene.to_json() + "\n"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Check { program } => check(&program),
        Command::Solve { scene, program, strict, engine, out } => solve(&scene, &program, strict, &engine, out.as_deref()),
        Command::Gen { query, scene, labels, llm, config, out } => {
            gen(&query, &scene, labels, &llm, config.as_deref(), out.as_deref())
        }
        Command::Eval { scenes, queries, mode, programs, llm, jobs, engine, llm_flags, out } => {
            eval(&scenes, &queries, mode, programs.as_deref(), llm, jobs, &engine, &llm_flags, &out)
        }
        Command::Signatures { score_functions } => {
            let text = if score_functions { score_function_list() } else { registry_signatures().to_string() };
            emit(None, &text)
        }
        Command::Synth { seed, spec, out } => synth(seed, &spec, out.as_deref()),
    }
}

fn report(err: &anyhow::Error) -> ExitCode {
    let (kind, status) = match err.downcast_ref::<CliError>() {
        Some(e) => (e.kind, e.status),
        None => (Kind::Data, None),
    };
    let mut body = json!({"kind": kind.name(), "message": format!("{err:#}")});
    if let Some(s) = status {
        body["status"] = json!(s);
    }
    eprintln!("{}", json!({ "error": body }));
    ExitCode::from(kind.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&fail(Kind::Usage, e.to_string().trim_end().to_string())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
