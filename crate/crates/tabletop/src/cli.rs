//! `tabletop` command-line interface.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tabletop_core::describe::{MenuSize, PromptTemplate};
use tabletop_core::metrics::{compare, height_matrix, summarize, Summary, BOOTSTRAP_RESAMPLES};
use tabletop_core::policy::{GreedyTowerPolicy, LlmPolicy, Policy, RandomPolicy, ReplayPolicy};
use tabletop_core::session::{preset, replay_session, verify_transcript, ExperimentConfig, Transcript};

use crate::experiment::{load_experiment, read_manifest, run_experiment, MANIFEST_FILE};
use crate::export::{write_comparison, write_summary, ExportFormat};
use crate::llm::{ChatClient, EndpointConfig, LlmError};
use crate::prompt::{transcript_prompts, SceneSpec};
use crate::transcript_file::read_transcript;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_FAILURE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "tabletop", version, about = "Symbolic tabletop exploration experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write transcripts, a manifest and summary CSVs.
    Run(RunArgs),
    /// Verify a run directory and export its statistics.
    Analyze(AnalyzeArgs),
    /// Print the system and user prompt for a scene file or transcript step.
    PrintPrompt(PrintPromptArgs),
    /// Re-simulate transcripts offline and check them.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Random,
    Greedy,
    Llm,
    Replay,
}

fn parse_template(s: &str) -> Result<PromptTemplate, String> {
    PromptTemplate::from_name(s).ok_or_else(|| format!("unknown template {s:?} (expected interesting, novel or tower)"))
}

fn parse_menu_size(s: &str) -> Result<MenuSize, String> {
    s.parse().map_err(|e: tabletop_core::describe::InvalidMenuSize| e.to_string())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Named experiment (exp1..exp5, tower-cubes, tower-sphere).
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyKind::Random)]
    pub policy: PolicyKind,
    /// Run directory whose decisions the replay policy repeats.
    #[arg(long, required_if_eq("policy", "replay"))]
    pub from: Option<PathBuf>,
    #[arg(long, value_parser = parse_template)]
    pub template: Option<PromptTemplate>,
    #[arg(long)]
    pub sessions: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Menu entries per step, or `full` for every legal action.
    #[arg(long, value_parser = parse_menu_size)]
    pub menu_size: Option<MenuSize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concurrent sessions. Defaults to 1 for the llm policy, else the CPU count.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory [default: runs/{experiment}/{policy}].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "LLM_MODEL")]
    pub model: Option<String>,
    #[arg(long, env = "LLM_BASE_URL")]
    pub base_url: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Run directory.
    pub dir: PathBuf,
    /// Second run directory; differences are `dir − compare`.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Where to write exports [default: DIR].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: ExportFormat,
    /// Bootstrap seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = BOOTSTRAP_RESAMPLES)]
    pub resamples: usize,
}

#[derive(Debug, Args)]
pub struct PrintPromptArgs {
    /// Scene file (JSON).
    #[arg(long, conflicts_with_all = ["transcript", "step"], required_unless_present = "transcript")]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// 0-based step of the transcript.
    #[arg(long, default_value_t = 0)]
    pub step: usize,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A transcript file or a run directory.
    pub path: PathBuf,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&args.preset, &args.config, &args.from) {
        (Some(name), None, _) => preset(name).map_err(usage)?,
        (None, Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        (None, None, Some(from)) if args.policy == PolicyKind::Replay => read_manifest(from).map_err(runtime)?.config,
        _ => return Err(usage("one of --preset or --config is required")),
    };
    if let Some(t) = args.template {
        cfg.template = t;
    }
    if let Some(n) = args.sessions {
        cfg.sessions = n;
    }
    if let Some(n) = args.steps {
        cfg.steps = n;
    }
    if let Some(m) = args.menu_size {
        cfg.menu_size = m;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn print_means(out: &mut dyn Write, s: &Summary) {
    let _ = writeln!(out, "step  mean_height  running_max");
    for (j, (m, r)) in s.mean.iter().zip(&s.running_max_mean).enumerate() {
        let _ = writeln!(out, "{j:>4}  {m:>11.3}  {r:>11.3}");
    }
    let _ = writeln!(
        out,
        "sessions reaching height {}: {}/{}",
        s.object_count,
        s.max_distribution[s.object_count - 1],
        s.sessions
    );
}

type Factory = Box<dyn Fn(usize) -> Box<dyn Policy> + Sync>;

fn policy_factory(args: &RunArgs, cfg: &ExperimentConfig) -> Result<(String, Factory), CliError> {
    Ok(match args.policy {
        PolicyKind::Random => ("random".into(), Box::new(|_| Box::new(RandomPolicy) as Box<dyn Policy>)),
        PolicyKind::Greedy => ("greedy".into(), Box::new(|_| Box::new(GreedyTowerPolicy) as Box<dyn Policy>)),
        PolicyKind::Llm => {
            let mut endpoint = EndpointConfig::from_env().map_err(|e| match e {
                LlmError::MissingApiKey => usage(e),
                other => runtime(other),
            })?;
            if let Some(m) = &args.model {
                endpoint.model = m.clone();
            }
            if let Some(b) = &args.base_url {
                endpoint.base_url = b.clone();
            }
            let client = Arc::new(ChatClient::new(endpoint));
            let template = cfg.template;
            (
                "llm".into(),
                Box::new(move |_| Box::new(LlmPolicy::new(client.clone(), template)) as Box<dyn Policy>),
            )
        }
        PolicyKind::Replay => {
            let from = args.from.as_ref().expect("clap requires --from");
            let (manifest, transcripts) = load_experiment(from).map_err(runtime)?;
            let steps: BTreeMap<usize, _> = transcripts
                .into_iter()
                .map(|t| (t.header.session_index, t.steps))
                .collect();
            let label = manifest.policy.clone();
            let name = manifest.policy;
            (
                name,
                Box::new(move |i| {
                    Box::new(ReplayPolicy::new(label.clone(), steps.get(&i).cloned().unwrap_or_default()))
                        as Box<dyn Policy>
                }),
            )
        }
    })
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let (policy_name, factory) = policy_factory(args, &cfg)?;
    let jobs = args.jobs.unwrap_or_else(|| match args.policy {
        PolicyKind::Llm => 1,
        _ => std::thread::available_parallelism().map_or(1, |n| n.get()),
    });
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(&cfg.name).join(&policy_name));
    let (_, transcripts) = run_experiment(&cfg, &policy_name, factory, jobs, &dir).map_err(runtime)?;

    let failed: Vec<_> = transcripts.iter().filter(|t| !t.footer.complete).collect();
    for t in &failed {
        let _ = writeln!(
            err,
            "session {} stopped after {} step(s): {}",
            t.header.session_index,
            t.footer.steps,
            t.footer.error.as_deref().unwrap_or("unknown error")
        );
    }
    if !failed.is_empty() {
        return Err(runtime(format!(
            "{} of {} sessions incomplete; partial transcripts in {}",
            failed.len(),
            transcripts.len(),
            dir.display()
        )));
    }
    let summary = summarize(&height_matrix(&transcripts).map_err(runtime)?);
    write_summary(&dir, &summary, ExportFormat::Csv).map_err(runtime)?;
    let _ = writeln!(out, "{} sessions written to {}", transcripts.len(), dir.display());
    print_means(out, &summary);
    Ok(())
}

/// Loads and verifies a run directory.
fn verified_run(dir: &Path) -> Result<Vec<Transcript>, CliError> {
    let (manifest, transcripts) = load_experiment(dir).map_err(runtime)?;
    for (entry, t) in manifest.sessions.iter().zip(&transcripts) {
        verify_transcript(t).map_err(|e| runtime(format!("{}: {e}", dir.join(&entry.file).display())))?;
    }
    Ok(transcripts)
}

fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let a = summarize(&height_matrix(&verified_run(&args.dir)?).map_err(runtime)?);
    let dir = args.out.clone().unwrap_or_else(|| args.dir.clone());
    let mut written = write_summary(&dir, &a, args.format).map_err(runtime)?;
    print_means(out, &a);
    if let Some(other) = &args.compare {
        let b = summarize(&height_matrix(&verified_run(other)?).map_err(runtime)?);
        let c = compare(&a, &b, args.resamples, args.seed).map_err(runtime)?;
        written.push(write_comparison(&dir, &c, args.format).map_err(runtime)?);
        let _ = writeln!(
            out,
            "reach difference {:.4} (95% CI {:.4} .. {:.4})",
            c.reach_diff, c.reach_diff_ci.lo, c.reach_diff_ci.hi
        );
    }
    for p in written {
        let _ = writeln!(out, "wrote {}", p.display());
    }
    Ok(())
}

fn cmd_print_prompt(args: &PrintPromptArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let pair = match (&args.scene, &args.transcript) {
        (Some(scene), _) => SceneSpec::load(scene).and_then(|s| s.prompts()),
        (None, Some(path)) => {
            let t = read_transcript(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            transcript_prompts(&t, args.step)
        }
        (None, None) => return Err(usage("one of --scene or --transcript is required")),
    }
    .map_err(runtime)?;
    let _ = out.write_all(pair.render().as_bytes());
    Ok(())
}

fn replay_one(path: &Path) -> Result<Transcript, CliError> {
    let fail = |e: &dyn std::fmt::Display| runtime(format!("{}: {e}", path.display()));
    let t = read_transcript(path).map_err(|e| fail(&e))?;
    verify_transcript(&t).map_err(|e| fail(&e))?;
    let again = replay_session(&t).map_err(|e| fail(&e))?;
    if again != t {
        let step = t
            .steps
            .iter()
            .zip(&again.steps)
            .find(|(a, b)| a != b)
            .map_or(again.steps.len().min(t.steps.len()) + 1, |(a, _)| a.step);
        return Err(fail(&format!("step {step}: replay diverged")));
    }
    Ok(again)
}

fn cmd_replay(args: &ReplayArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let files: Vec<PathBuf> = if args.path.is_dir() {
        let manifest = args.path.join(MANIFEST_FILE);
        if manifest.exists() {
            read_manifest(&args.path)
                .map_err(runtime)?
                .sessions
                .iter()
                .map(|e| args.path.join(&e.file))
                .collect()
        } else {
            let mut v: Vec<_> = fs::read_dir(&args.path)
                .map_err(runtime)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            v.sort();
            v
        }
    } else {
        vec![args.path.clone()]
    };
    if files.is_empty() {
        return Err(runtime(format!("{}: no transcripts found", args.path.display())));
    }
    let mut transcripts = Vec::with_capacity(files.len());
    for f in &files {
        transcripts.push(replay_one(f)?);
    }
    let _ = writeln!(out, "{} transcript(s) replayed without divergence", transcripts.len());
    if transcripts.iter().all(|t| t.footer.complete) {
        if let Ok(m) = height_matrix(&transcripts) {
            print_means(out, &summarize(&m));
        }
    }
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out, err),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::PrintPrompt(a) => cmd_print_prompt(a, out),
        Command::Replay(a) => cmd_replay(a, out),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let target: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(target, "{e}");
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}
