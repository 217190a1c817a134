//! Command-line frontend.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::bisim::{self, Relation};
use crate::error::{Error, Result};
use crate::gallery;
use crate::generate;
use crate::graph::Graph;
use crate::model::{validate_simple, ModelFile};
use crate::neural::Registry;
use crate::rational::Rational;
use crate::semantics::{self, Certificate, RunTrace};
use crate::transform::{self, with_provenance, Variant};
use crate::verify::{self, VerifyInput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_UNSTABLE: i32 = 4;

pub const MAX_STEPS_ENV: &str = "RGNN_LAB_MAX_STEPS_DEFAULT";
const MAX_STEPS_FALLBACK: usize = 1000;

#[derive(Parser, Debug)]
#[command(name = "rgnn-lab", version, about = "Run, transform and verify recurrent GNNs in exact arithmetic")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a model on a graph under one of the semantics.
    Run(RunArgs),
    /// Translate between converging and halting models.
    Transform(TransformArgs),
    /// Check the derived converging run against its halting source.
    Verify(VerifyArgs),
    /// Graded bisimulation tools.
    #[command(subcommand)]
    Bisim(BisimCommand),
    /// Generate graphs, gallery fixtures and bisimilar pairs.
    Gen(GenArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SemanticsArg {
    Converging,
    Halting,
    OutputConverging,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    C2h,
    H2c,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum)]
    pub semantics: SemanticsArg,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub window: usize,
    /// JSONL trace destination.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Summary destination (stdout if absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub direction: Direction,
    #[arg(long)]
    pub simple: bool,
    #[arg(long)]
    pub bound: Option<Rational>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// The halting source model.
    #[arg(long)]
    pub model: PathBuf,
    /// One or more input graphs; each is an independent trial.
    #[arg(long, required = true, num_args = 1..)]
    pub graph: Vec<PathBuf>,
    #[arg(long)]
    pub simple: bool,
    #[arg(long)]
    pub bound: Option<Rational>,
    /// Recorded converging trace to check instead of running the derived model.
    #[arg(long, requires = "trace_h")]
    pub trace_c: Option<PathBuf>,
    /// Recorded halting trace.
    #[arg(long, requires = "trace_c")]
    pub trace_h: Option<PathBuf>,
    /// Derived model whose readout is checked against the source output.
    #[arg(long)]
    pub derived: Option<PathBuf>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Desynchronisation-gap histogram CSV.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Subcommand, Debug)]
pub enum BisimCommand {
    /// Check that a relation is a graded bisimulation.
    Check(PairArgs),
    /// Coarsest graded bisimulation on the disjoint union.
    Coarsest(UnionArgs),
    /// Check that a model's run maps the relation to a graded bisimulation.
    Invariance(InvarianceArgs),
}

#[derive(Args, Debug)]
pub struct UnionArgs {
    #[arg(long = "g")]
    pub g: PathBuf,
    #[arg(long = "h")]
    pub h: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PairArgs {
    #[arg(long = "g")]
    pub g: PathBuf,
    #[arg(long = "h")]
    pub h: PathBuf,
    #[arg(long)]
    pub relation: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InvarianceArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Checks the labelling after each of `0..=steps` layer applications.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct GenWhat {
    /// Copy a gallery fixture.
    #[arg(long)]
    pub gallery: Option<String>,
    /// `n=<int> p=<rational> seed=<int> [loops=<rational>] [palette=<gallery name>]`
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    pub random_graph: Option<Vec<String>>,
    /// `cycle-cover n=<int> k=<int>`, `duplication n=<int> p=<rational> seed=<int>`
    /// or `random-cover n=<int> k=<int> p=<rational> seed=<int>`
    #[arg(long, num_args = 1.., value_name = "KIND [KEY=VALUE]...")]
    pub bisim_pair: Option<Vec<String>>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub what: GenWhat,
    /// Output file; for bisimilar pairs, a directory receiving g.json, h.json and relation.json.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BudgetExhausted { .. } => EXIT_BUDGET,
            Error::UnstableOutputCycle { .. } => EXIT_UNSTABLE,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

type CliResult = std::result::Result<i32, Failure>;

/// Parses `args`, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{e}")
            } else {
                write!(stdout, "{e}")
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "rgnn-lab: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CliResult {
    match cmd {
        Command::Run(a) => cmd_run(&a, out),
        Command::Transform(a) => cmd_transform(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Bisim(b) => match b {
            BisimCommand::Check(a) => cmd_bisim_check(&a, out),
            BisimCommand::Coarsest(a) => cmd_bisim_coarsest(&a, out),
            BisimCommand::Invariance(a) => cmd_bisim_invariance(&a, out),
        },
        Command::Gen(a) => cmd_gen(&a, out),
    }
}

/// `--max-steps`, else the environment default, else 1000.
pub fn max_steps(flag: Option<usize>) -> std::result::Result<usize, Failure> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(MAX_STEPS_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| input(format!("{MAX_STEPS_ENV} must be a natural number, got {s:?}"))),
        Err(_) => Ok(MAX_STEPS_FALLBACK),
    }
}

/// Writes via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn emit(path: Option<&Path>, contents: &str, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    match path {
        Some(p) => write_atomic(p, contents)?,
        None => out
            .write_all(contents.as_bytes())
            .map_err(|e| Failure::from(Error::from(e)))?,
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path, &Registry::builtin())
}

fn load_trace(path: &Path, g: &Graph) -> Result<RunTrace> {
    semantics::read_trace(BufReader::new(fs::File::open(path)?), g.ids())
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> CliResult {
    let steps = max_steps(a.max_steps)?;
    let file = load_model(&a.model)?;
    let g = Graph::load(&a.graph)?;
    let r = file.model.base();
    let trace = match a.semantics {
        SemanticsArg::Converging => semantics::trace_converging(r, &g, steps, None)?,
        SemanticsArg::OutputConverging => semantics::trace_output_converging(r, &g, steps, a.window)?,
        SemanticsArg::Halting => {
            let h = file
                .model
                .as_halting()
                .ok_or_else(|| input("halting semantics needs a halting model"))?;
            semantics::trace_halting(h, &g, steps)?
        }
    };
    if let Some(p) = &a.trace {
        write_atomic(p, &semantics::trace_to_string(&trace))?;
    }
    let summary = semantics::run_summary(r, &trace)?;
    emit(a.output.as_deref(), &format!("{summary}\n"), out)?;
    Ok(match trace.certificate {
        Certificate::BudgetExhausted => EXIT_BUDGET,
        Certificate::UnstableOutputCycle => EXIT_UNSTABLE,
        _ => EXIT_OK,
    })
}

fn cmd_transform(a: &TransformArgs, out: &mut dyn Write) -> CliResult {
    let file = load_model(&a.model)?;
    let variant = if a.simple { Variant::Simple } else { Variant::General };
    if a.simple {
        validate_simple(&file.model).map_err(|e| Failure::from(Error::NotSimple(e)))?;
    }
    let derived = match a.direction {
        Direction::C2h => {
            let r = file.model.base();
            let h = if a.simple {
                transform::to_halting_simple(r)?
            } else {
                transform::to_halting(r)?
            };
            with_provenance(h, &file.model, "c2h", variant, None)
        }
        Direction::H2c => {
            let h = file
                .model
                .as_halting()
                .ok_or_else(|| input("h2c needs a halting model"))?;
            if a.simple && a.bound.is_none() {
                return Err(input("--simple h2c needs --bound"));
            }
            let c = verify::compile(h, variant, a.bound.as_ref())?;
            with_provenance(c.derived, &file.model, "h2c", variant, c.bound)
        }
    };
    emit(a.output.as_deref(), &(derived.to_json_pretty() + "\n"), out)?;
    Ok(EXIT_OK)
}

struct Trial {
    report: verify::CoherenceReport,
}

fn verify_one(a: &VerifyArgs, source: &ModelFile, path: &Path, steps: usize) -> Result<Trial> {
    let h = source
        .model
        .as_halting()
        .ok_or_else(|| Error::InvalidModel("verify needs a halting source model".into()))?;
    let g = Graph::load(path)?;
    let variant = if a.simple { Variant::Simple } else { Variant::General };
    let report = match (&a.trace_c, &a.trace_h) {
        (Some(tc), Some(th)) => {
            let derived = a.derived.as_deref().map(load_model).transpose()?;
            let input = VerifyInput {
                graph: &g,
                source: h,
                derived_readout: derived.as_ref().map(|d| d.model.base().readout()),
            };
            verify::check(&input, &load_trace(tc, &g)?, &load_trace(th, &g)?)?
        }
        _ => verify::verify_on_graph(h, &g, variant, a.bound.as_ref(), steps)?.report,
    };
    Ok(Trial { report })
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> CliResult {
    let steps = max_steps(a.max_steps)?;
    let source = load_model(&a.model)?;
    if a.simple && a.bound.is_none() && a.trace_c.is_none() {
        return Err(input("--simple verification needs --bound"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| input(e.to_string()))?;
    let trials: Vec<Result<Trial>> =
        pool.install(|| a.graph.par_iter().map(|p| verify_one(a, &source, p, steps)).collect());
    let trials = trials.into_iter().collect::<Result<Vec<_>>>()?;

    let report = if trials.len() == 1 {
        trials[0].report.to_json() + "\n"
    } else {
        let all: Vec<Value> = a
            .graph
            .iter()
            .zip(&trials)
            .map(|(p, t)| json!({"graph": p.display().to_string(), "report": t.report}))
            .collect();
        serde_json::to_string_pretty(&all).expect("report serialisation") + "\n"
    };
    emit(a.report.as_deref(), &report, out)?;
    if let Some(p) = &a.stats {
        let mut total: BTreeMap<usize, usize> = BTreeMap::new();
        for t in &trials {
            for (gap, c) in &t.report.gap_histogram {
                *total.entry(*gap).or_default() += c;
            }
        }
        let mut csv = String::from("gap,count\n");
        for (gap, c) in total {
            csv.push_str(&format!("{gap},{c}\n"));
        }
        write_atomic(p, &csv)?;
    }
    Ok(if trials.iter().all(|t| t.report.all_pass()) {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

fn load_pair(a: &PairArgs) -> Result<(Graph, Graph, Relation)> {
    let g = Graph::load(&a.g)?;
    let h = Graph::load(&a.h)?;
    let z = Relation::from_json(&fs::read_to_string(&a.relation)?, &g, &h)?;
    Ok((g, h, z))
}

fn cmd_bisim_check(a: &PairArgs, out: &mut dyn Write) -> CliResult {
    let (g, h, z) = load_pair(a)?;
    let r = bisim::check_graded_bisimulation(&g, &h, &z);
    let doc = json!({
        "ok": r.ok,
        "totalSurjective": bisim::is_totally_surjective(&z, &g, &h),
        "violation": r.violation.map(|(u, v, why)| json!({"g": u, "h": v, "reason": why})),
    });
    emit(a.output.as_deref(), &format!("{doc}\n"), out)?;
    Ok(if r.ok { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_bisim_coarsest(a: &UnionArgs, out: &mut dyn Write) -> CliResult {
    let g = Graph::load(&a.g)?;
    let h = Graph::load(&a.h)?;
    let p = bisim::coarsest_graded_bisimulation(&g, &h)?;
    emit(a.output.as_deref(), &(p.to_json(&g, &h) + "\n"), out)?;
    Ok(EXIT_OK)
}

fn cmd_bisim_invariance(a: &InvarianceArgs, out: &mut dyn Write) -> CliResult {
    let (g, h, z) = load_pair(&a.pair)?;
    let pre = bisim::check_graded_bisimulation(&g, &h, &z);
    if !pre.ok {
        return Err(input("the relation is not a graded bisimulation between the inputs"));
    }
    let file = load_model(&a.model)?;
    let mut broken = None;
    for t in 0..=a.steps {
        if !bisim::check_transformer_invariance(bisim::run_transformer(file.model.base(), t), &g, &h, &z)? {
            broken = Some(t);
            break;
        }
    }
    let doc = json!({"invariant": broken.is_none(), "steps": a.steps, "firstBrokenStep": broken});
    emit(a.pair.output.as_deref(), &format!("{doc}\n"), out)?;
    Ok(if broken.is_none() { EXIT_OK } else { EXIT_FAILED })
}

/// `key=value` arguments.
fn parse_params(items: &[String]) -> std::result::Result<BTreeMap<String, String>, Failure> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| input(format!("expected key=value, got {s:?}")))
        })
        .collect()
}

fn param<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str) -> std::result::Result<T, Failure> {
    let s = m.get(key).ok_or_else(|| input(format!("missing parameter {key}")))?;
    s.parse().map_err(|_| input(format!("bad value for {key}: {s:?}")))
}

fn param_or<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str, default: T) -> std::result::Result<T, Failure> {
    if m.contains_key(key) {
        param(m, key)
    } else {
        Ok(default)
    }
}

fn check_keys(m: &BTreeMap<String, String>, allowed: &[&str]) -> std::result::Result<(), Failure> {
    match m.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(input(format!("unknown parameter {k}"))),
        None => Ok(()),
    }
}

fn random_graph(m: &BTreeMap<String, String>) -> std::result::Result<Graph, Failure> {
    let n: usize = param(m, "n")?;
    let p: Rational = param(m, "p")?;
    let seed: u64 = param(m, "seed")?;
    let loops: Rational = param_or(m, "loops", Rational::zero())?;
    let palette = match m.get("palette") {
        Some(name) => gallery::get(name)?.palette,
        None => generate::red_green_palette(),
    };
    Ok(generate::random_graph(&mut generate::rng(seed), n, &p, &loops, &palette)?)
}

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> CliResult {
    if let Some(name) = &a.what.gallery {
        let e = gallery::get(name)?;
        emit(a.output.as_deref(), &(e.file().to_json_pretty() + "\n"), out)?;
    } else if let Some(items) = &a.what.random_graph {
        let m = parse_params(items)?;
        check_keys(&m, &["n", "p", "seed", "loops", "palette"])?;
        emit(a.output.as_deref(), &(random_graph(&m)?.to_json() + "\n"), out)?;
    } else if let Some(items) = &a.what.bisim_pair {
        let (kind, rest) = items.split_first().ok_or_else(|| input("missing pair kind"))?;
        let m = parse_params(rest)?;
        let (g, h, z) = match kind.as_str() {
            "cycle-cover" => {
                check_keys(&m, &["n", "k", "palette"])?;
                let label = match m.get("palette") {
                    Some(name) => gallery::get(name)?.palette[0].clone(),
                    None => generate::red_green_palette()[2].clone(),
                };
                bisim::cycle_cover(param(&m, "n")?, param(&m, "k")?, label)?
            }
            "duplication" => {
                check_keys(&m, &["n", "p", "seed", "loops", "palette"])?;
                bisim::duplication(&random_graph(&m)?)?
            }
            "random-cover" => {
                check_keys(&m, &["n", "k", "p", "seed", "loops", "palette"])?;
                let base = random_graph(&m)?;
                let seed: u64 = param(&m, "seed")?;
                let mut r = generate::rng(seed.wrapping_add(1));
                bisim::random_cover(&mut r, &base, param(&m, "k")?)?
            }
            other => return Err(input(format!("unknown pair kind {other:?}"))),
        };
        match &a.output {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Failure::from(Error::from(e)))?;
                write_atomic(&dir.join("g.json"), &(g.to_json() + "\n"))?;
                write_atomic(&dir.join("h.json"), &(h.to_json() + "\n"))?;
                write_atomic(&dir.join("relation.json"), &(z.to_json(&g, &h) + "\n"))?;
            }
            None => {
                let doc = json!({
                    "g": g.to_doc(),
                    "h": h.to_doc(),
                    "relation": z.to_doc(&g, &h),
                });
                emit(None, &format!("{doc}\n"), out)?;
            }
        }
    }
    Ok(EXIT_OK)
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    main_with(std::env::args_os(), &mut stdout, &mut stderr)
}
