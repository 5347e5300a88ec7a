//! Terminal front end: serve the HTTP API, answer questions interactively,
//! run benchmarks, evaluate queries, and generate synthetic suites.

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sketchql::bench::{self, BenchCase, CaseStatus, Metrics, SynthParams};
use sketchql::engine::{self, BatchLimits, EngineError, Mode, Status};
use sketchql::{
    eval, load_database, parse_completion, parse_sketch, print_sketch, Catalog, EngineConfig, SamplerConfig, Session,
    Sketch, Value,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_SYNTHESIS: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;

/// Rows shown for table previews and final results.
const PREVIEW_ROWS: usize = 5;
const RESULT_ROWS: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "sketchql", version, about = "Complete SQL sketches by answering yes/no questions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Complete a sketch interactively on the terminal.
    Run(RunArgs),
    /// Run sketches against ground-truth queries and emit JSON-lines metrics.
    Bench(BenchArgs),
    /// Evaluate a complete query and print the result as CSV.
    Eval(EvalArgs),
    /// Write a synthetic benchmark suite with a manifest.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
pub struct DatabaseArgs {
    /// Schema JSON file.
    #[arg(long)]
    pub schema: PathBuf,
    /// Directory holding the table CSVs; defaults to the schema's directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

impl DatabaseArgs {
    fn load(&self) -> Result<Catalog> {
        let data = match &self.data {
            Some(d) => d.clone(),
            None => self.schema.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        load_database(&self.schema, &data).with_context(|| format!("loading {}", self.schema.display()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Completions drawn per question.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub mh_steps: Option<usize>,
    #[arg(long)]
    pub max_join_depth: Option<usize>,
    /// Size weight in the completion score.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
}

impl SamplerArgs {
    pub fn engine_config(&self) -> Result<EngineConfig> {
        let d = SamplerConfig::default();
        let sampler = SamplerConfig {
            sample_count: self.samples.unwrap_or(d.sample_count),
            mh_steps: self.mh_steps.unwrap_or(d.mh_steps),
            max_join_depth: self.max_join_depth.unwrap_or(d.max_join_depth),
            rejection_retry_limit: d.rejection_retry_limit,
            seed: self.seed.unwrap_or(d.seed),
        };
        sampler.validate()?;
        let lambda = self.lambda.unwrap_or(0.0);
        if !lambda.is_finite() {
            bail!("lambda must be finite");
        }
        Ok(EngineConfig { sampler, lambda })
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Database to register at startup.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, requires = "schema")]
    pub data: Option<PathBuf>,
    /// Write a JSON snapshot of each session here after every change.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub db: DatabaseArgs,
    /// Sketch file.
    #[arg(long)]
    pub sketch: PathBuf,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Drop soft constraints from the sketch.
    #[arg(long)]
    pub no_soft: bool,
    /// Write the answered questions as JSON lines.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON list of {schema, data, sketch, ground_truth}.
    #[arg(long, conflicts_with_all = ["schema", "synthetic"])]
    pub manifest: Option<PathBuf>,
    /// Generate this many synthetic cases instead of reading files.
    #[arg(long, conflicts_with = "schema")]
    pub synthetic: Option<usize>,
    /// Seed for the synthetic generator.
    #[arg(long, default_value_t = 0)]
    pub synth_seed: u64,
    #[arg(long, requires_all = ["sketch", "oracle"])]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub sketch: Option<PathBuf>,
    /// Ground-truth query file.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Modes to run; repeat for several.
    #[arg(long, value_enum)]
    pub mode: Vec<ModeArg>,
    /// Shorthand for `--mode no-soft`.
    #[arg(long)]
    pub no_soft: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, default_value_t = 50)]
    pub max_iterations: usize,
    /// Wall-clock budget per case in seconds.
    #[arg(long, default_value_t = bench::DEFAULT_TIME_BUDGET.as_secs())]
    pub time_budget: u64,
    /// Record wall time in the metrics; off by default so output is reproducible.
    #[arg(long)]
    pub timing: bool,
    /// Metrics file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Full,
    NoSoft,
    Perfect,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Full => Mode::Full,
            ModeArg::NoSoft => Mode::NoSoft,
            ModeArg::Perfect => Mode::Perfect,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub db: DatabaseArgs,
    /// File holding a query with no holes.
    #[arg(long, alias = "sketch")]
    pub query: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub min_tables: Option<usize>,
    #[arg(long)]
    pub max_tables: Option<usize>,
}

/// Runs one command and returns the process exit code. Diagnostics go to
/// `err`; everything meant for pipes goes to `out`.
pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Serve(a) => serve(&a, err),
        Command::Run(a) => interactive(&a, input, out, err),
        Command::Bench(a) => run_bench(&a, out, err),
        Command::Eval(a) => eval_query(&a, out),
        Command::Gen(a) => generate(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_INPUT
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn serve(a: &ServeArgs, err: &mut dyn Write) -> Result<i32> {
    let state = match &a.snapshots {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            sketchql_service::AppState::with_snapshots(dir.clone())
        }
        None => sketchql_service::AppState::new(),
    };
    if let Some(schema) = &a.schema {
        let db = DatabaseArgs {
            schema: schema.clone(),
            data: a.data.clone(),
        };
        let id = state.add_database(db.load()?);
        writeln!(err, "registered {} as {id}", schema.display())?;
    }
    let addr = SocketAddr::new(a.bind, a.port);
    let runtime = tokio::runtime::Runtime::new()?;
    writeln!(err, "listening on http://{addr}")?;
    runtime
        .block_on(sketchql_service::serve(addr, state))
        .with_context(|| format!("serving on {addr}"))?;
    Ok(EXIT_OK)
}

/// Plain-text table with padded columns.
pub fn render_table(headers: &[String], rows: &[Vec<Value>]) -> String {
    let cells: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(Value::to_string).collect()).collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |items: &[String]| {
        let padded: Vec<String> = items.iter().zip(&widths).map(|(s, &w)| format!("{s:<w$}")).collect();
        format!("  {}\n", padded.join(" | ").trim_end())
    };
    let mut text = line(headers);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    text.push_str(&format!("  {}\n", rule.join("-+-")));
    for row in &cells {
        text.push_str(&line(row));
    }
    text
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("  {l}\n")).collect()
}

fn render_question(session: &Session, number: usize, out: &mut dyn Write) -> Result<()> {
    let pending = session.pending().ok_or_else(|| anyhow!("no pending question"))?;
    let q = &pending.question;
    writeln!(out)?;
    write!(out, "Current sketch:\n{}", indent(&print_sketch(session.sketch())))?;
    writeln!(out, "Question {number}: {}", q.summary())?;
    write!(out, "Resulting sketch:\n{}", indent(&print_sketch(&q.sketch)))?;
    for p in q.previews(session.catalog(), PREVIEW_ROWS)? {
        writeln!(out, "Preview of {}:", p.table)?;
        write!(out, "{}", render_table(&p.headers, &p.rows))?;
    }
    write!(out, "Accept? [y]es / [n]o / [u]ndo: ")?;
    out.flush()?;
    Ok(())
}

/// Whitespace-separated answers, so a script may put several on one line.
struct Answers<'a> {
    input: &'a mut dyn BufRead,
    queue: VecDeque<String>,
}

impl Answers<'_> {
    fn next(&mut self) -> Result<Option<String>> {
        while self.queue.is_empty() {
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                return Ok(None);
            }
            self.queue.extend(line.split_whitespace().map(str::to_lowercase));
        }
        Ok(self.queue.pop_front())
    }
}

fn write_trace(path: Option<&PathBuf>, session: &Session) -> Result<()> {
    if let Some(path) = path {
        std::fs::write(path, session.trace_jsonl()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn load_sketch(a: &RunArgs, catalog: &Catalog) -> Result<Sketch> {
    let text = read(&a.sketch)?;
    let sketch = parse_sketch(&text, catalog).with_context(|| format!("parsing {}", a.sketch.display()))?;
    Ok(if a.no_soft { sketch.strip_soft() } else { sketch })
}

fn interactive(a: &RunArgs, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let catalog = Arc::new(a.db.load()?);
    let config = a.sampler.engine_config()?;
    let sketch = load_sketch(a, &catalog)?;
    let mut session = Session::start(catalog.clone(), sketch, config)?;
    let mut answers = Answers {
        input,
        queue: VecDeque::new(),
    };
    loop {
        match session.status() {
            Status::Complete => {
                let done = session.completion().expect("complete sessions have a completion");
                let result = eval::evaluate(&done, &catalog)?;
                let (headers, rows) = result.display();
                write!(out, "\nFinal query:\n{}", indent(&print_sketch(&done)))?;
                writeln!(out, "Result ({} rows):", rows.len())?;
                let shown = &rows[..rows.len().min(RESULT_ROWS)];
                write!(out, "{}", render_table(&headers, shown))?;
                write_trace(a.trace_out.as_ref(), &session)?;
                return Ok(EXIT_OK);
            }
            Status::Failed => {
                let f = session.state().failure.clone().expect("failed sessions carry a failure");
                writeln!(err, "synthesis failed: {}", f.message)?;
                for n in &f.negatives {
                    writeln!(err, "  rejected: {n}")?;
                }
                write_trace(a.trace_out.as_ref(), &session)?;
                return Ok(EXIT_SYNTHESIS);
            }
            Status::AwaitingAnswer => {}
        }
        render_question(&session, session.history().len() + 1, out)?;
        let Some(word) = answers.next()? else {
            writeln!(out)?;
            writeln!(err, "session aborted")?;
            write_trace(a.trace_out.as_ref(), &session)?;
            return Ok(EXIT_INPUT);
        };
        match word.as_str() {
            "y" | "yes" => {
                session.answer(true)?;
            }
            "n" | "no" => {
                session.answer(false)?;
            }
            "u" | "undo" => match session.undo() {
                Ok(_) => {}
                Err(EngineError::EmptyHistory) => writeln!(out, "\nnothing to undo")?,
                Err(e) => return Err(e.into()),
            },
            other => writeln!(out, "\nunrecognized answer {other:?}; type y, n, or u")?,
        }
    }
}

fn bench_cases(a: &BenchArgs) -> Result<Vec<Result<BenchCase, (String, String)>>> {
    if let Some(manifest) = &a.manifest {
        let entries = bench::load_manifest(manifest)?;
        return Ok(entries
            .iter()
            .map(|e| {
                BenchCase::load(e).map_err(|err| {
                    let name = e.name.clone().unwrap_or_else(|| e.sketch.display().to_string());
                    (name, err.to_string())
                })
            })
            .collect());
    }
    if let Some(count) = a.synthetic {
        return Ok(bench::synthetic_suite(a.synth_seed, count, &SynthParams::default())
            .into_iter()
            .map(Ok)
            .collect());
    }
    let (Some(schema), Some(sketch), Some(oracle)) = (&a.schema, &a.sketch, &a.oracle) else {
        bail!("bench needs --manifest, --synthetic, or --schema with --sketch and --oracle");
    };
    let db = DatabaseArgs {
        schema: schema.clone(),
        data: a.data.clone(),
    };
    let catalog = db.load()?;
    let parsed_sketch = parse_sketch(&read(sketch)?, &catalog).with_context(|| format!("parsing {}", sketch.display()))?;
    let truth = parse_completion(&read(oracle)?, &catalog).with_context(|| format!("parsing {}", oracle.display()))?;
    let name = sketch
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(vec![Ok(BenchCase {
        name,
        catalog: Arc::new(catalog),
        sketch: parsed_sketch,
        truth,
    })])
}

fn bench_modes(a: &BenchArgs) -> Vec<Mode> {
    let mut modes: Vec<Mode> = a.mode.iter().map(|&m| m.into()).collect();
    if a.no_soft && !modes.contains(&Mode::NoSoft) {
        modes.push(Mode::NoSoft);
    }
    if modes.is_empty() {
        modes.push(Mode::Full);
    }
    modes
}

/// Exit code summarizing a set of metrics: failures outrank timeouts.
pub fn bench_exit_code(rows: &[Metrics]) -> i32 {
    if rows.iter().any(|m| m.status == CaseStatus::Failed) {
        EXIT_SYNTHESIS
    } else if rows.iter().any(|m| m.status == CaseStatus::Timeout) {
        EXIT_TIMEOUT
    } else {
        EXIT_OK
    }
}

fn run_bench(a: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let config = a.sampler.engine_config()?;
    let limits = BatchLimits {
        max_iterations: a.max_iterations,
        time_budget: Some(Duration::from_secs(a.time_budget)),
    };
    let cases = bench_cases(a)?;
    let modes = bench_modes(a);
    let mut rows = Vec::new();
    let mut traces = String::new();
    for case in &cases {
        for &mode in &modes {
            match case {
                Ok(case) => {
                    let (metrics, trace) = bench::run_case_traced::<f64>(case, &config, mode, &limits, a.timing);
                    for record in trace {
                        let line = serde_json::json!({ "case": case.name, "mode": mode, "record": record });
                        traces.push_str(&line.to_string());
                        traces.push('\n');
                    }
                    rows.push(metrics);
                }
                Err((name, detail)) => rows.push(Metrics::input_error(name, mode, detail.clone())),
            }
        }
    }
    for m in &rows {
        if let Some(detail) = m.detail.as_ref().filter(|_| m.status != CaseStatus::Complete) {
            writeln!(err, "{} ({:?}): {detail}", m.case, m.status)?;
        }
    }
    let text = bench::metrics_jsonl(&rows);
    match &a.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => out.write_all(text.as_bytes())?,
    }
    if let Some(path) = &a.trace_out {
        std::fs::write(path, traces).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(bench_exit_code(&rows))
}

fn eval_query(a: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let catalog = a.db.load()?;
    let query = parse_completion(&read(&a.query)?, &catalog).with_context(|| format!("parsing {}", a.query.display()))?;
    let result = eval::evaluate(&query, &catalog)?;
    out.write_all(result.to_csv().as_bytes())?;
    Ok(EXIT_OK)
}

fn generate(a: &GenArgs, out: &mut dyn Write) -> Result<i32> {
    let d = SynthParams::default();
    let params = SynthParams {
        min_tables: a.min_tables.unwrap_or(d.min_tables),
        max_tables: a.max_tables.unwrap_or(d.max_tables),
        ..d
    };
    if params.min_tables == 0 || params.min_tables > params.max_tables {
        bail!("need 0 < min-tables <= max-tables");
    }
    let cases = bench::synthetic_suite(a.seed, a.count, &params);
    let manifest = bench::write_suite(&a.out, &cases)?;
    writeln!(out, "{}", manifest.display())?;
    Ok(EXIT_OK)
}

/// Iteration ceiling for a case, used to sanity-check bench output.
pub fn iteration_bound(case: &BenchCase) -> usize {
    engine::iteration_bound(&case.catalog, &case.truth)
}
