//! `saqd` command line. Every command prints a short human summary, or the
//! full result as JSON with `--json`. Exit codes: 0 ok, 1 user error, 2 internal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use saqd_core::comparative::{Bin, TestChoice};
use saqd_core::corpus_store::{FitThresholds, Response};
use saqd_core::project::{Phase, DEFAULT_CONFIG, Project, RunOverrides, RunRecord, RunStatus};
use saqd_core::Error;

use crate::{server, views};

#[derive(Debug, Parser)]
#[command(name = "saqd", version, about = "Secondary analysis of qualitative data with topic models")]
pub struct Cli {
    /// Project directory.
    #[arg(long, global = true, env = "SAQD_PROJECT", default_value = ".")]
    pub project: PathBuf,
    /// Print machine-readable JSON instead of a summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a new project directory.
    Init {
        dir: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Load JSON-lines documents into a named corpus.
    Ingest {
        #[arg(long)]
        corpus: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        append: bool,
        /// Provenance note describing the original study.
        #[arg(long)]
        note: Option<String>,
    },
    /// Define an assemblage from one or more corpora.
    Assemble {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "*")]
        filter: String,
        /// Comma-separated corpus names; all corpora when omitted.
        #[arg(long, value_delimiter = ',')]
        corpora: Vec<String>,
    },
    /// List assemblages.
    Assemblages,
    /// Record or show the fit assessment of an assemblage.
    Fit {
        #[arg(long)]
        assemblage: String,
        /// JSON object mapping checklist item ids to yes/no/unknown.
        #[arg(long)]
        answers: Option<PathBuf>,
        #[arg(long, default_value_t = FitThresholds::default().proceed)]
        proceed: f64,
        #[arg(long, default_value_t = FitThresholds::default().reject)]
        reject: f64,
    },
    /// Add or list analysis phases.
    Phase {
        #[command(subcommand)]
        action: PhaseCmd,
    },
    /// Train one model per candidate K and keep the most coherent.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train a model at a fixed K.
    Train {
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// List runs, or show one.
    Runs {
        #[arg(long)]
        run: Option<String>,
    },
    /// Top words per topic.
    Topics {
        #[arg(long)]
        run: Option<String>,
        #[arg(long, default_value_t = server::DEFAULT_TOP_WORDS)]
        n: usize,
    },
    /// Documents ranked by the weight of one topic.
    Docs {
        #[arg(long)]
        run: Option<String>,
        #[arg(long)]
        topic: usize,
        #[arg(long, default_value_t = server::DEFAULT_TOP_DOCS)]
        n: usize,
    },
    /// Coherence scores of a run.
    Coherence {
        #[arg(long)]
        run: Option<String>,
    },
    /// Mean topic weight across documents.
    Prevalence {
        #[arg(long)]
        run: Option<String>,
    },
    /// Compare topic weights across groups of a metadata key.
    Analyze {
        #[arg(long)]
        run: Option<String>,
        #[arg(long)]
        group_by: String,
        #[arg(long, default_value = "auto")]
        test: TestChoice,
        #[arg(long)]
        topic: Option<usize>,
        #[arg(long)]
        bonferroni: bool,
    },
    /// Mean topic weight per time bin.
    Trend {
        #[arg(long)]
        run: Option<String>,
        #[arg(long)]
        topic: usize,
        #[arg(long, default_value = "year")]
        bin: Bin,
    },
    /// Match the topics of two runs.
    Compare {
        #[arg(long)]
        run_a: String,
        #[arg(long)]
        run_b: String,
    },
    /// Topic labelling sessions.
    Label {
        #[command(subcommand)]
        action: LabelCmd,
    },
    /// Write a report bundle for one run or every completed run.
    Export {
        #[arg(long)]
        run: Option<String>,
    },
    /// Serve the local JSON API.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum PhaseCmd {
    Add {
        #[arg(long)]
        name: String,
        #[arg(long)]
        assemblage: String,
        #[arg(long, value_delimiter = ',')]
        sweep_ks: Vec<usize>,
    },
    List,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub phase: Option<String>,
    #[arg(long)]
    pub assemblage: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Feedback record ids whose stop words apply to this run.
    #[arg(long, value_delimiter = ',')]
    pub apply_feedback: Vec<String>,
}

impl RunArgs {
    fn overrides(&self, k: Option<usize>, sweep_ks: Option<Vec<usize>>) -> RunOverrides {
        RunOverrides {
            k,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iters,
            burn_in: self.burn_in,
            seed: self.seed,
            chains: self.chains,
            sweep_ks,
            apply_feedback: self.apply_feedback.clone(),
            threads: self.threads,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum LabelCmd {
    /// Open a coding session on a completed run.
    Open {
        #[arg(long)]
        run: Option<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        coders: Vec<String>,
        #[arg(long, default_value = "cli")]
        actor: String,
    },
    /// Record one coder's label for a topic.
    Submit {
        #[arg(long)]
        session: String,
        #[arg(long)]
        coder: String,
        #[arg(long)]
        topic: usize,
        #[arg(long)]
        label: String,
    },
    /// Flag words to drop in a later run.
    Stopwords {
        #[arg(long)]
        session: String,
        #[arg(long, value_delimiter = ',', required = true)]
        words: Vec<String>,
        #[arg(long, default_value = "")]
        note: String,
        #[arg(long, default_value = "cli")]
        actor: String,
    },
    /// Close the session and write the label set.
    Finalize {
        #[arg(long)]
        session: String,
        /// TOPIC=LABEL for each topic without consensus.
        #[arg(long = "resolve", value_parser = parse_resolution)]
        resolutions: Vec<(usize, String)>,
        #[arg(long, default_value = "cli")]
        actor: String,
        #[arg(long)]
        auditor: Option<String>,
        #[arg(long, default_value = "")]
        audit_note: String,
    },
    /// Group labelled topics into named categories.
    Categories {
        #[arg(long)]
        run: String,
        /// NAME=T1,T2,...
        #[arg(long = "category", value_parser = parse_category, required = true)]
        categories: Vec<(String, BTreeSet<usize>)>,
    },
    /// Per-topic agreement between coders.
    Agreement {
        #[arg(long)]
        session: String,
    },
    /// Print the session state.
    Show {
        #[arg(long)]
        session: Option<String>,
    },
}

fn parse_resolution(s: &str) -> Result<(usize, String), String> {
    let (t, l) = s.split_once('=').ok_or("expected TOPIC=LABEL")?;
    Ok((t.trim().parse().map_err(|_| format!("bad topic `{t}`"))?, l.to_string()))
}

fn parse_category(s: &str) -> Result<(String, BTreeSet<usize>), String> {
    let (name, topics) = s.split_once('=').ok_or("expected NAME=T1,T2")?;
    let topics = topics.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse().map_err(|_| format!("bad topic `{t}`"))).collect::<Result<_, _>>()?;
    Ok((name.trim().to_string(), topics))
}

/// Failure of a CLI invocation.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: std::io::Error },
    #[error("invalid answers file: {0}")]
    Answers(serde_json::Error),
    #[error("cannot start runtime: {0}")]
    Runtime(std::io::Error),
    #[error("{}", run_failure(.0))]
    RunFailed(Box<RunRecord>),
}

fn run_failure(r: &RunRecord) -> String {
    match &r.error {
        Some(e) => format!("run {} failed at {}: {}", r.id, e.stage, e.message),
        None => format!("run {} failed", r.id),
    }
}

/// Codes of run failures caused by the environment rather than the input.
const INTERNAL_RUN_CODES: &[&str] = &["IO_ERROR", "JSON_ERROR", "CORRUPT_ARTIFACT", "INTERRUPTED"];

impl CliError {
    pub fn code(&self) -> &str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Input { .. } => "INPUT_UNREADABLE",
            CliError::Answers(_) => "BAD_ANSWERS",
            CliError::Runtime(_) => "RUNTIME",
            CliError::RunFailed(r) => r.error.as_ref().map(|e| e.code.as_str()).unwrap_or("RUN_FAILED"),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_user_error() => 2,
            CliError::Runtime(_) => 2,
            CliError::RunFailed(_) if INTERNAL_RUN_CODES.contains(&self.code()) => 2,
            _ => 1,
        }
    }

    fn details(&self) -> Value {
        match self {
            CliError::Core(e) => server::details_of(e),
            CliError::RunFailed(r) => json!({ "run": r }),
            _ => json!({}),
        }
    }
}

/// What a command produced: the JSON value and its human rendering.
pub struct Output {
    pub value: Value,
    pub text: String,
}

impl Output {
    fn new<S: Serialize>(value: &S, text: impl Into<String>) -> Result<Self, CliError> {
        Ok(Self { value: serde_json::to_value(value).map_err(Error::from)?, text: text.into() })
    }
}

/// Parses arguments from the environment, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(out) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&out.value).expect("json value"));
            } else if !out.text.is_empty() {
                println!("{}", out.text.trim_end());
            }
            0
        }
        Err(e) => {
            if json {
                let v = json!({ "code": e.code(), "message": e.to_string(), "details": e.details() });
                eprintln!("{}", serde_json::to_string_pretty(&v).expect("json value"));
            } else {
                eprintln!("error [{}]: {e}", e.code());
            }
            e.exit_code()
        }
    }
}

fn open(dir: &Path) -> Result<Project, CliError> {
    Ok(Project::open(dir)?)
}

fn run_or_latest(p: &Project, run: Option<String>) -> Result<String, CliError> {
    match run {
        Some(r) => Ok(r),
        None => Ok(views::latest_done_run(p)?),
    }
}

pub fn run(cli: Cli) -> Result<Output, CliError> {
    let dir = cli.project;
    match cli.command {
        Command::Init { dir, name } => {
            let p = Project::init(&dir, name.as_deref())?;
            let cfg = p.config();
            Output::new(&json!({ "root": dir, "config": cfg }), format!("initialised project `{}` at {}", cfg.name, dir.display()))
        }
        Command::Ingest { corpus, input, append, note } => {
            let p = open(&dir)?;
            let file = File::open(&input).map_err(|source| CliError::Input { path: input.clone(), source })?;
            let report = p.ingest(&corpus, BufReader::new(file), append, note.as_deref())?;
            let mut text = format!("{corpus}: {} accepted, {} rejected", report.accepted, report.rejected);
            for e in &report.errors {
                let _ = write!(text, "\n  {e:?}");
            }
            Output::new(&report, text)
        }
        Command::Assemble { name, filter, corpora } => {
            let p = open(&dir)?;
            let (a, warnings) = p.create_assemblage(&name, &corpora, &filter)?;
            let mut text = format!("assemblage `{}`: {} documents from {}", a.name, a.member_refs.len(), a.corpora.join(", "));
            for w in &warnings {
                let _ = write!(text, "\nwarning: {w:?}");
            }
            Output::new(&json!({ "assemblage": a, "warnings": warnings }), text)
        }
        Command::Assemblages => {
            let list = open(&dir)?.assemblages()?;
            let text = list.iter().map(|a| format!("{}\t{} docs\t{}", a.name, a.member_refs.len(), a.filter_spec)).collect::<Vec<_>>().join("\n");
            Output::new(&list, text)
        }
        Command::Fit { assemblage, answers, proceed, reject } => {
            let p = open(&dir)?;
            let report = match answers {
                Some(path) => {
                    let src = std::fs::read(&path).map_err(|source| CliError::Input { path: path.clone(), source })?;
                    let responses: BTreeMap<String, Response> = serde_json::from_slice(&src).map_err(CliError::Answers)?;
                    p.assess_fit(&assemblage, &responses, &FitThresholds { proceed, reject })?
                }
                None => p.fit(&assemblage)?,
            };
            let value = serde_json::to_value(&report).map_err(Error::from)?;
            let text = format!(
                "{assemblage}: verdict {} (suitability {}, sufficiency {})",
                value["verdict"].as_str().unwrap_or("?"),
                value["suitability_score"],
                value["sufficiency_score"]
            );
            Ok(Output { value, text })
        }
        Command::Phase { action } => {
            let p = open(&dir)?;
            match action {
                PhaseCmd::Add { name, assemblage, sweep_ks } => {
                    let phase = p.add_phase(Phase { name, assemblage, preprocess: DEFAULT_CONFIG.into(), train: DEFAULT_CONFIG.into(), sweep_ks })?;
                    Output::new(&phase, format!("phase `{}` on assemblage `{}`", phase.name, phase.assemblage))
                }
                PhaseCmd::List => {
                    let phases = p.config().phases;
                    let text = phases.iter().map(|ph| format!("{}\t{}", ph.name, ph.assemblage)).collect::<Vec<_>>().join("\n");
                    Output::new(&phases, text)
                }
            }
        }
        Command::Sweep { ks, run } => {
            let p = open(&dir)?;
            let rec = p.run_pipeline(run.phase.as_deref(), run.assemblage.as_deref(), &run.overrides(None, Some(ks)))?;
            run_output(rec)
        }
        Command::Train { k, run } => {
            let p = open(&dir)?;
            let rec = p.run_pipeline(run.phase.as_deref(), run.assemblage.as_deref(), &run.overrides(k, None))?;
            run_output(rec)
        }
        Command::Runs { run } => {
            let p = open(&dir)?;
            match run {
                Some(id) => {
                    let rec = p.run(&id)?;
                    let text = run_line(&rec);
                    Output::new(&rec, text)
                }
                None => {
                    let runs = p.runs()?;
                    let text = runs.iter().map(run_line).collect::<Vec<_>>().join("\n");
                    Output::new(&runs, text)
                }
            }
        }
        Command::Topics { run, n } => {
            let p = open(&dir)?;
            let id = run_or_latest(&p, run)?;
            let topics = views::topics(&p, &id, n)?;
            let text = topics
                .iter()
                .map(|t| {
                    let words: Vec<&str> = t.words.iter().map(|w| w.term.as_str()).collect();
                    format!("{:>3} {:<20} {}", t.topic, t.label.as_deref().unwrap_or("-"), words.join(" "))
                })
                .collect::<Vec<_>>()
                .join("\n");
            Output::new(&topics, text)
        }
        Command::Docs { run, topic, n } => {
            let p = open(&dir)?;
            let id = run_or_latest(&p, run)?;
            let docs = views::topic_docs(&p, &id, topic, n)?;
            let text = docs.iter().map(|d| format!("{:.4}\t{}\t{}", d.weight, d.doc_id, d.snippet.replace('\n', " "))).collect::<Vec<_>>().join("\n");
            Output::new(&docs, text)
        }
        Command::Coherence { run } => {
            let p = open(&dir)?;
            let id = run_or_latest(&p, run)?;
            let report = p.load_run(&id)?.coherence.clone();
            let mut text = String::new();
            for (k, s) in &report.per_k {
                let mark = if Some(*k) == report.recommended_k { " *" } else { "" };
                let _ = writeln!(text, "K={k}\tmean {:.5}{mark}", s.mean);
            }
            for (k, f) in &report.failed {
                let _ = writeln!(text, "K={k}\tfailed: {}", f.code);
            }
            Output::new(&report, text)
        }
        Command::Prevalence { run } => {
            let p = open(&dir)?;
            let id = run_or_latest(&p, run)?;
            let rows = views::prevalence(&p, &id)?;
            let text = rows.iter().map(|r| format!("{:>3} {:.5} {}", r.topic, r.mean_weight, r.label.as_deref().unwrap_or(""))).collect::<Vec<_>>().join("\n");
            Output::new(&rows, text)
        }
        Command::Analyze { run, group_by, test, topic, bonferroni } => {
            let p = open(&dir)?;
            let id = run_or_latest(&p, run)?;
            let tests = p.analyze(&id, &group_by, test, topic, bonferroni)?;
            let text = tests
                .iter()
                .map(|t| {
                    let adj = t.adjusted_p.map(|a| format!(" p_adj={a:.4}")).unwrap_or_default();
                    format!("topic {}: {} = {:.4} p={:.4}{adj}", t.topic, t.result.kind.as_str(), t.result.statistic, t.result.p_value)
                })
                .collect::<Vec<_>>()
                .join("\n");
            Output::new(&tests, text)
        }
        Command::Trend { run, topic, bin } => {
            let p = open(&dir)?;
            let id = run_or_latest(&p, run)?;
            let trend = p.trend(&id, topic, bin)?;
            let mut text = trend.points.iter().map(|pt| format!("{}\t{:.5}\tn={}", pt.bin, pt.mean, pt.n)).collect::<Vec<_>>().join("\n");
            if trend.undated > 0 {
                let _ = write!(text, "\n(undated)\t{} documents", trend.undated);
            }
            Output::new(&trend, text)
        }
        Command::Compare { run_a, run_b } => {
            let m = open(&dir)?.compare(&run_a, &run_b)?;
            let mut text = m.pairs.iter().map(|x| format!("{} <-> {}\tJSD {:.4}", x.topic_a, x.topic_b, x.divergence)).collect::<Vec<_>>().join("\n");
            let _ = write!(text, "\nunmatched: {:?} / {:?}; shared vocabulary {}", m.unmatched_a, m.unmatched_b, m.shared_vocab_size);
            Output::new(&m, text)
        }
        Command::Label { action } => label(&open(&dir)?, action),
        Command::Export { run } => {
            let summary = open(&dir)?.export_report(run.as_deref())?;
            let text = format!("wrote {} files for {} runs to {}", summary.files.len(), summary.runs.len(), summary.dir.display());
            Output::new(&summary, text)
        }
        Command::Serve { port, host } => {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::Runtime)?;
            let shutdown = async {
                let _ = tokio::signal::ctrl_c().await;
            };
            rt.block_on(server::serve(&dir, &host, port, shutdown, |addr| eprintln!("listening on http://{addr}/api")))?;
            Output::new(&json!({ "stopped": true }), "")
        }
    }
}

fn run_line(r: &RunRecord) -> String {
    let k = r.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
    let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let mut line = format!("{}\t{}\t{}\tK={k}\tseed={}", r.id, status, r.phase, r.seed);
    if let Some(e) = &r.error {
        let _ = write!(line, "\t{} at {}: {}", e.code, e.stage, e.message);
    }
    line
}

fn run_output(rec: RunRecord) -> Result<Output, CliError> {
    let text = run_line(&rec);
    if rec.status == RunStatus::Failed {
        return Err(CliError::RunFailed(Box::new(rec)));
    }
    Output::new(&rec, text)
}

fn label(p: &Project, action: LabelCmd) -> Result<Output, CliError> {
    let now = Utc::now();
    match action {
        LabelCmd::Open { run, coders, actor } => {
            let id = run_or_latest(p, run)?;
            let s = p.open_session(&id, &coders, &actor, now)?;
            Output::new(&s, format!("session {} on {} (K={}, coders {})", s.id, s.run_ref, s.k, s.coders.join(", ")))
        }
        LabelCmd::Submit { session, coder, topic, label } => {
            let (s, status) = p.submit_label(&session, &coder, topic, &label, now)?;
            let agreement = s.compute_agreement();
            let status_str = serde_json::to_value(status).map_err(Error::from)?;
            Output::new(
                &json!({ "topic": topic, "status": status, "agreement": agreement }),
                format!("topic {topic}: {}", status_str.as_str().unwrap_or("?")),
            )
        }
        LabelCmd::Stopwords { session, words, note, actor } => {
            let words: BTreeSet<String> = words.into_iter().collect();
            match p.flag_stopwords(&session, &words, &note, &actor, now)? {
                Some(r) => {
                    let text = format!("{}: {}", r.id, r.words.iter().cloned().collect::<Vec<_>>().join(", "));
                    Output::new(&r, text)
                }
                None => Output::new(&Value::Null, "no words flagged"),
            }
        }
        LabelCmd::Finalize { session, resolutions, actor, auditor, audit_note } => {
            let res: BTreeMap<usize, String> = resolutions.into_iter().collect();
            let auditor = auditor.as_deref().map(|a| (a, audit_note.as_str()));
            let ls = p.finalize_labels(&session, &res, &actor, auditor, now)?;
            let text = ls.labels.iter().map(|(t, l)| format!("{t:>3} {l}{}", if ls.resolved.contains(t) { " (resolved)" } else { "" })).collect::<Vec<_>>().join("\n");
            Output::new(&ls, text)
        }
        LabelCmd::Categories { run, categories } => {
            let grouping: BTreeMap<String, BTreeSet<usize>> = categories.into_iter().collect();
            let ls = p.group_categories(&run, &grouping)?;
            let text = ls.categories.iter().map(|(n, ts)| format!("{n}: {ts:?}")).collect::<Vec<_>>().join("\n");
            Output::new(&ls, text)
        }
        LabelCmd::Agreement { session } => {
            let a = p.agreement(&session)?;
            let frac = a.fraction.map(|f| format!("{f:.3}")).unwrap_or_else(|| "n/a".into());
            Output::new(&a, format!("{} of {} fully labelled topics agree ({frac})", a.consensus, a.fully_labeled))
        }
        LabelCmd::Show { session } => match session {
            Some(id) => {
                let s = p.session(&id)?;
                let mut text = format!("session {} on {} ({})", s.id, s.run_ref, if s.closed { "closed" } else { "open" });
                for (t, st) in s.status.iter().enumerate() {
                    let labels = s.labels.get(&t).map(|m| m.iter().map(|(c, l)| format!("{c}={l}")).collect::<Vec<_>>().join(", ")).unwrap_or_default();
                    let _ = write!(text, "\n{t:>3} {st:?}\t{labels}");
                }
                Output::new(&s, text)
            }
            None => {
                let all = p.sessions()?;
                let text = all.iter().map(|s| format!("{}\t{}\t{}", s.id, s.run_ref, if s.closed { "closed" } else { "open" })).collect::<Vec<_>>().join("\n");
                Output::new(&all, text)
            }
        },
    }
}
