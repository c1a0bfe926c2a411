//! The `ddap` command line.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::net::{IpAddr, SocketAddr};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddap_core::agent::SnippetCorpus;
use ddap_core::config::{Settings, SettingsError};
use ddap_core::metrics::{
    self, emit_report, read_classification_csv, read_clustering_csv, read_regression_csv, Distance,
    MetricSet, MetricValue, MetricsError,
};
use ddap_core::{
    ArtifactKind, ArtifactStore, Error, HeadlessError, HeadlessOptions, Orchestrator, Profile,
    SessionState, Stage, TurnKind,
};

use crate::api;

#[derive(Debug, Parser)]
#[command(
    name = "ddap",
    version,
    about = "Turn a research intent into a runnable AI pipeline, one stage at a time"
)]
pub struct Cli {
    /// Session store root (overrides DDAP_DATA_DIR).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a session and print its id.
    New(ProfileArgs),
    /// Continue a session interactively on stdin/stdout.
    Chat {
        #[arg(long)]
        session: String,
    },
    /// Drive every stage from an intent file and an answers file.
    Headless {
        #[arg(long)]
        intent: PathBuf,
        /// JSON array of strings, or one answer per line.
        #[arg(long)]
        answers: PathBuf,
        #[arg(long, default_value_t = 1)]
        candidate: u8,
        /// Finalize without running the generated code.
        #[arg(long)]
        no_exec: bool,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// Serve the HTTP API.
    Serve {
        /// Overrides DDAP_PORT.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
    },
    /// Score a predictions CSV.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
        /// Score one label one-vs-rest instead of macro-averaging.
        #[arg(long)]
        positive: Option<String>,
        /// Cluster label column for clustering files.
        #[arg(long, default_value = "label")]
        label_column: String,
        #[arg(long, default_value_t = Distance::Euclidean)]
        distance: Distance,
        /// Reference values: {"<pipeline>": {"<metric>": value}}.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Row name in the report; defaults to the file stem.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Run a stored code artifact in the sandbox.
    Exec {
        #[arg(long)]
        code: String,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProfileArgs {
    #[arg(long, requires = "expertise")]
    pub domain: Option<String>,
    #[arg(long, requires = "domain")]
    pub expertise: Option<String>,
}

impl ProfileArgs {
    fn profile(&self) -> Option<Profile> {
        Some(Profile {
            domain: self.domain.clone()?,
            expertise: self.expertise.clone()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Classification,
    Regression,
    Clustering,
}

/// A failure reported as one line on stderr.
#[derive(Debug)]
pub struct Diagnostic(pub String);

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0.replace('\n', " "))
    }
}

impl From<Error> for Diagnostic {
    fn from(e: Error) -> Self {
        Diagnostic(format!("{}: {e}", e.class()))
    }
}

impl From<HeadlessError> for Diagnostic {
    fn from(e: HeadlessError) -> Self {
        Diagnostic(format!("{}: {e}", e.source.class()))
    }
}

impl From<SettingsError> for Diagnostic {
    fn from(e: SettingsError) -> Self {
        Diagnostic(format!("configuration: {e}"))
    }
}

impl From<MetricsError> for Diagnostic {
    fn from(e: MetricsError) -> Self {
        Diagnostic(format!("metrics: {e}"))
    }
}

impl From<io::Error> for Diagnostic {
    fn from(e: io::Error) -> Self {
        Diagnostic(format!("io: {e}"))
    }
}

fn read_file(path: &Path) -> Result<String, Diagnostic> {
    fs::read_to_string(path).map_err(|e| Diagnostic(format!("io: {}: {e}", path.display())))
}

/// Parses an answers file: a JSON array of strings, or nonblank lines.
pub fn parse_answers(text: &str) -> Result<Vec<String>, Diagnostic> {
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text)
            .map_err(|e| Diagnostic(format!("answers: expected a JSON array of strings: {e}")));
    }
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn orchestrator(settings: &Settings) -> Result<Orchestrator, Diagnostic> {
    let mut orch = Orchestrator::new(
        ArtifactStore::new(&settings.data_dir),
        settings.build_backend()?,
    );
    if let Some(dir) = &settings.snippet_dir {
        let corpus = SnippetCorpus::load_dir(dir)
            .map_err(|e| Diagnostic(format!("snippets: {}: {e}", dir.display())))?;
        orch = orch.with_corpus(corpus, NonZeroUsize::new(3).expect("nonzero"));
    }
    let limits = ddap_core::SandboxLimits::from_env()
        .map_err(|e| Diagnostic(format!("configuration: {e}")))?;
    Ok(orch.with_limits(limits))
}

/// Runs one parsed command.
pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), Diagnostic> {
    let mut settings = Settings::from_env()?;
    if let Some(dir) = cli.data_dir {
        settings.data_dir = dir;
    }
    match cli.command {
        Command::New(profile) => {
            let orch = orchestrator_without_backend(&settings);
            let state = orch.create_session(profile.profile())?;
            writeln!(out, "{}", state.session_id())?;
        }
        Command::Chat { session } => {
            let mut state = orchestrator_without_backend(&settings).load_session(&session)?;
            let orch = orchestrator(&settings)?;
            chat(&orch, &mut state, input, out)?;
        }
        Command::Headless {
            intent,
            answers,
            candidate,
            no_exec,
            profile,
        } => {
            let intent = read_file(&intent)?;
            let answers = parse_answers(&read_file(&answers)?)?;
            let orch = orchestrator(&settings)?;
            let options = HeadlessOptions {
                profile: profile.profile(),
                candidate,
                execute: !no_exec,
            };
            let set = orch.run_headless(intent.trim(), &answers, &options)?;
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&set).expect("artifact sets serialize")
            )?;
        }
        Command::Serve { port, bind } => {
            let orch = orchestrator(&settings)?;
            let addr = SocketAddr::new(bind, port.unwrap_or(settings.port));
            serve(addr, orch, out)?;
        }
        Command::Eval {
            pred,
            task,
            positive,
            label_column,
            distance,
            baseline,
            name,
            json,
        } => {
            let text = read_file(&pred)?;
            let metrics = score(
                task,
                text.as_bytes(),
                positive.as_deref(),
                &label_column,
                distance,
            )?;
            for (metric, v) in &metrics {
                if v.degenerate {
                    tracing::warn!(
                        "{metric} is undefined for this input; reported as {}",
                        v.value
                    );
                }
            }
            let name = name.unwrap_or_else(|| {
                pred.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "predictions".into())
            });
            let results = BTreeMap::from([(
                name,
                metrics
                    .into_iter()
                    .map(|(k, v)| (k, v.value))
                    .collect::<MetricSet>(),
            )]);
            let baseline: Option<BTreeMap<String, MetricSet>> = match baseline {
                None => None,
                Some(path) => Some(
                    serde_json::from_str(&read_file(&path)?)
                        .map_err(|e| Diagnostic(format!("baseline: {}: {e}", path.display())))?,
                ),
            };
            let report = emit_report(&results, baseline.as_ref());
            if json {
                writeln!(out, "{}", report.to_json())?;
            } else {
                write!(out, "{}", report.to_text())?;
            }
        }
        Command::Exec { code } => {
            let orch = orchestrator_without_backend(&settings);
            let r = orch.store().resolve(&code).map_err(Error::from)?;
            if r.artifact_kind != ArtifactKind::CodeArtifact {
                return Err(Diagnostic(format!(
                    "validation_failed: {code} is not a code artifact"
                )));
            }
            let mut state = orch.load_session(&r.session_id)?;
            let result = orch.execute(&mut state, &r)?;
            write!(out, "{}", result.stdout_excerpt)?;
            if !result.stderr_excerpt.is_empty() {
                eprint!("{}", result.stderr_excerpt);
            }
            if !result.succeeded() {
                let how = if result.timed_out {
                    " (timed out)".to_string()
                } else {
                    String::new()
                };
                return Err(Diagnostic(format!(
                    "sandbox_error: {code} exited with status {}{how}",
                    result.exit_status
                )));
            }
        }
    }
    Ok(())
}

/// `new` and `exec` never talk to an agent, so they work without backend settings.
fn orchestrator_without_backend(settings: &Settings) -> Orchestrator {
    struct NoBackend;
    impl ddap_core::ChatBackend for NoBackend {
        fn complete(
            &self,
            _: &ddap_core::agent::ChatRequest<'_>,
        ) -> Result<String, ddap_core::agent::BackendError> {
            Err(ddap_core::agent::BackendError::Fixture(
                "no chat backend configured".into(),
            ))
        }
    }
    let limits = ddap_core::SandboxLimits::from_env().unwrap_or_default();
    Orchestrator::new(
        ArtifactStore::new(&settings.data_dir),
        std::sync::Arc::new(NoBackend),
    )
    .with_limits(limits)
}

fn serve(addr: SocketAddr, orch: Orchestrator, out: &mut dyn Write) -> Result<(), Diagnostic> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Diagnostic(format!("cannot bind {addr}: {e}")))?;
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
        api::serve(listener, api::App::new(orch), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

/// Computes the metric set for one predictions file.
pub fn score(
    task: Task,
    csv: &[u8],
    positive: Option<&str>,
    label_column: &str,
    distance: Distance,
) -> Result<BTreeMap<String, MetricValue>, MetricsError> {
    let mut m = BTreeMap::new();
    match task {
        Task::Classification => {
            let (y_true, y_pred) = read_classification_csv(csv)?;
            m.insert(
                "accuracy".into(),
                metrics::exact_match_accuracy(&y_true, &y_pred)?,
            );
            match positive {
                Some(label) => {
                    let cm = metrics::confusion_counts(&y_true, &y_pred, &label.to_string())?;
                    let (p, r) = (metrics::precision(&cm), metrics::recall(&cm));
                    m.insert("f1".into(), metrics::f1(p.value, r.value));
                    m.insert("precision".into(), p);
                    m.insert("recall".into(), r);
                }
                None => {
                    let mut labels: Vec<String> = y_true.iter().chain(&y_pred).cloned().collect();
                    labels.sort();
                    labels.dedup();
                    let s = metrics::macro_scores(&y_true, &y_pred, &labels)?;
                    for (name, value) in [
                        ("precision", s.precision),
                        ("recall", s.recall),
                        ("f1", s.f1),
                    ] {
                        m.insert(
                            name.into(),
                            MetricValue {
                                value,
                                degenerate: false,
                            },
                        );
                    }
                }
            }
        }
        Task::Regression => {
            let (y_true, y_pred) = read_regression_csv(csv)?;
            m.insert("mae".into(), metrics::mae(&y_true, &y_pred)?);
        }
        Task::Clustering => {
            let (points, labels) = read_clustering_csv(csv, label_column)?;
            m.insert(
                "silhouette".into(),
                metrics::silhouette(&points, &labels, distance)?,
            );
        }
    }
    Ok(m)
}

fn prompt(out: &mut dyn Write, input: &mut dyn BufRead, text: &str) -> io::Result<Option<String>> {
    write!(out, "{text}")?;
    out.flush()?;
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        writeln!(out)?;
        return Ok(None);
    }
    Ok(Some(line.trim().to_string()))
}

fn show_candidates(
    orch: &Orchestrator,
    state: &SessionState,
    out: &mut dyn Write,
) -> Result<(), Diagnostic> {
    let Some(r) = state.artifact_ref(ArtifactKind::PipelineSet) else {
        return Ok(());
    };
    let set = orch.store().load_artifact(r).map_err(Error::from)?;
    for c in set["candidates"].as_array().into_iter().flatten() {
        writeln!(
            out,
            "  [{}] {}: {}",
            c["index"],
            c["name"].as_str().unwrap_or(""),
            c["description"].as_str().unwrap_or("")
        )?;
        for p in c["pros"].as_array().into_iter().flatten() {
            writeln!(out, "      + {}", p.as_str().unwrap_or(""))?;
        }
        for p in c["cons"].as_array().into_iter().flatten() {
            writeln!(out, "      - {}", p.as_str().unwrap_or(""))?;
        }
    }
    Ok(())
}

/// The interactive loop. End of input leaves the session where it is.
fn chat(
    orch: &Orchestrator,
    state: &mut SessionState,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<(), Diagnostic> {
    writeln!(
        out,
        "session {} at stage {}",
        state.session_id(),
        state.stage()
    )?;
    if let Some(m) = state.last_message() {
        writeln!(out, "agent> {m}")?;
    }
    loop {
        match state.stage() {
            Stage::ProblemDefinition | Stage::ComputeSpec => {
                let Some(line) = prompt(out, input, "you> ")? else {
                    return Ok(());
                };
                if line.is_empty() {
                    continue;
                }
                if line == "/quit" {
                    return Ok(());
                }
                let turn = orch.submit_user_message(state, &line)?;
                writeln!(out, "agent> {}", turn.message)?;
                if turn.kind == TurnKind::StageComplete {
                    if let Some(r) = &turn.artifact_ref {
                        writeln!(out, "saved {}", r.id())?;
                    }
                }
            }
            Stage::PipelineGeneration => {
                if state
                    .artifact_ref(ArtifactKind::PreprocessingPlan)
                    .is_none()
                {
                    let turn = orch.generate_preprocessing(state)?;
                    writeln!(out, "agent> {}", turn.message)?;
                }
                let turn = orch.generate_pipelines(state)?;
                writeln!(out, "agent> {}", turn.message)?;
            }
            Stage::CodeGeneration => {
                if state.selected_candidate().is_none() {
                    show_candidates(orch, state, out)?;
                    let Some(line) = prompt(out, input, "candidate> ")? else {
                        return Ok(());
                    };
                    match line.parse::<u8>() {
                        Ok(k) => match orch.select_pipeline(state, k) {
                            Ok(()) => {}
                            Err(e @ (Error::OutOfRange(_) | Error::InvalidInput(_))) => {
                                writeln!(out, "{e}")?
                            }
                            Err(e) => return Err(e.into()),
                        },
                        Err(_) => writeln!(out, "enter a candidate number")?,
                    }
                    continue;
                }
                let code = match state.code_refs().last() {
                    Some(r) => r.clone(),
                    None => {
                        let turn = orch.generate_code(state, None)?;
                        writeln!(out, "agent> {}", turn.message)?;
                        turn.artifact_ref.expect("code generation yields a ref")
                    }
                };
                let path = orch.store().absolute(&code);
                let dir = path.parent().unwrap_or(&path);
                writeln!(out, "code {} written to {}", code.id(), dir.display())?;
                let Some(line) = prompt(out, input, "run it? [Y/n] ")? else {
                    return Ok(());
                };
                if line.eq_ignore_ascii_case("n") {
                    orch.finalize(state)?;
                    continue;
                }
                let outcome = orch.run_with_repair(state, &code)?;
                write!(out, "{}", outcome.result.stdout_excerpt)?;
                if !outcome.result.succeeded() {
                    writeln!(out, "{}", outcome.result.stderr_excerpt)?;
                    return Err(Error::ExecutionFailed {
                        exit_status: outcome.result.exit_status,
                        executions: outcome.executions,
                    }
                    .into());
                }
            }
            Stage::Done => {
                writeln!(out, "session complete")?;
                return Ok(());
            }
        }
    }
}
