//! Command-line entry points.
//!
//! Exit status is 0 on success, 1 on usage errors and 2 on data errors.
//! Errors go to stderr as `error[<code>]: <message>`.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use convtab::data::{self, DataError};
use convtab::pipeline::{answer, evaluate, new_session, EvalItem, HistoryMode, ParseConfig, ScoredParse};
use convtab::scorer::{train, ModelWeights, TrainConfig};
use convtab::search::{coverage_report, search_labels, MatchMode, SearchConfig};
use convtab::synthetic::{generate, SyntheticSpec};
use convtab::table::{load_table, Table, TableFormat};

use crate::server;

pub const MODEL_ENV: &str = "CAMP_MODEL";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Data(DataError::Io { .. }) => "io",
            CliError::Data(DataError::Json { .. }) => "json",
            CliError::Data(DataError::Table(_)) => "table",
            CliError::Data(DataError::MissingTableFile(_)) => "missing_table_file",
            CliError::Data(DataError::MalformedRow { .. }) => "malformed_row",
            CliError::Data(DataError::Model { .. }) => "model",
            CliError::Invalid(_) => "invalid_input",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "convtab", version, about = "Conversational question answering over tables")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Tsv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MatchArg {
    Exact,
    Overlap,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HistoryArg {
    Predicted,
    Gold,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model file; the CAMP_MODEL environment variable takes precedence.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

impl ModelArg {
    fn path(&self) -> Result<PathBuf, CliError> {
        if let Some(p) = std::env::var_os(MODEL_ENV).filter(|v| !v.is_empty()) {
            return Ok(PathBuf::from(p));
        }
        self.model
            .clone()
            .ok_or_else(|| CliError::Usage(format!("--model is required unless {MODEL_ENV} is set")))
    }

    fn load(&self) -> Result<ModelWeights, CliError> {
        Ok(data::load_model(&self.path()?)?)
    }
}

#[derive(Debug, Args)]
pub struct BeamArgs {
    /// Sketches tried per question.
    #[arg(long, default_value_t = ParseConfig::default().beam)]
    pub beam: usize,
    /// Choices kept per argument decision.
    #[arg(long, default_value_t = ParseConfig::default().expand)]
    pub expand: usize,
}

impl BeamArgs {
    fn config(&self) -> Result<ParseConfig, CliError> {
        if self.beam == 0 || self.expand == 0 {
            return Err(CliError::Usage("--beam and --expand must be at least 1".into()));
        }
        Ok(ParseConfig {
            beam: self.beam,
            expand: self.expand,
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one or more questions over a table, in order, as one conversation.
    Parse {
        #[arg(long)]
        table: PathBuf,
        /// Repeat for follow-up questions.
        #[arg(long = "question", required = true)]
        questions: Vec<String>,
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        beam: BeamArgs,
        /// Table format; inferred from the extension when omitted.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Print one JSON object per question.
        #[arg(long)]
        json: bool,
    },
    /// Find logical forms consistent with each answer.
    SearchLabels {
        /// Conversations (JSON lines), or a SequentialQA TSV with --sqa.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_s1: bool,
        #[arg(long)]
        no_s2: bool,
        #[arg(long = "match", value_enum, default_value = "exact")]
        match_mode: MatchArg,
        #[arg(long, default_value_t = SearchConfig::default().max_candidates)]
        max_candidates: usize,
        /// Seed follow-up turns with every surviving form, not only the first.
        #[arg(long)]
        thread_all: bool,
        #[arg(long)]
        sqa: bool,
    },
    /// Fit the scorer on search labels.
    Train {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
        lr: f64,
        #[arg(long, default_value_t = TrainConfig::default().l2)]
        l2: f64,
        #[arg(long, default_value_t = TrainConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = TrainConfig::default().holdout)]
        holdout: f64,
        #[arg(long, default_value_t = TrainConfig::default().lambda)]
        lambda: f64,
    },
    /// Report ALL/SEQ/POS accuracy on conversations.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        beam: BeamArgs,
        /// Gold logical forms aligned with --data, needed for --history gold.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "predicted")]
        history: HistoryArg,
        #[arg(long)]
        sqa: bool,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic corpus: tables/, conversations.jsonl and gold.jsonl.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SyntheticSpec::default().n_tables)]
        n_tables: usize,
        #[arg(long, default_value_t = SyntheticSpec::default().copy_turn_fraction)]
        copy_fraction: f64,
        #[arg(long, default_value_t = SyntheticSpec::default().seed)]
        seed: u64,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[command(flatten)]
        model: ModelArg,
        /// Directory of .csv/.tsv tables; ids are file stems.
        #[arg(long)]
        table_dir: PathBuf,
        /// Idle session timeout in seconds.
        #[arg(long, default_value_t = 1800)]
        idle_timeout: u64,
        /// Optional static client bundle served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[command(flatten)]
        beam: BeamArgs,
    },
    /// Interactive conversation in the terminal.
    Repl {
        #[arg(long)]
        table: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        beam: BeamArgs,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}

fn read_table(path: &Path, format: Option<FormatArg>) -> Result<Table, CliError> {
    let format = match format {
        Some(FormatArg::Csv) => TableFormat::Csv,
        Some(FormatArg::Tsv) => TableFormat::Tsv,
        None => TableFormat::from_path(path),
    };
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(load_table(id, std::io::BufReader::new(file), format).map_err(DataError::from)?)
}

fn read_conversations(path: &Path, sqa: bool) -> Result<Vec<data::Conversation>, CliError> {
    Ok(if sqa {
        data::load_sqa_tsv(path)?
    } else {
        data::read_conversations(path)?
    })
}

fn print_parse(out: &mut dyn Write, parse: &Result<(convtab::exec::Denotation, ScoredParse), convtab::pipeline::PipelineError>, json: bool) -> std::io::Result<()> {
    match (parse, json) {
        (Ok((d, p)), false) => {
            writeln!(out, "{}", p.lf)?;
            let texts: Vec<&str> = d.values.iter().map(|v| v.text.as_str()).collect();
            writeln!(out, "{}", texts.join(", "))
        }
        (Ok((_, p)), true) => writeln!(out, "{}", serde_json::to_string(p).expect("parse serializes")),
        (Err(e), false) => writeln!(out, "(no parse: {e})"),
        (Err(e), true) => writeln!(out, "{}", serde_json::json!({"error": e.to_string()})),
    }
}

fn io(e: std::io::Error) -> CliError {
    CliError::Data(DataError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    })
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Parse {
            table,
            questions,
            model,
            beam,
            format,
            json,
        } => {
            let config = beam.config()?;
            let weights = model.load()?;
            let mut state = new_session(Arc::new(read_table(&table, format)?));
            for q in &questions {
                let result = answer(&mut state, q, &weights, &config);
                print_parse(out, &result, json).map_err(io)?;
            }
            Ok(())
        }
        Command::SearchLabels {
            data: path,
            out: out_path,
            no_s1,
            no_s2,
            match_mode,
            max_candidates,
            thread_all,
            sqa,
        } => {
            let config = SearchConfig {
                max_candidates,
                apply_s1: !no_s1,
                apply_s2: !no_s2,
                match_mode: match match_mode {
                    MatchArg::Exact => MatchMode::Exact,
                    MatchArg::Overlap => MatchMode::Overlap,
                },
                thread_all_previous: thread_all,
                ..SearchConfig::default()
            };
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let convs = read_conversations(&path, sqa)?;
            let tables = data::load_tables(convs.iter().map(|c| c.table_file.as_str()))?;
            let mut labels = Vec::new();
            for c in &convs {
                let mut ls = search_labels(&c.turns, &tables[&c.table_file], &config);
                for l in &mut ls {
                    l.table = c.table_file.clone();
                }
                labels.extend(ls);
            }
            data::write_jsonl(&out_path, &labels)?;
            write!(out, "{}", coverage_report(&labels, None)).map_err(io)
        }
        Command::Train {
            labels,
            out: out_path,
            epochs,
            lr,
            l2,
            seed,
            holdout,
            lambda,
        } => {
            let labels = data::read_labels(&labels)?;
            let tables = data::load_tables(labels.iter().map(|l| l.table.as_str()))?;
            let config = TrainConfig {
                epochs,
                learning_rate: lr,
                l2,
                seed,
                holdout,
                lambda,
            };
            let outcome = train(&labels, &tables, &config).map_err(invalid)?;
            data::save_model(&out_path, &outcome.weights)?;
            let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.1}", 100.0 * v));
            writeln!(out, "{:<12}{:>8}{:>10}{:>10}{:>10}", "head", "train", "heldout", "acc", "majority").map_err(io)?;
            for r in &outcome.report {
                writeln!(
                    out,
                    "{:<12}{:>8}{:>10}{:>10}{:>10}",
                    r.head.name(),
                    r.train_events,
                    r.heldout_events,
                    pct(r.accuracy),
                    pct(r.majority_baseline)
                )
                .map_err(io)?;
            }
            Ok(())
        }
        Command::Eval {
            data: path,
            model,
            beam,
            gold,
            history,
            sqa,
            json,
        } => {
            let config = beam.config()?;
            let weights = model.load()?;
            let convs = read_conversations(&path, sqa)?;
            let tables: HashMap<String, Table> = data::load_tables(convs.iter().map(|c| c.table_file.as_str()))?;
            let gold: Option<Vec<data::GoldRecord>> = gold.map(|g| data::read_jsonl(&g)).transpose()?;
            if let Some(g) = &gold {
                if g.len() != convs.len() {
                    return Err(invalid(format!(
                        "gold file has {} records but data has {} conversations",
                        g.len(),
                        convs.len()
                    )));
                }
            }
            let history = match history {
                HistoryArg::Predicted => HistoryMode::Predicted,
                HistoryArg::Gold if gold.is_none() => {
                    return Err(CliError::Usage("--history gold requires --gold".into()));
                }
                HistoryArg::Gold => HistoryMode::Gold,
            };
            let items: Vec<EvalItem<'_>> = convs
                .iter()
                .enumerate()
                .map(|(i, c)| EvalItem {
                    table: &tables[&c.table_file],
                    turns: &c.turns,
                    gold_lfs: gold.as_ref().map(|g| g[i].gold_lfs.as_slice()),
                })
                .collect();
            let report = evaluate(&items, &weights, &config, history);
            if json {
                writeln!(out, "{}", serde_json::to_string(&report).expect("report serializes")).map_err(io)
            } else {
                write!(out, "{report}").map_err(io)
            }
        }
        Command::GenSynthetic {
            out: dir,
            n_tables,
            copy_fraction,
            seed,
        } => {
            let spec = SyntheticSpec {
                n_tables,
                copy_turn_fraction: copy_fraction,
                seed,
                ..SyntheticSpec::default()
            };
            spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let corpus = generate(&spec).map_err(invalid)?;
            corpus.write_to(&dir).map_err(invalid)?;
            writeln!(
                out,
                "wrote {} tables and {} conversations to {}",
                corpus.tables.len(),
                corpus.conversations.len(),
                dir.display()
            )
            .map_err(io)
        }
        Command::Serve {
            port,
            host,
            model,
            table_dir,
            idle_timeout,
            static_dir,
            beam,
        } => {
            let config = beam.config()?;
            let weights = model.load()?;
            let tables = server::load_table_dir(&table_dir)?;
            if idle_timeout == 0 {
                return Err(CliError::Usage("--idle-timeout must be positive".into()));
            }
            let state = server::AppState::new(weights, tables, Duration::from_secs(idle_timeout), config);
            let runtime = tokio::runtime::Runtime::new().map_err(io)?;
            runtime
                .block_on(server::serve(state, (host, port).into(), static_dir.as_deref()))
                .map_err(io)
        }
        Command::Repl {
            table,
            model,
            beam,
            format,
        } => {
            let config = beam.config()?;
            let weights = model.load()?;
            let mut state = new_session(Arc::new(read_table(&table, format)?));
            writeln!(out, "columns: {}", state.table.headers().collect::<Vec<_>>().join(" | ")).map_err(io)?;
            writeln!(out, "empty line or :quit exits, :reset starts over").map_err(io)?;
            let stdin = std::io::stdin();
            loop {
                write!(out, "> ").map_err(io)?;
                out.flush().map_err(io)?;
                let mut line = String::new();
                if stdin.lock().read_line(&mut line).map_err(io)? == 0 {
                    break;
                }
                let q = line.trim();
                match q {
                    "" | ":quit" => break,
                    ":reset" => {
                        state = new_session(state.table.clone());
                        continue;
                    }
                    _ => {}
                }
                let result = answer(&mut state, q, &weights, &config);
                if let Ok((_, p)) = &result {
                    writeln!(out, "[{}] score {:.3}", p.sketch, p.score).map_err(io)?;
                }
                print_parse(out, &result, false).map_err(io)?;
            }
            Ok(())
        }
    }
}
