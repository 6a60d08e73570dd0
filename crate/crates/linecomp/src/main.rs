use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use linecomp::evaluate::{evaluate, records_jsonl, report_json};
use linecomp::prep::{self, PrepOptions};
use linecomp::service::{self, ServeOptions};
use linecomp::{io, CompletionRequest, Engine, EngineConfig};
use linecomp_core::eval::{self, position_files, EvalReport};

#[derive(Parser)]
#[command(name = "linecomp", version, about = "Local full-line code completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a corpus and write formatted training documents.
    Prep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        dropout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `repo_id<TAB>family_id` lines.
        #[arg(long)]
        fork_map: Option<PathBuf>,
        /// Train, validation and test fractions.
        #[arg(long, num_args = 3, value_names = ["TRAIN", "VALIDATION", "TEST"])]
        ratios: Option<Vec<f64>>,
        #[arg(long, default_value = "py")]
        extensions: Vec<String>,
    },
    /// Learn the character-pair vocabulary from prepared documents.
    TrainTokenizer {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = linecomp_core::tokenizer::DEFAULT_VOCAB_SIZE)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count n-grams over prepared documents.
    TrainLm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Complete the line at a caret position of a file.
    Complete {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        file: PathBuf,
        /// Character offset of the caret.
        #[arg(long)]
        caret: usize,
    },
    /// Draw reproducible caret positions from the files of a directory.
    SamplePositions {
        #[arg(long)]
        corpus: PathBuf,
        /// `split.tsv` from `prep`; restricts sampling to one segment.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        segment: String,
        #[arg(long, default_value_t = 5)]
        per_file: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the engine at fixed positions.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        positions: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Root the position file ids are relative to.
        #[arg(long, default_value = ".")]
        corpus: PathBuf,
        /// Per-position JSON lines; defaults to the report path with `.jsonl`.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Answer newline-delimited JSON requests.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "stdio")]
        tcp: Option<String>,
        #[arg(long)]
        stdio: bool,
        /// Abandon a running request when a newer one arrives.
        #[arg(long)]
        latest_wins: bool,
    },
}

fn load_engine(config: &PathBuf) -> anyhow::Result<Arc<Engine>> {
    let config = EngineConfig::load(config)?;
    Ok(Arc::new(Engine::load(config)?))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Prep { corpus, out, dropout, seed, fork_map, ratios, extensions } => {
            let mut options = PrepOptions { extensions, dropout, seed, ..PrepOptions::default() };
            if let Some(r) = ratios {
                options.ratios = [r[0], r[1], r[2]];
            }
            if let Some(path) = fork_map {
                options.fork_map = io::read_fork_map(&path)?;
            }
            let summary = prep::prep(&corpus, &out, &options)?;
            for path in &summary.skipped.non_utf8 {
                log::warn!("skipped non-UTF-8 file {path}");
            }
            println!(
                "train {} validation {} test {} skipped {}",
                summary.files[0],
                summary.files[1],
                summary.files[2],
                summary.skipped.non_utf8.len()
            );
        }
        Command::TrainTokenizer { corpus, vocab_size, out } => {
            let docs = io::read_documents(&corpus)?;
            let (tokenizer, report) = prep::train_tokenizer(&docs, vocab_size)?;
            io::save_tokenizer(&out, &tokenizer)?;
            println!("vocab {} merges {} exhausted {}", tokenizer.vocab_size(), report.merges, report.exhausted);
        }
        Command::TrainLm { corpus, tokenizer, order, out } => {
            let tokenizer = io::load_tokenizer(&tokenizer)?;
            let docs = io::read_documents(&corpus)?;
            let model = prep::train_lm(&docs, &tokenizer, order)?;
            io::save_model(&out, &model)?;
            println!("order {order} records {}", model.records().len());
        }
        Command::Complete { config, file, caret } => {
            let engine = load_engine(&config)?;
            let text = io::read_text(&file)?;
            let request = CompletionRequest::new(file.to_string_lossy(), text, caret);
            let result = engine.session().complete(&request)?;
            match result.suggestion {
                Some(s) => println!("{s}"),
                None => bail!("no suggestion"),
            }
        }
        Command::SamplePositions { corpus, split, segment, per_file, seed, out } => {
            let (files, _) = io::ingest(&corpus, &["py"])?;
            let keep: Option<Vec<String>> = match split {
                Some(path) => Some(
                    io::read_text(&path)?
                        .lines()
                        .filter_map(|l| l.split_once('\t'))
                        .filter(|(_, s)| *s == segment)
                        .map(|(id, _)| id.to_string())
                        .collect(),
                ),
                None => None,
            };
            let ids: Vec<(String, &str)> = files
                .iter()
                .map(|f| (f.file_id(), f.text.as_str()))
                .filter(|(id, _)| keep.as_ref().map_or(true, |k| k.contains(id)))
                .collect();
            let sampled = eval::sample_positions(ids.iter().map(|(id, t)| (id.as_str(), *t)), per_file, seed);
            for id in &sampled.skipped {
                log::info!("no eligible offsets in {id}");
            }
            io::write_file(&out, eval::format_positions(&sampled.positions))?;
            println!("positions {} skipped {}", sampled.positions.len(), sampled.skipped.len());
        }
        Command::Eval { config, positions, report, corpus, records, jobs } => {
            let engine = load_engine(&config)?;
            let positions = eval::parse_positions(&io::read_text(&positions)?)
                .map_err(|e| anyhow::anyhow!("{}: {e}", positions.display()))?;
            let files = io::read_files_by_id(&corpus, position_files(&positions))?;
            let recs = evaluate(&engine, &files, &positions, jobs);
            let summary = EvalReport::from_records(&recs);
            let json = serde_json::to_string_pretty(&report_json(&summary))?;
            io::write_file(&report, format!("{json}\n"))?;
            io::write_file(&records.unwrap_or_else(|| report.with_extension("jsonl")), records_jsonl(&recs))?;
            println!("{json}");
        }
        Command::Serve { config, tcp, stdio, latest_wins } => {
            let engine = load_engine(&config)?;
            let options = ServeOptions { latest_wins };
            match tcp {
                Some(addr) => {
                    let listener = service::bind(&addr).with_context(|| format!("cannot listen on {addr}"))?;
                    log::info!("listening on {}", listener.local_addr()?);
                    service::serve_tcp(engine, listener, options)?;
                }
                None => {
                    let _ = stdio;
                    service::serve_stdio(engine, options)?;
                }
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
