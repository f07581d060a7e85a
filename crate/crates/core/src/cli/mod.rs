//! The `ddi` command line: one subcommand per pipeline stage, a strict config
//! file, and a manifest beside every primary output.

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{Config, CONFIG_VERSION};
pub use manifest::{sha256_hex, sibling, write_atomic, Recorder, RunManifest, MANIFEST_VERSION};

use crate::annot::CodeVocabulary;
use crate::corpus::{
    generate_corpus, load_embeddings, map_nlm180, parse_corpus, parse_nlm180, serialize_corpus, to_canonical_json,
    CorpusFile, EmbeddingTable,
};
use crate::ensemble::{merge, tally};
use crate::error::{Error, Result};
use crate::infer::predict_corpus;
use crate::model::{load_checkpoint, save_checkpoint};
use crate::score::{score, score_breakdown};
use crate::tagging::{encode, roundtrip_upperbound, BindingContext, EncodeOptions, SourceWeight};
use crate::train::{apply_bootstrap, bootstrap_pk, mix, pk_candidates, review_queue_lines, train_ensemble, RunInputs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ddi", version, about = "Drug-drug interaction extraction from drug-label sentences")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration (flat keys, version "ddi-config/1")
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the config file
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override one config key, e.g. --set epochs=5 (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads for parallel stages (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotated corpus
    Generate {
        /// Output corpus file
        output: PathBuf,
    },
    /// Map coarse NLM-180 records to a corpus
    #[command(name = "map-nlm180")]
    MapNlm180 {
        /// NLM-180 record file
        input: PathBuf,
        /// Output corpus file
        output: PathBuf,
    },
    /// Encode a corpus into IOB tag sequences with drop reports
    Encode {
        /// Input corpus file
        corpus: PathBuf,
        /// Output tag-sequence file
        output: PathBuf,
    },
    /// Score encode-then-decode against gold: the tagging upper bound
    Roundtrip {
        /// Gold corpus file
        corpus: PathBuf,
        /// Output report file
        output: PathBuf,
    },
    /// Train one model or an ensemble of models
    Train {
        /// Primary training corpus
        corpus: PathBuf,
        /// Output directory for checkpoints and reports
        output: PathBuf,
        /// Auxiliary training corpus (repeatable)
        #[arg(long = "aux", value_name = "FILE")]
        auxiliary: Vec<PathBuf>,
        /// Fixed development corpus instead of a split of the primary corpus
        #[arg(long, value_name = "FILE")]
        dev: Option<PathBuf>,
        /// Number of models; overrides the ensemble_size key
        #[arg(long, value_name = "K")]
        ensemble: Option<usize>,
    },
    /// Resolve coarse PK outcomes by bootstrapping from resolved seeds
    Bootstrap {
        /// Corpus whose PK interactions carry resolved codes
        seeds: PathBuf,
        /// Corpus whose PK interactions carry coarse direction markers
        pending: PathBuf,
        /// Output corpus with accepted codes written back
        output: PathBuf,
    },
    /// Predict annotations for every sentence of a corpus
    Predict {
        /// Model checkpoint
        checkpoint: PathBuf,
        /// Input corpus; existing annotations are ignored
        corpus: PathBuf,
        /// Output prediction file
        output: PathBuf,
    },
    /// Merge prediction files by vote
    #[command(name = "ensemble-merge")]
    EnsembleMerge {
        /// Output merged corpus
        output: PathBuf,
        /// Prediction files over the same sentences
        #[arg(required = true)]
        predictions: Vec<PathBuf>,
        /// Minimum votes for acceptance; overrides the min_votes key
        #[arg(long, value_name = "N")]
        min_votes: Option<usize>,
    },
    /// Score predictions against gold under all four criteria
    Score {
        /// Gold corpus
        gold: PathBuf,
        /// Predicted corpus
        predictions: PathBuf,
        /// Output report file
        output: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::MapNlm180 { .. } => "map-nlm180",
            Command::Encode { .. } => "encode",
            Command::Roundtrip { .. } => "roundtrip",
            Command::Train { .. } => "train",
            Command::Bootstrap { .. } => "bootstrap",
            Command::Predict { .. } => "predict",
            Command::EnsembleMerge { .. } => "ensemble-merge",
            Command::Score { .. } => "score",
        }
    }
}

/// Usage failures exit 1; data failures exit 2.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Invalid(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// The config file, then `--seed` and `--set` on top.
pub fn resolve_config(global: &GlobalArgs) -> Result<Config> {
    let mut config = match &global.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Config::from_toml(&text)?
        }
        None => Config::default(),
    };
    config = config.with_overrides(&global.overrides)?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    Ok(config)
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = resolve_config(&cli.global)?;
    match cli.global.workers {
        Some(0) => Err(Error::Invalid("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))?
            .install(|| dispatch(&cli.command, &config)),
        None => dispatch(&cli.command, &config),
    }
}

fn codes(config: &Config, rec: &mut Recorder) -> Result<CodeVocabulary> {
    match &config.codes {
        Some(p) => {
            let bytes = rec.read(p)?;
            CodeVocabulary::from_json(&String::from_utf8_lossy(&bytes))
        }
        None => Ok(CodeVocabulary::placeholder()),
    }
}

fn embeddings(config: &Config, rec: &mut Recorder) -> Result<Option<EmbeddingTable>> {
    let Some(p) = &config.embeddings else { return Ok(None) };
    let bytes = rec.read(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[config.seed, 0xe3b]));
    load_embeddings(&bytes, config.word_dim, &mut rng).map(Some)
}

fn corpus(path: &Path, codes: &CodeVocabulary, rec: &mut Recorder) -> Result<CorpusFile> {
    let bytes = rec.read(path)?;
    parse_corpus(&bytes, codes)
}

#[derive(Serialize)]
struct TagFile {
    version: &'static str,
    sequences: Vec<crate::tagging::TagSequence>,
    reports: Vec<crate::tagging::EncodeReport>,
}

#[derive(Serialize)]
struct ScoreFile {
    score: crate::score::ScoreReport,
    breakdown: crate::score::ScoreBreakdown,
}

fn drop_lines(reports: &[crate::tagging::EncodeReport]) -> String {
    let mut out = String::new();
    for r in reports {
        for d in &r.dropped {
            out.push_str(&format!("dropped\t{}\t{}\t{}\n", r.sentence, d.mention, d.reason.as_str()));
        }
    }
    out
}

fn dispatch(command: &Command, config: &Config) -> Result<()> {
    let mut rec = Recorder::new(command.name(), config);
    let primary: PathBuf = match command {
        Command::Generate { output } => {
            let codes = codes(config, &mut rec)?;
            let c = generate_corpus(&config.generator(), &codes)?;
            rec.write(output, &serialize_corpus(&c))?;
            println!("generated {} labels, {} sentences", c.labels.len(), c.sentence_count());
            output.clone()
        }
        Command::MapNlm180 { input, output } => {
            let file = parse_nlm180(&rec.read(input)?)?;
            let mapped = map_nlm180(&file)?;
            for w in &mapped.warnings {
                eprintln!("warning: {w}");
            }
            rec.write(output, &serialize_corpus(&mapped.corpus))?;
            println!("mapped {} sentences, skipped {}", mapped.corpus.sentence_count(), mapped.warnings.len());
            output.clone()
        }
        Command::Encode { corpus: input, output } => {
            let codes = codes(config, &mut rec)?;
            let c = corpus(input, &codes, &mut rec)?;
            let options = EncodeOptions { coordination: config.coordination };
            let mut file = TagFile { version: "ddi-tags/1", sequences: Vec::new(), reports: Vec::new() };
            for label in &c.labels {
                let ctx = BindingContext::for_label(label, &config.proxies);
                for (_, s) in label.sentences() {
                    let (seq, report) = encode(s, &ctx, SourceWeight::Primary, options);
                    file.sequences.push(seq);
                    file.reports.push(report);
                }
            }
            print!("{}", drop_lines(&file.reports));
            rec.write(output, &to_canonical_json(&file))?;
            output.clone()
        }
        Command::Roundtrip { corpus: input, output } => {
            let codes = codes(config, &mut rec)?;
            let c = corpus(input, &codes, &mut rec)?;
            let report =
                roundtrip_upperbound(&c, &config.proxies, EncodeOptions { coordination: config.coordination })?;
            println!("reconstructed\n{}", report.score.table());
            println!("predicted from encode reports\n{}", report.predicted.table());
            print!("{}", drop_lines(&report.reports));
            rec.write(output, &to_canonical_json(&report))?;
            output.clone()
        }
        Command::Train { corpus: input, output, auxiliary, dev, ensemble } => {
            let codes = codes(config, &mut rec)?;
            let table = embeddings(config, &mut rec)?;
            let primary = corpus(input, &codes, &mut rec)?;
            let aux = auxiliary.iter().map(|p| corpus(p, &codes, &mut rec)).collect::<Result<Vec<_>>>()?;
            let dev = dev.as_ref().map(|p| corpus(p, &codes, &mut rec)).transpose()?;
            let (model, train, infer) = (config.model(), config.train(), config.infer());
            model.validate()?;
            train.validate()?;
            let inputs = RunInputs {
                primary: &primary,
                auxiliary: &aux,
                dev: dev.as_ref(),
                model: &model,
                codes: &codes,
                embeddings: table.as_ref(),
                train: &train,
                infer: &infer,
            };
            let runs = train_ensemble(ensemble.unwrap_or(config.ensemble_size), &inputs, config.seed)?;
            for (i, run) in runs.iter().enumerate() {
                rec.write(&output.join(format!("model-{i:02}.json")), &save_checkpoint(&run.model)?)?;
                rec.write(&output.join(format!("report-{i:02}.json")), &to_canonical_json(&run.report))?;
                let best = run.report.epochs.iter().find(|e| e.epoch == run.report.selected_epoch);
                let dev = best.and_then(|e| e.dev);
                println!(
                    "model {i:02}: seed {} selected epoch {} dev relation F1 {:.2} entity F1 {:.2}",
                    run.report.seed,
                    run.report.selected_epoch,
                    100.0 * dev.map_or(0.0, |d| d.relation_f1),
                    100.0 * dev.map_or(0.0, |d| d.entity_f1)
                );
            }
            output.clone()
        }
        Command::Bootstrap { seeds, pending, output } => {
            let codes = codes(config, &mut rec)?;
            let seed_corpus = corpus(seeds, &codes, &mut rec)?;
            let mut pending_corpus = corpus(pending, &codes, &mut rec)?;
            let seed_examples: Vec<_> =
                pk_candidates(&seed_corpus, &codes, &config.proxies).into_iter().filter(|c| c.code.is_some()).collect();
            let coarse: Vec<_> = pk_candidates(&pending_corpus, &codes, &config.proxies)
                .into_iter()
                .filter(|c| c.coarse.is_some())
                .collect();
            let state =
                bootstrap_pk(seed_examples, coarse, &codes, &config.model(), &config.train(), &config.bootstrap())?;
            let resolved = apply_bootstrap(&mut pending_corpus, &state);
            rec.write(output, &serialize_corpus(&pending_corpus))?;
            rec.write(&sibling(output, "review.tsv"), review_queue_lines(&state).as_bytes())?;
            println!(
                "iterations {} accepted per iteration {:?}; resolved {resolved}, review {}, pending {}",
                state.iterations,
                state.history,
                state.review.len(),
                state.pending.len()
            );
            output.clone()
        }
        Command::Predict { checkpoint, corpus: input, output } => {
            let model = load_checkpoint(&rec.read(checkpoint)?)?;
            let c = corpus(input, &model.codes, &mut rec)?;
            let predicted = predict_corpus(&model, &c, &config.infer())?;
            rec.write(output, &serialize_corpus(&predicted))?;
            output.clone()
        }
        Command::EnsembleMerge { output, predictions, min_votes } => {
            let codes = codes(config, &mut rec)?;
            let sets = predictions.iter().map(|p| corpus(p, &codes, &mut rec)).collect::<Result<Vec<_>>>()?;
            let merged = merge(&sets, min_votes.unwrap_or(config.min_votes))?;
            let report = tally(&sets).report();
            print!("{report}");
            rec.write(output, &serialize_corpus(&merged))?;
            rec.write(&sibling(output, "tally.txt"), report.as_bytes())?;
            output.clone()
        }
        Command::Score { gold, predictions, output } => {
            let codes = codes(config, &mut rec)?;
            let g = corpus(gold, &codes, &mut rec)?;
            let p = corpus(predictions, &codes, &mut rec)?;
            let file = ScoreFile { score: score(&g, &p)?, breakdown: score_breakdown(&g, &p)? };
            print!("{}", file.score.table());
            rec.write(output, &to_canonical_json(&file))?;
            output.clone()
        }
    };
    let path = rec.finish(&primary)?;
    log::info!("manifest written to {}", path.display());
    Ok(())
}

/// Every long flag of every subcommand with its help text.
pub fn documented_flags() -> BTreeMap<String, Vec<(String, String)>> {
    use clap::CommandFactory;
    let root = Cli::command();
    let mut out = BTreeMap::new();
    for sub in root.get_subcommands() {
        let flags = sub
            .get_arguments()
            .chain(root.get_arguments())
            .map(|a| {
                let name = a.get_long().map(|l| format!("--{l}")).unwrap_or_else(|| a.get_id().to_string());
                (name, a.get_help().map(|h| h.to_string()).unwrap_or_default())
            })
            .collect();
        out.insert(sub.get_name().to_string(), flags);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_flag() {
        let mut root = Cli::command();
        root.build();
        for sub in root.get_subcommands_mut() {
            let help = sub.render_long_help().to_string();
            for arg in sub.get_arguments() {
                if arg.is_hide_set() {
                    continue;
                }
                assert!(arg.get_help().is_some(), "{} {} lacks help text", sub.get_name(), arg.get_id());
                if let Some(long) = arg.get_long() {
                    assert!(help.contains(&format!("--{long}")), "{} help omits --{long}", sub.get_name());
                }
            }
        }
    }

    #[test]
    fn all_subcommands_are_present() {
        let names: Vec<String> = documented_flags().into_keys().collect();
        for n in [
            "bootstrap",
            "encode",
            "ensemble-merge",
            "generate",
            "map-nlm180",
            "predict",
            "roundtrip",
            "score",
            "train",
        ] {
            assert!(names.contains(&n.to_string()), "{n}");
        }
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["ddi", "frobnicate"]), EXIT_USAGE);
        assert_eq!(main_with_args(["ddi", "generate", "/nonexistent/x.json", "--set", "bogus=1"]), EXIT_USAGE);
        assert_eq!(main_with_args(["ddi", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_input_exits_two() {
        assert_eq!(main_with_args(["ddi", "score", "/nonexistent/g.json", "/nonexistent/p.json", "/tmp/x"]), EXIT_DATA);
    }
}
