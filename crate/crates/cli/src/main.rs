//! `attrib`: command-line front end for attrib-core.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 I/O
//! error. Machine-readable output goes to stdout, everything else to stderr.

mod query;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use attrib_core::centroid::{build_clusters_with, rank_models, ClusterOptions, Metric};
use attrib_core::corpus::{self, EmbeddingCorpus};
use attrib_core::distinguish::rank_prompts;
use attrib_core::eval::report::{detection_csv, distinguish_csv, run_eval, EvalMode};
use attrib_core::eval::EvalConfig;
use attrib_core::one_vs_rest::{fixed_target_sweep, ovr_sweep, OvrConfig, DEFAULT_FPR_CAPS};
use attrib_core::outlier::{
    outlier_sweep, OutlierConfig, OutlierDetector, DEFAULT_FIT_SIZE, DEFAULT_QUANTILE,
};
use attrib_core::synth::{generate, SynthSpec};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Io(m) => m,
        }
    }
}

impl From<attrib_core::Error> for CliError {
    fn from(e: attrib_core::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "attrib",
    version,
    about = "Attribute image embeddings to the model that generated them"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "ATTRIB_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    /// Suppress summaries on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus file (.jsonl for JSON lines, anything else binary).
    #[arg(long)]
    corpus: PathBuf,

    /// Keep embeddings as stored instead of L2-normalizing them on load.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long, default_value_t = 19)]
        models: usize,
        #[arg(long, default_value_t = 280)]
        prompts: usize,
        /// Generations per (prompt, model) cell.
        #[arg(long, default_value_t = 30)]
        k: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Distance between model means, in units of sigma.
        #[arg(long, default_value_t = 6.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        no_normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the models of one prompt by distance to a query.
    Classify {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Prompt id; defaults to the query record's prompt.
        #[arg(long)]
        prompt: Option<String>,
        /// JSONL record, JSON array or whitespace-separated numbers; `-` for stdin.
        #[arg(long)]
        query: PathBuf,
        /// References per centroid (default: all).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        sampling_seed: u64,
        #[arg(long, default_value_t = Metric::Euclidean)]
        metric: Metric,
        #[arg(long)]
        renormalize_centroid: bool,
    },
    /// Per-prompt distinguishability scores.
    Distinguish {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Include per-model nearest-neighbour fractions in the JSON output.
        #[arg(long)]
        per_model: bool,
        /// Also write a CSV table to this path (`-` for stdout instead of JSON).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// One-vs-rest detection of a target model.
    Ovr {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(
            long,
            required_unless_present = "all_targets",
            conflicts_with = "all_targets"
        )]
        target: Option<String>,
        #[arg(long)]
        all_targets: bool,
        /// FPR cap for a TPR operating point; repeatable.
        #[arg(long = "fpr")]
        fpr: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long)]
        renormalize_centroid: bool,
        /// Also write the detection table to this path (`-` for stdout instead of JSON).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Target-only outlier detection.
    Outlier {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(
            long,
            required_unless_present = "all_targets",
            conflicts_with = "all_targets"
        )]
        target: Option<String>,
        /// Sweep every model as target and print the detection table.
        #[arg(long)]
        all_targets: bool,
        #[arg(long, required_unless_present = "all_targets")]
        prompt: Option<String>,
        #[arg(long, required_unless_present = "all_targets")]
        query: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_QUANTILE)]
        quantile: f64,
        /// At most this many target generations are fitted in the sweep.
        #[arg(long, default_value_t = DEFAULT_FIT_SIZE)]
        fit_size: usize,
        #[arg(long = "fpr")]
        fpr: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        /// Write the sweep table to this path instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run an experiment and write its reports.
    Eval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        mode: EvalMode,
        /// JSON file with experiment settings; unset fields keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for summary.json and the CSV tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corpus statistics.
    Inspect {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Rewrite a corpus in the format implied by the output extension.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

struct Ctx {
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn stdout(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn to_json<T: serde::Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Data(format!("json: {e}")))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load(args: &CorpusArgs, ctx: &Ctx) -> CliResult<EmbeddingCorpus> {
    let c = corpus::load(&args.corpus)?;
    if args.no_normalize || c.is_normalized() {
        return Ok(c);
    }
    ctx.note("normalizing embeddings to unit length (--no-normalize to keep them)");
    Ok(c.normalize()?)
}

fn fpr_caps(given: &[f64]) -> CliResult<Vec<f64>> {
    if let Some(bad) = given.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(CliError::Usage(format!(
            "--fpr must lie in [0, 1], got {bad}"
        )));
    }
    Ok(if given.is_empty() {
        DEFAULT_FPR_CAPS.to_vec()
    } else {
        given.to_vec()
    })
}

fn query_for(corpus: &EmbeddingCorpus, path: &Path) -> CliResult<query::Query> {
    let mut q = query::read_query(path)?;
    if corpus.is_normalized() {
        q.embedding = q
            .embedding
            .normalized()
            .ok_or_else(|| CliError::Data("query has zero norm".into()))?;
    }
    Ok(q)
}

fn inspect_json(c: &EmbeddingCorpus) -> serde_json::Value {
    json!({
        "models": c.model_ids().len(),
        "prompts": c.prompt_ids().len(),
        "records": c.len(),
        "dim": c.dim(),
        "normalized": c.is_normalized(),
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = Ctx { quiet: cli.quiet };
    match cli.command {
        Command::Synth {
            models,
            prompts,
            k,
            dim,
            separation,
            sigma,
            seed,
            no_normalize,
            out,
        } => {
            let spec = SynthSpec {
                n_models: models,
                n_prompts: prompts,
                k_per_cell: k,
                dim,
                separation,
                sigma,
                seed,
                normalize: !no_normalize,
            };
            let c = generate(&spec)?;
            corpus::save(&c, &out)?;
            ctx.note(format!("wrote {} records to {}", c.len(), out.display()));
            stdout(&to_json(&inspect_json(&c))?)
        }
        Command::Classify {
            corpus: args,
            prompt,
            query,
            k,
            sampling_seed,
            metric,
            renormalize_centroid,
        } => {
            let c = load(&args, &ctx)?;
            let q = query_for(&c, &query)?;
            let prompt = prompt
                .or_else(|| q.key.as_ref().map(|k| k.prompt_id.clone()))
                .ok_or_else(|| {
                    CliError::Usage("--prompt is required for a raw vector query".into())
                })?;
            let options = ClusterOptions {
                k,
                sampling_seed,
                renormalize: renormalize_centroid,
            };
            // a query taken from the corpus never votes for itself
            let exclude = q.key.as_ref().filter(|key| c.get(key).is_some());
            let clusters = build_clusters_with(&c, &prompt, &options, exclude)?;
            let mut ranking = rank_models(&q.embedding, &clusters, metric)?;
            if let Some(key) = q.key {
                ranking = ranking.with_query_key(key);
            }
            ctx.note(format!("predicted {}", ranking.predicted));
            stdout(&to_json(&ranking)?)
        }
        Command::Distinguish {
            corpus: args,
            tau,
            per_model,
            csv,
        } => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(CliError::Usage(format!(
                    "--tau must lie in (0, 1), got {tau}"
                )));
            }
            let c = load(&args, &ctx)?;
            let reports = rank_prompts(&c, tau)?;
            let perfect = reports.iter().filter(|r| r.score == 1.0).count();
            ctx.note(format!(
                "{perfect} of {} prompts fully distinguishable",
                reports.len()
            ));
            let table = distinguish_csv(&reports, c.model_ids())?;
            if let Some(path) = &csv {
                if path == Path::new("-") {
                    return stdout(&table);
                }
                write_file(path, &table)?;
            }
            let body = if per_model {
                to_json(&reports)?
            } else {
                let slim: Vec<_> = reports
                    .iter()
                    .map(|r| json!({"prompt_id": r.prompt_id, "score": r.score}))
                    .collect();
                to_json(&slim)?
            };
            stdout(&body)
        }
        Command::Ovr {
            corpus: args,
            target,
            all_targets,
            fpr,
            split_seed,
            renormalize_centroid,
            csv,
        } => {
            let c = load(&args, &ctx)?;
            let config = OvrConfig {
                split_seed,
                k: None,
                fpr_caps: fpr_caps(&fpr)?,
                renormalize_centroid,
            };
            let rows = match target {
                Some(t) if !all_targets => vec![fixed_target_sweep(&c, &t, &config)?],
                _ => ovr_sweep(&c, c.model_ids(), &config)?,
            };
            let table = detection_csv(&rows, &config.fpr_caps)?;
            ctx.note(table.trim_end());
            match csv {
                Some(path) if path == Path::new("-") => stdout(&table),
                Some(path) => {
                    write_file(&path, &table)?;
                    stdout(&to_json(&rows)?)
                }
                None => stdout(&to_json(&rows)?),
            }
        }
        Command::Outlier {
            corpus: args,
            target,
            all_targets,
            prompt,
            query,
            quantile,
            fit_size,
            fpr,
            split_seed,
            csv,
        } => {
            if !(quantile > 0.0 && quantile < 1.0) {
                return Err(CliError::Usage(format!(
                    "--quantile must lie in (0, 1), got {quantile}"
                )));
            }
            let c = load(&args, &ctx)?;
            if all_targets {
                let config = OutlierConfig {
                    split_seed,
                    fit_size: Some(fit_size),
                    quantile,
                    fpr_caps: fpr_caps(&fpr)?,
                };
                let rows = outlier_sweep(&c, c.model_ids(), &config)?;
                let table = detection_csv(&rows, &config.fpr_caps)?;
                return match csv {
                    Some(path) if path != Path::new("-") => {
                        write_file(&path, &table)?;
                        ctx.note(format!("wrote {}", path.display()));
                        stdout(&to_json(&rows)?)
                    }
                    _ => stdout(&table),
                };
            }
            // clap guarantees these outside --all-targets
            let (target, prompt, query) = (target.unwrap(), prompt.unwrap(), query.unwrap());
            if !c.has_model(&target) {
                return Err(attrib_core::Error::UnknownModel(target).into());
            }
            if !c.has_prompt(&prompt) {
                return Err(attrib_core::Error::UnknownPrompt(prompt).into());
            }
            let q = query_for(&c, &query)?;
            let fit: Vec<_> = c
                .cell(&prompt, &target)
                .into_iter()
                .filter(|r| q.key.as_ref() != Some(&r.key()))
                .map(|r| r.embedding.clone())
                .collect();
            let detector = OutlierDetector::fit(&fit, quantile)?;
            let score = detector.score(&q.embedding)?;
            let out = json!({
                "target": target,
                "prompt_id": prompt,
                "fit_size": fit.len(),
                "quantile": quantile,
                "sim_thresh": detector.sim_thresh(),
                "score": score,
                "detected": score >= 0.0,
            });
            ctx.note(if score >= 0.0 {
                "accepted as target"
            } else {
                "rejected"
            });
            stdout(&to_json(&out)?)
        }
        Command::Eval {
            corpus: args,
            mode,
            config,
            out,
        } => {
            let config: EvalConfig = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                    serde_json::from_str(&text)
                        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
                }
                None => EvalConfig::default(),
            };
            let c = load(&args, &ctx)?;
            let output = run_eval(&c, mode, &config)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)
                    .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
                for (name, body) in &output.files {
                    write_file(&dir.join(name), body)?;
                }
                ctx.note(format!(
                    "wrote {} files to {}",
                    output.files.len(),
                    dir.display()
                ));
            }
            stdout(&output.summary)
        }
        Command::Inspect { corpus: path } => {
            let c = corpus::load(&path)?;
            stdout(&to_json(&inspect_json(&c))?)
        }
        Command::Convert { input, output } => {
            let c = corpus::load(&input)?;
            corpus::save(&c, &output)?;
            ctx.note(format!("wrote {} records to {}", c.len(), output.display()));
            stdout(&to_json(&inspect_json(&c))?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
