//! Command-line front end: model loading and training, search runs, and the
//! greedy/beam/tree comparison report.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use treesearch::{
    beam_search, format_sig, greedy_decode, repetition_penalty_hook, run_search,
    CompletionResult, LanguageModel, NGramModel, SamplerKind, ScorerKind, ScriptedModel,
    SearchConfig, SearchStats, SearchTree, UniformModel,
};

#[derive(Parser)]
#[command(name = "treesearch", version, about = "Confidence-guided tree search over token completions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a tree search and print ranked completions
    Search(SearchArgs),
    /// Train an n-gram model from a whitespace-tokenized corpus file
    TrainNgram(TrainArgs),
    /// Run greedy, beam, and tree search side by side under one seed
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ScoreArg {
    Geometric,
    Sumlog,
    Mean,
}

impl From<ScoreArg> for ScorerKind {
    fn from(value: ScoreArg) -> Self {
        match value {
            ScoreArg::Geometric => ScorerKind::GeometricMean,
            ScoreArg::Sumlog => ScorerKind::SumLogprob,
            ScoreArg::Mean => ScorerKind::ArithmeticMean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SamplerArg {
    Weighted,
    Topk,
    Hybrid,
}

impl From<SamplerArg> for SamplerKind {
    fn from(value: SamplerArg) -> Self {
        match value {
            SamplerArg::Weighted => SamplerKind::NormalizedConfidence,
            SamplerArg::Topk => SamplerKind::TopKLeaves,
            SamplerArg::Hybrid => SamplerKind::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum OutputArg {
    Text,
    Json,
    Dot,
}

#[derive(Args, Serialize, Clone)]
struct RunArgs {
    /// Model descriptor: uniform:V | ngram:path | scripted:path
    #[arg(long)]
    model: String,
    /// Prompt text, tokenized by the model's vocabulary
    #[arg(long)]
    prompt: String,
    #[arg(long, value_enum, default_value = "geometric")]
    score: ScoreArg,
    #[arg(long, value_enum, default_value = "hybrid")]
    sampler: SamplerArg,
    /// Tokens added per extended leaf
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Leaves extended per iteration
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 32)]
    max_depth: usize,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, default_value_t = 10000)]
    max_nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of ranked completions to report
    #[arg(long = "top", default_value_t = 5)]
    top_n: usize,
    /// Longest allowed identical-token run before down-scoring; 0 disables
    #[arg(long, default_value_t = 0)]
    repetition_penalty: usize,
    #[arg(long, default_value_t = 2)]
    hybrid_pool_factor: usize,
    /// Model-query worker threads (never changes results)
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "text")]
    output: OutputArg,
    /// Write output to this path instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Plain UTF-8 corpus, whitespace-delimited tokens
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    order: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Beam width for the beam-search column
    #[arg(long, default_value_t = 4)]
    beam_width: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Fully resolved configuration echoed into outputs for reproducibility.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    #[serde(flatten)]
    run: &'a RunArgs,
    #[serde(skip_serializing_if = "Option::is_none")]
    beam_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<&'a PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("TREESEARCH_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search(args) => cmd_search(args),
        Command::TrainNgram(args) => cmd_train_ngram(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn load_model(descriptor: &str) -> treesearch::Result<Box<dyn LanguageModel>> {
    let (kind, arg) = descriptor.split_once(':').ok_or_else(|| {
        treesearch::Error::InvalidInput(format!(
            "model descriptor {descriptor:?} must be uniform:V, ngram:path, or scripted:path"
        ))
    })?;
    match kind {
        "uniform" => {
            let size: usize = arg.parse().map_err(|_| {
                treesearch::Error::InvalidInput(format!("invalid vocabulary size {arg:?}"))
            })?;
            Ok(Box::new(UniformModel::with_size(size)?))
        }
        "ngram" => Ok(Box::new(NGramModel::from_json(&fs::read_to_string(arg)?)?)),
        "scripted" => Ok(Box::new(ScriptedModel::from_json(&fs::read_to_string(
            arg,
        )?)?)),
        other => Err(treesearch::Error::InvalidInput(format!(
            "unknown model kind {other:?}"
        ))),
    }
}

fn build_config(run: &RunArgs) -> treesearch::Result<SearchConfig> {
    let evaluator = match run.repetition_penalty {
        0 => None,
        r if r >= 2 => Some(repetition_penalty_hook(r, 3)),
        r => {
            return Err(treesearch::Error::InvalidInput(format!(
                "--repetition-penalty must be 0 or >= 2, got {r}"
            )))
        }
    };
    let config = SearchConfig {
        scorer: run.score.into(),
        sampler: run.sampler.into(),
        k: run.k,
        batch: run.batch,
        max_depth: run.max_depth,
        iterations: run.iterations,
        max_nodes: run.max_nodes,
        seed: run.seed,
        evaluator,
        top_n: run.top_n,
        hybrid_pool_factor: run.hybrid_pool_factor,
        workers: run.workers,
    };
    config.validate()?;
    Ok(config)
}

fn emit(out: &Option<PathBuf>, content: &str) -> treesearch::Result<()> {
    match out {
        Some(path) => fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn result_lines(results: &[CompletionResult]) -> String {
    let mut text = String::new();
    for (i, r) in results.iter().enumerate() {
        text.push_str(&format!(
            "#{} (score={}): {}\n",
            i + 1,
            format_sig(r.score_linear, 6),
            r.text
        ));
    }
    text
}

#[derive(Serialize)]
struct SearchDoc<'a> {
    manifest: RunManifest<'a>,
    results: &'a [CompletionResult],
    stats: &'a SearchStats,
    tree: serde_json::Value,
}

fn cmd_search(args: SearchArgs) -> treesearch::Result<()> {
    let model = load_model(&args.run.model)?;
    let prompt = model.vocabulary().tokenize(&args.run.prompt)?;
    let config = build_config(&args.run)?;
    let (tree, results, stats) = run_search(model.as_ref(), &prompt, &config)?;
    log::info!(
        "search: {} nodes in {:?}",
        stats.nodes_created,
        stats.wall_time
    );
    let content = match args.output {
        OutputArg::Text => result_lines(&results),
        OutputArg::Json => {
            let doc = SearchDoc {
                manifest: RunManifest {
                    command: "search",
                    run: &args.run,
                    beam_width: None,
                    out: args.out.as_ref(),
                },
                results: &results,
                stats: &stats,
                tree: serde_json::from_str(&tree.to_json()?)?,
            };
            serde_json::to_string_pretty(&doc)? + "\n"
        }
        OutputArg::Dot => render_dot(&tree, &config, &results),
    };
    emit(&args.out, &content)
}

/// DOT labels carry each node's confidence under the configured scorer.
fn render_dot(tree: &SearchTree, config: &SearchConfig, _results: &[CompletionResult]) -> String {
    tree.to_dot(&|id| {
        tree.path_logprobs(id)
            .ok()
            .and_then(|lps| treesearch::score(config.scorer, &lps).ok())
            .map_or(f64::NAN, |s| s.linear())
    })
}

fn cmd_train_ngram(args: TrainArgs) -> treesearch::Result<()> {
    let text = fs::read_to_string(&args.corpus)?;
    let model = NGramModel::train_text(&text, args.order, args.alpha)?;
    fs::write(&args.out, model.to_json()? + "\n")?;
    log::info!(
        "trained order-{} model over {} token types",
        model.order(),
        model.vocabulary().size()
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> treesearch::Result<()> {
    let model = load_model(&args.run.model)?;
    let prompt = model.vocabulary().tokenize(&args.run.prompt)?;
    let config = build_config(&args.run)?;

    let greedy = greedy_decode(model.as_ref(), &prompt, config.max_depth)?;
    let beams = beam_search(model.as_ref(), &prompt, args.beam_width, config.max_depth)?;
    let (_, results, stats) = run_search(model.as_ref(), &prompt, &config)?;

    let manifest = RunManifest {
        command: "compare",
        run: &args.run,
        beam_width: Some(args.beam_width),
        out: args.out.as_ref(),
    };
    let mut report = String::new();
    report.push_str("== run manifest ==\n");
    report.push_str(&serde_json::to_string_pretty(&manifest)?);
    report.push('\n');
    report.push_str("== greedy ==\n");
    report.push_str(&format!(
        "#1 (score={}): {}  [steps={}]\n",
        format_sig(greedy.score_linear, 6),
        greedy.text,
        greedy.depth
    ));
    report.push_str(&format!("== beam (W={}) ==\n", args.beam_width));
    if let Some(top) = beams.first() {
        report.push_str(&format!(
            "#1 (score={}): {}  [steps={}]\n",
            format_sig(top.score_linear, 6),
            top.text,
            top.depth
        ));
    }
    report.push_str("== tree ==\n");
    if let Some(top) = results.first() {
        report.push_str(&format!(
            "#1 (score={}): {}  [nodes={} iterations={}]\n",
            format_sig(top.score_linear, 6),
            top.text,
            stats.nodes_created,
            stats.iterations_run
        ));
    }
    let verdict = match results.first() {
        Some(top) if top.tokens == greedy.tokens => "IDENTICAL",
        _ => "DIFFERENT",
    };
    report.push_str(&format!("greedy vs tree: {verdict}\n"));
    emit(&args.out, &report)
}
