//! Command-line interface.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use diaglab_core::augment::train_head;
use diaglab_core::corpus::{parse_raw_report, split_corpus, validate_corpus, Organ, ReportRecord};
use diaglab_core::eval::{compare_runs, evaluate_split, GreedyDecoder};
use diaglab_core::rewards::composite_reward;
use diaglab_core::synth::generate_synthetic_corpus;
use diaglab_core::task::{build_prompts, PromptMode};

use crate::checkpoint::{read_head, read_policy, write_head};
use crate::config::RunConfig;
use crate::data::{
    feature_map, read_corpus, read_features, read_labels, read_prompts, read_split, write_corpus, write_features,
    write_labels, write_prompts, write_split,
};
use crate::report::{compare_table, eval_table, read_eval_report, write_eval_report};
use crate::runner::{cases_for, run_training, Start, TrainingData};

/// Environment variable supplying the seed when `--seed` is absent.
pub const SEED_ENV: &str = "DIAGLAB_SEED";

#[derive(Debug, Parser)]
#[command(name = "diaglab", version, about = "Structured pathology-report generation with SFT and GRPO")]
pub struct Cli {
    /// Master seed [default: $DIAGLAB_SEED, else 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Config file of `key = value` lines
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Print the effective configuration and exit
    #[arg(long)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with ROI features and labels
    GenCorpus(GenCorpusArgs),
    /// Parse raw report files into a corpus
    Extract(ExtractArgs),
    /// Split a corpus into sft, grpo and test
    Split(SplitArgs),
    /// Train a linear ROI classifier head for one organ
    TrainClassifier(TrainClassifierArgs),
    /// Build prompts, with classifier labels where heads are given
    Augment(AugmentArgs),
    /// Supervised warm start on the sft split
    Sft(RunArgs),
    /// GRPO on the grpo split, after SFT unless --init, --resume or --cold-start
    Grpo(GrpoArgs),
    /// Greedy-decode a split and score it
    Eval(EvalArgs),
    /// Score one generated text against a reference
    Reward(RewardArgs),
    /// Per-metric differences between two eval reports
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// Number of records
    #[arg(long)]
    pub n: usize,
    /// Corpus output file
    #[arg(long)]
    pub out: PathBuf,
    /// Feature file [default: <out stem>.features.txt]
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// ROI label file [default: <out stem>.labels.txt]
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Raw report files or directories of `*.txt` files; ids are file stems
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub sft_n: usize,
    #[arg(long)]
    pub test_n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Exclude the test split from training
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// gastric or intestinal
    #[arg(long)]
    pub organ: String,
    /// Comma-separated class names [default: sorted labels seen for the organ]
    #[arg(long)]
    pub classes: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Feature file; required when heads are given
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Classifier head checkpoint; repeatable, one per organ
    #[arg(long = "head")]
    pub heads: Vec<PathBuf>,
    /// Site-only prompts, without classifier output
    #[arg(long)]
    pub site_only: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GrpoArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Start from this policy (also used as the reference); skips SFT
    #[arg(long, conflicts_with_all = ["resume", "cold_start"])]
    pub init: Option<PathBuf>,
    /// Continue from a step checkpoint
    #[arg(long, requires = "reference", conflicts_with = "cold_start")]
    pub resume: Option<PathBuf>,
    /// Reference policy for --resume
    #[arg(long = "ref", requires = "resume")]
    pub reference: Option<PathBuf>,
    /// Skip SFT and start from random weights
    #[arg(long)]
    pub cold_start: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    /// Which split to evaluate
    #[arg(long, default_value = "test")]
    pub split_name: String,
    /// Report file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    #[arg(long)]
    pub ref_findings: Option<String>,
    #[arg(long)]
    pub ref_diagnosis: String,
    /// Generated text to score
    #[arg(long)]
    pub hyp: String,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenCorpus(_) => "gen-corpus",
            Command::Extract(_) => "extract",
            Command::Split(_) => "split",
            Command::TrainClassifier(_) => "train-classifier",
            Command::Augment(_) => "augment",
            Command::Sft(_) => "sft",
            Command::Grpo(_) => "grpo",
            Command::Eval(_) => "eval",
            Command::Reward(_) => "reward",
            Command::Compare(_) => "compare",
        }
    }
}

/// Defaults, then `$DIAGLAB_SEED`, the config file, `--set` and `--seed`.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Ok(raw) = std::env::var(SEED_ENV) {
        config.seed = raw.trim().parse().with_context(|| format!("{SEED_ENV}={raw:?} is not a seed"))?;
    }
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    config.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

/// `dir/stem.<tag>.txt` next to `path`.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{tag}.txt"))
}

fn echo_config(path: &Path, command: &str, config: &RunConfig) -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let text = format!("# diaglab {command}\n# args: {}\n{}", args.join(" "), config.to_text());
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn records_by_id(records: &[ReportRecord]) -> BTreeMap<&str, &ReportRecord> {
    records.iter().map(|r| (r.id.as_str(), r)).collect()
}

fn gen_corpus(a: &GenCorpusArgs, config: &RunConfig) -> Result<()> {
    let corpus = generate_synthetic_corpus(a.n, config.seed, &config.synth)?;
    let features = a.features.clone().unwrap_or_else(|| sibling(&a.out, "features"));
    let labels = a.labels.clone().unwrap_or_else(|| sibling(&a.out, "labels"));
    write_corpus(&corpus.records, &a.out)?;
    write_features(&corpus.features, &features)?;
    write_labels(&corpus.roi_labels, &labels)?;
    echo_config(&sibling(&a.out, "config"), "gen-corpus", config)?;
    let captionless = corpus.records.iter().filter(|r| r.findings.is_none()).count();
    println!(
        "wrote {} records ({captionless} without findings) to {}, features to {}, labels to {}",
        corpus.records.len(),
        a.out.display(),
        features.display(),
        labels.display()
    );
    Ok(())
}

fn raw_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("listing {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn extract(a: &ExtractArgs, config: &RunConfig) -> Result<()> {
    let mut records = Vec::new();
    for path in raw_files(&a.inputs)? {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let raw = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        records.push(parse_raw_report(&id, &raw).with_context(|| format!("parsing {}", path.display()))?);
    }
    validate_corpus(&records)?;
    write_corpus(&records, &a.out)?;
    echo_config(&sibling(&a.out, "config"), "extract", config)?;
    println!("extracted {} records to {}", records.len(), a.out.display());
    Ok(())
}

fn split(a: &SplitArgs, config: &RunConfig) -> Result<()> {
    let records = read_corpus(&a.corpus)?;
    let s = split_corpus(&records, a.sft_n, a.test_n, config.seed)?;
    write_split(&s, &a.out)?;
    echo_config(&sibling(&a.out, "config"), "split", config)?;
    println!("sft {} grpo {} test {} -> {}", s.sft.len(), s.grpo.len(), s.test.len(), a.out.display());
    Ok(())
}

fn train_classifier(a: &TrainClassifierArgs, config: &RunConfig) -> Result<()> {
    let organ = Organ::parse(&a.organ).filter(|o| o.has_classifier());
    let Some(organ) = organ else { bail!("--organ must be gastric or intestinal, got {:?}", a.organ) };
    let records = read_corpus(&a.corpus)?;
    let features = feature_map(read_features(&a.features)?);
    let labels: BTreeMap<String, String> = read_labels(&a.labels)?
        .into_iter()
        .filter(|l| l.organ == organ)
        .map(|l| (l.feature_id, l.class_name))
        .collect();
    let excluded: BTreeSet<String> = match &a.split {
        Some(p) => read_split(p)?.test.into_iter().collect(),
        None => BTreeSet::new(),
    };
    let class_names: Vec<String> = match &a.classes {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => labels.values().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
    };
    let mut data = Vec::new();
    for r in records.iter().filter(|r| r.organ == organ && !excluded.contains(&r.id)) {
        for fid in &r.feature_refs {
            let (Some(x), Some(label)) = (features.get(fid), labels.get(fid)) else { continue };
            let y = class_names
                .iter()
                .position(|c| c == label)
                .with_context(|| format!("label {label:?} of {fid} is not among the classes"))?;
            data.push((x.clone(), y));
        }
    }
    let trained = train_head(&data, organ, class_names, &config.head)?;
    write_head(&trained.head, &a.out)?;
    echo_config(&sibling(&a.out, "config"), "train-classifier", config)?;
    println!(
        "{} head: {} samples, {} classes, training accuracy {:.4} -> {}",
        organ.as_str(),
        data.len(),
        trained.head.classes(),
        trained.train_accuracy,
        a.out.display()
    );
    Ok(())
}

fn augment(a: &AugmentArgs, config: &RunConfig) -> Result<()> {
    let records = read_corpus(&a.corpus)?;
    let heads = a.heads.iter().map(|p| read_head(p)).collect::<Result<Vec<_>, _>>()?;
    let features = match &a.features {
        Some(p) => feature_map(read_features(p)?),
        None if heads.is_empty() || a.site_only => BTreeMap::new(),
        None => bail!("--features is required with --head"),
    };
    let mode = if a.site_only { PromptMode::SiteOnly } else { PromptMode::SiteAndClassifier };
    let prompts = build_prompts(&records, &features, &heads, &config.template, mode)?;
    let by_id: BTreeMap<String, _> = records.iter().map(|r| r.id.clone()).zip(prompts).collect();
    write_prompts(&by_id, &a.out)?;
    echo_config(&sibling(&a.out, "config"), "augment", config)?;
    let with_label = by_id.values().filter(|p| p.aux.is_some()).count();
    println!("wrote {} prompts ({with_label} with classifier output) to {}", by_id.len(), a.out.display());
    Ok(())
}

fn train(run: &RunArgs, config: &RunConfig, start: Start, sft_only: bool, command: &str) -> Result<()> {
    let records = read_corpus(&run.corpus)?;
    let split = read_split(&run.split)?;
    let prompts = read_prompts(&run.prompts)?;
    echo_config(&run.out_dir.join("config.txt"), command, config)?;
    let embedder = config.build_embedder();
    if config.cold_start && matches!(start, Start::Fresh) && !sft_only {
        eprintln!("cold start: SFT skipped, policy initialized from N(0, {}^2)", config.init_scale);
    }
    let data = TrainingData { records: &records, split: &split, prompts: &prompts };
    let outcome = run_training(data, config, start, sft_only, &run.out_dir, embedder.as_ref())?;
    println!(
        "{} metrics records, final policy at {}",
        outcome.metrics.len(),
        outcome.out_dir.join("policy.ckpt").display()
    );
    Ok(())
}

fn grpo(a: &GrpoArgs, config: &mut RunConfig) -> Result<()> {
    if a.cold_start {
        config.cold_start = true;
    }
    let start = match (&a.init, &a.resume, &a.reference) {
        (Some(init), _, _) => Start::Init(read_policy(init)?),
        (None, Some(resume), Some(reference)) => {
            Start::Resume { policy: read_policy(resume)?, reference: read_policy(reference)?.params }
        }
        _ => Start::Fresh,
    };
    train(&a.run, config, start, false, "grpo")
}

fn eval(a: &EvalArgs, config: &RunConfig) -> Result<()> {
    let records = read_corpus(&a.corpus)?;
    let split = read_split(&a.split)?;
    let prompts = read_prompts(&a.prompts)?;
    let policy = read_policy(&a.policy)?;
    let ids = split.get(&a.split_name).with_context(|| format!("unknown split {:?}", a.split_name))?;
    let cases = cases_for(ids, &records_by_id(&records), &prompts)?;
    let decoder = GreedyDecoder { params: &policy.params, max_len: config.grpo.max_len };
    let embedder = config.build_embedder();
    let report = evaluate_split(&decoder, &cases, &a.split_name, &config.eval_config(), embedder.as_ref())?;
    if let Some(out) = &a.out {
        write_eval_report(&report, out)?;
        echo_config(&sibling(out, "config"), "eval", config)?;
    }
    print!("{}", eval_table(&report));
    Ok(())
}

fn reward(a: &RewardArgs, config: &RunConfig) -> Result<()> {
    let reference = ReportRecord {
        id: "reference".into(),
        site: "unspecified".into(),
        organ: Organ::Other,
        feature_refs: Vec::new(),
        findings: a.ref_findings.clone(),
        diagnosis: a.ref_diagnosis.clone(),
    };
    reference.validate()?;
    let embedder = config.build_embedder();
    let b = composite_reward(&a.hyp, &reference, &config.reward_config(), embedder.as_ref())?;
    println!("format         {}", b.format);
    println!("caption        {}", b.caption);
    println!("answer         {}", b.answer);
    println!("total          {}", b.total);
    println!("weights_used   {} {} {}", b.weights_used.format, b.weights_used.caption, b.weights_used.answer);
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<()> {
    let ra = read_eval_report(&a.a)?;
    let rb = read_eval_report(&a.b)?;
    print!("{}", compare_table(&compare_runs(&ra, &rb)?));
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = effective_config(&cli)?;
    if cli.print_config {
        print!("{}", config.to_text());
        return Ok(());
    }
    let Some(command) = &cli.command else { bail!("no subcommand given; see --help") };
    match command {
        Command::GenCorpus(a) => gen_corpus(a, &config),
        Command::Extract(a) => extract(a, &config),
        Command::Split(a) => split(a, &config),
        Command::TrainClassifier(a) => train_classifier(a, &config),
        Command::Augment(a) => augment(a, &config),
        Command::Sft(a) => train(a, &config, Start::Fresh, true, command.name()),
        Command::Grpo(a) => grpo(a, &mut config),
        Command::Eval(a) => eval(a, &config),
        Command::Reward(a) => reward(a, &config),
        Command::Compare(a) => compare(a),
    }
}

/// Parses `args` and runs; clap handles usage errors (exit 2), module
/// errors exit 1.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if cli.command.is_none() && !cli.print_config {
        eprintln!("error: a subcommand is required\n");
        eprintln!("{}", <Cli as clap::CommandFactory>::command().render_usage());
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
