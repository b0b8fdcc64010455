//! Command-line entry point wiring the library modules into
//! annotate/evaluate/rank/analyze pipelines.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 internal
//! invariant violation.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use forge::agreement::{self, AnnotationSet, Granularity, QcConfig};
use forge::corpus::{self, Corpus, EntityClass, ParseMode};
use forge::diacritics::{self, NormalForm, Restorer, StripMode};
use forge::eval;
use forge::lm::{self, Smoothing};
use forge::noise::{self, NoiseMatrix};
use forge::transfer::{self, LanguageProfile};
use forge::vocab::{self, Group, GroupSpec, SubwordVocab};
use forge::weak::{self, DateRuleSet, MinLengths};

#[derive(Parser)]
#[command(name = "forge", version, about = "Low-resource NER corpus tooling")]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for stochastic operations (falls back to FORGE_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weakly annotate raw tokenized sentences with a gazetteer and date rules.
    Annotate(AnnotateArgs),
    /// Corpus statistics (sentences, tokens, entity counts, entity token %).
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Estimate a clean→noisy confusion matrix from aligned corpora.
    NoiseEstimate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        noisy: PathBuf,
        /// Add-alpha count smoothing.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Relabel a noisy corpus by Bayesian inversion of a noise matrix.
    NoiseCorrect {
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Entity-level evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Inter-annotator agreement.
    #[command(subcommand)]
    Agree(AgreeCommand),
    /// Quality-control flags for a tagged corpus (JSON lines).
    QcFlags(QcArgs),
    /// Transfer-language features and ranking.
    #[command(subcommand)]
    Rank(RankCommand),
    /// Diacritic handling.
    #[command(subcommand)]
    Diacritics(DiacriticsCommand),
    /// N-gram language models.
    #[command(subcommand)]
    Lm(LmCommand),
    /// Subword vocabulary operations.
    #[command(subcommand)]
    Vocab(VocabCommand),
}

#[derive(Args)]
struct AnnotateArgs {
    /// TSV: name<TAB>class<TAB>source.
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    /// One date keyword per line.
    #[arg(long)]
    date_keywords: Option<PathBuf>,
    /// Disable the all-digit-token date rule.
    #[arg(long)]
    no_digit_rule: bool,
    /// Class precedence for identical-span ties.
    #[arg(long, default_value = "PER,LOC,ORG", value_delimiter = ',')]
    precedence: Vec<String>,
    /// Minimum surface length in characters for gazetteer entries.
    #[arg(long, default_value_t = 2)]
    min_len: usize,
    /// Per-source minimum length overrides, e.g. nigerian-names=3.
    #[arg(long, value_delimiter = ',')]
    min_len_source: Vec<String>,
    /// Raw text, one pre-tokenized sentence per line.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Span precision/recall/F1.
    Prf {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Restrict to these classes, e.g. PER,LOC,ORG.
        #[arg(long, value_delimiter = ',')]
        classes: Vec<String>,
    },
    /// Out-of-vocabulary entity rate of test vs train.
    Oov {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        train: PathBuf,
    },
    /// Bucketed F1 (zero-frequency and long entities).
    Buckets {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        train: PathBuf,
    },
}

#[derive(Subcommand)]
enum AgreeCommand {
    /// Fleiss' kappa over two or more aligned annotator files.
    Kappa {
        #[arg(long, value_enum, default_value_t = GranularityArg::Token)]
        granularity: GranularityArg,
        /// CoNLL file per annotator (>= 2).
        files: Vec<PathBuf>,
    },
    /// Symmetric entity-level class-pair confusion counts.
    Confusion { files: Vec<PathBuf> },
}

#[derive(Clone, Copy, ValueEnum)]
enum GranularityArg {
    Token,
    Entity,
}

#[derive(Args)]
struct QcArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    min_occurrences: usize,
    #[arg(long, default_value_t = 0.9)]
    entity_fraction: f64,
    /// Entropy threshold in nats.
    #[arg(long, default_value_t = 0.1)]
    entropy: f64,
    #[arg(long, default_value_t = 3)]
    min_sentence_len: usize,
}

#[derive(Subcommand)]
enum RankCommand {
    /// All ten transfer features for one (source, target) pair.
    Features {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Rank candidate source languages for a target.
    Sources {
        #[arg(long)]
        target: PathBuf,
        /// Candidate profile JSON files.
        candidates: Vec<PathBuf>,
        /// Feature weights, e.g. d_geo=1,eo=1.
        #[arg(long, value_delimiter = ',')]
        weights: Vec<String>,
    },
    /// Evaluate a ranking against a transfer-score table.
    Eval {
        /// One ISO code per line, best first.
        #[arg(long)]
        ranking: PathBuf,
        /// TSV: source<TAB>target<TAB>f1.
        #[arg(long)]
        scores: PathBuf,
        /// Target language code to select rows from the score table.
        #[arg(long)]
        target: String,
        #[arg(short, long, default_value_t = 2)]
        k: usize,
    },
}

#[derive(Subcommand)]
enum DiacriticsCommand {
    /// Remove tonal (or all) combining marks.
    Strip {
        #[arg(long, value_enum, default_value_t = StripModeArg::All)]
        mode: StripModeArg,
        #[arg(long)]
        input: PathBuf,
    },
    /// Stochastically remove/replace tonal marks (seeded).
    Corrupt {
        #[arg(long, default_value_t = 0.3)]
        p_remove: f64,
        #[arg(long, default_value_t = 0.3)]
        p_replace: f64,
        #[arg(long)]
        input: PathBuf,
    },
    /// Build a stripped-form -> diacritized-form lookup table.
    TrainRestorer {
        #[arg(long)]
        input: PathBuf,
    },
    /// Apply a restorer table to text.
    Restore {
        #[arg(long)]
        restorer: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Word accuracy and diacritic P/R of a restoration hypothesis.
    Score {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        hypothesis: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StripModeArg {
    Tonal,
    All,
}

#[derive(Subcommand)]
enum LmCommand {
    /// Train an n-gram model and write it in ARPA format.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        order: usize,
        #[arg(long, value_enum, default_value_t = SmoothingArg::Kn)]
        smoothing: SmoothingArg,
        /// k for add-k smoothing.
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        /// Fold singleton tokens into <unk>.
        #[arg(long)]
        open_vocab: bool,
    },
    /// Perplexity of an ARPA model on a test text.
    Ppl {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Token-level vocabulary coverage of test by train.
    Coverage {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Full perplexity + coverage matrix, TSV.
    Report {
        /// name=file pairs.
        #[arg(long, required = true)]
        train: Vec<String>,
        /// name=file pairs.
        #[arg(long, required = true)]
        test: Vec<String>,
        #[arg(long, default_value_t = 5)]
        order: usize,
        #[arg(long, value_enum, default_value_t = SmoothingArg::Kn)]
        smoothing: SmoothingArg,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long)]
        open_vocab: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SmoothingArg {
    Kn,
    AddK,
}

#[derive(Subcommand)]
enum VocabCommand {
    /// Subword frequency table of a corpus under a vocabulary.
    Count {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Reduce a vocabulary by per-group top-k plus the original head.
    Reduce {
        #[arg(long)]
        vocab: PathBuf,
        /// Group spec name:top_k:corpus_file (repeatable).
        #[arg(long)]
        group: Vec<String>,
        #[arg(long, default_value_t = 0)]
        extra_top_m: usize,
    },
    /// UNK count and coverage of a vocabulary on a test corpus.
    Coverage {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "error: {msg}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    let text = read(path)?;
    corpus::parse_conll(&text, ParseMode::Strict)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse_classes(names: &[String]) -> Result<Vec<EntityClass>, CliError> {
    names
        .iter()
        .map(|n| n.parse::<EntityClass>().map_err(input_err))
        .collect()
}

fn read_profile(path: &Path) -> Result<LanguageProfile, CliError> {
    #[derive(serde::Deserialize)]
    struct ProfileFile {
        #[serde(flatten)]
        profile: LanguageProfile,
        entities_file: Option<PathBuf>,
    }
    let text = read(path)?;
    let file: ProfileFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut profile = file.profile;
    if let Some(entities) = file.entities_file {
        let resolved = path.parent().map(|d| d.join(&entities)).unwrap_or(entities);
        for line in read(&resolved)?.lines() {
            let line = line.trim();
            if !line.is_empty() {
                profile.entity_surfaces.insert(line.to_string());
            }
        }
    }
    profile.validate().map_err(input_err)?;
    Ok(profile)
}

fn text_sentences(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|s: &Vec<String>| !s.is_empty())
        .collect()
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed.or_else(|| {
        std::env::var("FORGE_SEED").ok().and_then(|s| s.parse().ok())
    });
    match run(cli.command, seed) {
        Ok(output) => {
            let result = match &cli.out {
                Some(path) => fs::write(path, output)
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
                None => {
                    print!("{output}");
                    std::io::stdout().flush().map_err(|e| CliError::Input(e.to_string()))
                }
            };
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.code())
                }
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command, seed: Option<u64>) -> Result<String, CliError> {
    match command {
        Command::Annotate(args) => annotate(args),
        Command::Stats { input } => {
            let corpus = read_corpus(&input)?;
            let stats = corpus::corpus_stats(&corpus).map_err(input_err)?;
            to_json(&stats)
        }
        Command::NoiseEstimate { gold, noisy, alpha } => {
            let gold = read_corpus(&gold)?;
            let noisy = read_corpus(&noisy)?;
            let nm = noise::estimate_noise(&gold, &noisy, alpha).map_err(input_err)?;
            to_json(&nm)
        }
        Command::NoiseCorrect { noisy, matrix } => {
            let noisy = read_corpus(&noisy)?;
            let nm: NoiseMatrix = serde_json::from_str(&read(&matrix)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", matrix.display())))?;
            let corrected = noise::posterior_correct(&noisy, &nm).map_err(input_err)?;
            Ok(corpus::write_conll(&corrected))
        }
        Command::Eval(cmd) => run_eval(cmd),
        Command::Agree(cmd) => run_agree(cmd),
        Command::QcFlags(args) => {
            let corpus = read_corpus(&args.input)?;
            let cfg = QcConfig {
                min_occurrences: args.min_occurrences,
                entity_fraction: args.entity_fraction,
                entropy_nats: args.entropy,
                min_sentence_len: args.min_sentence_len,
            };
            let mut out = String::new();
            for flag in agreement::qc_flags(&corpus, &cfg) {
                out.push_str(
                    &serde_json::to_string(&flag)
                        .map_err(|e| CliError::Internal(e.to_string()))?,
                );
                out.push('\n');
            }
            Ok(out)
        }
        Command::Rank(cmd) => run_rank(cmd),
        Command::Diacritics(cmd) => run_diacritics(cmd, seed.unwrap_or(0)),
        Command::Lm(cmd) => run_lm(cmd),
        Command::Vocab(cmd) => run_vocab(cmd),
    }
}

fn annotate(args: AnnotateArgs) -> Result<String, CliError> {
    let mut min_len = MinLengths {
        default: args.min_len,
        per_source: HashMap::new(),
    };
    for spec in &args.min_len_source {
        let (source, len) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("bad --min-len-source {spec:?}")))?;
        min_len.per_source.insert(
            source.to_string(),
            len.parse().map_err(|_| CliError::Input(format!("bad length in {spec:?}")))?,
        );
    }
    let gazetteer = match &args.gazetteer {
        Some(path) => weak::load_gazetteer(&read(path)?, &min_len).map_err(input_err)?,
        None => weak::Gazetteer::new(vec![]),
    };
    let rules = match &args.date_keywords {
        Some(path) => DateRuleSet::from_keyword_file(&read(path)?, !args.no_digit_rule),
        None => DateRuleSet::new(std::iter::empty(), !args.no_digit_rule),
    };
    let precedence = parse_classes(&args.precedence)?;
    let text = read(&args.input)?;
    let sentences = text_sentences(&text)
        .into_iter()
        .map(|tokens| weak::annotate(&tokens, &gazetteer, &rules, &precedence))
        .collect();
    Ok(corpus::write_conll(&Corpus::new("annotated", sentences)))
}

fn run_eval(cmd: EvalCommand) -> Result<String, CliError> {
    match cmd {
        EvalCommand::Prf { gold, pred, classes } => {
            let gold = read_corpus(&gold)?;
            let pred = read_corpus(&pred)?;
            let filter = if classes.is_empty() { None } else { Some(parse_classes(&classes)?) };
            let report = eval::span_prf(&gold, &pred, filter.as_deref()).map_err(input_err)?;
            to_json(&report)
        }
        EvalCommand::Oov { test, train } => {
            let test = read_corpus(&test)?;
            let train = read_corpus(&train)?;
            let rate = eval::oov_entity_rate(&test, &train).map_err(input_err)?;
            to_json(&serde_json::json!({ "oov_entity_rate_pct": rate }))
        }
        EvalCommand::Buckets { gold, pred, train } => {
            let gold = read_corpus(&gold)?;
            let pred = read_corpus(&pred)?;
            let train = read_corpus(&train)?;
            let report = eval::bucket_f1(&gold, &pred, &train).map_err(input_err)?;
            to_json(&report)
        }
    }
}

fn read_annotation_set(files: &[PathBuf]) -> Result<AnnotationSet, CliError> {
    let corpora: Vec<Corpus> = files
        .iter()
        .map(|f| read_corpus(f))
        .collect::<Result<_, _>>()?;
    AnnotationSet::new(corpora).map_err(input_err)
}

fn run_agree(cmd: AgreeCommand) -> Result<String, CliError> {
    match cmd {
        AgreeCommand::Kappa { granularity, files } => {
            let set = read_annotation_set(&files)?;
            let g = match granularity {
                GranularityArg::Token => Granularity::Token,
                GranularityArg::Entity => Granularity::Entity,
            };
            let kappa = agreement::fleiss_kappa(&set, g).map_err(input_err)?;
            to_json(&serde_json::json!({ "fleiss_kappa": kappa }))
        }
        AgreeCommand::Confusion { files } => {
            let set = read_annotation_set(&files)?;
            let counts = agreement::annotator_confusion(&set).map_err(input_err)?;
            to_json(&counts)
        }
    }
}

fn run_rank(cmd: RankCommand) -> Result<String, CliError> {
    match cmd {
        RankCommand::Features { source, target } => {
            let source = read_profile(&source)?;
            let target = read_profile(&target)?;
            let features = transfer::compute_features(&source, &target).map_err(input_err)?;
            to_json(&features)
        }
        RankCommand::Sources { target, candidates, weights } => {
            let target = read_profile(&target)?;
            let candidates: Vec<LanguageProfile> = candidates
                .iter()
                .map(|p| read_profile(p))
                .collect::<Result<_, _>>()?;
            let weights = if weights.is_empty() {
                transfer::default_weights()
            } else {
                let mut map = HashMap::new();
                for spec in &weights {
                    let (name, value) = spec
                        .split_once('=')
                        .ok_or_else(|| CliError::Input(format!("bad --weights entry {spec:?}")))?;
                    map.insert(
                        name.to_string(),
                        value
                            .parse()
                            .map_err(|_| CliError::Input(format!("bad weight in {spec:?}")))?,
                    );
                }
                map
            };
            let ranked = transfer::rank_sources(&target, &candidates, &weights).map_err(input_err)?;
            let mut out = String::from("code\tscore\n");
            for r in &ranked {
                out.push_str(&format!("{}\t{:.6}\n", r.code, r.score));
            }
            Ok(out)
        }
        RankCommand::Eval { ranking, scores, target, k } => {
            let ranking: Vec<String> = read(&ranking)?
                .lines()
                .map(|l| l.split_whitespace().next().unwrap_or("").to_string())
                .filter(|l| !l.is_empty())
                .collect();
            let mut table = HashMap::new();
            for (lineno, line) in read(&scores)?.lines().enumerate() {
                if line.trim().is_empty() || line.starts_with('#') {
                    continue;
                }
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 3 {
                    return Err(CliError::Input(format!(
                        "scores line {}: expected source<TAB>target<TAB>f1",
                        lineno + 1
                    )));
                }
                if cols[1] == target {
                    let f1: f64 = cols[2].parse().map_err(|_| {
                        CliError::Input(format!("scores line {}: bad f1", lineno + 1))
                    })?;
                    table.insert(cols[0].to_string(), f1);
                }
            }
            let result = transfer::eval_ranking(&ranking, &table, k).map_err(input_err)?;
            to_json(&result)
        }
    }
}

fn run_diacritics(cmd: DiacriticsCommand, seed: u64) -> Result<String, CliError> {
    match cmd {
        DiacriticsCommand::Strip { mode, input } => {
            let mode = match mode {
                StripModeArg::Tonal => StripMode::Tonal,
                StripModeArg::All => StripMode::All,
            };
            Ok(diacritics::strip(&read(&input)?, mode))
        }
        DiacriticsCommand::Corrupt { p_remove, p_replace, input } => {
            if !(0.0..=1.0).contains(&p_remove) || !(0.0..=1.0).contains(&p_replace) {
                return Err(CliError::Input("probabilities must be in [0,1]".into()));
            }
            Ok(diacritics::corrupt(&read(&input)?, p_remove, p_replace, seed))
        }
        DiacriticsCommand::TrainRestorer { input } => {
            let text = diacritics::normalize(&read(&input)?, NormalForm::Nfc);
            let tokens: Vec<&str> = text.split_whitespace().collect();
            let (restorer, counts) =
                diacritics::train_restorer(tokens.iter().copied()).map_err(input_err)?;
            Ok(restorer.to_tsv(Some(&counts)))
        }
        DiacriticsCommand::Restore { restorer, input } => {
            let restorer = Restorer::from_tsv(&read(&restorer)?).map_err(input_err)?;
            let mut out = String::new();
            for line in read(&input)?.lines() {
                out.push_str(&diacritics::restore(line, &restorer));
                out.push('\n');
            }
            Ok(out)
        }
        DiacriticsCommand::Score { reference, hypothesis } => {
            let tokens = |text: String| -> Vec<String> {
                text.split_whitespace().map(str::to_string).collect()
            };
            let reference = tokens(read(&reference)?);
            let hypothesis = tokens(read(&hypothesis)?);
            let metrics =
                diacritics::restoration_metrics(&reference, &hypothesis).map_err(input_err)?;
            to_json(&metrics)
        }
    }
}

fn smoothing_of(arg: SmoothingArg, k: f64) -> Smoothing {
    match arg {
        SmoothingArg::Kn => Smoothing::ModifiedKneserNey,
        SmoothingArg::AddK => Smoothing::AddK(k),
    }
}

fn named_corpora(specs: &[String]) -> Result<Vec<(String, Vec<Vec<String>>)>, CliError> {
    specs
        .iter()
        .map(|spec| {
            let (name, path) = spec
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("expected name=file, got {spec:?}")))?;
            Ok((name.to_string(), text_sentences(&read(Path::new(path))?)))
        })
        .collect()
}

fn run_lm(cmd: LmCommand) -> Result<String, CliError> {
    match cmd {
        LmCommand::Train { input, order, smoothing, k, open_vocab } => {
            let sentences = text_sentences(&read(&input)?);
            let model = lm::train_lm(&sentences, order, smoothing_of(smoothing, k), open_vocab)
                .map_err(input_err)?;
            Ok(lm::write_arpa(&model))
        }
        LmCommand::Ppl { model, test } => {
            let model = lm::read_arpa(&read(&model)?).map_err(input_err)?;
            let test = text_sentences(&read(&test)?);
            let ppl = lm::perplexity(&model, &test).map_err(input_err)?;
            to_json(&serde_json::json!({ "perplexity": ppl }))
        }
        LmCommand::Coverage { train, test } => {
            let train = text_sentences(&read(&train)?);
            let test = text_sentences(&read(&test)?);
            to_json(&serde_json::json!({
                "vocab_coverage_pct": lm::vocab_coverage(&train, &test)
            }))
        }
        LmCommand::Report { train, test, order, smoothing, k, open_vocab } => {
            let train_sets = named_corpora(&train)?;
            let test_domains = named_corpora(&test)?;
            let report = lm::domain_report(
                &train_sets,
                &test_domains,
                order,
                smoothing_of(smoothing, k),
                open_vocab,
            )
            .map_err(input_err)?;
            Ok(report.to_tsv())
        }
    }
}

fn run_vocab(cmd: VocabCommand) -> Result<String, CliError> {
    match cmd {
        VocabCommand::Count { vocab, input } => {
            let v = SubwordVocab::from_lines(&read(&vocab)?);
            let text = read(&input)?;
            let counts = vocab::count_subwords(text.lines(), &v);
            let mut rows: Vec<(&String, &u64)> = counts.iter().collect();
            rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
            let mut out = String::new();
            for (token, count) in rows {
                out.push_str(&format!("{token}\t{count}\n"));
            }
            Ok(out)
        }
        VocabCommand::Reduce { vocab, group, extra_top_m } => {
            let original = SubwordVocab::from_lines(&read(&vocab)?);
            let mut groups = Vec::new();
            for spec in &group {
                let parts: Vec<&str> = spec.splitn(3, ':').collect();
                if parts.len() != 3 {
                    return Err(CliError::Input(format!(
                        "expected name:top_k:corpus_file, got {spec:?}"
                    )));
                }
                groups.push(Group {
                    name: parts[0].to_string(),
                    top_k: parts[1]
                        .parse()
                        .map_err(|_| CliError::Input(format!("bad top_k in {spec:?}")))?,
                    corpus: read(Path::new(parts[2]))?,
                });
            }
            let reduced = vocab::reduce_vocab(&original, &GroupSpec { groups, extra_top_m })
                .map_err(input_err)?;
            Ok(reduced.to_lines())
        }
        VocabCommand::Coverage { vocab, test } => {
            let v = SubwordVocab::from_lines(&read(&vocab)?);
            let text = read(&test)?;
            to_json(&vocab::coverage_stats(&v, text.lines()))
        }
    }
}
