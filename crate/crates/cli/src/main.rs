use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use manga_speaker::dataset::{
    attach_pairs, dataset_stats, load_pair_records, pair_records,
    split_dataset, write_book, write_pair_jsonl, Dataset, Difficulty, Page, Split,
};
use manga_speaker::eval::{
    evaluate, format_table, predict_page, EvalMode, EvalOptions, MatchCriteria, Metric,
    DEFAULT_IOU_THRESHOLD,
};
use manga_speaker::order::{assign_page, order_page, OrderConfig, ReadingDirection};
use manga_speaker::predict::{DetectionSet, ExternalScores, Predictor, PredictorKind};
use manga_speaker::synth::{gen_book, Scenario, SynthConfig};
use manga_speaker::viz::render_svg;

#[derive(Parser, Debug)]
#[command(name = "manga-speaker", version, about = "Speaker-to-text attribution for comic pages")]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load annotations and pairs, validate them and write the canonical form
    /// (annotations/*.xml and pairs.jsonl) to --out.
    Ingest,
    /// Dataset statistics as JSON (to --out, or stdout) plus a table on stderr.
    Stats,
    /// Frame reading order and object-to-frame assignment as JSON Lines.
    Order(PageSelector),
    /// Per-text speaker predictions as JSON Lines.
    Predict(PageSelector),
    /// Recall per difficulty for one or more predictors.
    Eval {
        /// Report Recall@K instead of Recall@(#text).
        #[arg(long)]
        k: Option<usize>,
    },
    /// One SVG overlay per selected page, written into the --out directory.
    Viz(PageSelector),
    /// Generate a synthetic corpus in the ingestible layout.
    Synth {
        #[arg(long, default_value_t = 100)]
        pages: u32,
        #[arg(long, default_value_t = 1)]
        books: u32,
        /// easy, hard or mixed:<share of hard texts>
        #[arg(long, default_value = "mixed:0.15")]
        scenario: String,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct PageSelector {
    /// Only this book.
    #[arg(long)]
    book: Option<String>,
    /// Only this page index (requires --book).
    #[arg(long, requires = "book")]
    page: Option<u32>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON file with any of the run settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset root (holding annotations/ or *.xml directly).
    #[arg(long, global = true, env = "MANGA_DATASET_ROOT")]
    dataset: Option<PathBuf>,
    /// Speaker pairs: JSON Lines, one dialog XML, or a directory of them.
    #[arg(long, global = true)]
    pairs: Option<PathBuf>,
    /// External relation scores (JSON Lines).
    #[arg(long, global = true)]
    scores: Option<PathBuf>,
    /// External detections with label probabilities (JSON Lines).
    #[arg(long, global = true)]
    detections: Option<PathBuf>,
    /// Predictor name; comma-separated list for eval.
    #[arg(long, global = true, value_delimiter = ',')]
    predictor: Vec<String>,
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true, value_enum)]
    difficulty: Option<DifficultyArg>,
    #[arg(long, global = true, value_enum)]
    split: Option<SplitArg>,
    /// Share of books in the training split.
    #[arg(long, global = true)]
    train_fraction: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    iou: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Read frames right to left (default).
    #[arg(long, global = true, conflicts_with = "ltr")]
    rtl: bool,
    /// Read frames left to right.
    #[arg(long, global = true)]
    ltr: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DifficultyArg {
    Easy,
    Hard,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SplitArg {
    Train,
    Test,
    All,
}

/// Settings accepted from the JSON config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<PathBuf>,
    pairs: Option<PathBuf>,
    scores: Option<PathBuf>,
    detections: Option<PathBuf>,
    predictor: Option<Vec<String>>,
    mode: Option<String>,
    difficulty: Option<DifficultyArg>,
    split: Option<SplitArg>,
    train_fraction: Option<f64>,
    seed: Option<u64>,
    iou: Option<f64>,
    out: Option<PathBuf>,
    direction: Option<ReadingDirection>,
    synth: Option<SynthConfig>,
}

/// Effective settings after merging flags over the config file.
#[derive(Debug)]
struct RunConfig {
    dataset: Option<PathBuf>,
    pairs: Option<PathBuf>,
    scores: Option<PathBuf>,
    detections: Option<PathBuf>,
    predictors: Vec<PredictorKind>,
    mode: EvalMode,
    difficulty: Option<Difficulty>,
    split: SplitArg,
    train_fraction: f64,
    seed: u64,
    iou: f64,
    out: Option<PathBuf>,
    order: OrderConfig,
    synth: SynthConfig,
}

impl RunConfig {
    fn resolve(args: RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => {
                let src = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str::<FileConfig>(&src)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        let names = if args.predictor.is_empty() {
            file.predictor.unwrap_or_else(|| vec!["frame".into()])
        } else {
            args.predictor
        };
        let predictors = names
            .iter()
            .map(|n| n.parse::<PredictorKind>())
            .collect::<Result<Vec<_>, _>>()?;
        let mode: EvalMode = args
            .mode
            .or(file.mode)
            .as_deref()
            .unwrap_or("predcls")
            .parse()?;
        let direction = if args.ltr {
            ReadingDirection::LeftToRight
        } else if args.rtl {
            ReadingDirection::RightToLeft
        } else {
            file.direction.unwrap_or_default()
        };
        let difficulty = args.difficulty.or(file.difficulty).map(|d| match d {
            DifficultyArg::Easy => Difficulty::Easy,
            DifficultyArg::Hard => Difficulty::Hard,
        });
        let cfg = RunConfig {
            dataset: args.dataset.or(file.dataset),
            pairs: args.pairs.or(file.pairs),
            scores: args.scores.or(file.scores),
            detections: args.detections.or(file.detections),
            predictors,
            mode,
            difficulty,
            split: args.split.or(file.split).unwrap_or(SplitArg::All),
            train_fraction: args.train_fraction.or(file.train_fraction).unwrap_or(0.7),
            seed: args.seed.or(file.seed).unwrap_or(0),
            iou: args.iou.or(file.iou).unwrap_or(DEFAULT_IOU_THRESHOLD),
            out: args.out.or(file.out),
            order: OrderConfig { direction, ..OrderConfig::default() },
            synth: file.synth.unwrap_or_default(),
        };
        if cfg.predictors.iter().any(|p| p.needs_scores()) {
            ensure!(cfg.scores.is_some(), "external predictors need --scores");
        }
        if mode != EvalMode::PredCls {
            ensure!(
                cfg.detections.is_some(),
                "{} evaluation needs --detections",
                mode.name()
            );
        }
        Ok(cfg)
    }

    fn dataset_root(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .context("no dataset root: pass --dataset or set MANGA_DATASET_ROOT")
    }

    fn out(&self) -> Result<&Path> {
        self.out.as_deref().context("this command needs --out")
    }

    /// Loads the dataset, attaches pairs, labels difficulty and applies the split.
    fn load(&self) -> Result<Dataset> {
        let root = self.dataset_root()?;
        let mut ds = Dataset::load_dir(root)
            .with_context(|| format!("loading dataset from {}", root.display()))?;
        if let Some(p) = &self.pairs {
            let records = load_pair_records(p)?;
            let n = attach_pairs(&mut ds, &records)
                .with_context(|| format!("attaching pairs from {}", p.display()))?;
            info!("attached {n} speaker pairs");
        }
        ds.label_difficulty(&self.order);
        let which = match self.split {
            SplitArg::All => return Ok(ds),
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        };
        Ok(split_dataset(ds, self.train_fraction, self.seed)?.select(Some(which)))
    }

    fn predictor(&self, kind: PredictorKind) -> Result<Predictor> {
        let mut p = Predictor::new(kind);
        if kind.needs_scores() {
            let path = self.scores.as_deref().context("external predictors need --scores")?;
            let scores = ExternalScores::load(path)
                .with_context(|| format!("loading scores from {}", path.display()))?;
            p = p.with_scores(Arc::new(scores));
        }
        Ok(p)
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

/// Writes to `--out` when given, else to stdout.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn select_pages<'a>(ds: &'a Dataset, sel: &PageSelector) -> Result<Vec<&'a Page>> {
    let pages: Vec<&Page> = ds
        .pages()
        .filter(|p| sel.book.as_ref().is_none_or(|b| &p.book_title == b))
        .filter(|p| sel.page.is_none_or(|i| p.page_index == i))
        .collect();
    if pages.is_empty() {
        match (&sel.book, sel.page) {
            (Some(b), Some(i)) => bail!("page {i} not found in book {b:?}"),
            (Some(b), None) => bail!("book {b:?} not found"),
            _ => bail!("dataset has no pages"),
        }
    }
    Ok(pages)
}

fn pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut json = serde_json::to_vec_pretty(value)?;
    json.push(b'\n');
    Ok(json)
}

fn jsonl<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let ds = cfg.load()?;
    let out = cfg.out()?;
    for book in &ds.books {
        write_atomic(
            &out.join("annotations").join(format!("{}.xml", book.title)),
            write_book(book).as_bytes(),
        )?;
    }
    let mut buf = Vec::new();
    write_pair_jsonl(&mut buf, &pair_records(&ds))?;
    write_atomic(&out.join("pairs.jsonl"), &buf)?;
    let report = dataset_stats(&ds);
    eprintln!("{report}");
    write_atomic(&out.join("stats.json"), &pretty(&report)?)?;
    Ok(())
}

fn cmd_stats(cfg: &RunConfig) -> Result<()> {
    let ds = cfg.load()?;
    let report = dataset_stats(&ds);
    eprintln!("{report}");
    emit(cfg.out.as_deref(), &pretty(&report)?)
}

#[derive(Serialize)]
struct OrderRow<'a> {
    book: &'a str,
    page: u32,
    order: Vec<&'a str>,
    assignments: BTreeMap<String, manga_speaker::order::Assignment>,
}

fn cmd_order(cfg: &RunConfig, sel: &PageSelector) -> Result<()> {
    let ds = cfg.load()?;
    let mut rows = Vec::new();
    let orders: Vec<_> = select_pages(&ds, sel)?
        .into_iter()
        .map(|p| (p, order_page(p, &cfg.order)))
        .collect();
    for (page, order) in &orders {
        rows.push(OrderRow {
            book: &page.book_title,
            page: page.page_index,
            order: order.ids(),
            assignments: assign_page(page, order).assignments,
        });
    }
    emit(cfg.out.as_deref(), &jsonl(&rows)?)
}

#[derive(Serialize)]
struct PredictRow<'a> {
    book: &'a str,
    page: u32,
    predictor: &'static str,
    text: &'a str,
    speakers: &'a [manga_speaker::predict::Ranked],
    flagged: bool,
}

fn cmd_predict(cfg: &RunConfig, sel: &PageSelector) -> Result<()> {
    let ds = cfg.load()?;
    let pages = select_pages(&ds, sel)?;
    let mut buf = Vec::new();
    for kind in &cfg.predictors {
        let predictor = cfg.predictor(*kind)?;
        for page in &pages {
            let (pred, _) = predict_page(&predictor, page, &cfg.order)
                .with_context(|| format!("{} page {}", page.book_title, page.page_index))?;
            let rows: Vec<PredictRow> = pred
                .rankings
                .iter()
                .map(|(text, speakers)| PredictRow {
                    book: &page.book_title,
                    page: page.page_index,
                    predictor: kind.name(),
                    text,
                    speakers,
                    flagged: pred.flagged.contains(text),
                })
                .collect();
            buf.extend(jsonl(&rows)?);
        }
    }
    emit(cfg.out.as_deref(), &buf)
}

fn cmd_eval(cfg: &RunConfig, k: Option<usize>) -> Result<()> {
    let ds = cfg.load()?;
    let detections = match &cfg.detections {
        Some(p) => Some(Arc::new(
            DetectionSet::load(p).with_context(|| format!("loading detections from {}", p.display()))?,
        )),
        None => None,
    };
    let opts = EvalOptions {
        order: cfg.order,
        criteria: MatchCriteria::new(cfg.mode, cfg.iou)?,
        metric: k.map_or(Metric::NumText, Metric::AtK),
        difficulty: cfg.difficulty,
        detections,
    };
    let mut reports = Vec::new();
    for kind in &cfg.predictors {
        let report = evaluate(&cfg.predictor(*kind)?, &ds, &opts);
        for f in &report.failures {
            warn!("{} page {}: {}", f.book, f.page, f.error);
        }
        reports.push(report);
    }
    eprint!("{}", format_table(&reports));
    emit(cfg.out.as_deref(), &pretty(&reports)?)?;
    let failed: usize = reports.iter().map(|r| r.failures.len()).sum();
    ensure!(failed == 0, "{failed} page evaluations failed");
    Ok(())
}

fn cmd_viz(cfg: &RunConfig, sel: &PageSelector) -> Result<()> {
    let ds = cfg.load()?;
    let out = cfg.out()?;
    let kind = *cfg.predictors.first().context("no predictor")?;
    let predictor = cfg.predictor(kind)?;
    for page in select_pages(&ds, sel)? {
        let (pred, _) = predict_page(&predictor, page, &cfg.order)?;
        let order = order_page(page, &cfg.order);
        let (svg, tally) = render_svg(page, &order, &pred);
        let path = out.join(format!("{}_{:03}.svg", page.book_title, page.page_index));
        write_atomic(&path, svg.as_bytes())?;
        info!("{}: {} correct, {} wrong", path.display(), tally.correct, tally.wrong);
    }
    Ok(())
}

fn parse_scenario(s: &str) -> Result<Scenario> {
    Ok(match s {
        "easy" => Scenario::EasySameFrame,
        "hard" => Scenario::HardNeighborFrame,
        _ => match s.strip_prefix("mixed:") {
            Some(r) => Scenario::Mixed(r.parse().with_context(|| format!("bad mixed ratio {r:?}"))?),
            None => bail!("unknown scenario {s:?}; expected easy, hard or mixed:<ratio>"),
        },
    })
}

fn cmd_synth(cfg: &RunConfig, pages: u32, books: u32, scenario: &str) -> Result<()> {
    let out = cfg.out()?;
    let mut base = cfg.synth.clone();
    base.scenario = parse_scenario(scenario)?;
    base.seed = cfg.seed;
    let mut generated = Vec::new();
    for b in 0..books {
        let conf = SynthConfig { seed: base.seed.wrapping_add(u64::from(b)), ..base.clone() };
        generated.push(gen_book(&conf, &format!("synth{b:03}"), pages)?);
    }
    let ds = Dataset::new(generated);
    for book in &ds.books {
        write_atomic(
            &out.join("annotations").join(format!("{}.xml", book.title)),
            write_book(book).as_bytes(),
        )?;
    }
    let mut buf = Vec::new();
    write_pair_jsonl(&mut buf, &pair_records(&ds))?;
    write_atomic(&out.join("pairs.jsonl"), &buf)?;
    let report = dataset_stats(&ds);
    write_atomic(&out.join("synth_report.json"), &pretty(&report)?)?;
    eprintln!("{report}");
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = RunConfig::resolve(cli.run)?;
    match &cli.command {
        Command::Ingest => cmd_ingest(&cfg),
        Command::Stats => cmd_stats(&cfg),
        Command::Order(sel) => cmd_order(&cfg, sel),
        Command::Predict(sel) => cmd_predict(&cfg, sel),
        Command::Eval { k } => cmd_eval(&cfg, *k),
        Command::Viz(sel) => cmd_viz(&cfg, sel),
        Command::Synth { pages, books, scenario } => cmd_synth(&cfg, *pages, *books, scenario),
    }
}
