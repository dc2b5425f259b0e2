use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::Args;
use serde::Serialize;

use leakaudit::audit::{fingerprint, run_audit, AuditOptions, Fingerprint};
use leakaudit::forest::ForestConfig;
use leakaudit::idleak::{SuiteOptions, VerdictThresholds};
use leakaudit::metrics::{
    aggregate_article_votes, article_gold, article_mapping, evaluate, gold_labels,
    read_predictions, EvalResult, LabelMap, MissingMode, TieRule,
};
use leakaudit::model::{self, Dataset, Manifest};
use leakaudit::snowflake::timestamp_histogram;
use leakaudit::splits::{
    apply_spec, export_split, import_split, presets, time_rebalance, Holdout, Partition,
    Preset, RebalanceOptions, Split, SplitSpec, DAY_MS,
};
use leakaudit::textleak::{
    class_scatter_data, clusters_to_csv, contamination_to_csv, cross_split_contamination,
    find_duplicates, scan_discriminative_tokens, scatter_to_csv, token_stats_to_csv, MatchMode,
};

use crate::{DataArgs, CONFIG_DIR_ENV, EXIT_GATE, EXIT_OK};

fn load_dataset(args: &DataArgs) -> Result<Dataset> {
    let manifest = match &args.manifest {
        Some(p) => Manifest::from_path(p)?,
        None => {
            let sibling = PathBuf::from(format!("{}.manifest.json", args.data.display()));
            if sibling.exists() {
                Manifest::from_path(&sibling)?
            } else {
                Manifest::default()
            }
        }
    };
    model::load(&args.data, &manifest).with_context(|| format!("loading {}", args.data.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    // Wall-clock time stays out of the payload so reruns are byte-identical.
    let meta = serde_json::json!({
        "generated_at": Utc::now().to_rfc3339(),
        "toolkit_version": leakaudit::VERSION,
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
    });
    let meta_path = PathBuf::from(format!("{}.meta.json", path.display()));
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", meta_path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn iso(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .map(|t| t.format("%Y-%m-%d %H:%M:%S UTC").to_string())
        .unwrap_or_else(|| ms.to_string())
}

fn print_fingerprint(fp: &Fingerprint) {
    println!("dataset      {}", fp.name);
    println!("records      {}", fp.n_records);
    if let (Some(a), Some(b)) = (fp.first_timestamp_ms, fp.last_timestamp_ms) {
        println!("time span    {} .. {}", iso(a), iso(b));
    }
    if fp.undecodable_ids > 0 {
        println!("no timestamp {}", fp.undecodable_ids);
    }
    for (l, n) in &fp.label_distribution {
        println!("  {l:<20} {n:>8}");
    }
}

#[derive(Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Digit counts to test.
    #[arg(long = "k", value_delimiter = ',', default_value = "2,3")]
    pub k: Vec<usize>,
    /// Generated splits per k when the dataset has no canonical split.
    #[arg(long, default_value_t = 5)]
    pub n_splits: usize,
    /// Seed for generated splits and the forest.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Canonical split file to use instead of generated splits.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Record field holding a canonical train/dev/test assignment.
    #[arg(long, default_value = "split")]
    pub split_field: String,
    /// Ignore any canonical split and generate stratified 70-10-20 splits.
    #[arg(long)]
    pub generate_splits: bool,
    /// Fail (exit 2) when a median leakage score reaches this value.
    #[arg(long, default_value_t = 0.15)]
    pub fail_over: f64,
    /// Verdict band edges none,mild,moderate.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.15, 0.40])]
    pub thresholds: Vec<f64>,
    /// Trees in the random forest.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Keywords for the per-label count table.
    #[arg(long, value_delimiter = ',')]
    pub keywords: Vec<String>,
    /// Match keywords as substrings instead of whole tokens.
    #[arg(long)]
    pub substring: bool,
    /// Near-duplicate Jaccard threshold over word 3-shingles.
    #[arg(long, default_value_t = 0.8)]
    pub jaccard: f64,
    /// Minimum record count for a token to be scanned.
    #[arg(long, default_value_t = 5)]
    pub min_df: usize,
    /// Full audit bundle as JSON.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    /// Write token stats, duplicate clusters, contamination pairs and the
    /// timestamp histogram as CSV into this directory.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
    /// Also write target-vs-rest scatter data for this label (needs --csv-dir).
    #[arg(long)]
    pub scatter_label: Option<String>,
}

fn canonical_split(ds: &Dataset, args: &AuditArgs) -> Result<Option<Split>> {
    if let Some(path) = &args.split {
        let imported = import_split(path, ds)?;
        if imported.missing_count() > 0 {
            println!(
                "split file lists {} ids not in the dataset; they are ignored",
                imported.missing_count()
            );
        }
        return Ok(Some(imported.split));
    }
    if args.generate_splits || ds.records().iter().any(|r| r.field(&args.split_field).is_none()) {
        return Ok(None);
    }
    let spec = SplitSpec {
        partition_field: Some(args.split_field.clone()),
        ..SplitSpec::default()
    };
    Ok(Some(apply_spec(ds, &spec)?.0))
}

pub fn audit(args: AuditArgs) -> Result<u8> {
    let ds = load_dataset(&args.data)?;
    let canonical = canonical_split(&ds, &args)?;
    if args.thresholds.len() != 3 {
        bail!("--thresholds takes three values: none,mild,moderate");
    }
    let thresholds = VerdictThresholds {
        none: args.thresholds[0],
        mild: args.thresholds[1],
        moderate: args.thresholds[2],
    };
    let opts = AuditOptions {
        suite: SuiteOptions {
            k_list: args.k.clone(),
            n_splits: args.n_splits,
            seed: args.seed,
            forest: ForestConfig {
                n_trees: args.trees,
                seed: args.seed,
                ..ForestConfig::default()
            },
            thresholds,
            ..SuiteOptions::default()
        },
        fail_over: args.fail_over,
        min_df: args.min_df,
        keywords: args.keywords.clone(),
        keyword_mode: if args.substring { MatchMode::Substring } else { MatchMode::Token },
        jaccard_threshold: args.jaccard,
        ..AuditOptions::default()
    };
    let bundle = run_audit(&ds, canonical.as_ref(), &opts)?;
    match &bundle.id_leak.split_source {
        leakaudit::idleak::SplitSource::Canonical => println!("split: canonical"),
        leakaudit::idleak::SplitSource::Generated { n_splits, .. } => {
            println!("split: {n_splits} generated stratified splits")
        }
    }
    print!("{}", bundle.summary());
    if let Some(table) = &bundle.keyword.keyword_table {
        for (kw, row) in table {
            let cells: Vec<String> = row.iter().map(|(l, n)| format!("{l}={n}")).collect();
            println!("keyword {kw:?}: {}", cells.join(" "));
        }
    }
    if let Some(p) = &args.json_out {
        write_json(p, &bundle)?;
    }
    if let Some(dir) = &args.csv_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let stats = scan_discriminative_tokens(&ds, args.min_df);
        write_text(&dir.join("tokens.csv"), &token_stats_to_csv(&stats, ds.label_set().labels()))?;
        let dups = find_duplicates(&ds, args.jaccard)?;
        write_text(&dir.join("duplicates.csv"), &clusters_to_csv(&dups))?;
        let split = match &canonical {
            Some(s) => s.clone(),
            None => leakaudit::idleak::suite_splits(&ds, None, &opts.suite)?.0.remove(0),
        };
        let pairs = cross_split_contamination(&ds, &split, args.jaccard)?;
        write_text(&dir.join("contamination.csv"), &contamination_to_csv(&pairs))?;
        write_text(&dir.join("timestamps.csv"), &timestamp_histogram(&ds, DAY_MS).to_csv())?;
        if let Some(label) = &args.scatter_label {
            let rows = class_scatter_data(&ds, label, args.min_df)?;
            write_text(&dir.join(format!("scatter_{label}.csv")), &scatter_to_csv(&rows))?;
        }
    }
    Ok(if bundle.exit_code() == 0 { EXIT_OK } else { EXIT_GATE })
}

pub fn load_presets() -> Result<Vec<Preset>> {
    if let Ok(dir) = std::env::var(CONFIG_DIR_ENV) {
        let path = Path::new(&dir).join("presets.json");
        if path.exists() {
            return Ok(presets::load(&path)?);
        }
    }
    Ok(presets::builtin())
}

pub fn presets() -> Result<()> {
    for p in load_presets()? {
        println!("{:<14} {}", p.name, p.description);
    }
    Ok(())
}

#[derive(Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Named protocol (see `leakaudit presets`); other flags override it.
    #[arg(long)]
    pub preset: Option<String>,
    /// train,dev,test shares summing to 1.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    /// Shuffle without keeping label proportions.
    #[arg(long)]
    pub no_stratify: bool,
    /// Keep every record of a group (e.g. article_id) in one partition.
    #[arg(long)]
    pub group_by: Option<String>,
    /// Hold out `field=value` as the test set.
    #[arg(long)]
    pub holdout: Option<String>,
    /// Keep only these labels.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    /// Keep only these events.
    #[arg(long, value_delimiter = ',')]
    pub events: Option<Vec<String>>,
    /// Per-label sample sizes, `label=count`.
    #[arg(long, value_delimiter = ',')]
    pub quota: Vec<String>,
    /// Keep only records with at least this many replies.
    #[arg(long)]
    pub min_replies: Option<i64>,
    /// Drop groups whose records disagree on the label.
    #[arg(long)]
    pub exclude_conflicting: bool,
    /// Take partitions from this record field instead of generating them.
    #[arg(long)]
    pub partition_field: Option<String>,
    /// Seed for every random choice; required.
    #[arg(long)]
    pub seed: u64,
    /// Split file to write (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

fn build_spec(args: &SplitArgs) -> Result<(SplitSpec, Option<String>)> {
    let mut spec = match &args.preset {
        Some(name) => presets::find(&load_presets()?, name)?.spec.clone(),
        None => SplitSpec::default(),
    };
    spec.seed = args.seed;
    if let Some(r) = &args.ratios {
        if r.len() != 3 {
            bail!("--ratios takes three values: train,dev,test");
        }
        spec.ratios = [r[0], r[1], r[2]];
    }
    if args.no_stratify {
        spec.stratify = false;
    }
    if args.group_by.is_some() {
        spec.group_by = args.group_by.clone();
    }
    if let Some(h) = &args.holdout {
        let (field, value) = h
            .split_once('=')
            .ok_or_else(|| anyhow!("--holdout expects field=value, got {h:?}"))?;
        spec.holdout = Some(Holdout {
            field: field.into(),
            value: value.into(),
        });
    }
    if args.labels.is_some() {
        spec.label_filter = args.labels.clone();
    }
    if args.events.is_some() {
        spec.events = args.events.clone();
    }
    if !args.quota.is_empty() {
        let mut q = indexmap::IndexMap::new();
        for item in &args.quota {
            let (l, n) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("--quota expects label=count, got {item:?}"))?;
            q.insert(l.to_string(), n.parse().with_context(|| format!("quota {item:?}"))?);
        }
        spec.quotas = Some(q);
    }
    if args.min_replies.is_some() {
        spec.min_reply_count = args.min_replies;
    }
    if args.exclude_conflicting {
        spec.exclude_conflicting_groups = true;
    }
    if args.partition_field.is_some() {
        spec.partition_field = args.partition_field.clone();
    }
    Ok((spec, args.preset.clone()))
}

pub fn split(args: SplitArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let (spec, preset) = build_spec(&args)?;
    let (mut split, used) = apply_spec(&ds, &spec)?;
    split.provenance.preset = preset;
    export_split(&split, &args.out)?;
    let counts = split.label_counts(&used);
    println!("{:<20} {:>8} {:>8} {:>8}", "label", "train", "dev", "test");
    for l in used.label_set().labels() {
        println!(
            "{l:<20} {:>8} {:>8} {:>8}",
            counts[0][l], counts[1][l], counts[2][l]
        );
    }
    println!(
        "{:<20} {:>8} {:>8} {:>8}",
        "total",
        split.train.len(),
        split.dev.len(),
        split.test.len()
    );
    for n in &split.notes {
        println!("note: {n}");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Split file written by `leakaudit split`.
    #[arg(long)]
    pub split: PathBuf,
    /// CSV (`id,label`) or JSONL predictions.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Partition to score.
    #[arg(long, default_value = "test")]
    pub partition: String,
    /// Drop ids without a prediction instead of counting them as wrong.
    #[arg(long)]
    pub exclude_missing: bool,
    /// Also report the F1 of this class alone (binary tasks scored on the
    /// positive class).
    #[arg(long)]
    pub positive: Option<String>,
    /// Evaluation result as JSON.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

fn print_eval(r: &EvalResult) {
    println!("{:<20} {:>9} {:>9} {:>9} {:>8}", "label", "precision", "recall", "f1", "support");
    for (l, m) in &r.per_class {
        println!(
            "{l:<20} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            m.precision, m.recall, m.f1, m.support
        );
    }
    println!("macro F1  {:.4}", r.macro_f1);
    println!("accuracy  {:.4}", r.accuracy);
    println!("evaluated {}", r.n_evaluated);
    if r.n_missing_predictions > 0 {
        println!("missing predictions {}", r.n_missing_predictions);
    }
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let imported = import_split(&args.split, &ds)?;
    let part = Partition::parse(&args.partition)
        .ok_or_else(|| anyhow!("unknown partition {:?}", args.partition))?;
    let pred = read_predictions(&args.predictions)?;
    let gold = gold_labels(&ds, imported.split.part(part));
    let mode = if args.exclude_missing { MissingMode::Exclude } else { MissingMode::Wrong };
    let result = evaluate(&gold, &pred, ds.label_set(), mode)?;
    print_eval(&result);
    if let Some(label) = &args.positive {
        let f1 = result
            .f1(label)
            .ok_or_else(|| anyhow!("--positive label {label:?} is not in the label set"))?;
        println!("positive-class F1 ({label}) {f1:.4}");
    }
    if let Some(p) = &args.json_out {
        write_json(p, &result)?;
    }
    Ok(())
}

#[derive(Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Tweet-level predictions, CSV (`id,label`) or JSONL.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Articles with fewer predicted tweets are left out.
    #[arg(long, default_value_t = 3)]
    pub min_tweets: usize,
    /// Label that wins vote ties it takes part in (default: label-set order).
    #[arg(long)]
    pub prefer: Option<String>,
    /// Article predictions as CSV `article_id,label`.
    #[arg(long)]
    pub out: PathBuf,
    /// Article-level evaluation against the majority gold label.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

pub fn aggregate(args: AggregateArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let pred = read_predictions(&args.predictions)?;
    let mapping = article_mapping(&ds);
    if mapping.is_empty() {
        bail!("no record in {} has an article_id", args.data.data.display());
    }
    let tie = match &args.prefer {
        Some(l) if !ds.label_set().contains(l) => bail!("--prefer label {l:?} is not in the label set"),
        Some(l) => TieRule::Prefer(l.clone()),
        None => TieRule::LabelOrder,
    };
    let articles = aggregate_article_votes(&pred, &mapping, ds.label_set(), args.min_tweets, &tie);
    let mut w = String::from("article_id,label\n");
    for (a, l) in &articles {
        w.push_str(&format!("{a},{l}\n"));
    }
    write_text(&args.out, &w)?;
    println!("{} articles with at least {} predicted tweets", articles.len(), args.min_tweets);
    let all_gold = article_gold(&ds);
    let gold: LabelMap = articles
        .keys()
        .filter_map(|a| all_gold.get(a).map(|g| (a.clone(), g.clone())))
        .collect();
    if !gold.is_empty() {
        let pred: LabelMap = articles.into_iter().collect();
        let result = evaluate(&gold, &pred, ds.label_set(), MissingMode::Wrong)?;
        print_eval(&result);
        if let Some(p) = &args.json_out {
            write_json(p, &result)?;
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct RebalanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Candidate replacement records (same format and labels as the data).
    #[arg(long)]
    pub pool: PathBuf,
    /// Label whose records stay and set the target times.
    #[arg(long)]
    pub anchor_label: String,
    /// Largest accepted time gap: plain milliseconds or a number with
    /// suffix ms, s, m, h or d.
    #[arg(long, default_value = "7d")]
    pub window: String,
    /// Seed for every random choice; required.
    #[arg(long)]
    pub seed: u64,
    /// Digit count for the before/after id-digit check.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Trees in the forest for the before/after check.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Skip the before/after id-digit check.
    #[arg(long)]
    pub no_leak_check: bool,
    /// Rebalanced dataset (.jsonl or .csv).
    #[arg(long)]
    pub out: PathBuf,
    /// Rebalance report as JSON.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

pub fn parse_window(s: &str) -> Result<i64> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: i64 = num.parse().with_context(|| format!("bad window {s:?}"))?;
    let scale = match unit {
        "" | "ms" => 1,
        "s" => 1000,
        "m" => 60_000,
        "h" => 3_600_000,
        "d" => DAY_MS,
        _ => bail!("bad window unit in {s:?}"),
    };
    n.checked_mul(scale).ok_or_else(|| anyhow!("window {s:?} overflows"))
}

pub fn rebalance(args: RebalanceArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let manifest = Manifest::with_labels(ds.label_set().labels().iter().cloned());
    let pool = model::load(&args.pool, &manifest)
        .with_context(|| format!("loading pool {}", args.pool.display()))?;
    let opts = RebalanceOptions {
        window_ms: parse_window(&args.window)?,
        k: args.k,
        forest: ForestConfig {
            n_trees: args.trees,
            seed: args.seed,
            ..ForestConfig::default()
        },
        measure_leakage: !args.no_leak_check,
        ..RebalanceOptions::new(args.anchor_label.clone(), args.seed)
    };
    let (out, report) = time_rebalance(&ds, &pool, &opts)?;
    model::save(&out, &args.out)?;
    println!("replaced {} records, rejected {}", report.n_replaced, report.rejected_ids.len());
    if let Some(m) = report.max_delta_ms {
        println!("largest time gap {:.2} h", m as f64 / 3_600_000.0);
    }
    for (l, d) in &report.hist_distance_before {
        let after = report.hist_distance_after.get(l).copied().unwrap_or(f64::NAN);
        println!("day-histogram distance {l} vs {}: {d:.3} -> {after:.3}", args.anchor_label);
    }
    if let (Some(b), Some(a)) = (&report.leak_before, &report.leak_after) {
        println!(
            "k={} leakage {:.3} ({}) -> {:.3} ({})",
            b.k,
            b.leakage_score,
            b.verdict.name(),
            a.leakage_score,
            a.verdict.name()
        );
    }
    if let Some(p) = &args.report_out {
        write_json(p, &report)?;
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fingerprint as JSON.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    /// Per-label posting-time histogram as CSV.
    #[arg(long)]
    pub histogram_out: Option<PathBuf>,
    /// Histogram bucket width in days.
    #[arg(long, default_value_t = 1)]
    pub bucket_days: i64,
}

pub fn inspect(args: InspectArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let fp = fingerprint(&ds);
    print_fingerprint(&fp);
    if args.bucket_days < 1 {
        bail!("--bucket-days must be at least 1");
    }
    let hist = timestamp_histogram(&ds, args.bucket_days * DAY_MS);
    let labels = ds.label_set().labels();
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i + 1..] {
            if let Some(d) = hist.distance(a, b) {
                println!("posting-time distance {a} vs {b}: {d:.3}");
            }
        }
    }
    if let Some(p) = &args.histogram_out {
        write_text(p, &hist.to_csv())?;
    }
    if let Some(p) = &args.json_out {
        write_json(p, &fp)?;
    }
    Ok(())
}
