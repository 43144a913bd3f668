//! Command-line entry point: run orchestration over the library. Every
//! run that writes artifacts also writes a manifest referencing them, so
//! any result can be reproduced from its manifest's config and seed.

use crate::augment::{augment_image, augment_text, NeighborIndex, Modality, Technique};
use crate::data::{
    load_sessions_jsonl, Catalog, ItemId, Session, StratifyAxis,
};
use crate::embed::{FeatureSpace, TextExtractor};
use crate::error::{Error, Result};
use crate::eval::{evaluate, recommend, stratified_evaluate, write_metrics_csv, MetricsReport};
use crate::rng::{fnv1a64, stream_rng};
use crate::synth::{generate, write_jsonl, SyntheticSpec};
use crate::train::{
    checkpoint, prepare_data_with_features, train, write_loss_log_csv, TrainConfig,
};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

const USAGE: &str = "\
usage: macl <subcommand> [flags]

subcommands:
  synth            generate a synthetic catalog and session log
  ingest           validate a corpus, persist id_map.csv and feature caches
  train            train a model, write checkpoint, logs, and metrics
  evaluate         score a session file against a checkpoint
  recommend        top-k next items for an item prefix
  augment-preview  write one augmented view of an item's asset

run `macl <subcommand> --help` for flags.";

/// Errors that should exit with code 2 (usage) rather than 1 (data).
#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Entry point used by the binary; returns the process exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let args: Vec<String> = args.into_iter().collect();
    match dispatch(&args) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            eprintln!();
            eprintln!("{USAGE}");
            2
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(args: &[String]) -> CliResult<()> {
    let Some(sub) = args.first() else {
        return Err(CliError::Usage("no subcommand given".into()));
    };
    let rest = &args[1..];
    match sub.as_str() {
        "synth" => cmd_synth(rest),
        "ingest" => cmd_ingest(rest),
        "train" => cmd_train(rest),
        "evaluate" => cmd_evaluate(rest),
        "recommend" => cmd_recommend(rest),
        "augment-preview" => cmd_augment_preview(rest),
        "--help" | "-h" | "help" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::Usage(format!("unknown subcommand {other:?}"))),
    }
}

/// Minimal flag parser: `--key value` pairs plus boolean `--flag`s.
struct Flags {
    values: BTreeMap<String, Vec<String>>,
    bools: Vec<String>,
}

impl Flags {
    fn parse(args: &[String], known_values: &[&str], known_bools: &[&str]) -> CliResult<Flags> {
        let mut values: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut bools = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let Some(name) = arg.strip_prefix("--") else {
                return Err(CliError::Usage(format!("unexpected argument {arg:?}")));
            };
            if name == "help" {
                return Err(CliError::Usage(String::new()));
            }
            if known_bools.contains(&name) {
                bools.push(name.to_string());
                i += 1;
            } else if known_values.contains(&name) {
                let Some(value) = args.get(i + 1) else {
                    return Err(CliError::Usage(format!("flag --{name} needs a value")));
                };
                values.entry(name.to_string()).or_default().push(value.clone());
                i += 2;
            } else {
                return Err(CliError::Usage(format!("unknown flag --{name}")));
            }
        }
        Ok(Flags { values, bools })
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).and_then(|v| v.last()).map(|s| s.as_str())
    }

    fn get_all(&self, name: &str) -> &[String] {
        self.values.get(name).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn require(&self, name: &str) -> CliResult<&str> {
        self.get(name)
            .ok_or_else(|| CliError::Usage(format!("missing required flag --{name}")))
    }

    fn has(&self, name: &str) -> bool {
        self.bools.iter().any(|b| b == name)
    }

    fn parse_value<T: std::str::FromStr>(&self, name: &str) -> CliResult<Option<T>> {
        match self.get(name) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::Usage(format!("bad value {raw:?} for --{name}"))
            }),
        }
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(format!("{:016x}", fnv1a64(&std::fs::read(path)?)))
}

fn code_version() -> String {
    let version = env!("CARGO_PKG_VERSION");
    format!("{version}+{:016x}", fnv1a64(version.as_bytes()))
}

/// Every run's provenance record, written beside its outputs.
struct ManifestBuilder {
    command: String,
    config: String,
    seed: u64,
    started: u64,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    fn new(command: &str, config: String, seed: u64) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            seed,
            started: unix_now(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut outputs = BTreeMap::new();
        for p in &self.outputs {
            outputs.insert(p.display().to_string(), file_digest(p)?);
        }
        let manifest = serde_json::json!({
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "code_version": code_version(),
            "started_unix": self.started,
            "finished_unix": unix_now(),
            "input_digests": self.inputs,
            "output_digests": outputs,
        });
        std::fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

// ── synth ────────────────────────────────────────────────────────────

fn cmd_synth(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(
        args,
        &[
            "out", "items", "groups", "sessions", "p-stay", "zipf", "drift", "len-min",
            "len-max", "image-size", "text-len", "modalities", "seed",
        ],
        &[],
    )?;
    let out_dir = PathBuf::from(flags.require("out")?);
    let mut spec = SyntheticSpec::default();
    if let Some(v) = flags.parse_value("items")? {
        spec.n_items = v;
    }
    if let Some(v) = flags.parse_value("groups")? {
        spec.n_groups = v;
    }
    if let Some(v) = flags.parse_value("sessions")? {
        spec.n_sessions = v;
    }
    if let Some(v) = flags.parse_value("p-stay")? {
        spec.p_stay = v;
    }
    if let Some(v) = flags.parse_value("zipf")? {
        spec.zipf_exponent = v;
    }
    if let Some(v) = flags.parse_value("drift")? {
        spec.popularity_drift = v;
    }
    if let Some(v) = flags.parse_value("len-min")? {
        spec.session_len_min = v;
    }
    if let Some(v) = flags.parse_value("len-max")? {
        spec.session_len_max = v;
    }
    if let Some(v) = flags.parse_value("image-size")? {
        spec.image_size = v;
    }
    if let Some(v) = flags.parse_value("text-len")? {
        spec.text_len = v;
    }
    if let Some(raw) = flags.get("modalities") {
        spec.modalities = raw.parse().map_err(CliError::Data)?;
    }
    if let Some(v) = flags.parse_value("seed")? {
        spec.seed = v;
    }

    let corpus = generate(&spec).map_err(CliError::Data)?;
    std::fs::create_dir_all(&out_dir).map_err(Error::from)?;
    let (catalog_path, sessions_path) = write_jsonl(&corpus, &out_dir)?;
    let mut manifest = ManifestBuilder::new(
        "synth",
        format!(
            "items={} groups={} sessions={} p_stay={} zipf={} drift={} len={}..{} image_size={} text_len={}",
            spec.n_items,
            spec.n_groups,
            spec.n_sessions,
            spec.p_stay,
            spec.zipf_exponent,
            spec.popularity_drift,
            spec.session_len_min,
            spec.session_len_max,
            spec.image_size,
            spec.text_len
        ),
        spec.seed,
    );
    manifest.output(&catalog_path);
    manifest.output(&sessions_path);
    manifest.write(&out_dir.join("manifest.json"))?;
    println!(
        "wrote {} items, {} sessions under {}",
        corpus.catalog.len(),
        corpus.sessions.len(),
        out_dir.display()
    );
    Ok(())
}

// ── shared loading helpers ───────────────────────────────────────────

fn load_corpus(flags: &Flags) -> CliResult<(PathBuf, PathBuf, Catalog, Vec<Session>)> {
    let catalog_path = PathBuf::from(flags.require("catalog")?);
    let sessions_path = PathBuf::from(flags.require("sessions")?);
    let catalog = Catalog::load_jsonl(&catalog_path)?;
    let sessions = load_sessions_jsonl(&sessions_path, &catalog)?;
    Ok((catalog_path, sessions_path, catalog, sessions))
}

/// Rebuild the filtered catalog in checkpoint order from the raw catalog
/// plus the persisted id map.
fn catalog_from_id_map(raw: &Catalog, id_map: &[(String, ItemId)]) -> Result<Catalog> {
    let mut parts = Vec::with_capacity(id_map.len());
    for (expected_idx, (ext, idx)) in id_map.iter().enumerate() {
        if *idx as usize != expected_idx {
            return Err(Error::Format(format!(
                "id map is not densely ordered at row {expected_idx} (index {idx})"
            )));
        }
        let item = raw
            .by_external(ext)
            .ok_or_else(|| Error::Lookup(format!("id map item {ext:?} not in catalog")))?;
        parts.push((ext.clone(), item.image.clone(), item.text.clone()));
    }
    Catalog::from_parts(parts)
}

/// Resolve sessions against a filtered catalog: drop unknown items, then
/// drop sessions shorter than 2. Returns (sessions, dropped counts).
fn resessionize(sessions: &[Session], catalog: &Catalog, raw: &Catalog) -> (Vec<Session>, usize) {
    let mut kept = Vec::new();
    let mut dropped = 0usize;
    for s in sessions {
        let items: Vec<ItemId> = s
            .items
            .iter()
            .filter_map(|&old| {
                let ext = &raw.get(old)?.external_id;
                catalog.by_external(ext).map(|i| i.id)
            })
            .collect();
        if items.len() >= 2 {
            kept.push(Session { items, ..s.clone() });
        } else {
            dropped += 1;
        }
    }
    (kept, dropped)
}

fn read_feature_map(path: &str) -> Result<BTreeMap<ItemId, Vec<f64>>> {
    let (_, _, records) = crate::embed::read_features(Path::new(path))?;
    Ok(records.into_iter().collect())
}

// ── ingest ───────────────────────────────────────────────────────────

fn cmd_ingest(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(
        args,
        &["catalog", "sessions", "out", "min-count", "text-native-dim", "seed"],
        &["keep-unpopular"],
    )?;
    let out_dir = PathBuf::from(flags.require("out")?);
    let (catalog_path, sessions_path, catalog, sessions) = load_corpus(&flags)?;
    let min_count: usize = flags.parse_value("min-count")?.unwrap_or(5);
    let keep = flags.has("keep-unpopular");
    let text_native_dim: usize = flags.parse_value("text-native-dim")?.unwrap_or(256);
    let seed: u64 = flags.parse_value("seed")?.unwrap_or(0);

    let (filtered_sessions, filtered_catalog) =
        crate::data::filter_corpus(&sessions, &catalog, min_count, keep)?;
    std::fs::create_dir_all(&out_dir).map_err(Error::from)?;
    let id_map_path = out_dir.join("id_map.csv");
    filtered_catalog.write_id_map(&id_map_path)?;

    // Cache native features for the filtered catalog.
    let text_extractor = TextExtractor::new(text_native_dim, seed);
    let mut image_records = Vec::new();
    let mut text_records = Vec::new();
    for item in filtered_catalog.items() {
        if let Some(img) = &item.image {
            image_records.push((item.id, crate::embed::toy_image_extract(img)?));
        }
        if let Some(txt) = &item.text {
            text_records.push((item.id, text_extractor.extract(txt)?));
        }
    }
    let mut manifest = ManifestBuilder::new(
        "ingest",
        format!("min_count={min_count} keep_unpopular={keep} text_native_dim={text_native_dim}"),
        seed,
    );
    manifest.input(&catalog_path)?;
    manifest.input(&sessions_path)?;
    manifest.output(&id_map_path);
    if !image_records.is_empty() {
        let p = out_dir.join("features_image.bin");
        crate::embed::write_features(
            &p,
            crate::embed::FeatureKind::Image,
            crate::embed::IMAGE_NATIVE_DIM,
            &image_records,
        )?;
        manifest.output(&p);
    }
    if !text_records.is_empty() {
        let p = out_dir.join("features_text.bin");
        crate::embed::write_features(
            &p,
            crate::embed::FeatureKind::Text,
            text_native_dim,
            &text_records,
        )?;
        manifest.output(&p);
    }
    manifest.write(&out_dir.join("manifest.json"))?;
    println!(
        "ingested {} items, {} sessions ({} image features, {} text features)",
        filtered_catalog.len(),
        filtered_sessions.len(),
        image_records.len(),
        text_records.len()
    );
    Ok(())
}

// ── train ────────────────────────────────────────────────────────────

fn cmd_train(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(
        args,
        &[
            "catalog", "sessions", "out", "config", "seed", "set", "image-features",
            "text-features",
        ],
        &["no-item-cl", "no-sess-cl", "no-adaptive", "legacy-aug"],
    )?;
    let out_dir = PathBuf::from(flags.require("out")?);
    let (catalog_path, sessions_path, catalog, sessions) = load_corpus(&flags)?;

    let mut cfg = match flags.get("config") {
        Some(p) => TrainConfig::load(Path::new(p))?,
        None => TrainConfig::default(),
    };
    for kv in flags.get_all("set") {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--set expects key=value, got {kv:?}"))
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = flags.parse_value("seed")? {
        cfg.seed = seed;
    }
    cfg.no_item_cl |= flags.has("no-item-cl");
    cfg.no_sess_cl |= flags.has("no-sess-cl");
    cfg.no_adaptive |= flags.has("no-adaptive");
    cfg.legacy_aug |= flags.has("legacy-aug");
    cfg.validate()?;

    let imported_image = match flags.get("image-features") {
        Some(p) => Some(read_feature_map(p)?),
        None => None,
    };
    let imported_text = match flags.get("text-features") {
        Some(p) => Some(read_feature_map(p)?),
        None => None,
    };

    let data = prepare_data_with_features(
        &catalog,
        &sessions,
        &cfg,
        imported_image.as_ref(),
        imported_text.as_ref(),
    )?;
    let output = train(&cfg, &data)?;

    std::fs::create_dir_all(&out_dir).map_err(Error::from)?;
    let id_map_path = out_dir.join("id_map.csv");
    data.catalog.write_id_map(&id_map_path)?;
    let digest = fnv1a64(&std::fs::read(&id_map_path).map_err(Error::from)?);

    let ckpt_path = out_dir.join("checkpoint.bin");
    checkpoint::save(
        &ckpt_path,
        &output.model,
        &cfg,
        output.best_epoch as u32,
        digest,
        data.fspace.image.as_ref().map(|s| &s.projector),
        data.fspace.text.as_ref().map(|s| &s.projector),
        &data.fspace.text_extractor,
    )?;

    let loss_log_path = out_dir.join("loss_log.csv");
    write_loss_log_csv(&loss_log_path, &output.loss_log)?;

    let val = evaluate(
        &output.model,
        &data.catalog,
        &data.fspace,
        &data.split.validation,
        &cfg.k_list,
    )?;
    let test = evaluate(
        &output.model,
        &data.catalog,
        &data.fspace,
        &data.split.test,
        &cfg.k_list,
    )?;
    let metrics_path = out_dir.join("metrics.csv");
    write_metrics_csv(
        &metrics_path,
        &[
            ("validation".to_string(), "all".to_string(), val.clone()),
            ("test".to_string(), "all".to_string(), test.clone()),
        ],
    )?;

    let mut manifest = ManifestBuilder::new("train", cfg.to_key_values(), cfg.seed);
    manifest.input(&catalog_path)?;
    manifest.input(&sessions_path)?;
    manifest.output(&id_map_path);
    manifest.output(&ckpt_path);
    manifest.output(&loss_log_path);
    manifest.output(&metrics_path);
    manifest.write(&out_dir.join("manifest.json"))?;

    for (epoch, prec) in output.val_history.iter().enumerate() {
        println!("epoch {epoch}: validation Prec@{} = {prec:.4}", output.selection_k);
    }
    println!(
        "best epoch {} (validation Prec@{} = {:.4})",
        output.best_epoch, output.selection_k, output.best_val_precision
    );
    print_report("test", &test);
    Ok(())
}

fn print_report(split: &str, report: &MetricsReport) {
    for (i, &k) in report.k_list.iter().enumerate() {
        println!(
            "{split}: Prec@{k} = {:.4}  MRR@{k} = {:.4}  (n = {})",
            report.precision[i], report.mrr[i], report.count
        );
    }
}

// ── evaluate ─────────────────────────────────────────────────────────

fn load_checkpoint_world(
    flags: &Flags,
) -> CliResult<(checkpoint::Checkpoint, Catalog, Catalog, FeatureSpace)> {
    let ckpt_path = PathBuf::from(flags.require("checkpoint")?);
    let id_map_path = PathBuf::from(flags.require("id-map")?);
    let catalog_path = PathBuf::from(flags.require("catalog")?);
    let ck = checkpoint::load(&ckpt_path)?;
    let digest = fnv1a64(&std::fs::read(&id_map_path).map_err(Error::from)?);
    ck.verify_id_map_digest(digest)?;
    let raw = Catalog::load_jsonl(&catalog_path)?;
    let id_map = Catalog::read_id_map(&id_map_path)?;
    let catalog = catalog_from_id_map(&raw, &id_map)?;
    if catalog.len() != ck.n_items as usize {
        return Err(CliError::Data(Error::IncompatibleCheckpoint(format!(
            "checkpoint was trained over {} items, id map lists {}",
            ck.n_items,
            catalog.len()
        ))));
    }
    let fspace = FeatureSpace::with_projectors(
        &catalog,
        ck.config.d,
        TextExtractor::new(ck.text_extractor_dim as usize, ck.text_extractor_seed),
        ck.image_projector.clone(),
        ck.text_projector.clone(),
        None,
        None,
    )?;
    Ok((ck, raw, catalog, fspace))
}

fn cmd_evaluate(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(
        args,
        &["checkpoint", "catalog", "sessions", "id-map", "k", "stratify", "boundaries", "out"],
        &[],
    )?;
    let (ck, raw, catalog, fspace) = load_checkpoint_world(&flags)?;
    let model = ck.restore_model()?;
    let sessions_path = PathBuf::from(flags.require("sessions")?);
    let raw_sessions = load_sessions_jsonl(&sessions_path, &raw)?;
    let (sessions, dropped) = resessionize(&raw_sessions, &catalog, &raw);
    if dropped > 0 {
        eprintln!("note: {dropped} sessions dropped (items outside the trained catalog)");
    }

    let k_list: Vec<usize> = match flags.get("k") {
        None => ck.config.k_list.clone(),
        Some(raw_k) => raw_k
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad k value {t:?}")))
            })
            .collect::<CliResult<_>>()?,
    };

    let mut rows: Vec<(String, String, MetricsReport)> = Vec::new();
    let overall = evaluate(&model, &catalog, &fspace, &sessions, &k_list)?;
    print_report("all", &overall);
    rows.push(("evaluate".to_string(), "all".to_string(), overall));

    if let Some(axis_raw) = flags.get("stratify") {
        let axis: StratifyAxis = axis_raw.parse()?;
        let boundaries: Vec<u64> = flags
            .require("boundaries")?
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad boundary {t:?}")))
            })
            .collect::<CliResult<_>>()?;
        // Popularity strata need training counts: recompute from the
        // trained split deterministically is impossible here, so use the
        // whole provided session file as the frequency frame.
        let counts = crate::data::item_counts(&sessions);
        let strata = stratified_evaluate(
            &model, &catalog, &fspace, &sessions, axis, &boundaries, &counts, &k_list,
        )?;
        for (stratum, report) in strata {
            match report {
                Some(r) => {
                    print_report(&stratum.label, &r);
                    rows.push(("evaluate".to_string(), stratum.label.clone(), r));
                }
                None => println!("{}: empty", stratum.label),
            }
        }
    }

    if let Some(out) = flags.get("out") {
        write_metrics_csv(Path::new(out), &rows)?;
    }
    Ok(())
}

// ── recommend ────────────────────────────────────────────────────────

fn cmd_recommend(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(
        args,
        &["checkpoint", "catalog", "id-map", "items", "k"],
        &["exclude-seen"],
    )?;
    let (ck, _raw, catalog, fspace) = load_checkpoint_world(&flags)?;
    let model = ck.restore_model()?;
    let k: usize = flags.parse_value("k")?.unwrap_or(10);
    let raw_items = flags.require("items")?;
    let mut prefix = Vec::new();
    for ext in raw_items.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let item = catalog
            .by_external(ext)
            .ok_or_else(|| Error::Lookup(format!("unknown item {ext:?} in prefix")))?;
        prefix.push(item.id);
    }
    let ranked = recommend(&model, &catalog, &fspace, &prefix, k, flags.has("exclude-seen"))?;
    println!("rank,item_id,score");
    for (rank, (item, score)) in ranked.iter().enumerate() {
        let ext = &catalog.get(*item).expect("ranked item resolves").external_id;
        println!("{},{ext},{score:.6}", rank + 1);
    }
    Ok(())
}

// ── augment-preview ──────────────────────────────────────────────────

fn cmd_augment_preview(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(
        args,
        &["catalog", "item", "technique", "seed", "out"],
        &[],
    )?;
    let catalog_path = PathBuf::from(flags.require("catalog")?);
    let catalog = Catalog::load_jsonl(&catalog_path)?;
    let ext = flags.require("item")?;
    let item = catalog
        .by_external(ext)
        .ok_or_else(|| Error::Lookup(format!("unknown item {ext:?}")))?;
    let technique: Technique = flags.require("technique")?.parse()?;
    let seed: u64 = flags.parse_value("seed")?.unwrap_or(0);
    let out_dir = PathBuf::from(flags.require("out")?);
    std::fs::create_dir_all(&out_dir).map_err(Error::from)?;

    let params = crate::augment::AugmentParams::default();
    let mut rng = stream_rng(seed, "augment-preview", &[item.id as u64]);
    let mut manifest = ManifestBuilder::new(
        "augment-preview",
        format!("item={ext} technique={technique}"),
        seed,
    );
    manifest.input(&catalog_path)?;
    match technique.modality() {
        Modality::Image => {
            let img = item
                .image
                .as_ref()
                .ok_or(Error::ModalityAbsent { item: item.id, modality: "image" })?;
            let view = augment_image(img, technique, &params, &mut rng)?;
            let orig = out_dir.join(format!("item_{ext}_original.{}", img.pnm_extension()));
            let aug =
                out_dir.join(format!("item_{ext}_{technique}.{}", view.pnm_extension()));
            img.write_pnm(&orig)?;
            view.write_pnm(&aug)?;
            manifest.output(&orig);
            manifest.output(&aug);
            println!("wrote {} and {}", orig.display(), aug.display());
        }
        Modality::Text => {
            let txt = item
                .text
                .as_ref()
                .ok_or(Error::ModalityAbsent { item: item.id, modality: "text" })?;
            let extractor = TextExtractor::new(256, seed);
            let neighbors =
                NeighborIndex::build(&catalog.vocabulary(), &extractor, params.neighbor_k);
            let view = augment_text(txt, technique, &params, &neighbors, &mut rng)?;
            let orig = out_dir.join(format!("item_{ext}_original.txt"));
            let aug = out_dir.join(format!("item_{ext}_{technique}.txt"));
            std::fs::write(&orig, txt.to_line() + "\n").map_err(Error::from)?;
            std::fs::write(&aug, view.to_line() + "\n").map_err(Error::from)?;
            manifest.output(&orig);
            manifest.output(&aug);
            println!("wrote {} and {}", orig.display(), aug.display());
        }
    }
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(())
}
