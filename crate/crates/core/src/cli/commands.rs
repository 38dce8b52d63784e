use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{
    BuildVocabArgs, CliError, Command, EmbedArgs, EvalCompatArgs, EvalFitbArgs, GenSyntheticArgs, GradCheckArgs,
    ScoreArgs, TrainArgs,
};
use crate::data::{
    attach_negatives, build_fitb, build_vocabulary, gen_synthetic, load_fitb, load_manifest, nearest_centroid_accuracy,
    read_features, write_fitb, FeatureStore, ItemResolver, Label, Manifest, Outfit, SyntheticConfig, Vocabulary,
    DEFAULT_MAX_ITEMS,
};
use crate::eval::{eval_compat, eval_fitb, export_embeddings, pca2d, style_distances, write_coordinates};
use crate::model::ModelConfig;
use crate::seed;
use crate::train::{grad_check, grad_check_config, load_checkpoint, save_checkpoint, train, Checkpoint, TrainConfig};

pub(super) fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let name = command.name();
    match command {
        Command::GenSynthetic(a) => gen(name, a, out),
        Command::BuildVocab(a) => vocab(name, a, out),
        Command::Train(a) => train_cmd(name, a, out),
        Command::EvalCompat(a) => compat(name, a, out),
        Command::EvalFitb(a) => fitb(name, a, out),
        Command::Score(a) => score(name, a, out),
        Command::Embed(a) => embed(name, a, out),
        Command::GradCheck(a) => check(name, a, out),
    }
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError::Invalid(message.into())
}

fn io_failure(path: &Path, e: std::io::Error) -> CliError {
    CliError::Invalid(format!("{}: {e}", path.display()))
}

/// Fails before any work if an input is missing.
fn require_inputs(paths: &[&Path]) -> Result<(), CliError> {
    for p in paths {
        if !p.is_file() {
            return Err(invalid(format!("input file {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

/// `run_config.toml`: the fully resolved flags of this run.
fn write_run_config(dir: &Path, name: &str, args: &impl Serialize) -> Result<(), CliError> {
    let mut table = toml::Table::try_from(args).map_err(|e| CliError::Internal(e.to_string()))?;
    table.insert("command".into(), toml::Value::String(name.into()));
    let text = toml::to_string(&table).map_err(|e| CliError::Internal(e.to_string()))?;
    let path = dir.join("run_config.toml");
    fs::write(&path, text).map_err(|e| io_failure(&path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    let line = serde_json::to_string(value).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out, "{line}").map_err(|e| CliError::Internal(e.to_string()))
}

fn load_checked_features(path: &Path, model: &ModelConfig) -> Result<FeatureStore, CliError> {
    let store = read_features(path)?;
    if store.dim() != model.feature_dim {
        return Err(invalid(format!(
            "{}: feature dimension {} but the model expects {}",
            path.display(),
            store.dim(),
            model.feature_dim
        )));
    }
    Ok(store)
}

fn with_negatives(outfits: Vec<Outfit>, global: u64, split: &str) -> Result<Vec<Outfit>, CliError> {
    let positives: Vec<Outfit> = outfits.into_iter().filter(|o| o.label == Label::Compatible).collect();
    let mut rng = seed::rng(global, &format!("{}.{split}", seed::NEGATIVES));
    Ok(attach_negatives(positives, &mut rng)?)
}

#[derive(Serialize)]
struct SyntheticReport {
    items: usize,
    train_outfits: usize,
    valid_outfits: usize,
    test_outfits: usize,
    effective_max_size: usize,
    nearest_centroid_accuracy: f64,
    fitb_queries: usize,
    fitb_skipped: usize,
}

fn gen(name: &str, a: GenSyntheticArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = SyntheticConfig {
        n_styles: a.styles,
        feature_dim: a.feature_dim,
        n_categories: a.categories,
        sigma: a.sigma,
        min_size: a.min_size,
        max_size: a.max_size,
        n_train: a.train_outfits,
        n_valid: a.valid_outfits,
        n_test: a.test_outfits,
        seed: a.seed,
    };
    config.validate()?;
    prepare_out(&a.out)?;
    let data = gen_synthetic(&config)?;
    data.write_dir(&a.out)?;
    let fitb = build_fitb(&data.test, &data.catalog, &mut seed::rng(a.seed, seed::FITB));
    write_fitb(a.out.join("test_fitb.jsonl"), &fitb.queries)?;
    let report = SyntheticReport {
        items: data.store.len(),
        train_outfits: data.train.len(),
        valid_outfits: data.valid.len(),
        test_outfits: data.test.len(),
        effective_max_size: config.effective_max_size(),
        nearest_centroid_accuracy: nearest_centroid_accuracy(&data, &data.test),
        fitb_queries: fitb.queries.len(),
        fitb_skipped: fitb.skipped.len(),
    };
    write_json(&a.out.join("synthetic_report.json"), &report)?;
    write_run_config(&a.out, name, &a)?;
    emit(out, &report)
}

fn vocab(name: &str, a: BuildVocabArgs, out: &mut dyn Write) -> Result<(), CliError> {
    require_inputs(&[&a.manifest])?;
    prepare_out(&a.out)?;
    let manifest = load_manifest(&a.manifest, DEFAULT_MAX_ITEMS)?;
    let docs: Vec<&[String]> = manifest.items.values().filter_map(|m| m.tokens.as_deref()).collect();
    let vocab = build_vocabulary(docs, a.max_size, a.min_count);
    if vocab.is_empty() {
        return Err(invalid(format!(
            "{}: no token occurs at least {} time(s)",
            a.manifest.display(),
            a.min_count
        )));
    }
    vocab.save(a.out.join("vocab.txt"))?;
    write_run_config(&a.out, name, &a)?;
    emit(out, &serde_json::json!({ "vocab_size": vocab.len() }))
}

fn merged_catalog(manifests: &[&Manifest]) -> crate::data::ItemCatalog {
    let mut catalog = crate::data::ItemCatalog::new();
    for m in manifests {
        for (id, meta) in &m.items {
            catalog.entry(id.clone()).or_insert_with(|| meta.clone());
        }
    }
    catalog
}

fn train_cmd(name: &str, a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut inputs = vec![a.features.as_path(), a.train.as_path(), a.valid.as_path()];
    if let Some(v) = &a.vocab {
        inputs.push(v);
    }
    require_inputs(&inputs)?;
    let train_config = TrainConfig {
        learning_rate: a.optim.lr,
        batch_size: a.optim.batch_size,
        beta1: a.optim.beta1,
        beta2: a.optim.beta2,
        eps_adam: a.optim.eps_adam,
        max_epochs: a.optim.max_epochs,
        patience: a.optim.patience,
        seed: a.seed,
    };
    train_config.validate()?;
    prepare_out(&a.out)?;
    write_run_config(&a.out, name, &a)?;

    let store = read_features(&a.features)?;
    let vocab = a.vocab.as_ref().map(Vocabulary::load).transpose()?;
    let mut model = ModelConfig {
        projection_dim: a.model.projection_dim,
        g_layers: a.model.g_layers.0.clone(),
        f_layers: a.model.f_layers.0.clone(),
        dropout_rate: a.model.dropout,
        text_projection_dim: a.model.text_projection_dim,
        ..ModelConfig::new(store.dim())
    };
    if let Some(v) = &vocab {
        model = model.with_vse(v.len());
    }
    model.validate()?;

    let train_m = load_manifest(&a.train, DEFAULT_MAX_ITEMS)?;
    let valid_m = load_manifest(&a.valid, DEFAULT_MAX_ITEMS)?;
    let catalog = merged_catalog(&[&train_m, &valid_m]);
    let (mut train_outfits, mut valid_outfits) = (train_m.outfits, valid_m.outfits);
    if a.sample_negatives {
        train_outfits = with_negatives(train_outfits, a.seed, "train")?;
        valid_outfits = with_negatives(valid_outfits, a.seed, "valid")?;
    }
    let resolver = ItemResolver::new(&store, &catalog, vocab.as_ref());
    let train_set = resolver.examples::<f32>(&train_outfits)?;
    let valid_set = resolver.examples::<f32>(&valid_outfits)?;

    let metrics_path = a.out.join("metrics.jsonl");
    let mut metrics = fs::File::create(&metrics_path).map_err(|e| io_failure(&metrics_path, e))?;
    let mut log_failure = None;
    let (params, report) = train(model, &train_set, &valid_set, &train_config, |m| {
        log::info!(
            "epoch {}: train loss {:.5}, valid loss {:.5}, valid AUC {:.4}",
            m.epoch,
            m.train_loss,
            m.valid_loss,
            m.valid_auc
        );
        let line = serde_json::to_string(m).expect("metrics serialise");
        if let Err(e) = writeln!(metrics, "{line}").and_then(|_| writeln!(out, "{line}")) {
            log_failure.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_failure {
        return Err(io_failure(&metrics_path, e));
    }
    save_checkpoint(&params, &train_config, vocab.as_ref(), a.out.join("model.frnc"))?;
    write_json(&a.out.join("train_report.json"), &report)?;
    emit(
        out,
        &serde_json::json!({
            "stop_epoch": report.stop_epoch,
            "best_epoch": report.best_epoch,
            "best_valid_loss": report.valid_loss[report.best_epoch - 1],
            "best_valid_auc": report.valid_auc[report.best_epoch - 1],
        }),
    )
}

fn open_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Ok(load_checkpoint(path)?)
}

fn compat(name: &str, a: EvalCompatArgs, out: &mut dyn Write) -> Result<(), CliError> {
    require_inputs(&[&a.checkpoint, &a.features, &a.manifest])?;
    prepare_out(&a.out)?;
    write_run_config(&a.out, name, &a)?;
    let ck = open_checkpoint(&a.checkpoint)?;
    let store = load_checked_features(&a.features, ck.params.config())?;
    let manifest = load_manifest(&a.manifest, DEFAULT_MAX_ITEMS)?;
    let mut outfits = manifest.outfits;
    if a.sample_negatives {
        outfits = with_negatives(outfits, a.seed, "eval")?;
    }
    let resolver = ItemResolver::new(&store, &manifest.items, ck.vocab.as_ref());
    let examples = resolver.examples::<f32>(&outfits)?;
    let report = eval_compat(&ck.params, &examples)?;
    write_json(&a.out.join("eval_report.json"), &report)?;
    emit(out, &report)
}

fn fitb(name: &str, a: EvalFitbArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let source = a
        .queries
        .as_ref()
        .or(a.manifest.as_ref())
        .expect("clap enforces one source");
    require_inputs(&[&a.checkpoint, &a.features, source])?;
    prepare_out(&a.out)?;
    write_run_config(&a.out, name, &a)?;
    let ck = open_checkpoint(&a.checkpoint)?;
    let store = load_checked_features(&a.features, ck.params.config())?;
    let (queries, catalog) = match (&a.queries, &a.manifest) {
        (Some(q), _) => (load_fitb(q)?, Default::default()),
        (None, Some(m)) => {
            let manifest = load_manifest(m, DEFAULT_MAX_ITEMS)?;
            let built = build_fitb(&manifest.outfits, &manifest.items, &mut seed::rng(a.seed, seed::FITB));
            log::info!("built {} queries, skipped {}", built.queries.len(), built.skipped.len());
            write_fitb(a.out.join("fitb_queries.jsonl"), &built.queries)?;
            (built.queries, manifest.items)
        }
        (None, None) => unreachable!("clap enforces one source"),
    };
    if queries.is_empty() {
        return Err(invalid("no fill-in-the-blank queries to evaluate"));
    }
    let resolver = ItemResolver::new(&store, &catalog, ck.vocab.as_ref());
    let report = eval_fitb(&ck.params, &queries, &resolver)?;
    write_json(&a.out.join("fitb_report.json"), &report)?;
    emit(
        out,
        &serde_json::json!({
            "accuracy": report.accuracy,
            "n_queries": report.n_queries,
            "n_correct": report.n_correct,
            "n_ties": report.n_ties,
            "n_failed": report.failed.len(),
        }),
    )
}

fn score(name: &str, a: ScoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    require_inputs(&[&a.checkpoint, &a.features, &a.manifest])?;
    if let Some(dir) = &a.out {
        prepare_out(dir)?;
        write_run_config(dir, name, &a)?;
    }
    let ck = open_checkpoint(&a.checkpoint)?;
    let store = load_checked_features(&a.features, ck.params.config())?;
    let manifest = load_manifest(&a.manifest, DEFAULT_MAX_ITEMS)?;
    let resolver = ItemResolver::new(&store, &manifest.items, ck.vocab.as_ref());
    let examples = resolver.examples::<f32>(&manifest.outfits)?;
    let scores = crate::eval::score_examples(&ck.params, &examples)?;
    let mut table = String::from("outfit_id\tm_s\n");
    for (e, s) in examples.iter().zip(&scores) {
        table.push_str(&format!("{}\t{}\n", e.outfit_id, s.m_s));
    }
    if let Some(dir) = &a.out {
        let path = dir.join("scores.tsv");
        fs::write(&path, &table).map_err(|e| io_failure(&path, e))?;
    }
    out.write_all(table.as_bytes())
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn load_styles(path: &Path) -> Result<BTreeMap<String, usize>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let mut styles = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let mut parts = line.split('\t');
        let (Some(id), Some(style), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(invalid(format!(
                "{} line {}: expected item_id<TAB>style",
                path.display(),
                i + 1
            )));
        };
        let style = style
            .trim()
            .parse()
            .map_err(|e| invalid(format!("{} line {}: {e}", path.display(), i + 1)))?;
        styles.insert(id.to_string(), style);
    }
    Ok(styles)
}

fn embed(name: &str, a: EmbedArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut inputs = vec![a.checkpoint.as_path(), a.features.as_path()];
    inputs.extend(a.manifest.as_deref());
    inputs.extend(a.styles.as_deref());
    require_inputs(&inputs)?;
    prepare_out(&a.out)?;
    write_run_config(&a.out, name, &a)?;
    let ck = open_checkpoint(&a.checkpoint)?;
    let store = load_checked_features(&a.features, ck.params.config())?;
    let ids: Vec<String> = match &a.manifest {
        Some(m) => {
            let manifest = load_manifest(m, DEFAULT_MAX_ITEMS)?;
            let mut seen = HashSet::new();
            manifest
                .outfits
                .iter()
                .flat_map(|o| o.item_ids.iter())
                .filter(|id| seen.insert(id.as_str()))
                .cloned()
                .collect()
        }
        None => store.ids().to_vec(),
    };
    // embeddings depend on features only
    let catalog = Default::default();
    let items = ItemResolver::new(&store, &catalog, None).items::<f32, _>(&ids)?;
    let v = export_embeddings(&ck.params, &items, a.out.join("embeddings.frnf"))?;
    let vectors: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| {
            v.get(id)
                .expect("just embedded")
                .iter()
                .map(|x| f64::from(*x))
                .collect()
        })
        .collect();
    let pca = pca2d(&vectors)?;
    write_coordinates(a.out.join("coords.tsv"), &ids, &pca)?;
    let distances = match &a.styles {
        Some(path) => Some(style_distances(&v, &load_styles(path)?)),
        None => None,
    };
    let report = serde_json::json!({
        "items": ids.len(),
        "dim": v.dim(),
        "pca_variances": pca.variances,
        "pca_rank_deficient": pca.rank_deficient,
        "style_distances": distances,
    });
    write_json(&a.out.join("embed_report.json"), &report)?;
    emit(out, &report)
}

fn check(name: &str, a: GradCheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.items < 2 {
        return Err(invalid("an outfit needs at least 2 items"));
    }
    if let Some(dir) = &a.out {
        prepare_out(dir)?;
        write_run_config(dir, name, &a)?;
    }
    let model = if a.vse {
        ModelConfig {
            text_projection_dim: 4,
            ..grad_check_config().with_vse(6)
        }
    } else {
        grad_check_config()
    };
    let report = grad_check(model, a.items, a.seed)?;
    let summary = serde_json::json!({
        "checked": report.checked,
        "max_rel_error": report.max_rel_error,
        "worst_tensor": report.worst,
        "tolerance": report.tolerance,
        "failures": report.failures.len(),
        "passed": report.passed(),
    });
    if let Some(dir) = &a.out {
        write_json(&dir.join("grad_check.json"), &summary)?;
    }
    emit(out, &summary)?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Internal(format!(
            "{} gradient(s) disagree with finite differences (max relative error {:e})",
            report.failures.len(),
            report.max_rel_error
        )))
    }
}
