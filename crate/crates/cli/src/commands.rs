//! The five pipeline verbs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tcav_core::cav::{save_cav_store, Cav};
use tcav_core::concepts::{
    export_images, generate_color_concept, generate_disease_pattern_concept,
    generate_healthy_leaves, generate_leaf_dataset, generate_lesioned_leaves,
    generate_texture_concept, load_image_directory, split_dataset, ConceptSet, NegativePool,
    Provenance,
};
use tcav_core::io::{write_atomic, ActivationDump};
use tcav_core::model::{
    evaluate, load_checkpoint, reference_model, save_checkpoint, train_classifier, EpochStats,
};
use tcav_core::stats::{classification_metrics, MetricsReport};
use tcav_core::tcav::run_experiment;
use tcav_core::{Dataset, Error, ImageSample, Model32, Result};

use crate::config::{ConceptKind, DatasetSource, PoolKind, ReportConfig, Resolved, SplitChoice};
use crate::report;
use crate::results::ResultsDocument;

fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Directories written by `generate-concepts`, with image counts.
pub fn generate_concepts(r: &Resolved) -> Result<Vec<(PathBuf, usize)>> {
    let size = r.image_size();
    let mut written = Vec::new();
    for spec in &r.config.concepts {
        let seed = r.concept_seed(&spec.name);
        let set = match spec.kind {
            ConceptKind::Color => {
                generate_color_concept(spec.name.parse()?, spec.count, size, seed)?
            }
            ConceptKind::Texture => {
                generate_texture_concept(spec.name.parse()?, spec.count, size, seed)?
            }
            ConceptKind::DiseasePattern => {
                let set = generate_disease_pattern_concept(spec.count, size, seed)?;
                ConceptSet::new(&spec.name, set.images, Provenance::SyntheticPattern)?
            }
            ConceptKind::Directory => continue,
        };
        set.export(&r.concepts_dir)?;
        written.push((r.concepts_dir.join(&spec.name), set.len()));
    }
    for pool in &r.config.pools {
        let seed = r.pool_seed(&pool.name);
        let images: Vec<ImageSample> = match pool.kind {
            PoolKind::GrayscaleLesioned => generate_lesioned_leaves(pool.count, size, seed)?
                .into_iter()
                .map(|l| l.image.to_grayscale())
                .collect(),
            PoolKind::Healthy => generate_healthy_leaves(pool.count, size, seed)?,
            PoolKind::Directory => continue,
        };
        let dir = r.pools_dir.join(&pool.name);
        export_images(&images, &dir)?;
        written.push((dir, images.len()));
    }
    if r.config.dataset.source == DatasetSource::SyntheticLeaves {
        let data = generate_leaf_dataset(r.config.dataset.per_class, size, r.dataset_seed())?;
        for (k, name) in data.class_names.iter().enumerate() {
            let dir = r.data_dir.join(name);
            let images = data.of_class(k);
            export_images(&images, &dir)?;
            written.push((dir, images.len()));
        }
    }
    Ok(written)
}

pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub all: Dataset,
}

impl Splits {
    pub fn choose(&self, which: SplitChoice) -> &Dataset {
        match which {
            SplitChoice::Train => &self.train,
            SplitChoice::Val => &self.val,
            SplitChoice::Test => &self.test,
            SplitChoice::All => &self.all,
        }
    }
}

pub fn load_splits(r: &Resolved) -> Result<Splits> {
    let all = load_image_directory(&r.data_dir, true)?;
    let (train, val, test) = split_dataset(&all, r.config.dataset.split, r.split_seed())?;
    Ok(Splits {
        train,
        val,
        test,
        all,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainSummary {
    pub class_names: Vec<String>,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub test_loss: f64,
    pub metrics: MetricsReport,
    pub trace: Vec<EpochStats>,
}

/// Trains the reference model and writes the checkpoint plus
/// `metrics.json`. Nothing is written if training fails.
pub fn train(r: &Resolved) -> Result<TrainSummary> {
    let splits = load_splits(r)?;
    let first = &splits.all.samples[0];
    let class_count = splits.all.class_count();
    if class_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "training needs at least two classes, found {class_count}"
        )));
    }
    let init = reference_model::<f32>(
        first.height(),
        first.width(),
        first.channels(),
        class_count,
        r.init_seed(),
    )?;
    let (model, trace) = train_classifier(
        &init,
        &splits.train.samples,
        &splits.val.samples,
        &r.train_config(),
    )?;
    if trace.iter().any(|e| !e.train_loss.is_finite()) {
        return Err(Error::NonFinite("training loss".into()));
    }
    let predictions = splits
        .test
        .samples
        .iter()
        .map(|x| model.predict(x).map(|p| p.class))
        .collect::<Result<Vec<_>>>()?;
    let metrics = classification_metrics(&predictions, &splits.test.labels(), class_count)?;
    let (test_loss, _) = evaluate(&model, &splits.test.samples)?;
    let summary = TrainSummary {
        class_names: splits.all.class_names.clone(),
        train_size: splits.train.len(),
        val_size: splits.val.len(),
        test_size: splits.test.len(),
        test_loss,
        metrics,
        trace,
    };
    save_checkpoint(&model, &r.checkpoint)?;
    write_atomic(r.output_dir.join("metrics.json"), &to_json(&summary)?)?;
    Ok(summary)
}

fn check_layers(model: &Model32, layers: &[String]) -> Result<()> {
    let unknown: Vec<&str> = layers
        .iter()
        .filter(|l| model.layer_index(l).is_err())
        .map(String::as_str)
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "unknown layers: {}; available: {}",
            unknown.join(", "),
            model.layer_names().join(", ")
        )))
    }
}

/// Writes `<out>/activations/<layer>.actv` for each layer.
pub fn dump_activations(r: &Resolved, layers: Option<Vec<String>>) -> Result<Vec<PathBuf>> {
    let model: Model32 = load_checkpoint(&r.checkpoint)?;
    let layers = layers
        .filter(|l| !l.is_empty())
        .or_else(|| Some(r.config.dump.layers.clone()).filter(|l| !l.is_empty()))
        .unwrap_or_else(|| r.config.experiment.layers.clone());
    if layers.is_empty() {
        return Err(Error::InvalidConfig("no layers to dump".into()));
    }
    check_layers(&model, &layers)?;
    let splits = load_splits(r)?;
    let images = &splits.choose(r.config.dump.split).samples;
    let dir = r.output_dir.join("activations");
    let mut paths = Vec::new();
    for layer in &layers {
        let rows = images
            .iter()
            .map(|x| model.forward_to_layer(x, layer).map(|a| a.values))
            .collect::<Result<Vec<_>>>()?;
        let mut dump = ActivationDump::new(layer.as_str(), &rows)?;
        if r.config.dump.gradients {
            for k in 0..model.class_count() {
                let grads = images
                    .iter()
                    .map(|x| model.grad_logit_wrt_activation(x, layer, k))
                    .collect::<Result<Vec<_>>>()?;
                let class = u16::try_from(k)
                    .map_err(|_| Error::InvalidConfig("too many classes".into()))?;
                dump.add_gradients(class, &grads)?;
            }
        }
        let path = dir.join(format!("{layer}.actv"));
        dump.save(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes the CSV table and one SVG chart per class next to `dir`.
pub fn write_reports(
    doc: &ResultsDocument,
    dir: &Path,
    cfg: &ReportConfig,
) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    if cfg.emit_csv {
        let path = dir.join("tcav_results.csv");
        write_atomic(&path, &report::render_csv(doc)?)?;
        paths.push(path);
    }
    if cfg.emit_svg {
        for k in report::classes(doc) {
            let path = dir.join(report::svg_file_name(doc, k));
            write_atomic(&path, report::render_svg(doc, k).as_bytes())?;
            paths.push(path);
        }
    }
    Ok(paths)
}

fn sort_results(doc: &mut ResultsDocument) {
    doc.results.sort_by(|a, b| {
        (a.class_k, &a.layer_name, &a.concept_name).cmp(&(
            b.class_k,
            &b.layer_name,
            &b.concept_name,
        ))
    });
}

/// Runs the experiment layer by layer, flushing the results file after
/// each layer with `complete = false` and marking it complete at the end.
pub fn run_tcav(r: &Resolved) -> Result<ResultsDocument> {
    let model: Model32 = load_checkpoint(&r.checkpoint)?;
    let exp = r.experiment_config();
    exp.validate()?;
    check_layers(&model, &exp.layers)?;
    let splits = load_splits(r)?;
    if exp.class_k >= splits.all.class_count() {
        return Err(Error::ClassOutOfRange {
            index: exp.class_k,
            class_count: splits.all.class_count(),
        });
    }
    let class_inputs = splits
        .choose(r.config.dataset.class_inputs)
        .of_class(exp.class_k);

    let names: Vec<&str> = if exp.concepts.is_empty() {
        r.config.concepts.iter().map(|c| c.name.as_str()).collect()
    } else {
        exp.concepts.iter().map(String::as_str).collect()
    };
    let mut groups: BTreeMap<&str, Vec<ConceptSet>> = BTreeMap::new();
    for name in names {
        let spec = r
            .config
            .concepts
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| {
                Error::InvalidConfig(format!("concept `{name}` is not in the roster"))
            })?;
        groups
            .entry(spec.pool.as_str())
            .or_default()
            .push(ConceptSet::load(r.concepts_dir.join(name))?);
    }
    let mut pools = BTreeMap::new();
    for pool_name in groups.keys() {
        let spec = r
            .config
            .pools
            .iter()
            .find(|p| p.name == *pool_name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown pool `{pool_name}`")))?;
        let images = load_image_directory(r.pools_dir.join(pool_name), false)?.samples;
        pools.insert(
            *pool_name,
            NegativePool::new(images, spec.exclusion_tags())?,
        );
    }

    let mut layers = exp.layers.clone();
    layers.sort();
    layers.dedup();
    let mut doc = ResultsDocument::new(splits.all.class_names.clone());
    let mut cavs: Vec<Cav<f32>> = Vec::new();
    let results_path = r.results_path();
    for layer in &layers {
        for (pool_name, sets) in &groups {
            let cfg = tcav_core::tcav::ExperimentConfig {
                layers: vec![layer.clone()],
                concepts: sets.iter().map(|s| s.concept_name.clone()).collect(),
                ..exp.clone()
            };
            let out = run_experiment(
                &model,
                &cfg,
                &r.cav_config(),
                sets,
                &pools[pool_name],
                &class_inputs,
            )?;
            doc.results.extend(out.results);
            doc.warnings.extend(out.warnings);
            cavs.extend(out.cavs);
        }
        sort_results(&mut doc);
        doc.save(&results_path)?;
    }
    doc.complete = true;
    doc.save(&results_path)?;
    save_cav_store(r.output_dir.join("cavs.cvkc"), &cavs)?;
    write_reports(&doc, &r.output_dir, &r.config.report)?;
    Ok(doc)
}

/// Loads a results file and renders it. Returns the document and the
/// files written.
pub fn report(
    results: &Path,
    out_dir: &Path,
    cfg: &ReportConfig,
) -> Result<(ResultsDocument, Vec<PathBuf>)> {
    let doc = ResultsDocument::load(results)?;
    let written = write_reports(&doc, out_dir, cfg)?;
    Ok((doc, written))
}
