use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{class_gradients, nonfinite, score_from_gradients};
use crate::cav::{random_partition, train_cav, Cav, CavTrainConfig, RANDOM_CONCEPT};
use crate::concepts::{sample_negative_indices, ConceptSet, NegativePool};
use crate::error::{Error, Result};
use crate::image::ImageSample;
use crate::model::{LayerActivation, LayeredModel};
use crate::rng;
use crate::scalar::Scalar;
use crate::stats::{bonferroni_significant, one_sample_ttest_two_sided, welch_ttest_two_sided};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceTest {
    /// Welch two-sample test of concept scores against random-random scores.
    #[default]
    Welch,
    /// One-sample test of concept scores against 0.5.
    OneSampleHalf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_runs: usize,
    pub negatives_per_run: usize,
    /// Concept images drawn (without replacement) for each run; `None`
    /// uses the whole concept set every run.
    pub concept_samples_per_run: Option<usize>,
    /// Size of each half of a random-random CAV; `None` means
    /// `negatives_per_run`.
    pub random_samples_per_side: Option<usize>,
    pub alpha: f64,
    pub m: usize,
    pub layers: Vec<String>,
    /// Concepts to test, by name; empty means every supplied set.
    pub concepts: Vec<String>,
    pub class_k: usize,
    pub seed: u64,
    pub test: SignificanceTest,
    /// CAVs whose holdout accuracy falls below this are reported.
    pub cav_accuracy_warning: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_runs: 10,
            negatives_per_run: 100,
            concept_samples_per_run: None,
            random_samples_per_side: None,
            alpha: 0.05,
            m: 2,
            layers: Vec::new(),
            concepts: Vec::new(),
            class_k: 0,
            seed: 0,
            test: SignificanceTest::Welch,
            cav_accuracy_warning: 0.6,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_runs < 2 {
            return bad(format!("n_runs must be at least 2, got {}", self.n_runs));
        }
        if self.negatives_per_run == 0 {
            return bad("negatives_per_run must be positive".into());
        }
        if self.concept_samples_per_run == Some(0) || self.random_samples_per_side == Some(0) {
            return bad("per-run sample sizes must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if self.layers.is_empty() {
            return bad("no layers requested".into());
        }
        if self.concepts.iter().any(|c| c == RANDOM_CONCEPT) {
            return bad(format!(
                "`{RANDOM_CONCEPT}` is reserved for random-random CAVs"
            ));
        }
        Ok(())
    }

    fn random_per_side(&self) -> usize {
        self.random_samples_per_side
            .unwrap_or(self.negatives_per_run)
    }
}

/// Outcome for one (concept, class, layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcavResult {
    pub concept_name: String,
    pub class_k: usize,
    pub layer_name: String,
    pub concept_scores: Vec<f64>,
    pub random_scores: Vec<f64>,
    #[serde(with = "nonfinite")]
    pub mean_score: f64,
    #[serde(with = "nonfinite")]
    pub t_statistic: f64,
    #[serde(with = "nonfinite")]
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub significant: bool,
    pub alpha: f64,
    pub m: usize,
    pub test: SignificanceTest,
    /// False when fewer than two valid runs remained on either side.
    pub testable: bool,
    pub concept_cav_accuracies: Vec<f64>,
    pub random_cav_accuracies: Vec<f64>,
    /// Runs whose CAV could not be trained.
    pub dropped_runs: Vec<u32>,
}

impl TcavResult {
    pub fn mean_cav_accuracy(&self) -> f64 {
        mean(&self.concept_cav_accuracies)
    }
}

/// Results sorted by (layer, concept), every trained CAV, and warnings
/// about low-accuracy or dropped CAVs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput<T> {
    pub results: Vec<TcavResult>,
    pub cavs: Vec<Cav<T>>,
    pub warnings: Vec<String>,
}

const CAV_STREAM: u64 = 0x0CA7;
const RANDOM_STREAM: u64 = 0x7A_4D;
const CONCEPT_STREAM: u64 = 0xC0_4C;

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

struct Scored<T> {
    scores: Vec<f64>,
    accuracies: Vec<f64>,
    dropped: Vec<u32>,
    cavs: Vec<Cav<T>>,
}

impl<T> Scored<T> {
    fn new() -> Self {
        Self {
            scores: Vec::new(),
            accuracies: Vec::new(),
            dropped: Vec::new(),
            cavs: Vec::new(),
        }
    }
}

fn score_run<T: Scalar>(
    out: &mut Scored<T>,
    trained: Result<Cav<T>>,
    run_id: u32,
    gradients: &[Vec<T>],
    warnings: &mut Vec<String>,
    label: &str,
) -> Result<()> {
    match trained {
        Ok(cav) => {
            out.scores
                .push(score_from_gradients(gradients, &cav)?.as_f64());
            out.accuracies.push(cav.holdout_accuracy.as_f64());
            out.cavs.push(cav);
        }
        Err(e @ Error::UntrainableCav(_)) => {
            warnings.push(format!("{label} run {run_id} dropped: {e}"));
            out.dropped.push(run_id);
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn random_runs<T: Scalar>(
    cfg: &ExperimentConfig,
    cav_cfg: &CavTrainConfig,
    layer: &str,
    pool_acts: &[LayerActivation<T>],
    gradients: &[Vec<T>],
    warnings: &mut Vec<String>,
) -> Result<Scored<T>> {
    let mut out = Scored::new();
    for run in 0..cfg.n_runs as u32 {
        let (a, b) = random_partition(
            pool_acts.len(),
            cfg.random_per_side(),
            rng::derive_seed(cfg.seed, RANDOM_STREAM, u64::from(run)),
        )?;
        let pick = |idx: &[usize]| {
            idx.iter()
                .map(|&i| pool_acts[i].clone())
                .collect::<Vec<_>>()
        };
        let run_cfg = CavTrainConfig {
            seed: rng::derive_seed(cfg.seed, RANDOM_STREAM ^ CAV_STREAM, u64::from(run)),
            ..*cav_cfg
        };
        let trained = train_cav(&pick(&a), &pick(&b), &run_cfg).map(|cav| Cav {
            concept_name: RANDOM_CONCEPT.to_string(),
            run_id: run,
            is_null: true,
            ..cav
        });
        score_run(
            &mut out,
            trained,
            run,
            gradients,
            warnings,
            &format!("random CAV at `{layer}`"),
        )?;
    }
    Ok(out)
}

fn significance(
    cfg: &ExperimentConfig,
    concept: &[f64],
    random: &[f64],
) -> Result<(f64, f64, f64, bool)> {
    let testable =
        concept.len() >= 2 && (cfg.test == SignificanceTest::OneSampleHalf || random.len() >= 2);
    if !testable {
        return Ok((f64::NAN, f64::NAN, 1.0, false));
    }
    let outcome = match cfg.test {
        SignificanceTest::Welch => welch_ttest_two_sided(concept, random)?,
        SignificanceTest::OneSampleHalf => one_sample_ttest_two_sided(concept, 0.5)?,
    };
    Ok((
        outcome.t_statistic,
        outcome.degrees_of_freedom,
        outcome.p_value,
        true,
    ))
}

/// Runs the full protocol for every requested (concept, layer) pair.
///
/// Run `r` of a concept trains a CAV against negatives drawn from the pool
/// with seed `cfg.seed + r`; `n_runs` random-random CAVs per layer, shared
/// by all concepts at that layer, supply the null scores. CAVs that cannot
/// be trained drop their run; a pair with fewer than two valid runs on
/// either side is reported as untestable with `p = 1`.
pub fn run_experiment<T: Scalar>(
    model: &LayeredModel<T>,
    cfg: &ExperimentConfig,
    cav_cfg: &CavTrainConfig,
    concept_sets: &[ConceptSet],
    negative_pool: &NegativePool,
    class_inputs: &[ImageSample],
) -> Result<ExperimentOutput<T>> {
    cfg.validate()?;
    cav_cfg.validate()?;
    if class_inputs.is_empty() {
        return Err(Error::Empty("X_k is empty".into()));
    }
    for layer in &cfg.layers {
        model.layer_index(layer)?;
    }
    let by_name: BTreeMap<&str, &ConceptSet> = concept_sets
        .iter()
        .map(|s| (s.concept_name.as_str(), s))
        .collect();
    let concepts: Vec<&ConceptSet> = if cfg.concepts.is_empty() {
        by_name.values().copied().collect()
    } else {
        cfg.concepts
            .iter()
            .map(|name| {
                by_name
                    .get(name.as_str())
                    .copied()
                    .ok_or_else(|| Error::InvalidConfig(format!("no concept set named `{name}`")))
            })
            .collect::<Result<_>>()?
    };
    if concepts.is_empty() {
        return Err(Error::Empty("no concept sets supplied".into()));
    }
    for set in &concepts {
        if set.concept_name == RANDOM_CONCEPT {
            return Err(Error::InvalidConfig(format!(
                "`{RANDOM_CONCEPT}` is reserved for random-random CAVs"
            )));
        }
        if let Some(k) = cfg.concept_samples_per_run {
            if k > set.len() {
                return Err(Error::InvalidConfig(format!(
                    "concept `{}` has {} images, fewer than concept_samples_per_run = {k}",
                    set.concept_name,
                    set.len()
                )));
            }
        }
    }

    for set in &concepts {
        if !negative_pool.excludes(&set.concept_name) {
            return Err(Error::InvalidConfig(format!(
                "negative pool does not guarantee absence of `{}`",
                set.concept_name
            )));
        }
    }
    // Negative draws depend only on (seed, run), so every concept and
    // layer of run r sees the same batch.
    let negative_draws = (0..cfg.n_runs as u64)
        .map(|run| {
            sample_negative_indices(
                negative_pool,
                cfg.negatives_per_run,
                cfg.seed.wrapping_add(run),
                &concepts[0].concept_name,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut results = Vec::new();
    let mut cavs = Vec::new();
    let mut warnings = Vec::new();
    let mut layers = cfg.layers.clone();
    layers.sort();
    layers.dedup();
    for layer in &layers {
        let gradients = class_gradients(model, layer, cfg.class_k, class_inputs)?;
        let pool_acts: Vec<LayerActivation<T>> = negative_pool
            .images
            .iter()
            .map(|img| model.forward_to_layer(img, layer))
            .collect::<Result<_>>()?;
        let random = random_runs(cfg, cav_cfg, layer, &pool_acts, &gradients, &mut warnings)?;

        let mut sorted = concepts.clone();
        sorted.sort_by(|a, b| a.concept_name.cmp(&b.concept_name));
        for set in sorted {
            let concept_acts: Vec<LayerActivation<T>> = set
                .images
                .iter()
                .map(|img| model.forward_to_layer(img, layer))
                .collect::<Result<_>>()?;
            let mut scored = Scored::new();
            for run in 0..cfg.n_runs as u32 {
                let chosen: Vec<LayerActivation<T>> = match cfg.concept_samples_per_run {
                    None => concept_acts.clone(),
                    Some(k) => {
                        let mut r =
                            rng::seeded(rng::derive_seed(cfg.seed, CONCEPT_STREAM, u64::from(run)));
                        rand::seq::index::sample(&mut r, concept_acts.len(), k)
                            .into_iter()
                            .map(|i| concept_acts[i].clone())
                            .collect()
                    }
                };
                let negative: Vec<LayerActivation<T>> = negative_draws[run as usize]
                    .iter()
                    .map(|&i| pool_acts[i].clone())
                    .collect();
                let run_cfg = CavTrainConfig {
                    seed: rng::derive_seed(cfg.seed, CAV_STREAM, u64::from(run)),
                    ..*cav_cfg
                };
                let trained = train_cav(&chosen, &negative, &run_cfg)
                    .map(|cav| cav.with_identity(&set.concept_name, run));
                let label = format!("concept `{}` at `{layer}`", set.concept_name);
                score_run(&mut scored, trained, run, &gradients, &mut warnings, &label)?;
            }
            for (cav, acc) in scored.cavs.iter().zip(&scored.accuracies) {
                if *acc < cfg.cav_accuracy_warning {
                    warnings.push(format!(
                        "CAV for `{}` at `{layer}` run {} has holdout accuracy {acc:.3} below {}",
                        set.concept_name, cav.run_id, cfg.cav_accuracy_warning
                    ));
                }
            }

            let (t, df, p, testable) = significance(cfg, &scored.scores, &random.scores)?;
            if !testable {
                warnings.push(format!(
                    "concept `{}` at `{layer}` is untestable: too few valid runs",
                    set.concept_name
                ));
            }
            results.push(TcavResult {
                concept_name: set.concept_name.clone(),
                class_k: cfg.class_k,
                layer_name: layer.clone(),
                mean_score: mean(&scored.scores),
                concept_scores: scored.scores,
                random_scores: random.scores.clone(),
                t_statistic: t,
                degrees_of_freedom: df,
                p_value: p,
                significant: testable && bonferroni_significant(p, cfg.alpha, cfg.m),
                alpha: cfg.alpha,
                m: cfg.m,
                test: cfg.test,
                testable,
                concept_cav_accuracies: scored.accuracies,
                random_cav_accuracies: random.accuracies.clone(),
                dropped_runs: scored.dropped,
            });
            cavs.extend(scored.cavs);
        }
        cavs.extend(random.cavs);
    }
    Ok(ExperimentOutput {
        results,
        cavs,
        warnings,
    })
}
