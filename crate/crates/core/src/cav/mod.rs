//! Concept Activation Vectors: a logistic-regression hyperplane between
//! concept and negative activations, reduced to its unit normal.

mod store;

pub use store::{
    decode_cav_store, encode_cav_store, load_cav_store, save_cav_store, RANDOM_CONCEPT,
};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageSample;
use crate::model::{LayerActivation, LayeredModel};
use crate::rng;
use crate::scalar::{dot, norm2, Scalar};

/// Unit direction in a layer's activation space with training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Cav<T> {
    pub concept_name: String,
    pub layer_name: String,
    pub direction: Vec<T>,
    /// Intercept of the hyperplane `direction · a + bias = 0`.
    pub bias: T,
    pub holdout_accuracy: T,
    pub run_id: u32,
    pub negative_set_fingerprint: u64,
    /// Trained between two random halves of the negative pool.
    pub is_null: bool,
}

impl<T: Scalar> Cav<T> {
    pub fn with_identity(mut self, concept_name: impl Into<String>, run_id: u32) -> Self {
        self.concept_name = concept_name.into();
        self.run_id = run_id;
        self
    }

    /// Signed distance of `activation` from the hyperplane.
    pub fn margin(&self, activation: &[T]) -> T {
        dot(&self.direction, activation) + self.bias
    }

    pub fn len(&self) -> usize {
        self.direction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.direction.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for CavTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            l2_penalty: 0.01,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

impl CavTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "cav learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("cav epochs must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "cav l2_penalty must be nonnegative, got {}",
                self.l2_penalty
            )));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cav holdout_fraction must lie in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// Activations of every image at `layer_name`, in input order.
pub fn collect_activations<T: Scalar>(
    model: &LayeredModel<T>,
    images: &[ImageSample],
    layer_name: &str,
) -> Result<Vec<LayerActivation<T>>> {
    if images.is_empty() {
        return Err(Error::Empty(format!(
            "no images to collect at layer `{layer_name}`"
        )));
    }
    images
        .iter()
        .map(|img| model.forward_to_layer(img, layer_name))
        .collect()
}

fn check_activations<T: Scalar>(
    concept: &[LayerActivation<T>],
    negative: &[LayerActivation<T>],
) -> Result<(String, usize)> {
    let first = concept
        .first()
        .ok_or_else(|| Error::Empty("no concept activations".into()))?;
    if negative.is_empty() {
        return Err(Error::Empty("no negative activations".into()));
    }
    for a in concept.iter().chain(negative) {
        if a.layer_name != first.layer_name {
            return Err(Error::InvalidConfig(format!(
                "activations from layers `{}` and `{}` mixed in one CAV",
                first.layer_name, a.layer_name
            )));
        }
        if a.len() != first.len() {
            return Err(Error::LengthMismatch {
                left: first.len(),
                right: a.len(),
            });
        }
    }
    if first.is_empty() {
        return Err(Error::Empty(format!(
            "layer `{}` has empty activations",
            first.layer_name
        )));
    }
    Ok((first.layer_name.clone(), first.len()))
}

/// Number of held-out points from a class of `n`: rounded share of the
/// class, keeping at least one point for training.
fn holdout_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1))
}

const HOLDOUT_STREAM: u64 = 0xCA_5E;

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Full-batch gradient descent on the L2-penalized mean logistic loss.
///
/// The iteration runs on mean-centered inputs with the intercept mapped
/// back afterwards, so the returned hyperplane lives in raw coordinates.
/// The step is capped at the inverse of a smoothness bound of the loss so
/// that large activations cannot make the iteration diverge.
fn fit_logistic<T: Scalar>(xs: &[&[T]], ys: &[T], dim: usize, cfg: &CavTrainConfig) -> (Vec<T>, T) {
    let n = T::from_usize_lossy(xs.len());
    let mut mu = vec![T::zero(); dim];
    for x in xs {
        for (m, &v) in mu.iter_mut().zip(x.iter()) {
            *m += v;
        }
    }
    for m in &mut mu {
        *m /= n;
    }
    let centered: Vec<Vec<T>> = xs
        .iter()
        .map(|x| x.iter().zip(&mu).map(|(&v, &m)| v - m).collect())
        .collect();

    let lambda = T::lit(cfg.l2_penalty);
    let mean_sq = centered.iter().map(|x| dot(x, x) + T::one()).sum::<T>() / n;
    let smoothness = T::lit(0.25) * mean_sq + lambda;
    let lr = T::lit(cfg.learning_rate).min(T::one() / smoothness);

    let mut w = vec![T::zero(); dim];
    let mut b = T::zero();
    let mut gw = vec![T::zero(); dim];
    for _ in 0..cfg.epochs {
        for (g, &wi) in gw.iter_mut().zip(&w) {
            *g = lambda * wi;
        }
        let mut gb = T::zero();
        for (x, &y) in centered.iter().zip(ys) {
            let e = (sigmoid(dot(&w, x) + b) - y) / n;
            for (g, &xi) in gw.iter_mut().zip(x) {
                *g += e * xi;
            }
            gb += e;
        }
        for (wi, &g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g;
        }
        b -= lr * gb;
    }
    let b = b - dot(&w, &mu);
    (w, b)
}

fn fingerprint<T: Scalar>(acts: &[LayerActivation<T>]) -> u64 {
    let bytes: Vec<u8> = acts
        .iter()
        .flat_map(|a| a.values.iter().flat_map(|v| v.as_f64().to_le_bytes()))
        .collect();
    rng::fnv1a64([bytes.as_slice()])
}

/// Trains the concept classifier and returns its unit normal, oriented
/// toward the concept class.
///
/// Each class is shuffled with its own seed-derived stream and the last
/// `holdout_fraction` of it is held out; `holdout_accuracy` is measured
/// there with the oriented hyperplane. The result carries an empty concept
/// name and run id 0; see [`Cav::with_identity`].
pub fn train_cav<T: Scalar>(
    concept_acts: &[LayerActivation<T>],
    negative_acts: &[LayerActivation<T>],
    cfg: &CavTrainConfig,
) -> Result<Cav<T>> {
    cfg.validate()?;
    let (layer_name, dim) = check_activations(concept_acts, negative_acts)?;

    let mut train: Vec<(&[T], T)> = Vec::new();
    let mut holdout: Vec<(&[T], bool)> = Vec::new();
    for (class, acts) in [(1u64, concept_acts), (0, negative_acts)] {
        let mut order: Vec<usize> = (0..acts.len()).collect();
        order.shuffle(&mut rng::seeded(rng::derive_seed(
            cfg.seed,
            HOLDOUT_STREAM,
            class,
        )));
        let held = holdout_count(acts.len(), cfg.holdout_fraction);
        let (fit, test) = order.split_at(acts.len() - held);
        let y = if class == 1 { T::one() } else { T::zero() };
        train.extend(fit.iter().map(|&i| (acts[i].values.as_slice(), y)));
        holdout.extend(
            test.iter()
                .map(|&i| (acts[i].values.as_slice(), class == 1)),
        );
    }
    let xs: Vec<&[T]> = train.iter().map(|(x, _)| *x).collect();
    let ys: Vec<T> = train.iter().map(|(_, y)| *y).collect();
    let (mut w, mut b) = fit_logistic(&xs, &ys, dim, cfg);

    let norm = norm2(&w);
    if !norm.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite(format!(
            "CAV weights at layer `{layer_name}`"
        )));
    }
    if norm < T::lit(1e-12) {
        return Err(Error::UntrainableCav(format!(
            "weight norm {norm} below 1e-12 at layer `{layer_name}`"
        )));
    }
    for wi in &mut w {
        *wi /= norm;
    }
    b /= norm;

    let concept_margin = train
        .iter()
        .filter(|(_, y)| *y == T::one())
        .map(|(x, _)| dot(&w, x) + b)
        .sum::<T>();
    if concept_margin <= T::zero() {
        for wi in &mut w {
            *wi = -*wi;
        }
        b = -b;
    }

    let scored: Vec<(&[T], bool)> = if holdout.is_empty() {
        train.iter().map(|&(x, y)| (x, y == T::one())).collect()
    } else {
        holdout
    };
    let correct = scored
        .iter()
        .filter(|(x, is_concept)| (dot(&w, x) + b > T::zero()) == *is_concept)
        .count();
    let holdout_accuracy = T::from_usize_lossy(correct) / T::from_usize_lossy(scored.len());

    Ok(Cav {
        concept_name: String::new(),
        layer_name,
        direction: w,
        bias: b,
        holdout_accuracy,
        run_id: 0,
        negative_set_fingerprint: fingerprint(negative_acts),
        is_null: false,
    })
}

/// Two disjoint random index sets of `count_per_side` each, drawn from
/// `0..pool_len`.
pub fn random_partition(
    pool_len: usize,
    count_per_side: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if count_per_side == 0 {
        return Err(Error::InvalidConfig(
            "random CAV needs at least one point per side".into(),
        ));
    }
    if pool_len < 2 * count_per_side {
        return Err(Error::InvalidConfig(format!(
            "pool of {pool_len} is too small for two disjoint halves of {count_per_side}"
        )));
    }
    let mut idx =
        rand::seq::index::sample(&mut rng::seeded(seed), pool_len, 2 * count_per_side).into_vec();
    let second = idx.split_off(count_per_side);
    Ok((idx, second))
}

/// Null CAV between two disjoint random halves of the pool.
pub fn make_random_random_cav<T: Scalar>(
    pool_acts: &[LayerActivation<T>],
    count_per_side: usize,
    cfg: &CavTrainConfig,
    seed: u64,
) -> Result<Cav<T>> {
    let (a, b) = random_partition(pool_acts.len(), count_per_side, seed)?;
    let pick = |idx: &[usize]| {
        idx.iter()
            .map(|&i| pool_acts[i].clone())
            .collect::<Vec<_>>()
    };
    let cav = train_cav(&pick(&a), &pick(&b), cfg)?;
    Ok(Cav {
        concept_name: RANDOM_CONCEPT.to_string(),
        is_null: true,
        ..cav
    })
}
