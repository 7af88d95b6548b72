//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Set `ACCEPTANCE_ONLY=5,6` to run a
//! subset.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng as _;
use tcav_core::cav::{decode_cav_store, encode_cav_store, Cav, CavTrainConfig};
use tcav_core::concepts::{
    generate_color_concept, generate_leaf_dataset, generate_lesioned_leaves, split_dataset, Color,
    ConceptSet, NegativePool, Provenance, SplitRatios,
};
use tcav_core::io::ActivationDump;
use tcav_core::model::{
    decode_checkpoint, encode_checkpoint, evaluate, reference_model, train_classifier, TrainConfig,
};
use tcav_core::rng::{derive_seed, seeded};
use tcav_core::stats::{classification_metrics, welch_ttest_two_sided};
use tcav_core::tcav::{
    directional_derivative, run_experiment, score_from_gradients, sensitivities, tcav_score,
    ExperimentConfig, TcavResult,
};
use tcav_core::{Dataset, ImageSample, LayeredModel, Model, Model32};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_image(h: usize, w: usize, seed: u64) -> ImageSample {
    let mut r = seeded(seed);
    ImageSample::from_fn(h, w, 3, |_, _, _| r.gen::<f32>()).unwrap()
}

fn random_unit(n: usize, r: &mut impl rand::Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn cav_with(layer: &str, direction: Vec<f64>) -> Cav<f64> {
    Cav {
        concept_name: "probe".into(),
        layer_name: layer.into(),
        direction,
        bias: 0.0,
        holdout_accuracy: 1.0,
        run_id: 0,
        negative_set_fingerprint: 0,
        is_null: false,
    }
}

fn negated(cav: &Cav<f64>) -> Cav<f64> {
    Cav {
        direction: cav.direction.iter().map(|v| -v).collect(),
        bias: -cav.bias,
        ..cav.clone()
    }
}

// ---------------------------------------------------------------- 2

/// Largest relative FD error over every coordinate of every cut with at
/// most 500 activations, or `None` when some stencil straddles a ReLU kink
/// (one-sided quotients disagree), where central differences are no oracle.
fn fd_check(
    model: &Model,
    x: &ImageSample,
    eps: f64,
    tol: f64,
) -> Result<Option<(f64, usize, usize)>, String> {
    let mut worst = 0.0f64;
    let (mut cuts, mut coords) = (0, 0);
    for layer in model.layer_names() {
        let act = model.forward_to_layer(x, layer).map_err(fail)?;
        if act.len() > 500 {
            continue;
        }
        cuts += 1;
        let h0 = model.layer_to_logits(&act).map_err(fail)?;
        let grads: Vec<Vec<f64>> = (0..model.class_count())
            .map(|k| model.grad_logit_at_activation(&act, k))
            .collect::<Result<_, _>>()
            .map_err(fail)?;
        for i in 0..act.len() {
            let mut plus = act.clone();
            plus.values[i] += eps;
            let mut minus = act.clone();
            minus.values[i] -= eps;
            let hp = model.layer_to_logits(&plus).map_err(fail)?;
            let hm = model.layer_to_logits(&minus).map_err(fail)?;
            for (k, g) in grads.iter().enumerate() {
                let (fwd, bwd) = ((hp[k] - h0[k]) / eps, (h0[k] - hm[k]) / eps);
                if (fwd - bwd).abs() > tol * fwd.abs().max(bwd.abs()).max(1e-8) {
                    return Ok(None);
                }
                let fd = (hp[k] - hm[k]) / (2.0 * eps);
                let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-8);
                if rel > tol {
                    return Err(format!(
                        "layer {layer} class {k} coord {i}: analytic {} vs fd {fd} (rel {rel:.2e})",
                        g[i]
                    ));
                }
                worst = worst.max(rel);
                coords += 1;
            }
        }
    }
    Ok(Some((worst, cuts, coords)))
}

fn gradient_fidelity() -> Outcome {
    let mut worst = 0.0f64;
    let (mut cuts, mut coords, mut redrawn) = (0, 0, 0);
    for m in 0..20u64 {
        let model: Model = reference_model(8, 8, 3, 3, derive_seed(2, 1, m)).map_err(fail)?;
        let mut draw = 0;
        loop {
            ensure!(draw < 100, "model {m}: no kink-free input in 100 draws");
            let x = random_image(8, 8, derive_seed(2, 2 + draw, m));
            match fd_check(&model, &x, 1e-4, 1e-3).map_err(|e| format!("model {m}: {e}"))? {
                Some((w, c, n)) => {
                    worst = worst.max(w);
                    cuts += c;
                    coords += n;
                    break;
                }
                None => {
                    redrawn += 1;
                    draw += 1;
                }
            }
        }
    }
    Ok(format!(
        "20 models, {cuts} cuts, {coords} coordinates, worst rel err {worst:.2e} ({redrawn} inputs redrawn at kinks)"
    ))
}

// ---------------------------------------------------------------- 3

fn linear_tail(n: usize, classes: usize, seed: u64) -> Model {
    LayeredModel::builder(vec![1, 1, n])
        .flatten("flat")
        .dense("logits", classes)
        .build(seed)
        .unwrap()
}

fn directional_derivative_oracle() -> Outcome {
    const EPS: f64 = 1e-3;
    let mut r = seeded(3);
    let mut worst = 0.0f64;
    for pair in 0..100 {
        let n = r.gen_range(2..64);
        let model = linear_tail(n, 3, r.gen());
        let x = ImageSample::from_fn(1, 1, n, |_, _, _| r.gen_range(-1.0f32..1.0)).unwrap();
        let act = model.forward_to_layer(&x, "flat").map_err(fail)?;
        let cav = cav_with("flat", random_unit(n, &mut r));
        let k = pair % 3;
        let s = directional_derivative(
            &model.grad_logit_at_activation(&act, k).map_err(fail)?,
            &cav,
        )
        .map_err(fail)?;
        let shifted = |sign: f64| {
            let mut a = act.clone();
            for (ai, vi) in a.values.iter_mut().zip(&cav.direction) {
                *ai += sign * EPS * vi;
            }
            model.layer_to_logits(&a).map(|h| h[k])
        };
        let fd = (shifted(1.0).map_err(fail)? - shifted(-1.0).map_err(fail)?) / (2.0 * EPS);
        let rel = (s - fd).abs() / s.abs().max(fd.abs());
        ensure!(
            rel <= 1e-6,
            "pair {pair}: S = {s} vs quotient {fd} (rel {rel:.2e})"
        );
        worst = worst.max(rel);
    }
    Ok(format!("100 pairs, worst rel err {worst:.2e}"))
}

// ---------------------------------------------------------------- 4

fn score_properties() -> Outcome {
    let mut r = seeded(4);
    let mut triples = 0;
    let mut attempts = 0;
    while triples < 50 {
        attempts += 1;
        ensure!(
            attempts < 500,
            "could not draw 50 triples without zero sensitivities"
        );
        let model: Model = reference_model(8, 8, 3, 2, r.gen()).map_err(fail)?;
        let layer = ["conv2", "flatten", "dense1", "relu3"][r.gen_range(0..4)];
        let dim = model
            .forward_to_layer(&random_image(8, 8, 0), layer)
            .map_err(fail)?
            .len();
        let cav = cav_with(layer, random_unit(dim, &mut r));
        let inputs: Vec<ImageSample> = (0..r.gen_range(5..30))
            .map(|_| random_image(8, 8, r.gen()))
            .collect();
        let k = r.gen_range(0..2);
        let sens = sensitivities(&model, layer, k, &inputs, &cav).map_err(fail)?;
        if sens.iter().any(|s| s.value == 0.0) {
            continue;
        }
        let pos = tcav_score(&model, layer, k, &inputs, &cav).map_err(fail)?;
        let neg = tcav_score(&model, layer, k, &inputs, &negated(&cav)).map_err(fail)?;
        ensure!((0.0..=1.0).contains(&pos), "score {pos} outside [0, 1]");
        ensure!(
            pos + neg == 1.0,
            "score(v) + score(-v) = {} at triple {triples}",
            pos + neg
        );
        triples += 1;
    }
    let grads: Vec<Vec<f64>> = [1.0, 2.0, -1.0, 0.5, 0.0, -3.0, 1.5]
        .iter()
        .map(|&g| vec![g])
        .collect();
    let fixture = score_from_gradients(&grads, &cav_with("x", vec![1.0])).map_err(fail)?;
    ensure!(
        fixture == 4.0 / 7.0,
        "sign fixture scored {fixture}, expected 4/7"
    );
    Ok(format!(
        "50 triples ({attempts} drawn), antisymmetry exact, fixture = 4/7"
    ))
}

// ---------------------------------------------------------------- 5, 6

struct Reference {
    model: Model32,
    test_accuracy: f64,
    class_inputs: Vec<ImageSample>,
}

const SIZE: (usize, usize) = (32, 32);

fn reference() -> &'static Result<Reference, String> {
    static CELL: OnceLock<Result<Reference, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let seed = 1;
        let data: Dataset = generate_leaf_dataset(250, SIZE, seed).map_err(fail)?;
        let (train, val, test) =
            split_dataset(&data, SplitRatios::default(), seed).map_err(fail)?;
        let init = reference_model::<f32>(SIZE.0, SIZE.1, 3, 2, seed).map_err(fail)?;
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let (model, _) =
            train_classifier(&init, &train.samples, &val.samples, &cfg).map_err(fail)?;
        let (_, test_accuracy) = evaluate(&model, &test.samples).map_err(fail)?;
        Ok(Reference {
            model,
            test_accuracy,
            class_inputs: test.of_class(1),
        })
    })
}

fn grayscale_leaves(count: usize, seed: u64) -> Result<Vec<ImageSample>, String> {
    Ok(generate_lesioned_leaves(count, SIZE, seed)
        .map_err(fail)?
        .into_iter()
        .map(|l| l.image.to_grayscale())
        .collect())
}

fn planted_concept() -> Outcome {
    let reference = reference().as_ref().map_err(Clone::clone)?;
    ensure!(
        reference.test_accuracy >= 0.95,
        "reference model test accuracy {:.3} < 0.95",
        reference.test_accuracy
    );
    let mut brown: Vec<TcavResult> = Vec::new();
    let mut blue_significant = 0;
    for s in 0..20u64 {
        let seed = derive_seed(5, 0, s);
        let concepts = [Color::Brown, Color::Blue]
            .iter()
            .map(|&c| generate_color_concept(c, 100, SIZE, derive_seed(seed, 1, c as u64)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(fail)?;
        let pool = NegativePool::grayscale(&grayscale_leaves(300, derive_seed(seed, 2, 0))?)
            .map_err(fail)?;
        let cfg = ExperimentConfig {
            n_runs: 10,
            layers: vec!["dense1".into()],
            class_k: 1,
            seed,
            ..ExperimentConfig::default()
        };
        let out = run_experiment(
            &reference.model,
            &cfg,
            &CavTrainConfig::default(),
            &concepts,
            &pool,
            &reference.class_inputs,
        )
        .map_err(fail)?;
        for res in out.results {
            match res.concept_name.as_str() {
                "brown" => brown.push(res),
                "blue" => blue_significant += usize::from(res.significant),
                _ => {}
            }
        }
    }
    let first = &brown[0];
    let brown_ok = first.significant && first.p_value < 0.025 && first.mean_score >= 0.9;
    let brown_all = brown
        .iter()
        .filter(|r| r.significant && r.mean_score >= 0.9)
        .count();
    let blue_ok = 20 - blue_significant >= 19;
    let detail = format!(
        "test acc {:.3}; brown mean {:.3} p {:.2e} (significant with mean >= 0.9 in {brown_all}/20 seeds); \
         blue significant in {blue_significant}/20 seeds",
        reference.test_accuracy, first.mean_score, first.p_value
    );
    if brown_ok && blue_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Number of trials reporting significance at dense1 when the concept
/// images come from the same generator as the negative pool. With
/// `concept_is_pool` the concept set is the pool itself.
fn null_trials(reference: &Reference, trials: u64, concept_is_pool: bool) -> Result<usize, String> {
    let mut significant = 0;
    for trial in 0..trials {
        let seed = derive_seed(6, 0, trial);
        let pool_images = grayscale_leaves(300, derive_seed(seed, 1, 0))?;
        let concept_images = if concept_is_pool {
            pool_images.clone()
        } else {
            grayscale_leaves(100, derive_seed(seed, 2, 0))?
        };
        let pool = NegativePool::new(pool_images, ["pool_sample"]).map_err(fail)?;
        let concept =
            ConceptSet::new("pool_sample", concept_images, Provenance::Directory).map_err(fail)?;
        let cfg = ExperimentConfig {
            layers: vec!["dense1".into()],
            class_k: 1,
            seed,
            ..ExperimentConfig::default()
        };
        let out = run_experiment(
            &reference.model,
            &cfg,
            &CavTrainConfig::default(),
            &[concept],
            &pool,
            &reference.class_inputs,
        )
        .map_err(fail)?;
        significant += out.results.iter().filter(|r| r.significant).count();
    }
    Ok(significant)
}

fn null_calibration() -> Outcome {
    let reference = reference().as_ref().map_err(Clone::clone)?;
    let fresh = null_trials(reference, 100, false)?;
    let whole_pool = null_trials(reference, 100, true)?;
    let detail = format!(
        "fresh concept draw significant in {fresh}/100 trials (alpha 0.05, m 2); \
         for reference, concept = whole pool gives {whole_pool}/100"
    );
    if fresh <= 5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 7

/// Γ(n/2) for positive integer n, by the half-integer recurrence.
fn gamma_half(n: u32) -> f64 {
    let (mut g, mut x) = if n.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    while x < f64::from(n) / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Two-sided Student-t p-value by quadrature of the density over [0, |t|].
fn quadrature_p(t: f64, df: u32) -> f64 {
    let nu = f64::from(df);
    let c = gamma_half(df + 1) / (gamma_half(df) * (nu * std::f64::consts::PI).sqrt());
    let pdf = move |x: f64| c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    1.0 - 2.0 * adaptive_simpson(&pdf, 0.0, t.abs(), 1e-14)
}

fn ttest_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for df in [1u32, 2, 5, 10, 30, 100] {
        let n = df as usize + 1;
        // unit sample variance around zero
        let raw: Vec<f64> = (0..n).map(|i| i as f64 - (n - 1) as f64 / 2.0).collect();
        let var = raw.iter().map(|x| x * x).sum::<f64>() / (n - 1) as f64;
        let base: Vec<f64> = raw.iter().map(|x| x / var.sqrt()).collect();
        for step in 0..=48 {
            let target = -6.0 + 0.25 * f64::from(step);
            let shift = target / (n as f64).sqrt();
            let a: Vec<f64> = base.iter().map(|x| x + shift).collect();
            let out = welch_ttest_two_sided(&a, &[0.0, 0.0]).map_err(fail)?;
            ensure!(
                (out.t_statistic - target).abs() < 1e-9
                    && (out.degrees_of_freedom - f64::from(df)).abs() < 1e-9,
                "constructed sample gave t {} df {}, wanted {target} {df}",
                out.t_statistic,
                out.degrees_of_freedom
            );
            let oracle = quadrature_p(out.t_statistic, df);
            let err = (out.p_value - oracle).abs();
            ensure!(
                err <= 1e-6,
                "t {target} df {df}: p {} vs oracle {oracle}",
                out.p_value
            );
            worst = worst.max(err);
            cases += 1;
        }
    }
    let mut r = seeded(7);
    for _ in 0..200 {
        let a: Vec<f64> = (0..r.gen_range(2..30))
            .map(|_| r.gen_range(-3.0..3.0))
            .collect();
        let b: Vec<f64> = (0..r.gen_range(2..30))
            .map(|_| r.gen_range(-2.0..4.0))
            .collect();
        let same = welch_ttest_two_sided(&a, &a).map_err(fail)?;
        ensure!(
            same.t_statistic == 0.0 && same.p_value == 1.0,
            "t(a, a) = {same:?}"
        );
        let ab = welch_ttest_two_sided(&a, &b).map_err(fail)?;
        let ba = welch_ttest_two_sided(&b, &a).map_err(fail)?;
        ensure!(
            ab.t_statistic == -ba.t_statistic
                && ab.p_value == ba.p_value
                && ab.degrees_of_freedom == ba.degrees_of_freedom,
            "swap asymmetry: {ab:?} vs {ba:?}"
        );
    }
    Ok(format!(
        "{cases} grid points, worst |dp| {worst:.2e}; t(a,a) and swap symmetry exact on 200 samples"
    ))
}

// ---------------------------------------------------------------- 8

fn brute_force_metrics(
    pred: &[usize],
    label: &[usize],
    classes: usize,
) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let correct = pred.iter().zip(label).filter(|(p, l)| p == l).count();
    let (mut prec, mut rec, mut f1) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..classes {
        let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
        for (&p, &l) in pred.iter().zip(label) {
            match (p == c, l == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fnn += 1,
                _ => {}
            }
        }
        let p = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let r = if tp + fnn == 0 {
            0.0
        } else {
            tp as f64 / (tp + fnn) as f64
        };
        prec.push(p);
        rec.push(r);
        f1.push(if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        });
    }
    (correct as f64 / pred.len() as f64, prec, rec, f1)
}

fn metrics_oracle() -> Outcome {
    let mut r = seeded(8);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    for case in 0..1000 {
        let classes = r.gen_range(2..=10);
        let n = r.gen_range(1..200);
        let label: Vec<usize> = (0..n).map(|_| r.gen_range(0..classes)).collect();
        let pred: Vec<usize> = label
            .iter()
            .map(|&l| {
                if r.gen_bool(0.6) {
                    l
                } else {
                    r.gen_range(0..classes)
                }
            })
            .collect();
        let got = classification_metrics(&pred, &label, classes).map_err(fail)?;
        let (acc, p, rc, f1) = brute_force_metrics(&pred, &label, classes);
        ensure!(
            got.accuracy == acc
                && got.per_class_precision == p
                && got.per_class_recall == rc
                && got.per_class_f1 == f1
                && got.macro_precision == mean(&p)
                && got.macro_recall == mean(&rc)
                && got.macro_f1 == mean(&f1),
            "case {case} ({classes} classes, {n} samples) disagrees with the oracle"
        );
    }
    let label: Vec<usize> = (0..50).map(|i| i % 5).collect();
    let perfect = classification_metrics(&label, &label, 5).map_err(fail)?;
    ensure!(
        [
            perfect.accuracy,
            perfect.macro_precision,
            perfect.macro_recall,
            perfect.macro_f1
        ] == [1.0; 4],
        "all-correct case: {perfect:?}"
    );
    Ok("1000 random cases exact; all-correct case gives 1.0".into())
}

// ---------------------------------------------------------------- 9

fn tiny(label: usize) -> ImageSample {
    ImageSample::new(1, 1, 1, vec![0.5])
        .unwrap()
        .with_label(label)
}

fn split_contract() -> Outcome {
    let single =
        Dataset::labeled((0..100).map(|_| tiny(0)).collect(), vec!["a".into()]).map_err(fail)?;
    let (a, b, c) = split_dataset(&single, SplitRatios::default(), 9).map_err(fail)?;
    ensure!(
        (a.len(), b.len(), c.len()) == (80, 10, 10),
        "sizes {:?}",
        (a.len(), b.len(), c.len())
    );
    let ratios = [0.8, 0.1, 0.1];
    let mut r = seeded(9);
    for trial in 0..50 {
        let n0 = r.gen_range(10..150);
        let n1 = r.gen_range(10..150);
        let samples = (0..n0)
            .map(|_| tiny(0))
            .chain((0..n1).map(|_| tiny(1)))
            .collect();
        let data = Dataset::labeled(samples, vec!["a".into(), "b".into()]).map_err(fail)?;
        let (train, val, test) =
            split_dataset(&data, SplitRatios::default(), trial).map_err(fail)?;
        for (part, ratio) in [train, val, test].iter().zip(ratios) {
            for (class, n) in [(0, n0), (1, n1)] {
                let got = part.of_class(class).len() as f64;
                let want = ratio * f64::from(n);
                ensure!(
                    (got - want).abs() <= 1.0,
                    "trial {trial}: class {class} has {got} where {want} expected"
                );
            }
        }
    }
    Ok(
        "(80, 10, 10) on 100 single-class samples; 50 imbalanced two-class splits within +-1"
            .into(),
    )
}

// ---------------------------------------------------------------- 10

const SMALL: &str = r#"
seed = 3

[dataset]
per_class = 20
image_size = [12, 12]

[train]
epochs = 2

[experiment]
layers = ["dense1", "relu3"]
n_runs = 3
negatives_per_run = 10
class_k = 1

[[concepts]]
name = "brown"
kind = "color"
count = 10
pool = "grayscale"

[[concepts]]
name = "blue"
kind = "color"
count = 10
pool = "grayscale"

[[pools]]
name = "grayscale"
kind = "grayscale_lesioned"
count = 30
"#;

fn pipeline(dir: &Path, out: &str) -> Result<(), String> {
    for verb in [
        "generate-concepts",
        "train",
        "dump-activations",
        "run-tcav",
        "report",
    ] {
        let status = Command::new(env!("CARGO_BIN_EXE_tcav"))
            .current_dir(dir)
            .args(["--config", "small.toml", "--out", out, verb])
            .output()
            .map_err(fail)?;
        ensure!(
            status.status.success(),
            "{verb} failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
    }
    Ok(())
}

fn determinism_and_round_trips() -> Outcome {
    let tmp = tempfile::tempdir().map_err(fail)?;
    fs::write(tmp.path().join("small.toml"), SMALL).map_err(fail)?;
    pipeline(tmp.path(), "a")?;
    pipeline(tmp.path(), "b")?;
    let files = [
        "model.cvkm",
        "activations/dense1.actv",
        "activations/relu3.actv",
        "tcav_results.csv",
        "tcav_late_blight.svg",
    ];
    for file in files {
        let x = fs::read(tmp.path().join("a").join(file)).map_err(fail)?;
        let y = fs::read(tmp.path().join("b").join(file)).map_err(fail)?;
        ensure!(x == y, "{file} differs between identical runs");
    }

    let dump = ActivationDump::load(tmp.path().join("a/activations/dense1.actv")).map_err(fail)?;
    let bytes = dump.encode();
    let back = ActivationDump::decode(&bytes).map_err(fail)?;
    ensure!(
        back == dump && back.encode() == bytes,
        "ACTV1 round trip is lossy"
    );

    let mut r = seeded(10);
    let model: Model32 = reference_model(12, 12, 3, 4, r.gen()).map_err(fail)?;
    let bytes = encode_checkpoint(&model);
    let back: Model32 = decode_checkpoint(&bytes).map_err(fail)?;
    ensure!(
        back == model && encode_checkpoint(&back) == bytes,
        "CVKM round trip is lossy"
    );

    let cavs: Vec<Cav<f32>> = (0..6)
        .map(|i| Cav {
            concept_name: if i % 3 == 0 {
                "random".into()
            } else {
                format!("c{i}")
            },
            layer_name: "dense1".into(),
            direction: (0..32).map(|_| r.gen_range(-1.0..1.0)).collect(),
            bias: r.gen_range(-1.0..1.0),
            holdout_accuracy: r.gen_range(0.5..1.0),
            run_id: i,
            negative_set_fingerprint: 0,
            is_null: i % 3 == 0,
        })
        .collect();
    let bytes = encode_cav_store(&cavs).map_err(fail)?;
    let back: Vec<Cav<f32>> = decode_cav_store(&bytes).map_err(fail)?;
    ensure!(
        back == cavs && encode_cav_store(&back).map_err(fail)? == bytes,
        "CVKC round trip is lossy"
    );

    Ok(format!(
        "{} artifacts byte-identical across runs; ACTV1, CVKM, CVKC round trips exact",
        files.len()
    ))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 9] = [
        (2, "gradient fidelity", gradient_fidelity),
        (
            3,
            "directional derivative oracle",
            directional_derivative_oracle,
        ),
        (4, "score properties", score_properties),
        (5, "planted concept", planted_concept),
        (6, "null calibration", null_calibration),
        (7, "t-test oracle", ttest_oracle),
        (8, "metrics oracle", metrics_oracle),
        (9, "split contract", split_contract),
        (
            10,
            "determinism and round trips",
            determinism_and_round_trips,
        ),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failures = 0;
    for (n, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
