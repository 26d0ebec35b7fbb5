//! Desk-scale end-to-end demonstration: a synthetic three-class shape
//! dataset (sphere / cube / plane surfaces, distinct curvature signatures)
//! and a small classifier trained with the tape differentiator.
//!
//! Architecture: attention pipeline over each cloud, channelwise max over
//! the sampled centers, one affine head, softmax cross-entropy. Plain
//! full-batch gradient descent; the epoch loss is the sum of per-sample
//! losses and its gradient drives the update.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::autodiff::{NodeId, Tape};
use crate::error::{GamError, Result};
use crate::gam::{attention_inputs, phi_inputs, prepare};
use crate::types::{init_params, uniform_weights, GamConfig, GamParams, PointCloud};

/// Points per generated cloud.
pub const SHAPE_POINTS: usize = 256;
/// Output channels of the demo extractor.
pub const DEMO_C_OUT: usize = 48;
pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ShapeLabel {
    Sphere,
    Cube,
    Plane,
}

impl ShapeLabel {
    pub const ALL: [ShapeLabel; N_CLASSES] = [ShapeLabel::Sphere, ShapeLabel::Cube, ShapeLabel::Plane];

    pub fn index(self) -> usize {
        match self {
            ShapeLabel::Sphere => 0,
            ShapeLabel::Cube => 1,
            ShapeLabel::Plane => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeLabel::Sphere => "sphere",
            ShapeLabel::Cube => "cube",
            ShapeLabel::Plane => "plane",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShapeSample {
    pub cloud: PointCloud,
    pub label: ShapeLabel,
}

fn unit_normal_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn sphere_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
    unit_normal_vector(rng)
}

/// Uniform on the surface of the side-1 cube centered at the origin.
fn cube_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let face = rng.random_range(0..6u8);
    let a = rng.random_range(-0.5..0.5);
    let b = rng.random_range(-0.5..0.5);
    match face {
        0 => [0.5, a, b],
        1 => [-0.5, a, b],
        2 => [a, 0.5, b],
        3 => [a, -0.5, b],
        4 => [a, b, 0.5],
        _ => [a, b, -0.5],
    }
}

/// Orthonormal in-plane basis for a plane with the given unit normal.
fn plane_basis(normal: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    // start from the axis least aligned with the normal
    let abs = [normal[0].abs(), normal[1].abs(), normal[2].abs()];
    let mut e = [0.0; 3];
    let least = if abs[0] <= abs[1] && abs[0] <= abs[2] {
        0
    } else if abs[1] <= abs[2] {
        1
    } else {
        2
    };
    e[least] = 1.0;
    let dot = e[0] * normal[0] + e[1] * normal[1] + e[2] * normal[2];
    let mut u = [
        e[0] - dot * normal[0],
        e[1] - dot * normal[1],
        e[2] - dot * normal[2],
    ];
    let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    u = [u[0] / n, u[1] / n, u[2] / n];
    let v = [
        normal[1] * u[2] - normal[2] * u[1],
        normal[2] * u[0] - normal[0] * u[2],
        normal[0] * u[1] - normal[1] * u[0],
    ];
    (u, v)
}

/// Deterministic labeled dataset: unit sphere surfaces, unit-cube surfaces
/// and randomly oriented unit discs, with optional Gaussian jitter. Cloud
/// features are the raw coordinates.
pub fn generate_shapes(
    n_per_class: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<ShapeSample>> {
    if n_per_class == 0 {
        return Err(GamError::InvalidInput("n_per_class must be >= 1".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(GamError::InvalidInput("noise_sigma must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(N_CLASSES * n_per_class);
    for label in ShapeLabel::ALL {
        for _ in 0..n_per_class {
            let mut coords = Array2::zeros((SHAPE_POINTS, 3));
            match label {
                ShapeLabel::Sphere | ShapeLabel::Cube => {
                    for i in 0..SHAPE_POINTS {
                        let p = match label {
                            ShapeLabel::Sphere => sphere_point(&mut rng),
                            _ => cube_point(&mut rng),
                        };
                        coords[[i, 0]] = p[0];
                        coords[[i, 1]] = p[1];
                        coords[[i, 2]] = p[2];
                    }
                }
                ShapeLabel::Plane => {
                    let normal = unit_normal_vector(&mut rng);
                    let (u, v) = plane_basis(normal);
                    for i in 0..SHAPE_POINTS {
                        let r = rng.random_range(0.0..1.0f64).sqrt();
                        let theta = rng.random_range(0.0..std::f64::consts::TAU);
                        let (cu, cv) = (r * theta.cos(), r * theta.sin());
                        for a in 0..3 {
                            coords[[i, a]] = cu * u[a] + cv * v[a];
                        }
                    }
                }
            }
            if noise_sigma > 0.0 {
                for val in coords.iter_mut() {
                    let jitter: f64 = rng.sample(StandardNormal);
                    *val += noise_sigma * jitter;
                }
            }
            let features = coords.clone();
            let cloud = PointCloud::new(coords, Some(features))?;
            samples.push(ShapeSample { cloud, label });
        }
    }
    Ok(samples)
}

/// Attention pipeline weights plus the classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub gam: GamParams,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

/// The head starts at zero: logits begin uniform and no gradient reaches
/// the extractor until the head has grown, which keeps the fixed-step
/// full-batch updates stable.
pub fn init_classifier_params(
    config: &GamConfig,
    in_channels: usize,
    c_out: usize,
    seed: u64,
) -> ClassifierParams {
    let gam = init_params(config, 2 * in_channels, c_out, seed);
    ClassifierParams {
        gam,
        head_w: Array2::zeros((N_CLASSES, c_out)),
        head_b: Array1::zeros(N_CLASSES),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Sum of per-sample losses over the training split.
    pub loss_sum: f64,
    pub loss_mean: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub lr: f64,
    pub gam_enabled: bool,
    pub n_train: usize,
    pub n_test: usize,
    pub per_epoch: Vec<EpochStats>,
    pub final_train_accuracy: f64,
    pub final_test_accuracy: f64,
    pub wall_time_ms: f64,
    pub config: GamConfig,
}

/// Geometry and tape inputs for one sample, fixed across epochs: the
/// attention inputs are detached from the parameters, so the whole
/// neighborhood pipeline runs once per sample.
struct SampleContext {
    phi_input: ArrayD<f64>,
    attn_input: Option<ArrayD<f64>>,
    n_centers: usize,
    k: usize,
    label: usize,
}

fn build_context(
    sample: &ShapeSample,
    config: &GamConfig,
    gam_enabled: bool,
) -> Result<SampleContext> {
    let ctx = prepare(&sample.cloud, config)?;
    let phi_input = phi_inputs(&ctx.neighbor_features, &ctx.center_features)?.into_dyn();
    let attn_input = if gam_enabled && config.attention_enabled() {
        Some(attention_inputs(&ctx.edges, config)?.into_dyn())
    } else {
        None
    };
    Ok(SampleContext {
        phi_input,
        attn_input,
        n_centers: ctx.nbrs.n_centers(),
        k: ctx.nbrs.k(),
        label: sample.label.index(),
    })
}

struct ParamNodes {
    ids: [NodeId; 10],
}

const PARAM_NAMES: [&str; 10] = [
    "attn_w1", "attn_b1", "attn_w2", "attn_b2", "phi_w", "phi_b", "out_w", "out_b", "head_w",
    "head_b",
];

fn param_arrays(p: &ClassifierParams) -> [ArrayD<f64>; 10] {
    [
        p.gam.attn_w1.clone().into_dyn(),
        p.gam.attn_b1.clone().into_dyn(),
        p.gam.attn_w2.clone().into_dyn(),
        ArrayD::from_elem(IxDyn(&[1]), p.gam.attn_b2),
        p.gam.phi_w.clone().into_dyn(),
        p.gam.phi_b.clone().into_dyn(),
        p.gam.out_w.clone().into_dyn(),
        p.gam.out_b.clone().into_dyn(),
        p.head_w.clone().into_dyn(),
        p.head_b.clone().into_dyn(),
    ]
}

fn insert_params(tape: &mut Tape, arrays: &[ArrayD<f64>; 10]) -> ParamNodes {
    let ids = std::array::from_fn(|i| tape.leaf(arrays[i].clone()));
    ParamNodes { ids }
}

struct SampleGraph {
    loss: NodeId,
    logits: NodeId,
    // read by the pipeline-equality tests
    #[allow(dead_code)]
    f_out: NodeId,
}

/// The sample's loss graph: extractor, optional attention, balanced blend,
/// output MLP, neighborhood max-pool, center max-pool, head, cross-entropy.
fn build_sample_graph(
    tape: &mut Tape,
    pn: &ParamNodes,
    ctx: &SampleContext,
    lambda: f64,
) -> Result<SampleGraph> {
    let [attn_w1, attn_b1, attn_w2, attn_b2, phi_w, phi_b, out_w, out_b, head_w, head_b] = pn.ids;

    let phi_in = tape.leaf(ctx.phi_input.clone());
    let h = tape.affine(phi_in, phi_w, phi_b)?;
    let h = tape.relu(h);

    let a = match &ctx.attn_input {
        Some(v) => {
            let v = tape.leaf(v.clone());
            let hid = tape.affine(v, attn_w1, attn_b1)?;
            let hid = tape.relu(hid);
            let logit = tape.affine(hid, attn_w2, attn_b2)?;
            tape.sigmoid(logit)
        }
        None => tape.leaf(ArrayD::from_elem(IxDyn(&[ctx.n_centers, ctx.k, 1]), 1.0)),
    };
    let factor = tape.scalar_blend(a, lambda, 1.0, 1.0 + lambda);
    let factor = tape.broadcast_last(factor, DEMO_C_OUT)?;
    let f_pre = tape.mul(h, factor)?;
    let f_out = tape.affine(f_pre, out_w, out_b)?;
    let f_out = tape.relu(f_out);
    let pooled = tape.max_axis(f_out, 1)?;
    let global = tape.max_axis(pooled, 0)?;
    let logits = tape.affine(global, head_w, head_b)?;
    let loss = tape.softmax_cross_entropy(logits, ctx.label)?;
    Ok(SampleGraph {
        loss,
        logits,
        f_out,
    })
}

fn argmax(values: &ArrayD<f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

fn evaluate(
    contexts: &[SampleContext],
    indices: &[usize],
    arrays: &[ArrayD<f64>; 10],
    lambda: f64,
) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for &i in indices {
        let mut tape = Tape::new();
        let pn = insert_params(&mut tape, arrays);
        let graph = build_sample_graph(&mut tape, &pn, &contexts[i], lambda)?;
        if argmax(tape.value(graph.logits)) == contexts[i].label {
            correct += 1;
        }
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// Trains the shape classifier with plain full-batch gradient descent.
///
/// The dataset is split 80/20 into train/test by a seeded shuffle.
/// `gam_enabled = false` forces the attention factor to exactly one, which
/// reproduces the plain extractor pipeline bit for bit.
pub fn train_classifier(
    dataset: &[ShapeSample],
    config: &GamConfig,
    epochs: usize,
    lr: f64,
    gam_enabled: bool,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(GamError::InvalidInput("empty dataset".into()));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(GamError::InvalidInput("lr must be > 0".into()));
    }
    config.validate()?;
    let start = Instant::now();

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut split_rng);
    let n_train = ((dataset.len() * 4) / 5).max(1);
    let (train_idx, test_idx) = order.split_at(n_train);

    let contexts: Vec<SampleContext> = dataset
        .iter()
        .map(|s| build_context(s, config, gam_enabled))
        .collect::<Result<_>>()?;

    let in_channels = dataset[0].cloud.channels();
    let params = init_classifier_params(config, in_channels, DEMO_C_OUT, config.seed);
    let mut arrays = param_arrays(&params);

    let mut per_epoch = Vec::with_capacity(epochs);
    let inv_batch = 1.0 / train_idx.len() as f64;
    for epoch in 0..epochs {
        let mut loss_sum = 0.0;
        let mut grad_sum: [ArrayD<f64>; 10] =
            std::array::from_fn(|i| ArrayD::zeros(arrays[i].raw_dim()));
        for &i in train_idx {
            let mut tape = Tape::new();
            let pn = insert_params(&mut tape, &arrays);
            let graph = build_sample_graph(&mut tape, &pn, &contexts[i], config.lambda)?;
            loss_sum += tape.value(graph.loss)[[]];
            // epoch loss is the mean over the batch, so seed each sample's
            // backward pass with 1/n
            let grads = tape.backward(graph.loss, inv_batch)?;
            for (slot, &id) in grad_sum.iter_mut().zip(&pn.ids) {
                if let Some(g) = grads.get(id) {
                    *slot += g;
                }
            }
        }
        if !loss_sum.is_finite() {
            return Err(GamError::DivergedLoss { epoch });
        }
        for (value, grad) in arrays.iter_mut().zip(&grad_sum) {
            value.zip_mut_with(grad, |v, &g| *v -= lr * g);
        }
        let train_accuracy = evaluate(&contexts, train_idx, &arrays, config.lambda)?;
        let test_accuracy = evaluate(&contexts, test_idx, &arrays, config.lambda)?;
        per_epoch.push(EpochStats {
            epoch,
            loss_sum,
            loss_mean: loss_sum / train_idx.len() as f64,
            train_accuracy,
            test_accuracy,
        });
    }

    let final_train_accuracy = evaluate(&contexts, train_idx, &arrays, config.lambda)?;
    let final_test_accuracy = evaluate(&contexts, test_idx, &arrays, config.lambda)?;
    Ok(TrainReport {
        epochs,
        lr,
        gam_enabled,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        per_epoch,
        final_train_accuracy,
        final_test_accuracy,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        config: config.clone(),
    })
}

/// Analytic-vs-finite-difference check of the full classifier: one small
/// fixed cloud where every point is a center, parameters seeded by `seed`.
///
/// Freshly initialized biases are exactly zero, which parks the relu
/// pre-activations of every zero-length self-edge exactly on the kink where
/// the subgradient convention and a finite difference must disagree. The
/// check therefore evaluates at a generic point: all biases get a small
/// deterministic offset first.
pub fn gradcheck_classifier(h: f64, seed: u64) -> Result<crate::autodiff::GradReport> {
    use crate::autodiff::finite_difference_check;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let coords = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
    let features = coords.clone();
    let cloud = PointCloud::new(coords, Some(features))?;
    let config = GamConfig {
        n_centers: 6,
        k_neighbors: 3,
        radius: 2.0,
        seed: 1,
        ..GamConfig::default()
    };
    let sample = ShapeSample {
        cloud,
        label: ShapeLabel::Cube,
    };
    let ctx = build_context(&sample, &config, true)?;
    let mut params = init_classifier_params(&config, 3, DEMO_C_OUT, seed);
    let mut bias_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    // the freshly initialized head is zero, which would block every gradient
    // path below it; give it generic values as well
    params.head_w = uniform_weights(&mut bias_rng, N_CLASSES, DEMO_C_OUT);
    let mut jitter = |b: &mut Array1<f64>| {
        b.mapv_inplace(|_| {
            bias_rng.random_range(0.05..0.25) * [-1.0, 1.0][bias_rng.random_range(0..2usize)]
        });
    };
    jitter(&mut params.gam.attn_b1);
    jitter(&mut params.gam.phi_b);
    jitter(&mut params.gam.out_b);
    jitter(&mut params.head_b);
    params.gam.attn_b2 = 0.1;
    let arrays = param_arrays(&params);

    let run = |p: &[ArrayD<f64>]| -> Result<(f64, Vec<ArrayD<f64>>)> {
        let mut tape = Tape::new();
        let current: [ArrayD<f64>; 10] = std::array::from_fn(|i| p[i].clone());
        let pn = insert_params(&mut tape, &current);
        let graph = build_sample_graph(&mut tape, &pn, &ctx, config.lambda)?;
        let grads = tape.backward(graph.loss, 1.0)?;
        let out = pn
            .ids
            .iter()
            .map(|&id| {
                grads
                    .get(id)
                    .cloned()
                    .unwrap_or_else(|| ArrayD::zeros(tape.value(id).raw_dim()))
            })
            .collect();
        Ok((tape.value(graph.loss)[[]], out))
    };

    let named: Vec<(&str, ArrayD<f64>)> = PARAM_NAMES
        .iter()
        .zip(arrays.iter())
        .map(|(n, a)| (*n, a.clone()))
        .collect();
    finite_difference_check(run, &named, h)
}

/// Reference demo configuration; the acceptance suite pins its accuracy.
pub fn reference_config() -> GamConfig {
    GamConfig {
        lambda: 1.0,
        radius: 0.45,
        n_centers: 32,
        k_neighbors: 16,
        seed: 42,
        ..GamConfig::default()
    }
}
