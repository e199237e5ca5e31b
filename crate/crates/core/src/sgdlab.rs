//! Gradient drop-tolerance lab: trains tiny models with configurable
//! drop policies applied to the workers' gradients and measures the cost
//! in epochs, producing the calibrated tolerance curves the threshold
//! optimizer consumes.
//!
//! The training loop mimics data-parallel SGD with a parameter server:
//! every worker computes a gradient on its own batch, a drop policy thins
//! each worker's vector, and the server averages whatever arrives per
//! element. Elements nobody delivered keep their previous value for the
//! step. Gradients are carried at wire precision (the scalar parameter,
//! f32 in the default aliases) while the server accumulates in f64.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::queueing::{CostCurve, CostModel};
use crate::scalar::Scalar;
use crate::sim::RngHub;

/// What the tiny model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TaskKind {
    /// Linear regression on a synthetic teacher.
    LinRegSynthetic,
    /// Two-layer tanh regressor distilling a random teacher of the same shape.
    TwoLayerMlpSynthetic,
    /// Small tanh classifier on Gaussian blobs.
    SmallMlpClassification,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum TargetMetric {
    /// Full-set loss at or below this value.
    LossBelow(f64),
    /// Full-set accuracy at or above this value.
    AccuracyAtLeast(f64),
}

#[derive(Debug, Clone)]
pub struct LayerSlice {
    pub name: &'static str,
    pub range: Range<usize>,
}

#[derive(Debug, Clone)]
struct Dataset<S> {
    /// Row-major `n_samples x input_dim`.
    x: Vec<S>,
    /// Regression targets (empty for classification).
    y: Vec<S>,
    /// Class labels (empty for regression).
    labels: Vec<usize>,
}

/// A self-contained training task: fixed data, architecture, and stopping
/// rule. Construction is deterministic in the seed.
#[derive(Debug, Clone)]
pub struct ToyTask<S> {
    pub kind: TaskKind,
    pub n_samples: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub target: TargetMetric,
    pub max_epochs: u32,
    data: Dataset<S>,
    layers: Vec<LayerSlice>,
}

fn normal<S: Scalar>(rng: &mut ChaCha12Rng, scale: f64) -> S {
    let z: f64 = StandardNormal.sample(rng);
    S::of(z * scale)
}

impl<S: Scalar> ToyTask<S> {
    /// y = x . w* + noise over 16 features.
    pub fn linreg(seed: u64) -> Self {
        let d = 16;
        let n = 256;
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x11a5_0001);
        let teacher: Vec<f64> = (0..d).map(|_| normal::<f64>(&mut rng, 1.0)).collect();
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| normal::<f64>(&mut rng, 1.0)).collect();
            let clean: f64 = row.iter().zip(&teacher).map(|(a, b)| a * b).sum();
            y.push(S::of(clean + normal::<f64>(&mut rng, 0.01)));
            x.extend(row.into_iter().map(S::of));
        }
        ToyTask {
            kind: TaskKind::LinRegSynthetic,
            n_samples: n,
            input_dim: d,
            hidden: 0,
            n_classes: 0,
            batch_size: 32,
            lr: 0.02,
            target: TargetMetric::LossBelow(0.01),
            max_epochs: 60,
            data: Dataset { x, y, labels: Vec::new() },
            layers: vec![LayerSlice { name: "w", range: 0..d }],
        }
    }

    /// Distills a random 8-16-1 tanh teacher with a student of the same shape.
    pub fn mlp_regression(seed: u64) -> Self {
        let d = 8;
        let h = 16;
        let n = 256;
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x11a5_0002);
        let w1: Vec<f64> = (0..d * h).map(|_| normal::<f64>(&mut rng, 1.0 / (d as f64).sqrt())).collect();
        let b1: Vec<f64> = (0..h).map(|_| normal::<f64>(&mut rng, 0.1)).collect();
        let w2: Vec<f64> = (0..h).map(|_| normal::<f64>(&mut rng, 1.0 / (h as f64).sqrt())).collect();
        let b2 = normal::<f64>(&mut rng, 0.1);
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| normal::<f64>(&mut rng, 1.0)).collect();
            let mut out = b2;
            for j in 0..h {
                let z: f64 = (0..d).map(|i| w1[j * d + i] * row[i]).sum::<f64>() + b1[j];
                out += w2[j] * z.tanh();
            }
            y.push(S::of(out));
            x.extend(row.into_iter().map(S::of));
        }
        let layers = vec![
            LayerSlice { name: "fc0.w", range: 0..d * h },
            LayerSlice { name: "fc0.b", range: d * h..d * h + h },
            LayerSlice { name: "fc1.w", range: d * h + h..d * h + 2 * h },
            LayerSlice { name: "fc1.b", range: d * h + 2 * h..d * h + 2 * h + 1 },
        ];
        ToyTask {
            kind: TaskKind::TwoLayerMlpSynthetic,
            n_samples: n,
            input_dim: d,
            hidden: h,
            n_classes: 0,
            batch_size: 32,
            lr: 0.05,
            target: TargetMetric::LossBelow(0.05),
            max_epochs: 150,
            data: Dataset { x, y, labels: Vec::new() },
            layers,
        }
    }

    /// Three Gaussian blobs in the plane, 2-24-3 tanh/softmax classifier.
    pub fn mlp_classification(seed: u64) -> Self {
        let d = 2;
        let h = 24;
        let k = 3;
        let n = 300;
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x11a5_0003);
        let mut x = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % k;
            let ang = std::f64::consts::TAU * c as f64 / k as f64;
            x.push(S::of(2.5 * ang.cos() + normal::<f64>(&mut rng, 0.6)));
            x.push(S::of(2.5 * ang.sin() + normal::<f64>(&mut rng, 0.6)));
            labels.push(c);
        }
        let layers = vec![
            LayerSlice { name: "fc0.w", range: 0..d * h },
            LayerSlice { name: "fc0.b", range: d * h..d * h + h },
            LayerSlice { name: "fc1.w", range: d * h + h..d * h + h + h * k },
            LayerSlice { name: "fc1.b", range: d * h + h + h * k..d * h + h + h * k + k },
        ];
        ToyTask {
            kind: TaskKind::SmallMlpClassification,
            n_samples: n,
            input_dim: d,
            hidden: h,
            n_classes: k,
            batch_size: 30,
            lr: 0.10,
            target: TargetMetric::AccuracyAtLeast(0.95),
            max_epochs: 150,
            data: Dataset { x, y: Vec::new(), labels },
        layers,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.last().map(|l| l.range.end).unwrap_or(0)
    }

    pub fn layers(&self) -> &[LayerSlice] {
        &self.layers
    }

    fn init_params(&self, rng: &mut ChaCha12Rng) -> Vec<S> {
        match self.kind {
            TaskKind::LinRegSynthetic => vec![S::zero(); self.n_params()],
            _ => {
                let d = self.input_dim;
                let h = self.hidden;
                let mut w = Vec::with_capacity(self.n_params());
                for _ in 0..d * h {
                    w.push(normal::<S>(rng, 0.5 / (d as f64).sqrt()));
                }
                for _ in 0..h {
                    w.push(S::zero());
                }
                let fan_out = self.n_params() - w.len();
                let outs = if self.n_classes > 0 { self.n_classes } else { 1 };
                for _ in 0..fan_out - outs {
                    w.push(normal::<S>(rng, 0.5 / (h as f64).sqrt()));
                }
                for _ in 0..outs {
                    w.push(S::zero());
                }
                w
            }
        }
    }

    /// Batch loss and gradient at wire precision. Math runs in f64; the
    /// returned vector is narrowed to the scalar type, mirroring what a
    /// worker would put on the wire.
    fn loss_and_grad(&self, w: &[S], batch: &[usize]) -> (f64, Vec<S>) {
        let mut g = vec![0.0f64; self.n_params()];
        let inv = 1.0 / batch.len() as f64;
        let mut loss = 0.0f64;
        match self.kind {
            TaskKind::LinRegSynthetic => {
                let d = self.input_dim;
                for &s in batch {
                    let row: Vec<f64> =
                        (0..d).map(|i| self.data.x[s * d + i].to_f64().unwrap()).collect();
                    let pred: f64 =
                        row.iter().zip(w).map(|(xi, wi)| xi * wi.to_f64().unwrap()).sum();
                    let err = pred - self.data.y[s].to_f64().unwrap();
                    loss += err * err * inv;
                    for i in 0..d {
                        g[i] += 2.0 * err * row[i] * inv;
                    }
                }
            }
            TaskKind::TwoLayerMlpSynthetic => {
                let (d, h) = (self.input_dim, self.hidden);
                let (w1, rest) = w.split_at(d * h);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                for &s in batch {
                    let row: Vec<f64> =
                        (0..d).map(|i| self.data.x[s * d + i].to_f64().unwrap()).collect();
                    let mut a1 = vec![0.0f64; h];
                    let mut out = b2[0].to_f64().unwrap();
                    for j in 0..h {
                        let z: f64 = (0..d)
                            .map(|i| w1[j * d + i].to_f64().unwrap() * row[i])
                            .sum::<f64>()
                            + b1[j].to_f64().unwrap();
                        a1[j] = z.tanh();
                        out += w2[j].to_f64().unwrap() * a1[j];
                    }
                    let err = out - self.data.y[s].to_f64().unwrap();
                    loss += err * err * inv;
                    let dout = 2.0 * err * inv;
                    for j in 0..h {
                        g[d * h + h + j] += dout * a1[j];
                        let dz = dout * w2[j].to_f64().unwrap() * (1.0 - a1[j] * a1[j]);
                        g[d * h + j] += dz;
                        for i in 0..d {
                            g[j * d + i] += dz * row[i];
                        }
                    }
                    g[d * h + 2 * h] += dout;
                }
            }
            TaskKind::SmallMlpClassification => {
                let (d, h, k) = (self.input_dim, self.hidden, self.n_classes);
                let (w1, rest) = w.split_at(d * h);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h * k);
                for &s in batch {
                    let row: Vec<f64> =
                        (0..d).map(|i| self.data.x[s * d + i].to_f64().unwrap()).collect();
                    let mut a1 = vec![0.0f64; h];
                    for j in 0..h {
                        let z: f64 = (0..d)
                            .map(|i| w1[j * d + i].to_f64().unwrap() * row[i])
                            .sum::<f64>()
                            + b1[j].to_f64().unwrap();
                        a1[j] = z.tanh();
                    }
                    let mut logits = vec![0.0f64; k];
                    for c in 0..k {
                        logits[c] = (0..h)
                            .map(|j| w2[c * h + j].to_f64().unwrap() * a1[j])
                            .sum::<f64>()
                            + b2[c].to_f64().unwrap();
                    }
                    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
                    let zsum: f64 = exps.iter().sum();
                    let label = self.data.labels[s];
                    loss += -(exps[label] / zsum).ln() * inv;
                    let mut dz1 = vec![0.0f64; h];
                    for c in 0..k {
                        let dlogit = (exps[c] / zsum - if c == label { 1.0 } else { 0.0 }) * inv;
                        for j in 0..h {
                            g[d * h + h + c * h + j] += dlogit * a1[j];
                            dz1[j] += dlogit * w2[c * h + j].to_f64().unwrap();
                        }
                        g[d * h + h + h * k + c] += dlogit;
                    }
                    for j in 0..h {
                        let dz = dz1[j] * (1.0 - a1[j] * a1[j]);
                        g[d * h + j] += dz;
                        for i in 0..d {
                            g[j * d + i] += dz * row[i];
                        }
                    }
                }
            }
        }
        (loss, g.into_iter().map(S::of).collect())
    }

    /// Full-set metric: mean loss for regression, accuracy for
    /// classification.
    pub fn metric(&self, w: &[S]) -> f64 {
        match self.kind {
            TaskKind::SmallMlpClassification => {
                let all: Vec<usize> = (0..self.n_samples).collect();
                let mut hits = 0usize;
                let (d, h, k) = (self.input_dim, self.hidden, self.n_classes);
                let (w1, rest) = w.split_at(d * h);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h * k);
                for &s in &all {
                    let mut a1 = vec![0.0f64; h];
                    for j in 0..h {
                        let z: f64 = (0..d)
                            .map(|i| {
                                w1[j * d + i].to_f64().unwrap()
                                    * self.data.x[s * d + i].to_f64().unwrap()
                            })
                            .sum::<f64>()
                            + b1[j].to_f64().unwrap();
                        a1[j] = z.tanh();
                    }
                    let mut best = (0usize, f64::NEG_INFINITY);
                    for c in 0..k {
                        let z: f64 = (0..h)
                            .map(|j| w2[c * h + j].to_f64().unwrap() * a1[j])
                            .sum::<f64>()
                            + b2[c].to_f64().unwrap();
                        if z > best.1 {
                            best = (c, z);
                        }
                    }
                    if best.0 == self.data.labels[s] {
                        hits += 1;
                    }
                }
                hits as f64 / self.n_samples as f64
            }
            _ => {
                let all: Vec<usize> = (0..self.n_samples).collect();
                self.loss_and_grad(w, &all).0
            }
        }
    }

    pub fn target_met(&self, metric: f64) -> bool {
        match self.target {
            TargetMetric::LossBelow(t) => metric <= t,
            TargetMetric::AccuracyAtLeast(t) => metric >= t,
        }
    }

    /// Confirms the target is reachable with no drops within the epoch
    /// budget; returns the baseline epoch count.
    pub fn validate(&self, seed: u64) -> Result<u32, String> {
        let out = train_with_drops(self, &DropPolicy::Uniform { p: 0.0 }, Granularity::Element, 1, seed);
        out.epochs.ok_or_else(|| {
            format!("task never reaches its target without drops (final metric {})", out.final_metric)
        })
    }
}

/// Positional band of the parameter vector (layer order, front = input side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum LayerBand {
    Front20,
    Middle20,
    Back20,
}

/// Magnitude band of the current gradient, per worker and step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum MagBand {
    Smallest20,
    Medium20,
    Largest20,
}

/// How gradients get thinned on their way to the server. `p` is always the
/// drop probability within the band the policy addresses.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum DropPolicy {
    Uniform { p: f64 },
    LayerBand { band: LayerBand, p: f64 },
    MagnitudeBand { band: MagBand, p: f64 },
}

impl DropPolicy {
    pub fn p(&self) -> f64 {
        match self {
            DropPolicy::Uniform { p } | DropPolicy::LayerBand { p, .. } | DropPolicy::MagnitudeBand { p, .. } => *p,
        }
    }

    pub fn label(&self) -> String {
        match self {
            DropPolicy::Uniform { .. } => "uniform".into(),
            DropPolicy::LayerBand { band, .. } => match band {
                LayerBand::Front20 => "layer-front-20".into(),
                LayerBand::Middle20 => "layer-middle-20".into(),
                LayerBand::Back20 => "layer-back-20".into(),
            },
            DropPolicy::MagnitudeBand { band, .. } => match band {
                MagBand::Smallest20 => "mag-smallest-20".into(),
                MagBand::Medium20 => "mag-medium-20".into(),
                MagBand::Largest20 => "mag-largest-20".into(),
            },
        }
    }
}

/// Drop unit: single elements, or contiguous blocks mirroring packet
/// payloads (350 gradients per packet at the default geometry).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Granularity {
    Element,
    Block(usize),
}

fn unit_ranges(n: usize, gran: Granularity) -> Vec<Range<usize>> {
    match gran {
        Granularity::Element => (0..n).map(|i| i..i + 1).collect(),
        Granularity::Block(b) => {
            assert!(b > 0);
            (0..n.div_ceil(b)).map(|k| k * b..((k + 1) * b).min(n)).collect()
        }
    }
}

/// Marks the elements one worker loses this step. Returned mask is true
/// where the element is dropped.
pub fn drop_mask<S: Scalar>(
    policy: &DropPolicy,
    gran: Granularity,
    grad: &[S],
    rng: &mut ChaCha12Rng,
) -> Vec<bool> {
    let units = unit_ranges(grad.len(), gran);
    let nu = units.len();
    let mut mask = vec![false; grad.len()];
    let in_band: Vec<bool> = match policy {
        DropPolicy::Uniform { .. } => vec![true; nu],
        DropPolicy::LayerBand { band, .. } => {
            // Positional 20% slice by unit index.
            let lo;
            let hi;
            match band {
                LayerBand::Front20 => {
                    lo = 0;
                    hi = (nu as f64 * 0.2).ceil() as usize;
                }
                LayerBand::Middle20 => {
                    lo = (nu as f64 * 0.4).floor() as usize;
                    hi = ((nu as f64 * 0.6).ceil() as usize).max(lo + 1);
                }
                LayerBand::Back20 => {
                    lo = (nu as f64 * 0.8).floor() as usize;
                    hi = nu;
                }
            }
            (0..nu).map(|u| u >= lo && u < hi.min(nu)).collect()
        }
        DropPolicy::MagnitudeBand { band, .. } => {
            // Rank units by mean absolute gradient, index-stable on ties.
            let mags: Vec<f64> = units
                .iter()
                .map(|r| {
                    grad[r.clone()]
                        .iter()
                        .map(|g| g.to_f64().unwrap().abs())
                        .sum::<f64>()
                        / r.len() as f64
                })
                .collect();
            let mut order: Vec<usize> = (0..nu).collect();
            order.sort_by(|&a, &b| mags[a].partial_cmp(&mags[b]).unwrap().then(a.cmp(&b)));
            let mut rank = vec![0usize; nu];
            for (r, &u) in order.iter().enumerate() {
                rank[u] = r;
            }
            let f = |r: usize| r as f64 / nu as f64;
            (0..nu)
                .map(|u| match band {
                    MagBand::Smallest20 => f(rank[u]) < 0.2,
                    MagBand::Medium20 => (0.4..0.6).contains(&f(rank[u])),
                    MagBand::Largest20 => f(rank[u]) >= 0.8,
                })
                .collect()
        }
    };
    let p = policy.p();
    for (u, range) in units.iter().enumerate() {
        if in_band[u] && rng.gen::<f64>() < p {
            for slot in &mut mask[range.clone()] {
                *slot = true;
            }
        }
    }
    mask
}

/// Averages surviving per-worker gradients element-wise. Returns the mean
/// update (zero where skipped) and the skip mask for elements no worker
/// delivered.
pub fn aggregate_received<S: Scalar>(grads: &[Vec<S>], masks: &[Vec<bool>]) -> (Vec<f64>, Vec<bool>) {
    assert_eq!(grads.len(), masks.len());
    let n = grads[0].len();
    let mut sum = vec![0.0f64; n];
    let mut cnt = vec![0u32; n];
    for (g, m) in grads.iter().zip(masks) {
        assert_eq!(g.len(), n);
        assert_eq!(m.len(), n);
        for i in 0..n {
            if !m[i] {
                sum[i] += g[i].to_f64().unwrap();
                cnt[i] += 1;
            }
        }
    }
    let mut skipped = vec![false; n];
    for i in 0..n {
        if cnt[i] == 0 {
            skipped[i] = true;
        } else {
            sum[i] /= cnt[i] as f64;
        }
    }
    (sum, skipped)
}

/// Result of one training run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DropOutcome {
    /// Epochs until the target metric was met; None when the budget ran
    /// out or the run diverged.
    pub epochs: Option<u32>,
    pub final_metric: f64,
    pub seed: u64,
}

/// Data-parallel SGD with per-worker gradient drops. Plain SGD, fixed
/// learning rate, no momentum or weight decay. Deterministic in the seed.
pub fn train_with_drops<S: Scalar>(
    task: &ToyTask<S>,
    policy: &DropPolicy,
    gran: Granularity,
    n_workers: usize,
    seed: u64,
) -> DropOutcome {
    assert!(n_workers >= 1);
    assert!((0.0..1.0).contains(&policy.p()), "drop probability must be in [0, 1)");
    let hub = RngHub::new(seed);
    let mut init_rng = hub.stream("sgdlab-init");
    let mut batch_rngs: Vec<ChaCha12Rng> =
        (0..n_workers).map(|w| hub.stream(&format!("sgdlab-batch-{w}"))).collect();
    // Drop coins come from their own streams so a p = 0 run walks the
    // exact trajectory of a no-drop baseline.
    let mut drop_rngs: Vec<ChaCha12Rng> =
        (0..n_workers).map(|w| hub.stream(&format!("sgdlab-drop-{w}"))).collect();

    let mut w = task.init_params(&mut init_rng);
    let steps_per_epoch = (task.n_samples / task.batch_size).max(1);
    let mut grads: Vec<Vec<S>> = Vec::with_capacity(n_workers);
    let mut masks: Vec<Vec<bool>> = Vec::with_capacity(n_workers);
    for epoch in 1..=task.max_epochs {
        for _ in 0..steps_per_epoch {
            grads.clear();
            masks.clear();
            for wk in 0..n_workers {
                let batch: Vec<usize> = (0..task.batch_size)
                    .map(|_| batch_rngs[wk].gen_range(0..task.n_samples))
                    .collect();
                let (_, g) = task.loss_and_grad(&w, &batch);
                let mask = drop_mask(policy, gran, &g, &mut drop_rngs[wk]);
                grads.push(g);
                masks.push(mask);
            }
            let (mean, _skipped) = aggregate_received(&grads, &masks);
            for i in 0..w.len() {
                // Skipped elements get a zero mean and keep their value.
                let next = w[i].to_f64().unwrap() - task.lr * mean[i];
                w[i] = S::of(next);
            }
        }
        let m = task.metric(&w);
        if !m.is_finite() {
            return DropOutcome { epochs: None, final_metric: m, seed };
        }
        if task.target_met(m) {
            return DropOutcome { epochs: Some(epoch), final_metric: m, seed };
        }
    }
    let m = task.metric(&w);
    DropOutcome { epochs: None, final_metric: m, seed }
}

/// One row of a drop sweep, ready for CSV and curve fitting.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub policy: String,
    pub p: f64,
    pub seed: u64,
    /// Epochs to target, with a did-not-converge run encoded as
    /// `max_epochs + 1`.
    pub epochs: u32,
    pub final_metric: f64,
}

/// Runs `policy(p)` across a p-grid and seed ensemble.
pub fn sweep<S: Scalar>(
    task: &ToyTask<S>,
    make_policy: impl Fn(f64) -> DropPolicy,
    gran: Granularity,
    n_workers: usize,
    p_grid: &[f64],
    seeds: &[u64],
) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(p_grid.len() * seeds.len());
    for &p in p_grid {
        let policy = make_policy(p);
        for &seed in seeds {
            let out = train_with_drops(task, &policy, gran, n_workers, seed);
            rows.push(SweepRow {
                policy: policy.label(),
                p,
                seed,
                epochs: out.epochs.unwrap_or(task.max_epochs + 1),
                final_metric: out.final_metric,
            });
        }
    }
    rows
}

/// Pool-adjacent-violators isotonic regression: the closest (weighted
/// least squares) non-decreasing sequence to `y`.
pub fn isotonic_nondecreasing<T: Scalar>(y: &[T], weight: &[T]) -> Vec<T> {
    assert_eq!(y.len(), weight.len());
    // Blocks of (mean, weight, count), merged while out of order.
    let mut blocks: Vec<(T, T, usize)> = Vec::with_capacity(y.len());
    for (&v, &w) in y.iter().zip(weight) {
        blocks.push((v, w, 1));
        while blocks.len() >= 2 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            let m = (m1 * w1 + m2 * w2) / w;
            blocks.push((m, w, c1 + c2));
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (m, _, c) in blocks {
        out.extend(std::iter::repeat_n(m, c));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FitError {
    #[error("band {0} needs at least two distinct drop rates")]
    TooFewRates(String),
    #[error("band {0} at p={1} needs at least three seeds")]
    TooFewSeeds(String, String),
    #[error("fit needs bands {0:?}")]
    MissingBands(&'static [&'static str]),
}

/// Median epochs per (band, p), isotonic over p, then a knee/slope read.
fn fit_band(points: &BTreeMap<u64, Vec<f64>>, label: &str, baseline: f64) -> Result<CostCurve<f64>, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewRates(label.into()));
    }
    let mut ps = Vec::with_capacity(points.len());
    let mut med = Vec::with_capacity(points.len());
    let mut wts = Vec::with_capacity(points.len());
    for (&pbits, epochs) in points {
        let p = f64::from_bits(pbits);
        if epochs.len() < 3 {
            return Err(FitError::TooFewSeeds(label.into(), format!("{p}")));
        }
        let mut v = epochs.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = v[v.len() / 2];
        ps.push(p);
        med.push((m - baseline).max(0.0));
        wts.push(epochs.len() as f64);
    }
    let fit = isotonic_nondecreasing(&med, &wts);
    // Knee: the largest p whose fitted extra cost is still zero.
    let mut knee = 0.0;
    for (i, &f) in fit.iter().enumerate() {
        if f <= 1e-9 {
            knee = ps[i];
        } else {
            break;
        }
    }
    // Slope: least squares through the knee over the costly points.
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &f) in fit.iter().enumerate() {
        let dx = ps[i] - knee;
        if dx > 0.0 && f > 0.0 {
            num += f * dx * wts[i];
            den += dx * dx * wts[i];
        }
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    Ok(CostCurve { knee, slope })
}

/// Fitted tolerance curves of the bands the optimizer needs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BandFits {
    pub small: CostCurve<f64>,
    pub large: CostCurve<f64>,
    pub front: Option<CostCurve<f64>>,
    pub back: Option<CostCurve<f64>>,
}

/// Distills a drop sweep into the per-queue convergence-cost model. The
/// smallest/largest magnitude bands anchor the small/large curves; when
/// front/back layer bands are present their knees set a per-queue
/// multiplier, normalized to mean 1 across queues.
pub fn fit_cost_curves(rows: &[SweepRow], baseline_epochs: f64, n_queues: usize) -> Result<CostModel<f64>, FitError> {
    let mut by_band: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        by_band
            .entry(r.policy.clone())
            .or_default()
            .entry(r.p.to_bits())
            .or_default()
            .push(r.epochs as f64);
    }
    let fit_of = |label: &str| -> Option<Result<CostCurve<f64>, FitError>> {
        by_band.get(label).map(|pts| fit_band(pts, label, baseline_epochs))
    };
    let small = fit_of("mag-smallest-20")
        .ok_or(FitError::MissingBands(&["mag-smallest-20", "mag-largest-20"]))??;
    let large = fit_of("mag-largest-20")
        .ok_or(FitError::MissingBands(&["mag-smallest-20", "mag-largest-20"]))??;
    let front = fit_of("layer-front-20").transpose()?;
    let back = fit_of("layer-back-20").transpose()?;
    let fits = BandFits { small, large, front, back };
    Ok(cost_model_from_fits(&fits, n_queues))
}

/// Expands band fits into per-queue curves.
pub fn cost_model_from_fits(fits: &BandFits, n_queues: usize) -> CostModel<f64> {
    assert!(n_queues > 0);
    let mult: Vec<f64> = match (&fits.front, &fits.back) {
        (Some(f), Some(b)) if f.knee > 0.0 || b.knee > 0.0 => {
            let raw: Vec<f64> = (0..n_queues)
                .map(|i| {
                    let t = if n_queues == 1 { 0.0 } else { i as f64 / (n_queues - 1) as f64 };
                    f.knee + (b.knee - f.knee) * t
                })
                .collect();
            let mean = raw.iter().sum::<f64>() / n_queues as f64;
            if mean > 0.0 {
                raw.into_iter().map(|x| x / mean).collect()
            } else {
                vec![1.0; n_queues]
            }
        }
        _ => vec![1.0; n_queues],
    };
    let small = mult
        .iter()
        .map(|&m| CostCurve { knee: fits.small.knee * m, slope: fits.small.slope })
        .collect();
    let large = mult
        .iter()
        .map(|&m| CostCurve { knee: fits.large.knee * m, slope: fits.large.slope })
        .collect();
    CostModel { small, large }
}
