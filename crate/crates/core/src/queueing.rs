//! Analytic queueing model for strict-priority ports with selective
//! thresholds, and a threshold/buffer optimizer.
//!
//! Each priority level is approximated as an M/M/1 queue with finite
//! capacity. Lower priorities are served only when higher ones are idle,
//! which becomes a multiplicative service-rate cascade. Selective dropping
//! splits every level into two virtual queues: the unimportant share sees
//! capacity `theta * S` and the rest sees the remaining headroom
//! `L - theta * S`. Costs are convergence-round curves over the resulting
//! loss fractions; the optimizer picks integer thresholds under a total
//! buffer budget. Formulas are generic over the float width.

use crate::scalar::Scalar;

/// Loss probability of an M/M/1 queue with (real-valued) capacity `m`:
/// `(rho^m - rho^{m+1}) / (1 - rho^{m+1})`, extended by continuity to
/// `1 / (m + 1)` at `rho = 1`. Stable in both the underloaded and the
/// overloaded regime, for capacities large enough to overflow `rho^m`.
pub fn mm1m_loss<T: Scalar>(rho: T, m: T) -> T {
    assert!(rho >= T::zero(), "utilization must be nonnegative");
    assert!(m >= T::zero(), "capacity must be nonnegative");
    let one = T::one();
    if m == T::zero() {
        return one; // no room at all: every arrival is lost
    }
    if rho == T::zero() {
        return T::zero();
    }
    let eps = T::of(1e-9);
    if (rho - one).abs() < eps {
        return one / (m + one);
    }
    if rho < one {
        // rho^m -> 0 underflow is benign here.
        let rm = rho.powf(m);
        (one - rho) * rm / (one - rm * rho)
    } else {
        // Divide through by rho^{m+1}: (rho - 1) / (rho - rho^{-m}); the
        // underflow of rho^{-m} gives the correct 1 - 1/rho limit.
        (rho - one) / (rho - rho.powf(-m))
    }
}

/// Port-level demand: one shared server, arrivals split across priority
/// queues in proportion to the tensor bytes mapped to each queue.
#[derive(Debug, Clone)]
pub struct QueueingModel<T> {
    /// Total service rate (packets per unit time).
    pub mu: T,
    /// Total arrival rate (packets per unit time).
    pub lambda: T,
    /// Fraction of traffic that is unimportant (selective-drop eligible).
    pub theta: T,
    /// Per-queue share of `lambda`; must sum to 1.
    pub arrival_shares: Vec<T>,
}

impl<T: Scalar> QueueingModel<T> {
    /// Builds the per-queue arrival split from a layer -> queue mapping,
    /// with each layer contributing in proportion to its size.
    pub fn from_layers(
        mu: T,
        lambda: T,
        theta: T,
        layer_bytes: &[u64],
        layer_queue: &[usize],
        n_queues: usize,
    ) -> Self {
        assert_eq!(layer_bytes.len(), layer_queue.len());
        let total: u64 = layer_bytes.iter().sum();
        assert!(total > 0, "model must have nonzero size");
        let mut shares = vec![T::zero(); n_queues];
        for (&bytes, &qi) in layer_bytes.iter().zip(layer_queue) {
            assert!(qi < n_queues, "layer mapped past the last queue");
            shares[qi] = shares[qi] + T::of(bytes as f64 / total as f64);
        }
        QueueingModel { mu, lambda, theta, arrival_shares: shares }
    }

    pub fn n_queues(&self) -> usize {
        self.arrival_shares.len()
    }
}

/// One level of the strict-priority cascade.
#[derive(Debug, Clone, Copy)]
pub struct CascadeStage<T> {
    pub lambda: T,
    /// Residual service rate; non-positive when the cascade has collapsed.
    pub mu: T,
    pub rho: T,
}

#[derive(Debug, Clone)]
pub struct Cascade<T> {
    pub stages: Vec<CascadeStage<T>>,
    /// False as soon as any level reaches `rho >= 1`; downstream rates are
    /// reported as computed (possibly non-positive), never clamped.
    pub feasible: bool,
}

/// Per-level rates under strict priority: `mu_i = mu * prod_{k<i} (1 - rho_k)`,
/// i.e. each level is served only when all higher levels are idle.
pub fn cascade<T: Scalar>(model: &QueueingModel<T>) -> Cascade<T> {
    let mut stages = Vec::with_capacity(model.n_queues());
    let mut feasible = true;
    let mut mu_i = model.mu;
    for &share in &model.arrival_shares {
        let lambda_i = model.lambda * share;
        let rho = if mu_i > T::zero() { lambda_i / mu_i } else { T::infinity() };
        if rho >= T::one() {
            feasible = false;
        }
        stages.push(CascadeStage { lambda: lambda_i, mu: mu_i, rho });
        // Once the residual service goes non-positive it stays there; the
        // product form only means something while the cascade is alive.
        if mu_i > T::zero() {
            mu_i = mu_i * (T::one() - rho);
        }
    }
    Cascade { stages, feasible }
}

/// How the selective (small-gradient) loss rate is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelReading {
    /// The standard blocking formula applied to the virtual small queue of
    /// capacity `theta * S` at utilization `rho`.
    #[default]
    Standard,
    /// The literal printed expression
    /// `[rho^{theta S} - (theta rho)^{S+1}] / [1 - rho^{theta S + 1}]`,
    /// kept only for comparison: it mixes `theta` into bases and exponents
    /// inconsistently and is not a probability in general, so the result is
    /// clamped to [0, 1].
    Printed,
}

/// Selective-drop probability of the unimportant share of one level.
pub fn selective_loss<T: Scalar>(rho: T, theta: T, s: u32, reading: SelReading) -> T {
    let sf = T::of(s as f64);
    match reading {
        SelReading::Standard => mm1m_loss(rho, theta * sf),
        SelReading::Printed => {
            let one = T::one();
            let num = rho.powf(theta * sf) - (theta * rho).powf(sf + one);
            let den = one - rho.powf(theta * sf + one);
            if den == T::zero() {
                return one;
            }
            (num / den).max(T::zero()).min(one)
        }
    }
}

/// Overflow probability of one level: the important share queues in the
/// headroom left above the selective threshold.
pub fn overflow_loss<T: Scalar>(rho: T, theta: T, s: u32, l: u32) -> T {
    let headroom = (T::of(l as f64) - theta * T::of(s as f64)).max(T::zero());
    mm1m_loss(rho, headroom)
}

#[derive(Debug, Clone, Copy)]
pub struct QueueLoss<T> {
    pub rho: T,
    /// Probability an unimportant packet is selectively dropped.
    pub selective: T,
    /// Probability a packet is lost to buffer overflow.
    pub overflow: T,
}

/// The cascade is infeasible: some level saturates its residual service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("queue {queue} saturates the cascade (rho >= 1)")]
pub struct Infeasible {
    pub queue: usize,
}

/// Loss split of every level for thresholds `s` and buffer limits `l`
/// (packets, `s[i] <= l[i]`). Fails explicitly on an infeasible cascade.
pub fn queue_losses<T: Scalar>(
    model: &QueueingModel<T>,
    s: &[u32],
    l: &[u32],
    reading: SelReading,
) -> Result<Vec<QueueLoss<T>>, Infeasible> {
    assert_eq!(s.len(), model.n_queues());
    assert_eq!(l.len(), model.n_queues());
    let casc = cascade(model);
    if !casc.feasible {
        let queue = casc.stages.iter().position(|st| st.rho >= T::one()).unwrap();
        return Err(Infeasible { queue });
    }
    Ok(casc
        .stages
        .iter()
        .zip(s.iter().zip(l.iter()))
        .map(|(st, (&si, &li))| QueueLoss {
            rho: st.rho,
            selective: selective_loss(st.rho, model.theta, si, reading),
            overflow: overflow_loss(st.rho, model.theta, si, li),
        })
        .collect())
}

/// Piecewise-linear convergence cost: zero up to the tolerance knee, then
/// linear in the loss fraction beyond it.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostCurve<T> {
    pub knee: T,
    pub slope: T,
}

impl<T: Scalar> CostCurve<T> {
    pub fn eval(&self, x: T) -> T {
        self.slope * (x - self.knee).max(T::zero())
    }
}

/// Per-queue convergence-cost curves for selective (small-gradient) and
/// overflow (any-gradient, so effectively large-gradient) losses.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostModel<T> {
    pub small: Vec<CostCurve<T>>,
    pub large: Vec<CostCurve<T>>,
}

impl<T: Scalar> CostModel<T> {
    /// Zero cost everywhere; any feasible thresholds are optimal.
    pub fn flat(n_queues: usize) -> Self {
        let z = CostCurve { knee: T::zero(), slope: T::zero() };
        CostModel { small: vec![z; n_queues], large: vec![z; n_queues] }
    }

    /// Default curves anchored at the measured tolerances: small gradients
    /// tolerate 1.6% loss, large 0.1%; front layers (low queue index)
    /// tolerate 1.1% against 0.4% at the back. The front/back gradient is
    /// applied as a per-queue multiplier normalized to mean 1 so the
    /// magnitude anchors stay calibrated.
    pub fn anchored(n_queues: usize, slope: T) -> Self {
        assert!(n_queues > 0);
        let front = 0.011f64;
        let back = 0.004f64;
        let raw: Vec<f64> = (0..n_queues)
            .map(|i| {
                let t = if n_queues == 1 { 0.0 } else { i as f64 / (n_queues - 1) as f64 };
                front + (back - front) * t
            })
            .collect();
        let mean = raw.iter().sum::<f64>() / n_queues as f64;
        let small = raw
            .iter()
            .map(|&r| CostCurve { knee: T::of(0.016 * r / mean), slope })
            .collect();
        let large = raw
            .iter()
            .map(|&r| CostCurve { knee: T::of(0.001 * r / mean), slope })
            .collect();
        CostModel { small, large }
    }

    pub fn n_queues(&self) -> usize {
        self.small.len()
    }

    /// Total extra convergence rounds for the given per-queue losses.
    pub fn total(&self, losses: &[QueueLoss<T>]) -> T {
        assert_eq!(losses.len(), self.n_queues());
        losses
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, qd)| {
                acc + self.small[i].eval(qd.selective) + self.large[i].eval(qd.overflow)
            })
    }
}

/// Integer thresholds chosen by the optimizer.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Thresholds {
    /// Selective threshold per queue (packets).
    pub s: Vec<u32>,
    /// Total capacity per queue (packets); `sum(l) <= budget`, `s[i] <= l[i]`.
    pub l: Vec<u32>,
    /// Objective value at the optimum.
    pub cost: f64,
}

fn objective(
    model: &QueueingModel<f64>,
    rhos: &[f64],
    s: &[u32],
    l: &[u32],
    cost: &CostModel<f64>,
    reading: SelReading,
) -> f64 {
    let mut total = 0.0;
    for i in 0..s.len() {
        let sel = selective_loss(rhos[i], model.theta, s[i], reading);
        let ovf = overflow_loss(rhos[i], model.theta, s[i], l[i]);
        total += cost.small[i].eval(sel) + cost.large[i].eval(ovf);
    }
    total
}

/// Cheapest threshold for one queue given its capacity, by exact scan.
/// Ties keep the smallest threshold, so the result is deterministic.
fn best_s_for(
    rho: f64,
    theta: f64,
    li: u32,
    small: CostCurve<f64>,
    large: CostCurve<f64>,
    reading: SelReading,
) -> (u32, f64) {
    let mut best = (1u32, f64::INFINITY);
    for si in 1..=li.max(1) {
        let c = small.eval(selective_loss(rho, theta, si, reading))
            + large.eval(overflow_loss(rho, theta, si, li));
        if c < best.1 {
            best = (si, c);
        }
    }
    best
}

/// Evenly splits the budget, front queues taking the remainder.
fn uniform_split(n: usize, budget: u32) -> Vec<u32> {
    let base = budget / n as u32;
    let mut l = vec![base; n];
    let mut rem = budget - base * n as u32;
    for slot in l.iter_mut() {
        if rem == 0 {
            break;
        }
        *slot += 1;
        rem -= 1;
    }
    l
}

fn eval_split(
    model: &QueueingModel<f64>,
    rhos: &[f64],
    l: &[u32],
    cost: &CostModel<f64>,
    reading: SelReading,
) -> (Vec<u32>, f64) {
    let mut s = Vec::with_capacity(l.len());
    let mut total = 0.0;
    for i in 0..l.len() {
        let (si, c) = best_s_for(rhos[i], model.theta, l[i], cost.small[i], cost.large[i], reading);
        s.push(si);
        total += c;
    }
    (s, total)
}

/// Number of ways to split `budget` into `n` positive parts, saturating.
fn composition_count(n: usize, budget: u32) -> u64 {
    // C(budget - 1, n - 1) with saturation; small n keeps this exact.
    let k = (n - 1) as u64;
    let b = budget as u64;
    if b < n as u64 {
        return 0;
    }
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc.saturating_mul(b - 1 - i) / (i + 1);
        if acc > 10_000_000 {
            return u64::MAX;
        }
    }
    acc
}

/// Minimizes the convergence-cost objective over integer thresholds with
/// `sum(l) <= budget` and `1 <= s[i] <= l[i]`.
///
/// The objective is separable once the buffer split is fixed, so each
/// queue's threshold is an independent scan. Splits are enumerated
/// exhaustively while that stays small; otherwise seeded random restarts
/// plus unit-move coordinate descent refine the uniform split. A flat cost
/// returns the uniform split itself: candidates replace the incumbent only
/// on strict improvement.
pub fn optimize_thresholds(
    model: &QueueingModel<f64>,
    cost: &CostModel<f64>,
    budget: u32,
    reading: SelReading,
) -> Result<Thresholds, Infeasible> {
    let n = model.n_queues();
    assert!(n > 0, "need at least one queue");
    assert_eq!(cost.n_queues(), n, "cost model must cover every queue");
    assert!(budget >= n as u32, "budget must give every queue one packet");
    let casc = cascade(model);
    if !casc.feasible {
        let queue = casc.stages.iter().position(|st| st.rho >= 1.0).unwrap();
        return Err(Infeasible { queue });
    }
    let rhos: Vec<f64> = casc.stages.iter().map(|st| st.rho).collect();

    let l0 = uniform_split(n, budget);
    let (s0, c0) = eval_split(model, &rhos, &l0, cost, reading);
    let mut best = Thresholds { s: s0, l: l0, cost: c0 };

    if composition_count(n, budget) <= 200_000 {
        // Exact enumeration of every split into positive parts.
        let mut l = vec![1u32; n];
        let spare = budget - n as u32;
        enumerate_splits(&mut l, 0, spare, &mut |l| {
            let (s, c) = eval_split(model, &rhos, l, cost, reading);
            if c < best.cost {
                best = Thresholds { s, l: l.to_vec(), cost: c };
            }
        });
        return Ok(best);
    }

    // Coordinate descent with seeded random restarts for wide ports.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x7185_0971);
    let mut starts = vec![best.l.clone()];
    for _ in 0..4 {
        let mut l = vec![1u32; n];
        for _ in 0..(budget - n as u32) {
            l[rng.gen_range(0..n)] += 1;
        }
        starts.push(l);
    }
    for start in starts {
        let (mut s, mut c) = eval_split(model, &rhos, &start, cost, reading);
        let mut l = start;
        loop {
            let mut improved = false;
            for from in 0..n {
                if l[from] <= 1 {
                    continue;
                }
                for to in 0..n {
                    if to == from {
                        continue;
                    }
                    let mut cand = l.clone();
                    cand[from] -= 1;
                    cand[to] += 1;
                    let (cs, cc) = eval_split(model, &rhos, &cand, cost, reading);
                    if cc < c {
                        l = cand;
                        s = cs;
                        c = cc;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if c < best.cost {
            best = Thresholds { s, l, cost: c };
        }
    }
    Ok(best)
}

fn enumerate_splits(l: &mut Vec<u32>, qi: usize, spare: u32, f: &mut impl FnMut(&[u32])) {
    let n = l.len();
    if qi == n - 1 {
        l[qi] = 1 + spare;
        f(l);
        return;
    }
    for extra in 0..=spare {
        l[qi] = 1 + extra;
        enumerate_splits(l, qi + 1, spare - extra, f);
    }
}

/// Exhaustive reference optimizer: tries every `(s, l)` combination.
/// Exponential in the queue count; only for validating small instances.
pub fn optimize_thresholds_naive(
    model: &QueueingModel<f64>,
    cost: &CostModel<f64>,
    budget: u32,
    reading: SelReading,
) -> Result<Thresholds, Infeasible> {
    let n = model.n_queues();
    let casc = cascade(model);
    if !casc.feasible {
        let queue = casc.stages.iter().position(|st| st.rho >= 1.0).unwrap();
        return Err(Infeasible { queue });
    }
    let rhos: Vec<f64> = casc.stages.iter().map(|st| st.rho).collect();
    let mut best: Option<Thresholds> = None;
    let mut l = vec![1u32; n];
    enumerate_splits(&mut l, 0, budget - n as u32, &mut |l| {
        let mut s = vec![1u32; n];
        enumerate_s(&mut s, 0, l, &mut |s| {
            let c = objective(model, &rhos, s, l, cost, reading);
            if best.as_ref().is_none_or(|b| c < b.cost) {
                best = Some(Thresholds { s: s.to_vec(), l: l.to_vec(), cost: c });
            }
        });
    });
    Ok(best.expect("nonempty search space"))
}

fn enumerate_s(s: &mut Vec<u32>, qi: usize, l: &[u32], f: &mut impl FnMut(&[u32])) {
    if qi == s.len() {
        f(s);
        return;
    }
    for si in 1..=l[qi] {
        s[qi] = si;
        enumerate_s(s, qi + 1, l, f);
    }
}
