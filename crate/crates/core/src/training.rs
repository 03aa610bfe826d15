//! BPR learning of the sequence model with backpropagation through time.
//!
//! At step `t` of a user's training prefix the positive item is the one observed at
//! `t + 1`; one negative is drawn from items the user never touched. The preference is
//! `x̂ = h_oᵀ (x_p - x_q)` and the per-triple loss `-ln σ(x̂)`. A whole user sequence is
//! one mini-batch: its triple gradients are summed and applied in a single SGD step,
//! together with one `λ θ` regularisation term.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::numerics::{dot, neg_log_sigmoid, sigmoid, Mat, Rng};
use crate::seqmodel::{forward_sequence, HyperParams, ModelParams, Recurrence, StepTrace, Variant};
use crate::{Error, Result};

/// RNG stream ids under the training seed.
const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Learning rate α.
    pub lr: f64,
    /// L2 coefficient λ_Θ.
    pub l2: f64,
    pub epochs: usize,
    /// Parameters start uniform on `[-init_range, init_range]`.
    pub init_range: f64,
    pub seed: u64,
    /// Divide each sequence's summed gradient by its number of triples.
    #[serde(default)]
    pub average_grads: bool,
    /// Rescale the mini-batch gradient to at most this global L2 norm.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            l2: 0.001,
            epochs: 20,
            init_range: 0.5,
            seed: 0,
            average_grads: false,
            clip_norm: None,
        }
    }
}

/// A BPR training example: at step `t` of user `user`, `pos` should outrank `neg`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triple {
    pub user: usize,
    pub pos: u32,
    pub neg: u32,
    pub t: usize,
}

/// Gradient of the data term, one slot per parameter tensor.
#[derive(Clone, Debug)]
pub struct GradAccumulator {
    pub grads: ModelParams,
    /// Σ −ln σ(x̂) over the triples that produced `grads`.
    pub loss: f64,
    pub triples: usize,
}

impl GradAccumulator {
    pub fn zeros(hyper: &HyperParams) -> Self {
        GradAccumulator {
            grads: ModelParams::for_hyper(hyper),
            loss: 0.0,
            triples: 0,
        }
    }

    pub fn reset(&mut self) {
        for (_, m) in self.grads.fields_mut() {
            m.fill(0.0);
        }
        self.loss = 0.0;
        self.triples = 0;
    }

    pub fn sq_norm(&self, variant: Variant) -> f64 {
        self.grads.sq_norm(variant)
    }

    fn scale(&mut self, factor: f64) {
        for (_, m) in self.grads.fields_mut() {
            m.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Draws every parameter i.i.d. uniform on `[-init_range, init_range]`, tensor by tensor
/// in [`crate::seqmodel::PARAM_NAMES`] order, row-major within a tensor. Tensors the
/// variant does not train are drawn and then zeroed, so shared tensors agree across
/// variants for the same seed.
pub fn init_params(hyper: &HyperParams, cfg: &TrainConfig) -> ModelParams {
    let mut rng = Rng::with_stream(cfg.seed, INIT_STREAM);
    let mut params = ModelParams::for_hyper(hyper);
    let range = cfg.init_range;
    for (name, m) in params.fields_mut() {
        for v in m.as_mut_slice() {
            *v = if range == 0.0 {
                rng.next_u64();
                0.0
            } else {
                rng.uniform_in(-range, range)
            };
        }
        if !hyper.variant.trains(name) {
            m.fill(0.0);
        }
    }
    params
}

/// Uniform draw from items not in `history` (sorted, deduplicated).
pub fn sample_negative(user: usize, history: &[u32], n_items: usize, rng: &mut Rng) -> Result<u32> {
    debug_assert!(history.windows(2).all(|w| w[0] < w[1]));
    let free = n_items.saturating_sub(history.len());
    if free == 0 {
        return Err(Error::NoNegative(user));
    }
    if free * 4 >= n_items {
        loop {
            let q = rng.below(n_items as u64) as u32;
            if history.binary_search(&q).is_err() {
                return Ok(q);
            }
        }
    }
    let idx = rng.below(free as u64) as usize;
    let q = (0..n_items as u32)
        .filter(|i| history.binary_search(i).is_err())
        .nth(idx)
        .expect("free count matches complement size");
    Ok(q)
}

/// `h_oᵀ (x_p - x_q)`.
pub fn preference(h_o: &[f64], x_p: &[f64], x_q: &[f64]) -> f64 {
    h_o.iter()
        .zip(x_p.iter().zip(x_q))
        .map(|(h, (p, q))| h * (p - q))
        .sum()
}

/// `-ln σ(x̂) + (λ/2)‖Θ‖²` over the tensors `variant` trains.
pub fn bpr_loss(x_hat: f64, l2: f64, params: &ModelParams, variant: Variant) -> f64 {
    neg_log_sigmoid(x_hat) + 0.5 * l2 * params.sq_norm(variant)
}

fn check_pairs(traces_len: usize, pairs: &[(u32, u32)], n_items: usize) -> Result<()> {
    if pairs.len() > traces_len {
        return Err(Error::Dimension {
            context: "training pairs",
            expected: traces_len,
            actual: pairs.len(),
        });
    }
    for (t, &(p, q)) in pairs.iter().enumerate() {
        for item in [p, q] {
            if item as usize >= n_items {
                return Err(Error::ItemOutOfRange {
                    item,
                    position: t,
                    n_items,
                });
            }
        }
    }
    Ok(())
}

/// Data loss `Σ_t −ln σ(x̂^t)` of one sequence, where `pairs[t]` is the (positive,
/// negative) target for step `t`.
pub fn sequence_loss(
    items: &[u32],
    pairs: &[(u32, u32)],
    params: &ModelParams,
    hyper: &HyperParams,
) -> Result<f64> {
    let traces = forward_sequence(items, params, hyper)?;
    check_pairs(traces.len(), pairs, hyper.n_items)?;
    Ok(pairs
        .iter()
        .zip(&traces)
        .map(|(&(p, q), tr)| {
            let x_hat = preference(
                &tr.h_o,
                params.item_emb.row(p as usize),
                params.item_emb.row(q as usize),
            );
            neg_log_sigmoid(x_hat)
        })
        .sum())
}

/// Reverse pass through one attention block.
///
/// Adds `∂/∂r` and `∂/∂Q` into `grad_r`/`grad_q` and returns the gradient for each
/// context row.
fn attention_backward(
    rows: &Mat,
    att: &crate::seqmodel::Attention,
    r: &Mat,
    q: &Mat,
    grad_out: &[f64],
    grad_r: &mut Mat,
    grad_q: &mut Mat,
) -> Vec<Vec<f64>> {
    let w = rows.rows();
    let a = &att.weights;
    let grad_a: Vec<f64> = (0..w).map(|j| dot(grad_out, rows.row(j))).collect();
    let mean: f64 = a.iter().zip(&grad_a).map(|(x, y)| x * y).sum();
    let mut grad_rows = Vec::with_capacity(w);
    for j in 0..w {
        let mut g_row: Vec<f64> = grad_out.iter().map(|g| a[j] * g).collect();
        let grad_e = a[j] * (grad_a[j] - mean);
        if grad_e != 0.0 {
            let act = att.activations.row(j);
            crate::numerics::axpy(grad_e, act, grad_r.as_mut_slice());
            let grad_u: Vec<f64> = act
                .iter()
                .zip(r.as_slice())
                .map(|(s, ri)| grad_e * ri * (1.0 - s * s))
                .collect();
            grad_q.add_outer(&grad_u, rows.row(j));
            q.tmul_vec_acc(&grad_u, &mut g_row);
        }
        grad_rows.push(g_row);
    }
    grad_rows
}

/// Input side of one gate: routes `∂L/∂pre` into `U`, `V`, `W`, `b` and the inputs.
struct GateInputs<'a> {
    x: &'a [f64],
    x_c: Option<&'a [f64]>,
    grad_x: &'a mut [f64],
    grad_xc: &'a mut [f64],
}

impl GateInputs<'_> {
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &mut self,
        grad_pre: &[f64],
        recurrent_in: &[f64],
        u: &Mat,
        v: &Mat,
        grad_u: &mut Mat,
        grad_v: &mut Mat,
        grad_w: &mut Mat,
        grad_b: &mut Mat,
    ) {
        grad_u.add_outer(grad_pre, self.x);
        grad_w.add_outer(grad_pre, recurrent_in);
        crate::numerics::axpy(1.0, grad_pre, grad_b.as_mut_slice());
        u.tmul_vec_acc(grad_pre, self.grad_x);
        if let Some(x_c) = self.x_c {
            grad_v.add_outer(grad_pre, x_c);
            v.tmul_vec_acc(grad_pre, self.grad_xc);
        }
    }
}

/// Exact gradient of `Σ_t −ln σ(x̂^t)` with respect to every parameter, given the forward
/// traces of one sequence and the (positive, negative) pair for each step that has one.
///
/// Regularisation is not included; [`sgd_step`] adds it.
pub fn backprop_sequence(
    traces: &[StepTrace],
    pairs: &[(u32, u32)],
    params: &ModelParams,
    hyper: &HyperParams,
) -> Result<GradAccumulator> {
    let mut acc = GradAccumulator::zeros(hyper);
    backprop_into(traces, pairs, params, hyper, &mut acc)?;
    Ok(acc)
}

fn backprop_into(
    traces: &[StepTrace],
    pairs: &[(u32, u32)],
    params: &ModelParams,
    hyper: &HyperParams,
    acc: &mut GradAccumulator,
) -> Result<()> {
    check_pairs(traces.len(), pairs, hyper.n_items)?;
    let d = hyper.dim;
    let n = traces.len();
    let p = params;
    let g = &mut acc.grads;
    let full = hyper.variant == Variant::Hca;
    let wx = hyper.window_x;
    let wh = hyper.window_h;

    // Gradient flowing into h^t from everything downstream of it.
    let mut grad_h = vec![vec![0.0; d]; n];

    for t in (0..n).rev() {
        let tr = &traces[t];

        if let Some(&(pos, neg)) = pairs.get(t) {
            let x_p = p.item_emb.row(pos as usize);
            let x_q = p.item_emb.row(neg as usize);
            let x_hat = preference(&tr.h_o, x_p, x_q);
            acc.loss += neg_log_sigmoid(x_hat);
            acc.triples += 1;
            // d(−ln σ(x̂))/dx̂
            let coef = sigmoid(x_hat) - 1.0;
            let grad_rep: Vec<f64> = x_p.iter().zip(x_q).map(|(a, b)| coef * (a - b)).collect();
            crate::numerics::axpy(coef, &tr.h_o, g.item_emb.row_mut(pos as usize));
            crate::numerics::axpy(-coef, &tr.h_o, g.item_emb.row_mut(neg as usize));

            if full {
                let grad_pre: Vec<f64> = grad_rep
                    .iter()
                    .zip(&tr.h_o)
                    .map(|(gr, o)| gr * (1.0 - o * o))
                    .collect();
                g.e.add_outer(&grad_pre, tr.h());
                g.f.add_outer(&grad_pre, tr.h_c());
                p.e.tmul_vec_acc(&grad_pre, &mut grad_h[t]);
                let mut grad_hc = vec![0.0; d];
                p.f.tmul_vec_acc(&grad_pre, &mut grad_hc);
                let grad_rows = attention_backward(
                    &tr.c_h,
                    &tr.hidden_att,
                    &p.r_h,
                    &p.q_h,
                    &grad_hc,
                    &mut g.r_h,
                    &mut g.q_h,
                );
                // Row j of C_h^t is h at step t - (w_h - 1) + j; earlier slots are padding.
                for (j, gr) in grad_rows.iter().enumerate() {
                    if let Some(src) = (t + j + 1).checked_sub(wh) {
                        crate::numerics::axpy(1.0, gr, &mut grad_h[src]);
                    }
                }
            } else {
                crate::numerics::axpy(1.0, &grad_rep, &mut grad_h[t]);
            }
        }

        let gh = std::mem::take(&mut grad_h[t]);
        if gh.iter().all(|v| *v == 0.0) {
            continue;
        }
        let gates = &tr.gates;
        let h_prev = &tr.h_prev;
        let mut grad_prev: Vec<f64> = gh.iter().zip(&gates.z).map(|(a, z)| a * (1.0 - z)).collect();
        let grad_pre_z: Vec<f64> = (0..d)
            .map(|i| gh[i] * (gates.h_tilde[i] - h_prev[i]) * gates.z[i] * (1.0 - gates.z[i]))
            .collect();
        let grad_pre_c: Vec<f64> = (0..d)
            .map(|i| gh[i] * gates.z[i] * (1.0 - gates.h_tilde[i] * gates.h_tilde[i]))
            .collect();
        let reset_h: Vec<f64> = gates.r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut grad_reset_h = vec![0.0; d];
        p.w_c.tmul_vec_acc(&grad_pre_c, &mut grad_reset_h);
        let grad_pre_r: Vec<f64> = (0..d)
            .map(|i| grad_reset_h[i] * h_prev[i] * gates.r[i] * (1.0 - gates.r[i]))
            .collect();
        for i in 0..d {
            grad_prev[i] += grad_reset_h[i] * gates.r[i];
        }

        let x = &tr.x;
        let x_c = full.then(|| tr.x_c());
        let mut grad_x = vec![0.0; d];
        let mut grad_xc = vec![0.0; d];
        let mut inputs = GateInputs {
            x,
            x_c,
            grad_x: &mut grad_x,
            grad_xc: &mut grad_xc,
        };
        inputs.backward(&grad_pre_z, h_prev, &p.u_z, &p.v_z, &mut g.u_z, &mut g.v_z, &mut g.w_z, &mut g.b_z);
        inputs.backward(&grad_pre_r, h_prev, &p.u_r, &p.v_r, &mut g.u_r, &mut g.v_r, &mut g.w_r, &mut g.b_r);
        inputs.backward(&grad_pre_c, &reset_h, &p.u_c, &p.v_c, &mut g.u_c, &mut g.v_c, &mut g.w_c, &mut g.b_c);
        p.w_z.tmul_vec_acc(&grad_pre_z, &mut grad_prev);
        p.w_r.tmul_vec_acc(&grad_pre_r, &mut grad_prev);
        crate::numerics::axpy(1.0, &grad_x, g.item_emb.row_mut(tr.item as usize));

        if full {
            let grad_rows = attention_backward(
                &tr.c_x,
                &tr.input_att,
                &p.r_x,
                &p.q_x,
                &grad_xc,
                &mut g.r_x,
                &mut g.q_x,
            );
            // Row j of C_x^t is the input at step t - (w_x - 1) + j.
            for (j, gr) in grad_rows.iter().enumerate() {
                if let Some(src) = (t + j + 1).checked_sub(wx) {
                    let item = traces[src].item as usize;
                    crate::numerics::axpy(1.0, gr, g.item_emb.row_mut(item));
                }
            }
        }

        if t > 0 {
            crate::numerics::axpy(1.0, &grad_prev, &mut grad_h[t - 1]);
        }
    }

    for (name, m) in acc.grads.fields() {
        if !m.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    Ok(())
}

/// `θ ← θ − α (g + λ θ)` over the tensors the variant trains.
pub fn sgd_step(params: &mut ModelParams, grads: &GradAccumulator, cfg: &TrainConfig, variant: Variant) {
    let lr = cfg.lr;
    let l2 = cfg.l2;
    for ((name, theta), (_, grad)) in params.fields_mut().into_iter().zip(grads.grads.fields()) {
        if !variant.trains(name) {
            continue;
        }
        for (t, g) in theta.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *t -= lr * (g + l2 * *t);
        }
    }
}

/// Mean per-triple data loss of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
}

/// Loss log of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLoss>,
}

impl TrainLog {
    /// `epoch<TAB>mean_loss<TAB>wallclock_seconds`, one line per epoch.
    pub fn to_tsv(&self) -> String {
        self.epochs
            .iter()
            .map(|e| format!("{}\t{}\t{:.3}\n", e.epoch, e.mean_loss, e.seconds))
            .collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }
}

/// Trains from a fresh [`init_params`].
pub fn train(corpus: &Corpus, hyper: &HyperParams, cfg: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    let mut params = init_params(hyper, cfg);
    let log = train_from(&mut params, corpus, hyper, cfg)?;
    Ok((params, log))
}

/// Runs `cfg.epochs` epochs of per-user SGD on `params`.
pub fn train_from(
    params: &mut ModelParams,
    corpus: &Corpus,
    hyper: &HyperParams,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    hyper.validate()?;
    params.check(hyper)?;
    if hyper.n_items != corpus.n_items() {
        return Err(Error::InvalidHyper(format!(
            "model has {} items but corpus has {}",
            hyper.n_items,
            corpus.n_items()
        )));
    }
    let histories: Vec<Vec<u32>> = corpus.users().iter().map(|u| u.history()).collect();
    let mut rng = Rng::with_stream(cfg.seed, TRAIN_STREAM);
    let mut order: Vec<usize> = (0..corpus.users().len()).collect();
    let mut acc = GradAccumulator::zeros(hyper);
    let mut log = TrainLog::default();
    let start = Instant::now();

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut count = 0usize;
        for &u in &order {
            let train = corpus.users()[u].train();
            if train.len() < 2 {
                continue;
            }
            let mut pairs = Vec::with_capacity(train.len() - 1);
            for &pos in &train[1..] {
                pairs.push((pos, sample_negative(u, &histories[u], hyper.n_items, &mut rng)?));
            }
            let traces = forward_sequence(train, params, hyper)?;
            acc.reset();
            backprop_into(&traces, &pairs, params, hyper, &mut acc)?;
            total += acc.loss;
            count += acc.triples;
            if cfg.average_grads && acc.triples > 0 {
                acc.scale(1.0 / acc.triples as f64);
            }
            if let Some(max) = cfg.clip_norm {
                let norm = acc.sq_norm(hyper.variant).sqrt();
                if norm > max {
                    acc.scale(max / norm);
                }
            }
            sgd_step(params, &acc, cfg, hyper.variant);
        }
        let mean_loss = if count > 0 { total / count as f64 } else { 0.0 };
        log::debug!("epoch {epoch}: mean loss {mean_loss:.6}");
        log.epochs.push(EpochLoss {
            epoch,
            mean_loss,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(log)
}

/// The representation used to score items after the last training step: the inputs are
/// replayed through the recurrence and the hidden-state attention and fusion head are
/// evaluated once, at the final step.
pub fn final_interest(items: &[u32], params: &ModelParams, hyper: &HyperParams) -> Result<Vec<f64>> {
    if items.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut rec = Recurrence::new(params, hyper)?;
    for (position, &item) in items.iter().enumerate() {
        rec.step(item, position)?;
    }
    let (_, _, h_o) = rec.head()?;
    Ok(h_o)
}
