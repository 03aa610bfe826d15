//! Reference recommenders (random, popularity, BPR matrix factorisation, plain GRU) and
//! the [`Scorer`] adapters used to evaluate them next to the sequence model.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, UserSequence};
use crate::metrics::Scorer;
use crate::numerics::{dot, neg_log_sigmoid, sigmoid, Mat, Rng};
use crate::seqmodel::{HyperParams, ModelParams};
use crate::training::{final_interest, sample_negative, train, EpochLoss, TrainConfig, TrainLog, Triple};
use crate::{Error, Result};

const MF_INIT_STREAM: u64 = 0;
const MF_TRAIN_STREAM: u64 = 1;

/// Scores drawn fresh per user, uniform on `[0, 1)`. User `u` always gets the same draw
/// for a given seed.
#[derive(Clone, Copy, Debug)]
pub struct RandomScorer {
    pub seed: u64,
    pub n_items: usize,
}

pub fn random_scores(n_items: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n_items).map(|_| rng.uniform()).collect()
}

impl Scorer for RandomScorer {
    fn scores(&self, user: usize, _seq: &UserSequence) -> Result<Vec<f64>> {
        let mut rng = Rng::with_stream(self.seed, user as u64);
        Ok(random_scores(self.n_items, &mut rng))
    }
}

/// Item frequency over all training prefixes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopModel {
    pub counts: Vec<u64>,
}

impl PopModel {
    pub fn fit(corpus: &Corpus) -> Self {
        let mut counts = vec![0u64; corpus.n_items()];
        for u in corpus.users() {
            for &i in u.train() {
                counts[i as usize] += 1;
            }
        }
        PopModel { counts }
    }

    pub fn scores(&self) -> Vec<f64> {
        self.counts.iter().map(|c| *c as f64).collect()
    }
}

impl Scorer for PopModel {
    fn scores(&self, _user: usize, _seq: &UserSequence) -> Result<Vec<f64>> {
        Ok(PopModel::scores(self))
    }
}

/// BPR matrix factorisation: `score(u, i) = w_uᵀ h_i`, order ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfModel {
    pub user_factors: Mat,
    pub item_factors: Mat,
}

/// Data-term gradient of one triple with respect to `w_u`, `h_p` and `h_q`.
#[derive(Clone, Debug, PartialEq)]
pub struct MfTripleGrad {
    pub user: Vec<f64>,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl MfModel {
    pub fn init(n_users: usize, n_items: usize, dim: usize, cfg: &TrainConfig) -> Self {
        let mut rng = Rng::with_stream(cfg.seed, MF_INIT_STREAM);
        let range = cfg.init_range;
        let mut draw = |rows: usize| {
            let data = (0..rows * dim).map(|_| rng.uniform_in(-range, range)).collect();
            Mat::from_vec(rows, dim, data).expect("shape matches data")
        };
        let user_factors = draw(n_users);
        let item_factors = draw(n_items);
        MfModel {
            user_factors,
            item_factors,
        }
    }

    pub fn dim(&self) -> usize {
        self.item_factors.cols()
    }

    pub fn score(&self, user: usize, item: u32) -> f64 {
        dot(self.user_factors.row(user), self.item_factors.row(item as usize))
    }

    /// `-ln σ(x̂_upq)` without regularisation.
    pub fn triple_loss(&self, t: &Triple) -> f64 {
        neg_log_sigmoid(self.score(t.user, t.pos) - self.score(t.user, t.neg))
    }

    pub fn triple_grad(&self, t: &Triple) -> MfTripleGrad {
        let x_hat = self.score(t.user, t.pos) - self.score(t.user, t.neg);
        let coef = sigmoid(x_hat) - 1.0;
        let w = self.user_factors.row(t.user);
        let hp = self.item_factors.row(t.pos as usize);
        let hq = self.item_factors.row(t.neg as usize);
        MfTripleGrad {
            user: hp.iter().zip(hq).map(|(p, q)| coef * (p - q)).collect(),
            pos: w.iter().map(|v| coef * v).collect(),
            neg: w.iter().map(|v| -coef * v).collect(),
        }
    }

    /// One SGD step on a triple, decaying only the three touched rows.
    pub fn sgd_triple(&mut self, t: &Triple, cfg: &TrainConfig) {
        let g = self.triple_grad(t);
        let step = |row: &mut [f64], grad: &[f64]| {
            for (v, gi) in row.iter_mut().zip(grad) {
                *v -= cfg.lr * (gi + cfg.l2 * *v);
            }
        };
        step(self.user_factors.row_mut(t.user), &g.user);
        step(self.item_factors.row_mut(t.pos as usize), &g.pos);
        step(self.item_factors.row_mut(t.neg as usize), &g.neg);
    }
}

impl Scorer for MfModel {
    fn scores(&self, user: usize, _seq: &UserSequence) -> Result<Vec<f64>> {
        self.item_factors.matvec(self.user_factors.row(user))
    }
}

/// Trains BPR-MF with one sampled negative per training-prefix item.
pub fn train_bpr_mf(corpus: &Corpus, dim: usize, cfg: &TrainConfig) -> Result<(MfModel, TrainLog)> {
    if dim == 0 {
        return Err(Error::InvalidHyper("dimension must be positive".into()));
    }
    let n_items = corpus.n_items();
    let mut model = MfModel::init(corpus.users().len(), n_items, dim, cfg);
    let histories: Vec<Vec<u32>> = corpus.users().iter().map(|u| u.history()).collect();
    let mut rng = Rng::with_stream(cfg.seed, MF_TRAIN_STREAM);
    let mut order: Vec<usize> = (0..corpus.users().len()).collect();
    let mut log = TrainLog::default();
    let start = Instant::now();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let (mut total, mut count) = (0.0, 0usize);
        for &u in &order {
            for (t, &pos) in corpus.users()[u].train().iter().enumerate() {
                let neg = sample_negative(u, &histories[u], n_items, &mut rng)?;
                let triple = Triple { user: u, pos, neg, t };
                total += model.triple_loss(&triple);
                count += 1;
                model.sgd_triple(&triple, cfg);
            }
        }
        if !model.user_factors.is_finite() || !model.item_factors.is_finite() {
            return Err(Error::NonFinite(format!("matrix factorisation at epoch {epoch}")));
        }
        log.epochs.push(EpochLoss {
            epoch,
            mean_loss: if count > 0 { total / count as f64 } else { 0.0 },
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, log))
}

/// GRU4Rec-style baseline: the same cell without attention, scored from `h` directly.
pub fn train_plain_gru(corpus: &Corpus, dim: usize, cfg: &TrainConfig) -> Result<(HyperParams, ModelParams, TrainLog)> {
    let hyper = HyperParams::plain_gru(dim, corpus.n_items())?;
    let (params, log) = train(corpus, &hyper, cfg)?;
    Ok((hyper, params, log))
}

/// Scores every item by `x_iᵀ h_o` for the interest after the user's training prefix.
#[derive(Clone, Copy, Debug)]
pub struct SequenceScorer<'a> {
    pub params: &'a ModelParams,
    pub hyper: &'a HyperParams,
}

impl Scorer for SequenceScorer<'_> {
    fn scores(&self, _user: usize, seq: &UserSequence) -> Result<Vec<f64>> {
        let h_o = final_interest(seq.train(), self.params, self.hyper)?;
        self.params.item_emb.matvec(&h_o)
    }
}
