//! Checkpoint and run-manifest documents.
//!
//! A checkpoint is pretty-printed JSON. Every tensor is stored as a named, shape-annotated
//! flat array of shortest round-trip decimals, so save → load → save reproduces the same
//! bytes.

use std::fmt;

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use hca_seqrec::baselines::{MfModel, PopModel, RandomScorer, SequenceScorer};
use hca_seqrec::corpus::Corpus;
use hca_seqrec::metrics::Scorer;
use hca_seqrec::numerics::Mat;
use hca_seqrec::seqmodel::{HyperParams, ModelParams, Variant};
use hca_seqrec::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Hca,
    Gru,
    Bprmf,
    Pop,
    Random,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Hca => "hca",
            ModelKind::Gru => "gru",
            ModelKind::Bprmf => "bprmf",
            ModelKind::Pop => "pop",
            ModelKind::Random => "random",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Tensor {
    fn from_mat(name: &str, m: &Mat) -> Self {
        Tensor {
            name: name.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            values: m.as_slice().to_vec(),
        }
    }

    fn to_mat(&self) -> Result<Mat> {
        Mat::from_vec(self.rows, self.cols, self.values.clone())
            .with_context(|| format!("tensor {}", self.name))
    }
}

/// A trained (or fitted) model ready to score.
#[derive(Clone, Debug)]
pub enum Model {
    Sequence { hyper: HyperParams, params: ModelParams },
    Mf(MfModel),
    Pop(PopModel),
    Random(RandomScorer),
}

impl Model {
    pub fn scorer(&self) -> Box<dyn Scorer + '_> {
        match self {
            Model::Sequence { hyper, params } => Box::new(SequenceScorer { params, hyper }),
            Model::Mf(m) => Box::new(m.clone()),
            Model::Pop(p) => Box::new(p.clone()),
            Model::Random(r) => Box::new(*r),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelKind,
    /// Present for the recurrent models.
    pub hyper: Option<HyperParams>,
    pub config: TrainConfig,
    pub items: Vec<String>,
    /// User ids in factor-row order (BPR-MF only).
    pub users: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(kind: ModelKind, model: &Model, config: &TrainConfig, corpus: &Corpus) -> Self {
        let mut hyper = None;
        let mut users = Vec::new();
        let tensors = match model {
            Model::Sequence { hyper: h, params } => {
                hyper = Some(*h);
                params
                    .fields()
                    .iter()
                    .map(|(name, m)| Tensor::from_mat(name, m))
                    .collect()
            }
            Model::Mf(m) => {
                users = corpus.users().iter().map(|u| u.id.clone()).collect();
                vec![
                    Tensor::from_mat("W", &m.user_factors),
                    Tensor::from_mat("H", &m.item_factors),
                ]
            }
            Model::Pop(p) => vec![Tensor {
                name: "counts".into(),
                rows: p.counts.len(),
                cols: 1,
                values: p.counts.iter().map(|c| *c as f64).collect(),
            }],
            Model::Random(_) => Vec::new(),
        };
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model: kind,
            hyper,
            config: config.clone(),
            items: corpus.item_ids().to_vec(),
            users,
            tensors,
        }
    }

    /// Name used for this model in reports, e.g. `hca-x2-h3`.
    pub fn method_name(&self) -> String {
        match (self.model, self.hyper) {
            (ModelKind::Hca, Some(h)) => format!("hca-x{}-h{}", h.window_x, h.window_h),
            (kind, _) => kind.to_string(),
        }
    }

    fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .with_context(|| format!("checkpoint has no tensor {name}"))
    }

    pub fn to_model(&self) -> Result<Model> {
        let n_items = self.items.len();
        match self.model {
            ModelKind::Hca | ModelKind::Gru => {
                let hyper = self.hyper.context("recurrent checkpoint without hyperparameters")?;
                let expected = match self.model {
                    ModelKind::Hca => Variant::Hca,
                    _ => Variant::PlainGru,
                };
                ensure!(hyper.variant == expected, "checkpoint model {} has variant {:?}", self.model, hyper.variant);
                ensure!(hyper.n_items == n_items, "hyperparameters name {} items but the vocabulary has {n_items}", hyper.n_items);
                hyper.validate()?;
                let mut params = ModelParams::for_hyper(&hyper);
                for (name, m) in params.fields_mut() {
                    let t = self.tensor(name)?;
                    ensure!(
                        (t.rows, t.cols) == m.shape(),
                        "tensor {name} has shape {}x{}, expected {}x{}",
                        t.rows,
                        t.cols,
                        m.rows(),
                        m.cols()
                    );
                    *m = t.to_mat()?;
                }
                params.check(&hyper)?;
                Ok(Model::Sequence { hyper, params })
            }
            ModelKind::Bprmf => {
                let w = self.tensor("W")?.to_mat()?;
                let h = self.tensor("H")?.to_mat()?;
                ensure!(w.rows() == self.users.len(), "W has {} rows for {} users", w.rows(), self.users.len());
                ensure!(h.rows() == n_items, "H has {} rows for {n_items} items", h.rows());
                ensure!(w.cols() == h.cols(), "factor widths differ: {} vs {}", w.cols(), h.cols());
                Ok(Model::Mf(MfModel {
                    user_factors: w,
                    item_factors: h,
                }))
            }
            ModelKind::Pop => {
                let t = self.tensor("counts")?;
                ensure!(t.rows == n_items && t.cols == 1, "counts has shape {}x{}", t.rows, t.cols);
                let counts = t
                    .values
                    .iter()
                    .map(|v| {
                        ensure!(*v >= 0.0 && v.fract() == 0.0, "count {v} is not a non-negative integer");
                        Ok(*v as u64)
                    })
                    .collect::<Result<_>>()?;
                Ok(Model::Pop(PopModel { counts }))
            }
            ModelKind::Random => Ok(Model::Random(RandomScorer {
                seed: self.config.seed,
                n_items,
            })),
        }
    }

    /// Refuses corpora whose vocabulary (or, for BPR-MF, user list) differs from training.
    pub fn check_corpus(&self, corpus: &Corpus) -> Result<()> {
        if self.items != corpus.item_ids() {
            bail!(
                "checkpoint vocabulary ({} items) does not match the corpus vocabulary ({} items)",
                self.items.len(),
                corpus.n_items()
            );
        }
        if self.model == ModelKind::Bprmf
            && !self.users.iter().map(String::as_str).eq(corpus.users().iter().map(|u| u.id.as_str()))
        {
            bail!("checkpoint user list does not match the corpus users");
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(s).context("malformed checkpoint")?;
        ensure!(
            ckpt.format_version == CHECKPOINT_FORMAT_VERSION,
            "unsupported checkpoint format_version {} (expected {CHECKPOINT_FORMAT_VERSION})",
            ckpt.format_version
        );
        Ok(ckpt)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to repeat a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub argv: Vec<String>,
    pub model: ModelKind,
    pub seed: u64,
    pub corpus: String,
    pub corpus_sha256: String,
    pub hyper: Option<HyperParams>,
    pub config: TrainConfig,
    pub checkpoint: String,
    pub checkpoint_sha256: String,
    pub loss_log: Option<String>,
    pub started_unix: u64,
    pub wallclock_seconds: f64,
}
