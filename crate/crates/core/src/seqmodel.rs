//! Forward pass of the hierarchical contextual attention GRU.
//!
//! Per time step `t`:
//!
//! 1. `x^t` (row of the item table) enters a ring of the last `w_x` inputs. Attention
//!    over that ring yields the contextual input `x_c^t`.
//! 2. A GRU cell whose three pre-activations also receive `V_* x_c^t` produces `h^t`.
//! 3. `h^t` enters a ring of the last `w_h` hidden states; attention over it yields
//!    `h_c^t`.
//! 4. The overall interest is `h_o^t = tanh(E h^t + F h_c^t)`.
//!
//! Only `h^t` is recurrent; `h_o^t` is an output head.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::numerics::{dot, sigmoid, softmax, Mat};
use crate::{Error, Result};

/// Largest accepted attention window.
pub const MAX_WINDOW: usize = 16;

/// Which network the parameters drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Full model: input attention, context-augmented cell, hidden attention, fusion head.
    Hca,
    /// Plain GRU. Windows are 1, `V_*` and the attention/fusion parameters are frozen at
    /// zero and the item scores come from `h^t` directly.
    PlainGru,
}

impl Variant {
    /// Whether the named parameter is part of this variant's trainable set.
    pub fn trains(self, name: &str) -> bool {
        match self {
            Variant::Hca => true,
            Variant::PlainGru => matches!(
                name,
                "X" | "U_z" | "U_r" | "U_c" | "W_z" | "W_r" | "W_c" | "b_z" | "b_r" | "b_c"
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperParams {
    pub dim: usize,
    pub window_x: usize,
    pub window_h: usize,
    pub n_items: usize,
    pub variant: Variant,
}

impl HyperParams {
    pub fn new(dim: usize, window_x: usize, window_h: usize, n_items: usize) -> Result<Self> {
        let hyper = HyperParams {
            dim,
            window_x,
            window_h,
            n_items,
            variant: Variant::Hca,
        };
        hyper.validate()?;
        Ok(hyper)
    }

    pub fn plain_gru(dim: usize, n_items: usize) -> Result<Self> {
        let hyper = HyperParams {
            dim,
            window_x: 1,
            window_h: 1,
            n_items,
            variant: Variant::PlainGru,
        };
        hyper.validate()?;
        Ok(hyper)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::InvalidHyper("dim must be >= 1".into()));
        }
        for (name, w) in [("w_x", self.window_x), ("w_h", self.window_h)] {
            if !(1..=MAX_WINDOW).contains(&w) {
                return Err(Error::InvalidHyper(format!(
                    "{name} = {w} outside [1, {MAX_WINDOW}]"
                )));
            }
        }
        if self.n_items < 2 {
            return Err(Error::InvalidHyper("n_items must be >= 2".into()));
        }
        if self.variant == Variant::PlainGru && (self.window_x != 1 || self.window_h != 1) {
            return Err(Error::InvalidHyper(
                "plain GRU requires w_x = w_h = 1".into(),
            ));
        }
        Ok(())
    }
}

/// Names of every parameter tensor, in the fixed order used for initialisation,
/// flattening and serialisation.
pub const PARAM_NAMES: [&str; 19] = [
    "X", "U_z", "U_r", "U_c", "W_z", "W_r", "W_c", "V_z", "V_r", "V_c", "b_z", "b_r", "b_c",
    "r_x", "Q_x", "r_h", "Q_h", "E", "F",
];

/// The full parameter set. Bias and attention vectors are stored as `d x 1` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub item_emb: Mat,
    pub u_z: Mat,
    pub u_r: Mat,
    pub u_c: Mat,
    pub w_z: Mat,
    pub w_r: Mat,
    pub w_c: Mat,
    pub v_z: Mat,
    pub v_r: Mat,
    pub v_c: Mat,
    pub b_z: Mat,
    pub b_r: Mat,
    pub b_c: Mat,
    pub r_x: Mat,
    pub q_x: Mat,
    pub r_h: Mat,
    pub q_h: Mat,
    pub e: Mat,
    pub f: Mat,
}

impl ModelParams {
    pub fn zeros(n_items: usize, dim: usize) -> Self {
        let sq = || Mat::zeros(dim, dim);
        let col = || Mat::zeros(dim, 1);
        ModelParams {
            item_emb: Mat::zeros(n_items, dim),
            u_z: sq(),
            u_r: sq(),
            u_c: sq(),
            w_z: sq(),
            w_r: sq(),
            w_c: sq(),
            v_z: sq(),
            v_r: sq(),
            v_c: sq(),
            b_z: col(),
            b_r: col(),
            b_c: col(),
            r_x: col(),
            q_x: sq(),
            r_h: col(),
            q_h: sq(),
            e: sq(),
            f: sq(),
        }
    }

    pub fn for_hyper(hyper: &HyperParams) -> Self {
        Self::zeros(hyper.n_items, hyper.dim)
    }

    pub fn dim(&self) -> usize {
        self.item_emb.cols()
    }

    pub fn n_items(&self) -> usize {
        self.item_emb.rows()
    }

    /// Tensors paired with their names, in [`PARAM_NAMES`] order.
    pub fn fields(&self) -> [(&'static str, &Mat); 19] {
        [
            ("X", &self.item_emb),
            ("U_z", &self.u_z),
            ("U_r", &self.u_r),
            ("U_c", &self.u_c),
            ("W_z", &self.w_z),
            ("W_r", &self.w_r),
            ("W_c", &self.w_c),
            ("V_z", &self.v_z),
            ("V_r", &self.v_r),
            ("V_c", &self.v_c),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
            ("b_c", &self.b_c),
            ("r_x", &self.r_x),
            ("Q_x", &self.q_x),
            ("r_h", &self.r_h),
            ("Q_h", &self.q_h),
            ("E", &self.e),
            ("F", &self.f),
        ]
    }

    pub fn fields_mut(&mut self) -> [(&'static str, &mut Mat); 19] {
        [
            ("X", &mut self.item_emb),
            ("U_z", &mut self.u_z),
            ("U_r", &mut self.u_r),
            ("U_c", &mut self.u_c),
            ("W_z", &mut self.w_z),
            ("W_r", &mut self.w_r),
            ("W_c", &mut self.w_c),
            ("V_z", &mut self.v_z),
            ("V_r", &mut self.v_r),
            ("V_c", &mut self.v_c),
            ("b_z", &mut self.b_z),
            ("b_r", &mut self.b_r),
            ("b_c", &mut self.b_c),
            ("r_x", &mut self.r_x),
            ("Q_x", &mut self.q_x),
            ("r_h", &mut self.r_h),
            ("Q_h", &mut self.q_h),
            ("E", &mut self.e),
            ("F", &mut self.f),
        ]
    }

    /// Squared Frobenius norm over the tensors `variant` trains.
    pub fn sq_norm(&self, variant: Variant) -> f64 {
        self.fields()
            .iter()
            .filter(|(name, _)| variant.trains(name))
            .map(|(_, m)| m.sq_norm())
            .sum()
    }

    /// Concatenation of the trainable tensors in [`PARAM_NAMES`] order.
    pub fn flatten(&self, variant: Variant) -> Vec<f64> {
        let mut out = Vec::new();
        for (name, m) in self.fields() {
            if variant.trains(name) {
                out.extend_from_slice(m.as_slice());
            }
        }
        out
    }

    /// Inverse of [`ModelParams::flatten`]; frozen tensors are left untouched.
    pub fn unflatten(&mut self, variant: Variant, flat: &[f64]) -> Result<()> {
        let expected: usize = self
            .fields()
            .iter()
            .filter(|(n, _)| variant.trains(n))
            .map(|(_, m)| m.len())
            .sum();
        if expected != flat.len() {
            return Err(Error::Dimension {
                context: "ModelParams::unflatten",
                expected,
                actual: flat.len(),
            });
        }
        let mut offset = 0;
        for (name, m) in self.fields_mut() {
            if variant.trains(name) {
                let n = m.len();
                m.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
                offset += n;
            }
        }
        Ok(())
    }

    /// Verifies every tensor has the shape `hyper` implies and holds finite values.
    pub fn check(&self, hyper: &HyperParams) -> Result<()> {
        let d = hyper.dim;
        for (name, m) in self.fields() {
            let want = match name {
                "X" => (hyper.n_items, d),
                "b_z" | "b_r" | "b_c" | "r_x" | "r_h" => (d, 1),
                _ => (d, d),
            };
            if m.shape() != want {
                return Err(Error::InvalidHyper(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    m.shape(),
                    want
                )));
            }
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("parameter {name}")));
            }
        }
        Ok(())
    }
}

/// Gate activations of one cell evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct GateOutput {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub h: Vec<f64>,
}

fn ensure_len(context: &'static str, v: &[f64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::Dimension {
            context,
            expected: d,
            actual: v.len(),
        });
    }
    Ok(())
}

fn ensure_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

/// Shared cell body. `context` adds the `V_* x_c` terms.
fn cell(x: &[f64], context: Option<&[f64]>, h_prev: &[f64], p: &ModelParams) -> Result<GateOutput> {
    let d = p.dim();
    ensure_len("cell input", x, d)?;
    ensure_len("cell previous state", h_prev, d)?;
    if let Some(xc) = context {
        ensure_len("cell contextual input", xc, d)?;
    }

    let pre = |u: &Mat, v: &Mat, w: &Mat, w_in: &[f64], b: &Mat| {
        let mut a = u.mul_vec(x);
        if let Some(xc) = context {
            v.mul_vec_acc(xc, &mut a);
        }
        w.mul_vec_acc(w_in, &mut a);
        for (ai, bi) in a.iter_mut().zip(b.as_slice()) {
            *ai += bi;
        }
        a
    };

    let z: Vec<f64> = pre(&p.u_z, &p.v_z, &p.w_z, h_prev, &p.b_z)
        .into_iter()
        .map(sigmoid)
        .collect();
    ensure_finite("update gate z", &z)?;
    let r: Vec<f64> = pre(&p.u_r, &p.v_r, &p.w_r, h_prev, &p.b_r)
        .into_iter()
        .map(sigmoid)
        .collect();
    ensure_finite("reset gate r", &r)?;
    let reset_h: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let h_tilde: Vec<f64> = pre(&p.u_c, &p.v_c, &p.w_c, &reset_h, &p.b_c)
        .into_iter()
        .map(f64::tanh)
        .collect();
    ensure_finite("candidate state h_tilde", &h_tilde)?;
    let h: Vec<f64> = (0..d)
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * h_tilde[i])
        .collect();
    ensure_finite("hidden state h", &h)?;
    Ok(GateOutput { z, r, h_tilde, h })
}

/// Plain GRU cell.
pub fn gru_cell(x: &[f64], h_prev: &[f64], params: &ModelParams) -> Result<GateOutput> {
    cell(x, None, h_prev, params)
}

/// GRU cell whose gates also see the contextual input `x_c`.
pub fn hca_cell(
    x: &[f64],
    x_c: &[f64],
    h_prev: &[f64],
    params: &ModelParams,
) -> Result<GateOutput> {
    cell(x, Some(x_c), h_prev, params)
}

/// Result of attending over a context matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention {
    /// `tanh(Q c_j)` for each context row `c_j`, one row each.
    pub activations: Mat,
    /// Unnormalised scores `e_j = rᵀ tanh(Q c_j)`.
    pub scores: Vec<f64>,
    /// `softmax(e)`.
    pub weights: Vec<f64>,
    /// Weighted sum of the context rows.
    pub context: Vec<f64>,
}

fn attend(rows: &Mat, r: &Mat, q: &Mat) -> Result<Attention> {
    let d = rows.cols();
    if rows.rows() == 0 {
        return Err(Error::EmptySoftmax);
    }
    if q.cols() != d {
        return Err(Error::Dimension {
            context: "attention matrix Q",
            expected: d,
            actual: q.cols(),
        });
    }
    if r.len() != q.rows() {
        return Err(Error::Dimension {
            context: "attention vector r",
            expected: q.rows(),
            actual: r.len(),
        });
    }
    let mut activations = Mat::zeros(rows.rows(), q.rows());
    let mut scores = Vec::with_capacity(rows.rows());
    for j in 0..rows.rows() {
        let act: Vec<f64> = q.mul_vec(rows.row(j)).into_iter().map(f64::tanh).collect();
        scores.push(dot(r.as_slice(), &act));
        activations.row_mut(j).copy_from_slice(&act);
    }
    let weights = softmax(&scores)?;
    let mut context = vec![0.0; d];
    for (j, &a) in weights.iter().enumerate() {
        for (c, v) in context.iter_mut().zip(rows.row(j)) {
            *c += a * v;
        }
    }
    Ok(Attention {
        activations,
        scores,
        weights,
        context,
    })
}

/// Attention over the recent-inputs matrix (`w_x x d`, oldest row first).
pub fn input_attention(c_x: &Mat, r_x: &Mat, q_x: &Mat) -> Result<Attention> {
    attend(c_x, r_x, q_x)
}

/// Attention over the recent-hidden-states matrix (`w_h x d`, oldest row first).
pub fn hidden_attention(c_h: &Mat, r_h: &Mat, q_h: &Mat) -> Result<Attention> {
    attend(c_h, r_h, q_h)
}

/// `tanh(E h + F h_c)`.
pub fn overall_interest(h: &[f64], h_c: &[f64], e: &Mat, f: &Mat) -> Result<Vec<f64>> {
    let mut a = e.matvec(h)?;
    let b = f.matvec(h_c)?;
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "overall interest",
            expected: a.len(),
            actual: b.len(),
        });
    }
    for (x, y) in a.iter_mut().zip(&b) {
        *x = (*x + y).tanh();
    }
    ensure_finite("overall interest h_o", &a)?;
    Ok(a)
}

/// Fixed-width ring of the most recent vectors. Starts as `width` zero vectors.
#[derive(Clone, Debug)]
pub struct ContextBuffer {
    dim: usize,
    slots: VecDeque<Vec<f64>>,
}

impl ContextBuffer {
    pub fn new(width: usize, dim: usize) -> Self {
        ContextBuffer {
            dim,
            slots: (0..width).map(|_| vec![0.0; dim]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.slots.len()
    }

    pub fn push(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.dim);
        if let Some(mut slot) = self.slots.pop_front() {
            slot.copy_from_slice(v);
            self.slots.push_back(slot);
        }
    }

    /// Contents as a `width x dim` matrix, oldest row first.
    pub fn matrix(&self) -> Mat {
        let mut m = Mat::zeros(self.slots.len(), self.dim);
        for (j, s) in self.slots.iter().enumerate() {
            m.row_mut(j).copy_from_slice(s);
        }
        m
    }
}

/// Every intermediate of one forward step.
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub item: u32,
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_x: Mat,
    pub input_att: Attention,
    pub gates: GateOutput,
    pub c_h: Mat,
    pub hidden_att: Attention,
    /// Representation used for scoring: `h_o^t` for the full model, `h^t` for the plain GRU.
    pub h_o: Vec<f64>,
}

impl StepTrace {
    pub fn x_c(&self) -> &[f64] {
        &self.input_att.context
    }

    pub fn h(&self) -> &[f64] {
        &self.gates.h
    }

    pub fn h_c(&self) -> &[f64] {
        &self.hidden_att.context
    }
}

/// Input-side state of the recurrence: one step at a time, with the hidden-state ring
/// kept up to date so the head can be evaluated at any step.
pub(crate) struct Recurrence<'a> {
    params: &'a ModelParams,
    hyper: &'a HyperParams,
    inputs: ContextBuffer,
    hiddens: ContextBuffer,
    h: Vec<f64>,
}

pub(crate) struct InputStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_x: Mat,
    pub input_att: Attention,
    pub gates: GateOutput,
}

impl<'a> Recurrence<'a> {
    pub fn new(params: &'a ModelParams, hyper: &'a HyperParams) -> Result<Self> {
        hyper.validate()?;
        params.check(hyper)?;
        Ok(Recurrence {
            params,
            hyper,
            inputs: ContextBuffer::new(hyper.window_x, hyper.dim),
            hiddens: ContextBuffer::new(hyper.window_h, hyper.dim),
            h: vec![0.0; hyper.dim],
        })
    }

    pub fn step(&mut self, item: u32, position: usize) -> Result<InputStep> {
        if item as usize >= self.hyper.n_items {
            return Err(Error::ItemOutOfRange {
                item,
                position,
                n_items: self.hyper.n_items,
            });
        }
        let p = self.params;
        let x = p.item_emb.row(item as usize).to_vec();
        self.inputs.push(&x);
        let c_x = self.inputs.matrix();
        let input_att = input_attention(&c_x, &p.r_x, &p.q_x)?;
        let gates = match self.hyper.variant {
            Variant::Hca => hca_cell(&x, &input_att.context, &self.h, p)?,
            Variant::PlainGru => gru_cell(&x, &self.h, p)?,
        };
        let h_prev = std::mem::replace(&mut self.h, gates.h.clone());
        self.hiddens.push(&self.h);
        Ok(InputStep {
            x,
            h_prev,
            c_x,
            input_att,
            gates,
        })
    }

    /// Hidden-state attention and output head at the current step.
    pub fn head(&self) -> Result<(Mat, Attention, Vec<f64>)> {
        let p = self.params;
        let c_h = self.hiddens.matrix();
        let hidden_att = hidden_attention(&c_h, &p.r_h, &p.q_h)?;
        let h_o = match self.hyper.variant {
            Variant::Hca => overall_interest(&self.h, &hidden_att.context, &p.e, &p.f)?,
            Variant::PlainGru => self.h.clone(),
        };
        Ok((c_h, hidden_att, h_o))
    }
}

/// Runs the network over `items`, returning the trace of every step.
pub fn forward_sequence(
    items: &[u32],
    params: &ModelParams,
    hyper: &HyperParams,
) -> Result<Vec<StepTrace>> {
    if items.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut rec = Recurrence::new(params, hyper)?;
    let mut traces = Vec::with_capacity(items.len());
    for (position, &item) in items.iter().enumerate() {
        let step = rec.step(item, position)?;
        let (c_h, hidden_att, h_o) = rec.head()?;
        traces.push(StepTrace {
            item,
            x: step.x,
            h_prev: step.h_prev,
            c_x: step.c_x,
            input_att: step.input_att,
            gates: step.gates,
            c_h,
            hidden_att,
            h_o,
        });
    }
    Ok(traces)
}
