//! Independent reference implementations and the checks built on them.
//!
//! Nothing here calls the crate's forward pass, attention or metric code; it only reads
//! parameters through plain accessors. Each `check_*` returns a one-line summary on
//! success and a description of the first disagreement on failure.

#![allow(dead_code)]

use hca_seqrec::baselines::{MfModel, RandomScorer};
use hca_seqrec::corpus::{synth, Pattern, SynthConfig};
use hca_seqrec::metrics::{self, EvalConfig, Scorer};
use hca_seqrec::numerics::{finite_diff_grad, Mat, Rng};
use hca_seqrec::seqmodel::{
    forward_sequence, gru_cell, hca_cell, hidden_attention, input_attention, HyperParams, ModelParams, Variant,
};
use hca_seqrec::training::{backprop_sequence, init_params, sequence_loss, TrainConfig, Triple};

pub type Check = Result<String, String>;

// ---------------------------------------------------------------------------
// Forward pass, written out step by step.

#[derive(Clone, Debug)]
pub struct OracleStep {
    pub a_x: Vec<f64>,
    pub x_c: Vec<f64>,
    pub h: Vec<f64>,
    pub a_h: Vec<f64>,
    pub h_c: Vec<f64>,
    pub h_o: Vec<f64>,
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn attend_oracle(rows: &[Vec<f64>], r: &Mat, q: &Mat) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let mut e = Vec::new();
    for c in rows {
        let mut s = 0.0;
        for k in 0..q.rows() {
            let mut u = 0.0;
            for l in 0..d {
                u += q.get(k, l) * c[l];
            }
            s += r.get(k, 0) * u.tanh();
        }
        e.push(s);
    }
    let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = ex.iter().sum();
    let a: Vec<f64> = ex.iter().map(|v| v / z).collect();
    let mut ctx = vec![0.0; d];
    for (j, c) in rows.iter().enumerate() {
        for l in 0..d {
            ctx[l] += a[j] * c[l];
        }
    }
    (a, ctx)
}

pub fn forward_oracle(items: &[u32], p: &ModelParams, hyper: &HyperParams) -> Vec<OracleStep> {
    let d = hyper.dim;
    let wx = hyper.window_x;
    let wh = hyper.window_h;
    let full = hyper.variant == Variant::Hca;
    let mut h = vec![0.0; d];
    let mut hs: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::new();
    for t in 0..items.len() {
        let x = p.item_emb.row(items[t] as usize).to_vec();
        let rows_x: Vec<Vec<f64>> = (0..wx)
            .map(|j| {
                let back = wx - 1 - j;
                if back > t {
                    vec![0.0; d]
                } else {
                    p.item_emb.row(items[t - back] as usize).to_vec()
                }
            })
            .collect();
        let (a_x, x_c) = attend_oracle(&rows_x, &p.r_x, &p.q_x);

        let gate = |u: &Mat, v: &Mat, w: &Mat, b: &Mat, h_in: &[f64]| -> Vec<f64> {
            (0..d)
                .map(|i| {
                    let mut s = b.get(i, 0);
                    for j in 0..d {
                        s += u.get(i, j) * x[j];
                        s += w.get(i, j) * h_in[j];
                        if full {
                            s += v.get(i, j) * x_c[j];
                        }
                    }
                    s
                })
                .collect()
        };
        let z: Vec<f64> = gate(&p.u_z, &p.v_z, &p.w_z, &p.b_z, &h).into_iter().map(sig).collect();
        let r: Vec<f64> = gate(&p.u_r, &p.v_r, &p.w_r, &p.b_r, &h).into_iter().map(sig).collect();
        let rh: Vec<f64> = (0..d).map(|i| r[i] * h[i]).collect();
        let cand: Vec<f64> = gate(&p.u_c, &p.v_c, &p.w_c, &p.b_c, &rh)
            .into_iter()
            .map(f64::tanh)
            .collect();
        h = (0..d).map(|i| (1.0 - z[i]) * h[i] + z[i] * cand[i]).collect();
        hs.push(h.clone());

        let rows_h: Vec<Vec<f64>> = (0..wh)
            .map(|j| {
                let back = wh - 1 - j;
                if back > t {
                    vec![0.0; d]
                } else {
                    hs[t - back].clone()
                }
            })
            .collect();
        let (a_h, h_c) = attend_oracle(&rows_h, &p.r_h, &p.q_h);
        let h_o = if full {
            (0..d)
                .map(|i| {
                    let mut s = 0.0;
                    for j in 0..d {
                        s += p.e.get(i, j) * h[j] + p.f.get(i, j) * h_c[j];
                    }
                    s.tanh()
                })
                .collect()
        } else {
            h.clone()
        };
        out.push(OracleStep {
            a_x,
            x_c,
            h: h.clone(),
            a_h,
            h_c,
            h_o,
        });
    }
    out
}

pub struct Instance {
    pub hyper: HyperParams,
    pub params: ModelParams,
    pub items: Vec<u32>,
}

/// A random model and sequence; `init_range` is drawn so gates see a range of regimes.
pub fn random_instance(rng: &mut Rng, wx: Option<usize>, wh: Option<usize>) -> Instance {
    let dim = 1 + rng.below(6) as usize;
    let window_x = wx.unwrap_or(1 + rng.below(5) as usize);
    let window_h = wh.unwrap_or(1 + rng.below(5) as usize);
    let n_items = 2 + rng.below(14) as usize;
    let len = 1 + rng.below(12) as usize;
    let hyper = HyperParams::new(dim, window_x, window_h, n_items).unwrap();
    let cfg = TrainConfig {
        seed: rng.next_u64(),
        init_range: rng.uniform_in(0.1, 1.5),
        ..TrainConfig::default()
    };
    let params = init_params(&hyper, &cfg);
    let items = (0..len).map(|_| rng.below(n_items as u64) as u32).collect();
    Instance { hyper, params, items }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn check_forward_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for n in 0..instances {
        let inst = random_instance(&mut rng, None, None);
        let traces = forward_sequence(&inst.items, &inst.params, &inst.hyper).map_err(|e| e.to_string())?;
        let oracle = forward_oracle(&inst.items, &inst.params, &inst.hyper);
        for (t, (tr, o)) in traces.iter().zip(&oracle).enumerate() {
            for (name, got, want) in [
                ("a_x", tr.input_att.weights.as_slice(), o.a_x.as_slice()),
                ("x_c", tr.x_c(), &o.x_c),
                ("h", tr.h(), &o.h),
                ("a_h", &tr.hidden_att.weights, &o.a_h),
                ("h_c", tr.h_c(), &o.h_c),
                ("h_o", &tr.h_o, &o.h_o),
            ] {
                let diff = max_abs_diff(got, want);
                worst = worst.max(diff);
                if diff > 1e-10 {
                    return Err(format!("instance {n}, step {t}: {name} differs by {diff:e}"));
                }
            }
        }
    }
    Ok(format!("{instances} instances, max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// Degenerate configurations.

pub fn check_degeneracy(configs: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    for n in 0..configs {
        let inst = random_instance(&mut rng, Some(1), None);
        let traces = forward_sequence(&inst.items, &inst.params, &inst.hyper).map_err(|e| e.to_string())?;
        if traces.iter().any(|tr| tr.x_c() != tr.x.as_slice()) {
            return Err(format!("config {n}: w_x = 1 but x_c != x"));
        }

        let inst = random_instance(&mut rng, None, Some(1));
        let traces = forward_sequence(&inst.items, &inst.params, &inst.hyper).map_err(|e| e.to_string())?;
        if traces.iter().any(|tr| tr.h_c() != tr.h()) {
            return Err(format!("config {n}: w_h = 1 but h_c != h"));
        }

        let mut inst = random_instance(&mut rng, None, None);
        for v in [&mut inst.params.v_z, &mut inst.params.v_r, &mut inst.params.v_c] {
            v.fill(0.0);
        }
        let d = inst.hyper.dim;
        let mut vec = |s: f64| -> Vec<f64> { (0..d).map(|_| rng.uniform_in(-s, s)).collect() };
        let (x, x_c, h_prev) = (vec(2.0), vec(2.0), vec(1.0));
        let a = hca_cell(&x, &x_c, &h_prev, &inst.params).map_err(|e| e.to_string())?;
        let b = gru_cell(&x, &h_prev, &inst.params).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("config {n}: V = 0 but hca_cell != gru_cell"));
        }

        // Full model at w_x = w_h = 1 with V = 0 runs the same hidden recurrence as the
        // plain GRU.
        let gru = HyperParams::plain_gru(d, inst.hyper.n_items).unwrap();
        let one = HyperParams::new(d, 1, 1, inst.hyper.n_items).unwrap();
        let ha = forward_sequence(&inst.items, &inst.params, &one).map_err(|e| e.to_string())?;
        let hb = forward_sequence(&inst.items, &inst.params, &gru).map_err(|e| e.to_string())?;
        if ha.iter().zip(&hb).any(|(p, q)| p.h() != q.h()) {
            return Err(format!("config {n}: hidden stream differs from plain GRU"));
        }
    }
    Ok(format!("{configs} configurations of each identity hold exactly"))
}

// ---------------------------------------------------------------------------
// Attention weights.

pub fn check_attention_invariants(steps: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let mut seen = 0;
    let mut worst = 0.0f64;
    while seen < steps {
        let inst = random_instance(&mut rng, None, None);
        let traces = forward_sequence(&inst.items, &inst.params, &inst.hyper).map_err(|e| e.to_string())?;
        for tr in &traces {
            for w in [&tr.input_att.weights, &tr.hidden_att.weights] {
                if w.iter().any(|a| *a < 0.0) {
                    return Err(format!("negative weight in {w:?}"));
                }
                let dev = (w.iter().sum::<f64>() - 1.0).abs();
                worst = worst.max(dev);
                if dev > 1e-12 {
                    return Err(format!("weights {w:?} sum off by {dev:e}"));
                }
            }
            seen += 1;
        }
    }
    for _ in 0..100 {
        let d = 1 + rng.below(6) as usize;
        let w = 1 + rng.below(8) as usize;
        let row: Vec<f64> = (0..d).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
        let c = Mat::from_rows(&vec![row; w]).unwrap();
        let r = Mat::from_vec(d, 1, (0..d).map(|_| rng.uniform_in(-2.0, 2.0)).collect()).unwrap();
        let q = Mat::from_vec(d, d, (0..d * d).map(|_| rng.uniform_in(-2.0, 2.0)).collect()).unwrap();
        for att in [
            input_attention(&c, &r, &q).map_err(|e| e.to_string())?,
            hidden_attention(&c, &r, &q).map_err(|e| e.to_string())?,
        ] {
            if att.weights.iter().any(|a| (a - 1.0 / w as f64).abs() > 1e-12) {
                return Err(format!("identical rows gave non-uniform weights {:?}", att.weights));
            }
        }
    }
    Ok(format!("{seen} steps, max |sum - 1| = {worst:.1e}; identical rows uniform"))
}

// ---------------------------------------------------------------------------
// Gradients against central differences.

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(1.0)
}

fn check_sequence_gradient(variant: Variant, seed: u64) -> Result<f64, String> {
    let mut rng = Rng::new(seed);
    let (d, n_items, len) = (4, 10, 6);
    let hyper = match variant {
        Variant::Hca => HyperParams::new(d, 2, 2, n_items).unwrap(),
        Variant::PlainGru => HyperParams::plain_gru(d, n_items).unwrap(),
    };
    let params = init_params(
        &hyper,
        &TrainConfig {
            seed,
            ..TrainConfig::default()
        },
    );
    let items: Vec<u32> = (0..len).map(|_| rng.below(n_items as u64) as u32).collect();
    let pairs: Vec<(u32, u32)> = items[1..]
        .iter()
        .map(|&p| {
            let mut q = rng.below(n_items as u64) as u32;
            while q == p {
                q = rng.below(n_items as u64) as u32;
            }
            (p, q)
        })
        .collect();
    let traces = forward_sequence(&items, &params, &hyper).map_err(|e| e.to_string())?;
    let analytic = backprop_sequence(&traces, &pairs, &params, &hyper)
        .map_err(|e| e.to_string())?
        .grads
        .flatten(variant);
    let numeric = finite_diff_grad(
        |v| {
            let mut q = params.clone();
            q.unflatten(variant, v).unwrap();
            sequence_loss(&items, &pairs, &q, &hyper).unwrap()
        },
        &params.flatten(variant),
        1e-5,
    )
    .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = rel_err(*a, *n);
        worst = worst.max(e);
        if e > 1e-4 {
            return Err(format!("{variant:?} seed {seed}, coordinate {i}: analytic {a} numeric {n}"));
        }
    }
    Ok(worst)
}

fn check_mf_gradient(seed: u64) -> Result<f64, String> {
    let mut rng = Rng::new(seed);
    let (n_users, n_items, d) = (3, 10, 4);
    let model = MfModel::init(
        n_users,
        n_items,
        d,
        &TrainConfig {
            seed,
            ..TrainConfig::default()
        },
    );
    let user = rng.below(n_users as u64) as usize;
    let pos = rng.below(n_items as u64) as u32;
    let neg = (pos + 1 + rng.below(n_items as u64 - 1) as u32) % n_items as u32;
    let t = Triple { user, pos, neg, t: 0 };
    let g = model.triple_grad(&t);
    let mut analytic = vec![0.0; (n_users + n_items) * d];
    analytic[user * d..(user + 1) * d].copy_from_slice(&g.user);
    let off = n_users * d;
    for (row, grad) in [(pos, &g.pos), (neg, &g.neg)] {
        let s = off + row as usize * d;
        for (a, v) in analytic[s..s + d].iter_mut().zip(grad.iter()) {
            *a += v;
        }
    }
    let mut flat = model.user_factors.as_slice().to_vec();
    flat.extend_from_slice(model.item_factors.as_slice());
    let numeric = finite_diff_grad(
        |v| {
            let mut m = model.clone();
            m.user_factors.as_mut_slice().copy_from_slice(&v[..off]);
            m.item_factors.as_mut_slice().copy_from_slice(&v[off..]);
            m.triple_loss(&t)
        },
        &flat,
        1e-5,
    )
    .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = rel_err(*a, *n);
        worst = worst.max(e);
        if e > 1e-4 {
            return Err(format!("BPR-MF seed {seed}, coordinate {i}: analytic {a} numeric {n}"));
        }
    }
    Ok(worst)
}

pub fn check_gradients(seeds: &[u64]) -> Check {
    let mut worst = [0.0f64; 3];
    for &s in seeds {
        worst[0] = worst[0].max(check_sequence_gradient(Variant::Hca, s)?);
        worst[1] = worst[1].max(check_sequence_gradient(Variant::PlainGru, s)?);
        worst[2] = worst[2].max(check_mf_gradient(s)?);
    }
    Ok(format!(
        "{} seeds; max relative error HCA {:.1e}, GRU {:.1e}, BPR-MF {:.1e}",
        seeds.len(),
        worst[0],
        worst[1],
        worst[2]
    ))
}

// ---------------------------------------------------------------------------
// Metrics by their definitions.

pub fn rank_oracle(scores: &[f64], excluded: &[u32]) -> Vec<u32> {
    let mut left: Vec<u32> = (0..scores.len() as u32).filter(|i| !excluded.contains(i)).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for j in 1..left.len() {
            let (a, b) = (left[j], left[best]);
            if scores[a as usize] > scores[b as usize] || (scores[a as usize] == scores[b as usize] && a < b) {
                best = j;
            }
        }
        out.push(left.remove(best));
    }
    out
}

fn distinct(test: &[u32]) -> Vec<u32> {
    let mut t = Vec::new();
    for i in test {
        if !t.contains(i) {
            t.push(*i);
        }
    }
    t
}

pub fn recall_oracle(ranking: &[u32], test: &[u32], k: usize) -> f64 {
    let t = distinct(test);
    let hits = ranking.iter().take(k).filter(|i| t.contains(i)).count();
    hits as f64 / t.len() as f64
}

pub fn map_oracle(ranking: &[u32], test: &[u32], k: usize) -> f64 {
    let t = distinct(test);
    let mut sum = 0.0;
    for i in 1..=k.min(ranking.len()) {
        if t.contains(&ranking[i - 1]) {
            let hits_so_far = ranking[..i].iter().filter(|x| t.contains(x)).count();
            sum += hits_so_far as f64 / i as f64;
        }
    }
    sum / t.len().min(k) as f64
}

pub fn ndcg_oracle(ranking: &[u32], test: &[u32], k: usize) -> f64 {
    let t = distinct(test);
    let rel: Vec<f64> = (0..k)
        .map(|i| match ranking.get(i) {
            Some(x) if t.contains(x) => 1.0,
            _ => 0.0,
        })
        .collect();
    let dcg: f64 = rel.iter().enumerate().map(|(i, r)| r / ((i + 2) as f64).log2()).sum();
    let mut ideal = vec![0.0; k];
    for slot in ideal.iter_mut().take(t.len().min(k)) {
        *slot = 1.0;
    }
    let idcg: f64 = ideal.iter().enumerate().map(|(i, r)| r / ((i + 2) as f64).log2()).sum();
    dcg / idcg
}

/// `None` when there are no positives or no negatives among the candidates.
pub fn auc_oracle(scores: &[f64], test: &[u32], candidates: &[u32]) -> Option<f64> {
    let t = distinct(test);
    let pos: Vec<u32> = candidates.iter().copied().filter(|i| t.contains(i)).collect();
    let neg: Vec<u32> = candidates.iter().copied().filter(|i| !t.contains(i)).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for q in &neg {
            let (a, b) = (scores[*p as usize], scores[*q as usize]);
            wins += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

fn close(name: &str, got: f64, want: f64) -> Result<(), String> {
    if (got - want).abs() > 1e-12 {
        Err(format!("{name}: got {got}, oracle {want}"))
    } else {
        Ok(())
    }
}

fn check_worked_examples() -> Result<(), String> {
    let e = |r: hca_seqrec::Result<f64>| r.map_err(|e| e.to_string());
    let ranking = [3, 1, 5, 2];
    close("NDCG example", e(metrics::ndcg_at_k(&ranking, &[3, 5], 3))?, ndcg_oracle(&ranking, &[3, 5], 3))?;
    let v = e(metrics::ndcg_at_k(&ranking, &[3, 5], 3))?;
    if (v - 0.91972).abs() > 1e-4 {
        return Err(format!("NDCG hits at 1 and 3: {v}"));
    }
    let v = e(metrics::map_at_k(&ranking, &[3, 5], 3))?;
    if (v - 0.8333).abs() > 1e-4 {
        return Err(format!("MAP hits at 1 and 3: {v}"));
    }
    let v = e(metrics::recall_at_k(&[0, 7, 2, 8, 9], &[0, 1, 2], 5))?;
    close("recall example", v, 2.0 / 3.0)?;
    let v = e(metrics::auc(&[0.9, 0.5, 0.95], &[0], &[0, 1, 2]))?;
    close("AUC example", v, 0.5)?;
    Ok(())
}

pub fn check_metric_oracles(instances: usize, seed: u64) -> Check {
    check_worked_examples()?;
    let mut rng = Rng::new(seed);
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    for n in 0..instances {
        let n_items = 3 + rng.below(10) as usize;
        let scores: Vec<f64> = (0..n_items).map(|_| levels[rng.below(5) as usize]).collect();
        let excluded: Vec<u32> = (0..n_items as u32).filter(|_| rng.uniform() < 0.3).take(n_items - 1).collect();
        let mut test: Vec<u32> = (0..n_items as u32).filter(|_| rng.uniform() < 0.3).collect();
        if test.is_empty() {
            test.push(rng.below(n_items as u64) as u32);
        }
        let k = 1 + rng.below(n_items as u64 + 1) as usize;
        let want = rank_oracle(&scores, &excluded);
        let got = metrics::rank_by_scores(&scores, &excluded).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("instance {n}: ranking {got:?}, oracle {want:?}"));
        }
        let ctx = |m: &str| format!("instance {n} {m}@{k}");
        let e = |r: hca_seqrec::Result<f64>| r.map_err(|e| e.to_string());
        close(&ctx("recall"), e(metrics::recall_at_k(&got, &test, k))?, recall_oracle(&want, &test, k))?;
        close(&ctx("map"), e(metrics::map_at_k(&got, &test, k))?, map_oracle(&want, &test, k))?;
        close(&ctx("ndcg"), e(metrics::ndcg_at_k(&got, &test, k))?, ndcg_oracle(&want, &test, k))?;
        match (metrics::auc(&scores, &test, &got).ok(), auc_oracle(&scores, &test, &want)) {
            (Some(a), Some(b)) => close(&ctx("auc"), a, b)?,
            (None, None) => {}
            (a, b) => return Err(format!("instance {n}: auc defined mismatch {a:?} vs {b:?}")),
        }
    }

    // End to end: evaluate's per-user numbers against the oracles on the same scores.
    let (corpus, _) = synth(&SynthConfig::new(30, 25, 12, Pattern::Markov1, seed)).map_err(|e| e.to_string())?;
    let scorer = RandomScorer { seed, n_items: corpus.n_items() };
    let cfg = EvalConfig::default();
    let eval = metrics::evaluate("random", &scorer, &corpus, &cfg).map_err(|e| e.to_string())?;
    let mut users = eval.users.iter();
    for (u, seq) in corpus.users().iter().enumerate() {
        let test = seq.test();
        if test.is_empty() {
            continue;
        }
        let ue = users.next().ok_or("evaluate returned too few users")?;
        let scores = scorer.scores(u, seq).map_err(|e| e.to_string())?;
        let ranking = rank_oracle(&scores, &seq.train_set());
        for m in &ue.at_k {
            close("evaluate recall", m.recall, recall_oracle(&ranking, &test, m.k))?;
            close("evaluate map", m.map, map_oracle(&ranking, &test, m.k))?;
            close("evaluate ndcg", m.ndcg, ndcg_oracle(&ranking, &test, m.k))?;
        }
        match (ue.auc, auc_oracle(&scores, &test, &ranking)) {
            (Some(a), Some(b)) => close("evaluate auc", a, b)?,
            (None, None) => {}
            (a, b) => return Err(format!("user {u}: auc {a:?} vs oracle {b:?}")),
        }
    }
    Ok(format!("worked examples plus {instances} random instances and one end-to-end corpus agree"))
}

pub fn check_random_auc(seed: u64) -> Check {
    let (corpus, _) = synth(&SynthConfig::new(1000, 200, 50, Pattern::Markov1, seed)).map_err(|e| e.to_string())?;
    let scorer = RandomScorer { seed, n_items: corpus.n_items() };
    let eval = metrics::evaluate("random", &scorer, &corpus, &EvalConfig::default()).map_err(|e| e.to_string())?;
    let pct = eval.auc * 100.0;
    let line = format!("AUC {pct:.3} over {} users", eval.auc_users);
    if (pct - 50.0).abs() <= 1.0 {
        Ok(line)
    } else {
        Err(line)
    }
}
