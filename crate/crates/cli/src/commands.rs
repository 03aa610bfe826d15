use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, ensure, Context, Result};
use hca_seqrec::baselines::{train_bpr_mf, train_plain_gru, PopModel, RandomScorer, SequenceScorer};
use hca_seqrec::corpus::{self, Corpus, GroundTruth, SynthConfig};
use hca_seqrec::metrics::{self, EvalConfig, RankedEval};
use hca_seqrec::parallel::{par_map, Parallelism};
use hca_seqrec::seqmodel::{forward_sequence, HyperParams};
use hca_seqrec::training::{train, TrainConfig, TrainLog};
use serde::Serialize;

use crate::args::{
    EvalOptions, EvaluateArgs, IngestArgs, InspectArgs, InspectFormat, OptimArgs, SweepArgs, SweepMode, SynthArgs,
    TrainArgs,
};
use crate::checkpoint::{sha256_hex, Checkpoint, Model, ModelKind, RunManifest, MANIFEST_FORMAT_VERSION};
use crate::fsio::write_atomic;
use crate::UsageError;

pub const DEFAULT_DIM: usize = 20;
pub const DEFAULT_WX: usize = 2;
pub const DEFAULT_WH: usize = 3;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_corpus(path: &Path) -> Result<(Corpus, Vec<u8>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let corpus = Corpus::from_json(text).with_context(|| format!("loading corpus {}", path.display()))?;
    Ok((corpus, bytes))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Checkpoint::from_json(&text).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// `dir/name.ext` → `dir/name.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn train_config(optim: &OptimArgs, seed: u64) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        lr: optim.lr.unwrap_or(d.lr),
        l2: optim.l2.unwrap_or(d.l2),
        epochs: optim.epochs.unwrap_or(d.epochs),
        init_range: optim.init_range.unwrap_or(d.init_range),
        seed,
        average_grads: optim.average_grads,
        clip_norm: optim.clip_norm,
    }
}

fn eval_config(opts: &EvalOptions, parallelism: Parallelism) -> Result<EvalConfig> {
    if opts.topk.is_empty() || opts.topk.contains(&0) {
        return Err(usage("--topk needs positive cut-offs"));
    }
    Ok(EvalConfig {
        k_list: opts.topk.clone(),
        rank_over_all: opts.rank_over_all,
        parallelism,
    })
}

fn print_stats(corpus: &Corpus) {
    print!("{}", corpus::stats(corpus));
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    ensure!(args.min_len <= args.max_len, "--min-len exceeds --max-len");
    let corpus = corpus::ingest(&args.input, args.min_len, args.max_len)
        .with_context(|| format!("ingesting {}", args.input.display()))?;
    write_atomic(&args.out, corpus.to_json()?.as_bytes())?;
    print_stats(&corpus);
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        concentration: args.concentration,
        period: args.period,
        noise: args.noise,
        ..SynthConfig::new(args.users, args.items, args.len, args.pattern, args.seed)
    };
    let (corpus, truth) = corpus::synth(&cfg)?;
    let truth_path = args.truth.clone().unwrap_or_else(|| sibling(&args.out, "truth.json"));
    write_atomic(&args.out, corpus.to_json()?.as_bytes())?;
    write_atomic(&truth_path, truth.to_json()?.as_bytes())?;
    print_stats(&corpus);
    Ok(())
}

/// Fits one model. `windows` is only consulted for the full model.
fn fit(
    kind: ModelKind,
    corpus: &Corpus,
    dim: usize,
    windows: (usize, usize),
    cfg: &TrainConfig,
) -> Result<(Model, Option<TrainLog>)> {
    Ok(match kind {
        ModelKind::Hca => {
            let hyper = HyperParams::new(dim, windows.0, windows.1, corpus.n_items())?;
            let (params, log) = train(corpus, &hyper, cfg)?;
            (Model::Sequence { hyper, params }, Some(log))
        }
        ModelKind::Gru => {
            let (hyper, params, log) = train_plain_gru(corpus, dim, cfg)?;
            (Model::Sequence { hyper, params }, Some(log))
        }
        ModelKind::Bprmf => {
            let (m, log) = train_bpr_mf(corpus, dim, cfg)?;
            (Model::Mf(m), Some(log))
        }
        ModelKind::Pop => (Model::Pop(PopModel::fit(corpus)), None),
        ModelKind::Random => (
            Model::Random(RandomScorer {
                seed: cfg.seed,
                n_items: corpus.n_items(),
            }),
            None,
        ),
    })
}

fn check_train_flags(args: &TrainArgs) -> Result<()> {
    let kind = args.model;
    let o = &args.optim;
    if !matches!(kind, ModelKind::Hca) {
        for (flag, set) in [("--wx", args.wx.is_some()), ("--wh", args.wh.is_some())] {
            if set {
                return Err(usage(format!("{flag} only applies to --model hca")));
            }
        }
    }
    if matches!(kind, ModelKind::Pop | ModelKind::Random) {
        for (flag, set) in [
            ("--dim", o.dim.is_some()),
            ("--lr", o.lr.is_some()),
            ("--l2", o.l2.is_some()),
            ("--epochs", o.epochs.is_some()),
            ("--init-range", o.init_range.is_some()),
            ("--average-grads", o.average_grads),
            ("--clip-norm", o.clip_norm.is_some()),
        ] {
            if set {
                return Err(usage(format!("{flag} has no effect with --model {kind}")));
            }
        }
    }
    Ok(())
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    check_train_flags(args)?;
    let start = Instant::now();
    let started_unix = unix_now();
    let (corpus, corpus_bytes) = load_corpus(&args.corpus)?;
    let cfg = train_config(&args.optim, args.seed);
    let dim = args.optim.dim.unwrap_or(DEFAULT_DIM);
    let windows = (args.wx.unwrap_or(DEFAULT_WX), args.wh.unwrap_or(DEFAULT_WH));
    let (model, log) = fit(args.model, &corpus, dim, windows, &cfg)?;

    let ckpt = Checkpoint::new(args.model, &model, &cfg, &corpus);
    let text = ckpt.to_json()?;
    let hash = sha256_hex(text.as_bytes());
    write_atomic(&args.out, text.as_bytes())?;

    let loss_path = sibling(&args.out, "loss.tsv");
    if let Some(log) = &log {
        write_atomic(&loss_path, log.to_tsv().as_bytes())?;
    }
    let manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        argv: std::env::args().collect(),
        model: args.model,
        seed: args.seed,
        corpus: args.corpus.display().to_string(),
        corpus_sha256: sha256_hex(&corpus_bytes),
        hyper: ckpt.hyper,
        config: cfg,
        checkpoint: args.out.display().to_string(),
        checkpoint_sha256: hash.clone(),
        loss_log: log.as_ref().map(|_| loss_path.display().to_string()),
        started_unix,
        wallclock_seconds: start.elapsed().as_secs_f64(),
    };
    let mut m = serde_json::to_string_pretty(&manifest)?;
    m.push('\n');
    write_atomic(&sibling(&args.out, "manifest.json"), m.as_bytes())?;

    if let Some(last) = log.as_ref().and_then(|l| l.epochs.last()) {
        println!("epochs\t{}\nfinal mean loss\t{}", last.epoch, last.mean_loss);
    }
    println!("checkpoint\t{}\nsha256\t{hash}", args.out.display());
    Ok(())
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let (corpus, _) = load_corpus(&args.corpus)?;
    let cfg = eval_config(&args.eval, Parallelism::from_env())?;
    let mut evals: Vec<RankedEval> = Vec::new();
    for path in &args.ckpt {
        let ckpt = load_checkpoint(path)?;
        ckpt.check_corpus(&corpus).with_context(|| path.display().to_string())?;
        let model = ckpt.to_model().with_context(|| path.display().to_string())?;
        let mut name = ckpt.method_name();
        let taken = evals.iter().filter(|e| e.method.split('#').next() == Some(name.as_str())).count();
        if taken > 0 {
            name = format!("{name}#{}", taken + 1);
        }
        let scorer = model.scorer();
        evals.push(metrics::evaluate(&name, scorer.as_ref(), &corpus, &cfg)?);
    }
    let first = &args.ckpt[0];
    let report = args.report.clone().unwrap_or_else(|| sibling(first, "metrics.json"));
    let tsv = args.tsv.clone().unwrap_or_else(|| sibling(first, "metrics.tsv"));
    write_atomic(&report, metrics::report_json(&evals)?.as_bytes())?;
    write_atomic(&tsv, metrics::report_tsv(&evals).as_bytes())?;
    print!("{}", metrics::report_table(&evals));
    for e in &evals {
        if !e.skipped.is_empty() {
            println!("{}: skipped {} users with an empty test set", e.method, e.skipped.len());
        }
    }
    Ok(())
}

/// Parses `a..b` (inclusive), `a,b,c` or `a`.
pub fn parse_range(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    let values: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().with_context(|| format!("bad range `{s}`"))?;
        let b: usize = b.trim().trim_start_matches('=').parse().with_context(|| format!("bad range `{s}`"))?;
        ensure!(a <= b, "empty range `{s}`");
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().with_context(|| format!("bad width `{v}`")))
            .collect::<Result<_>>()?
    };
    ensure!(!values.is_empty(), "empty range `{s}`");
    Ok(values)
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub phase: &'static str,
    pub wx: usize,
    pub wh: usize,
    pub eval: RankedEval,
}

/// MAP at the largest k, then NDCG at the largest k.
fn sweep_key(e: &RankedEval) -> (f64, f64) {
    let last = e.means.last().expect("at least one k");
    (last.map, last.ndcg)
}

fn best_of<'a>(rows: impl IntoIterator<Item = &'a SweepRow>) -> Option<&'a SweepRow> {
    let mut best: Option<&SweepRow> = None;
    for r in rows {
        if best.is_none_or(|b| sweep_key(&r.eval) > sweep_key(&b.eval)) {
            best = Some(r);
        }
    }
    best
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub best: (usize, usize),
}

/// Trains and evaluates every configuration the mode calls for; repeated
/// configurations are trained once.
pub fn run_sweep(
    corpus: &Corpus,
    mode: SweepMode,
    wx: &[usize],
    wh: &[usize],
    dim: usize,
    cfg: &TrainConfig,
    eval: &EvalConfig,
    parallelism: Parallelism,
) -> Result<SweepOutcome> {
    let mut cache: BTreeMap<(usize, usize), RankedEval> = BTreeMap::new();
    let mut rows: Vec<SweepRow> = Vec::new();
    let eval_seq = EvalConfig {
        parallelism: Parallelism::Sequential,
        ..eval.clone()
    };

    let mut stage = |plan: Vec<(&'static str, usize, usize)>, rows: &mut Vec<SweepRow>| -> Result<()> {
        let mut todo: Vec<(usize, usize)> = plan.iter().map(|p| (p.1, p.2)).filter(|c| !cache.contains_key(c)).collect();
        todo.sort_unstable();
        todo.dedup();
        let results = par_map(&todo, parallelism, |&(x, h)| -> hca_seqrec::Result<RankedEval> {
            let hyper = HyperParams::new(dim, x, h, corpus.n_items())?;
            let (params, _) = train(corpus, &hyper, cfg)?;
            let scorer = SequenceScorer {
                params: &params,
                hyper: &hyper,
            };
            metrics::evaluate(&format!("hca-x{x}-h{h}"), &scorer, corpus, &eval_seq)
        });
        for (c, r) in todo.into_iter().zip(results) {
            cache.insert(c, r?);
        }
        for (phase, x, h) in plan {
            rows.push(SweepRow {
                phase,
                wx: x,
                wh: h,
                eval: cache[&(x, h)].clone(),
            });
        }
        Ok(())
    };

    let input_only: Vec<_> = wx.iter().map(|&x| ("input-only", x, 1)).collect();
    let hidden_only: Vec<_> = wh.iter().map(|&h| ("hidden-only", 1, h)).collect();
    match mode {
        SweepMode::InputOnly => stage(input_only, &mut rows)?,
        SweepMode::HiddenOnly => stage(hidden_only, &mut rows)?,
        SweepMode::Grid => {
            let plan = wx.iter().flat_map(|&x| wh.iter().map(move |&h| ("grid", x, h))).collect();
            stage(plan, &mut rows)?;
        }
        SweepMode::FixedBest => {
            let mut plan = input_only;
            plan.extend(hidden_only);
            stage(plan, &mut rows)?;
            let best_x = best_of(rows.iter().filter(|r| r.phase == "input-only")).expect("non-empty").wx;
            let best_h = best_of(rows.iter().filter(|r| r.phase == "hidden-only")).expect("non-empty").wh;
            let mut plan: Vec<_> = wx.iter().map(|&x| ("fix-w_h", x, best_h)).collect();
            plan.extend(wh.iter().map(|&h| ("fix-w_x", best_x, h)));
            stage(plan, &mut rows)?;
        }
    }
    let best = best_of(&rows).map(|r| (r.wx, r.wh)).expect("non-empty sweep");
    Ok(SweepOutcome { rows, best })
}

pub const SWEEP_TSV_HEADER: &str = "phase\tw_x\tw_h\tk\trecall\tmap\tndcg\tauc";

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_TSV_HEADER}\n");
    for r in rows {
        for m in &r.eval.means {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.phase, r.wx, r.wh, m.k, m.recall, m.map, m.ndcg, r.eval.auc
            );
        }
    }
    out
}

pub fn sweep_cmd(args: &SweepArgs) -> Result<()> {
    let wx = parse_range(&args.wx_range).map_err(|e| usage(format!("--wx-range: {e:#}")))?;
    let wh = parse_range(&args.wh_range).map_err(|e| usage(format!("--wh-range: {e:#}")))?;
    let (corpus, _) = load_corpus(&args.corpus)?;
    let cfg = train_config(&args.optim, args.seed);
    let dim = args.optim.dim.unwrap_or(DEFAULT_DIM);
    let parallelism = Parallelism::from_env();
    let eval = eval_config(&args.eval, parallelism)?;
    let out = run_sweep(&corpus, args.mode, &wx, &wh, dim, &cfg, &eval, parallelism)?;

    let named: Vec<RankedEval> = out
        .rows
        .iter()
        .map(|r| RankedEval {
            method: format!("{:<12} w_x={} w_h={}", r.phase, r.wx, r.wh),
            ..r.eval.clone()
        })
        .collect();
    print!("{}", metrics::report_table(&named));
    let k = eval.k_list.last().copied().unwrap_or_default();
    let best = out
        .rows
        .iter()
        .find(|r| (r.wx, r.wh) == out.best)
        .expect("best row exists");
    let m = best.eval.means.last().expect("at least one k");
    println!(
        "best\tw_x={}\tw_h={}\tMAP@{k}={:.4}\tNDCG@{k}={:.4}",
        out.best.0,
        out.best.1,
        m.map * 100.0,
        m.ndcg * 100.0
    );
    if let Some(path) = &args.out {
        write_atomic(path, sweep_tsv(&out.rows).as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct InputRow {
    /// Step whose input attention this is (0-based position in the sequence).
    pub step: usize,
    /// Sequence positions covered, oldest first; negative positions are padding.
    pub positions: Vec<i64>,
    pub items: Vec<Option<String>>,
    pub noise: Vec<bool>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct UserAttention {
    pub user: String,
    /// Length of the replayed training prefix.
    pub n: usize,
    pub window_x: usize,
    pub window_h: usize,
    pub hidden_positions: Vec<i64>,
    pub hidden_weights: Vec<f64>,
    pub inputs: Vec<InputRow>,
}

pub fn inspect_user(
    seq: &hca_seqrec::corpus::UserSequence,
    hyper: &HyperParams,
    params: &hca_seqrec::seqmodel::ModelParams,
    corpus: &Corpus,
    noise: &[usize],
) -> Result<UserAttention> {
    let train = seq.train();
    let traces = forward_sequence(train, params, hyper)?;
    let n = train.len();
    let (wx, wh) = (hyper.window_x, hyper.window_h);
    let last = traces.last().context("empty training prefix")?;
    let hidden_positions: Vec<i64> = (0..wh).map(|j| n as i64 - wh as i64 + j as i64).collect();
    let mut inputs = Vec::new();
    for &s in hidden_positions.iter().filter(|p| **p >= 0) {
        let s = s as usize;
        let positions: Vec<i64> = (0..wx).map(|j| s as i64 - (wx as i64 - 1) + j as i64).collect();
        let items = positions
            .iter()
            .map(|&p| (p >= 0).then(|| corpus.item_id(train[p as usize]).unwrap_or("?").to_string()))
            .collect();
        let flags = positions.iter().map(|&p| p >= 0 && noise.contains(&(p as usize))).collect();
        inputs.push(InputRow {
            step: s,
            positions,
            items,
            noise: flags,
            weights: traces[s].input_att.weights.clone(),
        });
    }
    Ok(UserAttention {
        user: seq.id.clone(),
        n,
        window_x: wx,
        window_h: wh,
        hidden_positions,
        hidden_weights: last.hidden_att.weights.clone(),
        inputs,
    })
}

fn position_label(n: usize, p: i64) -> String {
    let back = n as i64 - 1 - p;
    if back == 0 {
        "n".to_string()
    } else {
        format!("n-{back}")
    }
}

/// Triangular text layout: one column per sequence position, the hidden-state weights
/// on one line and the input weights of each of those steps below, shifted one column
/// per step.
pub fn render_attention(a: &UserAttention) -> String {
    const W: usize = 9;
    let first = a
        .inputs
        .first()
        .map(|r| r.positions[0])
        .unwrap_or(a.hidden_positions[0])
        .min(a.hidden_positions[0]);
    let last = a.n as i64 - 1;
    let cols: Vec<i64> = (first..=last).collect();
    let cell = |s: &str| format!("{s:>W$}");
    let mut out = format!("user {} (n = {}, w_x = {}, w_h = {})\n", a.user, a.n, a.window_x, a.window_h);
    out.push_str(&format!("{:<10}", "position"));
    for &p in &cols {
        out.push_str(&cell(&position_label(a.n, p)));
    }
    out.push('\n');
    out.push_str(&format!("{:<10}", "item"));
    for &p in &cols {
        let label = a
            .inputs
            .iter()
            .find_map(|r| {
                r.positions
                    .iter()
                    .position(|q| *q == p)
                    .map(|j| match &r.items[j] {
                        Some(id) if r.noise[j] => format!("{id}*"),
                        Some(id) => id.clone(),
                        None => "pad".to_string(),
                    })
            })
            .unwrap_or_else(|| if p < 0 { "pad".into() } else { String::new() });
        out.push_str(&cell(&label));
    }
    out.push('\n');
    out.push_str(&format!("{:<10}", "h weight"));
    for &p in &cols {
        let w = a
            .hidden_positions
            .iter()
            .position(|q| *q == p)
            .map(|j| format!("{:.4}", a.hidden_weights[j]))
            .unwrap_or_default();
        out.push_str(&cell(&w));
    }
    out.push('\n');
    for (i, r) in a.inputs.iter().enumerate() {
        let head = if i == 0 { "x weight" } else { "" };
        out.push_str(&format!("{head:<10}"));
        for &p in &cols {
            let w = r
                .positions
                .iter()
                .position(|q| *q == p)
                .map(|j| format!("{:.4}", r.weights[j]))
                .unwrap_or_default();
            out.push_str(&cell(&w));
        }
        let trimmed = out.trim_end_matches(' ').len();
        out.truncate(trimmed);
        out.push('\n');
    }
    out
}

pub fn inspect_cmd(args: &InspectArgs) -> Result<()> {
    let (corpus, _) = load_corpus(&args.corpus)?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    ckpt.check_corpus(&corpus)?;
    let Model::Sequence { hyper, params } = ckpt.to_model()? else {
        bail!("attention inspection needs an hca or gru checkpoint, got {}", ckpt.model);
    };
    let truth = match &args.truth {
        Some(p) => Some(
            GroundTruth::from_json(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                .with_context(|| format!("loading {}", p.display()))?,
        ),
        None => None,
    };
    let users: Vec<usize> = match &args.user {
        Some(id) => vec![corpus.user_index(id).with_context(|| format!("unknown user `{id}`"))?],
        None => (0..corpus.users().len()).collect(),
    };
    let mut all = Vec::with_capacity(users.len());
    for u in users {
        let seq = &corpus.users()[u];
        let noise = truth
            .as_ref()
            .and_then(|t| t.user(&seq.id))
            .map(|t| t.noise_positions.clone())
            .unwrap_or_default();
        all.push(inspect_user(seq, &hyper, &params, &corpus, &noise)?);
    }
    match args.format {
        InspectFormat::Text => {
            let blocks: Vec<String> = all.iter().map(render_attention).collect();
            print!("{}", blocks.join("\n"));
        }
        InspectFormat::Json => println!("{}", serde_json::to_string_pretty(&all)?),
    }
    Ok(())
}
