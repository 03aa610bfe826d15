//! Top-k ranking and the evaluation measures: Recall@k, MAP@k, NDCG@k and AUC.
//!
//! Rankings order items by descending score, ties by ascending item index. By default a
//! user's training items are not candidates. Per-user values are macro-averaged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, UserSequence};
use crate::numerics::Mat;
use crate::parallel::{par_map, Parallelism};
use crate::{Error, Result};

pub const DEFAULT_TOP_K: [usize; 4] = [5, 10, 15, 20];
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Items not in `excluded`, best first.
pub fn rank_by_scores(scores: &[f64], excluded: &[u32]) -> Result<Vec<u32>> {
    let mut mask = vec![false; scores.len()];
    for &i in excluded {
        if let Some(m) = mask.get_mut(i as usize) {
            *m = true;
        }
    }
    let mut ranking: Vec<u32> = (0..scores.len() as u32).filter(|i| !mask[*i as usize]).collect();
    if ranking.is_empty() {
        return Err(Error::NothingToRank);
    }
    ranking.sort_by(|a, b| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    });
    Ok(ranking)
}

/// Ranks items by `hᵀ x_i` over the rows of `item_emb`.
pub fn rank_items(h: &[f64], item_emb: &Mat, excluded: &[u32]) -> Result<Vec<u32>> {
    let scores = item_emb.matvec(h)?;
    rank_by_scores(&scores, excluded)
}

fn sorted(set: &[u32]) -> Vec<u32> {
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

fn hits(ranking: &[u32], test: &[u32], k: usize) -> Result<(Vec<bool>, usize)> {
    let relevant = sorted(test);
    if relevant.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let flags = ranking
        .iter()
        .take(k)
        .map(|i| relevant.binary_search(i).is_ok())
        .collect();
    Ok((flags, relevant.len()))
}

/// `|top-k ∩ test| / |test|`.
pub fn recall_at_k(ranking: &[u32], test: &[u32], k: usize) -> Result<f64> {
    let (flags, n) = hits(ranking, test, k)?;
    Ok(flags.iter().filter(|h| **h).count() as f64 / n as f64)
}

/// Average precision at the hit positions within the top k, normalised by
/// `min(|test|, k)`.
pub fn map_at_k(ranking: &[u32], test: &[u32], k: usize) -> Result<f64> {
    let (flags, n) = hits(ranking, test, k)?;
    let mut found = 0usize;
    let mut sum = 0.0;
    for (i, hit) in flags.iter().enumerate() {
        if *hit {
            found += 1;
            sum += found as f64 / (i + 1) as f64;
        }
    }
    let norm = n.min(k);
    Ok(if norm == 0 { 0.0 } else { sum / norm as f64 })
}

/// Binary-relevance NDCG with `log2(i + 1)` discounts.
pub fn ndcg_at_k(ranking: &[u32], test: &[u32], k: usize) -> Result<f64> {
    let (flags, n) = hits(ranking, test, k)?;
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = flags
        .iter()
        .enumerate()
        .filter(|(_, h)| **h)
        .map(|(i, _)| discount(i))
        .sum();
    let idcg: f64 = (0..n.min(k)).map(discount).sum();
    Ok(if idcg == 0.0 { 0.0 } else { dcg / idcg })
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counting one half.
/// Positives are the test items among `candidates`; negatives the other candidates.
pub fn auc(scores: &[f64], test: &[u32], candidates: &[u32]) -> Result<f64> {
    let relevant = sorted(test);
    let (pos, neg): (Vec<u32>, Vec<u32>) = candidates
        .iter()
        .partition(|i| relevant.binary_search(i).is_ok());
    if pos.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if neg.is_empty() {
        return Err(Error::NoAucNegatives);
    }
    let mut neg_scores: Vec<f64> = neg.iter().map(|i| scores[*i as usize]).collect();
    neg_scores.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for p in &pos {
        let s = scores[*p as usize];
        let below = neg_scores.partition_point(|v| *v < s);
        let not_above = neg_scores.partition_point(|v| *v <= s);
        total += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Ok(total / (pos.len() * neg.len()) as f64)
}

/// Anything that assigns a score to every item for a user.
pub trait Scorer: Sync {
    fn scores(&self, user: usize, seq: &UserSequence) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub k_list: Vec<usize>,
    /// Keep training items among the candidates.
    pub rank_over_all: bool,
    pub parallelism: Parallelism,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_list: DEFAULT_TOP_K.to_vec(),
            rank_over_all: false,
            parallelism: Parallelism::Sequential,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    pub k: usize,
    pub recall: f64,
    pub map: f64,
    pub ndcg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserEval {
    pub user: String,
    /// Best-first candidates, truncated to the largest k.
    pub top: Vec<u32>,
    pub at_k: Vec<AtK>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedEval {
    pub method: String,
    pub k_list: Vec<usize>,
    pub users: Vec<UserEval>,
    /// Users with an empty test set.
    pub skipped: Vec<String>,
    /// Macro averages per k.
    pub means: Vec<AtK>,
    pub auc: f64,
    pub auc_users: usize,
}

enum Outcome {
    Evaluated(UserEval),
    Skipped(String),
}

/// Scores, ranks and measures every user of `corpus`.
pub fn evaluate(method: &str, scorer: &dyn Scorer, corpus: &Corpus, cfg: &EvalConfig) -> Result<RankedEval> {
    if cfg.k_list.is_empty() || cfg.k_list.contains(&0) {
        return Err(Error::InvalidHyper("k list must be non-empty and positive".into()));
    }
    let max_k = *cfg.k_list.iter().max().expect("non-empty");
    let idx: Vec<usize> = (0..corpus.users().len()).collect();
    let outcomes = par_map(&idx, cfg.parallelism, |&u| -> Result<Outcome> {
        let seq = &corpus.users()[u];
        let test = seq.test();
        if test.is_empty() {
            return Ok(Outcome::Skipped(seq.id.clone()));
        }
        let scores = scorer.scores(u, seq)?;
        if scores.len() != corpus.n_items() {
            return Err(Error::Dimension {
                context: "item scores",
                expected: corpus.n_items(),
                actual: scores.len(),
            });
        }
        let excluded = if cfg.rank_over_all { Vec::new() } else { seq.train_set() };
        let ranking = rank_by_scores(&scores, &excluded)?;
        let at_k = cfg
            .k_list
            .iter()
            .map(|&k| {
                Ok(AtK {
                    k,
                    recall: recall_at_k(&ranking, &test, k)?,
                    map: map_at_k(&ranking, &test, k)?,
                    ndcg: ndcg_at_k(&ranking, &test, k)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let auc = auc(&scores, &test, &ranking).ok();
        Ok(Outcome::Evaluated(UserEval {
            user: seq.id.clone(),
            top: ranking.into_iter().take(max_k).collect(),
            at_k,
            auc,
        }))
    });

    let mut users = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o? {
            Outcome::Evaluated(e) => users.push(e),
            Outcome::Skipped(id) => skipped.push(id),
        }
    }
    if users.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let n = users.len() as f64;
    let means = cfg
        .k_list
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let (mut r, mut m, mut g) = (0.0, 0.0, 0.0);
            for u in &users {
                r += u.at_k[j].recall;
                m += u.at_k[j].map;
                g += u.at_k[j].ndcg;
            }
            AtK {
                k,
                recall: r / n,
                map: m / n,
                ndcg: g / n,
            }
        })
        .collect();
    let aucs: Vec<f64> = users.iter().filter_map(|u| u.auc).collect();
    let auc = if aucs.is_empty() {
        f64::NAN
    } else {
        aucs.iter().sum::<f64>() / aucs.len() as f64
    };
    if !skipped.is_empty() {
        log::info!("{method}: skipped {} users with empty test sets", skipped.len());
    }
    Ok(RankedEval {
        method: method.to_string(),
        k_list: cfg.k_list.clone(),
        users,
        skipped,
        means,
        auc,
        auc_users: aucs.len(),
    })
}

impl RankedEval {
    pub fn at(&self, k: usize) -> Option<&AtK> {
        self.means.iter().find(|m| m.k == k)
    }
}

#[derive(Serialize, Deserialize)]
struct KBlock {
    k: usize,
    recall: String,
    map: String,
    ndcg: String,
}

#[derive(Serialize, Deserialize)]
struct MethodBlock {
    users_evaluated: usize,
    users_skipped: usize,
    auc_users: usize,
    auc: String,
    at: Vec<KBlock>,
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    format_version: u32,
    methods: BTreeMap<String, MethodBlock>,
}

fn pct4(v: f64) -> String {
    format!("{:.4}", v * 100.0)
}

fn pct3(v: f64) -> String {
    format!("{:.3}", v * 100.0)
}

/// Report document keyed by method, values in percent (4 decimals, AUC 3 decimals).
pub fn report_json(evals: &[RankedEval]) -> Result<String> {
    let methods = evals
        .iter()
        .map(|e| {
            (
                e.method.clone(),
                MethodBlock {
                    users_evaluated: e.users.len(),
                    users_skipped: e.skipped.len(),
                    auc_users: e.auc_users,
                    auc: pct3(e.auc),
                    at: e
                        .means
                        .iter()
                        .map(|m| KBlock {
                            k: m.k,
                            recall: pct4(m.recall),
                            map: pct4(m.map),
                            ndcg: pct4(m.ndcg),
                        })
                        .collect(),
                },
            )
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&ReportDoc {
        format_version: REPORT_FORMAT_VERSION,
        methods,
    })?;
    s.push('\n');
    Ok(s)
}

pub const TSV_HEADER: &str = "method\tk\trecall\tmap\tndcg\tauc";

/// Flat rows `method, k, recall, map, ndcg, auc` at full precision (fractions, not percent).
pub fn report_tsv(evals: &[RankedEval]) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for e in evals {
        for m in &e.means {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                e.method, m.k, m.recall, m.map, m.ndcg, e.auc
            ));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsvRow {
    pub method: String,
    pub k: usize,
    pub recall: f64,
    pub map: f64,
    pub ndcg: f64,
    pub auc: f64,
}

pub fn parse_tsv(s: &str) -> Result<Vec<TsvRow>> {
    let mut rows = Vec::new();
    for (n, line) in s.lines().enumerate() {
        if n == 0 && line == TSV_HEADER || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let err = |message: String| Error::Parse { line: n + 1, message };
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
        rows.push(TsvRow {
            method: f[0].to_string(),
            k: f[1].parse().map_err(|e| err(format!("`{}`: {e}", f[1])))?,
            recall: num(f[2])?,
            map: num(f[3])?,
            ndcg: num(f[4])?,
            auc: num(f[5])?,
        });
    }
    Ok(rows)
}

/// Human-readable comparison table: one row per method, Recall/MAP/NDCG per k, then AUC.
pub fn report_table(evals: &[RankedEval]) -> String {
    let Some(first) = evals.first() else {
        return String::new();
    };
    let width = evals.iter().map(|e| e.method.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:width$}", "method");
    for k in &first.k_list {
        out.push_str(&format!(
            " | {:>8} {:>8} {:>8}",
            format!("R@{k}"),
            format!("MAP@{k}"),
            format!("NDCG@{k}")
        ));
    }
    out.push_str(" | AUC\n");
    for e in evals {
        out.push_str(&format!("{:width$}", e.method));
        for m in &e.means {
            out.push_str(&format!(
                " | {:>8} {:>8} {:>8}",
                pct4(m.recall),
                pct4(m.map),
                pct4(m.ndcg)
            ));
        }
        out.push_str(&format!(" | {}\n", pct3(e.auc)));
    }
    out
}
