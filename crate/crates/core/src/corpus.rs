//! Interaction corpora: ingestion of event logs, the per-user 80/20 split and synthetic
//! generators with known next-item distributions.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::Rng;
use crate::{Error, Result};

pub const CORPUS_FORMAT_VERSION: u32 = 1;
pub const TRUTH_FORMAT_VERSION: u32 = 1;

/// Default upper length filter for ingestion.
pub const DEFAULT_MAX_LEN: usize = 300;

/// Length of the training prefix for a sequence of `n` events: `floor(0.8 n)`, at least 1.
pub fn train_len(n: usize) -> usize {
    (n * 4 / 5).max(1)
}

/// One user's time-ordered item indices and the train/test boundary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSequence {
    pub id: String,
    items: Vec<u32>,
    split: usize,
}

impl UserSequence {
    /// Splits `items` at [`train_len`].
    pub fn new(id: impl Into<String>, items: Vec<u32>) -> Self {
        let split = train_len(items.len()).min(items.len());
        UserSequence {
            id: id.into(),
            items,
            split,
        }
    }

    pub fn items(&self) -> &[u32] {
        &self.items
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn train(&self) -> &[u32] {
        &self.items[..self.split]
    }

    /// Test suffix before deduplication.
    pub fn test_raw(&self) -> &[u32] {
        &self.items[self.split..]
    }

    /// Test suffix with repeats removed, first occurrence kept.
    pub fn test(&self) -> Vec<u32> {
        let mut seen = std::collections::HashSet::new();
        self.test_raw()
            .iter()
            .copied()
            .filter(|i| seen.insert(*i))
            .collect()
    }

    /// Every item the user touched (train and test), sorted and deduplicated.
    pub fn history(&self) -> Vec<u32> {
        let mut h = self.items.clone();
        h.sort_unstable();
        h.dedup();
        h
    }

    /// Training items, sorted and deduplicated.
    pub fn train_set(&self) -> Vec<u32> {
        let mut h = self.train().to_vec();
        h.sort_unstable();
        h.dedup();
        h
    }
}

/// Item vocabulary plus split user sequences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    items: Vec<String>,
    index: HashMap<String, u32>,
    users: Vec<UserSequence>,
    min_len: usize,
    max_len: usize,
}

#[derive(Serialize, Deserialize)]
struct CorpusDoc {
    format_version: u32,
    min_len: usize,
    max_len: usize,
    items: Vec<String>,
    users: Vec<UserSequence>,
}

impl Corpus {
    /// Builds a corpus from already-indexed sequences; each is split at [`train_len`].
    pub fn from_indexed(
        items: Vec<String>,
        users: Vec<(String, Vec<u32>)>,
        min_len: usize,
        max_len: usize,
    ) -> Result<Self> {
        let users = users
            .into_iter()
            .map(|(id, seq)| UserSequence::new(id, seq))
            .collect();
        Self::assemble(items, users, min_len, max_len)
    }

    fn assemble(
        items: Vec<String>,
        users: Vec<UserSequence>,
        min_len: usize,
        max_len: usize,
    ) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut index = HashMap::with_capacity(items.len());
        for (i, id) in items.iter().enumerate() {
            if index.insert(id.clone(), i as u32).is_some() {
                return Err(Error::InvalidCorpus(format!("duplicate item id `{id}`")));
            }
        }
        let mut seen_users = std::collections::HashSet::new();
        for u in &users {
            if !seen_users.insert(u.id.as_str()) {
                return Err(Error::InvalidCorpus(format!("duplicate user id `{}`", u.id)));
            }
            if u.items.is_empty() {
                return Err(Error::InvalidCorpus(format!("user `{}` has no events", u.id)));
            }
            if u.split != train_len(u.items.len()).min(u.items.len()) {
                return Err(Error::InvalidCorpus(format!(
                    "user `{}` split {} does not match length {}",
                    u.id,
                    u.split,
                    u.items.len()
                )));
            }
            if let Some(bad) = u.items.iter().find(|i| **i as usize >= items.len()) {
                return Err(Error::InvalidCorpus(format!(
                    "user `{}` references item index {bad} outside the vocabulary",
                    u.id
                )));
            }
        }
        Ok(Corpus {
            items,
            index,
            users,
            min_len,
            max_len,
        })
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn users(&self) -> &[UserSequence] {
        &self.users
    }

    pub fn item_ids(&self) -> &[String] {
        &self.items
    }

    pub fn item_id(&self, index: u32) -> Option<&str> {
        self.items.get(index as usize).map(String::as_str)
    }

    pub fn item_index(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.users.iter().position(|u| u.id == id)
    }

    pub fn min_len(&self) -> usize {
        self.min_len
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Total number of events over all users.
    pub fn feedbacks(&self) -> usize {
        self.users.iter().map(|u| u.items.len()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CorpusDoc {
            format_version: CORPUS_FORMAT_VERSION,
            min_len: self.min_len,
            max_len: self.max_len,
            items: self.items.clone(),
            users: self.users.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: CorpusDoc = serde_json::from_str(s)?;
        if doc.format_version != CORPUS_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                what: "corpus",
                found: doc.format_version,
                expected: CORPUS_FORMAT_VERSION,
            });
        }
        Self::assemble(doc.items, doc.users, doc.min_len, doc.max_len)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// A raw interaction record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
}

/// Parses `user<TAB>item<TAB>timestamp` lines; blank lines and `#` comments are skipped.
pub fn parse_events<R: BufRead>(reader: R) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty user or item id".into(),
            });
        }
        let timestamp = fields[2].trim().parse::<i64>().map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad timestamp `{}`: {e}", fields[2]),
        })?;
        events.push(Event {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            timestamp,
        });
    }
    Ok(events)
}

/// Groups events per user (users in order of first appearance), orders each user's events
/// by timestamp with file order breaking ties, keeps users with `min_len <= len <= max_len`
/// and splits each sequence. Items are indexed in order of first appearance among the
/// retained sequences, so test-only items are part of the vocabulary.
pub fn build_corpus(events: &[Event], min_len: usize, max_len: usize) -> Result<Corpus> {
    let mut user_pos: HashMap<&str, usize> = HashMap::new();
    let mut grouped: Vec<(&str, Vec<(i64, &str)>)> = Vec::new();
    for ev in events {
        let slot = *user_pos.entry(ev.user.as_str()).or_insert_with(|| {
            grouped.push((ev.user.as_str(), Vec::new()));
            grouped.len() - 1
        });
        grouped[slot].1.push((ev.timestamp, ev.item.as_str()));
    }

    let mut items: Vec<String> = Vec::new();
    let mut index: HashMap<&str, u32> = HashMap::new();
    let mut users = Vec::new();
    for (user, mut evs) in grouped {
        if evs.len() < min_len || evs.len() > max_len {
            continue;
        }
        // Stable sort keeps file order among equal timestamps.
        evs.sort_by_key(|(ts, _)| *ts);
        let seq = evs
            .iter()
            .map(|(_, item)| {
                *index.entry(item).or_insert_with(|| {
                    items.push(item.to_string());
                    (items.len() - 1) as u32
                })
            })
            .collect();
        users.push((user.to_string(), seq));
    }
    if users.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Corpus::from_indexed(items, users, min_len, max_len)
}

/// Reads and builds a corpus from an event-log file.
pub fn ingest(path: &Path, min_len: usize, max_len: usize) -> Result<Corpus> {
    let file = std::fs::File::open(path)?;
    let events = parse_events(std::io::BufReader::new(file))?;
    build_corpus(&events, min_len, max_len)
}

/// Summary counts of a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub items: usize,
    pub feedbacks: usize,
    pub avg_len: f64,
    /// `1 - feedbacks / (users * items)`; negative when users repeat items heavily.
    pub sparsity: f64,
}

pub fn stats(corpus: &Corpus) -> CorpusStats {
    let users = corpus.users().len();
    let items = corpus.n_items();
    let feedbacks = corpus.feedbacks();
    let sparsity = 1.0 - feedbacks as f64 / (users as f64 * items as f64);
    if sparsity < 0.0 {
        log::warn!(
            "sparsity is negative ({sparsity:.4}): more feedbacks than user-item pairs"
        );
    }
    CorpusStats {
        users,
        items,
        feedbacks,
        avg_len: feedbacks as f64 / users as f64,
        sparsity,
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "#users\t{}", self.users)?;
        writeln!(f, "#items\t{}", self.items)?;
        writeln!(f, "#feedbacks\t{}", self.feedbacks)?;
        writeln!(f, "#avg. seq. len.\t{:.2}", self.avg_len)?;
        writeln!(f, "sparsity (%)\t{:.4}", self.sparsity * 100.0)
    }
}

/// Generating process for a synthetic corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    /// First-order chain: each item has one dominant successor (a random cyclic
    /// permutation over the vocabulary) taken with probability `concentration`; otherwise
    /// the next item is uniform over the remaining items.
    Markov1,
    /// Each user repeats a motif of 3 to 5 distinct items.
    Periodic,
    /// `Markov1` over the regular items, with "gift" items from a reserved pool (the last
    /// tenth of the vocabulary) inserted with probability `noise` at every step. A gift
    /// does not move the chain.
    GiftNoise,
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markov1" => Ok(Pattern::Markov1),
            "periodic" => Ok(Pattern::Periodic),
            "gift-noise" => Ok(Pattern::GiftNoise),
            other => Err(Error::UnknownPattern(other.to_string())),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::Markov1 => "markov1",
            Pattern::Periodic => "periodic",
            Pattern::GiftNoise => "gift-noise",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub seq_len: usize,
    pub pattern: Pattern,
    pub seed: u64,
    /// Probability of the dominant successor (markov1, gift-noise).
    pub concentration: f64,
    /// Fixed motif length for `periodic`; drawn from 3..=5 per user when `None`.
    pub period: Option<usize>,
    /// Gift insertion probability (gift-noise).
    pub noise: f64,
}

impl SynthConfig {
    pub fn new(n_users: usize, n_items: usize, seq_len: usize, pattern: Pattern, seed: u64) -> Self {
        SynthConfig {
            n_users,
            n_items,
            seq_len,
            pattern,
            seed,
            concentration: 0.9,
            period: None,
            noise: 0.15,
        }
    }
}

/// Piecewise-uniform distribution over item indices: `(start, end, p)` gives each item
/// in `start..end` probability `p`. Ranges are sorted and disjoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NextItemDist {
    pub blocks: Vec<(u32, u32, f64)>,
}

impl NextItemDist {
    pub fn prob(&self, item: u32) -> f64 {
        self.blocks
            .iter()
            .find(|(s, e, _)| (*s..*e).contains(&item))
            .map_or(0.0, |b| b.2)
    }

    /// Most probable item; ties go to the lowest index.
    pub fn mode(&self) -> u32 {
        let mut best = (f64::NEG_INFINITY, 0);
        for &(s, e, p) in &self.blocks {
            if e > s && p > best.0 {
                best = (p, s);
            }
        }
        best.1
    }

    pub fn total(&self) -> f64 {
        self.blocks.iter().map(|(s, e, p)| (e - s) as f64 * p).sum()
    }

    /// Blocks for "`mode` with probability `p_mode`, `rest` spread over `lo..hi` minus
    /// `mode`", scaled by `scale`.
    fn peaked(lo: u32, hi: u32, mode: u32, p_mode: f64, scale: f64) -> Vec<(u32, u32, f64)> {
        let others = (hi - lo - 1) as f64;
        let each = if others > 0.0 { (1.0 - p_mode) / others } else { 0.0 };
        let mut blocks = Vec::new();
        if mode > lo {
            blocks.push((lo, mode, each * scale));
        }
        blocks.push((mode, mode + 1, p_mode * scale));
        if mode + 1 < hi {
            blocks.push((mode + 1, hi, each * scale));
        }
        blocks
    }
}

/// Generator-side truth for one user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub user: String,
    /// Train/test boundary of the user's sequence.
    pub split: usize,
    /// Positions holding planted gift items.
    pub noise_positions: Vec<usize>,
    /// `steps[k]` is the distribution the item at position `k + 1` was drawn from.
    pub steps: Vec<NextItemDist>,
}

impl UserTruth {
    /// Distribution of the item at `position` (`position >= 1`).
    pub fn at(&self, position: usize) -> Option<&NextItemDist> {
        position.checked_sub(1).and_then(|k| self.steps.get(k))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format_version: u32,
    pub config: SynthConfig,
    pub users: Vec<UserTruth>,
}

impl GroundTruth {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let truth: GroundTruth = serde_json::from_str(s)?;
        if truth.format_version != TRUTH_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                what: "ground truth",
                found: truth.format_version,
                expected: TRUTH_FORMAT_VERSION,
            });
        }
        Ok(truth)
    }

    pub fn user(&self, id: &str) -> Option<&UserTruth> {
        self.users.iter().find(|u| u.user == id)
    }
}

/// Random cyclic successor map over `0..n`.
fn cyclic_successors(n: usize, rng: &mut Rng) -> Vec<u32> {
    let mut order: Vec<u32> = (0..n as u32).collect();
    rng.shuffle(&mut order);
    let mut succ = vec![0u32; n];
    for i in 0..n {
        succ[order[i] as usize] = order[(i + 1) % n];
    }
    succ
}

/// Next chain item from `prev` over `0..n`.
fn chain_step(prev: u32, succ: &[u32], concentration: f64, rng: &mut Rng) -> u32 {
    let s = succ[prev as usize];
    if rng.uniform() < concentration {
        return s;
    }
    let k = rng.below(succ.len() as u64 - 1) as u32;
    if k >= s {
        k + 1
    } else {
        k
    }
}

/// Generates a synthetic corpus plus the distribution every item was drawn from.
pub fn synth(cfg: &SynthConfig) -> Result<(Corpus, GroundTruth)> {
    if cfg.n_users == 0 || cfg.seq_len == 0 {
        return Err(Error::EmptyCorpus);
    }
    if !(0.0..=1.0).contains(&cfg.concentration) || !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::InvalidHyper(
            "concentration and noise must lie in [0, 1]".into(),
        ));
    }
    let n = cfg.n_items;
    let n_gift = match cfg.pattern {
        Pattern::GiftNoise => (n / 10).max(1),
        _ => 0,
    };
    let n_regular = n.saturating_sub(n_gift);
    if n_regular < 2 {
        return Err(Error::InvalidHyper(format!("n_items = {n} is too small for {}", cfg.pattern)));
    }
    if cfg.pattern == Pattern::Periodic {
        let max_period = cfg.period.unwrap_or(5);
        if cfg.period.is_some_and(|p| p < 1) || max_period > n {
            return Err(Error::InvalidHyper(format!(
                "periodic motif of length {max_period} needs at least that many items"
            )));
        }
    }

    let mut rng = Rng::new(cfg.seed);
    let succ = cyclic_successors(n_regular, &mut rng);
    let c = cfg.concentration;
    let mut users = Vec::with_capacity(cfg.n_users);
    let mut truths = Vec::with_capacity(cfg.n_users);

    for u in 0..cfg.n_users {
        let id = format!("u{u:05}");
        let mut seq = Vec::with_capacity(cfg.seq_len);
        let mut steps = Vec::with_capacity(cfg.seq_len.saturating_sub(1));
        let mut noise_positions = Vec::new();
        match cfg.pattern {
            Pattern::Markov1 => {
                let mut cur = rng.below(n as u64) as u32;
                seq.push(cur);
                for _ in 1..cfg.seq_len {
                    steps.push(NextItemDist {
                        blocks: NextItemDist::peaked(0, n as u32, succ[cur as usize], c, 1.0),
                    });
                    cur = chain_step(cur, &succ, c, &mut rng);
                    seq.push(cur);
                }
            }
            Pattern::Periodic => {
                let period = cfg.period.unwrap_or_else(|| 3 + rng.below(3) as usize);
                let mut pool: Vec<u32> = (0..n as u32).collect();
                for i in 0..period {
                    let j = i + rng.below((n - i) as u64) as usize;
                    pool.swap(i, j);
                }
                let motif = &pool[..period];
                for t in 0..cfg.seq_len {
                    let item = motif[t % period];
                    if t > 0 {
                        steps.push(NextItemDist {
                            blocks: vec![(item, item + 1, 1.0)],
                        });
                    }
                    seq.push(item);
                }
            }
            Pattern::GiftNoise => {
                let eps = cfg.noise;
                let (g_lo, g_hi) = (n_regular as u32, n as u32);
                let mut last_real = rng.below(n_regular as u64) as u32;
                seq.push(last_real);
                for t in 1..cfg.seq_len {
                    let mut blocks = NextItemDist::peaked(0, g_lo, succ[last_real as usize], c, 1.0 - eps);
                    blocks.push((g_lo, g_hi, eps / n_gift as f64));
                    steps.push(NextItemDist { blocks });
                    if rng.uniform() < eps {
                        seq.push(g_lo + rng.below(n_gift as u64) as u32);
                        noise_positions.push(t);
                    } else {
                        last_real = chain_step(last_real, &succ, c, &mut rng);
                        seq.push(last_real);
                    }
                }
            }
        }
        let user = UserSequence::new(id.clone(), seq);
        truths.push(UserTruth {
            user: id,
            split: user.split(),
            noise_positions,
            steps,
        });
        users.push(user);
    }

    let items = (0..n).map(|i| format!("i{i:05}")).collect();
    let corpus = Corpus::assemble(items, users, cfg.seq_len, cfg.seq_len)?;
    let truth = GroundTruth {
        format_version: TRUTH_FORMAT_VERSION,
        config: cfg.clone(),
        users: truths,
    };
    Ok((corpus, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn events(lines: &str) -> Vec<Event> {
        parse_events(lines.as_bytes()).unwrap()
    }

    #[test]
    fn split_lengths() {
        assert_eq!(train_len(10), 8);
        assert_eq!(train_len(1), 1);
        assert_eq!(train_len(4), 3);
        assert_eq!(train_len(30), 24);
    }

    #[test]
    fn ingest_filters_and_splits() {
        let mut text = String::from("# header\n");
        for t in 0..10 {
            text.push_str(&format!("alice\titem{t}\t{}\n", 100 + t));
        }
        for t in 0..9 {
            text.push_str(&format!("bob\titem{t}\t{t}\n"));
        }
        let corpus = build_corpus(&events(&text), 10, 300).unwrap();
        assert_eq!(corpus.users().len(), 1);
        let alice = &corpus.users()[0];
        assert_eq!(alice.train().len(), 8);
        assert_eq!(alice.test_raw().len(), 2);
        assert_eq!(corpus.n_items(), 10);
        assert!(matches!(
            build_corpus(&events(&text), 11, 300),
            Err(Error::EmptyCorpus)
        ));
        assert_eq!(build_corpus(&events(&text), 9, 9).unwrap().users()[0].id, "bob");
    }

    #[test]
    fn events_sorted_by_time_then_file_order() {
        let text = "u\tc\t5\nu\ta\t1\nu\tb\t5\nu\td\t3\n";
        let corpus = build_corpus(&events(text), 1, 300).unwrap();
        let ids: Vec<&str> = corpus.users()[0]
            .items()
            .iter()
            .map(|i| corpus.item_id(*i).unwrap())
            .collect();
        assert_eq!(ids, ["a", "d", "c", "b"]);
    }

    #[test]
    fn test_suffix_dedup() {
        let u = UserSequence::new("u", vec![9, 8, 7, 6, 5, 4, 3, 2, 1, 1, 2, 1, 0, 2, 0]);
        assert_eq!(u.split(), 12);
        assert_eq!(u.test_raw(), &[0, 2, 0]);
        assert_eq!(u.test(), vec![0, 2]);
        let v = UserSequence::new("v", vec![0, 1, 2, 3, 4, 5, 6, 7, 0, 1, 0]);
        assert_eq!(v.test_raw(), &[0, 1, 0]);
        assert_eq!(v.test(), vec![0, 1]);
        let w = UserSequence::new("w", vec![1, 1, 1, 1, 1, 1, 1, 1, 3, 4, 3]);
        assert_eq!(w.split(), 8);
        assert_eq!(w.test(), vec![3, 4]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_events("u\ti\t1\n\nu\ti\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_events("u\ti\tnoon\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn stats_arithmetic() {
        let corpus = Corpus::from_indexed(
            (0..10).map(|i| i.to_string()).collect(),
            vec![
                ("a".into(), vec![0, 1, 2, 3, 4]),
                ("b".into(), vec![5, 6, 7, 8, 9]),
            ],
            1,
            300,
        )
        .unwrap();
        let s = stats(&corpus);
        assert_eq!((s.users, s.items, s.feedbacks), (2, 10, 10));
        assert_eq!(s.avg_len, 5.0);
        assert!((s.sparsity - 0.5).abs() < 1e-15);
        assert_eq!(s.to_string().lines().count(), 5);

        let single = Corpus::from_indexed(vec!["x".into()], vec![("a".into(), vec![0; 10])], 1, 300).unwrap();
        assert_eq!(stats(&single).sparsity, -9.0);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let (corpus, _) = synth(&SynthConfig::new(5, 20, 12, Pattern::Markov1, 3)).unwrap();
        let json = corpus.to_json().unwrap();
        let back = Corpus::from_json(&json).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(back.to_json().unwrap(), json);
        let bumped = json.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(Corpus::from_json(&bumped), Err(Error::FormatVersion { .. })));
        let broken = json.replacen("\"split\": 9", "\"split\": 4", 1);
        assert!(Corpus::from_json(&broken).is_err());
    }

    #[test]
    fn synth_is_deterministic() {
        for pattern in [Pattern::Markov1, Pattern::Periodic, Pattern::GiftNoise] {
            let cfg = SynthConfig::new(8, 30, 20, pattern, 17);
            let (a, ta) = synth(&cfg).unwrap();
            let (b, tb) = synth(&cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(ta, tb);
            assert_eq!(a.users().len(), 8);
            assert_eq!(a.n_items(), 30);
            assert!(a.users().iter().all(|u| u.items().len() == 20));
            for u in &ta.users {
                assert_eq!(u.steps.len(), 19);
                for s in &u.steps {
                    assert!((s.total() - 1.0).abs() < 1e-12);
                }
            }
        }
        assert!("zipf".parse::<Pattern>().is_err());
    }

    #[test]
    fn periodic_test_items_follow_position() {
        let mut cfg = SynthConfig::new(6, 40, 30, Pattern::Periodic, 5);
        cfg.period = Some(3);
        let (corpus, _) = synth(&cfg).unwrap();
        for u in corpus.users() {
            let items = u.items();
            for (t, item) in items.iter().enumerate().skip(u.split()) {
                assert_eq!(*item, items[t % 3]);
            }
        }
    }

    #[test]
    fn markov_mode_predictor_hits_concentration() {
        let cfg = SynthConfig::new(300, 100, 40, Pattern::Markov1, 21);
        let (corpus, truth) = synth(&cfg).unwrap();
        let mut hits = 0usize;
        let mut total = 0usize;
        for (u, t) in corpus.users().iter().zip(&truth.users) {
            for pos in 1..u.items().len() {
                hits += (t.at(pos).unwrap().mode() == u.items()[pos]) as usize;
                total += 1;
            }
        }
        let recall1 = hits as f64 / total as f64;
        assert!((recall1 - 0.9).abs() < 0.01, "{recall1}");
    }

    #[test]
    fn gift_noise_marks_gift_items() {
        let cfg = SynthConfig::new(50, 100, 40, Pattern::GiftNoise, 2);
        let (corpus, truth) = synth(&cfg).unwrap();
        let mut planted = 0;
        for (u, t) in corpus.users().iter().zip(&truth.users) {
            for (pos, item) in u.items().iter().enumerate() {
                let is_gift = *item >= 90;
                assert_eq!(is_gift, t.noise_positions.contains(&pos));
                planted += is_gift as usize;
            }
        }
        let rate = planted as f64 / (50.0 * 39.0);
        assert!((rate - 0.15).abs() < 0.03, "{rate}");
    }
}
