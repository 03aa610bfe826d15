//! Full-corpus evaluation of an HCA model, single-threaded vs. the rayon pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hca_seqrec::baselines::SequenceScorer;
use hca_seqrec::corpus::{synth, Pattern, SynthConfig};
use hca_seqrec::metrics::{evaluate, EvalConfig, DEFAULT_TOP_K};
use hca_seqrec::parallel::Parallelism;
use hca_seqrec::seqmodel::HyperParams;
use hca_seqrec::training::{init_params, TrainConfig};

fn bench_evaluate(c: &mut Criterion) {
    let (corpus, _) = synth(&SynthConfig::new(400, 500, 60, Pattern::Markov1, 1)).unwrap();
    let hyper = HyperParams::new(20, 2, 3, corpus.n_items()).unwrap();
    let params = init_params(&hyper, &TrainConfig::default());
    let scorer = SequenceScorer {
        params: &params,
        hyper: &hyper,
    };
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).max(4);

    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for (label, par) in [
        ("sequential", Parallelism::Sequential),
        ("threads", Parallelism::Threads(threads)),
    ] {
        let cfg = EvalConfig {
            k_list: DEFAULT_TOP_K.to_vec(),
            rank_over_all: false,
            parallelism: par,
        };
        group.bench_with_input(BenchmarkId::new(label, threads), &cfg, |b, cfg| {
            b.iter(|| evaluate("hca", &scorer, &corpus, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_evaluate);
criterion_main!(benches);
