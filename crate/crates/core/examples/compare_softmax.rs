//! Trains the CRF model and the softmax baseline on the same noisy corpus
//! with strong type-relation coupling, over several seeds, and compares
//! dev scores.
//!
//!     cargo run --release --example compare_softmax -- [seeds] [sentences] [noise]

use jointcrf::model::{init_params, HyperParams, OutputLayer};
use jointcrf::querygen::Setup;
use jointcrf::synth::{self, RuleGrammar};
use jointcrf::training::{evaluate, train_loop, Dataset, TrainConfig};

fn main() -> jointcrf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(5);
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let noise: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.2);

    let grammar = RuleGrammar::coupled(11, noise);
    let corpus = synth::generate(&grammar, n + n / 4)?;
    let (train, dev) = corpus.split_at(n);

    println!("seed  output   Avg EC  Avg RE  Avg EC+RE");
    let mut totals = [[0.0; 3]; 2];
    for seed in 1..=seeds {
        for (i, output) in [OutputLayer::Crf, OutputLayer::Softmax].into_iter().enumerate() {
            let hyper = HyperParams {
                nk_c: 32,
                nk_e: 16,
                h_c: 32,
                h_e: 16,
                k: 3,
                emb_dim: 32,
                context_width: 3,
                entity_width: 2,
                output,
            };
            let params = init_params(hyper, synth::embeddings(&grammar, 32, 100 + seed), seed)?;
            let train_set = Dataset::build(&params, train, Setup::EntityPairs, 1.0, 0)?;
            let dev_set = Dataset::build(&params, dev, Setup::EntityPairs, 1.0, 0)?;
            let config = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let out = train_loop(params, &train_set, &dev_set, &config)?;
            let r = evaluate(&out.best, &dev_set, false, false)?;
            let row = [r.avg_ec(), r.avg_re(), r.avg_ec_re()].map(|v| 100.0 * v);
            println!("{seed:>4}  {output:<7}  {:6.2}  {:6.2}  {:9.2}", row[0], row[1], row[2]);
            for (t, v) in totals[i].iter_mut().zip(row) {
                *t += v / seeds as f64;
            }
        }
    }
    for (name, t) in ["crf", "softmax"].iter().zip(totals) {
        println!("mean  {name:<7}  {:6.2}  {:6.2}  {:9.2}", t[0], t[1], t[2]);
    }
    Ok(())
}
