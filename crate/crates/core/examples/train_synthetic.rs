//! Trains the CRF model on a generated corpus and reports train triple
//! accuracy, dev scores and the strongest learned transitions.
//!
//!     cargo run --release --example train_synthetic -- [sentences] [epochs] [noise]

use std::time::Instant;

use jointcrf::analysis::inspect_transitions;
use jointcrf::model::{init_params, HyperParams, OutputLayer};
use jointcrf::querygen::Setup;
use jointcrf::synth::{self, RuleGrammar};
use jointcrf::training::{evaluate, train_loop, Dataset, TrainConfig};

fn main() -> jointcrf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let noise: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let output: OutputLayer = args.get(3).map_or(Ok(OutputLayer::Crf), |s| s.parse())?;

    let grammar = if noise > 0.0 {
        RuleGrammar::coupled(11, noise)
    } else {
        RuleGrammar::standard(11)
    };
    let corpus = synth::generate(&grammar, n + n / 4)?;
    let (train, dev) = corpus.split_at(n);

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
    let params = init_params(hyper, synth::embeddings(&grammar, 32, 5), 3)?;
    let train_set = Dataset::build(&params, train, Setup::EntityPairs, 1.0, 0)?;
    let dev_set = Dataset::build(&params, dev, Setup::EntityPairs, 1.0, 0)?;
    println!("{} train queries, {} dev queries", train_set.len(), dev_set.len());

    let config = TrainConfig {
        max_epochs: epochs,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = train_loop(params, &train_set, &dev_set, &config)?;
    for r in &out.log {
        println!(
            "epoch {:>2}  lr {:.4}  loss {:.4}  dev EC {:.4}  RE {:.4}  EC+RE {:.4}{}",
            r.epoch,
            r.lr,
            r.train_loss,
            r.dev_avg_ec,
            r.dev_avg_re,
            r.dev_avg_ec_re,
            if r.halved { "  (lr halved)" } else { "" }
        );
    }
    println!("trained in {:.1?}", start.elapsed());

    let train_report = evaluate(&out.best, &train_set, false, false)?;
    let dev_report = evaluate(&out.best, &dev_set, false, false)?;
    println!("train triple accuracy {:.4}", train_report.triple_accuracy.unwrap_or(0.0));
    println!("{dev_report}");
    if output == OutputLayer::Crf {
        print!("{}", inspect_transitions(out.best.transitions(), 0.5)?);
    }
    Ok(())
}
