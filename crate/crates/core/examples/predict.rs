//! Trains a small model, saves and reloads the checkpoint, then labels
//! entity pairs in held-out sentences.
//!
//!     cargo run --release --example predict

use std::collections::BTreeMap;

use jointcrf::corpus::{LabelSpace, Span};
use jointcrf::model::{init_params, load_checkpoint, predict, save_checkpoint, HyperParams, OutputLayer, QueryInput};
use jointcrf::querygen::{split_context, Setup};
use jointcrf::synth::{self, RuleGrammar};
use jointcrf::training::{train_loop, Dataset, TrainConfig};

fn main() -> jointcrf::Result<()> {
    let grammar = RuleGrammar::standard(11);
    let corpus = synth::generate(&grammar, 600)?;
    let (train, dev) = corpus.split_at(500);
    let hyper = HyperParams {
        nk_c: 16,
        nk_e: 8,
        h_c: 16,
        h_e: 8,
        k: 3,
        emb_dim: 32,
        context_width: 3,
        entity_width: 2,
        output: OutputLayer::Crf,
    };
    let params = init_params(hyper, synth::embeddings(&grammar, 32, 5), 3)?;
    let train_set = Dataset::build(&params, train, Setup::EntityPairs, 1.0, 0)?;
    let dev_set = Dataset::build(&params, dev, Setup::EntityPairs, 1.0, 0)?;
    let config = TrainConfig {
        max_epochs: 8,
        ..TrainConfig::default()
    };
    let out = train_loop(params, &train_set, &dev_set, &config)?;

    let dir = std::env::temp_dir().join("jointcrf_predict_example");
    save_checkpoint(&dir, &out.best, config.seed, BTreeMap::new())?;
    let (model, _) = load_checkpoint(&dir)?;
    println!("checkpoint at {}", dir.display());

    // pick sentences from the dev split and query their first two mentions
    for s in dev.iter().filter(|s| s.entities.len() >= 2).take(5) {
        let ids = model.vocab.encode(&s.tokens);
        let (a, b) = (s.entities[0].span(), s.entities[1].span());
        let (a, b): (Span, Span) = if a.start < b.start { (a, b) } else { (b, a) };
        let input = QueryInput {
            token_ids: &ids,
            split: split_context(ids.len(), a, b)?,
        };
        let p = predict(&model, &input, true)?;
        println!(
            "{}\n  ({}) {} ({})    [{}] [{}]",
            s.tokens.join(" "),
            LabelSpace::tag_name(p.labels[0]),
            LabelSpace::tag_name(p.labels[1]),
            LabelSpace::tag_name(p.labels[2]),
            s.text(a),
            s.text(b)
        );
    }
    Ok(())
}
