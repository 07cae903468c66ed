//! Scores corrupted gold predictions with the table rules and prints the
//! per-class report and row disagreement.
//!
//!     cargo run --example evaluate_table -- [setup] [corruption]

use jointcrf::corpus::LabelSpace;
use jointcrf::evaluation::{evaluate_predictions, gold_predictions};
use jointcrf::querygen::{generate, Setup};
use jointcrf::synth::{self, RuleGrammar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> jointcrf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let setup: Setup = args.first().map_or(Ok(Setup::TokenTable), |s| s.parse())?;
    let corruption: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.1);

    let corpus = synth::generate(&RuleGrammar::standard(2), 200)?;
    let set = generate(setup, &corpus);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut preds = gold_predictions(&set);
    for y in &mut preds {
        for v in y.iter_mut() {
            if rng.gen_bool(corruption) {
                *v = rng.gen_range(0..LabelSpace::N);
            }
        }
    }
    let report = evaluate_predictions(&set, &preds, false)?;
    println!("setup {setup}, {} queries, {:.0}% of labels replaced", set.queries.len(), 100.0 * corruption);
    println!("{report}");
    Ok(())
}
