//! Partition function, marginals, NLL and Viterbi on a random score
//! sequence over the 11 joint classes, checked against enumeration.
//!
//!     cargo run --example crf_decoding -- [seed]

use jointcrf::corpus::LabelSpace;
use jointcrf::crf::{
    brute_force_log_z, forward_log_z, marginals, nll_and_gradients, viterbi, viterbi_masked, LabelSequence,
};
use jointcrf::math::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(y: &LabelSequence) -> String {
    y.map(LabelSpace::tag_name).join(" ")
}

fn main() -> jointcrf::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = LabelSpace::N;
    let mut d = Matrix::zeros(3, n);
    let mut q = Matrix::zeros(n + 2, n + 2);
    for v in d.as_mut_slice().iter_mut().chain(q.as_mut_slice()) {
        *v = rng.gen_range(-2.0..2.0);
    }

    let fwd = forward_log_z(&d, &q)?;
    let brute = brute_force_log_z(&d, &q)?;
    println!("log Z forward {fwd:.12}");
    println!("log Z brute   {brute:.12}  (|diff| {:.1e})", (fwd - brute).abs());

    let m = marginals(&d, &q)?;
    for t in 0..3 {
        let (best, p) = m
            .row(t)
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (c, &p)| if p > acc.1 { (c, p) } else { acc });
        println!("position {t}: most likely {} ({p:.3})", LabelSpace::tag_name(best));
    }

    let (y, score) = viterbi(&d, &q)?;
    println!("viterbi        {}  score {score:.4}", names(&y));
    let (ym, score_m) = viterbi_masked(&d, &q, LabelSpace::N_EC)?;
    println!("masked viterbi {}  score {score_m:.4}", names(&ym));

    let loss = nll_and_gradients(&d, &q, &ym)?;
    println!("NLL of the masked path {:.4}", loss.loss);
    Ok(())
}
