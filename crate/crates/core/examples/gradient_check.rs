//! Compares analytic gradients of the full loss with central finite
//! differences, tensor by tensor, for both output layers.
//!
//!     cargo run --example gradient_check -- [queries]

use jointcrf::model::OutputLayer;
use jointcrf::training::{grad_check, GradCheckConfig};

fn main() -> jointcrf::Result<()> {
    let queries: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let mut ok = true;
    for output in [OutputLayer::Crf, OutputLayer::Softmax] {
        let config = GradCheckConfig {
            n_queries: queries,
            ..GradCheckConfig::tiny(output)
        };
        let report = grad_check(&config)?;
        println!("{output} head");
        println!("{report}");
        ok &= report.passed;
    }
    std::process::exit(if ok { 0 } else { 1 });
}
