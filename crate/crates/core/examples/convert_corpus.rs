//! Parses a column-format corpus, writes the canonical JSON-lines form and
//! prints label counts plus the number of queries each setup produces.
//! Without arguments a one-sentence sample is used.
//!
//!     cargo run --example convert_corpus -- [input.corp] [output.jsonl]

use jointcrf::corpus::{load_canonical, parse_raw, parse_raw_str, write_canonical, ColumnMap, CorpusStats};
use jointcrf::querygen::{generate, Setup};

const SAMPLE: &str = "\
7\tPeop\t0\tO\tNNP/NNP\tJohn/Smith\tO\tO\tO
7\tO\t1\tO\tVBD\tlived\tO\tO\tO
7\tO\t2\tO\tIN\tin\tO\tO\tO
7\tLoc\t3\tO\tNNP\tBoston\tO\tO\tO
7\tO\t4\tO\t.\t.\tO\tO\tO

0\t3\tLive_In

";

fn main() -> jointcrf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let columns = ColumnMap::default();
    let sentences = match args.first() {
        Some(path) => parse_raw(path, &columns)?,
        None => parse_raw_str(SAMPLE, "sample", &columns)?,
    };
    let output = args
        .get(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("jointcrf_converted.jsonl"));
    write_canonical(&output, &sentences)?;
    assert_eq!(load_canonical(&output)?, sentences);
    println!("wrote {} sentences to {}", sentences.len(), output.display());

    let stats = CorpusStats::of(&sentences);
    println!("{}", serde_json::to_string_pretty(&stats)?);
    for setup in [Setup::EntityPairs, Setup::TableFilling, Setup::TokenTable] {
        let set = generate(setup, &sentences);
        println!("setup {setup}: {} queries, {} with relation N", set.queries.len(), set.negatives());
    }
    Ok(())
}
