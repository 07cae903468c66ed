//! Prints the gold table of one sentence under each setup: entity labels
//! on the diagonal, relation labels above it.
//!
//!     cargo run --example table_filling

use jointcrf::corpus::{EcLabel, EntityMention, LabelSpace, ReLabel, RelationAnnotation, Sentence};
use jointcrf::querygen::{generate, Setup, TableSpec};

fn show(table: &TableSpec, sentence: &Sentence) {
    let heads: Vec<String> = table.rows.iter().map(|s| sentence.text(*s)).collect();
    let width = heads.iter().map(String::len).max().unwrap_or(0).max(11);
    print!("{:width$} ", "");
    for h in &heads {
        print!("{h:>width$} ");
    }
    println!();
    for (i, head) in heads.iter().enumerate() {
        print!("{head:>width$} ");
        for j in 0..table.size() {
            let cell = if j < i { String::new() } else { LabelSpace::tag_name(table.cell(i, j)) };
            print!("{cell:>width$} ");
        }
        println!();
    }
}

fn main() {
    let sentence = Sentence {
        id: "demo".into(),
        tokens: "Mary Jones works for Acme Corp in Ohio".split(' ').map(String::from).collect(),
        entities: vec![
            EntityMention { start: 0, end: 2, label: EcLabel::Peop },
            EntityMention { start: 4, end: 6, label: EcLabel::Org },
            EntityMention { start: 7, end: 8, label: EcLabel::Loc },
        ],
        relations: vec![
            RelationAnnotation { head: 0, tail: 1, label: ReLabel::WorkFor },
            RelationAnnotation { head: 1, tail: 2, label: ReLabel::OrgBasedIn },
        ],
    };
    let corpus = [sentence];
    for setup in [Setup::EntityPairs, Setup::TableFilling, Setup::TokenTable] {
        let set = generate(setup, &corpus);
        let table = &set.tables[0];
        println!(
            "setup {setup}: {} rows, {} cells, {} queries",
            table.size(),
            table.cell_count(),
            set.queries.len()
        );
        show(table, &corpus[0]);
        println!();
    }
}
