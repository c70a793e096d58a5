//! Turns a summarization corpus into dialogue-generation training text, then
//! generates and parses a dialogue for one plot sentence.
//!
//!     cargo run --example dialogue_inversion -- fixtures/summaries.jsonl

use std::path::PathBuf;

use vscript::dialogue::{generate_dialogue, invert_summarization_corpus, load_records, write_training_corpus};
use vscript::plot::DecodingParams;
use vscript::{Backends, PlotSentence};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/summaries.jsonl"));
    let records = load_records(&path)?;
    let strings = invert_summarization_corpus(&records)?;
    println!("-- {} training strings (JSONL) --", strings.len());
    write_training_corpus(&strings, std::io::stdout().lock())?;

    let sentence = PlotSentence {
        index: 0,
        text: "Maria hides the stolen money before the police arrive.".into(),
    };
    let backends = Backends::mock();
    let dialogue = generate_dialogue(backends.generator.as_ref(), &sentence, &DecodingParams::default(), 11)?;
    println!("\n-- dialogue for: {} --", sentence.text);
    for t in &dialogue.turns {
        println!("{}: {}", t.speaker, t.utterance);
    }
    println!("monologue={} fallback={}", dialogue.monologue, dialogue.fallback);
    Ok(())
}
