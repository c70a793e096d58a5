//! Scores two small corpora with every automatic metric.

use vscript::metrics::{corpus_bleu, evaluate, tokenize, EvalInput, Metric};
use vscript::{Backends, Genre};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let candidates = vec![
        "The detective follows the suspect into the precinct.".to_string(),
        "The killer hides the gun and the gun is never found.".to_string(),
        "A witness talks to the police about the robbery.".to_string(),
    ];
    let references = vec![
        "The detective follows a suspect to the precinct.".to_string(),
        "The killer hides the weapon where nobody looks.".to_string(),
        "A witness tells the police about the heist.".to_string(),
    ];
    let input = EvalInput {
        candidates: candidates.clone(),
        references: Some(references.clone()),
        target: Some(Genre::Crime),
    };
    let report = evaluate(&Backends::mock(), &input, &Metric::ALL)?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    let c: Vec<_> = candidates.iter().map(|s| tokenize(s)).collect();
    println!("self-BLEU {:.4}", corpus_bleu(&c, &c)?);
    Ok(())
}
