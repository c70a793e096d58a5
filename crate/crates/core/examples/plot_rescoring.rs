//! Samples ten plot candidates for one genre and shows how classifier
//! rescoring picks among them.
//!
//!     cargo run --example plot_rescoring -- war "The general"

use vscript::plot::{generate_plot, RescoreConfig};
use vscript::{Backends, Genre};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let genre: Genre = args.next().as_deref().unwrap_or("crime").parse()?;
    let start = args.next().unwrap_or_else(|| "The detective".to_string());

    let backends = Backends::mock();
    let selection = generate_plot(&backends, genre, &start, &RescoreConfig::default(), 7)?;
    for (i, c) in selection.candidates.iter().enumerate() {
        let mark = if i == selection.selected { "*" } else { " " };
        let p = c.target_genre_prob.map_or("   -  ".to_string(), |p| format!("{p:.4}"));
        println!("{mark} [{i}] p({})={p}  {}", genre.key(), c.text);
    }
    println!("\nselected plot, {} sentences:", selection.plot.sentences.len());
    for s in &selection.plot.sentences {
        println!("  {}. {}", s.index, s.text);
    }
    Ok(())
}
