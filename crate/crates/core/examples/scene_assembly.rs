//! Builds a script by hand from a fixed plot: dialogue, scene header and
//! description per sentence, then banlist redaction and rendering.

use vscript::dialogue::generate_dialogue;
use vscript::plot::{plot_from_text, DecodingParams};
use vscript::scene::{assemble_script, generate_scene_description, BanList, MatchMode};
use vscript::text::derive_seed;
use vscript::{render_script, Backends, Genre};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plot = plot_from_text(
        Genre::Crime,
        "Frank finds a damn gun under the bridge. He calls Maria at midnight. \
         They agree to meet at the warehouse.",
    )?;
    let backends = Backends::mock();
    let gen = backends.generator.as_ref();
    let decoding = DecodingParams::default();

    let mut dialogues = Vec::new();
    let mut parts = Vec::new();
    for s in &plot.sentences {
        let d = generate_dialogue(gen, s, &decoding, derive_seed(1, "dialogue", s.index as u64))?;
        parts.push(generate_scene_description(
            gen,
            &d,
            &decoding,
            derive_seed(1, "scene", s.index as u64),
        )?);
        dialogues.push(d);
    }

    let banlist = BanList::new(["damn", "gun"], MatchMode::Word)?;
    let assembly = assemble_script(&plot, &dialogues, &parts, &banlist)?;
    print!("{}", render_script(&assembly.script));
    eprintln!("{} redactions", assembly.redactions.len());
    for r in &assembly.redactions {
        eprintln!("  scene {} {}: {}", r.scene, r.field, r.redaction.term);
    }
    Ok(())
}
