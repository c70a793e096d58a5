//! Runs the whole pipeline with mock backends over the bundled clip corpus
//! and prints the script with its clip and music choices.
//!
//!     cargo run --example full_pipeline -- romance "On the last night of summer"

use std::path::Path;

use vscript::pipeline::PresentationView;
use vscript::scene::BanList;
use vscript::video::build_database;
use vscript::{Backends, Engine, Genre};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let genre: Genre = args.next().as_deref().unwrap_or("crime").parse()?;
    let start = args.next().unwrap_or_else(|| "The detective".to_string());

    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let (index, _) = build_database(
        &fixtures.join("captions"),
        &fixtures.join("annotations"),
        &Backends::mock(),
        &BanList::builtin(),
    )?;
    let engine = Engine::mock().with_index(index);
    let session = engine.run_pipeline(genre, &start, 42);

    println!("status: {:?}\n", session.status);
    print!("{}", session.rendered_script());
    let view = PresentationView::of(&session);
    for c in &view.clips {
        println!("scene {} -> {:?} {:?}", c.scene_index, c.clip_id, c.uri);
    }
    if let Some(m) = &view.music {
        println!("music: {m:?}");
    }
    for w in &session.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
