//! Builds a clip index from the bundled captions and face annotations,
//! persists it, reloads it and runs constrained queries.

use std::path::Path;

use vscript::domain::TimeOfDay;
use vscript::scene::BanList;
use vscript::video::{build_database, load_index, retrieve_clip, save_index, RetrievalConstraints};
use vscript::{Backends, Genre};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let backends = Backends::mock();
    let (index, report) = build_database(
        &fixtures.join("captions"),
        &fixtures.join("annotations"),
        &backends,
        &BanList::builtin(),
    )?;
    println!(
        "{} videos, {} clips kept, rejected: {:?}",
        report.videos, report.kept, report.rejected
    );

    let dir = tempfile::tempdir()?;
    save_index(&index, dir.path())?;
    let index = load_index(dir.path())?;

    let queries = [
        (
            "The detective searches the alley for the gun.",
            RetrievalConstraints::default(),
        ),
        (
            "Soldiers hold the ridge.",
            RetrievalConstraints {
                genre: Some(Genre::War),
                time_of_day: Some(TimeOfDay::Day),
                min_char_count: Some(2),
                ..Default::default()
            },
        ),
        (
            "Two lovers say goodbye.",
            RetrievalConstraints {
                genre: Some(Genre::Romance),
                time_of_day: Some(TimeOfDay::Night),
                ..Default::default()
            },
        ),
    ];
    for (q, c) in &queries {
        let r = retrieve_clip(backends.embedder.as_ref(), q, &index, c)?;
        println!("\n{q}\n  constraints {c:?}\n  relaxed {:?}", r.relaxed_filters);
        for h in r.hits.iter().take(3) {
            println!(
                "  {:.4} {} [{}-{}] {}",
                h.score, h.clip.id, h.clip.start_s, h.clip.end_s, h.clip.caption
            );
        }
    }
    Ok(())
}
