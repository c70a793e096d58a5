//! Generates a crime script, then steers it twice: once towards romance and
//! once by injecting words. Earlier scenes never change.

use vscript::{Engine, Genre, SteerEvent};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::mock();
    let mut session = engine.run_pipeline(Genre::Crime, "The detective", 5);
    println!("initial: {} scenes", session.scene_count());

    session = engine.steer(&session, SteerEvent::now(Some(Genre::Romance), None))?;
    println!(
        "after genre steer: {} scenes, genre {}",
        session.scene_count(),
        session.genre.key()
    );

    session = engine.steer(&session, SteerEvent::now(None, Some("a letter from the past".into())))?;
    println!("after word steer: {} scenes\n", session.scene_count());

    print!("{}", session.rendered_script());
    println!("history: {:?}", session.history);
    Ok(())
}
