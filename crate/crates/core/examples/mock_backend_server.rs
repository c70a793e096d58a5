//! Serves the deterministic mock backends over the JSON wire protocol, so a
//! second process can be pointed at them with `VSCRIPT_GEN_URL` and
//! friends. With `--self-test` it starts, calls every endpoint through the
//! remote client and exits.
//!
//!     cargo run --example mock_backend_server -- 127.0.0.1:9100

use vscript::gateway::wire::backend_router;
use vscript::gateway::{BackendUrls, GenerationRequest};
use vscript::Backends;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let self_test = args.iter().any(|a| a == "--self-test");
    let addr = args.iter().find(|a| !a.starts_with("--")).cloned().unwrap_or_else(|| {
        if self_test {
            "127.0.0.1:0".into()
        } else {
            "127.0.0.1:9100".into()
        }
    });

    let listener = tokio::net::TcpListener::bind(&addr).await?;
    let base = format!("http://{}", listener.local_addr()?);
    println!("mock backends on {base}");
    let server = axum::serve(listener, backend_router(Backends::mock()));
    if !self_test {
        server.await?;
        return Ok(());
    }
    tokio::spawn(async move { server.await });
    let report = tokio::task::spawn_blocking(move || {
        let url = Some(base);
        let remote = Backends::from_urls(&BackendUrls {
            generator: url.clone(),
            classifier: url.clone(),
            embedder: url.clone(),
            scorer: url,
            api_token: None,
        });
        let req = GenerationRequest {
            prompt: "This is a war plot. The general".into(),
            max_new_tokens: 60,
            top_k: 4,
            temperature: 1.0,
            num_candidates: 2,
            seed: 1,
            stop_marker: None,
        };
        let texts = remote.generator.generate_text(&req).map_err(|e| e.to_string())?;
        let dist = remote.classifier.classify_genre(&texts[0]).map_err(|e| e.to_string())?;
        let emb = remote.embedder.embed_texts(&texts).map_err(|e| e.to_string())?;
        let ppl = remote.scorer.score_perplexity(&texts[0]).map_err(|e| e.to_string())?;
        Ok::<_, String>(format!(
            "generated {:?}\nclassified {:?}\nembedded {} x {}\nperplexity {:.3}",
            texts,
            dist.probs(),
            emb.len(),
            emb[0].values.len(),
            ppl.perplexity()
        ))
    })
    .await?;
    println!("{}", report?);
    Ok(())
}
