//! Serves the mock backends over HTTP and talks to them through the HTTP
//! client, exactly as the engine would talk to a model server.

use std::thread;

use finequest::backends::config::BackendConfig;
use finequest::backends::http::HttpBackend;
use finequest::backends::wire::dispatch;
use finequest::backends::{Backends, Role};
use finequest::clip::ClipTensor;

fn run() -> anyhow::Result<()> {
    let server = tiny_http::Server::http("127.0.0.1:0").map_err(|e| anyhow::anyhow!("{e}"))?;
    let port = server.server_addr().to_ip().map(|a| a.port()).unwrap_or(0);
    let local = BackendConfig::all_mock(8).build(0)?;
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = Vec::new();
            let _ = req.as_reader().read_to_end(&mut body);
            let reply = dispatch(&local, req.method().as_str(), req.url(), &body);
            let _ = req.respond(tiny_http::Response::from_data(reply.body).with_status_code(reply.status));
        }
    });
    let base = format!("http://127.0.0.1:{port}");
    let remote = Backends::new()
        .with_captioner(HttpBackend::new(Role::Captioner, &base, 5_000))
        .with_embedder(HttpBackend::new(Role::Embedder, &base, 5_000).with_embedding_dim(8));
    let clip = ClipTensor::from_fn(8, 6, 6, 3, 25.0, |t, y, x, _| ((t + x + y) % 5) as f32 / 4.0)?;
    println!("health: {:?}", HttpBackend::new(Role::Agent, &base, 5_000).health()?);
    println!("caption: {}", remote.caption(&clip)?);
    println!("embedding: {:?}", remote.embed_text("split leap")?);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run()
}
