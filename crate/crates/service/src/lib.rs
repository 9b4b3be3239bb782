//! Read-only HTTP JSON API over a HydroTrace attention store.
//!
//! Endpoints (all `GET` unless noted):
//!
//! ```text
//! /v1/health
//! /v1/attention/features?period=season&value=monsoon
//! /v1/attention/top-features?period=jul&k=5
//! /v1/attention/spatial?period=monsoon&format=json|pgm[&top_pct=20][&feature=name]
//! /v1/attention/daily?from=2015-06-01&to=2015-06-10[&features=a,b][&spatial=true]
//! POST /v1/ask   reserved, always 501
//! ```
//!
//! Every JSON body carries `schema_version`; errors are `{error, detail}`.

pub mod api;
pub mod http;

pub use api::{handle, Response, StoreIndex, API_SCHEMA_VERSION};
pub use http::{Server, SharedIndex};

use std::path::Path;

/// Binds `127.0.0.1:<port>`, loads the store in the background and serves
/// until the process exits.
pub fn serve(store_dir: &Path, port: u16) -> std::io::Result<()> {
    let server = Server::bind(("127.0.0.1", port))?;
    log::info!("listening on {}", server.local_addr()?);
    let dir = store_dir.to_path_buf();
    let loader = server.load_in_background(dir.clone());
    std::thread::spawn(move || match loader.join() {
        Ok(Ok(())) => {}
        Ok(Err(e)) => {
            log::error!("cannot load attention store {}: {e}", dir.display());
            std::process::exit(2);
        }
        Err(_) => std::process::exit(3),
    });
    server.run()
}
