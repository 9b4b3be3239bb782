//! Minimal HTTP/1.1 over `std::net`: one request per connection, one
//! thread per connection.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::thread;
use std::time::Duration;

use crate::api::{handle, Response, StoreIndex};

const MAX_HEADER_BYTES: usize = 16 * 1024;
const MAX_BODY_BYTES: usize = 1024 * 1024;
const READ_TIMEOUT: Duration = Duration::from_secs(10);

/// Shared handle to the store; empty until loading finishes.
pub type SharedIndex = Arc<OnceLock<StoreIndex>>;

pub struct Server {
    listener: TcpListener,
    index: SharedIndex,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            index: Arc::new(OnceLock::new()),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn index(&self) -> SharedIndex {
        Arc::clone(&self.index)
    }

    /// Loads the store on a background thread so health checks answer 503
    /// in the meantime.
    pub fn load_in_background(&self, dir: PathBuf) -> thread::JoinHandle<hydrotrace_core::Result<()>> {
        let index = self.index();
        thread::spawn(move || {
            let loaded = StoreIndex::load(&dir)?;
            log::info!("loaded {} attention records from {}", loaded.store().len(), dir.display());
            let _ = index.set(loaded);
            Ok(())
        })
    }

    /// Accepts connections forever.
    pub fn run(self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let index = Arc::clone(&self.index);
            thread::spawn(move || {
                if let Err(e) = serve_connection(stream, index.get()) {
                    log::debug!("connection error: {e}");
                }
            });
        }
        Ok(())
    }
}

fn serve_connection(stream: TcpStream, index: Option<&StoreIndex>) -> io::Result<()> {
    stream.set_read_timeout(Some(READ_TIMEOUT))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let response = match read_request(&mut reader) {
        Ok((method, target)) => {
            let r = handle(index, &method, &target);
            log::debug!("{method} {target} -> {}", r.status);
            r
        }
        Err(detail) => bad_request(&detail),
    };
    write_response(stream, &response)
}

fn bad_request(detail: &str) -> Response {
    let body = serde_json::json!({
        "error": "bad_request",
        "detail": detail,
        "schema_version": crate::api::API_SCHEMA_VERSION,
    });
    Response {
        status: 400,
        content_type: crate::api::JSON,
        body: serde_json::to_vec(&body).expect("JSON values always serialize"),
    }
}

/// Reads the request line and headers, discarding any body.
fn read_request<R: BufRead>(r: &mut R) -> Result<(String, String), String> {
    let mut line = String::new();
    let mut total = 0;
    let mut read_line = |r: &mut R, line: &mut String| -> Result<(), String> {
        line.clear();
        let n = r.read_line(line).map_err(|e| e.to_string())?;
        total += n;
        if n == 0 {
            return Err("connection closed mid-request".into());
        }
        if total > MAX_HEADER_BYTES {
            return Err("request head too large".into());
        }
        Ok(())
    };
    read_line(r, &mut line)?;
    let mut parts = line.split_whitespace();
    let (Some(method), Some(target), Some(version)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("malformed request line {:?}", line.trim_end()));
    };
    if !version.starts_with("HTTP/1.") {
        return Err(format!("unsupported protocol {version:?}"));
    }
    let (method, target) = (method.to_string(), target.to_string());
    let mut body_len = 0usize;
    loop {
        read_line(r, &mut line)?;
        let h = line.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((name, value)) = h.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                body_len = value.trim().parse().map_err(|_| "bad Content-Length".to_string())?;
            }
        }
    }
    if body_len > MAX_BODY_BYTES {
        return Err("request body too large".into());
    }
    io::copy(&mut r.take(body_len as u64), &mut io::sink()).map_err(|e| e.to_string())?;
    Ok((method, target))
}

fn write_response(mut stream: TcpStream, r: &Response) -> io::Result<()> {
    let head = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        r.status,
        r.reason(),
        r.content_type,
        r.body.len()
    );
    stream.write_all(head.as_bytes())?;
    stream.write_all(&r.body)?;
    stream.flush()
}
