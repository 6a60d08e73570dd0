//! Newline-delimited JSON completion service over stdio or TCP.
//!
//! Request: `{"id":1,"path":"a.py","extension":"py","text":"x = ","caret":4}`.
//! Response: `{"id":1,"suggestion":"...","score":-1.2,"latency_ms":3.1,"cache_hit":false}`
//! with `suggestion` and `score` null when nothing is shown. Unparsable lines
//! get `{"error":"parse","id":null}`, invalid requests `{"error":"request","id":...}`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, ToSocketAddrs};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use linecomp_core::LanguageModel;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::engine::{CompletionRequest, Engine, Session};

#[derive(Debug, Deserialize)]
struct WireRequest {
    #[serde(default)]
    id: Value,
    path: String,
    #[serde(default)]
    extension: String,
    text: String,
    caret: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ServeOptions {
    /// A request still running when a newer one arrives is abandoned and
    /// answered with a null suggestion and `"cancelled":true`.
    pub latest_wins: bool,
}

/// Answers one protocol line; `None` for blank lines.
pub fn handle_line<M: LanguageModel>(
    session: &mut Session<M>,
    line: &[u8],
    cancelled: &mut dyn FnMut() -> bool,
) -> Option<Value> {
    let line = line.trim_ascii();
    if line.is_empty() {
        return None;
    }
    let raw: Value = match serde_json::from_slice(line) {
        Ok(v) => v,
        Err(_) => return Some(json!({"error": "parse", "id": null})),
    };
    let id = match &raw {
        Value::Object(map) => map.get("id").cloned().unwrap_or(Value::Null),
        _ => Value::Null,
    };
    let request = match serde_json::from_value::<WireRequest>(raw) {
        Ok(r) => r,
        Err(e) => return Some(json!({"error": "request", "id": id, "message": e.to_string()})),
    };
    let completion = CompletionRequest {
        path: request.path,
        extension: request.extension,
        text: request.text,
        caret: request.caret,
    };
    match session.complete_cancellable(&completion, cancelled) {
        Ok(result) => {
            let mut response = json!({
                "id": request.id,
                "suggestion": result.suggestion,
                "score": result.score,
                "latency_ms": result.latency_ms,
                "cache_hit": result.cache_hit,
            });
            if result.cancelled {
                response["cancelled"] = Value::Bool(true);
            }
            Some(response)
        }
        Err(e) => Some(json!({"error": "request", "id": request.id, "message": e.to_string()})),
    }
}

fn write_response(writer: &mut impl Write, response: &Value) -> std::io::Result<()> {
    serde_json::to_writer(&mut *writer, response)?;
    writer.write_all(b"\n")?;
    writer.flush()
}

/// Serves one connection until end of input. Requests are answered in order.
pub fn serve_stream<M, R, W>(
    engine: &Arc<Engine<M>>,
    reader: R,
    mut writer: W,
    options: ServeOptions,
) -> std::io::Result<()>
where
    M: LanguageModel + Send + Sync + 'static,
    R: BufRead + Send + 'static,
    W: Write,
{
    let mut session = engine.session();
    if !options.latest_wins {
        let mut reader = reader;
        let mut line = Vec::new();
        loop {
            line.clear();
            if reader.read_until(b'\n', &mut line)? == 0 {
                return Ok(());
            }
            if let Some(response) = handle_line(&mut session, &line, &mut || false) {
                write_response(&mut writer, &response)?;
            }
        }
    }

    let waiting = Arc::new(AtomicUsize::new(0));
    let (tx, rx) = mpsc::channel::<Vec<u8>>();
    let counter = Arc::clone(&waiting);
    let reader_thread = std::thread::spawn(move || -> std::io::Result<()> {
        let mut reader = reader;
        loop {
            let mut line = Vec::new();
            if reader.read_until(b'\n', &mut line)? == 0 {
                return Ok(());
            }
            if line.trim_ascii().is_empty() {
                continue;
            }
            counter.fetch_add(1, Ordering::SeqCst);
            if tx.send(line).is_err() {
                return Ok(());
            }
        }
    });
    for line in rx {
        waiting.fetch_sub(1, Ordering::SeqCst);
        let mut newer = || waiting.load(Ordering::SeqCst) > 0;
        if let Some(response) = handle_line(&mut session, &line, &mut newer) {
            write_response(&mut writer, &response)?;
        }
    }
    reader_thread.join().unwrap_or(Ok(()))
}

pub fn serve_stdio<M>(engine: Arc<Engine<M>>, options: ServeOptions) -> std::io::Result<()>
where
    M: LanguageModel + Send + Sync + 'static,
    M::State: Send,
{
    let stdin = BufReader::new(std::io::stdin());
    serve_stream(&engine, stdin, std::io::stdout().lock(), options)
}

/// Binds first so a busy port fails before any connection is accepted.
pub fn bind(addr: impl ToSocketAddrs) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr)
}

/// Accepts connections forever, one thread and one session per connection.
pub fn serve_tcp<M>(engine: Arc<Engine<M>>, listener: TcpListener, options: ServeOptions) -> std::io::Result<()>
where
    M: LanguageModel + Send + Sync + 'static,
    M::State: Send,
{
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let engine = Arc::clone(&engine);
        std::thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(e) => return log::warn!("{peer}: {e}"),
            };
            if let Err(e) = serve_stream(&engine, reader, stream, options) {
                log::info!("{peer}: connection closed: {e}");
            }
        });
    }
    Ok(())
}
