mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Arc;

use linecomp::engine::RequestError;
use linecomp::prep::{train_lm, train_tokenizer};
use linecomp::service::{self, ServeOptions};
use linecomp::{CompletionRequest, Engine, EngineConfig};
use linecomp_core::VerdictReason;
use serde_json::Value;

fn engine_over(doc: &str, order: usize) -> Arc<Engine> {
    let docs = vec![doc.to_string()];
    let (tok, _) = train_tokenizer(&docs, 400).unwrap();
    let model = train_lm(&docs, &tok, order).unwrap();
    Arc::new(Engine::new(tok, model, EngineConfig::new("", "")).unwrap())
}

#[test]
fn sessions_agree_on_the_same_request() {
    let fx = common::fixture(12, 2048, 4);
    let f = &fx.test[0];
    let caret = f.text.chars().count() / 3;
    let text: String = f.text.chars().take(caret).collect();
    let request = CompletionRequest::new(&f.relative_path, text, caret);
    let a = fx.engine.session().complete(&request).unwrap();
    let b = fx.engine.session().complete(&request).unwrap();
    assert_eq!((a.suggestion, a.score), (b.suggestion, b.score));
}

#[test]
fn forced_path_is_completed() {
    let engine = engine_over(&"total = compute(a, b)\n".repeat(50), 2);
    let text = "total = com";
    let r = engine.session().complete(&CompletionRequest::new("a.py", text, 11)).unwrap();
    assert_eq!(r.suggestion.as_deref(), Some("pute(a, b)"));
}

#[test]
fn dangerous_line_is_suppressed() {
    let engine = engine_over(&"os.system(\"rm -rf /\")\n".repeat(50), 3);
    let r = engine.session().complete(&CompletionRequest::new("a.py", "os.", 3)).unwrap();
    assert_eq!(r.suggestion, None);
    assert!(r.rejections.contains(&VerdictReason::Safety));
}

#[test]
fn comment_caret_gets_nothing() {
    let engine = engine_over(&"x = 1  # note\n".repeat(30), 3);
    let r = engine.session().complete(&CompletionRequest::new("a.py", "x = 1  # no", 11)).unwrap();
    assert_eq!(r.suggestion, None);
}

#[test]
fn caret_past_end_is_an_error() {
    let engine = engine_over(&"x = 1\n".repeat(30), 3);
    let err = engine.session().complete(&CompletionRequest::new("a.py", "x = ", 9)).unwrap_err();
    assert!(matches!(err, RequestError::CaretOutOfRange { caret: 9, len: 4 }));
}

#[test]
fn cancellation_is_reported() {
    let engine = engine_over(&"total = compute(a, b)\n".repeat(50), 2);
    let r = engine
        .session()
        .complete_cancellable(&CompletionRequest::new("a.py", "total = ", 8), &mut || true)
        .unwrap();
    assert!(r.cancelled);
    assert_eq!(r.suggestion, None);
}

#[test]
fn tcp_connections_are_served() {
    let engine = engine_over(&"total = compute(a, b)\n".repeat(50), 2);
    let listener = service::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || service::serve_tcp(engine, listener, ServeOptions::default()));
    for id in 0..2 {
        let mut stream = TcpStream::connect(addr).unwrap();
        writeln!(stream, r#"{{"id":{id},"path":"a.py","text":"total = com","caret":11}}"#).unwrap();
        let mut line = String::new();
        BufReader::new(&stream).read_line(&mut line).unwrap();
        let v: Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["id"], id);
        assert_eq!(v["suggestion"], "pute(a, b)");
    }
}

#[test]
fn busy_port_fails_at_bind() {
    let first = service::bind("127.0.0.1:0").unwrap();
    assert!(service::bind(first.local_addr().unwrap()).is_err());
}
