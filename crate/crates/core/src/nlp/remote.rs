//! HTTP client for a model server speaking the `/v1/predicate` protocol.

use std::time::Duration;

use super::{rank_spans, NlpError, Provider, Query, Response};

pub struct Remote {
    url: String,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for Remote {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Remote").field("url", &self.url).finish()
    }
}

impl Remote {
    /// `endpoint` is the server base URL, e.g. `http://127.0.0.1:8080`.
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, NlpError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| NlpError::Config(format!("http client: {e}")))?;
        let url = format!("{}/v1/predicate", endpoint.trim_end_matches('/'));
        Ok(Remote { url, client })
    }
}

impl Provider for Remote {
    fn evaluate(&self, q: &Query<'_>) -> Result<Response, NlpError> {
        let resp = self
            .client
            .post(&self.url)
            .json(q)
            .send()
            .map_err(|e| NlpError::Provider(format!("POST {}: {e}", self.url)))?;
        let status = resp.status();
        if status != reqwest::StatusCode::OK {
            return Err(NlpError::Provider(format!("POST {} returned {status}", self.url)));
        }
        let mut r: Response = resp
            .json()
            .map_err(|e| NlpError::Provider(format!("undecodable response from {}: {e}", self.url)))?;
        if let Some(spans) = r.spans.as_mut() {
            rank_spans(spans);
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Nlp, PredicateKind, TaskContext, Threshold};
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves `n` requests with fixed status/body and reports the request bodies.
    fn serve(status: &'static str, body: &'static str, n: usize) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for stream in listener.incoming().take(n) {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                tx.send(String::from_utf8(buf).unwrap()).unwrap();
                let reply = format!(
                    "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}"), rx)
    }

    fn ctx() -> TaskContext {
        TaskContext::new("Which committees?", vec!["Program Committee".into()]).unwrap()
    }

    #[test]
    fn wire_format_and_verdict() {
        let (url, rx) = serve("200 OK", r#"{"holds":true,"score":0.75,"spans":[{"start":0,"end":3,"score":0.75}]}"#, 1);
        let nlp = Nlp::new(Box::new(Remote::new(&url, Duration::from_secs(5)).unwrap()), super::super::default_labels(), None);
        let kind = PredicateKind::KeywordMatch(Threshold::from_f64(0.5).unwrap());
        let v = nlp.verdict(&kind, "abc def", &ctx()).unwrap();
        assert!(v.holds);
        assert_eq!(v.score, 0.75);
        let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(
            sent,
            serde_json::json!({"kind":"keyword","text":"abc def","keywords":["Program Committee"],"threshold":0.5})
        );
        // Memoized: the server only accepts one connection.
        assert_eq!(nlp.extract_spans("abc def", &kind, &ctx(), 1).unwrap()[0].end, 3);
    }

    #[test]
    fn non_200_is_provider_error() {
        let (url, _rx) = serve("503 Service Unavailable", "{}", 1);
        let nlp = Nlp::new(Box::new(Remote::new(&url, Duration::from_secs(5)).unwrap()), super::super::default_labels(), None);
        let err = nlp.holds(&PredicateKind::HasAnswer, "x", &ctx()).unwrap_err();
        assert!(matches!(err, NlpError::Provider(_)), "{err}");
    }

    #[test]
    fn garbage_and_bad_spans_are_provider_errors() {
        let (url, _rx) = serve("200 OK", "not json", 1);
        let nlp = Nlp::new(Box::new(Remote::new(&url, Duration::from_secs(5)).unwrap()), super::super::default_labels(), None);
        assert!(matches!(nlp.holds(&PredicateKind::HasAnswer, "x", &ctx()), Err(NlpError::Provider(_))));

        let (url, _rx) = serve("200 OK", r#"{"holds":true,"score":1,"spans":[{"start":0,"end":99,"score":1}]}"#, 1);
        let nlp = Nlp::new(Box::new(Remote::new(&url, Duration::from_secs(5)).unwrap()), super::super::default_labels(), None);
        assert!(matches!(nlp.holds(&PredicateKind::HasAnswer, "x", &ctx()), Err(NlpError::Provider(_))));
    }

    #[test]
    fn unreachable_server_is_provider_error() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let r = Remote::new(&format!("http://127.0.0.1:{port}"), Duration::from_secs(2)).unwrap();
        let c = ctx();
        let kind = PredicateKind::HasAnswer;
        assert!(matches!(r.evaluate(&Query::new(&kind, "x", &c)), Err(NlpError::Provider(_))));
    }
}
