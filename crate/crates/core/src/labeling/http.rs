//! Client for OpenAI-compatible chat-completion endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::provider::{
    ChatMessage, ChatProvider, ChatProviderConfig, ChatRequest, ProviderError, ProviderFingerprint,
};

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub struct OpenAiChatProvider {
    config: ChatProviderConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for OpenAiChatProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiChatProvider")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl OpenAiChatProvider {
    /// Reads the API key from the environment variable named in the config.
    /// Without `api_key_env` no Authorization header is sent.
    pub fn new(config: ChatProviderConfig) -> Result<Self, ProviderError> {
        config.validate().map_err(ProviderError::InvalidResponse)?;
        let api_key = match &config.api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| ProviderError::MissingApiKey(var.clone()))?)
            }
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            agent,
        })
    }

    pub fn config(&self) -> &ChatProviderConfig {
        &self.config
    }
}

fn map_transport(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        ureq::Error::Json(e) => ProviderError::InvalidResponse(e.to_string()),
        other => ProviderError::Network(other.to_string()),
    }
}

impl ChatProvider for OpenAiChatProvider {
    fn fingerprint(&self) -> ProviderFingerprint {
        ProviderFingerprint {
            model: self.config.model.clone(),
            temperature: self.config.temperature,
        }
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body = CompletionBody {
            model: &self.config.model,
            temperature: self.config.temperature,
            messages: &request.messages,
        };
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req.send_json(&body).map_err(map_transport)?;
        let status = response.status().as_u16();
        if status == 429 {
            let retry_after = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(ProviderError::RateLimited { retry_after });
        }
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError::Http { status, body });
        }
        let parsed: CompletionResponse = response.body_mut().read_json().map_err(map_transport)?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                ProviderError::InvalidResponse("response has no choices[0].message.content".into())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{complete_with_retry, PromptStage, RetryPolicy};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves one canned HTTP response per queued entry and reports each
    /// request body through the channel.
    fn fake_server(
        responses: Vec<(u16, &'static str, &'static str)>,
    ) -> (String, mpsc::Receiver<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, extra_headers, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut content_length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    head.push_str(&line);
                }
                let mut buf = vec![0; content_length];
                reader.read_exact(&mut buf).unwrap();
                tx.send((head, String::from_utf8(buf).unwrap())).unwrap();
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\n{extra_headers}Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1/chat/completions"), rx)
    }

    fn config(endpoint: String, key_env: Option<&str>) -> ChatProviderConfig {
        ChatProviderConfig {
            endpoint,
            model: "test-model".into(),
            temperature: 0.0,
            max_retries: 2,
            timeout_secs: 5,
            api_key_env: key_env.map(String::from),
        }
    }

    fn request() -> ChatRequest {
        ChatRequest {
            stage: PromptStage::Labels,
            report_id: Some("r1".into()),
            report_text: Some("ignored by http".into()),
            messages: vec![ChatMessage::system("sys"), ChatMessage::user("hello")],
        }
    }

    #[test]
    fn posts_openai_shape_and_reads_content() {
        let (url, rx) = fake_server(vec![(
            200,
            "",
            r#"{"choices":[{"message":{"role":"assistant","content":"1. edema"}}]}"#,
        )]);
        std::env::set_var("RADSIM_TEST_KEY_A", "sekret");
        let p = OpenAiChatProvider::new(config(url, Some("RADSIM_TEST_KEY_A"))).unwrap();
        assert_eq!(p.complete(&request()).unwrap(), "1. edema");
        let (head, body) = rx.recv().unwrap();
        assert!(head.starts_with("POST /v1/chat/completions"));
        assert!(head
            .to_ascii_lowercase()
            .contains("authorization: bearer sekret"));
        let v: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["model"], "test-model");
        assert_eq!(v["temperature"], 0.0);
        assert_eq!(v["messages"][1]["role"], "user");
        assert_eq!(v["messages"][1]["content"], "hello");
    }

    #[test]
    fn rate_limit_is_retried() {
        let (url, rx) = fake_server(vec![
            (429, "Retry-After: 0\r\n", "{}"),
            (200, "", r#"{"choices":[{"message":{"content":"ok"}}]}"#),
        ]);
        let p = OpenAiChatProvider::new(config(url, None)).unwrap();
        let policy = RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(5),
        };
        assert_eq!(complete_with_retry(&p, &request(), &policy).unwrap(), "ok");
        assert_eq!(rx.try_iter().count(), 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, _rx) = fake_server(vec![(400, "", r#"{"error":"bad"}"#)]);
        let p = OpenAiChatProvider::new(config(url, None)).unwrap();
        let err = complete_with_retry(&p, &request(), &RetryPolicy::default()).unwrap_err();
        assert_eq!(
            err,
            ProviderError::Http {
                status: 400,
                body: r#"{"error":"bad"}"#.into()
            }
        );
    }

    #[test]
    fn missing_key_variable_is_reported() {
        let err = OpenAiChatProvider::new(config(
            "http://localhost/".into(),
            Some("RADSIM_TEST_KEY_UNSET"),
        ))
        .unwrap_err();
        assert_eq!(
            err,
            ProviderError::MissingApiKey("RADSIM_TEST_KEY_UNSET".into())
        );
    }

    #[test]
    fn connection_refused_is_network_error() {
        let port = TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let p = OpenAiChatProvider::new(config(format!("http://127.0.0.1:{port}/"), None)).unwrap();
        assert!(matches!(
            p.complete(&request()),
            Err(ProviderError::Network(_))
        ));
    }
}
