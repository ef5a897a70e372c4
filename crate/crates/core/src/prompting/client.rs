use std::collections::HashMap;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Message, PromptError, Role};
use crate::corpus::{Dataset, Label};

pub const ENDPOINT_ENV: &str = "REGIDAPT_LLM_ENDPOINT";
pub const TOKEN_ENV: &str = "REGIDAPT_LLM_TOKEN";

/// A chat-style language model.
pub trait LlmClient: Send + Sync {
    fn complete(&self, messages: &[Message]) -> Result<String, PromptError>;
}

fn user_content(messages: &[Message]) -> &str {
    messages.iter().rev().find(|m| m.role == Role::User).map_or("", |m| m.content.as_str())
}

/// Answers every request with the same text.
#[derive(Clone, Debug)]
pub struct ConstantClient(pub String);

impl LlmClient for ConstantClient {
    fn complete(&self, _messages: &[Message]) -> Result<String, PromptError> {
        Ok(self.0.clone())
    }
}

/// Looks the user message up in a table. Unknown messages get the default
/// response, or a client error when there is none.
#[derive(Clone, Debug, Default)]
pub struct ScriptedClient {
    pub responses: HashMap<String, String>,
    pub default: Option<String>,
}

impl ScriptedClient {
    pub fn new(responses: impl IntoIterator<Item = (String, String)>) -> Self {
        ScriptedClient { responses: responses.into_iter().collect(), default: None }
    }

    pub fn with_default(mut self, default: impl Into<String>) -> Self {
        self.default = Some(default.into());
        self
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&self, messages: &[Message]) -> Result<String, PromptError> {
        let key = user_content(messages);
        self.responses
            .get(key)
            .or(self.default.as_ref())
            .cloned()
            .ok_or_else(|| PromptError::ClientError(format!("no scripted response for {key:?}")))
    }
}

/// Answers "Yes"/"No" from the gold label of the post text, optionally inverted.
#[derive(Clone, Debug)]
pub struct GoldEchoClient {
    gold: HashMap<String, Label>,
    invert: bool,
}

impl GoldEchoClient {
    pub fn new(dataset: &Dataset) -> Self {
        let gold = dataset.iter().filter_map(|p| p.label.map(|l| (p.text.clone(), l))).collect();
        GoldEchoClient { gold, invert: false }
    }

    pub fn inverted(dataset: &Dataset) -> Self {
        GoldEchoClient { invert: true, ..Self::new(dataset) }
    }
}

impl LlmClient for GoldEchoClient {
    fn complete(&self, messages: &[Message]) -> Result<String, PromptError> {
        let text = user_content(messages);
        let label = self.gold.get(text).ok_or_else(|| PromptError::ClientError(format!("unknown post {text:?}")))?;
        let label = if self.invert { label.flip() } else { *label };
        Ok(match label {
            Label::Distorted => "Yes".into(),
            Label::NotDistorted => "No".into(),
        })
    }
}

/// Returns the user message without the template's fixed prefix.
#[derive(Clone, Debug, Default)]
pub struct IdentityClient {
    pub strip_prefix: String,
}

impl IdentityClient {
    pub fn for_template(template: &super::PromptTemplate) -> Self {
        IdentityClient { strip_prefix: template.user_prefix().to_string() }
    }
}

impl LlmClient for IdentityClient {
    fn complete(&self, messages: &[Message]) -> Result<String, PromptError> {
        let text = user_content(messages);
        Ok(text.strip_prefix(self.strip_prefix.as_str()).unwrap_or(text).to_string())
    }
}

/// JSON chat-completion client with bearer authentication and retries.
///
/// Sends `{"model", "messages", "temperature"}` and reads
/// `choices[0].message.content`. Transport failures, 429 and 5xx responses
/// are retried with exponential backoff.
#[derive(Clone, Debug)]
pub struct HttpClient {
    pub endpoint: String,
    pub token: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff: Duration,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, token: Option<String>) -> Self {
        let timeout = Duration::from_secs(60);
        HttpClient {
            endpoint: endpoint.into(),
            token,
            model: None,
            temperature: 0.0,
            timeout,
            max_retries: 3,
            backoff: Duration::from_millis(500),
            agent: Self::agent(timeout),
        }
    }

    fn agent(timeout: Duration) -> ureq::Agent {
        ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into()
    }

    /// Reads the endpoint and optional token from the environment.
    pub fn from_env() -> Result<Self, PromptError> {
        let endpoint = std::env::var(ENDPOINT_ENV).map_err(|_| PromptError::MissingEndpoint(ENDPOINT_ENV))?;
        Ok(Self::new(endpoint, std::env::var(TOKEN_ENV).ok()))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self.agent = Self::agent(timeout);
        self
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    fn body(&self, messages: &[Message]) -> Value {
        let mut body = json!({ "messages": messages, "temperature": self.temperature });
        if let Some(m) = &self.model {
            body["model"] = json!(m);
        }
        body
    }

    /// One request. `Ok(Err(..))` is a failure worth retrying.
    fn attempt(&self, body: &Value) -> Result<Result<String, PromptError>, PromptError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Ok(Err(PromptError::ClientTimeout)),
            Err(e) => return Ok(Err(PromptError::ClientError(e.to_string()))),
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Ok(Err(PromptError::ClientError(format!("HTTP {status}"))));
        }
        if status >= 400 {
            return Err(PromptError::ClientError(format!("HTTP {status}")));
        }
        let value: Value = resp.body_mut().read_json().map_err(|e| PromptError::ClientError(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .or_else(|| value["content"].as_str())
            .map(|s| Ok(s.to_string()))
            .ok_or_else(|| PromptError::ClientError("response has no message content".into()))
    }
}

impl LlmClient for HttpClient {
    fn complete(&self, messages: &[Message]) -> Result<String, PromptError> {
        let body = self.body(messages);
        let mut delay = self.backoff;
        let mut last = PromptError::ClientError("no attempt made".into());
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&body)? {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("request to {} failed (attempt {}): {e}", self.endpoint, attempt + 1);
                    last = e;
                }
            }
        }
        Err(last)
    }
}

/// Machine translation between language codes.
pub trait TranslationClient: Send + Sync {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, PromptError>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityTranslator;

impl TranslationClient for IdentityTranslator {
    fn translate(&self, text: &str, _source: &str, _target: &str) -> Result<String, PromptError> {
        Ok(text.to_string())
    }
}

/// Translates by exact lookup; unknown texts are client errors.
#[derive(Clone, Debug, Default)]
pub struct LookupTranslator {
    pub table: HashMap<String, String>,
}

impl LookupTranslator {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        LookupTranslator { table: pairs.into_iter().collect() }
    }
}

impl TranslationClient for LookupTranslator {
    fn translate(&self, text: &str, _source: &str, _target: &str) -> Result<String, PromptError> {
        self.table.get(text).cloned().ok_or_else(|| PromptError::ClientError(format!("no translation for {text:?}")))
    }
}

/// Translation through a chat model.
pub struct ChatTranslator<C: LlmClient> {
    pub client: C,
}

fn language_name(code: &str) -> &str {
    match code {
        "en" => "English",
        "nl" => "Dutch",
        other => other,
    }
}

impl<C: LlmClient> TranslationClient for ChatTranslator<C> {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, PromptError> {
        let system = format!(
            "Translate the following text from {} to {}. Reply with the translation only.",
            language_name(source_lang),
            language_name(target_lang)
        );
        let messages =
            [Message { role: Role::System, content: system }, Message { role: Role::User, content: text.to_string() }];
        Ok(self.client.complete(&messages)?.trim().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves the given (status, body) pairs in order and returns the raw requests.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
        let count = Arc::new(AtomicUsize::new(0));
        let seen = count.clone();
        let handle = std::thread::spawn(move || {
            let mut requests = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                head.push_str(&String::from_utf8(buf).unwrap());
                requests.push(head);
                seen.fetch_add(1, Ordering::SeqCst);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            requests
        });
        (url, handle, count)
    }

    fn messages() -> Vec<Message> {
        vec![
            Message { role: Role::System, content: "sys".into() },
            Message { role: Role::User, content: "I always fail".into() },
        ]
    }

    #[test]
    fn http_client_sends_chat_request() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"Yes"}}]}"#.to_string();
        let (url, handle, _) = serve(vec![(200, ok)]);
        let client = HttpClient::new(url, Some("secret".into()));
        assert_eq!(client.complete(&messages()).unwrap(), "Yes");
        let req = handle.join().unwrap().remove(0);
        assert!(req.contains("Bearer secret"), "{req}");
        let body: Value = serde_json::from_str(&req[req.find("\r\n\r\n").unwrap() + 4..]).unwrap();
        assert_eq!(body["temperature"], json!(0.0));
        assert_eq!(body["messages"][1]["role"], "user");
        assert_eq!(body["messages"][1]["content"], "I always fail");
    }

    #[test]
    fn http_client_retries_server_errors() {
        let ok = r#"{"choices":[{"message":{"content":"No"}}]}"#.to_string();
        let (url, handle, count) = serve(vec![(503, "{}".into()), (500, "{}".into()), (200, ok)]);
        let client = HttpClient::new(url, None).with_backoff(Duration::from_millis(1));
        assert_eq!(client.complete(&messages()).unwrap(), "No");
        handle.join().unwrap();
        assert_eq!(count.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn http_client_gives_up_after_retries() {
        let (url, handle, count) = serve(vec![(500, "{}".into()); 4]);
        let client = HttpClient::new(url, None).with_backoff(Duration::from_millis(1));
        assert!(matches!(client.complete(&messages()), Err(PromptError::ClientError(_))));
        handle.join().unwrap();
        assert_eq!(count.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn http_client_does_not_retry_client_errors() {
        let (url, handle, count) = serve(vec![(401, "{}".into())]);
        let client = HttpClient::new(url, None).with_backoff(Duration::from_millis(1));
        assert_eq!(client.complete(&messages()), Err(PromptError::ClientError("HTTP 401".into())));
        handle.join().unwrap();
        assert_eq!(count.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn mocks_are_deterministic() {
        let s = ScriptedClient::new([("I always fail".to_string(), "Yes".to_string())]);
        assert_eq!(s.complete(&messages()).unwrap(), "Yes");
        assert_eq!(s.complete(&messages()).unwrap(), "Yes");
        let other = vec![Message { role: Role::User, content: "?".into() }];
        assert!(s.complete(&other).is_err());
        assert_eq!(s.with_default("No").complete(&other).unwrap(), "No");
        let t = LookupTranslator::new([("a".to_string(), "b".to_string())]);
        assert_eq!(t.translate("a", "en", "nl").unwrap(), "b");
        assert!(t.translate("c", "en", "nl").is_err());
    }

    #[test]
    fn chat_translator_asks_for_the_target_language() {
        struct Echo;
        impl LlmClient for Echo {
            fn complete(&self, messages: &[Message]) -> Result<String, PromptError> {
                Ok(format!(" {} | {} ", messages[0].content, messages[1].content))
            }
        }
        let out = ChatTranslator { client: Echo }.translate("hi", "en", "nl").unwrap();
        assert_eq!(out, "Translate the following text from English to Dutch. Reply with the translation only. | hi");
    }
}
