use std::time::Instant;

use async_trait::async_trait;
use base64::Engine;
use serde_json::{json, Value};

use super::{
    ChatBackend, ChatRequest, ChatResponse, EndpointConfig, FinishReason, GatewayError, UserPart,
};

/// Chat-completions over HTTP(S): a `messages` array with image parts as data URLs.
#[derive(Debug, Clone, Default)]
pub struct HttpBackend {
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// JSON body for one request.
    pub fn request_body(request: &ChatRequest) -> Value {
        let content: Vec<Value> = request
            .user_parts
            .iter()
            .map(|part| match part {
                UserPart::Text(text) => json!({ "type": "text", "text": text }),
                UserPart::Image { media_type, data } => {
                    let b64 = base64::engine::general_purpose::STANDARD.encode(data);
                    json!({
                        "type": "image_url",
                        "image_url": { "url": format!("data:{media_type};base64,{b64}") }
                    })
                }
            })
            .collect();
        let mut messages = Vec::new();
        if !request.system_prompt.is_empty() {
            messages.push(json!({ "role": "system", "content": request.system_prompt }));
        }
        messages.push(json!({ "role": "user", "content": content }));
        json!({
            "model": request.model_name,
            "messages": messages,
            "temperature": request.decoding.temperature,
            "max_tokens": request.decoding.max_output_tokens,
            "stream": false,
        })
    }

    fn endpoint_url(base: &str) -> String {
        let base = base.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| {
            v["error"]["message"]
                .as_str()
                .or_else(|| v["error"].as_str())
                .or_else(|| v["message"].as_str())
                .map(str::to_string)
        })
        .unwrap_or_else(|| body.chars().take(500).collect())
}

/// Pulls text and finish reason out of a chat-completions response body.
pub(crate) fn parse_completion(body: &Value) -> Option<(String, FinishReason)> {
    let choice = body["choices"].get(0)?;
    let message = &choice["message"];
    let text = match &message["content"] {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        Value::Null => String::new(),
        _ => return None,
    };
    if let Some(refusal) = message["refusal"].as_str() {
        return Some((refusal.to_string(), FinishReason::Error));
    }
    let finish = match choice["finish_reason"].as_str() {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    Some((text, finish))
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn send(
        &self,
        endpoint: &EndpointConfig,
        request: &ChatRequest,
    ) -> Result<ChatResponse, GatewayError> {
        let mut req = self
            .client
            .post(Self::endpoint_url(&endpoint.base_url))
            .timeout(request.timeout)
            .json(&Self::request_body(request));
        if let Some(var) = &endpoint.api_key_env {
            let key =
                std::env::var(var).map_err(|_| GatewayError::MissingApiKey(var.clone()))?;
            req = req.bearer_auth(key);
        }
        let started = Instant::now();
        let resp = req.send().await.map_err(|e| GatewayError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = resp.status();
        let body = resp.text().await.map_err(|e| GatewayError::Transport {
            attempts: 1,
            message: format!("reading body: {e}"),
        })?;
        let latency = started.elapsed();
        if status.is_server_error() || status.as_u16() == 429 || status.as_u16() == 408 {
            return Err(GatewayError::Transport {
                attempts: 1,
                message: format!("HTTP {}: {}", status.as_u16(), error_message(&body)),
            });
        }
        if !status.is_success() {
            return Err(GatewayError::Provider {
                status: status.as_u16(),
                message: error_message(&body),
            });
        }
        let parsed: Value = serde_json::from_str(&body).map_err(|e| GatewayError::Provider {
            status: status.as_u16(),
            message: format!("unparseable response body: {e}"),
        })?;
        let (text, finish_reason) =
            parse_completion(&parsed).ok_or_else(|| GatewayError::Provider {
                status: status.as_u16(),
                message: "response has no choices[0].message".into(),
            })?;
        Ok(ChatResponse {
            text,
            finish_reason,
            latency,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Decoding, RequestTag};
    use std::time::Duration;

    #[test]
    fn body_carries_images_as_data_urls() {
        let req = ChatRequest {
            model_name: "glm-4.5v".into(),
            system_prompt: "sys".into(),
            user_parts: vec![UserPart::text("look"), UserPart::png(vec![1, 2, 3])],
            decoding: Decoding {
                temperature: 0.0,
                max_output_tokens: 64,
            },
            timeout: Duration::from_secs(5),
            tag: RequestTag {
                stage: "stage1".into(),
                video_id: "v".into(),
                frame: Some(9),
                ordinal: 0,
            },
        };
        let body = HttpBackend::request_body(&req);
        assert_eq!(body["model"], "glm-4.5v");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"][0]["text"], "look");
        assert_eq!(
            body["messages"][1]["content"][1]["image_url"]["url"],
            "data:image/png;base64,AQID"
        );
        assert_eq!(body["max_tokens"], 64);
        assert!(body.to_string().find("stage1").is_none());
    }

    #[test]
    fn url_joining() {
        assert_eq!(
            HttpBackend::endpoint_url("http://h:1/v1/"),
            "http://h:1/v1/chat/completions"
        );
        assert_eq!(
            HttpBackend::endpoint_url("http://h:1/v1/chat/completions"),
            "http://h:1/v1/chat/completions"
        );
    }

    #[test]
    fn completion_parsing() {
        let v = json!({"choices":[{"message":{"content":"hi"},"finish_reason":"length"}]});
        assert_eq!(
            parse_completion(&v),
            Some(("hi".into(), FinishReason::Length))
        );
        let v = json!({"choices":[{"message":{"content":null,"refusal":"no"},"finish_reason":"stop"}]});
        assert_eq!(parse_completion(&v), Some(("no".into(), FinishReason::Error)));
        assert_eq!(parse_completion(&json!({"choices": []})), None);
    }

    #[test]
    fn error_message_prefers_structured_body() {
        assert_eq!(
            error_message(r#"{"error":{"message":"model overloaded"}}"#),
            "model overloaded"
        );
        assert_eq!(error_message("plain"), "plain");
    }
}
