use std::time::Duration;

use async_trait::async_trait;
use serde_json::Value;

use crate::runtime::{ActionInvoker, RuntimeError};
use crate::sim::Activation;

use super::AdapterError;

/// Outcome of a platform invocation: the full record when blocking, the
/// activation id otherwise.
#[derive(Debug, Clone)]
pub enum InvokeOutcome {
    Activation(Box<Activation>),
    ActivationId(String),
}

/// HTTP client for an OpenWhisk-flavored platform (the bundled simulator
/// or a real deployment).
#[derive(Clone)]
pub struct ActionClient {
    base_url: String,
    namespace: String,
    auth_token: Option<String>,
    http: reqwest::Client,
}

impl ActionClient {
    pub fn new(base_url: impl Into<String>) -> Result<Self, AdapterError> {
        let base_url: String = base_url.into();
        reqwest::Url::parse(&base_url)
            .map_err(|e| AdapterError::Validation(format!("invalid base url: {e}")))?;
        Ok(ActionClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            namespace: "_".into(),
            auth_token: None,
            http: reqwest::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("client construction"),
        })
    }

    pub fn with_namespace(mut self, namespace: impl Into<String>) -> Self {
        self.namespace = namespace.into();
        self
    }

    pub fn with_auth_token(mut self, token: impl Into<String>) -> Self {
        self.auth_token = Some(token.into());
        self
    }

    pub fn with_request_timeout(mut self, timeout: Duration) -> Self {
        self.http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("client construction");
        self
    }

    fn action_url(&self, name: &str) -> String {
        format!(
            "{}/api/v1/namespaces/{}/actions/{name}",
            self.base_url, self.namespace
        )
    }

    fn maybe_auth(&self, req: reqwest::RequestBuilder) -> reqwest::RequestBuilder {
        match &self.auth_token {
            Some(token) => req.bearer_auth(token),
            None => req,
        }
    }

    pub async fn register(&self, descriptor: &Value) -> Result<Value, AdapterError> {
        let name = descriptor
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| AdapterError::Validation("descriptor missing name".into()))?;
        let url = format!("{}?overwrite=true", self.action_url(name));
        let resp = self
            .maybe_auth(self.http.put(url).json(descriptor))
            .send()
            .await
            .map_err(transport)?;
        read_json(resp).await
    }

    /// Invoke `action`. Blocking returns the full activation; non-blocking
    /// returns the activation id immediately.
    pub async fn invoke(
        &self,
        action: &str,
        params: Value,
        blocking: bool,
    ) -> Result<InvokeOutcome, AdapterError> {
        if action.is_empty() {
            return Err(AdapterError::Validation("action name must be nonempty".into()));
        }
        let url = format!("{}?blocking={blocking}", self.action_url(action));
        let resp = self
            .maybe_auth(self.http.post(url).json(&params))
            .send()
            .await
            .map_err(transport)?;
        // a failed blocking activation comes back as 502 with the full
        // record in the body; surface it as an outcome, not a transport error
        if blocking && resp.status().as_u16() == 502 {
            let body: Value = resp.json().await.map_err(transport)?;
            if let Ok(activation) = serde_json::from_value::<Activation>(body.clone()) {
                return Ok(InvokeOutcome::Activation(Box::new(activation)));
            }
            return Err(AdapterError::Http {
                status: 502,
                body: body.to_string(),
            });
        }
        let body: Value = read_json(resp).await?;
        if blocking {
            let activation = serde_json::from_value(body)
                .map_err(|e| AdapterError::Transport(format!("bad activation body: {e}")))?;
            Ok(InvokeOutcome::Activation(Box::new(activation)))
        } else {
            let id = body
                .get("activationId")
                .and_then(Value::as_str)
                .ok_or_else(|| AdapterError::Transport("missing activationId".into()))?;
            Ok(InvokeOutcome::ActivationId(id.to_string()))
        }
    }

    pub async fn activation(&self, id: &str) -> Result<Activation, AdapterError> {
        let url = format!(
            "{}/api/v1/namespaces/{}/activations/{id}",
            self.base_url, self.namespace
        );
        let resp = self
            .maybe_auth(self.http.get(url))
            .send()
            .await
            .map_err(transport)?;
        let body: Value = read_json(resp).await?;
        serde_json::from_value(body)
            .map_err(|e| AdapterError::Transport(format!("bad activation body: {e}")))
    }

    /// Poll a non-blocking invocation until its record appears.
    pub async fn await_activation(
        &self,
        id: &str,
        timeout: Duration,
    ) -> Result<Activation, AdapterError> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            match self.activation(id).await {
                Ok(a) => return Ok(a),
                Err(AdapterError::Http { status: 404, .. }) => {
                    if tokio::time::Instant::now() >= deadline {
                        return Err(AdapterError::Timeout);
                    }
                    tokio::time::sleep(Duration::from_millis(20)).await;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn transport(e: reqwest::Error) -> AdapterError {
    if e.is_timeout() {
        AdapterError::Timeout
    } else {
        AdapterError::Transport(e.to_string())
    }
}

async fn read_json(resp: reqwest::Response) -> Result<Value, AdapterError> {
    let status = resp.status();
    let text = resp.text().await.map_err(transport)?;
    let body: Value = serde_json::from_str(&text).unwrap_or(Value::String(text));
    if status.is_success() {
        Ok(body)
    } else {
        Err(AdapterError::Http {
            status: status.as_u16(),
            body: body.to_string(),
        })
    }
}

#[async_trait]
impl ActionInvoker for ActionClient {
    async fn invoke_action(&self, action: &str, params: Value) -> Result<Value, RuntimeError> {
        match self.invoke(action, params, true).await {
            Ok(InvokeOutcome::Activation(activation)) => {
                match activation.status {
                    crate::sim::ActivationStatus::Success => Ok(activation.result),
                    _ => Err(RuntimeError::InvokeError(activation.result.to_string())),
                }
            }
            Ok(InvokeOutcome::ActivationId(_)) => {
                Err(RuntimeError::InvokeError("expected blocking activation".into()))
            }
            Err(e) => Err(RuntimeError::InvokeError(e.to_string())),
        }
    }
}
