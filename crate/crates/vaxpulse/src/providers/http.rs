//! HTTP-backed labeling provider.
//!
//! Wire format: `POST <endpoint>` with JSON body `{model, system, prompt}`,
//! expecting a JSON response `{text}`. The credential, when configured, is
//! read from an environment variable and sent as a bearer token.

use std::time::Duration;

use serde::Deserialize;

use super::{Provider, ProviderCall, ProviderError};

#[derive(Debug, Deserialize)]
struct WireResponse {
    text: String,
}

pub struct HttpProvider {
    id: String,
    endpoint: String,
    model: String,
    credential: Option<String>,
    agent: ureq::Agent,
}

impl HttpProvider {
    /// `credential_env` names an environment variable holding the API
    /// credential; configured-but-unset is an error so misdeployments
    /// fail fast.
    pub fn new(
        id: &str,
        endpoint: &str,
        model: &str,
        credential_env: Option<&str>,
    ) -> Result<Self, ProviderError> {
        let credential = match credential_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ProviderError::MissingCredential {
                env: var.to_string(),
            })?),
            None => None,
        };
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build();
        Ok(Self {
            id: id.to_string(),
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            credential,
            agent: config.into(),
        })
    }
}

impl Provider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, call: &ProviderCall<'_>) -> Result<String, ProviderError> {
        let body = serde_json::json!({
            "model": self.model,
            "system": call.system,
            "prompt": call.prompt,
        });
        let mut request = self.agent.post(&self.endpoint);
        if let Some(cred) = &self.credential {
            request = request.header("authorization", &format!("Bearer {cred}"));
        }
        let mut response = request.send_json(&body).map_err(|e| ProviderError::Transport {
            provider: self.id.clone(),
            reason: e.to_string(),
        })?;
        let wire: WireResponse =
            response
                .body_mut()
                .read_json()
                .map_err(|e| ProviderError::Transport {
                    provider: self.id.clone(),
                    reason: format!("malformed response body: {e}"),
                })?;
        Ok(wire.text)
    }
}
