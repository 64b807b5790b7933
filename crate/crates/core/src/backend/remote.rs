use std::collections::BTreeMap;
use std::sync::RwLock;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    EmbedResponse, ErrorBody, FillMaskInput, FillMaskRequest, FillMaskResponse, ModelsResponse,
    TextRequest, TokenizeResponse,
};
use super::{BackendDescriptor, BackendError, MaskPrediction, MaskQuery, MaskedLm};

/// Bounded exponential backoff for transport failures and 503 responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(200),
            max_delay: Duration::from_secs(5),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Client for the inference service's JSON-over-HTTP protocol.
pub struct RemoteBackend {
    base_url: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    models: RwLock<Option<BTreeMap<String, BackendDescriptor>>>,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("base_url", &self.base_url)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Retry(String),
    Fail(BackendError),
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_retry(base_url, RetryPolicy::default())
    }

    pub fn with_retry(base_url: impl Into<String>, retry: RetryPolicy) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(10))
            .timeout(Duration::from_secs(300))
            .build();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
            retry,
            models: RwLock::new(None),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }

    fn classify(err: ureq::Error) -> Attempt {
        match err {
            ureq::Error::Transport(t) => Attempt::Retry(t.to_string()),
            ureq::Error::Status(status, resp) => {
                let body = resp.into_string().unwrap_or_default();
                let message = serde_json::from_str::<ErrorBody>(&body)
                    .map(|b| b.error)
                    .unwrap_or(body);
                match status {
                    502..=504 => Attempt::Retry(format!("{status}: {message}")),
                    _ => Attempt::Fail(BackendError::Rejected { status, message }),
                }
            }
        }
    }

    fn with_retries<T>(
        &self,
        mut send: impl FnMut() -> Result<ureq::Response, ureq::Error>,
    ) -> Result<T, BackendError>
    where
        T: DeserializeOwned,
    {
        let attempts = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.retry.delay(attempt - 1));
            }
            match send() {
                Ok(resp) => {
                    return resp
                        .into_json::<T>()
                        .map_err(|e| BackendError::Protocol(e.to_string()))
                }
                Err(e) => match Self::classify(e) {
                    Attempt::Retry(msg) => {
                        log::debug!("attempt {} failed: {msg}", attempt + 1);
                        last = msg;
                    }
                    Attempt::Fail(err) => return Err(err),
                },
            }
        }
        Err(BackendError::Exhausted { attempts, last })
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, BackendError> {
        let url = self.url(path);
        let payload =
            serde_json::to_value(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
        self.with_retries(|| self.agent.post(&url).send_json(payload.clone()))
    }

    /// Descriptors served at `/v1/models`, fetched once and cached.
    pub fn models(&self) -> Result<Vec<BackendDescriptor>, BackendError> {
        self.model_table().map(|m| m.into_values().collect())
    }

    /// Drops cached descriptors so the next call re-reads `/v1/models`.
    pub fn refresh(&self) {
        *self.models.write().expect("model table lock") = None;
    }

    fn model_table(&self) -> Result<BTreeMap<String, BackendDescriptor>, BackendError> {
        if let Some(m) = self.models.read().expect("model table lock").as_ref() {
            return Ok(m.clone());
        }
        let url = self.url("/v1/models");
        let resp: ModelsResponse = self.with_retries(|| self.agent.get(&url).call())?;
        let table: BTreeMap<_, _> = resp
            .models
            .into_iter()
            .map(|d| (d.model_id.clone(), d))
            .collect();
        *self.models.write().expect("model table lock") = Some(table.clone());
        Ok(table)
    }
}

impl MaskedLm for RemoteBackend {
    fn descriptor(&self, model_id: &str) -> Result<BackendDescriptor, BackendError> {
        self.model_table()?
            .remove(model_id)
            .ok_or_else(|| BackendError::UnknownModel(model_id.to_string()))
    }

    fn predict_masked(&self, query: &MaskQuery) -> Result<MaskPrediction, BackendError> {
        self.batch(std::slice::from_ref(query))
            .pop()
            .unwrap_or_else(|| Err(BackendError::Protocol("empty batch response".into())))
    }

    /// Validates locally, then sends one request per model. A rejected
    /// request marks every element it carried as failed.
    fn batch(&self, queries: &[MaskQuery]) -> Vec<Result<MaskPrediction, BackendError>> {
        let mut results: Vec<Option<Result<MaskPrediction, BackendError>>> =
            vec![None; queries.len()];
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, q) in queries.iter().enumerate() {
            match self.descriptor(&q.model_id).and_then(|d| q.validate(&d)) {
                Ok(()) => groups.entry(q.model_id.as_str()).or_default().push(i),
                Err(e) => results[i] = Some(Err(e)),
            }
        }
        for (model, idxs) in groups {
            let request = FillMaskRequest {
                model: model.to_string(),
                inputs: idxs
                    .iter()
                    .map(|&i| FillMaskInput {
                        tokens: queries[i].tokens.clone(),
                        mask_positions: queries[i].mask_positions.clone(),
                    })
                    .collect(),
            };
            let outcome = self
                .post::<_, FillMaskResponse>("/v1/fill-mask", &request)
                .and_then(|r| {
                    if r.predictions.len() == idxs.len() {
                        Ok(r.predictions)
                    } else {
                        Err(BackendError::Protocol(format!(
                            "{} predictions for {} inputs",
                            r.predictions.len(),
                            idxs.len()
                        )))
                    }
                });
            match outcome {
                Ok(preds) => {
                    for (&i, predicted) in idxs.iter().zip(preds) {
                        let want = queries[i].mask_positions.len();
                        results[i] = Some(if predicted.len() == want {
                            Ok(MaskPrediction { predicted })
                        } else {
                            Err(BackendError::Protocol(format!(
                                "{} tokens for {want} masks",
                                predicted.len()
                            )))
                        });
                    }
                }
                Err(e) => {
                    for &i in &idxs {
                        results[i] = Some(Err(e.clone()));
                    }
                }
            }
        }
        results
            .into_iter()
            .map(|r| r.expect("every element resolved"))
            .collect()
    }

    fn tokenize(&self, text: &str, model_id: &str) -> Result<Vec<String>, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::EmptyText);
        }
        let req = TextRequest {
            model: model_id.to_string(),
            text: text.to_string(),
        };
        self.post::<_, TokenizeResponse>("/v1/tokenize", &req)
            .map(|r| r.tokens)
    }

    fn embed_tokens(&self, text: &str, model_id: &str) -> Result<Vec<Vec<f64>>, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::EmptyText);
        }
        let req = TextRequest {
            model: model_id.to_string(),
            text: text.to_string(),
        };
        self.post::<_, EmbedResponse>("/v1/embed", &req)
            .map(|r| r.vectors)
    }
}
