//! Rationale generators: the request/response shapes, the default prompt,
//! a seeded offline mock and a chat-completions HTTP client.

use std::io::Cursor;
use std::path::Path;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use medthink::data::ImageRef;

use crate::error::{Error, Result};
use crate::record::{now, AnnotationRecord, Mutation};

/// Environment variable holding the bearer token for the HTTP generator.
pub const TOKEN_ENV: &str = "MEDTHINK_GENERATOR_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    /// `{T}` is replaced by the question and `{A}` by the answer.
    pub text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            id: "mdmr-v1".into(),
            text: "You are given a medical image, a question about it, and the correct answer. \
                   Explain step by step, citing visible image findings and relevant background \
                   knowledge, why the answer is correct. Question: {T} Answer: {A}"
                .into(),
        }
    }
}

impl PromptTemplate {
    pub fn render(&self, question: &str, answer: &str) -> String {
        self.text.replace("{T}", question).replace("{A}", answer)
    }
}

/// Everything a generator sees. Two equal requests must be answered alike
/// by a deterministic generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub image_base64: String,
    pub question: String,
    pub answer: String,
    pub prompt_template_id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub rationale: String,
    pub generator_id: String,
    pub latency_ms: u64,
}

pub trait Generator: Send + Sync {
    fn id(&self) -> String;

    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse>;

    /// Free-form completion for the consistency review; the reply is parsed
    /// by the caller.
    fn review(&self, prompt: &str) -> Result<String>;
}

/// Raw image bytes: the file as stored, or a PNG encoding of an inline grid.
pub fn image_bytes(image: &ImageRef, base: &Path) -> Result<Vec<u8>> {
    match image {
        ImageRef::File(p) => {
            let path = base.join(p);
            std::fs::read(&path).map_err(|e| Error::io(path, e))
        }
        ImageRef::Inline(img) => {
            let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
                .ok_or_else(|| Error::contract("inline image has inconsistent geometry"))?;
            let mut out = Cursor::new(Vec::new());
            buf.write_to(&mut out, image::ImageFormat::Png)
                .map_err(|e| Error::contract(format!("png encoding failed: {e}")))?;
            Ok(out.into_inner())
        }
    }
}

pub fn build_request(record: &AnnotationRecord, template: &PromptTemplate, base: &Path) -> Result<GeneratorRequest> {
    Ok(GeneratorRequest {
        image_base64: B64.encode(image_bytes(&record.image, base)?),
        question: record.question.clone(),
        answer: record.answer.clone(),
        prompt_template_id: template.id.clone(),
        prompt: template.render(&record.question, &record.answer),
    })
}

/// Calls the generator and turns the outcome into a mutation. Transport
/// failures and empty replies become `GenerationFailed`, which leaves the
/// attempt counter alone.
pub fn generation_mutation(client: &dyn Generator, request: &GeneratorRequest) -> Mutation {
    let timestamp = now();
    match client.generate(request) {
        Ok(resp) if !resp.rationale.trim().is_empty() => Mutation::Generated {
            rationale: resp.rationale,
            generator_id: resp.generator_id,
            prompt_template_id: request.prompt_template_id.clone(),
            latency_ms: resp.latency_ms,
            timestamp,
        },
        Ok(resp) => Mutation::GenerationFailed {
            error: format!("{} returned an empty rationale", resp.generator_id),
            timestamp,
        },
        Err(e) => Mutation::GenerationFailed {
            error: e.to_string(),
            timestamp,
        },
    }
}

/// Asks `client` for a candidate rationale. On success the record moves to
/// pending_review with one more attempt; on failure only `last_error` changes.
pub fn request_rationale(
    client: &dyn Generator,
    record: &AnnotationRecord,
    version: u64,
    template: &PromptTemplate,
    base: &Path,
) -> Result<AnnotationRecord> {
    record.check_version(version)?;
    record.admits(&Mutation::GenerationFailed { error: String::new(), timestamp: 0 })?;
    let request = build_request(record, template, base)?;
    record.mutated(version, generation_mutation(client, &request))
}

const OBSERVATIONS: [&str; 6] = [
    "the relevant structure is clearly visible",
    "the region in question shows a distinct intensity pattern",
    "the finding is consistent with the surrounding anatomy",
    "the contrast between the region and its neighbours is informative",
    "no competing finding contradicts this reading",
    "the appearance matches the typical presentation",
];

/// Offline generator whose output is a pure function of the seed and request.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    pub seed: u64,
    /// When set, every request gets this text.
    pub fixed: Option<String>,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed, fixed: None }
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        Self { seed: 0, fixed: Some(text.into()) }
    }

    fn rng_for(&self, request: &GeneratorRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(serde_json::to_vec(request).expect("request serializes"));
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

impl Generator for MockGenerator {
    fn id(&self) -> String {
        format!("mock-{}", self.seed)
    }

    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse> {
        let rationale = match &self.fixed {
            Some(t) => t.clone(),
            None => {
                let mut rng = self.rng_for(request);
                let a = OBSERVATIONS[rng.random_range(0..OBSERVATIONS.len())];
                let b = OBSERVATIONS[rng.random_range(0..OBSERVATIONS.len())];
                format!(
                    "Looking at the image, {a}, and {b}, so the answer to \"{}\" is {}.",
                    request.question.trim(),
                    request.answer.trim()
                )
            }
        };
        Ok(GeneratorResponse { rationale, generator_id: self.id(), latency_ms: 0 })
    }

    fn review(&self, _prompt: &str) -> Result<String> {
        Ok("[]".into())
    }
}

/// Client for a vendor-style chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    pub url: String,
    pub model: String,
    pub token: Option<String>,
    pub timeout: Duration,
}

impl HttpGenerator {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            token: None,
            timeout: Duration::from_secs(60),
        }
    }

    /// Reads the bearer token from [`TOKEN_ENV`] when it is set.
    pub fn with_env_token(mut self) -> Self {
        self.token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        self
    }

    fn complete(&self, content: serde_json::Value) -> Result<(String, u64)> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": content }],
        });
        // A blocking client must not be created or dropped on an async
        // runtime thread, so each call builds its own.
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| Error::Generator(e.to_string()))?;
        let mut req = client.post(&self.url).json(&body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let start = Instant::now();
        let resp = req.send().map_err(|e| Error::Generator(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Generator(format!("{} answered {status}", self.url)));
        }
        let v: serde_json::Value = resp.json().map_err(|e| Error::Generator(format!("bad response body: {e}")))?;
        let latency = start.elapsed().as_millis() as u64;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| Error::Generator("response has no choices[0].message.content".into()))?;
        Ok((text.trim().to_string(), latency))
    }
}

impl Generator for HttpGenerator {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse> {
        let content = serde_json::json!([
            { "type": "text", "text": request.prompt },
            { "type": "image_url", "image_url": { "url": format!("data:image/png;base64,{}", request.image_base64) } },
        ]);
        let (rationale, latency_ms) = self.complete(content)?;
        if rationale.is_empty() {
            return Err(Error::Generator("empty completion".into()));
        }
        Ok(GeneratorResponse { rationale, generator_id: self.id(), latency_ms })
    }

    fn review(&self, prompt: &str) -> Result<String> {
        Ok(self.complete(serde_json::Value::String(prompt.to_string()))?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(q: &str) -> GeneratorRequest {
        GeneratorRequest {
            image_base64: "AA==".into(),
            question: q.into(),
            answer: "yes".into(),
            prompt_template_id: "mdmr-v1".into(),
            prompt: PromptTemplate::default().render(q, "yes"),
        }
    }

    #[test]
    fn template_substitutes_both_fields() {
        let p = PromptTemplate::default().render("Is it big?", "no");
        assert!(p.ends_with("Question: Is it big? Answer: no"));
        assert!(!p.contains("{T}"));
    }

    #[test]
    fn mock_replays_and_varies_by_seed() {
        let a = MockGenerator::new(1).generate(&request("Is it big?")).unwrap();
        let b = MockGenerator::new(1).generate(&request("Is it big?")).unwrap();
        assert_eq!(a, b);
        assert!(a.rationale.contains("\"Is it big?\" is yes"));
        let others: Vec<String> = (2..10)
            .map(|s| MockGenerator::new(s).generate(&request("Is it big?")).unwrap().rationale)
            .collect();
        assert!(others.iter().any(|o| *o != a.rationale));
    }

    #[test]
    fn inline_images_encode_as_png() {
        let img = medthink::data::Image::new(2, 3, vec![0, 1, 2, 3, 4, 255]).unwrap();
        let bytes = image_bytes(&ImageRef::Inline(img), Path::new(".")).unwrap();
        let back = image::load_from_memory(&bytes).unwrap().to_luma8();
        assert_eq!(back.into_raw(), vec![0, 1, 2, 3, 4, 255]);
    }
}
