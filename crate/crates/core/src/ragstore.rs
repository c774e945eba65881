//! Embedding providers, document chunking and the exact-scan vector store.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::io::{BufRead, Write};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};
use crate::eval::cosine_similarity;
use crate::infiltrate::tokenize;

pub const DEFAULT_CHUNK_SIZE: usize = 512;
pub const DEFAULT_CHUNK_OVERLAP: usize = 64;
pub const DEFAULT_TOP_K: usize = 4;
pub const DEFAULT_EMBED_DIM: usize = 384;
pub const MIN_HASH_DIM: usize = 8;
pub const EMBED_API_KEY_ENV: &str = "EMBED_API_KEY";

/// How far a chunk boundary may move back to land on a word boundary.
const ALIGN_WINDOW: usize = 20;

/// Fixed-length vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("embedding has no components".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("embedding has a non-finite component".into()));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Vec<f64> {
        v.0
    }
}

pub trait EmbeddingProvider: Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// One vector of [`dim`](Self::dim) components per input, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed(texts)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed(texts)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const HASH_SEED: &[u8] = b"ontorag/v1";

fn seeded_fnv1a(token: &str) -> u64 {
    HASH_SEED
        .iter()
        .chain(token.as_bytes())
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Bag-of-words feature hashing: token counts of the tokenized text hashed
/// into `dim` buckets, scaled to unit length. Text without tokens maps to e0.
pub fn deterministic_embed(text: &str, dim: usize) -> Result<EmbeddingVector> {
    if dim < MIN_HASH_DIM {
        return Err(Error::InvalidArgument(format!(
            "hash embedding dimension must be at least {MIN_HASH_DIM}, got {dim}"
        )));
    }
    let mut counts = vec![0.0f64; dim];
    for token in tokenize(text).tokens {
        counts[(seeded_fnv1a(&token) % dim as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        counts[0] = 1.0;
    } else {
        counts.iter_mut().for_each(|c| *c /= norm);
    }
    EmbeddingVector::new(counts)
}

/// Offline provider backed by [`deterministic_embed`].
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dim: usize,
}

impl DeterministicEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        deterministic_embed("", dim)?;
        Ok(DeterministicEmbedder { dim })
    }
}

impl EmbeddingProvider for DeterministicEmbedder {
    fn name(&self) -> &str {
        "deterministic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        texts
            .iter()
            .map(|t| deterministic_embed(t, self.dim).map_err(|e| ProviderError::Failed(e.to_string())))
            .collect()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

/// Client for an embeddings endpoint speaking the common
/// `{"model", "input"} -> {"data": [{"embedding"}]}` protocol.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    dim: usize,
    api_key: Option<String>,
    batch_size: usize,
    max_in_flight: usize,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, model: impl Into<String>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpEmbedder {
            client,
            url: url.into(),
            model: model.into(),
            dim,
            api_key: std::env::var(EMBED_API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            batch_size: 64,
            max_in_flight: 4,
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_max_in_flight(mut self, max_in_flight: usize) -> Self {
        self.max_in_flight = max_in_flight.max(1);
        self
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    fn embed_batch(&self, batch: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let mut request = self.client.post(&self.url).json(&EmbedRequest {
            model: &self.model,
            input: batch,
        });
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body: response.text().unwrap_or_default(),
            });
        }
        let parsed: EmbedResponse = response
            .json()
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        if parsed.data.len() != batch.len() {
            return Err(ProviderError::Malformed(format!(
                "expected {} embeddings, got {}",
                batch.len(),
                parsed.data.len()
            )));
        }
        parsed
            .data
            .into_iter()
            .map(|d| {
                if d.embedding.len() != self.dim {
                    return Err(ProviderError::Malformed(format!(
                        "expected dimension {}, got {}",
                        self.dim,
                        d.embedding.len()
                    )));
                }
                EmbeddingVector::new(d.embedding).map_err(|e| ProviderError::Malformed(e.to_string()))
            })
            .collect()
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let batches: Vec<&[String]> = texts.chunks(self.batch_size).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.max_in_flight)
            .build()
            .map_err(|e| ProviderError::Failed(e.to_string()))?;
        let results: Vec<Vec<EmbeddingVector>> = pool.install(|| {
            batches
                .par_iter()
                .map(|b| self.embed_batch(b))
                .collect::<Result<_, _>>()
        })?;
        Ok(results.into_iter().flatten().collect())
    }
}

/// A window of a document, addressed by its character offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkSpan {
    pub offset: usize,
    pub text: String,
}

/// Splits `text` into sliding windows of `size` characters with `overlap`
/// characters shared between neighbours.
///
/// Windows sit at nominal offsets `i * (size - overlap)`; there are
/// `1 + ceil((n - size) / (size - overlap))` of them for `n > size`.
/// Each interior boundary moves back by at most 20 characters to the nearest
/// word boundary: starts to just after a whitespace character, ends to a
/// whitespace character.
pub fn chunk_document(text: &str, size: usize, overlap: usize) -> Result<Vec<ChunkSpan>> {
    if size == 0 {
        return Err(Error::InvalidArgument("chunk size must be positive".into()));
    }
    if overlap >= size {
        return Err(Error::InvalidArgument(format!(
            "overlap {overlap} must be smaller than chunk size {size}"
        )));
    }
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let step = size - overlap;
    let mut spans = Vec::new();
    let mut prev: Option<(usize, usize)> = None;
    let mut nominal = 0;
    while nominal < n {
        let start = match prev {
            None => 0,
            Some((prev_start, prev_end)) => {
                let lowest = nominal.saturating_sub(ALIGN_WINDOW).max(prev_start + 1);
                let aligned = (lowest..=nominal)
                    .rev()
                    .find(|&p| chars[p - 1].is_whitespace())
                    .unwrap_or(nominal);
                aligned.min(prev_end)
            }
        };
        let nominal_end = nominal + size;
        let end = if nominal_end >= n {
            n
        } else {
            let lowest = nominal_end.saturating_sub(ALIGN_WINDOW).max(nominal + 1);
            (lowest..=nominal_end)
                .rev()
                .find(|&q| chars[q].is_whitespace())
                .unwrap_or(nominal_end)
        };
        let window: String = chars[start..end].iter().collect();
        if !window.trim().is_empty() {
            spans.push(ChunkSpan {
                offset: start,
                text: window,
            });
        }
        if end == n {
            break;
        }
        prev = Some((start, end));
        nominal += step;
    }
    Ok(spans)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub document: String,
    pub text: String,
    pub vector: EmbeddingVector,
}

pub fn chunk_id(document: &str, offset: usize) -> String {
    format!("{document}#{offset:08}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreHeader {
    dim: Option<usize>,
    provider: String,
    created_unix: u64,
    documents: Vec<String>,
}

/// Exact-scan vector store. Reads may be shared; [`ingest`](Self::ingest)
/// needs exclusive access.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: Option<usize>,
    provider: String,
    created_unix: u64,
    documents: BTreeSet<String>,
    chunks: Vec<Chunk>,
}

impl Default for VectorStore {
    fn default() -> Self {
        Self::new()
    }
}

impl VectorStore {
    pub fn new() -> Self {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        VectorStore {
            dim: None,
            provider: String::new(),
            created_unix,
            documents: BTreeSet::new(),
            chunks: Vec::new(),
        }
    }

    /// Declared dimension; `None` until the first ingest.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    pub fn created_unix(&self) -> u64 {
        self.created_unix
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn documents(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(String::as_str)
    }

    /// Chunks `document`, embeds every chunk and appends them. Returns the
    /// number of chunks added. On error the store is left unchanged.
    pub fn ingest(
        &mut self,
        document_id: &str,
        document: &str,
        provider: &dyn EmbeddingProvider,
        size: usize,
        overlap: usize,
    ) -> Result<usize> {
        if let Some(dim) = self.dim {
            if dim != provider.dim() {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: provider.dim(),
                });
            }
        }
        if self.documents.contains(document_id) {
            return Err(Error::DuplicateDocument(document_id.to_string()));
        }
        let spans = chunk_document(document, size, overlap)?;
        let texts: Vec<String> = spans.iter().map(|s| s.text.clone()).collect();
        let vectors = if texts.is_empty() {
            Vec::new()
        } else {
            provider.embed(&texts)?
        };
        if vectors.len() != texts.len() {
            return Err(ProviderError::Malformed(format!(
                "provider returned {} vectors for {} chunks",
                vectors.len(),
                texts.len()
            ))
            .into());
        }
        if let Some(bad) = vectors.iter().find(|v| v.dim() != provider.dim()) {
            return Err(Error::DimensionMismatch {
                expected: provider.dim(),
                actual: bad.dim(),
            });
        }
        let added = spans.len();
        self.chunks.extend(spans.into_iter().zip(vectors).map(|(span, vector)| Chunk {
            id: chunk_id(document_id, span.offset),
            document: document_id.to_string(),
            text: span.text,
            vector,
        }));
        self.documents.insert(document_id.to_string());
        self.dim = Some(provider.dim());
        if self.provider.is_empty() {
            self.provider = provider.name().to_string();
        }
        Ok(added)
    }

    /// Top-`k` chunks by cosine similarity to `query`, best first; ties go
    /// to the smaller chunk id.
    pub fn retrieve(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(&Chunk, f64)>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.chunks.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(dim) = self.dim {
            if query.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: query.dim(),
                });
            }
        }
        if query.is_zero() {
            return Err(Error::ZeroVector);
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        for chunk in &self.chunks {
            let score = if chunk.vector.is_zero() {
                0.0
            } else {
                cosine_similarity(query, &chunk.vector)?
            };
            heap.push(Ranked { score, chunk });
            if heap.len() > k {
                heap.pop();
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| (r.chunk, r.score))
            .collect())
    }

    /// Writes the JSON-lines form: a header line, then one chunk per line.
    pub fn save(&self, mut out: impl Write) -> Result<()> {
        let header = StoreHeader {
            dim: self.dim,
            provider: self.provider.clone(),
            created_unix: self.created_unix,
            documents: self.documents.iter().cloned().collect(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for chunk in &self.chunks {
            serde_json::to_writer(&mut out, chunk)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let header: StoreHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Err(Error::Parse("store file is empty".into())),
        };
        let mut store = VectorStore {
            dim: header.dim,
            provider: header.provider,
            created_unix: header.created_unix,
            documents: header.documents.into_iter().collect(),
            chunks: Vec::new(),
        };
        let mut ids = BTreeSet::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let chunk: Chunk = serde_json::from_str(&line)?;
            let bad = |what: String| Error::Parse(format!("store line {}: {what}", idx + 2));
            if Some(chunk.vector.dim()) != store.dim {
                return Err(bad(format!("vector dimension {} does not match header", chunk.vector.dim())));
            }
            if chunk.text.is_empty() {
                return Err(bad("empty chunk text".into()));
            }
            if !ids.insert(chunk.id.clone()) {
                return Err(bad(format!("duplicate chunk id {}", chunk.id)));
            }
            store.documents.insert(chunk.document.clone());
            store.chunks.push(chunk);
        }
        Ok(store)
    }
}

struct Ranked<'a> {
    score: f64,
    chunk: &'a Chunk,
}

impl Ranked<'_> {
    /// "Better" compares as smaller so the max-heap evicts the worst entry.
    fn rank(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.chunk.id.cmp(&other.chunk.id))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank(other)
    }
}
