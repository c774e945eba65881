//! Single RAG turns and the interactive chat loop.

use std::io::{BufRead, Write};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result, Stage};
use crate::infiltrate::{infiltrate, AugmentedPrompt, InfiltrateOptions};
use crate::ragstore::{EmbeddingProvider, VectorStore};
use crate::subsume::SubsumptionDictionary;

pub const LLM_API_KEY_ENV: &str = "LLM_API_KEY";
/// Stands in for an empty completion.
pub const NO_RESPONSE: &str = "[no response]";

const INSTRUCTION: &str = "Answer using only the context below.";

pub trait LlmProvider: Sync {
    fn name(&self) -> &str;

    fn complete(&self, system: &str, user: &str) -> Result<String, ProviderError>;
}

/// Returns the rendered request unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoLlm;

impl LlmProvider for EchoLlm {
    fn name(&self) -> &str {
        "echo"
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, ProviderError> {
        Ok(join_request(system, user))
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

/// Client for a chat-completions endpoint (`{"model", "messages"}` in,
/// first choice's message content out).
#[derive(Debug, Clone)]
pub struct HttpLlm {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpLlm {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpLlm {
            client,
            url: url.into(),
            model: model.into(),
            api_key: std::env::var(LLM_API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }
}

impl LlmProvider for HttpLlm {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, ProviderError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [
                ChatMessage { role: "system", content: system },
                ChatMessage { role: "user", content: user },
            ],
        };
        let mut request = self.client.post(&self.url).json(&body);
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
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::Malformed("response has no choices".into()))?;
        Ok(choice.message.content.unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub id: String,
    pub score: f64,
    pub text: String,
}

/// Everything needed to reproduce one request and its answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub raw_prompt: String,
    pub use_subsumptions: bool,
    pub augmented_prompt: AugmentedPrompt,
    pub retrieved: Vec<RetrievedChunk>,
    pub response: String,
}

impl ChatTurn {
    /// System and user messages sent to the LLM for this turn.
    pub fn request(&self) -> (String, String) {
        render_request(&self.augmented_prompt.text, &self.retrieved)
    }
}

/// Context in the system message, question in the user message.
pub fn render_request(question: &str, context: &[RetrievedChunk]) -> (String, String) {
    let chunks: Vec<&str> = context.iter().map(|c| c.text.as_str()).collect();
    let system = format!("{INSTRUCTION}\nContext:\n{}", chunks.join("\n\n"));
    let user = format!("Question: {question}");
    (system, user)
}

/// The full request as one string: system message, newline, user message.
pub fn join_request(system: &str, user: &str) -> String {
    format!("{system}\n{user}")
}

#[derive(Debug, Clone, Copy)]
pub struct AnswerOptions {
    pub k: usize,
    pub use_subsumptions: bool,
    pub infiltrate: InfiltrateOptions,
}

impl Default for AnswerOptions {
    fn default() -> Self {
        AnswerOptions {
            k: crate::ragstore::DEFAULT_TOP_K,
            use_subsumptions: true,
            infiltrate: InfiltrateOptions::default(),
        }
    }
}

/// Runs one turn: optionally infiltrate the prompt, embed it, retrieve the
/// top-k chunks and ask the LLM. Failures name the stage that failed.
pub fn answer(
    raw_prompt: &str,
    dict: &SubsumptionDictionary,
    store: &VectorStore,
    embedder: &dyn EmbeddingProvider,
    llm: &dyn LlmProvider,
    options: &AnswerOptions,
) -> Result<ChatTurn> {
    let augmented = if options.use_subsumptions {
        infiltrate(raw_prompt, dict, &options.infiltrate)
    } else {
        AugmentedPrompt::unchanged(raw_prompt)
    };
    let query = embedder
        .embed(std::slice::from_ref(&augmented.text))
        .map_err(|e| Error::from(e).at_stage(Stage::Embed))?
        .pop()
        .ok_or_else(|| Error::from(ProviderError::Malformed("no query vector".into())).at_stage(Stage::Embed))?;
    let retrieved: Vec<RetrievedChunk> = store
        .retrieve(&query, options.k)
        .map_err(|e| e.at_stage(Stage::Retrieve))?
        .into_iter()
        .map(|(chunk, score)| RetrievedChunk {
            id: chunk.id.clone(),
            score,
            text: chunk.text.clone(),
        })
        .collect();
    let (system, user) = render_request(&augmented.text, &retrieved);
    let mut response = llm
        .complete(&system, &user)
        .map_err(|e| Error::from(e).at_stage(Stage::Complete))?;
    if response.trim().is_empty() {
        response = NO_RESPONSE.to_string();
    }
    Ok(ChatTurn {
        raw_prompt: raw_prompt.to_string(),
        use_subsumptions: options.use_subsumptions,
        augmented_prompt: augmented,
        retrieved,
        response,
    })
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedTurn {
    pub timestamp: u64,
    #[serde(flatten)]
    pub turn: ChatTurn,
}

pub struct ChatSession<'a> {
    pub dict: &'a SubsumptionDictionary,
    pub store: &'a VectorStore,
    pub embedder: &'a dyn EmbeddingProvider,
    pub llm: &'a dyn LlmProvider,
    pub options: AnswerOptions,
    pub trace: bool,
}

/// Reads prompts line by line until `/quit` or end of input, printing each
/// response and appending each turn to `log` as one JSON line. Returns the
/// number of turns.
pub fn chat_repl(
    session: &ChatSession<'_>,
    input: impl BufRead,
    mut output: impl Write,
    mut log: impl Write,
) -> Result<usize> {
    let mut turns = 0;
    for line in input.lines() {
        let line = line?;
        let prompt = line.trim();
        if prompt == "/quit" {
            break;
        }
        if prompt.is_empty() {
            continue;
        }
        let turn = answer(
            prompt,
            session.dict,
            session.store,
            session.embedder,
            session.llm,
            &session.options,
        )?;
        writeln!(output, "{}", turn.response)?;
        if session.trace {
            writeln!(output, "[appended] {}", turn.augmented_prompt.appended_terms.join(", "))?;
            let ids: Vec<&str> = turn.retrieved.iter().map(|c| c.id.as_str()).collect();
            writeln!(output, "[retrieved] {}", ids.join(", "))?;
        }
        output.flush()?;
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        serde_json::to_writer(&mut log, &LoggedTurn { timestamp, turn })?;
        log.write_all(b"\n")?;
        log.flush()?;
        turns += 1;
    }
    Ok(turns)
}
