//! Response generators backing the generative augmentation.
//!
//! The augmentation is defined against this interface so a local dialogue
//! model, an external process, or a recorded fixture can supply responses.
//! Implementations must be reentrant; the augmenter may call them from
//! several threads at once.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::DecodingParams;
use crate::error::{Error, Result};

pub trait ResponseGenerator: Sync {
    /// Generate a response to `prompt`. The prompt itself must not be part
    /// of the return value.
    fn generate(&self, prompt: &str, params: &DecodingParams) -> Result<String>;
}

pub fn prompt_hash(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hex_encode(&hasher.finalize())
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\")
        .replace('\t', "\\t")
        .replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Replays responses from a fixture file. Line format:
/// `<sha256-of-prompt>\t<response>` with `\t`/`\n`/`\\` escaped in the
/// response. Unknown prompts are errors so fixture gaps fail loudly.
pub struct ReplayGenerator {
    responses: HashMap<String, String>,
}

impl ReplayGenerator {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read fixture {}: {e}", path.display())))?;
        let mut responses = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (hash, response) = line.split_once('\t').ok_or_else(|| {
                Error::row(
                    path.display().to_string(),
                    (i + 1) as u64,
                    "expected <hash>\\t<response>",
                )
            })?;
            responses.insert(hash.to_string(), unescape(response));
        }
        Ok(ReplayGenerator { responses })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        ReplayGenerator {
            responses: pairs
                .into_iter()
                .map(|(prompt, response)| (prompt_hash(prompt), response.to_string()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ResponseGenerator for ReplayGenerator {
    fn generate(&self, prompt: &str, _params: &DecodingParams) -> Result<String> {
        self.responses
            .get(&prompt_hash(prompt))
            .cloned()
            .ok_or_else(|| Error::config(format!("no recorded response for prompt {prompt:?}")))
    }
}

/// Wraps another generator and records every (prompt, response) pair so a
/// fixture can be written for later replay.
pub struct RecordingGenerator<G> {
    inner: G,
    recorded: Mutex<Vec<(String, String)>>,
}

impl<G: ResponseGenerator> RecordingGenerator<G> {
    pub fn new(inner: G) -> Self {
        RecordingGenerator {
            inner,
            recorded: Mutex::new(Vec::new()),
        }
    }

    pub fn write_fixture(&self, path: &Path) -> Result<()> {
        let recorded = self.recorded.lock().expect("recorder poisoned");
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (hash, response) in recorded.iter() {
            writeln!(file, "{hash}\t{}", escape(response))?;
        }
        file.flush()?;
        Ok(())
    }
}

impl<G: ResponseGenerator> ResponseGenerator for RecordingGenerator<G> {
    fn generate(&self, prompt: &str, params: &DecodingParams) -> Result<String> {
        let response = self.inner.generate(prompt, params)?;
        self.recorded
            .lock()
            .expect("recorder poisoned")
            .push((prompt_hash(prompt), response.clone()));
        Ok(response)
    }
}

/// Adapter for a local model exposed as an executable: the prompt goes to
/// stdin, the response is read from stdout, and the decoding parameters are
/// passed in the environment (`HSD_TOP_P`, `HSD_TOP_K`, `HSD_TEMPERATURE`,
/// `HSD_MAX_NEW_TOKENS`, `HSD_NO_REPEAT_NGRAM`).
pub struct CommandGenerator {
    program: String,
    args: Vec<String>,
}

impl CommandGenerator {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        CommandGenerator {
            program: program.into(),
            args,
        }
    }
}

impl ResponseGenerator for CommandGenerator {
    fn generate(&self, prompt: &str, params: &DecodingParams) -> Result<String> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .env("HSD_TOP_P", params.top_p.to_string())
            .env("HSD_TOP_K", params.top_k.to_string())
            .env("HSD_TEMPERATURE", params.temperature.to_string())
            .env("HSD_MAX_NEW_TOKENS", params.max_new_tokens.to_string())
            .env("HSD_NO_REPEAT_NGRAM", params.no_repeat_ngram.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::config(format!("cannot spawn generator {}: {e}", self.program)))?;
        child
            .stdin
            .as_mut()
            .expect("stdin piped")
            .write_all(prompt.as_bytes())?;
        let output = child.wait_with_output()?;
        if !output.status.success() {
            return Err(Error::config(format!(
                "generator {} exited with {}",
                self.program, output.status
            )));
        }
        Ok(String::from_utf8_lossy(&output.stdout)
            .trim_end()
            .to_string())
    }
}
