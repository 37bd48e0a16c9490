//! Sample/dataset data model, manifest ingestion, and shard streaming.
//!
//! Datasets are described by a JSON manifest and stored as UTF-8 JSONL
//! shards, one sample object per line. Images travel as base64 strings
//! end to end; the pipeline counts, packs, and copies them but never
//! decodes to pixels (decoding is validated, pixels are untouched).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speaker/function of one text turn within a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Caption,
    User,
    Assistant,
    InterleavedText,
}

/// One ordered text turn.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TextTurn {
    pub role: Role,
    pub content: String,
}

impl TextTurn {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

/// Structural kind of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Caption,
    Interleaved,
    Instruction,
}

impl Category {
    pub fn key(&self) -> &'static str {
        match self {
            Category::Caption => "caption",
            Category::Interleaved => "interleaved",
            Category::Instruction => "instruction",
        }
    }
}

/// Source domain of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    General,
    Medical,
}

/// One multimodal record: base64 image payloads, ordered text turns,
/// and opaque metadata preserved on passthrough.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub dataset_id: String,
    pub images: Vec<String>,
    pub text_turns: Vec<TextTurn>,
    pub category: Category,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality_tag: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

/// On-disk shard record. Identical to [`Sample`] minus `dataset_id`,
/// which comes from the manifest entry the shard belongs to.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShardRecord {
    id: String,
    images: Vec<String>,
    text_turns: Vec<TextTurn>,
    category: Category,
    domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modality_tag: Option<String>,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
}

impl ShardRecord {
    fn into_sample(self, dataset_id: &str) -> Sample {
        Sample {
            id: self.id,
            dataset_id: dataset_id.to_string(),
            images: self.images,
            text_turns: self.text_turns,
            category: self.category,
            domain: self.domain,
            modality_tag: self.modality_tag,
            metadata: self.metadata,
        }
    }

    fn from_sample(s: &Sample) -> Self {
        Self {
            id: s.id.clone(),
            images: s.images.clone(),
            text_turns: s.text_turns.clone(),
            category: s.category,
            domain: s.domain,
            modality_tag: s.modality_tag.clone(),
            metadata: s.metadata.clone(),
        }
    }
}

/// A violated sample invariant, reported by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    EmptyDatasetId,
    CaptionRequiresImage,
    CaptionRequiresText,
    InstructionRequiresUser,
    InstructionRequiresAssistant,
    InvalidBase64 { index: usize },
}

impl Violation {
    pub fn name(&self) -> &'static str {
        match self {
            Violation::EmptyId => "id-empty",
            Violation::EmptyDatasetId => "dataset-id-empty",
            Violation::CaptionRequiresImage => "caption-requires-image",
            Violation::CaptionRequiresText => "caption-requires-text",
            Violation::InstructionRequiresUser => "instruction-requires-user",
            Violation::InstructionRequiresAssistant => "instruction-requires-assistant",
            Violation::InvalidBase64 { .. } => "invalid-base64",
        }
    }
}

/// Checks every sample invariant; an empty result means the sample is valid.
/// Violations are data, not faults — the caller decides skip vs. fail.
pub fn validate_sample(s: &Sample) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.id.is_empty() {
        out.push(Violation::EmptyId);
    }
    if s.dataset_id.is_empty() {
        out.push(Violation::EmptyDatasetId);
    }
    if s.category == Category::Caption {
        if s.images.is_empty() {
            out.push(Violation::CaptionRequiresImage);
        }
        if s.text_turns.is_empty() {
            out.push(Violation::CaptionRequiresText);
        }
    }
    if s.category == Category::Instruction {
        if !s.text_turns.iter().any(|t| t.role == Role::User) {
            out.push(Violation::InstructionRequiresUser);
        }
        if !s.text_turns.iter().any(|t| t.role == Role::Assistant) {
            out.push(Violation::InstructionRequiresAssistant);
        }
    }
    for (index, payload) in s.images.iter().enumerate() {
        if BASE64.decode(payload).is_err() {
            out.push(Violation::InvalidBase64 { index });
        }
    }
    out
}

/// One dataset in a manifest: where its shards live and what they contain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dataset_id: String,
    pub category: Category,
    pub domain: Domain,
    pub shard_paths: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_count: Option<u64>,
}

/// The dataset roster: unique ids, each mapping to a shard list.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn entry(&self, dataset_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.dataset_id == dataset_id)
    }

    pub fn dataset_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.dataset_id.as_str())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error at {path}:{line}:{column}: {message}")]
    ManifestParse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("duplicate dataset id '{0}' in manifest")]
    DuplicateDatasetId(String),
    #[error("invalid manifest entry '{dataset_id}': {reason}")]
    InvalidManifestEntry { dataset_id: String, reason: String },
    #[error("unknown dataset id '{0}'")]
    UnknownDataset(String),
    #[error("{shard}:{line}: record parse error: {message}")]
    RecordParse { shard: PathBuf, line: u64, message: String },
    #[error("{shard}:{line}: sample '{id}' violates: {}", violations.join(", "))]
    InvalidRecord { shard: PathBuf, line: u64, id: String, violations: Vec<String> },
}

/// Parses and validates a manifest file. Shard paths are resolved relative
/// to the manifest's own directory; duplicate dataset ids are rejected.
pub fn ingest_manifest(path: &Path) -> Result<DatasetManifest, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| CorpusError::ManifestParse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = std::collections::BTreeSet::new();
    for entry in &mut manifest.entries {
        if entry.dataset_id.is_empty() {
            return Err(CorpusError::InvalidManifestEntry {
                dataset_id: String::from("<empty>"),
                reason: "dataset_id must be non-empty".into(),
            });
        }
        if !seen.insert(entry.dataset_id.clone()) {
            return Err(CorpusError::DuplicateDatasetId(entry.dataset_id.clone()));
        }
        for p in &mut entry.shard_paths {
            if p.as_os_str().is_empty() {
                return Err(CorpusError::InvalidManifestEntry {
                    dataset_id: entry.dataset_id.clone(),
                    reason: "empty shard path".into(),
                });
            }
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(manifest)
}

/// Resume point for a [`SampleStream`]: the next line to read,
/// as (shard index, lines already consumed in that shard).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardCursor {
    pub shard: usize,
    pub line: u64,
}

/// Streaming reader over one dataset's shards, in shard order then line
/// order. In strict mode (the default posture for a curation tool) any
/// malformed or invariant-violating line is fatal; in lenient mode such
/// lines are logged, counted, and skipped.
pub struct SampleStream {
    dataset_id: String,
    shards: Vec<PathBuf>,
    strict: bool,
    shard_idx: usize,
    line_no: u64,
    reader: Option<BufReader<File>>,
    skipped: u64,
    poisoned: bool,
}

impl SampleStream {
    pub fn open(
        manifest: &DatasetManifest,
        dataset_id: &str,
        strict: bool,
    ) -> Result<Self, CorpusError> {
        let entry = manifest
            .entry(dataset_id)
            .ok_or_else(|| CorpusError::UnknownDataset(dataset_id.to_string()))?;
        Ok(Self {
            dataset_id: dataset_id.to_string(),
            shards: entry.shard_paths.clone(),
            strict,
            shard_idx: 0,
            line_no: 0,
            reader: None,
            skipped: 0,
            poisoned: false,
        })
    }

    /// Reopens a stream at a previously observed cursor.
    pub fn resume(
        manifest: &DatasetManifest,
        dataset_id: &str,
        strict: bool,
        cursor: ShardCursor,
    ) -> Result<Self, CorpusError> {
        let mut stream = Self::open(manifest, dataset_id, strict)?;
        stream.shard_idx = cursor.shard;
        if cursor.shard < stream.shards.len() && cursor.line > 0 {
            let mut reader = stream.open_shard(cursor.shard)?;
            let mut raw = String::new();
            for _ in 0..cursor.line {
                raw.clear();
                let n = reader.read_line(&mut raw).map_err(|source| CorpusError::Io {
                    path: stream.shards[cursor.shard].clone(),
                    source,
                })?;
                if n == 0 {
                    break;
                }
                stream.line_no += 1;
            }
            stream.reader = Some(reader);
        }
        Ok(stream)
    }

    pub fn cursor(&self) -> ShardCursor {
        ShardCursor { shard: self.shard_idx, line: self.line_no }
    }

    /// Lines skipped so far (lenient mode only).
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    fn open_shard(&self, idx: usize) -> Result<BufReader<File>, CorpusError> {
        let path = &self.shards[idx];
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(BufReader::new(file))
    }

    pub fn next_sample(&mut self) -> Option<Result<Sample, CorpusError>> {
        if self.poisoned {
            return None;
        }
        loop {
            if self.reader.is_none() {
                if self.shard_idx >= self.shards.len() {
                    return None;
                }
                match self.open_shard(self.shard_idx) {
                    Ok(r) => {
                        self.reader = Some(r);
                        self.line_no = 0;
                    }
                    Err(e) => {
                        self.poisoned = true;
                        return Some(Err(e));
                    }
                }
            }
            let shard_path = self.shards[self.shard_idx].clone();
            let mut raw = String::new();
            let n = match self.reader.as_mut().unwrap().read_line(&mut raw) {
                Ok(n) => n,
                Err(source) => {
                    self.poisoned = true;
                    return Some(Err(CorpusError::Io { path: shard_path, source }));
                }
            };
            if n == 0 {
                self.reader = None;
                self.shard_idx += 1;
                continue;
            }
            self.line_no += 1;
            if raw.trim().is_empty() {
                continue;
            }
            match self.parse_line(&raw, &shard_path) {
                Ok(sample) => return Some(Ok(sample)),
                Err(e) => {
                    if self.strict {
                        self.poisoned = true;
                        return Some(Err(e));
                    }
                    log::warn!("skipping bad record: {e}");
                    self.skipped += 1;
                }
            }
        }
    }

    fn parse_line(&self, raw: &str, shard: &Path) -> Result<Sample, CorpusError> {
        let record: ShardRecord =
            serde_json::from_str(raw).map_err(|e| CorpusError::RecordParse {
                shard: shard.to_path_buf(),
                line: self.line_no,
                message: e.to_string(),
            })?;
        let sample = record.into_sample(&self.dataset_id);
        let violations = validate_sample(&sample);
        if !violations.is_empty() {
            return Err(CorpusError::InvalidRecord {
                shard: shard.to_path_buf(),
                line: self.line_no,
                id: sample.id,
                violations: violations.iter().map(|v| v.name().to_string()).collect(),
            });
        }
        Ok(sample)
    }
}

impl Iterator for SampleStream {
    type Item = Result<Sample, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_sample()
    }
}

/// Loads an entire dataset into memory. Convenience for small datasets
/// and tests; prefer [`SampleStream`] when streaming matters.
pub fn load_all(
    manifest: &DatasetManifest,
    dataset_id: &str,
    strict: bool,
) -> Result<Vec<Sample>, CorpusError> {
    SampleStream::open(manifest, dataset_id, strict)?.collect()
}

/// Writes samples as one JSONL shard (compact, one object per line).
/// Returns the number of lines written.
pub fn write_shard(samples: &[Sample], path: &Path) -> Result<u64, CorpusError> {
    let file = File::create(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    for s in samples {
        let record = ShardRecord::from_sample(s);
        let line = serde_json::to_string(&record).map_err(|e| CorpusError::RecordParse {
            shard: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(samples.len() as u64)
}
