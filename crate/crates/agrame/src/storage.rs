//! AGRV index files: token embeddings in a little-endian binary file plus a
//! JSON-lines span sidecar for passage indexes.
//!
//! Layout:
//!
//! ```text
//! "AGRV" | version u32 | dim u32 | record_count u32 | kind u8
//! per record: id_len u16 | id (UTF-8) | [marker u8, queries only] | token_count u32 | rows (f32, row-major)
//! ```
//!
//! Rows are held as f64 in memory and stored as f32. Values that are not
//! exactly representable in f32 come back rounded; see [`f32_rounded`].

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use agrame_core::{EmbeddingMatrix, PassageRecord, PropositionMask, QueryEncoding, QueryMarker, SentenceSpan};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"AGRV";
pub const VERSION: u32 = 1;
/// Magic plus the fixed header fields.
pub const HEADER_LEN: usize = 17;

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("not an AGRV file")]
    NotAgrv,
    #[error("unsupported AGRV version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("missing spans for passage {0}")]
    MissingSpans(String),
    #[error("spans sidecar: {0}")]
    Sidecar(String),
    #[error("dim mismatch: record {id} has dim {actual}, expected {expected}")]
    DimMismatch { id: String, expected: usize, actual: usize },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("expected a {expected} index, found {found}")]
    WrongKind { expected: &'static str, found: &'static str },
    #[error("{0}")]
    TooLarge(String),
    #[error("invalid record {id}: {source}")]
    Invalid {
        id: String,
        #[source]
        source: agrame_core::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = StorageError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Passages,
    Queries,
}

impl IndexKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Passages => "passages",
            Self::Queries => "queries",
        }
    }

    fn byte(self) -> u8 {
        match self {
            Self::Passages => 0,
            Self::Queries => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Passages),
            1 => Some(Self::Queries),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub version: u32,
    pub dim: usize,
    pub record_count: usize,
    pub kind: IndexKind,
}

/// One record as stored, before span metadata is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub id: String,
    pub marker: Option<QueryMarker>,
    pub embeddings: EmbeddingMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawIndex {
    pub manifest: IndexManifest,
    pub records: Vec<RawRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Index {
    Passages(Vec<PassageRecord>),
    Queries(Vec<QueryEncoding>),
}

/// `<name>.spans.jsonl` next to `<name>.agrv`.
pub fn sidecar_path(index_path: &Path) -> PathBuf {
    index_path.with_extension("spans.jsonl")
}

/// The matrix that a write/read cycle yields: every entry rounded to f32.
/// Fails only for rows whose norm sits at the edge of the unit-norm
/// tolerance, which would also fail to load.
pub fn f32_rounded(m: &EmbeddingMatrix) -> agrame_core::Result<EmbeddingMatrix> {
    let data = m.as_slice().iter().map(|&v| v as f32 as f64).collect();
    EmbeddingMatrix::new(m.rows(), m.dim(), data)
}

#[derive(Serialize, Deserialize)]
struct PropLine {
    sentence: usize,
    tokens: Vec<usize>,
}

/// Field order here is the key order on disk.
#[derive(Serialize, Deserialize)]
struct SpanLine {
    id: String,
    sentences: Vec<[usize; 2]>,
    propositions: Vec<PropLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sentence_texts: Vec<String>,
}

fn common_dim<'a>(items: impl Iterator<Item = (&'a str, &'a EmbeddingMatrix)>) -> Result<usize> {
    let mut dim = None;
    for (id, m) in items {
        match dim {
            None => dim = Some(m.dim()),
            Some(d) if d != m.dim() => {
                return Err(StorageError::DimMismatch {
                    id: id.to_string(),
                    expected: d,
                    actual: m.dim(),
                })
            }
            _ => {}
        }
    }
    Ok(dim.unwrap_or(0))
}

fn u32_of(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| StorageError::TooLarge(format!("{what} {n} does not fit in u32")))
}

fn write_header(out: &mut Vec<u8>, dim: usize, count: usize, kind: IndexKind) -> Result<()> {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32_of(dim, "dim")?.to_le_bytes());
    out.extend_from_slice(&u32_of(count, "record count")?.to_le_bytes());
    out.push(kind.byte());
    Ok(())
}

fn write_record(out: &mut Vec<u8>, id: &str, marker: Option<QueryMarker>, m: &EmbeddingMatrix) -> Result<()> {
    let len = u16::try_from(id.len()).map_err(|_| StorageError::TooLarge(format!("id of {} bytes", id.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(id.as_bytes());
    if let Some(mk) = marker {
        out.push(mk.to_byte());
    }
    out.extend_from_slice(&u32_of(m.rows(), "token count")?.to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(())
}

/// Serializes passages to index bytes and sidecar text.
pub fn encode_passages(records: &[PassageRecord]) -> Result<(Vec<u8>, String)> {
    let dim = common_dim(records.iter().map(|r| (r.id.as_str(), &r.embeddings)))?;
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(StorageError::DuplicateId(r.id.clone()));
        }
        r.ensure_valid().map_err(|source| StorageError::Invalid {
            id: r.id.clone(),
            source,
        })?;
    }
    let mut bytes = Vec::new();
    write_header(&mut bytes, dim, records.len(), IndexKind::Passages)?;
    let mut sidecar = String::new();
    for r in records {
        write_record(&mut bytes, &r.id, None, &r.embeddings)?;
        let line = SpanLine {
            id: r.id.clone(),
            sentences: r.sentences.iter().map(|s| [s.start, s.end]).collect(),
            propositions: r
                .propositions
                .iter()
                .map(|p| PropLine {
                    sentence: p.sentence_idx,
                    tokens: p.token_indices.clone(),
                })
                .collect(),
            text: r.text.clone(),
            sentence_texts: r.sentence_texts.clone(),
        };
        sidecar.push_str(&serde_json::to_string(&line).expect("span line serializes"));
        sidecar.push('\n');
    }
    Ok((bytes, sidecar))
}

/// Serializes query encodings. Ids need only be unique per marker, so one
/// file can hold both encodings of a query.
pub fn encode_queries(records: &[QueryEncoding]) -> Result<Vec<u8>> {
    let dim = common_dim(records.iter().map(|r| (r.id.as_str(), &r.embeddings)))?;
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert((r.id.as_str(), r.marker)) {
            return Err(StorageError::DuplicateId(format!("{} ({})", r.id, r.marker.name())));
        }
    }
    let mut bytes = Vec::new();
    write_header(&mut bytes, dim, records.len(), IndexKind::Queries)?;
    for r in records {
        write_record(&mut bytes, &r.id, Some(r.marker), &r.embeddings)?;
    }
    Ok(bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(StorageError::Corrupt(format!("truncated {what} at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Parses index bytes without span metadata.
pub fn decode_raw(bytes: &[u8]) -> Result<RawIndex> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(StorageError::NotAgrv);
    }
    let mut c = Cursor { buf: bytes, pos: 4 };
    let version = c.u32("header")?;
    if version != VERSION {
        return Err(StorageError::UnsupportedVersion(version));
    }
    let dim = c.u32("header")? as usize;
    let count = c.u32("header")? as usize;
    let kind_byte = c.u8("header")?;
    let kind = IndexKind::from_byte(kind_byte).ok_or_else(|| StorageError::Corrupt(format!("unknown kind byte {kind_byte}")))?;
    if count > 0 && dim == 0 {
        return Err(StorageError::Corrupt("dim 0 with records present".into()));
    }
    // every record needs at least 6 bytes, which bounds a bogus count
    let mut records = Vec::with_capacity(count.min(c.remaining() / 6));
    for _ in 0..count {
        let len = c.u16("id length")? as usize;
        let id = std::str::from_utf8(c.take(len, "id")?)
            .map_err(|_| StorageError::Corrupt("id is not UTF-8".into()))?
            .to_string();
        let marker = match kind {
            IndexKind::Queries => {
                let b = c.u8("marker")?;
                Some(QueryMarker::from_byte(b).ok_or_else(|| StorageError::Corrupt(format!("unknown marker byte {b} for {id}")))?)
            }
            IndexKind::Passages => None,
        };
        let rows = c.u32("token count")? as usize;
        let n = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| StorageError::Corrupt(format!("token count overflow for {id}")))?;
        let raw = c.take(n, "rows")?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
        let embeddings = EmbeddingMatrix::new(rows, dim, data).map_err(|source| StorageError::Invalid { id: id.clone(), source })?;
        records.push(RawRecord { id, marker, embeddings });
    }
    if c.remaining() != 0 {
        return Err(StorageError::Corrupt(format!("{} trailing bytes", c.remaining())));
    }
    Ok(RawIndex {
        manifest: IndexManifest {
            version,
            dim,
            record_count: count,
            kind,
        },
        records,
    })
}

/// Joins raw passage records with their sidecar. Every record needs exactly
/// one sidecar line and every line must name a record.
pub fn attach_spans(raw: RawIndex, sidecar: &str) -> Result<Vec<PassageRecord>> {
    if raw.manifest.kind != IndexKind::Passages {
        return Err(StorageError::WrongKind {
            expected: "passages",
            found: raw.manifest.kind.name(),
        });
    }
    let mut lines: HashMap<String, SpanLine> = HashMap::new();
    for (n, line) in sidecar.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: SpanLine = serde_json::from_str(line).map_err(|e| StorageError::Sidecar(format!("line {}: {e}", n + 1)))?;
        if lines.contains_key(&s.id) {
            return Err(StorageError::Sidecar(format!("line {}: duplicate id {}", n + 1, s.id)));
        }
        lines.insert(s.id.clone(), s);
    }
    let mut out = Vec::with_capacity(raw.records.len());
    let mut seen = HashSet::new();
    for r in raw.records {
        if !seen.insert(r.id.clone()) {
            return Err(StorageError::DuplicateId(r.id));
        }
        let s = lines.remove(&r.id).ok_or_else(|| StorageError::MissingSpans(r.id.clone()))?;
        let spans = s.sentences.iter().map(|&[a, b]| SentenceSpan::new(a, b)).collect();
        let props = s
            .propositions
            .into_iter()
            .map(|p| PropositionMask::new(p.sentence, p.tokens))
            .collect();
        let invalid = |source| StorageError::Invalid { id: r.id.clone(), source };
        let mut rec = PassageRecord::new(r.id.clone(), r.embeddings, spans, props).map_err(invalid)?;
        if let Some(t) = s.text {
            rec = rec.with_text(t);
        }
        if !s.sentence_texts.is_empty() {
            rec = rec.with_sentence_texts(s.sentence_texts).map_err(invalid)?;
        }
        out.push(rec);
    }
    if let Some(id) = lines.keys().min() {
        return Err(StorageError::Sidecar(format!("spans for unknown passage {id}")));
    }
    Ok(out)
}

pub fn decode_queries(bytes: &[u8]) -> Result<Vec<QueryEncoding>> {
    let raw = decode_raw(bytes)?;
    if raw.manifest.kind != IndexKind::Queries {
        return Err(StorageError::WrongKind {
            expected: "queries",
            found: raw.manifest.kind.name(),
        });
    }
    let mut seen = HashSet::new();
    raw.records
        .into_iter()
        .map(|r| {
            let marker = r.marker.expect("query records carry a marker");
            if !seen.insert((r.id.clone(), marker)) {
                return Err(StorageError::DuplicateId(format!("{} ({})", r.id, marker.name())));
            }
            Ok(QueryEncoding::new(r.id, marker, r.embeddings))
        })
        .collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, data: &[u8]) -> Result<()> {
    fs::write(path, data).map_err(|source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn manifest_of(dim: usize, count: usize, kind: IndexKind) -> IndexManifest {
    IndexManifest {
        version: VERSION,
        dim,
        record_count: count,
        kind,
    }
}

/// Writes `path` and its spans sidecar.
pub fn write_passage_index(path: &Path, records: &[PassageRecord]) -> Result<IndexManifest> {
    let (bytes, sidecar) = encode_passages(records)?;
    write_file(path, &bytes)?;
    write_file(&sidecar_path(path), sidecar.as_bytes())?;
    Ok(manifest_of(records.first().map_or(0, |r| r.embeddings.dim()), records.len(), IndexKind::Passages))
}

pub fn write_query_index(path: &Path, records: &[QueryEncoding]) -> Result<IndexManifest> {
    write_file(path, &encode_queries(records)?)?;
    Ok(manifest_of(records.first().map_or(0, |r| r.embeddings.dim()), records.len(), IndexKind::Queries))
}

pub fn read_raw(path: &Path) -> Result<RawIndex> {
    decode_raw(&read_file(path)?)
}

/// Reads either kind; passage indexes also load their sidecar.
pub fn read_index(path: &Path) -> Result<(IndexManifest, Index)> {
    let raw = read_raw(path)?;
    let manifest = raw.manifest;
    let index = match manifest.kind {
        IndexKind::Passages => {
            let side = sidecar_path(path);
            let text = match fs::read_to_string(&side) {
                Ok(t) => t,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound && raw.records.is_empty() => String::new(),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    return Err(StorageError::MissingSpans(raw.records[0].id.clone()))
                }
                Err(source) => return Err(StorageError::Io { path: side, source }),
            };
            Index::Passages(attach_spans(raw, &text)?)
        }
        IndexKind::Queries => Index::Queries(
            raw.records
                .into_iter()
                .map(|r| QueryEncoding::new(r.id, r.marker.expect("query records carry a marker"), r.embeddings))
                .collect(),
        ),
    };
    if let Index::Queries(q) = &index {
        let mut seen = HashSet::new();
        for r in q {
            if !seen.insert((r.id.as_str(), r.marker)) {
                return Err(StorageError::DuplicateId(format!("{} ({})", r.id, r.marker.name())));
            }
        }
    }
    Ok((manifest, index))
}

pub fn read_passage_index(path: &Path) -> Result<Vec<PassageRecord>> {
    match read_index(path)? {
        (_, Index::Passages(p)) => Ok(p),
        (m, Index::Queries(_)) => Err(StorageError::WrongKind {
            expected: "passages",
            found: m.kind.name(),
        }),
    }
}

pub fn read_query_index(path: &Path) -> Result<Vec<QueryEncoding>> {
    decode_queries(&read_file(path)?)
}
