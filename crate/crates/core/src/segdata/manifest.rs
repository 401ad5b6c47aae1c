//! Append-only sample manifests.
//!
//! A manifest is newline-delimited JSON: one header line followed by one
//! [`SampleRecord`] per line. A sidecar `<manifest>.idx` holds the committed
//! record count and byte length. Readers only look at the committed prefix, so
//! a scan running next to an active writer sees a consistent snapshot, and a
//! writer reopening after a crash drops any uncommitted tail.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::maps::SegmentInfo;
use super::{DataError, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Provenance {
    Real,
    MaskSyn,
    ImgSyn,
}

impl Provenance {
    pub fn is_synthetic(self) -> bool {
        self != Provenance::Real
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub backend: String,
    pub version: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text2mask_steps: Option<u32>,
    pub mask2img_steps: u32,
    /// Color map the image was conditioned on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning_ref: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub regenerated: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub provenance: Provenance,
    pub source_id: String,
    pub image_ref: String,
    pub mask_ref: String,
    #[serde(default)]
    pub caption: String,
    /// Segment table for panoptic masks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments_info: Option<Vec<SegmentInfo>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_meta: Option<GeneratorMeta>,
}

impl SampleRecord {
    pub fn real(sample_id: impl Into<String>, image_ref: impl Into<String>, mask_ref: impl Into<String>) -> Self {
        let sample_id = sample_id.into();
        SampleRecord {
            source_id: sample_id.clone(),
            sample_id,
            provenance: Provenance::Real,
            image_ref: image_ref.into(),
            mask_ref: mask_ref.into(),
            caption: String::new(),
            segments_info: None,
            generator_meta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_id.is_empty() {
            return Err(DataError::Schema("empty sample_id".into()));
        }
        match self.provenance {
            Provenance::Real => {
                if self.source_id != self.sample_id {
                    return Err(DataError::Schema(format!(
                        "REAL record {:?} must be its own source",
                        self.sample_id
                    )));
                }
                if self.generator_meta.is_some() {
                    return Err(DataError::Schema(format!(
                        "REAL record {:?} carries generator_meta",
                        self.sample_id
                    )));
                }
            }
            _ => {
                if self.generator_meta.is_none() {
                    return Err(DataError::Schema(format!(
                        "synthetic record {:?} lacks generator_meta",
                        self.sample_id
                    )));
                }
                if self.source_id.is_empty() || self.source_id == self.sample_id {
                    return Err(DataError::Schema(format!(
                        "synthetic record {:?} has no source",
                        self.sample_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses and validates one manifest line.
    pub fn from_json_line(line: &str) -> Result<Self> {
        let rec: SampleRecord =
            serde_json::from_str(line).map_err(|e| DataError::Schema(format!("bad record: {e}")))?;
        rec.validate()?;
        Ok(rec)
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub dataset: String,
    pub num_categories: u32,
}

impl ManifestHeader {
    pub fn new(dataset: impl Into<String>, num_categories: u32) -> Self {
        ManifestHeader { schema_version: MANIFEST_SCHEMA_VERSION, dataset: dataset.into(), num_categories }
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let h: ManifestHeader =
            serde_json::from_str(line).map_err(|e| DataError::Schema(format!("bad header: {e}")))?;
        if h.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(DataError::Schema(format!("unsupported schema_version {}", h.schema_version)));
        }
        Ok(h)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
struct IndexSidecar {
    schema_version: u32,
    records: u64,
    bytes: u64,
}

fn index_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".idx");
    PathBuf::from(s)
}

fn read_index(path: &Path) -> Result<Option<IndexSidecar>> {
    match fs::read(index_path(path)) {
        Ok(bytes) => {
            let idx: IndexSidecar = serde_json::from_slice(&bytes)
                .map_err(|e| DataError::Schema(format!("bad index sidecar: {e}")))?;
            if idx.schema_version != MANIFEST_SCHEMA_VERSION {
                return Err(DataError::Schema(format!("unsupported index version {}", idx.schema_version)));
            }
            Ok(Some(idx))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn write_index(path: &Path, idx: IndexSidecar) -> Result<()> {
    let target = index_path(path);
    let mut tmp = target.clone().into_os_string();
    tmp.push(".tmp");
    fs::write(&tmp, serde_json::to_vec(&idx).expect("index serializes"))?;
    fs::rename(&tmp, &target)?;
    Ok(())
}

/// Selects records by provenance and/or source.
#[derive(Clone, Debug, Default)]
pub struct ManifestFilter {
    pub provenance: Option<Provenance>,
    pub source_id: Option<String>,
}

impl ManifestFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn provenance(p: Provenance) -> Self {
        ManifestFilter { provenance: Some(p), source_id: None }
    }

    pub fn matches(&self, rec: &SampleRecord) -> bool {
        self.provenance.is_none_or(|p| rec.provenance == p)
            && self.source_id.as_deref().is_none_or(|s| rec.source_id == s)
    }
}

/// Read handle over the committed prefix of a manifest.
#[derive(Clone, Debug)]
pub struct Manifest {
    path: PathBuf,
    header: ManifestHeader,
    header_len: u64,
    committed: Option<IndexSidecar>,
}

impl Manifest {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let committed = read_index(&path)?;
        let mut reader = BufReader::new(File::open(&path)?);
        let mut line = String::new();
        let header_len = reader.read_line(&mut line)? as u64;
        if !line.ends_with('\n') {
            return Err(DataError::Schema("manifest has no complete header line".into()));
        }
        let header = ManifestHeader::from_json_line(line.trim_end())?;
        if let Some(idx) = committed {
            if idx.bytes < header_len {
                return Err(DataError::Schema("index sidecar shorter than header".into()));
            }
        }
        Ok(Manifest { path, header, header_len, committed })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> &ManifestHeader {
        &self.header
    }

    /// Committed record count as recorded by the index, if present.
    pub fn indexed_len(&self) -> Option<u64> {
        self.committed.map(|i| i.records)
    }

    /// Streams committed records matching `filter` in append order. Without an
    /// index sidecar every complete line counts as committed.
    pub fn scan(&self, filter: ManifestFilter) -> Result<impl Iterator<Item = Result<SampleRecord>>> {
        let mut file = File::open(&self.path)?;
        let limit = match self.committed {
            Some(idx) => idx.bytes,
            None => committed_prefix_len(&self.path)?,
        };
        file.seek(SeekFrom::Start(self.header_len))?;
        let reader = BufReader::new(file.take(limit.saturating_sub(self.header_len)));
        let expected = self.committed.map(|i| i.records);
        let mut seen = 0u64;
        let mut done = false;
        let mut lines = reader.split(b'\n');
        Ok(std::iter::from_fn(move || loop {
            if done {
                return None;
            }
            let next = lines.next();
            let raw = match next {
                None => {
                    done = true;
                    return match expected {
                        Some(n) if n != seen => Some(Err(DataError::Schema(format!(
                            "index declares {n} records, manifest holds {seen}"
                        )))),
                        _ => None,
                    };
                }
                Some(Err(e)) => {
                    done = true;
                    return Some(Err(e.into()));
                }
                Some(Ok(raw)) => raw,
            };
            if raw.is_empty() {
                continue;
            }
            seen += 1;
            let parsed = std::str::from_utf8(&raw)
                .map_err(|e| DataError::Schema(format!("non-utf8 record: {e}")))
                .and_then(SampleRecord::from_json_line);
            match parsed {
                Ok(rec) if filter.matches(&rec) => return Some(Ok(rec)),
                Ok(_) => continue,
                Err(e) => {
                    done = true;
                    return Some(Err(e));
                }
            }
        }))
    }

    pub fn records(&self) -> Result<Vec<SampleRecord>> {
        self.scan(ManifestFilter::all())?.collect()
    }

    /// Appends one record and commits it.
    pub fn append(path: impl AsRef<Path>, record: SampleRecord) -> Result<()> {
        let mut w = ManifestWriter::open(path)?;
        w.append(record)?;
        w.commit()
    }
}

/// The single serialized appender for a manifest.
pub struct ManifestWriter {
    path: PathBuf,
    header: ManifestHeader,
    out: BufWriter<File>,
    ids: HashSet<String>,
    committed: IndexSidecar,
    pending_records: u64,
    pending_bytes: u64,
}

impl ManifestWriter {
    /// Creates a new manifest; fails if one already exists at `path`.
    pub fn create(path: impl AsRef<Path>, header: ManifestHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if header.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(DataError::Schema(format!("unsupported schema_version {}", header.schema_version)));
        }
        let mut file = OpenOptions::new().write(true).create_new(true).open(&path)?;
        let mut line = serde_json::to_vec(&header).expect("header serializes");
        line.push(b'\n');
        file.write_all(&line)?;
        let committed =
            IndexSidecar { schema_version: MANIFEST_SCHEMA_VERSION, records: 0, bytes: line.len() as u64 };
        write_index(&path, committed)?;
        Ok(ManifestWriter {
            path,
            header,
            out: BufWriter::new(file),
            ids: HashSet::new(),
            committed,
            pending_records: 0,
            pending_bytes: 0,
        })
    }

    /// Reopens an existing manifest for appending, discarding any uncommitted
    /// tail left by an interrupted writer.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let reader = Manifest::open(&path)?;
        let mut ids = HashSet::new();
        let mut records = 0u64;
        for rec in reader.scan(ManifestFilter::all())? {
            ids.insert(rec?.sample_id);
            records += 1;
        }
        let path = reader.path.clone();
        let bytes = match reader.committed {
            Some(idx) => idx.bytes,
            None => committed_prefix_len(&path)?,
        };
        let file = OpenOptions::new().write(true).open(&path)?;
        file.set_len(bytes)?;
        let mut out = BufWriter::new(file);
        out.seek(SeekFrom::Start(bytes))?;
        let committed = IndexSidecar { schema_version: MANIFEST_SCHEMA_VERSION, records, bytes };
        write_index(&path, committed)?;
        Ok(ManifestWriter {
            path,
            header: reader.header,
            out,
            ids,
            committed,
            pending_records: 0,
            pending_bytes: 0,
        })
    }

    /// Opens `path` if present (the header must match), else creates it.
    pub fn open_or_create(path: impl AsRef<Path>, header: ManifestHeader) -> Result<Self> {
        if path.as_ref().exists() {
            let w = Self::open(path)?;
            if w.header != header {
                return Err(DataError::Schema(format!(
                    "existing manifest header {:?} does not match {:?}",
                    w.header, header
                )));
            }
            Ok(w)
        } else {
            Self::create(path, header)
        }
    }

    pub fn header(&self) -> &ManifestHeader {
        &self.header
    }

    pub fn contains(&self, sample_id: &str) -> bool {
        self.ids.contains(sample_id)
    }

    /// Committed plus pending record count.
    pub fn len(&self) -> u64 {
        self.committed.records + self.pending_records
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Buffers a record; it becomes visible to readers on [`commit`](Self::commit).
    pub fn append(&mut self, record: SampleRecord) -> Result<()> {
        record.validate()?;
        if self.ids.contains(&record.sample_id) {
            return Err(DataError::DuplicateId(record.sample_id));
        }
        let mut line = serde_json::to_vec(&record).expect("record serializes");
        line.push(b'\n');
        self.out.write_all(&line)?;
        self.pending_bytes += line.len() as u64;
        self.pending_records += 1;
        self.ids.insert(record.sample_id);
        Ok(())
    }

    pub fn commit(&mut self) -> Result<()> {
        if self.pending_records == 0 {
            return Ok(());
        }
        self.out.flush()?;
        let next = IndexSidecar {
            schema_version: MANIFEST_SCHEMA_VERSION,
            records: self.committed.records + self.pending_records,
            bytes: self.committed.bytes + self.pending_bytes,
        };
        write_index(&self.path, next)?;
        self.committed = next;
        self.pending_records = 0;
        self.pending_bytes = 0;
        Ok(())
    }
}

impl Drop for ManifestWriter {
    fn drop(&mut self) {
        if let Err(e) = self.commit() {
            tracing::warn!(path = %self.path.display(), error = %e, "manifest commit on drop failed");
        }
    }
}

/// Byte length of the file up to and including its last newline.
fn committed_prefix_len(path: &Path) -> Result<u64> {
    const BLOCK: u64 = 64 * 1024;
    let mut file = File::open(path)?;
    let mut end = file.metadata()?.len();
    let mut buf = vec![0u8; BLOCK as usize];
    while end > 0 {
        let start = end.saturating_sub(BLOCK);
        let chunk = &mut buf[..(end - start) as usize];
        file.seek(SeekFrom::Start(start))?;
        file.read_exact(chunk)?;
        if let Some(i) = chunk.iter().rposition(|&b| b == b'\n') {
            return Ok(start + i as u64 + 1);
        }
        end = start;
    }
    Ok(0)
}
