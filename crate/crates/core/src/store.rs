//! File-backed store.
//!
//! ```text
//! <root>/records.csv        append-only access log, ingest CSV format
//! <root>/models/<user>.json one fitted model per user
//! <root>/config.json        optional defaults for fit/forecast settings
//! <root>/decisions.json     decisions from the latest forecast run
//! <root>/.lock              advisory lock taken by mutating commands
//! ```
//!
//! Documents are written to a temp file, synced, then renamed into place.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::bands::{BandConfig, BandMode, BandStats};
use crate::ingest::{self, AccessRecord, InputFormat, ParsedRecords};
use crate::period::Granularity;
use crate::policy::{AccessDecision, Thresholds};
use crate::trendfit::TrendModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("store {0} is locked by another process")]
    Locked(PathBuf),
    #[error("no model stored for user {0:?}")]
    NotFound(String),
    #[error("{path}: schema_version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersionMismatch { path: PathBuf, found: u64 },
    #[error("{path}: corrupt file: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("refusing to persist model for {user:?}: {reason}")]
    InvalidModel { user: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A model together with the band it was calibrated for.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub model: TrendModel,
    pub stats: BandStats,
    pub band: BandConfig,
}

/// On-disk model document. Field order is the serialised key order.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    schema_version: u32,
    user_id: String,
    granularity: Granularity,
    origin: NaiveDate,
    n_train: usize,
    k: f64,
    m_offset: f64,
    changepoints: Vec<f64>,
    delta: Vec<f64>,
    gamma: Vec<f64>,
    lambda: f64,
    alpha: f64,
    varsigma: f64,
    mu: f64,
    sigma: f64,
    band_mode: BandMode,
}

/// Optional store-level defaults; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreConfig {
    pub granularity: Option<Granularity>,
    pub changepoints: Option<usize>,
    pub cp_range: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub varsigma: Option<f64>,
    pub band_mode: Option<BandMode>,
    pub horizon: Option<usize>,
    pub thresholds: Option<Thresholds>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// Held for the lifetime of a mutating command.
#[derive(Debug)]
pub struct StoreLock {
    _file: File,
}

impl Store {
    /// Opens a store, creating its directories if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let models = root.join("models");
        fs::create_dir_all(&models).map_err(io_err(&models))?;
        Ok(Self { root })
    }

    /// Opens an existing store without creating anything.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(StoreError::Io {
                source: io::Error::new(io::ErrorKind::NotFound, "store directory not found"),
                path: root,
            });
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records_path(&self) -> PathBuf {
        self.root.join("records.csv")
    }

    pub fn model_path(&self, user_id: &str) -> PathBuf {
        self.root
            .join("models")
            .join(format!("{}.json", encode_user(user_id)))
    }

    /// Takes the exclusive advisory lock, failing fast if another process has it.
    pub fn lock(&self) -> Result<StoreLock, StoreError> {
        let path = self.root.join(".lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        match file.try_lock() {
            Ok(()) => Ok(StoreLock { _file: file }),
            Err(fs::TryLockError::WouldBlock) => Err(StoreError::Locked(self.root.clone())),
            Err(fs::TryLockError::Error(e)) => Err(io_err(&path)(e)),
        }
    }

    /// Appends records to `records.csv`, writing the header on first use.
    pub fn append_records(&self, records: &[AccessRecord]) -> Result<usize, StoreError> {
        if records.is_empty() {
            return Ok(0);
        }
        let path = self.records_path();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let fresh = file.metadata().map_err(io_err(&path))?.len() == 0;
        let mut buf = Vec::new();
        ingest::write_csv(records, &mut buf, fresh).map_err(io_err(&path))?;
        file.write_all(&buf).map_err(io_err(&path))?;
        file.sync_all().map_err(io_err(&path))?;
        Ok(records.len())
    }

    pub fn read_records(&self) -> Result<ParsedRecords, StoreError> {
        let path = self.records_path();
        match fs::read(&path) {
            Ok(bytes) => Ok(ingest::parse_records(&bytes, InputFormat::Csv)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(ParsedRecords::default()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn save_model(
        &self,
        model: &TrendModel,
        stats: &BandStats,
        band: &BandConfig,
    ) -> Result<PathBuf, StoreError> {
        let bytes = encode_model(model, stats, band)?;
        let path = self.model_path(&model.user_id);
        atomic_write(&path, &bytes)?;
        Ok(path)
    }

    pub fn load_model(&self, user_id: &str) -> Result<StoredModel, StoreError> {
        let path = self.model_path(user_id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(user_id.to_string()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        decode_model(&bytes).map_err(|e| match e {
            DecodeError::Version(found) => StoreError::SchemaVersionMismatch { path, found },
            DecodeError::Corrupt(reason) => StoreError::Corrupt { path, reason },
        })
    }

    /// User ids with a stored model, sorted.
    pub fn model_users(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("models");
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut users = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) else {
                continue;
            };
            if let Some(user) = decode_user(stem) {
                users.push(user);
            }
        }
        users.sort();
        Ok(users)
    }

    pub fn load_config(&self) -> Result<StoreConfig, StoreError> {
        let path = self.root.join("config.json");
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
                path,
                reason: e.to_string(),
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(StoreConfig::default()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn save_config(&self, cfg: &StoreConfig) -> Result<(), StoreError> {
        let mut bytes = serde_json::to_vec_pretty(cfg).expect("config serialises");
        bytes.push(b'\n');
        atomic_write(&self.root.join("config.json"), &bytes)
    }

    pub fn save_decisions(&self, decisions: &[AccessDecision]) -> Result<(), StoreError> {
        let mut bytes = serde_json::to_vec_pretty(decisions).map_err(|e| StoreError::Corrupt {
            path: self.root.join("decisions.json"),
            reason: e.to_string(),
        })?;
        bytes.push(b'\n');
        atomic_write(&self.root.join("decisions.json"), &bytes)
    }

    /// Decisions from the latest forecast run; empty if there was none.
    pub fn load_decisions(&self) -> Result<Vec<AccessDecision>, StoreError> {
        let path = self.root.join("decisions.json");
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
                path,
                reason: e.to_string(),
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

/// Serialises a model document. Floats use the shortest representation that
/// parses back to the same value.
pub fn encode_model(
    model: &TrendModel,
    stats: &BandStats,
    band: &BandConfig,
) -> Result<Vec<u8>, StoreError> {
    let invalid = |reason: String| StoreError::InvalidModel {
        user: model.user_id.clone(),
        reason,
    };
    model.check().map_err(invalid)?;
    if ![stats.alpha, stats.mu, stats.sigma, band.varsigma]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(invalid("non-finite band parameter".into()));
    }
    let doc = ModelDoc {
        schema_version: SCHEMA_VERSION,
        user_id: model.user_id.clone(),
        granularity: model.granularity,
        origin: model.origin,
        n_train: model.n_train,
        k: model.k,
        m_offset: model.m_offset,
        changepoints: model.changepoints.clone(),
        delta: model.delta.clone(),
        gamma: model.gamma.clone(),
        lambda: model.lambda,
        alpha: stats.alpha,
        varsigma: band.varsigma,
        mu: stats.mu,
        sigma: stats.sigma,
        band_mode: band.mode,
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("model document serialises");
    bytes.push(b'\n');
    Ok(bytes)
}

enum DecodeError {
    Version(u64),
    Corrupt(String),
}

fn decode_model(bytes: &[u8]) -> Result<StoredModel, DecodeError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| DecodeError::Corrupt(e.to_string()))?;
    match value.get("schema_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => return Err(DecodeError::Version(v)),
        None => return Err(DecodeError::Corrupt("missing schema_version".into())),
    }
    let doc: ModelDoc =
        serde_json::from_value(value).map_err(|e| DecodeError::Corrupt(e.to_string()))?;
    let model = TrendModel {
        user_id: doc.user_id,
        k: doc.k,
        m_offset: doc.m_offset,
        changepoints: doc.changepoints,
        delta: doc.delta,
        gamma: doc.gamma,
        lambda: doc.lambda,
        n_train: doc.n_train,
        granularity: doc.granularity,
        origin: doc.origin,
    };
    model.check().map_err(DecodeError::Corrupt)?;
    Ok(StoredModel {
        model,
        stats: BandStats {
            alpha: doc.alpha,
            mu: doc.mu,
            sigma: doc.sigma,
        },
        band: BandConfig {
            alpha: doc.alpha,
            varsigma: doc.varsigma,
            mode: doc.band_mode,
        },
    })
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("document");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(bytes).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Percent-encodes every byte outside `[A-Za-z0-9]`.
pub fn encode_user(user_id: &str) -> String {
    let mut out = String::with_capacity(user_id.len());
    for b in user_id.bytes() {
        if b.is_ascii_alphanumeric() {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub fn decode_user(encoded: &str) -> Option<String> {
    let bytes = encoded.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = encoded.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn model(user: &str, cps: Vec<f64>) -> StoredModel {
        let delta = cps.iter().map(|s| s * 0.37 - 1.0).collect();
        StoredModel {
            model: TrendModel::from_parts(
                user, 0.1, 33.3, cps, delta, 0.01, 5, Granularity::Annual, d(2014, 1, 1),
            ),
            stats: BandStats { alpha: 0.0, mu: 1.0 / 3.0, sigma: 0.2 },
            band: BandConfig::default(),
        }
    }

    #[test]
    fn records_are_append_only() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.append_records(&[]).unwrap(), 0);
        assert!(!store.records_path().exists());
        let a: Vec<_> = (1..=3)
            .map(|i| AccessRecord::new("a", d(2014, 1, i), i as f64).unwrap())
            .collect();
        assert_eq!(store.append_records(&a).unwrap(), 3);
        let first = fs::read(store.records_path()).unwrap();
        assert_eq!(String::from_utf8_lossy(&first).lines().count(), 4);
        let b = vec![AccessRecord::new("b", d(2015, 1, 1), 0.5).unwrap()];
        store.append_records(&b).unwrap();
        let second = fs::read(store.records_path()).unwrap();
        assert!(second.starts_with(&first));
        let read = store.read_records().unwrap();
        assert_eq!(read.records, [a, b].concat());
    }

    #[test]
    fn model_roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let m = model("alice", vec![1.0, 2.5]);
        let path = store.save_model(&m.model, &m.stats, &m.band).unwrap();
        let first = fs::read(&path).unwrap();
        let loaded = store.load_model("alice").unwrap();
        assert_eq!(loaded, m);
        store.save_model(&loaded.model, &loaded.stats, &loaded.band).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn empty_changepoint_arrays_are_present() {
        let m = model("bob", vec![]);
        let text = String::from_utf8(encode_model(&m.model, &m.stats, &m.band).unwrap()).unwrap();
        assert!(text.contains("\"changepoints\": []"));
        assert!(text.contains("\"gamma\": []"));
        assert!(text.contains("\"band_mode\": \"literal\""));
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(matches!(store.load_model("ghost"), Err(StoreError::NotFound(_))));

        let m = model("carol", vec![2.0]);
        let path = store.save_model(&m.model, &m.stats, &m.band).unwrap();
        let full = fs::read(&path).unwrap();
        fs::write(&path, &full[..full.len() / 2]).unwrap();
        assert!(matches!(store.load_model("carol"), Err(StoreError::Corrupt { .. })));
        assert_eq!(fs::read(&path).unwrap(), &full[..full.len() / 2]);

        let bumped = String::from_utf8(full).unwrap().replace(
            "\"schema_version\": 1",
            "\"schema_version\": 2",
        );
        fs::write(&path, bumped).unwrap();
        assert!(matches!(
            store.load_model("carol"),
            Err(StoreError::SchemaVersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn non_finite_models_are_refused() {
        let mut m = model("nan", vec![]);
        m.stats.mu = f64::NAN;
        assert!(matches!(
            encode_model(&m.model, &m.stats, &m.band),
            Err(StoreError::InvalidModel { .. })
        ));
    }

    #[test]
    fn user_file_names() {
        assert_eq!(encode_user("alice"), "alice");
        assert_eq!(encode_user("a.b/c d"), "a%2Eb%2Fc%20d");
        assert_eq!(encode_user("é"), "%C3%A9");
        for u in ["alice", "a.b/c d", "é", "%41"] {
            assert_eq!(decode_user(&encode_user(u)).as_deref(), Some(u));
        }
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        for u in ["z", "a/b", "m"] {
            let m = model(u, vec![]);
            store.save_model(&m.model, &m.stats, &m.band).unwrap();
        }
        assert_eq!(store.model_users().unwrap(), ["a/b", "m", "z"]);
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let held = store.lock().unwrap();
        assert!(matches!(store.lock(), Err(StoreError::Locked(_))));
        drop(held);
        store.lock().unwrap();
    }

    #[test]
    fn config_file() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.load_config().unwrap(), StoreConfig::default());
        fs::write(dir.path().join("config.json"), r#"{"varsigma": 3.5, "granularity": "half_yearly"}"#)
            .unwrap();
        let cfg = store.load_config().unwrap();
        assert_eq!(cfg.varsigma, Some(3.5));
        assert_eq!(cfg.granularity, Some(Granularity::HalfYearly));
        fs::write(dir.path().join("config.json"), r#"{"sigma": 1}"#).unwrap();
        assert!(matches!(store.load_config(), Err(StoreError::Corrupt { .. })));
    }
}
