//! Keyed store for intermediate task results.
//!
//! Values produced by tasks flagged `output_type` never travel through a
//! prompt. The executor stores them here and hands the planner an opaque
//! `datapipe:<uuid>` reference instead; arguments carrying such references
//! are swapped back for the payload right before a task body runs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock, RwLock};

use chrono::{DateTime, Utc};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::value::{Argument, Payload};

pub const REFERENCE_PREFIX: &str = "datapipe:";

const KEY_PATTERN: &str =
    "datapipe:[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}";

/// Unanchored reference pattern, for scanning free text.
pub fn reference_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(KEY_PATTERN).expect("static pattern"))
}

fn anchored_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!("^{KEY_PATTERN}$")).expect("static pattern"))
}

/// True when `s` is exactly one well-formed reference.
pub fn is_reference(s: &str) -> bool {
    anchored_regex().is_match(s)
}

pub fn parse_reference(s: &str) -> Result<Uuid, DatapipeError> {
    if !is_reference(s) {
        return Err(DatapipeError::MalformedKey(s.to_string()));
    }
    Uuid::parse_str(&s[REFERENCE_PREFIX.len()..])
        .map_err(|_| DatapipeError::MalformedKey(s.to_string()))
}

pub fn reference_for(key: Uuid) -> String {
    format!("{REFERENCE_PREFIX}{}", key.hyphenated())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatapipeEntry {
    pub key: Uuid,
    pub payload: Payload,
    pub producer: String,
    pub created_at: DateTime<Utc>,
}

impl DatapipeEntry {
    pub fn reference(&self) -> String {
        reference_for(self.key)
    }
}

#[derive(Debug, Error)]
pub enum DatapipeError {
    #[error("malformed data pipe key `{0}`")]
    MalformedKey(String),
    #[error("unknown data pipe key `{0}`")]
    UnknownKey(String),
    #[error("data pipe storage failure: {0}")]
    StorageFailure(String),
}

#[derive(Debug, Error)]
#[error("argument {position}: {source}")]
pub struct ResolveError {
    pub position: usize,
    #[source]
    pub source: DatapipeError,
}

enum KeySource {
    Random,
    Seeded(Box<ChaCha8Rng>),
}

impl KeySource {
    fn next(&mut self) -> Uuid {
        match self {
            KeySource::Random => Uuid::new_v4(),
            KeySource::Seeded(rng) => {
                let mut bytes = [0u8; 16];
                rng.fill_bytes(&mut bytes);
                uuid::Builder::from_random_bytes(bytes).into_uuid()
            }
        }
    }
}

pub struct DataPipe {
    entries: RwLock<HashMap<Uuid, DatapipeEntry>>,
    keys: Mutex<KeySource>,
    persist_dir: Option<PathBuf>,
}

impl Default for DataPipe {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for DataPipe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DataPipe")
            .field("entries", &self.len())
            .field("persist_dir", &self.persist_dir)
            .finish()
    }
}

impl DataPipe {
    /// In-memory store with random v4 keys.
    pub fn new() -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            keys: Mutex::new(KeySource::Random),
            persist_dir: None,
        }
    }

    /// Keys drawn from a seeded generator, for bit-exact replays.
    pub fn seeded(seed: u64) -> Self {
        Self {
            keys: Mutex::new(KeySource::Seeded(Box::new(ChaCha8Rng::seed_from_u64(seed)))),
            ..Self::new()
        }
    }

    /// Mirrors every entry to `<dir>/<uuid>.json` and reads misses back
    /// from there.
    pub fn with_persistence(mut self, dir: impl Into<PathBuf>) -> Result<Self, DatapipeError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| DatapipeError::StorageFailure(e.to_string()))?;
        self.persist_dir = Some(dir);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("datapipe lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn store(&self, payload: Payload, producer: &str) -> Result<String, DatapipeError> {
        let mut entries = self.entries.write().expect("datapipe lock");
        let key = {
            let mut keys = self.keys.lock().expect("key source lock");
            loop {
                let key = keys.next();
                if !entries.contains_key(&key) && !self.persisted_path(key).is_some_and(|p| p.exists())
                {
                    break key;
                }
            }
        };
        let entry = DatapipeEntry {
            key,
            payload,
            producer: producer.to_string(),
            created_at: Utc::now(),
        };
        if let Some(path) = self.persisted_path(key) {
            write_entry(&path, &entry)?;
        }
        let reference = entry.reference();
        entries.insert(key, entry);
        Ok(reference)
    }

    pub fn entry(&self, reference: &str) -> Result<DatapipeEntry, DatapipeError> {
        let key = parse_reference(reference)?;
        if let Some(entry) = self.entries.read().expect("datapipe lock").get(&key) {
            return Ok(entry.clone());
        }
        match self.persisted_path(key) {
            Some(path) if path.exists() => {
                let entry = read_entry(&path)?;
                self.entries
                    .write()
                    .expect("datapipe lock")
                    .insert(key, entry.clone());
                Ok(entry)
            }
            _ => Err(DatapipeError::UnknownKey(reference.to_string())),
        }
    }

    pub fn retrieve(&self, reference: &str) -> Result<Payload, DatapipeError> {
        self.entry(reference).map(|e| e.payload)
    }

    /// Replaces every argument that is exactly a reference with the stored
    /// payload. Everything else passes through untouched and in order.
    pub fn resolve_arguments(&self, args: &[Argument]) -> Result<Vec<Argument>, ResolveError> {
        args.iter()
            .enumerate()
            .map(|(position, arg)| match arg {
                Argument::Text(s) if is_reference(s) => self
                    .retrieve(s)
                    .map(Argument::Payload)
                    .map_err(|source| ResolveError { position, source }),
                other => Ok(other.clone()),
            })
            .collect()
    }

    fn persisted_path(&self, key: Uuid) -> Option<PathBuf> {
        self.persist_dir
            .as_ref()
            .map(|dir| dir.join(format!("{}.json", key.hyphenated())))
    }
}

fn write_entry(path: &Path, entry: &DatapipeEntry) -> Result<(), DatapipeError> {
    let text =
        serde_json::to_string(entry).map_err(|e| DatapipeError::StorageFailure(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| DatapipeError::StorageFailure(e.to_string()))
}

fn read_entry(path: &Path) -> Result<DatapipeEntry, DatapipeError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| DatapipeError::StorageFailure(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| DatapipeError::StorageFailure(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn store_returns_wellformed_reference() {
        let pipe = DataPipe::new();
        let r = pipe
            .store(json!({"ppg": [1, 2, 3]}).into(), "affect_ppg_get")
            .unwrap();
        assert!(is_reference(&r), "{r}");
        assert_eq!(pipe.entry(&r).unwrap().producer, "affect_ppg_get");
    }

    #[test]
    fn identical_payloads_get_distinct_keys() {
        let pipe = DataPipe::new();
        let a = pipe.store(json!(1).into(), "t").unwrap();
        let b = pipe.store(json!(1).into(), "t").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn malformed_and_unknown_are_distinct() {
        let pipe = DataPipe::new();
        assert!(matches!(
            pipe.retrieve("datapipe:not-a-uuid"),
            Err(DatapipeError::MalformedKey(_))
        ));
        assert!(matches!(
            pipe.retrieve("datapipe:6D808840-1FBE-45A5-859A-ABFBFEE93D0E"),
            Err(DatapipeError::MalformedKey(_))
        ));
        assert!(matches!(
            pipe.retrieve("datapipe:6d808840-1fbe-45a5-859a-abfbfee93d0e"),
            Err(DatapipeError::UnknownKey(_))
        ));
    }

    #[test]
    fn resolve_leaves_plain_arguments_alone() {
        let pipe = DataPipe::new();
        let args: Vec<Argument> = ["par_5", "2020-08-01", "", "datapipe:not-a-uuid"]
            .into_iter()
            .map(|s| Argument::Text(s.into()))
            .collect();
        assert_eq!(pipe.resolve_arguments(&args).unwrap(), args);
    }

    #[test]
    fn resolve_substitutes_in_place() {
        let pipe = DataPipe::new();
        let features = json!({"rmssd": 15.5, "sdnn": 7.4});
        let r = pipe.store(features.clone().into(), "affect_ppg_analysis").unwrap();
        let out = pipe
            .resolve_arguments(&[Argument::Text(r), Argument::Text("average".into())])
            .unwrap();
        assert_eq!(
            out,
            vec![
                Argument::Payload(features.into()),
                Argument::Text("average".into())
            ]
        );
    }

    #[test]
    fn resolve_reports_position_of_unknown_key() {
        let pipe = DataPipe::new();
        let err = pipe
            .resolve_arguments(&[
                Argument::Text("x".into()),
                Argument::Text("datapipe:6d808840-1fbe-45a5-859a-abfbfee93d0e".into()),
            ])
            .unwrap_err();
        assert_eq!(err.position, 1);
        assert!(matches!(err.source, DatapipeError::UnknownKey(_)));
    }

    #[test]
    fn seeded_keys_repeat() {
        let a = DataPipe::seeded(7);
        let b = DataPipe::seeded(7);
        for _ in 0..5 {
            assert_eq!(
                a.store(json!(0).into(), "t").unwrap(),
                b.store(json!(0).into(), "t").unwrap()
            );
        }
    }

    #[test]
    fn persisted_entries_survive_a_new_store() {
        let dir = tempfile::tempdir().unwrap();
        let r = DataPipe::new()
            .with_persistence(dir.path())
            .unwrap()
            .store(json!({"a": [1, 2]}).into(), "t")
            .unwrap();
        let fresh = DataPipe::new().with_persistence(dir.path()).unwrap();
        assert_eq!(fresh.retrieve(&r).unwrap(), Payload::Value(json!({"a": [1, 2]})));
    }

    fn arb_json() -> impl Strategy<Value = serde_json::Value> {
        let leaf = prop_oneof![
            Just(serde_json::Value::Null),
            any::<bool>().prop_map(serde_json::Value::from),
            any::<i64>().prop_map(serde_json::Value::from),
            "[a-z ]{0,12}".prop_map(serde_json::Value::from),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(serde_json::Value::from),
                prop::collection::btree_map("[a-z]{1,6}", inner, 0..4)
                    .prop_map(|m| serde_json::Value::Object(m.into_iter().collect())),
            ]
        })
    }

    proptest! {
        #[test]
        fn round_trip(v in arb_json()) {
            let pipe = DataPipe::new();
            let r = pipe.store(v.clone().into(), "t").unwrap();
            prop_assert_eq!(pipe.retrieve(&r).unwrap(), Payload::Value(v));
        }

        #[test]
        fn resolve_is_identity_without_references(args in prop::collection::vec("[a-z0-9_:-]{0,16}", 0..6)) {
            let pipe = DataPipe::new();
            let args: Vec<Argument> = args.into_iter().map(Argument::Text).collect();
            let once = pipe.resolve_arguments(&args).unwrap();
            prop_assert_eq!(&once, &args);
            prop_assert_eq!(pipe.resolve_arguments(&once).unwrap(), once);
        }
    }
}
