//! Health and web tasks: patient record retrieval and statistics, the
//! PPG to HRV to stress chain, and search/extraction over a local fixture web.

pub mod analysis;
pub mod hrv;
pub mod records;
pub mod stress;
pub mod web;

use std::path::PathBuf;
use std::sync::Arc;

use cha_core::task::{BodyCatalog, RegistryError, TaskBody, TaskError, TaskOutput, TaskRegistry, TaskSpec};
use cha_core::value::Argument;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::analysis::Mode;
use crate::records::{ActivityRecord, Dataset, PpgSample, SleepRecord, ACTIVITY_FILE, PPG_FILE, SLEEP_FILE};
use crate::web::{Fetcher, SearchClient};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HealthError {
    #[error("bad date `{0}`, expected %Y-%m-%d")]
    BadDate(String),
    #[error("no data for patient `{0}`")]
    UnknownPatient(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("no records to analyze")]
    EmptyInput,
    #[error("unknown mode `{0}`, use average, sum or trend")]
    UnknownMode(String),
    #[error("signal covers {seconds:.1} s, at least 10 s are needed")]
    TooShort { seconds: f64 },
    #[error("no heart beats found in the signal")]
    NoPeaks,
    #[error("feature `{0}` is undefined")]
    MissingFeature(String),
    #[error("no results for `{0}`")]
    NoResults(String),
    #[error("search client failed: {0}")]
    ClientError(String),
    #[error("could not fetch {0}")]
    FetchFailure(String),
    #[error("{0} is not an HTML document")]
    NotHtml(String),
}

impl HealthError {
    pub fn kind(&self) -> &'static str {
        match self {
            HealthError::BadDate(_) => "BadDate",
            HealthError::UnknownPatient(_) => "UnknownPatient",
            HealthError::Data(_) => "DataError",
            HealthError::InvalidInput(_) => "InvalidInput",
            HealthError::EmptyInput => "EmptyInput",
            HealthError::UnknownMode(_) => "UnknownMode",
            HealthError::TooShort { .. } => "TooShort",
            HealthError::NoPeaks => "NoPeaks",
            HealthError::MissingFeature(_) => "MissingFeature",
            HealthError::NoResults(_) => "NoResults",
            HealthError::ClientError(_) => "ClientError",
            HealthError::FetchFailure(_) => "FetchFailure",
            HealthError::NotHtml(_) => "NotHtml",
        }
    }
}

impl From<HealthError> for TaskError {
    fn from(e: HealthError) -> Self {
        TaskError::new(e.kind(), e.to_string())
    }
}

fn default_extract_limit() -> usize {
    web::DEFAULT_EXTRACT_LIMIT
}

/// Where the task bodies find their fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthConfig {
    pub data_dir: PathBuf,
    pub www_dir: PathBuf,
    pub search_map: PathBuf,
    #[serde(default = "default_extract_limit")]
    pub extract_limit: usize,
}

impl HealthConfig {
    /// Standard layout under a checkout root: `data/`, `fixtures/www/`,
    /// `fixtures/search.map`.
    pub fn under(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        Self {
            data_dir: root.join("data"),
            www_dir: root.join("fixtures").join("www"),
            search_map: root.join("fixtures").join("search.map"),
            extract_limit: web::DEFAULT_EXTRACT_LIMIT,
        }
    }

    /// The fixture tree shipped with this workspace.
    pub fn bundled() -> Self {
        Self::under(workspace_root())
    }
}

/// Root of the source checkout this crate was built from.
pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

const PATIENT_INPUT: &str = "user ID in string. It can be referred to as user, patient, individual, etc. Start with 'par_' followed by a number (e.g., 'par_1').";

fn date_inputs(what: &str) -> [String; 2] {
    [
        format!("start date of the {what} data in a string with the following format: `%Y-%m-%d`"),
        format!(
            "end date of the {what} data in a string with the following format: `%Y-%m-%d`. If there is no end date, the value should be an empty string (i.e., '')"
        ),
    ]
}

fn spec(
    name: &str,
    chat_name: &str,
    description: &str,
    dependencies: &[&str],
    inputs: Vec<String>,
    outputs: Vec<String>,
    output_type: bool,
) -> TaskSpec {
    TaskSpec {
        name: name.into(),
        chat_name: chat_name.into(),
        description: description.into(),
        dependencies: dependencies.iter().map(|d| d.to_string()).collect(),
        inputs,
        outputs,
        output_type,
    }
}

fn retrieval_inputs(what: &str) -> Vec<String> {
    let [start, end] = date_inputs(what);
    vec![PATIENT_INPUT.into(), start, end]
}

pub fn sleep_get_spec() -> TaskSpec {
    spec(
        "affect_sleep_get",
        "AffectSleepGet",
        "Returns the sleep data for a specific patient over a date or a period (if two dates are provided). This will return the daily sleep records and store them in the Data Pipe.",
        &[],
        retrieval_inputs("sleep"),
        vec!["returns an array of JSON objects which contains the following keys:\n**date**: day in `%Y-%m-%d` format\n**total_sleep_min**: total minutes asleep.\n**rem_min**: minutes of REM sleep.\n**deep_min**: minutes of deep sleep.\n**light_min**: minutes of light sleep.\n**efficiency**: fraction of time in bed spent asleep.".into()],
        true,
    )
}

pub fn activity_get_spec() -> TaskSpec {
    spec(
        "affect_activity_get",
        "AffectActivityGet",
        "Returns the physical activity data for a specific patient over a date or a period (if two dates are provided). This will return the daily activity records and store them in the Data Pipe.",
        &[],
        retrieval_inputs("activity"),
        vec!["returns an array of JSON objects which contains the following keys:\n**date**: day in `%Y-%m-%d` format\n**steps**: number of steps taken that day.\n**active_min**: minutes of moderate or vigorous activity.".into()],
        true,
    )
}

pub fn analysis_spec() -> TaskSpec {
    spec(
        "affect_analysis",
        "AffectAnalysis",
        "Computes statistics over sleep or activity records. Use it after retrieving the records with affect_sleep_get or affect_activity_get.",
        &[],
        vec![
            "the records to analyze, usually the Data Pipe key returned by a retrieval tool.".into(),
            "the analysis mode in string: 'average', 'sum' or 'trend'.".into(),
        ],
        vec!["A JSON object with the mode, the number of records and one entry per numeric field. For trend each field holds the slope per day and its direction (increasing, decreasing or flat).".into()],
        false,
    )
}

pub fn ppg_get_spec() -> TaskSpec {
    let inputs = vec![
        PATIENT_INPUT.into(),
        "start date of the sleep data in a string with the following format: `%Y-%m-%d.`".into(),
        "end date of the sleep data in a string with the following format: `%Y-%m-%d.` If there is no end date, the value should be an empty string (i.e., '')".into(),
    ];
    spec(
        "affect_ppg_get",
        "AffectPpgGet",
        "Returns the ppg data for a specific patient over a date or a period (if two dates are provided). This will return the detailed raw data and store it in the Data Pipe.",
        &[],
        inputs,
        vec!["returns an array of JSON objects which contains the following keys:\n**date (in milliseconds)**: epoch format\n**ppg**: is the ppg value.\n**hr (in beats per minute)**: is the heart rate of the patient.".into()],
        true,
    )
}

pub fn ppg_analysis_spec() -> TaskSpec {
    spec(
        "affect_ppg_analysis",
        "AffectPpgAnalysis",
        "Analyzes raw ppg data and computes heart rate variability (HRV) parameters. The result is stored in the Data Pipe.",
        &["affect_ppg_get"],
        vec!["the ppg data, which is the Data Pipe key returned by affect_ppg_get.".into()],
        vec!["returns a JSON object which contains the following keys:\n**mean_hr**: mean heart rate in beats per minute.\n**sdnn**: standard deviation of NN intervals in milliseconds.\n**rmssd**: root mean square of successive differences in milliseconds.\n**pnn50**: fraction of successive differences above 50 ms.\n**mean_nn**: mean NN interval in milliseconds.\n**lf**: low frequency power.\n**hf**: high frequency power.\n**lf_hf**: ratio of low to high frequency power.".into()],
        true,
    )
}

pub fn stress_analysis_spec() -> TaskSpec {
    spec(
        "affect_stress_analysis",
        "AffectStressAnalysis",
        "Estimates the stress level of a patient from heart rate variability parameters.",
        &["affect_ppg_analysis"],
        vec!["the HRV parameters, which is the Data Pipe key returned by affect_ppg_analysis.".into()],
        vec!["returns a JSON object which contains the following keys:\n**level**: stress level from 0 (very low) to 4 (very high).\n**label**: the level in words.\n**rationale**: the feature that drove the estimate.".into()],
        false,
    )
}

pub fn google_search_spec() -> TaskSpec {
    spec(
        "google_search",
        "GoogleSearch",
        "Uses google to search the internet for the requested query and returns the url of the top website.",
        &[],
        vec!["It should be a search query.".into()],
        vec!["It returns a json object containing key: **url**. For example: {'url': 'http://google.com'}".into()],
        false,
    )
}

pub fn extract_text_spec() -> TaskSpec {
    spec(
        "extract_text",
        "ExtractText",
        "Extract all the text on the current webpage",
        &[],
        vec!["url to extract the text from. It requires links which is gathered from other tools. Never provide urls on your own.".into()],
        vec!["An string containing the text of the scraped webpage.".into()],
        false,
    )
}

/// Every task this crate provides, in registration order.
pub fn all_specs() -> Vec<TaskSpec> {
    vec![
        sleep_get_spec(),
        activity_get_spec(),
        analysis_spec(),
        ppg_get_spec(),
        ppg_analysis_spec(),
        stress_analysis_spec(),
        google_search_spec(),
        extract_text_spec(),
    ]
}

fn text_arg<'a>(args: &'a [Argument], i: usize, what: &str) -> Result<&'a str, TaskError> {
    args.get(i)
        .and_then(Argument::as_text)
        .ok_or_else(|| TaskError::invalid_input(format!("{what} must be a string")))
}

fn value_arg(args: &[Argument], i: usize, what: &str) -> Result<Value, TaskError> {
    args.get(i)
        .and_then(Argument::to_value)
        .ok_or_else(|| TaskError::invalid_input(format!("{what} must be structured data")))
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("record types serialize")
}

fn retrieval<T>(dataset: Dataset, signal: &'static str, require_rows: bool) -> Arc<dyn TaskBody>
where
    T: serde::de::DeserializeOwned + Serialize + records::Dated + 'static,
{
    Arc::new(move |args: &[Argument]| {
        let patient = text_arg(args, 0, "patient id")?;
        let start = text_arg(args, 1, "start date")?;
        let end = text_arg(args, 2, "end date")?;
        let rows: Vec<T> = dataset.range(patient, signal, start, end)?;
        if require_rows && rows.is_empty() {
            return Err(HealthError::EmptyInput.into());
        }
        Ok(TaskOutput::new(Value::Array(rows.iter().map(to_json).collect())))
    })
}

fn analysis_body() -> Arc<dyn TaskBody> {
    Arc::new(|args: &[Argument]| {
        let records = value_arg(args, 0, "records")?;
        let mode = Mode::parse(text_arg(args, 1, "mode")?)?;
        Ok(TaskOutput::new(analysis::analyze(&records, mode)?))
    })
}

fn ppg_analysis_body() -> Arc<dyn TaskBody> {
    Arc::new(|args: &[Argument]| {
        let value = value_arg(args, 0, "ppg data")?;
        let samples: Vec<PpgSample> = serde_json::from_value(value)
            .map_err(|e| TaskError::invalid_input(format!("ppg data: {e}")))?;
        let features = features_from_samples(&samples)?;
        Ok(TaskOutput::new(to_json(&features)))
    })
}

/// HRV features for a sample series. Samples are sorted by time first.
pub fn features_from_samples(samples: &[PpgSample]) -> Result<hrv::HrvFeatures, HealthError> {
    let mut samples = samples.to_vec();
    samples.sort_by_key(|s| s.date);
    let times: Vec<i64> = samples.iter().map(|s| s.date).collect();
    let fs = hrv::sampling_rate(&times).ok_or_else(|| {
        if samples.len() < 2 {
            HealthError::TooShort { seconds: 0.0 }
        } else {
            HealthError::InvalidInput("ppg timestamps must be strictly increasing".into())
        }
    })?;
    let signal: Vec<f64> = samples.iter().map(|s| s.ppg).collect();
    hrv::analyze_ppg(&signal, fs)
}

fn stress_body() -> Arc<dyn TaskBody> {
    Arc::new(|args: &[Argument]| {
        let value = value_arg(args, 0, "HRV parameters")?;
        let features: hrv::HrvFeatures = serde_json::from_value(value)
            .map_err(|e| TaskError::invalid_input(format!("HRV parameters: {e}")))?;
        let estimate = stress::classify(&features)?;
        Ok(TaskOutput::new(to_json(&estimate)))
    })
}

fn search_body(client: Arc<dyn SearchClient>) -> Arc<dyn TaskBody> {
    Arc::new(move |args: &[Argument]| {
        let query = text_arg(args, 0, "query")?;
        if query.trim().is_empty() {
            return Err(TaskError::invalid_input("query is empty"));
        }
        let url = client.top_url(query)?;
        Ok(TaskOutput::new(serde_json::json!({ "url": url })))
    })
}

fn extract_body(fetcher: Arc<dyn Fetcher>, limit: usize) -> Arc<dyn TaskBody> {
    Arc::new(move |args: &[Argument]| {
        let url = text_arg(args, 0, "url")?;
        if url.trim().is_empty() {
            return Err(TaskError::invalid_input("url is empty"));
        }
        let html = fetcher.fetch(url.trim())?;
        Ok(TaskOutput::new(Value::String(web::extract_text(&html, limit))))
    })
}

/// Bodies for every task, keyed by task name, backed by offline fixtures.
pub fn catalog(config: &HealthConfig) -> Result<BodyCatalog, HealthError> {
    let search = web::StubSearch::load(&config.search_map)?;
    let fetcher = web::FixtureFetcher::new(&config.www_dir);
    Ok(catalog_with(config, Arc::new(search), Arc::new(fetcher)))
}

/// Like [`catalog`] with caller-provided web clients.
pub fn catalog_with(
    config: &HealthConfig,
    search: Arc<dyn SearchClient>,
    fetcher: Arc<dyn Fetcher>,
) -> BodyCatalog {
    let dataset = Dataset::new(&config.data_dir);
    let mut catalog = BodyCatalog::new();
    catalog.insert(
        "affect_sleep_get".into(),
        retrieval::<SleepRecord>(dataset.clone(), SLEEP_FILE, false),
    );
    catalog.insert(
        "affect_activity_get".into(),
        retrieval::<ActivityRecord>(dataset.clone(), ACTIVITY_FILE, false),
    );
    catalog.insert("affect_analysis".into(), analysis_body());
    catalog.insert(
        "affect_ppg_get".into(),
        retrieval::<PpgSample>(dataset, PPG_FILE, true),
    );
    catalog.insert("affect_ppg_analysis".into(), ppg_analysis_body());
    catalog.insert("affect_stress_analysis".into(), stress_body());
    catalog.insert("google_search".into(), search_body(search));
    catalog.insert("extract_text".into(), extract_body(fetcher, config.extract_limit));
    catalog
}

/// Registry holding every task in [`all_specs`].
pub fn registry_from(catalog: &BodyCatalog) -> Result<TaskRegistry, RegistryError> {
    let mut registry = TaskRegistry::new();
    for spec in all_specs() {
        let body = catalog
            .get(&spec.name)
            .cloned()
            .ok_or_else(|| RegistryError::UnknownTask(spec.name.clone()))?;
        registry.register(spec, body)?;
    }
    registry.check_dependencies()?;
    Ok(registry)
}

pub const SEARCH_TASKS: [&str; 2] = ["google_search", "extract_text"];
pub const PPG_TASKS: [&str; 3] = ["affect_ppg_get", "affect_ppg_analysis", "affect_stress_analysis"];
pub const RECORD_TASKS: [&str; 3] = ["affect_sleep_get", "affect_activity_get", "affect_analysis"];
