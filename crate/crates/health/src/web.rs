//! Search and page extraction. Offline mode reads a query map and a
//! directory of pages named after a hash of their URL.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use scraper::{Html, Node, Selector};
use sha2::{Digest, Sha256};

use crate::HealthError;

pub const DEFAULT_EXTRACT_LIMIT: usize = 8000;

pub trait SearchClient: Send + Sync {
    /// URL of the top result.
    fn top_url(&self, query: &str) -> Result<String, HealthError>;
}

pub trait Fetcher: Send + Sync {
    /// Raw HTML of the page at `url`.
    fn fetch(&self, url: &str) -> Result<String, HealthError>;
}

fn normalize_query(q: &str) -> String {
    q.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Fixed query to URL table, one `query<TAB>url` pair per line.
#[derive(Debug, Clone, Default)]
pub struct StubSearch {
    map: HashMap<String, String>,
}

impl StubSearch {
    pub fn parse(text: &str) -> Result<Self, HealthError> {
        let mut map = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (query, url) = line.split_once('\t').ok_or_else(|| {
                HealthError::Data(format!("search map line {}: expected query<TAB>url", n + 1))
            })?;
            map.insert(normalize_query(query), url.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn load(path: &Path) -> Result<Self, HealthError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HealthError::Data(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, query: &str, url: &str) {
        self.map.insert(normalize_query(query), url.to_string());
    }
}

impl SearchClient for StubSearch {
    fn top_url(&self, query: &str) -> Result<String, HealthError> {
        self.map
            .get(&normalize_query(query))
            .cloned()
            .ok_or_else(|| HealthError::NoResults(query.to_string()))
    }
}

/// Search over HTTP. The endpoint receives `?q=<query>` and answers with a
/// JSON object holding a `url` field.
pub struct HttpSearch {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpSearch {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            agent,
        }
    }
}

impl SearchClient for HttpSearch {
    fn top_url(&self, query: &str) -> Result<String, HealthError> {
        let body: serde_json::Value = self
            .agent
            .get(&self.endpoint)
            .query("q", query)
            .call()
            .map_err(|e| HealthError::ClientError(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| HealthError::ClientError(e.to_string()))?;
        body.get("url")
            .and_then(|u| u.as_str())
            .map(str::to_string)
            .ok_or_else(|| HealthError::NoResults(query.to_string()))
    }
}

/// File stem used for a URL in the fixture directory.
pub fn url_key(url: &str) -> String {
    let digest = Sha256::digest(url.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads pages from `<dir>/<url_key(url)>.<ext>`.
#[derive(Debug, Clone)]
pub struct FixtureFetcher {
    dir: PathBuf,
}

impl FixtureFetcher {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn find(&self, url: &str) -> Option<PathBuf> {
        let stem = url_key(url);
        let entries = fs::read_dir(&self.dir).ok()?;
        let mut matches: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_stem().and_then(|s| s.to_str()) == Some(stem.as_str()))
            .collect();
        matches.sort();
        matches.into_iter().next()
    }
}

impl Fetcher for FixtureFetcher {
    fn fetch(&self, url: &str) -> Result<String, HealthError> {
        let path = self
            .find(url)
            .ok_or_else(|| HealthError::FetchFailure(url.to_string()))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !matches!(ext, "html" | "htm") {
            return Err(HealthError::NotHtml(url.to_string()));
        }
        fs::read_to_string(&path).map_err(|_| HealthError::FetchFailure(url.to_string()))
    }
}

/// Live fetcher. Responses whose content type is not HTML are rejected.
pub struct HttpFetcher {
    agent: ureq::Agent,
}

impl HttpFetcher {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<String, HealthError> {
        let mut resp = self
            .agent
            .get(url)
            .call()
            .map_err(|_| HealthError::FetchFailure(url.to_string()))?;
        let html = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .is_none_or(|ct| ct.contains("html"));
        if !html {
            return Err(HealthError::NotHtml(url.to_string()));
        }
        resp.body_mut()
            .read_to_string()
            .map_err(|_| HealthError::FetchFailure(url.to_string()))
    }
}

const SKIPPED: [&str; 5] = ["script", "style", "noscript", "template", "head"];

/// Title followed by the visible body text, whitespace collapsed, cut to at
/// most `limit` characters.
pub fn extract_text(html: &str, limit: usize) -> String {
    let doc = Html::parse_document(html);
    let title_sel = Selector::parse("title").expect("static selector");
    let mut parts: Vec<String> = doc
        .select(&title_sel)
        .next()
        .map(|t| t.text().collect::<String>())
        .into_iter()
        .collect();
    for node in doc.tree.nodes() {
        let Node::Text(text) = node.value() else {
            continue;
        };
        let hidden = node.ancestors().any(|a| {
            a.value()
                .as_element()
                .is_some_and(|e| SKIPPED.contains(&e.name()))
        });
        if !hidden {
            parts.push(text.to_string());
        }
    }
    let collapsed = parts
        .iter()
        .flat_map(|p| p.split_whitespace())
        .collect::<Vec<_>>()
        .join(" ");
    match collapsed.char_indices().nth(limit) {
        Some((cut, _)) => collapsed[..cut].to_string(),
        None => collapsed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_markup_and_scripts() {
        let html = "<html><head><title>T  1</title><style>p{}</style></head>\
                    <body><h1>Head</h1><script>var x;</script><p>a\n  b</p></body></html>";
        assert_eq!(extract_text(html, 100), "T 1 Head a b");
        assert_eq!(extract_text(html, 3), "T 1");
    }

    #[test]
    fn stub_search_normalizes() {
        let s = StubSearch::parse("# map\nTips to  improve sleep\thttps://x/tips\n").unwrap();
        assert_eq!(s.top_url("tips to improve SLEEP").unwrap(), "https://x/tips");
        assert!(matches!(s.top_url("other"), Err(HealthError::NoResults(_))));
        assert!(StubSearch::parse("no tab here").is_err());
    }

    #[test]
    fn url_key_is_stable() {
        assert_eq!(url_key("https://example.com").len(), 16);
        assert_eq!(url_key("a"), url_key("a"));
        assert_ne!(url_key("a"), url_key("b"));
    }
}
