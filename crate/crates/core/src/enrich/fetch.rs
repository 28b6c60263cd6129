//! Entity description retrieval: cache, offline fixtures, and the Wikipedia
//! REST page-summary endpoint.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};

use super::cache::DescriptionCache;
use super::entities::Entity;
use super::sentence::first_sentence;
use crate::error::{Error, Result};

pub const DEFAULT_WIKI_BASE: &str = "https://en.wikipedia.org";
/// Wikimedia asks clients to identify themselves; override with contact
/// details when running live fetches at any volume.
pub const DEFAULT_USER_AGENT: &str = "mmfnd/0.1 (entity-description fetcher)";

/// Characters escaped in a page-title path segment.
const TITLE_SEGMENT: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'/')
    .add(b'?')
    .add(b'<')
    .add(b'>')
    .add(b'`')
    .add(b'{')
    .add(b'}');

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionSource {
    Live,
    Cache,
    Fixture,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDescription {
    pub entity: String,
    /// First sentence only.
    pub sentence: String,
    pub source: DescriptionSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FetchMode {
    Live,
    Offline,
}

/// Result of a lookup that reached an authoritative answer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Lookup {
    Found(EntityDescription),
    /// The knowledge source has no page for this title.
    Missing { title: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal blocking HTTP GET.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, user_agent: &str) -> std::result::Result<HttpResponse, String>;
}

/// Wraps a transport and counts every request it issues.
pub struct CountingTransport<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T: Transport> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        CountingTransport {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<T: Transport> Transport for CountingTransport<T> {
    fn get(&self, url: &str, user_agent: &str) -> std::result::Result<HttpResponse, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.get(url, user_agent)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn get(&self, url: &str, user_agent: &str) -> std::result::Result<HttpResponse, String> {
        (**self).get(url, user_agent)
    }
}

#[cfg(feature = "live-fetch")]
pub struct UreqTransport {
    agent: ureq::Agent,
}

#[cfg(feature = "live-fetch")]
impl Default for UreqTransport {
    fn default() -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(20)))
            .build();
        UreqTransport {
            agent: config.into(),
        }
    }
}

#[cfg(feature = "live-fetch")]
impl Transport for UreqTransport {
    fn get(&self, url: &str, user_agent: &str) -> std::result::Result<HttpResponse, String> {
        let mut resp = self
            .agent
            .get(url)
            .header("User-Agent", user_agent)
            .header("Accept", "application/json")
            .call()
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Deserialize)]
struct PageSummary {
    #[serde(default)]
    extract: String,
}

#[derive(Serialize, Deserialize)]
struct FixtureLine {
    title: String,
    summary: String,
}

/// Writes `(title, summary)` pairs in the format read by [`load_fixtures`].
pub fn write_fixtures<'a>(
    path: &Path,
    fixtures: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<()> {
    let mut out = String::new();
    for (title, summary) in fixtures {
        let line = FixtureLine {
            title: title.to_string(),
            summary: summary.to_string(),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a JSON Lines fixture of `{"title", "summary"}` records.
pub fn load_fixtures(path: &Path) -> Result<HashMap<String, String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FixtureLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.insert(rec.title, rec.summary);
    }
    Ok(out)
}

/// Serializes description lookups through one rate-limited client.
pub struct DescriptionFetcher {
    cache: DescriptionCache,
    fixtures: HashMap<String, String>,
    transport: Option<Box<dyn Transport>>,
    pub wiki_base: String,
    pub user_agent: String,
    pub min_interval: Duration,
    pub max_retries: u32,
    pub backoff: Duration,
    last_request: Mutex<Option<Instant>>,
}

impl DescriptionFetcher {
    pub fn new(cache: DescriptionCache) -> Self {
        DescriptionFetcher {
            cache,
            fixtures: HashMap::new(),
            transport: None,
            wiki_base: DEFAULT_WIKI_BASE.to_string(),
            user_agent: DEFAULT_USER_AGENT.to_string(),
            min_interval: Duration::from_millis(100),
            max_retries: 3,
            backoff: Duration::from_millis(250),
            last_request: Mutex::new(None),
        }
    }

    pub fn with_fixtures(mut self, fixtures: HashMap<String, String>) -> Self {
        self.fixtures = fixtures;
        self
    }

    pub fn with_transport(mut self, transport: impl Transport + 'static) -> Self {
        self.transport = Some(Box::new(transport));
        self
    }

    pub fn cache(&self) -> &DescriptionCache {
        &self.cache
    }

    pub fn summary_url(&self, title: &str) -> String {
        let segment = title.replace(' ', "_");
        format!(
            "{}/api/rest_v1/page/summary/{}",
            self.wiki_base.trim_end_matches('/'),
            utf8_percent_encode(&segment, TITLE_SEGMENT)
        )
    }

    /// Looks up the description for `entity`.
    ///
    /// Both modes consult the cache first. Offline mode then falls back to
    /// fixtures and never touches the transport; live mode issues a request
    /// and stores the first sentence of the returned summary.
    pub fn fetch(&self, entity: &Entity, mode: FetchMode) -> Result<Lookup> {
        self.fetch_title(&entity.canonical_title, mode)
    }

    pub fn fetch_title(&self, title: &str, mode: FetchMode) -> Result<Lookup> {
        if let Some(hit) = self.cache.get(title)? {
            return Ok(Lookup::Found(EntityDescription {
                entity: title.to_string(),
                sentence: hit.sentence,
                source: DescriptionSource::Cache,
            }));
        }
        match mode {
            FetchMode::Offline => match self.fixtures.get(title) {
                Some(summary) => Ok(Lookup::Found(EntityDescription {
                    entity: title.to_string(),
                    sentence: first_sentence(summary)?,
                    source: DescriptionSource::Fixture,
                })),
                None => Err(Error::CacheMiss(title.to_string())),
            },
            FetchMode::Live => self.fetch_live(title),
        }
    }

    fn fetch_live(&self, title: &str) -> Result<Lookup> {
        let transport = self.transport.as_ref().ok_or_else(|| {
            Error::Config("live fetch requested without an HTTP transport".into())
        })?;
        let url = self.summary_url(title);
        let mut last_err = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            self.throttle();
            match transport.get(&url, &self.user_agent) {
                Ok(resp) if resp.status == 200 => {
                    let summary: PageSummary = serde_json::from_str(&resp.body)?;
                    if summary.extract.trim().is_empty() {
                        return Ok(Lookup::Missing {
                            title: title.to_string(),
                        });
                    }
                    let sentence = first_sentence(&summary.extract)?;
                    self.cache.put(title, &sentence)?;
                    return Ok(Lookup::Found(EntityDescription {
                        entity: title.to_string(),
                        sentence,
                        source: DescriptionSource::Live,
                    }));
                }
                Ok(resp) if resp.status == 404 => {
                    return Ok(Lookup::Missing {
                        title: title.to_string(),
                    })
                }
                Ok(resp) => last_err = format!("HTTP {}", resp.status),
                Err(e) => last_err = e,
            }
            log::warn!("fetch {title:?} attempt {} failed: {last_err}", attempt + 1);
        }
        Err(Error::Fetch {
            title: title.to_string(),
            attempts: self.max_retries + 1,
            msg: last_err,
        })
    }

    fn throttle(&self) {
        let mut last = self.last_request.lock().expect("throttle lock");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}
