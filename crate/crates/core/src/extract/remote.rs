//! Blocking client for an entity-extraction web service with on-disk response
//! caching and retry.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::wire::{decode_response, WireRequest};
use super::{ExtractError, Extractor, RawEntity};
use crate::segmenter::DEFAULT_MAX_CHARS;

/// First line of every cache file.
pub const CACHE_SCHEMA: &str = "medeval-response-cache v1";

/// Environment variable holding a bearer token for the service.
pub const TOKEN_ENV: &str = "MEDEVAL_API_TOKEN";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Per-request timeout. The reference service needs roughly 11 s for a
    /// 12,000-character note, so a full 20,000-character block takes ~18 s.
    pub timeout: Duration,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles on each further retry.
    pub backoff: Duration,
    pub token: Option<String>,
    pub max_chars: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(40),
            max_attempts: 3,
            backoff: Duration::from_millis(500),
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            max_chars: DEFAULT_MAX_CHARS,
        }
    }
}

/// One file per text hash. Writes are serialized and atomic (write + rename).
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(text: &str) -> String {
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Cached raw response bytes, if present and written by this schema version.
    pub fn get(&self, key: &str) -> Option<Vec<u8>> {
        let bytes = fs::read(self.path(key)).ok()?;
        let header_len = CACHE_SCHEMA.len() + 1;
        (bytes.len() >= header_len && bytes.starts_with(CACHE_SCHEMA.as_bytes()) && bytes[header_len - 1] == b'\n')
            .then(|| bytes[header_len..].to_vec())
    }

    pub fn put(&self, key: &str, body: &[u8]) -> std::io::Result<()> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let tmp = self.dir.join(format!(".{key}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(CACHE_SCHEMA.as_bytes())?;
            f.write_all(b"\n")?;
            f.write_all(body)?;
            f.sync_all()?;
        }
        fs::rename(tmp, self.path(key))
    }
}

pub struct RemoteExtractor {
    agent: ureq::Agent,
    config: RemoteConfig,
    cache: Option<ResponseCache>,
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl RemoteExtractor {
    pub fn new(config: RemoteConfig, cache: Option<ResponseCache>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, config, cache }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn post(&self, text: &str) -> Result<Vec<u8>, Attempt> {
        let body = serde_json::to_string(&WireRequest { text }).expect("request serializes");
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.config.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e @ (ureq::Error::BadUri(_) | ureq::Error::Http(_) | ureq::Error::InvalidProxyUrl)) => {
                return Err(Attempt::Fatal(e.to_string()))
            }
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .read_to_vec()
            .map_err(|e| Attempt::Retry(format!("reading body: {e}")))?;
        match status {
            200..=299 => Ok(bytes),
            429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}"))),
            _ => Err(Attempt::Fatal(format!(
                "HTTP {status}: {}",
                String::from_utf8_lossy(&bytes[..bytes.len().min(200)])
            ))),
        }
    }
}

impl Extractor for RemoteExtractor {
    fn max_chars(&self) -> Option<usize> {
        Some(self.config.max_chars)
    }

    fn extract(&self, text: &str) -> Result<Vec<RawEntity>, ExtractError> {
        let len = text.chars().count();
        if len > self.config.max_chars {
            return Err(ExtractError::TooLong {
                len,
                max: self.config.max_chars,
            });
        }
        let key = ResponseCache::key(text);
        if let Some(body) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            if let Ok(entities) = decode_response(&body) {
                return Ok(entities);
            }
            log::warn!("ignoring undecodable cache entry {key}");
        }

        let attempts = self.config.max_attempts.max(1);
        let mut delay = self.config.backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.post(text) {
                Ok(body) => {
                    let entities = decode_response(&body)?;
                    if let Some(cache) = &self.cache {
                        cache.put(&key, &body)?;
                    }
                    return Ok(entities);
                }
                Err(Attempt::Fatal(message)) => {
                    return Err(ExtractError::Service {
                        attempts: attempt,
                        message,
                    })
                }
                Err(Attempt::Retry(message)) => {
                    log::debug!("attempt {attempt}/{attempts} failed: {message}");
                    last = message;
                    if attempt < attempts {
                        thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(ExtractError::Service {
            attempts,
            message: last,
        })
    }
}
