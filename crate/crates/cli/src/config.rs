//! Config-file handling. Precedence everywhere: command-line flag, then
//! config-file key, then the built-in default. Every command prints the
//! values it actually ran with, so a printed line can be replayed.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gecc::codes::{DecoderVariant, ThresholdMode};
use gecc::{Error, Result};

/// One `key = value` per line, `#` comments. Keys are consumed as the
/// command resolves them; anything left over is a typo and rejected.
pub struct FileConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let Some(path) = path else {
            return Ok(Self { entries });
        };
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(lineno, format!("expected key = value, got {line:?}")));
            };
            let (key, value) = (key.trim().to_owned(), value.trim().to_owned());
            if key.is_empty() || value.is_empty() {
                return Err(Error::parse(lineno, "empty key or value"));
            }
            if entries.insert(key.clone(), (value, lineno)).is_some() {
                return Err(Error::parse(lineno, format!("duplicate key {key:?}")));
            }
        }
        Ok(Self { entries })
    }

    /// Remove and parse `key` if the file set it.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, lineno)) => value
                .parse()
                .map(Some)
                .map_err(|e| Error::parse(lineno, format!("bad value for {key}: {e}"))),
        }
    }

    /// Every key must have been consumed by now.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        Err(Error::Config(format!("unknown config keys: {}", keys.join(", "))))
    }
}

/// Accumulates the resolved settings of one run and prints them as a
/// single replayable line.
pub struct Resolved {
    cmd: &'static str,
    pairs: Vec<(&'static str, String)>,
}

impl Resolved {
    pub fn new(cmd: &'static str) -> Self {
        Self { cmd, pairs: Vec::new() }
    }

    pub fn put(&mut self, key: &'static str, value: impl Display) {
        self.pairs.push((key, value.to_string()));
    }

    pub fn put_path(&mut self, key: &'static str, value: &Path) {
        self.pairs.push((key, value.display().to_string()));
    }

    pub fn print(&self) {
        let body: Vec<String> = self.pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("resolved-config: cmd={} {}", self.cmd, body.join(" "));
    }
}

/// Flag value then config key then default.
pub fn resolve<T: FromStr>(flag: Option<T>, file: &mut FileConfig, key: &str, default: T) -> Result<T>
where
    T::Err: Display,
{
    Ok(flag.or(file.take(key)?).unwrap_or(default))
}

/// Flag value then config key; missing is an error.
pub fn require<T: FromStr>(flag: Option<T>, file: &mut FileConfig, key: &str) -> Result<T>
where
    T::Err: Display,
{
    flag.or(file.take(key)?)
        .ok_or_else(|| Error::Config(format!("{key} is required (flag --{key} or config key)")))
}

pub fn resolve_path(
    flag: Option<PathBuf>,
    file: &mut FileConfig,
    key: &str,
) -> Result<Option<PathBuf>> {
    Ok(flag.or(file.take::<String>(key)?.map(PathBuf::from)))
}

pub fn require_path(flag: Option<PathBuf>, file: &mut FileConfig, key: &str) -> Result<PathBuf> {
    resolve_path(flag, file, key)?
        .ok_or_else(|| Error::Config(format!("{key} is required (flag --{key} or config key)")))
}

pub fn parse_threshold(s: &str) -> Result<ThresholdMode> {
    match s {
        "zero" => Ok(ThresholdMode::Zero),
        "median" => Ok(ThresholdMode::Median),
        "random" => Ok(ThresholdMode::RandomBaseline),
        other => Err(Error::Config(format!(
            "threshold must be zero, median, or random, got {other:?}"
        ))),
    }
}

pub fn threshold_name(mode: ThresholdMode) -> &'static str {
    match mode {
        ThresholdMode::Zero => "zero",
        ThresholdMode::Median => "median",
        ThresholdMode::RandomBaseline => "random",
    }
}

pub fn parse_variant(s: &str) -> Result<DecoderVariant> {
    match s {
        "light" => Ok(DecoderVariant::Light),
        "full" => Ok(DecoderVariant::Full),
        other => Err(Error::Config(format!("variant must be light or full, got {other:?}"))),
    }
}

pub fn variant_name(variant: DecoderVariant) -> &'static str {
    match variant {
        DecoderVariant::Light => "light",
        DecoderVariant::Full => "full",
    }
}
