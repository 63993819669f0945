//! TOML configuration files and dataset manifests.
//!
//! Keys inside `[section]` tables are addressed as `section.key`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Position, Result};
use crate::event_model::SensorGeometry;
use crate::geometry::CameraIntrinsics;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    /// Values keyed by their dotted path, e.g. `oracle.sigma`.
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e.span().map_or(1, |s| text[..s.start].matches('\n').count() + 1);
            Error::parse(Position::Line(line), e.message().to_string())
        })?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values);
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = super::read_file(path)?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::parse(Position::Byte(e.valid_up_to() as u64), "invalid UTF-8"))?;
        Config::parse(text)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Validation(format!("bad value {v:?} for config key {key}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Rejects keys outside `known`, which catches typos.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::Validation(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, String>) {
    for (key, value) in table {
        let full = format!("{prefix}{key}");
        match value {
            toml::Value::Table(t) => flatten(&format!("{full}."), t, out),
            toml::Value::String(s) => {
                out.insert(full, s.clone());
            }
            toml::Value::Float(f) => {
                out.insert(full, f.to_string());
            }
            other => {
                out.insert(full, other.to_string());
            }
        }
    }
}

/// Parses a duration such as `50ms`, `0.05s`, `50000us` or `0.05` (seconds)
/// into whole microseconds.
pub fn parse_duration_us(s: &str) -> Result<u64> {
    let s = s.trim();
    let (num, scale) = if let Some(n) = s.strip_suffix("us") {
        (n, 1.0)
    } else if let Some(n) = s.strip_suffix("ms") {
        (n, 1e3)
    } else if let Some(n) = s.strip_suffix('s') {
        (n, 1e6)
    } else {
        (s, 1e6)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Parameter(format!("bad duration {s:?}")))?;
    let us = (v * scale).round();
    if !(us >= 1.0 && us < u64::MAX as f64) {
        return Err(Error::Parameter(format!("duration {s:?} must be at least 1 us")));
    }
    Ok(us as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Approach,
    Orbit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pace {
    Slow,
    Fast,
}

/// A sequence name of the form `{approach,orbit}-{slow,fast}-{lighting}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioName {
    pub motion: Motion,
    pub pace: Pace,
    pub lighting: String,
}

pub const LIGHTINGS: [&str; 5] = ["ambient", "centre", "lightbox", "ringbelow", "ringside"];

impl ScenarioName {
    pub fn parse(name: &str) -> Option<Self> {
        let mut parts = name.splitn(3, '-');
        let motion = match parts.next()? {
            "approach" => Motion::Approach,
            "orbit" => Motion::Orbit,
            _ => return None,
        };
        let pace = match parts.next()? {
            "slow" => Pace::Slow,
            "fast" => Pace::Fast,
            _ => return None,
        };
        let lighting = parts.next()?;
        LIGHTINGS.contains(&lighting).then(|| ScenarioName {
            motion,
            pace,
            lighting: lighting.to_string(),
        })
    }

    /// Event-frame window used for this kind of sequence.
    pub fn default_tau_us(&self) -> u64 {
        match (self.motion, self.pace) {
            (Motion::Approach, _) => 50_000,
            (Motion::Orbit, Pace::Slow) => 200_000,
            (Motion::Orbit, Pace::Fast) => 10_000,
        }
    }
}

/// Describes one recorded or simulated sequence. Paths are stored relative
/// to the manifest's directory and resolved on load.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub events: PathBuf,
    pub poses: PathBuf,
    pub labels: Option<PathBuf>,
    pub landmarks: Option<PathBuf>,
    pub geometry: SensorGeometry,
    pub intrinsics: CameraIntrinsics,
}

const MANIFEST_KEYS: [&str; 12] = [
    "name",
    "events",
    "poses",
    "labels",
    "landmarks",
    "width",
    "height",
    "fx",
    "fy",
    "cx",
    "cy",
    "tau",
];

impl DatasetManifest {
    pub fn scenario(&self) -> Option<ScenarioName> {
        ScenarioName::parse(&self.name)
    }

    pub fn default_tau_us(&self) -> Option<u64> {
        self.scenario().map(|s| s.default_tau_us())
    }

    /// Loads and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Config::load(path)?;
        cfg.check_known(&MANIFEST_KEYS)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let need = |key: &str| -> Result<String> {
            cfg.get(key)?
                .ok_or_else(|| Error::Validation(format!("manifest {} lacks {key:?}", path.display())))
        };
        let file = |key: &str, rel: String| -> Result<PathBuf> {
            let p = dir.join(rel);
            if !p.is_file() {
                return Err(Error::Validation(format!(
                    "manifest {key} file {} does not exist",
                    p.display()
                )));
            }
            Ok(p)
        };
        let optional =
            |key: &str| -> Result<Option<PathBuf>> { cfg.get::<String>(key)?.map(|rel| file(key, rel)).transpose() };
        let num = |key: &str| -> Result<f64> {
            need(key)?
                .parse()
                .map_err(|_| Error::Validation(format!("manifest {key} is not a number")))
        };
        let geometry = SensorGeometry::new(
            need("width")?
                .parse()
                .map_err(|_| Error::Validation("manifest width is not an integer".into()))?,
            need("height")?
                .parse()
                .map_err(|_| Error::Validation("manifest height is not an integer".into()))?,
        )?;
        Ok(DatasetManifest {
            name: need("name")?,
            events: file("events", need("events")?)?,
            poses: file("poses", need("poses")?)?,
            labels: optional("labels")?,
            landmarks: optional("landmarks")?,
            geometry,
            intrinsics: CameraIntrinsics::new(num("fx")?, num("fy")?, num("cx")?, num("cy")?)?,
        })
    }

    /// Writes the manifest; paths inside `path`'s directory are stored relative to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        use toml::Value;
        let dir = path.parent().unwrap_or(Path::new(""));
        let rel = |p: &Path| Value::String(p.strip_prefix(dir).unwrap_or(p).display().to_string());
        let mut t = toml::Table::new();
        t.insert("name".into(), Value::String(self.name.clone()));
        t.insert("events".into(), rel(&self.events));
        t.insert("poses".into(), rel(&self.poses));
        if let Some(l) = &self.labels {
            t.insert("labels".into(), rel(l));
        }
        if let Some(l) = &self.landmarks {
            t.insert("landmarks".into(), rel(l));
        }
        let (g, k) = (self.geometry, self.intrinsics);
        t.insert("width".into(), Value::Integer(g.width.into()));
        t.insert("height".into(), Value::Integer(g.height.into()));
        for (key, v) in [("fx", k.fx), ("fy", k.fy), ("cx", k.cx), ("cy", k.cy)] {
            t.insert(key.into(), Value::Float(v));
        }
        let text = toml::to_string(&t).map_err(|e| Error::Validation(format!("cannot encode manifest: {e}")))?;
        super::write_atomic(path, |w| w.write_all(text.as_bytes()))
    }
}
