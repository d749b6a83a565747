//! `manifest.txt`: `key=value` lines describing a persisted index.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::{collision_probability, LshParams};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const PROJECTIONS_FILE: &str = "projections.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    C2lsh,
    Qalsh,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::C2lsh => "c2lsh",
            Algo::Qalsh => "qalsh",
        })
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c2lsh" => Ok(Algo::C2lsh),
            "qalsh" => Ok(Algo::Qalsh),
            other => Err(Error::invalid(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub algo: Algo,
    /// Points stored in the index.
    pub n: usize,
    pub dim: usize,
    pub params: LshParams,
    pub page_size: usize,
    pub seed: u64,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        format!(
            "algo={}\nn={}\nd={}\nm={}\nw={}\nc={}\ndelta={}\nbeta={}\nl={}\npage_size={}\nseed={}\nsized_for={}\n",
            self.algo, self.n, self.dim, p.m, p.w, p.c, p.delta, p.beta, p.l, self.page_size, self.seed, p.n
        )
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut kv = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format(path, lineno as u64, format!("expected key=value, got {line:?}"))
            })?;
            kv.insert(k.trim(), v.trim());
        }
        fn get<V: FromStr>(path: &Path, kv: &HashMap<&str, &str>, key: &str) -> Result<V> {
            let raw = kv
                .get(key)
                .ok_or_else(|| Error::format(path, 0, format!("missing key {key}")))?;
            raw.parse()
                .map_err(|_| Error::format(path, 0, format!("bad value for {key}: {raw:?}")))
        }
        let n: usize = get(path, &kv, "n")?;
        let c: f64 = get(path, &kv, "c")?;
        let w: f64 = get(path, &kv, "w")?;
        let params = LshParams {
            n: kv.get("sized_for").and_then(|v| v.parse().ok()).unwrap_or(n),
            c,
            w,
            delta: get(path, &kv, "delta")?,
            beta: get(path, &kv, "beta")?,
            m: get(path, &kv, "m")?,
            l: get(path, &kv, "l")?,
            p1: collision_probability(1.0, w)?,
            p2: collision_probability(c, w)?,
        };
        params.validate()?;
        Ok(Manifest {
            algo: get::<String>(path, &kv, "algo")?.parse()?,
            n,
            dim: get(path, &kv, "d")?,
            params,
            page_size: get(path, &kv, "page_size")?,
            seed: get(path, &kv, "seed")?,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&path, &text)
    }
}
