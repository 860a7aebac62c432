//! Line-oriented `key=value` checkpoints holding the partial sums of the
//! chunks completed so far.

use crate::error::CliError;
use num_bigint::BigInt;
use num_rational::BigRational;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    pub experiment: String,
    pub config_hash: String,
    pub chunks: usize,
    pub done: BTreeMap<usize, Vec<BigRational>>,
}

/// Hex SHA-256 of a canonical configuration string.
pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn encode(values: &[BigRational]) -> String {
    values
        .iter()
        .map(|v| format!("{}/{}", v.numer(), v.denom()))
        .collect::<Vec<_>>()
        .join(",")
}

fn decode(s: &str) -> Option<Vec<BigRational>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',')
        .map(|part| {
            let (n, d) = part.split_once('/')?;
            let n: BigInt = n.parse().ok()?;
            let d: BigInt = d.parse().ok()?;
            if d == BigInt::from(0) {
                return None;
            }
            Some(BigRational::new(n, d))
        })
        .collect()
}

impl Checkpoint {
    pub fn new(experiment: &str, config_hash: &str, chunks: usize) -> Self {
        Checkpoint {
            experiment: experiment.to_string(),
            config_hash: config_hash.to_string(),
            chunks,
            done: BTreeMap::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "experiment={}\nconfig_hash={}\nchunks={}\n",
            self.experiment, self.config_hash, self.chunks
        );
        for (i, v) in &self.done {
            out.push_str(&format!("chunk.{i}={}\n", encode(v)));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut experiment = None;
        let mut hash = None;
        let mut chunks = None;
        let mut done = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
            match key {
                "experiment" => experiment = Some(value.to_string()),
                "config_hash" => hash = Some(value.to_string()),
                "chunks" => chunks = Some(value.parse::<usize>().map_err(|e| format!("line {}: {e}", n + 1))?),
                _ => {
                    let idx: usize = key
                        .strip_prefix("chunk.")
                        .and_then(|i| i.parse().ok())
                        .ok_or_else(|| format!("line {}: unknown key {key:?}", n + 1))?;
                    let v = decode(value).ok_or_else(|| format!("line {}: bad partial sums", n + 1))?;
                    done.insert(idx, v);
                }
            }
        }
        let cp = Checkpoint {
            experiment: experiment.ok_or("missing experiment")?,
            config_hash: hash.ok_or("missing config_hash")?,
            chunks: chunks.ok_or("missing chunks")?,
            done,
        };
        if cp.done.keys().any(|&i| i >= cp.chunks) {
            return Err("chunk index out of range".into());
        }
        Ok(cp)
    }

    pub fn load(path: &Path) -> Result<Option<Self>, CliError> {
        match fs::read_to_string(path) {
            Ok(text) => Checkpoint::parse(&text)
                .map(Some)
                .map_err(|e| CliError::Usage(format!("corrupt checkpoint {}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CliError::io(format!("reading {}", path.display()), e)),
        }
    }

    /// Writes through a temporary file and a rename, so an interrupted save
    /// leaves the previous checkpoint intact.
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(format!("renaming onto {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut cp = Checkpoint::new("torsion_moment", &config_hash("x"), 4);
        cp.done.insert(
            2,
            vec![
                BigRational::new(5.into(), 2.into()),
                BigRational::from_integer((-7).into()),
            ],
        );
        cp.done.insert(0, vec![]);
        let text = cp.to_text();
        assert!(text.contains("chunk.2=5/2,-7/1\n"));
        assert_eq!(Checkpoint::parse(&text).unwrap(), cp);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::parse("experiment=a\nchunks=1\n").is_err());
        assert!(Checkpoint::parse("experiment=a\nconfig_hash=b\nchunks=1\nchunk.3=1/1\n").is_err());
        assert!(Checkpoint::parse("experiment=a\nconfig_hash=b\nchunks=2\nchunk.0=1/0\n").is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            config_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
