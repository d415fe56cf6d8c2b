//! Checkpoint files and series of checkpoints along a training run.
//!
//! A checkpoint file is little-endian:
//!
//! ```text
//! "RBMTREE1"                  8-byte magic
//! u32 n_visible, n_states, n_hidden
//! u64 age                     gradient updates performed
//! u8  gauge                   0 = none, 1 = zero-sum, 2 = lattice-gas
//! f64 a[i][q], b[mu], w[i][mu][q]   row-major
//! ```
//!
//! A series on disk is a directory of `ckpt_<age>.rbm` files plus `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Gauge, PottsRBM};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::training::TrainingConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RBMTREE1";
const HEADER_LEN: usize = 8 + 3 * 4 + 8 + 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn encode_checkpoint(age: u64, model: &PottsRBM) -> Vec<u8> {
    let (nv, nq, nh) = model.shape();
    let n_params = nv * nq + nh + nv * nh * nq;
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * n_params);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for d in [nv, nq, nh] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&age.to_le_bytes());
    buf.push(model.gauge().to_byte());
    for x in model
        .visible_fields()
        .iter()
        .chain(model.hidden_fields())
        .chain(model.weights())
    {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(u64, PottsRBM)> {
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < HEADER_LEN || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing RBMTREE1 header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (nv, nq, nh) = (u32_at(8), u32_at(12), u32_at(16));
    let age = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let gauge = Gauge::from_byte(bytes[28]).ok_or_else(|| bad(format!("unknown gauge byte {}", bytes[28])))?;
    let n_a = nv * nq;
    let n_w = nv * nh * nq;
    let expected = HEADER_LEN + 8 * (n_a + nh + n_w);
    if bytes.len() != expected {
        return Err(bad(format!(
            "{} bytes for shape {nv}x{nq}x{nh}, expected {expected}",
            bytes.len()
        )));
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let a: Vec<f64> = floats.by_ref().take(n_a).collect();
    let b: Vec<f64> = floats.by_ref().take(nh).collect();
    let w: Vec<f64> = floats.collect();
    let model = PottsRBM::from_parts(nv, nq, nh, a, b, w, gauge).map_err(|e| bad(e.to_string()))?;
    Ok((age, model))
}

pub fn write_checkpoint(path: &Path, age: u64, model: &PottsRBM) -> Result<()> {
    write_atomic(path, &encode_checkpoint(age, model))
}

pub fn read_checkpoint(path: &Path) -> Result<(u64, PottsRBM)> {
    let bytes = fs::read(path)?;
    decode_checkpoint(&bytes, path)
}

/// Storage for models saved along a training trajectory.
pub trait CheckpointStore {
    /// Saved ages, ascending.
    fn ages(&self) -> Vec<u64>;
    fn load(&self, age: u64) -> Result<PottsRBM>;
    /// Appends a model; ages must be strictly increasing and shapes identical.
    fn save(&mut self, age: u64, model: &PottsRBM) -> Result<()>;
}

fn check_append(last: Option<(u64, (usize, usize, usize))>, age: u64, model: &PottsRBM) -> Result<()> {
    if let Some((last_age, shape)) = last {
        if age <= last_age {
            return Err(Error::config(format!(
                "checkpoint ages must increase: {age} after {last_age}"
            )));
        }
        if shape != model.shape() {
            return Err(Error::shape(format!(
                "checkpoint shape {:?} differs from series shape {shape:?}",
                model.shape()
            )));
        }
    }
    Ok(())
}

/// In-memory checkpoint series.
#[derive(Debug, Clone, Default)]
pub struct CheckpointSeries {
    entries: Vec<(u64, PottsRBM)>,
    pub training_config: Option<TrainingConfig>,
}

impl CheckpointSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<(u64, PottsRBM)>) -> Result<Self> {
        let mut s = Self::new();
        for (age, model) in entries {
            s.save(age, &model)?;
        }
        Ok(s)
    }

    pub fn entries(&self) -> &[(u64, PottsRBM)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&(u64, PottsRBM)> {
        self.entries.last()
    }

    /// Writes the series as a checkpoint directory.
    pub fn write_dir(&self, dir: &Path) -> Result<CheckpointDir> {
        let mut out = CheckpointDir::create(dir, self.training_config.clone())?;
        for (age, model) in &self.entries {
            out.save(*age, model)?;
        }
        Ok(out)
    }
}

impl CheckpointStore for CheckpointSeries {
    fn ages(&self) -> Vec<u64> {
        self.entries.iter().map(|(a, _)| *a).collect()
    }

    fn load(&self, age: u64) -> Result<PottsRBM> {
        self.entries
            .iter()
            .find(|(a, _)| *a == age)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| Error::OutOfRange(format!("no checkpoint at age {age}")))
    }

    fn save(&mut self, age: u64, model: &PottsRBM) -> Result<()> {
        check_append(self.entries.last().map(|(a, m)| (*a, m.shape())), age, model)?;
        self.entries.push((age, model.clone()));
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesManifest {
    pub format_version: u32,
    pub n_visible: usize,
    pub n_states: usize,
    pub n_hidden: usize,
    pub ages: Vec<u64>,
    pub training_config: Option<TrainingConfig>,
}

/// Checkpoint series stored as a directory; models are read on demand.
#[derive(Debug, Clone)]
pub struct CheckpointDir {
    dir: PathBuf,
    manifest: SeriesManifest,
}

impl CheckpointDir {
    pub fn checkpoint_path(dir: &Path, age: u64) -> PathBuf {
        dir.join(format!("ckpt_{age}.rbm"))
    }

    /// Creates (or empties the manifest of) a checkpoint directory.
    pub fn create(dir: &Path, training_config: Option<TrainingConfig>) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let out = CheckpointDir {
            dir: dir.to_path_buf(),
            manifest: SeriesManifest {
                format_version: 1,
                n_visible: 0,
                n_states: 0,
                n_hidden: 0,
                ages: Vec::new(),
                training_config,
            },
        };
        out.write_manifest()?;
        Ok(out)
    }

    /// Opens an existing directory. Uses `manifest.json` when present and falls back
    /// to scanning for `ckpt_<age>.rbm` files.
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            serde_json::from_slice(&fs::read(&manifest_path)?)?
        } else {
            let mut ages = Vec::new();
            for entry in fs::read_dir(dir)? {
                let name = entry?.file_name().to_string_lossy().into_owned();
                if let Some(age) = name
                    .strip_prefix("ckpt_")
                    .and_then(|s| s.strip_suffix(".rbm"))
                    .and_then(|s| s.parse::<u64>().ok())
                {
                    ages.push(age);
                }
            }
            ages.sort_unstable();
            let (nv, nq, nh) = match ages.first() {
                Some(&a) => read_checkpoint(&Self::checkpoint_path(dir, a))?.1.shape(),
                None => (0, 0, 0),
            };
            SeriesManifest {
                format_version: 1,
                n_visible: nv,
                n_states: nq,
                n_hidden: nh,
                ages,
                training_config: None,
            }
        };
        Ok(CheckpointDir {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn manifest(&self) -> &SeriesManifest {
        &self.manifest
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn write_manifest(&self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST_FILE), text.as_bytes())
    }

    /// Loads every checkpoint into memory.
    pub fn to_series(&self) -> Result<CheckpointSeries> {
        let mut s = CheckpointSeries::new();
        s.training_config = self.manifest.training_config.clone();
        for age in self.ages() {
            s.save(age, &self.load(age)?)?;
        }
        Ok(s)
    }
}

impl CheckpointStore for CheckpointDir {
    fn ages(&self) -> Vec<u64> {
        self.manifest.ages.clone()
    }

    fn load(&self, age: u64) -> Result<PottsRBM> {
        let path = Self::checkpoint_path(&self.dir, age);
        let (stored_age, model) = read_checkpoint(&path)?;
        if stored_age != age {
            return Err(Error::Format {
                path,
                msg: format!("file records age {stored_age}"),
            });
        }
        Ok(model)
    }

    fn save(&mut self, age: u64, model: &PottsRBM) -> Result<()> {
        let m = &self.manifest;
        let last = m.ages.last().map(|&a| (a, (m.n_visible, m.n_states, m.n_hidden)));
        check_append(last, age, model)?;
        write_checkpoint(&Self::checkpoint_path(&self.dir, age), age, model)?;
        let (nv, nq, nh) = model.shape();
        self.manifest.n_visible = nv;
        self.manifest.n_states = nq;
        self.manifest.n_hidden = nh;
        self.manifest.ages.push(age);
        self.write_manifest()
    }
}
