//! Synthetic evolutionary dataset: binary sequences grown generation by generation
//! from an all-zero ancestor by independent site flips.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::OneHotDataset;
use crate::error::{Error, Result};
use crate::io::write_atomic;

use super::save_matrix;

/// Attempts at drawing a fresh root heir before giving up on it.
const ROOT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SedConfig {
    pub seq_length: usize,
    /// Heirs of the ancestor; each founds a labelled family.
    pub n_root_children: usize,
    /// Per-site flip probability; `None` means `1 / seq_length`.
    pub mutation_prob: Option<f64>,
    /// Children per parent are drawn uniformly from `1..=max_children`.
    pub max_children: usize,
    pub target_size: usize,
    pub seed: u64,
    /// Generation (ancestor = 0) whose members found the sub-families.
    pub label_depth: usize,
    /// Consecutive generations without a new sequence before growth stops short of
    /// `target_size`.
    pub max_stalled_rounds: usize,
}

impl Default for SedConfig {
    fn default() -> Self {
        SedConfig {
            seq_length: 805,
            n_root_children: 5,
            mutation_prob: None,
            max_children: 5,
            target_size: 4508,
            seed: 0,
            label_depth: 2,
            max_stalled_rounds: 20,
        }
    }
}

impl SedConfig {
    pub fn flip_probability(&self) -> f64 {
        self.mutation_prob.unwrap_or(1.0 / self.seq_length as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.flip_probability();
        if self.seq_length == 0 || self.n_root_children == 0 || self.max_children == 0 || self.target_size == 0 {
            return Err(Error::config("sequence length, root children, max children and target size must be positive"));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::config(format!("mutation probability must lie in (0, 1), got {p}")));
        }
        if self.label_depth < 1 {
            return Err(Error::config("label depth must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SedOutput {
    /// Binary sequences, the ancestor excluded.
    pub dataset: OneHotDataset,
    /// Parent sample of each sequence; `None` for the root heirs.
    pub genealogy: Vec<Option<usize>>,
    /// Family: index of the root heir the sequence descends from.
    pub labels: Vec<usize>,
    /// Sample index of the founding member of the sub-family at `label_depth`; `None`
    /// for sequences above that generation.
    pub sublabels: Vec<Option<usize>>,
    /// Generation of each sequence (heirs are generation 1).
    pub generations: Vec<usize>,
    /// Whether `target_size` was reached.
    pub complete: bool,
}

impl SedOutput {
    /// `id,parent,label,sublabel` rows; missing values are empty.
    pub fn genealogy_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "parent", "label", "sublabel"])?;
        let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        for m in 0..self.labels.len() {
            w.write_record([m.to_string(), opt(self.genealogy[m]), self.labels[m].to_string(), opt(self.sublabels[m])])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv of integers is utf-8"))
    }

    /// Writes the sequence matrix and the genealogy table.
    pub fn write(&self, matrix_path: &Path, genealogy_path: &Path) -> Result<()> {
        save_matrix(matrix_path, &self.dataset)?;
        write_atomic(genealogy_path, self.genealogy_csv()?.as_bytes())
    }
}

/// Flips every site of a binary sequence independently with probability `p`.
pub fn mutate<R: Rng + ?Sized>(parent: &[usize], p: f64, rng: &mut R) -> Vec<usize> {
    parent.iter().map(|&x| if rng.random_bool(p) { 1 - x } else { x }).collect()
}

/// [`mutate`] conditioned on at least one flip: the first flipped site follows a
/// geometric law truncated to the sequence, later sites flip independently.
fn mutate_at_least_once<R: Rng + ?Sized>(parent: &[usize], p: f64, rng: &mut R) -> Vec<usize> {
    let n = parent.len();
    let log_keep = (-p).ln_1p();
    let none = -(n as f64 * log_keep).exp_m1(); // 1 - (1-p)^n
    let u: f64 = rng.random();
    let first = (((-u * none).ln_1p() / log_keep).floor() as usize).min(n - 1);
    let mut child = parent.to_vec();
    child[first] = 1 - child[first];
    for x in &mut child[first + 1..] {
        if rng.random_bool(p) {
            *x = 1 - *x;
        }
    }
    child
}

struct Population {
    seqs: Vec<Vec<usize>>,
    seen: HashSet<Vec<usize>>,
    parents: Vec<Option<usize>>,
    labels: Vec<usize>,
    sublabels: Vec<Option<usize>>,
    generations: Vec<usize>,
}

impl Population {
    fn try_add(&mut self, seq: Vec<usize>, parent: Option<usize>, label: usize, label_depth: usize) -> Option<usize> {
        if !self.seen.insert(seq.clone()) {
            return None;
        }
        let id = self.seqs.len();
        let generation = parent.map_or(1, |p| self.generations[p] + 1);
        let sublabel = match generation.cmp(&label_depth) {
            std::cmp::Ordering::Less => None,
            std::cmp::Ordering::Equal => Some(id),
            std::cmp::Ordering::Greater => parent.and_then(|p| self.sublabels[p]),
        };
        self.seqs.push(seq);
        self.parents.push(parent);
        self.labels.push(label);
        self.sublabels.push(sublabel);
        self.generations.push(generation);
        Some(id)
    }
}

/// Grows the dataset generation by generation: every sequence present when a
/// generation starts draws 1..=`max_children` children, so no lineage goes extinct.
/// Duplicates of any earlier sequence (or of the ancestor) are dropped. Growth stops at
/// `target_size` or after `max_stalled_rounds` consecutive generations without a new
/// sequence.
pub fn generate_sed(config: &SedConfig) -> Result<SedOutput> {
    config.validate()?;
    let p = config.flip_probability();
    let n = config.seq_length;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ancestor = vec![0usize; n];
    let mut pop = Population {
        seqs: Vec::new(),
        seen: HashSet::from([ancestor.clone()]),
        parents: Vec::new(),
        labels: Vec::new(),
        sublabels: Vec::new(),
        generations: Vec::new(),
    };

    for family in 0..config.n_root_children.min(config.target_size) {
        let added = (0..ROOT_ATTEMPTS)
            .find_map(|_| pop.try_add(mutate_at_least_once(&ancestor, p, &mut rng), None, family, config.label_depth));
        if added.is_none() {
            log::warn!("could not draw a new sequence for family {family}");
        }
    }

    let mut stalled = 0;
    'grow: while pop.seqs.len() < config.target_size && !pop.seqs.is_empty() {
        let before = pop.seqs.len();
        for parent in 0..before {
            let n_children = rng.random_range(1..=config.max_children);
            for _ in 0..n_children {
                let child = mutate(&pop.seqs[parent], p, &mut rng);
                let label = pop.labels[parent];
                pop.try_add(child, Some(parent), label, config.label_depth);
                if pop.seqs.len() >= config.target_size {
                    break 'grow;
                }
            }
        }
        if pop.seqs.len() == before {
            stalled += 1;
            if stalled >= config.max_stalled_rounds {
                break;
            }
        } else {
            stalled = 0;
        }
    }

    let complete = pop.seqs.len() >= config.target_size;
    if !complete {
        log::warn!("generated {} of {} requested sequences", pop.seqs.len(), config.target_size);
    }
    if pop.seqs.is_empty() {
        return Err(Error::data("no sequences generated"));
    }
    Ok(SedOutput {
        dataset: OneHotDataset::from_rows(2, &pop.seqs)?,
        genealogy: pop.parents,
        labels: pop.labels,
        sublabels: pop.sublabels,
        generations: pop.generations,
        complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SedConfig {
        SedConfig {
            seq_length: 60,
            target_size: 300,
            seed: 3,
            ..SedConfig::default()
        }
    }

    #[test]
    fn reaches_target_with_consistent_genealogy() {
        let out = generate_sed(&small()).unwrap();
        assert!(out.complete);
        assert_eq!(out.dataset.n_samples(), 300);
        assert_eq!(&out.labels[..5], &[0, 1, 2, 3, 4]);
        for m in 0..300 {
            match out.genealogy[m] {
                None => assert!(m < 5 && out.generations[m] == 1),
                Some(p) => {
                    assert!(p < m);
                    assert_eq!(out.labels[m], out.labels[p]);
                    assert_eq!(out.generations[m], out.generations[p] + 1);
                }
            }
            if out.generations[m] >= 2 {
                let s = out.sublabels[m].unwrap();
                assert_eq!(out.generations[s], 2);
                assert_eq!(out.labels[s], out.labels[m]);
            } else {
                assert_eq!(out.sublabels[m], None);
            }
        }
        let unique: HashSet<&[usize]> = out.dataset.samples().collect();
        assert_eq!(unique.len(), 300);
        assert!(out.dataset.samples().all(|s| s.iter().any(|&x| x == 1)));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        assert_eq!(generate_sed(&small()).unwrap(), generate_sed(&small()).unwrap());
        let other = SedConfig { seed: 4, ..small() };
        assert_ne!(generate_sed(&small()).unwrap().dataset, generate_sed(&other).unwrap().dataset);
    }

    #[test]
    fn vanishing_mutation_leaves_only_heirs() {
        let cfg = SedConfig {
            mutation_prob: Some(1e-12),
            max_stalled_rounds: 3,
            ..small()
        };
        let out = generate_sed(&cfg).unwrap();
        assert!(!out.complete);
        assert_eq!(out.dataset.n_samples(), 5);
    }

    #[test]
    fn forced_flip_matches_conditional_law() {
        // P(first flip at j | at least one flip) for n = 3, p = 0.4
        let (n, p) = (3usize, 0.4f64);
        let norm = 1.0 - (1.0 - p).powi(n as i32);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 200_000;
        let mut counts = [0usize; 3];
        for _ in 0..trials {
            let c = mutate_at_least_once(&[0, 0, 0], p, &mut rng);
            counts[c.iter().position(|&x| x == 1).unwrap()] += 1;
        }
        for j in 0..n {
            let expected = (1.0 - p).powi(j as i32) * p / norm;
            let freq = counts[j] as f64 / trials as f64;
            let sigma = (expected * (1.0 - expected) / trials as f64).sqrt();
            assert!((freq - expected).abs() < 4.0 * sigma, "site {j}: {freq} vs {expected}");
        }
    }

    #[test]
    fn genealogy_csv_layout() {
        let out = generate_sed(&SedConfig { target_size: 8, ..small() }).unwrap();
        let csv = out.genealogy_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("id,parent,label,sublabel"));
        assert_eq!(lines.next(), Some("0,,0,"));
        assert_eq!(csv.lines().count(), 9);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate_sed(&SedConfig { mutation_prob: Some(1.0), ..small() }).is_err());
        assert!(generate_sed(&SedConfig { seq_length: 0, ..small() }).is_err());
    }
}
