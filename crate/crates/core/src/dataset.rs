//! Categorical datasets: `M` samples of `N_v` Potts variables with per-sample weights.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OneHotDataset {
    n_visible: usize,
    n_states: usize,
    states: Vec<usize>,
    weights: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl OneHotDataset {
    /// Builds a dataset with unit weights from a row-major `n_samples * n_visible` state
    /// matrix.
    pub fn from_flat(n_visible: usize, n_states: usize, states: Vec<usize>) -> Result<Self> {
        if n_visible == 0 {
            return Err(Error::data("samples must have at least one site"));
        }
        if states.is_empty() {
            return Err(Error::data("dataset is empty"));
        }
        if states.len() % n_visible != 0 {
            return Err(Error::shape(format!(
                "{} states do not fill rows of length {n_visible}",
                states.len()
            )));
        }
        if n_states < 2 {
            return Err(Error::data(format!("need at least 2 Potts states, got {n_states}")));
        }
        if let Some(pos) = states.iter().position(|&q| q >= n_states) {
            return Err(Error::OutOfRange(format!(
                "sample {} site {} has state {} >= n_states = {n_states}",
                pos / n_visible,
                pos % n_visible,
                states[pos]
            )));
        }
        let m = states.len() / n_visible;
        Ok(OneHotDataset {
            n_visible,
            n_states,
            states,
            weights: vec![1.0; m],
            labels: None,
        })
    }

    pub fn from_rows(n_states: usize, rows: &[Vec<usize>]) -> Result<Self> {
        let n_visible = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_visible) {
            return Err(Error::shape(format!(
                "row {k} has length {}, expected {n_visible}",
                r.len()
            )));
        }
        Self::from_flat(n_visible, n_states, rows.concat())
    }

    /// Replaces the sample weights. Weights must be non-negative with a positive sum.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n_samples() {
            return Err(Error::shape(format!(
                "{} weights for {} samples",
                weights.len(),
                self.n_samples()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::data("sample weights must be finite and non-negative"));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::data("effective size must be positive"));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_samples() {
            return Err(Error::shape(format!(
                "{} labels for {} samples",
                labels.len(),
                self.n_samples()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.states.len() / self.n_visible
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn sample(&self, m: usize) -> &[usize] {
        &self.states[m * self.n_visible..(m + 1) * self.n_visible]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.states.chunks_exact(self.n_visible)
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `M_eff`, the sum of the sample weights.
    pub fn effective_size(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Name of sample `m`: its label when present, its index otherwise.
    pub fn sample_name(&self, m: usize) -> String {
        match &self.labels {
            Some(l) => l[m].clone(),
            None => m.to_string(),
        }
    }

    /// Weighted single-site frequencies, laid out as `freq[i * n_states + q]`.
    pub fn site_frequencies(&self) -> Vec<f64> {
        let mut freq = vec![0.0; self.n_visible * self.n_states];
        for (row, &x) in self.samples().zip(&self.weights) {
            for (i, &q) in row.iter().enumerate() {
                freq[i * self.n_states + q] += x;
            }
        }
        let total = self.effective_size();
        freq.iter_mut().for_each(|f| *f /= total);
        freq
    }

    /// Dataset restricted to `indices`, keeping weights and labels.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut states = Vec::with_capacity(indices.len() * self.n_visible);
        for &m in indices {
            if m >= self.n_samples() {
                return Err(Error::OutOfRange(format!("sample index {m}")));
            }
            states.extend_from_slice(self.sample(m));
        }
        let mut out = Self::from_flat(self.n_visible, self.n_states, states)?;
        out = out.with_weights(indices.iter().map(|&m| self.weights[m]).collect())?;
        if let Some(labels) = &self.labels {
            out.labels = Some(indices.iter().map(|&m| labels[m].clone()).collect());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_are_enforced() {
        assert!(OneHotDataset::from_flat(2, 2, vec![]).is_err());
        assert!(OneHotDataset::from_flat(2, 2, vec![0, 1, 0]).is_err());
        assert!(OneHotDataset::from_flat(2, 2, vec![0, 2]).is_err());
        let d = OneHotDataset::from_flat(2, 2, vec![0, 1, 1, 1]).unwrap();
        assert_eq!(d.n_samples(), 2);
        assert_eq!(d.effective_size(), 2.0);
        assert!(d.clone().with_weights(vec![0.0, 0.0]).is_err());
        assert!(d.clone().with_weights(vec![-1.0, 2.0]).is_err());
        assert!(d.clone().with_labels(vec!["a".into()]).is_err());
        assert!(OneHotDataset::from_rows(2, &[vec![0, 1], vec![1]]).is_err());
    }

    #[test]
    fn weighted_frequencies() {
        let d = OneHotDataset::from_flat(1, 3, vec![0, 2])
            .unwrap()
            .with_weights(vec![3.0, 1.0])
            .unwrap();
        assert_eq!(d.site_frequencies(), vec![0.75, 0.0, 0.25]);
        let s = d.subset(&[1]).unwrap();
        assert_eq!(s.sample(0), &[2]);
        assert_eq!(s.weights(), &[1.0]);
    }
}
