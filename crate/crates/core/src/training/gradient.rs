//! First and second moments entering the log-likelihood gradient.

use crate::dataset::OneHotDataset;
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::model::PottsRBM;

use super::sampling::ChainState;

/// Averages `<delta(v_i, q)>`, `<h_mu>` and `<delta(v_i, q) h_mu>`, laid out like the
/// model parameters `(a, b, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Statistics {
    pub visible: Vec<f64>,
    pub hidden: Vec<f64>,
    pub pair: Vec<f64>,
}

/// Gradient of the log-likelihood, parameter-shaped.
pub type Gradient = Statistics;

impl Statistics {
    pub fn zeros(model: &PottsRBM) -> Self {
        let (nv, nq, nh) = model.shape();
        Statistics {
            visible: vec![0.0; nv * nq],
            hidden: vec![0.0; nh],
            pair: vec![0.0; nv * nh * nq],
        }
    }

    /// Adds `weight * stats(v)` where the hidden statistics use `p(h | v)`.
    pub(crate) fn accumulate(&mut self, model: &PottsRBM, v: &[usize], weight: f64, hidden_buf: &mut [f64]) {
        let (_, nq, nh) = model.shape();
        model.hidden_inputs_into(v, hidden_buf);
        hidden_buf.iter_mut().for_each(|x| *x = weight * sigmoid(*x));
        for (acc, &p) in self.hidden.iter_mut().zip(hidden_buf.iter()) {
            *acc += p;
        }
        for (i, &q) in v.iter().enumerate() {
            self.visible[i * nq + q] += weight;
            let block = &mut self.pair[i * nh * nq..(i + 1) * nh * nq];
            for (mu, &p) in hidden_buf.iter().enumerate() {
                block[mu * nq + q] += p;
            }
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for x in self.visible.iter_mut().chain(&mut self.hidden).chain(&mut self.pair) {
            *x *= factor;
        }
    }

    /// `self - other`, element-wise.
    pub fn minus(&self, other: &Statistics) -> Statistics {
        let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        Statistics {
            visible: sub(&self.visible, &other.visible),
            hidden: sub(&self.hidden, &other.hidden),
            pair: sub(&self.pair, &other.pair),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.visible
            .iter()
            .chain(&self.hidden)
            .chain(&self.pair)
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Weighted data averages over the samples `indices`, with `p(h | v)` for the hidden
/// layer. Weights are normalized by their sum over the batch.
pub fn data_statistics(model: &PottsRBM, data: &OneHotDataset, indices: &[usize]) -> Result<Statistics> {
    if indices.is_empty() {
        return Err(Error::data("empty batch"));
    }
    if data.n_visible() != model.n_visible() || data.n_states() != model.n_states() {
        return Err(Error::shape(format!(
            "dataset is {}x{}, model expects {}x{}",
            data.n_visible(),
            data.n_states(),
            model.n_visible(),
            model.n_states()
        )));
    }
    let mut stats = Statistics::zeros(model);
    let mut buf = vec![0.0; model.n_hidden()];
    let mut total = 0.0;
    for &m in indices {
        let x = data.weights()[m];
        total += x;
        stats.accumulate(model, data.sample(m), x, &mut buf);
    }
    if total <= 0.0 {
        return Err(Error::data("batch has zero total weight"));
    }
    stats.scale(1.0 / total);
    Ok(stats)
}

/// Model averages estimated from the visible configurations of the chains, with the
/// hidden layer averaged analytically through `p(h | v)`.
pub fn chain_statistics(model: &PottsRBM, chains: &ChainState) -> Statistics {
    let mut stats = Statistics::zeros(model);
    let mut buf = vec![0.0; model.n_hidden()];
    for c in 0..chains.n_chains() {
        stats.accumulate(model, chains.visible(c), 1.0, &mut buf);
    }
    if chains.n_chains() > 0 {
        stats.scale(1.0 / chains.n_chains() as f64);
    }
    stats
}

/// Stochastic gradient: data term over the batch minus the chain estimate of the
/// model term.
pub fn gradient(model: &PottsRBM, data: &OneHotDataset, indices: &[usize], chains: &ChainState) -> Result<Gradient> {
    let positive = data_statistics(model, data, indices)?;
    Ok(positive.minus(&chain_statistics(model, chains)))
}

/// `theta += learning_rate * gradient`.
pub fn apply_update(model: &mut PottsRBM, grad: &Gradient, learning_rate: f64) {
    let (a, b, w) = model.parameters_mut();
    for (p, g) in a.iter_mut().zip(&grad.visible) {
        *p += learning_rate * g;
    }
    for (p, g) in b.iter_mut().zip(&grad.hidden) {
        *p += learning_rate * g;
    }
    for (p, g) in w.iter_mut().zip(&grad.pair) {
        *p += learning_rate * g;
    }
}
