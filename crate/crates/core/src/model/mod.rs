//! The Potts restricted Boltzmann machine: parameters, energy and gauge arithmetic.
//!
//! Storage layout is fixed:
//!
//! * visible fields `a[i][q]` at `i * n_states + q`
//! * hidden fields `b[mu]`
//! * weights `w[i][mu][q]` at `(i * n_hidden + mu) * n_states + q`
//!
//! so the inner loops of the samplers run contiguously over the Potts state `q`.

mod checkpoint;
mod spectrum;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointDir, CheckpointSeries, CheckpointStore,
    SeriesManifest, CHECKPOINT_MAGIC,
};
pub use spectrum::{project_dataset, reshaped_weights, weight_spectrum};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::OneHotDataset;
use crate::error::{Error, Result};
use crate::math::softplus;

/// Tolerance used when checking gauge constraints.
pub const GAUGE_TOLERANCE: f64 = 1e-10;

/// Gauge fixing prescription of the Potts parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    /// `sum_q a[i][q] = 0` and `sum_q w[i][mu][q] = 0`.
    ZeroSum,
    /// The last Potts state carries zero field and zero weight.
    LatticeGas,
    /// No constraint.
    None,
}

impl Gauge {
    pub fn to_byte(self) -> u8 {
        match self {
            Gauge::None => 0,
            Gauge::ZeroSum => 1,
            Gauge::LatticeGas => 2,
        }
    }

    pub fn from_byte(byte: u8) -> Option<Self> {
        match byte {
            0 => Some(Gauge::None),
            1 => Some(Gauge::ZeroSum),
            2 => Some(Gauge::LatticeGas),
            _ => None,
        }
    }
}

/// Parameters `(a, b, w)` of a Potts RBM with binary hidden units.
#[derive(Debug, Clone, PartialEq)]
pub struct PottsRBM {
    n_visible: usize,
    n_states: usize,
    n_hidden: usize,
    pub(crate) visible_fields: Vec<f64>,
    pub(crate) hidden_fields: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    gauge: Gauge,
}

impl PottsRBM {
    /// All-zero parameters. Zero parameters satisfy every gauge, so the model is
    /// tagged [`Gauge::ZeroSum`].
    pub fn zeros(n_visible: usize, n_states: usize, n_hidden: usize) -> Self {
        PottsRBM {
            n_visible,
            n_states,
            n_hidden,
            visible_fields: vec![0.0; n_visible * n_states],
            hidden_fields: vec![0.0; n_hidden],
            weights: vec![0.0; n_visible * n_hidden * n_states],
            gauge: Gauge::ZeroSum,
        }
    }

    /// Builds a model from flat parameter vectors in the documented layout and
    /// checks that they are finite and satisfy `gauge`.
    pub fn from_parts(
        n_visible: usize,
        n_states: usize,
        n_hidden: usize,
        visible_fields: Vec<f64>,
        hidden_fields: Vec<f64>,
        weights: Vec<f64>,
        gauge: Gauge,
    ) -> Result<Self> {
        if n_visible == 0 || n_states < 2 {
            return Err(Error::shape(format!(
                "need n_visible >= 1 and n_states >= 2, got {n_visible} and {n_states}"
            )));
        }
        if visible_fields.len() != n_visible * n_states {
            return Err(Error::shape(format!(
                "visible fields have length {}, expected {}",
                visible_fields.len(),
                n_visible * n_states
            )));
        }
        if hidden_fields.len() != n_hidden {
            return Err(Error::shape(format!(
                "hidden fields have length {}, expected {n_hidden}",
                hidden_fields.len()
            )));
        }
        if weights.len() != n_visible * n_hidden * n_states {
            return Err(Error::shape(format!(
                "weights have length {}, expected {}",
                weights.len(),
                n_visible * n_hidden * n_states
            )));
        }
        let model = PottsRBM {
            n_visible,
            n_states,
            n_hidden,
            visible_fields,
            hidden_fields,
            weights,
            gauge,
        };
        if !model.is_finite() {
            return Err(Error::OutOfRange("parameters must be finite".into()));
        }
        if let Some(violation) = model.gauge_violation(gauge) {
            return Err(Error::OutOfRange(format!(
                "parameters violate {gauge:?} gauge by {violation:e}"
            )));
        }
        Ok(model)
    }

    /// Initial parameters for training: weights drawn i.i.d. from `N(0, weight_std^2)`,
    /// visible fields set to the log of the smoothed weighted single-site frequencies of
    /// `data`, hidden fields zero. The result is projected to the zero-sum gauge.
    pub fn init_from_data<R: Rng + ?Sized>(
        data: &OneHotDataset,
        n_hidden: usize,
        weight_std: f64,
        pseudocount: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let (n_visible, n_states) = (data.n_visible(), data.n_states());
        let mut model = PottsRBM::zeros(n_visible, n_states, n_hidden);
        let normal = Normal::new(0.0, weight_std)
            .map_err(|e| Error::config(format!("weight std: {e}")))?;
        for w in model.weights.iter_mut() {
            *w = normal.sample(rng);
        }
        let freq = data.site_frequencies();
        for (a, f) in model.visible_fields.iter_mut().zip(&freq) {
            *a = ((1.0 - pseudocount) * f + pseudocount / n_states as f64).ln();
        }
        model.gauge = Gauge::None;
        Ok(model.apply_gauge(Gauge::ZeroSum))
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    /// `(n_visible, n_states, n_hidden)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_visible, self.n_states, self.n_hidden)
    }

    pub fn visible_fields(&self) -> &[f64] {
        &self.visible_fields
    }

    pub fn hidden_fields(&self) -> &[f64] {
        &self.hidden_fields
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn visible_field(&self, i: usize, q: usize) -> f64 {
        self.visible_fields[i * self.n_states + q]
    }

    #[inline]
    pub fn weight(&self, i: usize, mu: usize, q: usize) -> f64 {
        self.weights[(i * self.n_hidden + mu) * self.n_states + q]
    }

    /// Weights of site `i` as an `n_hidden * n_states` block.
    #[inline]
    pub fn site_weights(&self, i: usize) -> &[f64] {
        let len = self.n_hidden * self.n_states;
        &self.weights[i * len..(i + 1) * len]
    }

    pub fn is_finite(&self) -> bool {
        self.visible_fields
            .iter()
            .chain(&self.hidden_fields)
            .chain(&self.weights)
            .all(|x| x.is_finite())
    }

    /// Same fields, weights multiplied by `factor`.
    pub fn scaled_weights(&self, factor: f64) -> PottsRBM {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= factor);
        out
    }

    /// Largest deviation from the constraints of `gauge`, or `None` when they hold
    /// within [`GAUGE_TOLERANCE`].
    pub fn gauge_violation(&self, gauge: Gauge) -> Option<f64> {
        let nq = self.n_states;
        let worst = match gauge {
            Gauge::None => 0.0,
            Gauge::ZeroSum => self
                .visible_fields
                .chunks(nq)
                .chain(self.weights.chunks(nq))
                .map(|row| row.iter().sum::<f64>().abs())
                .fold(0.0, f64::max),
            Gauge::LatticeGas => self
                .visible_fields
                .chunks(nq)
                .chain(self.weights.chunks(nq))
                .map(|row| row[nq - 1].abs())
                .fold(0.0, f64::max),
        };
        (worst > GAUGE_TOLERANCE).then_some(worst)
    }

    pub(crate) fn check_visible(&self, v: &[usize]) -> Result<()> {
        if v.len() != self.n_visible {
            return Err(Error::shape(format!(
                "visible configuration has length {}, model has {} sites",
                v.len(),
                self.n_visible
            )));
        }
        if let Some(bad) = v.iter().find(|&&q| q >= self.n_states) {
            return Err(Error::OutOfRange(format!(
                "visible state {bad} not below n_states = {}",
                self.n_states
            )));
        }
        Ok(())
    }

    /// Energy `E(v, h)` of a joint configuration.
    pub fn energy(&self, v: &[usize], h: &[u8]) -> Result<f64> {
        self.check_visible(v)?;
        if h.len() != self.n_hidden {
            return Err(Error::shape(format!(
                "hidden configuration has length {}, model has {} units",
                h.len(),
                self.n_hidden
            )));
        }
        if h.iter().any(|&x| x > 1) {
            return Err(Error::OutOfRange("hidden units must be 0 or 1".into()));
        }
        let mut e = 0.0;
        for (i, &q) in v.iter().enumerate() {
            e -= self.visible_field(i, q);
        }
        for (mu, &hm) in h.iter().enumerate() {
            if hm == 1 {
                e -= self.hidden_fields[mu];
                for (i, &q) in v.iter().enumerate() {
                    e -= self.weight(i, mu, q);
                }
            }
        }
        Ok(e)
    }

    /// Hidden-unit inputs `b[mu] + sum_i w[i][mu][v_i]` written into `out`.
    pub(crate) fn hidden_inputs_into(&self, v: &[usize], out: &mut [f64]) {
        out.copy_from_slice(&self.hidden_fields);
        let (nh, nq) = (self.n_hidden, self.n_states);
        for (i, &q) in v.iter().enumerate() {
            let block = &self.weights[i * nh * nq..(i + 1) * nh * nq];
            for (o, row) in out.iter_mut().zip(block.chunks_exact(nq)) {
                *o += row[q];
            }
        }
    }

    /// Free energy of a visible configuration with the hidden layer summed out,
    /// so that `p(v) = exp(-F(v)) / Z`.
    pub fn free_energy(&self, v: &[usize]) -> Result<f64> {
        self.check_visible(v)?;
        let mut inputs = vec![0.0; self.n_hidden];
        self.hidden_inputs_into(v, &mut inputs);
        let mut neg = 0.0;
        for (i, &q) in v.iter().enumerate() {
            neg += self.visible_field(i, q);
        }
        neg += inputs.iter().map(|&x| softplus(x)).sum::<f64>();
        Ok(-neg)
    }

    /// Returns an equivalent model (identical Boltzmann distribution over `(v, h)`)
    /// satisfying `target`.
    ///
    /// Shifting `w[i][mu][.]` by a per-`(i, mu)` constant `c` is compensated by adding
    /// `sum_i c` to `b[mu]`; shifting `a[i][.]` by a constant only changes `Z`.
    pub fn apply_gauge(&self, target: Gauge) -> PottsRBM {
        let mut out = self.clone();
        let nq = self.n_states;
        let nh = self.n_hidden;
        let shift = |row: &[f64]| -> f64 {
            match target {
                Gauge::ZeroSum => row.iter().sum::<f64>() / nq as f64,
                Gauge::LatticeGas => row[nq - 1],
                Gauge::None => 0.0,
            }
        };
        if target != Gauge::None {
            for row in out.visible_fields.chunks_mut(nq) {
                let c = shift(row);
                row.iter_mut().for_each(|x| *x -= c);
            }
            for (idx, row) in out.weights.chunks_mut(nq).enumerate() {
                let c = shift(row);
                row.iter_mut().for_each(|x| *x -= c);
                out.hidden_fields[idx % nh] += c;
            }
            if target == Gauge::LatticeGas {
                // exact zeros rather than x - x rounding residue
                for row in out
                    .visible_fields
                    .chunks_mut(nq)
                    .chain(out.weights.chunks_mut(nq))
                {
                    row[nq - 1] = 0.0;
                }
            }
        }
        out.gauge = target;
        out
    }

    /// Mutable access to the raw parameter blocks `(a, b, w)`. The gauge tag is reset
    /// to [`Gauge::None`] since arbitrary edits may break it.
    pub fn parameters_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        self.gauge = Gauge::None;
        (
            &mut self.visible_fields,
            &mut self.hidden_fields,
            &mut self.weights,
        )
    }
}
