//! Layer conditionals and block-Gibbs sampling of persistent chains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{sigmoid, softmax_in_place};
use crate::model::PottsRBM;

/// `p(h_mu = 1 | v) = sigmoid(b_mu + sum_i w[i][mu][v_i])`.
pub fn hidden_conditional(model: &PottsRBM, v: &[usize]) -> Result<Vec<f64>> {
    model.check_visible(v)?;
    let mut out = vec![0.0; model.n_hidden()];
    model.hidden_inputs_into(v, &mut out);
    out.iter_mut().for_each(|x| *x = sigmoid(*x));
    Ok(out)
}

/// `p(v_i = q | h)` as a flat `n_visible x n_states` row-stochastic matrix.
pub fn visible_conditional(model: &PottsRBM, h: &[u8]) -> Result<Vec<f64>> {
    let (nv, nq, nh) = model.shape();
    if h.len() != nh {
        return Err(Error::shape(format!("hidden vector has length {}, model has {nh} units", h.len())));
    }
    if h.iter().any(|&x| x > 1) {
        return Err(Error::OutOfRange("hidden units must be 0 or 1".into()));
    }
    let mut out = model.visible_fields().to_vec();
    for i in 0..nv {
        let row = &mut out[i * nq..(i + 1) * nq];
        for (mu, _) in h.iter().enumerate().filter(|(_, &x)| x == 1) {
            let wrow = &model.site_weights(i)[mu * nq..(mu + 1) * nq];
            row.iter_mut().zip(wrow).for_each(|(r, w)| *r += w);
        }
        softmax_in_place(row);
    }
    Ok(out)
}

/// Persistent Markov chains: one visible and one hidden configuration per chain, each
/// chain with its own random stream.
#[derive(Debug, Clone)]
pub struct ChainState {
    n_visible: usize,
    n_hidden: usize,
    visible: Vec<usize>,
    hidden: Vec<u8>,
    rngs: Vec<ChaCha8Rng>,
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

impl ChainState {
    /// Starts `n_chains` chains from the independent-site distribution `softmax(a_i)`
    /// followed by one draw of the hidden layer.
    pub fn new(model: &PottsRBM, n_chains: usize, seed: u64) -> Self {
        let (nv, nq, nh) = model.shape();
        let mut rngs: Vec<ChaCha8Rng> = (0..n_chains).map(|c| chain_rng(seed, c)).collect();
        let mut site_probs = model.visible_fields().to_vec();
        site_probs.chunks_mut(nq).for_each(softmax_in_place);
        let mut visible = vec![0; n_chains * nv];
        let mut hidden = vec![0u8; n_chains * nh];
        let mut inputs = vec![0.0; nh];
        for (c, rng) in rngs.iter_mut().enumerate() {
            let v = &mut visible[c * nv..(c + 1) * nv];
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = sample_categorical(&site_probs[i * nq..(i + 1) * nq], rng.random());
            }
            model.hidden_inputs_into(v, &mut inputs);
            for (h, &x) in hidden[c * nh..(c + 1) * nh].iter_mut().zip(&inputs) {
                *h = (rng.random::<f64>() < sigmoid(x)) as u8;
            }
        }
        ChainState {
            n_visible: nv,
            n_hidden: nh,
            visible,
            hidden,
            rngs,
        }
    }

    /// Chains with explicit configurations (row-major, one row per chain).
    pub fn from_states(
        n_visible: usize,
        n_hidden: usize,
        visible: Vec<usize>,
        hidden: Vec<u8>,
        seed: u64,
    ) -> Result<Self> {
        if n_visible == 0 || visible.len() % n_visible != 0 {
            return Err(Error::shape("visible states do not form whole chains"));
        }
        let n_chains = visible.len() / n_visible;
        if hidden.len() != n_chains * n_hidden {
            return Err(Error::shape(format!(
                "hidden states have length {}, expected {}",
                hidden.len(),
                n_chains * n_hidden
            )));
        }
        Ok(ChainState {
            n_visible,
            n_hidden,
            visible,
            hidden,
            rngs: (0..n_chains).map(|c| chain_rng(seed, c)).collect(),
        })
    }

    pub fn n_chains(&self) -> usize {
        self.rngs.len()
    }

    pub fn visible(&self, chain: usize) -> &[usize] {
        &self.visible[chain * self.n_visible..(chain + 1) * self.n_visible]
    }

    pub fn hidden(&self, chain: usize) -> &[u8] {
        &self.hidden[chain * self.n_hidden..(chain + 1) * self.n_hidden]
    }

    pub fn visible_states(&self) -> &[usize] {
        &self.visible
    }

    pub fn hidden_states(&self) -> &[u8] {
        &self.hidden
    }

    /// Same configurations and random streams.
    pub fn same_state(&self, other: &ChainState) -> bool {
        self.visible == other.visible && self.hidden == other.hidden && self.rngs == other.rngs
    }
}

#[inline]
fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (q, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return q;
        }
    }
    probs.len() - 1
}

#[inline]
fn sigmoid32(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-precision copy of the weights, rearranged so that both layer updates read
/// contiguous memory. For binary variables only the differences
/// `w[.][.][1] - w[.][.][0]` are kept. Layer inputs are recomputed in double precision
/// at the start of every sweep, so rounding does not accumulate across updates.
struct SamplerView<'a> {
    model: &'a PottsRBM,
    /// `[mu][i][q]`, or `[mu][i]` differences when binary.
    by_hidden: Vec<f32>,
    /// `[i][q][mu]`, or `[i][mu]` differences when binary.
    by_site: Vec<f32>,
}

impl<'a> SamplerView<'a> {
    fn new(model: &'a PottsRBM) -> Self {
        let (nv, nq, nh) = model.shape();
        let (mut by_hidden, mut by_site);
        if nq == 2 {
            by_hidden = vec![0.0; nv * nh];
            by_site = vec![0.0; nv * nh];
            for i in 0..nv {
                for mu in 0..nh {
                    let d = (model.weight(i, mu, 1) - model.weight(i, mu, 0)) as f32;
                    by_hidden[mu * nv + i] = d;
                    by_site[i * nh + mu] = d;
                }
            }
        } else {
            by_hidden = vec![0.0; nv * nh * nq];
            by_site = vec![0.0; nv * nh * nq];
            for i in 0..nv {
                for mu in 0..nh {
                    for q in 0..nq {
                        let w = model.weight(i, mu, q) as f32;
                        by_hidden[(mu * nv + i) * nq + q] = w;
                        by_site[(i * nq + q) * nh + mu] = w;
                    }
                }
            }
        }
        SamplerView {
            model,
            by_hidden,
            by_site,
        }
    }

    fn run_chain(&self, v: &mut [usize], h: &mut [u8], rng: &mut ChaCha8Rng, k: usize) {
        let mut input = vec![0.0; self.model.n_hidden()];
        self.model.hidden_inputs_into(v, &mut input);
        let hidden_input: Vec<f32> = input.iter().map(|&x| x as f32).collect();
        if self.model.n_states() == 2 {
            self.run_binary(v, h, hidden_input, rng, k)
        } else {
            self.run_potts(v, h, hidden_input, rng, k)
        }
    }

    /// Samples the hidden layer, returning the units that changed and the number of
    /// active units.
    fn sample_hidden(h: &mut [u8], input: &[f32], rng: &mut ChaCha8Rng, flipped: &mut Vec<usize>) -> usize {
        flipped.clear();
        let mut active = 0;
        for (mu, (hm, &x)) in h.iter_mut().zip(input).enumerate() {
            let new = (rng.random::<f32>() < sigmoid32(x)) as u8;
            if new != *hm {
                flipped.push(mu);
            }
            *hm = new;
            active += new as usize;
        }
        active
    }

    /// Adds `sign * column(mu)` for each changed hidden unit, or rebuilds the input from
    /// scratch when that is cheaper.
    fn refresh_visible_input(&self, input: &mut [f32], base: &[f32], h: &[u8], flipped: &[usize], active: usize, fresh: bool) {
        let len = input.len();
        let column = |mu: usize| &self.by_hidden[mu * len..(mu + 1) * len];
        if fresh || flipped.len() > active {
            input.copy_from_slice(base);
            for (mu, _) in h.iter().enumerate().filter(|(_, &x)| x == 1) {
                input.iter_mut().zip(column(mu)).for_each(|(j, w)| *j += w);
            }
        } else {
            for &mu in flipped {
                if h[mu] == 1 {
                    input.iter_mut().zip(column(mu)).for_each(|(j, w)| *j += w);
                } else {
                    input.iter_mut().zip(column(mu)).for_each(|(j, w)| *j -= w);
                }
            }
        }
    }

    /// Runs `k` alternating `h | v`, `v | h` updates on one binary chain; the visible
    /// input of site `i` is the log-odds of state 1.
    fn run_binary(&self, v: &mut [usize], h: &mut [u8], mut hidden_input: Vec<f32>, rng: &mut ChaCha8Rng, k: usize) {
        let model = self.model;
        let (nv, _, nh) = model.shape();
        let base: Vec<f32> = (0..nv).map(|i| (model.visible_field(i, 1) - model.visible_field(i, 0)) as f32).collect();
        let mut visible_input = vec![0.0; nv];
        let mut flipped = Vec::with_capacity(nh);
        for step in 0..k {
            let active = Self::sample_hidden(h, &hidden_input, rng, &mut flipped);
            self.refresh_visible_input(&mut visible_input, &base, h, &flipped, active, step == 0);
            for (i, vi) in v.iter_mut().enumerate() {
                let q = (rng.random::<f32>() < sigmoid32(visible_input[i])) as usize;
                if q != *vi {
                    let d = &self.by_site[i * nh..(i + 1) * nh];
                    if q == 1 {
                        hidden_input.iter_mut().zip(d).for_each(|(x, w)| *x += w);
                    } else {
                        hidden_input.iter_mut().zip(d).for_each(|(x, w)| *x -= w);
                    }
                    *vi = q;
                }
            }
        }
    }

    /// Same as [`Self::run_binary`] for any number of states.
    fn run_potts(&self, v: &mut [usize], h: &mut [u8], mut hidden_input: Vec<f32>, rng: &mut ChaCha8Rng, k: usize) {
        let model = self.model;
        let (_, nq, nh) = model.shape();
        let base: Vec<f32> = model.visible_fields().iter().map(|&a| a as f32).collect();
        let mut visible_input = vec![0.0; base.len()];
        let mut flipped = Vec::with_capacity(nh);
        let mut probs = vec![0.0; nq];
        for step in 0..k {
            let active = Self::sample_hidden(h, &hidden_input, rng, &mut flipped);
            self.refresh_visible_input(&mut visible_input, &base, h, &flipped, active, step == 0);
            for (i, vi) in v.iter_mut().enumerate() {
                probs
                    .iter_mut()
                    .zip(&visible_input[i * nq..(i + 1) * nq])
                    .for_each(|(p, &x)| *p = x as f64);
                softmax_in_place(&mut probs);
                let q = sample_categorical(&probs, rng.random());
                if q != *vi {
                    let new = &self.by_site[(i * nq + q) * nh..(i * nq + q + 1) * nh];
                    let old = &self.by_site[(i * nq + *vi) * nh..(i * nq + *vi + 1) * nh];
                    for ((x, a), b) in hidden_input.iter_mut().zip(new).zip(old) {
                        *x += a - b;
                    }
                    *vi = q;
                }
            }
        }
    }
}

/// Advances every chain by `k` block-Gibbs steps (`h | v` then `v | h`). Chains are
/// updated in parallel; results depend only on each chain's random stream.
pub fn gibbs_sweep(model: &PottsRBM, chains: &mut ChainState, k: usize) -> Result<()> {
    if chains.n_visible != model.n_visible() || chains.n_hidden != model.n_hidden() {
        return Err(Error::shape(format!(
            "chains are {}x{}, model is {}x{}",
            chains.n_visible,
            chains.n_hidden,
            model.n_visible(),
            model.n_hidden()
        )));
    }
    if k == 0 || chains.n_chains() == 0 {
        return Ok(());
    }
    let view = SamplerView::new(model);
    let (nv, nh) = (chains.n_visible, chains.n_hidden.max(1));
    let hidden_chunks: Vec<&mut [u8]> = if chains.n_hidden == 0 {
        (0..chains.rngs.len()).map(|_| <&mut [u8]>::default()).collect()
    } else {
        chains.hidden.chunks_mut(nh).collect()
    };
    chains
        .visible
        .par_chunks_mut(nv)
        .zip(hidden_chunks.into_par_iter())
        .zip(chains.rngs.par_iter_mut())
        .for_each(|((v, h), rng)| view.run_chain(v, h, rng, k));
    Ok(())
}
