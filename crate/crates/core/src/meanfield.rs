//! Second-order (TAP) and first-order (naive) mean-field equations of the Potts RBM.
//!
//! The free entropy expanded to second order in the coupling strength `beta` is
//!
//! ```text
//! Gamma2(f, m) = sum_iq f a + sum_mu m b - sum_iq f log f - sum_mu H(m)
//!              + beta sum_iqmu f w m
//!              + beta^2 / 2 sum_mu (m - m^2) [ sum_iq w^2 f - sum_i (sum_q w f)^2 ]
//! ```
//!
//! and its stationary points solve
//!
//! ```text
//! m_mu   = sigmoid( b + beta sum_iq f w - beta^2 (m - 1/2) S_mu )
//! f_i^q  = softmax( a + beta sum_mu m w + beta^2 / 2 sum_mu (m - m^2) (w^2 - 2 w sum_p f w) )
//! ```
//!
//! with `S_mu = sum_iq w^2 f - sum_i (sum_q w f)^2`. Dropping the `beta^2` terms gives
//! the naive mean-field equations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sigmoid, softmax_in_place};
use crate::model::PottsRBM;

/// Smallest distance of a hidden magnetization from 0 or 1.
const M_EPS: f64 = 1e-15;
/// Floor applied to visible magnetizations before taking logarithms.
const LOG_FLOOR: f64 = 1e-12;

/// Where a magnetization trajectory started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum Origin {
    Data(usize),
    FixedPoint(usize),
    Unknown,
}

/// Visible magnetizations `f[i][q]` (flat, row-stochastic) and hidden magnetizations `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationState {
    pub f: Vec<f64>,
    pub m: Vec<f64>,
    pub origin: Origin,
}

impl MagnetizationState {
    /// Uniform visible and `m = 1/2` hidden magnetizations.
    pub fn uniform(model: &PottsRBM) -> Self {
        let (nv, nq, nh) = model.shape();
        MagnetizationState {
            f: vec![1.0 / nq as f64; nv * nq],
            m: vec![0.5; nh],
            origin: Origin::Unknown,
        }
    }

    /// Concatenation `(f, m)`, the coordinates used for clustering.
    pub fn coordinates(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.f.len() + self.m.len());
        x.extend_from_slice(&self.f);
        x.extend_from_slice(&self.m);
        x
    }

    pub fn from_coordinates(x: &[f64], n_visible_entries: usize, origin: Origin) -> Self {
        MagnetizationState {
            f: x[..n_visible_entries].to_vec(),
            m: x[n_visible_entries..].to_vec(),
            origin,
        }
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &MagnetizationState) -> f64 {
        self.f
            .iter()
            .zip(&other.f)
            .chain(self.m.iter().zip(&other.m))
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Checks normalization of `f` per site (within `tol`), ranges, and shape.
    pub fn validate(&self, model: &PottsRBM, tol: f64) -> Result<()> {
        let (nv, nq, nh) = model.shape();
        if self.f.len() != nv * nq || self.m.len() != nh {
            return Err(Error::shape(format!(
                "magnetizations have {} visible and {} hidden entries, model needs {} and {nh}",
                self.f.len(),
                self.m.len(),
                nv * nq
            )));
        }
        for (i, row) in self.f.chunks(nq).enumerate() {
            if (row.iter().sum::<f64>() - 1.0).abs() > tol || row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::OutOfRange(format!("visible magnetizations of site {i} are not a distribution")));
            }
        }
        if self.m.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::OutOfRange("hidden magnetizations must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Second-order expansion with the Onsager reaction terms.
    #[default]
    Tap,
    /// First-order (naive) mean field.
    Nmf,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tap" => Ok(Variant::Tap),
            "nmf" => Ok(Variant::Nmf),
            other => Err(Error::config(format!("unknown variant {other:?} (expected tap or nmf)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapConfig {
    pub max_iters: usize,
    /// Convergence threshold on the largest magnetization change of an undamped update.
    pub tolerance: f64,
    /// Weight of the old state: `new = (1 - damping) * update + damping * old`.
    pub damping: f64,
    pub beta: f64,
    pub variant: Variant,
    /// Iterations after which damping is raised to `escalated_damping`.
    pub escalate_after: usize,
    pub escalated_damping: f64,
}

impl Default for TapConfig {
    fn default() -> Self {
        TapConfig {
            max_iters: 2000,
            tolerance: 1e-8,
            damping: 0.3,
            beta: 1.0,
            variant: Variant::Tap,
            escalate_after: 500,
            escalated_damping: 0.7,
        }
    }
}

impl TapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.damping) || !(0.0..1.0).contains(&self.escalated_damping) {
            return Err(Error::config("damping must lie in [0, 1)"));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::config("beta must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Second-order free entropy and its components; `gamma2 = entropic + first_order +
/// second_order`, where `entropic` is the non-interacting part (field terms plus
/// entropies).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyValue {
    pub gamma2: f64,
    pub entropic: f64,
    pub first_order: f64,
    pub second_order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub state: MagnetizationState,
    pub converged: bool,
    pub iters: usize,
}

fn check_shape(model: &PottsRBM, state: &MagnetizationState) -> Result<()> {
    let (nv, nq, nh) = model.shape();
    if state.f.len() != nv * nq || state.m.len() != nh {
        return Err(Error::shape(format!(
            "magnetizations have {} visible and {} hidden entries, model needs {} and {nh}",
            state.f.len(),
            state.m.len(),
            nv * nq
        )));
    }
    Ok(())
}

/// Magnetizations seeded by a data point: `m = p(h | v)`, then
/// `f = softmax(a + sum_mu m w)`.
pub fn init_from_data(model: &PottsRBM, v: &[usize]) -> Result<MagnetizationState> {
    model.check_visible(v)?;
    let (nv, nq, nh) = model.shape();
    let mut m = vec![0.0; nh];
    model.hidden_inputs_into(v, &mut m);
    m.iter_mut().for_each(|x| *x = sigmoid(*x));
    let mut f = model.visible_fields().to_vec();
    for i in 0..nv {
        let block = model.site_weights(i);
        let row = &mut f[i * nq..(i + 1) * nq];
        for (mu, &mm) in m.iter().enumerate() {
            row.iter_mut()
                .zip(&block[mu * nq..(mu + 1) * nq])
                .for_each(|(r, w)| *r += mm * w);
        }
        softmax_in_place(row);
    }
    Ok(MagnetizationState {
        f,
        m,
        origin: Origin::Unknown,
    })
}

/// `sum_q w[i][mu][q] f[i][q]` for every `(i, mu)`, plus `S_mu` when requested.
fn weighted_visible(model: &PottsRBM, f: &[f64], with_onsager: bool) -> (Vec<f64>, Vec<f64>) {
    let (nv, nq, nh) = model.shape();
    let mut wf = vec![0.0; nv * nh];
    let mut onsager = vec![0.0; nh];
    for i in 0..nv {
        let fi = &f[i * nq..(i + 1) * nq];
        let block = model.site_weights(i);
        for mu in 0..nh {
            let w = &block[mu * nq..(mu + 1) * nq];
            let (mut s1, mut s2) = (0.0, 0.0);
            for (wq, fq) in w.iter().zip(fi) {
                s1 += wq * fq;
                s2 += wq * wq * fq;
            }
            wf[i * nh + mu] = s1;
            if with_onsager {
                onsager[mu] += s2 - s1 * s1;
            }
        }
    }
    (wf, onsager)
}

fn clamp_m(x: f64) -> f64 {
    x.clamp(M_EPS, 1.0 - M_EPS)
}

/// One damped update. Returns the new state and the largest change an undamped
/// update would have made.
fn damped_step(
    model: &PottsRBM,
    state: &MagnetizationState,
    beta: f64,
    variant: Variant,
    damping: f64,
) -> (MagnetizationState, f64) {
    let (nv, nq, nh) = model.shape();
    let second = variant == Variant::Tap;
    let beta2 = beta * beta;
    let (wf, onsager) = weighted_visible(model, &state.f, second);

    let mut residual: f64 = 0.0;
    let mut m = vec![0.0; nh];
    for mu in 0..nh {
        let mut x = model.hidden_fields()[mu];
        let mut coupling = 0.0;
        for i in 0..nv {
            coupling += wf[i * nh + mu];
        }
        x += beta * coupling;
        if second {
            x -= beta2 * (state.m[mu] - 0.5) * onsager[mu];
        }
        let proposal = clamp_m(sigmoid(x));
        residual = residual.max((proposal - state.m[mu]).abs());
        m[mu] = clamp_m((1.0 - damping) * proposal + damping * state.m[mu]);
    }

    let mut f = vec![0.0; nv * nq];
    let mut logits = vec![0.0; nq];
    for i in 0..nv {
        let block = model.site_weights(i);
        logits.copy_from_slice(&model.visible_fields()[i * nq..(i + 1) * nq]);
        for (mu, &mm) in m.iter().enumerate() {
            let w = &block[mu * nq..(mu + 1) * nq];
            if second {
                let var = mm - mm * mm;
                let wfi = wf[i * nh + mu];
                for (l, &wq) in logits.iter_mut().zip(w) {
                    *l += beta * mm * wq + 0.5 * beta2 * var * (wq * wq - 2.0 * wq * wfi);
                }
            } else {
                for (l, &wq) in logits.iter_mut().zip(w) {
                    *l += beta * mm * wq;
                }
            }
        }
        softmax_in_place(&mut logits);
        let old = &state.f[i * nq..(i + 1) * nq];
        let new = &mut f[i * nq..(i + 1) * nq];
        for ((n, &p), &o) in new.iter_mut().zip(&logits).zip(old) {
            residual = residual.max((p - o).abs());
            *n = (1.0 - damping) * p + damping * o;
        }
    }

    (
        MagnetizationState {
            f,
            m,
            origin: state.origin,
        },
        residual,
    )
}

/// One undamped application of the TAP equations: hidden magnetizations from the
/// current `f`, then visible magnetizations from the new `m`.
pub fn tap_step(model: &PottsRBM, state: &MagnetizationState, beta: f64) -> Result<MagnetizationState> {
    check_shape(model, state)?;
    Ok(damped_step(model, state, beta, Variant::Tap, 0.0).0)
}

/// Same as [`tap_step`] without the Onsager terms.
pub fn nmf_step(model: &PottsRBM, state: &MagnetizationState, beta: f64) -> Result<MagnetizationState> {
    check_shape(model, state)?;
    Ok(damped_step(model, state, beta, Variant::Nmf, 0.0).0)
}

/// Iterates the mean-field map from `state` until the undamped change falls below
/// `config.tolerance` or `config.max_iters` is reached. Non-convergence is reported in
/// the result, not as an error.
pub fn iterate_to_fixed_point(
    model: &PottsRBM,
    state: &MagnetizationState,
    config: &TapConfig,
) -> Result<FixedPointResult> {
    config.validate()?;
    check_shape(model, state)?;
    let mut current = state.clone();
    for it in 1..=config.max_iters {
        let damping = if it > config.escalate_after {
            config.damping.max(config.escalated_damping)
        } else {
            config.damping
        };
        let (next, residual) = damped_step(model, &current, config.beta, config.variant, damping);
        current = next;
        if residual < config.tolerance {
            return Ok(FixedPointResult {
                state: current,
                converged: true,
                iters: it,
            });
        }
    }
    Ok(FixedPointResult {
        state: current,
        converged: false,
        iters: config.max_iters,
    })
}

/// Runs [`iterate_to_fixed_point`] from every start in parallel; results keep the
/// input order.
pub fn solve_all(
    model: &PottsRBM,
    starts: &[MagnetizationState],
    config: &TapConfig,
) -> Result<Vec<FixedPointResult>> {
    config.validate()?;
    starts
        .par_iter()
        .map(|s| iterate_to_fixed_point(model, s, config))
        .collect()
}

/// Evaluates the second-order free entropy at `state`.
pub fn gibbs_free_energy_2(model: &PottsRBM, state: &MagnetizationState, beta: f64) -> Result<FreeEnergyValue> {
    check_shape(model, state)?;
    let (nv, nq, nh) = model.shape();
    let mut entropic = 0.0;
    for (k, &fq) in state.f.iter().enumerate() {
        let fc = fq.clamp(LOG_FLOOR, 1.0);
        entropic += fq * model.visible_fields()[k] - fc * fc.ln();
    }
    for (mu, &mm) in state.m.iter().enumerate() {
        let mc = mm.clamp(LOG_FLOOR, 1.0 - LOG_FLOOR);
        entropic += mm * model.hidden_fields()[mu] - (mc * mc.ln() + (1.0 - mc) * (1.0 - mc).ln());
    }
    let (wf, onsager) = weighted_visible(model, &state.f, true);
    let mut first = 0.0;
    for i in 0..nv {
        for (mu, &mm) in state.m.iter().enumerate() {
            first += wf[i * nh + mu] * mm;
        }
    }
    first *= beta;
    let second: f64 = 0.5
        * beta
        * beta
        * state
            .m
            .iter()
            .zip(&onsager)
            .map(|(&mm, &s)| (mm - mm * mm) * s)
            .sum::<f64>();
    let _ = nq;
    Ok(FreeEnergyValue {
        gamma2: entropic + first + second,
        entropic,
        first_order: first,
        second_order: second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Gauge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(nv: usize, nq: usize, nh: usize, seed: u64, wscale: f64) -> PottsRBM {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = (0..nv * nq).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = (0..nh).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = (0..nv * nh * nq).map(|_| wscale * rng.random_range(-1.0..1.0)).collect();
        PottsRBM::from_parts(nv, nq, nh, a, b, w, Gauge::None).unwrap()
    }

    fn random_state(model: &PottsRBM, seed: u64) -> MagnetizationState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, nq, nh) = model.shape();
        let mut f: Vec<f64> = (0..model.visible_fields().len()).map(|_| rng.random_range(0.1..1.0)).collect();
        for row in f.chunks_mut(nq) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        let m = (0..nh).map(|_| rng.random_range(0.05..0.95)).collect();
        MagnetizationState { f, m, origin: Origin::Unknown }
    }

    fn logit(x: f64) -> f64 {
        (x / (1.0 - x)).ln()
    }

    #[test]
    fn zero_model_init_is_uniform() {
        let m = PottsRBM::zeros(3, 4, 2);
        let s = init_from_data(&m, &[0, 3, 1]).unwrap();
        assert_eq!(s.m, vec![0.5, 0.5]);
        assert!(s.f.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn init_matches_hidden_conditional_and_hand_formula() {
        let model = random_model(3, 2, 2, 4, 1.0);
        let v = [1, 0, 1];
        let s = init_from_data(&model, &v).unwrap();
        assert_eq!(s.m, crate::training::hidden_conditional(&model, &v).unwrap());
        for i in 0..3 {
            let x: Vec<f64> = (0..2)
                .map(|q| model.visible_field(i, q) + (0..2).map(|mu| s.m[mu] * model.weight(i, mu, q)).sum::<f64>())
                .collect();
            let p1 = 1.0 / (1.0 + (x[0] - x[1]).exp());
            assert!((s.f[i * 2 + 1] - p1).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_reach_fixed_point_in_one_step() {
        let mut model = random_model(3, 3, 2, 1, 0.0);
        model.parameters_mut();
        let s = random_state(&model, 2);
        let t = tap_step(&model, &s, 1.0).unwrap();
        let n = nmf_step(&model, &s, 1.0).unwrap();
        assert_eq!(t, n);
        for (mu, &b) in model.hidden_fields().iter().enumerate() {
            assert!((t.m[mu] - sigmoid(b)).abs() < 1e-15);
        }
        let mut a = model.visible_fields().to_vec();
        a.chunks_mut(3).for_each(softmax_in_place);
        assert!(t.f.iter().zip(&a).all(|(x, y)| (x - y).abs() < 1e-15));
        let undamped = TapConfig { damping: 0.0, ..TapConfig::default() };
        let res = iterate_to_fixed_point(&model, &s, &undamped).unwrap();
        assert!(res.converged && res.iters <= 2);
    }

    #[test]
    fn beta_zero_ignores_weights() {
        let model = random_model(3, 3, 2, 5, 2.0);
        let s = random_state(&model, 6);
        let t = tap_step(&model, &s, 0.0).unwrap();
        let z = tap_step(&model.scaled_weights(0.0), &s, 1.0).unwrap();
        assert!(t.max_abs_diff(&z) < 1e-15);
    }

    #[test]
    fn beta_is_a_weight_rescaling() {
        let model = random_model(4, 3, 3, 7, 1.5);
        let s = random_state(&model, 8);
        for beta in [0.3, 0.8, 1.7] {
            let a = tap_step(&model, &s, beta).unwrap();
            let b = tap_step(&model.scaled_weights(beta), &s, 1.0).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn steps_preserve_normalization() {
        let model = random_model(5, 4, 3, 9, 3.0);
        let mut s = random_state(&model, 10);
        for _ in 0..20 {
            s = tap_step(&model, &s, 1.0).unwrap();
            s.validate(&model, 1e-9).unwrap();
            let n = nmf_step(&model, &s, 1.0).unwrap();
            n.validate(&model, 1e-9).unwrap();
        }
    }

    #[test]
    fn tap_minus_nmf_is_onsager_correction() {
        let model = random_model(4, 3, 3, 11, 1.0);
        let s = random_state(&model, 12);
        let beta = 0.9;
        let t = tap_step(&model, &s, beta).unwrap();
        let n = nmf_step(&model, &s, beta).unwrap();
        let (nv, nq, nh) = model.shape();
        // hidden: logit difference is -beta^2 (m - 1/2) S_mu
        for mu in 0..nh {
            let mut s_mu = 0.0;
            for i in 0..nv {
                let (mut a1, mut a2) = (0.0, 0.0);
                for q in 0..nq {
                    let w = model.weight(i, mu, q);
                    a1 += w * s.f[i * nq + q];
                    a2 += w * w * s.f[i * nq + q];
                }
                s_mu += a2 - a1 * a1;
            }
            let expected = -beta * beta * (s.m[mu] - 0.5) * s_mu;
            assert!((logit(t.m[mu]) - logit(n.m[mu]) - expected).abs() < 1e-9);
        }
        // visible: log f_tap - log f_nmf(using m_tap) is the Onsager term up to a per-site constant
        let nmf_with_tap_m = {
            let mut f = vec![0.0; nv * nq];
            for i in 0..nv {
                let mut x: Vec<f64> = (0..nq)
                    .map(|q| model.visible_field(i, q) + beta * (0..nh).map(|mu| t.m[mu] * model.weight(i, mu, q)).sum::<f64>())
                    .collect();
                softmax_in_place(&mut x);
                f[i * nq..(i + 1) * nq].copy_from_slice(&x);
            }
            f
        };
        for i in 0..nv {
            let corr: Vec<f64> = (0..nq)
                .map(|q| {
                    (0..nh)
                        .map(|mu| {
                            let m = t.m[mu];
                            let w = model.weight(i, mu, q);
                            let wf: f64 = (0..nq).map(|p| s.f[i * nq + p] * model.weight(i, mu, p)).sum();
                            0.5 * beta * beta * (m - m * m) * (w * w - 2.0 * w * wf)
                        })
                        .sum()
                })
                .collect();
            let diffs: Vec<f64> = (0..nq)
                .map(|q| (t.f[i * nq + q] / nmf_with_tap_m[i * nq + q]).ln() - corr[q])
                .collect();
            for d in &diffs {
                assert!((d - diffs[0]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn converged_point_is_self_consistent() {
        let model = random_model(6, 3, 4, 13, 0.8);
        let s = init_from_data(&model, &[0, 1, 2, 0, 1, 2]).unwrap();
        let cfg = TapConfig::default();
        let res = iterate_to_fixed_point(&model, &s, &cfg).unwrap();
        assert!(res.converged);
        let again = tap_step(&model, &res.state, 1.0).unwrap();
        assert!(again.max_abs_diff(&res.state) < cfg.tolerance);
    }

    #[test]
    fn free_energy_of_uniform_zero_model_is_entropy() {
        let model = PottsRBM::zeros(3, 4, 2);
        let g = gibbs_free_energy_2(&model, &MagnetizationState::uniform(&model), 1.0).unwrap();
        assert!((g.gamma2 - (3.0 * 4f64.ln() + 2.0 * 2f64.ln())).abs() < 1e-12);
        assert_eq!(g.first_order, 0.0);
        assert_eq!(g.second_order, 0.0);
    }

    #[test]
    fn first_order_component_is_mean_field_energy() {
        let model = random_model(3, 3, 2, 14, 1.0);
        let s = random_state(&model, 15);
        let beta = 0.7;
        let g = gibbs_free_energy_2(&model, &s, beta).unwrap();
        let mut direct = 0.0;
        for i in 0..3 {
            for q in 0..3 {
                for mu in 0..2 {
                    direct += s.f[i * 3 + q] * model.weight(i, mu, q) * s.m[mu];
                }
            }
        }
        assert!((g.first_order - beta * direct).abs() < 1e-12);
        assert!((g.gamma2 - g.entropic - g.first_order - g.second_order).abs() < 1e-12);
    }

    #[test]
    fn config_and_shape_errors() {
        let model = PottsRBM::zeros(2, 2, 1);
        let bad = MagnetizationState { f: vec![0.5; 2], m: vec![0.5], origin: Origin::Unknown };
        assert!(tap_step(&model, &bad, 1.0).is_err());
        let cfg = TapConfig { tolerance: 0.0, ..TapConfig::default() };
        assert!(iterate_to_fixed_point(&model, &MagnetizationState::uniform(&model), &cfg).is_err());
        assert!("tap".parse::<Variant>().is_ok() && "bp".parse::<Variant>().is_err());
    }
}
