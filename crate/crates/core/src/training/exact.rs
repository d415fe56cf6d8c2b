//! Exact computations for small models by enumerating the visible layer; the hidden
//! layer is summed analytically.

use crate::dataset::OneHotDataset;
use crate::error::{Error, Result};
use crate::math::{logsumexp, softplus};
use crate::model::PottsRBM;

use super::gradient::{data_statistics, Gradient, Statistics};

/// Largest `n_states^n_visible * 2^n_hidden` accepted for enumeration.
pub const MAX_ENUMERATION: f64 = (1u64 << 26) as f64;

pub fn check_enumerable(model: &PottsRBM) -> Result<()> {
    let (nv, nq, nh) = model.shape();
    let states = (nq as f64).powi(nv as i32) * 2f64.powi(nh as i32);
    if states > MAX_ENUMERATION {
        return Err(Error::TooLarge {
            states,
            limit: MAX_ENUMERATION,
        });
    }
    Ok(())
}

/// Calls `f` on every visible configuration in lexicographic order (site 0 slowest).
pub(crate) fn for_each_visible(nv: usize, nq: usize, mut f: impl FnMut(&[usize])) {
    let mut v = vec![0; nv];
    loop {
        f(&v);
        let mut i = nv;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            v[i] += 1;
            if v[i] < nq {
                break;
            }
            v[i] = 0;
        }
    }
}

fn neg_free_energy(model: &PottsRBM, v: &[usize], buf: &mut [f64]) -> f64 {
    model.hidden_inputs_into(v, buf);
    let fields: f64 = v.iter().enumerate().map(|(i, &q)| model.visible_field(i, q)).sum();
    fields + buf.iter().map(|&x| softplus(x)).sum::<f64>()
}

pub fn log_partition(model: &PottsRBM) -> Result<f64> {
    check_enumerable(model)?;
    let (nv, nq, nh) = model.shape();
    let mut buf = vec![0.0; nh];
    let mut terms = Vec::with_capacity(nq.pow(nv as u32));
    for_each_visible(nv, nq, |v| terms.push(neg_free_energy(model, v, &mut buf)));
    Ok(logsumexp(&terms))
}

/// Weighted mean of `log p(v)` over the dataset with the exact partition function.
pub fn exact_loglik(model: &PottsRBM, data: &OneHotDataset) -> Result<f64> {
    if data.n_visible() != model.n_visible() || data.n_states() != model.n_states() {
        return Err(Error::shape("dataset and model dimensions differ"));
    }
    let log_z = log_partition(model)?;
    let mut buf = vec![0.0; model.n_hidden()];
    let total: f64 = data
        .samples()
        .zip(data.weights())
        .map(|(v, &x)| x * neg_free_energy(model, v, &mut buf))
        .sum();
    Ok(total / data.effective_size() - log_z)
}

/// Exact model averages `<delta>`, `<h>` and `<delta h>` under the Boltzmann measure.
pub fn exact_model_statistics(model: &PottsRBM) -> Result<Statistics> {
    let log_z = log_partition(model)?;
    let (nv, nq, nh) = model.shape();
    let mut stats = Statistics::zeros(model);
    let mut buf = vec![0.0; nh];
    let mut fe_buf = vec![0.0; nh];
    for_each_visible(nv, nq, |v| {
        let p = (neg_free_energy(model, v, &mut fe_buf) - log_z).exp();
        stats.accumulate(model, v, p, &mut buf);
    });
    Ok(stats)
}

/// Exact single-variable marginals: `p(v_i = q)` laid out `[i][q]` and `p(h_mu = 1)`.
pub fn exact_marginals(model: &PottsRBM) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = exact_model_statistics(model)?;
    Ok((s.visible, s.hidden))
}

/// Gradient of [`exact_loglik`] over the whole dataset.
pub fn exact_gradient(model: &PottsRBM, data: &OneHotDataset) -> Result<Gradient> {
    let all: Vec<usize> = (0..data.n_samples()).collect();
    let positive = data_statistics(model, data, &all)?;
    Ok(positive.minus(&exact_model_statistics(model)?))
}

/// Weighted pseudo-log-likelihood `sum_i log p(v_i | v_-i)` averaged over the first
/// `max_samples` samples. Used as a likelihood proxy when enumeration is infeasible.
pub fn pseudo_loglik(model: &PottsRBM, data: &OneHotDataset, max_samples: usize) -> Result<f64> {
    if data.n_visible() != model.n_visible() || data.n_states() != model.n_states() {
        return Err(Error::shape("dataset and model dimensions differ"));
    }
    let (_, nq, nh) = model.shape();
    let mut inputs = vec![0.0; nh];
    let mut cond = vec![0.0; nq];
    let (mut total, mut weight) = (0.0, 0.0);
    for (v, &x) in data.samples().zip(data.weights()).take(max_samples.max(1)) {
        model.hidden_inputs_into(v, &mut inputs);
        let mut ll = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            let block = model.site_weights(i);
            for (q, c) in cond.iter_mut().enumerate() {
                *c = model.visible_field(i, q)
                    + inputs
                        .iter()
                        .zip(block.chunks_exact(nq))
                        .map(|(&x, w)| softplus(x + w[q] - w[vi]))
                        .sum::<f64>();
            }
            ll += cond[vi] - logsumexp(&cond);
        }
        total += x * ll;
        weight += x;
    }
    Ok(if weight > 0.0 { total / weight } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Gauge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(nv: usize, nq: usize, nh: usize, seed: u64) -> PottsRBM {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        PottsRBM::from_parts(nv, nq, nh, draw(nv * nq), draw(nh), draw(nv * nh * nq), Gauge::None).unwrap()
    }

    #[test]
    fn enumeration_order_and_count() {
        let mut seen = Vec::new();
        for_each_visible(2, 3, |v| seen.push(v.to_vec()));
        assert_eq!(seen.len(), 9);
        assert_eq!(seen[0], vec![0, 0]);
        assert_eq!(seen[1], vec![0, 1]);
        assert_eq!(seen[8], vec![2, 2]);
    }

    #[test]
    fn zero_model_loglik_is_uniform() {
        let m = PottsRBM::zeros(3, 4, 2);
        let d = OneHotDataset::from_rows(4, &[vec![0, 1, 3], vec![2, 2, 2]]).unwrap();
        assert!((exact_loglik(&m, &d).unwrap() + 3.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loglik_is_non_positive_and_approaches_zero_for_peaked_model() {
        let d = OneHotDataset::from_rows(2, &vec![vec![1, 0, 1]; 3]).unwrap();
        let mut a = vec![0.0; 6];
        for (i, &q) in [1usize, 0, 1].iter().enumerate() {
            a[i * 2 + q] = 15.0;
        }
        let m = PottsRBM::from_parts(3, 2, 1, a, vec![0.0], vec![0.0; 6], Gauge::None).unwrap();
        let ll = exact_loglik(&m, &d).unwrap();
        assert!(ll <= 0.0 && ll > -1e-5);
        assert!(exact_loglik(&random_model(3, 2, 1, 4), &d).unwrap() <= 0.0);
    }

    #[test]
    fn size_guard() {
        let m = PottsRBM::zeros(20, 4, 1);
        assert!(matches!(log_partition(&m), Err(Error::TooLarge { .. })));
        check_enumerable(&PottsRBM::zeros(13, 2, 13)).unwrap();
        assert!(check_enumerable(&PottsRBM::zeros(13, 2, 14)).is_err());
    }

    #[test]
    fn marginals_are_normalized() {
        let (f, m) = exact_marginals(&random_model(3, 3, 2, 6)).unwrap();
        for row in f.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(m.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn pseudo_loglik_of_zero_model() {
        let m = PottsRBM::zeros(4, 3, 2);
        let d = OneHotDataset::from_rows(3, &[vec![0, 1, 2, 0]]).unwrap();
        assert!((pseudo_loglik(&m, &d, 10).unwrap() + 4.0 * 3f64.ln()).abs() < 1e-12);
    }
}
