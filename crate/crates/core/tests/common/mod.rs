//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbmtree::{Gauge, OneHotDataset, PottsRBM};

/// Random parameters uniform in `[-scale_field, scale_field]` (fields) and
/// `[-scale_weight, scale_weight]` (weights).
pub fn random_model(nv: usize, nq: usize, nh: usize, seed: u64, scale_field: f64, scale_weight: f64) -> PottsRBM {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..nv * nq).map(|_| rng.random_range(-scale_field..=scale_field)).collect();
    let b = (0..nh).map(|_| rng.random_range(-scale_field..=scale_field)).collect();
    let w = (0..nv * nh * nq).map(|_| rng.random_range(-scale_weight..=scale_weight)).collect();
    PottsRBM::from_parts(nv, nq, nh, a, b, w, Gauge::None).unwrap()
}

/// Binary template with the first half of the sites set.
pub fn template(nv: usize) -> Vec<usize> {
    (0..nv).map(|i| usize::from(i < nv / 2)).collect()
}

/// One hidden unit, binary visibles: `-E = (s/2) (2h - 1) sum_i x_i` with `x_i = +1`
/// where `v` agrees with the template and `-1` elsewhere. Modes are the template
/// (h = 1) and its complement (h = 0); strong `s` makes both mean-field fixed points,
/// weak `s` leaves a single symmetric one.
pub fn two_mode_model(nv: usize, strength: f64) -> PottsRBM {
    let t = template(nv);
    let mut a = vec![0.0; nv * 2];
    let mut w = vec![0.0; nv * 2];
    for i in 0..nv {
        for q in 0..2 {
            let x = if q == t[i] { 1.0 } else { -1.0 };
            a[i * 2 + q] = -0.5 * strength * x;
            w[i * 2 + q] = strength * x;
        }
    }
    PottsRBM::from_parts(nv, 2, 1, a, vec![0.0], w, Gauge::ZeroSum).unwrap()
}

/// Noisy copies of the template (first half of the rows) and of its complement; one
/// site in each row is flipped. Returns the data and the mode of each row.
pub fn two_mode_data(nv: usize, per_mode: usize) -> (OneHotDataset, Vec<usize>) {
    let t = template(nv);
    let mut rows = Vec::new();
    let mut modes = Vec::new();
    for mode in 0..2 {
        for k in 0..per_mode {
            let mut row: Vec<usize> = t.iter().map(|&x| if mode == 0 { x } else { 1 - x }).collect();
            let site = k % nv;
            row[site] = 1 - row[site];
            rows.push(row);
            modes.push(mode);
        }
    }
    (OneHotDataset::from_rows(2, &rows).unwrap(), modes)
}

/// Calls `f` on every sequence of length `n` over `0..q`.
pub fn enumerate(n: usize, q: usize, mut f: impl FnMut(&[usize])) {
    let total = q.pow(n as u32);
    let mut v = vec![0; n];
    for mut code in 0..total {
        for x in v.iter_mut().rev() {
            *x = code % q;
            code /= q;
        }
        f(&v);
    }
}

/// Joint Boltzmann weights `exp(-E(v, h))` over all visible and hidden configurations,
/// computed from the energy alone.
pub fn joint_table(model: &PottsRBM) -> Vec<(Vec<usize>, Vec<u8>, f64)> {
    let (nv, nq, nh) = model.shape();
    let mut out = Vec::new();
    enumerate(nv, nq, |v| {
        enumerate(nh, 2, |h| {
            let h: Vec<u8> = h.iter().map(|&x| x as u8).collect();
            let e = model.energy(v, &h).unwrap();
            out.push((v.to_vec(), h, (-e).exp()));
        })
    });
    out
}

/// Log-partition function by summing `exp(-E)` over the joint space.
pub fn brute_log_z(model: &PottsRBM) -> f64 {
    joint_table(model).iter().map(|(_, _, p)| p).sum::<f64>().ln()
}

/// Weighted mean log-likelihood by brute force.
pub fn brute_loglik(model: &PottsRBM, data: &OneHotDataset) -> f64 {
    let table = joint_table(model);
    let log_z = table.iter().map(|(_, _, p)| p).sum::<f64>().ln();
    let mut total = 0.0;
    for (v, &x) in data.samples().zip(data.weights()) {
        let pv: f64 = table.iter().filter(|(u, _, _)| u.as_slice() == v).map(|(_, _, p)| p).sum();
        total += x * (pv.ln() - log_z);
    }
    total / data.weights().iter().sum::<f64>()
}

/// Exact `p(v_i = q)` (flat) and `p(h_mu = 1)` by brute force.
pub fn brute_marginals(model: &PottsRBM) -> (Vec<f64>, Vec<f64>) {
    let (nv, nq, nh) = model.shape();
    let table = joint_table(model);
    let z: f64 = table.iter().map(|(_, _, p)| p).sum();
    let mut f = vec![0.0; nv * nq];
    let mut m = vec![0.0; nh];
    for (v, h, p) in &table {
        for (i, &q) in v.iter().enumerate() {
            f[i * nq + q] += p / z;
        }
        for (mu, &x) in h.iter().enumerate() {
            m[mu] += x as f64 * p / z;
        }
    }
    (f, m)
}
