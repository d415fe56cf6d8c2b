//! Gauge fixing and the weight spectrum. Moving a model between the zero-sum and
//! lattice-gas gauges leaves every free-energy difference untouched, while the
//! singular values of the weight matrix depend on the gauge.
//!
//! ```text
//! cargo run --example gauge_spectrum
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbmtree::model::{project_dataset, weight_spectrum};
use rbmtree::{Gauge, OneHotDataset, PottsRBM};

fn main() -> rbmtree::Result<()> {
    let (nv, nq, nh) = (6, 3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let model = PottsRBM::from_parts(nv, nq, nh, draw(nv * nq), draw(nh), draw(nv * nh * nq), Gauge::None)?;

    let zero_sum = model.apply_gauge(Gauge::ZeroSum);
    let lattice_gas = model.apply_gauge(Gauge::LatticeGas);
    let (u, v) = ([0, 1, 2, 0, 1, 2], [2, 2, 1, 1, 0, 0]);
    for (name, m) in [("none", &model), ("zero-sum", &zero_sum), ("lattice-gas", &lattice_gas)] {
        let gap = m.free_energy(&u)? - m.free_energy(&v)?;
        let spectrum: Vec<String> = weight_spectrum(m).iter().map(|s| format!("{s:.3}")).collect();
        println!("{name:>12}: F(u) - F(v) = {gap:.10}, singular values [{}]", spectrum.join(", "));
    }

    let data = OneHotDataset::from_rows(nq, &[u.to_vec(), v.to_vec(), vec![0; nv]])?;
    let projections = project_dataset(&zero_sum, &data, 2)?;
    for (m, row) in projections.row_iter().enumerate() {
        println!("sample {m} projects to ({:.3}, {:.3})", row[0], row[1]);
    }
    Ok(())
}
