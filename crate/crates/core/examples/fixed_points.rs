//! TAP and naive mean-field fixed points of a hand-built model with two opposite
//! templates. At weak coupling every start falls into the paramagnetic point; at
//! strong coupling the two templates become separate fixed points.
//!
//! ```text
//! cargo run --example fixed_points
//! ```

use rbmtree::meanfield::{gibbs_free_energy_2, init_from_data, solve_all, Variant};
use rbmtree::treebuild::cluster_fixed_points;
use rbmtree::{Gauge, OneHotDataset, PottsRBM, TapConfig};

const SITES: usize = 8;

/// One hidden unit rewarding agreement with a half-ones template, or with its
/// complement, equally.
fn two_template_model(strength: f64) -> PottsRBM {
    let mut a = vec![0.0; SITES * 2];
    let mut w = vec![0.0; SITES * 2];
    for i in 0..SITES {
        let template = usize::from(i < SITES / 2);
        for q in 0..2 {
            let sign = if q == template { 1.0 } else { -1.0 };
            a[i * 2 + q] = -0.5 * strength * sign;
            w[i * 2 + q] = strength * sign;
        }
    }
    PottsRBM::from_parts(SITES, 2, 1, a, vec![0.0], w, Gauge::ZeroSum).unwrap()
}

fn main() -> rbmtree::Result<()> {
    let template: Vec<usize> = (0..SITES).map(|i| usize::from(i < SITES / 2)).collect();
    let complement: Vec<usize> = template.iter().map(|x| 1 - x).collect();
    let data = OneHotDataset::from_rows(2, &[template.clone(), complement.clone(), template, complement])?;

    for strength in [0.2, 1.0, 2.5] {
        let model = two_template_model(strength);
        for variant in [Variant::Tap, Variant::Nmf] {
            let config = TapConfig {
                variant,
                ..TapConfig::default()
            };
            let starts: Vec<_> = data.samples().map(|v| init_from_data(&model, v)).collect::<Result<_, _>>()?;
            let results = solve_all(&model, &starts, &config)?;
            let set = cluster_fixed_points(0, &results, 1.0)?;
            let free = gibbs_free_energy_2(&model, &results[0].state, 1.0)?;
            println!(
                "strength {strength:>3}  {variant:?}: {} fixed point(s), hidden magnetization {:.3}, free entropy {:.4}",
                set.n_clusters(),
                results[0].state.m[0],
                free.gamma2
            );
        }
    }
    Ok(())
}
