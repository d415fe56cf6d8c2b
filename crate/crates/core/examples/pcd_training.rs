//! Persistent contrastive divergence on a model small enough to enumerate, so the
//! exact log-likelihood can be followed during training.
//!
//! ```text
//! cargo run --release --example pcd_training
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbmtree::training::{initial_model, train_into, TrainingConfig};
use rbmtree::{CheckpointSeries, OneHotDataset};

fn main() -> rbmtree::Result<()> {
    // three noisy prototypes over 10 ternary sites
    let prototypes = [[0, 0, 0, 1, 1, 1, 2, 2, 2, 0], [2, 1, 0, 2, 1, 0, 2, 1, 0, 2], [1, 1, 1, 1, 1, 0, 0, 0, 0, 0]];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<usize>> = (0..300)
        .map(|k| {
            prototypes[k % 3]
                .iter()
                .map(|&q| if rng.random_bool(0.1) { rng.random_range(0..3) } else { q })
                .collect()
        })
        .collect();
    let data = OneHotDataset::from_rows(3, &rows)?;

    let config = TrainingConfig {
        epochs: 250,
        minibatch_size: 50,
        gibbs_steps: 20,
        learning_rate: 0.05,
        n_chains: Some(100),
        n_checkpoints: 6,
        seed: 5,
    };
    let mut series = CheckpointSeries::new();
    train_into(initial_model(&data, 4, 5)?, &data, &config, &mut series, |row| {
        let kind = if row.exact { "exact" } else { "pseudo" };
        println!(
            "update {:>4}: {kind} log-likelihood {:.4}, largest singular value {:.3}",
            row.age, row.loglik_proxy, row.top_singular_values[0]
        );
    })?;
    Ok(())
}
