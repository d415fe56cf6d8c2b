//! Binarizing gray-scale images at the digit threshold and building a merge tree from
//! a short checkpoint series. The images are synthetic strokes (a bar and a ring) so
//! the example needs no download.
//!
//! ```text
//! cargo run --release --example binary_images
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbmtree::datasets::{binarize_images, MNIST_THRESHOLD};
use rbmtree::training::{initial_model, train};
use rbmtree::treebuild::{build_tree, export_newick};
use rbmtree::{TrainingConfig, TreeConfig};

const SIDE: usize = 6;

fn stroke(kind: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..SIDE * SIDE)
        .map(|k| {
            let (r, c) = (k / SIDE, k % SIDE);
            let on = match kind {
                0 => c == 2 || c == 3,
                _ => r == 0 || r == SIDE - 1 || c == 0 || c == SIDE - 1,
            };
            let base = if on { 0.8 } else { 0.05 };
            (base + rng.random_range(-0.3..0.3f64)).clamp(0.0, 1.0)
        })
        .collect()
}

fn main() -> rbmtree::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let images: Vec<Vec<f64>> = (0..40).map(|k| stroke(k % 2, &mut rng)).collect();
    let data = binarize_images(&images, MNIST_THRESHOLD)?;
    for row in data.sample(1).chunks(SIDE) {
        println!("{}", row.iter().map(|&x| if x == 1 { '#' } else { '.' }).collect::<String>());
    }

    let config = TrainingConfig {
        epochs: 150,
        minibatch_size: 20,
        gibbs_steps: 10,
        learning_rate: 0.05,
        n_chains: Some(40),
        n_checkpoints: 10,
        seed: 11,
    };
    let series = train(initial_model(&data, 8, 11)?, &data, &config)?;
    let tree = build_tree(&series, &data, &TreeConfig::default())?;
    for layer in &tree.layers {
        println!("age {:>4}: {} node(s)", layer.age, layer.nodes.len());
    }
    print!("{}", export_newick(&tree));
    Ok(())
}
