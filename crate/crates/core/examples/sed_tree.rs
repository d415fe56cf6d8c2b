//! End-to-end run on a synthetic evolutionary dataset: generate five families of
//! binary sequences, train an RBM with PCD, build the merge tree and compare its
//! shallowest layer with five or more nodes against the family labels.
//!
//! ```text
//! cargo run --release --example sed_tree [-- <output dir> [updates]]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use rbmtree::datasets::{generate_sed, SedConfig};
use rbmtree::training::{initial_model, train_into, TrainingConfig};
use rbmtree::treebuild::{adjusted_rand_index, build_tree, classes_recovered, export_newick, layers_csv};
use rbmtree::{CheckpointSeries, TreeConfig};

fn main() -> rbmtree::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "sed_tree_out".into()));
    let updates: u64 = args.next().map(|s| s.parse().expect("updates")).unwrap_or(10_000);

    let sed = generate_sed(&SedConfig {
        seq_length: 200,
        target_size: 800,
        seed: 7,
        ..SedConfig::default()
    })?;
    let data = &sed.dataset;
    println!("{} sequences of length {}", data.n_samples(), data.n_visible());

    let per_epoch = data.n_samples().div_ceil(128) as u64;
    let config = TrainingConfig {
        epochs: updates.div_ceil(per_epoch) as usize,
        minibatch_size: 128,
        gibbs_steps: 100,
        learning_rate: 1e-2,
        n_chains: Some(128),
        n_checkpoints: 100,
        seed: 7,
    };
    let start = Instant::now();
    let mut series = CheckpointSeries::new();
    train_into(initial_model(data, 64, 7)?, data, &config, &mut series, |row| {
        println!("age {:>6}  pseudo-loglik {:.4}  top singular value {:.3}", row.age, row.loglik_proxy, row.top_singular_values[0]);
    })?;
    println!("training: {:.1?}", start.elapsed());

    let start = Instant::now();
    let tree = build_tree(&series, data, &TreeConfig::default())?;
    println!("tree: {:.1?}, {} layers", start.elapsed(), tree.layers.len());
    for layer in &tree.layers {
        println!("  age {:>6}: {} nodes", layer.age, layer.nodes.len());
    }

    if let Some(l) = tree.shallowest_layer_with(5) {
        let partition = tree.layer_partition(l);
        let ari = adjusted_rand_index(&partition, &sed.labels);
        let recovered = classes_recovered(&tree.layer_groups(l), &sed.labels, 0.8, 0.5);
        println!("layer at age {}: ARI {ari:.3}, families recovered {recovered}/5", tree.layers[l].age);
    } else {
        println!("no layer with five or more nodes");
    }

    std::fs::create_dir_all(&out)?;
    series.write_dir(&out.join("checkpoints"))?;
    sed.write(&out.join("sed.txt"), &out.join("genealogy.csv"))?;
    std::fs::write(out.join("tree.nwk"), export_newick(&tree))?;
    std::fs::write(out.join("layers.csv"), layers_csv(&tree, None))?;
    Ok(())
}
