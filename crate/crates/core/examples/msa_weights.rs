//! Reading an aligned FASTA file and down-weighting near-duplicate sequences. Sequences
//! linked by identity above the threshold form clusters sharing a total weight of one.
//!
//! ```text
//! cargo run --example msa_weights
//! ```

use std::path::Path;

use rbmtree::datasets::{decode_state, parse_fasta_msa};
use rbmtree::training::compute_sequence_weights;

const ALIGNMENT: &str = "\
>cry1 photoreceptor
MKR-LVWFRRDLRL
>cry2 photoreceptor
MKR-LVWFRRDLRI
>cry3
MKR-LVWFKRDLRI
>phr1 photolyase
MTHLVWFRQDLRLH
>phr2
MTHLVWFRQDL-LH
>odd
ACDEFGHIKLMNPQ
";

fn main() -> rbmtree::Result<()> {
    let parsed = parse_fasta_msa(ALIGNMENT, Path::new("inline.fasta"))?;
    let data = parsed
        .dataset
        .clone()
        .with_weights(compute_sequence_weights(&parsed.dataset, 0.8)?)?;
    println!("{} sequences of {} columns, {} unknown symbols", data.n_samples(), data.n_visible(), parsed.unknown_symbols);
    for m in 0..data.n_samples() {
        let seq: String = data.sample(m).iter().map(|&q| decode_state(q)).collect();
        println!("{:>5}  {seq}  weight {:.3}", data.sample_name(m), data.weights()[m]);
    }
    println!("effective number of sequences: {:.2}", data.effective_size());
    Ok(())
}
