//! Dataset generators and file formats.

mod fasta;
mod matrix;
mod sed;

pub use fasta::{decode_state, encode_residue, load_fasta_msa, parse_fasta_msa, MsaParse, AMINO_ALPHABET, GAP_STATE};
pub use matrix::{binarize_images, load_matrix, parse_matrix, save_matrix, MNIST_THRESHOLD};
pub use sed::{generate_sed, mutate, SedConfig, SedOutput};
