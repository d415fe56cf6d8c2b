use std::collections::HashSet;
use std::path::Path;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbmtree::datasets::{
    binarize_images, decode_state, encode_residue, generate_sed, load_fasta_msa, load_matrix, mutate, parse_fasta_msa,
    parse_matrix, save_matrix, SedConfig, AMINO_ALPHABET, GAP_STATE, MNIST_THRESHOLD,
};
use rbmtree::{Error, OneHotDataset};

fn hamming(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[test]
fn raw_mutation_flips_binomially_many_sites() {
    let (n, p) = (200usize, 1.0 / 200.0);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let parent: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let draws = 10_000;
    let total: usize = (0..draws).map(|_| hamming(&mutate(&parent, p, &mut rng), &parent)).sum();
    let mean = total as f64 / draws as f64;
    let sigma = (n as f64 * p * (1.0 - p) / draws as f64).sqrt();
    assert!((mean - n as f64 * p).abs() < 3.0 * sigma, "mean {mean}");
}

#[test]
fn accepted_children_follow_the_law_conditioned_on_a_flip() {
    // a child identical to its parent is a duplicate, so accepted children carry K >= 1
    let config = SedConfig {
        seq_length: 200,
        target_size: 10_005,
        seed: 42,
        ..SedConfig::default()
    };
    let out = generate_sed(&config).unwrap();
    let dist: Vec<f64> = (0..out.labels.len())
        .filter_map(|m| out.genealogy[m].map(|p| hamming(out.dataset.sample(m), out.dataset.sample(p)) as f64))
        .collect();
    assert_eq!(dist.len(), 10_000);
    assert!(dist.iter().all(|&k| k >= 1.0));
    let (n, p) = (200.0, 1.0 / 200.0);
    let q0 = (1.0f64 - p).powf(n);
    let mean_k = n * p / (1.0 - q0);
    let var_k = (n * p * (1.0 - p) + (n * p).powi(2)) / (1.0 - q0) - mean_k * mean_k;
    let mean = dist.iter().sum::<f64>() / dist.len() as f64;
    let sigma = (var_k / dist.len() as f64).sqrt();
    assert!((mean - mean_k).abs() < 3.0 * sigma, "mean {mean} vs {mean_k}");
}

#[test]
fn every_family_grows() {
    // every sequence keeps reproducing, so founders cannot die out
    for seed in 0..5 {
        let out = generate_sed(&SedConfig {
            seq_length: 200,
            target_size: 800,
            seed,
            ..SedConfig::default()
        })
        .unwrap();
        for family in 0..5 {
            let size = out.labels.iter().filter(|&&l| l == family).count();
            assert!(size > 10, "seed {seed}: family {family} has {size} members");
        }
    }
}

#[test]
fn sed_output_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate_sed(&SedConfig {
        seq_length: 30,
        target_size: 60,
        seed: 43,
        ..SedConfig::default()
    })
    .unwrap();
    let (matrix, genealogy) = (dir.path().join("sed.txt"), dir.path().join("genealogy.csv"));
    out.write(&matrix, &genealogy).unwrap();
    assert_eq!(load_matrix(&matrix, Some(2)).unwrap(), out.dataset);
    let mut reader = csv::Reader::from_path(&genealogy).unwrap();
    let labels: Vec<usize> = reader.records().map(|r| r.unwrap()[2].parse().unwrap()).collect();
    assert_eq!(labels, out.labels);
}

#[test]
fn matrix_parsing_reports_problems() {
    let path = Path::new("m.txt");
    let d = parse_matrix("0 2 1\n\n1 1 0\n", None, path).unwrap();
    assert_eq!((d.n_samples(), d.n_visible(), d.n_states()), (2, 3, 3));
    assert_eq!(parse_matrix("0 0\n0 0\n", None, path).unwrap().n_states(), 2);
    assert!(matches!(parse_matrix("0 1\n1\n", None, path), Err(Error::Parse { line: 2, .. })));
    assert!(matches!(parse_matrix("0 3\n", Some(3), path), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(parse_matrix("0 x\n", None, path), Err(Error::Parse { .. })));
    assert!(matches!(parse_matrix("\n \n", None, path), Err(Error::Format { .. })));
}

#[test]
fn fasta_alignments_parse_with_wrapped_records() {
    let text = ">seq1 some description\nACD-\nEF\n>seq2\nacdXYW\n\n>seq3\n--YWVT\n";
    let parsed = parse_fasta_msa(text, Path::new("a.fasta")).unwrap();
    let d = &parsed.dataset;
    assert_eq!((d.n_samples(), d.n_visible(), d.n_states()), (3, 6, 21));
    assert_eq!(d.labels().unwrap(), ["seq1", "seq2", "seq3"]);
    let first: String = d.sample(0).iter().map(|&q| decode_state(q)).collect();
    assert_eq!(first, "ACD-EF");
    // lower case letters and X are outside the alphabet
    assert_eq!(parsed.unknown_symbols, 4);
    assert_eq!(&d.sample(1)[..4], &[GAP_STATE; 4]);
}

#[test]
fn fasta_errors() {
    let path = Path::new("a.fasta");
    assert!(parse_fasta_msa("", path).is_err());
    assert!(parse_fasta_msa("ACD\n>s\nACD\n", path).is_err());
    assert!(parse_fasta_msa(">a\nACD\n>b\nAC\n", path).is_err());
}

#[test]
fn fasta_file_loading() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("msa.fasta");
    std::fs::write(&path, ">a\nAC-\n>b\nWY-\n").unwrap();
    let d = load_fasta_msa(&path).unwrap();
    assert_eq!(d.sample(1), &[18, 19, 20]);
    assert!(load_fasta_msa(&dir.path().join("missing.fasta")).is_err());
}

#[test]
fn residue_encoding_is_a_bijection() {
    let mut seen = HashSet::new();
    for (q, &c) in AMINO_ALPHABET.iter().enumerate() {
        assert_eq!(encode_residue(c), Some(q));
        assert_eq!(decode_state(q), c as char);
        assert!(seen.insert(q));
    }
    assert_eq!(encode_residue(b'-'), Some(GAP_STATE));
    for c in [b'B', b'X', b'a', b'.', b'*'] {
        assert_eq!(encode_residue(c), None);
    }
}

#[test]
fn images_binarize_strictly_above_threshold() {
    let images = vec![vec![0.0, 0.3, 0.31, 1.0], vec![0.29, 0.5, 0.3, 0.0]];
    let d = binarize_images(&images, MNIST_THRESHOLD).unwrap();
    assert_eq!(d.sample(0), &[0, 0, 1, 1]);
    assert_eq!(d.sample(1), &[0, 1, 0, 0]);
    assert!(binarize_images(&images, 1.5).is_err());
}

proptest! {
    #[test]
    fn matrix_files_round_trip(
        rows in (1usize..8, 1usize..5).prop_flat_map(|(width, nq)| {
            (Just(nq + 1), prop::collection::vec(prop::collection::vec(0..=nq, width), 1..10))
        })
    ) {
        let (nq, rows) = rows;
        let data = OneHotDataset::from_rows(nq, &rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        save_matrix(&path, &data).unwrap();
        prop_assert_eq!(load_matrix(&path, Some(nq)).unwrap(), data);
    }
}
