use std::path::Path;

use crate::dataset::OneHotDataset;
use crate::error::{Error, Result};

/// State order of the 21-letter protein alphabet; the gap is the last state.
pub const AMINO_ALPHABET: &[u8; 21] = b"ACDEFGHIKLMNPQRSTVWY-";
pub const GAP_STATE: usize = 20;

/// State of an upper-case residue or gap; `None` for anything else.
pub fn encode_residue(c: u8) -> Option<usize> {
    AMINO_ALPHABET.iter().position(|&a| a == c)
}

pub fn decode_state(q: usize) -> char {
    AMINO_ALPHABET[q] as char
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsaParse {
    pub dataset: OneHotDataset,
    /// Symbols outside the alphabet (including lower case), encoded as gaps.
    pub unknown_symbols: usize,
}

/// Parses an aligned FASTA file; records may wrap over several lines. Labels are the
/// first whitespace-separated token of each header.
pub fn parse_fasta_msa(text: &str, path: &Path) -> Result<MsaParse> {
    let mut ids: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::new();
    let mut unknown = 0;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if let Some(header) = line.strip_prefix('>') {
            ids.push(header.split_whitespace().next().unwrap_or("").to_string());
            rows.push(Vec::new());
        } else if !line.trim().is_empty() {
            let Some(row) = rows.last_mut() else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: k + 1,
                    msg: "sequence data before the first header".into(),
                });
            };
            for c in line.bytes().filter(|c| !c.is_ascii_whitespace()) {
                row.push(encode_residue(c).unwrap_or_else(|| {
                    unknown += 1;
                    GAP_STATE
                }));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "no FASTA records".into(),
        });
    }
    let len = rows[0].len();
    if let Some(k) = rows.iter().position(|r| r.len() != len) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("record {:?} has length {}, expected {len}: sequences are not aligned", ids[k], rows[k].len()),
        });
    }
    let dataset = OneHotDataset::from_rows(AMINO_ALPHABET.len(), &rows)?.with_labels(ids)?;
    Ok(MsaParse {
        dataset,
        unknown_symbols: unknown,
    })
}

/// Loads an aligned FASTA file, warning about symbols mapped to gaps.
pub fn load_fasta_msa(path: &Path) -> Result<OneHotDataset> {
    let parsed = parse_fasta_msa(&std::fs::read_to_string(path)?, path)?;
    if parsed.unknown_symbols > 0 {
        log::warn!("{}: {} unknown symbols encoded as gaps", path.display(), parsed.unknown_symbols);
    }
    Ok(parsed.dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_records() {
        let p = parse_fasta_msa(">s1 first\nACD-G\n>s2\nAC\nDEG\n", Path::new("a.fa")).unwrap();
        let d = &p.dataset;
        assert_eq!((d.n_samples(), d.n_visible(), d.n_states()), (2, 5, 21));
        assert_eq!(d.sample(0), &[0, 1, 2, 20, 5]);
        assert_eq!(d.labels().unwrap(), &["s1".to_string(), "s2".to_string()]);
        assert_eq!(p.unknown_symbols, 0);
    }

    #[test]
    fn unknown_symbols_become_gaps() {
        let p = parse_fasta_msa(">a\nAXbZ.\n", Path::new("a.fa")).unwrap();
        assert_eq!(p.dataset.sample(0), &[0, 20, 20, 20, 20]);
        assert_eq!(p.unknown_symbols, 4);
    }

    #[test]
    fn alphabet_round_trip() {
        for (q, &c) in AMINO_ALPHABET.iter().enumerate() {
            assert_eq!(encode_residue(c), Some(q));
            assert_eq!(decode_state(q), c as char);
        }
    }

    #[test]
    fn errors() {
        let p = Path::new("a.fa");
        assert!(parse_fasta_msa("", p).is_err());
        assert!(parse_fasta_msa("ACD\n", p).is_err());
        assert!(parse_fasta_msa(">a\nACD\n>b\nAC\n", p).is_err());
    }
}
