use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::OneHotDataset;
use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Pixel threshold for binarizing normalized gray-scale digits.
pub const MNIST_THRESHOLD: f64 = 0.3;

/// Parses whitespace-separated integer rows; blank lines are skipped. The number of
/// states is `n_states` if given, otherwise `max + 1` (at least 2).
pub fn parse_matrix(text: &str, n_states: Option<usize>, path: &Path) -> Result<OneHotDataset> {
    let mut states = Vec::new();
    let mut width = None;
    for (k, line) in text.lines().enumerate() {
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg,
        };
        if line.trim().is_empty() {
            continue;
        }
        let before = states.len();
        for tok in line.split_whitespace() {
            let q: usize = tok.parse().map_err(|_| parse_err(format!("{tok:?} is not a non-negative integer")))?;
            if let Some(nq) = n_states {
                if q >= nq {
                    return Err(parse_err(format!("state {q} out of range for {nq} states")));
                }
            }
            states.push(q);
        }
        let len = states.len() - before;
        match width {
            None => width = Some(len),
            Some(w) if w != len => return Err(parse_err(format!("row has {len} entries, expected {w}"))),
            _ => {}
        }
    }
    let Some(width) = width else {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "no data rows".into(),
        });
    };
    let nq = n_states.unwrap_or_else(|| (states.iter().max().copied().unwrap_or(0) + 1).max(2));
    OneHotDataset::from_flat(width, nq, states)
}

pub fn load_matrix(path: &Path, n_states: Option<usize>) -> Result<OneHotDataset> {
    parse_matrix(&std::fs::read_to_string(path)?, n_states, path)
}

/// Writes one sample per line, states separated by single spaces.
pub fn save_matrix(path: &Path, data: &OneHotDataset) -> Result<()> {
    let mut out = String::with_capacity(data.states().len() * 2);
    for v in data.samples() {
        for (i, q) in v.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{q}").unwrap();
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Binary dataset with pixel `1` where the gray level is strictly above `threshold`.
pub fn binarize_images(images: &[Vec<f64>], threshold: f64) -> Result<OneHotDataset> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let rows: Vec<Vec<usize>> = images
        .iter()
        .map(|img| img.iter().map(|&p| usize::from(p > threshold)).collect())
        .collect();
    OneHotDataset::from_rows(2, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_matrix() {
        let d = parse_matrix("0 1 0\n1 1 0\n", None, Path::new("x")).unwrap();
        assert_eq!((d.n_samples(), d.n_visible(), d.n_states()), (2, 3, 2));
        assert_eq!(d.sample(1), &[1, 1, 0]);
        let d = parse_matrix("0 0\n\n0 0\n", None, Path::new("x")).unwrap();
        assert_eq!(d.n_states(), 2);
        assert_eq!(parse_matrix("0 3\n", None, Path::new("x")).unwrap().n_states(), 4);
    }

    #[test]
    fn rejects_bad_input() {
        let p = Path::new("m.txt");
        assert!(parse_matrix("", None, p).is_err());
        assert!(parse_matrix("0 1\n1\n", None, p).is_err());
        assert!(matches!(parse_matrix("0 1\n1 x\n", None, p), Err(Error::Parse { line: 2, .. })));
        assert!(parse_matrix("0 2\n", Some(2), p).is_err());
        assert!(parse_matrix("0 -1\n", None, p).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let d = OneHotDataset::from_rows(3, &[vec![0, 2, 1], vec![2, 2, 0]]).unwrap();
        save_matrix(&path, &d).unwrap();
        assert_eq!(load_matrix(&path, Some(3)).unwrap(), d);
    }

    #[test]
    fn binarization_is_strict() {
        let d = binarize_images(&[vec![0.3; 784], vec![1.0; 784]], 0.3).unwrap();
        assert_eq!(d.n_visible(), 784);
        assert!(d.sample(0).iter().all(|&x| x == 0));
        assert!(d.sample(1).iter().all(|&x| x == 1));
        assert!(binarize_images(&[vec![0.5]], 1.0).is_err());
    }
}
