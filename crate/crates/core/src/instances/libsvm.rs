//! LIBSVM text format: one sample per line, "label idx:val idx:val ..."
//! with 1-based strictly increasing feature indices. Blank lines are
//! skipped and anything after # on a line is a comment.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sparse labeled dataset: one (feature index, value) list per sample,
/// indices 0-based and strictly increasing within a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmDataset<T> {
    pub labels: Vec<T>,
    pub samples: Vec<Vec<(usize, T)>>,
    pub num_features: usize,
}

impl<T: Scalar> SvmDataset<T> {
    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn nnz(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }
}

pub fn read_libsvm<T: Scalar>(path: impl AsRef<Path>) -> Result<SvmDataset<T>> {
    let file = File::open(path.as_ref())?;
    parse_libsvm(BufReader::new(file))
}

pub fn parse_libsvm<T: Scalar, R: BufRead>(reader: R) -> Result<SvmDataset<T>> {
    let mut labels = Vec::new();
    let mut samples = Vec::new();
    let mut num_features = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let body = match line.split_once('#') {
            Some((before, _comment)) => before,
            None => line.as_str(),
        };
        let mut tokens = body.split_whitespace();
        let Some(label_tok) = tokens.next() else { continue };
        let label: f64 = label_tok.parse().map_err(|_| Error::Ingestion {
            line: lineno,
            msg: format!("unparsable label {label_tok:?}"),
        })?;
        let mut entries: Vec<(usize, T)> = Vec::new();
        let mut prev_index = 0usize; // 1-based floor; indices must exceed it
        for tok in tokens {
            let Some((idx_str, val_str)) = tok.split_once(':') else {
                return Err(Error::Ingestion {
                    line: lineno,
                    msg: format!("expected idx:val, got {tok:?}"),
                });
            };
            let one_based: usize = idx_str.parse().map_err(|_| Error::Ingestion {
                line: lineno,
                msg: format!("unparsable feature index {idx_str:?}"),
            })?;
            if one_based == 0 {
                return Err(Error::Ingestion {
                    line: lineno,
                    msg: "feature indices are 1-based; got 0".into(),
                });
            }
            if one_based <= prev_index {
                return Err(Error::Ingestion {
                    line: lineno,
                    msg: format!(
                        "feature indices must be strictly increasing; {one_based} after {prev_index}"
                    ),
                });
            }
            prev_index = one_based;
            let value: f64 = val_str.parse().map_err(|_| Error::Ingestion {
                line: lineno,
                msg: format!("unparsable feature value {val_str:?}"),
            })?;
            num_features = num_features.max(one_based);
            entries.push((one_based - 1, T::cast(value)));
        }
        labels.push(T::cast(label));
        samples.push(entries);
    }
    Ok(SvmDataset { labels, samples, num_features })
}

/// Inverse of `read_libsvm`, for round-trip tests and exporting generated
/// datasets. Values are written with shortest round-trip formatting.
pub fn write_libsvm<T: Scalar>(path: impl AsRef<Path>, data: &SvmDataset<T>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    for (label, sample) in data.labels.iter().zip(&data.samples) {
        write!(w, "{label}")?;
        for (idx, val) in sample {
            write!(w, " {}:{}", idx + 1, val)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_format() {
        let text = "+1 3:0.5 7:2\n\n-1 1:1 2:-0.25 # trailing note\n";
        let data: SvmDataset<f64> = parse_libsvm(text.as_bytes()).unwrap();
        assert_eq!(data.labels, vec![1.0, -1.0]);
        assert_eq!(data.samples[0], vec![(2, 0.5), (6, 2.0)]);
        assert_eq!(data.samples[1], vec![(0, 1.0), (1, -0.25)]);
        assert_eq!(data.num_features, 7);
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        let data: SvmDataset<f64> = parse_libsvm("".as_bytes()).unwrap();
        assert_eq!(data.num_samples(), 0);
        assert_eq!(data.num_features, 0);
    }

    #[test]
    fn rejects_nonmonotone_and_garbage_with_line_numbers() {
        let err = parse_libsvm::<f64, _>("+1 2:1 2:3\n".as_bytes()).unwrap_err();
        match err {
            Error::Ingestion { line, msg } => {
                assert_eq!(line, 1);
                assert!(msg.contains("strictly increasing"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_libsvm::<f64, _>("+1 1:1\n-1 x:1\n".as_bytes()).unwrap_err();
        match err {
            Error::Ingestion { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_libsvm::<f64, _>("+1 0:1\n".as_bytes()).is_err());
        assert!(parse_libsvm::<f64, _>("+1 1\n".as_bytes()).is_err());
    }

    #[test]
    fn round_trip_through_file() {
        let data = SvmDataset::<f64> {
            labels: vec![1.0, -1.0, 1.0],
            samples: vec![
                vec![(0, 0.125), (4, -3.5)],
                vec![],
                vec![(1, 1e-7), (2, 42.0), (9, -0.0625)],
            ],
            num_features: 10,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probe.libsvm");
        write_libsvm(&path, &data).unwrap();
        let back: SvmDataset<f64> = read_libsvm(&path).unwrap();
        assert_eq!(back.labels, data.labels);
        assert_eq!(back.samples, data.samples);
        // num_features is recovered from the maximum seen index
        assert_eq!(back.num_features, 10);
    }
}
