//! Token sequences with per-token size counters, plus the `.ftsq` binary
//! format and a plain CSV form.
//!
//! `.ftsq` layout (all integers and floats little-endian):
//!
//! | bytes            | content                                 |
//! |------------------|-----------------------------------------|
//! | 4                | magic `FTSQ`                            |
//! | 4                | `u32` version, currently 1              |
//! | 4                | `u32` token count `n`                   |
//! | 4                | `u32` embedding dim `d`                 |
//! | 4                | `u32` pinned prefix length              |
//! | 8·n              | `u64` sizes                             |
//! | 8·n·d            | `f64` token values, row-major           |

use std::io::{Read, Write};

use crate::error::{FoldError, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"FTSQ";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    tokens: Matrix,
    sizes: Vec<u64>,
    pinned_prefix: usize,
}

impl TokenSequence {
    /// Wraps `tokens` with all sizes set to 1.
    pub fn new(tokens: Matrix, pinned_prefix: usize) -> Result<Self> {
        let n = tokens.rows();
        TokenSequence::from_parts(tokens, vec![1; n], pinned_prefix)
    }

    pub fn from_parts(tokens: Matrix, sizes: Vec<u64>, pinned_prefix: usize) -> Result<Self> {
        if sizes.len() != tokens.rows() {
            return Err(FoldError::shape(format!(
                "{} sizes for {} tokens",
                sizes.len(),
                tokens.rows()
            )));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(FoldError::argument(format!("token {i} has size 0")));
        }
        if pinned_prefix > tokens.rows() {
            return Err(FoldError::argument(format!(
                "pinned prefix {pinned_prefix} exceeds token count {}",
                tokens.rows()
            )));
        }
        Ok(TokenSequence {
            tokens,
            sizes,
            pinned_prefix,
        })
    }

    pub(crate) fn from_parts_unchecked(
        tokens: Matrix,
        sizes: Vec<u64>,
        pinned_prefix: usize,
    ) -> Self {
        debug_assert_eq!(sizes.len(), tokens.rows());
        debug_assert!(pinned_prefix <= tokens.rows());
        TokenSequence {
            tokens,
            sizes,
            pinned_prefix,
        }
    }

    pub fn tokens(&self) -> &Matrix {
        &self.tokens
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn pinned_prefix(&self) -> usize {
        self.pinned_prefix
    }

    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }

    /// Tokens eligible for merging (everything after the pinned prefix).
    pub fn reducible_len(&self) -> usize {
        self.len() - self.pinned_prefix
    }

    pub fn total_size(&self) -> u64 {
        self.sizes.iter().sum()
    }

    /// `Σ size_i · x_i`, the quantity average merging conserves.
    pub fn weighted_sum(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim()];
        for (row, &s) in self.tokens.row_iter().zip(&self.sizes) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += s as f64 * v;
            }
        }
        acc
    }

    /// The reducible suffix as its own matrix.
    pub fn reducible_tokens(&self) -> Matrix {
        let idx: Vec<usize> = (self.pinned_prefix..self.len()).collect();
        self.tokens.select_rows(&idx)
    }

    pub fn into_parts(self) -> (Matrix, Vec<u64>, usize) {
        (self.tokens, self.sizes, self.pinned_prefix)
    }

    pub fn write_binary<W: Write>(&self, mut sink: W) -> Result<()> {
        let n = u32::try_from(self.len())
            .map_err(|_| FoldError::argument("too many tokens for .ftsq"))?;
        let d = u32::try_from(self.dim())
            .map_err(|_| FoldError::argument("dimension too large for .ftsq"))?;
        let mut buf = Vec::with_capacity(HEADER_LEN + 8 * self.len() * (self.dim() + 1));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&n.to_le_bytes());
        buf.extend_from_slice(&d.to_le_bytes());
        buf.extend_from_slice(&(self.pinned_prefix as u32).to_le_bytes());
        for s in &self.sizes {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        for v in self.tokens.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        sink.write_all(&buf)?;
        Ok(())
    }

    pub fn to_binary_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_binary(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_binary<R: Read>(mut source: R) -> Result<Self> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        TokenSequence::from_binary_bytes(&bytes)
    }

    pub fn from_binary_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(FoldError::format(
                bytes.len() as u64,
                format!(
                    "truncated header: expected {HEADER_LEN} bytes, got {}",
                    bytes.len()
                ),
            ));
        }
        if &bytes[0..4] != MAGIC {
            return Err(FoldError::format(
                0,
                format!("bad magic {:?}", &bytes[0..4]),
            ));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != FORMAT_VERSION {
            return Err(FoldError::format(
                4,
                format!("unsupported version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let n = word(8) as usize;
        let d = word(12) as usize;
        let pinned = word(16) as usize;
        if n == 0 || d == 0 {
            return Err(FoldError::format(
                8,
                format!("empty sequence shape {n}x{d}"),
            ));
        }
        if pinned > n {
            return Err(FoldError::format(
                16,
                format!("pinned prefix {pinned} exceeds token count {n}"),
            ));
        }
        let expected = HEADER_LEN as u64 + 8 * n as u64 + 8 * (n as u64) * (d as u64);
        if bytes.len() as u64 != expected {
            let kind = if (bytes.len() as u64) < expected {
                "truncated"
            } else {
                "oversized"
            };
            return Err(FoldError::format(
                bytes.len() as u64,
                format!(
                    "{kind} payload: expected {expected} bytes, got {}",
                    bytes.len()
                ),
            ));
        }
        let mut sizes = Vec::with_capacity(n);
        let mut at = HEADER_LEN;
        for _ in 0..n {
            let s = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            if s == 0 {
                return Err(FoldError::format(at as u64, "token size 0"));
            }
            sizes.push(s);
            at += 8;
        }
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            let v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            if !v.is_finite() {
                return Err(FoldError::format(at as u64, "non-finite token value"));
            }
            data.push(v);
            at += 8;
        }
        Ok(TokenSequence::from_parts_unchecked(
            Matrix::from_raw(n, d, data),
            sizes,
            pinned,
        ))
    }

    /// One line per token; with `with_sizes` the size is appended as a
    /// final column. Values print in shortest round-trip form.
    pub fn to_csv(&self, with_sizes: bool) -> String {
        let mut out = String::new();
        for (row, size) in self.tokens.row_iter().zip(&self.sizes) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(&format!("{v:?}"));
            }
            if with_sizes {
                out.push_str(&format!(",{size}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, pinned_prefix: usize, with_sizes: bool) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut sizes = Vec::new();
        let mut arity = None;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            match arity {
                None => arity = Some(cells.len()),
                Some(a) if a != cells.len() => {
                    return Err(FoldError::parse(
                        lineno,
                        format!("expected {a} cells, found {}", cells.len()),
                    ))
                }
                _ => {}
            }
            let (values, size_cell) = if with_sizes {
                if cells.len() < 2 {
                    return Err(FoldError::parse(
                        lineno,
                        "size column requires at least one value",
                    ));
                }
                (&cells[..cells.len() - 1], Some(cells[cells.len() - 1]))
            } else {
                (&cells[..], None)
            };
            let mut row = Vec::with_capacity(values.len());
            for (c, cell) in values.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    FoldError::parse(lineno, format!("column {}: not a number: {cell:?}", c + 1))
                })?;
                if !v.is_finite() {
                    return Err(FoldError::parse(
                        lineno,
                        format!("column {}: non-finite value", c + 1),
                    ));
                }
                row.push(v);
            }
            let size = match size_cell {
                Some(cell) => match cell.parse::<u64>() {
                    Ok(s) if s > 0 => s,
                    _ => return Err(FoldError::parse(lineno, format!("invalid size {cell:?}"))),
                },
                None => 1,
            };
            rows.push(row);
            sizes.push(size);
        }
        if rows.is_empty() {
            return Err(FoldError::parse(1, "no rows"));
        }
        let tokens = Matrix::from_rows(&rows)?;
        TokenSequence::from_parts(tokens, sizes, pinned_prefix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TokenSequence {
        let m = Matrix::from_rows(&[[1.0, -0.5], [1e-300, 3.25], [0.1, 7.0]]).unwrap();
        TokenSequence::from_parts(m, vec![1, 4, 2], 1).unwrap()
    }

    #[test]
    fn new_sequence_sizes_and_prefix() {
        let s = TokenSequence::new(Matrix::zeros(4, 2), 0).unwrap();
        assert_eq!(s.sizes(), &[1, 1, 1, 1]);
        let s = TokenSequence::new(Matrix::zeros(5, 8), 1).unwrap();
        assert_eq!(s.sizes(), &[1; 5]);
        assert_eq!(s.pinned_prefix(), 1);
        assert!(matches!(
            TokenSequence::new(Matrix::zeros(5, 8), 6),
            Err(FoldError::Argument(_))
        ));
    }

    #[test]
    fn binary_round_trip() {
        let s = sample();
        let bytes = s.to_binary_bytes();
        assert_eq!(bytes.len(), 20 + 8 * 3 + 8 * 6);
        assert_eq!(TokenSequence::from_binary_bytes(&bytes).unwrap(), s);
    }

    #[test]
    fn binary_bad_magic() {
        let mut bytes = sample().to_binary_bytes();
        bytes[0] = b'X';
        let err = TokenSequence::from_binary_bytes(&bytes).unwrap_err();
        assert!(matches!(err, FoldError::Format { offset: 0, .. }));
    }

    #[test]
    fn binary_truncated_names_lengths() {
        let bytes = sample().to_binary_bytes();
        let err = TokenSequence::from_binary_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 92 bytes, got 89"), "{msg}");
        assert!(matches!(err, FoldError::Format { offset: 89, .. }));
    }

    #[test]
    fn binary_version_mismatch() {
        let mut bytes = sample().to_binary_bytes();
        bytes[4] = 2;
        assert!(matches!(
            TokenSequence::from_binary_bytes(&bytes),
            Err(FoldError::Format { offset: 4, .. })
        ));
    }

    #[test]
    fn csv_basic() {
        let s = TokenSequence::from_csv("1,0\n0,1", 0, false).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.sizes(), &[1, 1]);
        assert_eq!(s.tokens().data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn csv_ragged_reports_line() {
        let err = TokenSequence::from_csv("1,0\n0", 0, false).unwrap_err();
        assert!(matches!(err, FoldError::Parse { line: 2, .. }));
        let err = TokenSequence::from_csv("1,0\n0,x\n", 0, false).unwrap_err();
        assert!(matches!(err, FoldError::Parse { line: 2, .. }));
    }

    #[test]
    fn csv_with_sizes_round_trip() {
        let s = sample();
        let text = s.to_csv(true);
        assert_eq!(TokenSequence::from_csv(&text, 1, true).unwrap(), s);
        let plain = TokenSequence::from_csv(&s.to_csv(false), 1, false).unwrap();
        assert_eq!(plain.tokens(), s.tokens());
        assert_eq!(plain.sizes(), &[1, 1, 1]);
    }

    #[test]
    fn csv_rejects_zero_size() {
        assert!(matches!(
            TokenSequence::from_csv("1,2,0\n", 0, true),
            Err(FoldError::Parse { line: 1, .. })
        ));
    }
}
