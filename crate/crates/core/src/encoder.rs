//! Out-of-sample encoding `h = sgn(Pᵀ a)` and bit-packed code storage.
//!
//! Codes are stored sample-major, `ceil(L / 64)` words per sample. Bit `k`
//! of word `w` holds code row `64 w + k`; a set bit means `+1`. Padding bits
//! past `L` are always zero.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::binio;
use crate::trainer::LbseModel;
use crate::{LbseError, Result};

const CODES_MAGIC: &[u8; 4] = b"LBSC";
const CODES_VERSION: u8 = 1;

#[inline]
pub fn words_for(code_length: usize) -> usize {
    code_length.div_ceil(64)
}

/// Mask of the valid bits in the last word of a code.
#[inline]
fn tail_mask(code_length: usize) -> u64 {
    match code_length % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[inline]
pub fn hamming_distance(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMatrix {
    code_length: usize,
    words_per_code: usize,
    words: Vec<u64>,
}

impl CodeMatrix {
    /// Packs an `L x N` matrix; positive entries become set bits.
    pub fn pack(h: &DMatrix<f64>) -> Self {
        let (l, n) = h.shape();
        let wpc = words_for(l);
        let mut words = vec![0u64; wpc * n];
        for (j, col) in h.column_iter().enumerate() {
            let code = &mut words[j * wpc..(j + 1) * wpc];
            for (r, &v) in col.iter().enumerate() {
                if v > 0.0 {
                    code[r / 64] |= 1u64 << (r % 64);
                }
            }
        }
        CodeMatrix {
            code_length: l,
            words_per_code: wpc,
            words,
        }
    }

    /// Expands back to an `L x N` matrix of ±1.
    pub fn unpack(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.code_length, self.len(), |r, j| {
            if self.code(j)[r / 64] >> (r % 64) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        })
    }

    /// Builds from raw sample-major words, rejecting set padding bits.
    pub fn from_words(code_length: usize, words: Vec<u64>) -> Result<Self> {
        if code_length == 0 {
            return Err(LbseError::DimensionMismatch("code length must be positive".into()));
        }
        let wpc = words_for(code_length);
        if !words.len().is_multiple_of(wpc) {
            return Err(LbseError::DimensionMismatch(format!(
                "{} words is not a multiple of {wpc} words per code",
                words.len()
            )));
        }
        let mask = tail_mask(code_length);
        if let Some(i) = words.chunks_exact(wpc).position(|c| c[wpc - 1] & !mask != 0) {
            return Err(LbseError::MalformedHeader(format!(
                "code {i} has padding bits set beyond length {code_length}"
            )));
        }
        Ok(CodeMatrix {
            code_length,
            words_per_code: wpc,
            words,
        })
    }

    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub fn words_per_code(&self) -> usize {
        self.words_per_code
    }

    pub fn len(&self) -> usize {
        self.words.len().checked_div(self.words_per_code).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn code(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_code..(i + 1) * self.words_per_code]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u64]> {
        self.words.chunks_exact(self.words_per_code.max(1))
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn hamming(&self, i: usize, j: usize) -> u32 {
        hamming_distance(self.code(i), self.code(j))
    }

    pub fn select(&self, indices: &[usize]) -> CodeMatrix {
        let mut words = Vec::with_capacity(indices.len() * self.words_per_code);
        for &i in indices {
            words.extend_from_slice(self.code(i));
        }
        CodeMatrix {
            code_length: self.code_length,
            words_per_code: self.words_per_code,
            words,
        }
    }
}

/// Encodes each column of `features` (`D x M`) with the model's projection.
pub fn encode(model: &LbseModel, features: &DMatrix<f64>) -> Result<CodeMatrix> {
    if features.nrows() != model.feature_dim() {
        return Err(LbseError::DimensionMismatch(format!(
            "features have D={}, model expects D={}",
            features.nrows(),
            model.feature_dim()
        )));
    }
    let projected = model.projection().tr_mul(features);
    Ok(CodeMatrix::pack(&projected))
}

/// Free-function form of [`CodeMatrix::pack`].
pub fn pack(h: &DMatrix<f64>) -> CodeMatrix {
    CodeMatrix::pack(h)
}

/// Free-function form of [`CodeMatrix::unpack`].
pub fn unpack(c: &CodeMatrix) -> DMatrix<f64> {
    c.unpack()
}

/// Contents of a code file: packed codes plus optional per-sample labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeFile {
    pub codes: CodeMatrix,
    pub labels: Option<Vec<usize>>,
}

impl CodeFile {
    pub fn new(codes: CodeMatrix, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != codes.len() {
                return Err(LbseError::LengthMismatch(format!(
                    "{} labels for {} codes",
                    l.len(),
                    codes.len()
                )));
            }
        }
        Ok(CodeFile { codes, labels })
    }

    /// Layout: magic, version, `L`, `N`, the packed words, a flag byte
    /// (1 when labels follow), then `N` u32 labels.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CODES_MAGIC)?;
        w.write_all(&[CODES_VERSION])?;
        binio::write_u32(w, binio::to_u32(self.codes.code_length(), "code length")?)?;
        binio::write_u32(w, binio::to_u32(self.codes.len(), "code count")?)?;
        for &word in self.codes.words() {
            binio::write_u64(w, word)?;
        }
        match &self.labels {
            Some(labels) => {
                w.write_all(&[1])?;
                for &l in labels {
                    binio::write_u32(w, binio::to_u32(l, "label")?)?;
                }
            }
            None => w.write_all(&[0])?,
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        binio::read_magic(r, CODES_MAGIC)?;
        binio::read_version(r, CODES_VERSION)?;
        let l = binio::read_u32(r).map_err(|e| binio::header_err(e, "truncated code header"))? as usize;
        let n = binio::read_u32(r).map_err(|e| binio::header_err(e, "truncated code header"))? as usize;
        if l == 0 {
            return Err(LbseError::MalformedHeader("code length 0".into()));
        }
        let total = words_for(l) * n;
        let mut words = Vec::with_capacity(total);
        for _ in 0..total {
            words.push(binio::read_u64(r).map_err(binio::payload_err)?);
        }
        let codes = CodeMatrix::from_words(l, words)?;
        let flag = binio::read_u8(r).map_err(binio::payload_err)?;
        let labels = match flag {
            0 => None,
            1 => {
                let mut labels = Vec::with_capacity(n);
                for _ in 0..n {
                    labels.push(binio::read_u32(r).map_err(binio::payload_err)? as usize);
                }
                Some(labels)
            }
            other => {
                return Err(LbseError::MalformedHeader(format!("invalid label flag {other}")));
            }
        };
        binio::expect_eof(r)?;
        CodeFile::new(codes, labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        CodeFile::read_from(&mut BufReader::new(File::open(path)?))
    }
}
