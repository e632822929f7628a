use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::LbseConfig;
use crate::binio;
use crate::{LbseError, Result};

const MODEL_MAGIC: &[u8; 4] = b"LBSM";
const MODEL_VERSION: u8 = 1;

/// Wall-clock seconds spent in each update of one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimings {
    pub w: f64,
    pub b: f64,
    pub h: f64,
    pub p: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub objective: f64,
    pub timings: StepTimings,
}

/// Learned projections. `P` (`D x L`) encodes unseen samples; `W` (`C x L`)
/// maps labels into code space.
#[derive(Debug, Clone, PartialEq)]
pub struct LbseModel {
    projection: DMatrix<f64>,
    label_projection: DMatrix<f64>,
    config: LbseConfig,
    history: Vec<IterationRecord>,
}

impl LbseModel {
    pub fn new(
        projection: DMatrix<f64>,
        label_projection: DMatrix<f64>,
        config: LbseConfig,
        history: Vec<IterationRecord>,
    ) -> Result<Self> {
        let l = config.code_length;
        if projection.ncols() != l || label_projection.ncols() != l {
            return Err(LbseError::DimensionMismatch(format!(
                "P is {:?} and W is {:?} for code length {l}",
                projection.shape(),
                label_projection.shape()
            )));
        }
        if !projection.iter().chain(label_projection.iter()).all(|v| v.is_finite()) {
            return Err(LbseError::NonFinite { row: 0, col: 0 });
        }
        Ok(LbseModel {
            projection,
            label_projection,
            config,
            history,
        })
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn label_projection(&self) -> &DMatrix<f64> {
        &self.label_projection
    }

    pub fn config(&self) -> &LbseConfig {
        &self.config
    }

    /// Per-iteration record; empty for models read back from disk.
    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn feature_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.label_projection.nrows()
    }

    pub fn code_length(&self) -> usize {
        self.config.code_length
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let c = &self.config;
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&[MODEL_VERSION])?;
        binio::write_u32(w, binio::to_u32(self.feature_dim(), "feature dimension")?)?;
        binio::write_u32(w, binio::to_u32(self.num_classes(), "class count")?)?;
        binio::write_u32(w, binio::to_u32(self.code_length(), "code length")?)?;
        for v in [c.alpha, c.beta, c.gamma, c.lambda, c.tol] {
            binio::write_f64(w, v)?;
        }
        for v in [c.max_iters as u64, c.block as u64, c.seed] {
            binio::write_u64(w, v)?;
        }
        for &v in self.projection.as_slice() {
            binio::write_f64(w, v)?;
        }
        for &v in self.label_projection.as_slice() {
            binio::write_f64(w, v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        binio::read_magic(r, MODEL_MAGIC)?;
        binio::read_version(r, MODEL_VERSION)?;
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            *d = binio::read_u32(r).map_err(|e| binio::header_err(e, "truncated model header"))? as usize;
        }
        let [d, c, l] = dims;
        let mut reals = [0f64; 5];
        for v in reals.iter_mut() {
            *v = binio::read_f64(r).map_err(|e| binio::header_err(e, "truncated model config"))?;
        }
        let mut ints = [0u64; 3];
        for v in ints.iter_mut() {
            *v = binio::read_u64(r).map_err(|e| binio::header_err(e, "truncated model config"))?;
        }
        let config = LbseConfig {
            code_length: l,
            alpha: reals[0],
            beta: reals[1],
            gamma: reals[2],
            lambda: reals[3],
            tol: reals[4],
            max_iters: ints[0] as usize,
            block: ints[1] as usize,
            seed: ints[2],
        };
        let mut read_matrix = |rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                values.push(binio::read_f64(r).map_err(binio::payload_err)?);
            }
            Ok(DMatrix::from_vec(rows, cols, values))
        };
        let projection = read_matrix(d, l)?;
        let label_projection = read_matrix(c, l)?;
        binio::expect_eof(r)?;
        LbseModel::new(projection, label_projection, config, Vec::new())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        LbseModel::read_from(&mut BufReader::new(File::open(path)?))
    }
}
