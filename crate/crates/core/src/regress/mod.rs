//! Scalar regressors behind one fit/predict contract.

mod mlp;
mod trees;

pub use mlp::{Mlp, MlpConfig};
pub use trees::{ExtraTrees, ExtraTreesConfig};

use serde::{Deserialize, Serialize};

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{FlexError, Result};

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(cols: usize) -> Self {
        Matrix {
            cols,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(cols: usize, rows: usize) -> Self {
        Matrix {
            cols,
            data: Vec::with_capacity(cols * rows),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Matrix::with_capacity(cols, rows.len());
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(FlexError::Contract(format!(
                "row has {} features, matrix has {}",
                row.len(),
                self.cols
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.cols).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

pub trait Regressor {
    /// Fits from scratch. Identical data and seed reproduce an identical predictor.
    fn fit(&mut self, x: &Matrix, y: &[f64], seed: u64) -> Result<()>;

    fn predict(&self, row: &[f64]) -> f64;

    fn is_fitted(&self) -> bool;
}

fn check_fit_inputs(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() == 0 {
        return Err(FlexError::Training("no training samples".into()));
    }
    if x.rows() != y.len() {
        return Err(FlexError::Contract(format!(
            "{} feature rows vs {} targets",
            x.rows(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FlexError::Training("non-finite regression target".into()));
    }
    Ok(())
}

/// Which regressor family to train, with its hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegressorSpec {
    ExtraTrees(ExtraTreesConfig),
    Mlp(MlpConfig),
}

impl Default for RegressorSpec {
    fn default() -> Self {
        RegressorSpec::ExtraTrees(ExtraTreesConfig::default())
    }
}

impl RegressorSpec {
    pub fn build(&self) -> Model {
        match self {
            RegressorSpec::ExtraTrees(c) => Model::ExtraTrees(ExtraTrees::new(c.clone())),
            RegressorSpec::Mlp(c) => Model::Mlp(Mlp::new(c.clone())),
        }
    }
}

/// A concrete regressor; enum dispatch keeps models serializable.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    ExtraTrees(ExtraTrees),
    Mlp(Mlp),
}

const TAG_TREES: u8 = 1;
const TAG_MLP: u8 = 2;

impl Model {
    pub fn encode(&self, w: &mut ByteWriter) {
        match self {
            Model::ExtraTrees(m) => {
                w.u8(TAG_TREES);
                m.encode(w);
            }
            Model::Mlp(m) => {
                w.u8(TAG_MLP);
                m.encode(w);
            }
        }
    }

    pub fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        match r.u8()? {
            TAG_TREES => Ok(Model::ExtraTrees(ExtraTrees::decode(r)?)),
            TAG_MLP => Ok(Model::Mlp(Mlp::decode(r)?)),
            t => Err(FlexError::Contract(format!("unknown regressor tag {t}"))),
        }
    }
}

impl Regressor for Model {
    fn fit(&mut self, x: &Matrix, y: &[f64], seed: u64) -> Result<()> {
        match self {
            Model::ExtraTrees(m) => m.fit(x, y, seed),
            Model::Mlp(m) => m.fit(x, y, seed),
        }
    }

    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Model::ExtraTrees(m) => m.predict(row),
            Model::Mlp(m) => m.predict(row),
        }
    }

    fn is_fitted(&self) -> bool {
        match self {
            Model::ExtraTrees(m) => m.is_fitted(),
            Model::Mlp(m) => m.is_fitted(),
        }
    }
}
