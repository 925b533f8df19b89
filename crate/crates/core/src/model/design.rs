use nalgebra::DMatrix;

use crate::error::{Block, Error, Result};

/// Describes one design column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMeta {
    pub name: String,
    pub description: String,
    /// 0 for the intercept, 1 for main effects, 2 for pairwise interactions.
    pub order: u8,
}

impl ColumnMeta {
    pub fn new(name: impl Into<String>, description: impl Into<String>, order: u8) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            order,
        }
    }
}

/// The five covariate matrices. Per-observation matrices have `M * p` rows in
/// unit-major order; `Z_alpha` and `Z_delta` have one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSet {
    m: usize,
    p: usize,
    matrices: [DMatrix<f64>; 5],
    columns: [Vec<ColumnMeta>; 5],
}

fn default_columns(z: &DMatrix<f64>) -> Vec<ColumnMeta> {
    (0..z.ncols())
        .map(|j| ColumnMeta::new(j.to_string(), format!("column {j}"), 1))
        .collect()
}

impl DesignSet {
    /// Builds a design set from raw matrices with generic column names.
    pub fn new(
        m: usize,
        p: usize,
        z_mu: DMatrix<f64>,
        z_theta: DMatrix<f64>,
        z_lambda: DMatrix<f64>,
        z_alpha: DMatrix<f64>,
        z_delta: DMatrix<f64>,
    ) -> Result<Self> {
        let matrices = [z_mu, z_theta, z_lambda, z_alpha, z_delta];
        let columns = matrices.clone().map(|z| default_columns(&z));
        Self::with_columns(m, p, matrices, columns)
    }

    pub fn with_columns(
        m: usize,
        p: usize,
        matrices: [DMatrix<f64>; 5],
        columns: [Vec<ColumnMeta>; 5],
    ) -> Result<Self> {
        if m == 0 || p == 0 {
            return Err(Error::Dimension("M and p must be at least 1".into()));
        }
        for block in Block::ALL {
            let z = &matrices[block as usize];
            let rows = if block.per_unit() { m } else { m * p };
            if z.nrows() != rows {
                return Err(Error::Dimension(format!(
                    "Z_{block} has {} rows, expected {rows}",
                    z.nrows()
                )));
            }
            if columns[block as usize].len() != z.ncols() {
                return Err(Error::Dimension(format!(
                    "Z_{block} has {} columns but {} column names",
                    z.ncols(),
                    columns[block as usize].len()
                )));
            }
            if let Some(bad) = z.iter().position(|v| !v.is_finite()) {
                return Err(Error::Dimension(format!(
                    "Z_{block} has a non-finite entry at row {}",
                    bad % z.nrows()
                )));
            }
        }
        Ok(Self {
            m,
            p,
            matrices,
            columns,
        })
    }

    /// Intercept-only design for every block.
    pub fn intercepts(m: usize, p: usize) -> Result<Self> {
        let obs = DMatrix::from_element(m * p, 1, 1.0);
        let unit = DMatrix::from_element(m, 1, 1.0);
        let mut set = Self::new(m, p, obs.clone(), obs.clone(), obs, unit.clone(), unit)?;
        for cols in &mut set.columns {
            cols[0] = ColumnMeta::new("0", "intercept", 0);
        }
        Ok(set)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn matrix(&self, block: Block) -> &DMatrix<f64> {
        &self.matrices[block as usize]
    }

    pub fn columns(&self, block: Block) -> &[ColumnMeta] {
        &self.columns[block as usize]
    }

    /// Number of coefficients in `block`.
    pub fn q(&self, block: Block) -> usize {
        self.matrices[block as usize].ncols()
    }

    pub fn z_mu(&self) -> &DMatrix<f64> {
        self.matrix(Block::Mu)
    }

    pub fn z_theta(&self) -> &DMatrix<f64> {
        self.matrix(Block::Theta)
    }

    pub fn z_lambda(&self) -> &DMatrix<f64> {
        self.matrix(Block::Lambda)
    }

    pub fn z_alpha(&self) -> &DMatrix<f64> {
        self.matrix(Block::Alpha)
    }

    pub fn z_delta(&self) -> &DMatrix<f64> {
        self.matrix(Block::Delta)
    }

    /// Returns a copy with `block` replaced.
    pub fn replace(
        &self,
        block: Block,
        z: DMatrix<f64>,
        columns: Vec<ColumnMeta>,
    ) -> Result<Self> {
        let mut matrices = self.matrices.clone();
        let mut cols = self.columns.clone();
        matrices[block as usize] = z;
        cols[block as usize] = columns;
        Self::with_columns(self.m, self.p, matrices, cols)
    }

    /// Keeps only the listed columns of `block`.
    pub fn select_columns(&self, block: Block, keep: &[usize]) -> Result<Self> {
        let z = self.matrix(block).select_columns(keep);
        let cols = keep
            .iter()
            .map(|&j| self.columns(block)[j].clone())
            .collect();
        self.replace(block, z, cols)
    }
}
