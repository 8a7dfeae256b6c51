use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridId};

/// Real values at the interior nodes of one grid. The extension outside
/// `Ω` is identically zero and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridId,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_interior() {
            return Err(Error::Contract(format!(
                "field has {} values but the grid has {} interior nodes",
                values.len(),
                grid.n_interior()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("field value at node {i} is not finite")));
        }
        Ok(Field { grid: grid.id(), values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Field::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Field {
            grid: grid.id(),
            values: vec![c; grid.n_interior()],
        }
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Fails unless `self` lives on `grid`.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid == grid.id() {
            Ok(())
        } else {
            Err(Error::Contract("field belongs to a different grid".into()))
        }
    }

    pub fn check_same(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::Contract("fields belong to different grids".into()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn positive_part(&self) -> Field {
        self.map(|v| v.max(0.0))
    }

    pub fn abs(&self) -> Field {
        self.map(f64::abs)
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}
