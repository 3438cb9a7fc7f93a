//! Field containers: nodal values on the macro grid, on one micro cell, and
//! on the full two-scale product grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grids, MacroGrid, MicroGrid};

/// Nodal values on the macro grid (pressure, source terms, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroField {
    pub values: Vec<f64>,
}

impl MacroField {
    pub fn zeros(n: usize) -> Self {
        MacroField { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        MacroField { values: vec![c; n] }
    }

    pub fn from_fn(grid: &MacroGrid, mut f: impl FnMut(f64) -> f64) -> Self {
        MacroField { values: grid.coords.iter().map(|&x| f(x)).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_shape(&self, grid: &MacroGrid) -> Result<()> {
        if self.values.len() != grid.n_x {
            return Err(Error::Shape(format!(
                "macro field has {} values, grid has {} nodes",
                self.values.len(),
                grid.n_x
            )));
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Self {
        MacroField { values: self.values.iter().map(|v| s * v).collect() }
    }
}

impl std::ops::Index<usize> for MacroField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Density values on one micro cell (all Y nodes for a single macro node).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroField {
    pub values: Vec<f64>,
}

impl MicroField {
    pub fn zeros(grid: &MicroGrid) -> Self {
        MicroField { values: vec![0.0; grid.n_nodes()] }
    }

    pub fn constant(grid: &MicroGrid, c: f64) -> Self {
        MicroField { values: vec![c; grid.n_nodes()] }
    }

    pub fn from_fn(grid: &MicroGrid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_nodes());
        for i2 in 0..grid.n_y {
            for i1 in 0..grid.n_y {
                let (y1, y2) = grid.coords(i1, i2);
                values.push(f(y1, y2));
            }
        }
        MicroField { values }
    }

    pub fn check_shape(&self, grid: &MicroGrid) -> Result<()> {
        if self.values.len() != grid.n_nodes() {
            return Err(Error::Shape(format!(
                "micro field has {} values, grid has {} nodes",
                self.values.len(),
                grid.n_nodes()
            )));
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Self {
        MicroField { values: self.values.iter().map(|v| s * v).collect() }
    }
}

/// One micro field per macro node: the distributed-microstructure state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleField {
    pub cells: Vec<MicroField>,
}

impl TwoScaleField {
    pub fn constant(grids: &Grids, c: f64) -> Self {
        TwoScaleField {
            cells: (0..grids.macro_grid.n_x)
                .map(|_| MicroField::constant(&grids.micro_grid, c))
                .collect(),
        }
    }

    pub fn from_fn(grids: &Grids, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        grids
            .macro_grid
            .coords
            .iter()
            .map(|&x| MicroField::from_fn(&grids.micro_grid, |y1, y2| f(x, y1, y2)))
            .collect::<Vec<_>>()
            .into()
    }

    pub fn n_macro(&self) -> usize {
        self.cells.len()
    }

    pub fn check_shape(&self, grids: &Grids) -> Result<()> {
        if self.cells.len() != grids.macro_grid.n_x {
            return Err(Error::Shape(format!(
                "two-scale field has {} cells, macro grid has {} nodes",
                self.cells.len(),
                grids.macro_grid.n_x
            )));
        }
        for cell in &self.cells {
            cell.check_shape(&grids.micro_grid)?;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Self {
        TwoScaleField { cells: self.cells.iter().map(|c| c.scale(s)).collect() }
    }
}

impl From<Vec<MicroField>> for TwoScaleField {
    fn from(cells: Vec<MicroField>) -> Self {
        TwoScaleField { cells }
    }
}

/// Boundary-trace values, indexed (macro node, boundary node). The boundary
/// node order is the grid's documented edge-wise order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceField {
    pub values: Vec<f64>,
    pub n_macro: usize,
    pub n_boundary: usize,
}

impl TraceField {
    pub fn zeros(n_macro: usize, n_boundary: usize) -> Self {
        TraceField { values: vec![0.0; n_macro * n_boundary], n_macro, n_boundary }
    }

    pub fn at(&self, x: usize, b: usize) -> f64 {
        self.values[x * self.n_boundary + b]
    }

    pub fn at_mut(&mut self, x: usize, b: usize) -> &mut f64 {
        &mut self.values[x * self.n_boundary + b]
    }
}
