//! Dyadic Dirichlet grids on intervals and rectangles.
//!
//! At level `m` each axis of extent `L` is split into `4·2^m` cells of width
//! `h = L / (4·2^m)`. Boundary nodes carry the homogeneous Dirichlet condition
//! and are not degrees of freedom, so an axis contributes `4·2^m − 1` interior
//! nodes. In two dimensions the node set is the tensor product ordered
//! row-major: node `k = i·n_y + j` sits at `(x_i, y_j)`.

use crate::{Error, Result};

/// Cells per axis at level 0.
pub const BASE_CELLS: usize = 4;

/// Refinement guard; level 20 already means 4M cells per axis.
pub const MAX_LEVEL: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lengths: Vec<f64>,
}

impl Domain {
    pub fn new(lengths: Vec<f64>) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 2 {
            return Err(Error::InvalidDomain(format!(
                "dimension {} not in {{1, 2}}",
                lengths.len()
            )));
        }
        if let Some(l) = lengths.iter().find(|l| !l.is_finite() || **l <= 0.0) {
            return Err(Error::InvalidDomain(format!(
                "extent {l} must be positive and finite"
            )));
        }
        Ok(Self { lengths })
    }

    pub fn interval(length: f64) -> Result<Self> {
        Self::new(vec![length])
    }

    pub fn square(length: f64) -> Result<Self> {
        Self::new(vec![length, length])
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point
            .iter()
            .zip(&self.lengths)
            .all(|(x, l)| (0.0..=*l).contains(x))
    }

    pub fn on_boundary(&self, point: &[f64]) -> bool {
        point
            .iter()
            .zip(&self.lengths)
            .any(|(x, l)| *x == 0.0 || x == l)
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    domain: Domain,
    level: u32,
    cells: usize,
    spacing: Vec<f64>,
    axes: Vec<Vec<f64>>,
    coords: Vec<f64>,
}

impl Grid {
    pub fn build(domain: Domain, level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::InvalidLevel(level));
        }
        let cells = BASE_CELLS << level;
        let spacing: Vec<f64> = domain.lengths().iter().map(|l| l / cells as f64).collect();
        let axes: Vec<Vec<f64>> = spacing
            .iter()
            .map(|h| (1..cells).map(|i| i as f64 * h).collect())
            .collect();

        let dim = domain.dim();
        let mut coords = Vec::with_capacity(axes.iter().map(Vec::len).product::<usize>() * dim);
        match dim {
            1 => coords.extend_from_slice(&axes[0]),
            _ => {
                for &x in &axes[0] {
                    for &y in &axes[1] {
                        coords.push(x);
                        coords.push(y);
                    }
                }
            }
        }

        Ok(Self {
            domain,
            level,
            cells,
            spacing,
            axes,
            coords,
        })
    }

    pub fn refine(&self) -> Result<Self> {
        Self::build(self.domain.clone(), self.level + 1)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cells per axis.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Largest cell width over the axes.
    pub fn h(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    /// Interior node coordinates along one axis.
    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    /// Interior nodes per axis.
    pub fn axis_len(&self) -> usize {
        self.cells - 1
    }

    pub fn n_dofs(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[k * d..(k + 1) * d]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim())
    }

    /// Per-axis interior indices of node `k`.
    pub fn multi_index(&self, k: usize) -> [usize; 2] {
        let n = self.axis_len();
        match self.dim() {
            1 => [k, 0],
            _ => [k / n, k % n],
        }
    }
}
