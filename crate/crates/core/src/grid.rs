//! Uniform node grids over an interval or a rectangle, and values sampled on them.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::uniform_grid;

/// Uniform grid over `D̄ = Π [lower_a, upper_a]` including boundary nodes.
///
/// Nodes are numbered lexicographically with the first axis outermost:
/// `node = i` in one dimension and `node = i·ny + j` in two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    shape: Vec<usize>,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let dim = shape.len();
        if !(1..=2).contains(&dim) || lower.len() != dim || upper.len() != dim {
            return Err(Error::input(format!(
                "grid must be 1- or 2-dimensional with matching bounds, got shape {shape:?}"
            )));
        }
        for a in 0..dim {
            if shape[a] < 3 {
                return Err(Error::input(format!(
                    "axis {a} needs at least 3 nodes, got {}",
                    shape[a]
                )));
            }
            if !(lower[a].is_finite() && upper[a].is_finite() && lower[a] < upper[a]) {
                return Err(Error::input(format!(
                    "axis {a} has invalid bounds [{}, {}]",
                    lower[a], upper[a]
                )));
            }
        }
        Ok(Grid {
            lower,
            upper,
            shape,
        })
    }

    pub fn interval(lo: f64, hi: f64, nx: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![nx])
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        Self::new(vec![x.0, y.0], vec![x.1, y.1], vec![nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn node_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.shape[axis] - 1) as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    /// Node coordinates along one axis; the last entry is exactly the upper bound.
    pub fn axis(&self, axis: usize) -> Vec<f64> {
        uniform_grid(self.lower[axis], self.upper[axis], self.shape[axis])
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.shape[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + self.spacing(axis) * i as f64
        }
    }

    /// Per-axis indices of a node; unused axes are zero.
    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        match self.dim() {
            1 => [node, 0],
            _ => [node / self.shape[1], node % self.shape[1]],
        }
    }

    pub fn node(&self, index: [usize; 2]) -> usize {
        match self.dim() {
            1 => index[0],
            _ => index[0] * self.shape[1] + index[1],
        }
    }

    /// Flat-index offset of one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        if axis + 1 == self.dim() {
            1
        } else {
            self.shape[1]
        }
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        let idx = self.multi_index(node);
        (0..self.dim()).map(|a| self.coordinate(a, idx[a])).collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let idx = self.multi_index(node);
        (0..self.dim()).any(|a| idx[a] == 0 || idx[a] + 1 == self.shape[a])
    }

    /// Whether every node within `depth` steps along each axis exists.
    pub fn has_margin(&self, node: usize, depth: usize) -> bool {
        let idx = self.multi_index(node);
        (0..self.dim()).all(|a| idx[a] >= depth && idx[a] + depth < self.shape[a])
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&n| self.is_boundary(n)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&n| !self.is_boundary(n)).collect()
    }

    pub fn sample(&self, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        (0..self.node_count()).map(|n| f(&self.point(n))).collect()
    }

    /// Whether both axes share the same spacing (relative `1e-12`).
    pub fn is_isotropic(&self) -> bool {
        let h0 = self.spacing(0);
        (0..self.dim()).all(|a| (self.spacing(a) - h0).abs() <= 1e-12 * h0)
    }

    /// Rebuilds a grid from per-axis coordinate lists read back from a file.
    pub(crate) fn from_axes(axes: &[Vec<f64>]) -> Result<Self> {
        let lower = axes.iter().map(|a| a[0]).collect();
        let upper = axes.iter().map(|a| *a.last().unwrap()).collect();
        let shape = axes.iter().map(Vec::len).collect();
        let grid = Grid::new(lower, upper, shape)?;
        for (axis, coords) in axes.iter().enumerate() {
            let h = grid.spacing(axis);
            for (i, c) in coords.iter().enumerate() {
                if (grid.coordinate(axis, i) - c).abs() > 1e-9 * h {
                    return Err(Error::input(format!(
                        "axis {axis} coordinates are not uniformly spaced near {c}"
                    )));
                }
            }
        }
        Ok(grid)
    }
}

/// Values over every node of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceGrid {
    grid: Grid,
    values: Vec<f64>,
}

const AXIS_NAMES: [&str; 2] = ["x", "y"];

impl SpaceGrid {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::input(format!(
                "grid has {} nodes but {} values were given",
                grid.node_count(),
                values.len()
            )));
        }
        if let Some(n) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "value at node {n} ({:?}) is not finite",
                grid.point(n)
            )));
        }
        Ok(SpaceGrid { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = grid.sample(f);
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_distance(&self, other: &SpaceGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// CSV with header `x[,y],value`, nodes in lexicographic order, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.grid.dim();
        writeln!(w, "{},value", AXIS_NAMES[..dim].join(","))?;
        for (node, v) in self.values.iter().enumerate() {
            for c in self.grid.point(node) {
                write!(w, "{},", fmt17(c))?;
            }
            writeln!(w, "{}", fmt17(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let table = read_table(r)?;
        let dim = table.header.len() - 1;
        if !(1..=2).contains(&dim)
            || table.header[..dim] != AXIS_NAMES[..dim]
            || table.header[dim] != "value"
        {
            return Err(Error::input(format!(
                "expected header x[,y],value, got {}",
                table.header.join(",")
            )));
        }
        let axes = distinct_axes(&table.rows, 0, dim)?;
        let grid = Grid::from_axes(&axes)?;
        check_lexicographic(&grid, &table.rows, 0)?;
        Self::new(grid, table.rows.iter().map(|r| r[dim]).collect())
    }
}

/// Scientific notation with 17 significant digits.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub(crate) fn read_table<R: BufRead>(r: R) -> Result<Table> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::input("empty CSV"))?
        .map_err(|e| Error::input(format!("CSV read error: {e}")))?;
    let header: Vec<String> = header_line.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::input(format!("CSV read error: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::input(format!("CSV line {}: {e}", lineno + 2)))?;
        if row.len() != header.len() {
            return Err(Error::input(format!(
                "CSV line {} has {} fields, expected {}",
                lineno + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Sorted distinct coordinates of columns `first..first + count`.
pub(crate) fn distinct_axes(rows: &[Vec<f64>], first: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    (first..first + count)
        .map(|col| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[col]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            if v.len() < 2 {
                return Err(Error::input(format!("column {col} has fewer than two distinct values")));
            }
            Ok(v)
        })
        .collect()
}

/// Checks that `rows` enumerate the grid lexicographically starting at column `first`,
/// repeated for every leading block.
pub(crate) fn check_lexicographic(grid: &Grid, rows: &[Vec<f64>], first: usize) -> Result<()> {
    let count = grid.node_count();
    if !rows.len().is_multiple_of(count) {
        return Err(Error::input(format!(
            "{} rows do not tile a grid of {count} nodes",
            rows.len()
        )));
    }
    for (r, row) in rows.iter().enumerate() {
        let node = r % count;
        for (a, expected) in grid.point(node).iter().enumerate() {
            if (row[first + a] - expected).abs() > 1e-9 * grid.spacing(a) {
                return Err(Error::input(format!(
                    "row {} is out of lexicographic order",
                    r + 1
                )));
            }
        }
    }
    Ok(())
}
