//! Uniform rectangular discretization of the spatial domain with trapezoid
//! cell weights, shared by every operator in the engine.
//!
//! Nodes include the boundary and are flattened row-major with x fastest;
//! this ordering is fixed so assembled kernel matrices and exported CSV
//! files are reproducible bit-for-bit across runs.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{CoreError, Result};

/// Uniform node-centered grid on a 1D interval or 2D rectangle.
#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    extents: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    coords: Vec<f64>,
    cell_weight: Vec<f64>,
}

impl Grid {
    /// Build a grid over (0, extents[0]) x (0, extents[1]).
    ///
    /// Rejects `dim` outside {1, 2}, non-positive extents and axis counts
    /// below 3. The per-node quadrature weight is the tensor product of
    /// per-axis trapezoid weights, so the weights sum to the domain measure.
    pub fn new(dim: usize, extents: &[f64], counts: &[usize]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(CoreError::invalid("dim", format!("must be 1 or 2, got {dim}")));
        }
        if extents.len() != dim || counts.len() != dim {
            return Err(CoreError::invalid(
                "extents/counts",
                format!(
                    "expected {dim} entries, got {} and {}",
                    extents.len(),
                    counts.len()
                ),
            ));
        }
        for (axis, &e) in extents.iter().enumerate() {
            if !(e > 0.0) || !e.is_finite() {
                return Err(CoreError::invalid(
                    "extents",
                    format!("axis {axis} extent must be positive and finite, got {e}"),
                ));
            }
        }
        for (axis, &c) in counts.iter().enumerate() {
            if c < 3 {
                return Err(CoreError::invalid(
                    "counts",
                    format!("axis {axis} needs at least 3 nodes, got {c}"),
                ));
            }
        }
        let spacing: Vec<f64> = extents
            .iter()
            .zip(counts)
            .map(|(&e, &c)| e / (c - 1) as f64)
            .collect();

        let n = counts.iter().product::<usize>();
        let mut coords = Vec::with_capacity(n * dim);
        let mut cell_weight = Vec::with_capacity(n);
        let axis_weight = |axis: usize, i: usize| -> f64 {
            if i == 0 || i == counts[axis] - 1 {
                0.5 * spacing[axis]
            } else {
                spacing[axis]
            }
        };
        match dim {
            1 => {
                for i in 0..counts[0] {
                    coords.push(i as f64 * spacing[0]);
                    cell_weight.push(axis_weight(0, i));
                }
            }
            _ => {
                for iy in 0..counts[1] {
                    for ix in 0..counts[0] {
                        coords.push(ix as f64 * spacing[0]);
                        coords.push(iy as f64 * spacing[1]);
                        cell_weight.push(axis_weight(0, ix) * axis_weight(1, iy));
                    }
                }
            }
        }
        Ok(Grid {
            dim,
            extents: extents.to_vec(),
            counts: counts.to_vec(),
            spacing,
            coords,
            cell_weight,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn num_nodes(&self) -> usize {
        self.cell_weight.len()
    }

    /// Coordinates of node `i` as a slice of length `dim`.
    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell_weights(&self) -> &[f64] {
        &self.cell_weight
    }

    /// |Omega|, the product of the extents.
    pub fn domain_measure(&self) -> f64 {
        self.extents.iter().product()
    }

    /// Flat index of the node with per-axis indices (x fastest).
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        match self.dim {
            1 => ix,
            _ => iy * self.counts[0] + ix,
        }
    }

    /// Per-axis indices of flat node `i`.
    pub fn axis_indices(&self, i: usize) -> (usize, usize) {
        match self.dim {
            1 => (i, 0),
            _ => (i % self.counts[0], i / self.counts[0]),
        }
    }
}

/// An m-component concentration field on a grid.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<Vec<f64>>,
}

impl Field {
    pub fn constant(grid: Arc<Grid>, values_per_component: &[f64]) -> Self {
        let n = grid.num_nodes();
        let values = values_per_component.iter().map(|&v| vec![v; n]).collect();
        Field { grid, values }
    }

    /// Build a field by evaluating one closure per component at every node.
    pub fn from_fn<F>(grid: Arc<Grid>, m: usize, mut f: F) -> Self
    where
        F: FnMut(usize, &[f64]) -> f64,
    {
        let n = grid.num_nodes();
        let mut values = Vec::with_capacity(m);
        for comp in 0..m {
            let mut v = Vec::with_capacity(n);
            for i in 0..n {
                v.push(f(comp, grid.node(i)));
            }
            values.push(v);
        }
        Field { grid, values }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = grid.num_nodes();
        if values.is_empty() {
            return Err(CoreError::invalid("values", "at least one component required"));
        }
        for (c, v) in values.iter().enumerate() {
            if v.len() != n {
                return Err(CoreError::GridMismatch(format!(
                    "component {c} has {} values, grid has {n} nodes",
                    v.len()
                )));
            }
        }
        Ok(Field { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn num_components(&self) -> usize {
        self.values.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(f64::INFINITY, |m, &x| m.min(x))
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(f64::NEG_INFINITY, |m, &x| m.max(x))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Discrete quadrature of one component over the domain:
/// sum of cell_weight[j] * u(x_j). Linear in the field and exact for
/// affine integrands.
pub fn integrate_field(field: &Field, component: usize) -> f64 {
    let w = field.grid().cell_weights();
    field.component(component)
        .iter()
        .zip(w)
        .map(|(u, c)| u * c)
        .sum()
}

/// Write a field snapshot as CSV: header `x[,y],u_1,...,u_m`, one row per
/// node in grid order.
pub fn write_snapshot_csv<W: Write>(out: &mut W, field: &Field) -> Result<()> {
    let grid = field.grid();
    let m = field.num_components();
    match grid.dim() {
        1 => write!(out, "x")?,
        _ => write!(out, "x,y")?,
    }
    for c in 1..=m {
        write!(out, ",u_{c}")?;
    }
    writeln!(out)?;
    for i in 0..grid.num_nodes() {
        let node = grid.node(i);
        write!(out, "{}", node[0])?;
        if grid.dim() == 2 {
            write!(out, ",{}", node[1])?;
        }
        for c in 0..m {
            write!(out, ",{}", field.component(c)[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Read a snapshot CSV produced by [`write_snapshot_csv`] back onto a grid.
///
/// Node coordinates must match the grid's node order to 1e-9 absolute.
pub fn read_snapshot_csv<R: BufRead>(input: R, grid: Arc<Grid>, m: usize) -> Result<Field> {
    let mut values = vec![Vec::with_capacity(grid.num_nodes()); m];
    let coord_cols = grid.dim();
    let mut node = 0usize;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != coord_cols + m {
            return Err(CoreError::CsvParse {
                line: lineno + 1,
                message: format!(
                    "expected {} columns, found {}",
                    coord_cols + m,
                    fields.len()
                ),
            });
        }
        if node >= grid.num_nodes() {
            return Err(CoreError::CsvParse {
                line: lineno + 1,
                message: "more rows than grid nodes".into(),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| CoreError::CsvParse {
                line: lineno + 1,
                message: format!("bad float `{s}`: {e}"),
            })
        };
        let expect = grid.node(node);
        for (axis, want) in expect.iter().enumerate() {
            let got = parse(fields[axis])?;
            if (got - want).abs() > 1e-9 {
                return Err(CoreError::CsvParse {
                    line: lineno + 1,
                    message: format!("node coordinate mismatch: got {got}, grid has {want}"),
                });
            }
        }
        for c in 0..m {
            values[c].push(parse(fields[coord_cols + c])?);
        }
        node += 1;
    }
    if node != grid.num_nodes() {
        return Err(CoreError::CsvParse {
            line: 0,
            message: format!("{} rows for {} grid nodes", node, grid.num_nodes()),
        });
    }
    Field::from_values(grid, values)
}
