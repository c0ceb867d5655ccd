//! 1D slab mesh.
//!
//! Interior faces are the shared vertices between cells. Every face normal
//! points in +x: the `-` trace at a face is the right node of the left cell
//! and the `+` trace is the left node of the right cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Vacuum,
    Reflective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// A homogeneous region subdivided into equal cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub width: f64,
    pub material: usize,
    pub cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorNode {
    /// Vertex index in `0..=num_cells`.
    pub vertex: usize,
    pub x: f64,
    pub left_cell: usize,
    pub right_cell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlabMesh {
    cell_edges: Vec<f64>,
    /// Kept alongside the edges so cells of one uniform region share a
    /// bit-identical width.
    cell_widths: Vec<f64>,
    cell_material: Vec<usize>,
    pub left_bc: BoundaryCondition,
    pub right_bc: BoundaryCondition,
}

impl SlabMesh {
    pub fn new(
        cell_edges: Vec<f64>,
        cell_material: Vec<usize>,
        left_bc: BoundaryCondition,
        right_bc: BoundaryCondition,
    ) -> Result<Self> {
        if cell_edges.len() < 2 {
            return Err(Error::InvalidMesh("at least one cell is required".into()));
        }
        if cell_material.len() != cell_edges.len() - 1 {
            return Err(Error::InvalidMesh(format!(
                "{} cells but {} material ids",
                cell_edges.len() - 1,
                cell_material.len()
            )));
        }
        if let Some(i) = cell_edges.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidMesh(format!("cell {i} has non-positive width")));
        }
        let cell_widths = cell_edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { cell_edges, cell_widths, cell_material, left_bc, right_bc })
    }

    /// Concatenates uniform subdivisions of each region, starting at x = 0.
    pub fn build_uniform(
        regions: &[Region],
        num_materials: usize,
        left_bc: BoundaryCondition,
        right_bc: BoundaryCondition,
    ) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::InvalidMesh("empty region list".into()));
        }
        let total: usize = regions.iter().map(|r| r.cells).sum();
        let mut edges = Vec::with_capacity(total + 1);
        let mut materials = Vec::with_capacity(total);
        let mut widths = Vec::with_capacity(total);
        edges.push(0.0);
        let mut x0 = 0.0;
        for (i, r) in regions.iter().enumerate() {
            if !(r.width > 0.0) || !r.width.is_finite() {
                return Err(Error::InvalidMesh(format!("region {i} has non-positive width")));
            }
            if r.cells == 0 {
                return Err(Error::InvalidMesh(format!("region {i} has no cells")));
            }
            if r.material >= num_materials {
                return Err(Error::InvalidMesh(format!("region {i} refers to unknown material id {}", r.material)));
            }
            for c in 1..=r.cells {
                edges.push(x0 + r.width * c as f64 / r.cells as f64);
                materials.push(r.material);
                widths.push(r.width / r.cells as f64);
            }
            x0 += r.width;
        }
        let mut mesh = Self::new(edges, materials, left_bc, right_bc)?;
        mesh.cell_widths = widths;
        Ok(mesh)
    }

    pub fn num_cells(&self) -> usize {
        self.cell_material.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.cell_edges.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.cell_edges
    }

    pub fn width(&self, cell: usize) -> f64 {
        self.cell_widths[cell]
    }

    pub fn widths(&self) -> Vec<f64> {
        self.cell_widths.clone()
    }

    pub fn material(&self, cell: usize) -> usize {
        self.cell_material[cell]
    }

    pub fn materials(&self) -> &[usize] {
        &self.cell_material
    }

    pub fn length(&self) -> f64 {
        self.cell_edges[self.cell_edges.len() - 1] - self.cell_edges[0]
    }

    pub fn bc(&self, side: Side) -> BoundaryCondition {
        match side {
            Side::Left => self.left_bc,
            Side::Right => self.right_bc,
        }
    }

    pub fn interior_nodes(&self) -> Vec<InteriorNode> {
        (1..self.num_cells())
            .map(|v| InteriorNode { vertex: v, x: self.cell_edges[v], left_cell: v - 1, right_cell: v })
            .collect()
    }
}
