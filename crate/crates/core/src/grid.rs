//! Tensor-product grids for the macroscopic interval and the microscopic
//! unit-square cell, with boundary tagging and trapezoid quadrature.
//!
//! Micro nodes are stored flat as `i2 * n_y + i1` where `i1` indexes the
//! first coordinate (y1) and `i2` the second (y2). Boundary traces follow a
//! fixed edge-wise order: edges sorted by id (left=0, right=1, bottom=2,
//! top=3), nodes along each edge by increasing coordinate. Corner nodes on
//! the Robin edge are tagged ROBIN; the full-edge traces for the remaining
//! Neumann edges still include their endpoints so that each edge carries a
//! complete 1D trapezoid rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::Csr;

/// Discretization of the macroscopic interval (0, L_x). The first and last
/// nodes are the Dirichlet boundary.
#[derive(Debug, Clone)]
pub struct MacroGrid {
    pub n_x: usize,
    pub l_x: f64,
    pub h_x: f64,
    pub coords: Vec<f64>,
    /// Trapezoid quadrature weights, one per node.
    pub weights: Vec<f64>,
}

impl MacroGrid {
    pub fn new(n_x: usize, l_x: f64) -> Result<Self> {
        if n_x < 3 {
            return Err(Error::Config(format!("n_x must be >= 3, got {n_x}")));
        }
        if !(l_x > 0.0) {
            return Err(Error::Config(format!("L_x must be positive, got {l_x}")));
        }
        let h_x = l_x / (n_x - 1) as f64;
        let coords = (0..n_x).map(|i| i as f64 * h_x).collect();
        let mut weights = vec![h_x; n_x];
        weights[0] = 0.5 * h_x;
        weights[n_x - 1] = 0.5 * h_x;
        Ok(MacroGrid { n_x, l_x, h_x, coords, weights })
    }

    pub fn n_interior(&self) -> usize {
        self.n_x - 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    pub fn id(self) -> usize {
        match self {
            Edge::Left => 0,
            Edge::Right => 1,
            Edge::Bottom => 2,
            Edge::Top => 3,
        }
    }

    pub fn parse(s: &str) -> Result<Edge> {
        match s {
            "left" => Ok(Edge::Left),
            "right" => Ok(Edge::Right),
            "bottom" => Ok(Edge::Bottom),
            "top" => Ok(Edge::Top),
            other => Err(Error::Config(format!(
                "robin_side must be one of left/right/bottom/top, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Robin,
    Neumann,
}

/// Discretization of the unit-square micro cell with one edge tagged as the
/// Robin boundary and the remaining three as Neumann.
#[derive(Debug, Clone)]
pub struct MicroGrid {
    pub n_y: usize,
    pub h_y: f64,
    pub robin_side: Edge,
    /// Tag per flat node index; `None` for interior nodes.
    pub tags: Vec<Option<BoundaryTag>>,
    /// Flat node indices along the Robin edge, ordered by increasing
    /// coordinate along the edge.
    pub robin_nodes: Vec<usize>,
    /// 1D trapezoid weights matching `robin_nodes`.
    pub robin_weights: Vec<f64>,
    /// The three Neumann edges, sorted by edge id.
    pub neumann_edges: Vec<Edge>,
    /// Flat node indices of the Neumann trace, edge-wise concatenated.
    pub neumann_nodes: Vec<usize>,
    /// 1D trapezoid weights matching `neumann_nodes`.
    pub neumann_weights: Vec<f64>,
    /// 2D trapezoid quadrature weights (lumped mass), one per node.
    pub mass: Vec<f64>,
    /// Stiffness matrix of the Neumann Laplacian: u'Kv approximates
    /// the Dirichlet energy integral of grad_y u . grad_y v over Y.
    pub stiffness: Csr,
}

impl MicroGrid {
    pub fn new(n_y: usize, robin_side: Edge) -> Result<Self> {
        if n_y < 3 {
            return Err(Error::Config(format!("n_y must be >= 3, got {n_y}")));
        }
        let h = 1.0 / (n_y - 1) as f64;
        let n_nodes = n_y * n_y;
        let flat = |i1: usize, i2: usize| i2 * n_y + i1;

        let w1d = |i: usize| if i == 0 || i == n_y - 1 { 0.5 * h } else { h };

        // Node tags: the Robin edge owns its corner nodes.
        let mut tags: Vec<Option<BoundaryTag>> = vec![None; n_nodes];
        for i2 in 0..n_y {
            for i1 in 0..n_y {
                let on_boundary = i1 == 0 || i1 == n_y - 1 || i2 == 0 || i2 == n_y - 1;
                if !on_boundary {
                    continue;
                }
                let on_robin = match robin_side {
                    Edge::Left => i1 == 0,
                    Edge::Right => i1 == n_y - 1,
                    Edge::Bottom => i2 == 0,
                    Edge::Top => i2 == n_y - 1,
                };
                tags[flat(i1, i2)] =
                    Some(if on_robin { BoundaryTag::Robin } else { BoundaryTag::Neumann });
            }
        }

        let edge_nodes = |edge: Edge| -> Vec<usize> {
            match edge {
                Edge::Left => (0..n_y).map(|i2| flat(0, i2)).collect(),
                Edge::Right => (0..n_y).map(|i2| flat(n_y - 1, i2)).collect(),
                Edge::Bottom => (0..n_y).map(|i1| flat(i1, 0)).collect(),
                Edge::Top => (0..n_y).map(|i1| flat(i1, n_y - 1)).collect(),
            }
        };
        let edge_weights: Vec<f64> = (0..n_y).map(w1d).collect();

        let robin_nodes = edge_nodes(robin_side);
        let robin_weights = edge_weights.clone();

        let mut neumann_edges: Vec<Edge> =
            Edge::ALL.iter().copied().filter(|e| *e != robin_side).collect();
        neumann_edges.sort_by_key(|e| e.id());
        let mut neumann_nodes = Vec::with_capacity(3 * n_y);
        let mut neumann_weights = Vec::with_capacity(3 * n_y);
        for &edge in &neumann_edges {
            neumann_nodes.extend(edge_nodes(edge));
            neumann_weights.extend(edge_weights.iter().copied());
        }

        // Lumped mass: product of the 1D trapezoid weights.
        let mut mass = vec![0.0; n_nodes];
        for i2 in 0..n_y {
            for i1 in 0..n_y {
                mass[flat(i1, i2)] = w1d(i1) * w1d(i2);
            }
        }

        // Stiffness assembled link-wise: a link in direction y1 between
        // (i1,i2) and (i1+1,i2) contributes w1d(i2)/h to the difference
        // quadratic form (midpoint derivative, trapezoid transverse).
        let mut triplets = Vec::new();
        let mut add_link = |a: usize, b: usize, c: f64| {
            triplets.push((a, a, c));
            triplets.push((b, b, c));
            triplets.push((a, b, -c));
            triplets.push((b, a, -c));
        };
        for i2 in 0..n_y {
            for i1 in 0..n_y - 1 {
                add_link(flat(i1, i2), flat(i1 + 1, i2), w1d(i2) / h);
            }
        }
        for i1 in 0..n_y {
            for i2 in 0..n_y - 1 {
                add_link(flat(i1, i2), flat(i1, i2 + 1), w1d(i1) / h);
            }
        }
        let stiffness = Csr::from_triplets(n_nodes, &triplets);

        Ok(MicroGrid {
            n_y,
            h_y: h,
            robin_side,
            tags,
            robin_nodes,
            robin_weights,
            neumann_edges,
            neumann_nodes,
            neumann_weights,
            mass,
            stiffness,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_y * self.n_y
    }

    pub fn n_robin(&self) -> usize {
        self.robin_nodes.len()
    }

    pub fn n_neumann_trace(&self) -> usize {
        self.neumann_nodes.len()
    }

    pub fn coords(&self, i1: usize, i2: usize) -> (f64, f64) {
        (i1 as f64 * self.h_y, i2 as f64 * self.h_y)
    }

    /// |Gamma_R| by quadrature.
    pub fn robin_measure(&self) -> f64 {
        self.robin_weights.iter().sum()
    }

    /// |Gamma_N| by edge-wise quadrature.
    pub fn neumann_measure(&self) -> f64 {
        self.neumann_weights.iter().sum()
    }
}

/// The pair of grids every solver operation works on.
#[derive(Debug, Clone)]
pub struct Grids {
    pub macro_grid: MacroGrid,
    pub micro_grid: MicroGrid,
}

impl Grids {
    pub fn new(n_x: usize, l_x: f64, n_y: usize, robin_side: Edge) -> Result<Self> {
        Ok(Grids {
            macro_grid: MacroGrid::new(n_x, l_x)?,
            micro_grid: MicroGrid::new(n_y, robin_side)?,
        })
    }
}
