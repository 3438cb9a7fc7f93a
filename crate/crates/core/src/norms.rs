//! Discrete norms, boundary traces and the Poincare constant.
//!
//! All volume and boundary integrals are trapezoid quadrature on the tensor
//! grids. The H1 seminorms are the Dirichlet energies of the difference
//! stencils (macro: links scaled by 1/h_x; micro: the grid's stiffness
//! matrix), which makes the discrete Poincare and energy identities exact.

use crate::error::{Error, Result};
use crate::field::{MacroField, MicroField, TraceField, TwoScaleField};
use crate::grid::{Grids, MacroGrid, MicroGrid};
use crate::sparse::solve_tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2Macro,
    L2TwoScale,
    H1YSeminorm,
    L2TraceGammaR,
    L2TraceGammaN,
    H1MacroSeminorm,
}

#[derive(Debug, Clone, Copy)]
pub enum FieldRef<'a> {
    Macro(&'a MacroField),
    TwoScale(&'a TwoScaleField),
    Trace(&'a TraceField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TracePart {
    GammaR,
    GammaN,
}

/// Dispatching norm evaluator; the typed helpers below do the work.
pub fn discrete_norm(field: FieldRef, kind: NormKind, grids: &Grids) -> Result<f64> {
    match (kind, field) {
        (NormKind::L2Macro, FieldRef::Macro(u)) => {
            u.check_shape(&grids.macro_grid)?;
            Ok(macro_l2(u, &grids.macro_grid))
        }
        (NormKind::H1MacroSeminorm, FieldRef::Macro(u)) => {
            u.check_shape(&grids.macro_grid)?;
            Ok(macro_h1_seminorm(u, &grids.macro_grid))
        }
        (NormKind::L2TwoScale, FieldRef::TwoScale(u)) => {
            u.check_shape(grids)?;
            Ok(two_scale_l2(u, grids))
        }
        (NormKind::H1YSeminorm, FieldRef::TwoScale(u)) => {
            u.check_shape(grids)?;
            Ok(two_scale_h1y_seminorm(u, grids))
        }
        (NormKind::L2TraceGammaR, FieldRef::Trace(t)) => trace_l2(t, TracePart::GammaR, grids),
        (NormKind::L2TraceGammaN, FieldRef::Trace(t)) => trace_l2(t, TracePart::GammaN, grids),
        (kind, _) => Err(Error::Shape(format!("field kind does not match norm {kind:?}"))),
    }
}

pub fn macro_l2(u: &MacroField, grid: &MacroGrid) -> f64 {
    let mut acc = 0.0;
    for (v, w) in u.values.iter().zip(&grid.weights) {
        acc += w * v * v;
    }
    acc.sqrt()
}

pub fn macro_h1_seminorm(u: &MacroField, grid: &MacroGrid) -> f64 {
    let mut acc = 0.0;
    for i in 0..grid.n_x - 1 {
        let d = u.values[i + 1] - u.values[i];
        acc += d * d / grid.h_x;
    }
    acc.sqrt()
}

pub fn micro_l2(v: &MicroField, grid: &MicroGrid) -> f64 {
    let mut acc = 0.0;
    for (x, w) in v.values.iter().zip(&grid.mass) {
        acc += w * x * x;
    }
    acc.sqrt()
}

pub fn micro_h1_seminorm(v: &MicroField, grid: &MicroGrid) -> f64 {
    grid.stiffness.quadratic_form(&v.values).max(0.0).sqrt()
}

pub fn two_scale_l2(u: &TwoScaleField, grids: &Grids) -> f64 {
    let mut acc = 0.0;
    for (cell, wx) in u.cells.iter().zip(&grids.macro_grid.weights) {
        let mut cell_acc = 0.0;
        for (x, w) in cell.values.iter().zip(&grids.micro_grid.mass) {
            cell_acc += w * x * x;
        }
        acc += wx * cell_acc;
    }
    acc.sqrt()
}

pub fn two_scale_h1y_seminorm(u: &TwoScaleField, grids: &Grids) -> f64 {
    let mut acc = 0.0;
    for (cell, wx) in u.cells.iter().zip(&grids.macro_grid.weights) {
        acc += wx * grids.micro_grid.stiffness.quadratic_form(&cell.values).max(0.0);
    }
    acc.sqrt()
}

/// Squared L2(Omega; H1(Y)) norm: two-scale L2 plus the y-gradient energy.
pub fn two_scale_h1y_full_sq(u: &TwoScaleField, grids: &Grids) -> f64 {
    let l2 = two_scale_l2(u, grids);
    let semi = two_scale_h1y_seminorm(u, grids);
    l2 * l2 + semi * semi
}

/// Squared H1(Omega) norm of a macro field.
pub fn macro_h1_full_sq(u: &MacroField, grid: &MacroGrid) -> f64 {
    let l2 = macro_l2(u, grid);
    let semi = macro_h1_seminorm(u, grid);
    l2 * l2 + semi * semi
}

pub fn trace_l2(t: &TraceField, part: TracePart, grids: &Grids) -> Result<f64> {
    let weights = match part {
        TracePart::GammaR => &grids.micro_grid.robin_weights,
        TracePart::GammaN => &grids.micro_grid.neumann_weights,
    };
    if t.n_boundary != weights.len() || t.n_macro != grids.macro_grid.n_x {
        return Err(Error::Shape(format!(
            "trace is {}x{}, expected {}x{}",
            t.n_macro,
            t.n_boundary,
            grids.macro_grid.n_x,
            weights.len()
        )));
    }
    let mut acc = 0.0;
    for (x, wx) in grids.macro_grid.weights.iter().enumerate() {
        let mut row = 0.0;
        for (b, wb) in weights.iter().enumerate() {
            let v = t.at(x, b);
            row += wb * v * v;
        }
        acc += wx * row;
    }
    Ok(acc.sqrt())
}

/// L2 norm of a coefficient/direction vector on Gamma_R alone.
pub fn gamma_r_l2(values: &[f64], grid: &MicroGrid) -> f64 {
    values
        .iter()
        .zip(&grid.robin_weights)
        .map(|(v, w)| w * v * v)
        .sum::<f64>()
        .sqrt()
}

/// Restrict a two-scale field to the tagged part of the micro boundary.
/// Node order is the grid's edge-wise order.
pub fn extract_trace(rho: &TwoScaleField, part: TracePart, grids: &Grids) -> Result<TraceField> {
    rho.check_shape(grids)?;
    let nodes = match part {
        TracePart::GammaR => &grids.micro_grid.robin_nodes,
        TracePart::GammaN => &grids.micro_grid.neumann_nodes,
    };
    let mut out = TraceField::zeros(rho.n_macro(), nodes.len());
    for (x, cell) in rho.cells.iter().enumerate() {
        for (b, &node) in nodes.iter().enumerate() {
            *out.at_mut(x, b) = cell.values[node];
        }
    }
    Ok(out)
}

/// Combined trace norm over the whole micro boundary (edge-wise quadrature
/// on all four edges).
pub fn full_boundary_trace_l2(rho: &TwoScaleField, grids: &Grids) -> Result<f64> {
    let tr = extract_trace(rho, TracePart::GammaR, grids)?;
    let tn = extract_trace(rho, TracePart::GammaN, grids)?;
    let a = trace_l2(&tr, TracePart::GammaR, grids)?;
    let b = trace_l2(&tn, TracePart::GammaN, grids)?;
    Ok((a * a + b * b).sqrt())
}

/// Poincare constant of the discretized interval: 1/lambda_min of the
/// tridiagonal Dirichlet Laplacian, computed by inverse power iteration
/// with Rayleigh-quotient convergence. Tends to (L_x/pi)^2 as h -> 0.
pub fn poincare_constant(grid: &MacroGrid) -> f64 {
    let m = grid.n_interior();
    let h2 = grid.h_x * grid.h_x;
    let diag = vec![2.0 / h2; m];
    let off = vec![-1.0 / h2; m.saturating_sub(1)];

    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; m];
        for i in 0..m {
            let mut acc = 2.0 * v[i];
            if i > 0 {
                acc -= v[i - 1];
            }
            if i + 1 < m {
                acc -= v[i + 1];
            }
            out[i] = acc / h2;
        }
        out
    };

    let mut v = vec![1.0; m];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = solve_tridiagonal(&off, &diag, &off, &v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        let av = apply(&v);
        let new_lambda: f64 = v.iter().zip(&av).map(|(a, b)| a * b).sum();
        if (new_lambda - lambda).abs() <= 1e-14 * new_lambda.abs() {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    1.0 / lambda
}

/// Right-endpoint rectangle rule for squared L2(0,T) accumulation of
/// per-step squared norms. `sq_norms[n]` is the value at t_n; index 0 (the
/// initial datum) is excluded.
pub fn time_l2_sq(dt: f64, sq_norms: &[f64]) -> f64 {
    sq_norms.iter().skip(1).map(|s| dt * s).sum()
}
