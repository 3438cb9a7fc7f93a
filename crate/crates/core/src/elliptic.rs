//! Macroscopic nonlinear elliptic solve: -A rho_F u'' = f(u, rho) on the
//! interval with homogeneous Dirichlet ends. The linear kernel is a direct
//! tridiagonal solve; the nonlinearity is resolved by Picard iteration,
//! which contracts whenever the structural constant times the Poincare
//! constant stays below one.

use crate::context::Context;
use crate::error::{Error, Result};
use crate::field::{MacroField, TwoScaleField};
use crate::grid::MacroGrid;
use crate::model::{eval_f_from_means, micro_averages};
use crate::norms::macro_l2;
use crate::sparse::solve_tridiagonal;

/// Solve -coeff * u'' = source at the interior nodes, u = 0 at both ends.
pub fn solve_poisson(source: &MacroField, coeff: f64, grid: &MacroGrid) -> MacroField {
    assert!(coeff > 0.0, "diffusivity must be positive");
    assert_eq!(source.len(), grid.n_x);
    let m = grid.n_interior();
    let h2 = grid.h_x * grid.h_x;
    let diag = vec![2.0 * coeff / h2; m];
    let off = vec![-coeff / h2; m.saturating_sub(1)];
    let rhs: Vec<f64> = source.values[1..grid.n_x - 1].to_vec();
    let interior = solve_tridiagonal(&off, &diag, &off, &rhs);
    let mut u = MacroField::zeros(grid.n_x);
    u.values[1..grid.n_x - 1].copy_from_slice(&interior);
    u
}

/// Picard iteration for the nonlinear pressure equation at a frozen micro
/// state. Returns the pressure and the iteration count.
pub fn solve_elliptic(
    ctx: &Context,
    rho: &TwoScaleField,
    guess: &MacroField,
) -> Result<(MacroField, usize)> {
    rho.check_shape(&ctx.grids)?;
    let means = micro_averages(rho, &ctx.grids.micro_grid);
    solve_elliptic_from_means(ctx, &means, guess)
}

/// Same iteration with the micro cell averages precomputed (the coupling
/// loop reuses them).
pub fn solve_elliptic_from_means(
    ctx: &Context,
    means: &[f64],
    guess: &MacroField,
) -> Result<(MacroField, usize)> {
    let grid = &ctx.grids.macro_grid;
    let coeff = ctx.params.diffusivity();
    let mut pi = guess.clone();
    pi.check_shape(grid)?;
    // Dirichlet ends are hard constraints on every iterate.
    pi.values[0] = 0.0;
    pi.values[grid.n_x - 1] = 0.0;

    for iter in 1..=ctx.tols.max_picard {
        let f = eval_f_from_means(&pi, means, &ctx.params, ctx.mode);
        let next = solve_poisson(&f, coeff, grid);
        let update = field_distance(&next, &pi, grid);
        let scale = macro_l2(&pi, grid).max(1.0);
        pi = next;
        if update <= ctx.tols.tol_picard * scale {
            return Ok((pi, iter));
        }
    }
    let f = eval_f_from_means(&pi, means, &ctx.params, ctx.mode);
    let next = solve_poisson(&f, coeff, grid);
    let update = field_distance(&next, &pi, grid);
    Err(Error::FixedPoint { update, iters: ctx.tols.max_picard })
}

/// Macro pressure slaved to the initial micro state.
pub fn initial_pressure(ctx: &Context, rho_init: &TwoScaleField) -> Result<MacroField> {
    let guess = MacroField::zeros(ctx.grids.macro_grid.n_x);
    Ok(solve_elliptic(ctx, rho_init, &guess)?.0)
}

pub fn field_distance(a: &MacroField, b: &MacroField, grid: &MacroGrid) -> f64 {
    let diff = MacroField {
        values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
    };
    macro_l2(&diff, grid)
}
