//! Time loop for the coupled system. Each implicit-Euler step alternates the
//! micro parabolic solve (all cells, previous time level as initial data)
//! with the macro elliptic solve until the pressure stops moving; the final
//! micro sweep is redone with the converged pressure so the returned pair
//! satisfies the discrete scheme exactly and the per-step mass identity
//! holds to linear-solver precision.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::elliptic::{field_distance, initial_pressure, solve_elliptic_from_means};
use crate::error::{Error, Result};
use crate::field::{MacroField, MicroField, TraceField, TwoScaleField};
use crate::micro::{
    assemble_micro_operator, micro_mass, micro_step_with_tol, robin_flux_integral, MicroOperator,
};
use crate::model::{micro_averages, validate_assumptions, RobinCoefficient};
use crate::norms::{extract_trace, macro_l2, two_scale_l2, TracePart};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub n_x: usize,
    pub n_y: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub config_hash: Option<String>,
}

/// Time series of the coupled state plus the measured Gamma_N traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub pressures: Vec<MacroField>,
    pub densities: Vec<TwoScaleField>,
    /// Gamma_N trace of each stored density, in the grid's edge-wise order.
    pub traces: Vec<TraceField>,
    /// Coupling iterations per time step (one entry per step, not per level).
    pub coupling_iters: Vec<usize>,
    pub meta: RunMeta,
}

impl Trajectory {
    pub fn n_levels(&self) -> usize {
        self.times.len()
    }

    pub fn final_density(&self) -> &TwoScaleField {
        self.densities.last().expect("trajectory holds at least the initial level")
    }
}

fn micro_step_all(
    ctx: &Context,
    op: &MicroOperator,
    rho_prev: &TwoScaleField,
    pi: &MacroField,
    tol_lin: f64,
) -> Result<TwoScaleField> {
    let cells: Result<Vec<MicroField>> = rho_prev
        .cells
        .par_iter()
        .zip(pi.values.par_iter())
        .map(|(cell, &pi_x)| micro_step_with_tol(cell, pi_x, op, &ctx.params, tol_lin))
        .collect();
    Ok(TwoScaleField { cells: cells? })
}

/// One coupled implicit-Euler step. Returns the new state and the number of
/// coupling iterations it took.
pub fn advance_step(
    ctx: &Context,
    pi_n: &MacroField,
    rho_n: &TwoScaleField,
    op: &MicroOperator,
) -> Result<(MacroField, TwoScaleField, usize)> {
    advance_step_with_tols(ctx, pi_n, rho_n, op, ctx.tols.tol_lin, ctx.tols.tol_couple)
}

pub fn advance_step_with_tols(
    ctx: &Context,
    pi_n: &MacroField,
    rho_n: &TwoScaleField,
    op: &MicroOperator,
    tol_lin: f64,
    tol_couple: f64,
) -> Result<(MacroField, TwoScaleField, usize)> {
    let omega = ctx.tols.omega_relax;
    let mut pi = pi_n.clone();
    let mut last_update = f64::INFINITY;

    for iter in 1..=ctx.tols.max_couple {
        let rho = micro_step_all(ctx, op, rho_n, &pi, tol_lin)?;
        let means = micro_averages(&rho, &ctx.grids.micro_grid);
        let (pi_solved, _) = solve_elliptic_from_means(ctx, &means, &pi)?;
        let pi_next = if omega == 1.0 {
            pi_solved
        } else {
            MacroField {
                values: pi
                    .values
                    .iter()
                    .zip(&pi_solved.values)
                    .map(|(old, new)| (1.0 - omega) * old + omega * new)
                    .collect(),
            }
        };
        let update = field_distance(&pi_next, &pi, &ctx.grids.macro_grid);
        let scale = macro_l2(&pi, &ctx.grids.macro_grid).max(1.0);
        pi = pi_next;
        last_update = update;
        if update <= tol_couple * scale {
            // Final sweep with the converged pressure keeps the returned
            // pair on the discrete scheme.
            let rho = micro_step_all(ctx, op, rho_n, &pi, tol_lin)?;
            return Ok((pi, rho, iter));
        }
    }
    Err(Error::Coupling { residual: last_update, iters: ctx.tols.max_couple })
}

/// Run the full simulation from an initial micro state. The pressure at
/// t = 0 is slaved to the initial density through the elliptic equation.
pub fn run_simulation(
    ctx: &Context,
    k: &RobinCoefficient,
    rho_init: &TwoScaleField,
) -> Result<Trajectory> {
    run_simulation_with(ctx, k, rho_init, true)
}

pub fn run_simulation_with(
    ctx: &Context,
    k: &RobinCoefficient,
    rho_init: &TwoScaleField,
    enforce_assumptions: bool,
) -> Result<Trajectory> {
    if enforce_assumptions {
        let report = validate_assumptions(&ctx.params, &ctx.grids.macro_grid, ctx.mode);
        if !report.ok {
            return Err(Error::Assumptions(report.summary()));
        }
    }
    rho_init.check_shape(&ctx.grids)?;
    let op = assemble_micro_operator(&ctx.grids.micro_grid, k, &ctx.params)?;
    let n_steps = ctx.n_steps();

    let mut traj = Trajectory {
        times: Vec::with_capacity(n_steps + 1),
        pressures: Vec::with_capacity(n_steps + 1),
        densities: Vec::with_capacity(n_steps + 1),
        traces: Vec::with_capacity(n_steps + 1),
        coupling_iters: Vec::with_capacity(n_steps),
        meta: RunMeta {
            n_x: ctx.grids.macro_grid.n_x,
            n_y: ctx.grids.micro_grid.n_y,
            dt: ctx.params.dt,
            n_steps,
            config_hash: None,
        },
    };

    let pi0 = initial_pressure(ctx, rho_init)?;
    traj.times.push(0.0);
    traj.traces.push(extract_trace(rho_init, TracePart::GammaN, &ctx.grids)?);
    traj.pressures.push(pi0);
    traj.densities.push(rho_init.clone());

    for step in 1..=n_steps {
        let prev_pi = traj.pressures.last().unwrap();
        let prev_rho = traj.densities.last().unwrap();
        match advance_step(ctx, prev_pi, prev_rho, &op) {
            Ok((pi, rho, iters)) => {
                traj.times.push(step as f64 * ctx.params.dt);
                traj.traces.push(extract_trace(&rho, TracePart::GammaN, &ctx.grids)?);
                traj.pressures.push(pi);
                traj.densities.push(rho);
                traj.coupling_iters.push(iters);
            }
            Err(e) => {
                return Err(Error::Simulation {
                    step,
                    source: Box::new(e),
                    partial: Box::new(traj),
                })
            }
        }
    }
    Ok(traj)
}

/// Total two-scale mass of a state.
pub fn total_mass(rho: &TwoScaleField, ctx: &Context) -> f64 {
    rho.cells
        .iter()
        .zip(&ctx.grids.macro_grid.weights)
        .map(|(cell, wx)| wx * micro_mass(cell, &ctx.grids.micro_grid))
        .sum()
}

/// Relative defect of the coupled mass identity for one step: the change of
/// total mass against the quadrature of the Robin flux at the new state.
/// Normalized by the flux magnitude so equilibrium steps do not divide by
/// zero.
pub fn step_mass_identity_defect(
    ctx: &Context,
    k: &RobinCoefficient,
    rho_prev: &TwoScaleField,
    rho_next: &TwoScaleField,
    pi_next: &MacroField,
) -> f64 {
    let lhs = (total_mass(rho_next, ctx) - total_mass(rho_prev, ctx)) / ctx.params.dt;
    let mut rhs = 0.0;
    let mut magnitude = 0.0;
    for (x, wx) in ctx.grids.macro_grid.weights.iter().enumerate() {
        rhs += wx
            * robin_flux_integral(
                &rho_next.cells[x],
                pi_next.values[x],
                k,
                &ctx.params,
                &ctx.grids.micro_grid,
            );
        let cell = &rho_next.cells[x];
        let mut mag = 0.0;
        for ((node, w), kj) in ctx
            .grids
            .micro_grid
            .robin_nodes
            .iter()
            .zip(&ctx.grids.micro_grid.robin_weights)
            .zip(&k.values)
        {
            mag += w
                * kj
                * (pi_next.values[x].abs()
                    + ctx.params.p_f
                    + ctx.params.r * cell.values[*node].abs());
        }
        magnitude += wx * mag;
    }
    let scale = lhs.abs().max(rhs.abs()).max(magnitude).max(f64::MIN_POSITIVE);
    (lhs - rhs).abs() / scale
}

/// Largest per-step mass-identity defect along a trajectory.
pub fn mass_identity_max_defect(ctx: &Context, k: &RobinCoefficient, traj: &Trajectory) -> f64 {
    let mut worst = 0.0f64;
    for n in 1..traj.n_levels() {
        worst = worst.max(step_mass_identity_defect(
            ctx,
            k,
            &traj.densities[n - 1],
            &traj.densities[n],
            &traj.pressures[n],
        ));
    }
    worst
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub lambda: f64,
    pub max_rel_dev: f64,
}

/// Degree-one homogeneity of the discrete flow: running with data
/// (lambda rho_I, lambda p_F) must reproduce lambda times the base run.
pub fn scaling_check(
    ctx: &Context,
    k: &RobinCoefficient,
    rho_init: &TwoScaleField,
    lambda: f64,
) -> Result<ScalingReport> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    let base = run_simulation(ctx, k, rho_init)?;

    let mut scaled_ctx = ctx.clone();
    scaled_ctx.params.p_f *= lambda;
    let scaled = run_simulation(&scaled_ctx, k, &rho_init.scale(lambda))?;

    let mut max_rel_dev = 0.0f64;
    for n in 0..base.n_levels() {
        let pi_ref = base.pressures[n].scale(lambda);
        let dev_pi = field_distance(&scaled.pressures[n], &pi_ref, &ctx.grids.macro_grid);
        let denom_pi = macro_l2(&pi_ref, &ctx.grids.macro_grid)
            .max(macro_l2(&scaled.pressures[n], &ctx.grids.macro_grid))
            .max(f64::MIN_POSITIVE);
        max_rel_dev = max_rel_dev.max(dev_pi / denom_pi);

        let rho_ref = base.densities[n].scale(lambda);
        let diff = TwoScaleField {
            cells: scaled.densities[n]
                .cells
                .iter()
                .zip(&rho_ref.cells)
                .map(|(a, b)| MicroField {
                    values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
                })
                .collect(),
        };
        let dev_rho = two_scale_l2(&diff, &ctx.grids);
        let denom_rho = two_scale_l2(&rho_ref, &ctx.grids)
            .max(two_scale_l2(&scaled.densities[n], &ctx.grids))
            .max(f64::MIN_POSITIVE);
        max_rel_dev = max_rel_dev.max(dev_rho / denom_rho);
    }
    Ok(ScalingReport { lambda, max_rel_dev })
}
