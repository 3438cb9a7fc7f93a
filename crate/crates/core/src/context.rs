//! Shared solver context: grids, physical parameters, nonlinearity mode and
//! iteration controls, bundled so the solver entry points stay small.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::Grids;
use crate::model::{ModelParams, NonlinearityMode};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// CG relative residual for the micro steps.
    pub tol_lin: f64,
    /// CG iteration cap; 0 means "resolve to 10 * n_y^2 at context build".
    pub max_lin: usize,
    /// Relative update threshold of the inner Picard iteration.
    pub tol_picard: f64,
    pub max_picard: usize,
    /// Relative update threshold of the micro/macro coupling loop.
    pub tol_couple: f64,
    pub max_couple: usize,
    /// Under-relaxation factor on the pressure update (<= 1).
    pub omega_relax: f64,
    /// Gradient-norm stop for the identification loop.
    pub tol_g: f64,
    pub max_gauss_newton: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_lin: 1e-12,
            max_lin: 0,
            tol_picard: 1e-10,
            max_picard: 200,
            tol_couple: 1e-9,
            max_couple: 100,
            omega_relax: 1.0,
            tol_g: 1e-9,
            max_gauss_newton: 50,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        for (name, v) in [
            ("tolerances.tol_lin", self.tol_lin),
            ("tolerances.tol_picard", self.tol_picard),
            ("tolerances.tol_couple", self.tol_couple),
            ("tolerances.tol_g", self.tol_g),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.omega_relax > 0.0 && self.omega_relax <= 1.0) {
            return Err(Error::Config(format!(
                "tolerances.omega_relax must lie in (0, 1], got {}",
                self.omega_relax
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Context {
    pub grids: Grids,
    pub params: ModelParams,
    pub mode: NonlinearityMode,
    pub tols: Tolerances,
}

impl Context {
    pub fn new(
        grids: Grids,
        params: ModelParams,
        mode: NonlinearityMode,
        mut tols: Tolerances,
    ) -> Result<Self> {
        params.validate()?;
        tols.validate()?;
        if tols.max_lin == 0 {
            tols.max_lin = 10 * grids.micro_grid.n_nodes();
        }
        Ok(Context { grids, params, mode, tols })
    }

    pub fn n_steps(&self) -> usize {
        self.params.n_steps()
    }
}
