//! Physical parameters, the micro/macro coupling nonlinearity and the
//! startup validation of its structural constants.
//!
//! The production nonlinearity is
//!     f(pi, rho)(x) = c_f * P(pi(x))^alpha * P(<rho(x,.)>_Y)^beta,
//! where P(s) = max(s, eps_reg) and <.>_Y is the trapezoid cell average.
//! On positive data it is exactly homogeneous of degree (alpha, beta), and
//! with alpha + beta = 1 jointly homogeneous of degree one. The clamp keeps
//! the power Lipschitz near zero so the structural constant stays finite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{MacroField, MicroField, TwoScaleField};
use crate::grid::{Grids, MacroGrid, MicroGrid};
use crate::norms::poincare_constant;

pub const EXPONENT_SUM_TOL: f64 = 1e-12;

/// Sampling window used when estimating the structural Lipschitz constant;
/// chosen to bracket the O(1) operating range of the default presets while
/// staying well away from the clamp.
pub const DEFAULT_SAMPLE_BOX: SampleBox =
    SampleBox { u_min: 0.25, u_max: 4.0, v_min: 0.25, v_max: 4.0 };

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Gas permeability.
    pub a: f64,
    /// Micro diffusion coefficient.
    pub d: f64,
    /// Gas density.
    pub rho_f: f64,
    /// Atmospheric pressure.
    pub p_f: f64,
    /// Universal gas constant (scaled).
    pub r: f64,
    /// Time horizon.
    pub t_end: f64,
    /// Time step.
    pub dt: f64,
    /// Nonlinearity exponents.
    pub alpha: f64,
    pub beta: f64,
    /// Nonlinearity amplitude.
    pub c_f: f64,
    /// Positive-part clamp for the powers.
    pub eps_reg: f64,
    /// Admissible Robin band.
    pub k_min: f64,
    pub k_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            a: 1.0,
            d: 1.0,
            rho_f: 1.0,
            p_f: 1.0,
            r: 1.0,
            t_end: 0.2,
            dt: 0.01,
            alpha: 0.5,
            beta: 0.5,
            c_f: 1.0,
            eps_reg: 1e-8,
            k_min: 0.1,
            k_max: 10.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("params.a", self.a),
            ("params.d", self.d),
            ("params.rho_f", self.rho_f),
            ("params.r", self.r),
            ("params.t_end", self.t_end),
            ("params.dt", self.dt),
            ("params.alpha", self.alpha),
            ("params.beta", self.beta),
            ("params.k_min", self.k_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.p_f >= 0.0) {
            return Err(Error::Config(format!("params.p_f must be >= 0, got {}", self.p_f)));
        }
        if !(self.c_f >= 0.0) {
            return Err(Error::Config(format!("params.c_f must be >= 0, got {}", self.c_f)));
        }
        if !(self.eps_reg >= 0.0) {
            return Err(Error::Config(format!(
                "params.eps_reg must be >= 0, got {}",
                self.eps_reg
            )));
        }
        if self.dt > self.t_end * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "params.dt = {} exceeds params.t_end = {}",
                self.dt, self.t_end
            )));
        }
        if (self.alpha + self.beta - 1.0).abs() > EXPONENT_SUM_TOL {
            return Err(Error::Config(format!(
                "params.alpha+beta must equal 1, got {} + {} = {}",
                self.alpha,
                self.beta,
                self.alpha + self.beta
            )));
        }
        if self.k_max < self.k_min {
            return Err(Error::Config(format!(
                "params.k_max = {} below params.k_min = {}",
                self.k_max, self.k_min
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn diffusivity(&self) -> f64 {
        self.a * self.rho_f
    }
}

/// Robin transfer coefficient sampled at the Gamma_R nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobinCoefficient {
    pub values: Vec<f64>,
}

impl RobinCoefficient {
    /// Admissible coefficient: every nodal value inside [k_min, k_max].
    pub fn new(values: Vec<f64>, params: &ModelParams) -> Result<Self> {
        for (j, v) in values.iter().enumerate() {
            if !(*v >= params.k_min && *v <= params.k_max) {
                return Err(Error::Admissibility(format!(
                    "k[{j}] = {v} outside [{}, {}]",
                    params.k_min, params.k_max
                )));
            }
        }
        Ok(RobinCoefficient { values })
    }

    pub fn constant(c: f64, n: usize, params: &ModelParams) -> Result<Self> {
        Self::new(vec![c; n], params)
    }

    /// Escape hatch for verification runs that need coefficients outside the
    /// admissible band (e.g. a forced k = 0 pure-Neumann step).
    pub fn unchecked(values: Vec<f64>) -> Self {
        RobinCoefficient { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_shape(&self, grid: &MicroGrid) -> Result<()> {
        if self.values.len() != grid.n_robin() {
            return Err(Error::Shape(format!(
                "robin coefficient has {} values, Gamma_R has {} nodes",
                self.values.len(),
                grid.n_robin()
            )));
        }
        Ok(())
    }

    pub fn is_admissible(&self, params: &ModelParams) -> bool {
        self.values.iter().all(|v| *v >= params.k_min && *v <= params.k_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityMode {
    /// Production family: clamped power of the pressure times clamped power
    /// of the micro cell average.
    PowerMean,
    /// f = c_f * <rho>_Y, independent of pi. Verification only: it is not
    /// (alpha, beta)-homogeneous and is excluded from the homogeneity tests.
    LinearTest,
}

fn clamp(s: f64, eps: f64) -> f64 {
    s.max(eps)
}

/// Trapezoid average of a micro field over the unit cell.
pub fn micro_average(rho_x: &MicroField, grid: &MicroGrid) -> f64 {
    rho_x.values.iter().zip(&grid.mass).map(|(v, w)| v * w).sum()
}

pub fn micro_averages(rho: &TwoScaleField, grid: &MicroGrid) -> Vec<f64> {
    rho.cells.iter().map(|c| micro_average(c, grid)).collect()
}

/// Evaluate the coupling nonlinearity at every macro node.
pub fn eval_f(
    pi: &MacroField,
    rho: &TwoScaleField,
    params: &ModelParams,
    mode: NonlinearityMode,
    grids: &Grids,
) -> Result<MacroField> {
    pi.check_shape(&grids.macro_grid)?;
    rho.check_shape(grids)?;
    let means = micro_averages(rho, &grids.micro_grid);
    Ok(eval_f_from_means(pi, &means, params, mode))
}

pub fn eval_f_from_means(
    pi: &MacroField,
    means: &[f64],
    params: &ModelParams,
    mode: NonlinearityMode,
) -> MacroField {
    let values = pi
        .values
        .iter()
        .zip(means)
        .map(|(&p, &m)| point_f(p, m, params, mode))
        .collect();
    MacroField { values }
}

pub fn point_f(pi: f64, mean: f64, params: &ModelParams, mode: NonlinearityMode) -> f64 {
    match mode {
        NonlinearityMode::PowerMean => {
            params.c_f
                * clamp(pi, params.eps_reg).powf(params.alpha)
                * clamp(mean, params.eps_reg).powf(params.beta)
        }
        NonlinearityMode::LinearTest => params.c_f * mean,
    }
}

/// Partial derivatives of the nonlinearity at a base point, used by the
/// linearized solvers. Inside the clamp the derivative is zero.
pub fn point_f_partials(
    pi: f64,
    mean: f64,
    params: &ModelParams,
    mode: NonlinearityMode,
) -> (f64, f64) {
    match mode {
        NonlinearityMode::PowerMean => {
            let pc = clamp(pi, params.eps_reg);
            let mc = clamp(mean, params.eps_reg);
            let df_dpi = if pi > params.eps_reg {
                params.c_f * params.alpha * pc.powf(params.alpha - 1.0) * mc.powf(params.beta)
            } else {
                0.0
            };
            let df_dmean = if mean > params.eps_reg {
                params.c_f * params.beta * pc.powf(params.alpha) * mc.powf(params.beta - 1.0)
            } else {
                0.0
            };
            (df_dpi, df_dmean)
        }
        NonlinearityMode::LinearTest => (0.0, params.c_f),
    }
}

/// Operating window for the Lipschitz estimate: pressures in
/// [u_min, u_max], micro averages in [v_min, v_max].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SampleBox {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl SampleBox {
    fn validate(&self) -> Result<()> {
        if !(self.u_min <= self.u_max && self.v_min <= self.v_max)
            || !self.u_min.is_finite()
            || !self.u_max.is_finite()
            || !self.v_min.is_finite()
            || !self.v_max.is_finite()
        {
            return Err(Error::Config(format!("empty or invalid sample box: {self:?}")));
        }
        Ok(())
    }
}

/// Sampled estimate of the structural constant: the largest difference
/// quotient |f(u1,v) - f(u2,v)| / |u1 - u2| over a grid of pairs in the box.
pub fn estimate_lipschitz_constant(
    params: &ModelParams,
    mode: NonlinearityMode,
    sample_box: &SampleBox,
) -> Result<f64> {
    sample_box.validate()?;
    if mode == NonlinearityMode::LinearTest {
        return Ok(0.0);
    }
    const N_U: usize = 64;
    const N_V: usize = 16;
    let us: Vec<f64> = (0..N_U)
        .map(|i| {
            sample_box.u_min
                + (sample_box.u_max - sample_box.u_min) * i as f64 / (N_U - 1) as f64
        })
        .collect();
    let vs: Vec<f64> = (0..N_V)
        .map(|i| {
            sample_box.v_min
                + (sample_box.v_max - sample_box.v_min) * i as f64 / (N_V - 1) as f64
        })
        .collect();
    let mut best = 0.0f64;
    for &v in &vs {
        for i in 0..N_U {
            for j in i + 1..N_U {
                let du = us[j] - us[i];
                if du == 0.0 {
                    continue;
                }
                let q = (point_f(us[j], v, params, mode) - point_f(us[i], v, params, mode)).abs()
                    / du;
                best = best.max(q);
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    /// Positive margin means the check passed with that much room.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub ok: bool,
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn summary(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                format!("{} {}: {}", if c.passed { "ok " } else { "FAIL" }, c.name, c.detail)
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Startup validation: parameter positivity, exponent budget, and the
/// contraction condition (estimated Lipschitz constant times the Poincare
/// constant below one).
pub fn validate_assumptions(
    params: &ModelParams,
    macro_grid: &MacroGrid,
    mode: NonlinearityMode,
) -> AssumptionReport {
    let mut checks = Vec::new();

    let min_param = params.a.min(params.d).min(params.rho_f).min(params.r);
    checks.push(AssumptionCheck {
        name: "positivity".into(),
        passed: min_param > 0.0 && params.p_f >= 0.0,
        margin: min_param,
        detail: format!(
            "A={}, D={}, rho_F={}, R={}, p_F={}",
            params.a, params.d, params.rho_f, params.r, params.p_f
        ),
    });

    let sum_defect = (params.alpha + params.beta - 1.0).abs();
    let exponents_ok =
        sum_defect <= EXPONENT_SUM_TOL && params.alpha > 0.0 && params.beta > 0.0;
    checks.push(AssumptionCheck {
        name: "exponents".into(),
        passed: exponents_ok,
        margin: EXPONENT_SUM_TOL - sum_defect,
        detail: if exponents_ok {
            format!("alpha+beta = {} within {EXPONENT_SUM_TOL}", params.alpha + params.beta)
        } else {
            format!("alpha+beta != 1 (alpha={}, beta={})", params.alpha, params.beta)
        },
    });

    match estimate_lipschitz_constant(params, mode, &DEFAULT_SAMPLE_BOX) {
        Ok(c_star) => {
            let c_p = poincare_constant(macro_grid);
            let product = c_star * c_p;
            checks.push(AssumptionCheck {
                name: "contraction".into(),
                passed: product < 1.0,
                margin: 1.0 - product,
                detail: format!("C*={c_star:.4} times c_P={c_p:.6} = {product:.4}"),
            });
        }
        Err(e) => checks.push(AssumptionCheck {
            name: "contraction".into(),
            passed: false,
            margin: f64::NEG_INFINITY,
            detail: format!("lipschitz estimate failed: {e}"),
        }),
    }

    if mode == NonlinearityMode::LinearTest {
        checks.push(AssumptionCheck {
            name: "mode".into(),
            passed: true,
            margin: 0.0,
            detail: "linear_test nonlinearity is non-conforming (verification only)".into(),
        });
    }

    let ok = checks.iter().all(|c| c.passed);
    AssumptionReport { ok, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Edge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grids() -> Grids {
        Grids::new(8, 1.0, 9, Edge::Left).unwrap()
    }

    #[test]
    fn power_mean_on_constants() {
        // alpha = beta = 1/2, pi = 4, rho = 9: f = sqrt(4) * sqrt(9) = 6.
        let gs = grids();
        let params = ModelParams::default();
        let pi = MacroField::constant(8, 4.0);
        let rho = TwoScaleField::constant(&gs, 9.0);
        let f = eval_f(&pi, &rho, &params, NonlinearityMode::PowerMean, &gs).unwrap();
        for v in f.values {
            assert!((v - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn power_mean_scaling_matches_exponents() {
        // (A4): f(lambda u, mu v) = lambda^a mu^b f(u, v).
        let gs = grids();
        let params = ModelParams::default();
        let pi = MacroField::constant(8, 2.0 * 4.0);
        let rho = TwoScaleField::constant(&gs, 3.0 * 9.0);
        let f = eval_f(&pi, &rho, &params, NonlinearityMode::PowerMean, &gs).unwrap();
        let expected = 6.0 * 2.0f64.powf(0.5) * 3.0f64.powf(0.5);
        for v in f.values {
            assert!((v - expected).abs() < 1e-12, "expected {expected}, got {v}");
        }
        assert!((expected - 14.6969).abs() < 1e-3);
    }

    #[test]
    fn zero_pressure_with_zero_clamp_gives_zero() {
        let gs = grids();
        let params = ModelParams { eps_reg: 0.0, ..ModelParams::default() };
        let pi = MacroField::zeros(8);
        let rho = TwoScaleField::constant(&gs, 5.0);
        let f = eval_f(&pi, &rho, &params, NonlinearityMode::PowerMean, &gs).unwrap();
        assert!(f.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn micro_average_values() {
        let g = MicroGrid::new(65, Edge::Left).unwrap();
        let c = MicroField::constant(&g, 7.0);
        assert!((micro_average(&c, &g) - 7.0).abs() < 1e-12);

        let lin = MicroField::from_fn(&g, |y1, _| y1);
        assert!((micro_average(&lin, &g) - 0.5).abs() < 1e-12);

        let quad = MicroField::from_fn(&g, |y1, _| y1 * y1);
        assert!((micro_average(&quad, &g) - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn lipschitz_estimate_matches_derivative_supremum() {
        // d/du sqrt(u) * sqrt(1) on [1,4] peaks at 1/(2 sqrt(1)) = 0.5.
        let params = ModelParams::default();
        let sample_box = SampleBox { u_min: 1.0, u_max: 4.0, v_min: 1.0, v_max: 1.0 };
        let c = estimate_lipschitz_constant(&params, NonlinearityMode::PowerMean, &sample_box)
            .unwrap();
        assert!((c - 0.5).abs() <= 0.05 * 0.5, "got {c}");
    }

    #[test]
    fn lipschitz_estimate_is_linear_in_amplitude() {
        let params = ModelParams::default();
        let doubled = ModelParams { c_f: 2.0, ..params.clone() };
        let c1 = estimate_lipschitz_constant(
            &params,
            NonlinearityMode::PowerMean,
            &DEFAULT_SAMPLE_BOX,
        )
        .unwrap();
        let c2 = estimate_lipschitz_constant(
            &doubled,
            NonlinearityMode::PowerMean,
            &DEFAULT_SAMPLE_BOX,
        )
        .unwrap();
        assert!((c2 - 2.0 * c1).abs() < 1e-12 * c1.max(1.0));
    }

    #[test]
    fn linear_test_has_zero_lipschitz_constant() {
        let params = ModelParams::default();
        let c = estimate_lipschitz_constant(
            &params,
            NonlinearityMode::LinearTest,
            &DEFAULT_SAMPLE_BOX,
        )
        .unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn empty_sample_box_is_a_configuration_error() {
        let params = ModelParams::default();
        let sample_box = SampleBox { u_min: 2.0, u_max: 1.0, v_min: 0.0, v_max: 1.0 };
        assert!(matches!(
            estimate_lipschitz_constant(&params, NonlinearityMode::PowerMean, &sample_box),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn default_configuration_validates() {
        let gs = grids();
        let report = validate_assumptions(
            &ModelParams::default(),
            &gs.macro_grid,
            NonlinearityMode::PowerMean,
        );
        assert!(report.ok, "{}", report.summary());
        let contraction = report.checks.iter().find(|c| c.name == "contraction").unwrap();
        assert!(contraction.margin >= 0.5, "margin {}", contraction.margin);
    }

    #[test]
    fn bad_exponents_are_reported() {
        let gs = grids();
        let params = ModelParams { alpha: 0.7, beta: 0.2, ..ModelParams::default() };
        let report = validate_assumptions(&params, &gs.macro_grid, NonlinearityMode::PowerMean);
        assert!(!report.ok);
        let exp = report.checks.iter().find(|c| c.name == "exponents").unwrap();
        assert!(!exp.passed);
        assert!(exp.detail.contains("alpha+beta != 1"));

        assert!(params.validate().is_err());
    }

    #[test]
    fn contraction_margin_matches_oracle() {
        // Pick c_f so that C* c_P = 2; the report margin must be -1.
        let gs = grids();
        let params = ModelParams::default();
        let c1 = estimate_lipschitz_constant(
            &params,
            NonlinearityMode::PowerMean,
            &DEFAULT_SAMPLE_BOX,
        )
        .unwrap();
        let c_p = poincare_constant(&gs.macro_grid);
        let bad = ModelParams { c_f: 2.0 / (c1 * c_p), ..params };
        let report = validate_assumptions(&bad, &gs.macro_grid, NonlinearityMode::PowerMean);
        assert!(!report.ok);
        let contraction = report.checks.iter().find(|c| c.name == "contraction").unwrap();
        assert!((contraction.margin + 1.0).abs() < 1e-9, "margin {}", contraction.margin);
    }

    #[test]
    fn positive_homogeneity_of_degree_alpha_beta() {
        let gs = grids();
        let params = ModelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let p0: f64 = rng.random_range(0.1..5.0);
            let r0: f64 = rng.random_range(0.1..5.0);
            let lambda: f64 = rng.random_range(0.1..4.0);
            let mu: f64 = rng.random_range(0.1..4.0);
            let pi = MacroField::constant(8, p0);
            let rho = TwoScaleField::constant(&gs, r0);
            let base = eval_f(&pi, &rho, &params, NonlinearityMode::PowerMean, &gs).unwrap();
            let scaled = eval_f(
                &pi.scale(lambda),
                &rho.scale(mu),
                &params,
                NonlinearityMode::PowerMean,
                &gs,
            )
            .unwrap();
            let factor = lambda.powf(params.alpha) * mu.powf(params.beta);
            for (s, b) in scaled.values.iter().zip(&base.values) {
                assert!((s - factor * b).abs() <= 1e-12 * factor * b.abs().max(1.0));
            }

            // Degree-one joint homogeneity is the mu = lambda special case.
            let joint = eval_f(
                &pi.scale(lambda),
                &rho.scale(lambda),
                &params,
                NonlinearityMode::PowerMean,
                &gs,
            )
            .unwrap();
            for (s, b) in joint.values.iter().zip(&base.values) {
                assert!((s - lambda * b).abs() <= 1e-12 * lambda * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn l2_bound_through_the_cell_average() {
        // Discrete analog of the second-argument bound: ||f|| stays below
        // c_f * max(pi)^alpha * (||means|| + eps * sqrt(L_x))^beta.
        let gs = grids();
        let params = ModelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let pi = MacroField {
                values: (0..8).map(|_| rng.random_range(0.01..3.0)).collect(),
            };
            let rho = TwoScaleField::from_fn(&gs, |_, _, _| rng.random_range(0.01..3.0));
            let f = eval_f(&pi, &rho, &params, NonlinearityMode::PowerMean, &gs).unwrap();
            let f_norm = crate::norms::macro_l2(&f, &gs.macro_grid);
            let means = MacroField { values: micro_averages(&rho, &gs.micro_grid) };
            let means_norm = crate::norms::macro_l2(&means, &gs.macro_grid);
            let max_pi = pi.values.iter().cloned().fold(0.0f64, f64::max);
            let bound = params.c_f
                * max_pi.powf(params.alpha)
                * (means_norm + params.eps_reg * gs.macro_grid.l_x.sqrt()).powf(params.beta);
            assert!(f_norm <= bound * (1.0 + 1e-12), "{f_norm} > {bound}");
        }
    }

    #[test]
    fn robin_coefficient_admissibility() {
        let params = ModelParams::default();
        assert!(RobinCoefficient::constant(1.0, 9, &params).is_ok());
        let err = RobinCoefficient::constant(0.05, 9, &params).unwrap_err();
        assert!(matches!(err, Error::Admissibility(_)));
        assert!(RobinCoefficient::constant(11.0, 9, &params).is_err());
    }
}
