//! One implicit-Euler step of the micro cell problem: heat equation on Y
//! with a Robin exchange condition on Gamma_R and homogeneous Neumann
//! elsewhere.
//!
//! The scheme is kept in mass-weighted symmetric form,
//!     (M + dt D K + dt R B_k) rho_new = M rho_old + dt (pi + p_F) b_k,
//! with M the lumped trapezoid mass, K the stiffness of the Neumann
//! Laplacian and B_k the Robin boundary mass (quadrature weight times k per
//! Gamma_R node). Multiplying the scheme by the all-ones vector gives the
//! discrete mass identity
//!     (int_Y rho_new - int_Y rho_old) / dt = int_{Gamma_R} k (pi + p_F - R rho_new),
//! exactly, because K has zero row sums. Left-multiplying by M^{-1} recovers
//! the familiar step matrix I + dt D L + dt R M^{-1} B_k with L the 5-point
//! Neumann Laplacian.

use crate::error::{Error, Result};
use crate::field::MicroField;
use crate::grid::MicroGrid;
use crate::model::{ModelParams, RobinCoefficient};
use crate::sparse::{cg, Csr};

#[derive(Debug, Clone)]
pub struct MicroOperator {
    /// Symmetric positive definite system matrix M + dt D K + dt R B_k.
    pub system: Csr,
    /// Lumped mass diagonal.
    pub mass: Vec<f64>,
    /// Robin load vector b_k: quadrature weight times k at Gamma_R nodes,
    /// stored as (flat node index, w_j * k_j).
    pub robin_load: Vec<(usize, f64)>,
    pub dt: f64,
    pub tol_lin: f64,
    pub max_lin: usize,
}

/// Assemble the implicit-Euler operator for a given Robin coefficient and
/// time step. The coefficient must be admissible; use
/// [`assemble_micro_operator_unchecked`] for verification overrides.
pub fn assemble_micro_operator(
    grid: &MicroGrid,
    k: &RobinCoefficient,
    params: &ModelParams,
) -> Result<MicroOperator> {
    k.check_shape(grid)?;
    if !k.is_admissible(params) {
        return Err(Error::Admissibility(format!(
            "robin coefficient outside [{}, {}]",
            params.k_min, params.k_max
        )));
    }
    Ok(assemble_micro_operator_unchecked(grid, k, params))
}

/// Assembly without the admissibility gate (k = 0 forcing and similar
/// verification setups).
pub fn assemble_micro_operator_unchecked(
    grid: &MicroGrid,
    k: &RobinCoefficient,
    params: &ModelParams,
) -> MicroOperator {
    assert_eq!(k.len(), grid.n_robin(), "robin coefficient shape");
    let n = grid.n_nodes();
    let dt = params.dt;

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &m) in grid.mass.iter().enumerate() {
        triplets.push((i, i, m));
    }
    let ks = &grid.stiffness;
    for row in 0..n {
        for idx in ks.indptr[row]..ks.indptr[row + 1] {
            triplets.push((row, ks.indices[idx], dt * params.d * ks.values[idx]));
        }
    }
    let mut robin_load = Vec::with_capacity(grid.n_robin());
    for ((node, w), kj) in grid.robin_nodes.iter().zip(&grid.robin_weights).zip(&k.values) {
        let wk = w * kj;
        triplets.push((*node, *node, dt * params.r * wk));
        robin_load.push((*node, wk));
    }

    MicroOperator {
        system: Csr::from_triplets(n, &triplets),
        mass: grid.mass.clone(),
        robin_load,
        dt,
        tol_lin: 1e-12,
        max_lin: 10 * n,
    }
}

impl MicroOperator {
    /// Right-hand side for a step with Robin pressure datum `pressure`
    /// (= pi + p_F in the forward problem).
    pub fn step_rhs(&self, rho_old: &[f64], pressure: f64) -> Vec<f64> {
        let mut rhs: Vec<f64> =
            rho_old.iter().zip(&self.mass).map(|(r, m)| r * m).collect();
        for &(node, wk) in &self.robin_load {
            rhs[node] += self.dt * pressure * wk;
        }
        rhs
    }

    /// Dense M^{-1} (system) matrix, the step matrix of the spec-level
    /// description. Test/diagnostic use only.
    pub fn scaled_step_matrix(&self) -> Vec<Vec<f64>> {
        let mut dense = self.system.to_dense();
        for (row, m) in dense.iter_mut().zip(&self.mass) {
            for v in row.iter_mut() {
                *v /= m;
            }
        }
        dense
    }
}

/// Advance one micro cell by one implicit-Euler step.
pub fn micro_step(
    rho_x: &MicroField,
    pi_x: f64,
    op: &MicroOperator,
    params: &ModelParams,
) -> Result<MicroField> {
    micro_step_with_tol(rho_x, pi_x, op, params, op.tol_lin)
}

/// Same step with an explicit CG tolerance; the linearized solvers run the
/// identical scheme tighter.
pub fn micro_step_with_tol(
    rho_x: &MicroField,
    pi_x: f64,
    op: &MicroOperator,
    params: &ModelParams,
    tol_lin: f64,
) -> Result<MicroField> {
    if rho_x.values.len() != op.system.n {
        return Err(Error::Shape(format!(
            "micro field has {} values, operator expects {}",
            rho_x.values.len(),
            op.system.n
        )));
    }
    let rhs = op.step_rhs(&rho_x.values, pi_x + params.p_f);
    let sol = cg(&op.system, &rhs, &rho_x.values, tol_lin, op.max_lin)?;
    Ok(MicroField { values: sol.x })
}

/// Generic linear micro step used by the sensitivity solvers: solves
/// (M + dt D K + dt R B_k) v_new = M v_old + dt * extra_robin_load,
/// where `extra_robin_load[j]` multiplies the Gamma_R quadrature weight of
/// Robin node j.
pub fn micro_step_linearized(
    v_old: &[f64],
    robin_source: &[f64],
    op: &MicroOperator,
    grid: &MicroGrid,
    tol_lin: f64,
) -> Result<Vec<f64>> {
    assert_eq!(robin_source.len(), grid.n_robin());
    let mut rhs: Vec<f64> = v_old.iter().zip(&op.mass).map(|(r, m)| r * m).collect();
    for ((node, w), s) in grid.robin_nodes.iter().zip(&grid.robin_weights).zip(robin_source) {
        rhs[*node] += op.dt * w * s;
    }
    let sol = cg(&op.system, &rhs, v_old, tol_lin, op.max_lin)?;
    Ok(sol.x)
}

/// Robin flux readout through the boundary condition itself:
/// k_j (pi + p_F - R rho(y_j)) per Gamma_R node. This is the discrete
/// realization of -D grad(rho) . n on Gamma_R; no one-sided differencing.
pub fn micro_boundary_flux(
    rho_x: &MicroField,
    pi_x: f64,
    k: &RobinCoefficient,
    params: &ModelParams,
    grid: &MicroGrid,
) -> Vec<f64> {
    grid.robin_nodes
        .iter()
        .zip(&k.values)
        .map(|(&node, kj)| kj * (pi_x + params.p_f - params.r * rho_x.values[node]))
        .collect()
}

/// Trapezoid cell mass of a micro field (for the mass identities).
pub fn micro_mass(rho_x: &MicroField, grid: &MicroGrid) -> f64 {
    rho_x.values.iter().zip(&grid.mass).map(|(v, m)| v * m).sum()
}

/// Boundary quadrature of the Robin flux for a given state.
pub fn robin_flux_integral(
    rho_x: &MicroField,
    pi_x: f64,
    k: &RobinCoefficient,
    params: &ModelParams,
    grid: &MicroGrid,
) -> f64 {
    let flux = micro_boundary_flux(rho_x, pi_x, k, params, grid);
    flux.iter().zip(&grid.robin_weights).map(|(f, w)| f * w).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Edge;
    use crate::norms::micro_l2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> MicroGrid {
        MicroGrid::new(n, Edge::Left).unwrap()
    }

    fn params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn zero_k_operator_is_a_conservative_heat_step() {
        let g = grid(5);
        let p = params();
        let k = RobinCoefficient::unchecked(vec![0.0; g.n_robin()]);
        let op = assemble_micro_operator_unchecked(&g, &k, &p);
        // Row sums of M^{-1} system - I vanish: constants are preserved.
        let dense = op.scaled_step_matrix();
        for (i, row) in dense.iter().enumerate() {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {i} sums to {s}");
        }
    }

    #[test]
    fn admissibility_is_enforced() {
        let g = grid(5);
        let p = params();
        let k = RobinCoefficient::unchecked(vec![0.0; g.n_robin()]);
        assert!(matches!(
            assemble_micro_operator(&g, &k, &p),
            Err(Error::Admissibility(_))
        ));
        let ok = RobinCoefficient::constant(1.0, g.n_robin(), &p).unwrap();
        assert!(assemble_micro_operator(&g, &ok, &p).is_ok());
    }

    #[test]
    fn smallest_generalized_eigenvalue_at_least_one() {
        // System = M + positive semidefinite terms, so the M-generalized
        // spectrum of the step matrix sits at or above one for any k >= 0.
        let g = grid(4);
        let p = params();
        for kval in [0.0, 0.5, 5.0] {
            let k = RobinCoefficient::unchecked(vec![kval; g.n_robin()]);
            let op = assemble_micro_operator_unchecked(&g, &k, &p);
            let n = g.n_nodes();
            let dense = op.system.to_dense();
            let mut sym = nalgebra::DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    sym[(i, j)] = dense[i][j] / (op.mass[i] * op.mass[j]).sqrt();
                }
            }
            let eig = sym.symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= 1.0 - 1e-12, "k={kval}: min eigenvalue {min}");
        }
    }

    #[test]
    fn operator_matches_hand_assembled_3x3_reference() {
        // n_y = 3, dt = 0.01, D = 1, R = 1, k = 1, robin side = left.
        // Mass, stiffness and Robin boundary mass written out by hand with
        // h = 1/2 trapezoid weights [1/4, 1/2, 1/4]; node order i2*3+i1.
        let g = grid(3);
        let p = ModelParams { dt: 0.01, d: 1.0, r: 1.0, ..params() };
        let k = RobinCoefficient::constant(1.0, 3, &p).unwrap();
        let op = assemble_micro_operator(&g, &k, &p).unwrap();

        let m = [
            0.0625, 0.125, 0.0625, //
            0.125, 0.25, 0.125, //
            0.0625, 0.125, 0.0625,
        ];
        // Stiffness diagonal and links (coefficient w_perp / h per link).
        let mut kref = [[0.0f64; 9]; 9];
        let links = [
            (0, 1, 0.5),
            (1, 2, 0.5),
            (3, 4, 1.0),
            (4, 5, 1.0),
            (6, 7, 0.5),
            (7, 8, 0.5),
            (0, 3, 0.5),
            (3, 6, 0.5),
            (1, 4, 1.0),
            (4, 7, 1.0),
            (2, 5, 0.5),
            (5, 8, 0.5),
        ];
        for (a, b, c) in links {
            kref[a][a] += c;
            kref[b][b] += c;
            kref[a][b] -= c;
            kref[b][a] -= c;
        }
        let b = [0.25, 0.0, 0.0, 0.5, 0.0, 0.0, 0.25, 0.0, 0.0];

        let dense = op.system.to_dense();
        for i in 0..9 {
            for j in 0..9 {
                let mut expected = 0.01 * kref[i][j];
                if i == j {
                    expected += m[i] + 0.01 * b[i];
                }
                assert!(
                    (dense[i][j] - expected).abs() < 1e-15,
                    "entry ({i},{j}): {} vs {}",
                    dense[i][j],
                    expected
                );
            }
        }
    }

    #[test]
    fn equilibrium_state_is_preserved() {
        let g = grid(9);
        let p = params();
        let k = RobinCoefficient::constant(2.0, g.n_robin(), &p).unwrap();
        let op = assemble_micro_operator(&g, &k, &p).unwrap();
        let pi_x = 0.7;
        let rho_eq = MicroField::constant(&g, (pi_x + p.p_f) / p.r);
        let out = micro_step(&rho_eq, pi_x, &op, &p).unwrap();
        for (a, b) in out.values.iter().zip(&rho_eq.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let flux = micro_boundary_flux(&rho_eq, pi_x, &k, &p, &g);
        assert!(flux.iter().all(|f| f.abs() < 1e-12));
    }

    #[test]
    fn mass_decays_without_exterior_pressure() {
        let g = grid(9);
        let p = ModelParams { p_f: 0.0, ..params() };
        let k = RobinCoefficient::constant(1.0, g.n_robin(), &p).unwrap();
        let op = assemble_micro_operator(&g, &k, &p).unwrap();
        let mut rho = MicroField::constant(&g, 1.0);
        let mut mass = micro_mass(&rho, &g);
        for _ in 0..5 {
            rho = micro_step(&rho, 0.0, &op, &p).unwrap();
            let new_mass = micro_mass(&rho, &g);
            assert!(new_mass < mass, "mass must strictly decrease");
            mass = new_mass;
        }
    }

    #[test]
    fn discrete_mass_identity_holds_per_step() {
        let g = grid(9);
        let p = params();
        let k = RobinCoefficient::constant(1.5, g.n_robin(), &p).unwrap();
        let op = assemble_micro_operator(&g, &k, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rho = MicroField::from_fn(&g, |_, _| rng.random_range(0.2..2.0));
        for step in 0..10 {
            let pi_x = 0.3 + 0.1 * step as f64;
            let next = micro_step(&rho, pi_x, &op, &p).unwrap();
            let lhs = (micro_mass(&next, &g) - micro_mass(&rho, &g)) / p.dt;
            let rhs = robin_flux_integral(&next, pi_x, &k, &p, &g);
            let scale = lhs.abs().max(rhs.abs()).max(1e-30);
            assert!((lhs - rhs).abs() / scale < 1e-10, "step {step}: {lhs} vs {rhs}");
            rho = next;
        }
    }

    #[test]
    fn implicit_euler_dissipates_energy_without_source() {
        let g = grid(7);
        let p = ModelParams { p_f: 0.0, dt: 5.0, ..params() };
        let k = RobinCoefficient::constant(3.0, g.n_robin(), &p).unwrap();
        let op = assemble_micro_operator(&g, &k, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let rho = MicroField::from_fn(&g, |_, _| rng.random_range(-1.0..1.0));
            let next = micro_step(&rho, 0.0, &op, &p).unwrap();
            assert!(micro_l2(&next, &g) <= micro_l2(&rho, &g) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn nonnegative_inputs_stay_nonnegative() {
        let g = grid(7);
        let p = params();
        let k = RobinCoefficient::constant(4.0, g.n_robin(), &p).unwrap();
        let op = assemble_micro_operator(&g, &k, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let rho = MicroField::from_fn(&g, |_, _| rng.random_range(0.0..2.0));
            let pi_x = rng.random_range(0.0..2.0);
            let next = micro_step(&rho, pi_x, &op, &p).unwrap();
            let min = next.values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-10, "M-matrix positivity violated: {min}");
        }
    }

    #[test]
    fn flux_is_linear_in_k() {
        let g = grid(5);
        let p = params();
        let k1 = RobinCoefficient::constant(1.0, g.n_robin(), &p).unwrap();
        let k2 = RobinCoefficient::constant(2.0, g.n_robin(), &p).unwrap();
        let rho = MicroField::from_fn(&g, |y1, y2| y1 + y2);
        let f1 = micro_boundary_flux(&rho, 0.4, &k1, &p, &g);
        let f2 = micro_boundary_flux(&rho, 0.4, &k2, &p, &g);
        for (a, b) in f1.iter().zip(&f2) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn flux_matches_direct_formula() {
        // pi = 1, p_F = 0, R = 1, rho = 0 on Gamma_R, k = 2 -> flux = 2.
        let g = grid(5);
        let p = ModelParams { p_f: 0.0, ..params() };
        let k = RobinCoefficient::constant(2.0, g.n_robin(), &p).unwrap();
        let rho = MicroField::from_fn(&g, |y1, _| y1); // zero on the left edge
        let flux = micro_boundary_flux(&rho, 1.0, &k, &p, &g);
        for f in flux {
            assert!((f - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn spatial_convergence_order_on_neumann_heat_equation() {
        // Manufactured solution rho = exp(-2 D pi^2 t) cos(pi y1) cos(pi y2)
        // with the Robin term disabled; dt scaled with h^2 keeps the
        // implicit-Euler error on the same order as the stencil error.
        let t_final = 0.1;
        let mut errors = Vec::new();
        for (n_y, steps) in [(9, 20usize), (17, 80), (33, 320)] {
            let g = grid(n_y);
            let p = ModelParams {
                p_f: 0.0,
                dt: t_final / steps as f64,
                t_end: t_final,
                ..params()
            };
            let k = RobinCoefficient::unchecked(vec![0.0; g.n_robin()]);
            let op = assemble_micro_operator_unchecked(&g, &k, &p);
            let pi = std::f64::consts::PI;
            let mut rho = MicroField::from_fn(&g, |y1, y2| (pi * y1).cos() * (pi * y2).cos());
            for _ in 0..steps {
                rho = micro_step(&rho, 0.0, &op, &p).unwrap();
            }
            let decay = (-2.0 * p.d * pi * pi * t_final).exp();
            let exact = MicroField::from_fn(&g, |y1, y2| {
                decay * (pi * y1).cos() * (pi * y2).cos()
            });
            let diff = MicroField {
                values: rho.values.iter().zip(&exact.values).map(|(a, b)| a - b).collect(),
            };
            errors.push(micro_l2(&diff, &g));
        }
        for pair in errors.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(order >= 1.9, "observed order {order}, errors {errors:?}");
        }
    }
}
