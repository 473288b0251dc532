//! ℓ1-regularized minimization of `αᵀHα + 2cᵀα + λ‖α‖₁`.
//!
//! The main routine is an accelerated proximal gradient method started from
//! zero, with a monotone restart: whenever the accelerated step would
//! increase the objective the momentum is dropped and a plain proximal step
//! is taken from the current iterate instead.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::QuadraticObjective;

const POWER_ITERS: usize = 100;
const STEP_SAFETY: f64 = 0.95;
const KKT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Fixed step `0.95 / (2 λ_max(H))` with λ_max from power iteration.
    #[default]
    LipschitzFromH,
    /// Start from the Lipschitz step and halve until sufficient decrease.
    Backtracking,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub step: StepRule,
    pub acceleration: bool,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self { lambda: 0.0, max_iter: 10_000, tol: 1e-8, step: StepRule::LipschitzFromH, acceleration: true }
    }
}

impl LassoConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be finite and non-negative, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoSolution {
    pub alpha_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// KKT residual at the returned point.
    pub final_subgradient_gap: f64,
    pub support: Vec<usize>,
    /// Penalized objective value at the returned point.
    pub objective: f64,
}

impl LassoSolution {
    pub fn alpha(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.alpha_hat)
    }
}

pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// `max_j` of the distance from `-grad_j` to `λ ∂|α_j|`.
pub fn kkt_residual(grad: &DVector<f64>, alpha: &DVector<f64>, lambda: f64) -> f64 {
    grad.iter()
        .zip(alpha.iter())
        .map(|(&g, &a)| if a != 0.0 { (g + lambda * a.signum()).abs() } else { (g.abs() - lambda).max(0.0) })
        .fold(0.0, f64::max)
}

/// `λ_lasso = √(2 ln k / n)` and `λ_j = √(max(s, 1) ln k / n)`.
pub fn default_lambdas(n: usize, k: usize, s_omega_j: Option<usize>) -> (f64, f64) {
    let n = n.max(1) as f64;
    let lnk = (k.max(1) as f64).ln();
    let s = s_omega_j.unwrap_or(1).max(1) as f64;
    ((2.0 * lnk / n).sqrt(), (s * lnk / n).sqrt())
}

/// Lasso penalty scaled by a noise level: `2σ√(2 ln k / n)`.
pub fn sigma_scaled_lambda(n: usize, k: usize, sigma: f64) -> f64 {
    2.0 * sigma * default_lambdas(n, k, None).0
}

fn penalized(h_alpha: &DVector<f64>, alpha: &DVector<f64>, c: &DVector<f64>, lambda: f64) -> f64 {
    alpha.dot(h_alpha) + 2.0 * c.dot(alpha) + lambda * alpha.lp_norm(1)
}

fn prox_step(from: &DVector<f64>, h_from: &DVector<f64>, c: &DVector<f64>, step: f64, lambda: f64) -> DVector<f64> {
    DVector::from_fn(from.len(), |i, _| {
        let grad = 2.0 * (h_from[i] + c[i]);
        soft_threshold(from[i] - step * grad, step * lambda)
    })
}

fn check_finite(h: &DMatrix<f64>, c: &DVector<f64>) -> Result<()> {
    if h.nrows() != h.ncols() || h.nrows() != c.len() {
        return Err(Error::DimensionMismatch(format!("H is {:?}, c has length {}", h.shape(), c.len())));
    }
    if h.iter().chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("lasso objective contains non-finite values".into()));
    }
    Ok(())
}

fn finish(
    alpha: DVector<f64>,
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    lambda: f64,
    iterations: usize,
    converged: bool,
) -> LassoSolution {
    let h_alpha = h * &alpha;
    let grad = 2.0 * (&h_alpha + c);
    let gap = kkt_residual(&grad, &alpha, lambda);
    LassoSolution {
        support: alpha.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(i, _)| i).collect(),
        objective: penalized(&h_alpha, &alpha, c, lambda),
        alpha_hat: alpha.iter().copied().collect(),
        final_subgradient_gap: gap,
        iterations,
        converged,
    }
}

/// Solve the lasso for explicit `H`, `c`. `lambda_max` is the largest
/// eigenvalue of `H` when already known (it is shared across the
/// inverse-Hessian columns).
pub fn lasso_quadratic(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    cfg: &LassoConfig,
    lambda_max: Option<f64>,
) -> Result<LassoSolution> {
    cfg.validate()?;
    check_finite(h, c)?;
    let p = c.len();
    let lambda = cfg.lambda;
    let kkt_tol = KKT_TOL * (1.0 + lambda);
    let zero = DVector::zeros(p);
    let eig = lambda_max.unwrap_or_else(|| linalg::power_iteration_max_eig(h, POWER_ITERS));

    if !(eig > 1e-300) {
        // Flat quadratic: the objective is linear plus penalty, bounded only
        // when zero is optimal.
        let grad = 2.0 * c;
        let ok = kkt_residual(&grad, &zero, lambda) <= kkt_tol;
        return Ok(finish(zero, h, c, lambda, 0, ok));
    }

    let mut step = match cfg.step {
        StepRule::LipschitzFromH => STEP_SAFETY / (2.0 * eig),
        StepRule::Backtracking => {
            let max_diag = (0..p).map(|i| h[(i, i)]).fold(0.0, f64::max);
            1.0 / (2.0 * max_diag.max(eig / p as f64))
        }
    };
    let mut x = zero.clone();
    let mut hx = DVector::zeros(p);
    let mut fx = 0.0_f64;
    let mut y = x.clone();
    let mut hy = hx.clone();
    let mut t = 1.0_f64;

    for iter in 1..=cfg.max_iter {
        let mut z = prox_step(&y, &hy, c, step, lambda);
        let mut hz = h * &z;
        if cfg.step == StepRule::Backtracking {
            // Sufficient decrease of the smooth part against its quadratic
            // model at y.
            loop {
                let d = &z - &y;
                let smooth_z = z.dot(&hz) + 2.0 * c.dot(&z);
                let smooth_y = y.dot(&hy) + 2.0 * c.dot(&y);
                let model = smooth_y + 2.0 * (&hy + c).dot(&d) + d.norm_squared() / (2.0 * step);
                if smooth_z <= model + 1e-12 * (1.0 + smooth_y.abs()) || step < 1e-300 {
                    break;
                }
                step *= 0.5;
                z = prox_step(&y, &hy, c, step, lambda);
                hz = h * &z;
            }
        }
        let mut fz = penalized(&hz, &z, c, lambda);
        let slack = 1e-12 * (1.0 + fx.abs());
        let restarted = fz > fx + slack;
        if restarted {
            // Drop momentum and take a plain step from x, shrinking the step
            // if even that fails to descend.
            t = 1.0;
            loop {
                z = prox_step(&x, &hx, c, step, lambda);
                hz = h * &z;
                fz = penalized(&hz, &z, c, lambda);
                if fz <= fx + slack || step < 1e-300 {
                    break;
                }
                step *= 0.5;
            }
        }

        let diff = (&z - &x).norm();
        let scale = z.norm().max(1.0);
        let (t_next, beta) = if cfg.acceleration && !restarted {
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            (tn, (t - 1.0) / tn)
        } else {
            (1.0, 0.0)
        };
        let small_change = diff <= cfg.tol * scale;
        let hx_prev = std::mem::replace(&mut hx, hz);
        let x_prev = std::mem::replace(&mut x, z);
        fx = fz;
        if small_change {
            let grad = 2.0 * (&hx + c);
            if kkt_residual(&grad, &x, lambda) <= kkt_tol {
                return Ok(finish(x, h, c, lambda, iter, true));
            }
        }
        if beta != 0.0 {
            y = &x + beta * (&x - &x_prev);
            hy = &hx + beta * (&hx - &hx_prev);
        } else {
            y.copy_from(&x);
            hy.copy_from(&hx);
        }
        t = t_next;
    }
    log::debug!("lasso did not converge in {} iterations", cfg.max_iter);
    Ok(finish(x, h, c, lambda, cfg.max_iter, false))
}

pub fn lasso_minimize(obj: &QuadraticObjective, cfg: &LassoConfig) -> Result<LassoSolution> {
    lasso_quadratic(&obj.h, &obj.c, cfg, None)
}

/// Column `j` of a sparse inverse Hessian: minimizes
/// `½ωᵀ(2H)ω − ω_j + λ_j‖ω‖₁`, which is the lasso with `c = −e_j / 2`.
pub fn solve_inverse_hessian_column(
    obj: &QuadraticObjective,
    j: usize,
    lambda_j: f64,
    cfg: &LassoConfig,
) -> Result<LassoSolution> {
    inverse_hessian_column_with(&obj.h, j, lambda_j, cfg, None)
}

fn inverse_hessian_column_with(
    h: &DMatrix<f64>,
    j: usize,
    lambda_j: f64,
    cfg: &LassoConfig,
    lambda_max: Option<f64>,
) -> Result<LassoSolution> {
    let p = h.nrows();
    if j >= p {
        return Err(Error::InvalidInput(format!("column {j} out of range for dimension {p}")));
    }
    let mut c = DVector::zeros(p);
    c[j] = -0.5;
    let cfg = LassoConfig { lambda: lambda_j, ..*cfg };
    lasso_quadratic(h, &c, &cfg, lambda_max)
}

/// Inverse-Hessian columns for several targets, solved in parallel with a
/// shared spectral estimate. Output order follows `targets`.
pub fn solve_inverse_hessian_columns(
    obj: &QuadraticObjective,
    targets: &[usize],
    lambda_j: f64,
    cfg: &LassoConfig,
) -> Result<Vec<LassoSolution>> {
    let eig = linalg::power_iteration_max_eig(&obj.h, POWER_ITERS);
    targets
        .par_iter()
        .map(|&j| inverse_hessian_column_with(&obj.h, j, lambda_j, cfg, Some(eig)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::closed_form_minimizer;
    use proptest::prelude::*;

    fn quad(h: DMatrix<f64>, c: Vec<f64>) -> QuadraticObjective {
        QuadraticObjective::from_parts(h, DVector::from_vec(c)).unwrap()
    }

    fn random_spd(p: usize, seed: u64) -> DMatrix<f64> {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(seed);
        let a = DMatrix::from_fn(p + 3, p, |_, _| rng.random_range(-1.0..1.0));
        a.transpose() * a / (p as f64) + DMatrix::identity(p, p) * 0.2
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-0.5, 0.0), -0.5);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn lambda_above_threshold_gives_zero() {
        let obj = quad(random_spd(4, 1), vec![0.3, -0.2, 0.1, 0.05]);
        let sol = lasso_minimize(&obj, &LassoConfig::with_lambda(0.6)).unwrap();
        assert!(sol.alpha_hat.iter().all(|a| *a == 0.0));
        assert!(sol.converged);
    }

    #[test]
    fn hand_instance() {
        let obj = quad(DMatrix::identity(2, 2), vec![-1.0, 0.0]);
        let sol = lasso_minimize(&obj, &LassoConfig::with_lambda(1.0)).unwrap();
        assert!((sol.alpha_hat[0] - 0.5).abs() < 1e-7, "{sol:?}");
        assert_eq!(sol.alpha_hat[1], 0.0);
        assert!(sol.converged);
    }

    #[test]
    fn matches_closed_form_without_penalty() {
        let obj = quad(random_spd(8, 2), (0..8).map(|i| (i as f64 * 0.7).sin()).collect());
        let exact = closed_form_minimizer(&obj, 0.0).unwrap();
        for step in [StepRule::LipschitzFromH, StepRule::Backtracking] {
            let sol = lasso_minimize(&obj, &LassoConfig { step, ..LassoConfig::default() }).unwrap();
            assert!(sol.converged);
            assert!((sol.alpha() - &exact).amax() < 1e-6);
        }
    }

    #[test]
    fn inverse_hessian_identity_and_dense() {
        let obj = quad(DMatrix::identity(3, 3) * 0.5, vec![0.0; 3]);
        let w = solve_inverse_hessian_column(&obj, 1, 0.0, &LassoConfig::default()).unwrap();
        assert!((w.alpha() - DVector::from_vec(vec![0.0, 1.0, 0.0])).amax() < 1e-9);

        let h = random_spd(5, 3);
        let inv = (2.0 * &h).try_inverse().unwrap();
        let obj = quad(h, vec![0.0; 5]);
        let cols = solve_inverse_hessian_columns(&obj, &[0, 2, 4], 0.0, &LassoConfig::default()).unwrap();
        for (col, j) in cols.iter().zip([0, 2, 4]) {
            assert!((col.alpha() - inv.column(j)).amax() < 1e-6);
        }
        let big = solve_inverse_hessian_column(&obj, 2, 5.0, &LassoConfig::default()).unwrap();
        assert!(big.converged && big.final_subgradient_gap <= KKT_TOL * 6.0);
    }

    #[test]
    fn flat_quadratic() {
        let obj = quad(DMatrix::zeros(2, 2), vec![0.1, -0.1]);
        assert!(lasso_minimize(&obj, &LassoConfig::with_lambda(1.0)).unwrap().converged);
        assert!(!lasso_minimize(&obj, &LassoConfig::with_lambda(0.0)).unwrap().converged);
    }

    #[test]
    fn rejects_non_finite() {
        let obj = quad(DMatrix::from_element(1, 1, f64::NAN), vec![0.0]);
        assert!(lasso_minimize(&obj, &LassoConfig::default()).is_err());
    }

    #[test]
    fn default_lambda_values() {
        let (l, _) = default_lambdas(400, 210, None);
        assert!((l - (2.0 * 210f64.ln() / 400.0).sqrt()).abs() < 1e-15);
        assert!((l - 0.1635).abs() < 1e-3);
        assert_eq!(default_lambdas(10, 1, None).0, 0.0);
        assert!(default_lambdas(1000, 50, None).0 < default_lambdas(100, 50, None).0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn l1_norm_non_increasing_in_lambda(seed in 0u64..10_000, p in 2usize..8) {
            let h = random_spd(p, seed);
            let c: Vec<f64> = (0..p).map(|i| ((seed as f64) * 0.37 + i as f64).sin()).collect();
            let obj = quad(h, c);
            let mut prev = f64::INFINITY;
            for i in 0..10 {
                let lambda = 0.05 * i as f64;
                let sol = lasso_minimize(&obj, &LassoConfig::with_lambda(lambda)).unwrap();
                let norm: f64 = sol.alpha_hat.iter().map(|a| a.abs()).sum();
                prop_assert!(norm <= prev + 1e-8);
                prev = norm;
            }
        }

        #[test]
        fn screened_coordinates_are_zero(seed in 0u64..10_000, p in 3usize..7) {
            let mut h = random_spd(p, seed);
            for k in 0..p {
                h[(0, k)] = 0.0;
                h[(k, 0)] = 0.0;
            }
            let mut c: Vec<f64> = (0..p).map(|i| ((seed as f64) + i as f64).cos()).collect();
            c[0] = 0.2;
            let sol = lasso_minimize(&quad(h, c), &LassoConfig::with_lambda(0.5)).unwrap();
            prop_assert_eq!(sol.alpha_hat[0], 0.0);
        }

        #[test]
        fn converged_implies_kkt(seed in 0u64..10_000, p in 2usize..10, lambda in 0.0f64..2.0) {
            let obj = quad(random_spd(p, seed), (0..p).map(|i| ((seed + i as u64) as f64).sin()).collect());
            let sol = lasso_minimize(&obj, &LassoConfig::with_lambda(lambda)).unwrap();
            if sol.converged {
                prop_assert!(sol.final_subgradient_gap <= KKT_TOL * (1.0 + lambda));
            }
        }
    }
}
