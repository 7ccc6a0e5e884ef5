//! Exhaustive enumeration of the unnormalized generative model.
//!
//! Everything here is written with plain nested loops over raw indices so
//! that it shares no tensor helpers with the coordinate and objective code.

use ndarray::{Array1, Array2, Array3, Array4};

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::model::DiscreteModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_joint_size: u128,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget { max_joint_size: 10_000_000 }
    }
}

fn check(model: &DiscreteModel, budget: EnumerationBudget) -> Result<()> {
    let size = model.cards.joint_size();
    if size > budget.max_joint_size {
        return Err(Error::BudgetExceeded { size, budget: budget.max_joint_size });
    }
    Ok(())
}

/// Visits every `(u_t, x_t, y_t)_{t=1..T}` continuation of a fixed
/// `(θ, x₀)` with the product weight of the remaining factors.
fn odometer<F: FnMut(&[usize], f64)>(model: &DiscreteModel, theta: usize, x0: usize, mut visit: F) {
    let c = model.cards;
    let horizon = c.horizon;
    // digits: [u1, x1, y1, u2, x2, y2, ...]
    let radix: Vec<usize> = (0..horizon).flat_map(|_| [c.n_u, c.n_x, c.n_y]).collect();
    let mut digits = vec![0usize; radix.len()];
    loop {
        let mut w = 1.0;
        let mut prev = x0;
        for t in 0..horizon {
            let (u, x, y) = (digits[3 * t], digits[3 * t + 1], digits[3 * t + 2]);
            w *= model.action_prior[[t, u]]
                * model.dynamics[[x, prev, theta, u]]
                * model.likelihood[[y, x, theta]]
                * model.goal_x[[t, x]]
                * model.goal_y[[t, y]];
            prev = x;
        }
        visit(&digits, w);
        let mut k = 0;
        loop {
            if k == digits.len() {
                return;
            }
            digits[k] += 1;
            if digits[k] < radix[k] {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// `log Z` of the unnormalized model by summing every configuration, with
/// `θ` and `x₀` outermost.
pub fn enumerate_log_z(model: &DiscreteModel, budget: EnumerationBudget) -> Result<f64> {
    check(model, budget)?;
    let c = model.cards;
    let parts = ExecPolicy::default().map_range(c.n_theta * c.n_x, |i| {
        let (th, x0) = (i / c.n_x, i % c.n_x);
        let root = model.prior_theta[th] * model.prior_x0[x0];
        let mut acc = 0.0;
        odometer(model, th, x0, |_, w| acc += w);
        root * acc
    });
    Ok(parts.iter().sum::<f64>().ln())
}

/// `log Z` by a second, independently coded order: per `θ`, eliminate the
/// slices from the last one backwards.
pub fn enumerate_log_z_backward(model: &DiscreteModel, budget: EnumerationBudget) -> Result<f64> {
    check(model, budget)?;
    let c = model.cards;
    let mut z = 0.0;
    for th in 0..c.n_theta {
        let mut beta = vec![1.0; c.n_x];
        for t in (1..=c.horizon).rev() {
            let mut next = vec![0.0; c.n_x];
            for (xp, slot) in next.iter_mut().enumerate() {
                let mut s = 0.0;
                for u in 0..c.n_u {
                    for x in 0..c.n_x {
                        let mut obs = 0.0;
                        for y in 0..c.n_y {
                            obs += model.likelihood[[y, x, th]] * model.goal_y[[t - 1, y]];
                        }
                        s += model.action_prior[[t - 1, u]]
                            * model.dynamics[[x, xp, th, u]]
                            * model.goal_x[[t - 1, x]]
                            * obs
                            * beta[x];
                    }
                }
                *slot = s;
            }
            beta = next;
        }
        for x0 in 0..c.n_x {
            z += model.prior_theta[th] * model.prior_x0[x0] * beta[x0];
        }
    }
    Ok(z.ln())
}

/// Exact marginals of the normalized model on every edge variable and
/// every factor scope.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMarginals {
    pub theta: Array1<f64>,
    pub x0: Array1<f64>,
    /// Per slice, index `t - 1`.
    pub x: Vec<Array1<f64>>,
    pub y: Vec<Array1<f64>>,
    pub u: Vec<Array1<f64>>,
    /// `[Y, X, Θ]` per slice.
    pub obs: Vec<Array3<f64>>,
    /// `[X_t, X_{t-1}, Θ, U]` per slice.
    pub dynamics: Vec<Array4<f64>>,
    /// `(x_t, θ)` per slice.
    pub sep: Vec<Array2<f64>>,
    pub log_z: f64,
}

pub fn exact_marginals(model: &DiscreteModel, budget: EnumerationBudget) -> Result<ExactMarginals> {
    check(model, budget)?;
    let c = model.cards;
    let horizon = c.horizon;
    let mut m = ExactMarginals {
        theta: Array1::zeros(c.n_theta),
        x0: Array1::zeros(c.n_x),
        x: vec![Array1::zeros(c.n_x); horizon],
        y: vec![Array1::zeros(c.n_y); horizon],
        u: vec![Array1::zeros(c.n_u); horizon],
        obs: vec![Array3::zeros((c.n_y, c.n_x, c.n_theta)); horizon],
        dynamics: vec![Array4::zeros((c.n_x, c.n_x, c.n_theta, c.n_u)); horizon],
        sep: vec![Array2::zeros((c.n_x, c.n_theta)); horizon],
        log_z: 0.0,
    };
    let mut z = 0.0;
    for th in 0..c.n_theta {
        for x0 in 0..c.n_x {
            let root = model.prior_theta[th] * model.prior_x0[x0];
            odometer(model, th, x0, |d, w| {
                let w = root * w;
                if w == 0.0 {
                    return;
                }
                z += w;
                m.theta[th] += w;
                m.x0[x0] += w;
                let mut prev = x0;
                for t in 0..horizon {
                    let (u, x, y) = (d[3 * t], d[3 * t + 1], d[3 * t + 2]);
                    m.x[t][x] += w;
                    m.y[t][y] += w;
                    m.u[t][u] += w;
                    m.obs[t][[y, x, th]] += w;
                    m.dynamics[t][[x, prev, th, u]] += w;
                    m.sep[t][[x, th]] += w;
                    prev = x;
                }
            });
        }
    }
    let scale = |a: &mut f64| *a /= z;
    m.theta.iter_mut().for_each(scale);
    m.x0.iter_mut().for_each(scale);
    for t in 0..horizon {
        m.x[t].iter_mut().for_each(scale);
        m.y[t].iter_mut().for_each(scale);
        m.u[t].iter_mut().for_each(scale);
        m.obs[t].iter_mut().for_each(scale);
        m.dynamics[t].iter_mut().for_each(scale);
        m.sep[t].iter_mut().for_each(scale);
    }
    m.log_z = z.ln();
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Cardinalities;
    use crate::sampling;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_binary_model_matches_direct_sum() {
        let c = Cardinalities::new(2, 2, 2, 1, 1).unwrap();
        let m = DiscreteModel::uniform(c).unwrap();
        // x0, u, x1, y: 16 terms of 1/2 · 1/2 · 1/2 · 1/2
        let z: f64 = (0..16).map(|_| 0.5f64.powi(4)).sum();
        assert_abs_diff_eq!(enumerate_log_z(&m, EnumerationBudget::default()).unwrap(), z.ln(), epsilon = 1e-15);
    }

    #[test]
    fn delta_chain_has_unit_partition() {
        let c = Cardinalities::new(3, 3, 2, 1, 3).unwrap();
        let mut m = DiscreteModel::uniform(c).unwrap();
        m.prior_x0 = Array1::from(vec![0.0, 1.0, 0.0]);
        m.likelihood = Array3::from_shape_fn((3, 3, 1), |(y, x, _)| (y == x) as u8 as f64);
        m.dynamics = Array4::from_shape_fn((3, 3, 1, 2), |(xn, xp, _, u)| (xn == (xp + u) % 3) as u8 as f64);
        let lz = enumerate_log_z(&m, EnumerationBudget::default()).unwrap();
        assert_abs_diff_eq!(lz, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn summation_orders_agree() {
        for seed in 0..10 {
            let c = Cardinalities::new(3, 2, 2, 2, 2).unwrap();
            let m = sampling::random_model(c, seed, 1e-12);
            let a = enumerate_log_z(&m, EnumerationBudget::default()).unwrap();
            let b = enumerate_log_z_backward(&m, EnumerationBudget::default()).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn uniform_model_has_uniform_marginals() {
        let c = Cardinalities::new(2, 3, 2, 2, 2).unwrap();
        let m = DiscreteModel::uniform(c).unwrap();
        let e = exact_marginals(&m, EnumerationBudget::default()).unwrap();
        assert!(e.x[1].iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(e.y[0].iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-12));
        assert!(e.theta.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn point_mass_parameter_prior_survives() {
        let c = Cardinalities::new(2, 2, 2, 3, 1).unwrap();
        let mut m = sampling::random_model(c, 1, 1e-12);
        m.prior_theta = Array1::from(vec![0.0, 1.0, 0.0]);
        let e = exact_marginals(&m, EnumerationBudget::default()).unwrap();
        assert_eq!(e.theta[1], 1.0);
    }

    #[test]
    fn budget_rejects_large_joints() {
        let c = Cardinalities::new(4, 4, 4, 4, 6).unwrap();
        let m = DiscreteModel::uniform(c).unwrap();
        assert!(matches!(
            enumerate_log_z(&m, EnumerationBudget::default()),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
