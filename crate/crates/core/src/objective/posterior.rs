//! The factorized variational family
//!
//! ```text
//! q(y, x, θ, u) = q(x₀, θ) Π_t q(y_t | x_t, θ) q(x_t | x_{t-1}, u_t, θ) q(u_t | x_{t-1}, θ)
//! ```
//!
//! and the desk-scale objectives defined on it by exhaustive enumeration.

use ndarray::{Array1, Array2, Array3, Array4, Array5, Axis};

use crate::coords::{entropy_unchecked, plogp};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::model::{Cardinalities, DiscreteModel};
use crate::oracle::EnumerationBudget;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedPosterior {
    pub horizon: usize,
    /// `q(x₀, θ)`, `[X, Θ]`.
    pub q_x0_theta: Array2<f64>,
    /// `q(y | x, θ)`, `[Y, X, Θ]`, columns sum to one over `y`.
    pub q_y_cond: Array3<f64>,
    /// `q(x_t | x_{t-1}, u, θ)`, `[X_t, X_{t-1}, U, Θ]`, columns sum to one over `x_t`.
    pub q_x_cond: Array4<f64>,
    /// `q(u | x_{t-1}, θ)`, `[U, X, Θ]`, columns sum to one over `u`.
    pub q_u_cond: Array3<f64>,
}

impl FactorizedPosterior {
    pub fn validate(&self, cards: &Cardinalities) -> Result<()> {
        let c = cards;
        let shapes: [(&str, &[usize], Vec<usize>); 4] = [
            ("q_x0_theta", self.q_x0_theta.shape(), vec![c.n_x, c.n_theta]),
            ("q_y_cond", self.q_y_cond.shape(), vec![c.n_y, c.n_x, c.n_theta]),
            ("q_x_cond", self.q_x_cond.shape(), vec![c.n_x, c.n_x, c.n_u, c.n_theta]),
            ("q_u_cond", self.q_u_cond.shape(), vec![c.n_u, c.n_x, c.n_theta]),
        ];
        for (name, found, want) in shapes {
            if found != want.as_slice() {
                return Err(Error::DimensionMismatch {
                    field: name.into(),
                    expected: format!("{want:?}"),
                    found: format!("{found:?}"),
                });
            }
        }
        if self.horizon != c.horizon {
            return Err(Error::DimensionMismatch {
                field: "horizon".into(),
                expected: c.horizon.to_string(),
                found: self.horizon.to_string(),
            });
        }
        let dev_joint = (self.q_x0_theta.sum() - 1.0).abs();
        let dev = |a: ndarray::ArrayViewD<'_, f64>| {
            a.sum_axis(Axis(0)).iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
        };
        for (name, d) in [
            ("q_x0_theta", dev_joint),
            ("q_y_cond", dev(self.q_y_cond.view().into_dyn())),
            ("q_x_cond", dev(self.q_x_cond.view().into_dyn())),
            ("q_u_cond", dev(self.q_u_cond.view().into_dyn())),
        ] {
            if d > 1e-12 {
                return Err(Error::NonStochastic { field: name.into(), deviation: d });
            }
        }
        Ok(())
    }
}

/// Joint marginal `q(x_t, x_{t-1}, u_t, y_t, θ)` of one slice. Every other
/// slice marginal is a sum over this table.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceMarginals {
    /// `[X_t, X_{t-1}, U, Y, Θ]`
    pub joint: Array5<f64>,
}

impl SliceMarginals {
    /// `q(x_t, x_{t-1}, u_t)`, `[X_t, X_{t-1}, U]`.
    pub fn trip(&self) -> Array3<f64> {
        self.joint.sum_axis(Axis(4)).sum_axis(Axis(3))
    }
    /// `q(x_{t-1}, u_t)`, `[X_{t-1}, U]`.
    pub fn pair(&self) -> Array2<f64> {
        self.trip().sum_axis(Axis(0))
    }
    pub fn x_prev(&self) -> Array1<f64> {
        self.pair().sum_axis(Axis(1))
    }
    pub fn u(&self) -> Array1<f64> {
        self.pair().sum_axis(Axis(0))
    }
    pub fn x(&self) -> Array1<f64> {
        self.trip().sum_axis(Axis(2)).sum_axis(Axis(1))
    }
    /// `q(y_t, x_t, θ)`, `[Y, X, Θ]`.
    pub fn yxtheta(&self) -> Array3<f64> {
        let m = self.joint.sum_axis(Axis(2)).sum_axis(Axis(1)); // [X, Y, Θ]
        m.permuted_axes([1, 0, 2]).as_standard_layout().to_owned()
    }
    /// `q(y_t, x_t)`, `[Y, X]`.
    pub fn yx(&self) -> Array2<f64> {
        self.yxtheta().sum_axis(Axis(2))
    }
    /// `q(x_t, θ)`, `[X, Θ]`.
    pub fn xtheta(&self) -> Array2<f64> {
        self.yxtheta().sum_axis(Axis(0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMarginals {
    pub slices: Vec<SliceMarginals>,
}

impl PosteriorMarginals {
    pub fn slice(&self, t: usize) -> &SliceMarginals {
        &self.slices[t - 1]
    }
}

/// One full configuration during enumeration; `x[0]` is `x₀` and `u[t]`,
/// `y[t]` are used for `t ≥ 1`.
struct Path {
    theta: usize,
    x: Vec<usize>,
    u: Vec<usize>,
    y: Vec<usize>,
}

/// Visits every configuration with `θ` and `x₀` fixed, passing the joint
/// posterior probability and the log of the unnormalized model.
fn walk_branch<F>(model: &DiscreteModel, post: &FactorizedPosterior, theta: usize, x0: usize, visit: &mut F)
where
    F: FnMut(&Path, f64, f64),
{
    let horizon = model.cards.horizon;
    let mut path = Path {
        theta,
        x: vec![0; horizon + 1],
        u: vec![0; horizon + 1],
        y: vec![0; horizon + 1],
    };
    path.x[0] = x0;
    let q0 = post.q_x0_theta[[x0, theta]];
    let lp0 = model.prior_theta[theta].ln() + model.prior_x0[x0].ln();
    recurse(model, post, 1, q0, lp0, &mut path, visit);
}

fn recurse<F>(
    model: &DiscreteModel,
    post: &FactorizedPosterior,
    t: usize,
    q: f64,
    log_p: f64,
    path: &mut Path,
    visit: &mut F,
) where
    F: FnMut(&Path, f64, f64),
{
    let c = model.cards;
    if t > c.horizon {
        visit(path, q, log_p);
        return;
    }
    let th = path.theta;
    let xp = path.x[t - 1];
    for u in 0..c.n_u {
        let qu = q * post.q_u_cond[[u, xp, th]];
        let lpu = log_p + model.action_prior[[t - 1, u]].ln();
        for x in 0..c.n_x {
            let qx = qu * post.q_x_cond[[x, xp, u, th]];
            let lpx = lpu + model.dynamics[[x, xp, th, u]].ln() + model.goal_x[[t - 1, x]].ln();
            for y in 0..c.n_y {
                let qy = qx * post.q_y_cond[[y, x, th]];
                let lpy = lpx + model.likelihood[[y, x, th]].ln() + model.goal_y[[t - 1, y]].ln();
                path.u[t] = u;
                path.x[t] = x;
                path.y[t] = y;
                recurse(model, post, t + 1, qy, lpy, path, visit);
            }
        }
    }
}

fn check_budget(cards: &Cardinalities, budget: EnumerationBudget) -> Result<()> {
    let size = cards.joint_size();
    if size > budget.max_joint_size {
        return Err(Error::BudgetExceeded { size, budget: budget.max_joint_size });
    }
    Ok(())
}

/// Runs `f` on every `(θ, x₀)` branch under `policy` and returns the
/// per-branch results in `θ`-major order.
fn per_branch<T, F>(model: &DiscreteModel, policy: ExecPolicy, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let c = model.cards;
    policy.map_range(c.n_theta * c.n_x, |i| f(i / c.n_x, i % c.n_x))
}

/// Exact slice marginals of `post` by enumeration.
pub fn posterior_marginals(
    model: &DiscreteModel,
    post: &FactorizedPosterior,
    budget: EnumerationBudget,
) -> Result<PosteriorMarginals> {
    posterior_marginals_with(model, post, budget, ExecPolicy::default())
}

pub fn posterior_marginals_with(
    model: &DiscreteModel,
    post: &FactorizedPosterior,
    budget: EnumerationBudget,
    policy: ExecPolicy,
) -> Result<PosteriorMarginals> {
    let c = model.cards;
    post.validate(&c)?;
    check_budget(&c, budget)?;
    let shape = (c.n_x, c.n_x, c.n_u, c.n_y, c.n_theta);
    let parts = per_branch(model, policy, |th, x0| {
        let mut tables = vec![Array5::<f64>::zeros(shape); c.horizon];
        walk_branch(model, post, th, x0, &mut |p, q, _| {
            for t in 1..=c.horizon {
                tables[t - 1][[p.x[t], p.x[t - 1], p.u[t], p.y[t], p.theta]] += q;
            }
        });
        tables
    });
    let mut slices = vec![Array5::<f64>::zeros(shape); c.horizon];
    for part in parts {
        for (acc, tab) in slices.iter_mut().zip(part) {
            *acc += &tab;
        }
    }
    Ok(PosteriorMarginals {
        slices: slices.into_iter().map(|joint| SliceMarginals { joint }).collect(),
    })
}

/// `F_p[q] = Σ q log(q / p)` against the unnormalized model (goals
/// included). `+∞` if `q > 0` where `p = 0`.
pub fn global_vfe(model: &DiscreteModel, post: &FactorizedPosterior, budget: EnumerationBudget) -> Result<f64> {
    post.validate(&model.cards)?;
    check_budget(&model.cards, budget)?;
    Ok(accumulate_vfe(model, post, ExecPolicy::default(), |_| 0.0))
}

fn accumulate_vfe<G>(model: &DiscreteModel, post: &FactorizedPosterior, policy: ExecPolicy, extra_log_p: G) -> f64
where
    G: Fn(&Path) -> f64 + Sync + Send,
{
    per_branch(model, policy, |th, x0| {
        let mut acc = 0.0;
        walk_branch(model, post, th, x0, &mut |p, q, log_p| {
            if q > 0.0 {
                let lp = log_p + extra_log_p(p);
                acc += plogp(q) - q * lp;
            }
        });
        acc
    })
    .into_iter()
    .sum()
}

/// Epistemic priors of one slice. All entries are positive and
/// unnormalized; entries whose conditioning event has zero probability are
/// set to one and listed in `degenerate`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpistemicPriors {
    /// `p̃(u) = exp(H[q(x_t, x_{t-1} | u)] − H[q(x_{t-1} | u)])`, `[U]`.
    pub p_tilde_u: Array1<f64>,
    /// `p̃(x) = exp(−H[q(y | x)])`, `[X]`.
    pub p_tilde_x: Array1<f64>,
    /// `p̃(y, x) = exp(KL[q(θ | y, x) ‖ q(θ | x)])`, `[Y, X]`.
    pub p_tilde_yx: Array2<f64>,
    /// `p̃(x, θ) = exp(−H[q(y | x, θ)])`, `[X, Θ]`.
    pub p_tilde_xtheta: Array2<f64>,
    pub degenerate: Vec<String>,
}

/// Epistemic priors of slice `t` computed from enumerated marginals by
/// forming each conditional table explicitly.
pub fn epistemic_priors(marg: &PosteriorMarginals, t: usize) -> EpistemicPriors {
    let s = marg.slice(t);
    let trip = s.trip();
    let (nx, _, nu) = trip.dim();
    let yxt = s.yxtheta();
    let (ny, _, nth) = yxt.dim();
    let mut degenerate = Vec::new();

    let qu = s.u();
    let mut p_tilde_u = Array1::ones(nu);
    for u in 0..nu {
        if qu[u] <= 0.0 {
            degenerate.push(format!("p_tilde_u[{u}]"));
            continue;
        }
        let mut h_joint = 0.0;
        let mut h_prev = 0.0;
        for xp in 0..nx {
            let mut prev = 0.0;
            for xn in 0..nx {
                let c = trip[[xn, xp, u]] / qu[u];
                h_joint -= plogp(c);
                prev += trip[[xn, xp, u]];
            }
            h_prev -= plogp(prev / qu[u]);
        }
        p_tilde_u[u] = (h_joint - h_prev).exp();
    }

    let yx = s.yx();
    let qx = yx.sum_axis(Axis(0));
    let mut p_tilde_x = Array1::ones(nx);
    for x in 0..nx {
        if qx[x] <= 0.0 {
            degenerate.push(format!("p_tilde_x[{x}]"));
            continue;
        }
        let h: f64 = -(0..ny).map(|y| plogp(yx[[y, x]] / qx[x])).sum::<f64>();
        p_tilde_x[x] = (-h).exp();
    }

    let xth = s.xtheta();
    let mut p_tilde_yx = Array2::ones((ny, nx));
    for y in 0..ny {
        for x in 0..nx {
            if yx[[y, x]] <= 0.0 || qx[x] <= 0.0 {
                degenerate.push(format!("p_tilde_yx[{y},{x}]"));
                continue;
            }
            let mut d = 0.0;
            for th in 0..nth {
                let post_th = yxt[[y, x, th]] / yx[[y, x]];
                let prior_th = xth[[x, th]] / qx[x];
                if post_th > 0.0 {
                    d += post_th * (post_th.ln() - prior_th.ln());
                }
            }
            p_tilde_yx[[y, x]] = d.exp();
        }
    }

    let mut p_tilde_xtheta = Array2::ones((nx, nth));
    for x in 0..nx {
        for th in 0..nth {
            let z = xth[[x, th]];
            if z <= 0.0 {
                degenerate.push(format!("p_tilde_xtheta[{x},{th}]"));
                continue;
            }
            let h: f64 = -(0..ny).map(|y| plogp(yxt[[y, x, th]] / z)).sum::<f64>();
            p_tilde_xtheta[[x, th]] = (-h).exp();
        }
    }

    EpistemicPriors { p_tilde_u, p_tilde_x, p_tilde_yx, p_tilde_xtheta, degenerate }
}

/// `F_p̃[q]` over the model augmented by `Π_t p̃(x_t) p̃(u_t) p̃(y_t, x_t)`,
/// accumulated configuration by configuration.
pub fn adjusted_vfe(model: &DiscreteModel, post: &FactorizedPosterior, budget: EnumerationBudget) -> Result<f64> {
    let marg = posterior_marginals(model, post, budget)?;
    let priors: Vec<EpistemicPriors> =
        (1..=model.cards.horizon).map(|t| epistemic_priors(&marg, t)).collect();
    Ok(adjusted_vfe_from_priors(model, post, &priors, ExecPolicy::default()))
}

fn adjusted_vfe_from_priors(
    model: &DiscreteModel,
    post: &FactorizedPosterior,
    priors: &[EpistemicPriors],
    policy: ExecPolicy,
) -> f64 {
    let logs: Vec<(Array1<f64>, Array1<f64>, Array2<f64>)> = priors
        .iter()
        .map(|p| (p.p_tilde_u.mapv(f64::ln), p.p_tilde_x.mapv(f64::ln), p.p_tilde_yx.mapv(f64::ln)))
        .collect();
    accumulate_vfe(model, post, policy, |p| {
        let mut extra = 0.0;
        for (i, (lu, lx, lyx)) in logs.iter().enumerate() {
            let t = i + 1;
            extra += lu[p.u[t]] + lx[p.x[t]] + lyx[[p.y[t], p.x[t]]];
        }
        extra
    })
}

/// Entropy of a table, ignoring zero entries.
pub(crate) fn h<'a>(a: impl IntoIterator<Item = &'a f64>) -> f64 {
    entropy_unchecked(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use approx::assert_abs_diff_eq;

    fn budget() -> EnumerationBudget {
        EnumerationBudget::default()
    }

    fn uniform_posterior(c: Cardinalities) -> FactorizedPosterior {
        FactorizedPosterior {
            horizon: c.horizon,
            q_x0_theta: Array2::from_elem((c.n_x, c.n_theta), 1.0 / (c.n_x * c.n_theta) as f64),
            q_y_cond: Array3::from_elem((c.n_y, c.n_x, c.n_theta), 1.0 / c.n_y as f64),
            q_x_cond: Array4::from_elem((c.n_x, c.n_x, c.n_u, c.n_theta), 1.0 / c.n_x as f64),
            q_u_cond: Array3::from_elem((c.n_u, c.n_x, c.n_theta), 1.0 / c.n_u as f64),
        }
    }

    #[test]
    fn uniform_vfe_is_minus_log_z() {
        let c = Cardinalities::new(2, 3, 2, 2, 2).unwrap();
        let m = DiscreteModel::uniform(c).unwrap();
        let f = global_vfe(&m, &uniform_posterior(c), budget()).unwrap();
        // p is already normalized, q = p, so F = -log Z = 0 with Z = 1.
        // (every factor is a normalized uniform and goals are all-ones)
        assert_abs_diff_eq!(f, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_vfe_with_flat_goals_shifted() {
        // goals of 2 on every entry scale Z by 2^(2T) in closed form
        let c = Cardinalities::new(2, 2, 1, 1, 2).unwrap();
        let mut m = DiscreteModel::uniform(c).unwrap();
        m.goal_x.fill(2.0);
        m.goal_y.fill(2.0);
        let f = global_vfe(&m, &uniform_posterior(c), budget()).unwrap();
        let log_z = 4.0 * 2f64.ln();
        assert_abs_diff_eq!(f + log_z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn support_outside_likelihood_is_infinite() {
        let c = Cardinalities::new(2, 2, 1, 1, 1).unwrap();
        let mut m = DiscreteModel::uniform(c).unwrap();
        m.likelihood[[0, 0, 0]] = 1.0;
        m.likelihood[[1, 0, 0]] = 0.0;
        let f = global_vfe(&m, &uniform_posterior(c), budget()).unwrap();
        assert_eq!(f, f64::INFINITY);
    }

    #[test]
    fn budget_is_enforced() {
        let c = Cardinalities::new(3, 3, 2, 2, 3).unwrap();
        let m = DiscreteModel::uniform(c).unwrap();
        let err = global_vfe(&m, &uniform_posterior(c), EnumerationBudget { max_joint_size: 100 });
        assert!(matches!(err, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn deterministic_likelihood_gives_unit_state_prior() {
        let c = Cardinalities::new(2, 2, 2, 1, 1).unwrap();
        let m = DiscreteModel::uniform(c).unwrap();
        let mut post = sampling::random_posterior(c, 3);
        post.q_y_cond.fill(0.0);
        post.q_y_cond[[0, 0, 0]] = 1.0;
        post.q_y_cond[[1, 1, 0]] = 1.0;
        let marg = posterior_marginals(&m, &post, budget()).unwrap();
        let pr = epistemic_priors(&marg, 1);
        assert!(pr.p_tilde_x.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(pr.p_tilde_xtheta.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn theta_independent_observations_give_unit_observation_prior() {
        let c = Cardinalities::new(2, 2, 2, 2, 1).unwrap();
        let m = DiscreteModel::uniform(c).unwrap();
        let mut post = sampling::random_posterior(c, 5);
        // q(y|x,θ) constant in θ and q(x0,θ) = q(x0) q(θ) keeps θ ⫫ (y, x)
        for y in 0..2 {
            for x in 0..2 {
                let v = post.q_y_cond[[y, x, 0]];
                post.q_y_cond[[y, x, 1]] = v;
            }
        }
        post.q_x0_theta = Array2::from_shape_fn((2, 2), |(x, th)| [0.3, 0.7][x] * [0.4, 0.6][th]);
        for xn in 0..2 {
            for xp in 0..2 {
                for u in 0..2 {
                    let v = post.q_x_cond[[xn, xp, u, 0]];
                    post.q_x_cond[[xn, xp, u, 1]] = v;
                }
            }
        }
        for u in 0..2 {
            for x in 0..2 {
                let v = post.q_u_cond[[u, x, 0]];
                post.q_u_cond[[u, x, 1]] = v;
            }
        }
        let marg = posterior_marginals(&m, &post, budget()).unwrap();
        let pr = epistemic_priors(&marg, 1);
        assert!(pr.p_tilde_yx.iter().all(|&v| (v - 1.0).abs() < 1e-12), "{:?}", pr.p_tilde_yx);
    }

    #[test]
    fn zero_probability_conditioning_defaults_to_one() {
        let c = Cardinalities::new(2, 2, 2, 1, 1).unwrap();
        let m = DiscreteModel::uniform(c).unwrap();
        let mut post = sampling::random_posterior(c, 11);
        // action 1 is never taken
        post.q_u_cond.fill(0.0);
        post.q_u_cond.index_axis_mut(Axis(0), 0).fill(1.0);
        let marg = posterior_marginals(&m, &post, budget()).unwrap();
        let pr = epistemic_priors(&marg, 1);
        assert_eq!(pr.p_tilde_u[1], 1.0);
        assert!(pr.degenerate.iter().any(|d| d == "p_tilde_u[1]"));
    }

    #[test]
    fn epistemic_priors_match_brute_force_conditionals() {
        let c = Cardinalities::new(2, 2, 2, 2, 1).unwrap();
        let m = sampling::random_model(c, 1, 0.0);
        let post = sampling::random_posterior(c, 2);
        let marg = posterior_marginals(&m, &post, budget()).unwrap();
        let pr = epistemic_priors(&marg, 1);
        // T = 1: q(x1, x0, u, y, θ) = q(x0,θ) q(u|x0,θ) q(x1|x0,u,θ) q(y|x1,θ)
        let mut j = [[[[[0.0f64; 2]; 2]; 2]; 2]; 2]; // [x1][x0][u][y][th]
        for x1 in 0..2 {
            for x0 in 0..2 {
                for u in 0..2 {
                    for y in 0..2 {
                        for th in 0..2 {
                            j[x1][x0][u][y][th] = post.q_x0_theta[[x0, th]]
                                * post.q_u_cond[[u, x0, th]]
                                * post.q_x_cond[[x1, x0, u, th]]
                                * post.q_y_cond[[y, x1, th]];
                        }
                    }
                }
            }
        }
        // p̃(x, θ) by its definition
        for x in 0..2 {
            for th in 0..2 {
                let mut qy = [0.0; 2];
                for y in 0..2 {
                    for x0 in 0..2 {
                        for u in 0..2 {
                            qy[y] += j[x][x0][u][y][th];
                        }
                    }
                }
                let z = qy[0] + qy[1];
                let hh: f64 = qy.iter().map(|v| -(v / z) * (v / z).ln()).sum();
                assert_abs_diff_eq!(pr.p_tilde_xtheta[[x, th]], (-hh).exp(), epsilon = 1e-13);
            }
        }
        // p̃(u)
        for u in 0..2 {
            let mut t2 = [[0.0; 2]; 2];
            for x1 in 0..2 {
                for x0 in 0..2 {
                    for y in 0..2 {
                        for th in 0..2 {
                            t2[x1][x0] += j[x1][x0][u][y][th];
                        }
                    }
                }
            }
            let qu: f64 = t2.iter().flatten().sum();
            let hj: f64 = t2.iter().flatten().map(|v| -(v / qu) * (v / qu).ln()).sum();
            let hp: f64 = (0..2)
                .map(|x0| {
                    let v = (t2[0][x0] + t2[1][x0]) / qu;
                    -v * v.ln()
                })
                .sum();
            assert_abs_diff_eq!(pr.p_tilde_u[u], (hj - hp).exp(), epsilon = 1e-13);
        }
    }
}
