//! Per-slice update operations of the stationary scheme.
//!
//! The dynamics side is a chain over the joint separator `s_t = (x_t, θ)`.
//! With `Ψ_t = p(x_t | x_{t-1}, θ, u_t) p(u_t) exp(−Λ_trip)`, the
//! observation message `I_t = Σ_y p(y | x, θ) r(y | x, θ) p̂_y(y)` and the
//! state goal `g_t = p̂_x(x_t)`:
//!
//! ```text
//! A_{t-1} = fwd_{t-1} I_{t-1} g_{t-1}        (A_0 = p(x₀) p(θ))
//! B_t     = I_t g_t bwd_t                    (bwd_T = 1)
//! fwd_t   = Σ_{x_{t-1}, u} Ψ_t A_{t-1}
//! bwd_{t-1} = Σ_{x_t, u} Ψ_t B_t
//! ```
//!
//! Outside `ActiveInference` mode the observation message drops `r`.

use ndarray::{Array1, Array2, Array3, Array4, Axis};

use crate::coords::{conditional_channel, normalize, Coordinates, MultiplierSet};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::model::DiscreteModel;
use crate::objective::InferenceMode;

/// `r(y | x, θ) = q_y / Σ_y q_y`, uniform on zero columns.
pub fn update_r(coords: &Coordinates, t: usize) -> Array3<f64> {
    let s = coords.slice(t);
    conditional_channel(&s.q_y, &s.sep_from_obs())
}

/// The observation message `I_t(x, θ)`.
pub fn observation_message(model: &DiscreteModel, coords: &Coordinates, t: usize, mode: InferenceMode) -> Array2<f64> {
    let c = model.cards;
    let goal = model.goal_y_at(t);
    let r = &coords.slice(t).r_chan;
    let use_r = mode == InferenceMode::ActiveInference;
    Array2::from_shape_fn((c.n_x, c.n_theta), |(x, th)| {
        let mut acc = 0.0;
        for y in 0..c.n_y {
            let w = if use_r { r[[y, x, th]] } else { 1.0 };
            acc += model.likelihood[[y, x, th]] * w * goal[y];
        }
        acc
    })
}

/// `A_{t-1}`: the chain message entering slice `t` from the past, including
/// the observation and goal factors of slice `t - 1`.
pub fn incoming_past(model: &DiscreteModel, mults: &MultiplierSet, t: usize) -> Array2<f64> {
    if t == 1 {
        return mults.fwd[0].clone();
    }
    let g = model.goal_x_at(t - 1);
    let mut a = &mults.fwd[t - 1] * &mults.obs[t - 2];
    for (mut row, gx) in a.axis_iter_mut(Axis(0)).zip(g.iter()) {
        row *= *gx;
    }
    a
}

/// `B_t`: the chain message entering slice `t` from the future, including
/// the observation and goal factors of slice `t`.
pub fn incoming_future(model: &DiscreteModel, mults: &MultiplierSet, t: usize) -> Array2<f64> {
    let g = model.goal_x_at(t);
    let mut b = &mults.bwd[t] * &mults.obs[t - 1];
    for (mut row, gx) in b.axis_iter_mut(Axis(0)).zip(g.iter()) {
        row *= *gx;
    }
    b
}

/// `fwd_t`, scaled to unit mass.
pub fn forward_message(model: &DiscreteModel, mults: &MultiplierSet, t: usize) -> Array2<f64> {
    let c = model.cards;
    let a = incoming_past(model, mults, t);
    let pu = model.action_prior_at(t);
    let lt = &mults.lambda_trip[t - 1];
    let mut out = Array2::zeros((c.n_x, c.n_theta));
    for xn in 0..c.n_x {
        for xp in 0..c.n_x {
            for u in 0..c.n_u {
                let w = pu[u] * (-lt[[xn, xp, u]]).exp();
                for th in 0..c.n_theta {
                    out[[xn, th]] += model.dynamics[[xn, xp, th, u]] * w * a[[xp, th]];
                }
            }
        }
    }
    normalize(&mut out);
    out
}

/// `bwd_{t-1}`, scaled to unit mass.
pub fn backward_message(model: &DiscreteModel, mults: &MultiplierSet, t: usize) -> Array2<f64> {
    let c = model.cards;
    let b = incoming_future(model, mults, t);
    let pu = model.action_prior_at(t);
    let lt = &mults.lambda_trip[t - 1];
    let mut out = Array2::zeros((c.n_x, c.n_theta));
    for xn in 0..c.n_x {
        for xp in 0..c.n_x {
            for u in 0..c.n_u {
                let w = pu[u] * (-lt[[xn, xp, u]]).exp();
                for th in 0..c.n_theta {
                    out[[xp, th]] += model.dynamics[[xn, xp, th, u]] * w * b[[xn, th]];
                }
            }
        }
    }
    normalize(&mut out);
    out
}

/// Min-zero gauge.
fn gauge<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) {
    let m = a.iter().copied().fold(f64::INFINITY, f64::min);
    if m.is_finite() {
        a.mapv_inplace(|v| v - m);
    }
}

/// `Λ_{xθ} = log q_sep − log I_t` on the chain separator belief
/// `q_sep ∝ fwd_t I_t g_t bwd_t`, which leaves `log(fwd_t g_t bwd_t)`;
/// entries are floored at `floor` before the log and gauge-fixed to a zero
/// minimum.
pub fn update_lambda_xtheta(
    model: &DiscreteModel,
    mults: &MultiplierSet,
    t: usize,
    floor: f64,
) -> Result<Array2<f64>> {
    let obs = &mults.obs[t - 1];
    if let Some(((x, th), _)) = obs.indexed_iter().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::DegenerateSlice {
            t,
            reason: format!("observation message vanishes at x={x}, theta={th}"),
        });
    }
    let g = model.goal_x_at(t);
    let mut lam = Array2::from_shape_fn(obs.raw_dim(), |(x, th)| {
        (mults.fwd[t][[x, th]] * g[x] * mults.bwd[t][[x, th]]).max(floor).ln()
    });
    gauge(&mut lam);
    Ok(lam)
}

/// Candidate observation belief
/// `q_y ∝ p(y | x, θ) r(y | x, θ) p̂_y(y) exp(Λ_{xθ})`, with `r` dropped
/// outside `ActiveInference` mode. Writes into `out`, `[Y, X, Θ]`.
pub fn update_q_y_into(
    model: &DiscreteModel,
    coords: &Coordinates,
    mults: &MultiplierSet,
    t: usize,
    mode: InferenceMode,
    policy: ExecPolicy,
    out: &mut Array3<f64>,
) -> Result<()> {
    let c = model.cards;
    let lam = &mults.lambda_xtheta[t - 1];
    let top = lam.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cavity: Array2<f64> = lam.mapv(|l| (l - top).exp());
    let goal = model.goal_y_at(t);
    let r = &coords.slice(t).r_chan;
    let use_r = mode == InferenceMode::ActiveInference;
    let block = c.n_x * c.n_theta;
    let lik = model.likelihood.as_slice().expect("standard layout");
    let r_s = r.as_slice().expect("standard layout");
    let cav = cavity.as_slice().expect("standard layout");
    let data = out.as_slice_mut().expect("standard layout");
    policy.for_each_chunk(data, block, |y, row| {
        let off = y * block;
        let gy = goal[y];
        for (k, v) in row.iter_mut().enumerate() {
            let w = if use_r { r_s[off + k] } else { 1.0 };
            *v = lik[off + k] * w * gy * cav[k];
        }
    });
    if normalize(out) <= 0.0 {
        return Err(Error::DegenerateSlice { t, reason: "observation belief has zero mass".into() });
    }
    Ok(())
}

pub fn update_q_y(
    model: &DiscreteModel,
    coords: &Coordinates,
    mults: &MultiplierSet,
    t: usize,
    mode: InferenceMode,
) -> Result<Array3<f64>> {
    let c = model.cards;
    let mut out = Array3::zeros((c.n_y, c.n_x, c.n_theta));
    update_q_y_into(model, coords, mults, t, mode, ExecPolicy::default(), &mut out)?;
    Ok(out)
}

/// Result of [`update_lambda_trip`].
#[derive(Debug, Clone, PartialEq)]
pub struct TripletUpdate {
    pub lambda: Array3<f64>,
    /// Entries whose ratio was unbounded and were clamped to the cap.
    pub clamped: usize,
}

/// `Λ_trip` with `exp(−Λ_trip) ∝ q_pair / q_trip` (`MaxAmb`,
/// `ActiveInference`), `∝ q_pair / q_{x_{t-1}}` (`Planning`) or zero
/// (`Marginal`). Gauge-fixed to a zero minimum; entries with an unbounded
/// ratio and entries above the gauge cap are set to `cap`.
pub fn update_lambda_trip(coords: &Coordinates, t: usize, mode: InferenceMode, cap: f64) -> TripletUpdate {
    let s = coords.slice(t);
    let trip = s.q_dyn.sum_axis(Axis(2));
    let pair = trip.sum_axis(Axis(0));
    let mut clamped = 0;
    let lambda = match mode {
        InferenceMode::Marginal => Array3::zeros(trip.raw_dim()),
        InferenceMode::Planning => {
            let prev: Array1<f64> = pair.sum_axis(Axis(1));
            let mut l = Array3::from_shape_fn(trip.raw_dim(), |(_, xp, u)| ratio_log(prev[xp], pair[[xp, u]]));
            clamped += cap_entries(&mut l, cap);
            l
        }
        InferenceMode::MaxAmb | InferenceMode::ActiveInference => {
            let mut l = Array3::from_shape_fn(trip.raw_dim(), |(xn, xp, u)| ratio_log(trip[[xn, xp, u]], pair[[xp, u]]));
            clamped += cap_entries(&mut l, cap);
            l
        }
    };
    TripletUpdate { lambda, clamped }
}

/// `log(num / den)`; `NaN` marks an unbounded ratio (`num = 0 < den`), `0`
/// when both vanish.
fn ratio_log(num: f64, den: f64) -> f64 {
    match (num > 0.0, den > 0.0) {
        (true, true) => num.ln() - den.ln(),
        (false, true) => f64::NAN,
        _ => 0.0,
    }
}

fn cap_entries(l: &mut Array3<f64>, cap: f64) -> usize {
    let m = l.iter().copied().filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min);
    let m = if m.is_finite() { m } else { 0.0 };
    let mut clamped = 0;
    l.mapv_inplace(|v| {
        if v.is_nan() {
            clamped += 1;
            cap
        } else {
            (v - m).min(cap)
        }
    });
    clamped
}

/// Candidate dynamics belief
/// `q_dyn ∝ p(x_t | x_{t-1}, θ, u) p(u) exp(−Λ_trip) A_{t-1}(x_{t-1}, θ) B_t(x_t, θ)`.
/// Writes into `out`, `[X_t, X_{t-1}, Θ, U]`.
pub fn update_q_dyn_into(
    model: &DiscreteModel,
    mults: &MultiplierSet,
    t: usize,
    policy: ExecPolicy,
    out: &mut Array4<f64>,
) -> Result<()> {
    let past = incoming_past(model, mults, t);
    let future = incoming_future(model, mults, t);
    q_dyn_kernel(model, &mults.lambda_trip[t - 1], &past, &future, t, policy, out)?;
    if normalize(out) <= 0.0 {
        return Err(Error::DegenerateSlice { t, reason: "dynamics belief has zero mass".into() });
    }
    Ok(())
}

/// The unnormalized product behind [`update_q_dyn_into`], one `x_t` block
/// per task.
pub(crate) fn q_dyn_kernel(
    model: &DiscreteModel,
    lambda_trip: &Array3<f64>,
    past: &Array2<f64>,
    future: &Array2<f64>,
    t: usize,
    policy: ExecPolicy,
    out: &mut Array4<f64>,
) -> Result<()> {
    let c = model.cards;
    let (nx, nth, nu) = (c.n_x, c.n_theta, c.n_u);
    let block = nx * nth * nu;
    let pu = model.action_prior_at(t);
    let dynamics = model.dynamics.as_slice().expect("standard layout");
    let lt = lambda_trip.as_slice().expect("standard layout");
    let data = out.as_slice_mut().ok_or_else(|| Error::Config("output buffer not contiguous".into()))?;
    policy.for_each_chunk(data, block, |xn, row| {
        let d_off = xn * block;
        for xp in 0..nx {
            for th in 0..nth {
                let a = past[[xp, th]] * future[[xn, th]];
                let base = (xp * nth + th) * nu;
                for u in 0..nu {
                    let w = pu[u] * (-lt[(xn * nx + xp) * nu + u]).exp();
                    row[base + u] = dynamics[d_off + base + u] * w * a;
                }
            }
        }
    });
    Ok(())
}

pub fn update_q_dyn(model: &DiscreteModel, mults: &MultiplierSet, t: usize) -> Result<Array4<f64>> {
    let c = model.cards;
    let mut out = Array4::zeros((c.n_x, c.n_x, c.n_theta, c.n_u));
    update_q_dyn_into(model, mults, t, ExecPolicy::default(), &mut out)?;
    Ok(out)
}

/// Classical Bethe updates for the singletons and unary-factor beliefs.
///
/// Slice singletons are the marginals of the factor beliefs. `q_{x0}` and
/// `q_θ` are the marginals of `p(x₀) p(θ) bwd_0`, which aggregates every
/// factor adjacent to `θ` through the separator chain.
pub fn update_classical(coords: &mut Coordinates, mults: &MultiplierSet) {
    for s in &mut coords.slices {
        s.q_x = s.q_sep.sum_axis(Axis(1));
        s.q_y_single = s.q_y.sum_axis(Axis(2)).sum_axis(Axis(1));
        s.q_u = s.q_pair.sum_axis(Axis(0));
    }
    let mut root = &mults.fwd[0] * &mults.bwd[0];
    if normalize(&mut root) > 0.0 {
        coords.q_x0 = root.sum_axis(Axis(1));
        coords.q_theta = root.sum_axis(Axis(0));
    }
}

/// `log b = (1 − α) log candidate + α log old`, renormalized; `α = 0`
/// returns the candidate untouched. Returns the max-abs change.
pub fn damp_into<D: ndarray::Dimension>(
    old: &mut ndarray::Array<f64, D>,
    candidate: &ndarray::Array<f64, D>,
    alpha: f64,
    floor: f64,
) -> f64 {
    let mut delta: f64 = 0.0;
    if alpha == 0.0 {
        for (o, &c) in old.iter_mut().zip(candidate.iter()) {
            delta = delta.max((*o - c).abs());
            *o = c;
        }
        return delta;
    }
    let prev = old.clone();
    ndarray::Zip::from(&mut *old).and(candidate).for_each(|o, &c| {
        *o = if c <= 0.0 {
            0.0
        } else {
            ((1.0 - alpha) * c.max(floor).ln() + alpha * o.max(floor).ln()).exp()
        };
    });
    normalize(old);
    for (o, p) in old.iter().zip(prev.iter()) {
        delta = delta.max((o - p).abs());
    }
    delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coords::{init_coordinates, project_regions, InitStrategy};
    use crate::model::Cardinalities;
    use crate::sampling;
    use approx::assert_abs_diff_eq;

    fn setup(seed: u64) -> (DiscreteModel, Coordinates, MultiplierSet) {
        let c = Cardinalities::new(3, 2, 2, 2, 2).unwrap();
        let m = sampling::random_model(c, seed, 1e-12);
        let coords = init_coordinates(&m, InitStrategy::PriorSeeded).unwrap();
        let mut mults = MultiplierSet::new(&m);
        for t in 1..=2 {
            mults.obs[t - 1] = observation_message(&m, &coords, t, InferenceMode::ActiveInference);
        }
        for t in 1..=2 {
            mults.fwd[t] = forward_message(&m, &mults, t);
        }
        for t in (1..=2).rev() {
            mults.bwd[t - 1] = backward_message(&m, &mults, t);
        }
        (m, coords, mults)
    }

    #[test]
    fn channel_row_example() {
        let c = Cardinalities::new(1, 2, 1, 1, 1).unwrap();
        let mut coords = Coordinates::uniform(c);
        let s = coords.slice_mut(1);
        s.q_y = Array3::from_shape_vec((2, 1, 1), vec![0.2, 0.3]).unwrap();
        let r = update_r(&coords, 1);
        assert_abs_diff_eq!(r[[0, 0, 0]], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(r[[1, 0, 0]], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn zero_separator_gives_uniform_channel() {
        let c = Cardinalities::new(2, 3, 1, 1, 1).unwrap();
        let mut coords = Coordinates::uniform(c);
        let s = coords.slice_mut(1);
        s.q_y.fill(0.0);
        s.q_y[[0, 0, 0]] = 1.0;
        let r = update_r(&coords, 1);
        for y in 0..3 {
            assert_abs_diff_eq!(r[[y, 1, 0]], 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn uniform_everything_gives_uniform_q_y_and_zero_lambda() {
        let c = Cardinalities::new(2, 3, 2, 2, 1).unwrap();
        let m = DiscreteModel::uniform(c).unwrap();
        let coords = Coordinates::uniform(c);
        let mut mults = MultiplierSet::new(&m);
        mults.obs[0] = observation_message(&m, &coords, 1, InferenceMode::ActiveInference);
        mults.fwd[1] = forward_message(&m, &mults, 1);
        let lam = update_lambda_xtheta(&m, &mults, 1, 1e-300).unwrap();
        assert!(lam.iter().all(|&v| v.abs() < 1e-14));
        mults.lambda_xtheta[0] = lam;
        let q = update_q_y(&m, &coords, &mults, 1, InferenceMode::ActiveInference).unwrap();
        assert!(q.iter().all(|&v| (v - 1.0 / 12.0).abs() < 1e-15));
    }

    #[test]
    fn deterministic_likelihood_puts_q_y_on_diagonal() {
        let c = Cardinalities::new(3, 3, 1, 1, 1).unwrap();
        let mut m = DiscreteModel::uniform(c).unwrap();
        m.likelihood = Array3::from_shape_fn((3, 3, 1), |(y, x, _)| (y == x) as u8 as f64);
        let coords = Coordinates::uniform(c);
        let mults = MultiplierSet::new(&m);
        let q = update_q_y(&m, &coords, &mults, 1, InferenceMode::Marginal).unwrap();
        for ((y, x, _), v) in q.indexed_iter() {
            if y == x {
                assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn q_y_matches_nested_loop_product() {
        let (m, coords, mut mults) = setup(21);
        mults.lambda_xtheta[1] = update_lambda_xtheta(&m, &mults, 2, 1e-300).unwrap();
        let q = update_q_y(&m, &coords, &mults, 2, InferenceMode::ActiveInference).unwrap();
        let c = m.cards;
        let mut want = Array3::<f64>::zeros((c.n_y, c.n_x, c.n_theta));
        let mut z = 0.0;
        for y in 0..c.n_y {
            for x in 0..c.n_x {
                for th in 0..c.n_theta {
                    let v = m.likelihood[[y, x, th]]
                        * coords.slice(2).r_chan[[y, x, th]]
                        * m.goal_y[[1, y]]
                        * mults.lambda_xtheta[1][[x, th]].exp();
                    want[[y, x, th]] = v;
                    z += v;
                }
            }
        }
        for (a, b) in q.iter().zip(want.iter()) {
            assert_abs_diff_eq!(*a, b / z, epsilon = 1e-14);
        }
    }

    #[test]
    fn lambda_xtheta_is_log_ratio_of_chain_belief_and_observation_message() {
        let (m, _, mults) = setup(5);
        let lam = update_lambda_xtheta(&m, &mults, 1, 1e-300).unwrap();
        // log q_sep − log I with q_sep ∝ fwd I g bwd, gauge-fixed
        let c = m.cards;
        let mut raw = Array2::<f64>::zeros((c.n_x, c.n_theta));
        for x in 0..c.n_x {
            for th in 0..c.n_theta {
                let i = mults.obs[0][[x, th]];
                let sep = mults.fwd[1][[x, th]] * i * m.goal_x[[0, x]] * mults.bwd[1][[x, th]];
                raw[[x, th]] = sep.ln() - i.ln();
            }
        }
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        for (a, b) in lam.iter().zip(raw.iter()) {
            assert_abs_diff_eq!(*a, b - lo, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_multipliers_and_flat_messages_give_dynamics_tensor() {
        let c = Cardinalities::new(3, 2, 2, 2, 1).unwrap();
        let mut m = sampling::random_model(c, 2, 0.0);
        m.goal_x.fill(1.0);
        m.goal_y.fill(1.0);
        m.action_prior.fill(0.5);
        m.prior_x0.fill(1.0 / 3.0);
        m.prior_theta.fill(0.5);
        let mut mults = MultiplierSet::new(&m);
        mults.obs[0].fill(1.0);
        mults.bwd[1].fill(1.0);
        let q = update_q_dyn(&m, &mults, 1).unwrap();
        let z = m.dynamics.sum();
        for (a, b) in q.iter().zip(m.dynamics.iter()) {
            assert_abs_diff_eq!(*a, b / z, epsilon = 1e-15);
        }
    }

    #[test]
    fn q_dyn_matches_elementwise_oracle_under_both_policies() {
        let (m, coords, mut mults) = setup(33);
        let trip = update_lambda_trip(&coords, 2, InferenceMode::ActiveInference, 50.0);
        mults.lambda_trip[1] = trip.lambda;
        let c = m.cards;
        let mut seq = Array4::zeros((c.n_x, c.n_x, c.n_theta, c.n_u));
        let mut par = seq.clone();
        update_q_dyn_into(&m, &mults, 2, ExecPolicy::Sequential, &mut seq).unwrap();
        update_q_dyn_into(&m, &mults, 2, ExecPolicy::Parallel, &mut par).unwrap();
        assert_eq!(seq, par);
        let mut want = seq.clone();
        for xn in 0..c.n_x {
            for xp in 0..c.n_x {
                for th in 0..c.n_theta {
                    for u in 0..c.n_u {
                        let a = mults.fwd[1][[xp, th]] * mults.obs[0][[xp, th]] * m.goal_x[[0, xp]];
                        let b = mults.obs[1][[xn, th]] * m.goal_x[[1, xn]] * mults.bwd[2][[xn, th]];
                        want[[xn, xp, th, u]] = m.dynamics[[xn, xp, th, u]]
                            * m.action_prior[[1, u]]
                            * (-mults.lambda_trip[1][[xn, xp, u]]).exp()
                            * a
                            * b;
                    }
                }
            }
        }
        let z = want.sum();
        for (a, b) in seq.iter().zip(want.iter()) {
            assert_abs_diff_eq!(*a, b / z, epsilon = 1e-14);
        }
    }

    #[test]
    fn deterministic_dynamics_restricts_support() {
        let c = Cardinalities::new(3, 1, 2, 1, 1).unwrap();
        let mut m = DiscreteModel::uniform(c).unwrap();
        m.dynamics = Array4::from_shape_fn((3, 3, 1, 2), |(xn, xp, _, u)| (xn == (xp + u) % 3) as u8 as f64);
        let mults = MultiplierSet::new(&m);
        let q = update_q_dyn(&m, &mults, 1).unwrap();
        for ((xn, xp, th, u), v) in q.indexed_iter() {
            if m.dynamics[[xn, xp, th, u]] == 0.0 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn uniform_conditional_gives_zero_triplet_multiplier() {
        let c = Cardinalities::new(3, 1, 2, 2, 1).unwrap();
        let mut coords = Coordinates::uniform(c);
        let s = coords.slice_mut(1);
        s.q_dyn = Array4::from_shape_fn((3, 3, 2, 2), |(_, xp, _, u)| [0.1, 0.2, 0.7][xp] * [0.4, 0.6][u]);
        normalize(&mut s.q_dyn);
        project_regions(&mut coords, 1);
        let l = update_lambda_trip(&coords, 1, InferenceMode::MaxAmb, 50.0);
        assert!(l.lambda.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(l.clamped, 0);
    }

    #[test]
    fn point_mass_triplet_clamps_off_support() {
        let c = Cardinalities::new(2, 1, 1, 1, 1).unwrap();
        let mut coords = Coordinates::uniform(c);
        let s = coords.slice_mut(1);
        s.q_dyn.fill(0.0);
        s.q_dyn[[1, 0, 0, 0]] = 1.0;
        project_regions(&mut coords, 1);
        let l = update_lambda_trip(&coords, 1, InferenceMode::MaxAmb, 50.0);
        assert_eq!(l.lambda[[1, 0, 0]], 0.0);
        assert_eq!(l.lambda[[0, 0, 0]], 50.0);
        assert_eq!(l.clamped, 1);
    }

    #[test]
    fn triplet_multiplier_matches_projection_log_ratio() {
        let (_, coords, _) = setup(44);
        let l = update_lambda_trip(&coords, 1, InferenceMode::MaxAmb, 50.0).lambda;
        let q = &coords.slice(1).q_dyn;
        let (nx, _, nth, nu) = q.dim();
        let mut raw = Array3::<f64>::zeros((nx, nx, nu));
        for xn in 0..nx {
            for xp in 0..nx {
                for u in 0..nu {
                    let trip: f64 = (0..nth).map(|th| q[[xn, xp, th, u]]).sum();
                    let pair: f64 = (0..nx).flat_map(|a| (0..nth).map(move |th| (a, th))).map(|(a, th)| q[[a, xp, th, u]]).sum();
                    raw[[xn, xp, u]] = trip.ln() - pair.ln();
                }
            }
        }
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        for (a, b) in l.iter().zip(raw.iter()) {
            assert_abs_diff_eq!(*a, b - lo, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_damping_is_the_candidate_bitwise() {
        let mut old = Array1::from(vec![0.2, 0.8]);
        let cand = Array1::from(vec![0.3, 0.7]);
        damp_into(&mut old, &cand, 0.0, 1e-300);
        assert_eq!(old, cand);
    }

    #[test]
    fn damping_interpolates_in_log_space() {
        let mut old = Array1::from(vec![0.5, 0.5]);
        let cand = Array1::from(vec![0.9, 0.1]);
        damp_into(&mut old, &cand, 0.5, 1e-300);
        let a = (0.9f64 * 0.5).sqrt();
        let b = (0.1f64 * 0.5).sqrt();
        assert_abs_diff_eq!(old[0], a / (a + b), epsilon = 1e-15);
    }
}
