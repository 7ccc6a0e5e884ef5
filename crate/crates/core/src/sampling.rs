//! Seeded random models and posteriors, plus the small hand-built fixtures
//! used by the tests, benches and the `validate` command.

use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::model::{Cardinalities, DiscreteModel};
use crate::objective::FactorizedPosterior;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fills `a` with Dirichlet(1) columns along axis 0.
fn dirichlet_columns<D>(rng: &mut impl Rng, a: &mut ndarray::Array<f64, D>)
where
    D: ndarray::Dimension + ndarray::RemoveAxis,
{
    a.mapv_inplace(|_| rng.sample::<f64, _>(Exp1) + 1e-3);
    for mut lane in a.lanes_mut(Axis(0)) {
        let s = lane.sum();
        lane.mapv_inplace(|v| v / s);
    }
}

fn dirichlet(rng: &mut impl Rng, n: usize) -> Array1<f64> {
    let mut a = Array1::zeros(n);
    dirichlet_columns(rng, &mut a);
    a
}

/// Random strictly-positive model. Goals are drawn from `[0.25, 4)`.
pub fn random_model(cards: Cardinalities, seed: u64, floor: f64) -> DiscreteModel {
    let mut r = rng(seed);
    let Cardinalities { n_x, n_y, n_u, n_theta, horizon } = cards;
    let mut likelihood = Array3::zeros((n_y, n_x, n_theta));
    dirichlet_columns(&mut r, &mut likelihood);
    let mut dynamics = Array4::zeros((n_x, n_x, n_theta, n_u));
    dirichlet_columns(&mut r, &mut dynamics);
    let mut action_prior = Array2::zeros((n_u, horizon));
    dirichlet_columns(&mut r, &mut action_prior);
    let goal = |r: &mut ChaCha8Rng, n: usize| {
        Array2::from_shape_fn((horizon, n), |_| 0.25 * 16f64.powf(r.random::<f64>()))
    };
    let goal_x = goal(&mut r, n_x);
    let goal_y = goal(&mut r, n_y);
    let mut m = DiscreteModel {
        cards,
        prior_theta: dirichlet(&mut r, n_theta),
        prior_x0: dirichlet(&mut r, n_x),
        likelihood,
        dynamics,
        action_prior: action_prior.reversed_axes().as_standard_layout().to_owned(),
        goal_x,
        goal_y,
    };
    m.apply_floor(floor);
    m.validate().expect("random model is valid");
    m
}

/// Random posterior in the factorized family, shared across slices.
pub fn random_posterior(cards: Cardinalities, seed: u64) -> FactorizedPosterior {
    let mut r = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let Cardinalities { n_x, n_y, n_u, n_theta, horizon } = cards;
    let mut x0_theta = Array2::zeros((n_x * n_theta, 1));
    dirichlet_columns(&mut r, &mut x0_theta);
    let q_x0_theta = x0_theta.into_shape_with_order((n_x, n_theta)).unwrap();
    let mut q_y_cond = Array3::zeros((n_y, n_x, n_theta));
    dirichlet_columns(&mut r, &mut q_y_cond);
    let mut q_x_cond = Array4::zeros((n_x, n_x, n_u, n_theta));
    dirichlet_columns(&mut r, &mut q_x_cond);
    let mut q_u_cond = Array3::zeros((n_u, n_x, n_theta));
    dirichlet_columns(&mut r, &mut q_u_cond);
    FactorizedPosterior {
        horizon,
        q_x0_theta,
        q_y_cond,
        q_x_cond,
        q_u_cond,
    }
}

/// Cardinalities for the identity suites: `(|X|,|Y|,|U|,D_Θ) ≤ (3,3,2,2)`,
/// `T ∈ {1,2,3}`, drawn from `seed`.
pub fn suite_cards(seed: u64) -> Cardinalities {
    let mut r = rng(seed.wrapping_mul(0x2545_f491_4f6c_dd1d));
    Cardinalities {
        n_x: r.random_range(1..=3),
        n_y: r.random_range(1..=3),
        n_u: r.random_range(1..=2),
        n_theta: r.random_range(1..=2),
        horizon: r.random_range(1..=3),
    }
}

/// Four-state T-maze: centre (0), cue (1), left arm (2), right arm (3).
/// `θ` selects the rewarded arm; the cue reports it with probability
/// `cue_validity`. Action 0 goes centre→cue→left, action 1 goes to the right
/// arm; arms are absorbing.
pub fn tmaze_model(cue_validity: f64, horizon: usize) -> DiscreteModel {
    let cards = Cardinalities::new(4, 3, 2, 2, horizon).expect("valid cards");
    let mut m = DiscreteModel::uniform(cards).expect("uniform");
    m.prior_x0 = Array1::from(vec![1.0, 0.0, 0.0, 0.0]);
    m.dynamics.fill(0.0);
    let next = |x: usize, u: usize| match (x, u) {
        (0, 0) => 1,
        (1, 0) => 2,
        (0, 1) | (1, 1) => 3,
        (x, _) => x,
    };
    for x in 0..4 {
        for th in 0..2 {
            for u in 0..2 {
                m.dynamics[[next(x, u), x, th, u]] = 1.0;
            }
        }
    }
    m.likelihood.fill(0.0);
    let v = cue_validity;
    for th in 0..2 {
        m.likelihood[[0, 0, th]] = 1.0;
        // cue: y=1 hints "left", y=2 hints "right"
        m.likelihood[[1, 1, th]] = if th == 0 { v } else { 1.0 - v };
        m.likelihood[[2, 1, th]] = if th == 0 { 1.0 - v } else { v };
        // arms: y=1 reward, y=2 no reward
        let left_rewarded = th == 0;
        for (arm, rewarded) in [(2, left_rewarded), (3, !left_rewarded)] {
            m.likelihood[[1, arm, th]] = if rewarded { v } else { 1.0 - v };
            m.likelihood[[2, arm, th]] = if rewarded { 1.0 - v } else { v };
        }
    }
    for t in 0..horizon {
        m.goal_y.row_mut(t).assign(&Array1::from(vec![1.0, 3.0, 1.0 / 3.0]));
    }
    m.validate().expect("t-maze is valid");
    m
}

/// One-step ambiguity task. From state 0, action 0 leads to state 1 whose
/// observation is uniform whatever `θ`; action 1 leads to state 2 where
/// `y = θ` deterministically. Goals are flat.
pub fn ambiguity_model() -> DiscreteModel {
    let cards = Cardinalities::new(3, 2, 2, 2, 1).expect("valid cards");
    let mut m = DiscreteModel::uniform(cards).expect("uniform");
    m.prior_x0 = Array1::from(vec![1.0, 0.0, 0.0]);
    m.dynamics.fill(0.0);
    for th in 0..2 {
        m.dynamics[[1, 0, th, 0]] = 1.0;
        m.dynamics[[2, 0, th, 1]] = 1.0;
        for u in 0..2 {
            m.dynamics[[1, 1, th, u]] = 1.0;
            m.dynamics[[2, 2, th, u]] = 1.0;
        }
        m.likelihood[[0, 2, th]] = if th == 0 { 1.0 } else { 0.0 };
        m.likelihood[[1, 2, th]] = if th == 0 { 0.0 } else { 1.0 };
    }
    m.validate().expect("ambiguity model is valid");
    m
}

/// Two-state deterministic MDP over `horizon` steps: action 0 stays, action
/// 1 moves state 0 to state 1 (state 1 is absorbing). The goal at `T` puts
/// weight `goal` on state 1.
pub fn two_state_mdp(horizon: usize, goal: f64) -> DiscreteModel {
    let cards = Cardinalities::new(2, 1, 2, 1, horizon).expect("valid cards");
    let mut m = DiscreteModel::uniform(cards).expect("uniform");
    m.prior_x0 = Array1::from(vec![1.0, 0.0]);
    m.dynamics.fill(0.0);
    m.dynamics[[0, 0, 0, 0]] = 1.0;
    m.dynamics[[1, 0, 0, 1]] = 1.0;
    m.dynamics[[1, 1, 0, 0]] = 1.0;
    m.dynamics[[1, 1, 0, 1]] = 1.0;
    m.goal_x[[horizon - 1, 1]] = goal;
    m.validate().expect("mdp is valid");
    m
}

/// Model whose only likelihood slice is `[[0.9, 0.5], [0.1, 0.5]]`
/// (`|Y| = |X| = 2`, `D_Θ = 1`), which is not of the form `a(y) b(x)`.
pub fn nonseparable_model() -> DiscreteModel {
    let cards = Cardinalities::new(2, 2, 1, 1, 1).expect("valid cards");
    let mut m = DiscreteModel::uniform(cards).expect("uniform");
    m.likelihood[[0, 0, 0]] = 0.9;
    m.likelihood[[1, 0, 0]] = 0.1;
    m.likelihood[[0, 1, 0]] = 0.5;
    m.likelihood[[1, 1, 0]] = 0.5;
    m
}

/// Model with a likelihood that factors as `a(y) b(x, θ)`; since columns are
/// normalized this means every column equals `a`.
pub fn separable_model() -> DiscreteModel {
    let cards = Cardinalities::new(2, 3, 1, 2, 1).expect("valid cards");
    let mut m = DiscreteModel::uniform(cards).expect("uniform");
    let a = [0.2, 0.3, 0.5];
    for x in 0..2 {
        for th in 0..2 {
            for (y, &p) in a.iter().enumerate() {
                m.likelihood[[y, x, th]] = p;
            }
        }
    }
    m
}
