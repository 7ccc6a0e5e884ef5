//! The tabular biased generative model
//!
//! ```text
//! p(y, x, θ, u) ∝ p(θ) p(x₀) Π_t p(y_t | x_t, θ) p(x_t | x_{t-1}, u_t, θ) p(u_t) p̂_x(x_t) p̂_y(y_t)
//! ```
//!
//! Likelihood and dynamics are shared across time slices; action priors and
//! goal priors are given per slice. Goal priors are stored unnormalized.

mod document;
mod graph;

pub use document::{parse_model, serialize_model, CardsDocument, ModelDocument};
pub use graph::{build_factor_graph, Factor, FactorGraph, FactorKind, Variable};

use ndarray::{Array1, Array2, Array3, Array4, Axis};

use crate::error::{Error, Result};

/// Column sums of conditional tensors must be within this of one.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Default floor applied to conditional tensors at load time.
pub const DEFAULT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cardinalities {
    pub n_x: usize,
    pub n_y: usize,
    pub n_u: usize,
    pub n_theta: usize,
    pub horizon: usize,
}

impl Cardinalities {
    pub fn new(n_x: usize, n_y: usize, n_u: usize, n_theta: usize, horizon: usize) -> Result<Self> {
        let cards = Cardinalities {
            n_x,
            n_y,
            n_u,
            n_theta,
            horizon,
        };
        cards.validate()?;
        Ok(cards)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_x", self.n_x),
            ("n_y", self.n_y),
            ("n_u", self.n_u),
            ("n_theta", self.n_theta),
            ("horizon", self.horizon),
        ] {
            if v == 0 {
                return Err(Error::InvalidCardinalities(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Number of joint configurations `|Y|^T |X|^{T+1} |U|^T D_Θ`.
    pub fn joint_size(&self) -> u128 {
        let t = self.horizon as u32;
        (self.n_y as u128).saturating_pow(t)
            .saturating_mul((self.n_x as u128).saturating_pow(t + 1))
            .saturating_mul((self.n_u as u128).saturating_pow(t))
            .saturating_mul(self.n_theta as u128)
    }
}

/// Validated generative model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub cards: Cardinalities,
    /// `p(θ)`, shape `[Θ]`.
    pub prior_theta: Array1<f64>,
    /// `p(x₀)`, shape `[X]`.
    pub prior_x0: Array1<f64>,
    /// `p(y | x, θ)`, shape `[Y, X, Θ]`.
    pub likelihood: Array3<f64>,
    /// `p(x_t | x_{t-1}, θ, u)`, shape `[X_next, X_prev, Θ, U]`.
    pub dynamics: Array4<f64>,
    /// `p(u_t)`, shape `[T, U]`.
    pub action_prior: Array2<f64>,
    /// `p̂_x(x_t)`, shape `[T, X]`, unnormalized.
    pub goal_x: Array2<f64>,
    /// `p̂_y(y_t)`, shape `[T, Y]`, unnormalized.
    pub goal_y: Array2<f64>,
}

impl DiscreteModel {
    /// Builds a model from a parsed document with the default floor.
    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        build_model(doc, DEFAULT_FLOOR)
    }

    /// Re-validates all invariants.
    pub fn validate(&self) -> Result<()> {
        let c = self.cards;
        c.validate()?;
        check_shape("prior_theta", self.prior_theta.shape(), &[c.n_theta])?;
        check_shape("prior_x0", self.prior_x0.shape(), &[c.n_x])?;
        check_shape("likelihood", self.likelihood.shape(), &[c.n_y, c.n_x, c.n_theta])?;
        check_shape("dynamics", self.dynamics.shape(), &[c.n_x, c.n_x, c.n_theta, c.n_u])?;
        check_shape("action_prior", self.action_prior.shape(), &[c.horizon, c.n_u])?;
        check_shape("goal_x", self.goal_x.shape(), &[c.horizon, c.n_x])?;
        check_shape("goal_y", self.goal_y.shape(), &[c.horizon, c.n_y])?;

        for (name, data) in [
            ("prior_theta", self.prior_theta.view().into_dyn()),
            ("prior_x0", self.prior_x0.view().into_dyn()),
            ("likelihood", self.likelihood.view().into_dyn()),
            ("dynamics", self.dynamics.view().into_dyn()),
            ("action_prior", self.action_prior.view().into_dyn()),
            ("goal_x", self.goal_x.view().into_dyn()),
            ("goal_y", self.goal_y.view().into_dyn()),
        ] {
            check_nonnegative(name, data.iter().copied())?;
        }

        check_stochastic("prior_theta", column_deviation(self.prior_theta.view().insert_axis(Axis(1)), 0))?;
        check_stochastic("prior_x0", column_deviation(self.prior_x0.view().insert_axis(Axis(1)), 0))?;
        check_stochastic("likelihood", column_deviation(self.likelihood.view(), 0))?;
        check_stochastic("dynamics", column_deviation(self.dynamics.view(), 0))?;
        check_stochastic("action_prior", column_deviation(self.action_prior.view(), 1))?;

        for (name, goals) in [("goal_x", &self.goal_x), ("goal_y", &self.goal_y)] {
            for (t, row) in goals.outer_iter().enumerate() {
                if !row.iter().any(|&v| v > 0.0) {
                    return Err(Error::ZeroGoal {
                        field: name.to_string(),
                        t: t + 1,
                    });
                }
            }
        }
        Ok(())
    }

    /// Applies `max(p, floor)` to likelihood and dynamics and renormalizes
    /// each column.
    pub fn apply_floor(&mut self, floor: f64) {
        if floor <= 0.0 {
            return;
        }
        floor_columns(&mut self.likelihood.view_mut().into_dyn(), floor);
        floor_columns(&mut self.dynamics.view_mut().into_dyn(), floor);
    }

    /// Goal vector on states at slice `t` (1-based).
    pub fn goal_x_at(&self, t: usize) -> ndarray::ArrayView1<'_, f64> {
        self.goal_x.row(t - 1)
    }

    pub fn goal_y_at(&self, t: usize) -> ndarray::ArrayView1<'_, f64> {
        self.goal_y.row(t - 1)
    }

    pub fn action_prior_at(&self, t: usize) -> ndarray::ArrayView1<'_, f64> {
        self.action_prior.row(t - 1)
    }

    /// A model with every factor uniform and all-ones goals.
    pub fn uniform(cards: Cardinalities) -> Result<Self> {
        cards.validate()?;
        let Cardinalities {
            n_x,
            n_y,
            n_u,
            n_theta,
            horizon,
        } = cards;
        let model = DiscreteModel {
            cards,
            prior_theta: Array1::from_elem(n_theta, 1.0 / n_theta as f64),
            prior_x0: Array1::from_elem(n_x, 1.0 / n_x as f64),
            likelihood: Array3::from_elem((n_y, n_x, n_theta), 1.0 / n_y as f64),
            dynamics: Array4::from_elem((n_x, n_x, n_theta, n_u), 1.0 / n_x as f64),
            action_prior: Array2::from_elem((horizon, n_u), 1.0 / n_u as f64),
            goal_x: Array2::ones((horizon, n_x)),
            goal_y: Array2::ones((horizon, n_y)),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Validates a parsed document and builds the model, flooring conditional
/// tensors at `floor` (0 disables the floor).
pub fn build_model(doc: &ModelDocument, floor: f64) -> Result<DiscreteModel> {
    let mut model = doc.to_model_unchecked()?;
    model.validate()?;
    model.apply_floor(floor);
    Ok(model)
}

fn check_shape(field: &str, found: &[usize], expected: &[usize]) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch {
            field: field.to_string(),
            expected: format!("{expected:?}"),
            found: format!("{found:?}"),
        });
    }
    Ok(())
}

fn check_nonnegative(field: &str, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::NegativeEntry {
                field: field.to_string(),
                value: v,
            });
        }
    }
    Ok(())
}

fn check_stochastic(field: &str, deviation: f64) -> Result<()> {
    if deviation > STOCHASTIC_TOL {
        return Err(Error::NonStochastic {
            field: field.to_string(),
            deviation,
        });
    }
    Ok(())
}

/// Worst `|Σ_axis p − 1|` over all columns.
fn column_deviation<D: ndarray::Dimension + ndarray::RemoveAxis>(
    a: ndarray::ArrayView<'_, f64, D>,
    axis: usize,
) -> f64 {
    a.sum_axis(Axis(axis))
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

fn floor_columns(a: &mut ndarray::ArrayViewMutD<'_, f64>, floor: f64) {
    a.mapv_inplace(|v| v.max(floor));
    for mut lane in a.lanes_mut(Axis(0)) {
        let s: f64 = lane.sum();
        lane.mapv_inplace(|v| v / s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_doc() -> ModelDocument {
        let cards = Cardinalities::new(2, 2, 2, 1, 2).unwrap();
        let mut m = DiscreteModel::uniform(cards).unwrap();
        m.dynamics.fill(0.0);
        for x in 0..2 {
            for u in 0..2 {
                m.dynamics[[x, x, 0, u]] = 1.0;
            }
        }
        ModelDocument::from_model(&m)
    }

    #[test]
    fn identity_dynamics_model_is_valid() {
        let m = build_model(&identity_doc(), 0.0).unwrap();
        assert_eq!(m.dynamics[[1, 1, 0, 0]], 1.0);
        assert_eq!(m.likelihood[[0, 1, 0]], 0.5);
    }

    #[test]
    fn likelihood_column_short_of_one_is_rejected() {
        let mut doc = identity_doc();
        doc.likelihood[0][0][0] = 0.4;
        match build_model(&doc, 0.0) {
            Err(Error::NonStochastic { field, deviation }) => {
                assert_eq!(field, "likelihood");
                assert!((deviation - 0.1).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_and_zero_goal_are_rejected() {
        let mut doc = identity_doc();
        doc.goal_x[1][0] = -1.0;
        assert!(matches!(build_model(&doc, 0.0), Err(Error::NegativeEntry { .. })));

        let mut doc = identity_doc();
        doc.goal_y[0] = vec![0.0, 0.0];
        assert!(matches!(
            build_model(&doc, 0.0),
            Err(Error::ZeroGoal { t: 1, .. })
        ));
    }

    #[test]
    fn dimension_mismatch_names_field() {
        let mut doc = identity_doc();
        doc.prior_x0.push(0.0);
        let err = build_model(&doc, 0.0).unwrap_err();
        assert!(err.to_string().contains("prior_x0"), "{err}");
    }

    #[test]
    fn zero_cardinality_is_rejected() {
        assert!(Cardinalities::new(0, 1, 1, 1, 1).is_err());
        assert!(Cardinalities::new(1, 1, 1, 1, 0).is_err());
    }

    #[test]
    fn tmaze_model_validates_by_independent_column_sums() {
        let m = crate::sampling::tmaze_model(0.9, 2);
        // independent check of every column sum
        for x in 0..4 {
            for th in 0..2 {
                let s: f64 = (0..3).map(|y| m.likelihood[[y, x, th]]).sum();
                assert!((s - 1.0).abs() < 1e-12);
                for u in 0..2 {
                    let s: f64 = (0..4).map(|xn| m.dynamics[[xn, x, th, u]]).sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
        m.validate().unwrap();
        assert_eq!(m.cards, Cardinalities::new(4, 3, 2, 2, 2).unwrap());
    }

    #[test]
    fn floor_keeps_columns_stochastic() {
        let mut m = build_model(&identity_doc(), 0.0).unwrap();
        m.apply_floor(1e-6);
        assert!(m.dynamics.iter().all(|&v| v >= 1e-6 * 0.99));
        m.validate().unwrap();
    }
}
