//! Region-extended Bethe coordinates.
//!
//! Per slice `t` the coordinates hold the observation belief
//! `q_y(y, x_t, θ)`, the dynamics belief `q_dyn(x_t, x_{t-1}, θ, u_t)`, the
//! region beliefs `q_sep(x_t, θ)`, `q_trip(x_t, x_{t-1}, u_t)`,
//! `q_pair(x_{t-1}, u_t)`, the channel `r(y | x_t, θ)` and the singletons on
//! `x_t`, `y_t`, `u_t`. `q_θ` and `q_{x0}` are global. Unary factor beliefs
//! are identified with the adjacent singleton and are not stored.
//!
//! All tensors are row-major with the innermost index varying fastest.

mod measures;
mod snapshot;

pub use measures::{cross_entropy, entropy, kl};
pub(crate) use measures::{entropy_unchecked, kl_unchecked, neg_plogq, plogp};
pub use snapshot::{CoordinatesDocument, SliceDocument};

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3, Array4, Axis, Zip};

use crate::error::{Error, Result};
use crate::model::{Cardinalities, DiscreteModel, FactorGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct SliceCoords {
    /// `[Y, X, Θ]`
    pub q_y: Array3<f64>,
    /// `[X_t, X_{t-1}, Θ, U]`
    pub q_dyn: Array4<f64>,
    /// `[X, Θ]`
    pub q_sep: Array2<f64>,
    /// `[X_t, X_{t-1}, U]`
    pub q_trip: Array3<f64>,
    /// `[X_{t-1}, U]`
    pub q_pair: Array2<f64>,
    /// `[Y, X, Θ]`, each `(x, θ)` column sums to one over `y`.
    pub r_chan: Array3<f64>,
    pub q_x: Array1<f64>,
    pub q_y_single: Array1<f64>,
    pub q_u: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coordinates {
    pub cards: Cardinalities,
    /// Index `t - 1` holds slice `t`.
    pub slices: Vec<SliceCoords>,
    pub q_theta: Array1<f64>,
    pub q_x0: Array1<f64>,
}

/// Lagrange multipliers of the stationary scheme, gauge-fixed so that the
/// minimum entry of each table is zero, together with the chain messages
/// the dynamics update consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSet {
    /// `λ_y(y_t)` per slice, `[Y]`; realized as `−log p̂_y`.
    pub lambda_y: Vec<Array1<f64>>,
    /// `Λ_{xθ}(x_t, θ)` per slice, `[X, Θ]`.
    pub lambda_xtheta: Vec<Array2<f64>>,
    /// `Λ_trip(x_t, x_{t-1}, u_t)` per slice, `[X, X, U]`.
    pub lambda_trip: Vec<Array3<f64>>,
    /// Message into `(x_t, θ)` from the dynamics factor of slice `t`;
    /// index 0 holds the prior `p(x₀) p(θ)`. Length `T + 1`.
    pub fwd: Vec<Array2<f64>>,
    /// Message into `(x_t, θ)` from the dynamics factor of slice `t + 1`;
    /// the last entry is flat. Length `T + 1`.
    pub bwd: Vec<Array2<f64>>,
    /// Message `Σ_y p(y|x,θ) r(y|x,θ) p̂_y(y)` from the observation block
    /// into the separator, per slice.
    pub obs: Vec<Array2<f64>>,
}

impl MultiplierSet {
    pub fn new(model: &DiscreteModel) -> Self {
        let c = model.cards;
        let flat2 = || Array2::from_elem((c.n_x, c.n_theta), 1.0 / (c.n_x * c.n_theta) as f64);
        let mut fwd = vec![flat2(); c.horizon + 1];
        fwd[0] = prior_product(model);
        MultiplierSet {
            lambda_y: (1..=c.horizon)
                .map(|t| model.goal_y_at(t).mapv(|g| -g.max(f64::MIN_POSITIVE).ln()))
                .collect(),
            lambda_xtheta: vec![Array2::zeros((c.n_x, c.n_theta)); c.horizon],
            lambda_trip: vec![Array3::zeros((c.n_x, c.n_x, c.n_u)); c.horizon],
            fwd,
            bwd: vec![flat2(); c.horizon + 1],
            obs: vec![flat2(); c.horizon],
        }
    }

    /// Largest absolute entry over all multiplier tables; `∞` if any entry
    /// is not finite.
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for v in self.lambda_xtheta.iter().flat_map(|a| a.iter())
            .chain(self.lambda_trip.iter().flat_map(|a| a.iter()))
        {
            if !v.is_finite() {
                return f64::INFINITY;
            }
            m = m.max(v.abs());
        }
        m
    }
}

/// `p(x₀) p(θ)` as an `[X, Θ]` table.
pub fn prior_product(model: &DiscreteModel) -> Array2<f64> {
    let c = model.cards;
    Array2::from_shape_fn((c.n_x, c.n_theta), |(x, th)| {
        model.prior_x0[x] * model.prior_theta[th]
    })
}

#[derive(Debug, Clone)]
pub enum InitStrategy {
    Uniform,
    PriorSeeded,
    Given(Coordinates),
}

impl SliceCoords {
    fn uniform(c: &Cardinalities) -> Self {
        let (nx, ny, nu, nth) = (c.n_x, c.n_y, c.n_u, c.n_theta);
        SliceCoords {
            q_y: Array3::from_elem((ny, nx, nth), 1.0 / (ny * nx * nth) as f64),
            q_dyn: Array4::from_elem((nx, nx, nth, nu), 1.0 / (nx * nx * nth * nu) as f64),
            q_sep: Array2::from_elem((nx, nth), 1.0 / (nx * nth) as f64),
            q_trip: Array3::from_elem((nx, nx, nu), 1.0 / (nx * nx * nu) as f64),
            q_pair: Array2::from_elem((nx, nu), 1.0 / (nx * nu) as f64),
            r_chan: Array3::from_elem((ny, nx, nth), 1.0 / ny as f64),
            q_x: Array1::from_elem(nx, 1.0 / nx as f64),
            q_y_single: Array1::from_elem(ny, 1.0 / ny as f64),
            q_u: Array1::from_elem(nu, 1.0 / nu as f64),
        }
    }

    /// `Σ_y q_y`, the separator as seen from the observation block.
    pub fn sep_from_obs(&self) -> Array2<f64> {
        self.q_y.sum_axis(Axis(0))
    }

    /// `Σ_{x_{t-1}, u} q_dyn`, the separator as seen from the dynamics block.
    pub fn sep_from_dyn(&self) -> Array2<f64> {
        self.q_dyn.sum_axis(Axis(3)).sum_axis(Axis(1))
    }
}

impl Coordinates {
    pub fn uniform(cards: Cardinalities) -> Self {
        Coordinates {
            cards,
            slices: (0..cards.horizon).map(|_| SliceCoords::uniform(&cards)).collect(),
            q_theta: Array1::from_elem(cards.n_theta, 1.0 / cards.n_theta as f64),
            q_x0: Array1::from_elem(cards.n_x, 1.0 / cards.n_x as f64),
        }
    }

    pub fn slice(&self, t: usize) -> &SliceCoords {
        &self.slices[t - 1]
    }

    pub fn slice_mut(&mut self, t: usize) -> &mut SliceCoords {
        &mut self.slices[t - 1]
    }

    /// Singleton on `x_{t-1}`; `q_{x0}` for `t = 1`.
    pub fn q_x_prev(&self, t: usize) -> &Array1<f64> {
        if t == 1 {
            &self.q_x0
        } else {
            &self.slices[t - 2].q_x
        }
    }

    /// Checks shapes, nonnegativity and normalization within `tol`.
    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let c = self.cards;
        if self.slices.len() != c.horizon {
            return Err(Error::Normalization(format!(
                "expected {} slices, found {}",
                c.horizon,
                self.slices.len()
            )));
        }
        let mut tables: Vec<(String, Vec<f64>, usize)> = vec![
            ("q_theta".into(), self.q_theta.to_vec(), 1),
            ("q_x0".into(), self.q_x0.to_vec(), 1),
        ];
        for (i, s) in self.slices.iter().enumerate() {
            let t = i + 1;
            let expect = [
                (s.q_y.shape(), vec![c.n_y, c.n_x, c.n_theta]),
                (s.q_dyn.shape(), vec![c.n_x, c.n_x, c.n_theta, c.n_u]),
                (s.q_sep.shape(), vec![c.n_x, c.n_theta]),
                (s.q_trip.shape(), vec![c.n_x, c.n_x, c.n_u]),
                (s.q_pair.shape(), vec![c.n_x, c.n_u]),
                (s.r_chan.shape(), vec![c.n_y, c.n_x, c.n_theta]),
            ];
            for (found, want) in expect {
                if found != want.as_slice() {
                    return Err(Error::DimensionMismatch {
                        field: format!("coordinates slice {t}"),
                        expected: format!("{want:?}"),
                        found: format!("{found:?}"),
                    });
                }
            }
            tables.push((format!("q_y[{t}]"), s.q_y.iter().copied().collect(), 1));
            tables.push((format!("q_dyn[{t}]"), s.q_dyn.iter().copied().collect(), 1));
            tables.push((format!("q_sep[{t}]"), s.q_sep.iter().copied().collect(), 1));
            tables.push((format!("q_trip[{t}]"), s.q_trip.iter().copied().collect(), 1));
            tables.push((format!("q_pair[{t}]"), s.q_pair.iter().copied().collect(), 1));
            tables.push((format!("q_x[{t}]"), s.q_x.to_vec(), 1));
            tables.push((format!("q_y_single[{t}]"), s.q_y_single.to_vec(), 1));
            tables.push((format!("q_u[{t}]"), s.q_u.to_vec(), 1));
            // r: every (x, θ) column sums to one
            tables.push((
                format!("r_chan[{t}]"),
                s.r_chan.iter().copied().collect(),
                c.n_x * c.n_theta,
            ));
        }
        for (name, v, groups) in tables {
            if v.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::Normalization(format!("{name} has a negative or non-finite entry")));
            }
            let dev = if groups == 1 {
                (v.iter().sum::<f64>() - 1.0).abs()
            } else {
                let n_y = v.len() / groups;
                (0..groups)
                    .map(|g| ((0..n_y).map(|y| v[y * groups + g]).sum::<f64>() - 1.0).abs())
                    .fold(0.0, f64::max)
            };
            if dev > tol {
                return Err(Error::Normalization(format!("{name} deviates from unit mass by {dev:e}")));
            }
        }
        Ok(())
    }

    /// Recomputes every singleton from the factor and region beliefs.
    pub fn refresh_singletons(&mut self) {
        for s in &mut self.slices {
            s.q_x = s.q_sep.sum_axis(Axis(1));
            s.q_y_single = s.q_y.sum_axis(Axis(2)).sum_axis(Axis(1));
            s.q_u = s.q_pair.sum_axis(Axis(0));
        }
        if let Some(first) = self.slices.first() {
            self.q_x0 = first.q_pair.sum_axis(Axis(1));
            self.q_theta = first.q_sep.sum_axis(Axis(0));
        }
    }
}

/// Scales `a` to unit mass; returns the mass before scaling.
pub(crate) fn normalize<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> f64 {
    let s = a.sum();
    if s > 0.0 && s.is_finite() {
        a.mapv_inplace(|v| v / s);
    }
    s
}

/// Builds initial coordinates.
///
/// `PriorSeeded` propagates `p(x₀) p(θ)` forward through the dynamics
/// weighted by the action priors, and seeds every factor belief with the
/// resulting predictive joint.
pub fn init_coordinates(model: &DiscreteModel, strategy: InitStrategy) -> Result<Coordinates> {
    let c = model.cards;
    match strategy {
        InitStrategy::Uniform => Ok(Coordinates::uniform(c)),
        InitStrategy::Given(coords) => {
            if coords.cards != c {
                return Err(Error::Normalization("cardinalities differ from the model".into()));
            }
            coords.check_normalized(1e-9)?;
            Ok(coords)
        }
        InitStrategy::PriorSeeded => {
            let mut coords = Coordinates::uniform(c);
            let mut prev = prior_product(model);
            for t in 1..=c.horizon {
                let pu = model.action_prior_at(t);
                let s = coords.slice_mut(t);
                Zip::indexed(&mut s.q_dyn).for_each(|(xn, xp, th, u), v| {
                    *v = model.dynamics[[xn, xp, th, u]] * pu[u] * prev[[xp, th]];
                });
                normalize(&mut s.q_dyn);
                project_regions(&mut coords, t);
                let s = coords.slice_mut(t);
                let pred = s.sep_from_dyn();
                Zip::indexed(&mut s.q_y).for_each(|(y, x, th), v| {
                    *v = model.likelihood[[y, x, th]] * pred[[x, th]];
                });
                normalize(&mut s.q_y);
                s.q_sep = s.sep_from_obs();
                s.r_chan = conditional_channel(&s.q_y, &s.q_sep);
                prev = pred;
            }
            coords.refresh_singletons();
            Ok(coords)
        }
    }
}

/// `r(y | x, θ) = q_y / q_sep`, uniform where `q_sep = 0`.
pub fn conditional_channel(q_y: &Array3<f64>, q_sep: &Array2<f64>) -> Array3<f64> {
    let n_y = q_y.shape()[0];
    Array3::from_shape_fn(q_y.raw_dim(), |(y, x, th)| {
        let s = q_sep[[x, th]];
        if s > 0.0 {
            q_y[[y, x, th]] / s
        } else {
            1.0 / n_y as f64
        }
    })
}

/// Recomputes the region beliefs of slice `t` from its factor beliefs:
/// `q_sep = Σ_y q_y`, `q_trip = Σ_θ q_dyn`, `q_pair = Σ_{x_t} q_trip`.
pub fn project_regions(coords: &mut Coordinates, t: usize) {
    let s = coords.slice_mut(t);
    s.q_sep = s.q_y.sum_axis(Axis(0));
    s.q_trip = s.q_dyn.sum_axis(Axis(2));
    s.q_pair = s.q_trip.sum_axis(Axis(0));
}

/// Max-abs residual per local-consistency constraint, maximised over slices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Residuals(pub BTreeMap<String, f64>);

impl Residuals {
    pub fn max(&self) -> f64 {
        self.0.values().copied().fold(0.0, f64::max)
    }

    pub fn get(&self, key: &str) -> f64 {
        self.0.get(key).copied().unwrap_or(0.0)
    }

    fn record(&mut self, key: &str, value: f64) {
        let e = self.0.entry(key.to_string()).or_insert(0.0);
        *e = e.max(value);
    }
}

fn max_abs_diff<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Local-consistency residuals of the observation, dynamics and unary blocks
/// plus the region projections and the cross-block separator equality.
pub fn consistency_residuals(coords: &Coordinates, graph: &FactorGraph) -> Residuals {
    let mut r = Residuals::default();
    debug_assert_eq!(graph.horizon, coords.cards.horizon);
    for t in 1..=coords.cards.horizon {
        let s = coords.slice(t);
        let obs_sep = s.sep_from_obs();
        let dyn_sep = s.sep_from_dyn();

        // observation block
        r.record("obs.y", max_abs_diff(&s.q_y.sum_axis(Axis(2)).sum_axis(Axis(1)), &s.q_y_single));
        r.record("obs.x", max_abs_diff(&obs_sep.sum_axis(Axis(1)), &s.q_x));
        r.record("obs.theta", max_abs_diff(&obs_sep.sum_axis(Axis(0)), &coords.q_theta));
        r.record("obs.sep", max_abs_diff(&obs_sep, &s.q_sep));

        // dynamics block
        let over_theta = s.q_dyn.sum_axis(Axis(2));
        r.record("dyn.x", max_abs_diff(&dyn_sep.sum_axis(Axis(1)), &s.q_x));
        r.record(
            "dyn.x_prev",
            max_abs_diff(&over_theta.sum_axis(Axis(2)).sum_axis(Axis(0)), coords.q_x_prev(t)),
        );
        r.record("dyn.u", max_abs_diff(&over_theta.sum_axis(Axis(1)).sum_axis(Axis(0)), &s.q_u));
        r.record("dyn.theta", max_abs_diff(&dyn_sep.sum_axis(Axis(0)), &coords.q_theta));
        r.record("dyn.sep", max_abs_diff(&dyn_sep, &s.q_sep));
        r.record("dyn.trip", max_abs_diff(&over_theta, &s.q_trip));
        r.record("trip.pair", max_abs_diff(&s.q_trip.sum_axis(Axis(0)), &s.q_pair));
        r.record("sep.cross", max_abs_diff(&obs_sep, &dyn_sep));
        if t >= 2 {
            let prev_sep = s.q_dyn.sum_axis(Axis(3)).sum_axis(Axis(0));
            r.record("dyn.sep_prev", max_abs_diff(&prev_sep, &coords.slice(t - 1).q_sep));
        }

        // unary factor beliefs are the adjacent singletons themselves
        r.record("unary.u", 0.0);
        r.record("unary.goal_x", 0.0);
        r.record("unary.goal_y", 0.0);
    }
    r
}
