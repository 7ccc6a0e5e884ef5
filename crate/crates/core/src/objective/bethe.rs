//! The Bethe free energy on region coordinates and its mode-adjusted form.

use std::collections::BTreeMap;

use ndarray::Axis;

use super::{entropy_correction_coords, h, InferenceMode, ObjectiveReport};
use crate::coords::{kl_unchecked, neg_plogq, Coordinates};
use crate::model::{DiscreteModel, FactorGraph, FactorKind, Variable};

/// `Σ_a KL(q_a ‖ f_a) + Σ_i (d_i − 1) H(q_i)`.
///
/// Unary factors use the adjacent singleton as their belief. Goal factors
/// are unnormalized and enter as cross-entropies. An infinite KL is reported
/// in the breakdown and propagates to `total`.
pub fn bethe_free_energy(model: &DiscreteModel, coords: &Coordinates, graph: &FactorGraph) -> ObjectiveReport {
    let mut kl_terms = BTreeMap::new();
    for node in &graph.nodes {
        let (key, v) = match node.kind {
            FactorKind::Theta => ("theta".to_string(), kl_unchecked(&coords.q_theta, &model.prior_theta)),
            FactorKind::X0 => ("x0".to_string(), kl_unchecked(&coords.q_x0, &model.prior_x0)),
            FactorKind::Obs(t) => (format!("obs.{t}"), kl_unchecked(&coords.slice(t).q_y, &model.likelihood)),
            FactorKind::Dyn(t) => (format!("dyn.{t}"), kl_unchecked(&coords.slice(t).q_dyn, &model.dynamics)),
            FactorKind::Action(t) => (format!("action.{t}"), kl_unchecked(&coords.slice(t).q_u, model.action_prior_at(t))),
            FactorKind::GoalX(t) => (format!("goal_x.{t}"), kl_unchecked(&coords.slice(t).q_x, model.goal_x_at(t))),
            FactorKind::GoalY(t) => {
                (format!("goal_y.{t}"), kl_unchecked(&coords.slice(t).q_y_single, model.goal_y_at(t)))
            }
        };
        kl_terms.insert(key, v);
    }

    let mut entropy_terms = BTreeMap::new();
    for (i, var) in graph.edges.iter().enumerate() {
        let w = graph.degrees[i] as f64 - 1.0;
        let (key, ent) = match *var {
            Variable::Theta => ("theta".to_string(), h(&coords.q_theta)),
            Variable::X0 => ("x0".to_string(), h(&coords.q_x0)),
            Variable::X(t) => (format!("x.{t}"), h(&coords.slice(t).q_x)),
            Variable::Y(t) => (format!("y.{t}"), h(&coords.slice(t).q_y_single)),
            Variable::U(t) => (format!("u.{t}"), h(&coords.slice(t).q_u)),
        };
        entropy_terms.insert(key, w * ent);
    }

    let total = kl_terms.values().sum::<f64>() + entropy_terms.values().sum::<f64>();
    ObjectiveReport {
        total,
        kl_terms,
        entropy_terms,
        correction: 0.0,
        mode: InferenceMode::Marginal,
        channel_form: None,
        channel_gap: None,
    }
}

/// Bethe free energy plus the correction of `mode` on region coordinates.
///
/// In `ActiveInference` mode the observation-side term is also evaluated in
/// channel form `Σ_t E_{q_y}[−log r]`; `channel_gap` is the channel form
/// minus `Σ_t H[q_y] − H[q_sep]` and vanishes at `r = q_y / q_sep`.
pub fn local_adjusted_objective(
    model: &DiscreteModel,
    coords: &Coordinates,
    graph: &FactorGraph,
    mode: InferenceMode,
) -> ObjectiveReport {
    let mut report = bethe_free_energy(model, coords, graph);
    report.mode = mode;
    report.correction = entropy_correction_coords(coords, mode);
    report.total += report.correction;
    if mode == InferenceMode::ActiveInference {
        let mut channel = 0.0;
        let mut diff = 0.0;
        for s in &coords.slices {
            channel += s.q_y.iter().zip(&s.r_chan).map(|(&q, &r)| neg_plogq(q, r)).sum::<f64>();
            diff += h(&s.q_y) - h(&s.q_y.sum_axis(Axis(0)));
        }
        report.channel_form = Some(channel);
        report.channel_gap = Some(channel - diff);
    }
    report
}
