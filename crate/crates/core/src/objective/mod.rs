//! Objectives over the factorized posterior and over region coordinates.

mod bethe;
mod posterior;

pub use bethe::{bethe_free_energy, local_adjusted_objective};
pub use posterior::{
    adjusted_vfe, epistemic_priors, global_vfe, posterior_marginals, posterior_marginals_with, EpistemicPriors,
    FactorizedPosterior, PosteriorMarginals, SliceMarginals,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::coords::Coordinates;
use crate::error::Error;
use posterior::h;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    Marginal,
    Planning,
    MaxAmb,
    #[default]
    ActiveInference,
}

impl InferenceMode {
    pub const ALL: [InferenceMode; 4] =
        [InferenceMode::Marginal, InferenceMode::Planning, InferenceMode::MaxAmb, InferenceMode::ActiveInference];

    pub fn name(self) -> &'static str {
        match self {
            InferenceMode::Marginal => "marginal",
            InferenceMode::Planning => "planning",
            InferenceMode::MaxAmb => "maxamb",
            InferenceMode::ActiveInference => "active-inference",
        }
    }
}

impl fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        InferenceMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

/// An objective value with its additive breakdown.
///
/// `entropy_terms` hold already-weighted contributions, so
/// `total = Σ kl_terms + Σ entropy_terms + correction`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveReport {
    pub total: f64,
    pub kl_terms: BTreeMap<String, f64>,
    pub entropy_terms: BTreeMap<String, f64>,
    pub correction: f64,
    pub mode: InferenceMode,
    /// Observation-side correction evaluated as `E_{q_y}[−log r]`.
    pub channel_form: Option<f64>,
    /// `channel_form` minus the entropy-difference form.
    pub channel_gap: Option<f64>,
}

impl ObjectiveReport {
    /// `Σ kl_terms + Σ entropy_terms + correction`, recomputed.
    pub fn recomposed(&self) -> f64 {
        self.kl_terms.values().sum::<f64>() + self.entropy_terms.values().sum::<f64>() + self.correction
    }

    /// Flat ordered key/value view.
    pub fn flatten(&self) -> BTreeMap<String, serde_json::Value> {
        let mut out = BTreeMap::new();
        out.insert("total".to_string(), num(self.total));
        out.insert("correction".to_string(), num(self.correction));
        out.insert("mode".to_string(), serde_json::Value::from(self.mode.name()));
        for (k, v) in &self.kl_terms {
            out.insert(format!("kl.{k}"), num(*v));
        }
        for (k, v) in &self.entropy_terms {
            out.insert(format!("entropy.{k}"), num(*v));
        }
        if let Some(v) = self.channel_form {
            out.insert("channel_form".to_string(), num(v));
        }
        if let Some(v) = self.channel_gap {
            out.insert("channel_gap".to_string(), num(v));
        }
        out
    }
}

/// JSON number, or a string for non-finite values.
pub(crate) fn num(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or_else(|| serde_json::Value::String(v.to_string()))
}

/// The entropy correction of `mode` from enumerated posterior marginals.
pub fn entropy_correction_posterior(marg: &PosteriorMarginals, mode: InferenceMode) -> f64 {
    if mode == InferenceMode::Marginal {
        return 0.0;
    }
    marg.slices
        .iter()
        .map(|s| {
            let trip = s.trip();
            let pair = trip.sum_axis(Axis(0));
            let h_pair = h(&pair);
            match mode {
                InferenceMode::Marginal => 0.0,
                InferenceMode::Planning => h_pair - h(&pair.sum_axis(Axis(1))),
                InferenceMode::MaxAmb => h_pair - h(&trip),
                InferenceMode::ActiveInference => {
                    let yxt = s.yxtheta();
                    h_pair - h(&trip) + h(&yxt) - h(&yxt.sum_axis(Axis(0)))
                }
            }
        })
        .sum()
}

/// The entropy correction of `mode` read directly off region coordinates.
pub fn entropy_correction_coords(coords: &Coordinates, mode: InferenceMode) -> f64 {
    if mode == InferenceMode::Marginal {
        return 0.0;
    }
    coords
        .slices
        .iter()
        .map(|s| {
            let h_pair = h(&s.q_pair);
            match mode {
                InferenceMode::Marginal => 0.0,
                InferenceMode::Planning => h_pair - h(&s.q_pair.sum_axis(Axis(1))),
                InferenceMode::MaxAmb => h_pair - h(&s.q_trip),
                InferenceMode::ActiveInference => h_pair - h(&s.q_trip) + h(&s.q_y) - h(&s.q_sep),
            }
        })
        .sum()
}

/// Either source of marginals for [`entropy_correction`].
pub enum CorrectionSource<'a> {
    Posterior(&'a PosteriorMarginals),
    Coords(&'a Coordinates),
}

pub fn entropy_correction(src: CorrectionSource<'_>, mode: InferenceMode) -> f64 {
    match src {
        CorrectionSource::Posterior(m) => entropy_correction_posterior(m, mode),
        CorrectionSource::Coords(c) => entropy_correction_coords(c, mode),
    }
}

/// `−Σ_t E_q[log p̃(u_t) + log p̃(x_t) + log p̃(y_t, x_t)]` from the epistemic
/// priors, or with `consolidated` the state and observation priors replaced
/// by `p̃(x_t, θ)`.
pub fn expected_log_prior_penalty(marg: &PosteriorMarginals, priors: &[EpistemicPriors], consolidated: bool) -> f64 {
    let mut total = 0.0;
    for (s, p) in marg.slices.iter().zip(priors) {
        let qu = s.u();
        for (u, q) in qu.iter().enumerate() {
            total -= q * p.p_tilde_u[u].ln();
        }
        if consolidated {
            let xth = s.xtheta();
            for ((x, th), q) in xth.indexed_iter() {
                total -= q * p.p_tilde_xtheta[[x, th]].ln();
            }
        } else {
            let yx = s.yx();
            let qx = yx.sum_axis(Axis(0));
            for (x, q) in qx.iter().enumerate() {
                total -= q * p.p_tilde_x[x].ln();
            }
            for ((y, x), q) in yx.indexed_iter() {
                total -= q * p.p_tilde_yx[[y, x]].ln();
            }
        }
    }
    total
}
