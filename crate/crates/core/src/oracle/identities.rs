//! Cross-checks of the entropy identities behind the epistemic priors.
//!
//! The left-hand sides go through the epistemic priors and the global
//! objectives; the right-hand sides are entropy differences of slice
//! marginals that this module computes itself by a forward recursion over
//! `q(x_{t-1}, θ)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::DiscreteModel;
use crate::objective::{
    adjusted_vfe, entropy_correction_posterior, epistemic_priors, global_vfe, posterior_marginals, EpistemicPriors,
    FactorizedPosterior, InferenceMode,
};

use super::EnumerationBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IdentityName {
    Thm21,
    LemmaPx,
    LemmaPu,
    LemmaPyx,
    Consolidation,
    PlanningDecomp,
}

impl IdentityName {
    pub const ALL: [IdentityName; 6] = [
        IdentityName::Thm21,
        IdentityName::LemmaPx,
        IdentityName::LemmaPu,
        IdentityName::LemmaPyx,
        IdentityName::Consolidation,
        IdentityName::PlanningDecomp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IdentityName::Thm21 => "thm21",
            IdentityName::LemmaPx => "lemma_px",
            IdentityName::LemmaPu => "lemma_pu",
            IdentityName::LemmaPyx => "lemma_pyx",
            IdentityName::Consolidation => "consolidation",
            IdentityName::PlanningDecomp => "planning_decomp",
        }
    }
}

impl fmt::Display for IdentityName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IdentityName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IdentityName::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown identity `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub name: IdentityName,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Flat `q(x_t, x_{t-1}, u, y, θ)` tables, index
/// `(((xn * X + xp) * U + u) * Y + y) * Θ + θ`.
struct Joint {
    nx: usize,
    ny: usize,
    nu: usize,
    nth: usize,
    slices: Vec<Vec<f64>>,
}

impl Joint {
    fn from_posterior(model: &DiscreteModel, post: &FactorizedPosterior) -> Joint {
        let c = model.cards;
        let (nx, ny, nu, nth) = (c.n_x, c.n_y, c.n_u, c.n_theta);
        let mut prev = vec![0.0; nx * nth];
        for x in 0..nx {
            for th in 0..nth {
                prev[x * nth + th] = post.q_x0_theta[[x, th]];
            }
        }
        let mut slices = Vec::with_capacity(c.horizon);
        for _ in 0..c.horizon {
            let mut tab = vec![0.0; nx * nx * nu * ny * nth];
            let mut next = vec![0.0; nx * nth];
            for xn in 0..nx {
                for xp in 0..nx {
                    for u in 0..nu {
                        for y in 0..ny {
                            for th in 0..nth {
                                let v = prev[xp * nth + th]
                                    * post.q_u_cond[[u, xp, th]]
                                    * post.q_x_cond[[xn, xp, u, th]]
                                    * post.q_y_cond[[y, xn, th]];
                                tab[(((xn * nx + xp) * nu + u) * ny + y) * nth + th] = v;
                                next[xn * nth + th] += v;
                            }
                        }
                    }
                }
            }
            slices.push(tab);
            prev = next;
        }
        Joint { nx, ny, nu, nth, slices }
    }

    /// Marginal keeping the axes selected by `keep`, in the order
    /// `[x_t, x_{t-1}, u, y, θ]`, flattened.
    fn marginal(&self, t: usize, keep: [bool; 5]) -> Vec<f64> {
        let dims = [self.nx, self.nx, self.nu, self.ny, self.nth];
        let size: usize = dims.iter().zip(keep).filter(|(_, k)| *k).map(|(d, _)| *d).product();
        let mut out = vec![0.0; size];
        let tab = &self.slices[t - 1];
        let mut idx = [0usize; 5];
        for (flat, &v) in tab.iter().enumerate() {
            let mut rem = flat;
            for a in (0..5).rev() {
                idx[a] = rem % dims[a];
                rem /= dims[a];
            }
            let mut o = 0;
            for a in 0..5 {
                if keep[a] {
                    o = o * dims[a] + idx[a];
                }
            }
            out[o] += v;
        }
        out
    }

    fn entropy(&self, t: usize, keep: [bool; 5]) -> f64 {
        let mut h = 0.0;
        for v in self.marginal(t, keep) {
            if v > 0.0 {
                h -= v * v.ln();
            }
        }
        h
    }
}

// axes: x_t, x_{t-1}, u, y, θ
const TRIP: [bool; 5] = [true, true, true, false, false];
const PAIR: [bool; 5] = [false, true, true, false, false];
const XPREV: [bool; 5] = [false, true, false, false, false];
const X: [bool; 5] = [true, false, false, false, false];
const U: [bool; 5] = [false, false, true, false, false];
const YX: [bool; 5] = [true, false, false, true, false];
const XTH: [bool; 5] = [true, false, false, false, true];
const YXTH: [bool; 5] = [true, false, false, true, true];

fn expect_log(q: &[f64], prior: impl Iterator<Item = f64>) -> f64 {
    q.iter().zip(prior).map(|(q, p)| -q * p.ln()).sum()
}

fn lemma_px_lhs(j: &Joint, pr: &EpistemicPriors, t: usize) -> f64 {
    expect_log(&j.marginal(t, X), pr.p_tilde_x.iter().copied())
}

fn lemma_pu_lhs(j: &Joint, pr: &EpistemicPriors, t: usize) -> f64 {
    expect_log(&j.marginal(t, U), pr.p_tilde_u.iter().copied())
}

fn lemma_pyx_lhs(j: &Joint, pr: &EpistemicPriors, t: usize) -> f64 {
    // marginal(YX) is x-major, p_tilde_yx is [Y, X]
    let q = j.marginal(t, YX);
    let mut acc = 0.0;
    for x in 0..j.nx {
        for y in 0..j.ny {
            acc -= q[x * j.ny + y] * pr.p_tilde_yx[[y, x]].ln();
        }
    }
    acc
}

fn consolidated_lhs(j: &Joint, pr: &EpistemicPriors, t: usize) -> f64 {
    let q = j.marginal(t, XTH);
    let mut acc = 0.0;
    for x in 0..j.nx {
        for th in 0..j.nth {
            acc -= q[x * j.nth + th] * pr.p_tilde_xtheta[[x, th]].ln();
        }
    }
    acc
}

/// `Σ_t H[x_t, u_t | x_{t-1}] − H[x_t | x_{t-1}, u_t]`, each conditional
/// entropy taken from its own conditional table.
fn planning_conditional_gap(j: &Joint, t: usize) -> f64 {
    let trip = j.marginal(t, TRIP); // [xn, xp, u]
    let pair = j.marginal(t, PAIR); // [xp, u]
    let prev = j.marginal(t, XPREV);
    let (nx, nu) = (j.nx, j.nu);
    let mut h_xu_given_prev = 0.0;
    let mut h_x_given_prev_u = 0.0;
    for xn in 0..nx {
        for xp in 0..nx {
            for u in 0..nu {
                let q = trip[(xn * nx + xp) * nu + u];
                if q <= 0.0 {
                    continue;
                }
                h_xu_given_prev -= q * (q / prev[xp]).ln();
                h_x_given_prev_u -= q * (q / pair[xp * nu + u]).ln();
            }
        }
    }
    h_xu_given_prev - h_x_given_prev_u
}

/// Evaluates identity `name` on `post`, summing both sides over slices.
pub fn check_identity(
    name: IdentityName,
    post: &FactorizedPosterior,
    model: &DiscreteModel,
    budget: EnumerationBudget,
) -> Result<IdentityCheck> {
    check_identity_inner(name, post, model, budget, false)
}

pub(crate) fn check_identity_inner(
    name: IdentityName,
    post: &FactorizedPosterior,
    model: &DiscreteModel,
    budget: EnumerationBudget,
    flip_sign: bool,
) -> Result<IdentityCheck> {
    let marg = posterior_marginals(model, post, budget)?;
    let j = Joint::from_posterior(model, post);
    let horizon = model.cards.horizon;
    let priors: Vec<EpistemicPriors> = (1..=horizon).map(|t| epistemic_priors(&marg, t)).collect();
    let sum_t = |f: &dyn Fn(usize) -> f64| (1..=horizon).map(f).sum::<f64>();

    let (lhs, mut rhs) = match name {
        IdentityName::Thm21 => {
            let lhs = adjusted_vfe(model, post, budget)? - global_vfe(model, post, budget)?;
            let rhs = sum_t(&|t| j.entropy(t, PAIR) - j.entropy(t, TRIP) + j.entropy(t, YXTH) - j.entropy(t, XTH));
            (lhs, rhs)
        }
        IdentityName::LemmaPx => (
            sum_t(&|t| lemma_px_lhs(&j, &priors[t - 1], t)),
            sum_t(&|t| j.entropy(t, YX) - j.entropy(t, X)),
        ),
        IdentityName::LemmaPu => (
            sum_t(&|t| lemma_pu_lhs(&j, &priors[t - 1], t)),
            sum_t(&|t| j.entropy(t, PAIR) - j.entropy(t, TRIP)),
        ),
        IdentityName::LemmaPyx => (
            sum_t(&|t| lemma_pyx_lhs(&j, &priors[t - 1], t)),
            sum_t(&|t| j.entropy(t, YXTH) + j.entropy(t, X) - j.entropy(t, YX) - j.entropy(t, XTH)),
        ),
        IdentityName::Consolidation => (
            sum_t(&|t| lemma_px_lhs(&j, &priors[t - 1], t) + lemma_pyx_lhs(&j, &priors[t - 1], t)),
            sum_t(&|t| consolidated_lhs(&j, &priors[t - 1], t)),
        ),
        IdentityName::PlanningDecomp => (
            sum_t(&|t| planning_conditional_gap(&j, t)),
            entropy_correction_posterior(&marg, InferenceMode::Planning),
        ),
    };
    if flip_sign {
        rhs = -rhs;
    }
    Ok(IdentityCheck { name, lhs, rhs, gap: (lhs - rhs).abs() })
}
