//! Residuals of the stationary conditions at given coordinates and
//! multipliers, recomputed with plain loops.

use std::collections::BTreeMap;

use crate::coords::{Coordinates, MultiplierSet, Residuals};
use crate::model::DiscreteModel;
use crate::objective::InferenceMode;

fn scale_to_unit(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `A_{t-1}(x', θ)` and `B_t(x, θ)` as flat `x * Θ + θ` vectors.
fn chain_inputs(model: &DiscreteModel, mults: &MultiplierSet, t: usize) -> (Vec<f64>, Vec<f64>) {
    let c = model.cards;
    let mut a = vec![0.0; c.n_x * c.n_theta];
    let mut b = vec![0.0; c.n_x * c.n_theta];
    for x in 0..c.n_x {
        for th in 0..c.n_theta {
            a[x * c.n_theta + th] = if t == 1 {
                model.prior_theta[th] * model.prior_x0[x]
            } else {
                mults.fwd[t - 1][[x, th]] * mults.obs[t - 2][[x, th]] * model.goal_x[[t - 2, x]]
            };
            b[x * c.n_theta + th] = mults.obs[t - 1][[x, th]] * model.goal_x[[t - 1, x]] * mults.bwd[t][[x, th]];
        }
    }
    (a, b)
}

/// Residual per stationary condition, maximised over slices:
///
/// * `obs.q_y`: `q_y ∝ p(y|x,θ) r p̂_y exp(Λ_{xθ})` (`r` only in
///   `ActiveInference` mode)
/// * `obs.channel`: `r · q_sep = q_y`
/// * `sep.multiplier`: `exp(−Λ_{xθ}) ∝ I / q_sep`, checked as
///   `q_sep ∝ I exp(Λ_{xθ})`
/// * `dyn.q_dyn`: `q_dyn ∝ p(x|x',θ,u) p(u) exp(−Λ_trip) A_{t-1} B_t`
/// * `dyn.triplet`: `q_trip exp(−Λ_trip) ∝ q_pair` on the support of
///   `q_trip` (`q_{x_{t-1}}` in place of `q_trip` in `Planning` mode, and
///   `Λ_trip = 0` in `Marginal` mode)
/// * `chain.fwd`, `chain.bwd`, `chain.obs`: the stored messages against
///   their recursions
/// * `classical.*`: singletons against the marginals of their blocks
pub fn stationarity_residuals(
    model: &DiscreteModel,
    coords: &Coordinates,
    mults: &MultiplierSet,
    mode: InferenceMode,
    floor: f64,
) -> Residuals {
    let c = model.cards;
    let (nx, ny, nu, nth) = (c.n_x, c.n_y, c.n_u, c.n_theta);
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    let mut rec = |k: &str, v: f64| {
        let e = out.entry(k.to_string()).or_insert(0.0);
        *e = if v.is_nan() { f64::INFINITY } else { e.max(v) };
    };
    let use_r = mode == InferenceMode::ActiveInference;

    for t in 1..=c.horizon {
        let s = coords.slice(t);
        let lam = &mults.lambda_xtheta[t - 1];
        let lam_top = lam.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        // observation belief
        let mut rhs = vec![0.0; ny * nx * nth];
        let mut lhs = vec![0.0; ny * nx * nth];
        for y in 0..ny {
            for x in 0..nx {
                for th in 0..nth {
                    let w = if use_r { s.r_chan[[y, x, th]] } else { 1.0 };
                    let k = (y * nx + x) * nth + th;
                    rhs[k] = model.likelihood[[y, x, th]] * w * model.goal_y[[t - 1, y]] * (lam[[x, th]] - lam_top).exp();
                    lhs[k] = s.q_y[[y, x, th]];
                }
            }
        }
        scale_to_unit(&mut rhs);
        rec("obs.q_y", max_gap(&lhs, &rhs));

        // channel and separator multiplier
        let mut sep = vec![0.0; nx * nth];
        for x in 0..nx {
            for th in 0..nth {
                for y in 0..ny {
                    sep[x * nth + th] += s.q_y[[y, x, th]];
                }
            }
        }
        let mut ch: f64 = 0.0;
        for y in 0..ny {
            for x in 0..nx {
                for th in 0..nth {
                    ch = ch.max((s.r_chan[[y, x, th]] * sep[x * nth + th] - s.q_y[[y, x, th]]).abs());
                }
            }
        }
        rec("obs.channel", ch);

        let mut sep_rhs = vec![0.0; nx * nth];
        let mut obs_msg = vec![0.0; nx * nth];
        for x in 0..nx {
            for th in 0..nth {
                let mut i = 0.0;
                for y in 0..ny {
                    let w = if use_r { s.r_chan[[y, x, th]] } else { 1.0 };
                    i += model.likelihood[[y, x, th]] * w * model.goal_y[[t - 1, y]];
                }
                obs_msg[x * nth + th] = i;
                sep_rhs[x * nth + th] = i * (lam[[x, th]] - lam_top).exp();
            }
        }
        scale_to_unit(&mut sep_rhs);
        rec("sep.multiplier", max_gap(&sep, &sep_rhs));
        let mut stored = vec![0.0; nx * nth];
        for x in 0..nx {
            for th in 0..nth {
                stored[x * nth + th] = mults.obs[t - 1][[x, th]];
            }
        }
        rec("chain.obs", max_gap(&stored, &obs_msg));

        // dynamics belief
        let (a, b) = chain_inputs(model, mults, t);
        let lt = &mults.lambda_trip[t - 1];
        let mut rhs = vec![0.0; nx * nx * nth * nu];
        let mut lhs = vec![0.0; nx * nx * nth * nu];
        let mut fwd = vec![0.0; nx * nth];
        let mut bwd = vec![0.0; nx * nth];
        for xn in 0..nx {
            for xp in 0..nx {
                for th in 0..nth {
                    for u in 0..nu {
                        let psi = model.dynamics[[xn, xp, th, u]] * model.action_prior[[t - 1, u]] * (-lt[[xn, xp, u]]).exp();
                        let k = ((xn * nx + xp) * nth + th) * nu + u;
                        rhs[k] = psi * a[xp * nth + th] * b[xn * nth + th];
                        lhs[k] = s.q_dyn[[xn, xp, th, u]];
                        fwd[xn * nth + th] += psi * a[xp * nth + th];
                        bwd[xp * nth + th] += psi * b[xn * nth + th];
                    }
                }
            }
        }
        scale_to_unit(&mut rhs);
        rec("dyn.q_dyn", max_gap(&lhs, &rhs));
        scale_to_unit(&mut fwd);
        scale_to_unit(&mut bwd);
        let mut stored_f = vec![0.0; nx * nth];
        let mut stored_b = vec![0.0; nx * nth];
        for x in 0..nx {
            for th in 0..nth {
                stored_f[x * nth + th] = mults.fwd[t][[x, th]];
                stored_b[x * nth + th] = mults.bwd[t - 1][[x, th]];
            }
        }
        rec("chain.fwd", max_gap(&stored_f, &fwd));
        rec("chain.bwd", max_gap(&stored_b, &bwd));

        // triplet multiplier
        let mut trip = vec![0.0; nx * nx * nu];
        let mut pair = vec![0.0; nx * nu];
        let mut prev = vec![0.0; nx];
        for xn in 0..nx {
            for xp in 0..nx {
                for th in 0..nth {
                    for u in 0..nu {
                        let v = s.q_dyn[[xn, xp, th, u]];
                        trip[(xn * nx + xp) * nu + u] += v;
                        pair[xp * nu + u] += v;
                        prev[xp] += v;
                    }
                }
            }
        }
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        let mut flat: f64 = 0.0;
        for xn in 0..nx {
            for xp in 0..nx {
                for u in 0..nu {
                    let q = trip[(xn * nx + xp) * nu + u];
                    let l = lt[[xn, xp, u]];
                    match mode {
                        InferenceMode::Marginal => flat = flat.max(l.abs()),
                        InferenceMode::Planning if prev[xp] > floor => {
                            lhs.push(prev[xp] * (-l).exp());
                            rhs.push(pair[xp * nu + u]);
                        }
                        InferenceMode::MaxAmb | InferenceMode::ActiveInference if q > floor => {
                            lhs.push(q * (-l).exp());
                            rhs.push(pair[xp * nu + u]);
                        }
                        _ => {}
                    }
                }
            }
        }
        scale_to_unit(&mut lhs);
        scale_to_unit(&mut rhs);
        rec("dyn.triplet", if mode == InferenceMode::Marginal { flat } else { max_gap(&lhs, &rhs) });

        // classical singletons
        let mut qx = vec![0.0; nx];
        let mut qy = vec![0.0; ny];
        let mut qu = vec![0.0; nu];
        for x in 0..nx {
            for th in 0..nth {
                qx[x] += sep[x * nth + th];
            }
        }
        for y in 0..ny {
            for x in 0..nx {
                for th in 0..nth {
                    qy[y] += s.q_y[[y, x, th]];
                }
            }
        }
        for xp in 0..nx {
            for u in 0..nu {
                qu[u] += pair[xp * nu + u];
            }
        }
        rec("classical.x", max_gap(&s.q_x.to_vec(), &qx));
        rec("classical.y", max_gap(&s.q_y_single.to_vec(), &qy));
        rec("classical.u", max_gap(&s.q_u.to_vec(), &qu));
    }

    // root of the chain
    let mut root = vec![0.0; nx * nth];
    for x in 0..nx {
        for th in 0..nth {
            root[x * nth + th] = model.prior_x0[x] * model.prior_theta[th] * mults.bwd[0][[x, th]];
        }
    }
    scale_to_unit(&mut root);
    let mut q0 = vec![0.0; nx];
    let mut qth = vec![0.0; nth];
    for x in 0..nx {
        for th in 0..nth {
            q0[x] += root[x * nth + th];
            qth[th] += root[x * nth + th];
        }
    }
    rec("classical.x0", max_gap(&coords.q_x0.to_vec(), &q0));
    rec("classical.theta", max_gap(&coords.q_theta.to_vec(), &qth));
    Residuals(out)
}
