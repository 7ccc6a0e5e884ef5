//! Separability of the likelihood and the degeneracy of the channel-free
//! observation block.
//!
//! Without the channel, the observation block with an entropy-difference
//! correction reduces to the linear condition
//! `−log p(y | c) + a(y) + b(c) = 0` over columns `c = (x, θ)`. It has an
//! interior solution iff `log p` is additive in `(y, c)`; otherwise the
//! least-squares residual is positive. When it is additive, the block
//! objective is flat along every direction that keeps both marginals fixed.

use ndarray::Array2;
use rand::Rng;

use crate::model::DiscreteModel;
use crate::sampling;

pub const SEPARABILITY_TOL: f64 = 1e-10;

/// A violating quadruple: rows `y, y2` and columns `c, c2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedWitness {
    pub y: usize,
    pub y2: usize,
    pub c: usize,
    pub c2: usize,
    /// `log p(y,c) + log p(y2,c2) − log p(y,c2) − log p(y2,c)`.
    pub mixed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separability {
    pub separable: bool,
    /// The quadruple with the largest mixed log-difference, if any exceeds
    /// the tolerance.
    pub witness: Option<MixedWitness>,
}

/// Tests whether the `[Y, C]` slice factors as `a(y) b(c)` through its 2×2
/// mixed log-differences. Entries are floored at `1e-300`.
pub fn separability_witness(slice: &Array2<f64>) -> Separability {
    let (ny, nc) = slice.dim();
    let l = slice.mapv(|v| v.max(1e-300).ln());
    let mut best: Option<MixedWitness> = None;
    for y in 0..ny {
        for y2 in (y + 1)..ny {
            for c in 0..nc {
                for c2 in (c + 1)..nc {
                    let mixed = l[[y, c]] + l[[y2, c2]] - l[[y, c2]] - l[[y2, c]];
                    if best.is_none_or(|b| mixed.abs() > b.mixed.abs()) {
                        best = Some(MixedWitness { y, y2, c, c2, mixed });
                    }
                }
            }
        }
    }
    let witness = best.filter(|w| w.mixed.abs() > SEPARABILITY_TOL);
    Separability { separable: witness.is_none(), witness }
}

/// The likelihood as a `[Y, X·Θ]` matrix with column `c = x · Θ + θ`.
pub fn likelihood_slice(model: &DiscreteModel) -> Array2<f64> {
    let c = model.cards;
    Array2::from_shape_fn((c.n_y, c.n_x * c.n_theta), |(y, col)| {
        model.likelihood[[y, col / c.n_theta, col % c.n_theta]]
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyReport {
    pub separability: Separability,
    /// Frobenius norm of `log p − a(y) − b(c)` at the least-squares fit.
    pub infeasibility_residual: f64,
    /// Block objective `−Σ q_y log p` at two distinct beliefs with equal
    /// marginals, moved by `±step` along a 2×2 null direction.
    pub flat_objectives: (f64, f64),
    pub flat_gap: f64,
    /// Max-abs distance between the two beliefs.
    pub flat_distance: f64,
    /// Max minus min block objective over random beliefs sharing the
    /// reference marginals.
    pub random_spread: f64,
}

fn block_objective(q: &Array2<f64>, log_p: &Array2<f64>) -> f64 {
    -q.iter().zip(log_p.iter()).map(|(a, b)| a * b).sum::<f64>()
}

/// Adds `step · (e_{y,c} + e_{y2,c2} − e_{y,c2} − e_{y2,c})`, which keeps
/// both marginals.
fn move_along(q: &mut Array2<f64>, y: usize, y2: usize, c: usize, c2: usize, step: f64) {
    q[[y, c]] += step;
    q[[y2, c2]] += step;
    q[[y, c2]] -= step;
    q[[y2, c]] -= step;
}

/// Diagnoses the channel-free observation block of `model`.
pub fn degenerate_scheme_probe(model: &DiscreteModel) -> DegeneracyReport {
    let p = likelihood_slice(model);
    let (ny, nc) = p.dim();
    let log_p = p.mapv(|v| v.max(1e-300).ln());

    // double centering is the least-squares projection onto a(y) + b(c)
    let row_mean: Vec<f64> = (0..ny).map(|y| (0..nc).map(|c| log_p[[y, c]]).sum::<f64>() / nc as f64).collect();
    let col_mean: Vec<f64> = (0..nc).map(|c| (0..ny).map(|y| log_p[[y, c]]).sum::<f64>() / ny as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / ny as f64;
    let mut ss = 0.0;
    for y in 0..ny {
        for c in 0..nc {
            let r = log_p[[y, c]] - row_mean[y] - col_mean[c] + grand;
            ss += r * r;
        }
    }

    let base = Array2::from_elem((ny, nc), 1.0 / (ny * nc) as f64);
    let step = 0.5 / (ny * nc) as f64;
    let (mut qa, mut qb) = (base.clone(), base.clone());
    let (flat_objectives, flat_distance) = if ny >= 2 && nc >= 2 {
        move_along(&mut qa, 0, 1, 0, 1, step);
        move_along(&mut qb, 0, 1, 0, 1, -step);
        ((block_objective(&qa, &log_p), block_objective(&qb, &log_p)), 2.0 * step)
    } else {
        let v = block_objective(&base, &log_p);
        ((v, v), 0.0)
    };

    let mut rng = sampling::rng(0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..10 {
        let mut q = base.clone();
        if ny >= 2 && nc >= 2 {
            for _ in 0..8 {
                let y = rng.random_range(0..ny - 1);
                let c = rng.random_range(0..nc - 1);
                let s = rng.random_range(-1.0..1.0) * step / 8.0;
                move_along(&mut q, y, y + 1, c, c + 1, s);
            }
        }
        let v = block_objective(&q, &log_p);
        lo = lo.min(v);
        hi = hi.max(v);
    }

    DegeneracyReport {
        separability: separability_witness(&p),
        infeasibility_residual: ss.sqrt(),
        flat_gap: (flat_objectives.0 - flat_objectives.1).abs(),
        flat_objectives,
        flat_distance,
        random_spread: hi - lo,
    }
}
