//! The seeded identity suite behind the CLI `validate` command.

use serde::Serialize;

use crate::error::Result;
use crate::exec::ExecPolicy;
use crate::sampling;

use super::identities::{check_identity_inner, IdentityName};
use super::{enumerate_log_z, enumerate_log_z_backward, EnumerationBudget};

pub const IDENTITY_TOL: f64 = 1e-9;
pub const ORDER_TOL: f64 = 1e-12;

/// Deliberate corruption used to prove the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the right-hand side of the theorem identity.
    FlipTheoremSign,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub check: String,
    pub samples: usize,
    pub max_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Runs every identity and the two summation orders of `log Z` on
/// `samples` seeded models and posteriors with cardinalities up to
/// `(3, 3, 2, 2)` and `T ≤ 3`.
pub fn validation_suite(samples: usize, seed: u64, fault: Option<Fault>) -> Result<Vec<ValidationRow>> {
    let budget = EnumerationBudget::default();
    let per_sample = ExecPolicy::default().map_range(samples, |i| -> Result<Vec<f64>> {
        let s = seed.wrapping_add(i as u64);
        let cards = sampling::suite_cards(s);
        let model = sampling::random_model(cards, s, 1e-12);
        let post = sampling::random_posterior(cards, s.wrapping_add(7919));
        let mut gaps = Vec::with_capacity(IdentityName::ALL.len() + 1);
        for name in IdentityName::ALL {
            let flip = fault == Some(Fault::FlipTheoremSign) && name == IdentityName::Thm21;
            gaps.push(check_identity_inner(name, &post, &model, budget, flip)?.gap);
        }
        let a = enumerate_log_z(&model, budget)?;
        let b = enumerate_log_z_backward(&model, budget)?;
        gaps.push((a - b).abs() / a.abs().max(1.0));
        Ok(gaps)
    });
    let mut max = vec![0.0f64; IdentityName::ALL.len() + 1];
    for gaps in per_sample {
        for (m, g) in max.iter_mut().zip(gaps?) {
            *m = m.max(g);
        }
    }
    let mut rows: Vec<ValidationRow> = IdentityName::ALL
        .iter()
        .zip(&max)
        .map(|(n, &g)| ValidationRow {
            check: n.name().to_string(),
            samples,
            max_gap: g,
            tolerance: IDENTITY_TOL,
            pass: g < IDENTITY_TOL,
        })
        .collect();
    let g = max[IdentityName::ALL.len()];
    rows.push(ValidationRow {
        check: "log_z_order".into(),
        samples,
        max_gap: g,
        tolerance: ORDER_TOL,
        pass: g < ORDER_TOL,
    });
    Ok(rows)
}
