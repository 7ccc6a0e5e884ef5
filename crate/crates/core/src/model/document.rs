use ndarray::{Array1, Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use super::{Cardinalities, DiscreteModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CardsDocument {
    pub n_x: usize,
    pub n_y: usize,
    pub n_u: usize,
    pub n_theta: usize,
    pub horizon: usize,
}

/// On-disk model description. Tensors are nested row-major arrays:
/// `likelihood[y][x][theta]`, `dynamics[x_next][x_prev][theta][u]`,
/// `action_prior[t][u]`, `goal_x[t][x]`, `goal_y[t][y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub cards: CardsDocument,
    pub prior_theta: Vec<f64>,
    pub prior_x0: Vec<f64>,
    pub likelihood: Vec<Vec<Vec<f64>>>,
    pub dynamics: Vec<Vec<Vec<Vec<f64>>>>,
    pub action_prior: Vec<Vec<f64>>,
    pub goal_x: Vec<Vec<f64>>,
    pub goal_y: Vec<Vec<f64>>,
}

/// Parses a model document. Errors carry serde's line/column context.
pub fn parse_model(text: &str) -> Result<ModelDocument> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

/// Canonical text form of a model: fixed field order, shortest round-trip
/// decimal representation of every number.
pub fn serialize_model(model: &DiscreteModel) -> String {
    let doc = ModelDocument::from_model(model);
    serde_json::to_string_pretty(&doc).expect("model document serializes")
}

impl ModelDocument {
    pub fn from_model(m: &DiscreteModel) -> Self {
        let c = m.cards;
        ModelDocument {
            cards: CardsDocument {
                n_x: c.n_x,
                n_y: c.n_y,
                n_u: c.n_u,
                n_theta: c.n_theta,
                horizon: c.horizon,
            },
            prior_theta: m.prior_theta.to_vec(),
            prior_x0: m.prior_x0.to_vec(),
            likelihood: m
                .likelihood
                .outer_iter()
                .map(|a| a.outer_iter().map(|b| b.to_vec()).collect())
                .collect(),
            dynamics: m
                .dynamics
                .outer_iter()
                .map(|a| {
                    a.outer_iter()
                        .map(|b| b.outer_iter().map(|c| c.to_vec()).collect())
                        .collect()
                })
                .collect(),
            action_prior: m.action_prior.outer_iter().map(|r| r.to_vec()).collect(),
            goal_x: m.goal_x.outer_iter().map(|r| r.to_vec()).collect(),
            goal_y: m.goal_y.outer_iter().map(|r| r.to_vec()).collect(),
        }
    }

    /// Shape-checks the nested arrays and copies them into tensors. Does not
    /// check stochasticity; see [`super::build_model`].
    pub(crate) fn to_model_unchecked(&self) -> Result<DiscreteModel> {
        let c = &self.cards;
        let cards = Cardinalities::new(c.n_x, c.n_y, c.n_u, c.n_theta, c.horizon)?;
        let (nx, ny, nu, nth, t) = (c.n_x, c.n_y, c.n_u, c.n_theta, c.horizon);

        expect_len("prior_theta", self.prior_theta.len(), nth)?;
        expect_len("prior_x0", self.prior_x0.len(), nx)?;

        expect_len("likelihood", self.likelihood.len(), ny)?;
        let mut likelihood = Array3::zeros((ny, nx, nth));
        for (y, a) in self.likelihood.iter().enumerate() {
            expect_len(&format!("likelihood[{y}]"), a.len(), nx)?;
            for (x, b) in a.iter().enumerate() {
                expect_len(&format!("likelihood[{y}][{x}]"), b.len(), nth)?;
                for (th, &v) in b.iter().enumerate() {
                    likelihood[[y, x, th]] = v;
                }
            }
        }

        expect_len("dynamics", self.dynamics.len(), nx)?;
        let mut dynamics = Array4::zeros((nx, nx, nth, nu));
        for (xn, a) in self.dynamics.iter().enumerate() {
            expect_len(&format!("dynamics[{xn}]"), a.len(), nx)?;
            for (xp, b) in a.iter().enumerate() {
                expect_len(&format!("dynamics[{xn}][{xp}]"), b.len(), nth)?;
                for (th, cc) in b.iter().enumerate() {
                    expect_len(&format!("dynamics[{xn}][{xp}][{th}]"), cc.len(), nu)?;
                    for (u, &v) in cc.iter().enumerate() {
                        dynamics[[xn, xp, th, u]] = v;
                    }
                }
            }
        }

        Ok(DiscreteModel {
            cards,
            prior_theta: Array1::from(self.prior_theta.clone()),
            prior_x0: Array1::from(self.prior_x0.clone()),
            likelihood,
            dynamics,
            action_prior: matrix("action_prior", &self.action_prior, t, nu)?,
            goal_x: matrix("goal_x", &self.goal_x, t, nx)?,
            goal_y: matrix("goal_y", &self.goal_y, t, ny)?,
        })
    }
}

fn expect_len(field: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch {
            field: field.to_string(),
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}

fn matrix(field: &str, rows: &[Vec<f64>], n_rows: usize, n_cols: usize) -> Result<Array2<f64>> {
    expect_len(field, rows.len(), n_rows)?;
    let mut out = Array2::zeros((n_rows, n_cols));
    for (i, r) in rows.iter().enumerate() {
        expect_len(&format!("{field}[{i}]"), r.len(), n_cols)?;
        for (j, &v) in r.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;
    use proptest::prelude::*;

    #[test]
    fn missing_field_is_named() {
        let m = DiscreteModel::uniform(Cardinalities::new(2, 2, 1, 1, 1).unwrap()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&serialize_model(&m)).unwrap();
        v.as_object_mut().unwrap().remove("dynamics");
        let err = parse_model(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("dynamics"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let m = DiscreteModel::uniform(Cardinalities::new(2, 2, 1, 1, 1).unwrap()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&serialize_model(&m)).unwrap();
        v.as_object_mut().unwrap().insert("extra".into(), serde_json::json!(1));
        let err = parse_model(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("unknown field"), "{err}");
    }

    #[test]
    fn identity_model_round_trips() {
        let mut m = DiscreteModel::uniform(Cardinalities::new(2, 2, 2, 1, 1).unwrap()).unwrap();
        m.dynamics.fill(0.0);
        for x in 0..2 {
            for u in 0..2 {
                m.dynamics[[x, x, 0, u]] = 1.0;
            }
        }
        let back = build_model(&parse_model(&serialize_model(&m)).unwrap(), 0.0).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn serialization_is_deterministic_and_ordered() {
        let m = crate::sampling::tmaze_model(0.9, 2);
        let a = serialize_model(&m);
        assert_eq!(a, serialize_model(&m));
        let keys = ["\"cards\"", "\"prior_theta\"", "\"prior_x0\"", "\"likelihood\"", "\"dynamics\"",
            "\"action_prior\"", "\"goal_x\"", "\"goal_y\""];
        let pos: Vec<usize> = keys.iter().map(|k| a.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn random_models_round_trip(seed in any::<u64>()) {
            let m = crate::sampling::random_model(
                Cardinalities::new(3, 2, 2, 2, 2).unwrap(), seed, 1e-12);
            let back = build_model(&parse_model(&serialize_model(&m)).unwrap(), 1e-12).unwrap();
            for (a, b) in m.likelihood.iter().zip(back.likelihood.iter()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
            for (a, b) in m.dynamics.iter().zip(back.dynamics.iter()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
            prop_assert_eq!(&m.goal_x, &back.goal_x);
            back.validate().unwrap();
        }
    }
}
