//! JSON snapshot of a coordinate set, using the same nesting as the model
//! document (outermost index first).

use ndarray::{Array1, Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use super::{Coordinates, SliceCoords};
use crate::error::{Error, Result};
use crate::model::{Cardinalities, CardsDocument};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceDocument {
    pub q_y: Vec<Vec<Vec<f64>>>,
    pub q_dyn: Vec<Vec<Vec<Vec<f64>>>>,
    pub q_sep: Vec<Vec<f64>>,
    pub q_trip: Vec<Vec<Vec<f64>>>,
    pub q_pair: Vec<Vec<f64>>,
    pub r_chan: Vec<Vec<Vec<f64>>>,
    pub q_x: Vec<f64>,
    pub q_y_single: Vec<f64>,
    pub q_u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinatesDocument {
    pub cards: CardsDocument,
    pub q_theta: Vec<f64>,
    pub q_x0: Vec<f64>,
    pub slices: Vec<SliceDocument>,
}

fn nest2(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn nest3(a: &Array3<f64>) -> Vec<Vec<Vec<f64>>> {
    a.outer_iter().map(|b| b.outer_iter().map(|r| r.to_vec()).collect()).collect()
}

fn nest4(a: &Array4<f64>) -> Vec<Vec<Vec<Vec<f64>>>> {
    a.outer_iter()
        .map(|b| b.outer_iter().map(|c| c.outer_iter().map(|r| r.to_vec()).collect()).collect())
        .collect()
}

fn flat_shape(name: &str, shape: &[usize], flat: Vec<f64>) -> Result<ndarray::ArrayD<f64>> {
    ndarray::ArrayD::from_shape_vec(shape.to_vec(), flat).map_err(|_| Error::DimensionMismatch {
        field: name.to_string(),
        expected: format!("{shape:?}"),
        found: "ragged or wrong-sized array".into(),
    })
}

fn check_ragged<T>(name: &str, rows: &[Vec<T>]) -> Result<()> {
    if let Some(first) = rows.first() {
        if rows.iter().any(|r| r.len() != first.len()) {
            return Err(Error::Parse(format!("`{name}` is ragged")));
        }
    }
    Ok(())
}

fn un2(name: &str, v: &[Vec<f64>], shape: [usize; 2]) -> Result<Array2<f64>> {
    check_ragged(name, v)?;
    if v.len() != shape[0] {
        return Err(Error::DimensionMismatch {
            field: name.to_string(),
            expected: format!("{shape:?}"),
            found: format!("{} rows", v.len()),
        });
    }
    let flat = v.iter().flatten().copied().collect();
    Ok(flat_shape(name, &shape, flat)?.into_dimensionality().expect("rank 2"))
}

fn un3(name: &str, v: &[Vec<Vec<f64>>], shape: [usize; 3]) -> Result<Array3<f64>> {
    check_ragged(name, v)?;
    for b in v {
        check_ragged(name, b)?;
    }
    if v.len() != shape[0] || v.iter().any(|b| b.len() != shape[1]) {
        return Err(Error::DimensionMismatch {
            field: name.to_string(),
            expected: format!("{shape:?}"),
            found: "different nesting".into(),
        });
    }
    let flat = v.iter().flatten().flatten().copied().collect();
    Ok(flat_shape(name, &shape, flat)?.into_dimensionality().expect("rank 3"))
}

fn un4(name: &str, v: &[Vec<Vec<Vec<f64>>>], shape: [usize; 4]) -> Result<Array4<f64>> {
    let ok = v.len() == shape[0]
        && v.iter().all(|b| {
            b.len() == shape[1]
                && b.iter().all(|c| c.len() == shape[2] && c.iter().all(|r| r.len() == shape[3]))
        });
    if !ok {
        return Err(Error::DimensionMismatch {
            field: name.to_string(),
            expected: format!("{shape:?}"),
            found: "different nesting".into(),
        });
    }
    let flat = v.iter().flatten().flatten().flatten().copied().collect();
    Ok(flat_shape(name, &shape, flat)?.into_dimensionality().expect("rank 4"))
}

impl CoordinatesDocument {
    pub fn from_coordinates(c: &Coordinates) -> Self {
        let k = c.cards;
        CoordinatesDocument {
            cards: CardsDocument {
                n_x: k.n_x,
                n_y: k.n_y,
                n_u: k.n_u,
                n_theta: k.n_theta,
                horizon: k.horizon,
            },
            q_theta: c.q_theta.to_vec(),
            q_x0: c.q_x0.to_vec(),
            slices: c
                .slices
                .iter()
                .map(|s| SliceDocument {
                    q_y: nest3(&s.q_y),
                    q_dyn: nest4(&s.q_dyn),
                    q_sep: nest2(&s.q_sep),
                    q_trip: nest3(&s.q_trip),
                    q_pair: nest2(&s.q_pair),
                    r_chan: nest3(&s.r_chan),
                    q_x: s.q_x.to_vec(),
                    q_y_single: s.q_y_single.to_vec(),
                    q_u: s.q_u.to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_coordinates(&self) -> Result<Coordinates> {
        let d = &self.cards;
        let cards = Cardinalities::new(d.n_x, d.n_y, d.n_u, d.n_theta, d.horizon)?;
        let (nx, ny, nu, nth) = (d.n_x, d.n_y, d.n_u, d.n_theta);
        let vec1 = |name: &str, v: &[f64], n: usize| -> Result<Array1<f64>> {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    field: name.to_string(),
                    expected: n.to_string(),
                    found: v.len().to_string(),
                });
            }
            Ok(Array1::from(v.to_vec()))
        };
        if self.slices.len() != d.horizon {
            return Err(Error::DimensionMismatch {
                field: "slices".into(),
                expected: d.horizon.to_string(),
                found: self.slices.len().to_string(),
            });
        }
        let slices = self
            .slices
            .iter()
            .map(|s| {
                Ok(SliceCoords {
                    q_y: un3("q_y", &s.q_y, [ny, nx, nth])?,
                    q_dyn: un4("q_dyn", &s.q_dyn, [nx, nx, nth, nu])?,
                    q_sep: un2("q_sep", &s.q_sep, [nx, nth])?,
                    q_trip: un3("q_trip", &s.q_trip, [nx, nx, nu])?,
                    q_pair: un2("q_pair", &s.q_pair, [nx, nu])?,
                    r_chan: un3("r_chan", &s.r_chan, [ny, nx, nth])?,
                    q_x: vec1("q_x", &s.q_x, nx)?,
                    q_y_single: vec1("q_y_single", &s.q_y_single, ny)?,
                    q_u: vec1("q_u", &s.q_u, nu)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Coordinates {
            cards,
            slices,
            q_theta: vec1("q_theta", &self.q_theta, nth)?,
            q_x0: vec1("q_x0", &self.q_x0, nx)?,
        })
    }
}

impl Coordinates {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CoordinatesDocument::from_coordinates(self))
            .expect("coordinates serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CoordinatesDocument =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        doc.to_coordinates()
    }
}
