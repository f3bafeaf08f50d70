//! JSON layout for dense matrices: `{"rows": r, "cols": c, "data": [...]}`
//! with `data` in row-major order.

use ndarray::Array2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl From<&Array2<f64>> for Dense {
    fn from(a: &Array2<f64>) -> Self {
        Dense {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }
}

impl Dense {
    fn into_array<E: serde::de::Error>(self) -> Result<Array2<f64>, E> {
        Array2::from_shape_vec((self.rows, self.cols), self.data)
            .map_err(|e| E::custom(format!("matrix shape mismatch: {e}")))
    }
}

pub mod single {
    use super::*;

    pub fn serialize<S: Serializer>(a: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        Dense::from(a).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        Dense::deserialize(d)?.into_array()
    }
}

pub mod list {
    use super::*;

    pub fn serialize<S: Serializer>(a: &[Array2<f64>], s: S) -> Result<S::Ok, S::Error> {
        let dense: Vec<Dense> = a.iter().map(Dense::from).collect();
        dense.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Array2<f64>>, D::Error> {
        Vec::<Dense>::deserialize(d)?
            .into_iter()
            .map(Dense::into_array)
            .collect()
    }
}
