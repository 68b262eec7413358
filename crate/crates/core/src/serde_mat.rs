//! Row-major (de)serialization for nalgebra matrices and vectors.

pub mod matrix {
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::Mat;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        (m.nrows(), m.ncols(), rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let (nrows, ncols, rows): (usize, usize, Vec<Vec<f64>>) = Deserialize::deserialize(d)?;
        if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom(format!("ragged {nrows}x{ncols} matrix")));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Mat::from_row_slice(nrows, ncols, &flat))
    }
}

pub mod vector {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::Vector;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        let v: Vec<f64> = Deserialize::deserialize(d)?;
        Ok(Vector::from_vec(v))
    }
}

pub mod matrices {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::Mat;

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::matrix")] Mat);

    pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> Result<S::Ok, S::Error> {
        let wrapped: Vec<Wrap> = ms.iter().cloned().map(Wrap).collect();
        wrapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
        let v: Vec<Wrap> = Deserialize::deserialize(d)?;
        Ok(v.into_iter().map(|w| w.0).collect())
    }
}

pub mod vectors {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::Vector;

    pub fn serialize<S: Serializer>(vs: &[Vector], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vector>, D::Error> {
        let v: Vec<Vec<f64>> = Deserialize::deserialize(d)?;
        Ok(v.into_iter().map(Vector::from_vec).collect())
    }
}

pub mod opt_matrix {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::Mat;

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::matrix")] Mat);

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        m.clone().map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        let v: Option<Wrap> = Deserialize::deserialize(d)?;
        Ok(v.map(|w| w.0))
    }
}
