//! Serializes `Array1` as a plain JSON array.

use ndarray::Array1;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<T: Serialize, S: Serializer>(a: &Array1<T>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(a.iter())
}

pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<Array1<T>, D::Error> {
    Ok(Array1::from(Vec::<T>::deserialize(d)?))
}
