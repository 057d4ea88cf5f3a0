//! Serde helpers that write floats with 17 significant digits.
//!
//! serde_json prints the shortest round-trip representation; the file formats here
//! pin the digit count instead, so floats go out as raw `{:.16e}` tokens.

use serde::Serializer;
use serde_json::value::RawValue;

pub(crate) fn raw(v: f64) -> Result<Box<RawValue>, String> {
    if !v.is_finite() {
        return Err(format!("non-finite float {v}"));
    }
    RawValue::from_string(format!("{v:.16e}")).map_err(|e| e.to_string())
}

pub(crate) fn f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::{Error, Serialize};
    raw(*v).map_err(S::Error::custom)?.serialize(s)
}

pub(crate) fn vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::{Error, SerializeSeq};
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&raw(*x).map_err(S::Error::custom)?)?;
    }
    seq.end()
}

pub(crate) fn opt_vec<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => vec(v, s),
        None => s.serialize_none(),
    }
}

pub(crate) fn rows<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    struct Row<'a>(&'a [f64]);
    impl serde::Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            vec(self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for r in v {
        seq.serialize_element(&Row(r))?;
    }
    seq.end()
}
