//! Serde helpers for extended reals: finite values stay JSON numbers,
//! infinities and NaN are written as the strings `"inf"`, `"-inf"`, `"nan"`.
//! Output goes through [`to_json`], which prints every float with 17
//! significant digits.

use std::io;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub mod ext_real {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad extended real {other:?}"))),
            },
        }
    }
}

pub mod ext_real_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        struct W(f64);
        impl serde::Serialize for W {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                super::ext_real::serialize(&self.0, s)
            }
        }
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&W(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        #[derive(Deserialize)]
        struct W(#[serde(with = "super::ext_real")] f64);
        let v: Vec<W> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|w| w.0).collect())
    }
}

/// Fixed 17-significant-digit rendering used for CSV output.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with 17-significant-digit floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> crate::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Digits17);
    value
        .serialize(&mut ser)
        .map_err(|e| crate::Error::Io(e.to_string()))?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct R {
        #[serde(with = "super::ext_real")]
        b: f64,
        #[serde(with = "super::ext_real_vec")]
        v: Vec<f64>,
    }

    #[test]
    fn infinities_round_trip() {
        let r = R {
            b: f64::INFINITY,
            v: vec![1.5, f64::NEG_INFINITY],
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"b":"inf","v":[1.5,"-inf"]}"#);
        assert_eq!(serde_json::from_str::<R>(&s).unwrap(), r);
    }

    #[test]
    fn json_floats_round_trip_with_17_digits() {
        let r = R {
            b: 0.1,
            v: vec![1.0 / 3.0, -2.5e-300, f64::INFINITY],
        };
        let s = super::to_json(&r).unwrap();
        assert_eq!(
            s,
            r#"{"b":1.0000000000000001e-1,"v":[3.3333333333333331e-1,-2.5000000000000000e-300,"inf"]}"#
        );
        assert_eq!(serde_json::from_str::<R>(&s).unwrap(), r);
    }

    #[test]
    fn fmt17_has_seventeen_digits() {
        assert_eq!(super::fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(super::fmt17(f64::INFINITY), "inf");
    }
}
