use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::Error;

/// Unit of information. Everything is computed in nats internally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Bits,
    Nats,
}

impl Unit {
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            Unit::Bits => nats / std::f64::consts::LN_2,
            Unit::Nats => nats,
        }
    }

    pub fn to_nats(self, value: f64) -> f64 {
        match self {
            Unit::Bits => value * std::f64::consts::LN_2,
            Unit::Nats => value,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Bits => "bits",
            Unit::Nats => "nats",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bits" => Ok(Unit::Bits),
            "nats" => Ok(Unit::Nats),
            other => Err(Error::InvalidArgument(format!("unknown unit {other:?}"))),
        }
    }
}

/// A leakage value that may be infinite.
///
/// Continuous loads leak unbounded information at zero AES power; that case is
/// kept explicit instead of being folded into a large float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Leakage {
    Finite(f64),
    Unbounded,
}

impl Leakage {
    pub fn finite(self) -> Option<f64> {
        match self {
            Leakage::Finite(v) => Some(v),
            Leakage::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Leakage::Unbounded)
    }

    pub fn convert(self, from: Unit, to: Unit) -> Leakage {
        match self {
            Leakage::Finite(v) => Leakage::Finite(to.from_nats(from.to_nats(v))),
            Leakage::Unbounded => Leakage::Unbounded,
        }
    }

    /// `f64::INFINITY` for the unbounded case.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl std::ops::Add for Leakage {
    type Output = Leakage;

    fn add(self, rhs: Leakage) -> Leakage {
        match (self, rhs) {
            (Leakage::Finite(a), Leakage::Finite(b)) => Leakage::Finite(a + b),
            _ => Leakage::Unbounded,
        }
    }
}

impl std::iter::Sum for Leakage {
    fn sum<I: Iterator<Item = Leakage>>(iter: I) -> Leakage {
        iter.fold(Leakage::Finite(0.0), |acc, x| acc + x)
    }
}

impl fmt::Display for Leakage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Leakage::Finite(v) => write!(f, "{v}"),
            Leakage::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for Leakage {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Leakage::Finite(v) => serializer.serialize_f64(*v),
            Leakage::Unbounded => serializer.serialize_str("unbounded"),
        }
    }
}
