//! Numeric backends.
//!
//! All map algebra is generic over [`Scalar`]. Two implementations exist:
//! `f64` for irrational parameters and `BigRational` for exact certification
//! of identities such as `f^q = Id`.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::error::ScalarError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Rational,
    Float,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Rational => "rational",
            Backend::Float => "float",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = ScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rational" | "exact" => Ok(Backend::Rational),
            "float" | "f64" => Ok(Backend::Float),
            other => Err(ScalarError::Parse(format!("unknown backend `{other}`"))),
        }
    }
}

/// Tolerance policy for the float backend. The exact backend ignores it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerance {
    /// Two points closer than this are the same point.
    pub point: f64,
    /// Two slopes closer than this are the same slope.
    pub slope: f64,
    /// Sign decisions inside `±sign_band` are undecided.
    pub sign_band: f64,
    /// Orbit closure threshold used by periodicity tests.
    pub orbit: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            point: 1e-12,
            slope: 1e-10,
            sign_band: 1e-10,
            orbit: 1e-9,
        }
    }
}

/// A real number in one of the two backends.
pub trait Scalar:
    Num + Signed + Clone + PartialOrd + Debug + Display + Send + Sync + 'static
{
    const BACKEND: Backend;

    fn from_i64(n: i64) -> Self;

    fn from_ratio(p: i64, q: i64) -> Self;

    /// Float backend: the value itself. Exact backend: the exact dyadic
    /// rational equal to `x`.
    fn from_f64(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    fn floor(&self) -> Self;

    fn floor_i64(&self) -> i64 {
        self.floor().to_f64() as i64
    }

    /// Square root. The exact backend only accepts perfect squares.
    fn sqrt(&self) -> Result<Self, ScalarError>;

    /// `self^e` for real `e`. The exact backend only accepts integer `e`.
    fn pow_real(&self, e: f64) -> Result<Self, ScalarError>;

    /// Point coincidence: exact equality, or `|a - b| <= eps`.
    fn near(&self, other: &Self, eps: f64) -> bool;

    /// Sign with a dead band: `None` when `|self| <= band` in the float
    /// backend. The exact backend always decides.
    fn sign_with_band(&self, band: f64) -> Option<Ordering>;

    fn parse(s: &str) -> Result<Self, ScalarError>;

    fn to_json(&self) -> Value;

    fn from_json(v: &Value) -> Result<Self, ScalarError> {
        match v {
            Value::String(s) => Self::parse(s),
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Self::from_i64(i))
                } else {
                    Self::parse(&n.to_string())
                }
            }
            other => Err(ScalarError::Parse(format!("expected a number, got {other}"))),
        }
    }

    fn is_exact() -> bool {
        Self::BACKEND == Backend::Rational
    }

    /// Fractional part in `[0, 1)`.
    fn fract_unit(&self) -> Self {
        let f = self.clone() - self.floor();
        // float: x - floor(x) can round up to exactly 1
        if f >= Self::one() {
            Self::zero()
        } else {
            f
        }
    }

    fn half() -> Self {
        Self::from_ratio(1, 2)
    }
}

impl Scalar for f64 {
    const BACKEND: Backend = Backend::Float;

    fn from_i64(n: i64) -> Self {
        n as f64
    }

    fn from_ratio(p: i64, q: i64) -> Self {
        p as f64 / q as f64
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn floor(&self) -> Self {
        f64::floor(*self)
    }

    fn floor_i64(&self) -> i64 {
        f64::floor(*self) as i64
    }

    fn sqrt(&self) -> Result<Self, ScalarError> {
        if *self < 0.0 {
            return Err(ScalarError::Domain(format!("sqrt of negative value {self}")));
        }
        Ok(f64::sqrt(*self))
    }

    fn pow_real(&self, e: f64) -> Result<Self, ScalarError> {
        Ok(self.powf(e))
    }

    fn near(&self, other: &Self, eps: f64) -> bool {
        (self - other).abs() <= eps
    }

    fn sign_with_band(&self, band: f64) -> Option<Ordering> {
        if *self > band {
            Some(Ordering::Greater)
        } else if *self < -band {
            Some(Ordering::Less)
        } else {
            None
        }
    }

    fn parse(s: &str) -> Result<Self, ScalarError> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
            return Scalar::sqrt(&<f64 as Scalar>::parse(inner)?);
        }
        if let Some((p, q)) = s.split_once('/') {
            let p: f64 = p.trim().parse().map_err(|_| ScalarError::Parse(s.to_string()))?;
            let q: f64 = q.trim().parse().map_err(|_| ScalarError::Parse(s.to_string()))?;
            if q == 0.0 {
                return Err(ScalarError::Parse(format!("zero denominator in `{s}`")));
            }
            return Ok(p / q);
        }
        s.parse().map_err(|_| ScalarError::Parse(s.to_string()))
    }

    fn to_json(&self) -> Value {
        serde_json::Number::from_f64(*self)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }
}

impl Scalar for BigRational {
    const BACKEND: Backend = Backend::Rational;

    fn from_i64(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn from_ratio(p: i64, q: i64) -> Self {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    fn from_f64(x: f64) -> Self {
        <BigRational as FromPrimitive>::from_f64(x).expect("finite float")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn floor(&self) -> Self {
        num_rational::Ratio::floor(self)
    }

    fn floor_i64(&self) -> i64 {
        num_rational::Ratio::floor(self)
            .to_integer()
            .to_i64()
            .expect("integer part fits in i64")
    }

    fn sqrt(&self) -> Result<Self, ScalarError> {
        if self.is_negative() {
            return Err(ScalarError::Domain(format!("sqrt of negative value {self}")));
        }
        let n = self.numer().sqrt();
        let d = self.denom().sqrt();
        if &(&n * &n) == self.numer() && &(&d * &d) == self.denom() {
            Ok(BigRational::new(n, d))
        } else {
            Err(ScalarError::IrrationalInExact(format!("sqrt({self})")))
        }
    }

    fn pow_real(&self, e: f64) -> Result<Self, ScalarError> {
        if e.fract() != 0.0 || e.abs() > i32::MAX as f64 {
            return Err(ScalarError::IrrationalInExact(format!("({self})^{e}")));
        }
        Ok(num_traits::Pow::pow(self, e as i32))
    }

    fn near(&self, other: &Self, _eps: f64) -> bool {
        self == other
    }

    fn sign_with_band(&self, _band: f64) -> Option<Ordering> {
        Some(self.cmp(&BigRational::zero()))
    }

    fn parse(s: &str) -> Result<Self, ScalarError> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
            return <BigRational as Scalar>::parse(inner)?.sqrt();
        }
        if let Some((p, q)) = s.split_once('/') {
            let p: BigInt = p.trim().parse().map_err(|_| ScalarError::Parse(s.to_string()))?;
            let q: BigInt = q.trim().parse().map_err(|_| ScalarError::Parse(s.to_string()))?;
            if q.is_zero() {
                return Err(ScalarError::Parse(format!("zero denominator in `{s}`")));
            }
            return Ok(BigRational::new(p, q));
        }
        if let Ok(i) = s.parse::<BigInt>() {
            return Ok(BigRational::from_integer(i));
        }
        parse_decimal(s).ok_or_else(|| ScalarError::Parse(s.to_string()))
    }

    fn to_json(&self) -> Value {
        if self.denom().is_one() {
            Value::String(self.numer().to_string())
        } else {
            Value::String(format!("{}/{}", self.numer(), self.denom()))
        }
    }
}

/// Exact value of a plain decimal literal such as `-0.125`.
fn parse_decimal(s: &str) -> Option<BigRational> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.')?;
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let scale = num_traits::pow(BigInt::from(10), frac.len());
    let r = BigRational::new(digits, scale);
    Some(if neg { -r } else { r })
}

/// `serialize_with` helper for scalar fields.
pub fn serialize<S: Scalar, Ser: Serializer>(v: &S, ser: Ser) -> Result<Ser::Ok, Ser::Error> {
    v.to_json().serialize(ser)
}

/// `serialize_with` helper for scalar lists.
pub fn serialize_vec<S: Scalar, Ser: Serializer>(
    v: &[S],
    ser: Ser,
) -> Result<Ser::Ok, Ser::Error> {
    v.iter().map(Scalar::to_json).collect::<Vec<_>>().serialize(ser)
}

/// `serialize_with` helper for optional scalar fields.
pub fn serialize_opt<S: Scalar, Ser: Serializer>(
    v: &Option<S>,
    ser: Ser,
) -> Result<Ser::Ok, Ser::Error> {
    v.as_ref().map(Scalar::to_json).serialize(ser)
}

pub fn min_of<S: Scalar>(values: impl IntoIterator<Item = S>) -> Option<S> {
    values
        .into_iter()
        .reduce(|a, b| if b < a { b } else { a })
}

pub fn max_of<S: Scalar>(values: impl IntoIterator<Item = S>) -> Option<S> {
    values
        .into_iter()
        .reduce(|a, b| if b > a { b } else { a })
}
