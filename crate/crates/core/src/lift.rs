//! Degree-one piecewise-linear lifts of circle homeomorphisms.
//!
//! A lift is stored as `n` marked points `b_1 < ... < b_n` in `[0, 1)` with
//! values `φ_k = F(b_k)`. The wraparound pair `(b_1 + 1, φ_1 + 1)` closes the
//! last piece, so `F(x + 1) = F(x) + 1` holds by construction. Marked points
//! need not be genuine breaks until [`PwlLift::canonicalize`] is applied.

use std::cmp::Ordering;

use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scalar::{Backend, Scalar, Tolerance};

/// Default cap on the number of pieces produced by [`PwlLift::power`].
pub const DEFAULT_PIECE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PwlLift<S> {
    breaks: Vec<S>,
    values: Vec<S>,
    slopes: Vec<S>,
    tol: Tolerance,
}

/// Jump ratios `J(b_i) = F'(b_i+) / F'(b_i-)` at the genuine breaks.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct JumpData<S> {
    pub indices: Vec<usize>,
    #[serde(serialize_with = "crate::scalar::serialize_vec")]
    pub ratios: Vec<S>,
    #[serde(serialize_with = "crate::scalar::serialize")]
    pub product: S,
}

impl<S: Scalar> PwlLift<S> {
    /// Validates marked points and values and derives the slopes.
    pub fn new(breaks: Vec<S>, values: Vec<S>) -> Result<Self> {
        if breaks.is_empty() || values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if breaks.len() != values.len() {
            return Err(Error::LengthMismatch {
                breaks: breaks.len(),
                values: values.len(),
            });
        }
        let n = breaks.len();
        if breaks[0] < S::zero() || breaks[n - 1] >= S::one() {
            return Err(Error::NonMonotone(format!(
                "marked points must lie in [0, 1), got first {} last {}",
                breaks[0],
                breaks[n - 1]
            )));
        }
        let mut slopes = Vec::with_capacity(n);
        for k in 0..n {
            let (b_next, v_next) = if k + 1 < n {
                (breaks[k + 1].clone(), values[k + 1].clone())
            } else {
                (breaks[0].clone() + S::one(), values[0].clone() + S::one())
            };
            let db = b_next - breaks[k].clone();
            let dv = v_next - values[k].clone();
            if db <= S::zero() {
                return Err(Error::NonMonotone(format!(
                    "marked points not strictly increasing at index {k}"
                )));
            }
            if dv <= S::zero() {
                return Err(Error::NonMonotone(format!(
                    "slope on piece {k} is not positive"
                )));
            }
            slopes.push(if n == 1 { S::one() } else { dv / db });
        }
        Ok(PwlLift {
            breaks,
            values,
            slopes,
            tol: Tolerance::default(),
        })
    }

    /// The rigid rotation `x -> x + shift`.
    pub fn rigid(shift: S) -> Self {
        PwlLift {
            breaks: vec![S::zero()],
            values: vec![shift],
            slopes: vec![S::one()],
            tol: Tolerance::default(),
        }
    }

    pub fn identity() -> Self {
        Self::rigid(S::zero())
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn tolerance(&self) -> &Tolerance {
        &self.tol
    }

    pub fn breaks(&self) -> &[S] {
        &self.breaks
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn slopes(&self) -> &[S] {
        &self.slopes
    }

    /// Number of marked points (equivalently, of affine pieces per period).
    pub fn len(&self) -> usize {
        self.breaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breaks.is_empty()
    }

    /// Piece containing `r` (taken in `[0, 1)`), and whether `r` had to be
    /// shifted by one to land in the wraparound piece `[b_n, b_1 + 1)`.
    fn piece_of(&self, r: &S) -> (usize, bool) {
        let count = self.breaks.partition_point(|b| b <= r);
        if count == 0 {
            (self.breaks.len() - 1, true)
        } else {
            (count - 1, false)
        }
    }

    pub fn eval(&self, x: &S) -> S {
        let k = x.floor();
        let r = x.clone() - k.clone();
        let (i, wrapped) = self.piece_of(&r);
        if wrapped {
            self.values[i].clone() + self.slopes[i].clone() * (r + S::one() - self.breaks[i].clone())
                - S::one()
                + k
        } else {
            self.values[i].clone() + self.slopes[i].clone() * (r - self.breaks[i].clone()) + k
        }
    }

    pub fn eval_inverse(&self, y: &S) -> S {
        let k = (y.clone() - self.values[0].clone()).floor();
        let r = y.clone() - k.clone();
        let count = self.values.partition_point(|v| v <= &r);
        let i = count.saturating_sub(1);
        self.breaks[i].clone() + (r - self.values[i].clone()) / self.slopes[i].clone() + k
    }

    /// Right-sided slope at `x`.
    pub fn slope_at(&self, x: &S) -> S {
        let r = x.fract_unit();
        self.slopes[self.piece_of(&r).0].clone()
    }

    /// Left-sided slope at `x`.
    pub fn left_slope_at(&self, x: &S) -> S {
        let r = x.fract_unit();
        let count = self.breaks.partition_point(|b| b < &r);
        let i = if count == 0 { self.breaks.len() - 1 } else { count - 1 };
        self.slopes[i].clone()
    }

    pub fn max_slope(&self) -> S {
        crate::scalar::max_of(self.slopes.iter().cloned()).expect("non-empty lift")
    }

    pub fn min_slope(&self) -> S {
        crate::scalar::min_of(self.slopes.iter().cloned()).expect("non-empty lift")
    }

    /// `self ∘ inner`.
    ///
    /// Marked points are the marked points of `inner` together with the
    /// preimages under `inner` of the marked points of `self`.
    pub fn compose(&self, inner: &Self) -> Self {
        let eps = self.tol.point;
        let mut pts: Vec<S> = inner.breaks.clone();
        pts.extend(
            self.breaks
                .iter()
                .map(|b| inner.eval_inverse(b).fract_unit()),
        );
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let mut merged: Vec<S> = Vec::with_capacity(pts.len());
        for p in pts {
            match merged.last() {
                Some(last) if p.near(last, eps) => {}
                _ => merged.push(p),
            }
        }
        if merged.len() > 1 {
            let wrap = merged[0].clone() + S::one();
            if merged[merged.len() - 1].near(&wrap, eps) {
                merged.pop();
            }
        }
        let n = merged.len();
        let values: Vec<S> = merged.iter().map(|x| self.eval(&inner.eval(x))).collect();
        let slopes: Vec<S> = if n == 1 {
            vec![S::one()]
        } else {
            (0..n)
                .map(|i| {
                    let next = if i + 1 < n {
                        merged[i + 1].clone()
                    } else {
                        merged[0].clone() + S::one()
                    };
                    let mid = (merged[i].clone() + next) * S::half();
                    self.slope_at(&inner.eval(&mid)) * inner.slope_at(&mid)
                })
                .collect()
        };
        PwlLift {
            breaks: merged,
            values,
            slopes,
            tol: self.tol,
        }
    }

    /// `F^k` with the default piece cap.
    pub fn power(&self, k: usize) -> Result<Self> {
        self.power_capped(k, DEFAULT_PIECE_CAP)
    }

    /// `F^k` by repeated squaring; fails when an intermediate lift has more
    /// than `cap` pieces.
    pub fn power_capped(&self, k: usize, cap: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("power exponent must be >= 1".into()));
        }
        let check = |f: &Self| {
            if f.len() > cap {
                Err(Error::Overflow {
                    pieces: f.len(),
                    cap,
                })
            } else {
                Ok(())
            }
        };
        let mut acc: Option<Self> = None;
        let mut base = self.clone();
        let mut e = k;
        loop {
            if e & 1 == 1 {
                let next = match acc {
                    None => base.clone(),
                    Some(a) => a.compose(&base),
                };
                check(&next)?;
                acc = Some(next);
            }
            e >>= 1;
            if e == 0 {
                break;
            }
            base = base.compose(&base);
            check(&base)?;
        }
        Ok(acc.expect("k >= 1"))
    }

    fn same_slope(&self, a: &S, b: &S) -> bool {
        a.near(b, self.tol.slope)
    }

    /// Indices of marked points where the one-sided slopes differ.
    pub fn genuine_breaks(&self) -> Vec<usize> {
        let n = self.len();
        if n == 1 {
            return Vec::new();
        }
        (0..n)
            .filter(|&i| {
                let prev = &self.slopes[(i + n - 1) % n];
                !self.same_slope(&self.slopes[i], prev)
            })
            .collect()
    }

    /// Drops marked points that are not genuine breaks. A lift with no
    /// genuine break collapses to the single-point rigid form.
    pub fn canonicalize(&self) -> Self {
        let keep = self.genuine_breaks();
        if keep.is_empty() {
            return PwlLift {
                breaks: vec![self.breaks[0].clone()],
                values: vec![self.values[0].clone()],
                slopes: vec![S::one()],
                tol: self.tol,
            };
        }
        PwlLift {
            breaks: keep.iter().map(|&i| self.breaks[i].clone()).collect(),
            values: keep.iter().map(|&i| self.values[i].clone()).collect(),
            slopes: keep.iter().map(|&i| self.slopes[i].clone()).collect(),
            tol: self.tol,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.len() == 1 || self.genuine_breaks().len() == self.len()
    }

    /// `Some(ω)` when the lift is the rigid rotation `x -> x + ω`.
    pub fn rigid_shift(&self) -> Option<S> {
        let c = self.canonicalize();
        if c.len() == 1 {
            Some(c.values[0].clone() - c.breaks[0].clone())
        } else {
            None
        }
    }

    /// Minimum and maximum of `F(x) - x - shift`; both occur at marked points.
    pub fn displacement_range(&self, shift: &S) -> (S, S) {
        let d = self
            .breaks
            .iter()
            .zip(&self.values)
            .map(|(b, v)| v.clone() - b.clone() - shift.clone());
        let ds: Vec<S> = d.collect();
        (
            crate::scalar::min_of(ds.iter().cloned()).expect("non-empty lift"),
            crate::scalar::max_of(ds.into_iter()).expect("non-empty lift"),
        )
    }

    /// `J(b_i) = s_i / s_{i-1}` at a genuine break.
    pub fn jump(&self, i: usize) -> Result<S> {
        let n = self.len();
        if i >= n {
            return Err(Error::InvalidArgument(format!(
                "break index {i} out of range for {n} marked points"
            )));
        }
        let prev = &self.slopes[(i + n - 1) % n];
        if n == 1 || self.same_slope(&self.slopes[i], prev) {
            return Err(Error::NotABreak { index: i });
        }
        Ok(self.slopes[i].clone() / prev.clone())
    }

    pub fn jump_product(&self, set: &[usize]) -> Result<S> {
        set.iter()
            .try_fold(S::one(), |acc, &i| Ok(acc * self.jump(i)?))
    }

    pub fn jump_data(&self) -> JumpData<S> {
        let indices = self.genuine_breaks();
        let ratios: Vec<S> = indices
            .iter()
            .map(|&i| self.jump(i).expect("genuine break"))
            .collect();
        let product = ratios.iter().cloned().fold(S::one(), |a, r| a * r);
        JumpData {
            indices,
            ratios,
            product,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "breaks": self.breaks.iter().map(Scalar::to_json).collect::<Vec<_>>(),
            "values": self.values.iter().map(Scalar::to_json).collect::<Vec<_>>(),
            "backend": S::BACKEND.as_str(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Json("lift must be a JSON object".into()))?;
        for key in obj.keys() {
            if !matches!(key.as_str(), "breaks" | "values" | "backend") {
                return Err(Error::Json(format!("unknown lift field `{key}`")));
            }
        }
        if let Some(tag) = obj.get("backend") {
            let tag: Backend = serde_json::from_value(tag.clone())?;
            if tag != S::BACKEND {
                return Err(Error::Json(format!(
                    "lift backend `{}` does not match requested `{}`",
                    tag.as_str(),
                    S::BACKEND.as_str()
                )));
            }
        }
        let list = |key: &str| -> Result<Vec<S>> {
            obj.get(key)
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Json(format!("missing array `{key}`")))?
                .iter()
                .map(|x| S::from_json(x).map_err(Error::from))
                .collect()
        };
        Self::new(list("breaks")?, list("values")?)
    }
}

impl<S: Scalar> Serialize for PwlLift<S> {
    fn serialize<Ser: Serializer>(&self, ser: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        self.to_json().serialize(ser)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    type Q = BigRational;

    fn q(p: i64, d: i64) -> Q {
        Q::from_ratio(p, d)
    }

    fn coelho_third_half() -> PwlLift<Q> {
        PwlLift::new(vec![q(0, 1), q(1, 2)], vec![q(1, 3), q(1, 1)]).unwrap()
    }

    #[test]
    fn slopes_of_coelho_lift() {
        let f = coelho_third_half();
        assert_eq!(f.slopes(), &[q(4, 3), q(2, 3)]);
    }

    #[test]
    fn single_point_is_rigid() {
        let f = PwlLift::new(vec![q(0, 1)], vec![q(1, 3)]).unwrap();
        assert_eq!(f.slopes(), &[q(1, 1)]);
        assert_eq!(f.rigid_shift(), Some(q(1, 3)));
    }

    #[test]
    fn rejects_decreasing_values() {
        let err = PwlLift::new(vec![q(0, 1), q(1, 2)], vec![q(1, 1), q(1, 3)]).unwrap_err();
        assert!(matches!(err, Error::NonMonotone(_)));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(PwlLift::<Q>::new(vec![], vec![]).unwrap_err(), Error::EmptyInput);
        assert!(matches!(
            PwlLift::new(vec![q(0, 1)], vec![q(0, 1), q(1, 2)]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            PwlLift::new(vec![q(1, 2), q(1, 4)], vec![q(0, 1), q(1, 2)]),
            Err(Error::NonMonotone(_))
        ));
        assert!(matches!(
            PwlLift::new(vec![q(0, 1), q(1, 1)], vec![q(0, 1), q(1, 2)]),
            Err(Error::NonMonotone(_))
        ));
        // last value too close to φ_1 + 1: wrap slope would be <= 0
        assert!(matches!(
            PwlLift::new(vec![q(0, 1), q(1, 2)], vec![q(0, 1), q(1, 1)]),
            Err(Error::NonMonotone(_))
        ));
    }

    #[test]
    fn eval_examples() {
        let rigid = PwlLift::rigid(1.0f64 / 3.0);
        assert!((rigid.eval(&2.25) - (2.25 + 1.0 / 3.0)).abs() < 1e-15);
        let f = coelho_third_half();
        assert_eq!(f.eval(&q(3, 2)), q(2, 1));
        assert_eq!(f.eval(&q(0, 1)), q(1, 3));
        assert_eq!(f.eval(&q(-1, 4)), f.eval(&q(3, 4)) - q(1, 1));
    }

    #[test]
    fn inverse_examples() {
        let rigid = PwlLift::rigid(q(1, 3));
        assert_eq!(rigid.eval_inverse(&q(1, 3)), q(0, 1));
        let f = coelho_third_half();
        assert_eq!(f.eval_inverse(&q(1, 1)), q(1, 2));
        assert_eq!(f.eval_inverse(&q(1, 2)), q(1, 8));
        assert_eq!(f.eval(&f.eval_inverse(&q(1, 2))), q(1, 2));
        assert_eq!(f.eval_inverse(&q(-7, 5)), f.eval_inverse(&q(3, 5)) - q(2, 1));
    }

    #[test]
    fn compose_rigid() {
        let r = PwlLift::rigid(q(1, 3));
        let rr = r.compose(&r);
        assert_eq!(rr.rigid_shift(), Some(q(2, 3)));
    }

    #[test]
    fn coelho_square_breaks() {
        let f = coelho_third_half();
        let raw = f.compose(&f);
        assert_eq!(raw.breaks(), &[q(0, 1), q(1, 8), q(1, 2)]);
        // the jumps at 1/2 cancel: b and 0 share an orbit
        assert_eq!(raw.slopes(), &[q(16, 9), q(8, 9), q(8, 9)]);
        let f2 = raw.canonicalize();
        assert_eq!(f2.breaks(), &[q(0, 1), q(1, 8)]);
        // brute-force oracle on a grid
        for i in 0..10_000 {
            let x = q(i, 10_000);
            assert_eq!(f2.eval(&x), f.eval(&f.eval(&x)));
        }
    }

    #[test]
    fn power_cap_and_argument() {
        let f = coelho_third_half();
        assert!(matches!(f.power(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            f.power_capped(20, 8),
            Err(Error::Overflow { cap: 8, .. })
        ));
        let r = PwlLift::rigid(q(1, 3));
        assert_eq!(r.power(3).unwrap().rigid_shift(), Some(q(1, 1)));
    }

    #[test]
    fn canonicalize_examples() {
        let f = PwlLift::new(vec![q(0, 1), q(1, 2)], vec![q(1, 4), q(3, 4)]).unwrap();
        let c = f.canonicalize();
        assert_eq!(c.len(), 1);
        assert_eq!(c.rigid_shift(), Some(q(1, 4)));
        let g = coelho_third_half();
        assert_eq!(g.canonicalize(), g);
        assert!(g.is_canonical());
    }

    #[test]
    fn jumps() {
        let lam = 2f64.sqrt();
        let c = 1.0 / (1.0 + lam);
        let f = PwlLift::new(vec![0.0, c], vec![c, 1.0]).unwrap();
        assert!((f.jump(0).unwrap() - lam * lam).abs() < 1e-12);
        assert!((f.jump(1).unwrap() - 1.0 / (lam * lam)).abs() < 1e-12);
        assert!((f.jump_product(&[0, 1]).unwrap() - 1.0).abs() < 1e-12);
        let r = PwlLift::new(vec![q(0, 1), q(1, 2)], vec![q(1, 4), q(3, 4)]).unwrap();
        assert_eq!(r.jump(1), Err(Error::NotABreak { index: 1 }));
    }

    #[test]
    fn json_round_trip() {
        let f = coelho_third_half();
        let v = f.to_json();
        assert_eq!(v["backend"], "rational");
        assert_eq!(v["values"][0], "1/3");
        assert_eq!(PwlLift::<Q>::from_json(&v).unwrap(), f);
        assert!(PwlLift::<f64>::from_json(&v).is_err());
        let bad = json!({"breaks": ["0"], "values": ["1/3"], "extra": 1});
        assert!(PwlLift::<Q>::from_json(&bad).is_err());
    }
}
