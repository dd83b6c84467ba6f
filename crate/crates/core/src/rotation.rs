//! Rotation numbers: Birkhoff enclosures, exact rational values with
//! periodic-point witnesses, periodic-point enumeration and mode-locked
//! parameter intervals.

use std::cmp::Ordering;
use std::collections::HashMap;

use num_integer::Integer;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::families::FamilySpec;
use crate::lift::PwlLift;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum RotationKind<S> {
    /// `ρ = p/q` with `F^q(witness) = witness + p`.
    Exact { p: i64, q: i64, witness: S },
    /// `ρ ∈ [lo, hi]`.
    Enclosure { lo: S, hi: S },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationResult<S> {
    pub kind: RotationKind<S>,
    /// Map evaluations for Birkhoff sums, candidate tests for the exact search.
    pub iterations: u64,
}

impl<S: Scalar> RotationResult<S> {
    pub fn is_exact(&self) -> bool {
        matches!(self.kind, RotationKind::Exact { .. })
    }

    pub fn fraction(&self) -> Option<(i64, i64)> {
        match self.kind {
            RotationKind::Exact { p, q, .. } => Some((p, q)),
            RotationKind::Enclosure { .. } => None,
        }
    }

    pub fn bounds(&self) -> (S, S) {
        match &self.kind {
            RotationKind::Exact { p, q, .. } => (S::from_ratio(*p, *q), S::from_ratio(*p, *q)),
            RotationKind::Enclosure { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    pub fn bounds_f64(&self) -> (f64, f64) {
        let (lo, hi) = self.bounds();
        (lo.to_f64(), hi.to_f64())
    }

    pub fn midpoint_f64(&self) -> f64 {
        let (lo, hi) = self.bounds_f64();
        0.5 * (lo + hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.bounds_f64();
        lo <= x && x <= hi
    }

    pub fn to_json(&self) -> Value {
        let (lo, hi) = self.bounds();
        match &self.kind {
            RotationKind::Exact { p, q, witness } => json!({
                "kind": "exact",
                "p": p,
                "q": q,
                "lo": lo.to_json(),
                "hi": hi.to_json(),
                "witness": witness.to_json(),
                "iterations": self.iterations,
            }),
            RotationKind::Enclosure { .. } => json!({
                "kind": "enclosure",
                "p": Value::Null,
                "q": Value::Null,
                "lo": lo.to_json(),
                "hi": hi.to_json(),
                "witness": Value::Null,
                "iterations": self.iterations,
            }),
        }
    }
}

impl<S: Scalar> Serialize for RotationResult<S> {
    fn serialize<Ser: serde::Serializer>(
        &self,
        ser: Ser,
    ) -> std::result::Result<Ser::Ok, Ser::Error> {
        self.to_json().serialize(ser)
    }
}

/// `F^m(0)` accumulated as integer turns plus a fractional position.
fn orbit_displacement<S: Scalar>(f: &PwlLift<S>, m: u64) -> S {
    let mut x = S::zero();
    let mut turns = S::zero();
    for _ in 0..m {
        let y = f.eval(&x);
        let fl = y.floor();
        x = y - fl.clone();
        turns = turns + fl;
    }
    turns + x
}

/// `[(F^m(0) - 1)/m, (F^m(0) + 1)/m]`, valid since `|F^m(x) - x - mρ| < 1`.
pub fn birkhoff_enclosure<S: Scalar>(f: &PwlLift<S>, m: u64) -> RotationResult<S> {
    assert!(m >= 1, "need at least one iterate");
    let d = orbit_displacement(f, m);
    let m_s = S::from_i64(m as i64);
    RotationResult {
        kind: RotationKind::Enclosure {
            lo: (d.clone() - S::one()) / m_s.clone(),
            hi: (d + S::one()) / m_s,
        },
        iterations: m,
    }
}

/// Birkhoff enclosure computed on the explicit lift `F^stride`, then divided
/// by `stride`. The width is `2/(stride·m)` for `m` evaluations of `F^stride`.
pub fn birkhoff_enclosure_strided<S: Scalar>(
    f: &PwlLift<S>,
    stride: usize,
    m: u64,
) -> Result<RotationResult<S>> {
    let g = f.power(stride)?;
    let inner = birkhoff_enclosure(&g, m);
    let (lo, hi) = inner.bounds();
    let k = S::from_i64(stride as i64);
    Ok(RotationResult {
        kind: RotationKind::Enclosure {
            lo: lo / k.clone(),
            hi: hi / k,
        },
        iterations: m * stride as u64,
    })
}

/// Outcome of comparing `ρ(F)` with a rational `p/q` through the explicit
/// lift `F^q`.
#[derive(Debug, Clone)]
pub struct RationalTest<S> {
    /// Ordering of `ρ(F)` relative to `p/q`; `None` when a float sign falls
    /// inside the dead band.
    pub order: Option<Ordering>,
    /// Minimum of `F^q(x) - x - p` over the marked points of `F^q`.
    pub min: S,
    /// Maximum of `F^q(x) - x - p`.
    pub max: S,
    /// A root of `F^q(x) - x - p` when `order == Some(Equal)`.
    pub witness: Option<S>,
}

/// Decides `ρ(F)` against `p/q` from the sign of `E(x) = F^q(x) - x - p`.
///
/// `E` is piecewise linear, so its extrema sit at marked points of `F^q`:
/// `min E > 0` means `ρ > p/q`, `max E < 0` means `ρ < p/q`, otherwise `E`
/// has a root and `ρ = p/q`. In the float backend a map with `|E|` inside
/// the sign band everywhere counts as `F^q = x + p`.
pub fn compare_rotation<S: Scalar>(f: &PwlLift<S>, p: i64, q: i64) -> Result<RationalTest<S>> {
    if q < 1 {
        return Err(Error::InvalidArgument(format!("denominator {q} must be >= 1")));
    }
    let g = f.power(q as usize)?;
    let shift = S::from_i64(p);
    let (min, max) = g.displacement_range(&shift);
    let band = f.tolerance().sign_band;
    let lo_sign = min.sign_with_band(band);
    let hi_sign = max.sign_with_band(band);
    let order = match (lo_sign, hi_sign) {
        (Some(Ordering::Greater), _) => Some(Ordering::Greater),
        (_, Some(Ordering::Less)) => Some(Ordering::Less),
        (Some(Ordering::Less), Some(Ordering::Greater)) => Some(Ordering::Equal),
        (Some(Ordering::Equal), _) | (_, Some(Ordering::Equal)) => Some(Ordering::Equal),
        (None, None) => Some(Ordering::Equal),
        _ => None,
    };
    let witness = if order == Some(Ordering::Equal) {
        Some(if lo_sign.is_none() && hi_sign.is_none() {
            f.breaks()[0].clone()
        } else {
            root_of_displacement(&g, &shift, band)
        })
    } else {
        None
    };
    Ok(RationalTest {
        order,
        min,
        max,
        witness,
    })
}

/// A root of `G(x) - x - shift`, assuming one exists.
fn root_of_displacement<S: Scalar>(g: &PwlLift<S>, shift: &S, band: f64) -> S {
    let n = g.len();
    let e: Vec<S> = (0..n)
        .map(|i| g.values()[i].clone() - g.breaks()[i].clone() - shift.clone())
        .collect();
    if let Some(i) = e
        .iter()
        .position(|v| v.sign_with_band(band).is_none_or(|o| o == Ordering::Equal))
    {
        return g.breaks()[i].clone();
    }
    for i in 0..n {
        let j = (i + 1) % n;
        if (e[i] < S::zero()) != (e[j] < S::zero()) {
            let slope = g.slopes()[i].clone();
            return g.breaks()[i].clone() - e[i].clone() / (slope - S::one());
        }
    }
    g.breaks()[0].clone()
}

/// Largest `k >= 0` with `pred(j)` true for every `1 <= j <= k`, for a
/// predicate that is true up to some index and false afterwards.
fn last_true(mut pred: impl FnMut(i64) -> Result<bool>) -> Result<i64> {
    let mut lo = 0i64;
    let mut step = 1i64;
    let mut hi;
    loop {
        let cand = lo + step;
        if pred(cand)? {
            lo = cand;
            step *= 2;
        } else {
            hi = cand;
            break;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

struct Classifier<'a, S: Scalar> {
    f: &'a PwlLift<S>,
    cache: HashMap<(i64, i64), RationalTest<S>>,
}

impl<S: Scalar> Classifier<'_, S> {
    fn test(&mut self, p: i64, q: i64) -> Result<RationalTest<S>> {
        if let Some(t) = self.cache.get(&(p, q)) {
            return Ok(t.clone());
        }
        let t = compare_rotation(self.f, p, q)?;
        self.cache.insert((p, q), t.clone());
        Ok(t)
    }

    fn order(&mut self, p: i64, q: i64) -> Result<Option<Ordering>> {
        Ok(self.test(p, q)?.order)
    }

    fn exact(&self, p: i64, q: i64, t: RationalTest<S>) -> RotationResult<S> {
        RotationResult {
            kind: RotationKind::Exact {
                p,
                q,
                witness: t.witness.expect("equal test carries a witness"),
            },
            iterations: self.cache.len() as u64,
        }
    }

    fn enclosure(&self, a: (i64, i64), b: (i64, i64)) -> RotationResult<S> {
        RotationResult {
            kind: RotationKind::Enclosure {
                lo: S::from_ratio(a.0, a.1),
                hi: S::from_ratio(b.0, b.1),
            },
            iterations: self.cache.len() as u64,
        }
    }
}

/// Stern–Brocot search for `ρ(F)` among fractions with denominator at most
/// `q_max`.
///
/// Returns `Exact` with a witness root of `F^q(x) - x - p` as soon as a
/// candidate matches, or the tightest mediant enclosure once `q_max` is
/// exhausted (or a float sign decision becomes undecided).
pub fn exact_rotation<S: Scalar>(f: &PwlLift<S>, q_max: u64) -> Result<RotationResult<S>> {
    if q_max < 1 {
        return Err(Error::InvalidArgument("q_max must be >= 1".into()));
    }
    let q_max = q_max as i64;
    let mut c = Classifier {
        f,
        cache: HashMap::new(),
    };

    // ρ lies between the extrema of F(x) - x
    let (dmin, dmax) = f.displacement_range(&S::zero());
    let start = dmin.floor_i64();
    let end = -((-dmax).floor_i64());
    let mut left = start;
    let mut right = end.max(start + 1);
    for k in start..=end {
        let t = c.test(k, 1)?;
        match t.order {
            Some(Ordering::Equal) => return Ok(c.exact(k, 1, t)),
            Some(Ordering::Greater) => left = k,
            Some(Ordering::Less) => {
                right = k;
                break;
            }
            None => return Ok(c.enclosure((k - 1, 1), (k + 1, 1))),
        }
    }

    let mut l = (left, 1i64);
    let mut r = (right, 1i64);
    if r.0 - l.0 > 1 {
        return Ok(c.enclosure(l, r));
    }
    loop {
        let j = last_true(|j| {
            let m = (l.0 + j * r.0, l.1 + j * r.1);
            Ok(m.1 <= q_max && c.order(m.0, m.1)? == Some(Ordering::Greater))
        })?;
        l = (l.0 + j * r.0, l.1 + j * r.1);
        let m = (l.0 + r.0, l.1 + r.1);
        if m.1 > q_max {
            break;
        }
        let t = c.test(m.0, m.1)?;
        match t.order {
            Some(Ordering::Equal) => return Ok(c.exact(m.0, m.1, t)),
            Some(Ordering::Less) => {}
            Some(Ordering::Greater) => {
                l = m;
                continue;
            }
            None => break,
        }
        let j = last_true(|j| {
            let m = (r.0 + j * l.0, r.1 + j * l.1);
            Ok(m.1 <= q_max && c.order(m.0, m.1)? == Some(Ordering::Less))
        })?;
        r = (r.0 + j * l.0, r.1 + j * l.1);
        let m = (l.0 + r.0, l.1 + r.1);
        if m.1 > q_max {
            break;
        }
        let t = c.test(m.0, m.1)?;
        match t.order {
            Some(Ordering::Equal) => return Ok(c.exact(m.0, m.1, t)),
            Some(Ordering::Greater) => {}
            Some(Ordering::Less) => r = m,
            None => break,
        }
    }
    Ok(c.enclosure(l, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Attracting,
    Repelling,
    /// One-sided slopes on opposite sides of 1, or equal to 1.
    SemiStable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct PeriodicPoint<S> {
    #[serde(serialize_with = "crate::scalar::serialize")]
    pub point: S,
    #[serde(serialize_with = "crate::scalar::serialize")]
    pub left_slope: S,
    #[serde(serialize_with = "crate::scalar::serialize")]
    pub right_slope: S,
}

impl<S: Scalar> PeriodicPoint<S> {
    pub fn stability(&self) -> Stability {
        let one = S::one();
        if self.left_slope < one && self.right_slope < one {
            Stability::Attracting
        } else if self.left_slope > one && self.right_slope > one {
            Stability::Repelling
        } else {
            Stability::SemiStable
        }
    }
}

/// All solutions of `F^q(x) = x + p` in `[0, 1)`, with the one-sided slopes
/// of `F^q` there.
pub fn periodic_points<S: Scalar>(
    f: &PwlLift<S>,
    p: i64,
    q: i64,
) -> Result<Vec<PeriodicPoint<S>>> {
    if q < 1 || p.gcd(&q) != 1 {
        return Err(Error::InvalidArgument(format!(
            "{p}/{q} is not a reduced fraction with positive denominator"
        )));
    }
    let g = f.power(q as usize)?.canonicalize();
    let band = f.tolerance().sign_band;
    let shift = S::from_i64(p);
    let n = g.len();
    let e: Vec<S> = (0..n)
        .map(|i| g.values()[i].clone() - g.breaks()[i].clone() - shift.clone())
        .collect();
    let is_zero = |v: &S| v.sign_with_band(band).is_none_or(|o| o == Ordering::Equal);
    if n == 1 {
        if is_zero(&e[0]) {
            let lo = g.breaks()[0].to_f64();
            return Err(Error::IdentityPiece { lo, hi: lo + 1.0 });
        }
        return Ok(Vec::new());
    }
    let mut out: Vec<PeriodicPoint<S>> = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        let next_break = if j == 0 {
            g.breaks()[0].clone() + S::one()
        } else {
            g.breaks()[j].clone()
        };
        let slope = g.slopes()[i].clone();
        if is_zero(&e[i]) && is_zero(&e[j]) && slope.near(&S::one(), f.tolerance().slope) {
            return Err(Error::IdentityPiece {
                lo: g.breaks()[i].to_f64(),
                hi: next_break.to_f64(),
            });
        }
        if is_zero(&e[i]) {
            out.push(PeriodicPoint {
                point: g.breaks()[i].clone(),
                left_slope: g.slopes()[(i + n - 1) % n].clone(),
                right_slope: slope,
            });
        } else if !is_zero(&e[j]) && ((e[i] < S::zero()) != (e[j] < S::zero())) {
            let x = g.breaks()[i].clone() - e[i].clone() / (slope.clone() - S::one());
            out.push(PeriodicPoint {
                point: x.fract_unit(),
                left_slope: slope.clone(),
                right_slope: slope,
            });
        }
    }
    out.sort_by(|a, b| a.point.partial_cmp(&b.point).unwrap_or(Ordering::Equal));
    Ok(out)
}

/// Extremes of `F_μ^q(x) - x - p` recorded at a bracketing endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct EndpointCertificate<S> {
    #[serde(serialize_with = "crate::scalar::serialize")]
    pub param: S,
    #[serde(serialize_with = "crate::scalar::serialize")]
    pub min: S,
    #[serde(serialize_with = "crate::scalar::serialize")]
    pub max: S,
}

/// Outer enclosure `[lo_param, hi_param]` of the parameter set on which
/// `ρ(F_μ) = p/q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct ModeLockInterval<S> {
    pub p: i64,
    pub q: i64,
    #[serde(serialize_with = "crate::scalar::serialize")]
    pub lo_param: S,
    #[serde(serialize_with = "crate::scalar::serialize")]
    pub hi_param: S,
    /// Point just outside the interval at the low-parameter side.
    pub lo_certificate: EndpointCertificate<S>,
    /// Point just outside the interval at the high-parameter side.
    pub hi_certificate: EndpointCertificate<S>,
}

impl<S: Scalar> ModeLockInterval<S> {
    pub fn width(&self) -> S {
        self.hi_param.clone() - self.lo_param.clone()
    }
}

/// Locates both ends of `M_{p/q} = {μ : ρ(F_μ) = p/q}` inside `bracket` by
/// bisection, each to width `tol`.
///
/// The family must be monotone on the bracket, with `ρ` below `p/q` at one
/// end and above it at the other (which end is which follows from the
/// family's direction flag).
pub fn mode_lock_interval<S: Scalar>(
    family: &FamilySpec<S>,
    p: i64,
    q: i64,
    bracket: (S, S),
    tol: S,
) -> Result<ModeLockInterval<S>> {
    if q < 1 || p.gcd(&q) != 1 {
        return Err(Error::InvalidArgument(format!("{p}/{q} is not reduced")));
    }
    let (a, b) = if bracket.0 <= bracket.1 {
        bracket
    } else {
        (bracket.1, bracket.0)
    };
    let test = |mu: &S| -> Result<RationalTest<S>> {
        let f = family.instantiate(mu)?;
        compare_rotation(&f, p, q)
    };
    // below: ρ < p/q; above: ρ > p/q
    let (below, above) = if family.direction().is_increasing() {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    };
    let t_below = test(&below)?;
    let t_above = test(&above)?;
    if t_below.order != Some(Ordering::Less) || t_above.order != Some(Ordering::Greater) {
        return Err(Error::NotBracketed(format!(
            "need ρ < {p}/{q} at μ = {below} and ρ > {p}/{q} at μ = {above}; got {:?} and {:?}",
            t_below.order, t_above.order
        )));
    }
    let tol_abs = tol.abs();
    // first boundary: last parameter (from the below side) where ρ < p/q
    let (mut lo_out, mut lo_in) = (below.clone(), above.clone());
    let mut lo_cert = t_below.clone();
    while (lo_in.clone() - lo_out.clone()).abs() > tol_abs {
        let mid = (lo_in.clone() + lo_out.clone()) * S::half();
        let t = test(&mid)?;
        if t.order == Some(Ordering::Less) {
            lo_out = mid;
            lo_cert = t;
        } else {
            lo_in = mid;
        }
    }
    // second boundary: first parameter (from the below side) where ρ > p/q
    let (mut hi_in, mut hi_out) = (below.clone(), above.clone());
    let mut hi_cert = t_above.clone();
    while (hi_out.clone() - hi_in.clone()).abs() > tol_abs {
        let mid = (hi_in.clone() + hi_out.clone()) * S::half();
        let t = test(&mid)?;
        if t.order == Some(Ordering::Greater) {
            hi_out = mid;
            hi_cert = t;
        } else {
            hi_in = mid;
        }
    }
    let cert_lo = EndpointCertificate {
        param: lo_out.clone(),
        min: lo_cert.min,
        max: lo_cert.max,
    };
    let cert_hi = EndpointCertificate {
        param: hi_out.clone(),
        min: hi_cert.min,
        max: hi_cert.max,
    };
    let (lo_param, hi_param, lo_certificate, hi_certificate) = if lo_out <= hi_out {
        (lo_out, hi_out, cert_lo, cert_hi)
    } else {
        (hi_out, lo_out, cert_hi, cert_lo)
    };
    Ok(ModeLockInterval {
        p,
        q,
        lo_param,
        hi_param,
        lo_certificate,
        hi_certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    type Q = BigRational;

    #[test]
    fn birkhoff_rigid_third() {
        let f = PwlLift::rigid(1.0f64 / 3.0);
        let r = birkhoff_enclosure(&f, 100);
        let (lo, hi) = r.bounds_f64();
        assert!((lo - (100.0 / 3.0 - 1.0) / 100.0).abs() < 1e-12);
        assert!((hi - (100.0 / 3.0 + 1.0) / 100.0).abs() < 1e-12);
        assert!(r.contains(1.0 / 3.0));
    }

    #[test]
    fn exact_rigid_third() {
        let f = PwlLift::rigid(Q::from_ratio(1, 3));
        let r = exact_rotation(&f, 10).unwrap();
        assert_eq!(r.fraction(), Some((1, 3)));
    }

    #[test]
    fn exact_rotation_of_integer_and_negative_shift() {
        let f = PwlLift::rigid(Q::from_ratio(-5, 2));
        assert_eq!(exact_rotation(&f, 4).unwrap().fraction(), Some((-5, 2)));
        let g = PwlLift::rigid(Q::from_i64(3));
        assert_eq!(exact_rotation(&g, 4).unwrap().fraction(), Some((3, 1)));
    }

    #[test]
    fn exact_rotation_finds_deep_fraction() {
        // ρ = 7/19 requires several Stern–Brocot runs
        let f = PwlLift::rigid(Q::from_ratio(7, 19));
        let r = exact_rotation(&f, 30).unwrap();
        assert_eq!(r.fraction(), Some((7, 19)));
        let r = exact_rotation(&f, 18).unwrap();
        let (lo, hi) = r.bounds();
        assert!(lo < Q::from_ratio(7, 19) && Q::from_ratio(7, 19) < hi);
        assert!(!r.is_exact());
    }

    #[test]
    fn identity_piece_for_rigid_half() {
        let f = PwlLift::rigid(Q::from_ratio(1, 2));
        match periodic_points(&f, 1, 2) {
            Err(Error::IdentityPiece { lo, hi }) => {
                assert_eq!(lo, 0.0);
                assert_eq!(hi, 1.0);
            }
            other => panic!("expected IdentityPiece, got {other:?}"),
        }
    }

    #[test]
    fn unreduced_fraction_rejected() {
        let f = PwlLift::rigid(Q::from_ratio(1, 2));
        assert!(matches!(periodic_points(&f, 2, 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn last_true_search() {
        assert_eq!(last_true(|k| Ok(k <= 37)).unwrap(), 37);
        assert_eq!(last_true(|_| Ok(false)).unwrap(), 0);
    }
}
