//! Conjugacy to rigid rational rotations.
//!
//! A PWL homeomorphism with rational rotation number `p/q` is conjugate to
//! `x ↦ x + p/q` exactly when every break point is periodic. This module
//! checks that condition, cross-checks it against `F^q = x + p`, builds the
//! PWL conjugacy and the invariant density, and computes the growth
//! diagnostics used when the condition fails.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lift::{PwlLift, DEFAULT_PIECE_CAP};
use crate::rotation::{exact_rotation, RotationKind};
use crate::scalar::Scalar;

/// Seed for the random arcs of [`verify_invariance`].
pub const INVARIANCE_SEED: u64 = 0x5eed_0f_a1c1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct OrbitPoint<S> {
    #[serde(serialize_with = "crate::scalar::serialize")]
    pub point: S,
    /// Index into the canonical break list when the point is a break.
    pub break_index: Option<usize>,
}

/// One periodic orbit through break points, in iteration order starting at
/// its lowest-index break.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct BreakOrbit<S> {
    pub points: Vec<OrbitPoint<S>>,
    /// The break indices on this orbit (the set `S_r`).
    pub breaks: Vec<usize>,
}

/// Grouping of the genuine breaks of a canonical lift into periodic orbits
/// of a common period `q`. Break indices refer to `f.canonicalize()`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct OrbitPartition<S> {
    pub p: i64,
    pub q: i64,
    pub orbits: Vec<BreakOrbit<S>>,
}

impl<S: Scalar> OrbitPartition<S> {
    /// Number of break orbits `K`.
    pub fn orbit_count(&self) -> usize {
        self.orbits.len()
    }

    /// All orbit points in `[0, 1)`, sorted.
    pub fn landmarks(&self) -> Vec<S> {
        let mut pts: Vec<S> = self
            .orbits
            .iter()
            .flat_map(|o| o.points.iter().map(|p| p.point.clone()))
            .collect();
        sort_scalars(&mut pts);
        pts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"), tag = "kind", rename_all = "snake_case")]
pub enum OrbitOutcome<S> {
    Periodic(OrbitPartition<S>),
    /// The orbit of break `break_index` does not close after `q` steps:
    /// `F^q(b) - b - p = drift`.
    NotPeriodic {
        p: i64,
        q: i64,
        break_index: usize,
        #[serde(serialize_with = "crate::scalar::serialize")]
        drift: S,
    },
}

fn sort_scalars<S: Scalar>(v: &mut [S]) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
}

fn iterate<S: Scalar>(f: &PwlLift<S>, x: &S, k: i64) -> S {
    (0..k).fold(x.clone(), |y, _| f.eval(&y))
}

/// `p` such that `F^q(x) - x` is closest to `p` at the first marked point.
fn nearest_turns<S: Scalar>(f: &PwlLift<S>, q: i64) -> i64 {
    let b = f.breaks()[0].clone();
    let d = iterate(f, &b, q) - b;
    (d + S::half()).floor_i64()
}

/// Rotation number `p/q` from the exact search, or `RotationIrrational`.
fn certified_fraction<S: Scalar>(f: &PwlLift<S>, q_cap: u64) -> Result<(i64, i64)> {
    match exact_rotation(f, q_cap)?.kind {
        RotationKind::Exact { p, q, .. } => Ok((p, q)),
        RotationKind::Enclosure { .. } => Err(Error::RotationIrrational { q_cap }),
    }
}

/// Iterates every genuine break of `f` for `q` steps and groups the breaks
/// into periodic orbits.
///
/// With `q_hint` the period is taken as given and `p` is read off the first
/// break; otherwise `p/q` comes from [`exact_rotation`] with denominators up
/// to `q_cap`.
pub fn break_orbit_partition<S: Scalar>(
    f: &PwlLift<S>,
    q_hint: Option<u64>,
    q_cap: u64,
) -> Result<OrbitOutcome<S>> {
    let f = f.canonicalize();
    let (p, q) = match q_hint {
        Some(0) => return Err(Error::InvalidArgument("period hint must be >= 1".into())),
        Some(q) => (nearest_turns(&f, q as i64), q as i64),
        None => certified_fraction(&f, q_cap)?,
    };
    partition_with(&f, p, q)
}

fn partition_with<S: Scalar>(f: &PwlLift<S>, p: i64, q: i64) -> Result<OrbitOutcome<S>> {
    let eps = f.tolerance().orbit;
    let genuine = f.genuine_breaks();
    let shift = S::from_i64(p);
    for &i in &genuine {
        let b = &f.breaks()[i];
        let drift = iterate(f, b, q) - b.clone() - shift.clone();
        if !drift.near(&S::zero(), eps) {
            return Ok(OrbitOutcome::NotPeriodic {
                p,
                q,
                break_index: i,
                drift,
            });
        }
    }
    let mut seen = vec![false; f.len()];
    let mut orbits = Vec::new();
    for &i in &genuine {
        if seen[i] {
            continue;
        }
        let mut points = Vec::with_capacity(q as usize);
        let mut breaks = Vec::new();
        let mut x = f.breaks()[i].clone();
        for _ in 0..q {
            let hit = genuine
                .iter()
                .copied()
                .find(|&j| f.breaks()[j].near(&x, eps));
            if let Some(j) = hit {
                if !seen[j] {
                    seen[j] = true;
                    breaks.push(j);
                }
            }
            points.push(OrbitPoint {
                point: x.clone(),
                break_index: hit,
            });
            x = f.eval(&x).fract_unit();
        }
        breaks.sort_unstable();
        orbits.push(BreakOrbit { points, breaks });
    }
    Ok(OrbitOutcome::Periodic(OrbitPartition { p, q, orbits }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ConjugacyVerdict {
    Conjugate { p: i64, q: i64 },
    NotConjugate { reason: String },
    Undecided { reason: String },
}

/// Whether `f` is conjugate to a rigid rational rotation.
///
/// Two independent tests must agree: every break returns after `q` steps,
/// and the explicit `F^q` canonicalizes to `x + p`.
pub fn is_conjugate_to_rigid<S: Scalar>(f: &PwlLift<S>, q_cap: u64) -> Result<ConjugacyVerdict> {
    let f = f.canonicalize();
    let (p, q) = match certified_fraction(&f, q_cap) {
        Ok(pq) => pq,
        Err(Error::RotationIrrational { q_cap }) => {
            return Ok(ConjugacyVerdict::Undecided {
                reason: format!("no rational rotation number with denominator <= {q_cap}"),
            })
        }
        Err(e) => return Err(e),
    };
    let periodic = partition_with(&f, p, q)?;
    let g = f.power(q as usize)?.canonicalize();
    let eps = f.tolerance().orbit;
    let rigid = g
        .rigid_shift()
        .map(|s| s.near(&S::from_i64(p), eps))
        .unwrap_or(false);
    match (periodic, rigid) {
        (OrbitOutcome::Periodic(_), true) => Ok(ConjugacyVerdict::Conjugate { p, q }),
        (OrbitOutcome::NotPeriodic { break_index, drift, .. }, false) => {
            Ok(ConjugacyVerdict::NotConjugate {
                reason: format!(
                    "rotation number {p}/{q}; break {break_index} is not periodic \
                     (drift {drift}); F^{q} has {} genuine breaks",
                    g.genuine_breaks().len()
                ),
            })
        }
        (OrbitOutcome::Periodic(_), false) => Err(Error::InternalMismatch(format!(
            "all breaks return after {q} steps but F^{q} is not x + {p}"
        ))),
        (OrbitOutcome::NotPeriodic { break_index, .. }, true) => Err(Error::InternalMismatch(
            format!("F^{q} is x + {p} but break {break_index} does not return"),
        )),
    }
}

/// The product of jump ratios over each orbit's breaks. All products are 1
/// when `f` is conjugate to a rigid rotation.
pub fn check_trivial_cancellations<S: Scalar>(
    f: &PwlLift<S>,
    partition: &OrbitPartition<S>,
) -> Result<Vec<S>> {
    let f = f.canonicalize();
    partition
        .orbits
        .iter()
        .map(|o| f.jump_product(&o.breaks))
        .collect()
}

/// The PWL conjugacy `h` with `h ∘ f = h + p/q (mod 1)` and `h(anchor) = 0`.
///
/// The anchor is the first genuine break (or `0` for a rigid map). The arc
/// from the anchor to its anticlockwise orbit neighbour maps affinely onto
/// `[0, 1/q]`; the relation `h(f(x)) = h(x) + p/q` propagates it around the
/// circle. The marked points of `h` are the break orbits.
pub fn build_conjugacy<S: Scalar>(
    f: &PwlLift<S>,
    partition: &OrbitPartition<S>,
) -> Result<PwlLift<S>> {
    let f = f.canonicalize();
    let (p, q) = (partition.p, partition.q);
    if q < 1 {
        return Err(Error::InvalidArgument(format!("period {q} must be >= 1")));
    }
    let g = f.power(q as usize)?.canonicalize();
    let eps = f.tolerance().orbit;
    if !g
        .rigid_shift()
        .is_some_and(|s| s.near(&S::from_i64(p), eps))
    {
        return Err(Error::NotConjugate(format!("F^{q} is not x + {p}")));
    }
    let (anchor, landmarks) = if partition.orbits.is_empty() {
        let a = S::zero();
        let mut pts: Vec<S> = Vec::with_capacity(q as usize);
        let mut x = a.clone();
        for _ in 0..q {
            pts.push(x.clone());
            x = f.eval(&x).fract_unit();
        }
        sort_scalars(&mut pts);
        (a, pts)
    } else {
        (partition.orbits[0].points[0].point.clone(), partition.landmarks())
    };
    // gap to the anticlockwise neighbour of the anchor on its own orbit
    let mut delta = S::one();
    let mut x = anchor.clone();
    for _ in 1..q {
        x = f.eval(&x);
        let off = (x.clone() - anchor.clone()).fract_unit();
        if off > S::zero() && off < delta {
            delta = off;
        }
    }
    let q_s = S::from_i64(q);
    let rot = S::from_ratio(p, q);
    // h(y) mod 1 at each landmark
    let residues: Vec<S> = landmarks
        .iter()
        .map(|y| {
            let mut best: Option<(S, i64)> = None;
            let mut z = y.clone();
            for j in 0..q {
                let off = (z.clone() - anchor.clone()).fract_unit();
                let off = if off.near(&S::one(), eps) { S::zero() } else { off };
                if best.as_ref().is_none_or(|(b, _)| off < *b) {
                    best = Some((off, j));
                }
                z = f.eval_inverse(&z);
            }
            let (off, j) = best.expect("q >= 1");
            (off / (delta.clone() * q_s.clone()) + S::from_i64(j) * rot.clone()).fract_unit()
        })
        .collect();
    let m = landmarks.len();
    let start = landmarks
        .iter()
        .position(|l| l.near(&anchor, eps))
        .ok_or_else(|| Error::InvalidArgument("anchor is not among the landmarks".into()))?;
    let mut values = vec![S::zero(); m];
    let mut prev: Option<S> = None;
    for k in 0..m {
        let idx = (start + k) % m;
        let v = match &prev {
            None => S::zero(),
            Some(pv) => pv.clone() + (residues[idx].clone() - pv.clone()).fract_unit(),
        };
        prev = Some(v.clone());
        values[idx] = if idx < start { v - S::one() } else { v };
    }
    PwlLift::new(landmarks, values)
        .map(|h| h.with_tolerance(*f.tolerance()))
        .map_err(|e| Error::InternalMismatch(format!("conjugacy is not a homeomorphism: {e}")))
}

/// A density on the circle, constant on `[points[i], points[i+1])` with the
/// last piece ending at 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct PiecewiseConstantDensity<S> {
    #[serde(serialize_with = "crate::scalar::serialize_vec")]
    pub points: Vec<S>,
    #[serde(serialize_with = "crate::scalar::serialize_vec")]
    pub densities: Vec<S>,
}

impl<S: Scalar> PiecewiseConstantDensity<S> {
    pub fn uniform() -> Self {
        PiecewiseConstantDensity {
            points: vec![S::zero()],
            densities: vec![S::one()],
        }
    }

    fn piece_end(&self, i: usize) -> S {
        self.points.get(i + 1).cloned().unwrap_or_else(S::one)
    }

    pub fn mass(&self) -> S {
        self.cdf(&S::one())
    }

    pub fn density_at(&self, x: &S) -> S {
        let r = x.fract_unit();
        let i = self.points.partition_point(|p| p <= &r).max(1) - 1;
        self.densities[i].clone()
    }

    /// Mass of `[0, x]` for `x` in `[0, 1]`.
    pub fn cdf(&self, x: &S) -> S {
        let mut acc = S::zero();
        for i in 0..self.points.len() {
            let a = &self.points[i];
            if x <= a {
                break;
            }
            let b = self.piece_end(i);
            let hi = if *x < b { x.clone() } else { b };
            acc = acc + self.densities[i].clone() * (hi - a.clone());
        }
        acc
    }

    /// Mass of the lift interval `[a, b]`, `a <= b`, counting whole turns.
    pub fn measure(&self, a: &S, b: &S) -> S {
        let cum = |x: &S| {
            let k = x.floor();
            k * self.mass() + self.cdf(&(x.clone() - x.floor()))
        };
        cum(b) - cum(a)
    }

    /// `(piece start, density)` rows.
    pub fn csv_rows(&self) -> Vec<(String, String)> {
        self.points
            .iter()
            .zip(&self.densities)
            .map(|(p, d)| (p.to_string(), d.to_string()))
            .collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "points": self.points.iter().map(Scalar::to_json).collect::<Vec<_>>(),
            "densities": self.densities.iter().map(Scalar::to_json).collect::<Vec<_>>(),
        })
    }
}

/// The invariant density `(1/q) Σ_{k<q} f_*^k ℓ`, where `f_*^k ℓ` has
/// density `1/(F^k)'(F^{-k}(y))`.
pub fn invariant_density<S: Scalar>(f: &PwlLift<S>, q: u64) -> Result<PiecewiseConstantDensity<S>> {
    if q < 1 {
        return Err(Error::InvalidArgument("period must be >= 1".into()));
    }
    let f = f.canonicalize();
    let eps = f.tolerance().point;
    let g = f.power(q as usize)?.canonicalize();
    let turns = g
        .rigid_shift()
        .ok_or_else(|| Error::NotConjugate(format!("F^{q} has genuine breaks")))?;
    if !turns.near(&turns.floor(), f.tolerance().orbit)
        && !turns.near(&(turns.floor() + S::one()), f.tolerance().orbit)
    {
        return Err(Error::NotConjugate(format!("F^{q} is a rotation by {turns}, not an integer")));
    }
    let mut iterates = vec![PwlLift::identity().with_tolerance(*f.tolerance())];
    for k in 1..q as usize {
        iterates.push(f.compose(&iterates[k - 1]).canonicalize());
    }
    let mut pts: Vec<S> = vec![S::zero()];
    for fk in &iterates {
        pts.extend(fk.values().iter().map(Scalar::fract_unit));
    }
    sort_scalars(&mut pts);
    pts.dedup_by(|a, b| a.near(b, eps));
    if pts.len() > 1 && pts[pts.len() - 1].near(&S::one(), eps) {
        pts.pop();
    }
    let q_s = S::from_i64(q as i64);
    let n = pts.len();
    let mut densities = Vec::with_capacity(n);
    for i in 0..n {
        let end = pts.get(i + 1).cloned().unwrap_or_else(S::one);
        let mid = (pts[i].clone() + end) * S::half();
        let sum = iterates.iter().fold(S::zero(), |acc, fk| {
            acc + S::one() / fk.slope_at(&fk.eval_inverse(&mid))
        });
        densities.push(sum / q_s.clone());
    }
    // merge neighbouring pieces with equal density, keeping 0 as a point
    let slope_eps = f.tolerance().slope;
    let mut points = vec![pts[0].clone()];
    let mut merged = vec![densities[0].clone()];
    for i in 1..n {
        if densities[i].near(merged.last().expect("non-empty"), slope_eps) {
            continue;
        }
        points.push(pts[i].clone());
        merged.push(densities[i].clone());
    }
    let mut out = PiecewiseConstantDensity {
        points,
        densities: merged,
    };
    let mass = out.mass();
    if mass != S::one() {
        out.densities = out.densities.into_iter().map(|d| d / mass.clone()).collect();
    }
    Ok(out)
}

/// Largest `|ν(F^{-1}(A)) - ν(A)|` over arcs `A` between pairs of density
/// breakpoints and `trials` seeded random arcs.
pub fn verify_invariance<S: Scalar>(
    f: &PwlLift<S>,
    density: &PiecewiseConstantDensity<S>,
    trials: usize,
) -> S {
    let discrepancy = |a: &S, b: &S| -> S {
        let pre = density.measure(&f.eval_inverse(a), &f.eval_inverse(b));
        (pre - density.measure(a, b)).abs()
    };
    let mut worst = S::zero();
    let pts = &density.points;
    for i in 0..pts.len() {
        for j in i..pts.len() {
            let b = if i == j { pts[j].clone() + S::one() } else { pts[j].clone() };
            let d = discrepancy(&pts[i], &b);
            if d > worst {
                worst = d;
            }
        }
    }
    const DENOM: i64 = 1 << 24;
    let mut rng = ChaCha8Rng::seed_from_u64(INVARIANCE_SEED);
    for _ in 0..trials {
        let a = S::from_ratio(rng.gen_range(0..DENOM), DENOM);
        let w = S::from_ratio(rng.gen_range(1..=DENOM), DENOM);
        let d = discrepancy(&a, &(a.clone() + w));
        if d > worst {
            worst = d;
        }
    }
    worst
}

/// `(genuine break count, max slope)` of `F^k` for `k = 1..=k_max`.
fn growth<S: Scalar>(f: &PwlLift<S>, k_max: usize) -> Result<Vec<(usize, S)>> {
    if k_max < 1 {
        return Err(Error::InvalidArgument("k_max must be >= 1".into()));
    }
    let f = f.canonicalize();
    let mut acc = f.clone();
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        if k > 1 {
            acc = f.compose(&acc).canonicalize();
        }
        if acc.len() > DEFAULT_PIECE_CAP {
            return Err(Error::Overflow {
                pieces: acc.len(),
                cap: DEFAULT_PIECE_CAP,
            });
        }
        out.push((acc.genuine_breaks().len(), acc.max_slope()));
    }
    Ok(out)
}

/// Genuine break counts of `F^k`, `k = 1..=k_max`.
pub fn break_count_growth<S: Scalar>(f: &PwlLift<S>, k_max: usize) -> Result<Vec<usize>> {
    Ok(growth(f, k_max)?.into_iter().map(|(c, _)| c).collect())
}

/// Largest one-sided slope of `F^k`, `k = 1..=k_max`.
pub fn derivative_growth<S: Scalar>(f: &PwlLift<S>, k_max: usize) -> Result<Vec<S>> {
    Ok(growth(f, k_max)?.into_iter().map(|(_, s)| s).collect())
}
