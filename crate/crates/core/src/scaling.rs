//! Linear scaling of the rotation number near a conjugacy parameter.
//!
//! At `μ_c` the map `F^q` is the translation `x + p`; the break orbits cut
//! the circle into laminar segments on which `G_μ = F_μ^q` is close to a
//! translation. With `G_μ(y_i) - y_i - p ≈ A_i ν` and slope
//! `S_i ≈ 1 + B_i ν` on segment `i` (where `ν` is the parameter offset in the
//! direction that increases `ρ`), the passage-time coefficients `κ_i` give
//! `ρ ≈ p/q + R1 ν` with `R1 = 1/(q Σ κ_i)`.

use std::cmp::Ordering;

use serde::Serialize;
use serde_json::Value;

use crate::conjugacy::{break_orbit_partition, OrbitOutcome};
use crate::error::{Error, Result};
use crate::families::{monotonicity_margin, DerivativeSource, FamilySpec, Tables, TwoParamFamilySpec};
use crate::lift::PwlLift;
use crate::rotation::{birkhoff_enclosure_strided, exact_rotation, mode_lock_interval, RotationKind};
use crate::scalar::Scalar;

/// Below this value of `|B|·gap/A` the passage time uses the `B = 0` form.
pub const KAPPA_LINEAR_THRESHOLD: f64 = 1e-8;

/// Stencil multipliers for the empirical slope fit.
pub const FIT_STENCIL: [f64; 6] = [-4.0, -2.0, -1.0, 1.0, 2.0, 4.0];

/// Sorted points of all break orbits of `f` under the period `q`.
///
/// For a rigid map this is the orbit of `0`.
pub fn orbit_landmarks<S: Scalar>(f: &PwlLift<S>, q: u64) -> Result<Vec<S>> {
    if q < 1 {
        return Err(Error::InvalidArgument("period must be >= 1".into()));
    }
    let f = f.canonicalize();
    match break_orbit_partition(&f, Some(q), q)? {
        OrbitOutcome::NotPeriodic {
            break_index, drift, ..
        } => Err(Error::NotConjugate(format!(
            "break {break_index} does not return after {q} steps (drift {drift})"
        ))),
        OrbitOutcome::Periodic(part) if !part.orbits.is_empty() => Ok(part.landmarks()),
        OrbitOutcome::Periodic(_) => {
            let g = f.power(q as usize)?;
            let shift = g.rigid_shift().unwrap_or_else(S::one);
            if !shift.near(&shift.floor(), f.tolerance().orbit)
                && !shift.near(&(shift.floor() + S::one()), f.tolerance().orbit)
            {
                return Err(Error::NotConjugate(format!(
                    "rigid rotation by {} has no period {q}",
                    f.values()[0].clone() - f.breaks()[0].clone()
                )));
            }
            let mut pts = Vec::with_capacity(q as usize);
            let mut x = S::zero();
            for _ in 0..q {
                pts.push(x.clone());
                x = f.eval(&x).fract_unit();
            }
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
            Ok(pts)
        }
    }
}

/// Piece of `f` containing `x`, and the offset of `x` from its left end.
fn locate<S: Scalar>(f: &PwlLift<S>, x: &S) -> (usize, S) {
    let r = x.fract_unit();
    let count = f.breaks().partition_point(|b| b <= &r);
    if count == 0 {
        let i = f.len() - 1;
        (i, r + S::one() - f.breaks()[i].clone())
    } else {
        (count - 1, r - f.breaks()[count - 1].clone())
    }
}

/// `∂s_i/∂μ` for every piece.
fn slope_derivatives<S: Scalar>(f: &PwlLift<S>, d: &Tables<S>) -> Vec<S> {
    let n = f.len();
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            let width = if j == 0 {
                f.breaks()[0].clone() + S::one() - f.breaks()[i].clone()
            } else {
                f.breaks()[j].clone() - f.breaks()[i].clone()
            };
            let dphi = d.values[j].clone() - d.values[i].clone();
            let db = d.breaks[j].clone() - d.breaks[i].clone();
            if n == 1 {
                S::zero()
            } else {
                (dphi - f.slopes()[i].clone() * db) / width
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaminarCoeffs {
    pub p: i64,
    pub q: i64,
    /// Landmarks `ℓ_i` in `[0, 1)`.
    pub landmarks: Vec<f64>,
    /// Segment lengths `ℓ_{i+1} - ℓ_i`, the last one wrapping.
    pub gaps: Vec<f64>,
    /// Segment midpoints `y_i`.
    pub midpoints: Vec<f64>,
    /// `∂G/∂ν` at `y_i`.
    pub a: Vec<f64>,
    /// `∂S_i/∂ν`.
    pub b: Vec<f64>,
    pub derivatives: DerivativeSource,
}

/// `A_i` and `B_i` on every laminar segment at `μ_c` by the chain rule over
/// the `q`-fold composition.
pub fn laminar_coeffs<S: Scalar>(family: &FamilySpec<S>, mu_c: &S, q: u64) -> Result<LaminarCoeffs> {
    let f = family.instantiate(mu_c)?;
    let landmarks = orbit_landmarks(&f, q)?;
    let g = f.power(q as usize)?;
    let p = (g.eval(&S::zero()) + S::half()).floor_i64();
    let (d, source) = family.derivative_tables(mu_c)?;
    let ds = slope_derivatives(&f, &d);
    let sign = S::from_i64(family.direction().sign() as i64);
    let fd_step = 1e-6 * mu_c.to_f64().abs().max(1.0);
    let m = landmarks.len();
    let mut out = LaminarCoeffs {
        p,
        q: q as i64,
        landmarks: landmarks.iter().map(Scalar::to_f64).collect(),
        gaps: Vec::with_capacity(m),
        midpoints: Vec::with_capacity(m),
        a: Vec::with_capacity(m),
        b: Vec::with_capacity(m),
        derivatives: source,
    };
    for i in 0..m {
        let next = if i + 1 < m {
            landmarks[i + 1].clone()
        } else {
            landmarks[0].clone() + S::one()
        };
        let gap = next.clone() - landmarks[i].clone();
        let gap_f = gap.to_f64();
        let too_close = gap_f <= f.tolerance().point
            || (source == DerivativeSource::Numerical && gap_f < 100.0 * fd_step);
        if too_close {
            return Err(Error::SegmentCollision(format!(
                "landmarks {} and {} are {gap_f:e} apart",
                landmarks[i], next
            )));
        }
        let y = (landmarks[i].clone() + next) * S::half();
        let mut x = y.clone();
        let mut dg = S::zero();
        let mut slope = S::one();
        let mut log_sum = S::zero();
        for _ in 0..q {
            let (k, t) = locate(&f, &x);
            let s = f.slopes()[k].clone();
            let df = d.values[k].clone() + ds[k].clone() * t - s.clone() * d.breaks[k].clone();
            dg = s.clone() * dg + df;
            log_sum = log_sum + ds[k].clone() / s.clone();
            slope = slope * s;
            x = f.eval(&x);
        }
        out.gaps.push(gap_f);
        out.midpoints.push(y.to_f64());
        out.a.push((sign.clone() * dg).to_f64());
        out.b.push((sign.clone() * log_sum * slope).to_f64());
    }
    Ok(out)
}

/// Passage-time coefficient `κ = gap/A` for `B = 0`, otherwise
/// `κ = ln(1 + gap·B/A) / B`.
pub fn kappa(a: f64, b: f64, gap: f64) -> Result<f64> {
    if a <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "laminar coefficient A = {a} must be positive"
        )));
    }
    let z = gap * b / a;
    if z.abs() < KAPPA_LINEAR_THRESHOLD {
        return Ok(gap / a);
    }
    if 1.0 + z <= 0.0 {
        return Err(Error::LogDomain { argument: 1.0 + z });
    }
    Ok(z.ln_1p() / b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingOptions {
    /// Largest denominator tried when certifying `ρ(F_{μ_c})`.
    pub q_cap: u64,
    /// Fit step; defaults to `1e-4·(|μ_c| + 1)`.
    pub h_fit: Option<f64>,
    /// Evaluations of `F^q` per Birkhoff enclosure.
    pub iterations: u64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions {
            q_cap: 64,
            h_fit: None,
            iterations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSample {
    pub offset: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub family: String,
    #[serde(serialize_with = "serialize_value")]
    pub mu_c: Value,
    pub p: i64,
    pub q: i64,
    pub direction: crate::families::Direction,
    pub derivatives: DerivativeSource,
    pub landmarks: Vec<f64>,
    pub midpoints: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `S_i` at `μ_c + h_fit`.
    pub s_sample: Vec<f64>,
    pub kappa: Vec<f64>,
    /// `dρ/dμ` from the passage times, signed by the family direction.
    pub r1: f64,
    /// Least-squares slope of `ρ` over the fit stencil.
    pub r1_emp: f64,
    pub r1_difference: f64,
    pub h_fit: f64,
    /// Largest Birkhoff half-width over the stencil, divided by `h_fit`:
    /// a bound on the per-point slope error.
    pub fit_error_bound: f64,
    pub samples: Vec<FitSample>,
    /// Local transversality `min_k` at `μ_c`.
    pub transversality: Option<f64>,
}

fn serialize_value<Ser: serde::Serializer>(v: &Value, ser: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
    v.serialize(ser)
}

impl ScalingReport {
    pub fn kappa_sum(&self) -> f64 {
        self.kappa.iter().sum()
    }
}

/// `ρ(F_μ)` as a strided Birkhoff enclosure over `iterations` steps of `F^q`.
pub fn rho_enclosure<S: Scalar>(
    family: &FamilySpec<S>,
    mu: &S,
    q: u64,
    iterations: u64,
) -> Result<(f64, f64)> {
    let f = family.instantiate(mu)?;
    Ok(birkhoff_enclosure_strided(&f, q as usize, iterations)?.bounds_f64())
}

fn certified_period<S: Scalar>(f: &PwlLift<S>, q_cap: u64) -> Result<(i64, i64)> {
    match exact_rotation(f, q_cap)?.kind {
        RotationKind::Exact { p, q, .. } => Ok((p, q)),
        RotationKind::Enclosure { .. } => Err(Error::RotationIrrational { q_cap }),
    }
}

/// Landmarks, laminar coefficients, `κ_i` and `R1` at `μ_c`, with an
/// empirical slope from Birkhoff enclosures at `μ_c + k·h`,
/// `k ∈ {±1, ±2, ±4}`.
pub fn r1<S: Scalar>(family: &FamilySpec<S>, mu_c: &S, opts: &ScalingOptions) -> Result<ScalingReport> {
    let f = family.instantiate(mu_c)?;
    let (_, q) = certified_period(&f, opts.q_cap)?;
    let lam = laminar_coeffs(family, mu_c, q as u64)?;
    let kappas = lam
        .a
        .iter()
        .zip(&lam.b)
        .zip(&lam.gaps)
        .map(|((&a, &b), &gap)| kappa(a, b, gap))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = kappas.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument(format!("Σκ = {total} is not positive")));
    }
    let sign = family.direction().sign();
    let r1 = sign / (q as f64 * total);

    let h = opts
        .h_fit
        .unwrap_or_else(|| 1e-4 * (mu_c.to_f64().abs() + 1.0));
    let mut samples = Vec::with_capacity(FIT_STENCIL.len());
    for k in FIT_STENCIL {
        let offset = k * h;
        let mu = mu_c.clone() + S::from_f64(offset);
        let (lo, hi) = rho_enclosure(family, &mu, q as u64, opts.iterations)?;
        samples.push(FitSample {
            offset,
            rho_lo: lo,
            rho_hi: hi,
        });
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.offset).collect();
    let ys: Vec<f64> = samples.iter().map(|s| 0.5 * (s.rho_lo + s.rho_hi)).collect();
    let (slope, _) = least_squares(&xs, &ys);
    let half_width = samples
        .iter()
        .map(|s| 0.5 * (s.rho_hi - s.rho_lo))
        .fold(0.0, f64::max);

    let mu_s = mu_c.clone() + S::from_f64(h);
    let g = family.instantiate(&mu_s)?.power(q as usize)?;
    let s_sample = lam
        .midpoints
        .iter()
        .map(|y| g.slope_at(&S::from_f64(*y)).to_f64())
        .collect();

    let w = S::from_f64(4.0 * h);
    let transversality = monotonicity_margin(
        family,
        (mu_c.clone() - w.clone(), mu_c.clone() + w),
        5,
        Some(mu_c),
    )
    .ok()
    .and_then(|m| m.transversality_min());

    Ok(ScalingReport {
        family: family.name().to_string(),
        mu_c: mu_c.to_json(),
        p: lam.p,
        q,
        direction: family.direction(),
        derivatives: lam.derivatives,
        landmarks: lam.landmarks,
        midpoints: lam.midpoints,
        a: lam.a,
        b: lam.b,
        s_sample,
        kappa: kappas,
        r1,
        r1_emp: slope,
        r1_difference: (r1 - slope).abs(),
        h_fit: h,
        fit_error_bound: half_width / h,
        samples,
        transversality,
    })
}

/// Slope and intercept of the least-squares line through `(x, y)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSample {
    pub offset: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
    /// `|ρ - p/q - R1·δ| / δ²` using the enclosure point farthest from the line.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetrySample {
    pub delta: f64,
    /// `sup_x |G_{-δ}(x) - G_δ^{-1}(x)| / δ` over the whole circle.
    pub sup_over_delta: f64,
    /// The same difference on the laminar quartile points, divided by `δ²`.
    pub laminar_over_delta_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub window: f64,
    /// Empirical `R2`: the largest ratio over the samples.
    pub r2: f64,
    pub samples: Vec<ResidualSample>,
    /// Inverse-symmetry defect at `δ = window` and `window/2`.
    pub symmetry: Vec<SymmetrySample>,
}

/// Offsets `±δ` with `δ` spread evenly over `[window/2, window]`.
pub fn residual_offsets(window: f64, samples: usize) -> Vec<f64> {
    let per_side = (samples / 2).max(1);
    let mut out = Vec::with_capacity(2 * per_side);
    for j in 0..per_side {
        let t = if per_side == 1 {
            1.0
        } else {
            j as f64 / (per_side - 1) as f64
        };
        let delta = window * (0.5 + 0.5 * t);
        out.push(-delta);
        out.push(delta);
    }
    out
}

/// `G_{-δ}(x) - G_δ^{-1}(x)` where `G_ν = F^q_{μ_c + ν} - p`.
struct SymmetryPair<S> {
    minus: PwlLift<S>,
    plus: PwlLift<S>,
    shift: S,
}

impl<S: Scalar> SymmetryPair<S> {
    fn new(family: &FamilySpec<S>, mu_c: &S, p: i64, q: u64, delta: &S) -> Result<Self> {
        Ok(SymmetryPair {
            minus: family.instantiate(&(mu_c.clone() - delta.clone()))?.power(q as usize)?,
            plus: family.instantiate(&(mu_c.clone() + delta.clone()))?.power(q as usize)?,
            shift: S::from_i64(p),
        })
    }

    fn defect(&self, x: &S) -> f64 {
        let a = self.minus.eval(x) - self.shift.clone();
        let b = self.plus.eval_inverse(&(x.clone() + self.shift.clone()));
        (a - b).abs().to_f64()
    }

    /// The difference is piecewise linear, so its supremum is attained at a
    /// marked point of `G_{-δ}` or of `G_δ^{-1}`.
    fn sup(&self) -> f64 {
        let mut pts: Vec<S> = self.minus.breaks().to_vec();
        pts.extend(
            self.plus
                .values()
                .iter()
                .map(|v| (v.clone() - self.shift.clone()).fract_unit()),
        );
        pts.iter().map(|x| self.defect(x)).fold(0.0, f64::max)
    }
}

/// `sup_x |G_{-δ}(x) - G_δ^{-1}(x)|` over the circle. Near the landmarks
/// the breaks of `G_{±δ}` split by `O(δ)` and the slopes there differ from 1
/// by `O(1)`, so this is `O(δ)`.
pub fn inverse_symmetry_defect<S: Scalar>(
    family: &FamilySpec<S>,
    mu_c: &S,
    p: i64,
    q: u64,
    delta: &S,
) -> Result<f64> {
    Ok(SymmetryPair::new(family, mu_c, p, q, delta)?.sup())
}

/// The defect at the quartile points of every laminar segment, which stay
/// away from the landmarks as `δ → 0`; this is `O(δ²)`.
pub fn inverse_symmetry_defect_laminar<S: Scalar>(
    family: &FamilySpec<S>,
    mu_c: &S,
    p: i64,
    q: u64,
    delta: &S,
) -> Result<f64> {
    let landmarks = orbit_landmarks(&family.instantiate(mu_c)?, q)?;
    let pair = SymmetryPair::new(family, mu_c, p, q, delta)?;
    let m = landmarks.len();
    let mut worst = 0.0f64;
    for i in 0..m {
        let next = if i + 1 < m {
            landmarks[i + 1].clone()
        } else {
            landmarks[0].clone() + S::one()
        };
        let gap = next - landmarks[i].clone();
        for k in 1..4 {
            let x = landmarks[i].clone() + gap.clone() * S::from_ratio(k, 4);
            worst = worst.max(pair.defect(&x));
        }
    }
    Ok(worst)
}

/// Empirical quadratic constant `max |ρ(F_{μ_c+δ}) - p/q - R1·δ| / δ²` over
/// the offsets of [`residual_offsets`], plus the inverse-symmetry defects.
pub fn scaling_residual<S: Scalar>(
    family: &FamilySpec<S>,
    mu_c: &S,
    report: &ScalingReport,
    window: f64,
    samples: usize,
    iterations: u64,
) -> Result<ResidualReport> {
    let q = report.q as u64;
    let target = report.p as f64 / report.q as f64;
    let mut out = Vec::new();
    let mut r2 = 0.0f64;
    for delta in residual_offsets(window, samples) {
        let mu = mu_c.clone() + S::from_f64(delta);
        let (lo, hi) = rho_enclosure(family, &mu, q, iterations)?;
        let line = target + report.r1 * delta;
        let dev = (lo - line).abs().max((hi - line).abs());
        let ratio = dev / (delta * delta);
        r2 = r2.max(ratio);
        out.push(ResidualSample {
            offset: delta,
            rho_lo: lo,
            rho_hi: hi,
            ratio,
        });
    }
    let mut symmetry = Vec::new();
    for delta in [window, 0.5 * window] {
        let d = S::from_f64(delta);
        let sup = inverse_symmetry_defect(family, mu_c, report.p, q, &d)?;
        let lam = inverse_symmetry_defect_laminar(family, mu_c, report.p, q, &d)?;
        symmetry.push(SymmetrySample {
            delta,
            sup_over_delta: sup / delta,
            laminar_over_delta_sq: lam / (delta * delta),
        });
    }
    Ok(ResidualReport {
        window,
        r2,
        samples: out,
        symmetry,
    })
}

/// Largest circular distance from a genuine break of `F_μ^q` to the nearest
/// landmark of `F_{μ_c}`.
pub fn landmark_deviation<S: Scalar>(
    family: &FamilySpec<S>,
    mu_c: &S,
    mu: &S,
    q: u64,
) -> Result<f64> {
    let landmarks: Vec<f64> = orbit_landmarks(&family.instantiate(mu_c)?, q)?
        .iter()
        .map(Scalar::to_f64)
        .collect();
    let g = family.instantiate(mu)?.power(q as usize)?.canonicalize();
    let worst = g
        .genuine_breaks()
        .iter()
        .map(|&i| {
            let x = g.breaks()[i].to_f64();
            landmarks
                .iter()
                .map(|l| {
                    let d = (x - l).rem_euclid(1.0);
                    d.min(1.0 - d)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinchRow {
    pub d: f64,
    pub mu_lo: Option<f64>,
    pub mu_hi: Option<f64>,
    /// First-order boundary pair from the reference slopes.
    pub reference: Option<(f64, f64)>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinchReport {
    pub family: String,
    pub p: i64,
    pub q: i64,
    pub rows: Vec<PinchRow>,
    /// Width of the locked interval at `d = 0`, when `0` is on the grid.
    pub width_at_zero: Option<f64>,
    /// Fitted boundary slopes `(lower, upper)` for `d > 0` and for `d < 0`,
    /// as least-squares lines through the origin.
    pub slopes_positive: Option<(f64, f64)>,
    pub slopes_negative: Option<(f64, f64)>,
    pub reference_slopes: Option<(f64, f64)>,
}

impl PinchReport {
    pub fn csv_rows(&self) -> Vec<[String; 3]> {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        self.rows
            .iter()
            .map(|r| [format!("{:.17e}", r.d), fmt(r.mu_lo), fmt(r.mu_hi)])
            .collect()
    }
}

/// The first-order boundary curves of the offset Herman family: `μ = 0` and
/// `μ = (1 - λ) d`.
pub fn herman_offset_reference_slopes(lambda: f64) -> (f64, f64) {
    (0.0, 1.0 - lambda)
}

fn slope_through_origin(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.is_empty() {
        return None;
    }
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    Some(sxy / sxx)
}

/// Boundaries of the `p/q` locked region of the slice at each `d`.
///
/// `reference` gives the slopes `(c_1, c_2)` of two first-order boundary
/// curves `μ = c_j d`; each row then carries the predicted pair
/// `(min, max)` of `c_1 d, c_2 d`. Failures are recorded per row.
pub fn pinch_boundaries<S: Scalar>(
    two_param: &TwoParamFamilySpec<S>,
    p: i64,
    q: i64,
    d_grid: &[S],
    bracket: (S, S),
    tol: S,
    reference: Option<(f64, f64)>,
) -> PinchReport {
    let rows: Vec<PinchRow> = d_grid
        .iter()
        .map(|d| pinch_row(two_param, p, q, d, &bracket, &tol, reference))
        .collect();
    let width_at_zero = rows
        .iter()
        .find(|r| r.d == 0.0)
        .and_then(|r| Some(r.mu_hi? - r.mu_lo?));
    let fit = |positive: bool| -> Option<(f64, f64)> {
        let sel: Vec<&PinchRow> = rows
            .iter()
            .filter(|r| r.mu_lo.is_some() && if positive { r.d > 0.0 } else { r.d < 0.0 })
            .collect();
        let lo: Vec<(f64, f64)> = sel.iter().map(|r| (r.d, r.mu_lo.unwrap())).collect();
        let hi: Vec<(f64, f64)> = sel.iter().map(|r| (r.d, r.mu_hi.unwrap())).collect();
        Some((slope_through_origin(&lo)?, slope_through_origin(&hi)?))
    };
    PinchReport {
        family: two_param.name().to_string(),
        p,
        q,
        width_at_zero,
        slopes_positive: fit(true),
        slopes_negative: fit(false),
        reference_slopes: reference,
        rows,
    }
}

fn pinch_row<S: Scalar>(
    two_param: &TwoParamFamilySpec<S>,
    p: i64,
    q: i64,
    d: &S,
    bracket: &(S, S),
    tol: &S,
    reference: Option<(f64, f64)>,
) -> PinchRow {
    let d_f = d.to_f64();
    let reference = reference.map(|(c1, c2)| {
        let (a, b) = (c1 * d_f, c2 * d_f);
        (a.min(b), a.max(b))
    });
    let result = two_param
        .slice(d)
        .and_then(|fam| mode_lock_interval(&fam, p, q, bracket.clone(), tol.clone()));
    match result {
        Ok(iv) => PinchRow {
            d: d_f,
            mu_lo: Some(iv.lo_param.to_f64()),
            mu_hi: Some(iv.hi_param.to_f64()),
            reference,
            error: None,
        },
        Err(e) => {
            log::warn!("pinch row d = {d_f}: {e}");
            PinchRow {
                d: d_f,
                mu_lo: None,
                mu_hi: None,
                reference,
                error: Some(e.to_string()),
            }
        }
    }
}
