//! Parameterised families of PWL lifts.
//!
//! A family maps a parameter `μ` to marked points `b_k(μ)` and values
//! `φ_k(μ)`. Built-in families ship analytic `μ`-derivatives; other families
//! fall back to central differences with one Richardson step.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lift::PwlLift;
use crate::scalar::{Scalar, Tolerance};

/// Marked points and values of one family member.
#[derive(Debug, Clone, PartialEq)]
pub struct Tables<S> {
    pub breaks: Vec<S>,
    pub values: Vec<S>,
}

type TableFn<S> = Arc<dyn Fn(&S) -> Result<Tables<S>> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `ρ(F_μ)` is non-decreasing in `μ`.
    Increasing,
    /// `ρ(F_μ)` is non-increasing in `μ`; analysis runs in `-μ`.
    Decreasing,
}

impl Direction {
    pub fn is_increasing(self) -> bool {
        self == Direction::Increasing
    }

    pub fn sign(self) -> f64 {
        match self {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivativeSource {
    Analytic,
    Numerical,
}

/// A one-parameter family `μ ↦ F_μ`.
#[derive(Clone)]
pub struct FamilySpec<S> {
    name: String,
    tables: TableFn<S>,
    derivatives: Option<TableFn<S>>,
    direction: Direction,
    critical: Option<S>,
    tol: Tolerance,
}

impl<S: Scalar> fmt::Debug for FamilySpec<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilySpec")
            .field("name", &self.name)
            .field("direction", &self.direction)
            .field("analytic", &self.derivatives.is_some())
            .field("critical", &self.critical)
            .finish()
    }
}

impl<S: Scalar> FamilySpec<S> {
    pub fn new(
        name: impl Into<String>,
        tables: impl Fn(&S) -> Result<Tables<S>> + Send + Sync + 'static,
    ) -> Self {
        FamilySpec {
            name: name.into(),
            tables: Arc::new(tables),
            derivatives: None,
            direction: Direction::Increasing,
            critical: None,
            tol: Tolerance::default(),
        }
    }

    /// Analytic `(b_k'(μ), φ_k'(μ))`.
    pub fn with_derivatives(
        mut self,
        d: impl Fn(&S) -> Result<Tables<S>> + Send + Sync + 'static,
    ) -> Self {
        self.derivatives = Some(Arc::new(d));
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    /// Records a parameter at which the member is known to be conjugate to
    /// a rigid rotation.
    pub fn with_critical(mut self, mu: S) -> Self {
        self.critical = Some(mu);
        self
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn critical(&self) -> Option<&S> {
        self.critical.as_ref()
    }

    pub fn tolerance(&self) -> &Tolerance {
        &self.tol
    }

    pub fn derivative_source(&self) -> DerivativeSource {
        if self.derivatives.is_some() {
            DerivativeSource::Analytic
        } else {
            DerivativeSource::Numerical
        }
    }

    pub fn tables(&self, mu: &S) -> Result<Tables<S>> {
        (self.tables)(mu)
    }

    pub fn instantiate(&self, mu: &S) -> Result<PwlLift<S>> {
        let t = self.tables(mu)?;
        PwlLift::new(t.breaks, t.values)
            .map(|f| f.with_tolerance(self.tol))
            .map_err(|e| match e {
                Error::NonMonotone(msg) => {
                    Error::OutOfDomain(format!("{} at μ = {mu}: {msg}", self.name))
                }
                other => other,
            })
    }

    /// `(b_k'(μ), φ_k'(μ))`, analytic when available, otherwise central
    /// differences with step `h = 1e-6·max(1, |μ|)` and one Richardson level.
    pub fn derivative_tables(&self, mu: &S) -> Result<(Tables<S>, DerivativeSource)> {
        if let Some(d) = &self.derivatives {
            return Ok((d(mu)?, DerivativeSource::Analytic));
        }
        let h = S::from_f64(1e-6 * mu.to_f64().abs().max(1.0));
        let central = |h: &S| -> Result<Tables<S>> {
            let plus = self.tables(&(mu.clone() + h.clone()))?;
            let minus = self.tables(&(mu.clone() - h.clone()))?;
            let two_h = h.clone() + h.clone();
            let diff = |a: &[S], b: &[S]| -> Vec<S> {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x.clone() - y.clone()) / two_h.clone())
                    .collect()
            };
            Ok(Tables {
                breaks: diff(&plus.breaks, &minus.breaks),
                values: diff(&plus.values, &minus.values),
            })
        };
        let coarse = central(&h)?;
        let fine = central(&(h * S::half()))?;
        let richardson = |f: &[S], c: &[S]| -> Vec<S> {
            f.iter()
                .zip(c)
                .map(|(f, c)| (S::from_i64(4) * f.clone() - c.clone()) / S::from_i64(3))
                .collect()
        };
        Ok((
            Tables {
                breaks: richardson(&fine.breaks, &coarse.breaks),
                values: richardson(&fine.values, &coarse.values),
            },
            DerivativeSource::Numerical,
        ))
    }
}

/// A two-parameter family `(μ, d) ↦ F_{μ,d}`.
#[derive(Clone)]
pub struct TwoParamFamilySpec<S> {
    name: String,
    make: Arc<dyn Fn(&S) -> Result<FamilySpec<S>> + Send + Sync>,
}

impl<S: Scalar> fmt::Debug for TwoParamFamilySpec<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoParamFamilySpec")
            .field("name", &self.name)
            .finish()
    }
}

impl<S: Scalar> TwoParamFamilySpec<S> {
    pub fn new(
        name: impl Into<String>,
        make: impl Fn(&S) -> Result<FamilySpec<S>> + Send + Sync + 'static,
    ) -> Self {
        TwoParamFamilySpec {
            name: name.into(),
            make: Arc::new(make),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The one-parameter slice at fixed `d`.
    pub fn slice(&self, d: &S) -> Result<FamilySpec<S>> {
        (self.make)(d)
    }

    pub fn instantiate(&self, mu: &S, d: &S) -> Result<PwlLift<S>> {
        self.slice(d)?.instantiate(mu)
    }
}

fn out_of_domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::OutOfDomain(msg.into()))
}

fn constant_shift_derivatives<S: Scalar>(n: usize) -> Tables<S> {
    Tables {
        breaks: vec![S::zero(); n],
        values: vec![S::one(); n],
    }
}

/// `x ↦ x + ω + μ`.
pub fn rigid<S: Scalar>(omega: S) -> FamilySpec<S> {
    FamilySpec::new("rigid", move |mu: &S| {
        Ok(Tables {
            breaks: vec![S::zero()],
            values: vec![omega.clone() + mu.clone()],
        })
    })
    .with_derivatives(|_: &S| Ok(constant_shift_derivatives(1)))
}

/// Herman's two-piece family `H(x) = μ + h(x)` with `h(x) = λx` on `[0, c]`
/// and `1 + λ^{-β}(x - 1)` on `(c, 1)`.
///
/// `c = (1 - λ^{-β}) / (λ - λ^{-β})` is fixed by continuity at `c`.
pub fn herman<S: Scalar>(lambda: S, beta: f64) -> Result<FamilySpec<S>> {
    if lambda <= S::one() || beta <= 0.0 {
        return out_of_domain(format!("herman needs λ > 1 and β > 0, got λ = {lambda}, β = {beta}"));
    }
    let right_slope = lambda.pow_real(-beta)?;
    let c = (S::one() - right_slope.clone()) / (lambda.clone() - right_slope);
    let lc = lambda * c.clone();
    Ok(FamilySpec::new("herman", move |mu: &S| {
        Ok(Tables {
            breaks: vec![S::zero(), c.clone()],
            values: vec![mu.clone(), mu.clone() + lc.clone()],
        })
    })
    .with_derivatives(|_: &S| Ok(constant_shift_derivatives(2))))
}

/// Herman's family at `β = 1`, shifted so that `μ = 0` is the conjugate
/// member: `R(x) = μ + 1/(1+λ) + Y(x)` with breaks `{0, 1/(1+λ)}`.
pub fn herman_shifted<S: Scalar>(lambda: S) -> Result<FamilySpec<S>> {
    if lambda <= S::zero() || lambda == S::one() {
        return out_of_domain(format!("herman_shifted needs λ > 0, λ != 1, got {lambda}"));
    }
    let c = S::one() / (S::one() + lambda.clone());
    Ok(FamilySpec::new("herman_shifted", move |mu: &S| {
        Ok(Tables {
            breaks: vec![S::zero(), c.clone()],
            values: vec![mu.clone() + c.clone(), mu.clone() + S::one()],
        })
    })
    .with_derivatives(|_: &S| Ok(constant_shift_derivatives(2)))
    .with_critical(S::zero()))
}

/// The two-break map `G(x) = a + (1-a)x/b` on `[0, b)`,
/// `1 + a(x-b)/(1-b)` on `[b, 1)`, embedded in the family `μ + G(x)`.
pub fn coelho<S: Scalar>(a: S, b: S) -> Result<FamilySpec<S>> {
    let zero = S::zero();
    let one = S::one();
    if a <= zero || a >= one || b <= zero || b >= one {
        return out_of_domain(format!("coelho needs a, b in (0, 1), got a = {a}, b = {b}"));
    }
    Ok(FamilySpec::new("coelho", move |mu: &S| {
        Ok(Tables {
            breaks: vec![S::zero(), b.clone()],
            values: vec![a.clone() + mu.clone(), S::one() + mu.clone()],
        })
    })
    .with_derivatives(|_: &S| Ok(constant_shift_derivatives(2))))
}

/// Closed-form rotation number `ln α_G / (ln α_G - ln β_G)` of the `coelho`
/// map, with slopes `α_G = (1-a)/b` and `β_G = a/(1-b)`.
pub fn coelho_rho(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
        return out_of_domain(format!("coelho needs a, b in (0, 1), got a = {a}, b = {b}"));
    }
    let ln_alpha = ((1.0 - a) / b).ln();
    let ln_beta = (a / (1.0 - b)).ln();
    if ln_alpha == ln_beta {
        // a = 1 - b: both slopes are 1 and the map is the rotation by a
        return Ok(a);
    }
    Ok(ln_alpha / (ln_alpha - ln_beta))
}

fn refraction_check<S: Scalar>(alpha: &S, beta: &S) -> Result<()> {
    let one = S::one();
    if *alpha <= one || *beta <= one {
        return out_of_domain(format!("refraction needs α > 1 and β > 1, got α = {alpha}, β = {beta}"));
    }
    if one.clone() / alpha.clone() + one.clone() / beta.clone() <= one {
        return out_of_domain(format!(
            "refraction needs 1/α + 1/β > 1, got α = {alpha}, β = {beta}"
        ));
    }
    Ok(())
}

/// Marked points and lift values of the four-piece refraction map at
/// `(α, β)`.
///
/// Breaks `0, α(β-1)/(2β), 1/2, 1 - 1/(2α)`; values
/// `(β+1)/(2β), 1, (3 - β + β/α)/2, 3/2`.
pub fn refraction_tables<S: Scalar>(alpha: &S, beta: &S) -> Result<Tables<S>> {
    refraction_check(alpha, beta)?;
    let one = S::one();
    let two = S::from_i64(2);
    let half = S::half();
    let b2 = alpha.clone() * (beta.clone() - one.clone()) / (two.clone() * beta.clone());
    let b4 = one.clone() - one.clone() / (two.clone() * alpha.clone());
    let v1 = (beta.clone() + one.clone()) / (two.clone() * beta.clone());
    let v3 = (S::from_i64(3) - beta.clone() + beta.clone() / alpha.clone()) * half.clone();
    Ok(Tables {
        breaks: vec![S::zero(), b2, half, b4],
        values: vec![v1, one, v3, S::from_ratio(3, 2)],
    })
}

/// The refraction map as a lift.
pub fn refraction_map<S: Scalar>(alpha: &S, beta: &S) -> Result<PwlLift<S>> {
    let t = refraction_tables(alpha, beta)?;
    PwlLift::new(t.breaks, t.values).map_err(|e| Error::OutOfDomain(e.to_string()))
}

/// The refraction family in `β` at fixed `α`. The rotation number decreases
/// with `β`, so the family carries the `Decreasing` direction flag.
pub fn refraction<S: Scalar>(alpha: S) -> Result<FamilySpec<S>> {
    if alpha <= S::one() {
        return out_of_domain(format!("refraction needs α > 1, got {alpha}"));
    }
    let critical = gmm_critical_beta(&alpha).ok();
    let a1 = alpha.clone();
    let a2 = alpha.clone();
    let mut spec = FamilySpec::new("refraction", move |beta: &S| refraction_tables(&a1, beta))
        .with_derivatives(move |beta: &S| {
            refraction_check(&a2, beta)?;
            let two = S::from_i64(2);
            let beta_sq = beta.clone() * beta.clone();
            Ok(Tables {
                breaks: vec![
                    S::zero(),
                    a2.clone() / (two.clone() * beta_sq.clone()),
                    S::zero(),
                    S::zero(),
                ],
                values: vec![
                    -(S::one() / (two.clone() * beta_sq)),
                    S::zero(),
                    (S::one() / a2.clone() - S::one()) / two,
                    S::zero(),
                ],
            })
        })
        .with_direction(Direction::Decreasing);
    if let Some(c) = critical {
        spec = spec.with_critical(c);
    }
    Ok(spec)
}

/// The `β > 0` root of `(α-1)β² + α(α-1)β - α² = 0`, at which the refraction
/// map has a period-five orbit through all four breaks:
/// `β = (-α + sqrt(α²(α+3)/(α-1))) / 2`.
pub fn gmm_critical_beta<S: Scalar>(alpha: &S) -> Result<S> {
    let one = S::one();
    if *alpha <= one {
        return out_of_domain(format!("critical β needs α > 1, got {alpha}"));
    }
    let disc = alpha.clone() * alpha.clone() * (alpha.clone() + S::from_i64(3))
        / (alpha.clone() - one);
    Ok((disc.sqrt()? - alpha.clone()) * S::half())
}

/// The critical `α` on the slice `α/β = m` of the refraction family:
/// `α = 1 + 1/(1/m² + 1/m)`.
pub fn gmm_critical_alpha_for_ratio(m: f64) -> Result<f64> {
    if m <= 0.0 {
        return out_of_domain(format!("ratio m must be positive, got {m}"));
    }
    Ok(1.0 + 1.0 / (1.0 / (m * m) + 1.0 / m))
}

/// Exact continuity solution for the offset Herman map: breaks `{0, c}` with
/// `c = 1/(1+λ) + d`, left piece `μ + 1/(1+λ) + λx`, right piece `a + bx`.
///
/// Returns `(a, b)`.
pub fn herman_offset_coefficients<S: Scalar>(lambda: &S, mu: &S, d: &S) -> Result<(S, S)> {
    let one = S::one();
    let c0 = one.clone() / (one.clone() + lambda.clone());
    let c = c0.clone() + d.clone();
    if c <= S::zero() || c >= one {
        return out_of_domain(format!("offset d = {d} moves the break outside (0, 1)"));
    }
    let phi1 = mu.clone() + c0;
    let phi2 = phi1.clone() + lambda.clone() * c.clone();
    let b = (phi1.clone() + one.clone() - phi2) / (one - c);
    let a = phi1 + S::one() - b.clone();
    Ok((a, b))
}

/// First-order approximation of [`herman_offset_coefficients`] in `μ` and `d`.
pub fn herman_offset_first_order(lambda: f64, mu: f64, d: f64) -> (f64, f64) {
    let k = (1.0 + lambda) * (1.0 - lambda * lambda) / (lambda * lambda);
    let a = mu + 1.0 / (1.0 + lambda) + 1.0 - 1.0 / lambda - k * d;
    let b = 1.0 / lambda + k * d;
    (a, b)
}

/// The one-parameter slice of the offset Herman family at fixed `d`.
pub fn herman_offset<S: Scalar>(lambda: S, d: S) -> Result<FamilySpec<S>> {
    if lambda <= S::zero() || lambda == S::one() {
        return out_of_domain(format!("herman_offset needs λ > 0, λ != 1, got {lambda}"));
    }
    let c0 = S::one() / (S::one() + lambda.clone());
    let c = c0.clone() + d.clone();
    // validate once (μ does not move the break)
    herman_offset_coefficients(&lambda, &S::zero(), &d)?;
    let lc = lambda * c.clone();
    let mut spec = FamilySpec::new("herman_offset", move |mu: &S| {
        let phi1 = mu.clone() + c0.clone();
        Ok(Tables {
            breaks: vec![S::zero(), c.clone()],
            values: vec![phi1.clone(), phi1 + lc.clone()],
        })
    })
    .with_derivatives(|_: &S| Ok(constant_shift_derivatives(2)));
    if d.is_zero() {
        spec = spec.with_critical(S::zero());
    }
    Ok(spec)
}

/// The offset Herman family in `(μ, d)`.
pub fn herman_offset_two_param<S: Scalar>(lambda: S) -> TwoParamFamilySpec<S> {
    TwoParamFamilySpec::new("herman_offset", move |d: &S| {
        herman_offset(lambda.clone(), d.clone())
    })
}

/// A family tabulated at increasing parameters, linearly interpolated.
pub fn tabulated<S: Scalar>(
    mus: Vec<S>,
    breaks: Vec<Vec<S>>,
    values: Vec<Vec<S>>,
) -> Result<FamilySpec<S>> {
    if mus.len() < 2 || breaks.len() != mus.len() || values.len() != mus.len() {
        return Err(Error::InvalidArgument(
            "custom family needs at least two parameter rows with matching tables".into(),
        ));
    }
    let n = breaks[0].len();
    if breaks.iter().chain(values.iter()).any(|row| row.len() != n) {
        return Err(Error::InvalidArgument("custom family rows differ in length".into()));
    }
    if mus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "custom family parameters must be strictly increasing".into(),
        ));
    }
    Ok(FamilySpec::new("custom", move |mu: &S| {
        if *mu < mus[0] || *mu > mus[mus.len() - 1] {
            return out_of_domain(format!(
                "μ = {mu} outside the tabulated range [{}, {}]",
                mus[0],
                mus[mus.len() - 1]
            ));
        }
        let i = mus.partition_point(|m| m <= mu).clamp(1, mus.len() - 1) - 1;
        let t = (mu.clone() - mus[i].clone()) / (mus[i + 1].clone() - mus[i].clone());
        let lerp = |rows: &Vec<Vec<S>>| -> Vec<S> {
            rows[i]
                .iter()
                .zip(&rows[i + 1])
                .map(|(a, b)| a.clone() + t.clone() * (b.clone() - a.clone()))
                .collect()
        };
        Ok(Tables {
            breaks: lerp(&breaks),
            values: lerp(&values),
        })
    }))
}

/// Result of the monotonicity check on a parameter interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityMargin {
    /// `min_k v_k`; positive certifies a monotone family at grid resolution.
    pub margin: f64,
    /// `v_k` per marked point.
    pub per_break: Vec<f64>,
    /// Per-break transversality values at `μ_c`, when requested.
    pub transversality: Option<Vec<f64>>,
    pub derivatives: DerivativeSource,
}

impl MonotonicityMargin {
    pub fn transversality_min(&self) -> Option<f64> {
        self.transversality
            .as_ref()
            .map(|t| t.iter().cloned().fold(f64::INFINITY, f64::min))
    }
}

/// Samples `v_k = min_I φ_k' - max_{j∈{k-1,k}} max_I s_j · max_I b_k'` on a
/// grid over `interval`, in the direction in which `ρ` increases, and the
/// local transversality `φ_k'(μ_c) - max{0, s_{k-1} b_k', s_k b_k'}` at
/// `mu_c`.
pub fn monotonicity_margin<S: Scalar>(
    family: &FamilySpec<S>,
    interval: (S, S),
    grid_size: usize,
    mu_c: Option<&S>,
) -> Result<MonotonicityMargin> {
    let grid_size = grid_size.max(2);
    let sign = family.direction().sign();
    let (a, b) = (interval.0.to_f64(), interval.1.to_f64());
    let mut n = None;
    let mut min_phi: Vec<f64> = Vec::new();
    let mut max_b: Vec<f64> = Vec::new();
    let mut max_s: Vec<f64> = Vec::new();
    let mut source = family.derivative_source();
    for i in 0..grid_size {
        let mu_f = a + (b - a) * i as f64 / (grid_size - 1) as f64;
        let mu = if i == 0 {
            interval.0.clone()
        } else if i == grid_size - 1 {
            interval.1.clone()
        } else {
            S::from_f64(mu_f)
        };
        let f = family.instantiate(&mu)?;
        let (d, src) = family.derivative_tables(&mu)?;
        source = src;
        let k_count = *n.get_or_insert(f.len());
        if f.len() != k_count || d.breaks.len() != k_count {
            return Err(Error::InvalidArgument(
                "number of marked points changes across the interval".into(),
            ));
        }
        if min_phi.is_empty() {
            min_phi = vec![f64::INFINITY; k_count];
            max_b = vec![f64::NEG_INFINITY; k_count];
            max_s = vec![f64::NEG_INFINITY; k_count];
        }
        for k in 0..k_count {
            min_phi[k] = min_phi[k].min(sign * d.values[k].to_f64());
            max_b[k] = max_b[k].max(sign * d.breaks[k].to_f64());
            max_s[k] = max_s[k].max(f.slopes()[k].to_f64());
        }
    }
    let k_count = n.unwrap_or(0);
    let per_break: Vec<f64> = (0..k_count)
        .map(|k| {
            let prev = (k + k_count - 1) % k_count;
            min_phi[k] - max_s[k].max(max_s[prev]) * max_b[k]
        })
        .collect();
    let margin = per_break.iter().cloned().fold(f64::INFINITY, f64::min);
    let transversality = match mu_c {
        Some(mu) => {
            let f = family.instantiate(mu)?;
            let (d, _) = family.derivative_tables(mu)?;
            let k_count = f.len();
            Some(
                (0..k_count)
                    .map(|k| {
                        let prev = (k + k_count - 1) % k_count;
                        let bp = sign * d.breaks[k].to_f64();
                        let phi = sign * d.values[k].to_f64();
                        let s_prev = f.slopes()[prev].to_f64();
                        let s_here = f.slopes()[k].to_f64();
                        phi - 0f64.max(s_prev * bp).max(s_here * bp)
                    })
                    .collect(),
            )
        }
        None => None,
    };
    Ok(MonotonicityMargin {
        margin,
        per_break,
        transversality,
        derivatives: source,
    })
}

/// Family selection as read from JSON:
/// `{"family": "...", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub family: String,
    #[serde(default)]
    pub params: serde_json::Map<String, Value>,
}

fn param<S: Scalar>(params: &serde_json::Map<String, Value>, key: &str) -> Result<S> {
    let v = params
        .get(key)
        .ok_or_else(|| Error::Json(format!("missing family parameter `{key}`")))?;
    Ok(S::from_json(v)?)
}

fn param_f64(params: &serde_json::Map<String, Value>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => Ok(<f64 as Scalar>::from_json(v)?),
    }
}

fn check_keys(params: &serde_json::Map<String, Value>, allowed: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::Json(format!("unknown family parameter `{k}`")));
        }
    }
    Ok(())
}

fn rows<S: Scalar>(v: &Value, key: &str) -> Result<Vec<Vec<S>>> {
    v.as_array()
        .ok_or_else(|| Error::Json(format!("`{key}` must be an array of rows")))?
        .iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| Error::Json(format!("`{key}` rows must be arrays")))?
                .iter()
                .map(|x| S::from_json(x).map_err(Error::from))
                .collect()
        })
        .collect()
}

impl FamilyConfig {
    pub fn build<S: Scalar>(&self) -> Result<FamilySpec<S>> {
        let p = &self.params;
        match self.family.as_str() {
            "rigid" => {
                check_keys(p, &["omega"])?;
                Ok(rigid(param::<S>(p, "omega")?))
            }
            "herman" => {
                check_keys(p, &["lambda", "beta"])?;
                herman(param::<S>(p, "lambda")?, param_f64(p, "beta", 1.0)?)
            }
            "herman_shifted" => {
                check_keys(p, &["lambda"])?;
                herman_shifted(param::<S>(p, "lambda")?)
            }
            "coelho" => {
                check_keys(p, &["a", "b"])?;
                coelho(param::<S>(p, "a")?, param::<S>(p, "b")?)
            }
            "refraction" => {
                check_keys(p, &["alpha"])?;
                refraction(param::<S>(p, "alpha")?)
            }
            "herman_offset" => {
                check_keys(p, &["lambda", "d"])?;
                herman_offset(param::<S>(p, "lambda")?, param::<S>(p, "d")?)
            }
            "custom" => {
                check_keys(p, &["mus", "breaks", "values", "interpolation", "direction"])?;
                if let Some(kind) = p.get("interpolation") {
                    if kind != "linear" {
                        return Err(Error::Json(format!(
                            "unsupported interpolation {kind}; only \"linear\" is available"
                        )));
                    }
                }
                let mus = p
                    .get("mus")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::Json("custom family needs `mus`".into()))?
                    .iter()
                    .map(|x| S::from_json(x).map_err(Error::from))
                    .collect::<Result<Vec<S>>>()?;
                let breaks = rows(
                    p.get("breaks").ok_or_else(|| Error::Json("custom family needs `breaks`".into()))?,
                    "breaks",
                )?;
                let values = rows(
                    p.get("values").ok_or_else(|| Error::Json("custom family needs `values`".into()))?,
                    "values",
                )?;
                let mut spec = tabulated(mus, breaks, values)?;
                if let Some(dir) = p.get("direction") {
                    spec = spec.with_direction(serde_json::from_value(dir.clone())?);
                }
                Ok(spec)
            }
            other => Err(Error::Json(format!("unknown family `{other}`"))),
        }
    }

    /// The two-parameter form; only `herman_offset` has one.
    pub fn build_two_param<S: Scalar>(&self) -> Result<TwoParamFamilySpec<S>> {
        match self.family.as_str() {
            "herman_offset" => {
                check_keys(&self.params, &["lambda", "d"])?;
                Ok(herman_offset_two_param(param::<S>(&self.params, "lambda")?))
            }
            other => Err(Error::Json(format!(
                "family `{other}` has no two-parameter form"
            ))),
        }
    }

    /// The parameter value the family config singles out, for commands that
    /// work on one map: `mu` in params is not accepted, so this is the
    /// family's recorded critical parameter when it has one.
    pub fn default_parameter<S: Scalar>(&self) -> Result<Option<S>> {
        Ok(self.build::<S>()?.critical().cloned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    type Q = BigRational;

    #[test]
    fn herman_beta_one_matches_shifted_breaks() {
        let lam = 2f64.sqrt();
        let h = herman(lam, 1.0).unwrap();
        let t = h.tables(&0.0).unwrap();
        assert!((t.breaks[1] - 1.0 / (1.0 + lam)).abs() < 1e-15);
        let s = herman_shifted(lam).unwrap().instantiate(&0.0).unwrap();
        assert!((s.breaks()[1] - 1.0 / (1.0 + lam)).abs() < 1e-15);
        assert!((s.slopes()[0] - lam).abs() < 1e-12);
        assert!((s.slopes()[1] - 1.0 / lam).abs() < 1e-12);
    }

    #[test]
    fn coelho_instantiates_exactly() {
        let f = coelho(Q::from_ratio(1, 3), Q::from_ratio(1, 2))
            .unwrap()
            .instantiate(&Q::from_i64(0))
            .unwrap();
        assert_eq!(f.slopes(), &[Q::from_ratio(4, 3), Q::from_ratio(2, 3)]);
        // G(b) = 1
        assert_eq!(f.eval(&Q::from_ratio(1, 2)), Q::from_i64(1));
    }

    #[test]
    fn refraction_domain() {
        assert!(matches!(
            refraction_tables(&1.0, &2.0),
            Err(Error::OutOfDomain(_))
        ));
        assert!(matches!(
            refraction_tables(&2.0, &3.0),
            Err(Error::OutOfDomain(_))
        ));
        let fam = refraction(2.0).unwrap();
        assert!(matches!(fam.instantiate(&2.5), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn refraction_lift_matches_circle_formula() {
        let (al, be) = (2.0, 1.126);
        let f = refraction_map(&al, &be).unwrap();
        let circle = |x: f64| -> f64 {
            if x < al / (2.0 * be) * (be - 1.0) {
                x / al + (be + 1.0) / (2.0 * be)
            } else if x < 0.5 {
                be / al * x + 0.5 * (1.0 - be)
            } else if x < 1.0 - 1.0 / (2.0 * al) {
                be * (x - 1.0) + (al + be) / (2.0 * al)
            } else {
                al / be * (x - 1.0) + (be + 1.0) / (2.0 * be)
            }
        };
        for i in 0..1000 {
            let x = i as f64 / 1000.0;
            let d = (f.eval(&x) - circle(x)).rem_euclid(1.0);
            assert!(d < 1e-12 || d > 1.0 - 1e-12, "x = {x}");
        }
    }

    #[test]
    fn critical_beta_values() {
        let b = gmm_critical_beta(&2.0).unwrap();
        assert!((b - (5f64.sqrt() - 1.0)).abs() < 1e-15);
        for al in [1.5, 2.0, 3.0, 5.0] {
            let be = gmm_critical_beta(&al).unwrap();
            let quad = (al - 1.0) * be * be + al * (al - 1.0) * be - al * al;
            assert!(quad.abs() < 1e-12);
        }
        let alpha0 = gmm_critical_alpha_for_ratio(10f64.sqrt()).unwrap();
        assert!((alpha0 - 3.403).abs() < 5e-4);
        let be = gmm_critical_beta(&alpha0).unwrap();
        assert!((alpha0 / be - 10f64.sqrt()).abs() < 1e-12);
        assert!(gmm_critical_beta(&Q::from_i64(2)).is_err());
    }

    #[test]
    fn coelho_rho_value() {
        let r = coelho_rho(1.0 / 3.0, 0.5).unwrap();
        assert!((r - (4f64 / 3.0).ln() / 2f64.ln()).abs() < 1e-15);
        assert!((r - 0.41504).abs() < 1e-5);
    }

    #[test]
    fn herman_offset_reduces_to_shifted_at_zero() {
        let lam = Q::from_ratio(1, 2);
        let off = herman_offset(lam.clone(), Q::from_i64(0)).unwrap();
        let shifted = herman_shifted(lam).unwrap();
        for mu in [Q::from_ratio(-1, 10), Q::from_i64(0), Q::from_ratio(3, 100)] {
            assert_eq!(off.instantiate(&mu).unwrap(), shifted.instantiate(&mu).unwrap());
        }
    }

    #[test]
    fn herman_offset_first_order_agrees() {
        let lam = 0.5;
        for (mu, d) in [(1e-3, 2e-3), (-2e-3, 1e-3), (5e-3, -5e-3)] {
            let (a, b) = herman_offset_coefficients(&lam, &mu, &d).unwrap();
            let (a1, b1) = herman_offset_first_order(lam, mu, d);
            let scale = mu * mu + d * d + (mu * d).abs();
            assert!((a - a1).abs() <= 50.0 * scale, "a: {a} vs {a1}");
            assert!((b - b1).abs() <= 50.0 * scale, "b: {b} vs {b1}");
        }
    }

    #[test]
    fn numerical_derivatives_match_analytic() {
        let fam = refraction(2.0).unwrap();
        let mu = 1.2;
        let (an, src) = fam.derivative_tables(&mu).unwrap();
        assert_eq!(src, DerivativeSource::Analytic);
        let plain = FamilySpec::new("refraction-fd", |b: &f64| refraction_tables(&2.0, b));
        let (num, src) = plain.derivative_tables(&mu).unwrap();
        assert_eq!(src, DerivativeSource::Numerical);
        for k in 0..4 {
            assert!((an.breaks[k] - num.breaks[k]).abs() < 1e-8);
            assert!((an.values[k] - num.values[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn herman_margin_is_one() {
        let fam = herman_shifted(2f64.sqrt()).unwrap();
        let m = monotonicity_margin(&fam, (-0.1, 0.1), 11, Some(&0.0)).unwrap();
        assert_eq!(m.margin, 1.0);
        assert_eq!(m.transversality_min(), Some(1.0));
    }

    #[test]
    fn refraction_margin_vanishes_at_fixed_break() {
        // b_4 = 1 - 1/(2α) and its value do not move with β
        let fam = refraction(2.0).unwrap();
        let b0 = gmm_critical_beta(&2.0).unwrap();
        let m = monotonicity_margin(&fam, (b0 - 0.01, b0 + 0.01), 11, Some(&b0)).unwrap();
        assert_eq!(m.per_break[3], 0.0);
        assert!(m.per_break[..3].iter().all(|&v| v > 0.2));
        assert_eq!(m.margin, 0.0);
    }

    #[test]
    fn config_round_trip() {
        let cfg: FamilyConfig = serde_json::from_str(
            r#"{"family": "coelho", "params": {"a": "1/3", "b": "1/2"}}"#,
        )
        .unwrap();
        let fam = cfg.build::<Q>().unwrap();
        assert_eq!(fam.name(), "coelho");
        let bad: FamilyConfig =
            serde_json::from_str(r#"{"family": "coelho", "params": {"a": 0.3, "c": 1}}"#).unwrap();
        assert!(bad.build::<f64>().is_err());
        let irr: FamilyConfig = serde_json::from_str(
            r#"{"family": "herman_shifted", "params": {"lambda": "sqrt(2)"}}"#,
        )
        .unwrap();
        assert!(matches!(
            irr.build::<Q>(),
            Err(Error::Scalar(crate::error::ScalarError::IrrationalInExact(_)))
        ));
        assert!(irr.build::<f64>().is_ok());
    }

    #[test]
    fn tabulated_interpolates() {
        let fam = tabulated(
            vec![0.0, 1.0],
            vec![vec![0.0, 0.5], vec![0.0, 0.5]],
            vec![vec![0.1, 0.6], vec![0.3, 0.8]],
        )
        .unwrap();
        let t = fam.tables(&0.5).unwrap();
        assert!((t.values[0] - 0.2).abs() < 1e-15);
        assert!(matches!(fam.instantiate(&2.0), Err(Error::OutOfDomain(_))));
        let (d, src) = fam.derivative_tables(&0.5).unwrap();
        assert_eq!(src, DerivativeSource::Numerical);
        assert!((d.values[0] - 0.2).abs() < 1e-8);
    }
}
