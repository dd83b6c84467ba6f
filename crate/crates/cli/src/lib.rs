//! Batch front end: one JSON job file per run, output as CSV or JSON.
//!
//! Commands: `rho`, `sweep`, `conjugacy`, `scaling`, `modelock`, `pinch`.
//! Every command runs on either backend; the choice comes from the command
//! line or the job file (`float` by default).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use pwl_rotor::conjugacy::{
    break_orbit_partition, build_conjugacy, check_trivial_cancellations, invariant_density,
    is_conjugate_to_rigid, verify_invariance, ConjugacyVerdict, OrbitOutcome, INVARIANCE_SEED,
};
use pwl_rotor::families::{monotonicity_margin, FamilyConfig, FamilySpec};
use pwl_rotor::rotation::{birkhoff_enclosure, exact_rotation, mode_lock_interval, RotationKind};
use pwl_rotor::scaling::{herman_offset_reference_slopes, pinch_boundaries, r1, scaling_residual, ScalingOptions};
use pwl_rotor::{Backend, BigRational, Error, PwlLift, Scalar, Tolerance};

pub const DEFAULT_Q_MAX: u64 = 10_000;
pub const Q_MAX_CAP: u64 = 1_000_000;
pub const DEFAULT_ITERATES: u64 = 100_000;
pub const DEFAULT_SWEEP_POINTS: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Rho,
    Sweep,
    Conjugacy,
    Scaling,
    Modelock,
    Pinch,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Rho => "rho",
            Command::Sweep => "sweep",
            Command::Conjugacy => "conjugacy",
            Command::Scaling => "scaling",
            Command::Modelock => "modelock",
            Command::Pinch => "pinch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A job file. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub command: Option<Command>,
    pub family: Option<FamilyConfig>,
    /// An explicit lift `{breaks, values}` for single-map commands.
    pub lift: Option<Value>,
    /// Family parameter for single-map commands; defaults to the family's
    /// conjugacy parameter when it has one.
    pub mu: Option<Value>,
    pub backend: Option<Backend>,
    pub tolerance: Option<Tolerance>,
    pub q_max: Option<u64>,
    /// Birkhoff iterates.
    pub m: Option<u64>,
    /// Sweep range `[lo, hi]`.
    pub range: Option<[Value; 2]>,
    pub points: Option<usize>,
    pub p: Option<i64>,
    pub q: Option<i64>,
    pub bracket: Option<[Value; 2]>,
    pub tol: Option<Value>,
    pub d_grid: Option<Vec<Value>>,
    /// First-order pinch boundary slopes `(c1, c2)`.
    pub reference_slopes: Option<[f64; 2]>,
    pub h_fit: Option<f64>,
    /// Residual windows for `scaling`.
    pub windows: Option<Vec<f64>>,
    pub samples: Option<usize>,
    /// Evaluations of `F^q` per enclosure in `scaling`.
    pub iterations: Option<u64>,
    /// Exit with status 4 when `conjugacy` finds no conjugacy (default true).
    pub require_conjugate: Option<bool>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub workers: Option<usize>,
}

impl JobConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading job file {}", path.display()))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).map_err(|e| anyhow!(Error::Json(e.to_string())))
    }

    pub fn backend(&self) -> Backend {
        self.backend.unwrap_or(Backend::Float)
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tolerance.unwrap_or_default()
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or(Format::Json)
    }

    /// Checks that the fields the command needs are present, before any
    /// computation starts.
    pub fn validate(&self, cmd: Command) -> anyhow::Result<()> {
        if let Some(c) = self.command {
            if c != cmd {
                bail!(Error::InvalidArgument(format!(
                    "job file is for `{}` but `{}` was requested",
                    c.as_str(),
                    cmd.as_str()
                )));
            }
        }
        let need = |ok: bool, what: &str| -> anyhow::Result<()> {
            if ok {
                Ok(())
            } else {
                Err(anyhow!(Error::Json(format!("`{}` needs {what}", cmd.as_str()))))
            }
        };
        match cmd {
            Command::Rho | Command::Conjugacy => need(
                self.lift.is_some() || self.family.is_some(),
                "`lift` or `family`",
            )?,
            Command::Sweep => {
                need(self.family.is_some(), "`family`")?;
                need(self.range.is_some(), "`range`")?;
            }
            Command::Scaling => need(self.family.is_some(), "`family`")?,
            Command::Modelock => {
                need(self.family.is_some(), "`family`")?;
                need(self.p.is_some() && self.q.is_some(), "`p` and `q`")?;
                need(self.bracket.is_some(), "`bracket`")?;
            }
            Command::Pinch => {
                need(self.family.is_some(), "`family`")?;
                need(self.p.is_some() && self.q.is_some(), "`p` and `q`")?;
                need(self.bracket.is_some(), "`bracket`")?;
                need(self.d_grid.is_some(), "`d_grid`")?;
            }
        }
        if self.lift.is_some() && self.family.is_some() {
            bail!(Error::Json("give either `lift` or `family`, not both".into()));
        }
        if let Some(q) = self.q_max {
            if q == 0 || q > Q_MAX_CAP {
                bail!(Error::InvalidArgument(format!("q_max must be in 1..={Q_MAX_CAP}")));
            }
        }
        if self.workers == Some(0) {
            bail!(Error::InvalidArgument("workers must be >= 1".into()));
        }
        if self.points.is_some_and(|n| n < 2) {
            bail!(Error::InvalidArgument("a sweep needs at least 2 points".into()));
        }
        Ok(())
    }
}

/// A command's result in both output shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub json: Value,
    pub csv_header: Vec<&'static str>,
    pub csv_rows: Vec<Vec<String>>,
    /// Extra `#` comment lines for the CSV form.
    pub notes: Vec<String>,
    /// One-line human summary.
    pub summary: String,
    /// Process status after the output is written.
    pub exit_code: i32,
}

impl Report {
    fn new(json: Value, summary: String) -> Self {
        Report {
            json,
            csv_header: Vec::new(),
            csv_rows: Vec::new(),
            notes: Vec::new(),
            summary,
            exit_code: 0,
        }
    }
}

/// Exit status for an error: 2 domain, 3 overflow, 4 not conjugate,
/// 5 not bracketed, 1 anything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(Error::OutOfDomain(_)) | Some(Error::Scalar(_)) | Some(Error::LogDomain { .. }) => 2,
        Some(Error::Overflow { .. }) => 3,
        Some(Error::NotConjugate(_)) => 4,
        Some(Error::NotBracketed(_)) => 5,
        _ => 1,
    }
}

pub fn run(cmd: Command, cfg: &JobConfig) -> anyhow::Result<Report> {
    cfg.validate(cmd)?;
    match cfg.backend() {
        Backend::Float => run_with::<f64>(cmd, cfg),
        Backend::Rational => run_with::<BigRational>(cmd, cfg),
    }
}

fn run_with<S: Scalar>(cmd: Command, cfg: &JobConfig) -> anyhow::Result<Report> {
    match cmd {
        Command::Rho => cmd_rho::<S>(cfg),
        Command::Sweep => cmd_sweep::<S>(cfg),
        Command::Conjugacy => cmd_conjugacy::<S>(cfg),
        Command::Scaling => cmd_scaling::<S>(cfg),
        Command::Modelock => cmd_modelock::<S>(cfg),
        Command::Pinch => cmd_pinch::<S>(cfg),
    }
}

fn scalar<S: Scalar>(v: &Value) -> anyhow::Result<S> {
    Ok(S::from_json(v).map_err(Error::from)?)
}

fn family<S: Scalar>(cfg: &JobConfig) -> anyhow::Result<FamilySpec<S>> {
    let fc = cfg
        .family
        .as_ref()
        .ok_or_else(|| anyhow!(Error::Json("missing `family`".into())))?;
    Ok(fc.build::<S>()?.with_tolerance(cfg.tolerance()))
}

/// The single map a command works on: the explicit lift, or the family at
/// `mu` (or at its conjugacy parameter).
fn single_map<S: Scalar>(cfg: &JobConfig) -> anyhow::Result<(PwlLift<S>, Option<S>)> {
    if let Some(l) = &cfg.lift {
        return Ok((PwlLift::from_json(l)?.with_tolerance(cfg.tolerance()), None));
    }
    let fam = family::<S>(cfg)?;
    let mu = parameter(cfg, &fam)?;
    Ok((fam.instantiate(&mu)?, Some(mu)))
}

fn parameter<S: Scalar>(cfg: &JobConfig, fam: &FamilySpec<S>) -> anyhow::Result<S> {
    match &cfg.mu {
        Some(v) => scalar(v),
        None => fam.critical().cloned().ok_or_else(|| {
            anyhow!(Error::Json(format!(
                "family `{}` has no recorded conjugacy parameter; set `mu`",
                fam.name()
            )))
        }),
    }
}

fn bracket<S: Scalar>(cfg: &JobConfig) -> anyhow::Result<(S, S)> {
    let [a, b] = cfg
        .bracket
        .as_ref()
        .ok_or_else(|| anyhow!(Error::Json("missing `bracket`".into())))?;
    Ok((scalar(a)?, scalar(b)?))
}

fn tol<S: Scalar>(cfg: &JobConfig) -> anyhow::Result<S> {
    match &cfg.tol {
        Some(v) => scalar(v),
        None => Ok(S::from_f64(DEFAULT_TOL)),
    }
}

fn pool(cfg: &JobConfig) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        b = b.num_threads(n);
    }
    b.build().context("starting worker pool")
}

pub fn cmd_rho<S: Scalar>(cfg: &JobConfig) -> anyhow::Result<Report> {
    let (f, mu) = single_map::<S>(cfg)?;
    let q_max = cfg.q_max.unwrap_or(DEFAULT_Q_MAX);
    let m = cfg.m.unwrap_or(DEFAULT_ITERATES);
    let exact = exact_rotation(&f, q_max)?;
    let birk = birkhoff_enclosure(&f, m);
    let summary = match &exact.kind {
        RotationKind::Exact { p, q, .. } => format!("exact {p}/{q}"),
        RotationKind::Enclosure { .. } => {
            let (lo, hi) = birk.bounds();
            format!("enclosure [{lo}, {hi}]")
        }
    };
    let mut rep = Report::new(
        json!({
            "mu": mu.as_ref().map(Scalar::to_json),
            "exact": exact.to_json(),
            "birkhoff": birk.to_json(),
            "summary": summary,
        }),
        summary.clone(),
    );
    rep.csv_header = vec!["source", "kind", "p", "q", "lo", "hi", "witness", "iterations"];
    for (src, r) in [("stern_brocot", &exact), ("birkhoff", &birk)] {
        let (lo, hi) = r.bounds();
        let (p, q, w) = match &r.kind {
            RotationKind::Exact { p, q, witness } => (p.to_string(), q.to_string(), witness.to_string()),
            RotationKind::Enclosure { .. } => Default::default(),
        };
        let kind = if r.is_exact() { "exact" } else { "enclosure" };
        rep.csv_rows.push(vec![
            src.into(),
            kind.into(),
            p,
            q,
            lo.to_string(),
            hi.to_string(),
            w,
            r.iterations.to_string(),
        ]);
    }
    Ok(rep)
}

/// One sweep row: `(μ, ρ_lo, ρ_hi)` or the error that stopped this point.
type SweepRow<S> = (S, Result<(S, S), String>);

pub fn cmd_sweep<S: Scalar>(cfg: &JobConfig) -> anyhow::Result<Report> {
    let fam = family::<S>(cfg)?;
    let [a, b] = cfg.range.as_ref().expect("validated");
    let (lo, hi): (S, S) = (scalar(a)?, scalar(b)?);
    let n = cfg.points.unwrap_or(DEFAULT_SWEEP_POINTS);
    let m = cfg.m.unwrap_or(DEFAULT_ITERATES);
    let grid: Vec<S> = (0..n)
        .map(|i| lo.clone() + (hi.clone() - lo.clone()) * S::from_ratio(i as i64, (n - 1) as i64))
        .collect();
    let rows: Vec<SweepRow<S>> = pool(cfg)?.install(|| {
        grid.par_iter()
            .map(|mu| {
                let r = fam
                    .instantiate(mu)
                    .map(|f| birkhoff_enclosure(&f, m).bounds())
                    .map_err(|e| {
                        log::warn!("sweep point μ = {mu}: {e}");
                        e.to_string()
                    });
                (mu.clone(), r)
            })
            .collect()
    });
    let failures = rows.iter().filter(|(_, r)| r.is_err()).count();
    let mut rep = Report::new(
        json!({
            "family": fam.name(),
            "direction": fam.direction(),
            "iterates": m,
            "rows": rows.iter().map(|(mu, r)| match r {
                Ok((lo, hi)) => json!({"mu": mu.to_json(), "rho_lo": lo.to_json(), "rho_hi": hi.to_json()}),
                Err(e) => json!({"mu": mu.to_json(), "error": e}),
            }).collect::<Vec<_>>(),
        }),
        format!("{n} points, {failures} failed"),
    );
    rep.csv_header = vec!["mu", "rho_lo", "rho_hi"];
    rep.csv_rows = rows
        .iter()
        .map(|(mu, r)| match r {
            Ok((lo, hi)) => vec![mu.to_string(), lo.to_string(), hi.to_string()],
            Err(_) => vec![mu.to_string(), String::new(), String::new()],
        })
        .collect();
    rep.notes.push(format!("family={} iterates={m}", fam.name()));
    Ok(rep)
}

pub fn cmd_conjugacy<S: Scalar>(cfg: &JobConfig) -> anyhow::Result<Report> {
    let (f, mu) = single_map::<S>(cfg)?;
    let f = f.canonicalize();
    let q_max = cfg.q_max.unwrap_or(DEFAULT_Q_MAX);
    let verdict = is_conjugate_to_rigid(&f, q_max)?;
    let mut rep = Report::new(Value::Null, String::new());
    rep.csv_header = vec!["piece_start", "density"];
    match &verdict {
        ConjugacyVerdict::Conjugate { p, q } => {
            let part = match break_orbit_partition(&f, Some(*q as u64), q_max)? {
                OrbitOutcome::Periodic(part) => part,
                OrbitOutcome::NotPeriodic { break_index, .. } => {
                    return Err(anyhow!(Error::InternalMismatch(format!(
                        "break {break_index} lost periodicity on re-check"
                    ))))
                }
            };
            let products = check_trivial_cancellations(&f, &part)?;
            let h = build_conjugacy(&f, &part)?;
            let density = invariant_density(&f, *q as u64)?;
            let discrepancy = verify_invariance(&f, &density, 1000);
            rep.summary = format!("conjugate {p}/{q}");
            rep.csv_rows = density
                .csv_rows()
                .into_iter()
                .map(|(a, b)| vec![a, b])
                .collect();
            rep.notes.push(format!("verdict=conjugate p={p} q={q}"));
            rep.json = json!({
                "mu": mu.as_ref().map(Scalar::to_json),
                "verdict": verdict,
                "partition": part,
                "cancellations": products.iter().map(Scalar::to_json).collect::<Vec<_>>(),
                "conjugacy": h.to_json(),
                "density": density.to_json(),
                "invariance_discrepancy": discrepancy.to_json(),
                "jumps": f.jump_data(),
            });
        }
        ConjugacyVerdict::NotConjugate { reason } | ConjugacyVerdict::Undecided { reason } => {
            rep.summary = format!("not conjugate: {reason}");
            rep.notes.push(format!("verdict=not_conjugate reason={reason}"));
            rep.json = json!({
                "mu": mu.as_ref().map(Scalar::to_json),
                "verdict": verdict,
                "jumps": f.jump_data(),
            });
            if cfg.require_conjugate.unwrap_or(true) {
                rep.exit_code = 4;
            }
        }
    }
    Ok(rep)
}

pub fn cmd_scaling<S: Scalar>(cfg: &JobConfig) -> anyhow::Result<Report> {
    let fam = family::<S>(cfg)?;
    let mu_c = parameter(cfg, &fam)?;
    let mut opts = ScalingOptions {
        h_fit: cfg.h_fit,
        ..ScalingOptions::default()
    };
    if let Some(q) = cfg.q_max {
        opts.q_cap = q;
    }
    if let Some(it) = cfg.iterations {
        opts.iterations = it;
    }
    let report = r1(&fam, &mu_c, &opts).map_err(|e| match e {
        Error::RotationIrrational { .. } => Error::NotConjugate(e.to_string()),
        other => other,
    })?;
    let windows = cfg.windows.clone().unwrap_or_default();
    let samples = cfg.samples.unwrap_or(41);
    let residuals = pool(cfg)?.install(|| {
        windows
            .par_iter()
            .map(|&w| scaling_residual(&fam, &mu_c, &report, w, samples, opts.iterations))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut rep = Report::new(
        json!({"report": report, "residuals": residuals}),
        format!("R1 = {} (empirical {})", report.r1, report.r1_emp),
    );
    rep.csv_header = vec!["landmark", "midpoint", "a", "b", "s_sample", "kappa"];
    rep.csv_rows = (0..report.landmarks.len())
        .map(|i| {
            vec![
                report.landmarks[i].to_string(),
                report.midpoints[i].to_string(),
                report.a[i].to_string(),
                report.b[i].to_string(),
                report.s_sample[i].to_string(),
                report.kappa[i].to_string(),
            ]
        })
        .collect();
    rep.notes.push(format!(
        "p={} q={} r1={} r1_emp={} h_fit={} derivatives={:?}",
        report.p, report.q, report.r1, report.r1_emp, report.h_fit, report.derivatives
    ));
    for r in &residuals {
        rep.notes.push(format!("window={} r2={}", r.window, r.r2));
    }
    Ok(rep)
}

pub fn cmd_modelock<S: Scalar>(cfg: &JobConfig) -> anyhow::Result<Report> {
    let fam = family::<S>(cfg)?;
    let (p, q) = (cfg.p.expect("validated"), cfg.q.expect("validated"));
    let br = bracket::<S>(cfg)?;
    let margin = monotonicity_margin(&fam, br.clone(), 50, None).ok();
    if let Some(m) = &margin {
        if m.margin <= 0.0 {
            log::warn!("monotonicity margin {} is not positive on the bracket", m.margin);
        }
    }
    let iv = mode_lock_interval(&fam, p, q, br, tol::<S>(cfg)?)?;
    let width = iv.width();
    let mut rep = Report::new(
        json!({
            "interval": iv,
            "width": width.to_json(),
            "monotonicity_margin": margin.as_ref().map(|m| m.margin),
        }),
        format!("{p}/{q} locked on [{}, {}]", iv.lo_param, iv.hi_param),
    );
    rep.csv_header = vec!["p", "q", "lo_param", "hi_param", "width"];
    rep.csv_rows = vec![vec![
        p.to_string(),
        q.to_string(),
        iv.lo_param.to_string(),
        iv.hi_param.to_string(),
        width.to_string(),
    ]];
    Ok(rep)
}

pub fn cmd_pinch<S: Scalar>(cfg: &JobConfig) -> anyhow::Result<Report> {
    let fc = cfg.family.as_ref().expect("validated");
    let two = fc.build_two_param::<S>()?;
    let (p, q) = (cfg.p.expect("validated"), cfg.q.expect("validated"));
    let br = bracket::<S>(cfg)?;
    let d_grid = cfg
        .d_grid
        .as_ref()
        .expect("validated")
        .iter()
        .map(scalar::<S>)
        .collect::<anyhow::Result<Vec<S>>>()?;
    let reference = match cfg.reference_slopes {
        Some([a, b]) => Some((a, b)),
        None if fc.family == "herman_offset" => fc
            .params
            .get("lambda")
            .and_then(|v| <f64 as Scalar>::from_json(v).ok())
            .map(herman_offset_reference_slopes),
        None => None,
    };
    let report = pinch_boundaries(&two, p, q, &d_grid, br, tol::<S>(cfg)?, reference);
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    let mut rep = Report::new(
        serde_json::to_value(&report)?,
        format!("{} rows, {failed} failed", report.rows.len()),
    );
    rep.csv_header = vec!["d", "mu_lo", "mu_hi"];
    rep.csv_rows = report.csv_rows().into_iter().map(Vec::from).collect();
    if let Some(w) = report.width_at_zero {
        rep.notes.push(format!("width_at_zero={w}"));
    }
    Ok(rep)
}

/// Renders a report. CSV output starts with a comment line recording the
/// backend, tolerances and seed, then any notes, then the header.
pub fn render(report: &Report, cfg: &JobConfig, format: Format) -> anyhow::Result<String> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report.json)?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let t = cfg.tolerance();
            let mut s = String::new();
            writeln!(
                s,
                "# backend={} point={:e} slope={:e} sign_band={:e} orbit={:e} seed={}",
                cfg.backend().as_str(),
                t.point,
                t.slope,
                t.sign_band,
                t.orbit,
                INVARIANCE_SEED
            )?;
            for n in &report.notes {
                writeln!(s, "# {n}")?;
            }
            writeln!(s, "{}", report.csv_header.join(","))?;
            for row in &report.csv_rows {
                writeln!(s, "{}", row.join(","))?;
            }
            Ok(s)
        }
    }
}

/// Runs a command end to end and writes the output; returns the exit code.
pub fn execute(cmd: Command, cfg: &JobConfig) -> i32 {
    let result = run(cmd, cfg).and_then(|rep| {
        let text = render(&rep, cfg, cfg.format())?;
        match &cfg.out {
            Some(path) => {
                std::fs::write(path, &text)
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("{}", rep.summary);
            }
            None => print!("{text}"),
        }
        log::info!("{}: {}", cmd.as_str(), rep.summary);
        Ok(rep.exit_code)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = JobConfig::from_json_str(r#"{"family": {"family": "rigid"}, "bogus": 1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn missing_fields_caught_before_running() {
        let cfg = JobConfig::from_json_str(r#"{"family": {"family": "rigid", "params": {"omega": 0.5}}}"#)
            .unwrap();
        assert!(cfg.validate(Command::Modelock).is_err());
        assert!(cfg.validate(Command::Rho).is_ok());
    }

    #[test]
    fn rho_rigid_third() {
        let cfg = JobConfig::from_json_str(
            r#"{"lift": {"breaks": ["0"], "values": ["1/3"]}, "backend": "rational", "m": 100}"#,
        )
        .unwrap();
        let rep = run(Command::Rho, &cfg).unwrap();
        assert_eq!(rep.summary, "exact 1/3");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&anyhow!(Error::OutOfDomain("x".into()))), 2);
        assert_eq!(exit_code(&anyhow!(Error::Overflow { pieces: 2, cap: 1 })), 3);
        assert_eq!(exit_code(&anyhow!(Error::NotConjugate("x".into()))), 4);
        assert_eq!(exit_code(&anyhow!(Error::NotBracketed("x".into()))), 5);
        assert_eq!(exit_code(&anyhow!("other")), 1);
    }

    #[test]
    fn csv_has_comment_and_header() {
        let cfg = JobConfig::from_json_str(
            r#"{"family": {"family": "rigid", "params": {"omega": 0}}, "range": [0, 1], "points": 3, "m": 10}"#,
        )
        .unwrap();
        let rep = run(Command::Sweep, &cfg).unwrap();
        let text = render(&rep, &cfg, Format::Csv).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# backend=float point=1e-12"));
        assert!(lines.any(|l| l == "mu,rho_lo,rho_hi"));
    }
}
