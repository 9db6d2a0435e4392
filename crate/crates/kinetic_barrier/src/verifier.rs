//! Numerical checks of the upper bounds on the pieces of the split operator,
//! and replays of the first-contact argument on solver trajectories.
//!
//! A bound `lhs ≲ ± rhs` cannot be verified as such; every check records the
//! implied constants `lhs / rhs` over a sample set and passes when they have
//! the claimed sign and their spread stays under a frozen cap. Exponents are
//! checked separately through log-log slope fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::barrier::{Amplitude, Barrier, BarrierForm, FrozenBarrier};
use crate::error::{Error, Result};
use crate::fixtures::own_bounds;
use crate::geom::{self, Vel};
use crate::grid::GridDistribution;
use crate::hydro::{hydro_fields, mass_core, HydroBounds};
use crate::kernel::CancellationConstant;
use crate::operator::{self, OperatorOptions, SplitResult, VelocityFunction};
use crate::params::{c1_raw, KernelParams};
use crate::quadrature::{self, Estimate};
use crate::solver::Snapshot;

/// Largest admissible max/min ratio of implied constants.
pub const DEFAULT_SPREAD_CAP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PropositionId {
    Lemma32,
    P31,
    P33,
    P34,
    P35,
    P36,
    P37,
    P38,
    P39,
    P53,
    P54,
    P55,
    P56,
    P57,
    P58,
    P59,
}

impl PropositionId {
    pub const ALL: [PropositionId; 16] = [
        PropositionId::Lemma32,
        PropositionId::P31,
        PropositionId::P33,
        PropositionId::P34,
        PropositionId::P35,
        PropositionId::P36,
        PropositionId::P37,
        PropositionId::P38,
        PropositionId::P39,
        PropositionId::P53,
        PropositionId::P54,
        PropositionId::P55,
        PropositionId::P56,
        PropositionId::P57,
        PropositionId::P58,
        PropositionId::P59,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            PropositionId::Lemma32 => "3.2",
            PropositionId::P31 => "3.1",
            PropositionId::P33 => "3.3",
            PropositionId::P34 => "3.4",
            PropositionId::P35 => "3.5",
            PropositionId::P36 => "3.6",
            PropositionId::P37 => "3.7",
            PropositionId::P38 => "3.8",
            PropositionId::P39 => "3.9",
            PropositionId::P53 => "5.3",
            PropositionId::P54 => "5.4",
            PropositionId::P55 => "5.5",
            PropositionId::P56 => "5.6",
            PropositionId::P57 => "5.7",
            PropositionId::P58 => "5.8",
            PropositionId::P59 => "5.9",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches(|c: char| c.is_ascii_alphabetic());
        PropositionId::ALL
            .iter()
            .copied()
            .find(|id| id.label() == t)
            .ok_or_else(|| Error::Config(format!("unknown proposition `{s}`")))
    }

    /// Variant of the same estimate for a barrier with a corrector.
    fn corrected(self) -> Self {
        match self {
            PropositionId::P31 => PropositionId::P53,
            PropositionId::P33 => PropositionId::P54,
            PropositionId::P35 => PropositionId::P55,
            PropositionId::P36 => PropositionId::P56,
            PropositionId::P37 => PropositionId::P57,
            PropositionId::P38 => PropositionId::P58,
            PropositionId::P39 => PropositionId::P59,
            other => other,
        }
    }
}

/// Shape of the claimed inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Claim {
    /// `lhs ≲ -rhs`: the implied constant is `-lhs/rhs` and must be positive.
    NegativeUpperBound,
    /// `lhs ≲ rhs`: the implied constant is `lhs/rhs`.
    UpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub q: f64,
    pub v: Vel,
    pub v_norm: f64,
    pub lhs: f64,
    pub lhs_error: f64,
    /// The bound without its constant, always positive.
    pub rhs_core: f64,
    pub implied_constant: f64,
    /// Whether the sample satisfies the proposition's hypotheses (radius).
    pub admissible: bool,
    pub pass: bool,
}

/// Least-squares slope of `ln y` against `ln |v|` for one value of `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub q: f64,
    pub lhs_slope: f64,
    pub rhs_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropositionReport {
    pub id: PropositionId,
    /// Sub-case or normalization tag, e.g. `"B1"` or `"proof"`.
    pub variant: &'static str,
    pub claim: Claim,
    pub rows: Vec<ReportRow>,
    pub spread_cap: f64,
    /// max/min of the positive implied constants over admissible rows.
    pub spread: f64,
    pub fits: Vec<SlopeFit>,
    /// Largest max/min ratio across `q` at a common speed, with its cap.
    pub q_spread: Option<(f64, f64)>,
    pub verdict: bool,
    pub notes: Vec<String>,
}

impl PropositionReport {
    /// `3.7/proof`, or just `3.1` without a variant.
    pub fn tag(&self) -> String {
        if self.variant.is_empty() {
            self.id.label().to_string()
        } else {
            format!("{}/{}", self.id.label(), self.variant)
        }
    }

    fn finish(
        id: PropositionId,
        variant: &'static str,
        claim: Claim,
        mut rows: Vec<ReportRow>,
        spread_cap: f64,
        notes: Vec<String>,
    ) -> Self {
        for r in rows.iter_mut() {
            let finite = r.lhs.is_finite() && r.rhs_core.is_finite() && r.implied_constant.is_finite();
            r.pass = finite
                && (!r.admissible || claim == Claim::UpperBound || r.implied_constant > 0.0);
        }
        let positive: Vec<f64> = rows
            .iter()
            .filter(|r| r.admissible && r.implied_constant > 0.0)
            .map(|r| r.implied_constant)
            .collect();
        let spread = if positive.is_empty() {
            1.0
        } else {
            let hi = positive.iter().copied().fold(f64::MIN, f64::max);
            let lo = positive.iter().copied().fold(f64::MAX, f64::min);
            hi / lo
        };
        let any_admissible = rows.iter().any(|r| r.admissible);
        let mut notes = notes;
        if !any_admissible {
            notes.push("no sample satisfies the hypotheses".into());
        }
        let verdict = any_admissible && rows.iter().all(|r| r.pass) && spread <= spread_cap;
        let fits = slope_fits(&rows);
        PropositionReport { id, variant, claim, rows, spread_cap, spread, fits, q_spread: None, verdict, notes }
    }
}

impl PropositionReport {
    /// Additionally require the implied constants at each sample speed to
    /// agree across `q` within a factor `cap`.
    pub fn with_q_stability(mut self, cap: f64) -> Self {
        let mut worst = 1.0f64;
        let mut speeds: Vec<f64> = self.rows.iter().map(|r| r.v_norm).collect();
        speeds.sort_by(|a, b| a.total_cmp(b));
        speeds.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
        for sp in speeds {
            let at: Vec<f64> = self
                .rows
                .iter()
                .filter(|r| r.admissible && r.implied_constant > 0.0 && (r.v_norm - sp).abs() <= 1e-9 * sp)
                .map(|r| r.implied_constant)
                .collect();
            if at.len() > 1 {
                let hi = at.iter().copied().fold(f64::MIN, f64::max);
                let lo = at.iter().copied().fold(f64::MAX, f64::min);
                worst = worst.max(hi / lo);
            }
        }
        self.q_spread = Some((worst, cap));
        self.verdict &= worst <= cap;
        self
    }
}

/// Assemble a report from evaluated rows, computing verdict, spread and fits.
pub fn finish_report(
    id: PropositionId,
    variant: &'static str,
    claim: Claim,
    rows: Vec<ReportRow>,
    spread_cap: f64,
    notes: Vec<String>,
) -> PropositionReport {
    PropositionReport::finish(id, variant, claim, rows, spread_cap, notes)
}

fn row(q: f64, v: &Vel, est: Estimate, rhs_core: f64, claim: Claim, admissible: bool) -> ReportRow {
    let implied = match claim {
        Claim::NegativeUpperBound => -est.value / rhs_core,
        Claim::UpperBound => est.value / rhs_core,
    };
    ReportRow {
        q,
        v: *v,
        v_norm: geom::norm(v),
        lhs: est.value,
        lhs_error: est.error,
        rhs_core,
        implied_constant: implied,
        admissible,
        pass: false,
    }
}

/// Least-squares slope of `(x, y)`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn slope_fits(rows: &[ReportRow]) -> Vec<SlopeFit> {
    let mut qs: Vec<f64> = rows.iter().map(|r| r.q).collect();
    qs.sort_by(|a, b| a.total_cmp(b));
    qs.dedup();
    let mut out = Vec::new();
    for q in qs {
        let sel: Vec<&ReportRow> = rows.iter().filter(|r| r.q == q && r.lhs != 0.0).collect();
        let mut norms: Vec<f64> = sel.iter().map(|r| r.v_norm).collect();
        norms.sort_by(|a, b| a.total_cmp(b));
        norms.dedup();
        if norms.len() < 2 {
            continue;
        }
        let lhs: Vec<(f64, f64)> = sel.iter().map(|r| (r.v_norm.ln(), r.lhs.abs().ln())).collect();
        let rhs: Vec<(f64, f64)> = sel.iter().map(|r| (r.v_norm.ln(), r.rhs_core.ln())).collect();
        out.push(SlopeFit { q, lhs_slope: fit_slope(&lhs), rhs_slope: fit_slope(&rhs) });
    }
    out
}

/// Residual sums of squares of the fixed-slope fits
/// `ln y = c + slope·ln|v|` and `ln y = c + slope·ln|v| + ln ln(1+|v|)`.
pub fn log_factor_residuals(points: &[(f64, f64)], slope: f64) -> (f64, f64) {
    let rss = |with_log: bool| {
        let resid: Vec<f64> = points
            .iter()
            .map(|&(vn, y)| {
                let mut r = y.ln() - slope * vn.ln();
                if with_log {
                    r -= (1.0 + vn).ln().ln();
                }
                r
            })
            .collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
    };
    (rss(false), rss(true))
}

// ---------------------------------------------------------------------------
// Shared context
// ---------------------------------------------------------------------------

/// Physics, quadrature settings and verdict thresholds shared by the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyContext {
    pub params: KernelParams,
    pub cs: CancellationConstant,
    pub opts: OperatorOptions,
    pub spread_cap: f64,
}

impl VerifyContext {
    pub fn new(params: KernelParams, cs: CancellationConstant) -> Self {
        VerifyContext { params, cs, opts: OperatorOptions::default(), spread_cap: DEFAULT_SPREAD_CAP }
    }

    fn threshold(&self) -> f64 {
        let p = &self.params;
        p.d as f64 + p.gamma + 2.0 * p.s
    }
}

/// A barrier frozen in time together with the form it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub frozen: FrozenBarrier,
    pub form: BarrierForm,
}

impl Comparison {
    pub fn plain(n: f64, q: f64) -> Self {
        Comparison { frozen: FrozenBarrier::plain(n, q), form: BarrierForm::Plain }
    }

    pub fn from_barrier(b: &Barrier, t: f64) -> Result<Self> {
        b.validate()?;
        Ok(Comparison { frozen: b.at_time(t)?, form: b.form })
    }

    pub fn q(&self) -> f64 {
        self.frozen.q
    }

    pub fn at_speed(&self, r: f64) -> f64 {
        self.frozen.at_speed(r)
    }

    fn is_plain(&self) -> bool {
        self.form == BarrierForm::Plain || self.frozen.eps == 0.0
    }

    fn id(&self, base: PropositionId) -> PropositionId {
        if self.form == BarrierForm::Plain {
            base
        } else {
            base.corrected()
        }
    }
}

/// Radius of the mass core of `f`, with bounds taken from `f` itself.
pub fn core_radius(f: &GridDistribution) -> Result<f64> {
    Ok(mass_core(f, &own_bounds(f), 1.0)?.r0)
}

/// `R_q = max(2, 2 R0 / c1(q))`, the radius past which the good ball holds
/// twice the mass core.
pub fn radius_rq(q: f64, r0: f64) -> f64 {
    (2.0 * r0 / c1_raw(q)).max(2.0)
}

/// `R_q = C_R (1 + q)`, the linear form used for corrected barriers.
pub fn radius_rq_linear(q: f64, c_r: f64) -> f64 {
    c_r * (1.0 + q)
}

/// `count` seeded random unit vectors per speed, speeds outermost.
pub fn sample_velocities(d: usize, speeds: &[f64], per_speed: usize, seed: u64) -> Vec<Vel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(speeds.len() * per_speed);
    for &s in speeds {
        for _ in 0..per_speed {
            let dir = random_unit(d, &mut rng);
            out.push(geom::scale(&dir, s));
        }
    }
    out
}

pub fn random_unit<R: Rng>(d: usize, rng: &mut R) -> Vel {
    loop {
        let mut x = geom::ZERO;
        for c in x.iter_mut().take(d) {
            *c = rng.random_range(-1.0..1.0);
        }
        let n = geom::norm(&x);
        if n > 1e-3 && n <= 1.0 {
            return geom::scale(&x, 1.0 / n);
        }
    }
}

/// The first argument of a term that is linear in it: either one
/// distribution, or a family rebuilt for every sample velocity as a sum of
/// components.
#[derive(Clone, Copy)]
pub enum Sampled<'a> {
    Fixed(&'a GridDistribution),
    PerSample(&'a (dyn Fn(&Vel) -> Result<Vec<GridDistribution>> + Sync)),
}

impl Sampled<'_> {
    fn components(&self, v: &Vel) -> Result<Vec<GridDistribution>> {
        match self {
            Sampled::Fixed(f) => Ok(vec![(*f).clone()]),
            Sampled::PerSample(build) => build(v),
        }
    }
}

fn add_split(a: &mut SplitResult, b: &SplitResult) {
    a.good += b.good;
    a.bad1 += b.bad1;
    a.bad2 += b.bad2;
    a.bad3 += b.bad3;
    a.q_ns += b.q_ns;
    a.total += b.total;
    for k in 0..5 {
        a.errors[k] += b.errors[k];
    }
}

fn singular_split(f: Sampled, g: &dyn VelocityFunction, v: &Vel, q: f64, ctx: &VerifyContext) -> Result<SplitResult> {
    let mut acc: Option<SplitResult> = None;
    for c in f.components(v)? {
        let s = operator::split_singular(&c, g, v, q, &ctx.params, &ctx.opts)?;
        match acc.as_mut() {
            None => acc = Some(s),
            Some(a) => add_split(a, &s),
        }
    }
    acc.ok_or_else(|| Error::Domain("empty distribution family".into()))
}

fn good_sum(f: Sampled, g: &dyn VelocityFunction, v: &Vel, q: f64, ctx: &VerifyContext) -> Result<Estimate> {
    let mut acc = Estimate { value: 0.0, error: 0.0 };
    for c in f.components(v)? {
        let e = operator::good_term(&c, g, v, q, &ctx.params, &ctx.opts)?;
        acc.value += e.value;
        acc.error += e.error;
    }
    Ok(acc)
}

fn require_contact(f: &GridDistribution, cmp: &Comparison, v: &Vel) -> Result<()> {
    let fv = f.eval(v);
    let gv = cmp.at_speed(geom::norm(v));
    if (fv - gv).abs() <= 1e-9 * gv && gv > 0.0 {
        Ok(())
    } else {
        Err(Error::PreconditionViolated(format!(
            "no contact at {:?}: f = {fv}, g = {gv}",
            &v[..f.grid.d]
        )))
    }
}

fn require_below(f: &GridDistribution, cmp: &Comparison) -> Result<()> {
    for (i, &fi) in f.values.iter().enumerate() {
        let g = cmp.at_speed(geom::norm(&f.grid.node(i)));
        if fi > g * (1.0 + 1e-12) {
            return Err(Error::PreconditionViolated(format!("f exceeds g at node {i}: {fi} > {g}")));
        }
    }
    Ok(())
}

fn require_speed(samples: &[Vel], min: f64) -> Result<()> {
    if let Some(v) = samples.iter().find(|v| geom::norm(v) < min) {
        return Err(Error::PreconditionViolated(format!("sample |v| = {} below {min}", geom::norm(v))));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Inner integral over the collision hyperplane
// ---------------------------------------------------------------------------

/// `∫_{v' ∈ v + (v - v'_*)^⊥, |v'-v| ≤ |v - v'_*|} [g(v') - g(v)] b̃(cos θ) |v'-v|^{-(d-1)-2s} dv'`
/// with `cos θ = (|z|² - |u|²)/(|z|² + |u|²)`, `z = v - v'_*`, `u = v' - v`.
pub fn inner_integral(
    g: &dyn VelocityFunction,
    v: &Vel,
    vps: &Vel,
    p: &KernelParams,
    opts: &OperatorOptions,
) -> Result<Estimate> {
    p.require_eval_dim()?;
    let z = geom::sub(v, vps);
    let zn = geom::norm(&z);
    if !(zn > 0.0) {
        return Err(Error::DegeneratePair(zn));
    }
    let fine = inner_core(g, v, &z, zn, p, opts, opts.radial_order)?;
    let coarse = inner_core(g, v, &z, zn, p, opts, (opts.radial_order - 1).max(2))?;
    Ok(Estimate { value: fine.0, error: (fine.0 - coarse.0).abs() + fine.1 })
}

fn inner_core(
    g: &dyn VelocityFunction,
    v: &Vel,
    z: &Vel,
    zn: f64,
    p: &KernelParams,
    opts: &OperatorOptions,
    order: usize,
) -> Result<(f64, f64)> {
    let d = p.d;
    let gv = g.value(v);
    let basis = geom::orthonormal_complement(d, &geom::scale(z, 1.0 / zn));
    let dirs = quadrature::half_subsphere(&basis, opts.n_plane_dirs);
    let lo = if opts.theta_min > 0.0 { (0.5 * opts.theta_min).tan() * zn } else { 1e-6 * zn };
    let rule = quadrature::composite(&crate::kernel::panel_breaks(lo, zn, g.feature_scale(v)), order);
    let expo = -1.0 - 2.0 * p.s;
    let mut total = 0.0;
    let mut first = 0.0;
    for (e, we) in &dirs {
        for (j, (u, wu)) in rule.iter().enumerate() {
            let m = p.btilde.eval((zn * zn - u * u) / (zn * zn + u * u));
            let d2 = g.value(&geom::axpy(v, u, e)) + g.value(&geom::axpy(v, -u, e)) - 2.0 * gv;
            let val = we * u.powf(expo) * m * d2;
            total += wu * val;
            if j == 0 {
                first += val;
            }
        }
    }
    let mut extra = 0.0;
    if opts.theta_min == 0.0 {
        let u1 = rule.nodes[0];
        let alpha = 1.0 - 2.0 * p.s;
        let corr = first * lo * (lo / u1).powf(alpha) / (alpha + 1.0);
        total += corr;
        extra = corr.abs();
    }
    if !total.is_finite() {
        return Err(Error::PvDivergence("inner hyperplane integral".into()));
    }
    Ok((total, extra))
}

/// Inner-integral lemma: negativity and the `-(1+q)^s N |v|^{-2s-q}` scale
/// for `|v| ≥ 2` and `|v'_*| < c1(q)|v|`, at each `(v, v'_*)` pair.
pub fn check_inner_integral_lemma(
    barrier: &FrozenBarrier,
    samples: &[(Vel, Vel)],
    ctx: &VerifyContext,
) -> Result<PropositionReport> {
    let q = barrier.q;
    let p = &ctx.params;
    for (v, vps) in samples {
        let vn = geom::norm(v);
        if vn < 2.0 || geom::norm(vps) >= c1_raw(q) * vn {
            return Err(Error::PreconditionViolated(format!(
                "inner-integral lemma needs |v| >= 2 and |v'_*| < c1(q)|v|; got |v| = {vn}, |v'_*| = {}",
                geom::norm(vps)
            )));
        }
    }
    let rows = samples
        .par_iter()
        .map(|(v, vps)| {
            let est = inner_integral(barrier, v, vps, p, &ctx.opts)?;
            let vn = geom::norm(v);
            let rhs = (1.0 + q).powf(p.s) * barrier.n * vn.powf(-2.0 * p.s - q);
            Ok(row(q, v, est, rhs, Claim::NegativeUpperBound, true))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PropositionReport::finish(PropositionId::Lemma32, "", Claim::NegativeUpperBound, rows, ctx.spread_cap, vec![]))
}

// ---------------------------------------------------------------------------
// Good term
// ---------------------------------------------------------------------------

/// `𝒢(f, g)(v) ≲ -(1+q)^s |v|^γ g(v)` for `|v| ≥ R_q` (and the corrected
/// variants). Samples below `r_q` are evaluated but marked inadmissible.
pub fn check_good_large_q(
    f: Sampled,
    cmp: &Comparison,
    samples: &[Vel],
    r_q: f64,
    ctx: &VerifyContext,
) -> Result<PropositionReport> {
    let p = &ctx.params;
    let q = cmp.q();
    let rows = samples
        .par_iter()
        .map(|v| {
            let vn = geom::norm(v);
            let est = good_sum(f, &cmp.frozen, v, q, ctx)?;
            let rhs = good_large_q_rhs(cmp, vn, p);
            Ok(row(q, v, est, rhs, Claim::NegativeUpperBound, vn >= r_q))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PropositionReport::finish(
        cmp.id(PropositionId::P31),
        "",
        Claim::NegativeUpperBound,
        rows,
        ctx.spread_cap,
        vec![format!("R_q = {r_q}")],
    ))
}

fn good_large_q_rhs(cmp: &Comparison, vn: f64, p: &KernelParams) -> f64 {
    let q = cmp.q();
    let b = &cmp.frozen;
    match cmp.form {
        BarrierForm::Plain => (1.0 + q).powf(p.s) * vn.powf(p.gamma) * cmp.at_speed(vn),
        BarrierForm::ConstCorrector => q.powf(p.s) * b.n * vn.powf(p.gamma - q),
        BarrierForm::PowerCorrector { .. } => {
            q.powf(p.s) * b.n * vn.powf(p.gamma - q) + b.eps * vn.powf(p.gamma - b.corrector_exponent)
        }
        BarrierForm::Q0Corrector { q0 } => {
            q.powf(p.s) * b.n * vn.powf(p.gamma - q) + q0.powf(p.s) * b.eps * vn.powf(p.gamma - q0)
        }
    }
}

/// `𝒢(f, f)(v) ≲_q -g(v)^{1+2s/d} |v|^{γ+2s+2s/d}` at contact points
/// `f(v) = g(v)` with `f ≤ g`.
pub fn check_good_midq(
    f: &GridDistribution,
    cmp: &Comparison,
    samples: &[Vel],
    r_q: f64,
    ctx: &VerifyContext,
) -> Result<PropositionReport> {
    let p = &ctx.params;
    let q = cmp.q();
    if !(0.0..=p.d as f64 + 1.0).contains(&q) {
        return Err(Error::PreconditionViolated(format!("q = {q} outside [0, d+1]")));
    }
    require_below(f, cmp)?;
    for v in samples {
        require_contact(f, cmp, v)?;
    }
    let d = p.d as f64;
    let rows = samples
        .par_iter()
        .map(|v| {
            let vn = geom::norm(v);
            let est = operator::good_term(f, f, v, q, p, &ctx.opts)?;
            let gv = cmp.at_speed(vn);
            let rhs = gv.powf(1.0 + 2.0 * p.s / d) * vn.powf(p.gamma + 2.0 * p.s + 2.0 * p.s / d);
            Ok(row(q, v, est, rhs, Claim::NegativeUpperBound, vn >= r_q))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PropositionReport::finish(
        cmp.id(PropositionId::P33),
        "",
        Claim::NegativeUpperBound,
        rows,
        ctx.spread_cap,
        vec![format!("R_q = {r_q}")],
    ))
}

/// Grid nodes where `f` equals the plateau level `m`, `count` of them
/// chosen by the seed (all of them if fewer).
pub fn plateau_samples(f: &GridDistribution, m: f64, count: usize, seed: u64) -> Result<Vec<Vel>> {
    let idx: Vec<usize> = (0..f.values.len()).filter(|&i| f.values[i] == m).collect();
    if idx.is_empty() {
        return Err(Error::PreconditionViolated(format!("f never reaches the level {m}: no contact")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = if idx.len() <= count {
        idx
    } else {
        rand::seq::index::sample(&mut rng, idx.len(), count).into_iter().map(|k| idx[k]).collect()
    };
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| f.grid.node(i)).collect())
}

/// `𝒢(f, f)(v) ≲ -m^{1+2s/d}` against the constant barrier `m` at contact.
pub fn check_good_small_v(f: &GridDistribution, m: f64, samples: &[Vel], ctx: &VerifyContext) -> Result<PropositionReport> {
    let p = &ctx.params;
    let cmp = Comparison::plain(m, 0.0);
    require_below(f, &cmp)?;
    if samples.is_empty() {
        return Err(Error::PreconditionViolated("no contact samples".into()));
    }
    for v in samples {
        require_contact(f, &cmp, v)?;
    }
    let rhs = m.powf(1.0 + 2.0 * p.s / p.d as f64);
    let rows = samples
        .par_iter()
        .map(|v| {
            let est = operator::good_term(f, f, v, 0.0, p, &ctx.opts)?;
            Ok(row(0.0, v, est, rhs, Claim::NegativeUpperBound, true))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PropositionReport::finish(PropositionId::P34, "", Claim::NegativeUpperBound, rows, ctx.spread_cap, vec![]))
}

// ---------------------------------------------------------------------------
// Bad terms
// ---------------------------------------------------------------------------

/// `ℬ₁(f, g)(v) ≲ (1+q)² 2^q |v|^{γ-2} g(v)` for `|v| ≥ 2`.
pub fn check_bad1(f: Sampled, cmp: &Comparison, samples: &[Vel], ctx: &VerifyContext) -> Result<PropositionReport> {
    require_speed(samples, 2.0)?;
    let splits = splits_against_barrier(f, cmp, samples, ctx)?;
    Ok(bad1_report(cmp, samples, &splits, ctx))
}

fn splits_against_barrier(f: Sampled, cmp: &Comparison, samples: &[Vel], ctx: &VerifyContext) -> Result<Vec<SplitResult>> {
    samples.par_iter().map(|v| singular_split(f, &cmp.frozen, v, cmp.q(), ctx)).collect()
}

fn bad1_report(cmp: &Comparison, samples: &[Vel], splits: &[SplitResult], ctx: &VerifyContext) -> PropositionReport {
    let p = &ctx.params;
    let q = cmp.q();
    let rows = samples
        .iter()
        .zip(splits)
        .map(|(v, s)| {
            let vn = geom::norm(v);
            let rhs = (1.0 + q).powi(2) * 2f64.powf(q) * vn.powf(p.gamma - 2.0) * cmp.at_speed(vn);
            row(q, v, Estimate { value: s.bad1, error: s.errors[1] }, rhs, Claim::UpperBound, true)
        })
        .collect();
    PropositionReport::finish(cmp.id(PropositionId::P35), "B1", Claim::UpperBound, rows, ctx.spread_cap, vec![])
}

/// Which of the three regimes of the `ℬ₂ + ℬ₃` bound applies.
pub fn bad23_case(q: f64, d: usize) -> &'static str {
    let k = d as f64 - 1.0;
    if (q - k).abs() < 1e-12 {
        "q=d-1"
    } else if q > k {
        "q>d-1"
    } else {
        "q<d-1"
    }
}

/// `(ℬ₂ + ℬ₃)(f, g)(v)` against the three-case bound, `q ∈ [0, d+1]`.
pub fn check_bad23(f: Sampled, cmp: &Comparison, samples: &[Vel], ctx: &VerifyContext) -> Result<PropositionReport> {
    let q = cmp.q();
    let d = ctx.params.d;
    if !(0.0..=d as f64 + 1.0).contains(&q) {
        return Err(Error::PreconditionViolated(format!("B2+B3 estimate needs q in [0, d+1], got {q}")));
    }
    if cmp.form != BarrierForm::Plain && cmp.form != BarrierForm::ConstCorrector {
        return Err(Error::PreconditionViolated("B2+B3 estimate needs a plain or constant-corrected barrier".into()));
    }
    require_speed(samples, 2.0)?;
    let splits = splits_against_barrier(f, cmp, samples, ctx)?;
    Ok(bad23_report(cmp, samples, &splits, ctx))
}

fn bad23_report(cmp: &Comparison, samples: &[Vel], splits: &[SplitResult], ctx: &VerifyContext) -> PropositionReport {
    let p = &ctx.params;
    let d = p.d as f64;
    let q = cmp.q();
    let case = bad23_case(q, p.d);
    let rows = samples
        .iter()
        .zip(splits)
        .map(|(v, s)| {
            let vn = geom::norm(v);
            // the corrected variant measures against N·|v|^{-q} instead of g
            let gv = if cmp.form == BarrierForm::Plain { cmp.at_speed(vn) } else { cmp.frozen.n * vn.powf(-q) };
            let rhs = match case {
                "q>d-1" => vn.powf(p.gamma - (d + 1.0 - q)) * gv,
                "q=d-1" => vn.powf(p.gamma - 2.0) * (1.0 + vn).ln() * gv,
                _ => vn.powf(p.gamma - 2.0) * gv,
            };
            let est = Estimate { value: s.bad2 + s.bad3, error: s.errors[2] + s.errors[3] };
            row(q, v, est, rhs, Claim::UpperBound, true)
        })
        .collect();
    PropositionReport::finish(cmp.id(PropositionId::P38), case, Claim::UpperBound, rows, ctx.spread_cap, vec![])
}

/// `ℬ₂(f, f)` and `ℬ₃(f, f)` for `q > d + γ + 2s` and `f ≤ g`. Returns the
/// `ℬ₂` report followed by the `ℬ₃` reports (printed and proof
/// normalizations of the prefactor for a plain barrier).
pub fn check_bad2_bad3(
    f: &GridDistribution,
    cmp: &Comparison,
    samples: &[Vel],
    ctx: &VerifyContext,
) -> Result<Vec<PropositionReport>> {
    let p = &ctx.params;
    let q = cmp.q();
    let thr = ctx.threshold();
    if !(q > thr) {
        return Err(Error::PreconditionViolated(format!("q = {q} must exceed d + gamma + 2s = {thr}")));
    }
    match cmp.form {
        BarrierForm::Plain => {}
        BarrierForm::PowerCorrector { eta, .. } => {
            if !(p.gamma + 2.0 * p.s < 1.0 - eta) {
                return Err(Error::PreconditionViolated("power corrector needs gamma + 2s < 1 - eta".into()));
            }
        }
        BarrierForm::Q0Corrector { q0 } => {
            if !(q0 > thr) {
                return Err(Error::PreconditionViolated(format!("q0 = {q0} must exceed {thr}")));
            }
        }
        BarrierForm::ConstCorrector => {
            return Err(Error::PreconditionViolated("B2/B3 estimates need a decaying corrector".into()));
        }
    }
    require_speed(samples, 2.0)?;
    require_below(f, cmp)?;
    let splits: Vec<SplitResult> = samples
        .par_iter()
        .map(|v| operator::split_singular(f, f, v, q, p, &ctx.opts))
        .collect::<Result<_>>()?;
    Ok(bad2_bad3_reports(cmp, samples, &splits, ctx))
}

fn bad2_bad3_reports(cmp: &Comparison, samples: &[Vel], splits: &[SplitResult], ctx: &VerifyContext) -> Vec<PropositionReport> {
    let p = &ctx.params;
    let d = p.d as f64;
    let q = cmp.q();
    let thr = ctx.threshold();
    let b = &cmp.frozen;
    let b2_rhs = |vn: f64| match cmp.form {
        BarrierForm::PowerCorrector { .. } => {
            b.n * vn.powf(p.gamma - q) / (q - thr) + b.eps * vn.powf(p.gamma - b.corrector_exponent)
        }
        BarrierForm::Q0Corrector { q0 } => {
            b.n * vn.powf(p.gamma - q) / (q - thr) + b.eps * vn.powf(p.gamma - q0) / (q0 - thr)
        }
        _ => vn.powf(p.gamma) * cmp.at_speed(vn) / (q - thr),
    };
    let b2_rows = samples
        .iter()
        .zip(splits)
        .map(|(v, s)| {
            let vn = geom::norm(v);
            row(q, v, Estimate { value: s.bad2, error: s.errors[2] }, b2_rhs(vn), Claim::UpperBound, true)
        })
        .collect();
    let mut out = vec![PropositionReport::finish(
        cmp.id(PropositionId::P36),
        "B2",
        Claim::UpperBound,
        b2_rows,
        ctx.spread_cap,
        vec![],
    )];
    let b3 = |prefactor: f64, tag: &'static str, note: Vec<String>| {
        let rows = samples
            .iter()
            .zip(splits)
            .map(|(v, s)| {
                let vn = geom::norm(v);
                let rhs = prefactor * vn.powf(p.gamma - 2.0) * cmp.at_speed(vn);
                row(q, v, Estimate { value: s.bad3, error: s.errors[3] }, rhs, Claim::UpperBound, true)
            })
            .collect();
        PropositionReport::finish(cmp.id(PropositionId::P37), tag, Claim::UpperBound, rows, ctx.spread_cap, note)
    };
    if cmp.is_plain() {
        let printed = (1.0 + q).powi(2) * ((1.0 + q).powf(q - (d - 1.0)) + 1.0 / (q - thr));
        let proof = (1.0 + q).powi(2) * (c1_raw(q).powf(d - 1.0 - q) + 1.0 / (q - thr));
        let note = vec![format!(
            "printed and proof prefactors differ by {:.3e}; both reported",
            proof / printed
        )];
        out.push(b3(printed, "printed", note.clone()));
        out.push(b3(proof, "proof", note));
    } else {
        out.push(b3(1.0 / (q - thr), "B3", vec![]));
    }
    out
}

/// Every bad-term report whose hypotheses hold for `q`: `ℬ₁` always,
/// `ℬ₂ + ℬ₃` for `q ≤ d + 1`, and `ℬ₂`, `ℬ₃` (which need `f ≤ g`) for
/// `q > d + γ + 2s` when `f` is a single distribution.
pub fn check_bad_terms(f: Sampled, cmp: &Comparison, samples: &[Vel], ctx: &VerifyContext) -> Result<Vec<PropositionReport>> {
    require_speed(samples, 2.0)?;
    let q = cmp.q();
    let d = ctx.params.d as f64;
    let splits = splits_against_barrier(f, cmp, samples, ctx)?;
    let mut out = vec![bad1_report(cmp, samples, &splits, ctx)];
    if q <= d + 1.0 && matches!(cmp.form, BarrierForm::Plain | BarrierForm::ConstCorrector) {
        out.push(bad23_report(cmp, samples, &splits, ctx));
    }
    if q > ctx.threshold() {
        if let Sampled::Fixed(fixed) = f {
            out.extend(check_bad2_bad3(fixed, cmp, samples, ctx)?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Non-singular part
// ---------------------------------------------------------------------------

/// `φ(r) = ln(1+r) + 1/ln(1/r)`, the non-concentration modulus (`r < 1`).
pub fn non_concentration(r: f64) -> f64 {
    (1.0 + r).ln() + 1.0 / (1.0 / r).ln()
}

/// `ψ(g) = φ(M0/g)^{min(1/2, (d+γ)/|γ|)}`, defined while `M0 < g`.
pub fn psi(g: f64, mass_max: f64, p: &KernelParams) -> Option<f64> {
    let r = mass_max / g;
    if !(r < 1.0) || p.gamma >= 0.0 {
        return None;
    }
    let expo = 0.5f64.min((p.d as f64 + p.gamma) / p.gamma.abs());
    Some(non_concentration(r).powf(expo))
}

/// `Q_ns(f, f)(v)` at contact points against the bound for the sign of γ;
/// with `q = 0` and `γ ∈ (-d/2, 0)` a second report uses the refined bound.
pub fn check_qns(f: &GridDistribution, cmp: &Comparison, samples: &[Vel], ctx: &VerifyContext) -> Result<Vec<PropositionReport>> {
    let p = &ctx.params;
    let d = p.d as f64;
    let q = cmp.q();
    require_below(f, cmp)?;
    for v in samples {
        require_contact(f, cmp, v)?;
    }
    let ests: Vec<Estimate> = samples
        .par_iter()
        .map(|v| operator::q_ns(f, v, p, &ctx.cs))
        .collect::<Result<_>>()?;
    let id = cmp.id(PropositionId::P39);
    let base = |vn: f64| {
        let gv = cmp.at_speed(vn);
        let hard = (1.0 + vn).powf(p.gamma) * gv;
        if p.gamma >= 0.0 {
            hard
        } else if id == PropositionId::P39 {
            2f64.powf(-q * p.gamma / d) * gv.powf(1.0 - p.gamma / d) + hard
        } else {
            gv.powf(1.0 - p.gamma / d) + hard
        }
    };
    let rows = samples
        .iter()
        .zip(&ests)
        .map(|(v, e)| row(q, v, *e, base(geom::norm(v)), Claim::UpperBound, true))
        .collect();
    let mut out = vec![PropositionReport::finish(id, "", Claim::UpperBound, rows, ctx.spread_cap, vec![])];
    if id == PropositionId::P39 && q == 0.0 && p.gamma < 0.0 {
        if p.gamma <= -d / 2.0 {
            let mut r = out[0].clone();
            r.variant = "refined";
            r.notes.push("refined bound only checked for gamma > -d/2".into());
            out.push(r);
        } else {
            let m0 = own_bounds(f).mass_max;
            let mut notes = Vec::new();
            let rows = samples
                .iter()
                .zip(&ests)
                .map(|(v, e)| {
                    let vn = geom::norm(v);
                    let gv = cmp.at_speed(vn);
                    let rhs = match psi(gv, m0, p) {
                        Some(ps) => gv.powf(1.0 - p.gamma / d) * ps + (1.0 + vn).powf(p.gamma) * gv,
                        None => {
                            notes.push(format!("g = {gv} below M0 = {m0}; two-term bound used"));
                            base(vn)
                        }
                    };
                    row(q, v, *e, rhs, Claim::UpperBound, true)
                })
                .collect();
            out.push(PropositionReport::finish(id, "refined", Claim::UpperBound, rows, ctx.spread_cap, notes));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Contact scans and the L∞ schedule
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ContactScan {
    /// Whether some node reached `f ≥ g`.
    pub contact: bool,
    /// Time of the first contact, or of the closest approach.
    pub t0: f64,
    /// Linear node index of the maximum of `f/g` at `t0` (lowest on ties).
    pub v0_index: usize,
    pub v0: Vel,
    /// `1 - max f/g` at `t0`.
    pub margin: f64,
    /// Smallest margin over all scanned times.
    pub min_margin: f64,
    /// Split of `Q(f, f)` at the contact point.
    pub rhs_breakdown: Option<SplitResult>,
    /// `∂_t g(t0, v0)`.
    pub dtg: Option<f64>,
    /// `Q(f,f)(v0) < ∂_t g(t0,v0)`: the contact inequality fails, so the
    /// barrier argument closes at this point.
    pub contradiction: Option<bool>,
    pub snapshots_scanned: usize,
}

/// Maximum of `f/g` over the nodes of one snapshot (lowest index on ties).
fn max_ratio(f: &GridDistribution, g: &FrozenBarrier) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, &fi) in f.values.iter().enumerate() {
        let r = fi / g.at_speed(geom::norm(&f.grid.node(i)));
        if r > best.1 {
            best = (i, r);
        }
    }
    best
}

fn scan_margins(traj: &[Snapshot], b: &Barrier) -> Result<Option<(usize, usize, f64, f64)>> {
    // (snapshot, node, ratio at that snapshot, overall max ratio)
    let mut closest: Option<(usize, usize, f64)> = None;
    let mut overall = f64::NEG_INFINITY;
    for (k, snap) in traj.iter().enumerate() {
        let g = b.at_time(snap.t)?;
        let (i, r) = max_ratio(&snap.f, &g);
        overall = overall.max(r);
        if r >= 1.0 {
            return Ok(Some((k, i, r, overall)));
        }
        if closest.is_none_or(|c| r > c.2) {
            closest = Some((k, i, r));
        }
    }
    Ok(closest.map(|(k, i, r)| (k, i, r, overall)))
}

/// Locate the first snapshot at which `f ≥ g` somewhere. At a contact the
/// split of `Q(f, f)` and `∂_t g` are evaluated there.
pub fn contact_scan(traj: &[Snapshot], b: &Barrier, ctx: &VerifyContext) -> Result<ContactScan> {
    b.validate()?;
    if traj.windows(2).any(|w| !(w[0].t < w[1].t)) {
        return Err(Error::PreconditionViolated("snapshot times must increase strictly".into()));
    }
    let Some((k, i, r, overall)) = scan_margins(traj, b)? else {
        return Err(Error::PreconditionViolated("empty trajectory".into()));
    };
    let snap = &traj[k];
    let v0 = snap.f.grid.node(i);
    let contact = r >= 1.0;
    let (rhs, dtg, contradiction) = if contact {
        let vn = geom::norm(&v0);
        let split = operator::split_operator(&snap.f, &snap.f, &v0, b.q, &ctx.params, &ctx.cs, &ctx.opts)?;
        let dtg = b.time_derivative(snap.t, vn)?;
        (Some(split), Some(dtg), Some(split.total < dtg))
    } else {
        (None, None, None)
    };
    Ok(ContactScan {
        contact,
        t0: snap.t,
        v0_index: i,
        v0,
        margin: 1.0 - r,
        min_margin: 1.0 - overall,
        rhs_breakdown: rhs,
        dtg,
        contradiction,
        snapshots_scanned: if contact { k + 1 } else { traj.len() },
    })
}

/// Ladder exponents `k` of `N_∞ = 2^k` tried by [`linfty_schedule`].
pub const LINFTY_LADDER: std::ops::RangeInclusive<i32> = -20..=40;

/// The `q = 0` barrier `N_∞ (1 + t^{-d/(2s)})`, with `N_∞` the smallest power
/// of two on [`LINFTY_LADDER`] for which the trajectory never touches it.
pub fn linfty_schedule(p: &KernelParams, bounds: &HydroBounds, traj: &[Snapshot]) -> Result<Barrier> {
    let g2s = p.gamma + 2.0 * p.s;
    if !(0.0..=2.0).contains(&g2s) {
        return Err(Error::PreconditionViolated(format!("gamma + 2s = {g2s} outside [0, 2]")));
    }
    if traj.is_empty() {
        return Err(Error::PreconditionViolated("empty trajectory".into()));
    }
    for snap in traj {
        let state = hydro_fields(&snap.f);
        if !state.satisfies_bounds(bounds) {
            return Err(Error::PreconditionViolated(format!(
                "snapshot at t = {} violates the hydrodynamic bounds: {state:?}",
                snap.t
            )));
        }
    }
    let beta = p.d as f64 / (2.0 * p.s);
    let barrier = |k: i32| Barrier::plain(Amplitude::ShiftedPower { n0: 2f64.powi(k), beta }, 0.0);
    let clear = |k: i32| -> Result<bool> {
        Ok(match scan_margins(traj, &barrier(k))? {
            Some((_, _, r, _)) => r < 1.0,
            None => true,
        })
    };
    let (mut lo, mut hi) = (*LINFTY_LADDER.start(), *LINFTY_LADDER.end());
    if !clear(hi)? {
        return Err(Error::CalibrationFailed(format!("contact persists at N = 2^{hi}")));
    }
    if clear(lo)? {
        return Ok(barrier(lo));
    }
    // invariant: contact at lo, clear at hi
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if clear(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(barrier(hi))
}

/// Exponents of the appearance results: the time exponent `β` of the
/// pointwise bound for hard potentials, and the decay rate for soft ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppearanceExponents {
    /// `d/(2s) + q/γ`, for `γ > 0`.
    pub beta: Option<f64>,
    /// `d + 1 + dγ/(2s)`, for `γ ∈ (-2, 0]`.
    pub q_soft: Option<f64>,
}

pub fn appearance_exponents(p: &KernelParams, q: f64) -> Result<AppearanceExponents> {
    let d = p.d as f64;
    let beta = (p.gamma > 0.0).then(|| d / (2.0 * p.s) + q / p.gamma);
    let q_soft = (p.gamma > -2.0 && p.gamma <= 0.0).then(|| d + 1.0 + d * p.gamma / (2.0 * p.s));
    if beta.is_none() && q_soft.is_none() {
        return Err(Error::WrongRegime(format!("no appearance exponent for gamma = {}", p.gamma)));
    }
    Ok(AppearanceExponents { beta, q_soft })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VelocityGrid;
    use crate::kernel::cancellation_constant;

    fn ctx() -> VerifyContext {
        let p = KernelParams::new(2, 0.5, 0.3);
        VerifyContext::new(p, cancellation_constant(&p).unwrap())
    }

    #[test]
    fn proposition_ids_round_trip() {
        for id in PropositionId::ALL {
            assert_eq!(PropositionId::parse(id.label()).unwrap(), id);
        }
        assert_eq!(PropositionId::parse("prop3.1").unwrap(), PropositionId::P31);
        assert!(PropositionId::parse("4.1").is_err());
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [8.0f64, 16.0, 32.0].iter().map(|x| (x.ln(), (3.0 * x.powf(-1.7)).ln())).collect();
        assert!((fit_slope(&pts) + 1.7).abs() < 1e-12);
    }

    #[test]
    fn log_factor_residuals_prefer_the_true_model() {
        let pts: Vec<(f64, f64)> = [8.0f64, 16.0, 32.0, 64.0]
            .iter()
            .map(|&x| (x, x.powf(-2.5) * (1.0 + x).ln()))
            .collect();
        let (without, with) = log_factor_residuals(&pts, -2.5);
        assert!(with < 1e-20 && without > 1e-3);
    }

    #[test]
    fn inner_integral_is_negative_for_the_lemma_configuration() {
        let c = ctx();
        let b = FrozenBarrier::plain(1.0, 8.0);
        let v = [10.0, 0.0, 0.0];
        let r = check_inner_integral_lemma(&b, &[(v, geom::ZERO)], &c).unwrap();
        assert!(r.rows[0].lhs < 0.0 && r.verdict, "{r:?}");
    }

    #[test]
    fn inner_integral_rejects_large_post_collision_partner() {
        let c = ctx();
        let b = FrozenBarrier::plain(1.0, 8.0);
        let err = check_inner_integral_lemma(&b, &[([10.0, 0.0, 0.0], [1.0, 0.0, 0.0])], &c).unwrap_err();
        assert!(matches!(err, Error::PreconditionViolated(_)));
    }

    #[test]
    fn appearance_exponent_examples() {
        let p = KernelParams::new(3, 1.0, 0.5);
        assert_eq!(appearance_exponents(&p, 10.0).unwrap().beta, Some(13.0));
        let p = KernelParams::new(3, -0.5, 0.5);
        assert_eq!(appearance_exponents(&p, 0.0).unwrap().q_soft, Some(2.5));
        let p = KernelParams::new(2, 0.0, 0.3);
        assert_eq!(appearance_exponents(&p, 0.0).unwrap().q_soft, Some(3.0));
    }

    #[test]
    fn engineered_crossing_is_located() {
        let grid = VelocityGrid::new(2, 4.0, 16).unwrap();
        let b = Barrier::plain(Amplitude::Constant(1.0), 2.0);
        let g = b.at_time(1.0).unwrap();
        let mut f = GridDistribution::from_fn(grid, |v| 0.5 * g.at_speed(geom::norm(v)));
        let target = 77;
        f.values[target] = 1.01 * g.at_speed(geom::norm(&grid.node(target)));
        let snaps = vec![
            Snapshot { t: 0.5, f: GridDistribution::from_fn(grid, |_| 0.0) },
            Snapshot { t: 1.0, f },
        ];
        let mut c = ctx();
        c.opts.n_dir = 16;
        let scan = contact_scan(&snaps, &b, &c).unwrap();
        assert!(scan.contact);
        assert_eq!((scan.v0_index, scan.t0), (target, 1.0));
        assert!(scan.rhs_breakdown.is_some() && scan.dtg == Some(0.0));
    }

    #[test]
    fn scan_below_barrier_has_positive_margin() {
        let grid = VelocityGrid::new(2, 4.0, 16).unwrap();
        let b = Barrier::plain(Amplitude::Constant(2.0), 1.0);
        let f = GridDistribution::from_fn(grid, |v| (-geom::norm2(v)).exp());
        let scan = contact_scan(&[Snapshot { t: 1.0, f }], &b, &ctx()).unwrap();
        assert!(!scan.contact && scan.margin > 0.0 && scan.rhs_breakdown.is_none());
    }
}
