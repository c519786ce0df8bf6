//! Continuation in ε toward concentration, with the diagnostics attached to
//! each solution: the concentration scale `γ_ε`, the rescaled profile against
//! `Z`, the normalized product `ε‖u‖^{q-p+2}`, both sides of the Pohozaev
//! identity and the boundary profile against `γ0 G(·, x0)`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::bubble::BubbleProfile;
use crate::fracop::{DiscreteDomain, DomainKind, Field, FracOperator};
use crate::greens::{self, GreenKernelBall};
use crate::solver::{self, ManifoldProblem, SolveResult, SolverConfig};
use crate::special::{self, Exponents};
use crate::{Error, Result};

/// One solve along the ε schedule. `eps` is the coefficient of `u^q` in the
/// equation `u` actually solves; `schedule_eps` is the manifold parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationRecord {
    pub eps: f64,
    pub sup_norm: f64,
    pub gamma_eps: f64,
    pub mass_crit: f64,
    pub blowup_product: f64,
    pub pohozaev_lhs: f64,
    pub pohozaev_rhs: f64,
    pub profile_error: f64,
    pub schedule_eps: f64,
    pub boundary_error: f64,
    /// `ε γ^{((N+2s) - q(N-2s))/2}`, the coefficient of the rescaled equation.
    pub rescaled_coefficient: f64,
    /// Smallest `C` with `z ≤ C Z` on the window.
    pub envelope_constant: f64,
    pub solver_residual: f64,
    pub trusted: bool,
}

impl ContinuationRecord {
    pub const CSV_HEADER: &'static str =
        "eps,supNorm,gammaEps,massCrit,blowupProduct,pohozaevLhs,pohozaevRhs,profileError";

    pub fn csv_row(&self) -> String {
        [
            self.eps,
            self.sup_norm,
            self.gamma_eps,
            self.mass_crit,
            self.blowup_product,
            self.pohozaev_lhs,
            self.pohozaev_rhs,
            self.profile_error,
        ]
        .iter()
        .map(|v| crate::fracop::fmt_f64(*v))
        .collect::<Vec<_>>()
        .join(",")
    }

    pub fn pohozaev_mismatch(&self) -> f64 {
        ((self.pohozaev_lhs - self.pohozaev_rhs) / self.pohozaev_rhs).abs()
    }
}

/// How `u/d^s` is recovered on `∂Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuotientMethod {
    /// Least-squares fit of `u = κ d^s (1 + c₁ d)` on the six nodes nearest
    /// each boundary point.
    LeastSquares,
    /// `u/d^s (z) = ∫ lim_{x→z} G(x,y)/d^s(x) f(u(y)) dy` with the closed-form
    /// ball kernel; unaffected by the discrete boundary layer.
    GreenRepresentation,
}

/// A point of `∂Ω` with its outward normal and quadrature weight.
#[derive(Debug, Clone)]
struct BoundarySample {
    point: Vec<f64>,
    normal: Vec<f64>,
    weight: f64,
}

fn boundary_samples(domain: &DiscreteDomain, per_side: usize) -> Vec<BoundarySample> {
    let r = domain.size();
    match (domain.dim(), domain.kind()) {
        (1, _) => vec![
            BoundarySample { point: vec![-r], normal: vec![-1.0], weight: 1.0 },
            BoundarySample { point: vec![r], normal: vec![1.0], weight: 1.0 },
        ],
        (_, DomainKind::Ball) => {
            let m = 4 * per_side;
            (0..m)
                .map(|j| {
                    let t = 2.0 * PI * (j as f64 + 0.5) / m as f64;
                    BoundarySample {
                        point: vec![r * t.cos(), r * t.sin()],
                        normal: vec![t.cos(), t.sin()],
                        weight: 2.0 * PI * r / m as f64,
                    }
                })
                .collect()
        }
        _ => {
            let mut out = Vec::new();
            for side in 0..4 {
                let (axis, sign) = (side / 2, if side % 2 == 0 { -1.0 } else { 1.0 });
                for j in 0..per_side {
                    let t = -r + 2.0 * r * (j as f64 + 0.5) / per_side as f64;
                    let mut point = vec![0.0; 2];
                    let mut normal = vec![0.0; 2];
                    point[axis] = sign * r;
                    point[1 - axis] = t;
                    normal[axis] = sign;
                    out.push(BoundarySample { point, normal, weight: 2.0 * r / per_side as f64 });
                }
            }
            out
        }
    }
}

/// `κ` from the least-squares fit of `u = κ d^s + κ c₁ d^{s+1}` on the six
/// nodes nearest `z`.
fn fitted_quotient(u: &Field, s: f64, z: &[f64]) -> Result<f64> {
    let d = u.domain();
    let mut idx: Vec<usize> = (0..d.len()).collect();
    let dist = |i: usize| -> f64 {
        d.point(i).iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };
    idx.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)));
    idx.truncate(6);
    idx.sort_by(|&a, &b| d.distance_to_boundary(&d.point(a)).total_cmp(&d.distance_to_boundary(&d.point(b))));
    let samples: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| (d.distance_to_boundary(&d.point(i)), u.values[i]))
        .collect();
    if samples.windows(2).any(|w| w[1].1 < w[0].1) {
        return Err(Error::Diagnostic(
            "near-boundary samples are not monotone; d^s extrapolation refused".into(),
        ));
    }
    let (mut aa, mut ab, mut bb, mut ay, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (dd, y) in samples {
        let a = dd.powf(s);
        let b = a * dd;
        aa += a * a;
        ab += a * b;
        bb += b * b;
        ay += a * y;
        by += b * y;
    }
    let det = aa * bb - ab * ab;
    if !(det.abs() > 0.0) {
        return Err(Error::Diagnostic("degenerate boundary fit".into()));
    }
    Ok((ay * bb - by * ab) / det)
}

fn represented_quotient(u: &Field, e: &Exponents, eps: f64, z: &[f64]) -> Result<f64> {
    let d = u.domain();
    if d.kind() == DomainKind::Box && d.dim() > 1 {
        return Err(Error::domain("the Green representation needs a ball or an interval"));
    }
    let k = GreenKernelBall::new(e.n, e.s, d.size())?;
    let mut acc = 0.0;
    for (i, &v) in u.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let src = v.powf(e.p) - eps * v.powf(e.q);
        acc += greens::boundary_quotient(z, &d.point(i), &k)? * src;
    }
    Ok(acc * d.cell_volume())
}

/// Both sides of the Pohozaev identity
/// `(2s-N)∫u f(u) + 2N∫F(u) = Γ(1+s)² ∫_{∂Ω} (u/d^s)² ⟨x, ν⟩` for
/// `f(u) = u^p - ε u^q`.
pub fn pohozaev_check(u: &Field, e: &Exponents, eps: f64, method: QuotientMethod) -> Result<(f64, f64)> {
    let (p, q) = (e.p, e.q);
    let nf = e.n as f64;
    let ip = u.integral_abs_pow(p + 1.0);
    let iq = u.integral_abs_pow(q + 1.0);
    let lhs = if e.is_critical() {
        // the ∫u^{2*} terms cancel exactly
        eps * iq * (nf - 2.0 * e.s - 2.0 * nf / (q + 1.0))
    } else {
        (2.0 * e.s - nf) * (ip - eps * iq) + 2.0 * nf * (ip / (p + 1.0) - eps * iq / (q + 1.0))
    };
    let g1s = special::gamma_fn(1.0 + e.s)?;
    let mut rhs = 0.0;
    for b in boundary_samples(u.domain(), 64) {
        let quotient = match method {
            QuotientMethod::LeastSquares => fitted_quotient(u, e.s, &b.point)?,
            QuotientMethod::GreenRepresentation => represented_quotient(u, e, eps, &b.point)?,
        };
        let flux: f64 = b.point.iter().zip(&b.normal).map(|(x, n)| x * n).sum();
        rhs += quotient * quotient * flux * b.weight;
    }
    Ok((lhs, g1s * g1s * rhs))
}

/// Lagrange interpolation on the four lattice nodes around `x` along each axis
/// (nodes outside the domain count as zero).
pub fn interpolate(u: &Field, x: &[f64]) -> f64 {
    let d = u.domain();
    let h = d.spacing();
    let base: Vec<i64> = x.iter().map(|v| (v / h).floor() as i64).collect();
    let weights = |t: f64| -> [f64; 4] {
        // nodes at -1, 0, 1, 2 relative to the floor
        [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ]
    };
    let value_at = |k: [i64; 2]| d.index_of(k).map(|i| u.values[i]).unwrap_or(0.0);
    let w0 = weights(x[0] / h - base[0] as f64);
    if d.dim() == 1 {
        return (0..4).map(|a| w0[a] * value_at([base[0] - 1 + a as i64, 0])).sum();
    }
    let w1 = weights(x[1] / h - base[1] as f64);
    let mut acc = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            acc += w0[a] * w1[b] * value_at([base[0] - 1 + a as i64, base[1] - 1 + b as i64]);
        }
    }
    acc
}

/// `z(x) = γ^{(N-2s)/2} u(γx + center)` on the window `[-W, W]^N` with
/// `samples` points per axis, `γ = ‖u‖_∞^{-2/(N-2s)}`.
pub fn rescale_profile(u: &Field, s: f64, center: &[f64], window: f64, samples: usize) -> Result<Field> {
    let d = u.domain();
    let n = d.dim();
    let peak = u.argmax();
    if d.distance_to_boundary(&d.point(peak)) <= d.spacing() * 1.5 {
        return Err(Error::Diagnostic("maximum sits on the boundary layer, not in the interior".into()));
    }
    if center.len() != n {
        return Err(Error::domain("center has the wrong dimension"));
    }
    let alpha = 0.5 * (n as f64 - 2.0 * s);
    let sup = u.sup_norm();
    let gamma = sup.powf(-1.0 / alpha);
    let spacing = 2.0 * window / (samples - 1) as f64;
    let half = (samples / 2) as f64;
    let grid = Arc::new(DiscreteDomain::new(DomainKind::Box, n, window * (1.0 + 0.5 / half), spacing)?);
    Ok(Field::from_fn(grid, |x| {
        let y: Vec<f64> = x.iter().zip(center).map(|(a, c)| gamma * a + c).collect();
        if d.contains(&y) {
            interpolate(u, &y) / sup
        } else {
            0.0
        }
    }))
}

/// Sup over `Ω \ B_r(x0)` of `|‖u‖_∞ u/d^s - γ0 G(·,x0)/d^s|`, relative to
/// `γ0 sup G(·,x0)/d^s` on the same set.
pub fn boundary_profile_check(u: &Field, x0: &[f64], k: &GreenKernelBall, radius: f64) -> Result<f64> {
    let d = u.domain();
    let e = Exponents::critical(k.n, k.s, 2.0 * special::critical_p(k.n, k.s))?;
    let gamma0 = special::paper_constants(&e)?.gamma0;
    let sup = u.sup_norm();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut any = false;
    for i in 0..d.len() {
        let x = d.point(i);
        let r: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if r < radius {
            continue;
        }
        any = true;
        let ds = k.distance_to_boundary(&x).powf(k.s);
        let g = gamma0 * greens::green_ball(&x, x0, k)? / ds;
        worst = worst.max((sup * u.values[i] / ds - g).abs());
        scale = scale.max(g);
    }
    if !any {
        return Err(Error::domain("the annulus outside B_r(x0) contains no nodes"));
    }
    Ok(worst / scale)
}

/// Options for [`blowup_study`].
#[derive(Debug, Clone, Copy)]
pub struct StudyConfig {
    pub solver: SolverConfig,
    /// Half-width of the window on which `z_ε` is compared with `Z`.
    pub window: f64,
    pub window_samples: usize,
    /// Inner radius of the annulus used by the boundary-profile check.
    pub annulus: f64,
    pub quotient: QuotientMethod,
}

impl StudyConfig {
    pub fn for_dim(n: usize) -> Self {
        StudyConfig {
            solver: SolverConfig::for_dim(n),
            window: 1.0,
            window_samples: if n == 1 { 401 } else { 41 },
            annulus: 0.5,
            quotient: QuotientMethod::GreenRepresentation,
        }
    }
}

/// Records along the schedule, plus why the run stopped early (if it did).
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub records: Vec<ContinuationRecord>,
    pub stopped: Option<String>,
}

impl StudyOutcome {
    pub fn trusted(&self) -> Vec<&ContinuationRecord> {
        self.records.iter().filter(|r| r.trusted).collect()
    }
}

/// Diagnostics of one converged solve.
pub fn make_record(
    res: &SolveResult,
    prob: &ManifoldProblem,
    cfg: &StudyConfig,
) -> Result<ContinuationRecord> {
    let e = prob.e;
    let u = &res.u;
    let d = u.domain();
    let nf = e.n as f64;
    let alpha = 0.5 * e.n_minus_2s();
    let sup = u.sup_norm();
    let gamma = sup.powf(-1.0 / alpha);
    let eps = res.eps_effective;
    let symmetric = d.kind() != DomainKind::Box || d.dim() == 1;
    let center = if symmetric { vec![0.0; e.n] } else { d.point(u.argmax()) };
    let z = rescale_profile(u, e.s, &center, cfg.window, cfg.window_samples)?;
    let zref = BubbleProfile::normalized(e.n, e.s);
    let mut profile_error = 0.0f64;
    let mut envelope = 0.0f64;
    for i in 0..z.len() {
        let x = z.domain().point(i);
        let zz = zref.eval(&x);
        profile_error = profile_error.max((z.values[i] - zz).abs());
        envelope = envelope.max(z.values[i] / zz);
    }
    let (lhs, rhs) = pohozaev_check(u, &e, eps, cfg.quotient)?;
    let boundary_error = if d.kind() == DomainKind::Box && d.dim() > 1 {
        f64::NAN
    } else {
        let k = GreenKernelBall::new(e.n, e.s, d.size())?;
        boundary_profile_check(u, &center, &k, cfg.annulus * d.size())?
    };
    Ok(ContinuationRecord {
        eps,
        sup_norm: sup,
        gamma_eps: gamma,
        mass_crit: u.integral_abs_pow(e.two_star()),
        blowup_product: eps * sup.powf(e.blowup_power()),
        pohozaev_lhs: lhs,
        pohozaev_rhs: rhs,
        profile_error,
        schedule_eps: prob.eps,
        boundary_error,
        rescaled_coefficient: eps * gamma.powf(0.5 * ((nf + 2.0 * e.s) - e.q * e.n_minus_2s())),
        envelope_constant: envelope,
        solver_residual: res.residual,
        trusted: gamma >= 4.0 * d.spacing(),
    })
}

/// `ε_k = eps0 · ratio^k`, `k = 0..steps` (inclusive).
pub fn geometric_schedule(eps0: f64, ratio: f64, steps: usize) -> Result<Vec<f64>> {
    if !(eps0 > 0.0 && ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Usage(format!("need eps0 > 0 and 0 < ratio < 1, got {eps0}, {ratio}")));
    }
    Ok((0..=steps).map(|k| eps0 * ratio.powi(k as i32)).collect())
}

/// Solve along a decreasing ε schedule, warm-starting each solve from the
/// previous minimizer. Stops after the first record with `γ_ε < 4h` (kept
/// and flagged untrusted) or at the first solver failure.
pub fn blowup_study(op: &FracOperator, e: &Exponents, schedule: &[f64], cfg: &StudyConfig) -> Result<StudyOutcome> {
    if !e.is_critical() {
        return Err(Error::Usage("the blow-up study needs the critical exponent p = 2*-1".into()));
    }
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Usage("the ε schedule must be nonempty and strictly decreasing".into()));
    }
    let mut records = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for &eps in schedule {
        let prob = ManifoldProblem::new(op, *e, eps)?;
        let init = match &warm {
            Some(values) => Field::new(prob.scaled_domain()?, values.clone())?,
            None => prob.bubble_init()?,
        };
        let res = match solver::minimize_manifold(&prob, &init, &cfg.solver) {
            Ok(r) => r,
            Err(err) => {
                return Ok(StudyOutcome {
                    records,
                    stopped: Some(format!("solver failed at eps = {eps}: {err}")),
                })
            }
        };
        let record = make_record(&res, &prob, cfg)?;
        let trusted = record.trusted;
        warm = Some(res.w.values.clone());
        records.push(record);
        if !trusted {
            return Ok(StudyOutcome {
                records,
                stopped: Some(format!("gamma_eps below 4h at eps = {eps}")),
            });
        }
    }
    Ok(StudyOutcome { records, stopped: None })
}
