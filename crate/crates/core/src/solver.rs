//! Constrained minimization of `F̂(w) = ½‖w‖² + (1/(q+1))∫w^{q+1}` over
//! `{∫w^{p+1} = 1}` on the dilated domain `Ω_ε = kΩ`, the transformations back
//! to solutions on `Ω`, and the symmetric eigenproblems used by the
//! blow-up analysis.
//!
//! The dilated problem is never assembled: a lattice of spacing `h` on `Ω`
//! dilates to spacing `kh` on `Ω_ε`, so the operator there is the operator on
//! `Ω` times `k^{-2s}` and the cell volume is `(kh)^N`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bubble::{self, BubbleProfile, KernelMode};
use crate::fracop::{self, DiscreteDomain, Field, FracOperator};
use crate::special::Exponents;
use crate::{Error, Result};

/// Minimization of `F̂` on `N_ε`, posed on the lattice of `op` dilated by
/// `scaled_domain_factor = ε^{-(p-1)/(2s(q-p))}`.
#[derive(Debug, Clone, Copy)]
pub struct ManifoldProblem<'a> {
    pub op: &'a FracOperator,
    pub e: Exponents,
    pub eps: f64,
    pub scaled_domain_factor: f64,
}

impl<'a> ManifoldProblem<'a> {
    pub fn new(op: &'a FracOperator, e: Exponents, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::domain(format!("ε must be positive, got {eps}")));
        }
        if op.domain().dim() != e.n {
            return Err(Error::Mismatch(format!(
                "operator is {}-dimensional, exponents are for N = {}",
                op.domain().dim(),
                e.n
            )));
        }
        if (op.s() - e.s).abs() > 1e-14 {
            return Err(Error::Mismatch(format!("operator has s = {}, exponents s = {}", op.s(), e.s)));
        }
        let k = eps.powf(-(e.p - 1.0) / (2.0 * e.s * (e.q - e.p)));
        Ok(ManifoldProblem { op, e, eps, scaled_domain_factor: k })
    }

    /// The same problem parametrized by the dilation `ρ` of `Ω` instead of `ε`.
    pub fn on_dilated_domain(op: &'a FracOperator, e: Exponents, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::domain(format!("dilation must be positive, got {rho}")));
        }
        let eps = rho.powf(-2.0 * e.s * (e.q - e.p) / (e.p - 1.0));
        let mut prob = Self::new(op, e, eps)?;
        prob.scaled_domain_factor = rho;
        Ok(prob)
    }

    /// `ε^{-1/(q-p)}`, the amplitude in `v(x) = a w(kx)`.
    pub fn amplitude_factor(&self) -> f64 {
        self.eps.powf(-1.0 / (self.e.q - self.e.p))
    }

    fn stiffness(&self) -> f64 {
        self.scaled_domain_factor.powf(-2.0 * self.e.s)
    }

    fn cell(&self) -> f64 {
        self.op.domain().cell_volume() * self.scaled_domain_factor.powi(self.e.n as i32)
    }

    pub fn scaled_domain(&self) -> Result<Arc<DiscreteDomain>> {
        Ok(Arc::new(self.op.domain().dilated(self.scaled_domain_factor)?))
    }

    /// `Z` sampled on `Ω_ε` (peak value one), projected onto `N_ε`.
    pub fn bubble_init(&self) -> Result<Field> {
        let z = BubbleProfile::normalized(self.e.n, self.e.s);
        let d = self.scaled_domain()?;
        let w = Field::from_fn(d.clone(), |y| z.eval(y));
        Field::new(d, self.project(w.values)?)
    }

    fn project(&self, mut w: Vec<f64>) -> Result<Vec<f64>> {
        for v in w.iter_mut() {
            if *v < 0.0 || !v.is_finite() {
                *v = 0.0;
            }
        }
        let mass = self.cell() * w.iter().map(|v| v.powf(self.e.p + 1.0)).sum::<f64>();
        if !(mass > 0.0) {
            return Err(Error::domain("the constraint integral ∫w^{p+1} vanishes"));
        }
        let scale = mass.powf(-1.0 / (self.e.p + 1.0));
        w.iter_mut().for_each(|v| *v *= scale);
        Ok(w)
    }

    fn evaluate(&self, w: Vec<f64>) -> State {
        let (p, q) = (self.e.p, self.e.q);
        let stiff = self.stiffness();
        let cell = self.cell();
        let aw = self.op.apply_raw(&w);
        let norm2 = stiff * cell * w.iter().zip(&aw).map(|(a, b)| a * b).sum::<f64>();
        let iq = cell * w.iter().map(|v| v.powf(q + 1.0)).sum::<f64>();
        let lambda = norm2 + iq;
        let residual: Vec<f64> = w
            .iter()
            .zip(&aw)
            .map(|(v, a)| stiff * a + v.powf(q) - lambda * v.powf(p))
            .collect();
        let scale = w.iter().fold(0.0f64, |m, v| m.max(lambda * v.powf(p)));
        let abs_res = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        State {
            energy: 0.5 * norm2 + iq / (q + 1.0),
            lambda,
            rel_residual: abs_res / scale,
            abs_residual: abs_res,
            residual,
            w,
        }
    }
}

struct State {
    w: Vec<f64>,
    residual: Vec<f64>,
    energy: f64,
    lambda: f64,
    rel_residual: f64,
    abs_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Tolerance on the relative residual `‖(-Δ)^s w + w^q - λw^p‖_∞ / ‖λw^p‖_∞`.
    pub tol: f64,
    pub max_iter: usize,
    /// Polish with Newton steps on the bordered system once the residual is
    /// small (dense operators only); a step is kept only if `F̂` does not rise.
    pub newton: bool,
}

impl SolverConfig {
    pub fn for_dim(n: usize) -> Self {
        SolverConfig {
            tol: if n == 1 { 1e-7 } else { 1e-5 },
            max_iter: 50_000,
            newton: n == 1,
        }
    }
}

/// Outcome of [`minimize_manifold`].
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Minimizer on `Ω_ε`.
    pub w: Field,
    pub lambda: f64,
    /// `S_ε = F̂(w)`.
    pub s_eps: f64,
    /// `v(x) = ε^{-1/(q-p)} w(kx)`, solving `(-Δ)^s v = λ v^p - ε v^q` on `Ω`.
    pub v: Field,
    /// `u = λ^{1/(p-1)} v`, solving `(-Δ)^s u = u^p - ε' u^q` on `Ω`.
    pub u: Field,
    /// `ε' = ε λ^{-(q-1)/(p-1)}`.
    pub eps_effective: f64,
    pub iterations: usize,
    /// Relative Euler–Lagrange residual on the manifold.
    pub residual: f64,
    pub abs_residual: f64,
    /// Relative residual of `u` in its own equation.
    pub u_residual: f64,
    pub energy_history: Vec<f64>,
    pub converged: bool,
}

impl SolveResult {
    /// `2S_ε < λ_ε < (q+1)S_ε`.
    pub fn lambda_bounds_hold(&self, e: &Exponents) -> bool {
        2.0 * self.s_eps < self.lambda && self.lambda < (e.q + 1.0) * self.s_eps
    }
}

/// Projected, Sobolev-preconditioned gradient descent on `F̂` over `N_ε`.
///
/// The direction `-A^{-1}(Aw + w^q - λw^p)` is a descent direction for
/// `F̂ ∘ projection`; steps halve from one until the energy drops. Negative
/// values are clipped before each re-projection.
pub fn minimize_manifold(prob: &ManifoldProblem, init: &Field, cfg: &SolverConfig) -> Result<SolveResult> {
    if !(cfg.tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let n = prob.op.len();
    if init.len() != n || init.domain().dim() != prob.e.n {
        return Err(Error::Mismatch("initial field does not match the problem lattice".into()));
    }
    let mut st = prob.evaluate(prob.project(init.values.clone())?);
    let mut history = vec![st.energy];
    let stiff = prob.stiffness();
    let dense = prob.op.domain().dim() == 1;
    let mut newton_cooldown = 0usize;
    let mut iterations = 0;
    let mut stop_reason = None;
    while st.rel_residual > cfg.tol {
        if iterations >= cfg.max_iter {
            stop_reason = Some("iteration limit reached".to_string());
            break;
        }
        iterations += 1;
        if cfg.newton && dense && newton_cooldown == 0 && st.rel_residual < 1e-2 {
            if let Some(cand) = newton_step(prob, &st)? {
                if cand.energy <= st.energy + 1e-13 * st.energy.abs() && cand.rel_residual < st.rel_residual {
                    history.push(cand.energy);
                    st = cand;
                    continue;
                }
            }
            newton_cooldown = 20;
        }
        newton_cooldown = newton_cooldown.saturating_sub(1);
        let mut dir = prob.op.solve_raw(&st.residual)?;
        dir.iter_mut().for_each(|d| *d /= -stiff);
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = st.w.iter().zip(&dir).map(|(w, d)| w + t * d).collect();
            if let Ok(trial) = prob.project(trial) {
                let cand = prob.evaluate(trial);
                if cand.energy < st.energy {
                    break Some(cand);
                }
            }
            t *= 0.5;
            if t < 1e-14 {
                break None;
            }
        };
        match accepted {
            Some(cand) => {
                history.push(cand.energy);
                st = cand;
            }
            None => {
                stop_reason = Some("line search stagnated".to_string());
                break;
            }
        }
    }
    let result = finish(prob, st, iterations, history, stop_reason.is_none())?;
    match stop_reason {
        None => Ok(result),
        Some(reason) => Err(Error::NotConverged { reason, last: Box::new(result) }),
    }
}

fn newton_step(prob: &ManifoldProblem, st: &State) -> Result<Option<State>> {
    let (p, q) = (prob.e.p, prob.e.q);
    let n = st.w.len();
    let stiff = prob.stiffness();
    let mut jac = prob.op.dense();
    jac.scale_mut(stiff);
    let mut jac = jac.resize(n + 1, n + 1, 0.0);
    for i in 0..n {
        let w = st.w[i];
        jac[(i, i)] += q * w.powf(q - 1.0) - p * st.lambda * w.powf(p - 1.0);
        jac[(i, n)] = -w.powf(p);
        jac[(n, i)] = w.powf(p);
    }
    let mass = prob.cell() * st.w.iter().map(|v| v.powf(p + 1.0)).sum::<f64>();
    let mut rhs = DVector::zeros(n + 1);
    for i in 0..n {
        rhs[i] = -st.residual[i];
    }
    rhs[n] = (1.0 - mass) / ((p + 1.0) * prob.cell());
    let Some(delta) = jac.lu().solve(&rhs) else {
        return Ok(None);
    };
    let trial: Vec<f64> = st.w.iter().enumerate().map(|(i, w)| w + delta[i]).collect();
    match prob.project(trial) {
        Ok(w) => Ok(Some(prob.evaluate(w))),
        Err(_) => Ok(None),
    }
}

fn finish(
    prob: &ManifoldProblem,
    st: State,
    iterations: usize,
    energy_history: Vec<f64>,
    converged: bool,
) -> Result<SolveResult> {
    let w = Field::new(prob.scaled_domain()?, st.w)?;
    let mut result = SolveResult {
        w,
        lambda: st.lambda,
        s_eps: st.energy,
        v: Field::zeros(prob.op.domain().clone()),
        u: Field::zeros(prob.op.domain().clone()),
        eps_effective: 0.0,
        iterations,
        residual: st.rel_residual,
        abs_residual: st.abs_residual,
        u_residual: f64::NAN,
        energy_history,
        converged,
    };
    let (v, u) = transform_solutions(&result, prob)?;
    let e = prob.e;
    result.eps_effective = prob.eps * result.lambda.powf(-(e.q - 1.0) / (e.p - 1.0));
    let au = prob.op.apply(&u)?;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (a, x) in au.values.iter().zip(&u.values) {
        let src = x.powf(e.p);
        num = num.max((a - src + result.eps_effective * x.powf(e.q)).abs());
        den = den.max(src);
    }
    result.u_residual = num / den;
    result.v = v;
    result.u = u;
    Ok(result)
}

/// `v(x) = ε^{-1/(q-p)} w(kx)` and `u = λ^{1/(p-1)} v`, both on `Ω`.
pub fn transform_solutions(res: &SolveResult, prob: &ManifoldProblem) -> Result<(Field, Field)> {
    let a = prob.amplitude_factor();
    let v = res.w.relabeled(prob.op.domain().clone())?.scaled(a);
    let u = v.scaled(res.lambda.powf(1.0 / (prob.e.p - 1.0)));
    Ok((v, u))
}

/// Minimizations from the bubble start multiplied by `1 + amplitude·ξ`,
/// `ξ` uniform on `[-1, 1]` per node.
pub fn multi_start(
    prob: &ManifoldProblem,
    cfg: &SolverConfig,
    starts: usize,
    amplitude: f64,
    seed: u64,
) -> Result<Vec<SolveResult>> {
    let base = prob.bubble_init()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..starts)
        .map(|_| {
            let values = base
                .values
                .iter()
                .map(|v| v * (1.0 + amplitude * rng.gen_range(-1.0..1.0)))
                .collect();
            let init = Field::new(base.domain().clone(), values)?;
            minimize_manifold(prob, &init, cfg)
        })
        .collect()
}

/// Smallest eigenvalue of the discrete operator and its eigenfield, positive
/// and normalized in `L²`, by inverse iteration.
pub fn first_eigenpair(op: &FracOperator) -> Result<(f64, Field)> {
    let n = op.len();
    let cell = op.domain().cell_volume();
    let mut x = vec![1.0; n];
    let mut lambda = f64::INFINITY;
    let mut converged = false;
    for _ in 0..1000 {
        let mut y = op.solve_raw(&x)?;
        let norm = (cell * y.iter().map(|v| v * v).sum::<f64>()).sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        let change = (cell * y.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sqrt();
        let ay = op.apply_raw(&y);
        lambda = cell * y.iter().zip(&ay).map(|(a, b)| a * b).sum::<f64>();
        x = y;
        if change < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: 1000,
            residual: lambda,
            reason: "inverse iteration stagnated".into(),
        });
    }
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    Ok((lambda, Field::new(op.domain().clone(), x)?))
}

/// Spectrum of `(-Δ)^s_h - p Z^{p-1}` near zero on a box.
#[derive(Debug, Clone)]
pub struct KernelReport {
    /// Eigenvalues ordered by absolute value.
    pub by_magnitude: Vec<f64>,
    /// Eigenvectors matching `by_magnitude`, `ℓ²`-normalized.
    pub vectors: Vec<Field>,
    pub near_zero_count: usize,
    /// Distance from the near-zero cluster to the next eigenvalue in absolute value.
    pub gap: f64,
    /// All eigenvalues, ascending.
    pub spectrum: Vec<f64>,
}

impl KernelReport {
    pub fn near_zero(&self) -> &[f64] {
        &self.by_magnitude[..self.near_zero_count]
    }

    /// `|cos|` of the angle between a sampled field and the near-zero eigenspace.
    pub fn cosine_with_kernel(&self, f: &Field) -> Result<f64> {
        self.cosine_with_span(f, self.near_zero_count)
    }

    /// `|cos|` of the angle between a sampled field and the span of the `k`
    /// eigenvectors of smallest `|λ|`.
    pub fn cosine_with_span(&self, f: &Field, k: usize) -> Result<f64> {
        let norm = f.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::domain("cosine with the zero field"));
        }
        if k > self.vectors.len() {
            return Err(Error::domain(format!("only {} eigenvectors were kept", self.vectors.len())));
        }
        let mut proj2 = 0.0;
        for v in &self.vectors[..k] {
            let c: f64 = v.values.iter().zip(&f.values).map(|(a, b)| a * b).sum();
            proj2 += c * c;
        }
        Ok(proj2.sqrt() / norm)
    }
}

/// Eigen-decomposition of the linearization at `Z` on the box
/// `[-L, L]^N` with spacing `h`.
///
/// With `zero_gap = None` the near-zero cluster is the smallest `m` such that
/// the `m` smallest `|λ|` all lie below a tenth of the distance to the next
/// one; otherwise it counts eigenvalues with `|λ| < zero_gap`.
pub fn linearized_kernel(e: &Exponents, half_width: f64, h: f64, zero_gap: Option<f64>) -> Result<KernelReport> {
    if !e.is_critical() {
        return Err(Error::domain("the linearization at Z needs the critical exponent"));
    }
    let domain = Arc::new(DiscreteDomain::cube(e.n, half_width, h)?);
    if domain.len() > 6000 {
        return Err(Error::domain(format!(
            "{} nodes is too many for a dense eigen-solve",
            domain.len()
        )));
    }
    let op = fracop::assemble(domain.clone(), e.s)?;
    let z = BubbleProfile::normalized(e.n, e.s);
    let mut mat: DMatrix<f64> = op.dense();
    for i in 0..domain.len() {
        mat[(i, i)] -= e.p * z.eval(&domain.point(i)).powf(e.p - 1.0);
    }
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].abs().total_cmp(&eig.eigenvalues[b].abs()));
    let by_magnitude: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut spectrum: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    spectrum.sort_by(f64::total_cmp);
    let abs: Vec<f64> = by_magnitude.iter().map(|v| v.abs()).collect();
    let count = match zero_gap {
        Some(g) => abs.iter().take_while(|a| **a < g).count(),
        None => (1..abs.len().min(12))
            .find(|&m| abs[m - 1] < 0.1 * (abs[m] - abs[m - 1]))
            .unwrap_or(0),
    };
    let keep = (count + 4).min(order.len());
    let vectors: Vec<Field> = order[..keep]
        .iter()
        .map(|&i| Field::new(domain.clone(), eig.eigenvectors.column(i).iter().copied().collect()))
        .collect::<Result<_>>()?;
    for v in &vectors[..count] {
        let peak = v.sup_norm();
        let edge = domain
            .lattice()
            .iter()
            .enumerate()
            .filter(|(i, _)| domain.distance_to_boundary(&domain.point(*i)) < 0.1 * half_width)
            .fold(0.0f64, |m, (i, _)| m.max(v.values[i].abs()));
        if edge > 0.5 * peak {
            return Err(Error::Diagnostic(format!(
                "near-zero mode carries {:.2} of its peak at the box edge; enlarge the box",
                edge / peak
            )));
        }
    }
    let gap = if count < abs.len() { abs[count] - abs[count.max(1) - 1] } else { 0.0 };
    Ok(KernelReport {
        by_magnitude,
        vectors,
        near_zero_count: count,
        gap,
        spectrum,
    })
}

/// Sampled kernel modes `ψ_1..ψ_{N+1}` on a lattice.
pub fn sampled_kernel_modes(e: &Exponents, domain: &Arc<DiscreteDomain>) -> Result<Vec<Field>> {
    (1..=e.n + 1)
        .map(|i| {
            let mode = KernelMode::new(e.n, e.s, i)?;
            let values = domain
                .points()
                .iter()
                .map(|x| bubble::eval_kernel_mode(&mode, x))
                .collect::<Result<Vec<f64>>>()?;
            Field::new(domain.clone(), values)
        })
        .collect()
}
