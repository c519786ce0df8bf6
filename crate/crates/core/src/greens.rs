//! Green function of the restricted fractional Laplacian on a ball (an
//! interval when `N = 1`), its regular part and Robin function, and the
//! boundary quotient `G(·, x0)/d^s` entering the blow-up constant.

use std::f64::consts::PI;

use crate::quad;
use crate::special::{self, Exponents};
use crate::{Error, Result};

/// Closed-form kernel data for the ball of radius `radius` centered at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenKernelBall {
    pub n: usize,
    pub s: f64,
    pub radius: f64,
    /// `Γ(N/2) / (4^s π^{N/2} Γ(s)²)`.
    pub kappa: f64,
    /// Fundamental-solution coefficient `a_{N,s}`.
    pub a_ns: f64,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

impl GreenKernelBall {
    pub fn new(n: usize, s: f64, radius: f64) -> Result<Self> {
        if n == 0 || !(s > 0.0 && s < 1.0) || (n as f64) <= 2.0 * s {
            return Err(Error::domain(format!("need N > 2s and 0 < s < 1, got N={n}, s={s}")));
        }
        if !(radius > 0.0) {
            return Err(Error::domain("radius must be positive"));
        }
        let nf = n as f64;
        let g = special::gamma_fn(s)?;
        let kappa = special::gamma_fn(0.5 * nf)? / (4f64.powf(s) * PI.powf(0.5 * nf) * g * g);
        Ok(GreenKernelBall {
            n,
            s,
            radius,
            kappa,
            a_ns: special::fundamental_coefficient(n, s),
        })
    }

    pub fn from_exponents(e: &Exponents, radius: f64) -> Result<Self> {
        Self::new(e.n, e.s, radius)
    }

    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        self.radius - norm(x)
    }

    fn check_interior(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::domain(format!("point of dimension {} in an {}-ball", x.len(), self.n)));
        }
        if !(norm(x) < self.radius) {
            return Err(Error::domain(format!("point at |x| = {} is not inside the ball", norm(x))));
        }
        Ok(())
    }

    /// `(κ|x-y|^{2s-N}, u0)` in unit-ball coordinates, where
    /// `u0 = r0/(1+r0)` and `1-u0 = |x-y|²/(|x-y|² + (1-|x|²)(1-|y|²))`.
    fn unit_parts(&self, x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let r = self.radius;
        let xs: Vec<f64> = x.iter().map(|v| v / r).collect();
        let ys: Vec<f64> = y.iter().map(|v| v / r).collect();
        let d2 = dist(&xs, &ys).powi(2);
        let (nx, ny) = (norm(&xs), norm(&ys));
        let prod = (1.0 - nx) * (1.0 + nx) * (1.0 - ny) * (1.0 + ny);
        let u0 = prod / (prod + d2);
        let one_minus = d2 / (prod + d2);
        let nf = self.n as f64;
        (d2.sqrt().powf(2.0 * self.s - nf), u0, one_minus)
    }
}

/// `∫_0^x t^{a-1}(1-t)^{b-1} dt` given both `x` and `1 - x` (each computed
/// without cancellation), integrating whichever end is nearer.
fn split_beta(a: f64, b: f64, x: f64, one_minus_x: f64) -> Result<f64> {
    if x <= 0.5 {
        special::incomplete_beta(a, b, x)
    } else {
        Ok(special::beta_fn(a, b)? - special::incomplete_beta(b, a, one_minus_x)?)
    }
}

/// `G(x, y) = κ|x-y|^{2s-N} ∫_0^{r0} t^{s-1}(1+t)^{-N/2} dt` on the ball.
pub fn green_ball(x: &[f64], y: &[f64], k: &GreenKernelBall) -> Result<f64> {
    k.check_interior(x)?;
    k.check_interior(y)?;
    if dist(x, y) == 0.0 {
        return Err(Error::Singular("G(x, x) is infinite".into()));
    }
    let nf = k.n as f64;
    let (pw, u0, one_minus) = k.unit_parts(x, y);
    let integral = split_beta(k.s, 0.5 * nf - k.s, u0, one_minus)?;
    Ok(k.radius.powf(2.0 * k.s - nf) * k.kappa * pw * integral)
}

/// `H(x, y) = a_{N,s}|x-y|^{2s-N} - G(x, y)`, evaluated as the complementary
/// tail `κ|x-y|^{2s-N} ∫_{r0}^∞` so it stays accurate as `y → x`.
pub fn regular_part(x: &[f64], y: &[f64], k: &GreenKernelBall) -> Result<f64> {
    k.check_interior(x)?;
    k.check_interior(y)?;
    if dist(x, y) == 0.0 {
        return robin_function(x, k);
    }
    let nf = k.n as f64;
    let (pw, u0, one_minus) = k.unit_parts(x, y);
    let tail = split_beta(0.5 * nf - k.s, k.s, one_minus, u0)?;
    Ok(k.radius.powf(2.0 * k.s - nf) * k.kappa * pw * tail)
}

/// Robin function `R(x) = H(x, x) = κ R^{2s-N} (1-|x/R|²)^{2s-N} / (N/2 - s)`.
pub fn robin_function(x: &[f64], k: &GreenKernelBall) -> Result<f64> {
    if x.len() != k.n {
        return Err(Error::domain("point has wrong dimension"));
    }
    let nf = k.n as f64;
    let t = 1.0 - (norm(x) / k.radius).powi(2);
    if !(t > 0.0) {
        return Err(Error::domain("the Robin function diverges on the boundary"));
    }
    Ok(k.radius.powf(2.0 * k.s - nf) * k.kappa * t.powf(2.0 * k.s - nf) / (0.5 * nf - k.s))
}

/// Boundary limit of `G(x, x0)/d^s(x)` as `x → z ∈ ∂B`:
/// `(κ/s) 2^s R^{s-N} (1-|x0/R|²)^s |z/R - x0/R|^{-N}`.
pub fn boundary_quotient(z: &[f64], x0: &[f64], k: &GreenKernelBall) -> Result<f64> {
    k.check_interior(x0)?;
    if z.len() != k.n || (norm(z) - k.radius).abs() > 1e-9 * k.radius {
        return Err(Error::domain("boundary quotient needs a point on the sphere"));
    }
    let r = k.radius;
    let nf = k.n as f64;
    let t = 1.0 - (norm(x0) / r).powi(2);
    let zs: Vec<f64> = z.iter().map(|v| v / r).collect();
    let xs: Vec<f64> = x0.iter().map(|v| v / r).collect();
    Ok(k.kappa / k.s * 2f64.powf(k.s) * r.powf(k.s - nf) * t.powf(k.s) * dist(&zs, &xs).powf(-nf))
}

/// `R_{N,s,x0} = ∫_{∂B} (G(x, x0)/d^s)² ⟨x - x0, ν⟩ dS`; the two-endpoint sum
/// in one dimension.
pub fn boundary_r_constant(x0: &[f64], k: &GreenKernelBall) -> Result<f64> {
    k.check_interior(x0)?;
    let r = k.radius;
    let integrand = |z: &[f64]| -> Result<f64> {
        let q = boundary_quotient(z, x0, k)?;
        let flux: f64 = z.iter().zip(x0).map(|(a, b)| (a - b) * a / r).sum();
        Ok(q * q * flux)
    };
    match k.n {
        1 => Ok(integrand(&[r])? + integrand(&[-r])?),
        2 => {
            let f = |t: f64| integrand(&[r * t.cos(), r * t.sin()]).unwrap_or(f64::NAN);
            Ok(r * quad::adaptive(f, 0.0, 2.0 * PI, 1e-13).value)
        }
        3 => {
            let f = |th: f64| {
                let g = |ph: f64| {
                    let z = [r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()];
                    integrand(&z).unwrap_or(f64::NAN)
                };
                th.sin() * quad::adaptive(g, 0.0, 2.0 * PI, 1e-12).value
            };
            Ok(r * r * quad::adaptive(f, 0.0, PI, 1e-11).value)
        }
        n => Err(Error::domain(format!("boundary integral implemented for N ≤ 3, got {n}"))),
    }
}

/// `G(·, x0)/d^s` on `∂Ω` together with the constant it integrates to.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryProfile {
    pub base_point: Vec<f64>,
    pub kernel: GreenKernelBall,
    pub r_constant: f64,
}

impl BoundaryProfile {
    pub fn new(x0: &[f64], k: &GreenKernelBall) -> Result<Self> {
        Ok(BoundaryProfile {
            base_point: x0.to_vec(),
            kernel: *k,
            r_constant: boundary_r_constant(x0, k)?,
        })
    }

    pub fn quotient(&self, z: &[f64]) -> Result<f64> {
        boundary_quotient(z, &self.base_point, &self.kernel)
    }
}

/// Torsion function `u = Γ(N/2)/(4^s Γ(1+s) Γ(N/2+s)) (R² - |x|²)^s`, the
/// solution of `(-Δ)^s u = 1` in the ball with zero exterior data.
pub fn torsion_ball(x: &[f64], n: usize, s: f64, radius: f64) -> Result<f64> {
    let nf = n as f64;
    let c = special::gamma_fn(0.5 * nf)?
        / (4f64.powf(s) * special::gamma_fn(1.0 + s)? * special::gamma_fn(0.5 * nf + s)?);
    let t = radius * radius - norm(x).powi(2);
    if t < 0.0 {
        return Ok(0.0);
    }
    Ok(c * t.powf(s))
}

/// `∫_{-R}^{R} G(x, y) f(y) dy` in one dimension, split at the singularity.
pub fn green_potential_1d<F: Fn(f64) -> f64>(x: f64, f: F, k: &GreenKernelBall, tol: f64) -> Result<f64> {
    if k.n != 1 {
        return Err(Error::domain("green_potential_1d needs N = 1"));
    }
    k.check_interior(&[x])?;
    let r = k.radius;
    let g = |y: f64| {
        if y == x || y.abs() >= r {
            0.0
        } else {
            green_ball(&[x], &[y], k).unwrap_or(0.0) * f(y)
        }
    };
    // y = end + (mid - end) v^4 tames the |x-y|^{2s-1} and d^s endpoint behaviour
    let piece = |end: f64, mid: f64| {
        quad::adaptive(
            |v: f64| g(end + (mid - end) * v.powi(4)) * 4.0 * v.powi(3) * (mid - end),
            0.0,
            1.0,
            0.25 * tol,
        )
        .value
    };
    let (ml, mr) = (0.5 * (x - r), 0.5 * (x + r));
    Ok(piece(-r, ml) - piece(x, ml) + piece(x, mr) - piece(r, mr))
}

/// Richardson extrapolation of `g(d)` to `d = 0` from `g(d0 2^{-j})`,
/// `j = 0..levels`, assuming an expansion in integer powers of `d`.
pub fn richardson_limit<F: Fn(f64) -> f64>(g: F, d0: f64, levels: usize) -> f64 {
    let mut table: Vec<f64> = (0..=levels).map(|j| g(d0 * 0.5f64.powi(j as i32))).collect();
    for m in 1..=levels {
        let f = 2f64.powi(m as i32);
        for j in (m..=levels).rev() {
            table[j] = (f * table[j] - table[j - 1]) / (f - 1.0);
        }
    }
    table[levels]
}

/// An explicit constant for both Lemma-type bounds
/// `G|x-y|^{N-2s} ≤ C` and `G|x-y|^{N-s}/d^s(x) ≤ C` on the ball.
pub fn lemma_bound_constant(k: &GreenKernelBall) -> f64 {
    let s = k.s;
    let rr = k.radius.powf(-s);
    // near-diagonal: |x-y| ≤ (2+2√2) d(x); off-diagonal: d(x) ≤ 2|x-y|
    let near = k.a_ns * (2.0 + 2.0 * 2f64.sqrt()).powf(s);
    let far = k.kappa / s * 12f64.powf(s);
    k.a_ns.max(near.max(far) * rr.max(1.0).max(1.0 / rr))
}
