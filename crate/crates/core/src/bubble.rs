//! Entire-space profiles: the standard bubble `U`, its rescalings `U_{ε,a}`,
//! the normalized limit `Z` with `Z(0) = 1`, and the kernel modes of the
//! equation linearized at `Z`.

use crate::quad;
use crate::special::{self, Exponents};
use crate::{Error, Result};

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `amplitude · scale^{-(N-2s)/2} · (1 + |x - center|²/scale²)^{-(N-2s)/2}`.
///
/// With `amplitude = c_{N,s}` and `scale = 1` this is the standard bubble;
/// `scale = ε`, `center = a` gives `U_{ε,a}`, and `scale = c^{2/(N-2s)}`
/// gives the normalized profile `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleProfile {
    pub n: usize,
    pub s: f64,
    pub center: Vec<f64>,
    pub scale: f64,
    pub amplitude: f64,
}

impl BubbleProfile {
    pub fn standard(n: usize, s: f64) -> Self {
        BubbleProfile {
            n,
            s,
            center: vec![0.0; n],
            scale: 1.0,
            amplitude: special::bubble_amplitude(n, s),
        }
    }

    /// `U_{ε,a}(x) = ε^{-(N-2s)/2} U((x-a)/ε)`.
    pub fn rescaled(n: usize, s: f64, eps: f64, center: &[f64]) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::domain(format!("bubble scale must be positive, got {eps}")));
        }
        if center.len() != n {
            return Err(Error::domain("bubble center has wrong dimension"));
        }
        Ok(BubbleProfile {
            center: center.to_vec(),
            scale: eps,
            ..Self::standard(n, s)
        })
    }

    /// `Z(x) = (1 + |x|²/μ)^{-(N-2s)/2}`, the rescaling of `U` with `Z(0) = 1`.
    pub fn normalized(n: usize, s: f64) -> Self {
        let c = special::bubble_amplitude(n, s);
        let xi = c.powf(2.0 / (n as f64 - 2.0 * s));
        BubbleProfile {
            scale: xi,
            ..Self::standard(n, s)
        }
    }

    pub fn decay_exponent(&self) -> f64 {
        self.n as f64 - 2.0 * self.s
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let alpha = 0.5 * self.decay_exponent();
        let r2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.amplitude * self.scale.powf(-alpha) * (1.0 + r2 / (self.scale * self.scale)).powf(-alpha)
    }

    /// The profile as a function of the distance to its center.
    pub fn eval_radial(&self, r: f64) -> f64 {
        let alpha = 0.5 * self.decay_exponent();
        self.amplitude * self.scale.powf(-alpha) * (1.0 + r * r / (self.scale * self.scale)).powf(-alpha)
    }
}

/// `∫ U^{2*} = (ω_N c^{2*}/2) B(N/2, N/2)`; not normalized to one.
pub fn integral_u_two_star(n: usize, s: f64) -> Result<f64> {
    let nf = n as f64;
    let c = special::bubble_amplitude(n, s);
    let two_star = 2.0 * nf / (nf - 2.0 * s);
    Ok(special::omega_n(n) * c.powf(two_star) / 2.0 * special::beta_fn(0.5 * nf, 0.5 * nf)?)
}

/// Element of the kernel of `(-Δ)^s - p Z^{p-1}` on `ℝ^N`.
///
/// Modes `1..=N` are the translations `2x_i (1+|x|²/μ)^{-(N-2s+2)/2}`; mode
/// `N+1` is the dilation `(1 - |x|²/μ)(1+|x|²/μ)^{-(N-2s+2)/2}`, which vanishes
/// on the sphere `|x|² = μ` (the unit sphere when `μ = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMode {
    pub n: usize,
    pub s: f64,
    pub index: usize,
    pub width: f64,
}

impl KernelMode {
    pub fn new(n: usize, s: f64, index: usize) -> Result<Self> {
        let mu = special::bubble_amplitude(n, s).powf(4.0 / (n as f64 - 2.0 * s));
        Self::with_width(n, s, index, mu)
    }

    pub fn with_width(n: usize, s: f64, index: usize, width: f64) -> Result<Self> {
        if index == 0 || index > n + 1 {
            return Err(Error::domain(format!("kernel mode index {index} outside 1..={}", n + 1)));
        }
        if !(width > 0.0) {
            return Err(Error::domain("kernel mode width must be positive"));
        }
        Ok(KernelMode { n, s, index, width })
    }
}

pub fn eval_kernel_mode(mode: &KernelMode, x: &[f64]) -> Result<f64> {
    if x.len() != mode.n {
        return Err(Error::domain("point has wrong dimension for kernel mode"));
    }
    let r2 = norm_sq(x) / mode.width;
    let envelope = (1.0 + r2).powf(-0.5 * (mode.n as f64 - 2.0 * mode.s + 2.0));
    if mode.index <= mode.n {
        Ok(2.0 * x[mode.index - 1] * envelope)
    } else {
        Ok((1.0 - r2) * envelope)
    }
}

/// Kelvin transform `x ↦ |x|^{-(N-2s)} f(x/|x|²)` of an evaluator.
pub fn kelvin_transform<F>(f: F, e: &Exponents) -> impl Fn(&[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let power = e.n_minus_2s();
    move |x: &[f64]| {
        let r2 = norm_sq(x);
        if r2 == 0.0 {
            return Err(Error::domain("Kelvin transform is undefined at the origin"));
        }
        let y: Vec<f64> = x.iter().map(|v| v / r2).collect();
        Ok(r2.powf(-0.5 * power) * f(&y))
    }
}

/// Two independent evaluations of the radial integral identity
/// `∫_{ℝ^N}(1-|x|²)(1+|x|²)^{-(N+2s+2)/2} dx
///   = -ω_N ∫_0^1 r^{2s-1}(1-r²)(1-r^{N-2s})(1+r²)^{-(N+2s+2)/2} dr`.
///
/// Returns `(full_space, folded)`.
pub fn identity_nov39(e: &Exponents) -> Result<(f64, f64)> {
    let n = e.n;
    let s = e.s;
    let nf = n as f64;
    let beta = 0.5 * (nf + 2.0 * s + 2.0);
    let omega = special::omega_n(n);
    let full = quad::half_line(
        |r: f64| r.powi(n as i32 - 1) * (1.0 - r * r) * (1.0 + r * r).powf(-beta),
        1e-13,
    );
    let folded = quad::adaptive(
        |r: f64| {
            r.powf(2.0 * s - 1.0) * (1.0 - r * r) * (1.0 - r.powf(nf - 2.0 * s)) * (1.0 + r * r).powf(-beta)
        },
        0.0,
        1.0,
        1e-13,
    );
    Ok((omega * full.value, -omega * folded.value))
}

/// One line of the `bubble-check` report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.residual.is_finite() && self.residual <= self.tolerance
    }
}

/// Closed-form identities of the bubble family at `(N, s)`, with residuals.
pub fn bubble_checks(n: usize, s: f64) -> Result<Vec<CheckLine>> {
    let e = Exponents::critical(n, s, special::critical_p(n, s) + 1.0)?;
    let u = BubbleProfile::standard(n, s);
    let z = BubbleProfile::normalized(n, s);
    let c = u.amplitude;
    let mut lines = Vec::new();

    let origin = vec![0.0; n];
    lines.push(CheckLine {
        name: "bubbleAmplitude",
        residual: ((u.eval(&origin) - c) / c).abs(),
        tolerance: 1e-14,
    });
    lines.push(CheckLine {
        name: "normalizedPeak",
        residual: (z.eval(&origin) - 1.0).abs(),
        tolerance: 1e-13,
    });

    let kelvin = kelvin_transform(|x: &[f64]| u.eval(x), &e);
    let mut worst: f64 = 0.0;
    for k in 1..=50 {
        let mut x = vec![0.0; n];
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = 0.37 * k as f64 / 7.0 * if i % 2 == 0 { 1.0 } else { -0.6 };
        }
        let lhs = kelvin(&x)?;
        worst = worst.max(((lhs - u.eval(&x)) / u.eval(&x)).abs());
    }
    lines.push(CheckLine {
        name: "kelvinInvariance",
        residual: worst,
        tolerance: 1e-12,
    });

    let closed = integral_u_two_star(n, s)?;
    let two_star = e.two_star();
    let radial = special::omega_n(n)
        * quad::half_line(|r| r.powi(n as i32 - 1) * u.eval_radial(r).powf(two_star), 1e-13).value;
    lines.push(CheckLine {
        name: "criticalMass",
        residual: ((radial - closed) / closed).abs(),
        tolerance: 1e-9,
    });

    let (full, folded) = identity_nov39(&e)?;
    lines.push(CheckLine {
        name: "radialIdentity",
        residual: (full - folded).abs(),
        tolerance: 1e-8,
    });
    lines.push(CheckLine {
        name: "radialIdentitySign",
        residual: if folded < 0.0 { 0.0 } else { f64::INFINITY },
        tolerance: 0.0,
    });

    let modes_ok = (1..=n + 1).all(|i| KernelMode::new(n, s, i).is_ok());
    lines.push(CheckLine {
        name: "kernelModes",
        residual: if modes_ok { 0.0 } else { f64::INFINITY },
        tolerance: 0.0,
    });
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn standard_bubble_at_origin() {
        for (n, s) in [(1, 0.25), (2, 0.5), (3, 0.75)] {
            let u = BubbleProfile::standard(n, s);
            assert!(rel(u.eval(&vec![0.0; n]), special::bubble_amplitude(n, s)) < 1e-15);
        }
    }

    #[test]
    fn normalized_profile_is_one_at_origin() {
        for (n, s) in [(1, 0.25), (1, 0.4), (2, 0.5), (3, 0.75)] {
            let z = BubbleProfile::normalized(n, s);
            assert!((z.eval(&vec![0.0; n]) - 1.0).abs() < 1e-13);
            // and has the closed form (1+|x|²/μ)^{-(N-2s)/2}
            let mu = special::bubble_amplitude(n, s).powf(4.0 / (n as f64 - 2.0 * s));
            let x = vec![0.3; n];
            let r2 = 0.09 * n as f64;
            let want = (1.0 + r2 / mu).powf(-0.5 * (n as f64 - 2.0 * s));
            assert!(rel(z.eval(&x), want) < 1e-13);
        }
    }

    #[test]
    fn scaling_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (n, s) = if rng.gen_bool(0.5) { (1, 0.25) } else { (2, 0.4) };
            let eps = rng.gen_range(0.05..5.0);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let scaled = BubbleProfile::rescaled(n, s, eps, &a).unwrap();
            let u = BubbleProfile::standard(n, s);
            let y: Vec<f64> = x.iter().zip(&a).map(|(xi, ai)| (xi - ai) / eps).collect();
            let want = eps.powf(-0.5 * (n as f64 - 2.0 * s)) * u.eval(&y);
            assert!(rel(scaled.eval(&x), want) < 1e-13);
        }
    }

    #[test]
    fn far_field_decay() {
        let (n, s) = (1, 0.25);
        let u = BubbleProfile::standard(n, s);
        let c = u.amplitude;
        let mut prev = f64::INFINITY;
        for (r, tol) in [(10.0, 1e-2), (100.0, 1e-4), (1000.0, 1e-6)] {
            let v = u.eval(&[r]) * f64::powf(r, n as f64 - 2.0 * s);
            let err = rel(v, c);
            assert!(err <= tol, "r={r}: {err}");
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn z_as_rescaled_u() {
        let (n, s) = (2, 0.5);
        let c = special::bubble_amplitude(n, s);
        let xi = c.powf(2.0 / (n as f64 - 2.0 * s));
        let u = BubbleProfile::standard(n, s);
        let z = BubbleProfile::normalized(n, s);
        for x in [[0.0, 0.0], [0.5, -0.1], [3.0, 2.0]] {
            let y = [x[0] / xi, x[1] / xi];
            let want = xi.powf(-0.5 * (n as f64 - 2.0 * s)) * u.eval(&y);
            assert!(rel(z.eval(&x), want) < 1e-13);
        }
    }

    #[test]
    fn kernel_mode_values() {
        let m = KernelMode::with_width(1, 0.25, 2, 1.0).unwrap();
        assert!(eval_kernel_mode(&m, &[1.0]).unwrap().abs() < 1e-15);
        assert!(eval_kernel_mode(&m, &[-1.0]).unwrap().abs() < 1e-15);
        assert!((eval_kernel_mode(&m, &[0.0]).unwrap() - 1.0).abs() < 1e-15);
        let m3 = KernelMode::with_width(2, 0.5, 3, 1.0).unwrap();
        let x = [0.6, 0.8];
        assert!(eval_kernel_mode(&m3, &x).unwrap().abs() < 1e-15);
        let m1 = KernelMode::new(1, 0.25, 1).unwrap();
        assert_eq!(eval_kernel_mode(&m1, &[0.0]).unwrap(), 0.0);
        // odd in x_1
        let a = eval_kernel_mode(&m1, &[0.3]).unwrap();
        let b = eval_kernel_mode(&m1, &[-0.3]).unwrap();
        assert!((a + b).abs() < 1e-15);
        // dilation mode vanishes on |x|² = μ
        let md = KernelMode::new(1, 0.25, 2).unwrap();
        assert!(eval_kernel_mode(&md, &[md.width.sqrt()]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn kernel_mode_index_checked() {
        assert!(KernelMode::new(1, 0.25, 0).is_err());
        assert!(KernelMode::new(1, 0.25, 3).is_err());
        assert!(KernelMode::new(2, 0.25, 3).is_ok());
    }

    #[test]
    fn dilation_mode_is_scale_derivative_of_z() {
        // d/dλ [λ^{(N-2s)/2} Z(λx)] at λ = 1 is proportional to mode N+1
        let (n, s) = (1, 0.25);
        let z = BubbleProfile::normalized(n, s);
        let mode = KernelMode::new(n, s, n + 1).unwrap();
        let alpha = 0.5 * (n as f64 - 2.0 * s);
        let h = 1e-5;
        let family = |lam: f64, x: f64| lam.powf(alpha) * z.eval(&[lam * x]);
        let at0 = (family(1.0 + h, 0.0) - family(1.0 - h, 0.0)) / (2.0 * h);
        for x in [0.05, 0.2, 0.7, 3.0] {
            let d = (family(1.0 + h, x) - family(1.0 - h, x)) / (2.0 * h);
            let want = at0 * eval_kernel_mode(&mode, &[x]).unwrap();
            assert!((d - want).abs() < 1e-7, "x={x}: {d} vs {want}");
        }
    }

    #[test]
    fn kelvin_fixes_bubble() {
        let e = Exponents::critical(1, 0.25, 5.0).unwrap();
        let u = BubbleProfile::standard(1, 0.25);
        let k = kelvin_transform(|x: &[f64]| u.eval(x), &e);
        for x in [0.01, 0.5, 1.0, 7.0, 300.0] {
            assert!(rel(k(&[x]).unwrap(), u.eval(&[x])) < 1e-12);
        }
        assert!(k(&[0.0]).is_err());
    }

    #[test]
    fn kelvin_is_an_involution() {
        let e = Exponents::critical(2, 0.5, 4.0).unwrap();
        let f = |x: &[f64]| (1.0 + x[0] * x[0] + 2.0 * x[1] * x[1]).powf(-1.3) * (1.0 + 0.2 * x[0]);
        let once = kelvin_transform(f, &e);
        let twice = kelvin_transform(|x: &[f64]| once(x).unwrap(), &e);
        for x in [[0.3, 0.1], [2.0, -1.0], [-0.05, 0.7]] {
            assert!(rel(twice(&x).unwrap(), f(&x)) < 1e-10);
        }
    }

    #[test]
    fn kelvin_of_fundamental_power_is_constant() {
        let e = Exponents::critical(1, 0.25, 5.0).unwrap();
        let k = kelvin_transform(|x: &[f64]| x[0].abs().powf(-0.5), &e);
        for x in [0.1, 1.0, 9.0] {
            assert!((k(&[x]).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn radial_identity_two_routes() {
        for (n, s) in [(1, 0.25), (2, 0.5), (1, 0.4), (3, 0.75)] {
            let e = Exponents::critical(n, s, special::critical_p(n, s) + 1.0).unwrap();
            let (lhs, rhs) = identity_nov39(&e).unwrap();
            assert!((lhs - rhs).abs() < 1e-8, "N={n} s={s}: {lhs} vs {rhs}");
            assert!(rhs < 0.0);
        }
    }

    #[test]
    fn u_two_star_integral_is_not_one() {
        let v = integral_u_two_star(1, 0.25).unwrap();
        let u = BubbleProfile::standard(1, 0.25);
        let radial = 2.0 * quad::half_line(|r| u.eval_radial(r).powi(4), 1e-13).value;
        assert!(rel(v, radial) < 1e-10);
        assert!((v - 1.0).abs() > 0.1);
    }

    #[test]
    fn all_bubble_checks_pass() {
        for (n, s) in [(1, 0.25), (2, 0.5)] {
            for line in bubble_checks(n, s).unwrap() {
                assert!(line.passed(), "{}: {}", line.name, line.residual);
            }
        }
    }
}
