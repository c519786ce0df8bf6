//! Gamma/Beta functions and the closed-form constants of the critical problem.
//!
//! `ω_N` is the surface measure of the unit sphere `S^{N-1}` (`ω_1 = 2`,
//! `ω_2 = 2π`, `ω_3 = 4π`); every radial integral below is written against it.

use std::f64::consts::PI;

use crate::quad;
use crate::{Error, Result};

const LANCZOS_G_HALF: f64 = 5.242_187_5;
const LANCZOS_C0: f64 = 0.999_999_999_999_997_1;
const LANCZOS: [f64; 14] = [
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_747,
    -0.491_913_816_097_620_2,
    0.339_946_499_848_118_9e-4,
    0.465_236_289_270_485_76e-4,
    -0.983_744_753_048_795_6e-4,
    0.158_088_703_224_912_5e-3,
    -0.210_264_441_724_104_9e-3,
    0.217_439_618_115_212_64e-3,
    -0.164_318_106_536_763_9e-3,
    0.844_182_239_838_527_4e-4,
    -0.261_908_384_015_814_1e-4,
    0.368_991_826_595_316_2e-5,
];
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

fn lanczos_series(x: f64) -> f64 {
    let mut ser = LANCZOS_C0;
    for (j, c) in LANCZOS.iter().enumerate() {
        ser += c / (x + 1.0 + j as f64);
    }
    ser
}

/// `Γ(x)` for `x > 0`.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("gamma_fn needs x > 0, got {x}")));
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma_unchecked(1.0 - x));
    }
    let t = x + LANCZOS_G_HALF;
    let ser = lanczos_series(x);
    // split the power so t^{x+1/2} does not overflow before e^{-t} pulls it back
    let half = 0.5 * (x + 0.5);
    let tp = t.powf(half);
    SQRT_2PI * ser / x * (tp * (-t).exp()) * tp
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("ln_gamma needs x > 0, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma_unchecked(1.0 - x);
    }
    let t = x + LANCZOS_G_HALF;
    (x + 0.5) * t.ln() - t + (SQRT_2PI * lanczos_series(x) / x).ln()
}

/// `B(a, b) = Γ(a)Γ(b)/Γ(a+b)`, through log-Gamma so large arguments are safe.
pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::domain(format!("beta_fn needs a, b > 0, got ({a}, {b})")));
    }
    if a + b < 40.0 {
        return Ok(gamma_unchecked(a) * gamma_unchecked(b) / gamma_unchecked(a + b));
    }
    Ok((ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b)).exp())
}

/// Lower incomplete Beta integral `∫_0^x t^{a-1}(1-t)^{b-1} dt` (not regularized).
///
/// Endpoint singularities are removed by the power substitutions
/// `t = v^{1/a}` near 0 and `1 - t = v^{1/b}` near 1 before adaptive
/// Gauss–Kronrod integration.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::domain(format!("incomplete_beta needs a, b > 0, got ({a}, {b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("incomplete_beta needs x in [0,1], got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let full = beta_fn(a, b)?;
    if x == 1.0 {
        return Ok(full);
    }
    let tol = 1e-15 * full.max(1e-300);
    if x <= 0.5 {
        Ok(lower_piece(a, b, x, tol))
    } else {
        Ok(full - lower_piece(b, a, 1.0 - x, tol))
    }
}

// ∫_0^x t^{a-1}(1-t)^{b-1} dt with t = v^{1/a}: (1/a) ∫_0^{x^a} (1 - v^{1/a})^{b-1} dv
fn lower_piece(a: f64, b: f64, x: f64, tol: f64) -> f64 {
    let upper = x.powf(a);
    let inv_a = 1.0 / a;
    quad::adaptive(|v: f64| (1.0 - v.powf(inv_a)).powf(b - 1.0), 0.0, upper, tol * a).value
        * inv_a
}

/// Surface measure of the unit sphere in `ℝ^N`: `2π^{N/2}/Γ(N/2)`.
pub fn omega_n(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    2.0 * PI.powf(half) / gamma_unchecked(half)
}

/// Constant `C(N,s) = 2^{2s} s Γ((N+2s)/2) / (π^{N/2} Γ(1-s))` of the singular
/// integral representation `(-Δ)^s u(x) = C(N,s) p.v.∫ (u(x)-u(y))/|x-y|^{N+2s} dy`.
pub fn frac_laplacian_constant(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    4f64.powf(s) * s * gamma_unchecked(0.5 * (nf + 2.0 * s))
        / (PI.powf(0.5 * nf) * gamma_unchecked(1.0 - s))
}

/// Dimension and exponents of an instance `(-Δ)^s u = u^p - ε u^q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    pub n: usize,
    pub s: f64,
    pub p: f64,
    pub q: f64,
}

impl Exponents {
    /// Relative tolerance used to decide that `p` equals the critical exponent.
    pub const CRITICAL_TOL: f64 = 1e-12;

    pub fn new(n: usize, s: f64, p: f64, q: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("dimension must be positive"));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::domain(format!("s must lie in (0,1), got {s}")));
        }
        let nf = n as f64;
        if nf <= 2.0 * s {
            return Err(Error::domain(format!("need N > 2s, got N={n}, s={s}")));
        }
        let pc = (nf + 2.0 * s) / (nf - 2.0 * s);
        if !(p >= pc * (1.0 - Self::CRITICAL_TOL)) {
            return Err(Error::domain(format!("need p >= (N+2s)/(N-2s) = {pc}, got {p}")));
        }
        if !(q > p) {
            return Err(Error::domain(format!("need q > p, got p={p}, q={q}")));
        }
        Ok(Exponents { n, s, p, q })
    }

    /// Critical instance `p = (N+2s)/(N-2s)`.
    pub fn critical(n: usize, s: f64, q: f64) -> Result<Self> {
        if n == 0 || !(s > 0.0 && s < 1.0) || (n as f64) <= 2.0 * s {
            return Err(Error::domain(format!("invalid (N, s) = ({n}, {s})")));
        }
        let pc = critical_p(n, s);
        Self::new(n, s, pc, q)
    }

    pub fn critical_p(&self) -> f64 {
        critical_p(self.n, self.s)
    }

    /// `2* = 2N/(N-2s)`.
    pub fn two_star(&self) -> f64 {
        let nf = self.n as f64;
        2.0 * nf / (nf - 2.0 * self.s)
    }

    pub fn is_critical(&self) -> bool {
        let pc = self.critical_p();
        (self.p - pc).abs() <= Self::CRITICAL_TOL * pc
    }

    /// `N - 2s`.
    pub fn n_minus_2s(&self) -> f64 {
        self.n as f64 - 2.0 * self.s
    }

    /// Exponent `l` of the denominator in the supercritical functional.
    pub fn l_exponent(&self) -> f64 {
        let nf = self.n as f64;
        let s = self.s;
        (2.0 * s * (self.q + 1.0) - nf * (self.p - 1.0))
            / (2.0 * s * (self.p + 1.0) - nf * (self.p - 1.0))
    }

    /// `q(N-2s) - (N+2s)`, positive whenever `q` exceeds the critical exponent.
    pub fn blowup_denominator(&self) -> f64 {
        self.q * self.n_minus_2s() - (self.n as f64 + 2.0 * self.s)
    }

    /// `q - p + 2`, the power of `‖u‖_∞` that balances `ε` at blow-up.
    pub fn blowup_power(&self) -> f64 {
        self.q - self.p + 2.0
    }
}

pub fn critical_p(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    (nf + 2.0 * s) / (nf - 2.0 * s)
}

/// Closed-form constants attached to `(N, s, q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperConstants {
    pub omega_n: f64,
    /// Amplitude of the standard bubble `U(x) = c (1+|x|²)^{-(N-2s)/2}`.
    pub c_ns: f64,
    /// Coefficient of the fundamental solution `a |x|^{2s-N}`.
    pub a_ns: f64,
    /// Squared width of the normalized profile `Z`, `c^{4/(N-2s)}`.
    pub mu_ns: f64,
    /// Boundary-profile coefficient `∫ Z^{2*-1}`.
    pub gamma0: f64,
    /// `lim ε‖u_ε‖^{q-p+2} / R_{N,s,x0}`; present in critical mode only.
    pub blowup_coefficient: Option<f64>,
}

impl PaperConstants {
    /// The blow-up limit for a given boundary constant `R_{N,s,x0}`.
    pub fn blowup_limit(&self, r: f64) -> Result<f64> {
        self.blowup_coefficient
            .map(|k| k * r)
            .ok_or_else(|| Error::domain("blow-up limit needs the critical exponent p = 2*-1"))
    }
}

/// `c_{N,s} = 2^{(N-2s)/2} (Γ((N+2s)/2)/Γ((N-2s)/2))^{(N-2s)/(4s)}`.
pub fn bubble_amplitude(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    let d = nf - 2.0 * s;
    let ratio = gamma_unchecked(0.5 * (nf + 2.0 * s)) / gamma_unchecked(0.5 * d);
    2f64.powf(0.5 * d) * ratio.powf(d / (4.0 * s))
}

/// `a_{N,s} = Γ(N/2 - s) / (2^{2s} π^{N/2} Γ(s))`.
pub fn fundamental_coefficient(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    gamma_unchecked(0.5 * nf - s) / (4f64.powf(s) * PI.powf(0.5 * nf) * gamma_unchecked(s))
}

/// `∫_{ℝ^N} Z^k dx = (ω_N c^{2*}/2) B(N/2, k(N-2s)/2 - N/2)`, finite for `k(N-2s) > N`.
pub fn integral_z_power(n: usize, s: f64, k: f64) -> Result<f64> {
    let nf = n as f64;
    let b = 0.5 * k * (nf - 2.0 * s) - 0.5 * nf;
    if !(b > 0.0) {
        return Err(Error::domain(format!("∫Z^{k} diverges for N={n}, s={s}")));
    }
    let mu = bubble_amplitude(n, s).powf(4.0 / (nf - 2.0 * s));
    Ok(omega_n(n) * mu.powf(0.5 * nf) / 2.0 * beta_fn(0.5 * nf, b)?)
}

pub fn paper_constants(e: &Exponents) -> Result<PaperConstants> {
    let n = e.n;
    let s = e.s;
    let nf = n as f64;
    let omega = omega_n(n);
    let c = bubble_amplitude(n, s);
    let a = fundamental_coefficient(n, s);
    let two_star = e.two_star();
    let mu = c.powf(4.0 / e.n_minus_2s());
    let c2s = c.powf(two_star);
    let gamma0 = omega * c2s / 2.0 * gamma_unchecked(0.5 * nf) * gamma_unchecked(s)
        / gamma_unchecked(0.5 * (nf + 2.0 * s));
    let denom = e.blowup_denominator();
    if !(denom > 0.0) {
        return Err(Error::domain(format!(
            "q(N-2s) - (N+2s) = {denom} must be positive"
        )));
    }
    let blowup_coefficient = if e.is_critical() {
        let b_ns = beta_fn(0.5 * nf, s)?;
        let b_q = beta_fn(0.5 * nf, 0.5 * e.n_minus_2s() * e.q - s)?;
        let gs = gamma_unchecked(s);
        Some(omega * c2s / 2.0 * (e.q + 1.0) / denom * s * s * gs * gs * b_ns * b_ns / b_q)
    } else {
        None
    };
    Ok(PaperConstants {
        omega_n: omega,
        c_ns: c,
        a_ns: a,
        mu_ns: mu,
        gamma0,
        blowup_coefficient,
    })
}

/// The same blow-up limit assembled from its ingredients
/// `γ0² Γ(1+s)² R (q+1) / ([q(N-2s)-(N+2s)] ∫Z^{q+1})`.
pub fn blowup_limit_assembled(e: &Exponents, r: f64) -> Result<f64> {
    if !e.is_critical() {
        return Err(Error::domain("blow-up limit needs the critical exponent p = 2*-1"));
    }
    let k = paper_constants(e)?;
    let g1s = gamma_fn(1.0 + e.s)?;
    let zq = integral_z_power(e.n, e.s, e.q + 1.0)?;
    Ok(k.gamma0 * k.gamma0 * g1s * g1s * r * (e.q + 1.0) / (e.blowup_denominator() * zq))
}

/// The blow-up constant in its two algebraic forms, each as
/// `(numerator, denominator)`, so the forms can be compared even where the
/// denominator vanishes or changes sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitForms {
    /// `(ω c^{2*}/2)(q+1) R s²Γ(s)² B(N/2,s)² / B(N/2, (N-2s)q/2 - s)` over
    /// `q(N-2s) - (N+2s)`.
    pub statement: (f64, f64),
    /// `γ0² Γ(1+s)² R (q+1) / ∫Z^{q+1}` over `(q+1) · 2((N-2s)/2 - N/(q+1))`.
    pub assembled: (f64, f64),
}

impl LimitForms {
    pub fn statement_value(&self) -> f64 {
        self.statement.0 / self.statement.1
    }

    pub fn assembled_value(&self) -> f64 {
        self.assembled.0 / self.assembled.1
    }
}

/// Both forms at `(N, s, q)` without requiring `q` above the critical
/// exponent; only the Beta arguments must be positive.
pub fn blowup_limit_forms(n: usize, s: f64, q: f64, r: f64) -> Result<LimitForms> {
    if n == 0 || !(s > 0.0 && s < 1.0) || (n as f64) <= 2.0 * s {
        return Err(Error::domain(format!("invalid (N, s) = ({n}, {s})")));
    }
    let nf = n as f64;
    let d = nf - 2.0 * s;
    let bq_arg = 0.5 * d * q - s;
    if !(q > 0.0 && bq_arg > 0.0) {
        return Err(Error::domain(format!("B(N/2, (N-2s)q/2 - s) undefined for q = {q}")));
    }
    let omega = omega_n(n);
    let c2s = bubble_amplitude(n, s).powf(2.0 * nf / d);
    let gs = gamma_fn(s)?;
    let statement_num =
        omega * c2s / 2.0 * (q + 1.0) * r * s * s * gs * gs * beta_fn(0.5 * nf, s)?.powi(2) / beta_fn(0.5 * nf, bq_arg)?;
    let statement_den = q * d - (nf + 2.0 * s);
    let gamma0 = omega * c2s / 2.0 * gamma_fn(0.5 * nf)? * gs / gamma_fn(0.5 * (nf + 2.0 * s))?;
    let g1s = gamma_fn(1.0 + s)?;
    let z_q1 = c2s * omega / 2.0 * beta_fn(0.5 * nf, bq_arg)?;
    let assembled_num = gamma0 * gamma0 * g1s * g1s * r * (q + 1.0) / z_q1;
    let assembled_den = (q + 1.0) * 2.0 * (0.5 * d - nf / (q + 1.0));
    Ok(LimitForms {
        statement: (statement_num, statement_den),
        assembled: (assembled_num, assembled_den),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // reference values from a 30-digit evaluation
    const GAMMA_TABLE: [(f64, f64); 14] = [
        (0.001, 999.423_772_484_595_5),
        (0.1, 9.513_507_698_668_732),
        (0.25, 3.625_609_908_221_908_3),
        (0.5, 1.772_453_850_905_516),
        (0.75, 1.225_416_702_465_177_6),
        (1.0, 1.0),
        (1.5, 0.886_226_925_452_758),
        (2.5, 1.329_340_388_179_137),
        (5.0, 24.0),
        (10.3, 716_430.689_062_375_2),
        (17.75, 174_210_076_354_396.3),
        (33.1, 3.727_593_424_356_384_5e35),
        (49.9, 4.118_011_034_253_058e62),
        (50.0, 6.082_818_640_342_675_6e62),
    ];

    #[test]
    fn gamma_reference_table() {
        for (x, g) in GAMMA_TABLE {
            let v = gamma_fn(x).unwrap();
            assert!(rel(v, g) <= 1e-13, "Γ({x}) = {v}, want {g}, rel {}", rel(v, g));
            let l = ln_gamma(x).unwrap();
            assert!((l - g.ln()).abs() <= 1e-13 * g.ln().abs().max(1.0), "lnΓ({x})");
        }
    }

    #[test]
    fn gamma_trivial_values() {
        assert!(rel(gamma_fn(1.0).unwrap(), 1.0) < 1e-15);
        assert!(rel(gamma_fn(0.5).unwrap(), PI.sqrt()) < 1e-15);
        assert!(rel(gamma_fn(5.0).unwrap(), 24.0) < 1e-14);
    }

    #[test]
    fn gamma_rejects_nonpositive() {
        assert!(matches!(gamma_fn(0.0), Err(Error::Domain(_))));
        assert!(matches!(gamma_fn(-1.5), Err(Error::Domain(_))));
        assert!(gamma_fn(f64::NAN).is_err());
    }

    #[test]
    fn beta_trivial_values() {
        assert!(rel(beta_fn(0.5, 0.5).unwrap(), PI) < 1e-14);
        assert!(rel(beta_fn(1.0, 1.0).unwrap(), 1.0) < 1e-14);
        assert!(beta_fn(0.0, 1.0).is_err());
        assert!(beta_fn(1.0, -2.0).is_err());
    }

    #[test]
    fn beta_against_integral_representation() {
        // ∫_0^∞ t^{a-1}(1+t)^{-a-b} dt with a = 1/2, b = 1/4
        let (a, b) = (0.5, 0.25);
        let quad = quad::half_line(|t: f64| t.powf(a - 1.0) * (1.0 + t).powf(-a - b), 1e-13);
        let v = beta_fn(a, b).unwrap();
        assert!(rel(v, quad.value) < 1e-9, "{v} vs {}", quad.value);
        assert!(rel(v, 5.244_115_108_584_24) < 1e-13);
    }

    #[test]
    fn beta_large_arguments_do_not_overflow() {
        let v = beta_fn(200.0, 300.0).unwrap();
        let l = ln_gamma(200.0).unwrap() + ln_gamma(300.0).unwrap() - ln_gamma(500.0).unwrap();
        assert!(rel(v.ln(), l) < 1e-12);
    }

    #[test]
    fn incomplete_beta_limits_and_symmetry() {
        let (a, b) = (0.25, 0.25);
        let full = beta_fn(a, b).unwrap();
        assert!(rel(incomplete_beta(a, b, 1.0).unwrap(), full) < 1e-15);
        let x = 0.3;
        let lo = incomplete_beta(a, b, x).unwrap();
        let hi = incomplete_beta(b, a, 1.0 - x).unwrap();
        assert!(rel(lo + hi, full) < 1e-12);
        // I_x(1,1) = x
        assert!((incomplete_beta(1.0, 1.0, 0.37).unwrap() - 0.37).abs() < 1e-14);
        // ∫_0^x t^{-1/2} dt = 2√x
        assert!(rel(incomplete_beta(0.5, 1.0, 0.81).unwrap(), 1.8) < 1e-12);
    }

    #[test]
    fn omega_values() {
        assert!(rel(omega_n(1), 2.0) < 1e-15);
        assert!(rel(omega_n(2), 2.0 * PI) < 1e-15);
        assert!(rel(omega_n(3), 4.0 * PI) < 1e-14);
    }

    #[test]
    fn amplitude_one_dimension_quarter() {
        let c = bubble_amplitude(1, 0.25);
        let direct = 2f64.powf(0.25) * (gamma_fn(0.75).unwrap() / gamma_fn(0.25).unwrap()).sqrt();
        assert!(rel(c, direct) < 1e-15);
        assert!(rel(c, 0.691_367_339_036_293_4) < 1e-13);
    }

    #[test]
    fn gamma0_matches_radial_integral_of_z() {
        for (n, s) in [(1usize, 0.25), (2, 0.5), (3, 0.75)] {
            let e = Exponents::critical(n, s, critical_p(n, s) + 1.0).unwrap();
            let k = paper_constants(&e).unwrap();
            let a = 0.5 * (n as f64 + 2.0 * s);
            let mu = k.mu_ns;
            let radial = quad::half_line(
                |r: f64| r.powi(n as i32 - 1) * (1.0 + r * r / mu).powf(-a),
                1e-13,
            );
            let v = k.omega_n * radial.value;
            assert!(rel(k.gamma0, v) < 1e-9, "N={n} s={s}: {} vs {v}", k.gamma0);
        }
    }

    #[test]
    fn blowup_limit_zero_when_r_zero() {
        let e = Exponents::critical(1, 0.25, 5.0).unwrap();
        let k = paper_constants(&e).unwrap();
        assert_eq!(k.blowup_limit(0.0).unwrap(), 0.0);
    }

    #[test]
    fn supercritical_has_no_blowup_limit() {
        let e = Exponents::new(1, 0.25, 5.0, 7.0).unwrap();
        let k = paper_constants(&e).unwrap();
        assert!(k.blowup_limit(1.0).is_err());
    }

    #[test]
    fn exponent_validation() {
        assert!(Exponents::new(1, 0.25, 3.0, 3.0).is_err());
        assert!(Exponents::new(1, 0.25, 2.0, 5.0).is_err());
        assert!(Exponents::new(1, 0.6, 3.0, 5.0).is_err());
        assert!(Exponents::new(1, 1.0, 3.0, 5.0).is_err());
        let e = Exponents::critical(1, 0.25, 5.0).unwrap();
        assert_eq!(e.p, 3.0);
        assert_eq!(e.two_star(), 4.0);
        assert!(e.is_critical());
        assert_eq!(e.blowup_power(), 4.0);
    }

    #[test]
    fn l_exponent_value() {
        // N=1, s=1/4, p=5, q=7: (0.5*8 - 4)/(0.5*6 - 4) = 0/(-1)
        let e = Exponents::new(1, 0.25, 5.0, 7.0).unwrap();
        assert!(e.l_exponent().abs() < 1e-15);
    }

    #[test]
    fn blowup_limit_forms_agree() {
        for (n, s, q) in [(1usize, 0.25, 5.0), (1, 0.4, 9.0), (2, 0.5, 4.0), (3, 0.75, 2.5)] {
            let f = blowup_limit_forms(n, s, q, 0.7).unwrap();
            assert!(rel(f.statement.0, f.assembled.0) < 1e-12, "N={n} s={s} q={q}");
            let scale = q * (n as f64 - 2.0 * s) + n as f64 + 2.0 * s;
            assert!((f.statement.1 - f.assembled.1).abs() < 1e-14 * scale);
        }
        let e = Exponents::critical(1, 0.25, 5.0).unwrap();
        let f = blowup_limit_forms(1, 0.25, 5.0, 0.7).unwrap();
        let k = paper_constants(&e).unwrap().blowup_limit(0.7).unwrap();
        assert!(rel(f.statement_value(), k) < 1e-14);
        assert!(rel(f.assembled_value(), blowup_limit_assembled(&e, 0.7).unwrap()) < 1e-14);
        assert!(blowup_limit_forms(1, 0.25, 0.1, 1.0).is_err());
    }
}
