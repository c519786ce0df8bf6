//! One-dimensional quadrature: adaptive Gauss–Kronrod (7/15) on finite and
//! semi-infinite intervals, and fixed Gauss–Legendre rules for smooth panels.

use std::f64::consts::PI;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = hw * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * hw, ((kron - gauss) * hw).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Globally adaptive: the panel with the largest error estimate is bisected
/// until the summed estimate meets `abs_tol` (or roundoff in the value), or
/// the panel budget is spent. Integrable endpoint singularities are fine
/// since the rule never evaluates the endpoints.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Estimate {
    adaptive_with_limit(&f, a, b, abs_tol, 2000)
}

#[derive(PartialEq)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

pub fn adaptive_with_limit<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Estimate {
    if a == b {
        return Estimate { value: 0.0, error: 0.0, evaluations: 0 };
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (v0, e0) = gk15(f, lo, hi);
    let mut evaluations = 15;
    let mut value = v0;
    let mut error = e0;
    let mut heap = std::collections::BinaryHeap::new();
    let mut done_value = 0.0;
    let mut done_error = 0.0;
    heap.push(Panel { a: lo, b: hi, value: v0, error: e0 });
    while error > abs_tol.max(4.0 * f64::EPSILON * value.abs()) && heap.len() < max_panels {
        let Some(p) = heap.pop() else { break };
        if p.b - p.a <= 64.0 * f64::EPSILON * p.a.abs().max(p.b.abs()) || p.b - p.a < f64::MIN_POSITIVE {
            done_value += p.value;
            done_error += p.error;
            continue;
        }
        let mid = 0.5 * (p.a + p.b);
        let (vl, el) = gk15(f, p.a, mid);
        let (vr, er) = gk15(f, mid, p.b);
        evaluations += 30;
        value += vl + vr - p.value;
        error += el + er - p.error;
        heap.push(Panel { a: p.a, b: mid, value: vl, error: el });
        heap.push(Panel { a: mid, b: p.b, value: vr, error: er });
    }
    // re-sum to shed the drift of the running totals
    let value = done_value + heap.iter().map(|p| p.value).sum::<f64>();
    let error = done_error + heap.iter().map(|p| p.error).sum::<f64>();
    Estimate { value: sign * value, error, evaluations }
}

/// `∫_a^∞ f(x) dx` for `a > 0`: the piece `[a, max(a,1)]` directly and the
/// tail through `x = 1/t` with `t = v^4`, which turns algebraic decay `x^{-k}`,
/// `k > 1`, into a (nearly) regular integrand on a finite interval.
pub fn semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64) -> Estimate {
    assert!(a > 0.0, "semi_infinite needs a positive lower limit");
    let split = a.max(1.0);
    let head = adaptive(&f, a, split, 0.5 * abs_tol);
    let tail = adaptive(
        |v: f64| {
            if v <= 0.0 {
                return 0.0;
            }
            let t = v.powi(4);
            f(1.0 / t) * 4.0 * v.powi(3) / (t * t)
        },
        0.0,
        split.recip().powf(0.25),
        0.5 * abs_tol,
    );
    Estimate {
        value: head.value + tail.value,
        error: head.error + tail.error,
        evaluations: head.evaluations + tail.evaluations,
    }
}

/// `∫_0^∞ f(r) dr`, split at `r = 1`; the head uses `r = v^4` so integrable
/// power singularities at the origin are smoothed out.
pub fn half_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64) -> Estimate {
    let head = adaptive(
        |v: f64| {
            if v <= 0.0 {
                0.0
            } else {
                f(v.powi(4)) * 4.0 * v.powi(3)
            }
        },
        0.0,
        1.0,
        0.5 * abs_tol,
    );
    let tail = semi_infinite(&f, 1.0, 0.5 * abs_tol);
    Estimate {
        value: head.value + tail.value,
        error: head.error + tail.error,
        evaluations: head.evaluations + tail.evaluations,
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on `P_n` from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let hw = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(c + hw * x))
            .sum::<f64>()
            * hw
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
