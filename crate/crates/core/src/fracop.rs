//! Restricted fractional Laplacian on uniform lattices with exterior-zero data.
//!
//! The operator is discretized by integrating the singular kernel exactly
//! against the multilinear interpolant of the lattice values (extended by zero
//! to the whole lattice `hℤ^N`), with the innermost cell `[-h,h]^N` handled by
//! a second-order Taylor correction. Every weight is nonnegative and the
//! diagonal carries the full (infinite-lattice) weight sum, so the exterior
//! datum `u = 0` on `ℝ^N \ Ω` is folded into the diagonal and the matrix is a
//! symmetric, strictly diagonally dominant M-matrix.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::quad::{self, GaussLegendre};
use crate::special::{self, Exponents};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Interval,
    Ball,
    Box,
}

impl DomainKind {
    pub fn name(&self) -> &'static str {
        match self {
            DomainKind::Interval => "interval",
            DomainKind::Ball => "ball",
            DomainKind::Box => "box",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "interval" => Ok(DomainKind::Interval),
            "ball" => Ok(DomainKind::Ball),
            "box" => Ok(DomainKind::Box),
            other => Err(Error::Usage(format!("unknown domain kind '{other}'"))),
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Interior lattice nodes of an interval `(-R, R)`, a ball `|x| < R` or a box
/// `max|x_i| < R`, centered at the origin, in lexicographic order.
#[derive(Debug, Clone)]
pub struct DiscreteDomain {
    dim: usize,
    spacing: f64,
    kind: DomainKind,
    size: f64,
    lattice: Vec<[i64; 2]>,
}

impl PartialEq for DiscreteDomain {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.kind == other.kind
            && self.spacing == other.spacing
            && self.size == other.size
            && self.lattice.len() == other.lattice.len()
    }
}

impl DiscreteDomain {
    pub fn new(kind: DomainKind, dim: usize, size: f64, spacing: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::domain(format!("lattice domains support N = 1, 2; got {dim}")));
        }
        if kind == DomainKind::Interval && dim != 1 {
            return Err(Error::domain("an interval is one-dimensional"));
        }
        if !(size > 0.0 && spacing > 0.0) || !size.is_finite() || !spacing.is_finite() {
            return Err(Error::domain(format!("need size > 0 and h > 0, got {size}, {spacing}")));
        }
        let per_axis = (size / spacing).floor() as i64 + 1;
        let mut lattice = Vec::new();
        let inside = |k: [i64; 2]| -> bool {
            let x = [k[0] as f64 * spacing, k[1] as f64 * spacing];
            let slack = 1e-12 * size;
            match kind {
                DomainKind::Interval => x[0].abs() < size - slack,
                DomainKind::Ball => (x[0] * x[0] + x[1] * x[1]).sqrt() < size - slack,
                DomainKind::Box => x[0].abs().max(x[1].abs()) < size - slack,
            }
        };
        let range2 = if dim == 2 { per_axis } else { 0 };
        for i in -per_axis..=per_axis {
            for j in -range2..=range2 {
                if inside([i, j]) {
                    lattice.push([i, j]);
                }
            }
        }
        let axis_count = lattice.iter().filter(|k| k[1] == 0).count();
        if axis_count < 3 {
            return Err(Error::domain(format!(
                "degenerate grid: {axis_count} interior nodes per axis (need at least 3)"
            )));
        }
        Ok(DiscreteDomain { dim, spacing, kind, size, lattice })
    }

    pub fn interval(half_width: f64, spacing: f64) -> Result<Self> {
        Self::new(DomainKind::Interval, 1, half_width, spacing)
    }

    pub fn ball(dim: usize, radius: f64, spacing: f64) -> Result<Self> {
        Self::new(DomainKind::Ball, dim, radius, spacing)
    }

    pub fn cube(dim: usize, half_width: f64, spacing: f64) -> Result<Self> {
        Self::new(DomainKind::Box, dim, half_width, spacing)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    /// Half-width or radius.
    pub fn size(&self) -> f64 {
        self.size
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn lattice(&self) -> &[[i64; 2]] {
        &self.lattice
    }

    /// `h^N`, the midpoint-rule cell volume.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let k = self.lattice[i];
        (0..self.dim).map(|a| k[a] as f64 * self.spacing).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Same lattice, every length multiplied by `factor`.
    pub fn dilated(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::domain("dilation factor must be positive"));
        }
        Ok(DiscreteDomain {
            spacing: self.spacing * factor,
            size: self.size * factor,
            ..self.clone()
        })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance_to_boundary(x) > 0.0
    }

    /// Signed distance to `∂Ω` (positive inside).
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        match self.kind {
            DomainKind::Interval => self.size - x[0].abs(),
            DomainKind::Ball => self.size - x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            DomainKind::Box => self.size - x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }

    /// Index of the node at lattice coordinates `k`, if interior.
    pub fn index_of(&self, k: [i64; 2]) -> Option<usize> {
        self.lattice.binary_search(&k).ok()
    }
}

/// Nodal values on a [`DiscreteDomain`], implicitly zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    domain: Arc<DiscreteDomain>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(domain: Arc<DiscreteDomain>) -> Self {
        let n = domain.len();
        Field { domain, values: vec![0.0; n] }
    }

    pub fn new(domain: Arc<DiscreteDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::Mismatch(format!(
                "{} values for {} nodes",
                values.len(),
                domain.len()
            )));
        }
        Ok(Field { domain, values })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(domain: Arc<DiscreteDomain>, f: F) -> Self {
        let values = (0..domain.len()).map(|i| f(&domain.point(i))).collect();
        Field { domain, values }
    }

    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_same(&self, other: &Field) -> Result<()> {
        if *self.domain != *other.domain {
            return Err(Error::Mismatch("fields live on different lattices".into()));
        }
        Ok(())
    }

    /// `h^N Σ f_i g_i`.
    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.domain.cell_volume()
            * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>())
    }

    /// `h^N Σ |f_i|^k`.
    pub fn integral_abs_pow(&self, k: f64) -> f64 {
        self.domain.cell_volume() * self.values.iter().map(|v| v.abs().powf(k)).sum::<f64>()
    }

    pub fn integral(&self) -> f64 {
        self.domain.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index of the largest value (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        Field {
            domain: self.domain.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field {
        Field {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn axpy(&self, alpha: f64, other: &Field) -> Result<Field> {
        self.check_same(other)?;
        Ok(Field {
            domain: self.domain.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + alpha * b).collect(),
        })
    }

    /// Same values on a different (same-sized) lattice, e.g. a dilation.
    pub fn relabeled(&self, domain: Arc<DiscreteDomain>) -> Result<Field> {
        Field::new(domain, self.values.clone())
    }

    /// CSV with a `# domain=<kind> h=<h> n=<count>` header and
    /// `index,coords...,value` rows; floats printed with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = &self.domain;
        writeln!(out, "# domain={} h={} n={}", d.kind, fmt_f64(d.spacing), d.len())?;
        writeln!(out, "# dim={} size={}", d.dim, fmt_f64(d.size))?;
        for (i, v) in self.values.iter().enumerate() {
            write!(out, "{i}")?;
            for x in d.point(i) {
                write!(out, ",{}", fmt_f64(x))?;
            }
            writeln!(out, ",{}", fmt_f64(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Field> {
        let mut kind = None;
        let mut spacing = None;
        let mut count = None;
        let mut dim = None;
        let mut size = None;
        let mut values = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for tok in meta.split_whitespace() {
                    let Some((k, v)) = tok.split_once('=') else { continue };
                    match k {
                        "domain" => kind = Some(DomainKind::parse(v)?),
                        "h" => spacing = Some(parse_f64(v)?),
                        "n" => count = Some(v.parse::<usize>().map_err(|e| Error::Usage(e.to_string()))?),
                        "dim" => dim = Some(v.parse::<usize>().map_err(|e| Error::Usage(e.to_string()))?),
                        "size" => size = Some(parse_f64(v)?),
                        _ => {}
                    }
                }
                continue;
            }
            let last = line.rsplit(',').next().unwrap_or_default();
            values.push(parse_f64(last)?);
        }
        let (Some(kind), Some(spacing), Some(count), Some(dim), Some(size)) =
            (kind, spacing, count, dim, size)
        else {
            return Err(Error::Usage("field CSV header incomplete".into()));
        };
        let domain = DiscreteDomain::new(kind, dim, size, spacing)?;
        if domain.len() != count {
            return Err(Error::Mismatch(format!("header n={count} but lattice has {}", domain.len())));
        }
        Field::new(Arc::new(domain), values)
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Usage(format!("bad number '{s}': {e}")))
}

/// Translation-invariant lattice weights `w(k)`, `k ≠ 0`, already multiplied
/// by `C(N,s) h^{-2s}`, indexed by `(|k_1|, |k_2|)`.
#[derive(Debug, Clone)]
struct WeightTable {
    dim: usize,
    extent: usize,
    table: Vec<f64>,
    total: f64,
}

impl WeightTable {
    fn get(&self, dk: [i64; 2]) -> f64 {
        let a = dk[0].unsigned_abs() as usize;
        let b = dk[1].unsigned_abs() as usize;
        if self.dim == 1 {
            self.table[a]
        } else {
            self.table[a * (self.extent + 1) + b]
        }
    }
}

/// `∫_{[-1,1]^N} |t|^{2-N-2s} dt` and `∫_{ℝ^N \ [-1,1]^N} |t|^{-N-2s} dt`.
fn reference_totals(dim: usize, s: f64) -> (f64, f64) {
    match dim {
        1 => (1.0 / (1.0 - s), 1.0 / s),
        _ => {
            let q4 = std::f64::consts::FRAC_PI_4;
            let inner = quad::adaptive(|th: f64| th.cos().powf(-(2.0 - 2.0 * s)), 0.0, q4, 1e-15).value;
            let outer = quad::adaptive(|th: f64| th.cos().powf(2.0 * s), 0.0, q4, 1e-15).value;
            (8.0 / (2.0 - 2.0 * s) * inner, 8.0 / (2.0 * s) * outer)
        }
    }
}

fn build_weights(dim: usize, s: f64, spacing: f64, extent: usize) -> WeightTable {
    let gl = GaussLegendre::new(12);
    let kernel_exp = -(dim as f64) - 2.0 * s;
    let (inner_total, outer_total) = reference_totals(dim, s);
    let scale = special::frac_laplacian_constant(dim, s) * spacing.powf(-2.0 * s);
    // nearest neighbours absorb the Taylor correction of the inner cell
    let local = inner_total / (2.0 * dim as f64);
    let table = if dim == 1 {
        (0..=extent)
            .map(|j| {
                if j == 0 {
                    return 0.0;
                }
                let jf = j as f64;
                let hat = |t: f64| (1.0 - (t - jf).abs()) * t.powf(kernel_exp);
                let mut w = gl.integrate(hat, jf, jf + 1.0);
                if j >= 2 {
                    w += gl.integrate(hat, jf - 1.0, jf);
                } else {
                    w += local;
                }
                w * scale
            })
            .collect()
    } else {
        let m = extent + 1;
        let mut table = vec![0.0; m * m];
        table.par_chunks_mut(m).enumerate().for_each(|(a, row)| {
            for (b, slot) in row.iter_mut().enumerate() {
                if a == 0 && b == 0 {
                    continue;
                }
                let (af, bf) = (a as f64, b as f64);
                let mut w = 0.0;
                for ca in [a as i64 - 1, a as i64] {
                    for cb in [b as i64 - 1, b as i64] {
                        // cells touching the origin lie inside [-1,1]^2
                        if (-1..=0).contains(&ca) && (-1..=0).contains(&cb) {
                            continue;
                        }
                        let (x0, y0) = (ca as f64, cb as f64);
                        w += gl.integrate(
                            |x: f64| {
                                gl.integrate(
                                    |y: f64| {
                                        (1.0 - (x - af).abs())
                                            * (1.0 - (y - bf).abs())
                                            * (x * x + y * y).powf(0.5 * kernel_exp)
                                    },
                                    y0,
                                    y0 + 1.0,
                                )
                            },
                            x0,
                            x0 + 1.0,
                        );
                    }
                }
                if (a == 1 && b == 0) || (a == 0 && b == 1) {
                    w += local;
                }
                *slot = w * scale;
            }
        });
        table
    };
    WeightTable {
        dim,
        extent,
        table,
        total: (inner_total + outer_total) * scale,
    }
}

/// Symmetric discrete `(-Δ)^s` on a [`DiscreteDomain`].
///
/// One-dimensional operators are stored densely; two-dimensional ones apply
/// rows on the fly from the weight table.
pub struct FracOperator {
    domain: Arc<DiscreteDomain>,
    s: f64,
    weights: WeightTable,
    diag: Vec<f64>,
    dense: Option<DMatrix<f64>>,
    chol: OnceLock<Option<Cholesky<f64, Dyn>>>,
}

impl fmt::Debug for FracOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FracOperator")
            .field("dim", &self.domain.dim)
            .field("nodes", &self.domain.len())
            .field("spacing", &self.domain.spacing)
            .field("s", &self.s)
            .finish()
    }
}

impl Clone for FracOperator {
    fn clone(&self) -> Self {
        FracOperator {
            domain: self.domain.clone(),
            s: self.s,
            weights: self.weights.clone(),
            diag: self.diag.clone(),
            dense: self.dense.clone(),
            chol: OnceLock::new(),
        }
    }
}

pub fn assemble(domain: Arc<DiscreteDomain>, s: f64) -> Result<FracOperator> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::domain(format!("s must lie in (0,1), got {s}")));
    }
    let lat = domain.lattice();
    let extent = lat
        .iter()
        .flat_map(|k| [k[0].unsigned_abs(), k[1].unsigned_abs()])
        .max()
        .unwrap_or(0) as usize
        * 2
        + 1;
    let weights = build_weights(domain.dim, s, domain.spacing, extent);
    let n = domain.len();
    // u_j = 0 at exterior nodes, so each row carries the whole weight sum
    let diag = vec![weights.total; n];
    let dense = if domain.dim == 1 {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = if i == j {
                    diag[i]
                } else {
                    -weights.get([lat[i][0] - lat[j][0], 0])
                };
            }
        }
        Some(m)
    } else {
        None
    };
    let op = FracOperator {
        domain,
        s,
        weights,
        diag,
        dense,
        chol: OnceLock::new(),
    };
    #[cfg(debug_assertions)]
    op.check_m_matrix()?;
    Ok(op)
}

impl FracOperator {
    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        &self.domain
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Matrix entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let (a, b) = (self.domain.lattice[i], self.domain.lattice[j]);
        -self.weights.get([a[0] - b[0], a[1] - b[1]])
    }

    /// Sum over the infinite lattice of all off-diagonal weights of a row.
    pub fn total_weight(&self) -> f64 {
        self.weights.total
    }

    pub fn dense(&self) -> DMatrix<f64> {
        match &self.dense {
            Some(m) => m.clone(),
            None => {
                let n = self.len();
                DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
            }
        }
    }

    /// Off-diagonal entries are nonpositive and row sums are positive.
    pub fn check_m_matrix(&self) -> Result<()> {
        if self.weights.table.iter().any(|w| *w < 0.0) {
            return Err(Error::Diagnostic("negative lattice weight".into()));
        }
        let lat = &self.domain.lattice;
        for i in 0..self.len() {
            let off: f64 = (0..self.len())
                .filter(|&j| j != i)
                .map(|j| self.weights.get([lat[i][0] - lat[j][0], lat[i][1] - lat[j][1]]))
                .sum();
            if !(self.diag[i] - off > 0.0) {
                return Err(Error::Diagnostic(format!("row {i} is not diagonally dominant")));
            }
        }
        Ok(())
    }

    pub(crate) fn apply_raw(&self, f: &[f64]) -> Vec<f64> {
        if let Some(m) = &self.dense {
            let v = DVector::from_column_slice(f);
            return (m * v).as_slice().to_vec();
        }
        let lat = &self.domain.lattice;
        (0..f.len())
            .into_par_iter()
            .map(|i| {
                let ki = lat[i];
                let mut acc = self.diag[i] * f[i];
                for (j, kj) in lat.iter().enumerate() {
                    if j != i {
                        acc -= self.weights.get([ki[0] - kj[0], ki[1] - kj[1]]) * f[j];
                    }
                }
                acc
            })
            .collect()
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        if **f.domain() != *self.domain {
            return Err(Error::Mismatch("field and operator live on different lattices".into()));
        }
        Ok(Field {
            domain: self.domain.clone(),
            values: self.apply_raw(&f.values),
        })
    }

    /// `(-Δ)^s_h` of a function that equals `f` on the interior nodes and
    /// `exterior(x)` at every lattice node outside `Ω` (one dimension only).
    ///
    /// Exterior lattice nodes are summed out to `far` and the remainder of
    /// the line is integrated against the continuous kernel.
    pub fn apply_with_exterior<G>(&self, f: &Field, exterior: G, far: f64) -> Result<Field>
    where
        G: Fn(f64) -> f64 + Sync,
    {
        if self.domain.dim != 1 {
            return Err(Error::domain("exterior data is supported in one dimension only"));
        }
        let mut out = self.apply(f)?;
        let h = self.domain.spacing;
        let lat = &self.domain.lattice;
        let first = lat.first().map(|k| k[0]).unwrap_or(0);
        let last = lat.last().map(|k| k[0]).unwrap_or(0);
        let far_index = (far / h).ceil() as i64;
        let c = special::frac_laplacian_constant(1, self.s);
        let s = self.s;
        // the weight table only reaches the domain diameter; farther offsets
        // use the hat-function integral directly
        let gl = GaussLegendre::new(12);
        let max_offset = (far_index + last.max(-first)) as usize;
        let far_weights: Vec<f64> = (0..=max_offset)
            .into_par_iter()
            .map(|d| {
                if d <= self.weights.extent {
                    self.weights.table[d]
                } else {
                    let jf = d as f64;
                    let hat = |t: f64| (1.0 - (t - jf).abs()) * t.powf(-1.0 - 2.0 * s);
                    (gl.integrate(hat, jf - 1.0, jf) + gl.integrate(hat, jf, jf + 1.0))
                        * c
                        * h.powf(-2.0 * s)
                }
            })
            .collect();
        let weight = |d: i64| far_weights[d.unsigned_abs() as usize];
        let ext_nodes: Vec<i64> = (-far_index..first).chain(last + 1..=far_index).collect();
        let ext_vals: Vec<f64> = ext_nodes.iter().map(|&k| exterior(k as f64 * h)).collect();
        let tail_start = (far_index as f64 + 0.5) * h;
        out.values.par_iter_mut().enumerate().for_each(|(i, o)| {
            let ki = lat[i][0];
            let xi = ki as f64 * h;
            let mut acc = 0.0;
            for (k, g) in ext_nodes.iter().zip(&ext_vals) {
                acc += weight(ki - k) * g;
            }
            let tail = |sign: f64| {
                quad::semi_infinite(
                    |y: f64| exterior(sign * y) * (y - sign * xi).abs().powf(-1.0 - 2.0 * s),
                    tail_start,
                    1e-14,
                )
                .value
            };
            acc += c * (tail(1.0) + tail(-1.0));
            *o -= acc;
        });
        Ok(out)
    }

    fn cholesky(&self) -> Option<&Cholesky<f64, Dyn>> {
        self.chol
            .get_or_init(|| self.dense.as_ref().and_then(|m| Cholesky::new(m.clone())))
            .as_ref()
    }

    /// Solve `A u = f`: Cholesky for dense operators, Jacobi-preconditioned
    /// conjugate gradients otherwise.
    pub fn solve(&self, rhs: &Field) -> Result<Field> {
        if **rhs.domain() != *self.domain {
            return Err(Error::Mismatch("right-hand side lives on a different lattice".into()));
        }
        let values = self.solve_raw(&rhs.values)?;
        Ok(Field { domain: self.domain.clone(), values })
    }

    pub(crate) fn solve_raw(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if self.dense.is_some() {
            let chol = self
                .cholesky()
                .ok_or_else(|| Error::Diagnostic("operator is not positive definite".into()))?;
            let x = chol.solve(&DVector::from_column_slice(rhs));
            return Ok(x.as_slice().to_vec());
        }
        self.conjugate_gradient(rhs, 1e-13, 10 * rhs.len() + 100)
    }

    fn conjugate_gradient(&self, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = rhs.len();
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(a, d)| a / d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for it in 0..max_iter {
            let ap = self.apply_raw(&p);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= rel_tol * bnorm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] / self.diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            if it + 1 == max_iter {
                return Err(Error::NoConvergence {
                    iterations: max_iter,
                    residual: rnorm / bnorm,
                    reason: "conjugate gradients".into(),
                });
            }
        }
        Ok(x)
    }
}

/// Discrete `‖f‖²_{X_0} = h^N ⟨A f, f⟩`.
pub fn gagliardo_energy(op: &FracOperator, f: &Field) -> Result<f64> {
    let af = op.apply(f)?;
    af.dot(f)
}

/// Supercritical functional
/// `½‖f‖²/∫|f|^{p+1} + (1/(q+1)) ∫|f|^{q+1} / (∫|f|^{p+1})^l`.
pub fn energy_f(op: &FracOperator, f: &Field, e: &Exponents) -> Result<f64> {
    let denom = f.integral_abs_pow(e.p + 1.0);
    if !(denom > 0.0) {
        return Err(Error::domain("energy_F needs ∫|f|^{p+1} > 0"));
    }
    let norm = gagliardo_energy(op, f)?;
    Ok(0.5 * norm / denom + f.integral_abs_pow(e.q + 1.0) / (e.q + 1.0) / denom.powf(e.l_exponent()))
}

/// Critical Rayleigh quotient `‖f‖² / (∫|f|^{p+1})^{2/(p+1)}`.
pub fn energy_s(op: &FracOperator, f: &Field, e: &Exponents) -> Result<f64> {
    let denom = f.integral_abs_pow(e.p + 1.0);
    if !(denom > 0.0) {
        return Err(Error::domain("energy_S of the zero field"));
    }
    Ok(gagliardo_energy(op, f)? / denom.powf(2.0 / (e.p + 1.0)))
}

/// `F̂ = ½‖f‖² + (1/(q+1)) ∫|f|^{q+1}`, the functional on the constraint set.
pub fn energy_f_hat(op: &FracOperator, f: &Field, e: &Exponents) -> Result<f64> {
    Ok(0.5 * gagliardo_energy(op, f)? + f.integral_abs_pow(e.q + 1.0) / (e.q + 1.0))
}

/// Discrete estimate of the Sobolev constant `𝒮 = ‖U‖²/(∫U^{2*})^{2/2*}` in
/// one dimension: the bubble sampled on `(-L, L)` with its true exterior
/// values, plus the closed-form tails `∫_{|x|>L} U (-Δ)^s U = ∫_{|x|>L} U^{2*}`.
pub fn sobolev_estimate(s: f64, half_width: f64, spacing: f64) -> Result<f64> {
    let op = assemble(Arc::new(DiscreteDomain::interval(half_width, spacing)?), s)?;
    let bubble = crate::bubble::BubbleProfile::standard(1, s);
    let u = Field::from_fn(op.domain().clone(), |x| bubble.eval(x));
    bubble_exterior_rayleigh(&op, &u)
}

/// Critical Rayleigh quotient of the function equal to `f` on the interior
/// nodes and to the standard bubble `U` outside `Ω` (one dimension).
pub fn bubble_exterior_rayleigh(op: &FracOperator, f: &Field) -> Result<f64> {
    let s = op.s();
    let d = op.domain();
    if d.dim() != 1 {
        return Err(Error::domain("bubble exterior data is one-dimensional only"));
    }
    let bubble = crate::bubble::BubbleProfile::standard(1, s);
    let half_width = d.size();
    let two_star = 2.0 / (1.0 - 2.0 * s);
    // with δ = f - U on Ω: ‖U + δ‖² = ‖U‖² + 2⟨(-Δ)^s U, δ⟩ + ‖δ‖²
    let u = Field::from_fn(d.clone(), |x| bubble.eval(x));
    let au = op.apply_with_exterior(&u, |x| bubble.eval(&[x]), 4.0 * half_width)?;
    let delta = f.axpy(-1.0, &u)?;
    // U^{2*} = c^{2*} / (1 + x²) in one dimension
    let tail = 2.0 * bubble.amplitude.powf(two_star) * (0.5 * std::f64::consts::PI - half_width.atan());
    let norm = au.dot(&u.axpy(2.0, &delta)?)? + gagliardo_energy(op, &delta)? + tail;
    let mass = f.integral_abs_pow(two_star) + tail;
    Ok(norm / mass.powf(2.0 / two_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_interval(h: f64) -> Arc<DiscreteDomain> {
        Arc::new(DiscreteDomain::interval(1.0, h).unwrap())
    }

    fn random_field(d: &Arc<DiscreteDomain>, rng: &mut ChaCha8Rng) -> Field {
        let v = (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::new(d.clone(), v).unwrap()
    }

    #[test]
    fn lattice_is_lexicographic_and_interior() {
        let d = DiscreteDomain::ball(2, 1.0, 0.125).unwrap();
        let lat = d.lattice();
        assert!(lat.windows(2).all(|w| w[0] < w[1]));
        for i in 0..d.len() {
            assert!(d.distance_to_boundary(&d.point(i)) > 0.0);
        }
        let iv = DiscreteDomain::interval(1.0, 0.25).unwrap();
        assert_eq!(iv.len(), 7);
        assert_eq!(iv.index_of([0, 0]), Some(3));
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(DiscreteDomain::interval(1.0, 0.6).is_ok());
        assert!(DiscreteDomain::interval(1.0, 1.0).is_err());
        assert!(DiscreteDomain::interval(1.0, 0.0).is_err());
        assert!(DiscreteDomain::new(DomainKind::Interval, 2, 1.0, 0.1).is_err());
        let d = Arc::new(DiscreteDomain::interval(1.0, 0.25).unwrap());
        assert!(assemble(d.clone(), 1.0).is_err());
        assert!(assemble(d, 0.0).is_err());
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let d = unit_interval(1.0 / 16.0);
        let op = assemble(d.clone(), 0.3).unwrap();
        let z = op.apply(&Field::zeros(d.clone())).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
        assert_eq!(gagliardo_energy(&op, &Field::zeros(d)).unwrap(), 0.0);
    }

    #[test]
    fn linear_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [
            unit_interval(1.0 / 32.0),
            Arc::new(DiscreteDomain::ball(2, 1.0, 0.2).unwrap()),
        ] {
            let op = assemble(d.clone(), 0.4).unwrap();
            let f = random_field(&d, &mut rng);
            let g = random_field(&d, &mut rng);
            let af = op.apply(&f).unwrap();
            let a2f = op.apply(&f.scaled(2.5)).unwrap();
            for (x, y) in af.values.iter().zip(&a2f.values) {
                assert!((2.5 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
            let lhs = af.dot(&g).unwrap();
            let rhs = f.dot(&op.apply(&g).unwrap()).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()));
        }
    }

    #[test]
    fn positive_definite_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = unit_interval(1.0 / 32.0);
        let op = assemble(d.clone(), 0.25).unwrap();
        for _ in 0..20 {
            let f = random_field(&d, &mut rng);
            assert!(gagliardo_energy(&op, &f).unwrap() > 0.0);
        }
    }

    #[test]
    fn m_matrix_structure_and_maximum_principle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (d, s) in [
            (unit_interval(1.0 / 32.0), 0.25),
            (unit_interval(1.0 / 32.0), 0.75),
            (Arc::new(DiscreteDomain::cube(2, 1.0, 0.2).unwrap()), 0.5),
        ] {
            let op = assemble(d.clone(), s).unwrap();
            op.check_m_matrix().unwrap();
            let n = op.len();
            for i in 0..n {
                let row: f64 = (0..n).map(|j| op.entry(i, j)).sum();
                assert!(row > 0.0);
                for j in 0..n {
                    if i != j {
                        assert!(op.entry(i, j) <= 0.0);
                        assert_eq!(op.entry(i, j), op.entry(j, i));
                    }
                }
            }
            for _ in 0..10 {
                let rhs = Field::new(d.clone(), (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
                let u = op.solve(&rhs).unwrap();
                assert!(u.min() >= 0.0);
            }
        }
    }

    #[test]
    fn gagliardo_energy_is_quadratic() {
        let d = unit_interval(1.0 / 16.0);
        let op = assemble(d.clone(), 0.5).unwrap();
        let f = Field::from_fn(d, |x| 1.0 - x[0] * x[0]);
        let e1 = gagliardo_energy(&op, &f).unwrap();
        let e3 = gagliardo_energy(&op, &f.scaled(-3.0)).unwrap();
        assert!((e3 - 9.0 * e1).abs() < 1e-12 * e3);
    }

    #[test]
    fn total_weight_is_the_infinite_lattice_sum() {
        // Σ_{j≠0} w(j) summed directly far out, plus the continuous tail
        let s = 0.3;
        let h = 0.1;
        let ext = 4000;
        let w = build_weights(1, s, h, ext);
        let c = special::frac_laplacian_constant(1, s) * h.powf(-2.0 * s);
        let partial: f64 = 2.0 * w.table[1..].iter().sum::<f64>();
        let tail = 2.0 * c * (ext as f64 + 0.5).powf(-2.0 * s) / (2.0 * s);
        assert!(((partial + tail) - w.total).abs() < 1e-6 * w.total);
    }

    #[test]
    fn two_dimensional_weights_sum_to_total() {
        let s = 0.5;
        let ext = 60;
        let w = build_weights(2, s, 1.0, ext);
        let mut partial = 0.0;
        for a in -(ext as i64)..=ext as i64 {
            for b in -(ext as i64)..=ext as i64 {
                if a != 0 || b != 0 {
                    partial += w.get([a, b]);
                }
            }
        }
        // tail outside the square of half-width ext+1/2 by the continuous kernel
        let c = special::frac_laplacian_constant(2, s);
        let q4 = std::f64::consts::FRAC_PI_4;
        let r0 = ext as f64 + 0.5;
        let tail = 8.0 / (2.0 * s) * r0.powf(-2.0 * s)
            * quad::adaptive(|t: f64| t.cos().powf(2.0 * s), 0.0, q4, 1e-14).value;
        assert!(((partial + c * tail) - w.total).abs() < 2e-4 * w.total);
    }

    #[test]
    fn field_csv_round_trip() {
        let d = Arc::new(DiscreteDomain::ball(2, 1.0, 0.25).unwrap());
        let f = Field::from_fn(d, |x| (x[0] + 2.0 * x[1]).sin() / 3.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# domain=ball h=2.5000000000000000e-1 n="));
        let g = Field::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn domain_mismatch_is_an_error() {
        let a = unit_interval(1.0 / 8.0);
        let b = unit_interval(1.0 / 16.0);
        let op = assemble(a, 0.5).unwrap();
        assert!(matches!(op.apply(&Field::zeros(b)), Err(Error::Mismatch(_))));
    }

    #[test]
    fn energy_s_is_scale_invariant() {
        let d = unit_interval(1.0 / 32.0);
        let op = assemble(d.clone(), 0.25).unwrap();
        let e = Exponents::critical(1, 0.25, 5.0).unwrap();
        let f = Field::from_fn(d.clone(), |x| (1.0 - x[0] * x[0]).powf(0.25) * (1.0 + 0.3 * x[0]));
        let base = energy_s(&op, &f, &e).unwrap();
        for a in [-2.0, 0.1, 7.0] {
            assert!((energy_s(&op, &f.scaled(a), &e).unwrap() - base).abs() < 1e-12 * base);
        }
        assert!(energy_s(&op, &Field::zeros(d), &e).is_err());
    }

    #[test]
    fn energy_f_on_constraint_set_equals_f_hat() {
        let d = unit_interval(1.0 / 32.0);
        let op = assemble(d.clone(), 0.25).unwrap();
        let e = Exponents::new(1, 0.25, 5.0, 7.0).unwrap();
        let f = Field::from_fn(d.clone(), |x| (1.0 - x[0] * x[0]).max(0.0));
        let f = f.scaled(f.integral_abs_pow(e.p + 1.0).powf(-1.0 / (e.p + 1.0)));
        assert!((f.integral_abs_pow(e.p + 1.0) - 1.0).abs() < 1e-13);
        let a = energy_f(&op, &f, &e).unwrap();
        let b = energy_f_hat(&op, &f, &e).unwrap();
        assert!((a - b).abs() < 1e-12 * b);
        assert!(energy_f(&op, &Field::zeros(d), &e).is_err());
    }

    #[test]
    fn larger_q_lowers_the_nonlinear_term_below_one() {
        let d = unit_interval(1.0 / 32.0);
        let f = Field::from_fn(d, |x| 0.9 * (1.0 - x[0] * x[0]));
        assert!(f.sup_norm() < 1.0);
        let q = 5.0;
        assert!(f.integral_abs_pow(2.0 * q + 1.0) / (2.0 * q + 1.0) < f.integral_abs_pow(q + 1.0) / (q + 1.0));
    }

    fn sobolev_constant(s: f64) -> f64 {
        crate::bubble::integral_u_two_star(1, s).unwrap().powf(2.0 * s)
    }

    #[test]
    fn gaussian_matches_fourier_oracle() {
        let s = 0.5;
        // (-Δ)^s e^{-x²} at 0 = (1/√π) ∫_0^∞ ξ^{2s} e^{-ξ²/4} dξ
        let oracle = crate::quad::half_line(|xi| xi.powf(2.0 * s) * (-0.25 * xi * xi).exp(), 1e-14).value
            / std::f64::consts::PI.sqrt();
        let d = Arc::new(DiscreteDomain::interval(16.0, 1.0 / 64.0).unwrap());
        let op = assemble(d.clone(), s).unwrap();
        let g = op.apply(&Field::from_fn(d.clone(), |x| (-x[0] * x[0]).exp())).unwrap();
        let mid = d.index_of([0, 0]).unwrap();
        assert!(((g.values[mid] - oracle) / oracle).abs() < 0.02);
    }

    #[test]
    fn bubble_residual_shrinks_under_refinement() {
        let s = 0.25;
        let bubble = crate::bubble::BubbleProfile::standard(1, s);
        let p = special::critical_p(1, s);
        let mut errs = Vec::new();
        for inv_h in [16.0, 32.0, 64.0] {
            let d = Arc::new(DiscreteDomain::interval(16.0, 1.0 / inv_h).unwrap());
            let op = assemble(d.clone(), s).unwrap();
            let u = Field::from_fn(d.clone(), |x| bubble.eval(x));
            let au = op.apply_with_exterior(&u, |x| bubble.eval(&[x]), 64.0).unwrap();
            let mut worst = 0.0f64;
            for i in 0..d.len() {
                if d.point(i)[0].abs() <= 4.0 {
                    worst = worst.max((au.values[i] - u.values[i].powf(p)).abs());
                }
            }
            errs.push(worst / bubble.amplitude.powf(p));
        }
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
        assert!(errs[2] < 0.05);
    }

    #[test]
    fn bubble_rayleigh_quotient_approaches_the_sobolev_constant() {
        let s = 0.25;
        let exact = sobolev_constant(s);
        let est: Vec<f64> = [8.0, 16.0, 32.0]
            .iter()
            .map(|inv_h| sobolev_estimate(s, 16.0, 1.0 / inv_h).unwrap())
            .collect();
        let d1 = (est[1] - est[0]).abs();
        let d2 = (est[2] - est[1]).abs();
        assert!(d2 < d1, "{est:?}");
        assert!(((est[2] - exact) / exact).abs() < 0.01, "{est:?} vs {exact}");
    }

    #[test]
    fn rayleigh_quotient_is_bounded_below_by_the_sobolev_estimate() {
        let s = 0.25;
        let e = Exponents::critical(1, s, 5.0).unwrap();
        let floor = sobolev_estimate(s, 16.0, 1.0 / 32.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = unit_interval(1.0 / 64.0);
        let op = assemble(d.clone(), s).unwrap();
        for _ in 0..20 {
            let f = random_field(&d, &mut rng);
            assert!(energy_s(&op, &f, &e).unwrap() >= floor);
        }
        for width in [0.05, 0.1, 0.3, 1.0] {
            let f = Field::from_fn(d.clone(), |x| (1.0 + x[0] * x[0] / (width * width)).powf(-0.25));
            assert!(energy_s(&op, &f, &e).unwrap() >= floor);
        }
    }

    #[test]
    fn sampled_bubble_is_a_local_minimum_of_the_rayleigh_quotient() {
        let s = 0.25;
        let bubble = crate::bubble::BubbleProfile::standard(1, s);
        let d = Arc::new(DiscreteDomain::interval(16.0, 1.0 / 16.0).unwrap());
        let op = assemble(d.clone(), s).unwrap();
        let u = Field::from_fn(d.clone(), |x| bubble.eval(x));
        let base = bubble_exterior_rayleigh(&op, &u).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let bumps: Vec<(f64, f64, f64)> = (0..4)
                .map(|_| (rng.gen_range(-4.0..4.0), rng.gen_range(0.3..2.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let delta = Field::from_fn(d.clone(), |x| {
                bumps.iter().map(|(c, w, a)| a * (-((x[0] - c) / w).powi(2)).exp()).sum()
            });
            let delta = delta.scaled(0.1 / delta.dot(&delta).unwrap().sqrt());
            let perturbed = u.axpy(1.0, &delta).unwrap();
            assert!(bubble_exterior_rayleigh(&op, &perturbed).unwrap() >= base);
        }
    }

    #[test]
    fn enlarging_the_box_respects_the_tail_bound() {
        let s = 0.3;
        let h = 1.0 / 32.0;
        let small = unit_interval(h);
        let big = Arc::new(DiscreteDomain::interval(3.0, h).unwrap());
        let f = Field::from_fn(small.clone(), |x| (1.0 - x[0] * x[0]) * (1.0 + x[0]));
        let lifted = Field::from_fn(big.clone(), |x| {
            small.index_of([(x[0] / h).round() as i64, 0]).map(|i| f.values[i]).unwrap_or(0.0)
        });
        let a_small = assemble(small.clone(), s).unwrap().apply(&f).unwrap();
        let a_big = assemble(big.clone(), s).unwrap().apply(&lifted).unwrap();
        let c = special::frac_laplacian_constant(1, s);
        let l1 = f.integral_abs_pow(1.0);
        for i in 0..big.len() {
            let x = big.point(i)[0];
            match small.index_of(big.lattice()[i]) {
                Some(j) => assert!((a_big.values[i] - a_small.values[j]).abs() <= 1e-12 * a_small.sup_norm()),
                None => {
                    let dist = x.abs() - 1.0;
                    if dist >= 4.0 * h {
                        assert!(a_big.values[i].abs() <= 1.05 * c * l1 * dist.powf(-1.0 - 2.0 * s));
                    }
                }
            }
        }
    }
}
