//! The forward operator `b₂`, its adjoint `b₂*`, and the piecewise-constant
//! magnetizations they act on.
//!
//! For `m = (m₁, m₂)` on `S`, the vertical field at height `h` is
//! `b₂[m] = -(P_h' ⋆ m₁ - σ Q_h' ⋆ m₂)` restricted to `K`, where `σ` is the
//! sign of the [`VerticalAxis`](crate::geometry::VerticalAxis) convention.
//! The adjoint maps `φ` on `K` to
//! `b₂*[φ](t) = (∫_K P_h'(t-x) φ(x) dx, σ ∫_K Q_h'(t-x) φ(x) dx)` on `S`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{next_pow2, FourierQuadrature};
use crate::geometry::{Geometry, Interval};
use crate::kernels::raw;
use crate::quadrature::{adaptive_with_breaks, Composite, ADAPTIVE_TOL};
use crate::spectral::FourierVector;

/// A constant value on an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub interval: Interval,
    pub value: f64,
}

impl Piece {
    pub fn new(lo: f64, hi: f64, value: f64) -> Result<Self> {
        Ok(Self {
            interval: Interval::new(lo, hi)?,
            value,
        })
    }
}

impl Serialize for Piece {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.interval.lo(), self.interval.hi(), self.value].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Piece {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [lo, hi, v] = <[f64; 3]>::deserialize(d)?;
        Piece::new(lo, hi, v).map_err(serde::de::Error::custom)
    }
}

/// Two piecewise-constant components on `S`, zero off the listed pieces.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Magnetization {
    #[serde(default)]
    pub pieces1: Vec<Piece>,
    #[serde(default)]
    pub pieces2: Vec<Piece>,
}

fn refine(pieces: &[(Interval, f64)]) -> Vec<Piece> {
    let mut cuts: Vec<f64> = pieces.iter().flat_map(|(j, _)| [j.lo(), j.hi()]).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut out: Vec<Piece> = Vec::new();
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let v: f64 = pieces
            .iter()
            .filter(|(j, _)| j.lo() <= mid && mid <= j.hi())
            .map(|(_, c)| c)
            .sum();
        if v == 0.0 {
            continue;
        }
        match out.last_mut() {
            Some(p) if p.value == v && p.interval.hi() == w[0] => {
                p.interval = Interval::new(p.interval.lo(), w[1]).unwrap();
            }
            _ => out.push(Piece::new(w[0], w[1], v).unwrap()),
        }
    }
    out
}

impl Magnetization {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds from `(lo, hi, value)` triples.
    pub fn from_triples(p1: &[(f64, f64, f64)], p2: &[(f64, f64, f64)]) -> Result<Self> {
        let conv = |v: &[(f64, f64, f64)]| -> Result<Vec<Piece>> {
            v.iter().map(|&(a, b, c)| Piece::new(a, b, c)).collect()
        };
        Ok(Self {
            pieces1: conv(p1)?,
            pieces2: conv(p2)?,
        })
    }

    /// `e₁ = (χ_S, 0)`.
    pub fn e1(geometry: &Geometry) -> Self {
        Self {
            pieces1: vec![Piece {
                interval: geometry.source(),
                value: 1.0,
            }],
            pieces2: vec![],
        }
    }

    /// `e₂ = (0, χ_S)`.
    pub fn e2(geometry: &Geometry) -> Self {
        Self {
            pieces1: vec![],
            pieces2: vec![Piece {
                interval: geometry.source(),
                value: 1.0,
            }],
        }
    }

    /// Checks that pieces lie in `S` and do not overlap within a component.
    pub fn validate(&self, geometry: &Geometry) -> Result<()> {
        let s = geometry.source();
        for (name, comp) in [("m1", &self.pieces1), ("m2", &self.pieces2)] {
            for (i, p) in comp.iter().enumerate() {
                if !p.value.is_finite() {
                    return Err(Error::Contract(format!(
                        "{name} piece {i} has a non-finite value"
                    )));
                }
                if !s.covers(&p.interval) {
                    return Err(Error::Contract(format!(
                        "{name} piece [{}, {}] is not contained in S = [{}, {}]",
                        p.interval.lo(),
                        p.interval.hi(),
                        s.lo(),
                        s.hi()
                    )));
                }
                for q in &comp[..i] {
                    if p.interval.overlaps(&q.interval) {
                        return Err(Error::Contract(format!(
                            "{name} pieces [{}, {}] and [{}, {}] overlap",
                            q.interval.lo(),
                            q.interval.hi(),
                            p.interval.lo(),
                            p.interval.hi()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `a·self + b·other`, re-partitioned into non-overlapping pieces.
    pub fn linear_combination(&self, a: f64, other: &Magnetization, b: f64) -> Magnetization {
        let comb = |x: &[Piece], y: &[Piece]| {
            let all: Vec<(Interval, f64)> = x
                .iter()
                .map(|p| (p.interval, a * p.value))
                .chain(y.iter().map(|p| (p.interval, b * p.value)))
                .collect();
            refine(&all)
        };
        Magnetization {
            pieces1: comb(&self.pieces1, &other.pieces1),
            pieces2: comb(&self.pieces2, &other.pieces2),
        }
    }

    /// Net moments `(∫ m₁, ∫ m₂)`, exact.
    pub fn moments(&self) -> (f64, f64) {
        let f = |v: &[Piece]| v.iter().map(|p| p.value * p.interval.len()).sum();
        (f(&self.pieces1), f(&self.pieces2))
    }

    /// `‖m‖²_{L²(S,ℝ²)}`, exact.
    pub fn norm_sq(&self) -> f64 {
        self.pieces1
            .iter()
            .chain(&self.pieces2)
            .map(|p| p.value * p.value * p.interval.len())
            .sum()
    }

    /// Component values at `t` (pieces are treated as closed on the left).
    pub fn value_at(&self, t: f64) -> (f64, f64) {
        let f = |v: &[Piece]| {
            v.iter()
                .filter(|p| t >= p.interval.lo() && t < p.interval.hi())
                .map(|p| p.value)
                .sum()
        };
        (f(&self.pieces1), f(&self.pieces2))
    }

    /// All piece endpoints, sorted and de-duplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .pieces1
            .iter()
            .chain(&self.pieces2)
            .flat_map(|p| [p.interval.lo(), p.interval.hi()])
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }

    pub fn is_zero(&self) -> bool {
        self.pieces1
            .iter()
            .chain(&self.pieces2)
            .all(|p| p.value == 0.0)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("magnetization: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Target of a best-approximation problem: `b₂*[φ]` should approach it.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    E1,
    E2,
    Custom(Magnetization),
}

impl Target {
    pub fn magnetization(&self, geometry: &Geometry) -> Result<Magnetization> {
        Ok(match self {
            Target::E1 => Magnetization::e1(geometry),
            Target::E2 => Magnetization::e2(geometry),
            Target::Custom(m) => {
                m.validate(geometry)?;
                m.clone()
            }
        })
    }

    /// `‖e‖²_{L²(S,ℝ²)}`.
    pub fn norm_sq(&self, geometry: &Geometry) -> Result<f64> {
        Ok(self.magnetization(geometry)?.norm_sq())
    }

    pub fn label(&self) -> &'static str {
        match self {
            Target::E1 => "e1",
            Target::E2 => "e2",
            Target::Custom(_) => "custom",
        }
    }
}

#[inline]
fn field_unchecked(m: &Magnetization, geometry: &Geometry, x: f64) -> f64 {
    let h = geometry.h;
    let sigma = geometry.axis.sign();
    let mut v = 0.0;
    for p in &m.pieces1 {
        v -= p.value * raw::conv_dp(x, h, p.interval.lo(), p.interval.hi());
    }
    for p in &m.pieces2 {
        v += sigma * p.value * raw::conv_dq(x, h, p.interval.lo(), p.interval.hi());
    }
    v
}

/// `b₂[m](x)` in closed form.
pub fn forward_field(m: &Magnetization, geometry: &Geometry, x: f64) -> Result<f64> {
    geometry.validate()?;
    m.validate(geometry)?;
    if !geometry.window().contains(x) {
        return Err(Error::Domain(format!("x={x} lies outside K")));
    }
    Ok(field_unchecked(m, geometry, x))
}

/// `b₂[m]` on many points (no domain restriction; the closed form extends
/// to the whole line).
pub fn forward_field_many(m: &Magnetization, geometry: &Geometry, xs: &[f64]) -> Result<Vec<f64>> {
    geometry.validate()?;
    m.validate(geometry)?;
    Ok(xs
        .iter()
        .map(|&x| field_unchecked(m, geometry, x))
        .collect())
}

/// Number of grid intervals used when transforming closed-form data.
pub fn coefficient_grid(geometry: &Geometry, order: usize) -> usize {
    let feature = (256.0 * geometry.q / geometry.h).ceil() as usize;
    next_pow2((16 * order).max(feature).max(64))
}

/// `⟨b₂[m], g_k⟩_{L²(K)}` for `k = -N..=N`.
pub fn forward_coeffs(
    m: &Magnetization,
    geometry: &Geometry,
    order: usize,
) -> Result<FourierVector> {
    if order == 0 {
        return Err(Error::Contract(
            "truncation order must be at least 1".into(),
        ));
    }
    geometry.validate()?;
    m.validate(geometry)?;
    let fq = FourierQuadrature::new(geometry.q, order, coefficient_grid(geometry, order))?;
    let samples: Vec<f64> = fq
        .grid()
        .iter()
        .map(|&x| field_unchecked(m, geometry, x))
        .collect();
    let mut c = FourierVector::new(order, fq.coefficients_real(&samples))?;
    c.symmetrize();
    Ok(c)
}

/// Field values on a uniform grid over `K̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSamples {
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub values: Vec<f64>,
}

/// Default number of field samples on `K̄`.
pub const DEFAULT_SAMPLES: usize = 4096;

impl FieldSamples {
    /// Samples `b₂[m]` at `points` uniform points on `[-q, q]`.
    pub fn from_magnetization(
        m: &Magnetization,
        geometry: &Geometry,
        points: usize,
    ) -> Result<Self> {
        if points < 2 {
            return Err(Error::Contract("need at least two sample points".into()));
        }
        let xs = uniform_grid(-geometry.q, geometry.q, points);
        Ok(Self {
            grid_lo: -geometry.q,
            grid_hi: geometry.q,
            values: forward_field_many(m, geometry, &xs)?,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.grid_lo, self.grid_hi, self.values.len())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_lo < self.grid_hi) || self.values.len() < 2 {
            return Err(Error::Contract(
                "field samples need an increasing grid with >= 2 points".into(),
            ));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(
                "field samples contain non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Fourier coefficients of the sampled data (cubic-interpolant quadrature).
    pub fn coeffs(&self, geometry: &Geometry, order: usize) -> Result<FourierVector> {
        self.validate()?;
        let tol = 1e-12 * geometry.q;
        if (self.grid_lo + geometry.q).abs() > tol || (self.grid_hi - geometry.q).abs() > tol {
            return Err(Error::Contract(format!(
                "samples cover [{}, {}] but K = [{}, {}]",
                self.grid_lo, self.grid_hi, -geometry.q, geometry.q
            )));
        }
        let fq = FourierQuadrature::new(geometry.q, order, self.values.len() - 1)?;
        let mut c = FourierVector::new(order, fq.coefficients_real(&self.values))?;
        c.symmetrize();
        Ok(c)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("field samples: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let d = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + d * i as f64 })
        .collect()
}

/// `b₂*[φ](t)` by adaptive quadrature over `K`.
pub fn adjoint_eval(phi: &FourierVector, geometry: &Geometry, t: f64) -> (f64, f64) {
    let (q, h) = (geometry.q, geometry.h);
    let mut breaks = vec![-q];
    for x in [t - h, t, t + h] {
        if x > -q && x < q {
            breaks.push(x);
        }
    }
    breaks.push(q);
    let f = |x: f64| phi.eval(x, q).re;
    let a = adaptive_with_breaks(|x| raw::dp(t - x, h) * f(x), &breaks, ADAPTIVE_TOL);
    let b = adaptive_with_breaks(|x| raw::dq(t - x, h) * f(x), &breaks, ADAPTIVE_TOL);
    (a, geometry.axis.sign() * b)
}

/// Bulk evaluator of `b₂*[φ]`: `φ` is sampled once on a composite
/// Gauss–Legendre rule over `K` whose panels resolve both the oscillation of
/// the highest mode and the `h`-wide kernel peak.
#[derive(Debug, Clone)]
pub struct AdjointEvaluator {
    geometry: Geometry,
    nodes: Vec<f64>,
    weighted: Vec<f64>,
}

impl AdjointEvaluator {
    pub fn new(phi: &FourierVector, geometry: &Geometry) -> Self {
        Self::from_fn(|x| phi.eval(x, geometry.q).re, phi.order(), geometry)
    }

    /// Same for an arbitrary real `φ` with oscillation up to mode `order`.
    pub fn from_fn(phi: impl Fn(f64) -> f64, order: usize, geometry: &Geometry) -> Self {
        let q = geometry.q;
        let omega = order.max(1) as f64 * std::f64::consts::PI / q;
        let width = (geometry.h / 8.0).min(4.0 / omega);
        let panels = ((2.0 * q / width).ceil() as usize).max(16);
        let rule = Composite::uniform(-q, q, panels, 16);
        let weighted = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * phi(x))
            .collect();
        Self {
            geometry: *geometry,
            nodes: rule.nodes,
            weighted,
        }
    }

    pub fn eval(&self, t: f64) -> (f64, f64) {
        let h = self.geometry.h;
        let (mut a, mut b) = (0.0, 0.0);
        for (&x, &w) in self.nodes.iter().zip(&self.weighted) {
            a += raw::dp(t - x, h) * w;
            b += raw::dq(t - x, h) * w;
        }
        (a, self.geometry.axis.sign() * b)
    }

    /// `∫_S (b₂*φ)·f dt` for `f` given piecewise by `m` — the pairing
    /// `⟨m, b₂*[φ]⟩_{L²(S,ℝ²)}`.
    pub fn pair(&self, m: &Magnetization) -> f64 {
        let h = self.geometry.h;
        let mut acc = 0.0;
        for (pieces, comp) in [(&m.pieces1, 0usize), (&m.pieces2, 1)] {
            for p in pieces.iter() {
                let panels = ((p.interval.len() / (h / 4.0)).ceil() as usize).max(1);
                let rule = Composite::uniform(p.interval.lo(), p.interval.hi(), panels, 16);
                let v = rule.integrate(|t| {
                    let (a, b) = self.eval(t);
                    if comp == 0 {
                        a
                    } else {
                        b
                    }
                });
                acc += p.value * v;
            }
        }
        acc
    }

    /// `‖b₂*[φ] - e‖_{L²(S,ℝ²)}`.
    pub fn residual(&self, target: &Magnetization) -> f64 {
        let s = self.geometry.s;
        let h = self.geometry.h;
        let mut cuts = vec![-s];
        cuts.extend(
            target
                .breakpoints()
                .into_iter()
                .filter(|&x| x > -s && x < s),
        );
        cuts.push(s);
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi <= lo {
                continue;
            }
            let panels = (((hi - lo) / (h / 4.0)).ceil() as usize).max(1);
            let rule = Composite::uniform(lo, hi, panels, 16);
            acc += rule.integrate(|t| {
                let (a, b) = self.eval(t);
                let (e1, e2) = target.value_at(t);
                (a - e1).powi(2) + (b - e2).powi(2)
            });
        }
        acc.sqrt()
    }
}

/// `‖b₂*[φ] - e‖_{L²(S,ℝ²)}` by quadrature over `S`.
pub fn adjoint_residual(phi: &FourierVector, target: &Target, geometry: &Geometry) -> Result<f64> {
    let e = target.magnetization(geometry)?;
    Ok(AdjointEvaluator::new(phi, geometry).residual(&e))
}

/// Checks `b₂[m] = -∂ₓ a₂[m]` with `a₂[m] = P_h ⋆ (m₁ - σ ℋm₂)`.
///
/// `P_h ⋆ ℋχ_J = Q_h ⋆ χ_J`, so `a₂` is evaluated in closed form; its
/// derivative is taken by fourth-order central differences on a 4096-point
/// grid over `K̄` and compared with the closed-form field at interior nodes.
/// Returns the largest absolute deviation.
pub fn a2_identity_check(m: &Magnetization, geometry: &Geometry) -> Result<f64> {
    geometry.validate()?;
    m.validate(geometry)?;
    let h = geometry.h;
    let sigma = geometry.axis.sign();
    let a2 = |x: f64| {
        let mut v = 0.0;
        for p in &m.pieces1 {
            v += p.value * raw::conv_p(x, h, p.interval.lo(), p.interval.hi());
        }
        for p in &m.pieces2 {
            v -= sigma * p.value * raw::conv_q(x, h, p.interval.lo(), p.interval.hi());
        }
        v
    };
    let xs = uniform_grid(-geometry.q, geometry.q, DEFAULT_SAMPLES);
    let dx = xs[1] - xs[0];
    let vals: Vec<f64> = xs.iter().map(|&x| a2(x)).collect();
    let mut worst: f64 = 0.0;
    for i in 2..xs.len() - 2 {
        let d = (-vals[i + 2] + 8.0 * vals[i + 1] - 8.0 * vals[i - 1] + vals[i - 2]) / (12.0 * dx);
        let b = field_unchecked(m, geometry, xs[i]);
        worst = worst.max((b + d).abs());
    }
    Ok(worst)
}
