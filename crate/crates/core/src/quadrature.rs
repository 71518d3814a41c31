//! Gauss–Legendre rules, adaptive panel splitting, and the singular
//! integrals needed by the kernel identities.

use std::sync::OnceLock;

/// A Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 1..=n {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
                }
                dp = nf * (z * p1 - p2) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        r * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(c + r * x))
            .sum::<f64>()
    }
}

/// Shared 16-point rule used by the adaptive integrator.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

/// Shared 24-point rule, used where integrands are polynomial times a
/// moderate oscillation.
pub fn gl24() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(24))
}

/// Default absolute tolerance for adaptive quadrature.
pub const ADAPTIVE_TOL: f64 = 1e-10;

const MAX_DEPTH: u32 = 48;

/// Adaptive Gauss–Legendre quadrature with panel bisection.
///
/// A panel is accepted once the 16-point estimate on it agrees with the sum
/// over its two halves to within its share of `tol` (proportional to width).
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_with_breaks(f, &[a, b], tol)
}

/// Like [`adaptive`] but starts from the panels delimited by `breaks`
/// (sorted; the first and last entries are the integration limits).
/// Breakpoints outside `[a, b]` are ignored.
pub fn adaptive_with_breaks<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: f64) -> f64 {
    assert!(breaks.len() >= 2);
    let a = breaks[0];
    let b = *breaks.last().unwrap();
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| *x > lo && *x < hi)
        .collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();

    let rule = gl16();
    let width = hi - lo;
    let mut total = 0.0;
    let mut stack: Vec<(f64, f64, f64, u32)> = cuts
        .windows(2)
        .map(|w| (w[0], w[1], rule.integrate(w[0], w[1], &f), 0))
        .collect();
    while let Some((l, r, whole, depth)) = stack.pop() {
        let m = 0.5 * (l + r);
        let left = rule.integrate(l, m, &f);
        let right = rule.integrate(m, r, &f);
        let refined = left + right;
        // Never ask a panel for more than rounding allows; on wide domains the
        // width-proportional share can fall far below ulp(refined).
        let share = (tol * (r - l) / width).max(64.0 * f64::EPSILON * refined.abs());
        if (refined - whole).abs() <= share || depth >= MAX_DEPTH || m <= l || m >= r {
            total += refined;
        } else {
            stack.push((l, m, left, depth + 1));
            stack.push((m, r, right, depth + 1));
        }
    }
    sign * total
}

/// Composite rule: `panels` equal panels of an `order`-point Gauss–Legendre rule.
#[derive(Debug, Clone)]
pub struct Composite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Composite {
    pub fn uniform(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let rule = GaussLegendre::new(order);
        let step = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let l = a + step * p as f64;
            let c = l + 0.5 * step;
            for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
                nodes.push(c + 0.5 * step * x);
                weights.push(0.5 * step * w);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `∫_a^b f(t) / sqrt((t-a)(b-t)) dt` through `t = c - r cos θ`, which turns
/// the inverse-square-root endpoint singularities into a smooth integrand.
pub fn chebyshev_weighted<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    adaptive(
        |theta: f64| f(c - r * theta.cos()),
        0.0,
        std::f64::consts::PI,
        tol,
    )
}

/// Cauchy principal value `PV ∫_a^b g(t) / (t - x0) dt` for smooth `g` and
/// `a < x0 < b`, by subtracting the singular part.
pub fn principal_value<F: Fn(f64) -> f64>(g: F, a: f64, b: f64, x0: f64, tol: f64) -> f64 {
    debug_assert!(a < x0 && x0 < b);
    let g0 = g(x0);
    let regular = adaptive_with_breaks(
        |t: f64| {
            let d = t - x0;
            if d == 0.0 {
                0.0
            } else {
                (g(t) - g0) / d
            }
        },
        &[a, x0, b],
        tol,
    );
    regular + g0 * ((b - x0) / (x0 - a)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(5);
        let v = rule.integrate(-1.0, 2.0, |x| x.powi(9) - 3.0 * x.powi(4));
        let exact = (2f64.powi(10) - 1.0) / 10.0 - 3.0 * (2f64.powi(5) + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-11, "{v} vs {exact}");
        let sum: f64 = rule.weights().iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_sharp_peak() {
        let y = 1e-3;
        let v = adaptive(
            |x| y / (std::f64::consts::PI * (x * x + y * y)),
            -1.0,
            1.0,
            1e-12,
        );
        let exact = 2.0 / std::f64::consts::PI * (1.0 / y).atan();
        assert!((v - exact).abs() < 1e-10);
    }

    #[test]
    fn adaptive_reversed_limits_flip_sign() {
        let v = adaptive(|x| x.exp(), 1.0, 0.0, 1e-12);
        assert!((v + (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn chebyshev_weight_integrates_arcsine_density() {
        // ∫_a^b dt / sqrt((t-a)(b-t)) = π
        let v = chebyshev_weighted(|_| 1.0, -0.3, 2.0, 1e-12);
        assert!((v - std::f64::consts::PI).abs() < 1e-11);
    }

    #[test]
    fn principal_value_of_reciprocal() {
        // PV ∫_{-1}^{2} dt/(t - 0.5) = ln(1.5/1.5) = 0 ; with g(t)=t: ∫ t/(t-x0) = (b-a) + x0 ln(...)
        let v = principal_value(|t| t, -1.0, 3.0, 0.5, 1e-12);
        let exact = 4.0 + 0.5 * (2.5f64 / 1.5).ln();
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }
}
