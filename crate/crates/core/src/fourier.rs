//! Fourier coefficients on `K = [-q, q]` from uniformly spaced samples.
//!
//! Samples are interpolated by piecewise cubics (four-node Lagrange stencils,
//! one-sided at the ends) and the interpolant is integrated against
//! `exp(-i n π t / q) / sqrt(2q)` exactly. The interior weights factor into a
//! single attenuation `W(θ)` times a plain DFT, so one FFT of length `M`
//! serves all modes; the eight end nodes get explicit corrections. The rule
//! is exact for cubics and has `O(Δ⁴)` error for smooth data, where a plain
//! midpoint or trapezoid sum would stall at `O(Δ²)` on non-periodic data.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::quadrature::gl24;

/// Number of end nodes on each side carrying an explicit correction.
const END: usize = 4;

/// Endpoint-corrected cubic Fourier quadrature for modes `-N..=N` on a grid of
/// `M` intervals.
pub struct FourierQuadrature {
    q: f64,
    order: usize,
    intervals: usize,
    attenuation: Vec<f64>,
    head: Vec<[Complex64; END]>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierQuadrature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierQuadrature")
            .field("q", &self.q)
            .field("order", &self.order)
            .field("intervals", &self.intervals)
            .finish()
    }
}

fn lagrange(nodes: [f64; 4], j: usize, u: f64) -> f64 {
    let mut r = 1.0;
    for (m, &x) in nodes.iter().enumerate() {
        if m != j {
            r *= (u - x) / (nodes[j] - x);
        }
    }
    r
}

/// `∫_k^{k+1} ℓ_j(u) e^{-iθu} du` for each of the four stencil nodes of
/// interval `k` (stencil starts at `lo`). Integration runs in the local
/// variable `u - k` so phases stay small.
fn interval_weights(k: usize, lo: usize, theta: f64) -> [Complex64; 4] {
    let rule = gl24();
    let nodes = [0.0, 1.0, 2.0, 3.0].map(|x: f64| x + lo as f64 - k as f64);
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        let v = 0.5 + 0.5 * x;
        let ph = Complex64::from_polar(0.5 * w, -theta * v);
        for (j, o) in out.iter_mut().enumerate() {
            *o += ph * lagrange(nodes, j, v);
        }
    }
    let shift = Complex64::from_polar(1.0, -theta * k as f64);
    out.map(|z| z * shift)
}

fn stencil_start(k: usize, m: usize) -> usize {
    k.saturating_sub(1).min(m - 3)
}

/// Interior attenuation `W(θ)`: the integral of the cubic cardinal function
/// of an interior node against `e^{-iθu}`, relative to that node.
fn attenuation(theta: f64) -> f64 {
    // Node 0 of a doubly infinite grid; intervals -2..=1 use stencils k-1..k+2.
    let rule = gl24();
    let mut acc = Complex64::new(0.0, 0.0);
    for k in -2i32..=1 {
        let nodes = [-1.0, 0.0, 1.0, 2.0];
        let j = (-(k - 1)) as usize; // position of node 0 in stencil k-1..k+2
        for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
            let v = 0.5 + 0.5 * x;
            acc += Complex64::from_polar(0.5 * w, -theta * (v + k as f64)) * lagrange(nodes, j, v);
        }
    }
    // The cardinal function is even, so the transform is real.
    acc.re
}

/// Correction for nodes `0..4`: exact weight minus `W(θ) e^{-iθj}`.
fn head_corrections(theta: f64, w: f64, m: usize) -> [Complex64; END] {
    let mut exact = [Complex64::new(0.0, 0.0); END];
    for k in 0..(END + 2) {
        let lo = stencil_start(k, m);
        let iw = interval_weights(k, lo, theta);
        for (i, z) in iw.iter().enumerate() {
            let node = lo + i;
            if node < END {
                exact[node] += z;
            }
        }
    }
    let mut out = exact;
    for (j, o) in out.iter_mut().enumerate() {
        *o -= Complex64::from_polar(w, -theta * j as f64);
    }
    out
}

impl FourierQuadrature {
    /// Builds the rule for modes `-order..=order` on `intervals` equal
    /// sub-intervals of `[-q, q]`.
    pub fn new(q: f64, order: usize, intervals: usize) -> Result<Self> {
        if !(q > 0.0) {
            return Err(Error::Domain(format!(
                "half-length must be positive, got {q}"
            )));
        }
        if intervals < 8 || intervals < 2 * order + 2 {
            return Err(Error::Contract(format!(
                "need at least max(8, 2N+2) intervals for N={order}, got {intervals}"
            )));
        }
        let m = intervals;
        let mut attenuation_v = Vec::with_capacity(2 * order + 1);
        let mut head = Vec::with_capacity(2 * order + 1);
        for n in -(order as i64)..=(order as i64) {
            let theta = 2.0 * std::f64::consts::PI * n as f64 / m as f64;
            let w = attenuation(theta);
            attenuation_v.push(w);
            head.push(head_corrections(theta, w, m));
        }
        let fft = FftPlanner::new().plan_fft_forward(m);
        Ok(Self {
            q,
            order,
            intervals,
            attenuation: attenuation_v,
            head,
            fft,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn half_length(&self) -> f64 {
        self.q
    }

    pub fn step(&self) -> f64 {
        2.0 * self.q / self.intervals as f64
    }

    /// The `M + 1` sample abscissae `-q + jΔ`.
    pub fn grid(&self) -> Vec<f64> {
        let d = self.step();
        (0..=self.intervals)
            .map(|j| {
                if j == self.intervals {
                    self.q
                } else {
                    -self.q + d * j as f64
                }
            })
            .collect()
    }

    /// Coefficients `∫_K f(t) conj(g_n(t)) dt` for `n = -N..=N` (index `n + N`).
    pub fn coefficients(&self, samples: &[Complex64]) -> Vec<Complex64> {
        let mut scratch = Vec::new();
        self.coefficients_with(samples, &mut scratch)
    }

    /// As [`coefficients`](Self::coefficients) for real samples.
    pub fn coefficients_real(&self, samples: &[f64]) -> Vec<Complex64> {
        let z: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.coefficients(&z)
    }

    /// Variant reusing a caller-owned buffer; used in tight loops.
    pub fn coefficients_with(
        &self,
        samples: &[Complex64],
        buf: &mut Vec<Complex64>,
    ) -> Vec<Complex64> {
        let m = self.intervals;
        assert_eq!(samples.len(), m + 1, "expected M+1 samples");
        buf.clear();
        buf.extend_from_slice(&samples[..m]);
        buf[0] += samples[m];
        self.fft.process(buf);

        let scale = self.step() / (2.0 * self.q).sqrt();
        let n0 = self.order as i64;
        (0..=2 * self.order)
            .map(|idx| {
                let n = idx as i64 - n0;
                let bin = n.rem_euclid(m as i64) as usize;
                let mut v = buf[bin] * self.attenuation[idx];
                let corr = &self.head[idx];
                for j in 0..END {
                    v += corr[j] * samples[j];
                    // Tail weights mirror the head ones: conj for real cardinal functions.
                    v += corr[j].conj() * samples[m - j];
                }
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                v * (sign * scale)
            })
            .collect()
    }
}

/// Smallest power of two that is at least `x`.
pub fn next_pow2(x: usize) -> usize {
    x.max(1).next_power_of_two()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Composite;

    fn direct(q: f64, n: i64, f: impl Fn(f64) -> f64) -> Complex64 {
        let rule = Composite::uniform(-q, q, 200, 20);
        let w = n as f64 * std::f64::consts::PI / q;
        let re = rule.integrate(|t| f(t) * (w * t).cos());
        let im = rule.integrate(|t| -f(t) * (w * t).sin());
        Complex64::new(re, im) / (2.0 * q).sqrt()
    }

    #[test]
    fn attenuation_matches_closed_form() {
        for &t in &[0.3f64, 1.0, 2.5] {
            let closed =
                (6.0 + t * t) / (3.0 * t.powi(4)) * (3.0 - 4.0 * t.cos() + (2.0 * t).cos());
            assert!((attenuation(t) - closed).abs() < 1e-12, "{t}");
        }
        assert!((attenuation(0.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_frequency_corrections_are_classical() {
        let c = head_corrections(0.0, 1.0, 64);
        let expect = [-2.0 / 3.0, 7.0 / 24.0, -1.0 / 6.0, 1.0 / 24.0];
        for (z, e) in c.iter().zip(expect) {
            assert!((z.re - e).abs() < 1e-13 && z.im.abs() < 1e-14);
        }
    }

    #[test]
    fn exact_for_cubics() {
        let q = 1.5;
        let fq = FourierQuadrature::new(q, 5, 16).unwrap();
        let f = |t: f64| 0.3 - t + 2.0 * t * t - 0.7 * t.powi(3);
        let s: Vec<f64> = fq.grid().iter().map(|&t| f(t)).collect();
        let c = fq.coefficients_real(&s);
        for n in -5..=5i64 {
            let d = direct(q, n, f);
            assert!((c[(n + 5) as usize] - d).norm() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn smooth_nonperiodic_data_converge_fast() {
        let q = 1.5;
        let f = |t: f64| t.exp() * (3.0 * t).cos();
        let fq = FourierQuadrature::new(q, 32, 1024).unwrap();
        let s: Vec<f64> = fq.grid().iter().map(|&t| f(t)).collect();
        let c = fq.coefficients_real(&s);
        for n in [-32i64, -7, 0, 3, 32] {
            let d = direct(q, n, f);
            assert!((c[(n + 32) as usize] - d).norm() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn rejects_coarse_grid() {
        assert!(FourierQuadrature::new(1.0, 10, 16).is_err());
        assert!(FourierQuadrature::new(1.0, 1, 4).is_err());
    }
}
