//! Poisson and conjugate Poisson kernels of the upper half-plane, their
//! `x`-derivatives, convolutions with interval indicators, and discrete
//! Hilbert transforms.
//!
//! All kernels carry their `1/π` normalization. The checked functions return
//! a domain error for `y <= 0`; the [`raw`] variants skip the check and are
//! what the assembly loops call.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::Interval;
use crate::quadrature::{adaptive, adaptive_with_breaks, ADAPTIVE_TOL};

/// Unchecked kernel evaluations (`y > 0` assumed).
pub mod raw {
    use std::f64::consts::PI;

    #[inline]
    pub fn p(x: f64, y: f64) -> f64 {
        y / (PI * (x * x + y * y))
    }

    #[inline]
    pub fn q(x: f64, y: f64) -> f64 {
        x / (PI * (x * x + y * y))
    }

    #[inline]
    pub fn dp(x: f64, y: f64) -> f64 {
        let r = x * x + y * y;
        -2.0 * x * y / (PI * r * r)
    }

    #[inline]
    pub fn dq(x: f64, y: f64) -> f64 {
        let r = x * x + y * y;
        (y * y - x * x) / (PI * r * r)
    }

    /// `P_y ⋆ χ_[a,b]`.
    #[inline]
    pub fn conv_p(x: f64, y: f64, a: f64, b: f64) -> f64 {
        (((x - a) / y).atan() - ((x - b) / y).atan()) / PI
    }

    /// `Q_y ⋆ χ_[a,b]`.
    #[inline]
    pub fn conv_q(x: f64, y: f64, a: f64, b: f64) -> f64 {
        let ra = (x - a) * (x - a) + y * y;
        let rb = (x - b) * (x - b) + y * y;
        (ra / rb).ln() / (2.0 * PI)
    }

    /// `P_y' ⋆ χ_[a,b] = P_y(x-a) - P_y(x-b)`.
    #[inline]
    pub fn conv_dp(x: f64, y: f64, a: f64, b: f64) -> f64 {
        p(x - a, y) - p(x - b, y)
    }

    /// `Q_y' ⋆ χ_[a,b] = Q_y(x-a) - Q_y(x-b)`.
    #[inline]
    pub fn conv_dq(x: f64, y: f64, a: f64, b: f64) -> f64 {
        q(x - a, y) - q(x - b, y)
    }
}

fn check_y(y: f64) -> Result<()> {
    if y > 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("height must be positive, got y={y}")))
    }
}

/// `P_y(x) = y / (π (x² + y²))`.
pub fn poisson(x: f64, y: f64) -> Result<f64> {
    check_y(y)?;
    Ok(raw::p(x, y))
}

/// `Q_y(x) = x / (π (x² + y²))`.
pub fn conj_poisson(x: f64, y: f64) -> Result<f64> {
    check_y(y)?;
    Ok(raw::q(x, y))
}

/// `∂ₓP_y(x) = -2xy / (π (x² + y²)²)`.
pub fn dpoisson_dx(x: f64, y: f64) -> Result<f64> {
    check_y(y)?;
    Ok(raw::dp(x, y))
}

/// `∂ₓQ_y(x) = (y² - x²) / (π (x² + y²)²)`.
pub fn dconj_poisson_dx(x: f64, y: f64) -> Result<f64> {
    check_y(y)?;
    Ok(raw::dq(x, y))
}

#[allow(non_snake_case)]
pub fn conv_indicator_P(x: f64, y: f64, j: &Interval) -> Result<f64> {
    check_y(y)?;
    Ok(raw::conv_p(x, y, j.lo(), j.hi()))
}

#[allow(non_snake_case)]
pub fn conv_indicator_Q(x: f64, y: f64, j: &Interval) -> Result<f64> {
    check_y(y)?;
    Ok(raw::conv_q(x, y, j.lo(), j.hi()))
}

#[allow(non_snake_case)]
pub fn conv_indicator_dP(x: f64, y: f64, j: &Interval) -> Result<f64> {
    check_y(y)?;
    Ok(raw::conv_dp(x, y, j.lo(), j.hi()))
}

#[allow(non_snake_case)]
pub fn conv_indicator_dQ(x: f64, y: f64, j: &Interval) -> Result<f64> {
    check_y(y)?;
    Ok(raw::conv_dq(x, y, j.lo(), j.hi()))
}

/// Principal-value Hilbert transform of `χ_J`: `(1/π) ln(|x - lo| / |x - hi|)`.
pub fn hilbert_indicator(x: f64, j: &Interval) -> Result<f64> {
    let da = (x - j.lo()).abs();
    let db = (x - j.hi()).abs();
    if da == 0.0 || db == 0.0 {
        return Err(Error::Singularity(format!(
            "Hilbert transform of an indicator is infinite at its endpoint x={x}"
        )));
    }
    Ok((da / db).ln() / PI)
}

/// Hilbert transform of `f(t) / sqrt((t - a)(b - t))` on `J = (a, b)` at `x`,
/// for smooth `f`. The substitution `t = c - r cos θ` absorbs the endpoint
/// singularities; for interior `x` the remaining Cauchy singularity at
/// `θ₀ = acos((c - x)/r)` is removed by subtracting its simple pole.
pub fn hilbert_arcsine_weighted<F: Fn(f64) -> f64>(f: F, j: &Interval, x: f64) -> Result<f64> {
    let c = j.mid();
    let r = 0.5 * j.len();
    let tol = ADAPTIVE_TOL;
    let denom = |th: f64| x - c + r * th.cos();
    if !j.contains(x) {
        return Ok(adaptive(|th| f(c - r * th.cos()) / denom(th), 0.0, PI, tol) / PI);
    }
    if x == j.lo() || x == j.hi() {
        return Err(Error::Singularity(format!(
            "x={x} is an endpoint of the support"
        )));
    }
    let th0 = ((c - x) / r).clamp(-1.0, 1.0).acos();
    let slope = -r * th0.sin(); // d/dθ denom at θ₀
    let f0 = f(x);
    let reg = adaptive_with_breaks(
        |th| {
            let d = th - th0;
            if d.abs() < 1e-13 {
                return 0.0;
            }
            f(c - r * th.cos()) / denom(th) - f0 / (slope * d)
        },
        &[0.0, th0, PI],
        tol,
    );
    Ok((reg + f0 / slope * ((PI - th0) / th0).ln()) / PI)
}

/// How the sampled data are continued outside the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HilbertBoundary {
    /// Data vanish outside the window (compactly supported data on the
    /// line). The transform applies the exact lattice multiplier
    /// `-i sign(ω)` by linear convolution with `2/(πk)` (odd `k`), in a
    /// ×4 zero-padded FFT buffer; there is no wrap-around.
    Line,
    /// Data are one period of a periodic function; the multiplier
    /// `-i sign(k)` is applied to the DFT directly (mean and Nyquist modes
    /// are annihilated). On mean-zero, band-limited data this is an exact
    /// isometry with `ℋ² = -I`.
    Periodic,
}

/// Discrete Hilbert transform of samples `values` taken at the uniform
/// abscissae `x`.
pub fn hilbert_grid(x: &[f64], values: &[f64], boundary: HilbertBoundary) -> Result<Vec<f64>> {
    let n = values.len();
    if x.len() != n {
        return Err(Error::Contract(format!(
            "{} abscissae for {} samples",
            x.len(),
            n
        )));
    }
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Contract(format!(
            "grid length must be even and >= 2, got {n}"
        )));
    }
    let dx = (x[n - 1] - x[0]) / (n - 1) as f64;
    if !(dx > 0.0) {
        return Err(Error::Contract("grid must be increasing".into()));
    }
    for (i, w) in x.windows(2).enumerate() {
        if ((w[1] - w[0]) - dx).abs() > 1e-6 * dx {
            return Err(Error::Contract(format!("non-uniform grid at index {i}")));
        }
    }
    Ok(match boundary {
        HilbertBoundary::Line => hilbert_line(values),
        HilbertBoundary::Periodic => hilbert_periodic(values),
    })
}

fn hilbert_line(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let m = (4 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);

    let mut data = vec![Complex64::new(0.0, 0.0); m];
    for (d, &v) in data.iter_mut().zip(values) {
        *d = Complex64::new(v, 0.0);
    }
    let mut kernel = vec![Complex64::new(0.0, 0.0); m];
    for k in 1..n as i64 {
        if k % 2 != 0 {
            let v = 2.0 / (PI * k as f64);
            kernel[k as usize] = Complex64::new(v, 0.0);
            kernel[m - k as usize] = Complex64::new(-v, 0.0);
        }
    }
    fwd.process(&mut data);
    fwd.process(&mut kernel);
    for (d, k) in data.iter_mut().zip(&kernel) {
        *d *= k;
    }
    inv.process(&mut data);
    let norm = 1.0 / m as f64;
    data[..n].iter().map(|z| z.re * norm).collect()
}

fn hilbert_periodic(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut data);
    let half = n / 2;
    for (k, d) in data.iter_mut().enumerate() {
        *d = if k == 0 || k == half {
            Complex64::new(0.0, 0.0)
        } else if k < half {
            *d * Complex64::new(0.0, -1.0)
        } else {
            *d * Complex64::new(0.0, 1.0)
        };
    }
    inv.process(&mut data);
    let norm = 1.0 / n as f64;
    data.iter().map(|z| z.re * norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_with_breaks;

    fn unit() -> Interval {
        Interval::new(-1.0, 1.0).unwrap()
    }

    #[test]
    fn poisson_spot_values() {
        assert!((poisson(0.0, 1.0).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert!((poisson(1.0, 1.0).unwrap() - 0.5 / PI).abs() < 1e-15);
        assert_eq!(conj_poisson(0.0, 0.1).unwrap(), 0.0);
        assert!((conj_poisson(1.0, 1.0).unwrap() - 0.5 / PI).abs() < 1e-15);
        assert_eq!(dpoisson_dx(0.0, 0.1).unwrap(), 0.0);
        assert_eq!(dconj_poisson_dx(0.3, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn nonpositive_height_is_domain_error() {
        assert!(matches!(poisson(0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(conj_poisson(0.0, -1.0), Err(Error::Domain(_))));
        assert!(dpoisson_dx(0.0, 0.0).is_err());
        assert!(dconj_poisson_dx(0.0, -0.1).is_err());
        assert!(conv_indicator_P(0.0, 0.0, &unit()).is_err());
    }

    #[test]
    fn poisson_has_unit_mass() {
        let y = 0.1;
        let v = adaptive_with_breaks(|x| raw::p(x, y), &[-1e4, -1.0, 0.0, 1.0, 1e4], 1e-12);
        // Mass beyond ±1e4, in closed form.
        let tail = 1.0 - (2.0 / PI) * (1e4 / y).atan();
        assert!((v + tail - 1.0).abs() < 1e-10, "{}", v + tail);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let e = 1e-6;
        for &(x, y) in &[(0.3, 0.1), (-1.2, 0.5), (2.0, 0.05), (0.01, 1.0)] {
            let fd_p = (raw::p(x + e, y) - raw::p(x - e, y)) / (2.0 * e);
            let fd_q = (raw::q(x + e, y) - raw::q(x - e, y)) / (2.0 * e);
            assert!((fd_p - raw::dp(x, y)).abs() <= 1e-6 * raw::dp(x, y).abs().max(1e-3));
            assert!((fd_q - raw::dq(x, y)).abs() <= 1e-6 * raw::dq(x, y).abs().max(1e-3));
        }
    }

    #[test]
    fn indicator_convolutions_spot_values() {
        let j = unit();
        let v = conv_indicator_P(0.0, 0.1, &j).unwrap();
        assert!((v - 2.0 / PI * 10f64.atan()).abs() < 1e-15);
        assert!((v - 0.936549).abs() < 1e-6);
        assert!(conv_indicator_P(1e9, 0.1, &j).unwrap().abs() < 1e-9);
        assert!((conv_indicator_P(0.0, 1e-12, &j).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(conv_indicator_dP(0.0, 0.1, &j).unwrap(), 0.0);
        let dq = conv_indicator_dQ(0.0, 0.1, &j).unwrap();
        assert!((dq - 2.0 * raw::q(1.0, 0.1)).abs() < 1e-15);
        assert!((dq - 0.630316).abs() < 1e-6);
    }

    #[test]
    fn hilbert_indicator_values() {
        let j = unit();
        assert_eq!(hilbert_indicator(0.0, &j).unwrap(), 0.0);
        let v = hilbert_indicator(2.0, &j).unwrap();
        assert!((v - 3f64.ln() / PI).abs() < 1e-15);
        assert!((v - 0.349699).abs() < 1e-6);
        assert!((hilbert_indicator(-2.0, &j).unwrap() + v).abs() < 1e-15);
        assert!(matches!(
            hilbert_indicator(1.0, &j),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn arcsine_weight_outside_support_has_closed_form() {
        let j = Interval::new(-0.5, 1.5).unwrap();
        for &x in &[2.0, -3.0, 1.6] {
            let v = hilbert_arcsine_weighted(|_| 1.0, &j, x).unwrap();
            let d = x - j.mid();
            let exact = d.signum() / (d * d - 1.0).sqrt();
            assert!((v - exact).abs() < 1e-9, "{x}: {v} vs {exact}");
        }
    }

    #[test]
    fn hilbert_grid_rejects_bad_grids() {
        let x = [0.0, 1.0, 2.5, 3.0];
        assert!(matches!(
            hilbert_grid(&x, &[0.0; 4], HilbertBoundary::Line),
            Err(Error::Contract(_))
        ));
        assert!(hilbert_grid(&[0.0, 1.0, 2.0], &[0.0; 3], HilbertBoundary::Line).is_err());
        assert!(hilbert_grid(&[0.0, 1.0], &[0.0; 3], HilbertBoundary::Line).is_err());
    }

    #[test]
    fn periodic_transform_of_sine_is_minus_cosine() {
        let n = 64;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let v: Vec<f64> = x.iter().map(|t| (2.0 * PI * 3.0 * t).cos()).collect();
        let h = hilbert_grid(&x, &v, HilbertBoundary::Periodic).unwrap();
        for (t, hv) in x.iter().zip(&h) {
            assert!((hv - (2.0 * PI * 3.0 * t).sin()).abs() < 1e-13);
        }
    }
}
