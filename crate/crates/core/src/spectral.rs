//! Fourier basis on `K`, the Gram matrix of `b₂*` on that basis, and the
//! right-hand sides of the critical-point systems.
//!
//! The basis is normalized: `g_n(x) = exp(i n π x / q) / sqrt(2q)`, so the
//! `L²(K)` norm of `Σ c_n g_n` is the Euclidean norm of `c`.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{next_pow2, FourierQuadrature};
use crate::geometry::Geometry;
use crate::kernels::raw;
use crate::operators::{forward_coeffs, Target};
use crate::quadrature::{adaptive_with_breaks, Composite, ADAPTIVE_TOL};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `exp(i n π x / q) / sqrt(2q)`.
pub fn basis_eval(n: i64, x: f64, q: f64) -> Complex64 {
    Complex64::from_polar(1.0 / (2.0 * q).sqrt(), n as f64 * PI * x / q)
}

/// Laplacian eigenvalue `(n π / q)²` of `g_n`.
pub fn eigenvalue_mu(n: i64, q: f64) -> f64 {
    let w = n as f64 * PI / q;
    w * w
}

/// Truncated Fourier coefficients `c_n`, `n = -N..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierVector {
    order: usize,
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct FourierVectorRepr {
    order: usize,
    coeffs: Vec<[f64; 2]>,
}

impl Serialize for FourierVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FourierVectorRepr {
            order: self.order,
            coeffs: self.coeffs.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FourierVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = FourierVectorRepr::deserialize(d)?;
        let coeffs = r
            .coeffs
            .iter()
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        FourierVector::new(r.order, coeffs).map_err(serde::de::Error::custom)
    }
}

impl FourierVector {
    pub fn new(order: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != 2 * order + 1 {
            return Err(Error::Contract(format!(
                "order {order} needs {} coefficients, got {}",
                2 * order + 1,
                coeffs.len()
            )));
        }
        Ok(Self { order, coeffs })
    }

    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            coeffs: vec![ZERO; 2 * order + 1],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Coefficients in index order `n = -N..=N`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> + '_ {
        let n = self.order as i64;
        -n..=n
    }

    pub fn get(&self, n: i64) -> Complex64 {
        let idx = n + self.order as i64;
        assert!(
            idx >= 0 && (idx as usize) < self.coeffs.len(),
            "mode {n} out of range"
        );
        self.coeffs[idx as usize]
    }

    /// Largest `|c_{-n} - conj(c_n)|`, including `|Im c_0|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.order;
        (0..=n)
            .map(|k| (self.coeffs[n - k] - self.coeffs[n + k].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Replaces the vector by its nearest Hermitian-symmetric one.
    pub fn symmetrize(&mut self) {
        let n = self.order;
        for k in 0..=n {
            let avg = 0.5 * (self.coeffs[n + k] + self.coeffs[n - k].conj());
            self.coeffs[n + k] = avg;
            self.coeffs[n - k] = avg.conj();
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `‖c‖₂`, the `L²(K)` norm of the synthesized function.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `Σ μ_n |c_n|²`, the squared `L²` norm of the derivative.
    pub fn weighted_norm_sq(&self, q: f64) -> f64 {
        self.modes()
            .zip(&self.coeffs)
            .map(|(n, z)| eigenvalue_mu(n, q) * z.norm_sqr())
            .sum()
    }

    /// `Σ Re(a_n conj(b_n))`: the real `L²(K)` inner product of the two
    /// synthesized (real) functions.
    pub fn real_inner(&self, other: &FourierVector) -> Result<f64> {
        if self.order != other.order {
            return Err(Error::Contract(format!(
                "order mismatch: {} vs {}",
                self.order, other.order
            )));
        }
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum())
    }

    /// `Σ c_n g_n(x)`.
    pub fn eval(&self, x: f64, q: f64) -> Complex64 {
        // Recurrence on the phase keeps this O(N) without repeated sin/cos.
        let step = Complex64::from_polar(1.0, PI * x / q);
        let mut ph = Complex64::from_polar(1.0, -(self.order as f64) * PI * x / q);
        let mut acc = ZERO;
        for (i, c) in self.coeffs.iter().enumerate() {
            if i % 64 == 0 {
                let n = i as f64 - self.order as f64;
                ph = Complex64::from_polar(1.0, n * PI * x / q);
            }
            acc += c * ph;
            ph *= step;
        }
        acc / (2.0 * q).sqrt()
    }

    /// `Σ c_n g_n'(x)`.
    pub fn eval_derivative(&self, x: f64, q: f64) -> Complex64 {
        let mut acc = ZERO;
        for (n, c) in self.modes().zip(&self.coeffs) {
            let w = n as f64 * PI / q;
            acc += c * Complex64::new(0.0, w) * Complex64::from_polar(1.0, w * x);
        }
        acc / (2.0 * q).sqrt()
    }

    pub fn scaled(&self, a: f64) -> FourierVector {
        FourierVector {
            order: self.order,
            coeffs: self.coeffs.iter().map(|z| z * a).collect(),
        }
    }

    pub fn sub(&self, other: &FourierVector) -> Result<FourierVector> {
        if self.order != other.order {
            return Err(Error::Contract("order mismatch".into()));
        }
        Ok(FourierVector {
            order: self.order,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Restriction to modes `|n| <= order` (or zero-extension).
    pub fn resized(&self, order: usize) -> FourierVector {
        let mut out = FourierVector::zeros(order);
        let m = self.order.min(order) as i64;
        for n in -m..=m {
            out.coeffs[(n + order as i64) as usize] = self.get(n);
        }
        out
    }

    /// Coefficients of a real vector over the trigonometric basis (layout as
    /// in [`RealSystem`]).
    pub fn from_real(order: usize, a: &[f64]) -> Result<Self> {
        if a.len() != 2 * order + 1 {
            return Err(Error::Contract("real vector length mismatch".into()));
        }
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut out = FourierVector::zeros(order);
        out.coeffs[order] = Complex64::new(a[0], 0.0);
        for n in 1..=order {
            let (an, bn) = (a[n], a[order + n]);
            out.coeffs[order + n] = Complex64::new(an, -bn) * r2;
            out.coeffs[order - n] = Complex64::new(an, bn) * r2;
        }
        Ok(out)
    }

    /// Inverse of [`from_real`](Self::from_real); applies `Tᴴ`, so the result
    /// is complex in general and real exactly for Hermitian input.
    pub fn to_real_parts(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.order;
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut re = vec![0.0; 2 * n + 1];
        let mut im = vec![0.0; 2 * n + 1];
        re[0] = self.coeffs[n].re;
        im[0] = self.coeffs[n].im;
        for k in 1..=n {
            let (p, m) = (self.coeffs[n + k], self.coeffs[n - k]);
            let a = (p + m) * r2;
            let b = (m - p) * Complex64::new(0.0, -1.0) * r2;
            re[k] = a.re;
            im[k] = a.im;
            re[n + k] = b.re;
            im[n + k] = b.im;
        }
        (re, im)
    }
}

/// `I(t₁,t₂,x) = P_h'(x-t₁)P_h'(x-t₂) + Q_h'(x-t₁)Q_h'(x-t₂)`.
#[allow(non_snake_case)]
pub fn kernel_I(t1: f64, t2: f64, x: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("height must be positive, got {h}")));
    }
    Ok(raw_kernel_i(t1, t2, x, h))
}

#[inline]
fn raw_kernel_i(t1: f64, t2: f64, x: f64, h: f64) -> f64 {
    raw::dp(x - t1, h) * raw::dp(x - t2, h) + raw::dq(x - t1, h) * raw::dq(x - t2, h)
}

/// `k(t₁,t₂) = ∫_{-s}^{s} I(t₁,t₂,x) dx` in closed form.
///
/// With `F' = Q' + iP' = -1/(π (u - ih)²)`, `I = Re[F'(x-t₁) conj F'(x-t₂)]`
/// is `Re` of `1/(π² (x-α)²(x-β)²)` for `α = t₁+ih`, `β = t₂-ih`; its
/// partial-fraction antiderivative only involves logarithms whose arguments
/// keep a fixed-sign imaginary part, so the principal branch is continuous.
pub fn kernel_k(t1: f64, t2: f64, geometry: &Geometry) -> f64 {
    raw_kernel_k(t1, t2, geometry.s, geometry.h)
}

#[inline]
fn raw_kernel_k(t1: f64, t2: f64, s: f64, h: f64) -> f64 {
    let a = Complex64::new(t1, h);
    let b = Complex64::new(t2, -h);
    let d = a - b;
    let d2 = d * d;
    let d3 = d2 * d;
    let anti = |x: f64| {
        let xa = Complex64::new(x, 0.0) - a;
        let xb = Complex64::new(x, 0.0) - b;
        (xb.ln() - xa.ln()) * 2.0 / d3 - (xa.inv() + xb.inv()) / d2
    };
    (anti(s) - anti(-s)).re / (PI * PI)
}

/// `k(t₁,t₂)` by adaptive quadrature of [`kernel_I`]; an independent check
/// of the closed form.
pub fn kernel_k_quadrature(t1: f64, t2: f64, geometry: &Geometry) -> f64 {
    let (s, h) = (geometry.s, geometry.h);
    let mut breaks = vec![-s];
    for t in [t1 - h, t1, t1 + h, t2 - h, t2, t2 + h] {
        if t > -s && t < s {
            breaks.push(t);
        }
    }
    breaks.push(s);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    adaptive_with_breaks(|x| raw_kernel_i(t1, t2, x, h), &breaks, ADAPTIVE_TOL)
}

/// Identity of an assembled Gram matrix; cache hits require exact equality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramKey {
    pub s: f64,
    pub q: f64,
    pub h: f64,
    pub order: usize,
    pub grid: usize,
}

impl GramKey {
    fn file_name(&self) -> String {
        format!(
            "gram-{:016x}-{:016x}-{:016x}-{}-{}.bin",
            self.s.to_bits(),
            self.q.to_bits(),
            self.h.to_bits(),
            self.order,
            self.grid
        )
    }
}

/// Assembly options.
#[derive(Debug, Clone)]
pub struct GramOptions {
    /// Number of grid intervals on `K`; `None` picks a default that resolves
    /// both the highest mode and the `h`-scale features of `k`.
    pub grid: Option<usize>,
    /// Entries compared against direct quadrature after assembly.
    pub check_entries: usize,
    /// Relative tolerance of that comparison.
    pub check_tol: f64,
    /// Seed selecting which entries are checked.
    pub check_seed: u64,
}

impl Default for GramOptions {
    fn default() -> Self {
        Self {
            grid: None,
            check_entries: 5,
            check_tol: 1e-4,
            check_seed: 0x5eed,
        }
    }
}

/// Default number of grid intervals for order `N`.
pub fn default_grid(geometry: &Geometry, order: usize) -> usize {
    let feature = (64.0 * 2.0 * geometry.q / geometry.h).ceil() as usize;
    next_pow2((4 * order).max(feature).max(64))
}

/// Gram matrix `G_{nk} = ⟨b₂*[g_k], b₂*[g_n]⟩ = ∬ k(t₁,t₂) conj(g_n(t₁)) g_k(t₂)`,
/// together with its real symmetric form over the trigonometric basis.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    key: GramKey,
    complex: DMatrix<Complex64>,
    real: DMatrix<f64>,
}

impl GramMatrix {
    /// Wraps assembled entries (index order `-N..=N`), checking symmetry.
    pub fn from_entries(key: GramKey, complex: DMatrix<Complex64>) -> Result<Self> {
        let dim = 2 * key.order + 1;
        if complex.nrows() != dim || complex.ncols() != dim {
            return Err(Error::Contract(format!(
                "Gram matrix must be {dim}x{dim}, got {}x{}",
                complex.nrows(),
                complex.ncols()
            )));
        }
        let real = real_form(key.order, &complex)?;
        Ok(Self { key, complex, real })
    }

    pub fn key(&self) -> &GramKey {
        &self.key
    }

    pub fn order(&self) -> usize {
        self.key.order
    }

    pub fn dim(&self) -> usize {
        2 * self.key.order + 1
    }

    /// Entry `(n, k)` with `n, k ∈ -N..=N`.
    pub fn entry(&self, n: i64, k: i64) -> Complex64 {
        let o = self.key.order as i64;
        self.complex[((n + o) as usize, (k + o) as usize)]
    }

    pub fn complex(&self) -> &DMatrix<Complex64> {
        &self.complex
    }

    /// Real symmetric form `Re(Tᴴ G T)`.
    pub fn real(&self) -> &DMatrix<f64> {
        &self.real
    }

    /// `G c`.
    pub fn apply(&self, c: &FourierVector) -> FourierVector {
        let v = DVector::from_column_slice(c.coeffs());
        let out = &self.complex * v;
        FourierVector {
            order: c.order(),
            coeffs: out.as_slice().to_vec(),
        }
    }

    /// `Re(cᴴ G c)`.
    pub fn quad_form(&self, c: &FourierVector) -> f64 {
        let gc = self.apply(c);
        c.coeffs()
            .iter()
            .zip(gc.coeffs())
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.complex.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        for v in [self.key.s, self.key.q, self.key.h] {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
        w.write_all(&(self.key.order as u64).to_le_bytes())?;
        w.write_all(&(self.key.grid as u64).to_le_bytes())?;
        // Column-major, matching nalgebra storage.
        for z in self.complex.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    fn read_from(r: &mut impl Read, expect: &GramKey) -> Result<Option<Self>> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Ok(None);
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> std::io::Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let s = f64::from_bits(next(r)?);
        let q = f64::from_bits(next(r)?);
        let h = f64::from_bits(next(r)?);
        let order = next(r)? as usize;
        let grid = next(r)? as usize;
        let key = GramKey {
            s,
            q,
            h,
            order,
            grid,
        };
        if key != *expect {
            return Ok(None);
        }
        let dim = 2 * order + 1;
        let mut bytes = vec![0u8; dim * dim * 16];
        r.read_exact(&mut bytes)?;
        let data: Vec<Complex64> = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        let complex = DMatrix::from_vec(dim, dim, data);
        Ok(Some(GramMatrix::from_entries(key, complex)?))
    }
}

const CACHE_MAGIC: &[u8; 8] = b"NMGRAM01";

/// Builds `Re(Tᴴ G T)`, rejecting input whose reduction is not real.
fn real_form(order: usize, g: &DMatrix<Complex64>) -> Result<DMatrix<f64>> {
    let dim = 2 * order + 1;
    let cols: Vec<Vec<(usize, Complex64)>> = (0..dim).map(|u| basis_column(order, u)).collect();
    let scale = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut out = DMatrix::<f64>::zeros(dim, dim);
    let mut worst_imag: f64 = 0.0;
    for v in 0..dim {
        for u in 0..dim {
            let mut acc = ZERO;
            for &(a, wa) in &cols[u] {
                for &(b, wb) in &cols[v] {
                    acc += wa.conj() * g[(a, b)] * wb;
                }
            }
            out[(u, v)] = acc.re;
            worst_imag = worst_imag.max(acc.im.abs());
        }
    }
    let herm = (0..dim)
        .flat_map(|i| (0..dim).map(move |j| (i, j)))
        .map(|(i, j)| (g[(i, j)] - g[(j, i)].conj()).norm())
        .fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    if herm > tol || worst_imag > tol {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian with real-function symmetry (defects {herm:e}, {worst_imag:e}; scale {scale:e})"
        )));
    }
    Ok(out)
}

/// Column `u` of the unitary `T` mapping trigonometric to exponential
/// coefficients, as sparse `(complex index, weight)` pairs. Layout: `u = 0`
/// the constant, `u = n` the cosine of mode `n`, `u = N + n` the sine.
fn basis_column(order: usize, u: usize) -> Vec<(usize, Complex64)> {
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    if u == 0 {
        vec![(order, Complex64::new(1.0, 0.0))]
    } else if u <= order {
        vec![
            (order + u, Complex64::new(r2, 0.0)),
            (order - u, Complex64::new(r2, 0.0)),
        ]
    } else {
        let n = u - order;
        vec![
            (order + n, Complex64::new(0.0, -r2)),
            (order - n, Complex64::new(0.0, r2)),
        ]
    }
}

/// Real symmetric system equivalent to a Hermitian one.
///
/// Unknowns are ordered `[a₀, a₁..a_N, b₁..b_N]` over the orthonormal basis
/// `{1, √2 cos(nπx/q), √2 sin(nπx/q)} / sqrt(2q)`.
#[derive(Debug, Clone)]
pub struct RealSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// Reduces `(G, r)` to the trigonometric basis.
pub fn to_real_system(gram: &GramMatrix, r: &FourierVector) -> Result<RealSystem> {
    if r.order() != gram.order() {
        return Err(Error::Contract(format!(
            "right-hand side order {} does not match Gram order {}",
            r.order(),
            gram.order()
        )));
    }
    let (re, im) = r.to_real_parts();
    let scale = r.max_abs().max(f64::MIN_POSITIVE);
    let worst = im.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if worst > 1e-12 * scale {
        return Err(Error::Contract(format!(
            "right-hand side is not Hermitian (imaginary residue {worst:e})"
        )));
    }
    Ok(RealSystem {
        matrix: gram.real().clone(),
        rhs: DVector::from_vec(re),
    })
}

/// Laplacian eigenvalues in the real layout of [`RealSystem`].
pub fn real_mu(order: usize, q: f64) -> Vec<f64> {
    let mut out = vec![0.0; 2 * order + 1];
    for n in 1..=order {
        let mu = eigenvalue_mu(n as i64, q);
        out[n] = mu;
        out[order + n] = mu;
    }
    out
}

/// Assembles the Gram matrix.
///
/// `k` is sampled on a uniform `(M+1)²` grid over `K × K` and transformed
/// along both axes with the endpoint-corrected Fourier quadrature. Five
/// entries (by default) are then recomputed by tensor Gauss–Legendre
/// quadrature; on mismatch the grid is doubled once before giving up.
pub fn gram_assemble(geometry: &Geometry, order: usize, opts: &GramOptions) -> Result<GramMatrix> {
    geometry.validate()?;
    if order == 0 {
        return Err(Error::Contract(
            "truncation order must be at least 1".into(),
        ));
    }
    let first = opts.grid.unwrap_or_else(|| default_grid(geometry, order));
    let mut grid = first;
    for attempt in 0..2 {
        let gram = assemble_on_grid(geometry, order, grid)?;
        match self_check(&gram, geometry, opts) {
            Ok(()) => return Ok(gram),
            Err(e) if attempt == 0 => {
                let _ = e;
                grid *= 2;
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

fn assemble_on_grid(geometry: &Geometry, order: usize, grid: usize) -> Result<GramMatrix> {
    let fq = FourierQuadrature::new(geometry.q, order, grid)?;
    let t = fq.grid();
    let m1 = grid + 1;
    let dim = 2 * order + 1;
    let (s, h) = (geometry.s, geometry.h);

    // Row i of the kernel matrix transforms to C[:, i] = A k(t_i, ·); by
    // symmetry of k this is also column i.
    let c_rows: Vec<Vec<Complex64>> = t
        .par_iter()
        .map_init(
            || (Vec::with_capacity(m1), Vec::new()),
            |(row, buf), &ti| {
                row.clear();
                row.extend(
                    t.iter()
                        .map(|&tj| Complex64::new(raw_kernel_k(ti, tj, s, h), 0.0)),
                );
                fq.coefficients_with(row, buf)
            },
        )
        .collect();

    // G_{nk} = Σ_j C_{nj} conj(A_{kj}) = conj( (A conj(C[n,:]))_k ).
    let g_rows: Vec<Vec<Complex64>> = (0..dim)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(m1), Vec::new()),
            |(col, buf), n| {
                col.clear();
                col.extend(c_rows.iter().map(|r| r[n].conj()));
                fq.coefficients_with(col, buf)
                    .into_iter()
                    .map(|z| z.conj())
                    .collect()
            },
        )
        .collect();

    let mut g = DMatrix::<Complex64>::from_fn(dim, dim, |i, j| g_rows[i][j]);
    // Remove round-off asymmetry: Hermitian, and conj-symmetric under n -> -n.
    let sym = DMatrix::<Complex64>::from_fn(dim, dim, |i, j| {
        let a = g[(i, j)];
        let b = g[(j, i)].conj();
        let c = g[(dim - 1 - i, dim - 1 - j)].conj();
        let d = g[(dim - 1 - j, dim - 1 - i)];
        (a + b + c + d) * 0.25
    });
    g = sym;
    let key = GramKey {
        s: geometry.s,
        q: geometry.q,
        h: geometry.h,
        order,
        grid,
    };
    GramMatrix::from_entries(key, g)
}

fn self_check(gram: &GramMatrix, geometry: &Geometry, opts: &GramOptions) -> Result<()> {
    if opts.check_entries == 0 {
        return Ok(());
    }
    let o = gram.order() as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.check_seed);
    let picks: Vec<(i64, i64)> = (0..opts.check_entries)
        .map(|_| (rng.random_range(-o..=o), rng.random_range(-o..=o)))
        .collect();
    let floor = 1e-8 * gram.max_abs();
    let results: Vec<(i64, i64, Complex64, Complex64)> = picks
        .par_iter()
        .map(|&(n, k)| {
            (
                n,
                k,
                gram.entry(n, k),
                gram_entry_quadrature(geometry, n, k),
            )
        })
        .collect();
    for (n, k, got, want) in results {
        let err = (got - want).norm();
        if err > opts.check_tol * want.norm() && err > floor {
            return Err(Error::Assembly(format!(
                "entry ({n},{k}) = {got} differs from quadrature {want} (|diff| {err:e}) on grid {}",
                gram.key().grid
            )));
        }
    }
    Ok(())
}

/// One Gram entry by tensor-product Gauss–Legendre quadrature of
/// `k(t₁,t₂) conj(g_n(t₁)) g_k(t₂)` over `K × K`, with panels fine enough
/// for both the `h`-scale features of `k` and the oscillation of the modes.
pub fn gram_entry_quadrature(geometry: &Geometry, n: i64, k: i64) -> Complex64 {
    let q = geometry.q;
    let omega = (n.abs().max(k.abs()) as f64) * PI / q;
    let width = (0.5 * geometry.h).min(if omega > 0.0 {
        16.0 / omega
    } else {
        f64::INFINITY
    });
    let panels = ((2.0 * q / width).ceil() as usize).max(8);
    let rule = Composite::uniform(-q, q, panels, 24);
    let gn: Vec<Complex64> = rule
        .nodes
        .iter()
        .map(|&t| basis_eval(n, t, q).conj())
        .collect();
    let gk: Vec<Complex64> = rule.nodes.iter().map(|&t| basis_eval(k, t, q)).collect();
    let (s, h) = (geometry.s, geometry.h);
    let mut acc = ZERO;
    for (i, &t1) in rule.nodes.iter().enumerate() {
        let mut inner = ZERO;
        for (j, &t2) in rule.nodes.iter().enumerate() {
            inner += gk[j] * (rule.weights[j] * raw_kernel_k(t1, t2, s, h));
        }
        acc += gn[i] * inner * rule.weights[i];
    }
    acc
}

/// Right-hand side `r_k = ⟨b₂[e], g_k⟩_{L²(K)}` for the target `e`.
pub fn rhs_vector(geometry: &Geometry, order: usize, target: &Target) -> Result<FourierVector> {
    forward_coeffs(&target.magnetization(geometry)?, geometry, order)
}

/// On-disk store for assembled Gram matrices.
#[derive(Debug, Clone)]
pub struct GramCache {
    dir: PathBuf,
}

impl GramCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `$NETMOMENT_CACHE_DIR`, or a directory under the system temp dir.
    pub fn from_env() -> Self {
        match std::env::var_os("NETMOMENT_CACHE_DIR") {
            Some(d) if !d.is_empty() => Self::new(d),
            _ => Self::new(std::env::temp_dir().join("netmoment-cache")),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &GramKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    pub fn load(&self, key: &GramKey) -> Result<Option<GramMatrix>> {
        let path = self.path_for(key);
        let file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut r = std::io::BufReader::new(file);
        match GramMatrix::read_from(&mut r, key) {
            Ok(v) => Ok(v),
            // Truncated or corrupt entries are treated as misses.
            Err(Error::Io(_)) | Err(Error::Contract(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn store(&self, gram: &GramMatrix) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(gram.key());
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        {
            let mut w = std::io::BufWriter::new(fs::File::create(&tmp)?);
            gram.write_to(&mut w)?;
            w.flush()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Loads the matrix for `(geometry, order)` at the default grid, or
    /// assembles and stores it.
    pub fn get_or_assemble(
        &self,
        geometry: &Geometry,
        order: usize,
        opts: &GramOptions,
    ) -> Result<GramMatrix> {
        let grid = opts.grid.unwrap_or_else(|| default_grid(geometry, order));
        let key = GramKey {
            s: geometry.s,
            q: geometry.q,
            h: geometry.h,
            order,
            grid,
        };
        if let Some(g) = self.load(&key)? {
            return Ok(g);
        }
        let gram = gram_assemble(geometry, order, opts)?;
        // If assembly had to refine, also file the result under the requested key.
        self.store(&gram)?;
        if gram.key().grid != grid {
            let alias = GramMatrix {
                key,
                ..gram.clone()
            };
            self.store(&alias)?;
        }
        Ok(gram)
    }
}
