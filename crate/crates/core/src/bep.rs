//! Regularized critical-point systems for the bounded extremal problems.
//!
//! For a budget on `‖φ‖_{L²(K)}` the optimum solves `(G + λI) c = r`; for a
//! budget on `‖φ'‖_{L²(K)}` it solves `(G + λ diag(μ_n)) c = r`. `λ > 0` is
//! the multiplier of the saturated constraint, and `M(λ)` — the achieved
//! norm — decreases strictly in `λ`, which [`Bep::solve_for_m`] inverts by
//! bisection.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{real_mu, to_real_system, FourierVector, GramKey, GramMatrix};

const REFINE_STEPS: usize = 3;

/// Dot product with error-free transformations (TwoSum/TwoProduct): as
/// accurate as a plain sum carried out in twice the working precision.
fn dot2(terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (x, y) in terms {
        let p = x * y;
        let ep = x.mul_add(y, -p);
        let t = s + p;
        let z = t - s;
        c += ((s - (t - z)) + (p - z)) + ep;
        s = t;
    }
    s + c
}

/// Which norm carries the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    L2,
    W012,
}

impl Space {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Space::L2),
            "w012" | "w" | "h1" => Ok(Space::W012),
            other => Err(Error::Parse(format!(
                "unknown space '{other}' (expected l2|w012)"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Space::L2 => "l2",
            Space::W012 => "w012",
        }
    }
}

impl std::fmt::Display for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A solved estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BepSolution {
    pub coeffs: FourierVector,
    pub lambda: f64,
    /// Achieved constraint: `‖c‖₂` (L2) or `sqrt(Σ μ_n |c_n|²)` (W012).
    #[serde(rename = "M")]
    pub m_achieved: f64,
    /// `‖b₂*[φ] - e‖_{L²(S,ℝ²)}` from the coefficient-space identity.
    pub residual: f64,
    pub space: Space,
    pub geometry: GramKey,
    /// Whether the constant mode was removed from the unknowns.
    #[serde(default)]
    pub zero_mode_dropped: bool,
}

impl BepSolution {
    /// `φ(x) = Σ c_n g_n(x)` (real part; the imaginary part is round-off).
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.eval(x, self.geometry.q).re
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("solution: {e}")))
    }
}

/// Lower and upper ends of the `λ` bracket used by [`Bep::solve_for_m`].
pub const LAMBDA_MIN: f64 = 1e-14;
pub const LAMBDA_MAX: f64 = 1e6;
const BISECTION_CAP: usize = 200;
const M_REL_TOL: f64 = 1e-6;

/// One regularized problem: Gram matrix, right-hand side, and `‖e‖²`.
#[derive(Debug, Clone)]
pub struct Bep<'a> {
    gram: &'a GramMatrix,
    rhs: FourierVector,
    target_norm_sq: f64,
    space: Space,
    drop_zero_mode: bool,
    real_matrix: DMatrix<f64>,
    real_rhs: DVector<f64>,
    weights: Vec<f64>,
}

impl<'a> Bep<'a> {
    pub fn new(
        gram: &'a GramMatrix,
        rhs: FourierVector,
        target_norm_sq: f64,
        space: Space,
    ) -> Result<Self> {
        let sys = to_real_system(gram, &rhs)?;
        let weights = match space {
            Space::L2 => vec![1.0; gram.dim()],
            Space::W012 => real_mu(gram.order(), gram.key().q),
        };
        Ok(Self {
            gram,
            rhs,
            target_norm_sq,
            space,
            drop_zero_mode: false,
            real_matrix: sys.matrix,
            real_rhs: sys.rhs,
            weights,
        })
    }

    /// Removes the constant mode from the unknowns (`c₀ = 0`). Only
    /// meaningful in W012, where that mode is not regularized.
    pub fn with_zero_mode_dropped(mut self, drop: bool) -> Self {
        self.drop_zero_mode = drop;
        self
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn rhs(&self) -> &FourierVector {
        &self.rhs
    }

    pub fn gram(&self) -> &GramMatrix {
        self.gram
    }

    pub fn target_norm_sq(&self) -> f64 {
        self.target_norm_sq
    }

    fn dropping(&self) -> bool {
        self.drop_zero_mode && self.space == Space::W012
    }

    /// Solves `(G + λD) a = b` in the real layout, with index 0 pinned to
    /// zero when the zero mode is dropped.
    fn solve_real(&self, lambda: f64, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.real_matrix.nrows();
        let skip = usize::from(self.dropping());
        let m = n - skip;
        let a = DMatrix::from_fn(m, m, |i, j| {
            let v = self.real_matrix[(i + skip, j + skip)];
            if i == j {
                v + lambda * self.weights[i + skip]
            } else {
                v
            }
        });
        let rhs = DVector::from_fn(m, |i, _| b[i + skip]);
        let chol = a.cholesky().ok_or_else(|| {
            Error::Solver(format!(
                "G + λD is not numerically positive definite at λ={lambda:e} ({} space, dimension {m})",
                self.space
            ))
        })?;
        let mut x = chol.solve(&rhs);
        let mut out = DVector::zeros(n);
        // At small λ the system is ill-conditioned enough that one Cholesky
        // solve leaves visible error; refine against a compensated residual.
        for _ in 0..REFINE_STEPS {
            for i in 0..m {
                out[i + skip] = x[i];
            }
            let res = self.compensated_residual(lambda, &out, b);
            let d = chol.solve(&DVector::from_fn(m, |i, _| res[i + skip]));
            x += &d;
            if d.amax() <= f64::EPSILON * x.amax() {
                break;
            }
        }
        for i in 0..m {
            out[i + skip] = x[i];
        }
        Ok(out)
    }

    /// `b - (G + λD) a` with each row summed in compensated arithmetic.
    fn compensated_residual(
        &self,
        lambda: f64,
        a: &DVector<f64>,
        b: &DVector<f64>,
    ) -> DVector<f64> {
        let n = a.len();
        let skip = usize::from(self.dropping());
        DVector::from_fn(n, |i, _| {
            if i < skip {
                return 0.0;
            }
            let row = (skip..n).map(|j| (self.real_matrix[(i, j)], -a[j]));
            dot2(row.chain([(lambda * self.weights[i], -a[i]), (b[i], 1.0)]))
        })
    }

    fn space_norm(&self, a: &DVector<f64>) -> f64 {
        a.iter()
            .zip(&self.weights)
            .map(|(x, w)| w * x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn package(&self, a: DVector<f64>, lambda: f64, m_achieved: f64) -> Result<BepSolution> {
        let ga = &self.real_matrix * &a;
        let quad = a.dot(&ga);
        let lin = a.dot(&self.real_rhs);
        let residual = (quad - 2.0 * lin + self.target_norm_sq).max(0.0).sqrt();
        Ok(BepSolution {
            coeffs: FourierVector::from_real(self.gram.order(), a.as_slice())?,
            lambda,
            m_achieved,
            residual,
            space: self.space,
            geometry: *self.gram.key(),
            zero_mode_dropped: self.dropping(),
        })
    }

    /// Solution at a fixed multiplier `λ > 0`.
    pub fn solve(&self, lambda: f64) -> Result<BepSolution> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let a = self.solve_real(lambda, &self.real_rhs)?;
        let m = self.space_norm(&a);
        self.package(a, lambda, m)
    }

    /// `M(λ)` only.
    pub fn constraint_at(&self, lambda: f64) -> Result<f64> {
        Ok(self.solve(lambda)?.m_achieved)
    }

    /// Saturates `‖φ‖ = M_target` by bisection on `log λ`.
    pub fn solve_for_m(&self, m_target: f64) -> Result<BepSolution> {
        if !(m_target > 0.0 && m_target.is_finite()) {
            return Err(Error::Domain(format!(
                "target M must be positive, got {m_target}"
            )));
        }
        // The smallest multipliers can be below the round-off floor of G;
        // raise the lower end a decade at a time until the system factors.
        let mut lo = LAMBDA_MIN.log10();
        let hi = LAMBDA_MAX.log10();
        let m_lo = loop {
            match self.constraint_at(10f64.powf(lo)) {
                Ok(m) => break m,
                Err(Error::Solver(_)) if lo + 1.0 < hi => lo += 1.0,
                Err(e) => return Err(e),
            }
        };
        let m_hi = self.constraint_at(10f64.powf(hi))?;
        if !(m_target <= m_lo && m_target >= m_hi) {
            return Err(Error::Bracket {
                target: m_target,
                lambda_lo: 10f64.powf(lo),
                m_lo,
                lambda_hi: 10f64.powf(hi),
                m_hi,
            });
        }
        let (mut a, mut b) = (lo, hi);
        let mut best = None;
        for _ in 0..BISECTION_CAP {
            let mid = 0.5 * (a + b);
            let sol = self.solve(10f64.powf(mid))?;
            let rel = (sol.m_achieved - m_target).abs() / m_target;
            if sol.m_achieved > m_target {
                a = mid;
            } else {
                b = mid;
            }
            let done = rel < M_REL_TOL;
            best = Some(sol);
            if done || b - a < 1e-15 {
                break;
            }
        }
        best.ok_or_else(|| Error::Solver("bisection produced no iterate".into()))
    }

    /// One solve per `λ`, in input order.
    pub fn sweep(&self, lambdas: &[f64]) -> Vec<SweepRow> {
        lambdas
            .par_iter()
            .map(|&lambda| match self.solve(lambda) {
                Ok(s) => SweepRow {
                    lambda,
                    m: Some(s.m_achieved),
                    residual: Some(s.residual),
                    error: None,
                },
                Err(e) => SweepRow {
                    lambda,
                    m: None,
                    residual: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    }

    /// Shifted constraint `‖φ - f‖ <= M`: solves `(G + λD) c = r + λ D f`
    /// and reports `‖c - f‖` in the space norm.
    pub fn solve_shifted(&self, f: &FourierVector, lambda: f64) -> Result<BepSolution> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if f.order() != self.gram.order() {
            return Err(Error::Contract(
                "shift has a different truncation order".into(),
            ));
        }
        let (fre, fim) = f.to_real_parts();
        if fim
            .iter()
            .any(|v| v.abs() > 1e-12 * f.max_abs().max(f64::MIN_POSITIVE))
        {
            return Err(Error::Contract("shift is not Hermitian".into()));
        }
        let fv = DVector::from_vec(fre);
        let b = DVector::from_fn(fv.len(), |i, _| {
            self.real_rhs[i] + lambda * self.weights[i] * fv[i]
        });
        let a = self.solve_real(lambda, &b)?;
        let m = self.space_norm(&(&a - &fv));
        self.package(a, lambda, m)
    }

    /// `|λM² + (cᴴGc - Re(rᴴc))| / (λM²)`; zero for the trivial solution.
    pub fn saturation_violation(&self, sol: &BepSolution) -> f64 {
        let lm2 = sol.lambda * sol.m_achieved * sol.m_achieved;
        if lm2 == 0.0 {
            return 0.0;
        }
        if sol.coeffs.order() != self.gram.order() {
            return f64::NAN;
        }
        // λM² + aᵀGa - aᵀb = -aᵀ(b - (G + λD)a), evaluated in the real form the
        // solver uses; naive summation cancels catastrophically at small λ.
        let a = DVector::from_vec(sol.coeffs.to_real_parts().0);
        let res = self.compensated_residual(sol.lambda, &a, &self.real_rhs);
        dot2(a.iter().zip(res.iter()).map(|(x, y)| (*x, *y))).abs() / lm2
    }

    /// `‖(G + λD)c - r‖_∞ / ‖r‖_∞` in the complex basis.
    pub fn normal_equation_residual(&self, sol: &BepSolution) -> f64 {
        let gc = self.gram.apply(&sol.coeffs);
        let q = self.gram.key().q;
        let mut worst: f64 = 0.0;
        for ((n, g), (c, r)) in sol
            .coeffs
            .modes()
            .zip(gc.coeffs())
            .zip(sol.coeffs.coeffs().iter().zip(self.rhs.coeffs()))
        {
            let d = match self.space {
                Space::L2 => 1.0,
                Space::W012 => crate::spectral::eigenvalue_mu(n, q),
            };
            if n == 0 && sol.zero_mode_dropped {
                continue;
            }
            worst = worst.max((g + c * (sol.lambda * d) - r).norm());
        }
        worst / self.rhs.max_abs().max(f64::MIN_POSITIVE)
    }
}

/// One row of a `λ` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub m: Option<f64>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

/// Writes rows as `lambda,M,residual`; failed solves get `NaN` fields.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lambda,M,residual\n");
    for r in rows {
        let f = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |x| format!("{x:.16e}"));
        out.push_str(&format!("{:.16e},{},{}\n", r.lambda, f(r.m), f(r.residual)));
    }
    out
}

/// `λ = 10^-k` for `k` in `first..=last`.
pub fn decade_lambdas(first: i32, last: i32) -> Vec<f64> {
    (first..=last).map(|k| 10f64.powi(-k)).collect()
}

/// Fixed-`λ` solve.
pub fn solve_fixed_lambda(
    gram: &GramMatrix,
    rhs: &FourierVector,
    target_norm_sq: f64,
    lambda: f64,
    space: Space,
) -> Result<BepSolution> {
    Bep::new(gram, rhs.clone(), target_norm_sq, space)?.solve(lambda)
}

/// Constraint-saturating solve.
pub fn solve_for_m(
    gram: &GramMatrix,
    rhs: &FourierVector,
    target_norm_sq: f64,
    m_target: f64,
    space: Space,
) -> Result<BepSolution> {
    Bep::new(gram, rhs.clone(), target_norm_sq, space)?.solve_for_m(m_target)
}

/// Sweep over multipliers.
pub fn lambda_sweep(
    gram: &GramMatrix,
    rhs: &FourierVector,
    target_norm_sq: f64,
    lambdas: &[f64],
    space: Space,
) -> Result<Vec<SweepRow>> {
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Domain("all lambdas must be positive".into()));
    }
    Ok(Bep::new(gram, rhs.clone(), target_norm_sq, space)?.sweep(lambdas))
}

/// Normalized violation of `λM² = -⟨b₂*φ - e, b₂*φ⟩`.
pub fn saturation_check(sol: &BepSolution, gram: &GramMatrix, rhs: &FourierVector) -> Result<f64> {
    Ok(Bep::new(gram, rhs.clone(), 0.0, sol.space)?.saturation_violation(sol))
}

/// Shifted-constraint solve.
pub fn solve_shifted(
    gram: &GramMatrix,
    rhs: &FourierVector,
    target_norm_sq: f64,
    f: &FourierVector,
    lambda: f64,
    space: Space,
) -> Result<BepSolution> {
    Bep::new(gram, rhs.clone(), target_norm_sq, space)?.solve_shifted(f, lambda)
}

/// Eigenvalues of the real Gram form, descending.
pub fn spectral_decay(gram: &GramMatrix) -> Vec<f64> {
    let eig = gram.real().clone().symmetric_eigen();
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}
