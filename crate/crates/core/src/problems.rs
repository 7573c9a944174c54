//! Synthetic robust regression instances.
//!
//! `A = Q·diag(d)` with `Q` standard normal and `dᵢ ~ U[1/κ, 1]`, a standard
//! normal true signal `x̂`, clean labels `bᵢ = r(x̂, aᵢ)`, and a uniformly
//! chosen subset of `round(p_fail·m)` labels perturbed by additive Gaussian
//! noise of variance 25.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::linalg::{dot, norm};
pub use crate::model::ProblemKind;
use crate::model::{evaluate_loss, Sample};
use crate::rng::{stream_rng, DATA_STREAM, INIT_STREAM};

pub const DEFAULT_M: usize = 300;
pub const DEFAULT_N: usize = 100;
pub const NOISE_VARIANCE: f64 = 25.0;
/// Exponent of the `r3` growth function `e^{A s}`.
pub const R3_GROWTH_EXPONENT: f64 = 3.0;

const FORMAT_TAG: &str = "# modelopt instance v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub kind: ProblemKind,
    pub m: usize,
    pub n: usize,
    /// Row-major `m × n` design matrix.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub cond_kappa: f64,
    pub p_fail: f64,
    pub noise_variance: f64,
    pub corrupted: Vec<bool>,
    pub f_at_xhat: f64,
    pub seed: u64,
    /// Column scalings `d`; empty for hand-built instances.
    pub col_scale: Vec<f64>,
    /// Exact minimizer for [`ProblemKind::LsConvex`].
    pub x_star: Option<Vec<f64>>,
}

impl ProblemInstance {
    /// Generates an instance; see the module docs for the recipe.
    pub fn generate(m: usize, n: usize, cond_kappa: f64, p_fail: f64, kind: ProblemKind, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return config("m and n must be >= 1");
        }
        if !(cond_kappa >= 1.0 && cond_kappa.is_finite()) {
            return config(format!("condition parameter must be >= 1, got {cond_kappa}"));
        }
        if !(0.0..1.0).contains(&p_fail) {
            return config(format!("p_fail must lie in [0, 1), got {p_fail}"));
        }
        let mut rng = stream_rng(seed, DATA_STREAM);
        let mut a: Vec<f64> = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let lo = 1.0 / cond_kappa;
        let col_scale: Vec<f64> = (0..n).map(|_| lo + (1.0 - lo) * rng.random::<f64>()).collect();
        for row in a.chunks_exact_mut(n) {
            row.iter_mut().zip(&col_scale).for_each(|(v, d)| *v *= d);
        }
        let x_hat: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut b = Vec::with_capacity(m);
        for row in a.chunks_exact(n) {
            let (r, _) = kind.response(dot(row, &x_hat))?;
            b.push(r);
        }
        let n_bad = (p_fail * m as f64).round() as usize;
        let mut corrupted = vec![false; m];
        let sd = NOISE_VARIANCE.sqrt();
        let mut picked = rand::seq::index::sample(&mut rng, m, n_bad).into_vec();
        picked.sort_unstable();
        for i in picked {
            corrupted[i] = true;
            let e: f64 = StandardNormal.sample(&mut rng);
            b[i] += sd * e;
        }
        Self::assemble(kind, m, n, a, b, x_hat, cond_kappa, p_fail, corrupted, seed, col_scale)
    }

    /// Builds an instance from explicit rows; labels are taken as given and
    /// nothing is marked corrupted.
    pub fn from_rows(kind: ProblemKind, rows: &[Vec<f64>], b: Vec<f64>, x_hat: Vec<f64>) -> Result<Self> {
        let m = rows.len();
        let n = x_hat.len();
        if m == 0 || n == 0 || b.len() != m || rows.iter().any(|r| r.len() != n) {
            return config("inconsistent instance dimensions");
        }
        let a = rows.concat();
        Self::assemble(kind, m, n, a, b, x_hat, 1.0, 0.0, vec![false; m], 0, Vec::new())
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: ProblemKind,
        m: usize,
        n: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        x_hat: Vec<f64>,
        cond_kappa: f64,
        p_fail: f64,
        corrupted: Vec<bool>,
        seed: u64,
        col_scale: Vec<f64>,
    ) -> Result<Self> {
        let mut inst = ProblemInstance {
            kind,
            m,
            n,
            a,
            b,
            x_hat,
            cond_kappa,
            p_fail,
            noise_variance: NOISE_VARIANCE,
            corrupted,
            f_at_xhat: 0.0,
            seed,
            col_scale,
            x_star: None,
        };
        inst.f_at_xhat = inst.objective(&inst.x_hat)?;
        if kind == ProblemKind::LsConvex {
            inst.x_star = Some(inst.least_squares_solution()?);
        }
        Ok(inst)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn sample(&self, i: usize) -> Sample<'_> {
        Sample { a: self.row(i), b: self.b[i] }
    }

    /// `(1/m) Σᵢ f(x, ξᵢ)`
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return config(format!("dimension mismatch: expected {}, got {}", self.n, x.len()));
        }
        let mut s = 0.0;
        for i in 0..self.m {
            s += evaluate_loss(self.kind, x, self.sample(i))?;
        }
        crate::error::guard(s / self.m as f64, "objective")
    }

    pub fn n_corrupted(&self) -> usize {
        self.corrupted.iter().filter(|&&c| c).count()
    }

    /// Minimizer of the least-squares objective via the normal equations.
    fn least_squares_solution(&self) -> Result<Vec<f64>> {
        let a = DMatrix::from_row_slice(self.m, self.n, &self.a);
        let b = DVector::from_column_slice(&self.b);
        let ata = a.transpose() * &a;
        let atb = a.transpose() * b;
        let x = match ata.clone().cholesky() {
            Some(ch) => ch.solve(&atb),
            None => ata
                .svd(true, true)
                .solve(&atb, 1e-12)
                .map_err(|e| Error::Config(format!("least-squares solve failed: {e}")))?,
        };
        Ok(x.iter().copied().collect())
    }

    /// Crude upper estimate of the weak-convexity modulus of the full
    /// objective, from `|r''(t)|·‖aᵢ‖²` with `|t| ≤ ‖aᵢ‖` (unit ball) for
    /// `r2`/`r3`. Heuristic outside `r1`, where `2 maxᵢ ‖aᵢ‖²` is exact.
    pub fn weak_convexity_estimate(&self) -> f64 {
        let max_sq = (0..self.m).map(|i| dot(self.row(i), self.row(i))).fold(0.0, f64::max);
        let s = max_sq.sqrt();
        match self.kind {
            ProblemKind::R1 => 2.0 * max_sq,
            ProblemKind::R2 => (20.0 * s.powi(3) + 6.0 * s) * max_sq,
            ProblemKind::R3 => s.exp() * max_sq,
            ProblemKind::Lad | ProblemKind::LsConvex => 0.0,
        }
    }

    /// Self-describing text form: a header of `key value` lines followed by
    /// one row per measurement (`b corrupted a_1 … a_n`).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_TAG}");
        let _ = writeln!(out, "model {}", self.kind);
        let _ = writeln!(out, "m {}", self.m);
        let _ = writeln!(out, "n {}", self.n);
        let _ = writeln!(out, "cond_kappa {}", self.cond_kappa);
        let _ = writeln!(out, "p_fail {}", self.p_fail);
        let _ = writeln!(out, "noise_variance {}", self.noise_variance);
        let _ = writeln!(out, "seed {}", self.seed);
        out.push_str("x_hat");
        for v in &self.x_hat {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
        out.push_str("col_scale");
        for v in &self.col_scale {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
        let _ = writeln!(out, "rows b corrupted a[1..{}]", self.n);
        for i in 0..self.m {
            let _ = write!(out, "{} {}", self.b[i], u8::from(self.corrupted[i]));
            for v in self.row(i) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |msg: String| Error::Parse(msg);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(FORMAT_TAG) {
            return Err(perr("missing instance header".into()));
        }
        let mut header = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| perr(format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(perr(format!("expected `{key}`, found `{line}`")));
            }
            Ok(parts.map(str::to_owned).collect())
        };
        fn one<T: std::str::FromStr>(v: Vec<String>, key: &str) -> Result<T> {
            match v.as_slice() {
                [s] => s.parse().map_err(|_| Error::Parse(format!("bad value for `{key}`: {s}"))),
                _ => Err(Error::Parse(format!("`{key}` takes one value"))),
            }
        }
        fn floats(v: Vec<String>, key: &str) -> Result<Vec<f64>> {
            v.iter()
                .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad float in `{key}`: {s}"))))
                .collect()
        }
        let model: String = one(header("model")?, "model")?;
        let kind = ProblemKind::parse(&model).ok_or_else(|| perr(format!("unknown model `{model}`")))?;
        let m: usize = one(header("m")?, "m")?;
        let n: usize = one(header("n")?, "n")?;
        let cond_kappa: f64 = one(header("cond_kappa")?, "cond_kappa")?;
        let p_fail: f64 = one(header("p_fail")?, "p_fail")?;
        let noise_variance: f64 = one(header("noise_variance")?, "noise_variance")?;
        let seed: u64 = one(header("seed")?, "seed")?;
        let x_hat = floats(header("x_hat")?, "x_hat")?;
        let col_scale = floats(header("col_scale")?, "col_scale")?;
        header("rows")?;
        if x_hat.len() != n {
            return Err(perr(format!("x_hat has {} entries, expected {n}", x_hat.len())));
        }
        let mut a = Vec::with_capacity(m * n);
        let mut b = Vec::with_capacity(m);
        let mut corrupted = Vec::with_capacity(m);
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != n + 2 {
                return Err(perr(format!("row {i}: expected {} fields, found {}", n + 2, vals.len())));
            }
            b.push(vals[0].parse().map_err(|_| perr(format!("row {i}: bad label")))?);
            corrupted.push(match vals[1] {
                "0" => false,
                "1" => true,
                s => return Err(perr(format!("row {i}: bad corruption flag `{s}`"))),
            });
            for s in &vals[2..] {
                a.push(s.parse().map_err(|_| perr(format!("row {i}: bad entry `{s}`")))?);
            }
        }
        if b.len() != m {
            return Err(perr(format!("expected {m} rows, found {}", b.len())));
        }
        let mut inst =
            Self::assemble(kind, m, n, a, b, x_hat, cond_kappa, p_fail, corrupted, seed, col_scale)?;
        inst.noise_variance = noise_variance;
        Ok(inst)
    }
}

/// Growth function `G(s)` bounding how the per-sample Lipschitz constant scales
/// with `s = ‖x‖`.
pub fn growth_function(kind: ProblemKind, s: f64) -> f64 {
    match kind {
        ProblemKind::R1 | ProblemKind::LsConvex => s,
        ProblemKind::R2 => 5.0 * (s.powi(4) + s * s),
        ProblemKind::R3 => (R3_GROWTH_EXPONENT * s).exp(),
        ProblemKind::Lad => 1.0,
    }
}

/// `x¹ = c·x'/‖x'‖` with `x' ~ N(0, I)`, `c = 10` for `r1` and 1 otherwise.
pub fn initial_point(kind: ProblemKind, n: usize, seed: u64) -> Vec<f64> {
    let radius = if kind == ProblemKind::R1 { 10.0 } else { 1.0 };
    let mut rng = stream_rng(seed, INIT_STREAM);
    loop {
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nx = norm(&x);
        if nx > 0.0 {
            return x.into_iter().map(|v| radius * v / nx).collect();
        }
    }
}
