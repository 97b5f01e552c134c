//! Symmetric tridiagonal and small dense SPD factorizations.
//!
//! Both factor types implement [`PrecisionFactor`], which is everything a
//! Langevin proposal with covariance ε²G⁻¹ needs: G⁻¹b, ln det G, vᵀGv and
//! the map z ↦ L⁻ᵀz that turns white noise into a draw with covariance G⁻¹.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Result, SvError};

pub trait PrecisionFactor {
    fn dim(&self) -> usize;
    /// G⁻¹ b.
    fn solve(&self, b: &[f64]) -> Vec<f64>;
    /// ln det G.
    fn log_det(&self) -> f64;
    /// vᵀ G v.
    fn quad_form(&self, v: &[f64]) -> f64;
    /// L⁻ᵀ z, where G = L Lᵀ.
    fn inverse_transpose_mul(&self, z: &[f64]) -> Vec<f64>;
}

/// Draws x ~ N(0, G⁻¹) given a factor of the precision G.
pub fn sample_gaussian_precision<F: PrecisionFactor + ?Sized, R: Rng + ?Sized>(factor: &F, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..factor.dim()).map(|_| rng.sample(StandardNormal)).collect();
    factor.inverse_transpose_mul(&z)
}

/// The identity precision. Used to run manifold kernels with a flat metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityFactor(pub usize);

impl PrecisionFactor for IdentityFactor {
    fn dim(&self) -> usize {
        self.0
    }
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        b.to_vec()
    }
    fn log_det(&self) -> f64 {
        0.0
    }
    fn quad_form(&self, v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum()
    }
    fn inverse_transpose_mul(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }
}

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(SvError::Domain("empty tridiagonal matrix".into()));
        }
        check_len(diag.len() - 1, offdiag.len())?;
        Ok(SymTridiag { diag, offdiag })
    }

    pub fn identity(n: usize) -> Self {
        SymTridiag { diag: vec![1.0; n], offdiag: vec![0.0; n.saturating_sub(1)] }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        check_len(n, x.len())?;
        let mut out: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for i in 0..n - 1 {
            out[i] += self.offdiag[i] * x[i + 1];
            out[i + 1] += self.offdiag[i] * x[i];
        }
        Ok(out)
    }

    pub fn add_to_diagonal(&mut self, shift: f64) {
        self.diag.iter_mut().for_each(|d| *d += shift);
    }

    pub fn cholesky(&self) -> Result<TridiagCholesky> {
        chol_tridiag(self)
    }
}

/// Lower-bidiagonal Cholesky factor: `diag[i] = L[i][i]`, `sub[i] = L[i+1][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagCholesky {
    pub diag: Vec<f64>,
    pub sub: Vec<f64>,
}

/// L Lᵀ = G in O(n). Fails on the first non-positive pivot.
pub fn chol_tridiag(g: &SymTridiag) -> Result<TridiagCholesky> {
    let n = g.dim();
    let mut diag = Vec::with_capacity(n);
    let mut sub = Vec::with_capacity(n.saturating_sub(1));
    let mut pivot = g.diag[0];
    for i in 0..n {
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(SvError::NotPositiveDefinite { pivot: i });
        }
        let l = pivot.sqrt();
        diag.push(l);
        if i + 1 < n {
            let s = g.offdiag[i] / l;
            sub.push(s);
            pivot = g.diag[i + 1] - s * s;
        }
    }
    Ok(TridiagCholesky { diag, sub })
}

impl TridiagCholesky {
    /// Solves L x = b.
    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut x = vec![0.0; n];
        x[0] = b[0] / self.diag[0];
        for i in 1..n {
            x[i] = (b[i] - self.sub[i - 1] * x[i - 1]) / self.diag[i];
        }
        x
    }

    /// Solves Lᵀ x = b.
    fn backward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut x = vec![0.0; n];
        x[n - 1] = b[n - 1] / self.diag[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (b[i] - self.sub[i] * x[i + 1]) / self.diag[i];
        }
        x
    }
}

impl PrecisionFactor for TridiagCholesky {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim(), "solve: length mismatch");
        self.backward(&self.forward(b))
    }

    fn log_det(&self) -> f64 {
        2.0 * self.diag.iter().map(|d| d.ln()).sum::<f64>()
    }

    fn quad_form(&self, v: &[f64]) -> f64 {
        // ‖Lᵀ v‖²
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let mut w = self.diag[i] * v[i];
            if i + 1 < n {
                w += self.sub[i] * v[i + 1];
            }
            acc += w * w;
        }
        acc
    }

    fn inverse_transpose_mul(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.dim(), "inverse_transpose_mul: length mismatch");
        self.backward(z)
    }
}

/// Dense symmetric matrix of small dimension, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSpd {
    dim: usize,
    data: Vec<f64>,
}

pub const MAX_DENSE_DIM: usize = 8;

impl DenseSpd {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim <= MAX_DENSE_DIM, "dense metric limited to dimension {MAX_DENSE_DIM}");
        DenseSpd { dim, data: vec![0.0; dim * dim] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || dim > MAX_DENSE_DIM {
            return Err(SvError::Domain(format!("dense dimension {dim} out of range")));
        }
        let mut m = DenseSpd::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            check_len(dim, row.len())?;
            m.data[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        if !m.is_symmetric(1e-14) {
            return Err(SvError::Domain("matrix is not symmetric".into()));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets (i, j) and (j, i).
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn add(&self, other: &DenseSpd) -> DenseSpd {
        assert_eq!(self.dim, other.dim);
        DenseSpd {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| {
            (0..i).all(|j| {
                let (a, b) = (self.get(i, j), self.get(j, i));
                (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
            })
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn cholesky(&self) -> Result<DenseCholesky> {
        let d = self.dim;
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut s = self.get(j, j);
            for k in 0..j {
                s -= l[j * d + k] * l[j * d + k];
            }
            if !(s > 0.0) || !s.is_finite() {
                return Err(SvError::NotPositiveDefinite { pivot: j });
            }
            let ljj = s.sqrt();
            l[j * d + j] = ljj;
            for i in j + 1..d {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(DenseCholesky { dim: d, l })
    }

    /// Cholesky with the diagonal-jitter ladder: on failure add
    /// 1e−8·(tr/d)·I, doubling the shift up to three times. Returns the
    /// factor and how many shifts were needed.
    pub fn cholesky_with_jitter(&self) -> Result<(DenseCholesky, u32)> {
        if let Ok(f) = self.cholesky() {
            return Ok((f, 0));
        }
        let base = 1e-8 * (self.trace() / self.dim as f64).abs().max(f64::MIN_POSITIVE);
        let mut shift = base;
        let mut last = SvError::NotPositiveDefinite { pivot: 0 };
        for attempt in 1..=4 {
            let mut m = self.clone();
            for i in 0..self.dim {
                m.data[i * self.dim + i] += shift;
            }
            match m.cholesky() {
                Ok(f) => return Ok((f, attempt)),
                Err(e) => last = e,
            }
            shift *= 2.0;
        }
        Err(last)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseCholesky {
    dim: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.dim + j]
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut x = vec![0.0; d];
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * d + k] * x[k];
            }
            x[i] = s / self.l[i * d + i];
        }
        x
    }

    fn backward(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let mut s = b[i];
            for k in i + 1..d {
                s -= self.l[k * d + i] * x[k];
            }
            x[i] = s / self.l[i * d + i];
        }
        x
    }
}

impl PrecisionFactor for DenseCholesky {
    fn dim(&self) -> usize {
        self.dim
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim, "solve: length mismatch");
        self.backward(&self.forward(b))
    }

    fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.l[i * self.dim + i].ln()).sum::<f64>()
    }

    fn quad_form(&self, v: &[f64]) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|j| {
                let w: f64 = (j..d).map(|i| self.l[i * d + j] * v[i]).sum();
                w * w
            })
            .sum()
    }

    fn inverse_transpose_mul(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.dim, "inverse_transpose_mul: length mismatch");
        self.backward(z)
    }
}

/// Checked solve for callers that hold an arbitrary factor.
pub fn solve<F: PrecisionFactor + ?Sized>(factor: &F, b: &[f64]) -> Result<Vec<f64>> {
    check_len(factor.dim(), b.len())?;
    Ok(factor.solve(b))
}
