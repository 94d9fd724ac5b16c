//! Pseudoinverse, null-space projectors and metric-tensor weighting.
//!
//! Everything here is a pure function of its inputs. The projector onto the
//! null space of a constraint Jacobian `A` is built from a truncated SVD,
//! `P = I - A⁺A`, with singular values at or below the rank tolerance treated
//! as exact zeros. That truncation is what lets the dynamics pass through
//! kinematic singularities: once `A` becomes numerically rank deficient the
//! corresponding constraint direction simply drops out of `P`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};

/// Singular-value cutoff used to decide the numerical rank of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RankTolerance {
    /// `max(m, n) · σ₁ · ε_machine`.
    #[default]
    Auto,
    /// Fixed absolute cutoff; singular values `<= tol` are zeroed.
    Absolute(f64),
}

impl RankTolerance {
    pub fn resolve(self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        match self {
            RankTolerance::Auto => rows.max(cols) as f64 * sigma_max * f64::EPSILON,
            RankTolerance::Absolute(tol) => tol,
        }
    }
}

/// Thin SVD of a matrix: singular triplets sorted by descending σ.
pub(crate) struct SortedSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

// nalgebra's bidiagonal SVD occasionally returns inaccurate factors for
// matrices with zero rows or exactly repeated structure (reconstruction errors
// of order one were observed), so the decomposition is delegated to faer.
pub(crate) fn sorted_svd(a: &DMatrix<f64>) -> SortedSvd {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return SortedSvd {
            u: DMatrix::zeros(m, 0),
            sigma: Vec::new(),
            v: DMatrix::zeros(n, 0),
        };
    }
    let mat = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let (u, s, v) = match mat.thin_svd() {
        Ok(svd) => {
            let s = svd.S().column_vector();
            (
                DMatrix::from_fn(m, k, |i, j| svd.U()[(i, j)]),
                (0..k).map(|i| s[i]).collect::<Vec<_>>(),
                DMatrix::from_fn(n, k, |i, j| svd.V()[(i, j)]),
            )
        }
        // only reachable for non-finite input; nalgebra yields NaNs there
        Err(_) => {
            let svd = a.clone().svd(true, true);
            (
                svd.u.expect("left singular vectors requested"),
                svd.singular_values.iter().copied().collect(),
                svd.v_t.expect("right singular vectors requested").transpose(),
            )
        }
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let mut su = DMatrix::zeros(m, k);
    let mut sv = DMatrix::zeros(n, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        su.set_column(dst, &u.column(src));
        sv.set_column(dst, &v.column(src));
        sigma.push(s[src]);
    }
    SortedSvd { u: su, sigma, v: sv }
}

/// Singular values of `a` in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    sorted_svd(a).sigma
}

/// Largest singular value (0 for empty matrices).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Number of singular values strictly above the resolved tolerance.
pub fn numerical_rank(a: &DMatrix<f64>, tol: RankTolerance) -> usize {
    let (m, n) = a.shape();
    let sigma = singular_values(a);
    let cutoff = tol.resolve(m, n, sigma.first().copied().unwrap_or(0.0));
    sigma.iter().filter(|&&s| s > cutoff).count()
}

/// Moore-Penrose pseudoinverse with the given rank tolerance.
pub fn pinv(a: &DMatrix<f64>, tol: RankTolerance) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let svd = sorted_svd(a);
    let cutoff = tol.resolve(m, n, svd.sigma.first().copied().unwrap_or(0.0));
    let mut out = DMatrix::zeros(n, m);
    for (i, &s) in svd.sigma.iter().enumerate() {
        if s > cutoff {
            out += svd.v.column(i) * svd.u.column(i).transpose() / s;
        }
    }
    out
}

fn ensure_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} contains non-finite entries")))
    }
}

/// Pseudoinverse of a constraint Jacobian together with its null-space projector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionData {
    /// `A⁺`, n×m.
    pub pinv: DMatrix<f64>,
    /// `P = I - A⁺A`, n×n, symmetric.
    pub projector: DMatrix<f64>,
    pub rank: usize,
    /// Descending, length `min(m, n)`.
    pub singular_values: Vec<f64>,
    /// Absolute cutoff that was applied.
    pub tol: f64,
}

impl ProjectionData {
    pub fn dim(&self) -> usize {
        self.projector.nrows()
    }

    /// `I - P`, the projector onto the row space of `A`.
    pub fn complement(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) - &self.projector
    }

    /// Splits `x` into its null-space and row-space components.
    pub fn decompose(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        decompose(x, &self.projector)
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.projector * x
    }
}

/// Builds `A⁺` and `P = I - A⁺A` from a truncated SVD of `a`.
pub fn pseudo_inverse(a: &DMatrix<f64>, tol: RankTolerance) -> Result<ProjectionData> {
    ensure_finite(a, "Jacobian")?;
    if let RankTolerance::Absolute(t) = tol {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("rank tolerance {t}")));
        }
    }
    let (m, n) = a.shape();
    let svd = sorted_svd(a);
    let cutoff = tol.resolve(m, n, svd.sigma.first().copied().unwrap_or(0.0));

    let mut pinv = DMatrix::zeros(n, m);
    let mut row_space = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (i, &s) in svd.sigma.iter().enumerate() {
        if s > cutoff {
            let v = svd.v.column(i);
            pinv += v * svd.u.column(i).transpose() / s;
            row_space += v * v.transpose();
            rank += 1;
        }
    }
    let p = DMatrix::identity(n, n) - row_space;
    let projector = (&p + p.transpose()) * 0.5;

    Ok(ProjectionData {
        pinv,
        projector,
        rank,
        singular_values: svd.sigma,
        tol: cutoff,
    })
}

/// Orthogonal decomposition `x = Px ⊕ (I - P)x`.
pub fn decompose(x: &DVector<f64>, p: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("decompose (projector rows)", x.len(), p.nrows())?;
    check_dim("decompose (projector cols)", x.len(), p.ncols())?;
    let par = p * x;
    let perp = x - &par;
    Ok((par, perp))
}

/// `C·q̇ = -A⁺·Ȧ·q̇`, the acceleration component forced by the constraint
/// curvature. `C = dP/dt` itself is never formed.
pub fn curvature_product(
    pd: &ProjectionData,
    adot: &DMatrix<f64>,
    qdot: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim("curvature_product (Adot cols)", pd.dim(), adot.ncols())?;
    check_dim("curvature_product (Adot rows)", pd.pinv.ncols(), adot.nrows())?;
    check_dim("curvature_product (qdot)", pd.dim(), qdot.len())?;
    Ok(-(&pd.pinv * (adot * qdot)))
}

/// `I - 2P`.
pub fn reflection(p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    DMatrix::identity(n, n) - p * 2.0
}

/// Symmetric positive-definite weight `W` on the generalized velocity space,
/// with its principal square root and inverse square root.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor {
    pub weight: DMatrix<f64>,
    pub sqrt_weight: DMatrix<f64>,
    pub inv_sqrt_weight: DMatrix<f64>,
}

impl MetricTensor {
    pub fn new(weight: DMatrix<f64>) -> Result<Self> {
        if !weight.is_square() {
            return Err(Error::InvalidMetric(format!(
                "weight must be square, got {}x{}",
                weight.nrows(),
                weight.ncols()
            )));
        }
        ensure_finite(&weight, "metric")?;
        let scale = weight.amax().max(f64::MIN_POSITIVE);
        if (&weight - weight.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidMetric("weight is not symmetric".into()));
        }
        let sym = (&weight + weight.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l.is_nan() || l <= 0.0) {
            return Err(Error::InvalidMetric(format!(
                "weight is not positive definite (eigenvalue {bad:e})"
            )));
        }
        let v = &eig.eigenvectors;
        let sqrt_d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        let inv_sqrt_d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let sqrt_weight = v * sqrt_d * v.transpose();
        let inv_sqrt_weight = v * inv_sqrt_d * v.transpose();
        Ok(Self {
            weight,
            sqrt_weight,
            inv_sqrt_weight,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weight: DMatrix::identity(n, n),
            sqrt_weight: DMatrix::identity(n, n),
            inv_sqrt_weight: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    /// `W = diag(κ⁻² for translational coordinates, 1 for rotational ones)`,
    /// where `kappa` is a characteristic length.
    pub fn characteristic_length(kappa: f64, translational: &[bool]) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidMetric(format!("characteristic length {kappa}")));
        }
        let d: Vec<f64> = translational
            .iter()
            .map(|&t| if t { kappa.powi(-2) } else { 1.0 })
            .collect();
        Self::diagonal(&d)
    }

    pub fn dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn is_identity(&self) -> bool {
        self.weight == DMatrix::identity(self.dim(), self.dim())
    }

    /// `‖f‖_W = (fᵀ W⁻¹ f)^{1/2}` for generalized forces.
    pub fn force_norm(&self, f: &DVector<f64>) -> f64 {
        (&self.inv_sqrt_weight * f).norm()
    }

    /// `‖x‖_W = (xᵀ W x)^{1/2}` for generalized velocities.
    pub fn velocity_norm(&self, x: &DVector<f64>) -> f64 {
        (&self.sqrt_weight * x).norm()
    }
}

/// Projection data of `A_W = A·W^{-1/2}`. The resulting `P_W` is invariant
/// under a change of units that `W` compensates.
pub fn weighted_projection(
    a: &DMatrix<f64>,
    w: &MetricTensor,
    tol: RankTolerance,
) -> Result<ProjectionData> {
    check_dim("weighted_projection", w.dim(), a.ncols())?;
    pseudo_inverse(&(a * &w.inv_sqrt_weight), tol)
}
