//! Covariance and Galerkin matrices of the Koopman, reweighted Perron–Frobenius
//! and forward–backward operators, and their spectral decompositions.

use log::warn;
use nalgebra::{Cholesky, Complex, DMatrix, DVector, Dyn, Schur};
use serde::{Deserialize, Serialize};

use crate::density::DensityEstimate;
use crate::dictionary::{symmetrize, Dictionary};
use crate::error::{Error, Result};
use crate::graphon::{degree_profile, Graphon};
use crate::sampling::PairedData;
use crate::scalar::{midpoint_grid, Real};

/// Quadrature grid for [`quadrature_covariances`].
pub const DEFAULT_QUADRATURE_GRID: usize = 1000;

/// `λ(F̃)` below this cannot define a singular triple.
pub const RANK_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceSource {
    Empirical,
    Quadrature,
}

/// Uncentred (cross-)covariances of the dictionary under the sampling measure.
#[derive(Debug, Clone)]
pub struct CovarianceSet<T: Real> {
    pub cxx: DMatrix<T>,
    pub cxy: DMatrix<T>,
    pub cyy: DMatrix<T>,
    pub cyx: DMatrix<T>,
    pub m: usize,
    pub source: CovarianceSource,
    pub dictionary: Dictionary<T>,
}

pub fn empirical_covariances<T: Real>(dict: &Dictionary<T>, pd: &PairedData<T>) -> Result<CovarianceSet<T>> {
    if pd.is_empty() {
        return Err(Error::domain("no snapshot pairs"));
    }
    let n = dict.len();
    if pd.len() < n {
        warn!("only {} samples for {} basis functions", pd.len(), n);
    }

    let (cxx, cxy, cyy) = if pd.symmetrized {
        // Work from the forward half so the required equalities hold exactly.
        let h = pd.forward_len();
        let px = dict.evaluate(&pd.x[..h])?;
        let py = dict.evaluate(&pd.y[..h])?;
        let two_h = T::count(2 * h);
        let a = &px * py.transpose();
        let cxy = (&a + a.transpose()) / two_h;
        let mut cxx = (&px * px.transpose() + &py * py.transpose()) / two_h;
        symmetrize(&mut cxx);
        (cxx.clone(), cxy, cxx)
    } else {
        let m = T::count(pd.len());
        let px = dict.evaluate(&pd.x)?;
        let py = dict.evaluate(&pd.y)?;
        let mut cxx = &px * px.transpose() / m;
        let mut cyy = &py * py.transpose() / m;
        symmetrize(&mut cxx);
        symmetrize(&mut cyy);
        (cxx, &px * py.transpose() / m, cyy)
    };
    Ok(CovarianceSet {
        cyx: cxy.transpose(),
        cxx,
        cxy,
        cyy,
        m: pd.len(),
        source: CovarianceSource::Empirical,
        dictionary: dict.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureWeight {
    /// The invariant density `π = d/Z` (symmetric graphons only).
    Invariant,
    Uniform,
}

/// Covariances under `μ(x) p(x, y)` by midpoint quadrature on a `grid`-point
/// rule, with `ν = 𝒫μ` as the distribution of `y`.
pub fn quadrature_covariances<T: Real>(
    graphon: &Graphon<T>,
    dict: &Dictionary<T>,
    weight: QuadratureWeight,
    grid: usize,
) -> Result<CovarianceSet<T>> {
    if weight == QuadratureWeight::Invariant && !graphon.is_symmetric() {
        return Err(Error::Symmetry);
    }
    let profile = degree_profile(graphon, grid)?;
    let g = T::count(grid);
    let pts = midpoint_grid::<T>(grid);
    let mut p = graphon.sample_grid(grid);
    for i in 0..grid {
        let d = profile.d_out[i];
        p.row_mut(i).iter_mut().for_each(|v| *v /= d);
    }
    let mu: Vec<T> = match weight {
        QuadratureWeight::Uniform => vec![T::one(); grid],
        QuadratureWeight::Invariant => {
            let z = profile.d_out.iter().fold(T::zero(), |a, &b| a + b) / g;
            profile.d_out.iter().map(|&d| d / z).collect()
        }
    };
    let nu: Vec<T> = (0..grid)
        .map(|k| (0..grid).fold(T::zero(), |a, i| a + mu[i] * p[(i, k)]) / g)
        .collect();

    let phi = dict.evaluate(&pts)?;
    // (𝒦φⱼ)(xᵢ) for every grid point, as a grid × n table.
    let k_phi = &p * phi.transpose() / g;
    let weighted = |w: &[T]| {
        let mut out = phi.clone();
        for (k, mut col) in out.column_iter_mut().enumerate() {
            col *= w[k];
        }
        out
    };
    let phi_mu = weighted(&mu);
    let mut cxx = &phi_mu * phi.transpose() / g;
    let mut cyy = &weighted(&nu) * phi.transpose() / g;
    let cxy = &phi_mu * k_phi / g;
    symmetrize(&mut cxx);
    symmetrize(&mut cyy);
    Ok(CovarianceSet {
        cyx: cxy.transpose(),
        cxx,
        cxy,
        cyy,
        m: grid,
        source: CovarianceSource::Quadrature,
        dictionary: dict.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization<T> {
    /// `1e-10 · tr(C_xx) / n`.
    Auto,
    Fixed(T),
}

impl<T: Real> Regularization<T> {
    pub fn resolve(&self, cxx: &DMatrix<T>) -> T {
        match self {
            Regularization::Auto => T::lit(1e-10) * cxx.trace() / T::count(cxx.nrows()),
            Regularization::Fixed(e) => *e,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OperatorMatrices<T: Real> {
    /// Koopman: `(C_xx + εI)⁻¹ C_xy`.
    pub k: DMatrix<T>,
    /// Reweighted Perron–Frobenius: `(C_yy + εI)⁻¹ C_yx`.
    pub t: DMatrix<T>,
    /// Forward–backward: `K̃ T̃`.
    pub f: DMatrix<T>,
    pub epsilon: T,
    pub cov: CovarianceSet<T>,
    chol_x: Cholesky<T, Dyn>,
    chol_y: Cholesky<T, Dyn>,
}

fn factor<T: Real>(c: &DMatrix<T>, eps: T, name: &str) -> Result<Cholesky<T, Dyn>> {
    let mut a = c.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += eps;
    }
    Cholesky::new(a).ok_or_else(|| Error::SingularMatrix(format!("{name} + εI is not positive definite (ε = {eps})")))
}

pub fn galerkin_matrices<T: Real>(cov: &CovarianceSet<T>, reg: Regularization<T>) -> Result<OperatorMatrices<T>> {
    let eps = reg.resolve(&cov.cxx);
    if eps < T::zero() {
        return Err(Error::config("regularization must be non-negative"));
    }
    let chol_x = factor(&cov.cxx, eps, "C_xx")?;
    let chol_y = factor(&cov.cyy, eps, "C_yy")?;
    let k = chol_x.solve(&cov.cxy);
    let t = chol_y.solve(&cov.cyx);
    let f = &k * &t;
    Ok(OperatorMatrices {
        k,
        t,
        f,
        epsilon: eps,
        cov: cov.clone(),
        chol_x,
        chol_y,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operator {
    K,
    T,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralMode {
    Eigen,
    Singular,
}

/// Leading spectral components of a Galerkin matrix, with their coefficient
/// vectors in the dictionary basis (one column per component).
#[derive(Debug, Clone)]
pub struct SpectralModel<T: Real> {
    pub mode: SpectralMode,
    pub operator: Operator,
    /// All eigenvalues (eigen mode) or all eigenvalues of `F̃` (singular mode).
    pub values: Vec<Complex<T>>,
    /// `σ = √max(λ(F̃), 0)`; empty in eigen mode.
    pub singular_values: Vec<T>,
    /// Right coefficients `ξ` (eigen) or `v` (singular), `n × r`.
    pub right: DMatrix<T>,
    /// Imaginary part of `right` when complex eigenvectors are present.
    pub right_imag: Option<DMatrix<T>>,
    /// Left singular coefficients `u`, `n × r`.
    pub left: Option<DMatrix<T>>,
    pub dictionary: Dictionary<T>,
    /// `π̃` (or `μ̃`): density of the `x` samples.
    pub density: Option<DensityEstimate<T>>,
    /// `ν̃`: density of the `y` samples.
    pub target_density: Option<DensityEstimate<T>>,
    pub epsilon: T,
}

impl<T: Real> SpectralModel<T> {
    /// Number of components with coefficient vectors.
    pub fn rank(&self) -> usize {
        self.right.ncols()
    }

    /// Real parts (eigen mode) or singular values, in model order.
    pub fn spectral_values(&self) -> Vec<T> {
        match self.mode {
            SpectralMode::Eigen => self.values.iter().map(|v| v.re).collect(),
            SpectralMode::Singular => self.singular_values.clone(),
        }
    }

    pub fn max_imaginary(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.im.abs()))
    }

    pub fn with_densities(mut self, density: Option<DensityEstimate<T>>, target: Option<DensityEstimate<T>>) -> Self {
        self.density = density;
        self.target_density = target;
        self
    }

    fn functions(&self, coeffs: &DMatrix<T>, xs: &[T], r: usize) -> Result<DMatrix<T>> {
        if r > coeffs.ncols() {
            return Err(Error::config(format!("requested {r} components, model has {}", coeffs.ncols())));
        }
        let phi = self.dictionary.evaluate(xs)?;
        Ok(phi.transpose() * coeffs.columns(0, r))
    }

    /// `m × r` table of `φ_ℓ(x) = ξ_ℓᵀφ(x)` (real parts) or `v_ℓ(x)`.
    pub fn right_functions(&self, xs: &[T], r: usize) -> Result<DMatrix<T>> {
        self.functions(&self.right, xs, r)
    }

    /// `m × r` table of the left singular functions `u_ℓ(x)`.
    pub fn left_functions(&self, xs: &[T], r: usize) -> Result<DMatrix<T>> {
        match &self.left {
            Some(u) => self.functions(u, xs, r),
            None => Err(Error::config("left singular functions need a singular-mode model")),
        }
    }
}

fn sort_desc<T: Real>(a: &Complex<T>, b: &Complex<T>) -> std::cmp::Ordering {
    b.re.partial_cmp(&a.re)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
}

/// Makes the largest-magnitude entry positive.
fn fix_sign<T: Real>(v: &mut DVector<T>) {
    let i = v.iamax();
    if v[i] < T::zero() {
        *v = -v.clone();
    }
}

/// Solves `A ξ = λ (C + εI) ξ` for symmetric `A` by reducing with the Cholesky
/// factor of `C + εI`. Returns the eigenvalues in descending order and the
/// first `r` eigenvectors, normalised to `ξᵀCξ = 1`.
fn generalized_symmetric<T: Real>(
    a: &DMatrix<T>,
    chol: &Cholesky<T, Dyn>,
    c: &DMatrix<T>,
    r: usize,
) -> Result<(Vec<T>, DMatrix<T>)> {
    let l = chol.l();
    let n = a.nrows();
    let y = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::SingularMatrix("triangular solve failed".into()))?;
    let mut m = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::SingularMatrix("triangular solve failed".into()))?;
    symmetrize(&mut m);
    let eig = nalgebra::SymmetricEigen::try_new(m, T::default_epsilon(), 0)
        .ok_or_else(|| Error::Convergence("symmetric eigensolver".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let lt = l.transpose();
    let mut vecs = DMatrix::zeros(n, r);
    for (col, &i) in order.iter().take(r).enumerate() {
        let z = eig.eigenvectors.column(i).clone_owned();
        let mut xi = lt
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::SingularMatrix("triangular solve failed".into()))?;
        let norm = (xi.transpose() * c * &xi)[(0, 0)];
        if norm > T::zero() {
            xi /= norm.sqrt();
        }
        fix_sign(&mut xi);
        vecs.set_column(col, &xi);
    }
    Ok((values, vecs))
}

/// Eigenvalues of a general real matrix with eigenvectors for the first `r`
/// by inverse iteration in complex arithmetic, normalised to `ξᴴCξ = 1` with
/// the largest entry real and positive.
/// Eigenvalues with the real and imaginary parts of the leading eigenvectors.
type EigenParts<T> = (Vec<Complex<T>>, DMatrix<T>, DMatrix<T>);

fn general_eigen<T: Real>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    r: usize,
) -> Result<EigenParts<T>> {
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), T::default_epsilon(), 100 * n.max(100))
        .ok_or_else(|| Error::Convergence("Schur decomposition".into()))?;
    let mut values: Vec<Complex<T>> = schur.complex_eigenvalues().iter().copied().collect();
    // Modulus first so that complex pairs rank with real eigenvalues of the
    // same size; conjugates tie exactly and fall back to `sort_desc`.
    values.sort_by(|a, b| {
        let (ma, mb) = (nalgebra::ComplexField::modulus(*a), nalgebra::ComplexField::modulus(*b));
        mb.partial_cmp(&ma).unwrap_or(std::cmp::Ordering::Equal).then(sort_desc(a, b))
    });

    let ac: DMatrix<Complex<T>> = a.map(|v| Complex::new(v, T::zero()));
    let cc: DMatrix<Complex<T>> = c.map(|v| Complex::new(v, T::zero()));
    let scale = a.amax().max(T::one());
    let mut re = DMatrix::zeros(n, r);
    let mut im = DMatrix::zeros(n, r);
    let pair_tol = (T::lit(1e-10) * scale).powi(2);
    let mut prev: Option<(Complex<T>, DVector<Complex<T>>)> = None;
    for (l, &lam) in values.iter().enumerate().take(r) {
        let v = match &prev {
            Some((p, pv)) if lam.im < T::zero() && (lam - p.conj()).norm_sqr() <= pair_tol => pv.map(|z| z.conj()),
            _ => inverse_iteration(&ac, lam, scale)?,
        };
        let norm = (v.adjoint() * &cc * &v)[(0, 0)].re;
        let mut v = if norm > T::zero() { v / Complex::new(norm.sqrt(), T::zero()) } else { v };
        // `icamax` ranks by |re| + |im|, which is not invariant under the
        // phase rotation below; use the true modulus.
        let (i, modulus) = v
            .iter()
            .map(|z| nalgebra::ComplexField::modulus(*z))
            .enumerate()
            .fold((0, T::zero()), |(bi, bm), (i, m)| if m > bm { (i, m) } else { (bi, bm) });
        let phase = v[i].conj() / Complex::new(modulus, T::zero());
        v *= phase;
        // A real eigenvalue has a real eigenvector; after the phase fix only
        // round-off remains in the imaginary part.
        let real = lam.im == T::zero();
        for k in 0..n {
            re[(k, l)] = v[k].re;
            im[(k, l)] = if real { T::zero() } else { v[k].im };
        }
        prev = Some((lam, v));
    }
    Ok((values, re, im))
}

fn inverse_iteration<T: Real>(a: &DMatrix<Complex<T>>, lam: Complex<T>, scale: T) -> Result<DVector<Complex<T>>> {
    let n = a.nrows();
    let mut v: DVector<Complex<T>> =
        DVector::from_fn(n, |i, _| Complex::new(T::one() + T::lit(0.5) * T::count(i + 1).sin(), T::zero()));
    let mut delta = T::lit(1e-10) * scale;
    for _ in 0..8 {
        let mut m = a.clone();
        let shift = lam + Complex::new(delta, delta);
        for i in 0..n {
            m[(i, i)] -= shift;
        }
        let lu = m.lu();
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&v) {
                Some(w) if w.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
                    let norm = w.norm();
                    v = w / Complex::new(norm, T::zero());
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(v);
        }
        delta *= T::lit(100.0);
    }
    Err(Error::Convergence(format!("inverse iteration for eigenvalue {lam}")))
}

fn is_symmetric<T: Real>(m: &DMatrix<T>) -> bool {
    let tol = T::lit(1e-10) * m.amax().max(T::default_epsilon());
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Dominant eigenpairs of `K̃`, `T̃` or `F̃`. Real spectra (symmetric
/// covariances, and always for `F̃`) are sorted by value; otherwise by modulus,
/// then real part, then imaginary part, all descending. Coefficient vectors are returned for the
/// first `r_max` components.
pub fn eigendecompose<T: Real>(om: &OperatorMatrices<T>, which: Operator, r_max: usize) -> Result<SpectralModel<T>> {
    let n = om.k.nrows();
    if r_max == 0 || r_max > n {
        return Err(Error::config(format!("r_max must be in 1..={n}, got {r_max}")));
    }
    let cov = &om.cov;
    let (values, right, right_imag) = match which {
        Operator::F => {
            // C_xy (C_yy + εI)⁻¹ C_yx is symmetric positive semidefinite.
            let mut a = &cov.cxy * om.chol_y.solve(&cov.cyx);
            symmetrize(&mut a);
            let (vals, vecs) = generalized_symmetric(&a, &om.chol_x, &cov.cxx, r_max)?;
            (vals.into_iter().map(|v| Complex::new(v, T::zero())).collect(), vecs, None)
        }
        Operator::K if is_symmetric(&cov.cxy) => {
            let mut a = cov.cxy.clone();
            symmetrize(&mut a);
            let (vals, vecs) = generalized_symmetric(&a, &om.chol_x, &cov.cxx, r_max)?;
            (vals.into_iter().map(|v| Complex::new(v, T::zero())).collect(), vecs, None)
        }
        Operator::T if is_symmetric(&cov.cyx) => {
            let mut a = cov.cyx.clone();
            symmetrize(&mut a);
            let (vals, vecs) = generalized_symmetric(&a, &om.chol_y, &cov.cyy, r_max)?;
            (vals.into_iter().map(|v| Complex::new(v, T::zero())).collect(), vecs, None)
        }
        Operator::K | Operator::T => {
            let (mat, c) = if which == Operator::K { (&om.k, &cov.cxx) } else { (&om.t, &cov.cyy) };
            let (vals, re, im) = general_eigen(mat, c, r_max)?;
            let complex = im.iter().any(|v| *v != T::zero());
            (vals, re, complex.then_some(im))
        }
    };
    Ok(SpectralModel {
        mode: SpectralMode::Eigen,
        operator: which,
        values,
        singular_values: Vec::new(),
        right,
        right_imag,
        left: None,
        dictionary: cov.dictionary.clone(),
        density: None,
        target_density: None,
        epsilon: om.epsilon,
    })
}

/// Singular triples of the reweighted Perron–Frobenius operator from the
/// eigendecomposition of `F̃`: `σ = √λ`, `v = ξ`, `u = λ^(−1/2) T̃ ξ`.
pub fn singular_decompose<T: Real>(om: &OperatorMatrices<T>, r_max: usize) -> Result<SpectralModel<T>> {
    let mut sm = eigendecompose(om, Operator::F, r_max)?;
    for (index, v) in sm.values.iter().enumerate().take(r_max) {
        if v.re < T::lit(RANK_THRESHOLD) {
            return Err(Error::Rank {
                index: index + 1,
                value: v.re.as_f64(),
            });
        }
    }
    if let Some(neg) = sm.values.iter().map(|v| v.re).find(|v| *v < T::zero()) {
        warn!("forward-backward matrix has negative eigenvalue {neg}; clamped to 0");
    }
    sm.singular_values = sm.values.iter().map(|v| v.re.max(T::zero()).sqrt()).collect();
    let mut u = &om.t * &sm.right;
    for (l, mut col) in u.column_iter_mut().enumerate() {
        col /= sm.values[l].re.sqrt();
    }
    sm.left = Some(u);
    sm.mode = SpectralMode::Singular;
    Ok(sm)
}

/// Perron–Frobenius eigenfunctions `φ̂_ℓ = π̃ · φ_ℓ`.
#[derive(Debug, Clone, Copy)]
pub struct PfEigenfunctions<'a, T: Real> {
    model: &'a SpectralModel<T>,
    density: &'a DensityEstimate<T>,
}

pub fn pf_eigenfunctions<'a, T: Real>(
    sm: &'a SpectralModel<T>,
    density: &'a DensityEstimate<T>,
) -> Result<PfEigenfunctions<'a, T>> {
    if sm.mode != SpectralMode::Eigen {
        return Err(Error::config("Perron-Frobenius eigenfunctions need an eigen-mode model"));
    }
    Ok(PfEigenfunctions { model: sm, density })
}

impl<T: Real> PfEigenfunctions<'_, T> {
    /// `m × r` table of `φ̂_ℓ(x)`.
    pub fn evaluate(&self, xs: &[T], r: usize) -> Result<DMatrix<T>> {
        let mut table = self.model.right_functions(xs, r)?;
        for (k, &x) in xs.iter().enumerate() {
            let d = self.density.eval(x);
            table.row_mut(k).iter_mut().for_each(|v| *v *= d);
        }
        Ok(table)
    }
}

/// Eigenvalues `1 − λ_ℓ` of the random-walk normalised Laplacian.
pub fn laplacian_spectrum<T: Real>(sm: &SpectralModel<T>) -> Result<Vec<Complex<T>>> {
    if sm.mode != SpectralMode::Eigen {
        return Err(Error::config("the Laplacian spectrum needs an eigen-mode model"));
    }
    Ok(sm.values.iter().map(|v| Complex::new(T::one(), T::zero()) - v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{make_gaussian, make_indicator};
    use crate::sampling::{pairs, symmetrized_pairs, Trajectory};

    fn quad(g: &Graphon<f64>, n: usize, w: QuadratureWeight) -> OperatorMatrices<f64> {
        let d = make_indicator(n).unwrap();
        let cs = quadrature_covariances(g, &d, w, 1000).unwrap();
        galerkin_matrices(&cs, Regularization::Auto).unwrap()
    }

    #[test]
    fn one_pair_outer_products() {
        let d = make_indicator::<f64>(2).unwrap();
        let pd = PairedData {
            x: vec![0.1],
            y: vec![0.6],
            symmetrized: false,
            periodic: false,
        };
        let cs = empirical_covariances(&d, &pd).unwrap();
        assert_eq!(cs.cxx, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(cs.cxy, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(cs.cyx, cs.cxy.transpose());
    }

    #[test]
    fn symmetrized_covariances_are_exactly_symmetric() {
        let states: Vec<f64> = (0..500).map(|i| ((i * 37 % 101) as f64) / 100.0).collect();
        let t = Trajectory::new(states, 0, "test", false).unwrap();
        let d = make_gaussian(20, 0.05, false).unwrap();
        let cs = empirical_covariances(&d, &symmetrized_pairs(&t)).unwrap();
        assert_eq!(cs.cxx, cs.cyy);
        assert_eq!(cs.cxy, cs.cxy.transpose());
        assert_eq!(cs.m, 998);

        let plain = empirical_covariances(&d, &pairs(&t)).unwrap();
        assert_ne!(plain.cxy, plain.cxy.transpose());
    }

    #[test]
    fn constant_graphon_is_rank_one() {
        let g = Graphon::<f64>::constant(0.5).unwrap();
        let om = quad(&g, 2, QuadratureWeight::Invariant);
        for v in om.k.iter() {
            assert!((v - 0.5).abs() < 1e-9);
        }
        let sm = eigendecompose(&om, Operator::K, 2).unwrap();
        assert!((sm.values[0].re - 1.0).abs() < 1e-9);
        assert!(sm.values[1].norm() < 1e-8);
    }

    #[test]
    fn two_block_second_eigenvalue() {
        let g = Graphon::<f64>::two_block(0.8, 0.2).unwrap();
        let sm = eigendecompose(&quad(&g, 2, QuadratureWeight::Invariant), Operator::K, 2).unwrap();
        assert!((sm.values[0].re - 1.0).abs() < 1e-6);
        assert!((sm.values[1].re - 0.6).abs() < 1e-6);
    }

    #[test]
    fn bipartite_flips() {
        let g = Graphon::<f64>::bipartite();
        let om = quad(&g, 2, QuadratureWeight::Uniform);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((&om.k - &expected).amax() < 1e-9);
        let sm = eigendecompose(&om, Operator::K, 2).unwrap();
        assert!((sm.values[0].re - 1.0).abs() < 1e-9);
        assert!((sm.values[1].re + 1.0).abs() < 1e-9);
        // A density concentrated on one half returns after two steps.
        let rho = DVector::from_vec(vec![2.0, 0.0]);
        let pt = om.k.transpose();
        assert!((&pt * &pt * &rho - &rho).amax() < 1e-9);
    }

    #[test]
    fn indicator_koopman_fixes_constants() {
        let g = Graphon::<f64>::triple_peak();
        let d = make_indicator(50).unwrap();
        let cs = quadrature_covariances(&g, &d, QuadratureWeight::Invariant, 1000).unwrap();
        let om = galerkin_matrices(&cs, Regularization::Fixed(0.0)).unwrap();
        let ones = DVector::from_element(50, 1.0);
        assert!((&om.k * &ones - &ones).amax() < 1e-10);
    }

    #[test]
    fn adjoint_identity() {
        let g = Graphon::<f64>::quadruple_peak();
        let d = make_gaussian(10, 0.1, false).unwrap();
        let cs = quadrature_covariances(&g, &d, QuadratureWeight::Uniform, 400).unwrap();
        let om = galerkin_matrices(&cs, Regularization::Fixed(0.0)).unwrap();
        let a = DVector::from_fn(10, |i, _| (i as f64 * 0.7).sin());
        let b = DVector::from_fn(10, |i, _| (i as f64 * 1.3).cos());
        let lhs = (&om.k * &a).dot(&(&cs.cxx * &b));
        let rhs = a.dot(&(&cs.cyy * (&om.t * &b)));
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn invariant_weight_needs_symmetry() {
        let d = make_indicator::<f64>(4).unwrap();
        let g = Graphon::<f64>::quadruple_peak();
        assert!(matches!(
            quadrature_covariances(&g, &d, QuadratureWeight::Invariant, 100),
            Err(Error::Symmetry)
        ));
    }

    #[test]
    fn singular_values_square_to_forward_backward_eigenvalues() {
        let g = Graphon::<f64>::quadruple_peak();
        let d = make_indicator(20).unwrap();
        let cs = quadrature_covariances(&g, &d, QuadratureWeight::Uniform, 1000).unwrap();
        let om = galerkin_matrices(&cs, Regularization::Auto).unwrap();
        let sm = singular_decompose(&om, 4).unwrap();
        assert!((sm.singular_values[0] - 1.0).abs() < 1e-6);
        for l in 0..4 {
            assert!((sm.singular_values[l].powi(2) - sm.values[l].re).abs() < 1e-10);
            let v = sm.right.column(l);
            let u = sm.left.as_ref().unwrap().column(l);
            assert!(((v.transpose() * &cs.cxx * v)[(0, 0)] - 1.0).abs() < 1e-8);
            assert!(((u.transpose() * &cs.cyy * u)[(0, 0)] - 1.0).abs() < 1e-8);
        }
        // Exactly rank four: the fifth component cannot be requested.
        assert!(matches!(singular_decompose(&om, 5), Err(Error::Rank { index: 5, .. })));
    }

    #[test]
    fn general_route_keeps_conjugate_pairs() {
        let g = Graphon::<f64>::quadruple_peak();
        let om = quad(&g, 40, QuadratureWeight::Uniform);
        let sm = eigendecompose(&om, Operator::K, 4).unwrap();
        let (a, b) = (sm.values[2], sm.values[3]);
        assert!(a.im > 0.1 && (a.re - b.re).abs() < 1e-12 && (a.im + b.im).abs() < 1e-12);
        let im = sm.right_imag.as_ref().unwrap();
        for k in 0..40 {
            assert!((sm.right[(k, 2)] - sm.right[(k, 3)]).abs() < 1e-12);
            assert!((im[(k, 2)] + im[(k, 3)]).abs() < 1e-12);
        }
        // Residual of K ξ = λ ξ for the complex pair.
        let xi: DVector<Complex<f64>> = DVector::from_fn(40, |k, _| Complex::new(sm.right[(k, 2)], im[(k, 2)]));
        let kc = om.k.map(|v| Complex::new(v, 0.0));
        assert!((&kc * &xi - &xi * a).camax() < 1e-8);
    }

    #[test]
    fn eigenvectors_are_normalised_and_sign_fixed() {
        let g = Graphon::<f64>::triple_peak();
        let om = quad(&g, 30, QuadratureWeight::Invariant);
        let sm = eigendecompose(&om, Operator::K, 3).unwrap();
        for l in 0..3 {
            let xi = sm.right.column(l);
            assert!(((xi.transpose() * &om.cov.cxx * xi)[(0, 0)] - 1.0).abs() < 1e-10);
            assert!(xi[xi.iamax()] > 0.0);
            let res = &om.k * xi - xi * sm.values[l].re;
            assert!(res.amax() < 1e-8);
        }
        // φ₁ is constant.
        let f = sm.right_functions(&[0.1, 0.5, 0.9], 1).unwrap();
        assert!((f[0] - f[1]).abs() < 1e-8 && (f[1] - f[2]).abs() < 1e-8);
    }

    #[test]
    fn laplacian_shifts_spectrum() {
        let g = Graphon::<f64>::two_block(0.8, 0.2).unwrap();
        let sm = eigendecompose(&quad(&g, 2, QuadratureWeight::Invariant), Operator::K, 2).unwrap();
        let lap = laplacian_spectrum(&sm).unwrap();
        assert!(lap[0].norm() < 1e-9);
        assert!((lap[1].re - 0.4).abs() < 1e-6);
    }

    #[test]
    fn invalid_rank_requests() {
        let g = Graphon::<f64>::constant(0.5).unwrap();
        let om = quad(&g, 2, QuadratureWeight::Invariant);
        assert!(eigendecompose(&om, Operator::K, 3).is_err());
        assert!(eigendecompose(&om, Operator::K, 0).is_err());
    }

    #[test]
    fn singular_covariance_fails_without_regularization() {
        let d = make_indicator::<f64>(4).unwrap();
        let pd = PairedData {
            x: vec![0.1; 20],
            y: vec![0.1; 20],
            symmetrized: false,
            periodic: false,
        };
        let cs = empirical_covariances(&d, &pd).unwrap();
        assert!(matches!(
            galerkin_matrices(&cs, Regularization::Fixed(0.0)),
            Err(Error::SingularMatrix(_))
        ));
    }
}
