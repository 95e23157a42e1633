//! Rank-r reconstructions of transition densities and (up to scale) graphons.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::density::DensityEstimate;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::operators::{SpectralMode, SpectralModel};
use crate::scalar::{midpoint_grid, Real};

/// Default output resolution per axis.
pub const DEFAULT_RECONSTRUCTION_GRID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconstructionMode {
    SymmetricEigen,
    AsymmetricSvd,
}

/// The leading `r` spectral components needed for the truncated expansions.
#[derive(Debug, Clone)]
pub struct RankRModel<T: Real> {
    pub r: usize,
    pub mode: ReconstructionMode,
    /// `λ_ℓ` or `σ_ℓ`.
    pub values: Vec<T>,
    right: DMatrix<T>,
    left: Option<DMatrix<T>>,
    dictionary: Dictionary<T>,
    /// `π̃` (symmetric mode) or `ν̃` (asymmetric mode).
    density: DensityEstimate<T>,
    /// Normalisation `Z̃` applied to the graphon reconstruction.
    pub z: T,
}

impl<T: Real> RankRModel<T> {
    /// Symmetric mode needs `sm.density` (π̃); asymmetric mode needs
    /// `sm.target_density` (ν̃).
    pub fn from_spectral(sm: &SpectralModel<T>, r: usize, z: T) -> Result<Self> {
        if r == 0 || r > sm.rank() {
            return Err(Error::config(format!("rank must be in 1..={}, got {r}", sm.rank())));
        }
        let (mode, values, left, density) = match sm.mode {
            SpectralMode::Eigen => {
                let complex = sm.values.iter().take(r).any(|v| v.im != T::zero())
                    || sm.right_imag.as_ref().is_some_and(|im| im.columns(0, r).iter().any(|v| *v != T::zero()));
                if complex {
                    return Err(Error::config("symmetric reconstruction needs real leading components"));
                }
                let density = sm
                    .density
                    .clone()
                    .ok_or_else(|| Error::config("symmetric reconstruction needs the invariant density"))?;
                let values = sm.values.iter().take(r).map(|v| v.re).collect();
                (ReconstructionMode::SymmetricEigen, values, None, density)
            }
            SpectralMode::Singular => {
                let density = sm
                    .target_density
                    .clone()
                    .ok_or_else(|| Error::config("asymmetric reconstruction needs the target density"))?;
                let left = sm.left.as_ref().map(|u| u.columns(0, r).clone_owned());
                (ReconstructionMode::AsymmetricSvd, sm.singular_values[..r].to_vec(), left, density)
            }
        };
        Ok(Self {
            r,
            mode,
            values,
            right: sm.right.columns(0, r).clone_owned(),
            left,
            dictionary: sm.dictionary.clone(),
            density,
            z,
        })
    }

    /// The same model keeping only the first `r` components.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        if r == 0 || r > self.r {
            return Err(Error::config(format!("rank must be in 1..={}, got {r}", self.r)));
        }
        let mut out = self.clone();
        out.r = r;
        out.values.truncate(r);
        out.right = self.right.columns(0, r).clone_owned();
        out.left = self.left.as_ref().map(|u| u.columns(0, r).clone_owned());
        Ok(out)
    }

    fn table(&self, coeffs: &DMatrix<T>, pts: &[T]) -> Result<DMatrix<T>> {
        Ok(self.dictionary.evaluate(pts)?.transpose() * coeffs)
    }

    /// `grid × r` table of `d(y) · f_ℓ(y)`.
    fn weighted(&self, coeffs: &DMatrix<T>, pts: &[T]) -> Result<DMatrix<T>> {
        let mut t = self.table(coeffs, pts)?;
        for (k, &y) in pts.iter().enumerate() {
            let d = self.density.eval(y);
            t.row_mut(k).iter_mut().for_each(|v| *v *= d);
        }
        Ok(t)
    }

    fn scaled(&self, mut t: DMatrix<T>) -> DMatrix<T> {
        for (l, mut col) in t.column_iter_mut().enumerate() {
            col *= self.values[l];
        }
        t
    }
}

/// Fraction and size of negative entries in a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Negativity {
    pub min: f64,
    pub fraction: f64,
    /// `∫|min(f, 0)| / ∫|f|`.
    pub mass: f64,
}

pub fn negativity<T: Real>(table: &DMatrix<T>) -> Negativity {
    let (mut min, mut count, mut neg, mut total) = (f64::INFINITY, 0usize, 0.0, 0.0);
    for v in table.iter().map(|v| v.as_f64()) {
        min = min.min(v);
        total += v.abs();
        if v < 0.0 {
            count += 1;
            neg -= v;
        }
    }
    Negativity {
        min,
        fraction: count as f64 / table.len().max(1) as f64,
        mass: if total > 0.0 { neg / total } else { 0.0 },
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction<T: Real> {
    pub values: DMatrix<T>,
    pub negativity: Negativity,
}

impl<T: Real> Reconstruction<T> {
    fn new(values: DMatrix<T>) -> Self {
        let negativity = negativity(&values);
        Self { values, negativity }
    }
}

fn check_mode<T: Real>(model: &RankRModel<T>, mode: ReconstructionMode) -> Result<()> {
    if model.mode == mode {
        Ok(())
    } else {
        Err(Error::config(format!("operation needs a {mode:?} model, got {:?}", model.mode)))
    }
}

/// `p_r(x, y) = Σ λ_ℓ φ_ℓ(x) π̃(y) φ_ℓ(y)` on a `grid × grid` midpoint grid.
pub fn reconstruct_p_symmetric<T: Real>(model: &RankRModel<T>, grid: usize) -> Result<Reconstruction<T>> {
    check_mode(model, ReconstructionMode::SymmetricEigen)?;
    let pts = midpoint_grid::<T>(grid);
    let phi = model.table(&model.right, &pts)?;
    let phi_hat = model.weighted(&model.right, &pts)?;
    Ok(Reconstruction::new(model.scaled(phi) * phi_hat.transpose()))
}

/// `w_r(x, y) = Z̃ Σ λ_ℓ φ̂_ℓ(x) φ̂_ℓ(y)` with `φ̂ = π̃ φ`.
pub fn reconstruct_w<T: Real>(model: &RankRModel<T>, grid: usize) -> Result<Reconstruction<T>> {
    check_mode(model, ReconstructionMode::SymmetricEigen)?;
    let pts = midpoint_grid::<T>(grid);
    let phi_hat = model.weighted(&model.right, &pts)?;
    let w = model.scaled(phi_hat.clone()) * phi_hat.transpose() * model.z;
    Ok(Reconstruction::new(w))
}

/// `p_r(x, y) = Σ σ_ℓ v_ℓ(x) u_ℓ(y) ν̃(y)`.
pub fn reconstruct_p_asymmetric<T: Real>(model: &RankRModel<T>, grid: usize) -> Result<Reconstruction<T>> {
    check_mode(model, ReconstructionMode::AsymmetricSvd)?;
    let left = model
        .left
        .as_ref()
        .ok_or_else(|| Error::config("asymmetric reconstruction needs left singular functions"))?;
    let pts = midpoint_grid::<T>(grid);
    let v = model.table(&model.right, &pts)?;
    let u_nu = model.weighted(left, &pts)?;
    Ok(Reconstruction::new(model.scaled(v) * u_nu.transpose()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowReport {
    /// `|∫ p_r(x, y) dy − 1|` per grid row.
    pub deviations: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

pub fn row_normalization_report<T: Real>(table: &DMatrix<T>) -> RowReport {
    let g = table.ncols() as f64;
    let deviations: Vec<f64> = table
        .row_iter()
        .map(|row| (row.iter().map(|v| v.as_f64()).sum::<f64>() / g - 1.0).abs())
        .collect();
    let max = deviations.iter().copied().fold(0.0, f64::max);
    let mean = deviations.iter().sum::<f64>() / deviations.len().max(1) as f64;
    RowReport { deviations, max, mean }
}

/// `‖a − b‖_F / ‖b‖_F`; with `fit_scale`, `a` is first multiplied by the
/// least-squares optimal scalar.
pub fn relative_l2_error<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, fit_scale: bool) -> f64 {
    let dot = |x: &DMatrix<T>, y: &DMatrix<T>| x.iter().zip(y.iter()).map(|(p, q)| p.as_f64() * q.as_f64()).sum::<f64>();
    let c = if fit_scale { dot(a, b) / dot(a, a) } else { 1.0 };
    let num: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(p, q)| (c * p.as_f64() - q.as_f64()).powi(2))
        .sum();
    (num / dot(b, b)).sqrt()
}
