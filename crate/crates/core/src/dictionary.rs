//! Basis-function dictionaries `φ(x) = [φ₁(x), …, φₙ(x)]ᵀ` for Galerkin/EDMD.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{midpoint_grid, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryKind {
    Indicator,
    Gaussian,
}

/// Serializable description of a dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionarySpec {
    pub kind: DictionaryKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub periodic: bool,
}

impl DictionarySpec {
    pub fn build<T: Real>(&self) -> Result<Dictionary<T>> {
        match self.kind {
            DictionaryKind::Indicator => make_indicator(self.n),
            DictionaryKind::Gaussian => {
                let sigma = self
                    .sigma
                    .ok_or_else(|| Error::config("gaussian dictionary needs a bandwidth"))?;
                make_gaussian(self.n, T::lit(sigma), self.periodic)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dictionary<T> {
    /// Indicators of the equipartition `[i/n, (i+1)/n)`, last interval closed.
    Indicator { n: usize },
    /// `exp(−(x − cᵢ)² / 2σ²)` with centres `cᵢ = (i + ½)/n`.
    Gaussian {
        centers: Vec<T>,
        sigma: T,
        periodic: bool,
    },
}

pub fn make_indicator<T: Real>(n: usize) -> Result<Dictionary<T>> {
    if n < 2 {
        return Err(Error::config("indicator dictionary needs n >= 2"));
    }
    Ok(Dictionary::Indicator { n })
}

pub fn make_gaussian<T: Real>(n: usize, sigma: T, periodic: bool) -> Result<Dictionary<T>> {
    if n < 2 {
        return Err(Error::config("gaussian dictionary needs n >= 2"));
    }
    if !sigma.is_finite() || sigma <= T::zero() {
        return Err(Error::config("gaussian bandwidth must be positive"));
    }
    Ok(Dictionary::Gaussian {
        centers: midpoint_grid(n),
        sigma,
        periodic,
    })
}

impl<T: Real> Dictionary<T> {
    pub fn len(&self) -> usize {
        match self {
            Dictionary::Indicator { n } => *n,
            Dictionary::Gaussian { centers, .. } => centers.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Dictionary::Gaussian { periodic: true, .. })
    }

    pub fn spec(&self) -> DictionarySpec {
        match self {
            Dictionary::Indicator { n } => DictionarySpec {
                kind: DictionaryKind::Indicator,
                n: *n,
                sigma: None,
                periodic: false,
            },
            Dictionary::Gaussian {
                centers,
                sigma,
                periodic,
            } => DictionarySpec {
                kind: DictionaryKind::Gaussian,
                n: centers.len(),
                sigma: Some(sigma.as_f64()),
                periodic: *periodic,
            },
        }
    }

    /// Writes `φ(x)` into `out` (length `n`). `x` must lie in `[0, 1]`.
    fn fill(&self, x: T, out: &mut [T]) {
        match self {
            Dictionary::Indicator { n } => {
                out.iter_mut().for_each(|v| *v = T::zero());
                let cell = (x * T::count(*n)).floor().as_f64();
                let i = if cell <= 0.0 { 0 } else { (cell as usize).min(n - 1) };
                out[i] = T::one();
            }
            Dictionary::Gaussian {
                centers,
                sigma,
                periodic,
            } => {
                let denom = T::lit(2.0) * *sigma * *sigma;
                for (v, &c) in out.iter_mut().zip(centers) {
                    let mut d = (x - c).abs();
                    if *periodic {
                        d = d.min(T::one() - d);
                    }
                    *v = (-(d * d) / denom).exp();
                }
            }
        }
    }

    fn check_domain(x: T) -> Result<()> {
        if x >= T::zero() && x <= T::one() {
            Ok(())
        } else {
            Err(Error::domain(format!("sample {x} outside [0, 1]")))
        }
    }

    pub fn eval(&self, x: T) -> Result<DVector<T>> {
        Self::check_domain(x)?;
        let mut v = DVector::zeros(self.len());
        self.fill(x, v.as_mut_slice());
        Ok(v)
    }

    /// `n × m` table whose column `k` is `φ(xₖ)`.
    pub fn evaluate(&self, xs: &[T]) -> Result<DMatrix<T>> {
        let n = self.len();
        let mut out = DMatrix::zeros(n, xs.len());
        for (k, &x) in xs.iter().enumerate() {
            Self::check_domain(x)?;
            self.fill(x, out.column_mut(k).as_mut_slice());
        }
        Ok(out)
    }

    /// Unweighted Gram matrix `∫ φ φᵀ dx` on a `grid`-point midpoint rule.
    pub fn gram(&self, grid: usize) -> DMatrix<T> {
        let pts = midpoint_grid::<T>(grid);
        let phi = self.evaluate(&pts).expect("grid points lie in [0, 1]");
        let mut g = &phi * phi.transpose() / T::count(grid);
        symmetrize(&mut g);
        g
    }

    /// 2-norm condition number of the Gram matrix.
    pub fn gram_condition(&self, grid: usize) -> T {
        let eig = self.gram(grid).symmetric_eigenvalues();
        let max = eig.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        let min = eig.iter().fold(T::max_value().unwrap(), |m, &v| m.min(v.abs()));
        max / min
    }
}

pub(crate) fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn indicator_examples() {
        let d = make_indicator::<f64>(2).unwrap();
        assert_eq!(d.eval(0.25).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(d.eval(1.0).unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(d.eval(0.5).unwrap().as_slice(), &[0.0, 1.0]);

        let d = make_indicator::<f64>(4).unwrap();
        let t = d.evaluate(&[0.1, 0.6]).unwrap();
        assert_eq!(t.column(0).as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.column(1).as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        assert!(make_indicator::<f64>(1).is_err());
    }

    #[test]
    fn gaussian_peaks_at_centres() {
        let d = make_gaussian::<f64>(20, 0.05, false).unwrap();
        if let Dictionary::Gaussian { centers, .. } = &d {
            for (i, &c) in centers.iter().enumerate() {
                assert!((c - (i as f64 + 0.5) / 20.0).abs() < 1e-15);
                assert_eq!(d.eval(c).unwrap()[i], 1.0);
            }
        }
        assert!(make_gaussian::<f64>(20, 0.0, false).is_err());
    }

    #[test]
    fn periodic_distance_wraps() {
        let d = Dictionary::<f64>::Gaussian {
            centers: vec![0.01, 0.5],
            sigma: 0.05,
            periodic: true,
        };
        let v = d.eval(0.99).unwrap();
        let expected = (-(0.02f64 * 0.02) / (2.0 * 0.05 * 0.05)).exp();
        assert!((v[0] - expected).abs() < 1e-12);

        let flat = Dictionary::<f64>::Gaussian {
            centers: vec![0.01, 0.5],
            sigma: 0.05,
            periodic: false,
        };
        assert!(flat.eval(0.99).unwrap()[0] < 1e-80);
    }

    #[test]
    fn out_of_domain_samples_rejected() {
        let d = make_gaussian::<f64>(5, 0.1, false).unwrap();
        assert!(matches!(d.evaluate(&[0.2, 1.5]), Err(Error::Domain(_))));
        assert!(matches!(d.eval(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn default_dictionaries_are_well_conditioned() {
        assert!(make_gaussian::<f64>(20, 0.05, false).unwrap().gram_condition(2000) < 1e12);
        assert!(make_indicator::<f64>(100).unwrap().gram_condition(2000) < 1e12);
        assert!(make_gaussian::<f64>(20, 0.05, true).unwrap().gram_condition(2000) < 1e12);
    }

    #[test]
    fn spec_roundtrip() {
        let d = make_gaussian::<f64>(20, 0.05, true).unwrap();
        let json = serde_json::to_string(&d.spec()).unwrap();
        let back: DictionarySpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.build::<f64>().unwrap(), d);
    }

    proptest! {
        #[test]
        fn indicator_columns_are_one_hot(xs in proptest::collection::vec(0.0f64..=1.0, 1..50), n in 2usize..64) {
            let d = make_indicator::<f64>(n).unwrap();
            let t = d.evaluate(&xs).unwrap();
            for col in t.column_iter() {
                prop_assert_eq!(col.iter().filter(|v| **v == 1.0).count(), 1);
                prop_assert_eq!(col.sum(), 1.0);
            }
        }

        #[test]
        fn batch_matches_pointwise(xs in proptest::collection::vec(0.0f64..=1.0, 1..30), periodic in any::<bool>()) {
            let d = make_gaussian::<f64>(20, 0.05, periodic).unwrap();
            let t = d.evaluate(&xs).unwrap();
            for (k, &x) in xs.iter().enumerate() {
                let single = d.eval(x).unwrap();
                prop_assert_eq!(t.column(k).clone_owned(), single.clone());
                prop_assert!(single.iter().all(|v| *v > 0.0 && *v <= 1.0));
            }
        }
    }
}
