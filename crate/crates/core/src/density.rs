//! Densities on `[0, 1]`: Gaussian KDE with boundary handling, tabulated grids
//! and the uniform density.

use log::warn;

use crate::error::{Error, Result};
use crate::scalar::{midpoint_grid, Real};

/// Minimum bandwidth used when the sample spread is degenerate.
pub const MIN_BANDWIDTH: f64 = 1e-3;

/// Kernel contributions beyond this many bandwidths are ignored.
const CUTOFF: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth<T> {
    /// Silverman's rule `1.06 · s · m^(−1/5)`.
    Auto,
    Fixed(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Mirror images at 0 and 1.
    Reflect,
    /// Images shifted by ±1, for data on the circle.
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kde<T> {
    sorted: Vec<T>,
    bandwidth: T,
    boundary: Boundary,
}

pub fn kde_density<T: Real>(samples: &[T], bandwidth: Bandwidth<T>, boundary: Boundary) -> Result<Kde<T>> {
    if samples.len() < 10 {
        return Err(Error::domain(format!(
            "density estimation needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|s| !(**s >= T::zero() && **s <= T::one())) {
        return Err(Error::domain(format!("sample {bad} outside [0, 1]")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let h = match bandwidth {
        Bandwidth::Fixed(h) if h > T::zero() => h,
        Bandwidth::Fixed(h) => return Err(Error::config(format!("bandwidth {h} must be positive"))),
        Bandwidth::Auto => {
            let m = T::count(sorted.len());
            let mean = sorted.iter().fold(T::zero(), |a, &b| a + b) / m;
            let var = sorted.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / (m - T::one());
            let h = T::lit(1.06) * var.sqrt() * m.powf(T::lit(-0.2));
            if h < T::lit(MIN_BANDWIDTH) {
                warn!("samples have (almost) zero spread; using bandwidth {MIN_BANDWIDTH}");
                T::lit(MIN_BANDWIDTH)
            } else {
                h
            }
        }
    };
    Ok(Kde {
        sorted,
        bandwidth: h,
        boundary,
    })
}

impl<T: Real> Kde<T> {
    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Sum of `exp(−(t − s)²/2h²)` over samples `s` within the cutoff of `t`.
    fn window(&self, t: T) -> T {
        let w = T::lit(CUTOFF) * self.bandwidth;
        let (lo, hi) = (t - w, t + w);
        let a = self.sorted.partition_point(|s| *s < lo);
        let b = self.sorted.partition_point(|s| *s <= hi);
        let denom = T::lit(2.0) * self.bandwidth * self.bandwidth;
        let mut acc = T::zero();
        for &s in &self.sorted[a..b.max(a)] {
            let u = t - s;
            acc += (-(u * u) / denom).exp();
        }
        acc
    }

    pub fn eval(&self, x: T) -> T {
        let one = T::one();
        let two = T::lit(2.0);
        let mut acc = self.window(x);
        match self.boundary {
            // images −s and 2 − s
            Boundary::Reflect => acc += self.window(-x) + self.window(two - x),
            // images s − 1 and s + 1
            Boundary::Periodic => acc += self.window(x + one) + self.window(x - one),
        }
        let norm = T::count(self.sorted.len()) * self.bandwidth * (two * T::pi()).sqrt();
        acc / norm
    }
}

/// A density on `[0, 1]` that can be evaluated pointwise.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityEstimate<T> {
    Kde(Kde<T>),
    /// Piecewise-constant values on a midpoint grid.
    Tabulated(Vec<T>),
    Uniform,
}

impl<T: Real> DensityEstimate<T> {
    pub fn eval(&self, x: T) -> T {
        match self {
            DensityEstimate::Kde(k) => k.eval(x),
            DensityEstimate::Tabulated(v) => {
                let n = v.len();
                let i = (x * T::count(n)).floor().as_f64();
                let i = if i <= 0.0 { 0 } else { (i as usize).min(n - 1) };
                v[i]
            }
            DensityEstimate::Uniform => T::one(),
        }
    }

    pub fn on_grid(&self, size: usize) -> Vec<T> {
        midpoint_grid::<T>(size).into_iter().map(|x| self.eval(x)).collect()
    }
}

impl<T> From<Kde<T>> for DensityEstimate<T> {
    fn from(k: Kde<T>) -> Self {
        DensityEstimate::Kde(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::midpoint_integral;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_samples(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn uniform_samples_give_flat_density() {
        let k = kde_density(&uniform_samples(20000, 1), Bandwidth::Auto, Boundary::Reflect).unwrap();
        for x in midpoint_grid::<f64>(200) {
            if (0.05..=0.95).contains(&x) {
                assert!((k.eval(x) - 1.0).abs() < 0.05, "{x}: {}", k.eval(x));
            }
        }
    }

    #[test]
    fn reflected_and_periodic_kde_integrate_to_one() {
        let mut xs = uniform_samples(5000, 2);
        xs.iter_mut().for_each(|x| *x = *x * *x);
        for b in [Boundary::Reflect, Boundary::Periodic] {
            let k = kde_density(&xs, Bandwidth::Auto, b).unwrap();
            let mass = midpoint_integral(&DensityEstimate::from(k).on_grid(2000));
            assert!((mass - 1.0).abs() < 1e-3, "{b:?}: {mass}");
        }
    }

    #[test]
    fn silverman_bandwidth() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let mean = 0.5;
        let s = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 9.0).sqrt();
        let k = kde_density(&xs, Bandwidth::Auto, Boundary::Reflect).unwrap();
        assert!((k.bandwidth() - 1.06 * s * 10f64.powf(-0.2)).abs() < 1e-15);
    }

    #[test]
    fn point_mass_uses_minimum_bandwidth() {
        let k = kde_density(&[0.3; 12], Bandwidth::Auto, Boundary::Reflect).unwrap();
        assert_eq!(k.bandwidth(), MIN_BANDWIDTH);
        assert!(k.eval(0.3) > 100.0);
    }

    #[test]
    fn rejects_small_or_invalid_input() {
        assert!(kde_density(&[0.5; 9], Bandwidth::<f64>::Auto, Boundary::Reflect).is_err());
        assert!(kde_density(&[0.5; 10], Bandwidth::Fixed(0.0), Boundary::Reflect).is_err());
        let mut xs = vec![0.5; 10];
        xs[3] = 1.2;
        assert!(kde_density(&xs, Bandwidth::<f64>::Auto, Boundary::Reflect).is_err());
    }

    #[test]
    fn periodic_kde_is_continuous_across_the_seam() {
        let xs: Vec<f64> = (0..400).map(|i| if i % 2 == 0 { 0.001 * (i % 7) as f64 } else { 1.0 - 0.001 * (i % 5) as f64 }).collect();
        let k = kde_density(&xs, Bandwidth::Fixed(0.02), Boundary::Periodic).unwrap();
        assert!((k.eval(0.0) - k.eval(1.0)).abs() < 1e-9);
    }

    #[test]
    fn tabulated_lookup() {
        let d = DensityEstimate::Tabulated(vec![0.5, 1.5]);
        assert_eq!(d.eval(0.2), 0.5);
        assert_eq!(d.eval(0.5), 1.5);
        assert_eq!(d.eval(1.0), 1.5);
        assert_eq!(DensityEstimate::<f64>::Uniform.eval(0.7), 1.0);
    }
}
