//! Trajectory generation: graphon random walks and the lemon-slice Langevin SDE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::{KernelRows, TransitionDensity};
use crate::scalar::{midpoint_grid, Real};

/// Steps discarded before recording so that states are approximately
/// stationary.
pub const DEFAULT_BURN_IN: usize = 100;

/// Grid used to discretise `p(x, ·)` during sampling.
pub const DEFAULT_SAMPLING_GRID: usize = 1000;

/// Ordered states `x⁽¹⁾ … x⁽ᵐ⁺¹⁾` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<T>,
    pub seed: u64,
    pub source: String,
    /// States are angles rescaled to `[0, 1)` and live on a circle.
    pub periodic: bool,
}

impl<T: Real> Trajectory<T> {
    pub fn new(states: Vec<T>, seed: u64, source: impl Into<String>, periodic: bool) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::domain("a trajectory needs at least two states"));
        }
        if let Some(bad) = states.iter().find(|s| !(**s >= T::zero() && **s <= T::one())) {
            return Err(Error::domain(format!("trajectory state {bad} outside [0, 1]")));
        }
        Ok(Self {
            states,
            seed,
            source: source.into(),
            periodic,
        })
    }

    /// Number of transitions `m`.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Snapshot pairs `(x⁽ᵏ⁾, y⁽ᵏ⁾)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedData<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    /// The second half holds the forward pairs reversed.
    pub symmetrized: bool,
    pub periodic: bool,
}

impl<T: Real> PairedData<T> {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Number of forward pairs (half of [`len`](Self::len) when symmetrized).
    pub fn forward_len(&self) -> usize {
        if self.symmetrized {
            self.x.len() / 2
        } else {
            self.x.len()
        }
    }
}

/// `y⁽ᵏ⁾ = x⁽ᵏ⁺¹⁾`.
pub fn pairs<T: Real>(t: &Trajectory<T>) -> PairedData<T> {
    let m = t.steps();
    PairedData {
        x: t.states[..m].to_vec(),
        y: t.states[1..].to_vec(),
        symmetrized: false,
        periodic: t.periodic,
    }
}

/// Forward pairs followed by the reversed pairs `(y⁽ᵏ⁾, x⁽ᵏ⁾)`, which imposes
/// reversibility on the estimated operators.
pub fn symmetrized_pairs<T: Real>(t: &Trajectory<T>) -> PairedData<T> {
    let fwd = pairs(t);
    let mut x = fwd.x.clone();
    x.extend_from_slice(&fwd.y);
    let mut y = fwd.y;
    y.extend_from_slice(&fwd.x);
    PairedData {
        x,
        y,
        symmetrized: true,
        periodic: t.periodic,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMethod {
    /// Invert the piecewise-linear CDF of `p(x, ·)` on the sampling grid.
    #[default]
    InverseTransform,
    /// Uniform proposals under the envelope `max_j p(x, y_j)`.
    Rejection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkOptions<T> {
    pub method: SamplingMethod,
    pub grid: usize,
    pub burn_in: usize,
    /// Starting state; drawn uniformly when `None`.
    pub initial: Option<T>,
}

impl<T> Default for WalkOptions<T> {
    fn default() -> Self {
        Self {
            method: SamplingMethod::InverseTransform,
            grid: DEFAULT_SAMPLING_GRID,
            burn_in: DEFAULT_BURN_IN,
            initial: None,
        }
    }
}

/// Random walk with `x⁽ᵏ⁺¹⁾ ~ p(x⁽ᵏ⁾, ·)`; returns `m + 1` states after burn-in.
pub fn walk<T: Real>(
    td: &TransitionDensity<T>,
    m: usize,
    seed: u64,
    opts: &WalkOptions<T>,
) -> Result<Trajectory<T>> {
    if m < 1 {
        return Err(Error::domain("walk length must be at least 1"));
    }
    if opts.grid < 2 {
        return Err(Error::domain("sampling grid needs at least 2 points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = midpoint_grid::<T>(opts.grid);
    let rows = KernelRows::new(td.graphon().kernel(), &grid);
    let mut row = vec![T::zero(); opts.grid];

    let mut x = match opts.initial {
        Some(x0) if x0 >= T::zero() && x0 <= T::one() => x0,
        Some(x0) => return Err(Error::domain(format!("initial state {x0} outside [0, 1]"))),
        None => T::lit(rng.random::<f64>()),
    };
    let total = opts.burn_in + m + 1;
    let mut states = Vec::with_capacity(m + 1);
    for k in 0..total {
        if k >= opts.burn_in {
            states.push(x);
        }
        if k + 1 == total {
            break;
        }
        x = match opts.method {
            SamplingMethod::InverseTransform => inverse_transform_step(&rows, x, &mut row, &mut rng)?,
            SamplingMethod::Rejection => rejection_step(td, &rows, x, &mut row, &mut rng)?,
        };
    }
    Trajectory::new(states, seed, td.graphon().name().to_string(), false)
}

fn inverse_transform_step<T: Real>(rows: &KernelRows<T>, x: T, cdf: &mut [T], rng: &mut ChaCha8Rng) -> Result<T> {
    rows.fill(x, cdf);
    let mut acc = T::zero();
    for c in cdf.iter_mut() {
        acc += *c;
        *c = acc;
    }
    if acc <= T::zero() {
        return Err(Error::Degeneracy {
            x: x.as_f64(),
            value: 0.0,
        });
    }
    let u = T::lit(rng.random::<f64>()) * acc;
    let n = cdf.len();
    let i = cdf.partition_point(|c| *c < u).min(n - 1);
    let lo = if i == 0 { T::zero() } else { cdf[i - 1] };
    let width = cdf[i] - lo;
    let frac = if width > T::zero() {
        ((u - lo) / width).clamp(T::zero(), T::one())
    } else {
        T::lit(0.5)
    };
    Ok(((T::count(i) + frac) / T::count(n)).min(T::one()))
}

fn rejection_step<T: Real>(
    td: &TransitionDensity<T>,
    rows: &KernelRows<T>,
    x: T,
    row: &mut [T],
    rng: &mut ChaCha8Rng,
) -> Result<T> {
    let g = td.graphon();
    rows.fill(x, row);
    let sum = row.iter().fold(T::zero(), |s, &v| s + v);
    let d_out = sum / T::count(row.len());
    if d_out <= T::zero() {
        return Err(Error::Degeneracy {
            x: x.as_f64(),
            value: 0.0,
        });
    }
    let envelope = row.iter().fold(T::zero(), |m, &v| m.max(v)) / d_out;
    loop {
        let y = T::lit(rng.random::<f64>());
        let a = T::lit(rng.random::<f64>()) * envelope;
        if a <= g.eval(x, y) / d_out {
            return Ok(y);
        }
    }
}

/// Overdamped Langevin dynamics `dX = (−∇V + M∇V) dt + √(2/β) dW` in the
/// lemon-slice potential `V(x) = cos(k·atan2(x₂, x₁)) + 10(|x| − 1)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeConfig<T> {
    /// Number of wells `k`.
    pub wells: u32,
    /// Antisymmetric drift matrix `M`, row-major.
    pub rotation: [[T; 2]; 2],
    pub beta: T,
    /// Lag time between recorded samples.
    pub tau: T,
    /// Euler–Maruyama step.
    pub dt: T,
    pub initial: [T; 2],
    pub burn_in: usize,
}

impl<T: Real> SdeConfig<T> {
    /// Five wells, `M = [[0, 1], [−1, 0]]`, `β = 2`, `τ = 0.1`, `dt = 0.005`,
    /// started at the well minimum at angle `π/5`.
    pub fn lemon_slice() -> Self {
        Self::with_wells(5)
    }

    pub fn with_wells(k: u32) -> Self {
        let angle = T::pi() / T::count(k as usize);
        Self {
            wells: k,
            rotation: [[T::zero(), T::one()], [-T::one(), T::zero()]],
            beta: T::lit(2.0),
            tau: T::lit(0.1),
            dt: T::lit(0.005),
            initial: [angle.cos(), angle.sin()],
            burn_in: DEFAULT_BURN_IN,
        }
    }

    /// Integrator steps per recorded sample.
    pub fn substeps(&self) -> Result<usize> {
        self.validate()?;
        Ok((self.tau / self.dt).round().as_f64() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.rotation;
        if m[0][0] + m[0][0] != T::zero()
            || m[1][1] + m[1][1] != T::zero()
            || m[0][1] + m[1][0] != T::zero()
        {
            return Err(Error::config("drift matrix M must be antisymmetric"));
        }
        if self.wells == 0 {
            return Err(Error::config("well count must be positive"));
        }
        if !(self.beta > T::zero() && self.tau > T::zero() && self.dt > T::zero()) {
            return Err(Error::config("beta, tau and dt must be positive"));
        }
        if self.dt > self.tau {
            return Err(Error::config("integrator step dt must not exceed tau"));
        }
        let ratio = self.tau / self.dt;
        if (ratio - ratio.round()).abs() > T::lit(1e-9) * ratio {
            return Err(Error::config(format!(
                "tau / dt = {ratio} is not an integer"
            )));
        }
        if self.initial[0] == T::zero() && self.initial[1] == T::zero() {
            return Err(Error::config("initial point must not be the origin"));
        }
        Ok(())
    }

    /// `∇V(x)`.
    pub fn gradient(&self, x: [T; 2]) -> [T; 2] {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let r = r2.sqrt();
        let k = T::count(self.wells as usize);
        let omega = x[1].atan2(x[0]);
        let dv_domega = -k * (k * omega).sin();
        let dv_dr = T::lit(20.0) * (r - T::one());
        [
            dv_dr * x[0] / r - dv_domega * x[1] / r2,
            dv_dr * x[1] / r + dv_domega * x[0] / r2,
        ]
    }

    pub fn potential(&self, x: [T; 2]) -> T {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let k = T::count(self.wells as usize);
        (k * x[1].atan2(x[0])).cos() + T::lit(10.0) * (r - T::one()).powi(2)
    }

    /// Well minima as angular coordinates in `[0, 1)`.
    pub fn well_positions(&self) -> Vec<T> {
        let k = self.wells as usize;
        (0..k)
            .map(|j| {
                let omega = T::count(2 * j + 1) * T::pi() / T::count(k);
                let omega = if omega > T::pi() { omega - T::two_pi() } else { omega };
                angle_to_unit(omega)
            })
            .collect()
    }
}

/// Maps an angle in `(−π, π]` to `[0, 1)` via `(ω + π) / 2π`.
pub fn angle_to_unit<T: Real>(omega: T) -> T {
    let u = (omega + T::pi()) / T::two_pi();
    if u >= T::one() {
        u - T::one()
    } else {
        u
    }
}

/// Integrates the SDE with Euler–Maruyama and records the angular coordinate
/// every `τ / dt` steps. The trajectory is flagged periodic.
pub fn sde_walk<T: Real>(cfg: &SdeConfig<T>, m: usize, seed: u64) -> Result<Trajectory<T>> {
    if m < 1 {
        return Err(Error::domain("walk length must be at least 1"));
    }
    let substeps = cfg.substeps()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (T::lit(2.0) * cfg.dt / cfg.beta).sqrt();
    let rot = cfg.rotation;
    let mut x = cfg.initial;
    let total = cfg.burn_in + m + 1;
    let mut states = Vec::with_capacity(m + 1);
    for k in 0..total {
        if k >= cfg.burn_in {
            states.push(angle_to_unit(x[1].atan2(x[0])));
        }
        if k + 1 == total {
            break;
        }
        for _ in 0..substeps {
            let g = cfg.gradient(x);
            let mg = [
                rot[0][0] * g[0] + rot[0][1] * g[1],
                rot[1][0] * g[0] + rot[1][1] * g[1],
            ];
            let e0: f64 = rng.sample(StandardNormal);
            let e1: f64 = rng.sample(StandardNormal);
            x[0] += (mg[0] - g[0]) * cfg.dt + noise * T::lit(e0);
            x[1] += (mg[1] - g[1]) * cfg.dt + noise * T::lit(e1);
        }
    }
    Trajectory::new(
        states,
        seed,
        format!("lemon-slice(k={}, beta={})", cfg.wells, cfg.beta),
        true,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::{degree_profile, transition_density, Graphon};

    fn density(g: &Graphon<f64>) -> TransitionDensity<f64> {
        transition_density(g, &degree_profile(g, 1000).unwrap()).unwrap()
    }

    #[test]
    fn pairs_from_states() {
        let t = Trajectory::new(vec![0.1, 0.2, 0.3], 0, "test", false).unwrap();
        let p = pairs(&t);
        assert_eq!(p.x, vec![0.1, 0.2]);
        assert_eq!(p.y, vec![0.2, 0.3]);
        assert_eq!(p.len(), 2);

        let s = symmetrized_pairs(&t);
        assert_eq!(s.x, vec![0.1, 0.2, 0.2, 0.3]);
        assert_eq!(s.y, vec![0.2, 0.3, 0.1, 0.2]);
        assert_eq!(s.forward_len(), 2);
    }

    #[test]
    fn trajectory_validation() {
        assert!(Trajectory::new(vec![0.5], 0, "t", false).is_err());
        assert!(Trajectory::new(vec![0.5, 1.2], 0, "t", false).is_err());
        assert!(Trajectory::new(vec![0.5, f64::NAN], 0, "t", false).is_err());
    }

    #[test]
    fn walk_lengths_and_determinism() {
        let td = density(&Graphon::triple_peak());
        let opts = WalkOptions::default();
        let a = walk(&td, 500, 42, &opts).unwrap();
        let b = walk(&td, 500, 42, &opts).unwrap();
        let c = walk(&td, 500, 43, &opts).unwrap();
        assert_eq!(a.states.len(), 501);
        assert_eq!(a.states, b.states);
        assert_ne!(a.states, c.states);
        assert!(a.states.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn bipartite_walk_alternates_halves() {
        let td = density(&Graphon::bipartite());
        for method in [SamplingMethod::InverseTransform, SamplingMethod::Rejection] {
            let opts = WalkOptions {
                method,
                initial: Some(0.25),
                burn_in: 0,
                ..WalkOptions::default()
            };
            let t = walk(&td, 200, 7, &opts).unwrap();
            for (k, s) in t.states.iter().enumerate() {
                assert_eq!(*s > 0.5, k % 2 == 1, "step {k}: {s}");
            }
        }
    }

    #[test]
    fn lemon_slice_wells_sit_on_fifths() {
        let cfg = SdeConfig::<f64>::lemon_slice();
        let mut wells = cfg.well_positions();
        wells.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (w, target) in wells.iter().zip([0.0, 0.2, 0.4, 0.6, 0.8]) {
            assert!((w - target).abs() < 1e-12, "{w}");
        }
        for w in cfg.well_positions() {
            let omega = w * 2.0 * std::f64::consts::PI - std::f64::consts::PI;
            let v = cfg.potential([omega.cos(), omega.sin()]);
            assert!((v + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = SdeConfig::<f64>::lemon_slice();
        let h = 1e-6;
        for &p in &[[0.9, 0.3], [-0.4, 1.1], [0.2, -0.8]] {
            let g = cfg.gradient(p);
            let fx = (cfg.potential([p[0] + h, p[1]]) - cfg.potential([p[0] - h, p[1]])) / (2.0 * h);
            let fy = (cfg.potential([p[0], p[1] + h]) - cfg.potential([p[0], p[1] - h])) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-5 && (g[1] - fy).abs() < 1e-5);
        }
    }

    #[test]
    fn sde_config_errors() {
        let mut cfg = SdeConfig::<f64>::lemon_slice();
        cfg.rotation = [[0.0, 1.0], [1.0, 0.0]];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = SdeConfig::<f64>::lemon_slice();
        cfg.dt = 0.003;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert_eq!(SdeConfig::<f64>::lemon_slice().substeps().unwrap(), 20);
    }

    #[test]
    fn cold_sde_stays_in_initial_well() {
        let mut cfg = SdeConfig::<f64>::lemon_slice();
        cfg.beta = 200.0;
        cfg.rotation = [[0.0, 0.0], [0.0, 0.0]];
        let t = sde_walk(&cfg, 2000, 3).unwrap();
        assert!(t.periodic);
        // Initial well at angle π/5, i.e. 0.6 on the unit scale; neighbouring
        // barriers sit at 0.5 and 0.7.
        assert!(t.states.iter().all(|s| (s - 0.6).abs() < 0.1), "left the well");
    }
}
