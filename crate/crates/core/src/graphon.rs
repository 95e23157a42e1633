//! Graphons, degree functions, transition densities and the invariant density.
//!
//! A graphon is a measurable kernel `w: [0,1]² → [0,1]`. Random walks on it move
//! from `x` to `y` with density `p(x, y) = w(x, y) / d_out(x)`, where
//! `d_out(x) = ∫ w(x, y) dy`. For symmetric graphons the walk is reversible with
//! invariant density `π = d / Z`.
//!
//! All integrals are composite midpoint rules on uniform cell-centred grids.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{midpoint_grid, midpoint_integral, Real};

/// Default grid size for one-dimensional integrals.
pub const DEFAULT_DEGREE_GRID: usize = 2000;

/// Default grid size per axis for two-dimensional integrals.
pub const DEFAULT_KERNEL_GRID: usize = 1000;

/// Out-degree values at or below this threshold are treated as degenerate.
pub const DEGREE_FLOOR: f64 = 1e-6;

/// One separable bump `a · exp(-((x - cx)^q + (y - cy)^q) / s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump<T> {
    pub amplitude: T,
    pub center: (T, T),
    /// Even exponent `q` (2 for Gaussian bumps, 4 for flat-topped ones).
    pub power: i32,
    pub width: T,
}

impl<T: Real> Bump<T> {
    pub fn new(amplitude: f64, cx: f64, cy: f64, power: i32, width: f64) -> Self {
        Self {
            amplitude: T::lit(amplitude),
            center: (T::lit(cx), T::lit(cy)),
            power,
            width: T::lit(width),
        }
    }

    #[inline]
    pub fn eval(&self, x: T, y: T) -> T {
        let dx = (x - self.center.0).powi(self.power);
        let dy = (y - self.center.1).powi(self.power);
        self.amplitude * (-(dx + dy) / self.width).exp()
    }
}

/// Representation of the kernel `w`.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel<T> {
    /// Analytic sum of bumps.
    Bumps(Vec<Bump<T>>),
    /// `size × size` piecewise-constant table, row index = x cell.
    Grid { size: usize, values: Vec<T> },
    /// Block-constant kernel. `edges` runs from 0 to 1; block `i` is
    /// `(edges[i], edges[i+1]]` with the first block closed at 0.
    Blocks { edges: Vec<T>, values: Vec<T> },
    /// `c(x) · base(x, y)` with `c(x) = offset + slope · x`.
    RowScaled {
        base: Box<Kernel<T>>,
        offset: T,
        slope: T,
    },
}

impl<T: Real> Kernel<T> {
    pub fn eval(&self, x: T, y: T) -> T {
        match self {
            Kernel::Bumps(bumps) => {
                let mut acc = T::zero();
                for b in bumps {
                    acc += b.eval(x, y);
                }
                acc
            }
            Kernel::Grid { size, values } => {
                let i = grid_cell(x, *size);
                let j = grid_cell(y, *size);
                values[i * size + j]
            }
            Kernel::Blocks { edges, values } => {
                let nb = edges.len() - 1;
                let i = block_index(edges, x);
                let j = block_index(edges, y);
                values[i * nb + j]
            }
            Kernel::RowScaled {
                base,
                offset,
                slope,
            } => (*offset + *slope * x) * base.eval(x, y),
        }
    }
}

/// Evaluates `w(x, ·)` on a fixed grid of `y` values. Bumps are separable,
/// so their `y` factors are tabulated once and each row costs one `exp` per bump.
#[derive(Debug, Clone)]
pub struct KernelRows<'a, T> {
    kernel: &'a Kernel<T>,
    grid: Vec<T>,
    /// Per bump, `exp(−(y_j − c_y)^q / s)` on the grid (bump kernels only).
    factors: Vec<Vec<T>>,
    base: Option<Box<KernelRows<'a, T>>>,
}

impl<'a, T: Real> KernelRows<'a, T> {
    pub fn new(kernel: &'a Kernel<T>, grid: &[T]) -> Self {
        let (factors, base) = match kernel {
            Kernel::Bumps(bumps) => (
                bumps
                    .iter()
                    .map(|b| grid.iter().map(|&y| (-(y - b.center.1).powi(b.power) / b.width).exp()).collect())
                    .collect(),
                None,
            ),
            Kernel::RowScaled { base, .. } => (Vec::new(), Some(Box::new(KernelRows::new(base, grid)))),
            _ => (Vec::new(), None),
        };
        Self {
            kernel,
            grid: grid.to_vec(),
            factors,
            base,
        }
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    /// Writes `w(x, y_j)` into `out[j]`.
    pub fn fill(&self, x: T, out: &mut [T]) {
        match self.kernel {
            Kernel::Bumps(bumps) => {
                out.iter_mut().for_each(|v| *v = T::zero());
                for (b, f) in bumps.iter().zip(&self.factors) {
                    let a = b.amplitude * (-(x - b.center.0).powi(b.power) / b.width).exp();
                    for (v, &fy) in out.iter_mut().zip(f) {
                        *v += a * fy;
                    }
                }
            }
            Kernel::RowScaled { offset, slope, .. } => {
                self.base.as_ref().expect("row-scaled base").fill(x, out);
                let c = *offset + *slope * x;
                out.iter_mut().for_each(|v| *v *= c);
            }
            k => {
                for (v, &y) in out.iter_mut().zip(&self.grid) {
                    *v = k.eval(x, y);
                }
            }
        }
    }
}

#[inline]
fn grid_cell<T: Real>(x: T, size: usize) -> usize {
    let idx = (x * T::count(size)).floor().as_f64();
    if idx <= 0.0 {
        0
    } else {
        (idx as usize).min(size - 1)
    }
}

#[inline]
fn block_index<T: Real>(edges: &[T], x: T) -> usize {
    let interior = &edges[1..edges.len() - 1];
    interior.partition_point(|e| *e < x)
}

/// A graphon together with its symmetry flag and a human-readable name.
#[derive(Debug, Clone, PartialEq)]
pub struct Graphon<T> {
    kernel: Kernel<T>,
    symmetric: bool,
    name: String,
}

impl<T: Real> Graphon<T> {
    /// Wraps a kernel. The symmetry flag is trusted; use
    /// [`Graphon::max_asymmetry`] to verify it.
    pub fn new(name: impl Into<String>, kernel: Kernel<T>, symmetric: bool) -> Self {
        Self {
            kernel,
            symmetric,
            name: name.into(),
        }
    }

    /// Symmetric three-peak graphon with peaks at 0.2, 0.5 and 0.8; the middle
    /// peak is lower and the right one flat-topped.
    pub fn triple_peak() -> Self {
        Self::new(
            "triple-peak",
            Kernel::Bumps(vec![
                Bump::new(0.2, 0.2, 0.2, 2, 0.02),
                Bump::new(0.1, 0.5, 0.5, 2, 0.02),
                Bump::new(0.2, 0.8, 0.8, 4, 0.0005),
            ]),
            true,
        )
    }

    /// Asymmetric graphon with a three-cycle on `[0, 0.5]` and one metastable
    /// peak at 0.75.
    pub fn quadruple_peak() -> Self {
        Self::new(
            "quadruple-peak",
            Kernel::Bumps(vec![
                Bump::new(0.2, 0.15, 0.3, 2, 0.008),
                Bump::new(0.2, 0.3, 0.45, 2, 0.008),
                Bump::new(0.2, 0.45, 0.15, 2, 0.008),
                Bump::new(0.15, 0.75, 0.75, 2, 0.02),
            ]),
            false,
        )
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::domain(format!("constant graphon value {c} outside [0, 1]")));
        }
        Self::from_blocks(vec![0.0, 1.0], vec![c]).map(|g| g.renamed(format!("constant({c})")))
    }

    /// Two equal blocks with weight `a` on the diagonal blocks and `b` off them.
    pub fn two_block(a: f64, b: f64) -> Result<Self> {
        Self::from_blocks(vec![0.0, 0.5, 1.0], vec![a, b, b, a])
            .map(|g| g.renamed(format!("two-block({a},{b})")))
    }

    /// `1` on `[0,½]×(½,1] ∪ (½,1]×[0,½]`, zero elsewhere.
    pub fn bipartite() -> Self {
        Self::from_blocks(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 1.0, 0.0])
            .expect("valid block layout")
            .renamed("bipartite")
    }

    /// Block-constant graphon from strictly increasing edges `0 = e₀ < … < e_B = 1`
    /// and a row-major `B × B` table of block values.
    pub fn from_blocks(edges: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let nb = edges.len().saturating_sub(1);
        if nb == 0 || edges[0] != 0.0 || edges[nb] != 1.0 {
            return Err(Error::domain("block edges must start at 0 and end at 1"));
        }
        if edges.windows(2).any(|e| e[1] <= e[0]) {
            return Err(Error::domain("block edges must be strictly increasing"));
        }
        if values.len() != nb * nb {
            return Err(Error::domain(format!(
                "expected {} block values, got {}",
                nb * nb,
                values.len()
            )));
        }
        check_unit_range(&values)?;
        let symmetric = (0..nb).all(|i| (0..nb).all(|j| values[i * nb + j] == values[j * nb + i]));
        Ok(Self::new(
            "blocks",
            Kernel::Blocks {
                edges: edges.into_iter().map(T::lit).collect(),
                values: values.into_iter().map(T::lit).collect(),
            },
            symmetric,
        ))
    }

    /// Piecewise-constant graphon from a row-major `size × size` table.
    /// The symmetry flag is set when the table equals its transpose.
    pub fn from_grid(size: usize, values: Vec<T>) -> Result<Self> {
        if size == 0 || values.len() != size * size {
            return Err(Error::domain(format!(
                "grid graphon needs {size}×{size} values, got {}",
                values.len()
            )));
        }
        check_unit_range(&values.iter().map(|v| v.as_f64()).collect::<Vec<_>>())?;
        let tol = T::lit(1e-12);
        let symmetric = (0..size).all(|i| {
            (0..size).all(|j| (values[i * size + j] - values[j * size + i]).abs() <= tol)
        });
        Ok(Self::new("grid", Kernel::Grid { size, values }, symmetric))
    }

    /// Multiplies each row by `c(x) = offset + slope · x`. The result is flagged
    /// asymmetric; its transition density equals that of `self`.
    pub fn row_scaled(&self, offset: f64, slope: f64) -> Self {
        Self::new(
            format!("{}·({offset}+{slope}x)", self.name),
            Kernel::RowScaled {
                base: Box::new(self.kernel.clone()),
                offset: T::lit(offset),
                slope: T::lit(slope),
            },
            false,
        )
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    #[inline]
    pub fn eval(&self, x: T, y: T) -> T {
        self.kernel.eval(x, y)
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Samples `w` at the cell centres of a `size × size` grid.
    pub fn sample_grid(&self, size: usize) -> DMatrix<T> {
        let g = midpoint_grid::<T>(size);
        DMatrix::from_fn(size, size, |i, j| self.eval(g[i], g[j]))
    }

    /// `max |w(x,y) − w(y,x)|` over grid pairs.
    pub fn max_asymmetry(&self, size: usize) -> T {
        let w = self.sample_grid(size);
        let mut worst = T::zero();
        for i in 0..size {
            for j in 0..i {
                worst = worst.max((w[(i, j)] - w[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(min, max)` of `w` over the grid.
    pub fn range_on_grid(&self, size: usize) -> (T, T) {
        let w = self.sample_grid(size);
        (w.min(), w.max())
    }
}

fn check_unit_range(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::domain(format!("graphon value {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// In- and out-degree functions sampled on a midpoint grid.
#[derive(Debug, Clone)]
pub struct DegreeProfile<T> {
    graphon: Graphon<T>,
    grid: Vec<T>,
    pub d_in: Vec<T>,
    pub d_out: Vec<T>,
    /// Minimum of `d_out` over the grid.
    pub d0: T,
}

impl<T: Real> DegreeProfile<T> {
    pub fn graphon(&self) -> &Graphon<T> {
        &self.graphon
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    /// `∫ w(x, y) dy` by the profile's quadrature rule.
    pub fn out_degree(&self, x: T) -> T {
        let mut acc = T::zero();
        for &y in &self.grid {
            acc += self.graphon.eval(x, y);
        }
        acc / T::count(self.grid.len())
    }

    /// `∫ w(y, x) dy` by the profile's quadrature rule.
    pub fn in_degree(&self, x: T) -> T {
        let mut acc = T::zero();
        for &y in &self.grid {
            acc += self.graphon.eval(y, x);
        }
        acc / T::count(self.grid.len())
    }
}

/// Computes `d_in` and `d_out` on a `grid`-point midpoint grid and checks that
/// `d_out` is bounded away from zero.
pub fn degree_profile<T: Real>(graphon: &Graphon<T>, grid: usize) -> Result<DegreeProfile<T>> {
    if grid < 2 {
        return Err(Error::domain("degree grid needs at least 2 points"));
    }
    let pts = midpoint_grid::<T>(grid);
    let w = DMatrix::from_fn(grid, grid, |i, j| graphon.eval(pts[i], pts[j]));
    let n = T::count(grid);
    let d_out: Vec<T> = (0..grid).map(|i| w.row(i).sum() / n).collect();
    let d_in: Vec<T> = (0..grid).map(|j| w.column(j).sum() / n).collect();

    let floor = T::lit(DEGREE_FLOOR);
    let (imin, d0) = d_out
        .iter()
        .copied()
        .enumerate()
        .fold((0, T::max_value().unwrap()), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) });
    if d0 <= floor {
        return Err(Error::Degeneracy {
            x: pts[imin].as_f64(),
            value: d0.as_f64(),
        });
    }
    Ok(DegreeProfile {
        graphon: graphon.clone(),
        grid: pts,
        d_in,
        d_out,
        d0,
    })
}

/// Transition density `p(x, y) = w(x, y) / d_out(x)`.
#[derive(Debug, Clone)]
pub struct TransitionDensity<T> {
    profile: DegreeProfile<T>,
}

/// Builds the transition density of `graphon` from its degree profile.
pub fn transition_density<T: Real>(
    graphon: &Graphon<T>,
    profile: &DegreeProfile<T>,
) -> Result<TransitionDensity<T>> {
    if profile.graphon != *graphon {
        return Err(Error::domain("degree profile belongs to a different graphon"));
    }
    if profile.d0 <= T::lit(DEGREE_FLOOR) {
        let i = profile
            .d_out
            .iter()
            .position(|v| *v == profile.d0)
            .unwrap_or(0);
        return Err(Error::Degeneracy {
            x: profile.grid[i].as_f64(),
            value: profile.d0.as_f64(),
        });
    }
    Ok(TransitionDensity {
        profile: profile.clone(),
    })
}

impl<T: Real> TransitionDensity<T> {
    pub fn graphon(&self) -> &Graphon<T> {
        &self.profile.graphon
    }

    pub fn profile(&self) -> &DegreeProfile<T> {
        &self.profile
    }

    pub fn d0(&self) -> T {
        self.profile.d0
    }

    /// `p(x, y)` with `d_out(x)` from the profile's quadrature rule.
    pub fn eval(&self, x: T, y: T) -> T {
        self.graphon().eval(x, y) / self.profile.out_degree(x)
    }

    /// `p(x_i, y_j)` on a `size × size` midpoint grid. Each row is normalised by
    /// its own `size`-point quadrature of `d_out`, so rows integrate to one under
    /// the same rule.
    pub fn table(&self, size: usize) -> DMatrix<T> {
        let pts = midpoint_grid::<T>(size);
        let n = T::count(size);
        let mut p = DMatrix::from_fn(size, size, |i, j| self.graphon().eval(pts[i], pts[j]));
        for i in 0..size {
            let d = p.row(i).sum() / n;
            p.row_mut(i).iter_mut().for_each(|v| *v /= d);
        }
        p
    }

    /// Largest `|∫ p(x, y) dy − 1|` over the grid points `x` of the profile.
    pub fn max_row_deviation(&self) -> T {
        let grid = self.profile.grid();
        let mut worst = T::zero();
        for (i, &x) in grid.iter().enumerate() {
            let d = self.profile.d_out[i];
            let row: Vec<T> = grid.iter().map(|&y| self.graphon().eval(x, y) / d).collect();
            worst = worst.max((midpoint_integral(&row) - T::one()).abs());
        }
        worst
    }
}

/// Invariant density `π = d / Z` of a symmetric graphon.
#[derive(Debug, Clone)]
pub struct InvariantDensity<T> {
    profile: DegreeProfile<T>,
    /// `Z = ∫ d(x) dx`.
    pub z: T,
}

pub fn invariant_density<T: Real>(profile: &DegreeProfile<T>) -> Result<InvariantDensity<T>> {
    if !profile.graphon.is_symmetric() {
        return Err(Error::Symmetry);
    }
    let z = midpoint_integral(&profile.d_out);
    Ok(InvariantDensity {
        profile: profile.clone(),
        z,
    })
}

impl<T: Real> InvariantDensity<T> {
    pub fn eval(&self, x: T) -> T {
        self.profile.out_degree(x) / self.z
    }

    /// `π` at the profile's grid points.
    pub fn grid_values(&self) -> Vec<T> {
        self.profile.d_out.iter().map(|&d| d / self.z).collect()
    }

    pub fn profile(&self) -> &DegreeProfile<T> {
        &self.profile
    }
}

/// Result of [`connectedness_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct Connectivity<T> {
    pub connected: bool,
    /// Cell intervals `[lo, hi)` of the component containing the first cell,
    /// present only when the support graph is disconnected.
    pub witness: Option<Vec<(T, T)>>,
}

/// Grid-resolution connectivity check.
///
/// Cells `i` and `j` are joined when `w` is positive at either `(xᵢ, xⱼ)` or
/// `(xⱼ, xᵢ)`. Disconnection of this support graph proves the graphon is not
/// connected; connectivity at grid resolution is only a necessary condition.
pub fn connectedness_probe<T: Real>(graphon: &Graphon<T>, grid: usize) -> Connectivity<T> {
    let grid = grid.max(2);
    let w = graphon.sample_grid(grid);
    let mut seen = vec![false; grid];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..grid {
            if !seen[j] && (w[(i, j)] > T::zero() || w[(j, i)] > T::zero()) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    if seen.iter().all(|s| *s) {
        return Connectivity {
            connected: true,
            witness: None,
        };
    }
    let n = T::count(grid);
    let mut intervals = Vec::new();
    let mut start = None;
    for (i, &s) in seen.iter().chain(std::iter::once(&false)).enumerate() {
        match (s, start) {
            (true, None) => start = Some(i),
            (false, Some(lo)) => {
                intervals.push((T::count(lo) / n, T::count(i) / n));
                start = None;
            }
            _ => {}
        }
    }
    Connectivity {
        connected: false,
        witness: Some(intervals),
    }
}
