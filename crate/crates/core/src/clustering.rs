//! Spectral embedding, gap detection, k-means and cluster transition counts.

use log::warn;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::operators::{SpectralMode, SpectralModel};
use crate::sampling::{PairedData, Trajectory};
use crate::scalar::Real;

pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_ITERATIONS: usize = 100;
/// Gap ratios above this are flagged as "no clear spectral gap".
pub const GAP_WARNING_RATIO: f64 = 0.8;

/// Points `sᵢ = [φ₁(xᵢ), …, φᵣ(xᵢ)]` together with the map that produced them.
#[derive(Debug, Clone)]
pub struct Embedding<T: Real> {
    /// Row-major `m × r`.
    points: Vec<T>,
    pub r: usize,
    pub positions: Vec<T>,
    pub periodic: bool,
    coefficients: DMatrix<T>,
    dictionary: Dictionary<T>,
}

impl<T: Real> Embedding<T> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.points[i * self.r..(i + 1) * self.r]
    }

    pub fn to_matrix(&self) -> DMatrix<T> {
        DMatrix::from_row_slice(self.len(), self.r, &self.points)
    }

    /// The same embedding with its columns reordered.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.r];
        if perm.len() != self.r || perm.iter().any(|&p| p >= self.r || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::config("not a permutation of the embedding columns"));
        }
        let mut out = self.clone();
        for i in 0..self.len() {
            for (j, &p) in perm.iter().enumerate() {
                out.points[i * self.r + j] = self.points[i * self.r + p];
            }
        }
        out.coefficients = DMatrix::from_fn(self.coefficients.nrows(), self.r, |k, j| self.coefficients[(k, perm[j])]);
        Ok(out)
    }

    fn map_points(&self, xs: &[T]) -> Result<Vec<T>> {
        let phi = self.dictionary.evaluate(xs)?;
        let table = phi.transpose() * &self.coefficients;
        Ok(row_major(&table))
    }
}

fn row_major<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter().copied());
    }
    out
}

/// Evaluates the first `r` eigenfunctions (eigen mode) or right singular
/// functions (singular mode) at the given positions.
pub fn embed_points<T: Real>(sm: &SpectralModel<T>, xs: &[T], r: usize, periodic: bool) -> Result<Embedding<T>> {
    if r == 0 {
        return Err(Error::config("embedding dimension must be at least 1"));
    }
    if r > sm.rank() {
        return Err(Error::config(format!("requested {r} components, model has {}", sm.rank())));
    }
    let coefficients = sm.right.columns(0, r).clone_owned();
    let mut e = Embedding {
        points: Vec::new(),
        r,
        positions: xs.to_vec(),
        periodic,
        coefficients,
        dictionary: sm.dictionary.clone(),
    };
    e.points = e.map_points(xs)?;
    Ok(e)
}

/// Embeds every state of the trajectory.
pub fn embed<T: Real>(sm: &SpectralModel<T>, t: &Trajectory<T>, r: usize) -> Result<Embedding<T>> {
    if sm.mode == SpectralMode::Eigen && sm.values.iter().take(r).any(|v| v.im != T::zero()) {
        warn!("embedding uses real parts of complex eigenvectors");
    }
    embed_points(sm, &t.states, r, t.periodic)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub r: usize,
    /// `v_{r+1} / v_r`.
    pub ratio: f64,
    pub warning: Option<String>,
}

/// Largest drop `v_r − v_{r+1}` over `1 ≤ r < min(r_max, len)` (first on ties).
pub fn detect_gap<T: Real>(values: &[T], r_max: usize) -> Result<GapReport> {
    if values.len() < 2 {
        return Err(Error::config("gap detection needs at least two spectral values"));
    }
    let upper = r_max.min(values.len());
    if upper < 2 {
        return Err(Error::config("gap detection needs r_max >= 2"));
    }
    let mut best = 1;
    let mut best_gap = values[0] - values[1];
    for r in 2..upper {
        let gap = values[r - 1] - values[r];
        if gap > best_gap {
            best = r;
            best_gap = gap;
        }
    }
    let (hi, lo) = (values[best - 1].as_f64(), values[best].as_f64());
    let ratio = if hi > 0.0 { lo / hi } else { 1.0 };
    let warning = (ratio > GAP_WARNING_RATIO).then(|| {
        let msg = format!("no clear spectral gap: ratio {ratio:.3} after r = {best}");
        warn!("{msg}");
        msg
    });
    Ok(GapReport { r: best, ratio, warning })
}

#[derive(Debug, Clone)]
pub struct ClusterModel<T: Real> {
    /// Zero-based labels, ordered by the (circular) mean position of members.
    pub assignments: Vec<usize>,
    /// `r` centres, one per row.
    pub centers: DMatrix<T>,
    /// Cut points on `[0, 1]` between adjacent clusters, when every cluster is
    /// an interval (an arc on the circle for periodic data).
    pub boundaries: Option<Vec<T>>,
    pub inertia: T,
    pub seed: u64,
    pub restarts: usize,
    embedding: Embedding<T>,
}

impl<T: Real> ClusterModel<T> {
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        self.assignments.iter().for_each(|&a| s[a] += 1);
        s
    }

    /// Nearest-centre labels of arbitrary positions.
    pub fn predict(&self, xs: &[T]) -> Result<Vec<usize>> {
        let pts = self.embedding.map_points(xs)?;
        let r = self.embedding.r;
        Ok(pts.chunks(r).map(|p| nearest(p, &self.centers).0).collect())
    }

    pub fn embedding(&self) -> &Embedding<T> {
        &self.embedding
    }
}

fn dist2<T: Real>(a: &[T], center: nalgebra::DMatrixView<'_, T>) -> T {
    a.iter().zip(center.iter()).fold(T::zero(), |acc, (x, c)| acc + (*x - *c) * (*x - *c))
}

fn nearest<T: Real>(p: &[T], centers: &DMatrix<T>) -> (usize, T) {
    let mut best = (0, T::max_value().unwrap());
    for c in 0..centers.nrows() {
        let d = dist2(p, centers.rows(c, 1));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

struct Run<T: Real> {
    labels: Vec<usize>,
    centers: DMatrix<T>,
    inertia: T,
}

fn seed_centers<T: Real>(e: &Embedding<T>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<T> {
    let m = e.len();
    let mut centers = DMatrix::zeros(k, e.r);
    let first = rng.random_range(0..m);
    centers.row_mut(0).copy_from_slice(e.row(first));
    let mut d2: Vec<f64> = (0..m).map(|i| dist2(e.row(i), centers.rows(0, 1)).as_f64()).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    acc > target
                })
                .unwrap_or(m - 1)
        } else {
            rng.random_range(0..m)
        };
        centers.row_mut(c).copy_from_slice(e.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(e.row(i), centers.rows(c, 1)).as_f64());
        }
    }
    centers
}

fn lloyd<T: Real>(e: &Embedding<T>, mut centers: DMatrix<T>) -> Option<Run<T>> {
    let (m, k, r) = (e.len(), centers.nrows(), e.r);
    let mut labels = vec![usize::MAX; m];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let (c, _) = nearest(e.row(i), &centers);
            if *label != c {
                *label = c;
                changed = true;
            }
        }
        let mut sums = DMatrix::<T>::zeros(k, r);
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (j, v) in e.row(i).iter().enumerate() {
                sums[(c, j)] += *v;
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..k {
            let n = T::count(counts[c]);
            for j in 0..r {
                centers[(c, j)] = sums[(c, j)] / n;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..m).fold(T::zero(), |acc, i| acc + dist2(e.row(i), centers.rows(labels[i], 1)));
    Some(Run { labels, centers, inertia })
}

fn circular_mean<T: Real>(xs: impl Iterator<Item = T>) -> T {
    let tau = T::two_pi();
    let (s, c) = xs.fold((T::zero(), T::zero()), |(s, c), x| (s + (tau * x).sin(), c + (tau * x).cos()));
    let a = s.atan2(c) / tau;
    if a < T::zero() {
        a + T::one()
    } else {
        a
    }
}

/// Interval `[lo, hi]` covered by each cluster; on the circle an arc may wrap
/// (`lo > hi`).
fn extents<T: Real>(positions: &[T], labels: &[usize], k: usize, periodic: bool) -> Vec<(T, T)> {
    let mut members: Vec<Vec<T>> = vec![Vec::new(); k];
    for (&x, &l) in positions.iter().zip(labels) {
        members[l].push(x);
    }
    members
        .into_iter()
        .map(|mut xs| {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (first, last) = (xs[0], xs[xs.len() - 1]);
            if !periodic {
                return (first, last);
            }
            // The arc is the complement of the widest empty gap.
            let mut gap = (first + T::one() - last, last, first);
            for w in xs.windows(2) {
                if w[1] - w[0] > gap.0 {
                    gap = (w[1] - w[0], w[0], w[1]);
                }
            }
            (gap.2, gap.1)
        })
        .collect()
}

fn interval_boundaries<T: Real>(ext: &[(T, T)], periodic: bool) -> Option<Vec<T>> {
    let k = ext.len();
    let half = T::lit(0.5);
    if !periodic {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| ext[a].0.partial_cmp(&ext[b].0).unwrap());
        let mut cuts = Vec::with_capacity(k.saturating_sub(1));
        for w in order.windows(2) {
            let (a, b) = (ext[w[0]], ext[w[1]]);
            if a.1 >= b.0 {
                return None;
            }
            cuts.push((a.1 + b.0) * half);
        }
        return Some(cuts);
    }
    if k < 2 {
        return Some(Vec::new());
    }
    // Unwrap each arc to [lo, lo + len) and walk around the circle.
    let len = |(lo, hi): (T, T)| if hi >= lo { hi - lo } else { hi + T::one() - lo };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| ext[a].0.partial_cmp(&ext[b].0).unwrap());
    let mut cuts = Vec::with_capacity(k);
    for (idx, &a) in order.iter().enumerate() {
        let b = order[(idx + 1) % k];
        let end = ext[a].0 + len(ext[a]);
        let mut start = ext[b].0;
        if idx + 1 == k {
            start += T::one();
        }
        if end >= start {
            return None;
        }
        let mut cut = (end + start) * half;
        if cut >= T::one() {
            cut -= T::one();
        }
        cuts.push(cut);
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(cuts)
}

/// k-means++ seeding and Lloyd iterations, best of `restarts` runs.
pub fn kmeans<T: Real>(e: &Embedding<T>, k: usize, seed: u64, restarts: usize) -> Result<ClusterModel<T>> {
    if k == 0 || e.len() < k {
        return Err(Error::config(format!("cannot form {k} clusters from {} points", e.len())));
    }
    let restarts = restarts.max(1);
    let mut best: Option<Run<T>> = None;
    for restart in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let centers = seed_centers(e, k, &mut rng);
        if let Some(run) = lloyd(e, centers) {
            if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
                best = Some(run);
            }
        }
    }
    let run = best.ok_or(Error::EmptyCluster(k))?;

    // Canonical labels: by mean member position.
    let mut members: Vec<Vec<T>> = vec![Vec::new(); k];
    for (&x, &l) in e.positions.iter().zip(&run.labels) {
        members[l].push(x);
    }
    let means: Vec<T> = members
        .iter()
        .map(|xs| {
            if e.periodic {
                circular_mean(xs.iter().copied())
            } else {
                xs.iter().fold(T::zero(), |a, &b| a + b) / T::count(xs.len())
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap().then(a.cmp(&b)));
    let mut relabel = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let assignments: Vec<usize> = run.labels.iter().map(|&l| relabel[l]).collect();
    let centers = DMatrix::from_fn(k, e.r, |i, j| run.centers[(order[i], j)]);

    let ext = extents(&e.positions, &assignments, k, e.periodic);
    let boundaries = interval_boundaries(&ext, e.periodic);
    if boundaries.is_none() {
        warn!("clusters are not contiguous on [0, 1]; boundaries omitted");
    }
    Ok(ClusterModel {
        assignments,
        centers,
        boundaries,
        inertia: run.inertia,
        seed,
        restarts,
        embedding: e.clone(),
    })
}

/// Row-stochastic `c_ij`: fraction of pairs starting in cluster `i` whose
/// successor lies in cluster `j`.
pub fn cluster_transitions<T: Real>(cm: &ClusterModel<T>, pd: &PairedData<T>) -> Result<DMatrix<T>> {
    let from = cm.predict(&pd.x)?;
    let to = cm.predict(&pd.y)?;
    transition_counts(&from, &to, cm.k())
}

pub fn transition_counts<T: Real>(from: &[usize], to: &[usize], k: usize) -> Result<DMatrix<T>> {
    let mut counts = DMatrix::<T>::zeros(k, k);
    for (&i, &j) in from.iter().zip(to) {
        counts[(i, j)] += T::one();
    }
    for i in 0..k {
        let total = counts.row(i).sum();
        if total == T::zero() {
            return Err(Error::EmptyCluster(i));
        }
        counts.row_mut(i).iter_mut().for_each(|v| *v /= total);
    }
    Ok(counts)
}
