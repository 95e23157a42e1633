//! Random walks on graphons, their transfer operators, and what can be
//! recovered from sampled trajectories: spectra, metastable clusters and
//! low-rank reconstructions of the kernel.
//!
//! The numerical code is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix the precision for callers that don't care.

pub mod clustering;
pub mod density;
pub mod dictionary;
pub mod error;
pub mod graphon;
pub mod io;
pub mod operators;
pub mod pipeline;
pub mod reconstruction;
pub mod sampling;
pub mod scalar;

pub use clustering::{cluster_transitions, detect_gap, embed, embed_points, kmeans, ClusterModel, Embedding, GapReport};
pub use density::{kde_density, Bandwidth, Boundary, DensityEstimate, Kde};
pub use dictionary::{make_gaussian, make_indicator, Dictionary, DictionaryKind, DictionarySpec};
pub use error::{Error, Result};
pub use graphon::{degree_profile, invariant_density, transition_density, Graphon, TransitionDensity};
pub use operators::{
    eigendecompose, empirical_covariances, galerkin_matrices, laplacian_spectrum, pf_eigenfunctions,
    quadrature_covariances, singular_decompose, CovarianceSet, Operator, OperatorMatrices, QuadratureWeight,
    Regularization, SpectralMode, SpectralModel,
};
pub use pipeline::{emit_plot_data, execute, run, simulate, Pipeline, RunConfig, RunResult, Stages};
pub use reconstruction::{
    reconstruct_p_asymmetric, reconstruct_p_symmetric, reconstruct_w, relative_l2_error, RankRModel, Reconstruction,
};
pub use sampling::{pairs, sde_walk, symmetrized_pairs, walk, PairedData, SdeConfig, Trajectory, WalkOptions};
pub use scalar::Real;

pub type Graphon64 = Graphon<f64>;
pub type Graphon32 = Graphon<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type Dictionary64 = Dictionary<f64>;
pub type Dictionary32 = Dictionary<f32>;
pub type OperatorMatrices64 = OperatorMatrices<f64>;
pub type OperatorMatrices32 = OperatorMatrices<f32>;
pub type SpectralModel64 = SpectralModel<f64>;
pub type SpectralModel32 = SpectralModel<f32>;
pub type ClusterModel64 = ClusterModel<f64>;
pub type ClusterModel32 = ClusterModel<f32>;
