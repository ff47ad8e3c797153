//! Single-kernel similarity preserving clustering.
//!
//! Minimizes
//!
//! ```text
//! ½·Tr(K + ZᵀKZ) − α·Tr(KZ) + β·Tr(FᵀLF) + γ·‖Z‖²_F    s.t.  FᵀF = I,  Z ≥ 0
//! ```
//!
//! by alternating an exact spectral step for `F` with a closed-form
//! column-wise step for `Z`, clipping `Z` to the nonnegative orthant after
//! each sweep. Cluster labels are the connected components of the learned
//! graph; the rank term drives the graph towards exactly `c` components.

use std::time::Instant;

use log::debug;
use nalgebra::{DMatrix, DVector};
use petgraph::unionfind::UnionFind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::numerics::{spd_factorize, symmetric_eigen, SpdFactorization, SymmetricMatrix};

/// Eigenvalues below this (scaled by `max(1, ‖L‖∞)`) count as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-8;
/// Edge threshold for label extraction, relative to the largest graph entry.
pub const EDGE_THRESHOLD_REL: f64 = 1e-8;
/// Upper bound on β adjustments when `adapt_beta` is on.
pub const MAX_BETA_ADJUSTMENTS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpcConfig {
    /// Similarity-preserving weight; `1.0` disables the effect.
    pub alpha: f64,
    /// Weight of the Laplacian rank term.
    pub beta: f64,
    /// Frobenius regularizer on the graph.
    pub gamma: f64,
    pub clusters: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    /// Double or halve β each iteration until the graph has `clusters`
    /// components. Off by default.
    #[serde(default)]
    pub adapt_beta: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_iters() -> usize {
    200
}

fn default_rel_tol() -> f64 {
    1e-5
}

impl SpcConfig {
    pub fn new(clusters: usize, alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            clusters,
            max_iters: default_max_iters(),
            rel_tol: default_rel_tol(),
            adapt_beta: false,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_adapt_beta(mut self, on: bool) -> Self {
        self.adapt_beta = on;
        self
    }

    /// Checks parameter ranges against a problem of `n` samples.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 1 (or exactly 1), got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.clusters < 2 {
            return bad(format!("need at least 2 clusters, got {}", self.clusters));
        }
        if self.clusters > n {
            return bad(format!("{} clusters requested for {} samples", self.clusters, n));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(self.rel_tol > 0.0) {
            return bad(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        Ok(())
    }
}

/// Learned nonnegative affinity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    z: DMatrix<f64>,
}

impl SimilarityGraph {
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() != z.ncols() {
            return Err(Error::NotSquare {
                rows: z.nrows(),
                cols: z.ncols(),
            });
        }
        crate::numerics::check_finite(&z)?;
        if let Some(pos) = z.iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "graph entry ({}, {}) is negative",
                pos % z.nrows(),
                pos / z.nrows()
            )));
        }
        Ok(Self { z })
    }

    pub fn order(&self) -> usize {
        self.z.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.z
    }
}

/// Orthonormal `n × c` spectral embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    f: DMatrix<f64>,
}

/// Allowed deviation of `FᵀF` from the identity in [`SpectralEmbedding::new`].
pub const ORTHONORMAL_TOL: f64 = 1e-10;

impl SpectralEmbedding {
    /// Wraps a caller-supplied embedding; columns must be orthonormal.
    pub fn new(f: DMatrix<f64>) -> Result<Self> {
        let gram = f.transpose() * &f;
        let dev = (gram - DMatrix::identity(f.ncols(), f.ncols())).amax();
        if !(dev <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidConfig(format!(
                "embedding columns are not orthonormal (max deviation {dev:e})"
            )));
        }
        Ok(Self { f })
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn order(&self) -> usize {
        self.f.nrows()
    }

    pub fn clusters(&self) -> usize {
        self.f.ncols()
    }
}

/// Diagnostics for one outer iteration.
///
/// All objective values use the β that was in effect for this iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub beta: f64,
    /// At the incoming graph and previous embedding; absent on the first iteration.
    pub objective_before: Option<f64>,
    /// After the embedding step, graph unchanged.
    pub objective_after_embedding: f64,
    /// After the closed-form graph step, before clipping.
    pub objective_unprojected: f64,
    /// After clipping; the value carried into the next iteration.
    pub objective: f64,
    pub relative_change: f64,
    /// Laplacian eigenvalues of the incoming graph counted as zero.
    pub zero_eigenvalues: usize,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpcTrace {
    pub records: Vec<IterationRecord>,
}

impl SpcTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    pub component_count: usize,
    pub graph: SimilarityGraph,
    pub embedding: SpectralEmbedding,
    pub trace: SpcTrace,
    /// Relative change fell below tolerance and the graph has exactly `c` components.
    pub converged: bool,
    /// β at termination; differs from the configured value only with `adapt_beta`.
    pub final_beta: f64,
}

impl ClusteringResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// `W = (Z + Zᵀ)/2`, `L = diag(colsum W) − W`, for any square `z`.
fn laplacian_of(z: &DMatrix<f64>) -> SymmetricMatrix {
    let n = z.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if i != j {
                l[(i, j)] = -0.5 * (z[(i, j)] + z[(j, i)]);
            }
        }
    }
    for j in 0..n {
        // The self-loop contributes to both the degree and W, so it cancels.
        l[(j, j)] = -(0..n).filter(|&i| i != j).map(|i| l[(i, j)]).sum::<f64>();
    }
    SymmetricMatrix::from_exact(l)
}

/// Graph Laplacian of the symmetrized graph.
pub fn build_laplacian(z: &SimilarityGraph) -> SymmetricMatrix {
    laplacian_of(z.as_matrix())
}

fn leading_columns(eig: &crate::numerics::EigenSystem, c: usize) -> SpectralEmbedding {
    SpectralEmbedding {
        f: eig.eigenvectors.columns(0, c).into_owned(),
    }
}

/// Eigenvectors of the `c` smallest Laplacian eigenvalues.
pub fn update_embedding(l: &SymmetricMatrix, c: usize) -> Result<SpectralEmbedding> {
    if c == 0 || c > l.order() {
        return Err(Error::InvalidConfig(format!(
            "cannot embed {} nodes into {} dimensions",
            l.order(),
            c
        )));
    }
    Ok(leading_columns(&symmetric_eigen(l)?, c))
}

/// Squared distances from row `i` of the embedding to every row.
pub fn embedding_distances(f: &SpectralEmbedding, i: usize) -> DVector<f64> {
    let m = &f.f;
    DVector::from_fn(m.nrows(), |j, _| {
        (0..m.ncols()).map(|k| (m[(i, k)] - m[(j, k)]).powi(2)).sum()
    })
}

/// Closed-form minimizer of the column subproblem,
/// `(K + 2γI)⁻¹ (α·K[:, i] − β·d_i / 2)`, without the sign constraint.
pub fn update_graph_column(
    factor: &SpdFactorization,
    kernel_col: &DVector<f64>,
    distances: &DVector<f64>,
    cfg: &SpcConfig,
) -> Result<DVector<f64>> {
    let n = factor.order();
    for len in [kernel_col.len(), distances.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    let mut x = kernel_col * cfg.alpha - distances * (0.5 * cfg.beta);
    factor.solve_in_place(x.as_mut_slice())?;
    Ok(x)
}

pub fn project_nonneg(z: &DMatrix<f64>) -> SimilarityGraph {
    SimilarityGraph {
        z: z.map(|v| if v > 0.0 { v } else { 0.0 }),
    }
}

/// `Tr(FᵀLF)` for the Laplacian of `z`.
fn rank_term(z: &DMatrix<f64>, f: &SpectralEmbedding) -> f64 {
    let l = laplacian_of(z);
    let lf = l.as_matrix() * &f.f;
    f.f.dot(&lf)
}

/// Graph-only part of the objective: `½Tr(K) + ½Tr(ZᵀKZ) − αTr(KZ) + γ‖Z‖²`,
/// given the product `KZ`.
fn graph_terms(k: &DMatrix<f64>, z: &DMatrix<f64>, kz: &DMatrix<f64>, alpha: f64, gamma: f64) -> f64 {
    // Tr(KZ) = Σ K_ij Z_ji = Σ K_ij Z_ij for symmetric K
    0.5 * k.trace() + 0.5 * z.dot(kz) - alpha * k.dot(z) + gamma * z.norm_squared()
}

fn objective_raw(k: &DMatrix<f64>, z: &DMatrix<f64>, f: &SpectralEmbedding, cfg: &SpcConfig) -> f64 {
    let kz = k * z;
    graph_terms(k, z, &kz, cfg.alpha, cfg.gamma) + cfg.beta * rank_term(z, f)
}

/// Value of the full clustering objective at `(Z, F)`.
pub fn objective(k: &KernelMatrix, z: &SimilarityGraph, f: &SpectralEmbedding, cfg: &SpcConfig) -> f64 {
    objective_raw(k.as_matrix(), z.as_matrix(), f, cfg)
}

/// Undirected graph keeping only edges with `(Z + Zᵀ)/2 > threshold`.
pub fn thresholded_graph(z: &SimilarityGraph, threshold: f64) -> SimilarityGraph {
    let m = z.as_matrix();
    let n = m.nrows();
    SimilarityGraph {
        z: DMatrix::from_fn(n, n, |i, j| {
            let w = 0.5 * (m[(i, j)] + m[(j, i)]);
            if i != j && w > threshold {
                w
            } else {
                0.0
            }
        }),
    }
}

pub fn default_edge_threshold(z: &SimilarityGraph) -> f64 {
    EDGE_THRESHOLD_REL * z.as_matrix().max().max(0.0)
}

/// Connected components of the thresholded graph, labelled in order of each
/// component's lowest sample index. `threshold = None` uses the relative default.
pub fn extract_labels(z: &SimilarityGraph, threshold: Option<f64>) -> (Vec<usize>, usize) {
    let thr = threshold.unwrap_or_else(|| default_edge_threshold(z));
    let m = z.as_matrix();
    let n = m.nrows();
    let mut uf = UnionFind::<usize>::new(n);
    for j in 0..n {
        for i in (j + 1)..n {
            if 0.5 * (m[(i, j)] + m[(j, i)]) > thr {
                uf.union(i, j);
            }
        }
    }
    let roots = uf.into_labeling();
    let mut relabel = std::collections::HashMap::new();
    let labels: Vec<usize> = roots
        .iter()
        .map(|r| {
            let next = relabel.len();
            *relabel.entry(*r).or_insert(next)
        })
        .collect();
    (labels, relabel.len())
}

pub fn count_zero_eigenvalues(eigenvalues: &DVector<f64>, l: &SymmetricMatrix) -> usize {
    let tol = ZERO_EIGENVALUE_TOL * l.norm_inf().max(1.0);
    eigenvalues.iter().filter(|&&v| v < tol).count()
}

/// Random nonnegative start with unit column sums.
pub fn initial_graph(n: usize, seed: u64) -> SimilarityGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>());
    for mut col in z.column_iter_mut() {
        let s = col.sum();
        if s > 0.0 {
            col /= s;
        }
    }
    SimilarityGraph { z }
}

/// Mutable state threaded through the alternating iterations. Shared with
/// the multiple-kernel driver so a single kernel follows the same path.
#[derive(Debug, Clone)]
pub(crate) struct Alternation {
    pub z: SimilarityGraph,
    pub f: Option<SpectralEmbedding>,
    pub beta: f64,
    pub adjustments: usize,
    pub iteration: usize,
}

impl Alternation {
    pub fn new(n: usize, cfg: &SpcConfig) -> Self {
        Self {
            z: initial_graph(n, cfg.seed),
            f: None,
            beta: cfg.beta,
            adjustments: 0,
            iteration: 0,
        }
    }

    /// One pass: embedding step, optional β adaptation, column sweep, clipping.
    pub fn step(&mut self, k: &DMatrix<f64>, factor: &SpdFactorization, cfg: &SpcConfig) -> Result<IterationRecord> {
        let started = Instant::now();
        let c = cfg.clusters;
        let n = k.nrows();

        let l = laplacian_of(self.z.as_matrix());
        let eig = symmetric_eigen(&l)?;
        let zero_eigenvalues = count_zero_eigenvalues(&eig.eigenvalues, &l);
        let f = leading_columns(&eig, c);

        // The first graph is random rather than learned, so adaptation starts
        // from the second iteration.
        if cfg.adapt_beta && self.iteration > 0 && self.adjustments < MAX_BETA_ADJUSTMENTS {
            if zero_eigenvalues < c {
                self.beta *= 2.0;
                self.adjustments += 1;
            } else if zero_eigenvalues > c {
                self.beta *= 0.5;
                self.adjustments += 1;
            }
        }
        let step_cfg = SpcConfig {
            beta: self.beta,
            ..cfg.clone()
        };

        let z_prev = self.z.as_matrix();
        let prev_graph_terms = graph_terms(k, z_prev, &(k * z_prev), cfg.alpha, cfg.gamma);
        let objective_before = self
            .f
            .as_ref()
            .map(|f_prev| prev_graph_terms + self.beta * rank_term(z_prev, f_prev));
        let objective_after_embedding = prev_graph_terms + self.beta * rank_term(z_prev, &f);

        // Columns are independent given F and the factorization.
        let mut z_new = DMatrix::zeros(n, n);
        let mut rhs = DMatrix::zeros(n, n);
        for i in 0..n {
            let d = embedding_distances(&f, i);
            let k_col = k.column(i).into_owned();
            let col = update_graph_column(factor, &k_col, &d, &step_cfg)?;
            rhs.set_column(i, &(k_col * cfg.alpha - d * (0.5 * self.beta)));
            z_new.set_column(i, &col);
        }
        // (K + 2γI)Z = B  ⇒  KZ = B − 2γZ
        let kz_unprojected = &rhs - &z_new * (2.0 * cfg.gamma);
        let objective_unprojected = graph_terms(k, &z_new, &kz_unprojected, cfg.alpha, cfg.gamma)
            + self.beta * rank_term(&z_new, &f);

        let projected = project_nonneg(&z_new);
        let objective = objective_raw(k, projected.as_matrix(), &f, &step_cfg);
        let prev_norm = z_prev.norm();
        let relative_change = if prev_norm > 0.0 {
            (projected.as_matrix() - z_prev).norm() / prev_norm
        } else {
            f64::INFINITY
        };

        let record = IterationRecord {
            beta: self.beta,
            objective_before,
            objective_after_embedding,
            objective_unprojected,
            objective,
            relative_change,
            zero_eigenvalues,
            elapsed_secs: started.elapsed().as_secs_f64(),
        };
        debug!(
            "iter {} beta={:e} obj={:.6e} change={:.3e} zeros={}",
            self.iteration, self.beta, objective, relative_change, zero_eigenvalues
        );
        self.z = projected;
        self.f = Some(f);
        self.iteration += 1;
        Ok(record)
    }

    pub fn finish(self, trace: SpcTrace, cfg: &SpcConfig) -> ClusteringResult {
        let (labels, component_count) = extract_labels(&self.z, None);
        let tol_reached = trace
            .last()
            .is_some_and(|r| r.relative_change < cfg.rel_tol);
        let embedding = self.f.unwrap_or_else(|| SpectralEmbedding {
            f: DMatrix::zeros(self.z.order(), cfg.clusters),
        });
        ClusteringResult {
            labels,
            component_count,
            converged: tol_reached && component_count == cfg.clusters,
            graph: self.z,
            embedding,
            trace,
            final_beta: self.beta,
        }
    }
}

/// Factorizes `K + 2γI`, the system matrix shared by every column update.
pub fn factorize_system(k: &KernelMatrix, gamma: f64) -> Result<SpdFactorization> {
    spd_factorize(&k.matrix().shifted(2.0 * gamma))
}

/// Runs the alternating optimization on a single kernel.
pub fn run_spc(k: &KernelMatrix, cfg: &SpcConfig) -> Result<ClusteringResult> {
    let n = k.order();
    cfg.validate(n)?;
    let factor = factorize_system(k, cfg.gamma)?;
    let mut state = Alternation::new(n, cfg);
    let mut trace = SpcTrace::default();
    for _ in 0..cfg.max_iters {
        let record = state.step(k.as_matrix(), &factor, cfg)?;
        let done = record.relative_change < cfg.rel_tol;
        trace.records.push(record);
        if done {
            break;
        }
    }
    Ok(state.finish(trace, cfg))
}
