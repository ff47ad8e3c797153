//! Multiple-kernel extension: learns a combination `H = Σ wᵢ Kⁱ` with
//! `Σ √wᵢ = 1` jointly with the graph.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::numerics::SymmetricMatrix;
use crate::spc::{factorize_system, Alternation, ClusteringResult, SimilarityGraph, SpcConfig, SpcTrace};

/// Allowed deviation of `Σ √wᵢ` from one when validating caller weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct MklState {
    pub weights: Vec<f64>,
    pub combined: KernelMatrix,
    pub costs: Vec<f64>,
    pub iteration: usize,
    /// Weights after each update, oldest first.
    pub weight_history: Vec<Vec<f64>>,
}

pub fn sqrt_weight_sum(w: &[f64]) -> f64 {
    w.iter().map(|v| v.sqrt()).sum()
}

fn check_bank(bank: &[KernelMatrix]) -> Result<usize> {
    let first = bank
        .first()
        .ok_or_else(|| Error::InvalidConfig("kernel bank is empty".into()))?;
    let n = first.order();
    for k in bank {
        if k.order() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: k.order(),
            });
        }
    }
    Ok(n)
}

/// Entrywise `Σ wᵢ Kⁱ` with no feasibility check.
fn weighted_sum(bank: &[KernelMatrix], w: &[f64]) -> KernelMatrix {
    let n = bank[0].order();
    let mut h = DMatrix::zeros(n, n);
    for (k, &wi) in bank.iter().zip(w) {
        h += k.as_matrix() * wi;
    }
    KernelMatrix::precomputed(SymmetricMatrix::new(h).expect("weighted sum of finite symmetric kernels"))
}

/// Combined kernel for feasible weights (`wᵢ ≥ 0`, `Σ √wᵢ = 1`).
pub fn combine_kernels(bank: &[KernelMatrix], w: &[f64]) -> Result<KernelMatrix> {
    check_bank(bank)?;
    if w.len() != bank.len() {
        return Err(Error::DimensionMismatch {
            expected: bank.len(),
            actual: w.len(),
        });
    }
    if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidWeights(format!("w[{i}] = {} is not a nonnegative number", w[i])));
    }
    let s = sqrt_weight_sum(w);
    if (s - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidWeights(format!("sum of square roots is {s}, expected 1")));
    }
    Ok(weighted_sum(bank, w))
}

/// `hᵢ = Tr(Kⁱ − 2α KⁱZ + ZᵀKⁱZ)` for every kernel in the bank.
pub fn kernel_costs(bank: &[KernelMatrix], z: &SimilarityGraph, alpha: f64) -> Result<Vec<f64>> {
    let n = check_bank(bank)?;
    if z.order() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: z.order(),
        });
    }
    let z = z.as_matrix();
    // Tr(ZᵀKZ) = Σ K ∘ (Z Zᵀ), shared across the bank.
    let zzt = z * z.transpose();
    Ok(bank
        .iter()
        .map(|k| {
            let k = k.as_matrix();
            // Tr(KZ) = Σ K ∘ Zᵀ = Σ K ∘ Z since K is symmetric
            k.trace() - 2.0 * alpha * k.dot(z) + k.dot(&zzt)
        })
        .collect())
}

/// Closed-form minimizer of `Σ wᵢhᵢ` subject to `Σ √wᵢ = 1`, `wᵢ ≥ 0`:
/// `wᵢ = (hᵢ Σⱼ 1/hⱼ)⁻²`.
pub fn update_weights(h: &[f64]) -> Result<Vec<f64>> {
    if h.is_empty() {
        return Err(Error::InvalidWeights("no kernel costs".into()));
    }
    if let Some(i) = h.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonPositiveCost { index: i, value: h[i] });
    }
    // hᵢ Σⱼ 1/hⱼ written as Σⱼ hᵢ/hⱼ keeps the single-kernel case exactly 1.
    Ok(h.iter()
        .map(|hi| {
            let s: f64 = h.iter().map(|hj| hi / hj).sum();
            1.0 / (s * s)
        })
        .collect())
}

/// Alternates the single-kernel steps on the current combination with the
/// weight update, starting from uniform `wᵢ = 1/r`.
pub fn run_mspc(bank: &[KernelMatrix], cfg: &SpcConfig) -> Result<(ClusteringResult, MklState)> {
    let n = check_bank(bank)?;
    cfg.validate(n)?;
    let r = bank.len();
    // Uniform 1/r violates Σ√w = 1 for r > 1; the first update restores it.
    let mut weights = vec![1.0 / r as f64; r];
    let mut costs = vec![f64::NAN; r];
    let mut history = Vec::new();
    let mut state = Alternation::new(n, cfg);
    let mut trace = SpcTrace::default();
    for _ in 0..cfg.max_iters {
        let h = weighted_sum(bank, &weights);
        let factor = factorize_system(&h, cfg.gamma)?;
        let record = state.step(h.as_matrix(), &factor, cfg)?;
        let done = record.relative_change < cfg.rel_tol;
        trace.records.push(record);
        costs = kernel_costs(bank, &state.z, cfg.alpha)?;
        weights = update_weights(&costs)?;
        history.push(weights.clone());
        if done {
            break;
        }
    }
    let iteration = trace.len();
    let result = state.finish(trace, cfg);
    let mkl = MklState {
        combined: weighted_sum(bank, &weights),
        weights,
        costs,
        iteration,
        weight_history: history,
    };
    Ok((result, mkl))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_kernel(n: usize, rng: &mut impl Rng) -> KernelMatrix {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        KernelMatrix::precomputed(SymmetricMatrix::new(&m * m.transpose()).unwrap())
    }

    fn random_graph(n: usize, rng: &mut impl Rng) -> SimilarityGraph {
        SimilarityGraph::new(DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..0.5))).unwrap()
    }

    #[test]
    fn combine_degenerate_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bank = [random_kernel(4, &mut rng), random_kernel(4, &mut rng)];
        let h = combine_kernels(&bank, &[1.0, 0.0]).unwrap();
        assert_eq!(h.as_matrix(), bank[0].as_matrix());
    }

    #[test]
    fn combine_identical_kernels_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = random_kernel(5, &mut rng);
        for r in [2usize, 3, 5] {
            let bank = vec![k.clone(); r];
            let w = vec![1.0 / (r * r) as f64; r];
            let h = combine_kernels(&bank, &w).unwrap();
            assert!((h.as_matrix() - k.as_matrix() / r as f64).amax() <= 1e-14);
        }
    }

    #[test]
    fn combine_two_quarter_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bank = [random_kernel(3, &mut rng), random_kernel(3, &mut rng)];
        let w = [0.25, 0.25];
        assert_eq!(sqrt_weight_sum(&w), 1.0);
        let h = combine_kernels(&bank, &w).unwrap();
        let expect = (bank[0].as_matrix() + bank[1].as_matrix()) / 4.0;
        assert!((h.as_matrix() - expect).amax() <= 1e-15);
    }

    #[test]
    fn combine_rejects_bad_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bank = [random_kernel(3, &mut rng), random_kernel(4, &mut rng)];
        assert!(matches!(
            combine_kernels(&bank, &[0.25, 0.25]),
            Err(Error::DimensionMismatch { .. })
        ));
        let bank = [random_kernel(3, &mut rng), random_kernel(3, &mut rng)];
        assert!(matches!(combine_kernels(&bank, &[0.5, 0.5]), Err(Error::InvalidWeights(_))));
        assert!(matches!(combine_kernels(&bank, &[1.0, -0.0001]), Err(Error::InvalidWeights(_))));
        assert!(combine_kernels(&[], &[]).is_err());
    }

    #[test]
    fn costs_of_zero_graph_are_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bank = [random_kernel(4, &mut rng), random_kernel(4, &mut rng)];
        let z = SimilarityGraph::new(DMatrix::zeros(4, 4)).unwrap();
        let h = kernel_costs(&bank, &z, 3.0).unwrap();
        assert_eq!(h[0], bank[0].as_matrix().trace());
        assert_eq!(h[1], bank[1].as_matrix().trace());
    }

    #[test]
    fn costs_cancel_for_identity() {
        let bank = [KernelMatrix::precomputed(SymmetricMatrix::identity(5))];
        let z = SimilarityGraph::new(DMatrix::identity(5, 5)).unwrap();
        assert_abs_diff_eq!(kernel_costs(&bank, &z, 1.0).unwrap()[0], 0.0, epsilon = 1e-15);
    }

    /// Naive triple-loop evaluation of Tr(K − 2αKZ + ZᵀKZ).
    fn naive_cost(k: &DMatrix<f64>, z: &DMatrix<f64>, alpha: f64) -> f64 {
        let n = k.nrows();
        let mut tr = 0.0;
        for i in 0..n {
            tr += k[(i, i)];
            let mut kz_ii = 0.0;
            for j in 0..n {
                kz_ii += k[(i, j)] * z[(j, i)];
            }
            tr -= 2.0 * alpha * kz_ii;
            let mut ztkz_ii = 0.0;
            for a in 0..n {
                for b in 0..n {
                    ztkz_ii += z[(a, i)] * k[(a, b)] * z[(b, i)];
                }
            }
            tr += ztkz_ii;
        }
        tr
    }

    #[test]
    fn costs_match_naive_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bank: Vec<_> = (0..3).map(|_| random_kernel(6, &mut rng)).collect();
        let z = random_graph(6, &mut rng);
        let h = kernel_costs(&bank, &z, 1.7).unwrap();
        for (k, hi) in bank.iter().zip(&h) {
            assert_abs_diff_eq!(*hi, naive_cost(k.as_matrix(), z.as_matrix(), 1.7), epsilon = 1e-10);
        }
    }

    #[test]
    fn weights_examples() {
        assert_eq!(update_weights(&[1.0, 1.0]).unwrap(), vec![0.25, 0.25]);
        let w = update_weights(&[1.0, 3.0]).unwrap();
        assert_abs_diff_eq!(w[0], 9.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 1.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sqrt_weight_sum(&w), 1.0, epsilon = 1e-15);
        for r in [1usize, 3, 12] {
            let w = update_weights(&vec![2.5; r]).unwrap();
            assert!(w.iter().all(|&v| v == 1.0 / (r * r) as f64));
        }
    }

    #[test]
    fn weights_reject_non_positive_costs() {
        assert!(matches!(
            update_weights(&[1.0, 0.0]),
            Err(Error::NonPositiveCost { index: 1, .. })
        ));
        assert!(matches!(
            update_weights(&[-2.0, 1.0]),
            Err(Error::NonPositiveCost { index: 0, .. })
        ));
        assert!(update_weights(&[]).is_err());
    }

    proptest! {
        #[test]
        fn weights_feasible(h in prop::collection::vec(1e-3f64..1e3, 1..20)) {
            let w = update_weights(&h).unwrap();
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((sqrt_weight_sum(&w) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn weighted_cost_is_linear(seed in any::<u64>(), r in 1usize..5, alpha in 1.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 5;
            let bank: Vec<_> = (0..r).map(|_| random_kernel(n, &mut rng)).collect();
            let raw: Vec<f64> = (0..r).map(|_| rng.gen_range(0.1..1.0)).collect();
            let w = update_weights(&raw).unwrap();
            let z = random_graph(n, &mut rng);
            let h = kernel_costs(&bank, &z, alpha).unwrap();
            let lhs: f64 = w.iter().zip(&h).map(|(a, b)| a * b).sum();
            let combined = combine_kernels(&bank, &w).unwrap();
            let rhs = kernel_costs(&[combined], &z, alpha).unwrap()[0];
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }
    }
}
