use std::path::Path;
use std::time::Instant;

use log::info;

use crate::error::Result;
use crate::eval::{accuracy, lloyd_kmeans, nmi, purity, Partition, KMEANS_DEFAULT_RESTARTS};
use crate::kernels::{build_standard_bank, normalize_kernel, standard_bank_specs, Dataset, KernelMatrix};
use crate::mkl::{run_mspc, sqrt_weight_sum};
use crate::spc::{run_spc, ClusteringResult};
use crate::workbench::config::{DatasetSource, ExperimentConfig, KernelChoice, MetricToggles, Method, REPORT_FORMAT};
use crate::workbench::io::{load_dense_matrix, save_graph, save_labels};
use crate::workbench::moons::generate_two_moons;
use crate::workbench::report::{round6, KernelWeights, RunReport, Scores, Timings, TraceSection};
use crate::workbench::svg::emit_scatter_svg;

pub const REPORT_FILE: &str = "report.toml";
pub const LABELS_FILE: &str = "labels.txt";
pub const GRAPH_FILE: &str = "graph.csv";
pub const SCATTER_FILE: &str = "scatter.svg";

/// Everything a run produces; the report plus the artifacts it describes.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: RunReport,
    pub dataset: Dataset,
    pub result: ClusteringResult,
}

pub fn load_dataset(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::TwoMoons { samples, noise, seed } => generate_two_moons(*samples, *noise, *seed),
        DatasetSource::File { path } => load_dense_matrix(path),
    }
}

/// Kernels for the configured method, with their display names.
pub fn build_kernels(cfg: &ExperimentConfig, x: &Dataset) -> Result<(Vec<KernelMatrix>, Vec<String>)> {
    match cfg.kernel {
        KernelChoice::Single(spec) => {
            let raw = spec.build(x)?;
            let k = if cfg.normalize_kernel { normalize_kernel(&raw)? } else { raw };
            Ok((vec![k], vec![spec.to_string()]))
        }
        KernelChoice::Bank => Ok((
            build_standard_bank(x)?,
            standard_bank_specs().iter().map(|s| s.to_string()).collect(),
        )),
    }
}

pub fn score(pred: &Partition, truth: &Partition, toggles: &MetricToggles) -> Result<Scores> {
    Ok(Scores {
        accuracy: toggles.accuracy.then(|| accuracy(pred, truth).map(round6)).transpose()?,
        nmi: toggles.nmi.then(|| nmi(pred, truth).map(round6)).transpose()?,
        purity: toggles.purity.then(|| purity(pred, truth).map(round6)).transpose()?,
    })
}

/// Runs one configured experiment and, when `cfg.out` is set, writes the
/// labels, learned graph, scatter plot (2-D data only) and report there.
pub fn run_experiment_detailed(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let started = Instant::now();
    cfg.validate()?;
    let x = load_dataset(&cfg.dataset).map_err(|e| e.context("loading dataset"))?;

    let kernel_started = Instant::now();
    let (bank, names) = build_kernels(cfg, &x).map_err(|e| e.context("building kernels"))?;
    let kernel_secs = kernel_started.elapsed().as_secs_f64();

    let solve_started = Instant::now();
    let (result, weights) = match cfg.method {
        Method::Spc => (run_spc(&bank[0], &cfg.spc).map_err(|e| e.context("running spc"))?, None),
        Method::Mspc => {
            let (result, state) = run_mspc(&bank, &cfg.spc).map_err(|e| e.context("running mspc"))?;
            let w = KernelWeights {
                kernels: names,
                sqrt_sum: sqrt_weight_sum(&state.weights),
                values: state.weights,
            };
            (result, Some(w))
        }
    };
    let solve_secs = solve_started.elapsed().as_secs_f64();
    info!(
        "{} finished after {} iterations, {} components, converged={}",
        cfg.method,
        result.iterations(),
        result.component_count,
        result.converged
    );

    let (metrics, baseline) = match x.labels() {
        Some(truth) => {
            let truth = Partition::new(truth.to_vec())?;
            let pred = Partition::from_raw(&result.labels);
            let metrics = score(&pred, &truth, &cfg.metrics)?;
            let baseline = if cfg.metrics.kmeans_baseline {
                let km = lloyd_kmeans(&x, cfg.spc.clusters, cfg.spc.seed, KMEANS_DEFAULT_RESTARTS)
                    .map_err(|e| e.context("k-means baseline"))?;
                Some(score(&km, &truth, &cfg.metrics)?)
            } else {
                None
            };
            (Some(metrics), baseline)
        }
        None => (None, None),
    };

    let records = &result.trace.records;
    let report = RunReport {
        format: REPORT_FORMAT.to_string(),
        method: cfg.method,
        samples: x.samples(),
        features: x.features(),
        iterations: result.iterations(),
        converged: result.converged,
        component_count: result.component_count,
        final_beta: result.final_beta,
        config: cfg.clone(),
        metrics,
        baseline,
        weights,
        trace: TraceSection {
            objective: records.iter().map(|r| r.objective).collect(),
            relative_change: records.iter().map(|r| r.relative_change).collect(),
            beta: records.iter().map(|r| r.beta).collect(),
            zero_eigenvalues: records.iter().map(|r| r.zero_eigenvalues).collect(),
        },
        timings: Timings {
            kernel_secs,
            solve_secs,
            total_secs: 0.0,
            iteration_secs: records.iter().map(|r| r.elapsed_secs).collect(),
        },
    };
    let mut outcome = ExperimentOutcome {
        report,
        dataset: x,
        result,
    };
    outcome.report.timings.total_secs = started.elapsed().as_secs_f64();
    if let Some(out) = &cfg.out {
        write_outputs(out, &outcome).map_err(|e| e.context(format!("writing outputs to {}", out.display())))?;
    }
    Ok(outcome)
}

/// Runs one configured experiment and returns its report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_experiment_detailed(cfg).map(|o| o.report)
}

fn write_outputs(out: &Path, o: &ExperimentOutcome) -> Result<()> {
    save_labels(&out.join(LABELS_FILE), &o.result.labels)?;
    save_graph(&out.join(GRAPH_FILE), &o.result.graph)?;
    if o.dataset.features() == 2 {
        emit_scatter_svg(&o.dataset, &Partition::from_raw(&o.result.labels), &out.join(SCATTER_FILE))?;
    }
    // Written last so its presence marks a complete run.
    o.report.save(&out.join(REPORT_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::spc::SpcConfig;
    use crate::workbench::io::{load_labels, save_dataset};

    fn small(method: Method, kernel: KernelChoice) -> ExperimentConfig {
        ExperimentConfig {
            method,
            kernel,
            dataset: DatasetSource::TwoMoons {
                samples: 40,
                noise: 0.05,
                seed: 1,
            },
            spc: SpcConfig::new(2, 2.0, 0.1, 10.0).with_adapt_beta(true),
            ..Default::default()
        }
    }

    #[test]
    fn single_kernel_reports_metrics() {
        let cfg = small(Method::Spc, KernelChoice::Single(KernelSpec::Gaussian { t: 10.0 }));
        let r = run_experiment(&cfg).unwrap();
        let m = r.metrics.unwrap();
        assert!(m.accuracy.is_some() && m.nmi.is_some() && m.purity.is_some());
        assert!(r.baseline.is_some());
        assert!(r.weights.is_none());
        assert_eq!(r.iterations, r.trace.objective.len());
        assert_eq!(r.samples, 40);
    }

    #[test]
    fn bank_reports_feasible_weights() {
        let mut cfg = small(Method::Mspc, KernelChoice::Bank);
        cfg.spc.alpha = 1.0;
        let r = run_experiment(&cfg).unwrap();
        let w = r.weights.unwrap();
        assert_eq!(w.values.len(), 12);
        assert_eq!(w.kernels.len(), 12);
        assert!((w.sqrt_sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn unlabeled_data_omits_metrics_but_writes_labels() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("pts.csv");
        let x = generate_two_moons(30, 0.05, 2).unwrap().without_labels();
        save_dataset(&data, &x).unwrap();
        let out = dir.path().join("run");
        let cfg = ExperimentConfig {
            dataset: DatasetSource::File { path: data },
            out: Some(out.clone()),
            ..small(Method::Spc, KernelChoice::Single(KernelSpec::Gaussian { t: 10.0 }))
        };
        let r = run_experiment(&cfg).unwrap();
        assert!(r.metrics.is_none() && r.baseline.is_none());
        assert_eq!(load_labels(&out.join(LABELS_FILE)).unwrap().len(), 30);
        assert!(out.join(SCATTER_FILE).exists());
        assert_eq!(RunReport::load(&out.join(REPORT_FILE)).unwrap(), r);
    }

    #[test]
    fn toggles_respected() {
        let mut cfg = small(Method::Spc, KernelChoice::Single(KernelSpec::Linear));
        cfg.spc.gamma = 1.0;
        cfg.metrics = MetricToggles {
            accuracy: true,
            nmi: false,
            purity: false,
            kmeans_baseline: false,
        };
        let r = run_experiment(&cfg).unwrap();
        let m = r.metrics.unwrap();
        assert!(m.accuracy.is_some() && m.nmi.is_none() && m.purity.is_none());
        assert!(r.baseline.is_none());
    }

    #[test]
    fn negative_costs_abort_mspc() {
        let err = run_experiment(&small(Method::Mspc, KernelChoice::Bank)).unwrap_err();
        assert!(matches!(
            err,
            crate::Error::Context { ref source, .. } if matches!(**source, crate::Error::NonPositiveCost { .. })
        ), "{err}");
    }

    #[test]
    fn errors_name_the_stage() {
        let mut cfg = small(Method::Spc, KernelChoice::Single(KernelSpec::Linear));
        cfg.spc.clusters = 1;
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.starts_with("running spc"), "{err}");
    }
}
