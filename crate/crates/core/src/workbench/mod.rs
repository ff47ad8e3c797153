//! Data files, synthetic data, experiment configuration, reports and plots.

pub mod config;
pub mod experiment;
pub mod io;
pub mod moons;
pub mod report;
pub mod svg;

pub use config::{DatasetSource, ExperimentConfig, KernelChoice, MetricToggles, Method, REPORT_FORMAT};
pub use experiment::{run_experiment, run_experiment_detailed, ExperimentOutcome};
pub use io::load_dense_matrix;
pub use moons::generate_two_moons;
pub use report::RunReport;
pub use svg::emit_scatter_svg;

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::io::{
        labels_path_for, load_dense_matrix, load_graph, load_kernel, load_labels, save_dataset, save_graph,
        save_kernel, save_labels,
    };
    use super::generate_two_moons;
    use crate::kernels::{build_standard_bank, gaussian_kernel, Dataset};
    use crate::spc::{run_spc, SpcConfig};

    #[test]
    fn dataset_round_trip_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("moons.csv");
        let x = generate_two_moons(50, 0.08, 4).unwrap();
        save_dataset(&path, &x).unwrap();
        assert!(labels_path_for(&path).exists());
        assert_eq!(load_dense_matrix(&path).unwrap(), x);
    }

    #[test]
    fn bank_kernels_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let x = Dataset::new(DMatrix::from_fn(3, 12, |i, j| ((i * 7 + j * 3) % 11) as f64 / 3.0), None).unwrap();
        for (i, k) in build_standard_bank(&x).unwrap().iter().enumerate() {
            let p = dir.path().join(format!("k{i}.csv"));
            save_kernel(&p, k).unwrap();
            assert_eq!(load_kernel(&p).unwrap().as_matrix(), k.as_matrix());
        }
    }

    #[test]
    fn learned_graph_and_labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = generate_two_moons(30, 0.05, 1).unwrap();
        let k = gaussian_kernel(&x, 10.0).unwrap();
        let res = run_spc(&k, &SpcConfig::new(2, 2.0, 0.1, 1.0)).unwrap();
        save_graph(&dir.path().join("z.csv"), &res.graph).unwrap();
        save_labels(&dir.path().join("l.txt"), &res.labels).unwrap();
        assert_eq!(load_graph(&dir.path().join("z.csv")).unwrap(), res.graph);
        assert_eq!(load_labels(&dir.path().join("l.txt")).unwrap(), res.labels);
    }

    #[test]
    fn overwrite_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.txt");
        save_labels(&p, &[0, 1]).unwrap();
        save_labels(&p, &[1, 0, 1]).unwrap();
        assert_eq!(load_labels(&p).unwrap(), vec![1, 0, 1]);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
