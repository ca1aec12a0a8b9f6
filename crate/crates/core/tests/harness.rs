mod common;

use common::{small_experiment, Relabel};
use mcm_core::harness::{
    export_projection, read_quality_csv, run_ablate, run_clusterability, run_scaling, run_simulate, simulate_arms,
    simulate_paired, AblationAxis, Arm, StepView, Variant,
};
use mcm_core::memory::MemorySnapshot;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn paired_run_rows_and_invariants() {
    let cfg = small_experiment(200);
    let mut checked = 0;
    let mut obs = |v: &StepView<'_>| {
        let snap = v.memory.snapshot();
        match v.variant {
            Variant::Mcm => {
                assert!(snap.clusters.len() <= cfg.memory.max_clusters);
                assert!(snap.clusters.iter().all(|c| c.members.len() <= cfg.memory.capacity));
                let k = snap.clusters.len();
                assert_eq!(v.retrieved.len(), cfg.n_adapt / k * k);
            }
            Variant::Scm => {
                assert!(snap.len() <= cfg.scm.capacity);
                assert_eq!(v.retrieved.len(), cfg.n_adapt);
            }
        }
        checked += 1;
    };
    let run = simulate_paired(&cfg, &[Variant::Mcm, Variant::Scm], Some(&mut obs)).unwrap();
    assert_eq!(checked, 400);
    for m in &run.metrics {
        let steps: Vec<usize> = m.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![50, 100, 150, 200]);
        assert!(m.rows.iter().all(|r| r.imbalance >= 1.0 && (0.0..=1.0).contains(&r.coverage)));
    }
    assert_eq!(run.window.len(), 100);
}

fn strip_labels(mut s: MemorySnapshot) -> MemorySnapshot {
    for m in s.clusters.iter_mut().flat_map(|c| c.members.iter_mut()) {
        m.diag_mode = 0;
        m.diag_class = 0;
    }
    s
}

#[test]
fn permuted_labels_leave_trajectories_unchanged() {
    let cfg = small_experiment(150);
    let record = |relabel: bool| {
        let mut arms: Vec<Arm> = [Variant::Mcm, Variant::Scm]
            .into_iter()
            .map(|v| {
                let a = Arm::from_config(v, &cfg).unwrap();
                if relabel {
                    Arm { variant: v, memory: Box::new(Relabel(a.memory)) }
                } else {
                    a
                }
            })
            .collect();
        let mut trace = Vec::new();
        let mut obs = |v: &StepView<'_>| {
            let ids: Vec<u64> = v.retrieved.iter().map(|s| s.id).collect();
            trace.push((strip_labels(v.memory.snapshot()), ids));
        };
        let run = simulate_arms(&cfg, &mut arms, Some(&mut obs)).unwrap();
        (trace, run.metrics.iter().map(|m| m.rows.clone()).collect::<Vec<_>>())
    };
    assert_eq!(record(false), record(true));
}

#[test]
fn simulate_writes_identical_files() {
    let mut cfg = small_experiment(100);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        cfg.out_dir = Some(dir.path().to_path_buf());
        run_simulate(&cfg, &[Variant::Mcm, Variant::Scm]).unwrap();
    }
    for f in ["quality.csv", "snapshot_mcm.json", "snapshot_scm.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let rows = read_quality_csv(a.path().join("quality.csv")).unwrap();
    assert_eq!(rows.len(), 4);
}

#[test]
fn projection_first_axis_beats_random_directions() {
    let cfg = small_experiment(150);
    let run = simulate_paired(&cfg, &[Variant::Mcm], None).unwrap();
    let p = export_projection(&run.snapshots[0], &run.window).unwrap();
    let mut data = run.window.clone();
    data.extend(run.snapshots[0].descriptors());
    assert_eq!(p.rows.len(), data.len());
    let n = data.len() as f64;
    let var_along = |u: &[f64]| {
        let proj: Vec<f64> = data.iter().map(|x| x.iter().zip(&p.mean).zip(u).map(|((a, m), w)| (a - m) * w).sum()).collect();
        proj.iter().map(|v| v * v).sum::<f64>() / n
    };
    assert!((var_along(&p.axes[0]) - p.explained_variance[0]).abs() < 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let mut u: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        assert!(var_along(&u) <= p.explained_variance[0] + 1e-12);
    }
    let dot: f64 = p.axes[0].iter().zip(&p.axes[1]).map(|(a, b)| a * b).sum();
    assert!(dot.abs() < 1e-9);
    let mem_rows = p.rows.iter().filter(|r| r.source == "memory").count();
    assert_eq!(mem_rows, run.snapshots[0].len());
}

#[test]
fn larger_tau_means_fewer_clusters() {
    let cfg = small_experiment(150);
    let values: Vec<String> = ["0.05", "0.2", "0.5", "2.0"].iter().map(|s| s.to_string()).collect();
    let rows = run_ablate(&cfg, AblationAxis::Tau, &values).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].mean_clusters <= w[0].mean_clusters + 1e-9, "{} -> {}", w[0].value, w[1].value);
    }
    assert!(rows[0].mean_clusters > rows[3].mean_clusters);
    assert!((rows[3].mean_clusters - 1.0).abs() < 1e-9);
}

#[test]
fn strategy_ablation_reports_comparison_costs() {
    let cfg = small_experiment(150);
    let values: Vec<String> = ["acc", "gcc"].iter().map(|s| s.to_string()).collect();
    let rows = run_ablate(&cfg, AblationAxis::Strategy, &values).unwrap();
    let k = cfg.memory.max_clusters as f64;
    assert_eq!(rows[0].comparisons_per_consolidation, Some(k - 1.0));
    assert_eq!(rows[1].comparisons_per_consolidation, Some(k * (k - 1.0) / 2.0));
}

#[test]
fn scaling_pairs_equal_capacities() {
    let cfg = small_experiment(100);
    let rows = run_scaling(&cfg, &[16, 48]).unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r.clusters * r.per_cluster, r.total);
    }
    assert!(run_scaling(&cfg, &[20]).is_err());
}

#[test]
fn clusterability_reports_every_kind() {
    let cfg = small_experiment(200);
    let reports = run_clusterability(&cfg).unwrap();
    assert_eq!(reports.len(), 3);
    for r in &reports {
        assert_eq!(r.windows.len(), 3);
        assert!(r.windows.iter().all(|w| (1..=6).contains(&w.k_star)));
    }
}
