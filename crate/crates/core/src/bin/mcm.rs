use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mcm_core::descriptors::DescriptorKind;
use mcm_core::harness::{
    export_projection, run_ablate, run_clusterability, run_scaling, run_simulate, simulate_paired, write_json,
    write_projection_csv, AblationAxis, ExperimentConfig, Variant,
};
use mcm_core::memory::{compute_kmax, MetricKind, Strategy};
use mcm_core::Result;

#[derive(Parser)]
#[command(name = "mcm", version, about = "Multi-cluster memory experiments on a synthetic non-i.i.d. stream")]
struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    num_classes: Option<usize>,
    #[arg(long, global = true)]
    images_per_class: Option<usize>,
    /// Dirichlet concentration of the class ordering.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Per-cluster capacity N.
    #[arg(long, global = true)]
    capacity: Option<usize>,
    #[arg(long, global = true)]
    max_clusters: Option<usize>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    metric: Option<MetricKind>,
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    #[arg(long, global = true)]
    lambda_time: Option<f64>,
    #[arg(long, global = true)]
    lambda_uncertainty: Option<f64>,
    #[arg(long, global = true)]
    lambda_distance: Option<f64>,
    #[arg(long, global = true)]
    descriptor: Option<DescriptorKind>,
    #[arg(long, global = true)]
    scm_capacity: Option<usize>,
    #[arg(long, global = true)]
    n_adapt: Option<usize>,
    /// Diagnostic window in steps.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Diagnostic cadence in steps.
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[arg(long, global = true)]
    k_ref_cap: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    sweep_seeds: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run MCM and/or SCM on one stream and record memory diagnostics.
    Simulate {
        /// Omit to run both variants on the same stream.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Sliding-window BIC model selection over the stream.
    Clusterability {
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<DescriptorKind>>,
        #[arg(long)]
        cwindow: Option<usize>,
        #[arg(long)]
        cstride: Option<usize>,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Sweep one memory parameter.
    Ablate {
        #[arg(long)]
        axis: AblationAxis,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
    },
    /// Compare SCM and MCM at equal total capacities.
    Scaling {
        #[arg(long, value_delimiter = ',', default_value = "64,128,192,256,320")]
        totals: Vec<usize>,
    },
    /// PCA coordinates of the final memory and the trailing stream window.
    Project {
        #[arg(long, default_value = "mcm")]
        variant: Variant,
    },
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => ExperimentConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    if let Some(n) = o.num_classes {
        cfg.stream.num_classes = n;
        cfg.memory.num_classes = n;
        cfg.scm.num_classes = n;
        if o.max_clusters.is_none() {
            cfg.memory.max_clusters = compute_kmax(n);
        }
    }
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(cfg.stream.total_steps, o.steps);
    set!(cfg.stream.batch_size, o.batch_size);
    set!(cfg.stream.images_per_class, o.images_per_class);
    set!(cfg.stream.dirichlet_delta, o.delta);
    set!(cfg.memory.capacity, o.capacity);
    set!(cfg.memory.max_clusters, o.max_clusters);
    set!(cfg.memory.tau, o.tau);
    set!(cfg.memory.metric, o.metric);
    set!(cfg.memory.strategy, o.strategy);
    set!(cfg.memory.lambda_time, o.lambda_time);
    set!(cfg.scm.lambda_time, o.lambda_time);
    set!(cfg.memory.lambda_uncertainty, o.lambda_uncertainty);
    set!(cfg.scm.lambda_uncertainty, o.lambda_uncertainty);
    set!(cfg.memory.lambda_distance, o.lambda_distance);
    set!(cfg.memory.descriptor, o.descriptor);
    set!(cfg.scm.descriptor, o.descriptor);
    set!(cfg.scm.capacity, o.scm_capacity);
    set!(cfg.n_adapt, o.n_adapt);
    set!(cfg.diagnostics.window, o.window);
    set!(cfg.diagnostics.stride, o.stride);
    set!(cfg.diagnostics.k_ref_cap, o.k_ref_cap);
    set!(cfg.workers, o.workers);
    set!(cfg.sweep_seeds, o.sweep_seeds);
    if let Command::Clusterability {
        kinds,
        cwindow,
        cstride,
        k_min,
        k_max,
    } = &cli.command
    {
        let c = &mut cfg.clusterability;
        set!(c.kinds, kinds.clone());
        set!(c.window, *cwindow);
        set!(c.stride, *cstride);
        set!(c.k_min, *k_min);
        set!(c.k_max, *k_max);
    }
    cfg.stream.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn fmt(x: f64) -> String {
    format!("{x:.4}")
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli)?;
    match &cli.command {
        Command::Simulate { variant } => {
            let variants = match variant {
                Some(v) => vec![*v],
                None => vec![Variant::Mcm, Variant::Scm],
            };
            for m in run_simulate(&cfg, &variants)? {
                println!(
                    "{} points={} imbalance={} entropy={} coverage={} energy_distance={} clusters={}",
                    m.variant,
                    m.rows.len(),
                    fmt(m.mean_imbalance()),
                    fmt(m.mean_entropy()),
                    fmt(m.mean_coverage()),
                    fmt(m.mean_energy_distance()),
                    m.final_clusters
                );
            }
        }
        Command::Clusterability { .. } => {
            for r in run_clusterability(&cfg)? {
                println!(
                    "{} windows={} mean_k={} std_k={}",
                    r.kind.name(),
                    r.windows.len(),
                    fmt(r.mean_k),
                    fmt(r.std_k)
                );
            }
        }
        Command::Ablate { axis, values } => {
            let values = values.clone().unwrap_or_else(|| axis.default_values());
            for r in run_ablate(&cfg, *axis, &values)? {
                println!(
                    "{}={} imbalance={} energy_distance={} clusters={} comparisons_per_consolidation={}",
                    axis,
                    r.value,
                    fmt(r.mean_imbalance),
                    fmt(r.mean_energy_distance),
                    fmt(r.mean_clusters),
                    r.comparisons_per_consolidation.map_or("-".into(), fmt)
                );
            }
        }
        Command::Scaling { totals } => {
            for r in run_scaling(&cfg, totals)? {
                println!(
                    "T={} {}({}x{}) energy_distance={} imbalance={}",
                    r.total,
                    r.variant,
                    r.clusters,
                    r.per_cluster,
                    fmt(r.mean_energy_distance),
                    fmt(r.mean_imbalance)
                );
            }
        }
        Command::Project { variant } => {
            let run = simulate_paired(&cfg, &[*variant], None)?;
            let proj = export_projection(&run.snapshots[0], &run.window)?;
            if let Some(dir) = &cfg.out_dir {
                std::fs::create_dir_all(dir)?;
                write_projection_csv(dir.join("projection.csv"), &proj)?;
                write_json(dir.join("projection_axes.json"), &(&proj.mean, &proj.axes, &proj.explained_variance))?;
            }
            println!(
                "rows={} explained_variance=({}, {})",
                proj.rows.len(),
                fmt(proj.explained_variance[0]),
                fmt(proj.explained_variance[1])
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
