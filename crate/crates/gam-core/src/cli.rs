//! Command-line surface binding sampling, geometry, attention, benchmark,
//! demo and gradcheck into one tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
//! (gradcheck above tolerance or diverged training). Every output file
//! carries a config echo: `#` comment lines in text formats, a `config`
//! field in JSON, a `.meta.json` sidecar next to binary outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use crate::bench::{bench_gradient_methods, synthetic_bench_cloud};
use crate::demo::{generate_shapes, gradcheck_classifier, train_classifier};
use crate::error::{GamError, Result};
use crate::gam::gam_forward;
use crate::geometry::edge_geometry;
use crate::io::{read_cloud, write_cloud, write_xyz, CloudFormat};
use crate::sampling::{ball_query, farthest_point_sample, knn};
use crate::types::{init_params, GamConfig, PointCloud};

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_DATA: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "gam",
    version,
    about = "Gradient-attention local feature aggregation for point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for sampling and parameter initialization
    /// (default 0; `demo` defaults to 42, `gradcheck` to 12).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 is the reproducible / benchmark mode.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Balance weight between attention-weighted and plain features.
    #[arg(long, global = true, default_value_t = 1.0)]
    lambda: f64,

    /// Ball-query radius (default 0.5; `demo` defaults to 0.45).
    #[arg(long, global = true)]
    radius: Option<f64>,

    /// Neighborhood size (default 16; `bench` defaults to 32).
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Number of sampled centers (default 64; `bench` defaults to 1024,
    /// `demo` to 32).
    #[arg(long, global = true)]
    n_centers: Option<usize>,

    /// Guard for degenerate edges and the azimuth singularity.
    #[arg(long, global = true, default_value_t = 1e-8)]
    epsilon: f64,

    /// Drop the distance signal from the attention input.
    #[arg(long, global = true)]
    no_distance: bool,

    /// Drop the gradient signal from the attention input.
    #[arg(long, global = true)]
    no_gradient: bool,

    /// Divide distances by the radius before the attention MLP.
    #[arg(long, global = true)]
    normalize_distance: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SearchMethod {
    Ball,
    Knn,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Farthest point sampling: center indices to stdout or CSV.
    Sample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Neighborhood search around sampled centers, as CSV.
    Neighbors {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = SearchMethod::Ball)]
        method: SearchMethod,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Edge geometry dump: one `s,j,dx,dy,dz,d,g` row per edge.
    Gradients {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Full forward pass with seeded parameters; writes pooled features.
    Attend {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Output channels of the extractor.
        #[arg(long, default_value_t = 16)]
        c_out: usize,
    },
    /// Time the zenith/azimuth gradient against the plane-fit baseline.
    Bench {
        /// Synthetic cloud size.
        #[arg(long, default_value_t = 4096)]
        points: usize,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long)]
        output_csv: Option<PathBuf>,
        #[arg(long)]
        output_json: Option<PathBuf>,
    },
    /// Train the synthetic-shape classifier and write a JSON report.
    Demo {
        #[arg(long, default_value_t = 60)]
        samples_per_class: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        /// Gaussian jitter applied to every generated point.
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        /// Bypass attention (the factor is forced to exactly one).
        #[arg(long)]
        gam_off: bool,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Optional per-epoch CSV curves.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

impl Cli {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(match self.command {
            Command::Demo { .. } => 42,
            Command::Gradcheck { .. } => 12,
            _ => 0,
        })
    }

    fn config(&self) -> GamConfig {
        let (def_centers, def_k, def_radius) = match self.command {
            Command::Bench { .. } => (1024, 32, 0.5),
            Command::Demo { .. } => (32, 16, 0.45),
            _ => (64, 16, 0.5),
        };
        GamConfig {
            lambda: self.lambda,
            radius: self.radius.unwrap_or(def_radius),
            n_centers: self.n_centers.unwrap_or(def_centers),
            k_neighbors: self.k.unwrap_or(def_k),
            epsilon: self.epsilon,
            use_distance: !self.no_distance,
            use_gradient: !self.no_gradient,
            mlp_hidden: 16,
            seed: self.seed(),
            normalize_distance: self.normalize_distance,
        }
    }

    /// One `key=value` echo line per effective setting, enough to replay.
    fn echo_lines(&self, command: &str) -> Vec<String> {
        let c = self.config();
        vec![
            format!("gam {command}"),
            format!(
                "seed={} threads={} lambda={} radius={} k={} n_centers={} epsilon={}",
                c.seed, self.threads, c.lambda, c.radius, c.k_neighbors, c.n_centers, c.epsilon
            ),
            format!(
                "use_distance={} use_gradient={} normalize_distance={} mlp_hidden={}",
                c.use_distance, c.use_gradient, c.normalize_distance, c.mlp_hidden
            ),
        ]
    }

    fn echo_json(&self, command: &str) -> serde_json::Value {
        serde_json::json!({
            "command": command,
            "threads": self.threads,
            "config": self.config(),
        })
    }
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return EXIT_USAGE;
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_DATA;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                GamError::DivergedLoss { .. } => EXIT_NUMERICAL,
                _ => EXIT_DATA,
            }
        }
    }
}

fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| GamError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn csv_prelude(cli: &Cli, command: &str) -> String {
    let mut out = String::new();
    for line in cli.echo_lines(command) {
        let _ = writeln!(out, "# {line}");
    }
    out
}

fn execute(cli: &Cli) -> Result<i32> {
    let config = cli.config();
    match &cli.command {
        Command::Sample { input, output } => {
            let cloud = read_cloud(input)?;
            let centers = farthest_point_sample(&cloud, config.n_centers, config.seed)?;
            match output {
                None => {
                    for c in &centers {
                        println!("{c}");
                    }
                }
                Some(path) => {
                    let mut csv = csv_prelude(cli, "sample");
                    csv.push_str("rank,index\n");
                    for (rank, c) in centers.iter().enumerate() {
                        let _ = writeln!(csv, "{rank},{c}");
                    }
                    write_text(path, &csv)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Neighbors {
            input,
            method,
            output,
        } => {
            let cloud = read_cloud(input)?;
            let centers = farthest_point_sample(&cloud, config.n_centers, config.seed)?;
            let nbrs = match method {
                SearchMethod::Ball => {
                    ball_query(&cloud, &centers, config.radius, config.k_neighbors)?
                }
                SearchMethod::Knn => knn(&cloud, &centers, config.k_neighbors)?,
            };
            let mut csv = csv_prelude(cli, "neighbors");
            let _ = writeln!(
                csv,
                "# method={}",
                match method {
                    SearchMethod::Ball => "ball",
                    SearchMethod::Knn => "knn",
                }
            );
            csv.push_str("s,j,center,neighbor\n");
            for s in 0..nbrs.n_centers() {
                for j in 0..nbrs.k() {
                    let _ = writeln!(
                        csv,
                        "{s},{j},{},{}",
                        nbrs.center_ids()[s],
                        nbrs.neighbor_ids()[[s, j]]
                    );
                }
            }
            match output {
                None => print!("{csv}"),
                Some(path) => write_text(path, &csv)?,
            }
            Ok(EXIT_OK)
        }
        Command::Gradients { input, output } => {
            let cloud = read_cloud(input)?;
            let centers = farthest_point_sample(&cloud, config.n_centers, config.seed)?;
            let nbrs = ball_query(&cloud, &centers, config.radius, config.k_neighbors)?;
            let edges = edge_geometry(&cloud, &nbrs, config.epsilon)?;
            let mut csv = csv_prelude(cli, "gradients");
            csv.push_str("s,j,dx,dy,dz,d,g\n");
            for s in 0..edges.n_centers() {
                for j in 0..edges.k() {
                    let _ = writeln!(
                        csv,
                        "{s},{j},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                        edges.rel()[[s, j, 0]],
                        edges.rel()[[s, j, 1]],
                        edges.rel()[[s, j, 2]],
                        edges.dist()[[s, j]],
                        edges.grad()[[s, j]]
                    );
                }
            }
            match output {
                None => print!("{csv}"),
                Some(path) => write_text(path, &csv)?,
            }
            Ok(EXIT_OK)
        }
        Command::Attend {
            input,
            output,
            c_out,
        } => {
            let cloud = read_cloud(input)?;
            if cloud.channels() == 0 {
                return Err(GamError::InvalidInput(
                    "attend needs a cloud with feature channels (xyz files with >3 columns \
                     or pcf files with C > 0)"
                        .into(),
                ));
            }
            let params = init_params(&config, 2 * cloud.channels(), *c_out, config.seed);
            let out = gam_forward(&cloud, &config, &params)?;
            let centers = farthest_point_sample(&cloud, config.n_centers, config.seed)?;
            let mut center_coords = Array2::zeros((centers.len(), 3));
            for (s, &idx) in centers.iter().enumerate() {
                let p = cloud.point(idx);
                center_coords[[s, 0]] = p[0];
                center_coords[[s, 1]] = p[1];
                center_coords[[s, 2]] = p[2];
            }
            let pooled_cloud = PointCloud::new(center_coords, Some(out.pooled().clone()))?;
            let format = CloudFormat::from_extension(output);
            match format {
                CloudFormat::XyzAscii => {
                    let mut header = cli.echo_lines("attend");
                    header.push(format!("c_out={c_out}"));
                    header.push("columns: x y z pooled[0..c_out]".into());
                    write_xyz(&pooled_cloud, output, &header)?;
                }
                CloudFormat::PcfBinary => {
                    write_cloud(&pooled_cloud, output, format)?;
                    let mut meta = cli.echo_json("attend");
                    meta["c_out"] = serde_json::json!(c_out);
                    let sidecar = output.with_extension("pcf.meta.json");
                    write_text(&sidecar, &serde_json::to_string_pretty(&meta).unwrap())?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Bench {
            points,
            reps,
            output_csv,
            output_json,
        } => {
            let cloud = synthetic_bench_cloud(*points, config.seed)?;
            let pair = bench_gradient_methods(&cloud, &config, *reps)?;
            println!(
                "{}: median {:.4} ms | {}: median {:.4} ms | speedup (median) {:.1}x",
                pair.baseline.method,
                pair.baseline.median_ms,
                pair.simplified.method,
                pair.simplified.median_ms,
                pair.speedup_median
            );
            if let Some(path) = output_csv {
                let mut csv = csv_prelude(cli, "bench");
                let _ = writeln!(csv, "# points={points} reps={reps}");
                csv.push_str("method,rep,ms\n");
                for report in [&pair.baseline, &pair.simplified] {
                    for (rep, t) in report.times_ms.iter().enumerate() {
                        let _ = writeln!(csv, "{},{rep},{:.6}", report.method, t);
                    }
                }
                write_text(path, &csv)?;
            }
            if let Some(path) = output_json {
                let mut doc = cli.echo_json("bench");
                doc["schema_version"] = serde_json::json!(1);
                doc["points"] = serde_json::json!(points);
                doc["reps"] = serde_json::json!(reps);
                doc["baseline"] = serde_json::to_value(&pair.baseline).unwrap();
                doc["simplified"] = serde_json::to_value(&pair.simplified).unwrap();
                doc["speedup_mean"] = serde_json::json!(pair.speedup_mean);
                doc["speedup_median"] = serde_json::json!(pair.speedup_median);
                write_text(path, &serde_json::to_string_pretty(&doc).unwrap())?;
            }
            Ok(EXIT_OK)
        }
        Command::Demo {
            samples_per_class,
            epochs,
            lr,
            noise,
            gam_off,
            output,
            curves,
        } => {
            let dataset = generate_shapes(*samples_per_class, *noise, config.seed)?;
            let report = train_classifier(&dataset, &config, *epochs, *lr, !gam_off)?;
            println!(
                "train acc {:.3} | test acc {:.3} | {} epochs in {:.0} ms",
                report.final_train_accuracy,
                report.final_test_accuracy,
                report.epochs,
                report.wall_time_ms
            );
            if let Some(path) = output {
                let mut doc = cli.echo_json("demo");
                doc["schema_version"] = serde_json::json!(1);
                doc["samples_per_class"] = serde_json::json!(samples_per_class);
                doc["noise"] = serde_json::json!(noise);
                doc["report"] = serde_json::to_value(&report).unwrap();
                write_text(path, &serde_json::to_string_pretty(&doc).unwrap())?;
            }
            if let Some(path) = curves {
                let mut csv = csv_prelude(cli, "demo");
                csv.push_str("epoch,loss_sum,loss_mean,train_accuracy,test_accuracy\n");
                for e in &report.per_epoch {
                    let _ = writeln!(
                        csv,
                        "{},{:.9e},{:.9e},{:.4},{:.4}",
                        e.epoch, e.loss_sum, e.loss_mean, e.train_accuracy, e.test_accuracy
                    );
                }
                write_text(path, &csv)?;
            }
            Ok(EXIT_OK)
        }
        Command::Gradcheck {
            tolerance,
            step,
            output,
        } => {
            let report = gradcheck_classifier(*step, config.seed)?;
            let passed = report.passes(*tolerance);
            println!(
                "gradcheck max rel err {:.3e} (tolerance {tolerance:.1e}): {}",
                report.max_rel_err,
                if passed { "pass" } else { "FAIL" }
            );
            if let Some(path) = output {
                let mut doc = cli.echo_json("gradcheck");
                doc["schema_version"] = serde_json::json!(1);
                doc["tolerance"] = serde_json::json!(tolerance);
                doc["passed"] = serde_json::json!(passed);
                doc["report"] = serde_json::to_value(&report).unwrap();
                write_text(path, &serde_json::to_string_pretty(&doc).unwrap())?;
            }
            Ok(if passed { EXIT_OK } else { EXIT_NUMERICAL })
        }
    }
}
