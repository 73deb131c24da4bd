use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hvm_core::analyzer::Thresholds;
use hvm_core::guest::GuestImage;
use hvm_core::harness::{
    self, build_module, compile_sources, compile_workload, discover, library_replace, parse_schemes, plan_for,
    replacement_variants, summary, to_csv, BuiltWorkload, HarnessError, MatrixOptions, RunMetrics, Scheme,
};
use hvm_core::runtime::RunConfig;

#[derive(Parser)]
#[command(name = "hvm", version, about = "Hybrid guest emulator with host offloading")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile sources into a guest image.
    Build {
        #[arg(required = true)]
        sources: Vec<PathBuf>,
        #[arg(long, default_value = "gfp")]
        scheme: Scheme,
        #[arg(long)]
        thresholds: Option<Thresholds>,
        /// Mark every function as library code.
        #[arg(long)]
        library: bool,
        #[arg(short, required = true)]
        o: PathBuf,
    },
    /// Print the offload plan for sources.
    Plan {
        #[arg(required = true)]
        sources: Vec<PathBuf>,
        #[arg(long, default_value = "gfp")]
        scheme: Scheme,
        #[arg(long)]
        thresholds: Option<Thresholds>,
        #[arg(long)]
        library: bool,
    },
    /// Run an image, optionally with library images.
    Run {
        image: PathBuf,
        #[arg(long = "lib")]
        libs: Vec<PathBuf>,
        #[arg(long, default_value = "gfp")]
        scheme: Scheme,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Program arguments, passed in r1...
        #[arg(last = true, allow_negative_numbers = true)]
        args: Vec<i64>,
    },
    /// Run workloads under every scheme and compare the results.
    Matrix {
        dir: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        schemes: String,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        thresholds: Option<Thresholds>,
    },
    /// Run a library workload's application against emulated and
    /// accelerated builds of its libraries.
    Replace {
        dir: PathBuf,
        #[arg(long, default_value = "gfp")]
        scheme: Scheme,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn read_sources(paths: &[PathBuf]) -> Result<Vec<String>, HarnessError> {
    paths
        .iter()
        .map(|p| fs::read_to_string(p).map_err(|e| HarnessError::io(p, e)))
        .collect()
}

fn read_image(path: &Path) -> Result<GuestImage, HarnessError> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    GuestImage::from_bytes(&bytes).map_err(|source| HarnessError::Image {
        context: path.display().to_string(),
        source,
    })
}

fn write_csv(path: &Option<PathBuf>, metrics: &[RunMetrics]) -> Result<(), HarnessError> {
    if let Some(p) = path {
        fs::write(p, to_csv(metrics)).map_err(|e| HarnessError::io(p, e))?;
    }
    Ok(())
}

fn budget() -> u64 {
    RunConfig::default().budget_from_env().budget
}

fn run(cmd: Cmd) -> Result<bool, HarnessError> {
    match cmd {
        Cmd::Build {
            sources,
            scheme,
            thresholds,
            library,
            o,
        } => {
            let m = compile_sources(&read_sources(&sources)?, library, "build")?;
            let (img, plan, cov) = build_module(&m, scheme, thresholds.unwrap_or_default(), "build")?;
            fs::write(&o, img.to_bytes()).map_err(|e| HarnessError::io(&o, e))?;
            eprintln!(
                "{}: {} bytes, {} offloaded of {} functions, {} outlined",
                o.display(),
                img.to_bytes().len(),
                cov.offloaded,
                cov.total,
                plan.outlined.len()
            );
            Ok(true)
        }
        Cmd::Plan {
            sources,
            scheme,
            thresholds,
            library,
        } => {
            let m = compile_sources(&read_sources(&sources)?, library, "plan")?;
            print!("{}", plan_for(&m, scheme, thresholds.unwrap_or_default()).dump());
            Ok(true)
        }
        Cmd::Run {
            image,
            libs,
            scheme,
            reps,
            csv,
            args,
        } => {
            let mut images = vec![read_image(&image)?];
            for l in &libs {
                images.push(read_image(l)?);
            }
            let built = BuiltWorkload {
                scheme,
                images,
                plans: Vec::new(),
                coverage: Default::default(),
            };
            let name = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            // The program's own output is shown once, from a separate run.
            let refs: Vec<&GuestImage> = built.images.iter().collect();
            let f = scheme.flags();
            let config = RunConfig {
                budget: budget(),
                ..RunConfig::with_flags(f.grt, f.fcp)
            };
            let first = hvm_core::runtime::run_images(&refs, config, &args)?;
            std::io::stdout().write_all(&first.output).ok();
            if let Some(fault) = &first.fault {
                eprintln!("{fault}");
            }
            let metrics = harness::run_built(&name, &built, &args, reps, budget())?;
            write_csv(&csv, &metrics)?;
            eprint!("{}", summary(&metrics));
            let same = metrics.iter().all(|m| m.digest == metrics[0].digest && m.exit_code == first.exit_code)
                && metrics[0].digest == hvm_core::guest::image::hex_digest(&first.output);
            if !same {
                eprintln!("digests differ between repetitions");
            }
            Ok(same)
        }
        Cmd::Matrix {
            dir,
            csv,
            schemes,
            reps,
            thresholds,
        } => {
            let schemes = parse_schemes(&schemes).map_err(HarnessError::Usage)?;
            let specs = discover(&dir)?;
            if specs.is_empty() {
                return Err(HarnessError::Usage(format!("no workloads under {}", dir.display())));
            }
            let opts = MatrixOptions {
                reps,
                budget: budget(),
                thresholds,
            };
            let mut all = Vec::new();
            let mut ok = true;
            for spec in &specs {
                match harness::run_matrix(spec, &schemes, opts) {
                    Ok(m) => all.extend(m),
                    Err(HarnessError::Failure(f)) => {
                        eprintln!("{f}");
                        all.extend(f.metrics);
                        ok = false;
                    }
                    Err(e) => return Err(e),
                }
            }
            write_csv(&csv, &all)?;
            print!("{}", summary(&all));
            Ok(ok)
        }
        Cmd::Replace { dir, scheme, csv } => {
            let spec = harness::WorkloadSpec::load(&dir)?;
            if spec.libs.is_empty() {
                return Err(HarnessError::Usage(format!("{} has no libraries", spec.name)));
            }
            let thresholds = spec.thresholds()?;
            let compiled = compile_workload(&spec)?;
            let (app, _, _) = build_module(&compiled.app, Scheme::Emulate, thresholds, &spec.name)?;
            let variants = replacement_variants(&spec, &compiled, scheme, thresholds)?;
            let runs = library_replace(&spec.name, &app, &variants, scheme, &spec.args, budget())?;
            let base = runs[0].metrics.interpreted_instructions as f64;
            println!("{:<28} {:>14} {:>10} {:>9}  app", "variant", "instr", "g2h", "x_instr");
            for r in &runs {
                let i = r.metrics.interpreted_instructions;
                println!(
                    "{:<28} {:>14} {:>10} {:>8.2}x  {}",
                    r.variant,
                    i,
                    r.metrics.guest_to_host_calls,
                    base / i.max(1) as f64,
                    &r.app_digest[..16]
                );
            }
            let metrics: Vec<RunMetrics> = runs
                .into_iter()
                .enumerate()
                .map(|(k, r)| RunMetrics {
                    workload: format!("{}:{}", spec.name, r.variant),
                    rep: k,
                    ..r.metrics
                })
                .collect();
            write_csv(&csv, &metrics)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
