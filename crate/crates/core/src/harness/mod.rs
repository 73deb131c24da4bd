//! Builds workloads under each scheme, runs them and compares the results.

pub mod report;
pub mod scheme;
pub mod workload;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{apply_pfo, classify_with, coverage, Coverage, OffloadPlan, Policy, Thresholds};
use crate::frontend::{parse_files, FrontendError, TypedModule};
use crate::guest::image::hex_digest;
use crate::guest::{link, GuestImage, ImageError};
use crate::runtime::{run_images, LoadError, RunConfig, RunOutcome};

pub use report::{geomean, summary, to_csv, CSV_HEADER};
pub use scheme::{parse_schemes, Scheme};
pub use workload::{discover, Category, LibrarySpec, WorkloadSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Frontend {
        context: String,
        source: FrontendError,
    },
    #[error("{context}: {source}")]
    Image { context: String, source: ImageError },
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Failure(#[from] WorkloadFailure),
    #[error("usage: {0}")]
    Usage(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Runs of one workload disagreed. This is a correctness bug, never noise.
#[derive(Debug, Error)]
#[error("WORKLOAD FAILURE in `{workload}`: {reason}")]
pub struct WorkloadFailure {
    pub workload: String,
    pub reason: String,
    /// Every run that completed, so the caller can still report them.
    pub metrics: Vec<RunMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub workload: String,
    pub scheme: Scheme,
    pub rep: usize,
    pub wall_s: f64,
    pub interpreted_instructions: u64,
    pub guest_to_host_calls: u64,
    pub host_to_guest_callbacks: u64,
    pub fcp_direct_calls: u64,
    pub grt_constructions: u64,
    pub coverage: Coverage,
    /// SHA-256 of the program output.
    pub digest: String,
    pub exit_code: i64,
    pub fault: Option<String>,
}

impl RunMetrics {
    pub fn new(workload: &str, scheme: Scheme, rep: usize, coverage: Coverage, o: &RunOutcome) -> Self {
        RunMetrics {
            workload: workload.to_string(),
            scheme,
            rep,
            wall_s: o.wall.as_secs_f64(),
            interpreted_instructions: o.counters.interpreted_instructions,
            guest_to_host_calls: o.counters.guest_to_host_calls,
            host_to_guest_callbacks: o.counters.host_to_guest_callbacks,
            fcp_direct_calls: o.counters.fcp_direct_calls,
            grt_constructions: o.counters.grt_constructions,
            coverage,
            digest: hex_digest(&o.output),
            exit_code: o.exit_code,
            fault: o.fault.as_ref().map(|f| f.to_string()),
        }
    }
}

/// Images for one scheme: the application first, then its libraries.
#[derive(Clone, Debug)]
pub struct BuiltWorkload {
    pub scheme: Scheme,
    pub images: Vec<GuestImage>,
    pub plans: Vec<OffloadPlan>,
    pub coverage: Coverage,
}

/// Parses sources into one module; `library` marks every function as
/// library code.
pub fn compile_sources(sources: &[String], library: bool, context: &str) -> Result<TypedModule, HarnessError> {
    let refs: Vec<&str> = sources.iter().map(String::as_str).collect();
    parse_files(&refs, library).map_err(|source| HarnessError::Frontend {
        context: context.to_string(),
        source,
    })
}

/// The offload plan `scheme` uses for `module`.
pub fn plan_for(module: &TypedModule, scheme: Scheme, thresholds: Thresholds) -> OffloadPlan {
    match scheme {
        Scheme::Native | Scheme::Emulate => OffloadPlan::all_guest(module),
        Scheme::Hybrid { pfo, .. } => {
            let verdicts = classify_with(
                module,
                Policy {
                    thresholds,
                    offload_library: true,
                },
            );
            if pfo {
                apply_pfo(module, &verdicts)
            } else {
                OffloadPlan::without_pfo(module, verdicts)
            }
        }
    }
}

fn plan_coverage(plan: &OffloadPlan, scheme: Scheme) -> Coverage {
    let c = coverage(plan);
    match scheme {
        Scheme::Native => Coverage {
            total: c.total,
            offloaded: c.total,
        },
        _ => c,
    }
}

/// Plans and links one module under `scheme`.
pub fn build_module(
    module: &TypedModule,
    scheme: Scheme,
    thresholds: Thresholds,
    context: &str,
) -> Result<(GuestImage, OffloadPlan, Coverage), HarnessError> {
    let plan = plan_for(module, scheme, thresholds);
    let image = link(&plan, scheme.link_mode()).map_err(|source| HarnessError::Image {
        context: context.to_string(),
        source,
    })?;
    let cov = plan_coverage(&plan, scheme);
    Ok((image, plan, cov))
}

/// Modules of a workload, parsed once and reused for every scheme.
pub struct Compiled {
    pub app: TypedModule,
    pub libs: Vec<(String, TypedModule)>,
}

pub fn compile_workload(spec: &WorkloadSpec) -> Result<Compiled, HarnessError> {
    let app = compile_sources(&spec.app_sources()?, false, &spec.name)?;
    let libs = spec
        .libs
        .iter()
        .map(|l| {
            let m = compile_sources(&spec.lib_sources(l)?, true, &format!("{}/{}", spec.name, l.name))?;
            Ok((l.name.clone(), m))
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(Compiled { app, libs })
}

pub fn build_workload(
    spec: &WorkloadSpec,
    compiled: &Compiled,
    scheme: Scheme,
    thresholds: Thresholds,
) -> Result<BuiltWorkload, HarnessError> {
    let (img, plan, mut cov) = build_module(&compiled.app, scheme, thresholds, &spec.name)?;
    let mut images = vec![img];
    let mut plans = vec![plan];
    for (name, m) in &compiled.libs {
        let (img, plan, c) = build_module(m, scheme, thresholds, &format!("{}/{name}", spec.name))?;
        images.push(img);
        plans.push(plan);
        cov = cov + c;
    }
    Ok(BuiltWorkload {
        scheme,
        images,
        plans,
        coverage: cov,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatrixOptions {
    pub reps: usize,
    /// Instruction budget per run; 0 means unlimited.
    pub budget: u64,
    /// Overrides the workload's own thresholds.
    pub thresholds: Option<Thresholds>,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        MatrixOptions {
            reps: 1,
            budget: 0,
            thresholds: None,
        }
    }
}

/// Runs `images` `reps` times, each on a freshly loaded runtime.
pub fn run_built(
    workload: &str,
    built: &BuiltWorkload,
    args: &[i64],
    reps: usize,
    budget: u64,
) -> Result<Vec<RunMetrics>, HarnessError> {
    let refs: Vec<&GuestImage> = built.images.iter().collect();
    let f = built.scheme.flags();
    let config = RunConfig {
        budget,
        ..RunConfig::with_flags(f.grt, f.fcp)
    };
    (0..reps.max(1))
        .map(|rep| {
            let o = run_images(&refs, config, args)?;
            Ok(RunMetrics::new(workload, built.scheme, rep, built.coverage, &o))
        })
        .collect()
}

/// Builds and runs one workload under every scheme in `schemes`, in
/// parallel where cores allow, and checks that all of them agree with each other and with the
/// workload's expected output.
pub fn run_matrix(spec: &WorkloadSpec, schemes: &[Scheme], opts: MatrixOptions) -> Result<Vec<RunMetrics>, HarnessError> {
    if schemes.is_empty() {
        return Err(HarnessError::Usage("no schemes selected".into()));
    }
    let thresholds = match opts.thresholds {
        Some(t) => t,
        None => spec.thresholds()?,
    };
    let compiled = compile_workload(spec)?;
    // Concurrent runs share cores and would distort each other's wall time,
    // so use at most one worker per available core.
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(schemes.len());
    let next = AtomicUsize::new(0);
    let results: Vec<Result<Vec<RunMetrics>, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let (compiled, next) = (&compiled, &next);
                s.spawn(move || {
                    let mut out = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&scheme) = schemes.get(k) else { break out };
                        out.push(
                            build_workload(spec, compiled, scheme, thresholds)
                                .and_then(|built| run_built(&spec.name, &built, &spec.args, opts.reps, opts.budget)),
                        );
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("scheme worker panicked"))
            .collect()
    });
    let mut metrics = Vec::new();
    for r in results {
        metrics.extend(r?);
    }
    metrics.sort_by_key(|a| (a.scheme.rank(), a.rep));
    check_agreement(spec, metrics)
}

fn check_agreement(spec: &WorkloadSpec, metrics: Vec<RunMetrics>) -> Result<Vec<RunMetrics>, HarnessError> {
    let expected = spec.expected_output()?.map(|b| hex_digest(&b));
    let reference = metrics[0].clone();
    let fail = |reason: String, metrics: Vec<RunMetrics>| {
        Err(HarnessError::Failure(WorkloadFailure {
            workload: spec.name.clone(),
            reason,
            metrics,
        }))
    };
    for m in &metrics {
        if let Some(e) = &expected {
            if &m.digest != e {
                let reason = format!("{} rep {} output digest {} differs from expected {}", m.scheme, m.rep, m.digest, e);
                return fail(reason, metrics);
            }
        }
        if m.exit_code != spec.exit_code {
            let reason = format!(
                "{} rep {} exited with {} (expected {}){}",
                m.scheme,
                m.rep,
                m.exit_code,
                spec.exit_code,
                m.fault.as_deref().map(|f| format!(": {f}")).unwrap_or_default()
            );
            return fail(reason, metrics);
        }
        if m.digest != reference.digest {
            let reason = format!("{} digest {} differs from {} digest {}", m.scheme, m.digest, reference.scheme, reference.digest);
            return fail(reason, metrics);
        }
    }
    Ok(metrics)
}

/// Median of the wall times of `metrics`.
pub fn median_wall(metrics: &[&RunMetrics]) -> Duration {
    let mut w: Vec<f64> = metrics.iter().map(|m| m.wall_s).collect();
    w.sort_by(f64::total_cmp);
    let n = w.len();
    let s = match n {
        0 => 0.0,
        _ if n % 2 == 1 => w[n / 2],
        _ => (w[n / 2 - 1] + w[n / 2]) / 2.0,
    };
    Duration::from_secs_f64(s)
}

/// One set of library images to load next to an unchanged application.
#[derive(Clone, Debug)]
pub struct LibraryVariant {
    pub name: String,
    pub libs: Vec<GuestImage>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplacementRun {
    pub variant: String,
    /// Hash of the application image bytes, taken before the run.
    pub app_digest: String,
    pub metrics: RunMetrics,
}

/// Runs the same application image against each library variant. Outputs
/// must match across variants and the application bytes must not change.
pub fn library_replace(
    workload: &str,
    app: &GuestImage,
    variants: &[LibraryVariant],
    scheme: Scheme,
    args: &[i64],
    budget: u64,
) -> Result<Vec<ReplacementRun>, HarnessError> {
    let app_bytes = app.to_bytes();
    let app_digest = hex_digest(&app_bytes);
    let f = scheme.flags();
    let config = RunConfig {
        budget,
        ..RunConfig::with_flags(f.grt, f.fcp)
    };
    let mut runs: Vec<ReplacementRun> = Vec::new();
    for v in variants {
        // Load from the serialized bytes so the app is exactly what a file would hold.
        let app_img = GuestImage::from_bytes(&app_bytes).map_err(|source| HarnessError::Image {
            context: workload.to_string(),
            source,
        })?;
        let mut images = vec![&app_img];
        images.extend(v.libs.iter());
        let o = run_images(&images, config, args)?;
        let metrics = RunMetrics::new(workload, scheme, 0, Coverage::default(), &o);
        let now = hex_digest(&app_img.to_bytes());
        if now != app_digest {
            return Err(WorkloadFailure {
                workload: workload.to_string(),
                reason: format!("application image changed while running variant `{}`", v.name),
                metrics: runs.into_iter().map(|r| r.metrics).collect(),
            }
            .into());
        }
        if let Some(first) = runs.first() {
            if first.metrics.digest != metrics.digest || first.metrics.exit_code != metrics.exit_code {
                let reason = format!("variant `{}` output differs from variant `{}`", v.name, first.variant);
                let mut all: Vec<RunMetrics> = runs.into_iter().map(|r| r.metrics).collect();
                all.push(metrics);
                return Err(WorkloadFailure {
                    workload: workload.to_string(),
                    reason,
                    metrics: all,
                }
                .into());
            }
        }
        runs.push(ReplacementRun {
            variant: v.name.clone(),
            app_digest: app_digest.clone(),
            metrics,
        });
    }
    Ok(runs)
}

/// Variants for a workload's libraries: all emulated, each one accelerated
/// alone, and all accelerated together.
pub fn replacement_variants(
    spec: &WorkloadSpec,
    compiled: &Compiled,
    accelerated: Scheme,
    thresholds: Thresholds,
) -> Result<Vec<LibraryVariant>, HarnessError> {
    let mut emu = Vec::new();
    let mut fast = Vec::new();
    for (name, m) in &compiled.libs {
        let ctx = format!("{}/{name}", spec.name);
        emu.push(build_module(m, Scheme::Emulate, thresholds, &ctx)?.0);
        fast.push(build_module(m, accelerated, thresholds, &ctx)?.0);
    }
    let mut variants = vec![LibraryVariant {
        name: "emulated".into(),
        libs: emu.clone(),
    }];
    for (k, (name, _)) in compiled.libs.iter().enumerate() {
        let mut libs = emu.clone();
        libs[k] = fast[k].clone();
        variants.push(LibraryVariant {
            name: format!("{name}-accelerated"),
            libs,
        });
    }
    if compiled.libs.len() > 1 {
        variants.push(LibraryVariant {
            name: "all-accelerated".into(),
            libs: fast,
        });
    }
    Ok(variants)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metric(scheme: Scheme, rep: usize, wall: f64) -> RunMetrics {
        RunMetrics {
            workload: "w".into(),
            scheme,
            rep,
            wall_s: wall,
            interpreted_instructions: 0,
            guest_to_host_calls: 0,
            host_to_guest_callbacks: 0,
            fcp_direct_calls: 0,
            grt_constructions: 0,
            coverage: Coverage::default(),
            digest: String::new(),
            exit_code: 0,
            fault: None,
        }
    }

    #[test]
    fn median_of_three_reps() {
        let ms = [metric(Scheme::GF, 0, 3.0), metric(Scheme::GF, 1, 1.0), metric(Scheme::GF, 2, 2.0)];
        let refs: Vec<&RunMetrics> = ms.iter().collect();
        assert_eq!(median_wall(&refs), Duration::from_secs(2));
        assert_eq!(median_wall(&refs[..2]), Duration::from_secs(2));
    }

    #[test]
    fn plans_follow_scheme() {
        let m = crate::frontend::parse(
            r#"fn k(x: i64) -> i64 { let s = 0; while (x > 0) { s = s + x; x = x - 1; } return s; }
               fn main() -> i64 { print("%d\n", k(10)); return 0; }"#,
        )
        .unwrap();
        let (_, _, emu) = build_module(&m, Scheme::Emulate, Thresholds::default(), "t").unwrap();
        let (_, _, hy) = build_module(&m, Scheme::GF, Thresholds::default(), "t").unwrap();
        let (_, _, nat) = build_module(&m, Scheme::Native, Thresholds::default(), "t").unwrap();
        assert_eq!((emu.offloaded, hy.offloaded, nat.offloaded), (0, 1, 2));
    }
}
