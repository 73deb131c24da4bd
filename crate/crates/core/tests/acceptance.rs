//! Acceptance suite. Runs each criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hvm_core::analyzer::{classify, OffloadPlan, Thresholds};
use hvm_core::fault::FaultKind;
use hvm_core::frontend::parse;
use hvm_core::guest::{link, LinkMode};
use hvm_core::harness::{
    build_module, build_workload, compile_workload, discover, library_replace, replacement_variants, run_built,
    run_matrix, Category, HarnessError, MatrixOptions, RunMetrics, Scheme, WorkloadSpec,
};
use hvm_core::runtime::{RunConfig, Runtime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

const MATRIX_LIMIT: Duration = Duration::from_secs(300);
const ABI_SIGNATURES: usize = 500;
const MIN_REENTRY_DEPTH: usize = 8;
const CHAIN_CALLS: u64 = 100_000;
const MAX_COLLAPSED_CROSSINGS: u64 = 10;
const COMPUTE_RATIO: f64 = 0.5;
const SHORT_FUNCTION_RATIO: f64 = 1.1;
const LIBRARY_REDUCTION: f64 = 5.0;

struct Corpus {
    specs: Vec<WorkloadSpec>,
    metrics: Vec<RunMetrics>,
    failures: Vec<String>,
    wall: Duration,
}

impl Corpus {
    fn run() -> Result<Corpus, HarnessError> {
        let specs = discover(&common::workloads_dir())?;
        let start = Instant::now();
        let mut metrics = Vec::new();
        let mut failures = Vec::new();
        for spec in &specs {
            match run_matrix(spec, &Scheme::ALL, MatrixOptions::default()) {
                Ok(m) => metrics.extend(m),
                Err(HarnessError::Failure(f)) => {
                    failures.push(f.to_string());
                    metrics.extend(f.metrics);
                }
                Err(e) => failures.push(format!("{}: {e}", spec.name)),
            }
        }
        Ok(Corpus {
            specs,
            metrics,
            failures,
            wall: start.elapsed(),
        })
    }

    fn get(&self, workload: &str, scheme: Scheme) -> Result<&RunMetrics, String> {
        self.metrics
            .iter()
            .find(|m| m.workload == workload && m.scheme == scheme)
            .ok_or_else(|| format!("no {scheme} run for {workload}"))
    }

    fn spec(&self, name: &str) -> Result<&WorkloadSpec, String> {
        self.specs
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| format!("workload {name} is missing from the corpus"))
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn differential(c: &Corpus) -> Outcome {
    ensure(c.failures.is_empty(), || c.failures.join("; "))?;
    for spec in &c.specs {
        let reference = c.get(&spec.name, Scheme::Emulate)?;
        for s in Scheme::ALL {
            let m = c.get(&spec.name, s)?;
            ensure(m.digest == reference.digest && m.exit_code == reference.exit_code, || {
                format!("{} under {s}: digest {} exit {}", spec.name, &m.digest[..12], m.exit_code)
            })?;
        }
    }
    ensure(c.wall < MATRIX_LIMIT, || format!("matrix took {:.1}s", c.wall.as_secs_f64()))?;
    Ok(format!(
        "{} workloads x {} schemes agree, matrix {:.1}s",
        c.specs.len(),
        Scheme::ALL.len(),
        c.wall.as_secs_f64()
    ))
}

fn abi() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AB1_5EED);
    let mut max_arity = 0;
    for k in 0..ABI_SIGNATURES {
        let case = common::AbiCase::random(&mut rng);
        max_arity = max_arity.max(case.params.len());
        case.check().map_err(|e| format!("signature {k} {:?} -> {:?}: {e}", case.params, case.ret))?;
    }
    Ok(format!("{ABI_SIGNATURES} signatures exact in both directions, max arity {max_arity}"))
}

fn reentrancy() -> Outcome {
    let src = r#"
fn down_guest(n: i64) -> i64 { guestasm("nop"); if (n == 0) { return 1; } return down_host(n - 1) * 3 + n; }
fn down_host(n: i64) -> i64 { if (n == 0) { return 2; } return down_guest(n - 1) + 7 * n; }
fn main(d: i64) -> i64 { guestasm("nop"); print("%d\n", down_guest(d)); return 0; }
"#;
    fn oracle(n: i64, guest: bool) -> i64 {
        match (guest, n) {
            (true, 0) => 1,
            (false, 0) => 2,
            (true, _) => oracle(n - 1, false).wrapping_mul(3).wrapping_add(n),
            (false, _) => oracle(n - 1, true).wrapping_add(7 * n),
        }
    }
    let m = parse(src).map_err(|e| e.to_string())?;
    let plan = OffloadPlan::without_pfo(&m, classify(&m, Thresholds::NONE));
    let img = link(&plan, LinkMode::Hybrid).map_err(|e| e.to_string())?;
    let mut deepest = 0;
    for d in [17i64, 24, 40] {
        let mut rt = Runtime::load(&[&img], RunConfig::with_flags(true, true)).map_err(|e| e.to_string())?;
        let o = rt.run(&[d]).map_err(|e| e.to_string())?;
        let want = format!("{}\n", oracle(d, true));
        ensure(o.fault.is_none() && o.output == want.as_bytes(), || {
            format!("depth arg {d}: got {:?}, want {want:?}", String::from_utf8_lossy(&o.output))
        })?;
        // Every host-to-guest crossing nests one more emulation context.
        let nested = o.max_depth - 1;
        ensure(nested as u64 == o.counters.host_to_guest_callbacks, || {
            format!("max depth {} for {} callbacks", o.max_depth, o.counters.host_to_guest_callbacks)
        })?;
        ensure(o.final_depth == 1, || format!("context depth {} at exit", o.final_depth))?;
        ensure(o.final_sp == o.initial_sp, || {
            format!("sp {:#x} at exit, {:#x} at entry", o.final_sp, o.initial_sp)
        })?;
        ensure(rt.context_depth() == 0, || "contexts left after run".into())?;
        deepest = deepest.max(nested);
    }
    ensure(deepest >= MIN_REENTRY_DEPTH, || format!("only {deepest} nested reentries"))?;
    Ok(format!("nested reentry depth {deepest}, contexts unwound, sp restored"))
}

fn grt_law(c: &Corpus) -> Outcome {
    // Under base every host invocation enters through the trampoline, so
    // more crossings than offloaded functions means some function ran twice.
    let mut applicable = Vec::new();
    for spec in &c.specs {
        let base = c.get(&spec.name, Scheme::BASE)?;
        let g = c.get(&spec.name, Scheme::G)?;
        if base.guest_to_host_calls <= base.coverage.offloaded as u64 {
            continue;
        }
        ensure(g.grt_constructions < base.grt_constructions, || {
            format!("{}: g built {} rows, base {}", spec.name, g.grt_constructions, base.grt_constructions)
        })?;
        ensure(g.digest == base.digest, || format!("{}: digests differ", spec.name))?;
        applicable.push(format!("{} {}<{}", spec.name, g.grt_constructions, base.grt_constructions));
    }
    ensure(!applicable.is_empty(), || "no workload calls an offloaded function twice".into())?;
    Ok(applicable.join(", "))
}

fn fcp_collapse(c: &Corpus) -> Outcome {
    let name = "callchain";
    let base = c.get(name, Scheme::BASE)?.guest_to_host_calls;
    let g = c.get(name, Scheme::G)?.guest_to_host_calls;
    let gf = c.get(name, Scheme::GF)?;
    ensure(base >= CHAIN_CALLS && g >= CHAIN_CALLS, || format!("base {base}, g {g} crossings"))?;
    ensure(gf.guest_to_host_calls <= MAX_COLLAPSED_CROSSINGS, || {
        format!("gf still crosses {} times", gf.guest_to_host_calls)
    })?;
    ensure(gf.fcp_direct_calls >= CHAIN_CALLS, || format!("only {} direct calls", gf.fcp_direct_calls))?;
    Ok(format!(
        "{name}: g2h base {base}, g {g}, gf {} ({} direct)",
        gf.guest_to_host_calls, gf.fcp_direct_calls
    ))
}

fn pfo(c: &Corpus) -> Outcome {
    let name = "pfo_guard";
    let gf = c.get(name, Scheme::GF)?;
    let gfp = c.get(name, Scheme::GFP)?;
    let share = |m: &RunMetrics| m.coverage.offloaded as f64 / m.coverage.total.max(1) as f64;
    ensure(share(gfp) > share(gf), || {
        format!("coverage {}/{} -> {}/{}", gf.coverage.offloaded, gf.coverage.total, gfp.coverage.offloaded, gfp.coverage.total)
    })?;
    ensure(gfp.guest_to_host_calls * 10 <= gf.guest_to_host_calls, || {
        format!("g2h gf {} gfp {}", gf.guest_to_host_calls, gfp.guest_to_host_calls)
    })?;
    let single: Vec<String> = c
        .metrics
        .iter()
        .filter(|m| !matches!(m.scheme, Scheme::Native | Scheme::Emulate))
        .filter(|m| m.guest_to_host_calls + m.host_to_guest_callbacks == 1)
        .map(|m| format!("{}/{}", m.workload, m.scheme))
        .collect();
    ensure(!single.is_empty(), || "no hybrid run reaches a single crossing".into())?;
    Ok(format!(
        "{name}: coverage {}/{} -> {}/{}, g2h {} -> {}; single crossing: {}",
        gf.coverage.offloaded,
        gf.coverage.total,
        gfp.coverage.offloaded,
        gfp.coverage.total,
        gf.guest_to_host_calls,
        gfp.guest_to_host_calls,
        single.join(" ")
    ))
}

fn speedup(c: &Corpus) -> Outcome {
    let mut notes = Vec::new();
    let compute: Vec<&WorkloadSpec> = c.specs.iter().filter(|s| s.category == Category::ComputeHeavy).collect();
    ensure(!compute.is_empty(), || "no compute-heavy workloads".into())?;
    for spec in compute {
        let emu = c.get(&spec.name, Scheme::Emulate)?.interpreted_instructions as f64;
        let gfp = c.get(&spec.name, Scheme::GFP)?.interpreted_instructions as f64;
        ensure(gfp <= COMPUTE_RATIO * emu, || format!("{}: gfp/emulate = {:.3}", spec.name, gfp / emu))?;
        notes.push(format!("{} {:.1e}", spec.name, gfp / emu));
    }
    let short: Vec<&WorkloadSpec> = c.specs.iter().filter(|s| s.category == Category::ShortFunctionHeavy).collect();
    ensure(!short.is_empty(), || "no short-function workload".into())?;
    for spec in short {
        let compiled = compile_workload(spec).map_err(|e| e.to_string())?;
        let instr = |scheme: Scheme, t: Thresholds| -> Result<f64, String> {
            let built = build_workload(spec, &compiled, scheme, t).map_err(|e| e.to_string())?;
            let m = run_built(&spec.name, &built, &spec.args, 1, 0).map_err(|e| e.to_string())?;
            Ok(m[0].interpreted_instructions as f64)
        };
        let emu = instr(Scheme::Emulate, Thresholds::NONE)?;
        let unfiltered = instr(Scheme::BASE, Thresholds::NONE)?;
        let filtered = instr(Scheme::BASE, Thresholds::default())?;
        ensure(filtered <= SHORT_FUNCTION_RATIO * emu, || {
            format!("{}: base with default thresholds at {:.3}x emulate", spec.name, filtered / emu)
        })?;
        notes.push(format!(
            "{} base/emulate {:.3} unfiltered, {:.3} with default thresholds",
            spec.name,
            unfiltered / emu,
            filtered / emu
        ));
    }
    Ok(format!("gfp/emulate instr: {}", notes.join(", ")))
}

fn library(c: &Corpus) -> Outcome {
    let mut notes = Vec::new();
    let replace = |spec: &WorkloadSpec, app_from: Option<&WorkloadSpec>| -> Result<Vec<(String, u64, String)>, String> {
        let thresholds = spec.thresholds().map_err(|e| e.to_string())?;
        let compiled = compile_workload(spec).map_err(|e| e.to_string())?;
        let app_module = match app_from {
            Some(other) => compile_workload(other).map_err(|e| e.to_string())?.app,
            None => compiled.app,
        };
        let compiled = hvm_core::harness::Compiled {
            app: app_module,
            libs: compiled.libs,
        };
        let (app, _, _) =
            build_module(&compiled.app, Scheme::Emulate, thresholds, &spec.name).map_err(|e| e.to_string())?;
        let variants = replacement_variants(spec, &compiled, Scheme::GFP, thresholds).map_err(|e| e.to_string())?;
        let args = app_from.map_or(&spec.args, |o| &o.args);
        let runs = library_replace(&spec.name, &app, &variants, Scheme::GFP, args, 0).map_err(|e| e.to_string())?;
        Ok(runs
            .into_iter()
            .map(|r| (r.variant, r.metrics.interpreted_instructions, r.app_digest))
            .collect())
    };

    let checksum = c.spec("checksum_lib")?;
    let runs = replace(checksum, None)?;
    let emulated = runs[0].1 as f64;
    let accel = runs[1].1 as f64;
    ensure(emulated >= LIBRARY_REDUCTION * accel, || {
        format!("checksum library reduces instructions only {:.2}x", emulated / accel)
    })?;
    ensure(runs.iter().all(|r| r.2 == runs[0].2), || "app hash changed".into())?;
    notes.push(format!("checksum {:.2}x", emulated / accel));

    let pipeline = c.spec("pipeline")?;
    let runs = replace(pipeline, None)?;
    ensure(runs.len() == 4, || format!("pipeline has {} variants", runs.len()))?;
    ensure(runs.iter().all(|r| r.2 == runs[0].2), || "app hash changed".into())?;
    let base = runs[0].1 as f64;
    let gains: Vec<f64> = runs[1..].iter().map(|r| base / r.1 as f64).collect();
    let combined = gains[gains.len() - 1];
    let best_single = gains[..gains.len() - 1].iter().cloned().fold(0.0, f64::max);
    ensure(combined >= best_single, || {
        format!("combined {combined:.2}x below single-library {best_single:.2}x")
    })?;
    notes.push(format!(
        "pipeline {} = {combined:.2}x",
        runs[1..runs.len() - 1]
            .iter()
            .zip(&gains)
            .map(|(r, g)| format!("{} {g:.2}x", r.0))
            .collect::<Vec<_>>()
            .join(", ")
    ));

    // An application that never calls the library sees identical counters.
    let bystander = c.spec("mutual_rec")?;
    let runs = replace(checksum, Some(bystander))?;
    ensure(runs.iter().all(|r| r.1 == runs[0].1), || {
        format!("library-free app instructions vary: {:?}", runs.iter().map(|r| r.1).collect::<Vec<_>>())
    })?;
    notes.push("library-free app unchanged".into());
    Ok(notes.join("; "))
}

fn fault_isolation() -> Outcome {
    let src = r#"
fn ratio(a: i64, b: i64) -> i64 { return a / b; }
fn table(k: i64) -> i64 { let s = 0; let i = 1; while (i <= 5) { s = s + ratio(1000, i - k); i = i + 1; } return s; }
fn main(k: i64) -> i64 { guestasm("nop"); print("%d\n", table(k)); return 0; }
"#;
    let m = parse(src).map_err(|e| e.to_string())?;
    let plan = OffloadPlan::without_pfo(&m, classify(&m, Thresholds::NONE));
    let img = link(&plan, LinkMode::Hybrid).map_err(|e| e.to_string())?;
    let mut rt = Runtime::load(&[&img], RunConfig::with_flags(true, true)).map_err(|e| e.to_string())?;
    let bad = rt.run(&[3]).map_err(|e| e.to_string())?;
    let fault = bad.fault.ok_or("faulting run reported no fault")?;
    ensure(fault.kind == FaultKind::DivideByZero && fault.pc.is_none(), || {
        format!("unexpected fault {fault}")
    })?;
    ensure(bad.exit_code == fault.exit_code(), || format!("exit code {}", bad.exit_code))?;
    ensure(bad.counters.guest_to_host_calls >= 1, || "no counters for the faulting run".into())?;
    ensure(rt.context_depth() == 0, || "contexts left after fault".into())?;

    // Same runtime, then a fresh one, both in this process.
    let good = rt.run(&[0]).map_err(|e| e.to_string())?;
    let want: i64 = (1..=5).map(|i| 1000 / i).sum();
    ensure(good.fault.is_none() && good.output == format!("{want}\n").as_bytes(), || {
        format!("rerun printed {:?}", String::from_utf8_lossy(&good.output))
    })?;
    let fresh = hvm_core::runtime::run_images(&[&img], RunConfig::with_flags(true, true), &[0]).map_err(|e| e.to_string())?;
    ensure(fresh.fault.is_none() && fresh.output == good.output, || "fresh run differs".into())?;
    Ok(format!(
        "{fault} after {} crossings; exit {}; rerun ok",
        bad.counters.guest_to_host_calls, bad.exit_code
    ))
}

fn main() -> ExitCode {
    let corpus = match Corpus::run() {
        Ok(c) => Some(c),
        Err(e) => {
            eprintln!("could not run the workload corpus: {e}");
            None
        }
    };
    let corpus = corpus.as_ref();
    let with_corpus = |f: fn(&Corpus) -> Outcome| -> Criterion<'_> {
        Box::new(move || match corpus {
            Some(c) => f(c),
            None => Err("corpus unavailable".into()),
        })
    };
    let criteria: Vec<(&str, Criterion<'_>)> = vec![
        ("differential correctness", with_corpus(differential)),
        ("ABI marshalling", Box::new(abi)),
        ("reentrancy", Box::new(reentrancy)),
        ("GRT counter law", with_corpus(grt_law)),
        ("FCP crossing collapse", with_corpus(fcp_collapse)),
        ("PFO coverage and crossings", with_corpus(pfo)),
        ("speedup trend", with_corpus(speedup)),
        ("library replacement", with_corpus(library)),
        ("fault isolation", Box::new(fault_isolation)),
    ];
    let mut failed = 0;
    for (k, (title, f)) in criteria.iter().enumerate() {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match r {
            Ok(detail) => println!("criterion {} PASS {title}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {title}: {why}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
