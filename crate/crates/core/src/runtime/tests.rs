use super::*;
use crate::analyzer::{apply_pfo, classify, OffloadPlan, Thresholds};
use crate::frontend::parse;
use crate::guest::{link, LinkMode};

fn image(src: &str, mode: LinkMode) -> GuestImage {
    let m = parse(src).unwrap();
    let plan = match mode {
        LinkMode::Emulate => OffloadPlan::all_guest(&m),
        _ => OffloadPlan::without_pfo(&m, classify(&m, Thresholds::NONE)),
    };
    link(&plan, mode).unwrap()
}

fn run(img: &GuestImage, grt: bool, fcp: bool) -> RunOutcome {
    run_images(&[img], RunConfig::with_flags(grt, fcp), &[]).unwrap()
}

const FIB: &str = r#"
fn fib(n: i64) -> i64 { if (n < 2) { return n; } return fib(n - 1) + fib(n - 2); }
fn main() -> i64 { print("%d\n", fib(20)); return 0; }
"#;

#[test]
fn fib_agrees_across_modes() {
    let emu = run(&image(FIB, LinkMode::Emulate), false, false);
    assert_eq!(emu.output, b"6765\n");
    assert_eq!(emu.counters.guest_to_host_calls, 0);

    let hy = image(FIB, LinkMode::Hybrid);
    let base = run(&hy, false, false);
    assert_eq!(base.output, b"6765\n");
    // 21891 calls in total; every recursive one bounces back through the guest stub.
    assert_eq!(base.counters.guest_to_host_calls, 21891);
    assert_eq!(base.counters.host_to_guest_callbacks, 21890);

    let fcp = run(&hy, true, true);
    assert_eq!(fcp.output, b"6765\n");
    assert_eq!(fcp.counters.guest_to_host_calls, 1);
    assert_eq!(fcp.counters.fcp_direct_calls, 21890);
    assert_eq!(fcp.counters.host_to_guest_callbacks, 0);
    assert!(fcp.counters.interpreted_instructions < emu.counters.interpreted_instructions / 100);

    let native = run(&image(FIB, LinkMode::Native), true, true);
    assert_eq!(native.output, b"6765\n");
    assert_eq!(native.counters.interpreted_instructions, 0);
}

#[test]
fn host_calls_back_into_guest() {
    let src = r#"
fn dbl(x: i64) -> i64 { guestasm("nop"); return x * 2; }
fn apply(f: fn(i64) -> i64, x: i64) -> i64 { return f(x); }
fn main() -> i64 { guestasm("nop"); return apply(&dbl, 21); }
"#;
    let o = run(&image(src, LinkMode::Hybrid), true, true);
    assert_eq!(o.exit_code, 42);
    assert_eq!(o.counters.guest_to_host_calls, 1);
    assert_eq!(o.counters.host_to_guest_callbacks, 1);
    assert_eq!(o.final_depth, 1);
    assert_eq!(o.final_sp, o.initial_sp);
}

#[test]
fn nested_reentry_unwinds() {
    let src = r#"
fn g(n: i64) -> i64 { guestasm("nop"); if (n == 0) { return 0; } return h(n - 1) + 1; }
fn h(n: i64) -> i64 { return g(n); }
fn main() -> i64 { guestasm("nop"); return g(10); }
"#;
    let o = run(&image(src, LinkMode::Hybrid), true, true);
    assert_eq!(o.exit_code, 10);
    assert_eq!(o.counters.guest_to_host_calls, 10);
    assert_eq!(o.counters.host_to_guest_callbacks, 10);
    assert_eq!(o.max_depth, 11);
    assert_eq!(o.final_depth, 1);
    assert_eq!(o.final_sp, o.initial_sp);
}

#[test]
fn grt_rows_are_built_once() {
    let src = r#"
global acc: i64 = 0;
fn bump(x: i64) -> i64 { acc = acc + x; return acc; }
fn main() -> i64 { guestasm("nop"); let i = 0; while (i < 50) { bump(i); i = i + 1; } return acc % 256; }
"#;
    let img = image(src, LinkMode::Hybrid);
    let with = run(&img, true, false);
    let without = run(&img, false, false);
    assert_eq!(with.exit_code, 1225 % 256);
    assert_eq!(without.exit_code, with.exit_code);
    assert_eq!(with.counters.grt_constructions, 1);
    assert_eq!(without.counters.grt_constructions, 50);
}

#[test]
fn host_fault_is_isolated() {
    let src = r#"
fn div(a: i64, b: i64) -> i64 { return a / b; }
fn main(b: i64) -> i64 { guestasm("nop"); print("%d\n", div(84, b)); return 0; }
"#;
    let img = image(src, LinkMode::Hybrid);
    let mut rt = Runtime::load(&[&img], RunConfig::with_flags(true, true)).unwrap();
    let bad = rt.run(&[0]).unwrap();
    assert_eq!(bad.exit_code, 136);
    let fault = bad.fault.unwrap();
    assert_eq!(fault.kind, FaultKind::DivideByZero);
    assert_eq!(fault.pc, None);
    assert_eq!(bad.counters.guest_to_host_calls, 1);
    assert_eq!(rt.context_depth(), 0);

    let good = rt.run(&[2]).unwrap();
    assert_eq!(good.exit_code, 0);
    assert_eq!(good.output, b"42\n");
    assert!(good.fault.is_none());
}

#[test]
fn guest_faults_carry_pc() {
    let src = "fn main(p: i64) -> i64 { guestasm(\"nop\"); return 100 / p; }";
    let img = image(src, LinkMode::Emulate);
    let o = run_images(&[&img], RunConfig::default(), &[0]).unwrap();
    assert_eq!(o.exit_code, 136);
    assert!(o.fault.unwrap().pc.is_some());
}

#[test]
fn budget_stops_runaway_loop() {
    let src = "fn main() -> i64 { let i = 0; while (1) { i = i + 1; } return i; }";
    let img = image(src, LinkMode::Emulate);
    let cfg = RunConfig {
        budget: 10_000,
        ..RunConfig::default()
    };
    let o = run_images(&[&img], cfg, &[]).unwrap();
    assert_eq!(o.exit_code, 137);
    assert_eq!(o.counters.interpreted_instructions, 10_000);
}

#[test]
fn unbounded_guest_recursion_overflows_cleanly() {
    let src = "fn f(n: i64) -> i64 { return f(n + 1) + 1; } fn main() -> i64 { return f(0); }";
    let o = run(&image(src, LinkMode::Emulate), false, false);
    assert_eq!(o.fault.unwrap().kind, FaultKind::StackOverflow);
}

#[test]
fn pfo_outlined_helper_runs_on_guest() {
    let src = r#"
fn work(i: i64) -> i64 { if (i % 7 == 0) { print("hit %d\n", i); } return i * 3; }
fn main() -> i64 { let s = 0; let i = 0; while (i < 30) { s = s + work(i); i = i + 1; } return s % 256; }
"#;
    let m = parse(src).unwrap();
    let plan = apply_pfo(&m, &classify(&m, Thresholds::NONE));
    let img = link(&plan, LinkMode::Hybrid).unwrap();
    let o = run(&img, true, true);
    let emu = run(&image(src, LinkMode::Emulate), false, false);
    assert_eq!(o.output, emu.output);
    assert_eq!(o.exit_code, emu.exit_code);
    assert_eq!(o.counters.guest_to_host_calls, 1);
}

#[test]
fn libraries_link_across_images() {
    let lib = crate::frontend::parse_library("fn twice(x: i64) -> i64 { return x + x; }").unwrap();
    let lib_img = link(&OffloadPlan::without_pfo(&lib, classify(&lib, Thresholds::NONE)), LinkMode::Hybrid).unwrap();
    let app = image(
        "extern fn twice(x: i64) -> i64; fn main() -> i64 { guestasm(\"nop\"); return twice(21); }",
        LinkMode::Emulate,
    );
    let o = run_images(&[&app, &lib_img], RunConfig::with_flags(true, true), &[]).unwrap();
    assert_eq!(o.exit_code, 42);
    assert_eq!(o.counters.guest_to_host_calls, 1);
}

#[test]
fn missing_import_is_a_load_error() {
    let app = image("extern fn nowhere(x: i64) -> i64; fn main() -> i64 { return nowhere(1); }", LinkMode::Emulate);
    assert!(matches!(Runtime::load(&[&app], RunConfig::default()), Err(LoadError::Link(_))));
}
