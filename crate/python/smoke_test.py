"""Smoke test for the `hvm` extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import pathlib
import sys

import hvm

ROOT = pathlib.Path(__file__).resolve().parent.parent

FIB = """
fn fib(n: i64) -> i64 { if (n < 2) { return n; } return fib(n - 1) + fib(n - 2); }
fn main(n: i64) -> i64 { guestasm("nop"); print("%d\\n", fib(n)); return 0; }
"""

CALLBACK = """
fn dbl(x: i64) -> i64 { guestasm("nop"); return x * 2; }
fn apply(f: fn(i64) -> i64, x: i64) -> i64 { return f(x); }
fn main() -> i64 { guestasm("nop"); print("%d\\n", apply(&dbl, 21)); return 0; }
"""


def check(cond, what):
    if not cond:
        sys.exit(f"FAIL: {what}")
    print(f"ok: {what}")


def main():
    check(hvm.schemes() == ["native", "qemu-like", "base", "g", "gf", "gfp"], "scheme list")

    verdicts = hvm.classify(FIB, thresholds="0,0")
    check(verdicts["fib"][0] == "OFFLOAD" and verdicts["main"][0] == "GUEST_ONLY", "classification")

    outputs = {}
    for scheme in hvm.schemes():
        img = hvm.compile(FIB, scheme=scheme, thresholds="0,0")
        r = hvm.run(img, args=[20])
        check(r["fault"] is None and r["exit_code"] == 0, f"fib under {scheme}")
        outputs[scheme] = r
    check(len({r["output"] for r in outputs.values()}) == 1, "all schemes agree")
    check(outputs["gf"]["output"] == b"6765\n", "fib(20) value")
    check(outputs["qemu-like"]["counters"]["guest_to_host_calls"] == 0, "emulation never crosses")
    check(outputs["gf"]["counters"]["guest_to_host_calls"] == 1, "fast path collapses crossings")

    img = hvm.compile(CALLBACK, scheme="g", thresholds="0,0")
    again = hvm.Image.from_bytes(img.to_bytes())
    check(again.digest == img.digest, "image bytes round-trip")
    r = hvm.run(again, scheme="g")
    check(r["output"] == b"42\n" and r["counters"]["host_to_guest_callbacks"] == 1, "host calls back into guest")

    try:
        hvm.compile("fn main( -> i64 {}")
    except ValueError as e:
        check("syntax" in str(e), "syntax errors raise ValueError")
    else:
        sys.exit("FAIL: bad source compiled")

    rows = hvm.matrix(ROOT / "workloads" / "mutual_rec", schemes="qemu-like,gf")
    check(len(rows) == 2 and rows[0]["digest"] == rows[1]["digest"], "matrix on one workload")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
