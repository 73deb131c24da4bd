//! Random programs run under every scheme must print what a direct Rust
//! evaluation of the same program prints, with consistent counters.

use hvm_core::analyzer::{apply_pfo, classify, Thresholds};
use hvm_core::frontend::{dump_module, parse, parse_ast};
use hvm_core::guest::{link, GuestImage, LinkMode};
use hvm_core::harness::{build_module, Scheme};
use hvm_core::runtime::{run_images, RunConfig, RunOutcome};
use proptest::prelude::*;

#[derive(Clone, Copy, Debug)]
enum Op {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Div,
    Rem,
}

#[derive(Clone, Debug)]
enum Expr {
    A,
    B,
    Lit(i64),
    Bin(Op, Box<Expr>, Box<Expr>),
}

impl Expr {
    fn eval(&self, a: i64, b: i64) -> i64 {
        match self {
            Expr::A => a,
            Expr::B => b,
            Expr::Lit(v) => *v,
            Expr::Bin(op, l, r) => {
                let (x, y) = (l.eval(a, b), r.eval(a, b));
                match op {
                    Op::Add => x.wrapping_add(y),
                    Op::Sub => x.wrapping_sub(y),
                    Op::Mul => x.wrapping_mul(y),
                    Op::And => x & y,
                    Op::Or => x | y,
                    Op::Xor => x ^ y,
                    Op::Shl => x.wrapping_shl((y & 63) as u32),
                    Op::Shr => x.wrapping_shr((y & 63) as u32),
                    Op::Div => x.wrapping_div(y | 1),
                    Op::Rem => x.wrapping_rem(y | 1),
                }
            }
        }
    }

    fn render(&self) -> String {
        match self {
            Expr::A => "a".into(),
            Expr::B => "b".into(),
            Expr::Lit(v) if *v < 0 => format!("(0 - {})", v.unsigned_abs()),
            Expr::Lit(v) => v.to_string(),
            Expr::Bin(op, l, r) => {
                let (l, r) = (l.render(), r.render());
                match op {
                    Op::Add => format!("({l} + {r})"),
                    Op::Sub => format!("({l} - {r})"),
                    Op::Mul => format!("({l} * {r})"),
                    Op::And => format!("({l} & {r})"),
                    Op::Or => format!("({l} | {r})"),
                    Op::Xor => format!("({l} ^ {r})"),
                    Op::Shl => format!("({l} << ({r} & 63))"),
                    Op::Shr => format!("({l} >> ({r} & 63))"),
                    Op::Div => format!("({l} / ({r} | 1))"),
                    Op::Rem => format!("({l} % ({r} | 1))"),
                }
            }
        }
    }
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::A),
        Just(Expr::B),
        (-1000i64..1000).prop_map(Expr::Lit),
        any::<i64>().prop_filter("fits a literal", |v| *v != i64::MIN).prop_map(Expr::Lit),
    ];
    let op = prop_oneof![
        Just(Op::Add),
        Just(Op::Sub),
        Just(Op::Mul),
        Just(Op::And),
        Just(Op::Or),
        Just(Op::Xor),
        Just(Op::Shl),
        Just(Op::Shr),
        Just(Op::Div),
        Just(Op::Rem),
    ];
    leaf.prop_recursive(4, 24, 2, move |inner| {
        (op.clone(), inner.clone(), inner).prop_map(|(o, l, r)| Expr::Bin(o, Box::new(l), Box::new(r)))
    })
}

/// Two leaf functions, a loop that calls them and records into a global
/// array, and an optional guarded print that makes the loop a PFO candidate.
#[derive(Clone, Debug)]
struct Program {
    leaf0: Expr,
    leaf1: Expr,
    cond: Expr,
    rounds: i64,
    /// Mask for the guarded print; `None` leaves the loop without one.
    guard: Option<i64>,
    /// Keeps `leaf0` on the guest, so host callers must call back.
    guest_leaf: bool,
    args: (i64, i64),
}

impl Program {
    fn source(&self) -> String {
        let asm = if self.guest_leaf { "guestasm(\"nop\"); " } else { "" };
        let guard = match self.guard {
            Some(m) => format!("if ((s & {m}) == 0) {{ print(\"tick %d %d\\n\", i, s); }}"),
            None => String::new(),
        };
        format!(
            r#"global mem: [i64; 16];
fn leaf0(a: i64, b: i64) -> i64 {{ {asm}return {}; }}
fn leaf1(a: i64, b: i64) -> i64 {{ if ({} < 0) {{ return {}; }} return leaf0(b, a) + 1; }}
fn mid(a: i64, b: i64) -> i64 {{
    let s = a;
    let i = 0;
    while (i < {}) {{
        s = leaf1(s, b + i) ^ leaf0(i, s);
        mem[s & 15] = mem[s & 15] + i;
        {guard}
        i = i + 1;
    }}
    return s;
}}
fn main(a: i64, b: i64) -> i64 {{
    guestasm("nop");
    print("%d\n", mid(a, b));
    let k = 0;
    let h = 0;
    while (k < 16) {{ h = h * 31 + mem[k]; k = k + 1; }}
    print("%d\n", h);
    return 0;
}}
"#,
            self.leaf0.render(),
            self.cond.render(),
            self.leaf1.render(),
            self.rounds,
        )
    }

    fn oracle(&self) -> String {
        let leaf0 = |a, b| self.leaf0.eval(a, b);
        let leaf1 = |a, b| {
            if self.cond.eval(a, b) < 0 {
                self.leaf1.eval(a, b)
            } else {
                leaf0(b, a).wrapping_add(1)
            }
        };
        let mut out = String::new();
        let mut mem = [0i64; 16];
        let (a, b) = self.args;
        let mut s = a;
        for i in 0..self.rounds {
            s = leaf1(s, b.wrapping_add(i)) ^ leaf0(i, s);
            let k = (s & 15) as usize;
            mem[k] = mem[k].wrapping_add(i);
            if let Some(m) = self.guard {
                if s & m == 0 {
                    out.push_str(&format!("tick {i} {s}\n"));
                }
            }
        }
        out.push_str(&format!("{s}\n"));
        let h = mem.iter().fold(0i64, |h, v| h.wrapping_mul(31).wrapping_add(*v));
        out.push_str(&format!("{h}\n"));
        out
    }
}

fn program() -> impl Strategy<Value = Program> {
    (
        expr(),
        expr(),
        expr(),
        0i64..24,
        prop::option::of(prop_oneof![Just(1i64), Just(3), Just(7)]),
        any::<bool>(),
        (any::<i64>(), any::<i64>()),
    )
        .prop_map(|(leaf0, leaf1, cond, rounds, guard, guest_leaf, args)| Program {
            leaf0,
            leaf1,
            cond,
            rounds,
            guard,
            guest_leaf,
            args,
        })
}

fn run(img: &GuestImage, scheme: Scheme, args: &[i64]) -> RunOutcome {
    let f = scheme.flags();
    run_images(&[img], RunConfig::with_flags(f.grt, f.fcp), args).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn every_scheme_matches_the_oracle(p in program()) {
        let src = p.source();
        let m = parse(&src).unwrap();
        let want = p.oracle();
        let args = [p.args.0, p.args.1];
        let mut outcomes = Vec::new();
        for scheme in Scheme::ALL {
            let (img, plan, _) = build_module(&m, scheme, Thresholds::NONE, "prop").unwrap();
            let o = run(&img, scheme, &args);
            prop_assert!(o.fault.is_none(), "{scheme}: {:?}\n{src}", o.fault);
            prop_assert_eq!(String::from_utf8_lossy(&o.output), want.as_str(), "{} diverged\n{}", scheme, src);
            prop_assert_eq!(o.final_depth, 1);
            prop_assert_eq!(o.final_sp, o.initial_sp);
            let f = scheme.flags();
            if !f.fcp {
                prop_assert_eq!(o.counters.fcp_direct_calls, 0);
            }
            if f.grt {
                let hosted = match scheme {
                    Scheme::Native => plan.module.functions.len(),
                    _ => plan.offloaded().count(),
                };
                prop_assert!(o.counters.grt_constructions <= hosted as u64, "{}: {} rows", scheme, o.counters.grt_constructions);
            }
            outcomes.push((scheme, o));
        }
        let get = |s: Scheme| &outcomes.iter().find(|(x, _)| *x == s).unwrap().1;
        let (base, g, gf) = (get(Scheme::BASE), get(Scheme::G), get(Scheme::GF));
        // GRT only changes the construction counter.
        prop_assert_eq!(base.counters.interpreted_instructions, g.counters.interpreted_instructions);
        prop_assert_eq!(base.counters.guest_to_host_calls, g.counters.guest_to_host_calls);
        prop_assert_eq!(base.counters.host_to_guest_callbacks, g.counters.host_to_guest_callbacks);
        prop_assert!(g.counters.grt_constructions <= base.counters.grt_constructions);
        prop_assert!(gf.counters.guest_to_host_calls <= g.counters.guest_to_host_calls);
    }

    #[test]
    fn outlined_module_emulates_identically(p in program()) {
        let m = parse(&p.source()).unwrap();
        let verdicts = classify(&m, Thresholds::NONE);
        let args = [p.args.0, p.args.1];
        let original = link(&hvm_core::analyzer::OffloadPlan::all_guest(&m), LinkMode::Emulate).unwrap();
        let plan = apply_pfo(&m, &verdicts);
        let outlined = link(&plan, LinkMode::Emulate).unwrap();
        let a = run(&original, Scheme::Emulate, &args);
        let b = run(&outlined, Scheme::Emulate, &args);
        prop_assert_eq!(a.output, b.output);
        prop_assert_eq!(a.exit_code, b.exit_code);
        let before = hvm_core::analyzer::coverage(&hvm_core::analyzer::OffloadPlan::without_pfo(&m, verdicts.clone()));
        let after = hvm_core::analyzer::coverage(&plan);
        prop_assert!(after.offloaded * before.total >= before.offloaded * after.total);
    }

    #[test]
    fn pretty_printed_source_reparses_to_the_same_module(p in program()) {
        let src = p.source();
        let ast = parse_ast(&src).unwrap();
        let again = parse(&ast.to_string()).unwrap();
        prop_assert_eq!(dump_module(&parse(&src).unwrap()), dump_module(&again));
    }

    #[test]
    fn linking_is_deterministic_and_images_round_trip(p in program(), scheme_ix in 0usize..6) {
        let scheme = Scheme::ALL[scheme_ix];
        let m = parse(&p.source()).unwrap();
        let (a, _, _) = build_module(&m, scheme, Thresholds::NONE, "prop").unwrap();
        let (b, _, _) = build_module(&parse(&p.source()).unwrap(), scheme, Thresholds::NONE, "prop").unwrap();
        let bytes = a.to_bytes();
        prop_assert_eq!(&bytes, &b.to_bytes());
        let back = GuestImage::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_images_are_rejected_without_panicking(p in program(), cut in any::<prop::sample::Index>(), flip in any::<u8>()) {
        let (img, _, _) = build_module(&parse(&p.source()).unwrap(), Scheme::GFP, Thresholds::NONE, "prop").unwrap();
        let bytes = img.to_bytes();
        let _ = GuestImage::from_bytes(&bytes[..cut.index(bytes.len())]);
        let mut flipped = bytes.clone();
        let i = cut.index(bytes.len());
        flipped[i] ^= flip | 1;
        let _ = GuestImage::from_bytes(&flipped);
    }
}
