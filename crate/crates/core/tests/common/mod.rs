//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::fmt::Write;
use std::path::PathBuf;

use hvm_core::analyzer::{classify, OffloadPlan, Status, Thresholds};
use hvm_core::frontend::parse;
use hvm_core::guest::{link, GuestImage, LinkMode};
use hvm_core::runtime::{RunConfig, Runtime};
use rand::Rng;

pub fn workloads_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../workloads")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbiClass {
    I64,
    F64,
    Ptr,
    FnPtr,
}

impl AbiClass {
    pub const ALL: [AbiClass; 4] = [AbiClass::I64, AbiClass::F64, AbiClass::Ptr, AbiClass::FnPtr];

    pub fn spelling(self) -> &'static str {
        match self {
            AbiClass::I64 => "i64",
            AbiClass::F64 => "f64",
            AbiClass::Ptr => "*i64",
            AbiClass::FnPtr => "fn(i64) -> i64",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AbiCase {
    pub params: Vec<AbiClass>,
    pub ret: AbiClass,
    /// Host-to-guest direction calls through a function-pointer global
    /// instead of by name.
    pub via_pointer: bool,
    /// Raw bits for each parameter, then the return value.
    pub bits: Vec<u64>,
}

impl AbiCase {
    pub fn random(rng: &mut impl Rng) -> AbiCase {
        let arity = rng.gen_range(0..=10);
        let params: Vec<AbiClass> = (0..arity).map(|_| AbiClass::ALL[rng.gen_range(0..4)]).collect();
        let ret = AbiClass::ALL[rng.gen_range(0..4)];
        let bits = (0..=arity).map(|_| special_bits(rng)).collect();
        AbiCase {
            params,
            ret,
            via_pointer: rng.gen(),
            bits,
        }
    }

    /// A program in which a guest caller passes `in*` to an offloaded
    /// function, and an offloaded caller passes them to a guest-only one.
    /// Each callee copies its parameters to `out*`/`back*` and returns
    /// `ret_in`.
    pub fn program(&self) -> String {
        let mut s = String::new();
        let sig: Vec<String> = self
            .params
            .iter()
            .enumerate()
            .map(|(k, t)| format!("p{k}: {}", t.spelling()))
            .collect();
        let sig = sig.join(", ");
        let ret = self.ret.spelling();
        for (k, t) in self.params.iter().enumerate() {
            let _ = writeln!(s, "global in{k}: {};\nglobal out{k}: {};\nglobal back{k}: {};", t.spelling(), t.spelling(), t.spelling());
        }
        let _ = writeln!(s, "global ret_in: {ret};\nglobal ret_out: {ret};\nglobal ret_back: {ret};");
        let args: Vec<String> = (0..self.params.len()).map(|k| format!("in{k}")).collect();
        let args = args.join(", ");
        let copy = |prefix: &str| -> String {
            (0..self.params.len()).map(|k| format!("{prefix}{k} = p{k}; ")).collect()
        };
        let _ = writeln!(s, "fn host_side({sig}) -> {ret} {{ {}return ret_in; }}", copy("out"));
        let _ = writeln!(
            s,
            "fn guest_side({sig}) -> {ret} {{ guestasm(\"nop\"); {}return ret_in; }}",
            copy("back")
        );
        let params: Vec<&str> = self.params.iter().map(|t| t.spelling()).collect();
        let _ = writeln!(s, "global cb: fn({}) -> {ret} = &guest_side;", params.join(", "));
        let callee = if self.via_pointer { "cb" } else { "guest_side" };
        let _ = writeln!(s, "fn host_caller() -> i64 {{ ret_back = {callee}({args}); return 0; }}");
        let _ = writeln!(
            s,
            "fn main() -> i64 {{ guestasm(\"nop\"); ret_out = host_side({args}); return host_caller(); }}"
        );
        s
    }

    /// Builds, runs and compares every copied value bit for bit.
    pub fn check(&self) -> Result<(), String> {
        let src = self.program();
        let m = parse(&src).map_err(|e| format!("{e}\n{src}"))?;
        let plan = OffloadPlan::without_pfo(&m, classify(&m, Thresholds::NONE));
        for (f, want) in [
            ("host_side", Status::Offload),
            ("host_caller", Status::Offload),
            ("guest_side", Status::GuestOnly),
            ("main", Status::GuestOnly),
        ] {
            if plan.status(f) != Some(want) {
                return Err(format!("{f} classified {:?}", plan.status(f)));
            }
        }
        let img: GuestImage = link(&plan, LinkMode::Hybrid).map_err(|e| e.to_string())?;
        let mut rt = Runtime::load(&[&img], RunConfig::with_flags(true, false)).map_err(|e| e.to_string())?;
        let n = self.params.len();
        for k in 0..n {
            let a = rt.symbol_address(&format!("in{k}")).unwrap();
            rt.memory_mut().write_u64(a, self.bits[k]).unwrap();
        }
        let a = rt.symbol_address("ret_in").unwrap();
        rt.memory_mut().write_u64(a, self.bits[n]).unwrap();
        let o = rt.run(&[]).map_err(|e| e.to_string())?;
        if let Some(f) = o.fault {
            return Err(format!("fault: {f}"));
        }
        if o.counters.guest_to_host_calls != 2 || o.counters.host_to_guest_callbacks != 1 {
            return Err(format!("unexpected crossings {:?}", o.counters));
        }
        let read = |rt: &Runtime, name: &str| rt.memory().read_u64(rt.symbol_address(name).unwrap()).unwrap();
        for k in 0..n {
            for dir in ["out", "back"] {
                let got = read(&rt, &format!("{dir}{k}"));
                if got != self.bits[k] {
                    return Err(format!("{dir}{k}: sent {:#x}, received {got:#x}", self.bits[k]));
                }
            }
        }
        for name in ["ret_out", "ret_back"] {
            let got = read(&rt, name);
            if got != self.bits[n] {
                return Err(format!("{name}: sent {:#x}, received {got:#x}", self.bits[n]));
            }
        }
        Ok(())
    }
}

/// Random bits, biased towards encodings that tend to break marshalling:
/// NaN payloads, negative zero, sign-extension edges.
fn special_bits(rng: &mut impl Rng) -> u64 {
    const EDGES: [u64; 8] = [
        0,
        u64::MAX,
        0x8000_0000_0000_0000,
        0x7FF8_0000_0000_0001,
        0xFFF0_0000_0000_0000,
        0x0000_0000_FFFF_FFFF,
        0xFFFF_FFFF_8000_0000,
        0x7FFF_FFFF,
    ];
    if rng.gen_bool(0.25) {
        EDGES[rng.gen_range(0..EDGES.len())]
    } else {
        rng.gen()
    }
}
