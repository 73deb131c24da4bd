//! Offload eligibility and partial function outlining.

pub mod liveness;
mod pfo;

use std::collections::BTreeMap;
use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::frontend::ir::{FunctionIR, Inst, Site, TypedModule};

pub use pfo::{apply_pfo, PfoFailure};

/// Size filter for offload candidates. A function passes when it has at
/// least `min_instructions` instructions OR at least `min_blocks` blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub min_instructions: usize,
    pub min_blocks: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_instructions: 8,
            min_blocks: 3,
        }
    }
}

impl Thresholds {
    /// Accept every function regardless of size.
    pub const NONE: Thresholds = Thresholds {
        min_instructions: 0,
        min_blocks: 0,
    };

    pub fn admits(&self, f: &FunctionIR) -> bool {
        f.instruction_count() >= self.min_instructions || f.block_count() >= self.min_blocks
    }
}

impl std::str::FromStr for Thresholds {
    type Err = String;

    /// Parses `I,B`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (i, b) = s
            .split_once(',')
            .ok_or_else(|| format!("expected `INSTRUCTIONS,BLOCKS`, got `{s}`"))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad threshold `{x}`: {e}"))
        };
        Ok(Thresholds {
            min_instructions: parse(i)?,
            min_blocks: parse(b)?,
        })
    }
}

impl fmt::Display for Thresholds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.min_instructions, self.min_blocks)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub thresholds: Thresholds,
    /// When false, functions marked as library code stay on the guest.
    pub offload_library: bool,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            thresholds: Thresholds::default(),
            offload_library: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Offload,
    GuestOnly,
    OffloadAfterPfo,
}

impl Status {
    pub fn is_offloaded(self) -> bool {
        matches!(self, Status::Offload | Status::OffloadAfterPfo)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Offload => "OFFLOAD",
            Status::GuestOnly => "GUEST_ONLY",
            Status::OffloadAfterPfo => "OFFLOAD_AFTER_PFO",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockReason {
    VariadicCall(Site),
    GuestAsm(Site),
    BelowThreshold,
    LibraryPolicy,
}

impl BlockReason {
    pub fn is_blocker(self) -> bool {
        matches!(self, BlockReason::VariadicCall(_) | BlockReason::GuestAsm(_))
    }
}

impl fmt::Display for BlockReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockReason::VariadicCall(s) => write!(f, "VariadicCall({s})"),
            BlockReason::GuestAsm(s) => write!(f, "GuestAsm({s})"),
            BlockReason::BelowThreshold => f.write_str("BelowThreshold"),
            BlockReason::LibraryPolicy => f.write_str("LibraryPolicy"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffloadVerdict {
    pub function: String,
    pub status: Status,
    pub reasons: Vec<BlockReason>,
}

impl OffloadVerdict {
    /// Guest-only solely because of guest-bound instructions, so outlining
    /// them may make the rest offloadable.
    pub fn is_pfo_candidate(&self) -> bool {
        self.status == Status::GuestOnly
            && !self.reasons.is_empty()
            && self.reasons.iter().all(|r| r.is_blocker())
    }
}

pub type Verdicts = BTreeMap<String, OffloadVerdict>;

pub fn classify(module: &TypedModule, thresholds: Thresholds) -> Verdicts {
    classify_with(
        module,
        Policy {
            thresholds,
            ..Policy::default()
        },
    )
}

pub fn classify_with(module: &TypedModule, policy: Policy) -> Verdicts {
    module
        .functions
        .iter()
        .map(|f| (f.name.clone(), classify_function(f, policy)))
        .collect()
}

pub fn classify_function(f: &FunctionIR, policy: Policy) -> OffloadVerdict {
    let mut reasons: Vec<BlockReason> = f
        .sites()
        .filter_map(|(site, inst)| match inst {
            Inst::Print { .. } => Some(BlockReason::VariadicCall(site)),
            Inst::GuestAsm { .. } => Some(BlockReason::GuestAsm(site)),
            _ => None,
        })
        .collect();
    if !f.is_synthetic() && !policy.thresholds.admits(f) {
        reasons.push(BlockReason::BelowThreshold);
    }
    if f.is_library && !policy.offload_library {
        reasons.push(BlockReason::LibraryPolicy);
    }
    let status = if reasons.is_empty() {
        Status::Offload
    } else {
        Status::GuestOnly
    };
    OffloadVerdict {
        function: f.name.clone(),
        status,
        reasons,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outlined {
    pub origin: String,
    pub helper: FunctionIR,
    pub rewrite: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffloadPlan {
    pub verdicts: Verdicts,
    pub outlined: Vec<Outlined>,
    pub failures: Vec<(String, PfoFailure)>,
    pub module: TypedModule,
}

impl OffloadPlan {
    /// A plan that keeps the module unchanged.
    pub fn without_pfo(module: &TypedModule, verdicts: Verdicts) -> Self {
        OffloadPlan {
            verdicts,
            outlined: Vec::new(),
            failures: Vec::new(),
            module: module.clone(),
        }
    }

    /// A plan with every function on the guest.
    pub fn all_guest(module: &TypedModule) -> Self {
        let verdicts = module
            .functions
            .iter()
            .map(|f| {
                (
                    f.name.clone(),
                    OffloadVerdict {
                        function: f.name.clone(),
                        status: Status::GuestOnly,
                        reasons: vec![BlockReason::LibraryPolicy],
                    },
                )
            })
            .collect();
        Self::without_pfo(module, verdicts)
    }

    pub fn status(&self, name: &str) -> Option<Status> {
        self.verdicts.get(name).map(|v| v.status)
    }

    pub fn offloaded(&self) -> impl Iterator<Item = &FunctionIR> {
        self.module
            .functions
            .iter()
            .filter(|f| self.status(&f.name).is_some_and(Status::is_offloaded))
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        for f in &self.module.functions {
            let Some(v) = self.verdicts.get(&f.name) else { continue };
            let reasons: Vec<String> = v.reasons.iter().map(|r| r.to_string()).collect();
            let _ = writeln!(out, "verdict {} {} [{}]", f.name, v.status, reasons.join(", "));
        }
        for o in &self.outlined {
            let _ = writeln!(out, "outlined {} -> {}: {}", o.origin, o.helper.name, o.rewrite);
        }
        for (f, e) in &self.failures {
            let _ = writeln!(out, "pfo-failure {f}: {e}");
        }
        let c = coverage(self);
        let _ = writeln!(out, "coverage {}/{}", c.offloaded, c.total);
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub total: usize,
    pub offloaded: usize,
}

impl std::ops::Add for Coverage {
    type Output = Coverage;

    fn add(self, o: Coverage) -> Coverage {
        Coverage {
            total: self.total + o.total,
            offloaded: self.offloaded + o.offloaded,
        }
    }
}

/// Offloaded functions out of all source functions; outlined helpers are
/// not counted.
pub fn coverage(plan: &OffloadPlan) -> Coverage {
    let mut c = Coverage::default();
    for f in plan.module.functions.iter().filter(|f| !f.is_synthetic()) {
        c.total += 1;
        if plan.status(&f.name).is_some_and(Status::is_offloaded) {
            c.offloaded += 1;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    #[test]
    fn pure_arithmetic_function_is_offloaded() {
        let m = parse(
            "fn poly(x: i64) -> i64 { let a = x * x; let b = a * x + 3 * a - 7 * x + 11; let c = b * b - a * 5 + x; return c * 2 - a + b; }",
        )
        .unwrap();
        let f = &m.functions[0];
        assert!(f.instruction_count() >= 20, "{}", f.instruction_count());
        let v = classify(&m, Thresholds::default());
        assert_eq!(v["poly"].status, Status::Offload);
        assert!(v["poly"].reasons.is_empty());
    }

    #[test]
    fn single_print_blocks_but_is_a_pfo_candidate() {
        let m = parse(
            r#"fn work(n: i64) -> i64 {
                let s = 0; let i = 0;
                while (i < n) { s = s + i * i; i = i + 1; }
                if (s < 0) { print("overflow %d\n", s); }
                return s;
            }"#,
        )
        .unwrap();
        let v = classify(&m, Thresholds::default());
        let w = &v["work"];
        assert_eq!(w.status, Status::GuestOnly);
        assert!(matches!(w.reasons.as_slice(), [BlockReason::VariadicCall(_)]));
        assert!(w.is_pfo_candidate());
    }

    #[test]
    fn short_leaf_is_below_threshold() {
        let m = parse("fn get(x: i64) -> i64 { return x + 1; }").unwrap();
        assert!(m.functions[0].instruction_count() <= 3);
        let v = classify(&m, Thresholds::default());
        assert_eq!(v["get"].status, Status::GuestOnly);
        assert_eq!(v["get"].reasons, vec![BlockReason::BelowThreshold]);
        assert!(!v["get"].is_pfo_candidate());
    }

    #[test]
    fn library_policy_keeps_library_code_on_guest() {
        let m = crate::frontend::parse_library(
            "fn sum(p: *i64, n: i64) -> i64 { let s = 0; let i = 0; while (i < n) { s = s + p[i]; i = i + 1; } return s; }",
        )
        .unwrap();
        let v = classify_with(
            &m,
            Policy {
                thresholds: Thresholds::default(),
                offload_library: false,
            },
        );
        assert_eq!(v["sum"].reasons, vec![BlockReason::LibraryPolicy]);
    }

    #[test]
    fn coverage_counts() {
        let m = parse("fn a(x: i64) -> i64 { return x; } fn b(x: i64) -> i64 { return x; }").unwrap();
        let mut v = classify(&m, Thresholds::NONE);
        v.get_mut("b").unwrap().status = Status::GuestOnly;
        let plan = OffloadPlan::without_pfo(&m, v);
        assert_eq!(coverage(&plan), Coverage { total: 2, offloaded: 1 });

        let empty = parse("").unwrap();
        let plan = OffloadPlan::without_pfo(&empty, classify(&empty, Thresholds::default()));
        assert_eq!(coverage(&plan), Coverage::default());
    }

    #[test]
    fn thresholds_parse() {
        assert_eq!(
            "8,3".parse::<Thresholds>().unwrap(),
            Thresholds::default()
        );
        assert!("8".parse::<Thresholds>().is_err());
    }
}
