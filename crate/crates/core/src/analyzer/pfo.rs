//! Partial function outlining.
//!
//! A region is a straight-line span inside one block that starts and ends
//! with a guest-bound instruction. Instructions between them are pulled in as
//! long as they are plain data flow (no calls, no exit). Each region becomes a
//! guest-only helper taking the region's live-in registers and returning its
//! single live-out, if any; the origin calls the helper instead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::liveness::{live_out, step_back, RegSet};
use super::{classify_function, OffloadPlan, OffloadVerdict, Outlined, Policy, Status, Verdicts};
use crate::frontend::ir::{Block, BlockId, Callee, FunctionIR, Inst, Param, Signature, Site, Type, TypedModule, VReg};

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum PfoFailure {
    #[error("region at {site} has {count} live-out values; at most one is supported")]
    MultipleLiveOuts { site: Site, count: usize },
    #[error("outlining every guest-bound region would leave the function empty")]
    EmptyRemainder,
}

struct Region {
    block: usize,
    start: usize,
    end: usize,
    live_in: Vec<VReg>,
    live_out: Option<VReg>,
}

fn is_glue(inst: &Inst) -> bool {
    !inst.is_terminator() && !matches!(inst, Inst::Call { .. } | Inst::Exit { .. })
}

fn find_regions(f: &FunctionIR) -> Result<Vec<Region>, PfoFailure> {
    let outs = live_out(f);
    let mut regions = Vec::new();
    for (b, block) in f.blocks.iter().enumerate() {
        let body = block.body();
        let mut i = 0;
        while i < body.len() {
            if !body[i].is_guest_bound() {
                i += 1;
                continue;
            }
            let start = i;
            let mut end = i + 1;
            let mut j = end;
            while j < body.len() && (body[j].is_guest_bound() || is_glue(&body[j])) {
                j += 1;
                if body[j - 1].is_guest_bound() {
                    end = j;
                }
            }
            regions.push(region_bounds(f, &outs, b, start, end)?);
            i = end;
        }
    }
    Ok(regions)
}

fn region_bounds(f: &FunctionIR, outs: &[RegSet], block: usize, start: usize, end: usize) -> Result<Region, PfoFailure> {
    let insts = &f.blocks[block].insts;
    let mut after = outs[block].clone();
    for inst in insts[end..].iter().rev() {
        step_back(&mut after, inst);
    }
    let mut live_in = RegSet::new(f.vreg_types.len());
    for inst in insts[start..end].iter().rev() {
        step_back(&mut live_in, inst);
    }
    let mut defs: Vec<VReg> = insts[start..end].iter().filter_map(Inst::def).collect();
    defs.sort();
    defs.dedup();
    let escaping: Vec<VReg> = defs.into_iter().filter(|d| after.contains(*d)).collect();
    if escaping.len() > 1 {
        return Err(PfoFailure::MultipleLiveOuts {
            site: Site {
                block: BlockId(block as u32),
                index: start,
            },
            count: escaping.len(),
        });
    }
    Ok(Region {
        block,
        start,
        end,
        live_in: live_in.iter().collect(),
        live_out: escaping.first().copied(),
    })
}

fn build_helper(origin: &FunctionIR, r: &Region, name: String) -> FunctionIR {
    let mut map = vec![None; origin.vreg_types.len()];
    let mut helper = FunctionIR {
        name,
        params: Vec::new(),
        ret: r
            .live_out
            .map(|v| origin.vreg_type(v).clone())
            .unwrap_or(Type::Void),
        blocks: Vec::new(),
        vreg_types: Vec::new(),
        is_library: origin.is_library,
        outlined_from: Some(origin.name.clone()),
        pos: origin.pos,
    };
    for (k, &v) in r.live_in.iter().enumerate() {
        let ty = origin.vreg_type(v).clone();
        helper.params.push(Param {
            name: format!("in{k}"),
            ty: ty.clone(),
        });
        map[v.index()] = Some(helper.new_vreg(ty));
    }
    let mut insts: Vec<Inst> = origin.blocks[r.block].insts[r.start..r.end].to_vec();
    for inst in &mut insts {
        inst.map_vregs(|v| {
            *map[v.index()].get_or_insert_with(|| helper.new_vreg(origin.vreg_type(v).clone()))
        });
    }
    let value = r.live_out.map(|v| map[v.index()].expect("live-out defined in region"));
    insts.push(Inst::Return { value });
    helper.blocks.push(Block { insts });
    helper
}

fn describe(r: &Region, helper: &FunctionIR) -> String {
    let ins: Vec<String> = r.live_in.iter().map(|v| v.to_string()).collect();
    let out = r.live_out.map(|v| v.to_string()).unwrap_or_else(|| "none".into());
    format!(
        "b{}[{}..{}] -> call {}({}) live-out {}",
        r.block,
        r.start,
        r.end,
        helper.name,
        ins.join(", "),
        out
    )
}

/// Outlines the guest-bound regions of one function. Returns the rewritten
/// origin and its helpers in order.
fn outline(f: &FunctionIR) -> Result<(FunctionIR, Vec<(FunctionIR, String)>), PfoFailure> {
    let regions = find_regions(f)?;
    let covered: usize = regions.iter().map(|r| r.end - r.start).sum();
    if covered == f.instruction_count() {
        return Err(PfoFailure::EmptyRemainder);
    }
    let mut origin = f.clone();
    let mut helpers = Vec::new();
    for (n, r) in regions.iter().enumerate() {
        let helper = build_helper(f, r, format!("{}.pfo{n}", f.name));
        let rewrite = describe(r, &helper);
        helpers.push((helper, rewrite));
    }
    // Splice back to front so earlier indices stay valid.
    for (r, (helper, _)) in regions.iter().zip(&helpers).rev() {
        let call = Inst::Call {
            dst: r.live_out,
            callee: Callee::Direct(helper.name.clone()),
            args: r.live_in.clone(),
            sig: Signature {
                params: helper.params.iter().map(|p| p.ty.clone()).collect(),
                ret: helper.ret.clone(),
            },
        };
        origin.blocks[r.block].insts.splice(r.start..r.end, [call]);
    }
    Ok((origin, helpers))
}

/// Outlines guest-bound regions from every PFO candidate in `verdicts`.
/// Functions whose regions cannot be isolated keep their original body and
/// verdict; the reason is recorded in the plan.
pub fn apply_pfo(module: &TypedModule, verdicts: &Verdicts) -> OffloadPlan {
    let mut out = module.clone();
    out.functions.clear();
    let mut new_verdicts = verdicts.clone();
    let mut outlined = Vec::new();
    let mut failures = Vec::new();
    for f in &module.functions {
        let candidate = verdicts.get(&f.name).is_some_and(OffloadVerdict::is_pfo_candidate);
        if !candidate {
            out.functions.push(f.clone());
            continue;
        }
        match outline(f) {
            Ok((origin, helpers)) => {
                new_verdicts.insert(
                    f.name.clone(),
                    OffloadVerdict {
                        function: f.name.clone(),
                        status: Status::OffloadAfterPfo,
                        reasons: Vec::new(),
                    },
                );
                out.functions.push(origin);
                for (helper, rewrite) in helpers {
                    new_verdicts.insert(helper.name.clone(), classify_function(&helper, Policy::default()));
                    out.functions.push(helper.clone());
                    outlined.push(Outlined {
                        origin: f.name.clone(),
                        helper,
                        rewrite,
                    });
                }
            }
            Err(e) => {
                out.functions.push(f.clone());
                failures.push((f.name.clone(), e));
            }
        }
    }
    OffloadPlan {
        verdicts: new_verdicts,
        outlined,
        failures,
        module: out,
    }
}
