//! Backward liveness over virtual registers.

use crate::frontend::ir::{FunctionIR, Inst, VReg};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegSet {
    words: Vec<u64>,
}

impl RegSet {
    pub fn new(nregs: usize) -> Self {
        RegSet {
            words: vec![0; nregs.div_ceil(64)],
        }
    }

    pub fn insert(&mut self, r: VReg) {
        self.words[r.index() / 64] |= 1 << (r.index() % 64);
    }

    pub fn remove(&mut self, r: VReg) {
        self.words[r.index() / 64] &= !(1 << (r.index() % 64));
    }

    pub fn contains(&self, r: VReg) -> bool {
        self.words[r.index() / 64] & (1 << (r.index() % 64)) != 0
    }

    fn union_with(&mut self, other: &RegSet) -> bool {
        let mut changed = false;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            let n = *a | *b;
            changed |= n != *a;
            *a = n;
        }
        changed
    }

    pub fn iter(&self) -> impl Iterator<Item = VReg> + '_ {
        self.words.iter().enumerate().flat_map(|(w, bits)| {
            (0..64)
                .filter(move |b| bits & (1u64 << b) != 0)
                .map(move |b| VReg((w * 64 + b) as u32))
        })
    }
}

/// Applies one instruction backwards: `live` goes from live-after to live-before.
pub fn step_back(live: &mut RegSet, inst: &Inst) {
    if let Some(d) = inst.def() {
        live.remove(d);
    }
    for u in inst.uses() {
        live.insert(u);
    }
}

/// Live-out set of every block.
pub fn live_out(f: &FunctionIR) -> Vec<RegSet> {
    let n = f.blocks.len();
    let nregs = f.vreg_types.len();
    let mut live_in = vec![RegSet::new(nregs); n];
    let mut live_out = vec![RegSet::new(nregs); n];
    let mut changed = true;
    while changed {
        changed = false;
        for b in (0..n).rev() {
            let mut out = RegSet::new(nregs);
            if let Some(t) = f.blocks[b].terminator() {
                for s in t.successors() {
                    out.union_with(&live_in[s.index()]);
                }
            }
            let mut inn = out.clone();
            for inst in f.blocks[b].insts.iter().rev() {
                step_back(&mut inn, inst);
            }
            changed |= live_out[b].union_with(&out);
            changed |= live_in[b].union_with(&inn);
        }
    }
    live_out
}

/// Registers live immediately before instruction `index` of `block`.
pub fn live_before(f: &FunctionIR, outs: &[RegSet], block: usize, index: usize) -> RegSet {
    let mut live = outs[block].clone();
    for inst in f.blocks[block].insts[index..].iter().rev() {
        step_back(&mut live, inst);
    }
    live
}
