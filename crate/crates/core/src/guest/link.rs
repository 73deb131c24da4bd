//! Lays out code and data and resolves symbolic references.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::image::{Fixup, GuestImage, HostEntry, HostSection, ImageError, Symbol, SymbolKind, MAX_SEGMENT};
use super::lower::{lower_function, CodeBody, Reloc};
use super::stub::emit_stub;
use crate::analyzer::OffloadPlan;
use crate::frontend::ir::{GlobalInit, GlobalType};
use crate::host::compile::{compile_host, HostMode};
use crate::host::grt::references;

/// Which bodies the linker emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkMode {
    /// Full bytecode for every function; no host section.
    Emulate,
    /// Stubs for functions the plan offloads, bytecode for the rest.
    Hybrid,
    /// Stubs for every function, with host bodies that service guest-bound
    /// instructions themselves.
    Native,
}

pub fn link(plan: &OffloadPlan, mode: LinkMode) -> Result<GuestImage, ImageError> {
    let m = &plan.module;
    let locals: HashSet<String> = m.functions.iter().map(|f| f.name.clone()).collect();
    let mut names = HashSet::new();
    for n in m.functions.iter().map(|f| &f.name).chain(m.globals.iter().map(|g| &g.name)) {
        if !names.insert(n.as_str()) {
            return Err(ImageError::DuplicateSymbol(n.clone()));
        }
    }

    let mut bodies: Vec<CodeBody> = Vec::with_capacity(m.functions.len());
    let mut host = HostSection {
        native: mode == LinkMode::Native,
        entries: Vec::new(),
    };
    let mut stubbed = Vec::new();
    for f in &m.functions {
        let stub = match mode {
            LinkMode::Emulate => false,
            LinkMode::Hybrid => plan.status(&f.name).is_some_and(|s| s.is_offloaded()),
            LinkMode::Native => true,
        };
        stubbed.push(stub);
        if stub {
            let host_mode = if mode == LinkMode::Native { HostMode::Native } else { HostMode::Offload };
            compile_host(f, host_mode).map_err(|e| ImageError::Host {
                function: f.name.clone(),
                message: e.to_string(),
            })?;
            let id = host.entries.len() as u32;
            bodies.push(emit_stub(&f.name, &f.signature(), id)?);
            host.entries.push(HostEntry {
                offload_id: id,
                name: f.name.clone(),
                sig: f.signature(),
                body: f.clone(),
                refs: references(f),
            });
        } else {
            bodies.push(lower_function(f, &locals)?);
        }
    }

    // Code.
    let mut func_off = HashMap::new();
    let mut offsets = Vec::with_capacity(bodies.len());
    let mut pc = 0u64;
    for (f, b) in m.functions.iter().zip(&bodies) {
        func_off.insert(f.name.as_str(), pc);
        offsets.push(pc);
        pc += 8 * b.code.len() as u64;
    }
    let code_size = pc;
    if code_size > MAX_SEGMENT {
        return Err(ImageError::SegmentOverflow {
            segment: "code",
            size: code_size,
        });
    }

    // Initialised data, then strings, then address slots; zeroed arrays go to bss.
    let mut data: Vec<u8> = Vec::new();
    let mut fixups = Vec::new();
    let mut global_off = HashMap::new();
    let mut bss_globals = Vec::new();
    for g in &m.globals {
        let zero_array = matches!(g.ty, GlobalType::Array(..)) && g.init == GlobalInit::Zero;
        if zero_array {
            bss_globals.push(g);
            continue;
        }
        let off = code_size + data.len() as u64;
        global_off.insert(g.name.as_str(), off);
        let start = data.len();
        data.resize(start + g.size_bytes() as usize, 0);
        match &g.init {
            GlobalInit::Zero => {}
            GlobalInit::Scalar(c) => data[start..start + 8].copy_from_slice(&c.bits().to_le_bytes()),
            GlobalInit::Array(items) => {
                for (k, c) in items.iter().enumerate() {
                    data[start + 8 * k..start + 8 * k + 8].copy_from_slice(&c.bits().to_le_bytes());
                }
            }
            GlobalInit::Func(name) => fixups.push(Fixup {
                slot: off,
                symbol: name.clone(),
            }),
        }
    }
    let mut string_off: HashMap<String, u64> = HashMap::new();
    for b in &bodies {
        for s in &b.strings {
            if string_off.contains_key(s.as_str()) {
                continue;
            }
            string_off.insert(s.clone(), code_size + data.len() as u64);
            data.extend_from_slice(s.as_bytes());
            data.push(0);
            data.resize(data.len().next_multiple_of(8), 0);
        }
    }
    let mut slot_off: HashMap<String, u64> = HashMap::new();
    for b in &bodies {
        for (_, r) in &b.relocs {
            if let Reloc::Slot(name) = r {
                if !slot_off.contains_key(name.as_str()) {
                    let off = code_size + data.len() as u64;
                    slot_off.insert(name.clone(), off);
                    fixups.push(Fixup {
                        slot: off,
                        symbol: name.clone(),
                    });
                    data.extend_from_slice(&[0; 8]);
                }
            }
        }
    }
    let mut bss_size = 0u64;
    for g in bss_globals {
        global_off.insert(g.name.as_str(), code_size + data.len() as u64 + bss_size);
        bss_size += g.size_bytes();
    }

    // Patch pc-relative immediates.
    let mut code = Vec::with_capacity(code_size as usize);
    for (b, &base) in bodies.iter_mut().zip(&offsets) {
        for (at, r) in &b.relocs {
            let target = match r {
                Reloc::Block(k) => base + 8 * b.blocks[*k as usize] as u64,
                Reloc::Func(n) => func_off[n.as_str()],
                Reloc::Global(n) => *global_off
                    .get(n.as_str())
                    .ok_or_else(|| ImageError::Malformed(format!("unknown global `{n}`")))?,
                Reloc::Str(k) => string_off[b.strings[*k].as_str()],
                Reloc::Slot(n) => slot_off[n.as_str()],
            };
            let pc = base + 8 * *at as u64;
            b.code[*at].imm = (target as i64 - pc as i64) as i32;
        }
        for i in &b.code {
            code.extend_from_slice(&i.encode().to_le_bytes());
        }
    }

    let mut symbols = Vec::new();
    for (f, b) in m.functions.iter().zip(&bodies) {
        symbols.push(Symbol {
            name: f.name.clone(),
            kind: SymbolKind::Func,
            offset: func_off[f.name.as_str()],
            size: 8 * b.code.len() as u64,
        });
    }
    for g in &m.globals {
        symbols.push(Symbol {
            name: g.name.clone(),
            kind: SymbolKind::Data,
            offset: global_off[g.name.as_str()],
            size: g.size_bytes(),
        });
    }
    let stub_index: BTreeMap<u64, u32> = m
        .functions
        .iter()
        .zip(&stubbed)
        .filter(|(_, &s)| s)
        .enumerate()
        .map(|(id, (f, _))| (func_off[f.name.as_str()], id as u32))
        .collect();
    let entry = match &m.entry {
        Some(e) => Some(*func_off.get(e.as_str()).ok_or_else(|| ImageError::MissingEntry(e.clone()))?),
        None => None,
    };
    let image = GuestImage {
        library: m.functions.iter().any(|f| f.is_library),
        code,
        data,
        bss_size,
        entry,
        symbols,
        stub_index,
        fixups,
        host,
    };
    image.check()?;
    Ok(image)
}
