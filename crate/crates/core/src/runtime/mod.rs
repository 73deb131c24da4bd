//! Guest emulation with offload trampolines, reentrant callbacks and
//! direct host-to-host dispatch.
//!
//! Memory map:
//!
//! ```text
//! 0 .. 0x10000            null guard, every access faults
//! 0x10000 ..              images, each page aligned, in load order
//! top - stack_size .. top guest stack, growing down
//! ```

mod interp;
pub mod memory;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault::{FaultKind, GuestFault, Trap};
use crate::guest::image::{GuestImage, ImageError, SymbolKind};
use crate::guest::isa::{ARG0, LR, NUM_REGS, SP};
use crate::host::compile::{compile_host, HostEnv, HostFunction, HostMode, Value};
use crate::host::grt::{build_grt, resolve, GlobalReferenceTable, LinkError, RefKind, RefSpec};
use crate::host::thunk::make_reverse_stub;
use crate::frontend::ir::Signature;
pub use memory::{Memory, NULL_GUARD};

pub const DEFAULT_MEMORY: usize = 64 << 20;
pub const DEFAULT_STACK: u64 = 8 << 20;
/// Free guest stack a callback needs before it may start.
pub const CALLBACK_HEADROOM: u64 = 4096;
/// Gap left below the interrupted guest frame for a callback frame.
const CALLBACK_RED_ZONE: u64 = 128;
/// Return addresses that end an emulation context. They lie far outside
/// any mappable memory, so a fetch from one always misses the code ranges.
pub const SENTINEL_BASE: u64 = 0xFFFF_0000_0000_0000;
pub const DEFAULT_HOST_DEPTH: u32 = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeFlags {
    pub grt: bool,
    pub fcp: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub flags: RuntimeFlags,
    /// Interpreted-instruction cap; 0 means unlimited.
    pub budget: u64,
    pub memory: usize,
    pub stack: u64,
    pub host_depth: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            flags: RuntimeFlags { grt: false, fcp: false },
            budget: 0,
            memory: DEFAULT_MEMORY,
            stack: DEFAULT_STACK,
            host_depth: DEFAULT_HOST_DEPTH,
        }
    }
}

impl RunConfig {
    pub fn with_flags(grt: bool, fcp: bool) -> Self {
        RunConfig {
            flags: RuntimeFlags { grt, fcp },
            ..RunConfig::default()
        }
    }

    /// Reads the budget from `HVM_INSTR_BUDGET`, if set.
    pub fn budget_from_env(mut self) -> Self {
        if let Some(b) = std::env::var("HVM_INSTR_BUDGET").ok().and_then(|v| v.trim().parse().ok()) {
            self.budget = b;
        }
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub interpreted_instructions: u64,
    pub guest_to_host_calls: u64,
    pub host_to_guest_callbacks: u64,
    pub fcp_direct_calls: u64,
    pub grt_constructions: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Owner {
    Program,
    /// Callback issued by the host function with this global id.
    Callback(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmulationContext {
    pub saved_regs: [u64; NUM_REGS],
    pub saved_pc: u64,
    pub sentinel: u64,
    pub owner: Owner,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("image `{image}`: host body `{function}` does not compile: {message}")]
    Host {
        image: usize,
        function: String,
        message: String,
    },
    #[error("images need {needed} bytes but only {available} are free below the stack")]
    OutOfMemory { needed: u64, available: u64 },
    #[error("no loaded image has an entry point")]
    NoEntry,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    pub exit_code: i64,
    pub output: Vec<u8>,
    pub counters: EventCounters,
    pub wall: Duration,
    pub fault: Option<GuestFault>,
    /// Emulation contexts live when the program finished.
    pub final_depth: usize,
    /// Deepest context stack seen during the run.
    pub max_depth: usize,
    pub initial_sp: u64,
    pub final_sp: u64,
}

struct LoadedImage {
    base: u64,
    code_end: u64,
    host_base: u32,
    host_count: u32,
    decoded: interp::Decoded,
    symbols: HashMap<String, (u64, SymbolKind)>,
}

struct HostSlot {
    func: Arc<HostFunction>,
    image: usize,
    native: bool,
}

pub struct Runtime {
    mem: Memory,
    regs: [u64; NUM_REGS],
    pc: u64,
    contexts: Vec<EmulationContext>,
    images: Vec<LoadedImage>,
    globals: HashMap<String, (u64, SymbolKind)>,
    host: Vec<HostSlot>,
    grt: GlobalReferenceTable,
    fcp: HashMap<u64, u32>,
    counters: EventCounters,
    output: Vec<u8>,
    config: RunConfig,
    budget: u64,
    next_sentinel: u64,
    host_stack: Vec<u32>,
    max_depth: usize,
    stack_top: u64,
    stack_limit: u64,
    entry: Option<u64>,
    /// Code range of the image the interpreter last fetched from.
    cur_code: (u64, u64, usize),
}

const PAGE: u64 = 0x1000;

impl Runtime {
    /// Maps the images in order, fills address slots, compiles host bodies
    /// and checks that every host reference resolves. The first image with an
    /// entry point supplies the program entry.
    pub fn load(images: &[&GuestImage], config: RunConfig) -> Result<Runtime, LoadError> {
        let mut mem = Memory::new(config.memory);
        let stack_top = (mem.size() - 64) & !15;
        let stack_limit = stack_top.saturating_sub(config.stack);
        let mut loaded = Vec::new();
        let mut globals = HashMap::new();
        let mut host = Vec::new();
        let mut fcp = HashMap::new();
        let mut base = NULL_GUARD;
        let mut entry = None;
        for (i, img) in images.iter().enumerate() {
            img.check()?;
            let end = base + img.mapped_size();
            if end > stack_limit {
                return Err(LoadError::OutOfMemory {
                    needed: end - NULL_GUARD,
                    available: stack_limit - NULL_GUARD,
                });
            }
            mem.write_bytes(base, &img.code).expect("image fits");
            mem.write_bytes(base + img.data_offset(), &img.data).expect("image fits");
            let mut symbols = HashMap::new();
            for s in &img.symbols {
                symbols.insert(s.name.clone(), (base + s.offset, s.kind));
                globals.entry(s.name.clone()).or_insert((base + s.offset, s.kind));
            }
            if entry.is_none() {
                entry = img.entry.map(|e| base + e);
            }
            let mode = if img.host.native { HostMode::Native } else { HostMode::Offload };
            let host_base = host.len() as u32;
            let mut entries: Vec<_> = img.host.entries.iter().collect();
            entries.sort_by_key(|e| e.offload_id);
            for e in entries {
                let func = compile_host(&e.body, mode).map_err(|err| LoadError::Host {
                    image: i,
                    function: e.name.clone(),
                    message: err.to_string(),
                })?;
                host.push(HostSlot {
                    func: Arc::new(func),
                    image: i,
                    native: mode == HostMode::Native,
                });
            }
            for (&off, &id) in &img.stub_index {
                fcp.insert(base + off, host_base + id);
            }
            loaded.push(LoadedImage {
                base,
                code_end: base + img.code.len() as u64,
                host_base,
                host_count: img.host.entries.len() as u32,
                decoded: interp::decode_all(&img.code),
                symbols,
            });
            base = end.next_multiple_of(PAGE);
        }
        let mut rt = Runtime {
            mem,
            regs: [0; NUM_REGS],
            pc: 0,
            contexts: Vec::new(),
            grt: GlobalReferenceTable::with_capacity(host.len()),
            images: loaded,
            globals,
            host,
            fcp,
            counters: EventCounters::default(),
            output: Vec::new(),
            budget: if config.budget == 0 { u64::MAX } else { config.budget },
            config,
            next_sentinel: 0,
            host_stack: Vec::new(),
            max_depth: 0,
            stack_top,
            stack_limit,
            entry,
            cur_code: (0, 0, 0),
        };
        for (i, img) in images.iter().enumerate() {
            for f in &img.fixups {
                let addr = rt.lookup(i, &f.symbol, RefKind::Function).ok_or_else(|| LinkError {
                    function: format!("<image {i}>"),
                    name: f.symbol.clone(),
                    kind: RefKind::Function,
                })?;
                let slot = rt.images[i].base + f.slot;
                rt.mem.write_u64(slot, addr).expect("slot inside image");
            }
        }
        // Surface unresolved references now rather than at the first call.
        let specs: Vec<(String, usize, Vec<RefSpec>)> =
            rt.host.iter().map(|h| (h.func.name.clone(), h.image, h.func.refs.clone())).collect();
        for (name, image, refs) in &specs {
            build_grt([(name.as_str(), refs.as_slice())], |n, k| rt.lookup(*image, n, k))?;
        }
        Ok(rt)
    }

    /// Resolves `name` as seen from image `from`: its own symbols first,
    /// then the first image that defines it.
    fn lookup(&self, from: usize, name: &str, kind: RefKind) -> Option<u64> {
        let want = match kind {
            RefKind::Data => SymbolKind::Data,
            RefKind::Function => SymbolKind::Func,
        };
        self.images[from]
            .symbols
            .get(name)
            .or_else(|| self.globals.get(name))
            .filter(|(_, k)| *k == want)
            .map(|(a, _)| *a)
    }

    /// Absolute address of a symbol, searching images in load order.
    pub fn symbol_address(&self, name: &str) -> Option<u64> {
        self.globals.get(name).map(|(a, _)| *a)
    }

    pub fn memory(&self) -> &Memory {
        &self.mem
    }

    pub fn memory_mut(&mut self) -> &mut Memory {
        &mut self.mem
    }

    pub fn counters(&self) -> EventCounters {
        self.counters
    }

    pub fn context_depth(&self) -> usize {
        self.contexts.len()
    }

    pub fn output(&self) -> &[u8] {
        &self.output
    }

    pub fn stack_top(&self) -> u64 {
        self.stack_top
    }

    fn new_sentinel(&mut self) -> u64 {
        let s = SENTINEL_BASE + 8 * self.next_sentinel;
        self.next_sentinel += 1;
        s
    }

    /// Runs the entry function with `args` in r1.. and returns the outcome.
    /// A fault ends the run with a nonzero exit code; the runtime itself
    /// stays usable.
    pub fn run(&mut self, args: &[i64]) -> Result<RunOutcome, LoadError> {
        let entry = self.entry.ok_or(LoadError::NoEntry)?;
        let start = Instant::now();
        self.regs = [0; NUM_REGS];
        self.regs[SP as usize] = self.stack_top;
        let initial_sp = self.stack_top;
        let sentinel = self.new_sentinel();
        self.contexts.push(EmulationContext {
            saved_regs: self.regs,
            saved_pc: 0,
            sentinel,
            owner: Owner::Program,
        });
        self.max_depth = 1;
        self.counters = EventCounters::default();
        self.regs[LR as usize] = sentinel;
        for (k, a) in args.iter().take(6).enumerate() {
            self.regs[ARG0 as usize + k] = *a as u64;
        }
        let native_entry = self.fcp.get(&entry).copied().filter(|&id| self.is_native(id));
        let result = match native_entry {
            Some(id) => {
                let sig = self.host[id as usize].func.sig.clone();
                let vals: Vec<Value> = sig
                    .params
                    .iter()
                    .enumerate()
                    .map(|(k, t)| Value::from_bits(t, args.get(k).copied().unwrap_or(0) as u64))
                    .collect();
                self.invoke_host(id, &vals).map(|v| v.bits() as i64)
            }
            None => {
                self.pc = entry;
                self.emulate(sentinel).map(|()| self.regs[0] as i64)
            }
        };
        let final_depth = self.contexts.len();
        let final_sp = self.regs[SP as usize];
        self.contexts.pop();
        let (exit_code, fault) = match result {
            Ok(code) => (code, None),
            Err(Trap::Exit(code)) => (code, None),
            Err(Trap::Fault(f)) => (f.exit_code(), Some(f)),
        };
        Ok(RunOutcome {
            exit_code,
            output: std::mem::take(&mut self.output),
            counters: self.counters,
            wall: start.elapsed(),
            fault,
            final_depth,
            max_depth: self.max_depth,
            initial_sp,
            final_sp,
        })
    }

    fn is_native(&self, id: u32) -> bool {
        self.host[id as usize].native
    }

    /// Runs host function `id`: resolves its references through the GRT (or
    /// freshly when the GRT is off) and evaluates the body.
    fn invoke_host(&mut self, id: u32, args: &[Value]) -> Result<Value, Trap> {
        if self.host_stack.len() as u32 >= self.config.host_depth {
            return Err(GuestFault::host(FaultKind::HostRecursion).into());
        }
        let slot = &self.host[id as usize];
        let func = slot.func.clone();
        let image = slot.image;
        let refs: Arc<[u64]> = match self.config.flags.grt {
            true => match self.grt.get(id as usize) {
                Some(row) => row.clone(),
                None => {
                    let row = self.construct_refs(&func, image);
                    self.grt.insert(id as usize, row)
                }
            },
            false => self.construct_refs(&func, image).iter().map(|r| r.address).collect(),
        };
        self.host_stack.push(id);
        let r = func.invoke(self, &refs, args);
        self.host_stack.pop();
        r
    }

    fn construct_refs(&mut self, func: &HostFunction, image: usize) -> Vec<crate::host::grt::GlobalRef> {
        self.counters.grt_constructions += 1;
        resolve(&func.name, &func.refs, |n, k| self.lookup(image, n, k)).expect("references checked at load")
    }

    /// Services `HCALL 2`: unpacks the descriptor at `desc`, runs the host
    /// function and writes its result back into the descriptor.
    fn trampoline_in(&mut self, desc: u64, image: usize) -> Result<(), Trap> {
        use crate::guest::stub::{DESC_ARGC, DESC_ARGS, DESC_ID, DESC_RESULT};
        let local = self.mem.read_u64(desc + DESC_ID)?;
        let img = &self.images[image];
        if local >= img.host_count as u64 {
            return Err(GuestFault::host(FaultKind::UnknownOffload { id: local }).into());
        }
        let id = img.host_base + local as u32;
        let argc = self.mem.read_u64(desc + DESC_ARGC)?;
        let func = self.host[id as usize].func.clone();
        if argc != func.sig.params.len() as u64 {
            return Err(GuestFault::host(FaultKind::UnknownOffload { id: local }).into());
        }
        let mut args = Vec::with_capacity(argc as usize);
        for (k, t) in func.sig.params.iter().enumerate() {
            args.push(Value::from_bits(t, self.mem.read_u64(desc + DESC_ARGS + 8 * k as u64)?));
        }
        self.counters.guest_to_host_calls += 1;
        let v = self.invoke_host(id, &args)?;
        self.mem.write_u64(desc + DESC_RESULT, v.bits())?;
        Ok(())
    }

    /// Calls the guest function at `target` from host code: saves the
    /// interrupted guest state, builds a frame below it, runs the interpreter
    /// until the callee returns to a fresh sentinel, and restores the state.
    pub fn reenter_emulation(&mut self, target: u64, args: &[Value], sig: &Signature) -> Result<Value, Trap> {
        let thunk = make_reverse_stub(target, sig);
        let ga = thunk.marshal(args);
        let base = self.regs[SP as usize].wrapping_sub(CALLBACK_RED_ZONE) & !15;
        let new_sp = base.wrapping_sub(8 * ga.stack.len() as u64);
        if base > self.regs[SP as usize] || new_sp < self.stack_limit + CALLBACK_HEADROOM {
            return Err(GuestFault::host(FaultKind::StackOverflow).into());
        }
        self.counters.host_to_guest_callbacks += 1;
        let sentinel = self.new_sentinel();
        let owner = self.host_stack.last().map_or(Owner::Program, |&id| Owner::Callback(id));
        self.contexts.push(EmulationContext {
            saved_regs: self.regs,
            saved_pc: self.pc,
            sentinel,
            owner,
        });
        self.max_depth = self.max_depth.max(self.contexts.len());
        for (k, v) in ga.stack.iter().enumerate() {
            self.mem.write_u64(new_sp + 8 * k as u64, *v)?;
        }
        for &(r, v) in &ga.regs {
            self.regs[r as usize] = v;
        }
        self.regs[SP as usize] = new_sp;
        self.regs[LR as usize] = sentinel;
        self.pc = target;
        let r = self.emulate(sentinel);
        let r0 = self.regs[0];
        let ctx = self.contexts.pop().expect("context pushed above");
        self.regs = ctx.saved_regs;
        self.pc = ctx.saved_pc;
        r?;
        Ok(thunk.unmarshal(r0))
    }

    /// Routes a call made by host code. Offloaded targets run directly when
    /// FCP is on; everything else goes back through the guest.
    pub fn dispatch_outcall(&mut self, target: u64, args: &[Value], sig: &Signature) -> Result<Value, Trap> {
        if self.config.flags.fcp {
            if let Some(&id) = self.fcp.get(&target) {
                self.counters.fcp_direct_calls += 1;
                return self.invoke_host(id, args);
            }
        }
        self.reenter_emulation(target, args, sig)
    }
}

/// Stack for the thread that runs a program. Host calls and callbacks nest
/// on the native stack, so deep guest/host recursion needs room.
pub const RUN_THREAD_STACK: usize = 512 << 20;

/// Loads `images` and runs the program on a dedicated large-stack thread.
pub fn run_images(images: &[&GuestImage], config: RunConfig, args: &[i64]) -> Result<RunOutcome, LoadError> {
    let mut rt = Runtime::load(images, config)?;
    let args = args.to_vec();
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(RUN_THREAD_STACK)
            .spawn_scoped(s, move || rt.run(&args))
            .expect("spawn run thread")
            .join()
            .expect("run thread panicked")
    })
}

impl HostEnv for Runtime {
    #[inline]
    fn load(&mut self, addr: u64) -> Result<u64, GuestFault> {
        self.mem.read_u64(addr)
    }

    #[inline]
    fn store(&mut self, addr: u64, value: u64) -> Result<(), GuestFault> {
        self.mem.write_u64(addr, value)
    }

    fn out_call(&mut self, target: u64, args: &[Value], sig: &Signature) -> Result<Value, Trap> {
        self.dispatch_outcall(target, args, sig)
    }

    fn print(&mut self, format: &str, args: &[u64]) -> Result<(), Trap> {
        crate::printf::render(format, args, &mut self.output);
        Ok(())
    }
}

#[cfg(test)]
mod tests;
