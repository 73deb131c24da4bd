//! Linked guest image and its on-disk container.
//!
//! Layout of a serialized image (all integers little endian):
//!
//! ```text
//! "HVM1" code_size:u32 data_size:u32 entry:u64 symbol_count:u32
//! flags:u32 bss_size:u32 stub_count:u32 fixup_count:u32
//! code bytes, data bytes
//! symbols  { kind:u8 offset:u64 size:u64 name_len:u16 name }
//! stubs    { offset:u64 offload_id:u32 }
//! fixups   { slot:u64 name_len:u16 name }
//! "HOST" len:u32 JSON-encoded host section
//! ```
//!
//! Addresses stored in an image are offsets from its load base. `entry` is
//! `u64::MAX` for images without an entry point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::lower::LoweringError;
use crate::frontend::ir::{FunctionIR, Signature};
use crate::host::grt::RefSpec;

pub const MAGIC: &[u8; 4] = b"HVM1";
pub const HOST_MAGIC: &[u8; 4] = b"HOST";
/// Per-segment size cap.
pub const MAX_SEGMENT: u64 = 16 << 20;

const FLAG_LIBRARY: u32 = 1;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("{segment} segment of {size} bytes exceeds the {MAX_SEGMENT}-byte limit")]
    SegmentOverflow { segment: &'static str, size: u64 },
    #[error("stub for `{function}` would take {arity} arguments; the limit is 64")]
    TooManyArguments { function: String, arity: usize },
    #[error("entry function `{0}` is not defined")]
    MissingEntry(String),
    #[error(transparent)]
    Lowering(#[from] LoweringError),
    #[error("host compilation of `{function}` failed: {message}")]
    Host { function: String, message: String },
    #[error("malformed image: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymbolKind {
    Func,
    Data,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Symbol {
    pub name: String,
    pub kind: SymbolKind,
    pub offset: u64,
    pub size: u64,
}

/// A data word the loader fills with the absolute address of `symbol`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fixup {
    pub slot: u64,
    pub symbol: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HostEntry {
    pub offload_id: u32,
    pub name: String,
    pub sig: Signature,
    pub body: FunctionIR,
    pub refs: Vec<RefSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HostSection {
    /// Bodies may contain guest-bound instructions, serviced directly by the
    /// host. Set only for native-scheme images.
    pub native: bool,
    pub entries: Vec<HostEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuestImage {
    pub library: bool,
    pub code: Vec<u8>,
    pub data: Vec<u8>,
    pub bss_size: u64,
    pub entry: Option<u64>,
    pub symbols: Vec<Symbol>,
    /// Stub offset to image-local offload id.
    pub stub_index: BTreeMap<u64, u32>,
    pub fixups: Vec<Fixup>,
    pub host: HostSection,
}

impl GuestImage {
    pub fn data_offset(&self) -> u64 {
        self.code.len() as u64
    }

    /// Bytes of memory the image occupies once loaded.
    pub fn mapped_size(&self) -> u64 {
        (self.code.len() + self.data.len()) as u64 + self.bss_size
    }

    pub fn symbol(&self, name: &str) -> Option<&Symbol> {
        self.symbols.iter().find(|s| s.name == name)
    }

    /// Checks the structural invariants a loader relies on.
    pub fn check(&self) -> Result<(), ImageError> {
        let bad = |m: String| Err(ImageError::Malformed(m));
        if !self.code.len().is_multiple_of(8) || !self.data.len().is_multiple_of(8) {
            return bad("segments must be 8-byte aligned".into());
        }
        for (seg, size) in [("code", self.code.len() as u64), ("data", self.data.len() as u64), ("bss", self.bss_size)] {
            if size > MAX_SEGMENT {
                return Err(ImageError::SegmentOverflow { segment: seg, size });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.symbols {
            if !seen.insert(s.name.as_str()) {
                return Err(ImageError::DuplicateSymbol(s.name.clone()));
            }
            let (lo, hi) = match s.kind {
                SymbolKind::Func => (0, self.data_offset()),
                SymbolKind::Data => (self.data_offset(), self.mapped_size()),
            };
            if s.offset < lo || s.offset + s.size > hi {
                return bad(format!("symbol `{}` lies outside its segment", s.name));
            }
        }
        if let Some(e) = self.entry {
            if e >= self.data_offset() || e % 8 != 0 {
                return bad("entry outside code".into());
            }
        }
        for &off in self.stub_index.keys() {
            if off >= self.data_offset() || off % 8 != 0 {
                return bad(format!("stub at {off:#x} outside code"));
            }
        }
        for f in &self.fixups {
            if f.slot < self.data_offset() || f.slot + 8 > self.data_offset() + self.data.len() as u64 {
                return bad(format!("fixup slot for `{}` outside data", f.symbol));
            }
        }
        let mut ids: Vec<u32> = self.host.entries.iter().map(|e| e.offload_id).collect();
        ids.sort_unstable();
        if ids.iter().enumerate().any(|(i, &id)| id != i as u32) {
            return bad("offload ids must be dense".into());
        }
        if self.stub_index.values().any(|&id| id as usize >= ids.len()) {
            return bad("stub refers to a missing host entry".into());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.code.len() + self.data.len());
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.code.len() as u32);
        put_u32(&mut out, self.data.len() as u32);
        put_u64(&mut out, self.entry.unwrap_or(u64::MAX));
        put_u32(&mut out, self.symbols.len() as u32);
        put_u32(&mut out, if self.library { FLAG_LIBRARY } else { 0 });
        put_u32(&mut out, self.bss_size as u32);
        put_u32(&mut out, self.stub_index.len() as u32);
        put_u32(&mut out, self.fixups.len() as u32);
        out.extend_from_slice(&self.code);
        out.extend_from_slice(&self.data);
        for s in &self.symbols {
            out.push(match s.kind {
                SymbolKind::Func => 0,
                SymbolKind::Data => 1,
            });
            put_u64(&mut out, s.offset);
            put_u64(&mut out, s.size);
            put_str(&mut out, &s.name);
        }
        for (&off, &id) in &self.stub_index {
            put_u64(&mut out, off);
            put_u32(&mut out, id);
        }
        for f in &self.fixups {
            put_u64(&mut out, f.slot);
            put_str(&mut out, &f.symbol);
        }
        let host = serde_json::to_vec(&self.host).expect("host section serializes");
        out.extend_from_slice(HOST_MAGIC);
        put_u32(&mut out, host.len() as u32);
        out.extend_from_slice(&host);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<GuestImage, ImageError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ImageError::Malformed("bad magic".into()));
        }
        let code_size = r.u32()? as usize;
        let data_size = r.u32()? as usize;
        let entry = r.u64()?;
        let nsyms = r.u32()?;
        let flags = r.u32()?;
        let bss_size = r.u32()? as u64;
        let nstubs = r.u32()?;
        let nfixups = r.u32()?;
        let code = r.take(code_size)?.to_vec();
        let data = r.take(data_size)?.to_vec();
        let mut symbols = Vec::new();
        for _ in 0..nsyms {
            let kind = match r.take(1)?[0] {
                0 => SymbolKind::Func,
                1 => SymbolKind::Data,
                k => return Err(ImageError::Malformed(format!("bad symbol kind {k}"))),
            };
            let offset = r.u64()?;
            let size = r.u64()?;
            let name = r.string()?;
            symbols.push(Symbol { name, kind, offset, size });
        }
        let mut stub_index = BTreeMap::new();
        for _ in 0..nstubs {
            let off = r.u64()?;
            stub_index.insert(off, r.u32()?);
        }
        let mut fixups = Vec::new();
        for _ in 0..nfixups {
            let slot = r.u64()?;
            fixups.push(Fixup { slot, symbol: r.string()? });
        }
        if r.take(4)? != HOST_MAGIC {
            return Err(ImageError::Malformed("missing HOST section".into()));
        }
        let len = r.u32()? as usize;
        let host = serde_json::from_slice(r.take(len)?).map_err(|e| ImageError::Malformed(format!("HOST section: {e}")))?;
        if r.pos != bytes.len() {
            return Err(ImageError::Malformed("trailing bytes".into()));
        }
        let image = GuestImage {
            library: flags & FLAG_LIBRARY != 0,
            code,
            data,
            bss_size,
            entry: (entry != u64::MAX).then_some(entry),
            symbols,
            stub_index,
            fixups,
            host,
        };
        image.check()?;
        Ok(image)
    }

    /// SHA-256 of the serialized image, as lowercase hex.
    pub fn digest(&self) -> String {
        hex_digest(&self.to_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ImageError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ImageError::Malformed("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ImageError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ImageError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, ImageError> {
        let n = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ImageError::Malformed("symbol name is not UTF-8".into()))
    }
}
