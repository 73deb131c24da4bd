//! Global references of host functions and the table that caches their
//! resolution.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::ir::{Callee, FunctionIR, Inst};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RefKind {
    Data,
    Function,
}

/// A name a host body needs as a guest address.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RefSpec {
    pub name: String,
    pub kind: RefKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalRef {
    pub name: String,
    pub kind: RefKind,
    pub address: u64,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("link error: `{function}` references unresolved {kind:?} symbol `{name}`")]
pub struct LinkError {
    pub function: String,
    pub name: String,
    pub kind: RefKind,
}

/// Every global and function a body names, once each, in order of first use.
pub fn references(f: &FunctionIR) -> Vec<RefSpec> {
    let mut out: Vec<RefSpec> = Vec::new();
    for (_, inst) in f.sites() {
        let spec = match inst {
            Inst::GlobalAddr { name, .. } => (name, RefKind::Data),
            Inst::FuncAddr { name, .. }
            | Inst::Call {
                callee: Callee::Direct(name),
                ..
            } => (name, RefKind::Function),
            _ => continue,
        };
        if !out.iter().any(|r| r.name == *spec.0) {
            out.push(RefSpec {
                name: spec.0.clone(),
                kind: spec.1,
            });
        }
    }
    out
}

/// Resolves a reference list to guest addresses, in list order.
pub fn resolve(
    function: &str,
    refs: &[RefSpec],
    lookup: impl Fn(&str, RefKind) -> Option<u64>,
) -> Result<Vec<GlobalRef>, LinkError> {
    refs.iter()
        .map(|r| {
            let address = lookup(&r.name, r.kind).ok_or_else(|| LinkError {
                function: function.to_string(),
                name: r.name.clone(),
                kind: r.kind,
            })?;
            Ok(GlobalRef {
                name: r.name.clone(),
                kind: r.kind,
                address,
            })
        })
        .collect()
}

/// Per-host-function resolved addresses. Rows are filled at most once.
#[derive(Clone, Debug, Default)]
pub struct GlobalReferenceTable {
    rows: Vec<Option<Arc<[u64]>>>,
}

impl GlobalReferenceTable {
    pub fn with_capacity(functions: usize) -> Self {
        GlobalReferenceTable {
            rows: vec![None; functions],
        }
    }

    pub fn get(&self, id: usize) -> Option<&Arc<[u64]>> {
        self.rows.get(id).and_then(Option::as_ref)
    }

    pub fn insert(&mut self, id: usize, row: Vec<GlobalRef>) -> Arc<[u64]> {
        let row: Arc<[u64]> = row.iter().map(|r| r.address).collect();
        self.rows[id] = Some(row.clone());
        row
    }

    /// Number of materialised rows.
    pub fn filled(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Resolves every row up front. Used to surface unresolved names at load
/// time; the runtime itself fills rows on first use.
pub fn build_grt<'a>(
    functions: impl IntoIterator<Item = (&'a str, &'a [RefSpec])>,
    lookup: impl Fn(&str, RefKind) -> Option<u64>,
) -> Result<GlobalReferenceTable, LinkError> {
    let mut rows = Vec::new();
    for (name, refs) in functions {
        let row = resolve(name, refs, &lookup)?;
        rows.push(Some(row.iter().map(|r| r.address).collect()));
    }
    Ok(GlobalReferenceTable { rows })
}
