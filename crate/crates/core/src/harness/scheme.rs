use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::guest::LinkMode;
use crate::runtime::RuntimeFlags;

/// A named execution configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Every function runs as host code.
    Native,
    /// Every function is interpreted.
    Emulate,
    Hybrid { grt: bool, fcp: bool, pfo: bool },
}

impl Scheme {
    pub const BASE: Scheme = Scheme::Hybrid {
        grt: false,
        fcp: false,
        pfo: false,
    };
    pub const G: Scheme = Scheme::Hybrid {
        grt: true,
        fcp: false,
        pfo: false,
    };
    pub const GF: Scheme = Scheme::Hybrid {
        grt: true,
        fcp: true,
        pfo: false,
    };
    pub const GFP: Scheme = Scheme::Hybrid {
        grt: true,
        fcp: true,
        pfo: true,
    };

    /// The evaluation matrix, in report order.
    pub const ALL: [Scheme; 6] = [Scheme::Native, Scheme::Emulate, Scheme::BASE, Scheme::G, Scheme::GF, Scheme::GFP];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Native => "native",
            Scheme::Emulate => "qemu-like",
            Scheme::Hybrid { grt, fcp, pfo } => match (grt, fcp, pfo) {
                (false, false, false) => "base",
                (true, false, false) => "g",
                (true, true, false) => "gf",
                (true, true, true) => "gfp",
                (false, true, false) => "f",
                (false, false, true) => "p",
                (true, false, true) => "gp",
                (false, true, true) => "fp",
            },
        }
    }

    pub fn link_mode(self) -> LinkMode {
        match self {
            Scheme::Native => LinkMode::Native,
            Scheme::Emulate => LinkMode::Emulate,
            Scheme::Hybrid { .. } => LinkMode::Hybrid,
        }
    }

    pub fn flags(self) -> RuntimeFlags {
        match self {
            Scheme::Native => RuntimeFlags { grt: true, fcp: true },
            Scheme::Emulate => RuntimeFlags { grt: false, fcp: false },
            Scheme::Hybrid { grt, fcp, .. } => RuntimeFlags { grt, fcp },
        }
    }

    pub fn pfo(self) -> bool {
        matches!(self, Scheme::Hybrid { pfo: true, .. })
    }

    /// Position in [`Scheme::ALL`], used for stable report ordering.
    pub fn rank(self) -> usize {
        Scheme::ALL.iter().position(|&s| s == self).unwrap_or(Scheme::ALL.len())
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "native" => return Ok(Scheme::Native),
            "qemu-like" | "emulate" => return Ok(Scheme::Emulate),
            "base" | "hybrid" => return Ok(Scheme::BASE),
            _ => {}
        }
        let (mut grt, mut fcp, mut pfo) = (false, false, false);
        for c in s.chars() {
            let flag = match c {
                'g' => &mut grt,
                'f' => &mut fcp,
                'p' => &mut pfo,
                _ => return Err(format!("unknown scheme `{s}`")),
            };
            if std::mem::replace(flag, true) {
                return Err(format!("unknown scheme `{s}`"));
            }
        }
        if s.is_empty() {
            return Err("empty scheme name".into());
        }
        Ok(Scheme::Hybrid { grt, fcp, pfo })
    }
}

/// Parses a comma-separated scheme list; `all` expands to the full matrix.
pub fn parse_schemes(list: &str) -> Result<Vec<Scheme>, String> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "all" {
            out.extend(Scheme::ALL);
        } else {
            out.push(part.parse()?);
        }
    }
    out.sort_by_key(|s| s.rank());
    out.dedup();
    if out.is_empty() {
        return Err("no schemes selected".into());
    }
    Ok(out)
}
