use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::analyzer::Thresholds;

pub const MANIFEST: &str = "workload.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    ComputeHeavy,
    ShortFunctionHeavy,
    CallbackHeavy,
    LibraryScenario,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub name: String,
    pub sources: Vec<PathBuf>,
}

/// `workload.toml`. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub name: String,
    pub category: Category,
    pub app: Vec<PathBuf>,
    #[serde(default, rename = "lib")]
    pub libs: Vec<LibrarySpec>,
    #[serde(default)]
    pub args: Vec<i64>,
    /// File holding the exact expected program output.
    pub expected: Option<PathBuf>,
    #[serde(default)]
    pub exit_code: i64,
    /// Offload size filter as `I,B`; the analyzer default when absent.
    pub thresholds: Option<String>,
    #[serde(skip)]
    pub dir: PathBuf,
}

impl WorkloadSpec {
    pub fn load(dir: &Path) -> Result<WorkloadSpec, HarnessError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let mut spec: WorkloadSpec = toml::from_str(&text).map_err(|e| HarnessError::Manifest {
            path: path.clone(),
            message: e.to_string(),
        })?;
        spec.dir = dir.to_path_buf();
        spec.thresholds()?;
        Ok(spec)
    }

    pub fn thresholds(&self) -> Result<Thresholds, HarnessError> {
        match &self.thresholds {
            None => Ok(Thresholds::default()),
            Some(t) => t.parse().map_err(|message| HarnessError::Manifest {
                path: self.dir.join(MANIFEST),
                message,
            }),
        }
    }

    fn read_all(&self, files: &[PathBuf]) -> Result<Vec<String>, HarnessError> {
        files
            .iter()
            .map(|f| {
                let p = self.dir.join(f);
                fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))
            })
            .collect()
    }

    pub fn app_sources(&self) -> Result<Vec<String>, HarnessError> {
        self.read_all(&self.app)
    }

    pub fn lib_sources(&self, lib: &LibrarySpec) -> Result<Vec<String>, HarnessError> {
        self.read_all(&lib.sources)
    }

    pub fn expected_output(&self) -> Result<Option<Vec<u8>>, HarnessError> {
        match &self.expected {
            None => Ok(None),
            Some(f) => {
                let p = self.dir.join(f);
                fs::read(&p).map(Some).map_err(|e| HarnessError::io(&p, e))
            }
        }
    }
}

/// A workload directory, or a directory of workload directories sorted by
/// name.
pub fn discover(dir: &Path) -> Result<Vec<WorkloadSpec>, HarnessError> {
    if dir.join(MANIFEST).is_file() {
        return Ok(vec![WorkloadSpec::load(dir)?]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST).is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| WorkloadSpec::load(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_parses() {
        let spec: WorkloadSpec = toml::from_str(
            r#"
name = "demo"
category = "library-scenario"
app = ["app.ml64"]
args = [3]
expected = "expected.out"
thresholds = "0,0"

[[lib]]
name = "sum"
sources = ["lib.ml64"]
"#,
        )
        .unwrap();
        assert_eq!(spec.category, Category::LibraryScenario);
        assert_eq!(spec.libs[0].name, "sum");
        assert_eq!(spec.thresholds().unwrap(), Thresholds::NONE);
        assert_eq!(spec.exit_code, 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: Result<WorkloadSpec, _> = toml::from_str("name = \"x\"\ncategory = \"compute-heavy\"\napp = []\nbogus = 1\n");
        assert!(r.is_err());
    }
}
