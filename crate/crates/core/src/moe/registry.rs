use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GateError;
use crate::channel::{CarrierBand, Environment, Mobility, ScenarioClass};

pub const DEFAULT_EXPERT_IDS: [&str; 4] = ["los-low", "los-high", "nlos-low", "nlos-high"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertDescriptor {
    pub id: String,
    pub coverage: BTreeSet<ScenarioClass>,
    pub checkpoint: PathBuf,
}

/// Immutable set of experts with unique ids, kept in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegistryFile", into = "RegistryFile")]
pub struct ExpertRegistry {
    experts: Vec<ExpertDescriptor>,
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    #[serde(default, rename = "expert")]
    experts: Vec<ExpertDescriptor>,
}

impl TryFrom<RegistryFile> for ExpertRegistry {
    type Error = GateError;

    fn try_from(f: RegistryFile) -> Result<Self, GateError> {
        ExpertRegistry::new(f.experts)
    }
}

impl From<ExpertRegistry> for RegistryFile {
    fn from(r: ExpertRegistry) -> Self {
        RegistryFile { experts: r.experts }
    }
}

impl ExpertRegistry {
    /// Ids must be unique (ignoring case), non-empty and free of whitespace;
    /// every expert must cover at least one class.
    pub fn new(experts: Vec<ExpertDescriptor>) -> Result<Self, GateError> {
        let mut seen = BTreeSet::new();
        for e in &experts {
            if e.id.is_empty() || e.id.chars().any(char::is_whitespace) {
                return Err(GateError::Registry(format!("bad expert id `{}`", e.id)));
            }
            if !seen.insert(e.id.to_ascii_lowercase()) {
                return Err(GateError::Registry(format!("duplicate expert id `{}`", e.id)));
            }
            if e.coverage.is_empty() {
                return Err(GateError::Registry(format!("expert `{}` covers no scenario", e.id)));
            }
        }
        Ok(Self { experts })
    }

    /// One expert per (environment, band) pair, all mobilities folded in.
    /// Checkpoints are `<dir>/<id>.ckpt`.
    pub fn default_four(checkpoint_dir: &Path) -> Self {
        let mut experts = Vec::new();
        for env in Environment::ALL {
            for band in CarrierBand::ALL {
                let id = format!("{}-{}", env.key(), band.key());
                experts.push(ExpertDescriptor {
                    coverage: Mobility::ALL.iter().map(|&m| ScenarioClass::new(env, band, m)).collect(),
                    checkpoint: checkpoint_dir.join(format!("{id}.ckpt")),
                    id,
                });
            }
        }
        Self::new(experts).expect("default registry is valid")
    }

    /// A single expert covering every class.
    pub fn single(id: &str, checkpoint: PathBuf) -> Self {
        Self::new(vec![ExpertDescriptor {
            id: id.to_string(),
            coverage: ScenarioClass::all().into_iter().collect(),
            checkpoint,
        }])
        .expect("single-expert registry is valid")
    }

    pub fn experts(&self) -> &[ExpertDescriptor] {
        &self.experts
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ExpertDescriptor> {
        self.experts.iter().find(|e| e.id == id)
    }

    /// Case-insensitive lookup.
    pub fn find(&self, id: &str) -> Option<&ExpertDescriptor> {
        self.experts.iter().find(|e| e.id.eq_ignore_ascii_case(id))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    /// First expert covering `class`, in registry order.
    pub fn covering(&self, class: ScenarioClass) -> Option<&ExpertDescriptor> {
        self.experts.iter().find(|e| e.coverage.contains(&class))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("registry serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self, GateError> {
        toml::from_str(text).map_err(|e| GateError::Registry(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), GateError> {
        fs::write(path, self.to_toml()).map_err(|e| GateError::RegistryFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Loads a registry file. Relative checkpoint paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, GateError> {
        let err = |message: String| GateError::RegistryFile {
            path: path.to_path_buf(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut reg = Self::from_toml(&text).map_err(|e| err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut reg.experts {
            if e.checkpoint.is_relative() {
                e.checkpoint = base.join(&e.checkpoint);
            }
        }
        Ok(reg)
    }
}
