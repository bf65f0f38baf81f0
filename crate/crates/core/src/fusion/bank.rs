use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::checkpoint::{self, CheckpointMeta};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::optim::{ObjectiveKind, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneMode {
    None,
    Vanilla,
    Lora,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub objective: ObjectiveKind,
    pub rho: f64,
    pub source_dataset: String,
    pub parent: Option<String>,
    pub finetune: FinetuneMode,
    pub rank: usize,
    pub config_hash: String,
    /// Seconds since the epoch; honours `SOURCE_DATE_EPOCH` for reproducible output.
    pub created_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
}

impl Provenance {
    pub fn new(
        cfg: &TrainConfig,
        source_dataset: impl Into<String>,
        parent: Option<String>,
        finetune: FinetuneMode,
        rank: usize,
    ) -> Self {
        Self {
            objective: cfg.objective,
            rho: cfg.rho,
            source_dataset: source_dataset.into(),
            parent,
            finetune,
            rank,
            config_hash: cfg.hash(),
            created_unix: timestamp(),
            train_config: Some(cfg.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.finetune == FinetuneMode::Lora && self.rank == 0 {
            return Err(Error::InvalidConfig("LoRA provenance needs rank >= 1".into()));
        }
        Ok(())
    }
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Clone, Debug)]
pub struct NamedBackbone {
    pub name: String,
    pub model: Model,
    pub provenance: Provenance,
}

/// Where a simulated crash interrupts [`BackboneBank::put_with_fault`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultPoint {
    /// Checkpoint written to its temp file but never renamed.
    AfterTempWrite,
}

/// Directory of named checkpoints (`<name>.ffsc`) with JSON sidecars
/// (`<name>.json`). Writes go through a temp file and an atomic rename.
#[derive(Clone, Debug)]
pub struct BackboneBank {
    dir: PathBuf,
}

const EXT: &str = "ffsc";

fn validate_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if !ok {
        return Err(Error::InvalidConfig(format!("invalid bank entry name `{name}`")));
    }
    Ok(())
}

fn write_atomic(final_path: &Path, bytes: &[u8], fault: Option<FaultPoint>) -> Result<()> {
    let file_name = final_path
        .file_name()
        .expect("entry path has a file name")
        .to_string_lossy();
    let tmp = final_path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    if fault == Some(FaultPoint::AfterTempWrite) {
        return Err(Error::State(format!("simulated crash before renaming {}", tmp.display())));
    }
    fs::rename(&tmp, final_path).map_err(|e| Error::io(final_path, e))
}

impl BackboneBank {
    /// Opens (creating if needed) a bank directory.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn checkpoint_path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.{EXT}"))
    }

    fn sidecar_path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.json"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.checkpoint_path(name).is_file()
    }

    pub fn put(&self, name: &str, model: &Model, provenance: &Provenance) -> Result<()> {
        self.put_with_fault(name, model, provenance, None)
    }

    #[doc(hidden)]
    pub fn put_with_fault(
        &self,
        name: &str,
        model: &Model,
        provenance: &Provenance,
        fault: Option<FaultPoint>,
    ) -> Result<()> {
        validate_name(name)?;
        provenance.validate()?;
        if self.contains(name) {
            return Err(Error::DuplicateEntry(name.to_string()));
        }
        let bytes = checkpoint::encode(model, provenance);
        write_atomic(&self.checkpoint_path(name), &bytes, fault)?;
        let meta = CheckpointMeta {
            architecture: model.architecture(),
            provenance: provenance.clone(),
        };
        let mut sidecar = serde_json::to_vec_pretty(&meta).expect("plain struct");
        sidecar.push(b'\n');
        write_atomic(&self.sidecar_path(name), &sidecar, None)
    }

    pub fn get(&self, name: &str) -> Result<(Model, Provenance)> {
        validate_name(name)?;
        let path = self.checkpoint_path(name);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingEntry(name.to_string()))
            }
            Err(e) => return Err(Error::io(&path, e)),
        };
        checkpoint::decode(&bytes, &path)
    }

    /// Header metadata of an entry, without loading its parameters.
    pub fn inspect(&self, name: &str) -> Result<CheckpointMeta> {
        validate_name(name)?;
        let path = self.checkpoint_path(name);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingEntry(name.to_string()),
            _ => Error::io(&path, e),
        })?;
        checkpoint::decode_meta(&bytes, &path)
    }

    /// Entry names in lexicographic order.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut names = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))? {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some(EXT) {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if validate_name(stem).is_ok() {
                    names.push(stem.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn load_all(&self) -> Result<Vec<NamedBackbone>> {
        self.list()?
            .into_iter()
            .map(|name| {
                let (model, provenance) = self.get(&name)?;
                Ok(NamedBackbone {
                    name,
                    model,
                    provenance,
                })
            })
            .collect()
    }
}
