//! Artifact store: one directory per run holding checkpoints, crafted
//! example caches, reports, and exports. Every artifact carries the
//! producing config hash; rerunning a completed stage without --force
//! is a byte-exact no-op.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub struct ArtifactStore {
    pub run_dir: PathBuf,
    pub config: ExperimentConfig,
    pub config_hash: String,
    lock_path: PathBuf,
    locked: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
}

impl ArtifactStore {
    /// Open (creating if needed) the run directory and take the lock.
    pub fn open(root: &Path, run_name: &str, config: ExperimentConfig) -> Result<Self> {
        let run_dir = root.join("runs").join(run_name);
        std::fs::create_dir_all(&run_dir)?;
        let config_hash = config.canonical_hash();

        let config_path = run_dir.join("config.json");
        if config_path.exists() {
            let existing: ExperimentConfig = serde_json::from_slice(&std::fs::read(&config_path)?)?;
            let existing_hash = existing.canonical_hash();
            if existing_hash != config_hash {
                return Err(CliError::Validation(format!(
                    "run `{run_name}` was produced by config {existing_hash}, not {config_hash}; \
                     use a fresh run directory or --force to overwrite artifacts"
                )));
            }
        } else {
            std::fs::write(&config_path, serde_json::to_vec_pretty(&config)?)?;
        }

        let lock_path = run_dir.join("lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
        {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::Locked(format!(
                    "{} exists; another command owns this run",
                    lock_path.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            run_dir,
            config,
            config_hash,
            lock_path,
            locked: true,
        })
    }

    pub fn classifier_dir(&self) -> PathBuf {
        self.run_dir.join("checkpoints").join("classifier")
    }

    pub fn detector_dir(&self, attack_id: &str) -> PathBuf {
        self.run_dir
            .join("checkpoints")
            .join(format!("detector-{attack_id}"))
    }

    pub fn adv_dir(&self, attack_id: &str, split: &str) -> PathBuf {
        self.run_dir
            .join("adv_cache")
            .join(format!("{attack_id}-{split}"))
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.run_dir.join("reports").join(format!("{name}.json"))
    }

    pub fn export_dir(&self, name: &str) -> PathBuf {
        self.run_dir.join("exports").join(name)
    }

    pub fn history_path(&self, name: &str) -> PathBuf {
        self.run_dir.join("history").join(format!("{name}.jsonl"))
    }

    /// An artifact directory is complete when its stage manifest matches
    /// this config.
    pub fn stage_done(&self, dir: &Path) -> bool {
        let p = dir.join("stage.json");
        match std::fs::read(&p) {
            Ok(bytes) => serde_json::from_slice::<StageManifest>(&bytes)
                .map(|m| m.config_hash == self.config_hash)
                .unwrap_or(false),
            Err(_) => false,
        }
    }

    pub fn mark_stage(&self, dir: &Path, stage: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = StageManifest {
            stage: stage.to_string(),
            config_hash: self.config_hash.clone(),
        };
        std::fs::write(dir.join("stage.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    /// Report files carry the stage marker inline next to them.
    pub fn report_done(&self, name: &str) -> bool {
        let p = self.report_path(name);
        p.exists() && self.stage_done(&p.parent().unwrap().join(format!("{name}.stage")))
    }

    pub fn write_report<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let p = self.report_path(name);
        std::fs::create_dir_all(p.parent().unwrap())?;
        std::fs::write(&p, serde_json::to_vec_pretty(value)?)?;
        self.mark_stage(&p.parent().unwrap().join(format!("{name}.stage")), name)?;
        Ok(())
    }

    pub fn read_report<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<T> {
        Ok(serde_json::from_slice(&std::fs::read(self.report_path(name))?)?)
    }

    pub fn write_history<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.history_path(name);
        std::fs::create_dir_all(p.parent().unwrap())?;
        let mut out = String::new();
        for row in rows {
            out.push_str(&serde_json::to_string(row)?);
            out.push('\n');
        }
        std::fs::write(&p, out)?;
        Ok(())
    }

    pub fn require(&self, dir: &Path, produced_by: &str) -> Result<()> {
        if !self.stage_done(dir) {
            return Err(CliError::MissingArtifact(format!(
                "{} is missing or stale; run `{produced_by}` first",
                dir.display()
            )));
        }
        Ok(())
    }
}

impl Drop for ArtifactStore {
    fn drop(&mut self) {
        if self.locked {
            let _ = std::fs::remove_file(&self.lock_path);
        }
    }
}

/// Store root: --out flag, then FEATSENT_STORE, then ./featsent-store.
pub fn resolve_root(out: Option<&Path>) -> PathBuf {
    if let Some(p) = out {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var("FEATSENT_STORE") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("featsent-store")
}
