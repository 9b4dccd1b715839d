//! `train`: dataset container → checkpoints + training log.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use erpdiff_core::data::{load_epochs, split_train_val};
use erpdiff_core::diffusion::{write_training_log, Trainer};

use crate::config::RunConfig;

/// Exclusive ownership of a training output directory.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".erpdiff-train.lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "output directory {} is locked by another training run (remove {} if stale)",
                dir.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating lock {}", path.display())),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

pub fn run(
    config: Option<&Path>,
    data: &Path,
    steps: Option<u64>,
    eval_every: Option<u64>,
    out: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let mut train_section = cfg.train;
    if let Some(s) = steps {
        train_section.steps = s;
    }
    if let Some(e) = eval_every {
        train_section.eval_every = e;
    }
    if let Some(s) = seed {
        train_section.seed = s;
    }

    let _lock = DirLock::acquire(out)?;

    let set = load_epochs(data)
        .with_context(|| format!("loading dataset container {}", data.display()))?;
    if set.is_empty() {
        bail!("dataset {} holds no epochs", data.display());
    }
    let (train_set, val_set) = split_train_val(&set, train_section.val_fraction, train_section.seed)?;

    let model_cfg = cfg.model.clone().into_model_config(
        set.n_channels(),
        set.subjects(),
        set.sessions(),
    );
    let mut trainer = Trainer::new(model_cfg, cfg.schedule, train_section.to_train_config())?;
    println!(
        "training {} parameters on {} epochs ({} validation) for {} steps",
        trainer.model_cfg.param_count(),
        train_set.n_epochs(),
        val_set.n_epochs(),
        train_section.steps
    );
    let rows = trainer.run(&train_set, &val_set, Some(out))?;
    write_training_log(&rows, &out.join("training_log.csv"))?;
    let final_path = out.join("ckpt_final.erpd");
    trainer.save_checkpoint(&final_path)?;
    let last = rows.last().expect("steps ≥ 1");
    println!(
        "done: loss {:.4}, val_loss {:.4}, checkpoints in {}",
        last.loss,
        last.val_loss.unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}
