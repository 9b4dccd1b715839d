//! `sample`: checkpoint → container of generated epochs.

use std::path::Path;

use anyhow::{bail, Context, Result};

use erpdiff_core::data::{load_epochs, save_epochs, ClassLabel, ConditionKey};
use erpdiff_core::diffusion::{load_score_checkpoint, sample_condition, sample_matched};
use erpdiff_core::signal::ChannelLayout;

use crate::config::RunConfig;

pub struct Args<'a> {
    pub config: Option<&'a Path>,
    pub ckpt: &'a Path,
    pub match_dir: Option<&'a Path>,
    pub subject: Option<u32>,
    pub session: Option<u32>,
    pub class_label: Option<String>,
    pub count: Option<usize>,
    pub guidance: Option<f64>,
    pub corrector_snr: Option<f64>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub out: &'a Path,
}

pub fn run(args: Args<'_>) -> Result<()> {
    let cfg = RunConfig::load(args.config)?;
    let mut scfg = cfg.sample;
    if let Some(w) = args.guidance {
        scfg.guidance_scale = w;
    }
    if let Some(r) = args.corrector_snr {
        scfg.corrector_snr = r;
    }
    if let Some(n) = args.steps {
        scfg.n_steps = n;
    }
    if let Some(s) = args.seed {
        scfg.seed = s;
    }

    let (store, meta) = load_score_checkpoint(args.ckpt)
        .with_context(|| format!("loading checkpoint {}", args.ckpt.display()))?;

    let generated = match args.match_dir {
        Some(dir) => {
            let real = load_epochs(dir)
                .with_context(|| format!("loading real container {}", dir.display()))?;
            sample_matched(
                &real,
                &meta.model,
                &store,
                &meta.schedule,
                &scfg,
                cfg.sample_max_batch,
            )?
        }
        None => {
            let (subject, session, class, count) = match (
                args.subject,
                args.session,
                args.class_label.as_deref(),
                args.count,
            ) {
                (Some(s), Some(e), Some(c), Some(n)) => (s, e, ClassLabel::parse(c)?, n),
                _ => bail!(
                    "provide either --match DIR or all of --subject, --session, --class, --count"
                ),
            };
            let Some(data) = &meta.data else {
                bail!(
                    "checkpoint {} lacks a data descriptor; use --match DIR instead",
                    args.ckpt.display()
                )
            };
            let layout = ChannelLayout::new(data.channels.clone())?;
            sample_condition(
                &meta.model,
                &store,
                &meta.schedule,
                &scfg,
                ConditionKey::real(subject, session, class),
                count,
                data.fs,
                &layout,
                data.epoch_len,
                cfg.sample_max_batch,
            )?
        }
    };
    save_epochs(&generated, args.out)
        .with_context(|| format!("writing container {}", args.out.display()))?;
    println!(
        "sampled {} epochs (guidance {}, corrector snr {}, {} steps, seed {}) → {}",
        generated.n_epochs(),
        scfg.guidance_scale,
        scfg.corrector_snr,
        scfg.n_steps,
        scfg.seed,
        args.out.display()
    );
    Ok(())
}
