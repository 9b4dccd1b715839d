//! `synth`: synthetic-spec JSON → dataset container.

use std::path::Path;

use anyhow::{Context, Result};

use erpdiff_core::data::{generate_synthetic, save_epochs, SyntheticSpec};

pub fn run(spec_path: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading spec {}", spec_path.display()))?;
    let spec: SyntheticSpec = serde_json::from_str(&text)
        .with_context(|| format!("parsing spec {}", spec_path.display()))?;
    let set = generate_synthetic(&spec)?;
    save_epochs(&set, out).with_context(|| format!("writing container {}", out.display()))?;
    println!(
        "generated {} epochs ({} subjects × {} sessions × 2 classes × {}) → {}",
        set.n_epochs(),
        spec.n_subjects,
        spec.sessions_per_subject,
        spec.epochs_per_condition,
        out.display()
    );
    Ok(())
}
