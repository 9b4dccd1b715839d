//! On-disk dataset container: `manifest.json` + `epochs.f32le` + `labels.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, ConditionKey};
use crate::error::CoreError;
use crate::signal::{ChannelLayout, Epoch, EpochSet};
use crate::Result;

pub const MANIFEST_FORMAT: &str = "erpdiff-epochs";
pub const MANIFEST_VERSION: u32 = 1;

/// Per-condition epoch count as stored in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub subject: u32,
    pub session: u32,
    pub class: ClassLabel,
    pub count: usize,
}

/// Dataset description stored as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub fs: f64,
    pub channels: Vec<String>,
    pub epoch_len: usize,
    pub subjects: Vec<u32>,
    pub sessions: Vec<u32>,
    pub class_counts: Vec<ClassCount>,
    #[serde(default)]
    pub excluded_subjects: Vec<u32>,
}

impl DatasetManifest {
    pub fn from_set(set: &EpochSet) -> Self {
        let mut counts: BTreeMap<(u32, u32, ClassLabel), usize> = BTreeMap::new();
        for e in set.epochs() {
            if let ConditionKey::Real {
                subject,
                session,
                class,
            } = e.condition
            {
                *counts.entry((subject, session, class)).or_default() += 1;
            }
        }
        DatasetManifest {
            format: MANIFEST_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            fs: set.fs(),
            channels: set.layout().names().to_vec(),
            epoch_len: set.epoch_len(),
            subjects: set.subjects(),
            sessions: set.sessions(),
            class_counts: counts
                .into_iter()
                .map(|((subject, session, class), count)| ClassCount {
                    subject,
                    session,
                    class,
                    count,
                })
                .collect(),
            excluded_subjects: Vec::new(),
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.class_counts.iter().map(|c| c.count).sum()
    }
}

/// Writes an EpochSet into a dataset directory (created if missing).
pub fn save_epochs(set: &EpochSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
    let manifest = DatasetManifest::from_set(set);

    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CoreError::json(manifest_path.display().to_string(), e))?;
    fs::write(&manifest_path, json.as_bytes())
        .map_err(|e| CoreError::io(manifest_path.display().to_string(), e))?;

    let payload_path = dir.join("epochs.f32le");
    let mut payload =
        Vec::with_capacity(set.n_epochs() * set.n_channels() * set.epoch_len() * 4);
    for e in set.epochs() {
        for row in e.data.rows() {
            for &v in row {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(&payload_path, payload)
        .map_err(|e| CoreError::io(payload_path.display().to_string(), e))?;

    let labels_path = dir.join("labels.csv");
    let mut csv = String::from("epoch_index,subject,session,class\n");
    for (i, e) in set.epochs().iter().enumerate() {
        match e.condition {
            ConditionKey::Real {
                subject,
                session,
                class,
            } => {
                csv.push_str(&format!("{i},{subject},{session},{class}\n"));
            }
            ConditionKey::Unconditional => {
                return Err(CoreError::Format(
                    "cannot store the unconditional token in a dataset".into(),
                ));
            }
        }
    }
    let mut f = fs::File::create(&labels_path)
        .map_err(|e| CoreError::io(labels_path.display().to_string(), e))?;
    f.write_all(csv.as_bytes())
        .map_err(|e| CoreError::io(labels_path.display().to_string(), e))?;
    Ok(())
}

/// Loads a dataset directory, verifying manifest/payload/label consistency.
pub fn load_epochs(dir: &Path) -> Result<EpochSet> {
    let manifest_path = dir.join("manifest.json");
    let json = fs::read_to_string(&manifest_path)
        .map_err(|e| CoreError::io(manifest_path.display().to_string(), e))?;
    let manifest: DatasetManifest = serde_json::from_str(&json)
        .map_err(|e| CoreError::json(manifest_path.display().to_string(), e))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(CoreError::Format(format!(
            "manifest format {:?} does not match {MANIFEST_FORMAT:?}",
            manifest.format
        )));
    }
    if manifest.version != MANIFEST_VERSION {
        return Err(CoreError::Format(format!(
            "manifest version {} unsupported (expected {MANIFEST_VERSION})",
            manifest.version
        )));
    }

    let n_channels = manifest.channels.len();
    let epoch_len = manifest.epoch_len;
    let n_epochs = manifest.total_epochs();

    let payload_path = dir.join("epochs.f32le");
    let mut payload = Vec::new();
    fs::File::open(&payload_path)
        .and_then(|mut f| f.read_to_end(&mut payload))
        .map_err(|e| CoreError::io(payload_path.display().to_string(), e))?;
    let expected = n_epochs * n_channels * epoch_len * 4;
    if payload.len() != expected {
        return Err(CoreError::ShapeMismatch(format!(
            "payload {} holds {} bytes but manifest implies {expected} \
             ({n_epochs} epochs × {n_channels} ch × {epoch_len} samples × 4)",
            payload_path.display(),
            payload.len()
        )));
    }

    let labels_path = dir.join("labels.csv");
    let labels_text = fs::read_to_string(&labels_path)
        .map_err(|e| CoreError::io(labels_path.display().to_string(), e))?;
    let mut lines = labels_text.lines();
    match lines.next() {
        Some("epoch_index,subject,session,class") => {}
        other => {
            return Err(CoreError::Format(format!(
                "labels.csv header {:?} malformed",
                other.unwrap_or("")
            )))
        }
    }
    let mut conditions = Vec::with_capacity(n_epochs);
    for (row_no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(CoreError::Format(format!(
                "labels.csv row {} has {} fields, expected 4",
                row_no + 1,
                parts.len()
            )));
        }
        let idx: usize = parts[0]
            .parse()
            .map_err(|_| CoreError::Format(format!("bad epoch_index {:?}", parts[0])))?;
        if idx != conditions.len() {
            return Err(CoreError::Format(format!(
                "labels.csv epoch_index {idx} out of order (expected {})",
                conditions.len()
            )));
        }
        let subject: u32 = parts[1]
            .parse()
            .map_err(|_| CoreError::Format(format!("bad subject id {:?}", parts[1])))?;
        let session: u32 = parts[2]
            .parse()
            .map_err(|_| CoreError::Format(format!("bad session id {:?}", parts[2])))?;
        let class = ClassLabel::parse(parts[3])?;
        conditions.push(ConditionKey::real(subject, session, class));
    }
    if conditions.len() != n_epochs {
        return Err(CoreError::Format(format!(
            "labels.csv lists {} epochs but manifest counts {n_epochs}",
            conditions.len()
        )));
    }

    let layout = ChannelLayout::new(manifest.channels.clone())?;
    let mut set = EpochSet::empty(manifest.fs, layout, epoch_len);
    let mut off = 0usize;
    for &condition in &conditions {
        let mut data = Array2::zeros((n_channels, epoch_len));
        for ch in 0..n_channels {
            for t in 0..epoch_len {
                let bytes: [u8; 4] = payload[off..off + 4].try_into().unwrap();
                data[[ch, t]] = f32::from_le_bytes(bytes);
                off += 4;
            }
        }
        set.push(Epoch { data, condition })?;
    }

    // Recount labels against the manifest.
    let recount = DatasetManifest::from_set(&set);
    if recount.class_counts != manifest.class_counts {
        return Err(CoreError::Format(
            "manifest class_counts disagree with labels.csv".into(),
        ));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate_synthetic, SyntheticSpec};
    use tempfile::tempdir;

    fn small_set() -> EpochSet {
        let spec = SyntheticSpec {
            n_subjects: 2,
            epochs_per_condition: 3,
            n_channels: 4,
            fs: 32.0,
            epoch_seconds: 1.0,
            p300_amp_uv: vec![8.0, 9.0],
            p300_latency_s: vec![0.3, 0.35],
            seed: 11,
            ..Default::default()
        };
        generate_synthetic(&spec).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let set = small_set();
        save_epochs(&set, dir.path()).unwrap();
        let back = load_epochs(dir.path()).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn empty_set_roundtrips() {
        let dir = tempdir().unwrap();
        let set = EpochSet::empty(128.0, ChannelLayout::standard_19(), 128);
        save_epochs(&set, dir.path()).unwrap();
        let back = load_epochs(dir.path()).unwrap();
        assert_eq!(back.n_epochs(), 0);
        assert_eq!(back.epoch_len(), 128);
        assert_eq!(back.layout().count(), 19);
    }

    #[test]
    fn shape_mismatch_detected() {
        let dir = tempdir().unwrap();
        let set = small_set();
        save_epochs(&set, dir.path()).unwrap();
        // Claim one more channel than the payload holds.
        let manifest_path = dir.path().join("manifest.json");
        let mut m: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
        m.channels.push("extra".into());
        std::fs::write(&manifest_path, serde_json::to_string(&m).unwrap()).unwrap();
        match load_epochs(dir.path()) {
            Err(CoreError::ShapeMismatch(_)) => {}
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn format_and_version_checked() {
        let dir = tempdir().unwrap();
        let set = small_set();
        save_epochs(&set, dir.path()).unwrap();
        let manifest_path = dir.path().join("manifest.json");
        let mut m: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
        m.version = 99;
        std::fs::write(&manifest_path, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(load_epochs(dir.path()), Err(CoreError::Format(_))));
    }

    #[test]
    fn truncated_payload_detected() {
        let dir = tempdir().unwrap();
        let set = small_set();
        save_epochs(&set, dir.path()).unwrap();
        let payload_path = dir.path().join("epochs.f32le");
        let bytes = std::fs::read(&payload_path).unwrap();
        std::fs::write(&payload_path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_epochs(dir.path()).is_err());
    }

    #[test]
    fn manifest_counts_match_recount() {
        let set = small_set();
        let manifest = DatasetManifest::from_set(&set);
        assert_eq!(manifest.total_epochs(), set.n_epochs());
        for cc in &manifest.class_counts {
            let key = ConditionKey::real(cc.subject, cc.session, cc.class);
            assert_eq!(set.count_condition(key), cc.count);
        }
    }
}
