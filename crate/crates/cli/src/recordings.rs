//! Continuous-recordings container: the input side of `preprocess`.
//!
//! One directory holds `recordings.json` plus one `*.f32le` payload
//! (channel-major `[C × S]`, little-endian f32) and one events CSV
//! (`onset_sample,class`, LF endings) per recording.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use erpdiff_core::data::ClassLabel;
use erpdiff_core::signal::{ChannelLayout, ContinuousRecording, Event};

pub const RECORDINGS_FORMAT: &str = "erpdiff-recordings";
pub const RECORDINGS_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingEntry {
    pub subject: u32,
    pub session: u32,
    pub samples: usize,
    pub data: String,
    pub events: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingsManifest {
    pub format: String,
    pub version: u32,
    pub fs: f64,
    pub channels: Vec<String>,
    pub recordings: Vec<RecordingEntry>,
}

/// One loaded recording tagged with its subject/session ids.
pub struct TaggedRecording {
    pub subject: u32,
    pub session: u32,
    pub recording: ContinuousRecording,
}

pub fn load_recordings(dir: &Path) -> Result<Vec<TaggedRecording>> {
    let manifest_path = dir.join("recordings.json");
    let text = std::fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: RecordingsManifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", manifest_path.display()))?;
    if manifest.format != RECORDINGS_FORMAT {
        bail!(
            "{}: format {:?} is not {RECORDINGS_FORMAT:?}",
            manifest_path.display(),
            manifest.format
        );
    }
    if manifest.version != RECORDINGS_VERSION {
        bail!(
            "{}: version {} unsupported (expected {RECORDINGS_VERSION})",
            manifest_path.display(),
            manifest.version
        );
    }
    let layout = ChannelLayout::new(manifest.channels.clone())?;
    let c = layout.count();
    let mut out = Vec::with_capacity(manifest.recordings.len());
    for entry in &manifest.recordings {
        let data_path = dir.join(&entry.data);
        let bytes = std::fs::read(&data_path)
            .with_context(|| format!("reading {}", data_path.display()))?;
        let expected = c * entry.samples * 4;
        if bytes.len() != expected {
            bail!(
                "{}: {} bytes but manifest implies {expected} ({c} ch × {} samples × 4)",
                data_path.display(),
                bytes.len(),
                entry.samples
            );
        }
        let mut data = ndarray::Array2::zeros((c, entry.samples));
        for ch in 0..c {
            for t in 0..entry.samples {
                let off = (ch * entry.samples + t) * 4;
                data[[ch, t]] =
                    f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
            }
        }

        let events_path = dir.join(&entry.events);
        let text = std::fs::read_to_string(&events_path)
            .with_context(|| format!("reading {}", events_path.display()))?;
        let mut lines = text.lines();
        if lines.next() != Some("onset_sample,class") {
            bail!("{}: malformed events header", events_path.display());
        }
        let mut events = Vec::new();
        for (no, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (onset, class) = line.split_once(',').with_context(|| {
                format!("{} row {}: expected 2 fields", events_path.display(), no + 1)
            })?;
            events.push(Event {
                onset_sample: onset.parse().with_context(|| {
                    format!("{} row {}: bad onset {onset:?}", events_path.display(), no + 1)
                })?,
                class: ClassLabel::parse(class)?,
            });
        }
        out.push(TaggedRecording {
            subject: entry.subject,
            session: entry.session,
            recording: ContinuousRecording::new(data, manifest.fs, events, layout.clone())?,
        });
    }
    Ok(out)
}
