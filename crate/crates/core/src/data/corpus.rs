//! Corpora on disk: manifests, sequence directories and the dataset config.
//!
//! A sequence directory holds numbered frames (PNG or JPEG), either directly
//! or in a `frames/` subdirectory. Ground-truth flow, when present, lives in
//! `flow/`: `.flo` files or KITTI 16-bit PNGs whose numeric stem is the index
//! of the first frame of the pair.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::flowio::{read_color_frame, read_flo, read_kitti_flow, write_color_png, write_flo, write_gray_png};

use super::dataset::{Dataset, Sequence};
use super::split::SplitPolicy;
use super::synthetic::{generate_synthetic_corpus, SyntheticConfig, SyntheticSequence};

pub const MANIFEST_NAME: &str = "manifest.txt";

/// One manifest line: `path frame_count corpus_tag`, whitespace separated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub frames: usize,
    pub corpus: String,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [path, frames, corpus] = fields[..] else {
            return Err(Error::Data(format!(
                "manifest line {}: expected `path frame_count corpus`, got {} fields",
                no + 1,
                fields.len()
            )));
        };
        let frames = frames
            .parse()
            .map_err(|_| Error::Data(format!("manifest line {}: bad frame count {frames:?}", no + 1)))?;
        out.push(ManifestEntry {
            path: PathBuf::from(path),
            frames,
            corpus: corpus.to_string(),
        });
    }
    Ok(out)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(s, "{} {} {}", e.path.display(), e.frames, e.corpus);
    }
    s
}

fn numbered_files(dir: &Path, extensions: &[&str]) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        if !extensions.contains(&ext.as_str()) {
            continue;
        }
        let digits: String = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .chars()
            .rev()
            .take_while(char::is_ascii_digit)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        match digits.parse() {
            Ok(n) => out.push((n, path)),
            Err(_) => log::warn!("skipping {}: no frame number in its name", path.display()),
        }
    }
    out.sort();
    Ok(out)
}

/// Load one sequence directory.
pub fn load_sequence(dir: &Path, name: &str, corpus: &str) -> Result<Sequence> {
    let frames_dir = if dir.join("frames").is_dir() {
        dir.join("frames")
    } else {
        dir.to_path_buf()
    };
    let files = numbered_files(&frames_dir, &["png", "jpg", "jpeg"])?;
    let frames = files
        .iter()
        .map(|(_, p)| read_color_frame(p))
        .collect::<Result<Vec<_>>>()?;
    let mut flows: Vec<Option<FlowField>> = vec![None; frames.len().saturating_sub(1)];
    let flow_dir = dir.join("flow");
    if flow_dir.is_dir() {
        for (n, path) in numbered_files(&flow_dir, &["flo", "png"])? {
            let first = files.iter().position(|(f, _)| *f == n);
            let Some(t) = first.filter(|&t| t + 1 < frames.len()) else {
                return Err(Error::Data(format!(
                    "{}: no frame pair starts at frame {n}",
                    path.display()
                )));
            };
            let is_flo = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("flo"));
            flows[t] = Some(if is_flo { read_flo(&path)? } else { read_kitti_flow(&path)? });
        }
    }
    while flows.last().is_some_and(Option::is_none) {
        flows.pop();
    }
    Sequence::new(name.to_string(), corpus.to_string(), frames, flows)
}

/// Load every sequence of a manifest; paths are relative to the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut sequences = Vec::new();
    for entry in parse_manifest(&text)? {
        let dir = base.join(&entry.path);
        let name = entry.path.display().to_string();
        let seq = load_sequence(&dir, &name, &entry.corpus)?;
        if seq.len() != entry.frames {
            return Err(Error::Data(format!(
                "{}: manifest declares {} frames, found {}",
                dir.display(),
                entry.frames,
                seq.len()
            )));
        }
        sequences.push(seq);
    }
    Ok(Dataset { sequences })
}

/// Write sequences in the on-disk layout plus a manifest. Gray frames are
/// stored as 8-bit grayscale PNGs, colored ones as RGB.
pub fn write_corpus(out_dir: &Path, corpus: &str, seqs: &[SyntheticSequence]) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (i, seq) in seqs.iter().enumerate() {
        let rel = PathBuf::from(format!("{corpus}_{i:03}"));
        let frames_dir = out_dir.join(&rel).join("frames");
        let flow_dir = out_dir.join(&rel).join("flow");
        for d in [&frames_dir, &flow_dir] {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        for (t, f) in seq.frames.iter().enumerate() {
            let path = frames_dir.join(format!("{t:06}.png"));
            let [r, g, b] = &f.channels;
            if r == g && g == b {
                write_gray_png(&path, r)?;
            } else {
                write_color_png(&path, f)?;
            }
        }
        for (t, flow) in seq.flows.iter().enumerate() {
            write_flo(flow_dir.join(format!("{t:06}.flo")), flow)?;
        }
        entries.push(ManifestEntry {
            path: rel,
            frames: seq.frames.len(),
            corpus: corpus.to_string(),
        });
    }
    let manifest = out_dir.join(MANIFEST_NAME);
    std::fs::write(&manifest, format_manifest(&entries)).map_err(|e| Error::io(&manifest, e))?;
    Ok(entries)
}

/// Which corpora to load and how to split them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Manifest files; relative paths resolve against the data root.
    pub manifests: Vec<PathBuf>,
    /// Generate an in-memory synthetic corpus tagged `synthetic`.
    pub synthetic: Option<SyntheticConfig>,
    pub synthetic_seed: u64,
    /// Split policy per corpus tag.
    pub policies: BTreeMap<String, SplitPolicy>,
    pub default_policy: SplitPolicy,
    /// Share of flow samples held out for validation during fine-tuning.
    pub flow_val_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            manifests: Vec::new(),
            synthetic: None,
            synthetic_seed: 0,
            policies: BTreeMap::new(),
            default_policy: SplitPolicy::DRIVING,
            flow_val_fraction: 0.10,
        }
    }
}

impl DatasetConfig {
    pub fn load(&self, data_root: Option<&Path>) -> Result<Dataset> {
        let mut data = Dataset::default();
        for m in &self.manifests {
            let path = match data_root {
                Some(root) if m.is_relative() => root.join(m),
                _ => m.clone(),
            };
            data.extend(load_manifest(&path)?);
        }
        if let Some(cfg) = &self.synthetic {
            data.extend(Dataset::from_synthetic(
                "synthetic",
                generate_synthetic_corpus(cfg, self.synthetic_seed)?,
            )?);
        }
        if data.sequences.is_empty() {
            return Err(Error::Config(
                "dataset declares no manifests and no synthetic corpus".into(),
            ));
        }
        Ok(data)
    }
}
