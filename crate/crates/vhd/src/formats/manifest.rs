//! Corpus manifests: one `split<TAB>category<TAB>features<TAB>annotations|-`
//! line per video. Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use vhd_core::data::VideoFeatures;
use vhd_core::synth::Split;

use super::features::load_feature_file;
use super::tables::load_annotations;
use super::{read_text, write_atomic};
use crate::error::{Result, VhdError};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub split: Split,
    pub category: String,
    pub features: PathBuf,
    pub annotations: Option<PathBuf>,
}

impl ManifestEntry {
    /// Video id: the feature file name without extension.
    pub fn video_id(&self) -> String {
        self.features
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

pub fn parse_split(s: &str) -> Option<Split> {
    match s {
        "train" => Some(Split::Train),
        "test" => Some(Split::Test),
        _ => None,
    }
}

impl Manifest {
    /// `origin` names the source in errors; relative paths join onto `base`.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(VhdError::parse(
                    origin,
                    i + 1,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            }
            let split = parse_split(fields[0])
                .ok_or_else(|| VhdError::parse(origin, i + 1, format!("unknown split {:?}", fields[0])))?;
            if fields[1].is_empty() || fields[2].is_empty() || fields[3].is_empty() {
                return Err(VhdError::parse(origin, i + 1, "empty field"));
            }
            entries.push(ManifestEntry {
                split,
                category: fields[1].to_string(),
                features: base.join(fields[2]),
                annotations: (fields[3] != "-").then(|| base.join(fields[3])),
            });
        }
        Ok(Manifest { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        Manifest::parse(&read_text(path)?, path, base)
    }

    /// Paths under `base` are written relative to it.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned();
        let mut out = String::new();
        for e in &self.entries {
            let ann = e.annotations.as_deref().map_or("-".to_string(), rel);
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.split.name(),
                e.category,
                rel(&e.features),
                ann
            ));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        write_atomic(path, self.to_text(base).as_bytes())
    }

    /// Categories in order of first appearance.
    pub fn categories(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.category) {
                out.push(e.category.clone());
            }
        }
        out
    }

    pub fn select<'a>(
        &'a self,
        split: Split,
        category: Option<&'a str>,
    ) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.split == split && category.is_none_or(|c| e.category == c))
    }
}

/// Reads one video's features and, when listed, its annotations.
pub fn load_video(entry: &ManifestEntry) -> Result<VideoFeatures> {
    let id = entry.video_id();
    let vf = load_feature_file(&entry.features, &id, &entry.category)?;
    let Some(ann) = &entry.annotations else {
        return Ok(vf);
    };
    let labels = load_annotations(ann)?;
    if labels.len() != vf.num_segments() {
        return Err(VhdError::LabelLength {
            video: id,
            features: vf.num_segments(),
            labels: labels.len(),
        });
    }
    Ok(VideoFeatures::new(
        id,
        entry.category.clone(),
        vf.dim(),
        vf.features().to_vec(),
        Some(labels),
    )?)
}

pub fn load_corpus(manifest: &Manifest, split: Split, category: Option<&str>) -> Result<Vec<VideoFeatures>> {
    manifest.select(split, category).map(load_video).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        let text = "train\tsurfing\tf/a.vhdf\ta/a.txt\n# note\n\ntest\tparkour\tf/b.vhdf\t-\n";
        let m = Manifest::parse(text, Path::new("m.tsv"), Path::new("/data")).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].features, PathBuf::from("/data/f/a.vhdf"));
        assert_eq!(m.entries[1].annotations, None);
        assert_eq!(m.entries[0].video_id(), "a");
        assert_eq!(m.categories(), vec!["surfing", "parkour"]);
        assert_eq!(
            m.to_text(Path::new("/data")),
            "train\tsurfing\tf/a.vhdf\ta/a.txt\ntest\tparkour\tf/b.vhdf\t-\n"
        );
        assert_eq!(m.select(Split::Test, None).count(), 1);
        assert_eq!(m.select(Split::Train, Some("parkour")).count(), 0);
    }

    #[test]
    fn malformed_lines() {
        let p = Path::new("m.tsv");
        for bad in ["train\tsurfing\tf.vhdf", "val\tc\tf\t-", "train\t\tf\t-"] {
            assert!(matches!(
                Manifest::parse(bad, p, Path::new("")),
                Err(VhdError::Parse { line: 1, .. })
            ));
        }
    }
}
