//! Dataset manifests: an ordered list of images with role tags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, Image};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

fn is_raster(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("pgm") | Some("ppm")
    )
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, mut entries: Vec<ManifestEntry>) -> Self {
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        DatasetManifest {
            root: root.into(),
            entries,
        }
    }

    /// Reads `manifest.json` from `dir` when present; otherwise lists the
    /// directory's PGM/PPM files and tags them all with `default_role`.
    pub fn open(dir: impl AsRef<Path>, default_role: Role) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            let entries: Vec<ManifestEntry> = serde_json::from_str(&text)
                .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
            let m = DatasetManifest::new(dir, entries);
            for e in &m.entries {
                let p = dir.join(&e.path);
                if !p.is_file() {
                    return Err(Error::format(&manifest_path, format!("missing entry {}", e.path)));
                }
            }
            return Ok(m);
        }
        Self::scan(dir, default_role)
    }

    pub fn scan(dir: impl AsRef<Path>, role: Role) -> Result<Self> {
        let dir = dir.as_ref();
        let mut entries = Vec::new();
        for item in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let item = item.map_err(|e| Error::io(dir, e))?;
            let p = item.path();
            if p.is_file() && is_raster(&p) {
                entries.push(ManifestEntry {
                    path: item.file_name().to_string_lossy().into_owned(),
                    role,
                    label: None,
                });
            }
        }
        Ok(DatasetManifest::new(dir, entries))
    }

    pub fn save(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.entries)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path_of(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn load_images(&self) -> Result<Vec<Image>> {
        self.entries.iter().map(|e| load_image(self.path_of(e))).collect()
    }

    pub fn labels(&self) -> Vec<Option<String>> {
        self.entries.iter().map(|e| e.label.clone()).collect()
    }
}
