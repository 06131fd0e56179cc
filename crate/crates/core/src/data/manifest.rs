use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Record {
    pub image: PathBuf,
    pub mask: PathBuf,
}

/// `<image_path>\t<mask_path>` per line; relative paths are taken relative
/// to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub records: Vec<Record>,
    pub source: PathBuf,
}

impl Manifest {
    pub fn new(records: Vec<Record>) -> Self {
        Self {
            records,
            source: PathBuf::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let base = source.parent().unwrap_or(Path::new(""));
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Manifest {
                path: source.to_path_buf(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [image, mask] = fields.as_slice() else {
                return Err(bad(format!(
                    "expected 2 tab-separated fields, found {}",
                    fields.len()
                )));
            };
            if image.is_empty() || mask.is_empty() {
                return Err(bad("empty path field".into()));
            }
            let record = Record {
                image: base.join(image),
                mask: base.join(mask),
            };
            if !seen.insert(record.image.clone()) {
                return Err(bad(format!("duplicate image path {image}")));
            }
            records.push(record);
        }
        Ok(Self {
            records,
            source: source.to_path_buf(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{}\t{}", r.image.display(), r.mask.display());
        }
        out
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::parse(&text, path)
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    fs::write(path, manifest.to_text()).map_err(|e| Error::io(path, e))
}
