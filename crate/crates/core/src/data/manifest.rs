use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One line of a dataset list: `left right [disparity]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub left: PathBuf,
    pub right: PathBuf,
    pub gt: Option<PathBuf>,
}

/// Whitespace-separated dataset list. Relative paths resolve against the
/// manifest's directory; `#` starts a comment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut offset = 0;
        for (lineno, line) in text.lines().enumerate() {
            let start = offset;
            offset += line.len() + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(Error::format(
                    start,
                    format!("line {}: expected 2 or 3 paths, found {}", lineno + 1, fields.len()),
                ));
            }
            let resolve = |p: &str| base.join(p);
            entries.push(ManifestEntry {
                left: resolve(fields[0]),
                right: resolve(fields[1]),
                gt: fields.get(2).map(|p| resolve(p)),
            });
        }
        Ok(Manifest { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Serialises with paths made relative to `base` where possible.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut out = String::new();
        for e in &self.entries {
            let _ = write!(out, "{} {}", rel(&e.left), rel(&e.right));
            if let Some(g) = &e.gt {
                let _ = write!(out, " {}", rel(g));
            }
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        let text = "# list\na_l.png a_r.png a.pfm\n\nb_l.png b_r.png # no gt\n";
        let m = Manifest::parse(text, Path::new("/data")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].gt.as_deref(), Some(Path::new("/data/a.pfm")));
        assert_eq!(m.entries[1].gt, None);
        assert_eq!(m.to_text(Path::new("/data")), "a_l.png a_r.png a.pfm\nb_l.png b_r.png\n");
        assert!(Manifest::parse("only_one\n", Path::new("")).is_err());
    }
}
