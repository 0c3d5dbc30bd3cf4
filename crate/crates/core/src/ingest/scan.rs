use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::raw::{parse_header, HEADER_LEN};
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("archive directory {0} not found")]
    NotFound(PathBuf),
    #[error("cannot list {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// A file that was skipped, with the reason.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanWarning {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ArchiveListing {
    /// Readable `.rdt` files ordered by header time, then file name.
    pub entries: Vec<(Timestamp, PathBuf)>,
    pub warnings: Vec<ScanWarning>,
}

/// List `*.rdt` files in `dir` (not recursive), ordered by volume time.
///
/// Only headers are decoded. Unreadable files become warnings.
pub fn scan_archive_dir(dir: &Path) -> Result<ArchiveListing, ScanError> {
    if !dir.is_dir() {
        return Err(ScanError::NotFound(dir.to_path_buf()));
    }
    let io_err = |source| ScanError::Io { path: dir.to_path_buf(), source };
    let mut listing = ArchiveListing::default();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("rdt") || !path.is_file() {
            continue;
        }
        match read_header_time(&path) {
            Ok(t) => listing.entries.push((t, path)),
            Err(message) => listing.warnings.push(ScanWarning { path, message }),
        }
    }
    listing.entries.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.file_name().cmp(&b.1.file_name())));
    listing.warnings.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(listing)
}

fn read_header_time(path: &Path) -> Result<Timestamp, String> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    File::open(path)
        .and_then(|f| f.take(HEADER_LEN as u64).read_to_end(&mut buf))
        .map_err(|e| e.to_string())?;
    parse_header(&buf).map(|h| h.volume_time).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::encode_rdt_raw;
    use crate::model::fixtures::volume;

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let l = scan_archive_dir(dir.path()).unwrap();
        assert!(l.entries.is_empty() && l.warnings.is_empty());
    }

    #[test]
    fn ordered_by_header_time_not_name() {
        let dir = tempfile::tempdir().unwrap();
        for (name, t) in [("c.rdt", 0), ("a.rdt", 600), ("b.rdt", 300)] {
            std::fs::write(dir.path().join(name), encode_rdt_raw(&volume("V", t, 1, 2, 2)).unwrap()).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
        let l = scan_archive_dir(dir.path()).unwrap();
        let names: Vec<_> = l.entries.iter().map(|(_, p)| p.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, ["c.rdt", "b.rdt", "a.rdt"]);
    }

    #[test]
    fn corrupt_file_is_a_warning() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ok.rdt"), encode_rdt_raw(&volume("V", 0, 1, 2, 2)).unwrap()).unwrap();
        std::fs::write(dir.path().join("bad.rdt"), b"XXXXgarbage").unwrap();
        let l = scan_archive_dir(dir.path()).unwrap();
        assert_eq!(l.entries.len(), 1);
        assert_eq!(l.warnings.len(), 1);
        assert!(l.warnings[0].path.ends_with("bad.rdt"));
    }

    #[test]
    fn missing_directory() {
        assert!(matches!(scan_archive_dir(Path::new("/nonexistent/rdt")), Err(ScanError::NotFound(_))));
    }
}
