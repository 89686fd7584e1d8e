//! Builds a manifest from a class-per-subdirectory tree.

use std::path::Path;

use super::manifest::SampleRecord;
use crate::error::{Error, Result};
use crate::labels::Label;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Lists images under `root/<Class>/`, classes in index order and files
/// sorted by name. Loose files in `root` are ignored; a subdirectory whose
/// name is not a class is an error.
pub fn scan_class_tree(root: &Path) -> Result<Vec<SampleRecord>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut unknown = Vec::new();
    let mut classes = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if !entry.path().is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        match name.parse::<Label>() {
            Ok(l) => classes.push((l, entry.path())),
            Err(_) => unknown.push(name),
        }
    }
    if !unknown.is_empty() {
        unknown.sort();
        return Err(Error::Data(format!(
            "unknown class director{} in {}: {}",
            if unknown.len() == 1 { "y" } else { "ies" },
            root.display(),
            unknown.join(", ")
        )));
    }
    classes.sort();
    let mut records = Vec::new();
    for (label, dir) in classes {
        let mut files: Vec<_> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .map(|x| IMAGE_EXTENSIONS.contains(&x.to_string_lossy().to_lowercase().as_str()))
                        .unwrap_or(false)
            })
            .collect();
        files.sort();
        records.extend(files.into_iter().map(|p| SampleRecord::new(p, label)));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_directory_is_listed() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("Cyst")).unwrap();
        std::fs::create_dir(dir.path().join("Cysts")).unwrap();
        let err = scan_class_tree(dir.path()).unwrap_err().to_string();
        assert!(err.contains("Cysts"), "{err}");
    }

    #[test]
    fn files_are_sorted_per_class() {
        let dir = tempfile::tempdir().unwrap();
        for (c, f) in [("Tumor", "b.png"), ("Normal", "z.jpg"), ("Tumor", "a.PNG"), ("Tumor", "notes.txt")] {
            std::fs::create_dir_all(dir.path().join(c)).unwrap();
            std::fs::write(dir.path().join(c).join(f), b"").unwrap();
        }
        let r = scan_class_tree(dir.path()).unwrap();
        let names: Vec<String> = r.iter().map(|r| r.path.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, ["z.jpg", "a.PNG", "b.png"]);
        assert_eq!(r[0].label, Label::Normal);
    }
}
