use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One scan found under a test directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestScan {
    pub class: String,
    pub defect: String,
    pub stem: String,
    pub path: PathBuf,
}

fn is_tiff(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("tif" | "tiff")
    )
}

/// TIFF files directly inside `dir`, sorted by name.
pub fn tiff_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && is_tiff(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

fn name(p: &Path) -> String {
    p.file_name().map_or_else(|| "default".to_string(), |s| s.to_string_lossy().into_owned())
}

/// Training scans of a class directory, a `good` directory, an `xyz`
/// directory, or a plain directory of TIFF files, whichever matches first.
pub fn find_train_scans(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::InvalidArgument(format!("train_dir not found: {}", dir.display())));
    }
    for cand in [dir.join("train/good/xyz"), dir.join("good/xyz"), dir.join("xyz"), dir.to_path_buf()] {
        if cand.is_dir() {
            let files = tiff_files(&cand)?;
            if !files.is_empty() {
                return Ok(files);
            }
        }
    }
    Err(Error::InvalidArgument(format!("no TIFF scans under {}", dir.display())))
}

/// Test scans of a class directory (`<class>/test/<defect>/xyz`) or of its
/// `test` directory. Results are ordered by defect, then file name.
pub fn find_test_scans(dir: &Path) -> Result<Vec<TestScan>> {
    if !dir.is_dir() {
        return Err(Error::InvalidArgument(format!("test_dir not found: {}", dir.display())));
    }
    let (test_root, class) = if dir.join("test").is_dir() {
        (dir.join("test"), name(dir))
    } else {
        let class = dir.parent().map_or_else(|| "default".to_string(), name);
        (dir.to_path_buf(), class)
    };
    let mut out = Vec::new();
    for defect_dir in sorted_subdirs(&test_root)? {
        let xyz = defect_dir.join("xyz");
        if !xyz.is_dir() {
            continue;
        }
        for path in tiff_files(&xyz)? {
            out.push(TestScan {
                class: class.clone(),
                defect: name(&defect_dir),
                stem: stem(&path),
                path,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no <defect>/xyz/*.tiff scans under {}",
            test_root.display()
        )));
    }
    Ok(out)
}

/// Where the mask of a scored scan may live relative to `gt_dir`.
pub fn mask_candidates(gt_dir: &Path, class: &str, defect: &str, stem: &str) -> [PathBuf; 3] {
    let file = format!("{stem}.png");
    [
        gt_dir.join(defect).join("gt").join(&file),
        gt_dir.join("test").join(defect).join("gt").join(&file),
        gt_dir.join(class).join("test").join(defect).join("gt").join(&file),
    ]
}
