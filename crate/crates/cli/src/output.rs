use std::fs;
use std::path::{Path, PathBuf};

use crate::Failure;

pub const OUT_DIR_ENV: &str = "HYPSTAB_OUT_DIR";

/// Output directory, created if missing.
pub fn out_dir(scenario_dir: Option<&str>) -> Result<PathBuf, Failure> {
    let dir = std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .or_else(|| scenario_dir.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

/// Compact decimal label for file names: `2`, `0.5`, `1.25`.
pub fn label(v: f64) -> String {
    let s = format!("{v:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_drop_trailing_zeros() {
        assert_eq!(label(2.0), "2");
        assert_eq!(label(0.5), "0.5");
        assert_eq!(label(1.25), "1.25");
        assert_eq!(label(0.0), "0");
    }
}
