//! File output: CSV with fixed-precision floats, pretty JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

const SIG_DIGITS: i32 = 9;

/// `x` with 9 significant digits; plain decimals for moderate magnitudes,
/// scientific notation otherwise.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // Round first so that carries such as 0.9999999999 → 1 fix the exponent.
    let x: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (SIG_DIGITS - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

pub fn opt9(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

/// Output directory with the files written into it so far.
pub struct OutputDir {
    root: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&root)
            .map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(Self {
            root,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let io = |e: csv::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush()
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_text(&path, &(text + "\n"))?;
        self.written.push(path.clone());
        Ok(path)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Lowercase policy tag used in file names and CSV rows.
pub fn policy_tag(p: &sigfree_core::PolicyKind) -> String {
    match p {
        sigfree_core::PolicyKind::Lqf { beta, .. } if *beta != 1.0 => format!("lqf-{}", sig9(*beta)),
        _ => p.name().to_lowercase(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.8), "0.800000000");
        assert_eq!(sig9(4.0 / 9.0), "0.444444444");
        assert_eq!(sig9(123.456789012), "123.456789");
        assert_eq!(sig9(-2.5), "-2.50000000");
        assert_eq!(sig9(1.0 / 3.0 * 1e-7), "3.33333333e-8");
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(0.99999999999), "1.00000000");
        assert_eq!(sig9(9.9999999999e-6), "0.0000100000000");
        assert_eq!(sig9(f64::INFINITY), "inf");
    }

    #[test]
    fn tags_carry_non_default_beta() {
        assert_eq!(policy_tag(&sigfree_core::PolicyKind::MS), "ms");
        assert_eq!(policy_tag(&sigfree_core::PolicyKind::lqf(1.0)), "lqf");
        assert_eq!(policy_tag(&sigfree_core::PolicyKind::lqf(1.5)), "lqf-1.50000000");
    }
}
