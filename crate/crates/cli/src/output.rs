use std::io::Write;
use std::path::{Path, PathBuf};

use bbgp::infer::Estimate;

use crate::error::{CliError, Result};

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Writes the JSON document to `out` and the text report to `out` with a
/// `.txt` extension, or prints the text when no output path is given.
pub fn emit<T: serde::Serialize>(out: Option<&Path>, doc: &T, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            let json = serde_json::to_vec_pretty(doc).map_err(|e| CliError::Spec(e.to_string()))?;
            write_atomic(path, &json)?;
            write_atomic(&path.with_extension("txt"), text.as_bytes())?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.4e}")
    } else {
        format!("{v:.4}")
    }
}

/// Standard error column: `n.i.` marks quantities that are not identified.
pub fn fmt_se(se: Option<f64>) -> String {
    match se {
        None => "-".into(),
        Some(s) if s.is_nan() => "n.i.".into(),
        Some(s) => fmt_value(s),
    }
}

pub fn fmt_estimate(e: &Estimate) -> String {
    match e.std_error {
        None => fmt_value(e.value),
        Some(_) => format!("{} ({})", fmt_value(e.value), fmt_se(e.std_error)),
    }
}

/// Left-aligns the first column and right-aligns the rest.
pub fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0; cols];
    for r in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        for (i, c) in r.iter().enumerate() {
            width[i] = width[i].max(c.chars().count());
        }
    }
    let line = |r: &[String]| {
        let mut s = String::from("  ");
        for (i, c) in r.iter().enumerate() {
            if i == 0 {
                s.push_str(&format!("{c:<w$}", w = width[i]));
            } else {
                s.push_str(&format!("  {c:>w$}", w = width[i]));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&format!("  {}\n", "-".repeat(width.iter().sum::<usize>() + 2 * (cols - 1))));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt_value(1.86), "1.8600");
        assert_eq!(fmt_se(Some(f64::NAN)), "n.i.");
        let t = table(&["a".into(), "bb".into()], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "  a    bb\n  -------\n  xyz   1\n");
    }
}
