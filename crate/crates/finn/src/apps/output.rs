//! File emission helpers. All writes are atomic (temp file in the
//! target directory, then rename) and floats are printed with Rust's
//! shortest round-trip formatting, so emitted CSV parses back to the
//! exact same bits.

use std::fs;
use std::path::Path;

pub fn atomic_write(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Generic grid CSV: one header row, then one row per record.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats_exactly() {
        let dir = std::env::temp_dir().join("finn-output-test");
        let path = dir.join("grid.csv");
        let value = 0.1 + 0.2; // 0.30000000000000004
        write_csv(&path, "a,b", &[vec![value, -1e-17]]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("a,b"));
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(row[0].to_bits(), value.to_bits());
        assert_eq!(row[1].to_bits(), (-1e-17f64).to_bits());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn atomic_write_replaces_existing() {
        let dir = std::env::temp_dir().join("finn-output-test-2");
        let path = dir.join("f.txt");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert!(!dir.join("f.txt.tmp").exists());
        fs::remove_dir_all(&dir).ok();
    }
}
