//! Text persistence primitives: lossless float formatting, atomic writes,
//! and a line cursor that turns parse failures into `path:line: message`
//! diagnostics.

use crate::{io_err, LabError, Result};
use std::fs;
use std::path::Path;

/// Format a double with 17 significant digits — enough for exact
/// round-tripping through text.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a file atomically: the content lands under a temporary name first
/// and is renamed into place, so readers never observe a half-written file
/// and an interrupted run leaves no corrupt artifact behind.
pub fn atomic_write(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    fs::write(&tmp_path, content).map_err(|e| io_err(&tmp_path, e))?;
    fs::rename(&tmp_path, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Cursor over the lines of a loaded text artifact. Every accessor reports
/// failures as `path:line: message`.
pub struct LineReader<'a> {
    path: String,
    lines: Vec<&'a str>,
    next: usize,
}

impl<'a> LineReader<'a> {
    pub fn new(path: &Path, content: &'a str) -> Self {
        LineReader {
            path: path.display().to_string(),
            lines: content.lines().collect(),
            next: 0,
        }
    }

    fn fail(&self, line: usize, msg: impl Into<String>) -> LabError {
        LabError::Parse { path: self.path.clone(), line, msg: msg.into() }
    }

    /// 1-based number of the line the next read will consume.
    pub fn line_number(&self) -> usize {
        self.next + 1
    }

    pub fn is_exhausted(&self) -> bool {
        self.next >= self.lines.len()
    }

    pub fn next_line(&mut self) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.next)
            .copied()
            .ok_or_else(|| self.fail(self.lines.len() + 1, "unexpected end of file"))?;
        self.next += 1;
        Ok(line)
    }

    /// Read a line of the form `<key> <rest>`, checking the key.
    pub fn keyed_line(&mut self, key: &str) -> Result<&'a str> {
        let at = self.line_number();
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            _ if line == key => Ok(""),
            _ => Err(self.fail(at, format!("expected `{key} ...`, found `{line}`"))),
        }
    }

    pub fn keyed_f64(&mut self, key: &str) -> Result<f64> {
        let at = self.line_number();
        let rest = self.keyed_line(key)?;
        rest.trim()
            .parse::<f64>()
            .map_err(|_| self.fail(at, format!("expected a float after `{key}`, found `{rest}`")))
    }

    pub fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let at = self.line_number();
        let rest = self.keyed_line(key)?;
        rest.trim()
            .parse::<usize>()
            .map_err(|_| self.fail(at, format!("expected an integer after `{key}`, found `{rest}`")))
    }

    pub fn keyed_u64(&mut self, key: &str) -> Result<u64> {
        let at = self.line_number();
        let rest = self.keyed_line(key)?;
        rest.trim()
            .parse::<u64>()
            .map_err(|_| self.fail(at, format!("expected an integer after `{key}`, found `{rest}`")))
    }

    /// Parse `count` whitespace-separated floats from the rest of a keyed
    /// line.
    pub fn keyed_f64_list(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let at = self.line_number();
        let rest = self.keyed_line(key)?;
        let values: std::result::Result<Vec<f64>, _> =
            rest.split_whitespace().map(str::parse::<f64>).collect();
        let values =
            values.map_err(|_| self.fail(at, format!("malformed float in `{key}` list")))?;
        if values.len() != count {
            return Err(self.fail(
                at,
                format!("expected {count} values after `{key}`, found {}", values.len()),
            ));
        }
        Ok(values)
    }

    /// Expect a line exactly equal to `want` (version headers and the like).
    pub fn expect_line(&mut self, want: &str) -> Result<()> {
        let at = self.line_number();
        let line = self.next_line()?;
        if line != want {
            return Err(self.fail(at, format!("expected `{want}`, found `{line}`")));
        }
        Ok(())
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.next < self.lines.len() {
            return Err(self.fail(self.line_number(), "trailing content"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips_exactly() {
        for x in [
            0.0,
            -0.0,
            1.0,
            core::f64::consts::PI,
            1e-300,
            -3.337610787760802e222,
            f64::MIN_POSITIVE,
            0.1 + 0.2,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_tmp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/dir/file.txt");
        atomic_write(&path, "first").unwrap();
        atomic_write(&path, "second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
        let leftovers: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(leftovers, vec!["file.txt"]);
    }

    #[test]
    fn line_reader_reports_path_and_line() {
        let content = "header v1\ncount 3\nvalue x";
        let path = Path::new("some/artifact.txt");
        let mut r = LineReader::new(path, content);
        r.expect_line("header v1").unwrap();
        assert_eq!(r.keyed_usize("count").unwrap(), 3);
        let err = r.keyed_f64("value").unwrap_err().to_string();
        assert_eq!(err, "some/artifact.txt:3: expected a float after `value`, found `x`");
        let mut r2 = LineReader::new(path, content);
        let err2 = r2.expect_line("other").unwrap_err().to_string();
        assert!(err2.starts_with("some/artifact.txt:1:"), "{err2}");
    }

    #[test]
    fn keyed_lists_check_arity() {
        let content = "w 1.0 2.0 3.0\nshort 1.0";
        let mut r = LineReader::new(Path::new("f"), content);
        assert_eq!(r.keyed_f64_list("w", 3).unwrap(), vec![1.0, 2.0, 3.0]);
        let err = r.keyed_f64_list("short", 2).unwrap_err().to_string();
        assert!(err.contains("expected 2 values"), "{err}");
    }
}
