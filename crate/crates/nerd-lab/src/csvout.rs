//! A tiny CSV builder: header row, comma separation, minimal quoting.
//! Numeric cells should be produced with [`crate::textio::fmt_f64`] so
//! files are reproducible and lossless.

pub struct Csv {
    columns: usize,
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut csv = Csv { columns: header.len(), buf: String::new() };
        csv.push_cells(header.iter().map(|s| s.to_string()));
        csv
    }

    /// Append one row; panics if the arity disagrees with the header,
    /// which is always a programming error here.
    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        assert_eq!(cells.len(), self.columns, "CSV row arity mismatch");
        self.push_cells(cells.iter().map(|c| c.as_ref().to_string()));
    }

    fn push_cells(&mut self, cells: impl Iterator<Item = String>) {
        let mut first = true;
        for cell in cells {
            if !first {
                self.buf.push(',');
            }
            first = false;
            self.buf.push_str(&quote(&cell));
        }
        self.buf.push('\n');
    }

    pub fn render(self) -> String {
        self.buf
    }
}

fn quote(cell: &str) -> String {
    if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}
