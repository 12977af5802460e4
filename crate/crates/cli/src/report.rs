//! Summaries of previously written series files.

use std::fmt::Write as _;

/// A parsed series file.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// `key: value` lines of the header block.
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Series {
    pub fn parse(text: &str) -> Result<Series, String> {
        let mut meta = Vec::new();
        let mut lines = text.lines();
        let mut columns = None;
        for line in lines.by_ref() {
            match line.strip_prefix('#') {
                Some(c) => {
                    if let Some((k, v)) = c.trim().split_once(": ") {
                        meta.push((k.to_string(), v.to_string()));
                    }
                }
                None => {
                    columns = Some(line.split(',').map(str::to_string).collect::<Vec<_>>());
                    break;
                }
            }
        }
        let columns = columns.ok_or("missing column line")?;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != columns.len() {
                return Err(format!("row {} has {} fields, expected {}", i + 1, row.len(), columns.len()));
            }
            rows.push(row);
        }
        Ok(Series { meta, columns, rows })
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    fn value(&self, row: &[String], col: usize) -> Option<f64> {
        row.get(col).and_then(|s| s.parse().ok())
    }

    /// Row indices grouped by the first column, in order of appearance.
    pub fn groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            match out.iter_mut().find(|(l, _)| *l == r[0]) {
                Some((_, v)) => v.push(i),
                None => out.push((r[0].clone(), vec![i])),
            }
        }
        out
    }

    /// Human-readable digest: per group the row count, time span, largest
    /// conservation residual, Lyapunov range and relative-entropy decay.
    pub fn summarize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} ({}), {} rows",
            self.meta("experiment").unwrap_or("?"),
            self.meta("model").unwrap_or("?"),
            self.rows.len()
        );
        let Some(time) = self.column("time") else {
            let Some(ok) = self.column("hypotheses_met") else { return out };
            let met = self.rows.iter().filter(|r| r[ok] == "1").count();
            let _ = writeln!(out, "  sweep: {met} of {} samples meet their hypotheses", self.rows.len());
            return out;
        };
        let residuals: Vec<usize> = (0..self.columns.len()).filter(|&c| self.columns[c].contains("residual")).collect();
        let lyap = self.column("lyapunov");
        let composite = self.column("composite");
        for (label, idx) in self.groups() {
            let first = &self.rows[idx[0]];
            let last = &self.rows[*idx.last().unwrap()];
            let span = (self.value(first, time).unwrap_or(f64::NAN), self.value(last, time).unwrap_or(f64::NAN));
            let worst = idx
                .iter()
                .flat_map(|&i| residuals.iter().filter_map(move |&c| self.value(&self.rows[i], c)))
                .fold(0.0, f64::max);
            let _ = write!(out, "  {label}: {} rows, t in [{:.4}, {:.4}], max residual {worst:.3e}", idx.len(), span.0, span.1);
            if let Some(c) = lyap {
                let _ = write!(
                    out,
                    ", L {:.6e} -> {:.6e}",
                    self.value(first, c).unwrap_or(f64::NAN),
                    self.value(last, c).unwrap_or(f64::NAN)
                );
            }
            if let Some(c) = composite {
                let (a, b) = (self.value(first, c).unwrap_or(f64::NAN), self.value(last, c).unwrap_or(f64::NAN));
                if a > 0.0 && b > 0.0 {
                    let _ = write!(out, ", composite down {:.2} decades", (a / b).log10());
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "# experiment: demo\n# model: NEW_mixture\n#   time [1/nu] simulation time\n\
variant,time,lyapunov,composite,energy_residual\n\
a,0,2,1,0\na,1,1,1e-3,1e-15\nb,0,5,1,0\n";

    #[test]
    fn parses_and_groups() {
        let s = Series::parse(TEXT).unwrap();
        assert_eq!(s.meta("experiment"), Some("demo"));
        assert_eq!(s.columns.len(), 5);
        assert_eq!(s.groups(), vec![("a".to_string(), vec![0, 1]), ("b".to_string(), vec![2])]);
        let r = s.summarize();
        assert!(r.contains("a: 2 rows") && r.contains("down 3.00 decades"), "{r}");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(Series::parse("a,b\n1\n").is_err());
        assert!(Series::parse("# only comments\n").is_err());
    }
}
