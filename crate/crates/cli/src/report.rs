/// Rows of named numeric columns, printable as TSV or an aligned text table.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.4}")
    }
}

/// Mean and population standard deviation of the finite entries.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push((label.into(), values));
    }

    /// Appends `mean` and `std` rows over the current rows.
    pub fn add_summary(&mut self) {
        let n = self.columns.len();
        let stats: Vec<(f64, f64)> = (0..n).map(|c| mean_std(self.rows.iter().map(|r| r.1[c]))).collect();
        self.rows.push(("mean".into(), stats.iter().map(|s| s.0).collect()));
        self.rows.push(("std".into(), stats.iter().map(|s| s.1).collect()));
    }

    pub fn to_tsv(&self, label: &str) -> String {
        let mut s = String::from(label);
        for c in &self.columns {
            s.push('\t');
            s.push_str(c);
        }
        s.push('\n');
        for (l, vals) in &self.rows {
            s.push_str(l);
            for v in vals {
                s.push('\t');
                s.push_str(&if v.is_nan() { "nan".to_string() } else { v.to_string() });
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self, label: &str) -> String {
        let mut grid: Vec<Vec<String>> = vec![std::iter::once(label.to_string()).chain(self.columns.iter().cloned()).collect()];
        for (l, vals) in &self.rows {
            grid.push(std::iter::once(l.clone()).chain(vals.iter().map(|&v| cell(v))).collect());
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for (k, row) in grid.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                .collect();
            s.push_str(line.join("  ").trim_end());
            s.push('\n');
            if k == 0 {
                s.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                s.push('\n');
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_and_formats() {
        let mut t = Table::new(&["A", "B"]);
        t.push("x", vec![1.0, f64::NAN]);
        t.push("y", vec![3.0, 0.5]);
        t.add_summary();
        let tsv = t.to_tsv("id");
        assert!(tsv.starts_with("id\tA\tB\n"));
        assert!(tsv.contains("mean\t2\t0.5\n"));
        assert!(tsv.contains("std\t1\t0\n"));
        assert!(t.to_text("id").contains("-"));
    }
}
