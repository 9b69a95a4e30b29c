//! CSV tables with LF line endings and a gnuplot recipe per table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    /// Derived value that does not exist for this row.
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:e}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

/// Log-log or linear plot of columns `y` against column `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub y: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub plot: Option<PlotSpec>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            plot: None,
        }
    }

    pub fn with_plot(mut self, x: &str, y: &[&str], log_x: bool, log_y: bool) -> Self {
        self.plot = Some(PlotSpec {
            x: x.to_string(),
            y: y.iter().map(|c| c.to_string()).collect(),
            log_x,
            log_y,
        });
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric entries of a column; empty cells become `None`.
    pub fn floats(&self, name: &str) -> Vec<Option<f64>> {
        let Some(j) = self.column(name) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .map(|r| match &r[j] {
                Cell::Float(v) => Some(*v),
                Cell::Int(v) => Some(*v as f64),
                _ => None,
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Gnuplot script that plots the CSV by column name.
    pub fn plot_script(&self) -> Option<String> {
        let plot = self.plot.as_ref()?;
        let mut s = String::new();
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set key autotitle columnhead");
        let _ = writeln!(s, "set xlabel '{}'", plot.x);
        if plot.log_x {
            let _ = writeln!(s, "set logscale x");
        }
        if plot.log_y {
            let _ = writeln!(s, "set logscale y");
        }
        let curves: Vec<String> = plot
            .y
            .iter()
            .map(|y| format!("'{}.csv' using '{}':'{}' with linespoints", self.name, plot.x, y))
            .collect();
        let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
        Some(s)
    }
}

/// Writes `<name>.csv` and, where a plot is attached, `<name>.gp`.
pub fn write_tables(dir: &Path, tables: &[Table]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for table in tables {
        if table.name.is_empty() || table.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid table name `{}`", table.name)));
        }
        let csv = dir.join(format!("{}.csv", table.name));
        std::fs::write(&csv, table.to_csv())?;
        written.push(csv);
        if let Some(script) = table.plot_script() {
            let gp = dir.join(format!("{}.gp", table.name));
            std::fs::write(&gp, script)?;
            written.push(gp);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new("demo", &["level", "h", "order", "flag"]);
        t.push(vec![3usize.into(), 0.125.into(), Cell::Empty, false.into()]);
        t.push(vec![4usize.into(), 0.0625.into(), 1.5.into(), true.into()]);
        assert_eq!(t.to_csv(), "level,h,order,flag\n3,1.25e-1,,false\n4,6.25e-2,1.5e0,true\n");
        assert_eq!(t.floats("order"), vec![None, Some(1.5)]);
    }

    #[test]
    fn writes_csv_and_plot() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("rate", &["h", "err"]).with_plot("h", &["err"], true, true);
        t.push(vec![0.5.into(), 0.1.into()]);
        let files = write_tables(dir.path(), &[t]).unwrap();
        assert_eq!(files.len(), 2);
        let gp = std::fs::read_to_string(dir.path().join("rate.gp")).unwrap();
        assert!(gp.contains("'rate.csv' using 'h':'err'"));
        let csv = std::fs::read(dir.path().join("rate.csv")).unwrap();
        assert!(!csv.contains(&b'\r'));
    }
}
