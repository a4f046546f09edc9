//! CSV writers. Rows are written in the order given; callers sort first.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::aggregate::{aggregate, CellSummary, SUMMARY_HEADER};
use crate::config::Experiment;
use crate::experiment::{ResultRow, RESULT_HEADER};
use crate::Result;

pub fn write_rows<W: Write>(w: &mut W, rows: &[ResultRow]) -> std::io::Result<()> {
    writeln!(w, "{RESULT_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

pub fn write_summary<W: Write>(w: &mut W, cells: &[CellSummary]) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for c in cells {
        writeln!(w, "{}", c.to_csv())?;
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes `<exp>.csv` and `<exp>_summary.csv` into `dir` and returns their
/// paths.
pub fn write_experiment(dir: &Path, exp: Experiment, rows: &[ResultRow]) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let rows_path = dir.join(format!("{}.csv", exp.name()));
    let summary_path = dir.join(format!("{}_summary.csv", exp.name()));
    write_file(&rows_path, |w| write_rows(w, rows))?;
    let cells = aggregate(rows);
    write_file(&summary_path, |w| write_summary(w, &cells))?;
    Ok((rows_path, summary_path))
}
