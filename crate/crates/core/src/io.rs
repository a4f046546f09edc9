//! Plain-text problem files.
//!
//! ```text
//! # stss-mmv v1 <N> <D> <T> <noise_var>
//! [A]
//! <N rows of D comma-separated values>
//! [Y]
//! <N rows of T values>
//! [X]        (optional, D rows of T values)
//! [Z]        (optional, D rows of T values in {0, 1})
//! [GAMMA]    (optional, D rows of T values)
//! ```
//!
//! Matrices are written row-major with 17 significant digits, so a write/read
//! cycle reproduces every value bit for bit.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::prior::{GroundTruth, MmvProblem};

pub const MAGIC: &str = "stss-mmv";
pub const VERSION: &str = "v1";

/// Contents of a problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub problem: MmvProblem,
    pub x: Option<DMatrix<f64>>,
    pub z: Option<DMatrix<u8>>,
    pub gamma: Option<DMatrix<f64>>,
}

fn write_block<W: Write, T>(
    w: &mut W,
    name: &str,
    m: &DMatrix<T>,
    fmt: impl Fn(T) -> String,
) -> std::io::Result<()>
where
    T: nalgebra::Scalar + Copy,
{
    writeln!(w, "[{name}]")?;
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| fmt(m[(r, c)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_problem<W: Write>(w: &mut W, problem: &MmvProblem, truth: Option<&GroundTruth>) -> Result<()> {
    writeln!(
        w,
        "# {MAGIC} {VERSION} {} {} {} {}",
        problem.n(),
        problem.d(),
        problem.t(),
        fmt_f64(problem.noise_var)
    )?;
    write_block(w, "A", &problem.a, fmt_f64)?;
    write_block(w, "Y", &problem.y, fmt_f64)?;
    if let Some(g) = truth {
        write_block(w, "X", &g.x, fmt_f64)?;
        write_block(w, "Z", &g.z, |v: u8| v.to_string())?;
        write_block(w, "GAMMA", &g.gamma, fmt_f64)?;
    }
    Ok(())
}

struct Block {
    name: String,
    line: usize,
    rows: Vec<Vec<f64>>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn to_matrix(block: &Block, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if block.rows.len() != rows {
        return Err(parse_err(
            block.line,
            format!("block [{}] has {} rows, expected {rows}", block.name, block.rows.len()),
        ));
    }
    for (k, r) in block.rows.iter().enumerate() {
        if r.len() != cols {
            return Err(parse_err(
                block.line + 1 + k,
                format!("row has {} values, expected {cols}", r.len()),
            ));
        }
    }
    Ok(DMatrix::from_fn(rows, cols, |r, c| block.rows[r][c]))
}

pub fn read_problem<R: BufRead>(r: R) -> Result<ProblemFile> {
    let mut lines = r.lines().enumerate();
    let (n, d, t, noise_var) = loop {
        let Some((idx, line)) = lines.next() else {
            return Err(parse_err(0, "empty problem file"));
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 || fields[0] != "#" || fields[1] != MAGIC || fields[2] != VERSION {
            return Err(parse_err(idx + 1, format!("bad header: {line:?}")));
        }
        let num = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| parse_err(idx + 1, format!("bad dimension {s:?}")))
        };
        let noise: f64 = fields[6]
            .parse()
            .map_err(|_| parse_err(idx + 1, format!("bad noise variance {:?}", fields[6])))?;
        break (num(fields[3])?, num(fields[4])?, num(fields[5])?, noise);
    };

    let mut blocks: Vec<Block> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            if blocks.iter().any(|b| b.name == name) {
                return Err(parse_err(idx + 1, format!("duplicate block [{name}]")));
            }
            blocks.push(Block {
                name: name.to_string(),
                line: idx + 1,
                rows: Vec::new(),
            });
            continue;
        }
        let Some(block) = blocks.last_mut() else {
            return Err(parse_err(idx + 1, "data before the first block"));
        };
        let row = trimmed
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(idx + 1, format!("bad number {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        block.rows.push(row);
    }

    let find = |name: &str| blocks.iter().find(|b| b.name == name);
    for b in &blocks {
        if !matches!(b.name.as_str(), "A" | "Y" | "X" | "Z" | "GAMMA") {
            return Err(parse_err(b.line, format!("unknown block [{}]", b.name)));
        }
    }
    let a = to_matrix(find("A").ok_or_else(|| parse_err(0, "missing [A] block"))?, n, d)?;
    let y = to_matrix(find("Y").ok_or_else(|| parse_err(0, "missing [Y] block"))?, n, t)?;
    let x = find("X").map(|b| to_matrix(b, d, t)).transpose()?;
    let z = match find("Z") {
        Some(b) => {
            let m = to_matrix(b, d, t)?;
            if m.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(parse_err(b.line, "[Z] entries must be 0 or 1"));
            }
            Some(m.map(|v| v as u8))
        }
        None => None,
    };
    let gamma = find("GAMMA").map(|b| to_matrix(b, d, t)).transpose()?;
    Ok(ProblemFile {
        problem: MmvProblem::new(a, y, noise_var)?,
        x,
        z,
        gamma,
    })
}
