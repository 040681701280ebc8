//! Line-oriented instance files.
//!
//! ```text
//! # comment
//! n m
//! i row col value
//! ```
//!
//! Indices are 1-based, `row <= col`, and each line gives one upper-triangle
//! entry of `A_i`; the lower triangle is implied.

use std::fmt::Write as _;
use std::path::Path;

use super::instance::{SdpInstance, Triplet};
use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, name: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {name}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {name} from `{tok}`")))
}

pub fn parse_instance(text: &str) -> Result<SdpInstance> {
    let mut header: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        match header {
            None => {
                let n: usize = field(toks.next(), line, "n")?;
                let m: usize = field(toks.next(), line, "m")?;
                if toks.next().is_some() {
                    return Err(parse_err(line, "header must be `n m`"));
                }
                if m == 0 {
                    return Err(parse_err(line, "m must be ≥ 1"));
                }
                if n == 0 {
                    return Err(parse_err(line, "n must be ≥ 1"));
                }
                header = Some((n, m));
            }
            Some((n, m)) => {
                let i: usize = field(toks.next(), line, "constraint index")?;
                let row: usize = field(toks.next(), line, "row")?;
                let col: usize = field(toks.next(), line, "col")?;
                let value: f64 = field(toks.next(), line, "value")?;
                if toks.next().is_some() {
                    return Err(parse_err(line, "expected `i row col value`"));
                }
                if !(1..=m).contains(&i) {
                    return Err(parse_err(line, format!("constraint index {i} outside 1..={m}")));
                }
                if !(1..=n).contains(&row) || !(1..=n).contains(&col) {
                    return Err(parse_err(line, format!("entry ({row}, {col}) outside 1..={n}")));
                }
                if row > col {
                    return Err(parse_err(line, format!("row {row} > col {col}")));
                }
                if !value.is_finite() {
                    return Err(parse_err(line, "value is not finite"));
                }
                triplets.push((
                    line,
                    Triplet {
                        constraint: i - 1,
                        row: row - 1,
                        col: col - 1,
                        value,
                    },
                ));
            }
        }
    }
    let (n, m) = header.ok_or_else(|| parse_err(text.lines().count().max(1), "missing `n m` header"))?;

    let mut keys: Vec<_> = triplets
        .iter()
        .map(|(l, t)| ((t.constraint, t.row, t.col), *l))
        .collect();
    keys.sort();
    if let Some(w) = keys.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(parse_err(w[1].1, format!("duplicate entry (first on line {})", w[0].1)));
    }
    SdpInstance::from_triplets(n, m, triplets.into_iter().map(|(_, t)| t).collect())
}

/// Canonical text form: sorted by `(i, row, col)`, shortest round-trip floats.
pub fn format_instance(inst: &SdpInstance) -> String {
    let mut out = format!("{} {}\n", inst.n(), inst.m());
    for t in inst.triplets() {
        writeln!(out, "{} {} {} {}", t.constraint + 1, t.row + 1, t.col + 1, t.value).unwrap();
    }
    out
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<SdpInstance> {
    parse_instance(&std::fs::read_to_string(path)?)
}

pub fn save_instance(inst: &SdpInstance, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_instance(inst))?;
    Ok(())
}
