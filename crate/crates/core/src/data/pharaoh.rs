//! Pharaoh alignment lines: space-separated `i-j` links, 0-based.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::corpus::Links;
use crate::{Error, Result};

/// Parses one line; `line_no` (1-based) is used in error messages.
pub fn parse_line(line: &str, line_no: usize) -> Result<Links> {
    let mut links = Links::new();
    for tok in line.split_whitespace() {
        let bad = || Error::Parse {
            line: line_no,
            msg: format!("malformed link `{tok}`"),
        };
        let (s, t) = tok.split_once('-').ok_or_else(bad)?;
        let s: usize = s.parse().map_err(|_| bad())?;
        let t: usize = t.parse().map_err(|_| bad())?;
        links.insert((s, t));
    }
    Ok(links)
}

pub fn parse(text: &str) -> Result<Vec<Links>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| parse_line(line, i + 1))
        .collect()
}

/// Links in ascending order, e.g. `0-0 1-2`.
pub fn format_line(links: &Links) -> String {
    let mut out = String::new();
    for (i, (s, t)) in links.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{s}-{t}");
    }
    out
}

/// One newline-terminated line per link set.
pub fn format(sets: &[Links]) -> String {
    let mut out = String::new();
    for links in sets {
        out.push_str(&format_line(links));
        out.push('\n');
    }
    out
}
