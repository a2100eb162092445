//! Raw-table fixtures with the column layout and observed label sets of the
//! Clave, Nursery and Mushroom files.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use corr_rr::RngStream;
use rand::Rng;

/// Per-column labels of the Mushroom file, class first, in file order. Only
/// labels that occur in the data are listed.
pub const MUSHROOM_COLUMNS: [&[&str]; 23] = [
    &["e", "p"],
    &["b", "c", "x", "f", "k", "s"],
    &["f", "g", "y", "s"],
    &["n", "b", "c", "g", "r", "p", "u", "e", "w", "y"],
    &["t", "f"],
    &["a", "l", "c", "y", "f", "m", "n", "p", "s"],
    &["a", "f"],
    &["c", "w"],
    &["b", "n"],
    &["k", "n", "b", "h", "g", "r", "o", "p", "u", "e", "w", "y"],
    &["e", "t"],
    &["b", "c", "e", "r", "?"],
    &["f", "y", "k", "s"],
    &["f", "y", "k", "s"],
    &["n", "b", "c", "g", "o", "p", "e", "w", "y"],
    &["n", "b", "c", "g", "o", "p", "e", "w", "y"],
    &["p"],
    &["n", "o", "w", "y"],
    &["n", "o", "t"],
    &["e", "f", "l", "n", "p"],
    &["k", "n", "b", "h", "r", "o", "u", "w", "y"],
    &["a", "c", "n", "s", "v", "y"],
    &["g", "l", "m", "p", "u", "w", "d"],
];

pub const MUSHROOM_ROWS: usize = 8124;

const NURSERY_ATTRIBUTES: [&[&str]; 8] = [
    &["usual", "pretentious", "great_pret"],
    &["proper", "less_proper", "improper", "critical", "very_crit"],
    &["complete", "completed", "incomplete", "foster"],
    &["1", "2", "3", "more"],
    &["convenient", "less_conv", "critical"],
    &["convenient", "inconv"],
    &["nonprob", "slightly_prob", "problematic"],
    &["recommended", "priority", "not_recom"],
];

pub const NURSERY_ROWS: usize = 12960;
pub const CLAVE_ROWS: usize = 10800;

/// Mushroom-shaped table: every cell drawn uniformly from its column's labels.
pub fn mushroom_text(seed: u64) -> String {
    let mut rng = RngStream::from_seed(seed);
    let mut out = String::new();
    for _ in 0..MUSHROOM_ROWS {
        let row: Vec<&str> = MUSHROOM_COLUMNS
            .iter()
            .map(|labels| labels[rng.gen_range(0..labels.len())])
            .collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}

/// Full factorial over the eight Nursery attributes plus a rule-based class.
pub fn nursery_text() -> String {
    let mut out = String::new();
    let sizes: Vec<usize> = NURSERY_ATTRIBUTES.iter().map(|a| a.len()).collect();
    let mut idx = vec![0usize; sizes.len()];
    for row in 0..NURSERY_ROWS {
        let labels: Vec<&str> = idx.iter().zip(NURSERY_ATTRIBUTES).map(|(&i, a)| a[i]).collect();
        let class = if labels[7] == "not_recom" {
            "not_recom"
        } else if row < 2 {
            "recommend"
        } else if labels[0] == "great_pret" || labels[1] == "critical" || labels[1] == "very_crit" {
            "spec_prior"
        } else if labels[4] == "convenient" && labels[6] == "nonprob" && labels[7] == "recommended" {
            "very_recom"
        } else {
            "priority"
        };
        writeln!(out, "{},{class}", labels.join(",")).unwrap();
        for j in (0..idx.len()).rev() {
            idx[j] += 1;
            if idx[j] < sizes[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    out
}

/// Clave-shaped table: 16 binary onset columns and a one-hot class over four
/// columns, whitespace separated.
pub fn clave_text(seed: u64) -> String {
    let mut rng = RngStream::from_seed(seed);
    let mut out = String::new();
    for _ in 0..CLAVE_ROWS {
        let mut cells: Vec<String> = (0..16).map(|_| rng.gen_range(0..2u8).to_string()).collect();
        let class = rng.gen_range(0..4);
        cells.extend((0..4).map(|c| u8::from(c == class).to_string()));
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    out
}

pub fn write_fixture(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}
