//! 10-20 channel labels, the 5×5 sensorimotor grid, and approximate scalp
//! coordinates used by the synthetic generator.

use crate::error::{Error, Result};

pub const GRID_ROWS: [&str; 5] = ["F", "FC", "C", "CP", "P"];
/// Column suffixes, left to right: odd-outer, odd-inner, midline, even-inner, even-outer.
pub const GRID_COLS: [&str; 5] = ["3", "1", "z", "2", "4"];
pub const GRID_SIZE: usize = 5;

/// Channel names of the grid, row-major.
pub fn grid_names() -> Vec<String> {
    GRID_ROWS
        .iter()
        .flat_map(|r| GRID_COLS.iter().map(move |c| format!("{r}{c}")))
        .collect()
}

/// Indices into `channels` for each grid cell (row-major), matched
/// case-insensitively. Every absent label is reported.
pub fn select_and_grid<S: AsRef<str>>(channels: &[S]) -> Result<[[usize; GRID_SIZE]; GRID_SIZE]> {
    let mut grid = [[0; GRID_SIZE]; GRID_SIZE];
    let mut missing = Vec::new();
    for (i, name) in grid_names().into_iter().enumerate() {
        match channels.iter().position(|c| c.as_ref().eq_ignore_ascii_case(&name)) {
            Some(idx) => grid[i / GRID_SIZE][i % GRID_SIZE] = idx,
            None => missing.push(name),
        }
    }
    if missing.is_empty() {
        Ok(grid)
    } else {
        Err(Error::MissingChannels(missing))
    }
}

/// 60-channel extended 10-20 montage covering the grid.
pub const MONTAGE_60: [&str; 60] = [
    "Fp1", "Fp2", "AF7", "AF3", "AFz", "AF4", "AF8", "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8", "FT7",
    "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8", "T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8",
    "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8", "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6",
    "P8", "PO7", "PO3", "POz", "PO4", "PO8", "O1", "Oz", "O2",
];

/// Position of a 10-20 label in grid units: `(row, col)` where the grid's
/// F row is 0 and its odd-outer column is 0. Labels outside the grid get
/// coordinates on the same lattice.
pub fn scalp_position(name: &str) -> Option<(f64, f64)> {
    let split = name.find(|c: char| c.is_ascii_digit() || c == 'z' || c == 'Z')?;
    let (prefix, suffix) = name.split_at(split);
    let row = match prefix.to_ascii_uppercase().as_str() {
        "FP" => -2.0,
        "AF" => -1.0,
        "F" => 0.0,
        "FC" | "FT" => 1.0,
        "C" | "T" => 2.0,
        "CP" | "TP" => 3.0,
        "P" => 4.0,
        "PO" => 5.0,
        "O" => 6.0,
        _ => return None,
    };
    let lateral = if suffix.eq_ignore_ascii_case("z") {
        0.0
    } else {
        let n: u32 = suffix.parse().ok()?;
        let step = n.div_ceil(2) as f64;
        if n % 2 == 1 {
            -step
        } else {
            step
        }
    };
    Some((row, lateral + 2.0))
}
