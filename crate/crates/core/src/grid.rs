//! Square colour grids and the Hamming distance between them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A colour index in `[0, K)`. For two-colour grids `0` is black and `1` is white.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColorId(pub u8);

impl ColorId {
    pub const BLACK: ColorId = ColorId(0);
    pub const WHITE: ColorId = ColorId(1);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// An `n x n` grid of colour ids, stored row-major (`index = row * n + col`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    n: usize,
    k: usize,
    cells: Vec<ColorId>,
}

impl Grid {
    pub fn new(n: usize, k: usize, cells: Vec<ColorId>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("grid side must be positive"));
        }
        if !(1..=256).contains(&k) {
            return Err(invalid(format!("colour count {k} out of range 1..=256")));
        }
        if cells.len() != n * n {
            return Err(invalid(format!(
                "expected {} cells for a {n}x{n} grid, got {}",
                n * n,
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|c| c.index() >= k) {
            return Err(invalid(format!("colour {} not below K={k}", bad.0)));
        }
        Ok(Grid { n, k, cells })
    }

    /// A grid with every cell set to `color`.
    pub fn filled(n: usize, k: usize, color: ColorId) -> Result<Self> {
        Grid::new(n, k, vec![color; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[ColorId] {
        &self.cells
    }

    pub fn get(&self, cell: usize) -> ColorId {
        self.cells[cell]
    }

    pub fn at(&self, row: usize, col: usize) -> ColorId {
        self.cells[row * self.n + col]
    }

    /// Returns the successor state with `cell` recoloured.
    pub fn with_cell(&self, cell: usize, color: ColorId) -> Result<Grid> {
        if cell >= self.len() {
            return Err(invalid(format!("cell {cell} out of range")));
        }
        if color.index() >= self.k {
            return Err(invalid(format!("colour {} not below K={}", color.0, self.k)));
        }
        let mut next = self.clone();
        next.cells[cell] = color;
        Ok(next)
    }

    pub(crate) fn set(&mut self, cell: usize, color: ColorId) {
        self.cells[cell] = color;
    }

    pub fn check_compatible(&self, other: &Grid) -> Result<()> {
        if self.n != other.n || self.k != other.k {
            return Err(Error::DimensionMismatch {
                left_n: self.n,
                left_k: self.k,
                right_n: other.n,
                right_k: other.k,
            });
        }
        Ok(())
    }

    /// Parses the text form: `n` lines of `n` digits (`0-9`, then `a-z`).
    pub fn parse(text: &str, k: usize) -> Result<Grid> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let n = rows.len();
        let mut cells = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.chars().count() != n {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected {n} cells, found {}", row.chars().count()),
                });
            }
            for ch in row.chars() {
                let v = ch.to_digit(36).ok_or_else(|| Error::Parse {
                    line: i + 1,
                    msg: format!("bad cell character {ch:?}"),
                })?;
                cells.push(ColorId(v as u8));
            }
        }
        Grid::new(n, k, cells)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.cells.chunks(self.n) {
            for c in row {
                let ch = char::from_digit(c.0 as u32, 36).unwrap_or('?');
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for Grid {
    type Err = Error;

    /// Parses a two-colour grid; use [`Grid::parse`] for other palettes.
    fn from_str(s: &str) -> Result<Grid> {
        Grid::parse(s, 2)
    }
}

/// Number of cell positions where `a` and `b` differ.
pub fn hamming(a: &Grid, b: &Grid) -> Result<usize> {
    a.check_compatible(b)?;
    Ok(hamming_unchecked(a, b))
}

pub(crate) fn hamming_unchecked(a: &Grid, b: &Grid) -> usize {
    a.cells
        .iter()
        .zip(&b.cells)
        .filter(|(x, y)| x != y)
        .count()
}
