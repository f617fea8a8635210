use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of the square stacking grid.
pub const GRID: usize = 3;
/// Number of grid cells; also the width of each action head.
pub const CELLS: usize = GRID * GRID;

/// A grid cell addressed by `(row, col)`. Row 0 is the ground level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u8; 2]", into = "[u8; 2]")]
pub struct Cell {
    pub row: u8,
    pub col: u8,
}

impl Cell {
    pub fn new(row: u8, col: u8) -> Result<Self> {
        if (row as usize) < GRID && (col as usize) < GRID {
            Ok(Self { row, col })
        } else {
            Err(Error::InvalidRecord(format!(
                "cell ({row}, {col}) outside the {GRID}x{GRID} grid"
            )))
        }
    }

    /// Row-major index in `0..9`.
    pub fn index(self) -> usize {
        self.row as usize * GRID + self.col as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= CELLS {
            return Err(Error::InvalidRecord(format!("cell index {index} >= {CELLS}")));
        }
        Ok(Self {
            row: (index / GRID) as u8,
            col: (index % GRID) as u8,
        })
    }
}

impl TryFrom<[u8; 2]> for Cell {
    type Error = Error;

    fn try_from(rc: [u8; 2]) -> Result<Self> {
        Cell::new(rc[0], rc[1])
    }
}

impl From<Cell> for [u8; 2] {
    fn from(c: Cell) -> Self {
        [c.row, c.col]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Action specifics: which cell is picked and where the box is released.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawAction")]
pub struct ActionSpec {
    pub pick: Cell,
    pub release: Cell,
}

#[derive(Deserialize)]
struct RawAction {
    pick: Cell,
    release: Cell,
}

impl TryFrom<RawAction> for ActionSpec {
    type Error = Error;

    fn try_from(raw: RawAction) -> Result<Self> {
        ActionSpec::new(raw.pick, raw.release)
    }
}

impl ActionSpec {
    pub fn new(pick: Cell, release: Cell) -> Result<Self> {
        if pick == release {
            return Err(Error::InvalidRecord(format!(
                "pick and release are the same cell {pick}"
            )));
        }
        Ok(Self { pick, release })
    }

    pub fn from_indices(pick: usize, release: usize) -> Result<Self> {
        Self::new(Cell::from_index(pick)?, Cell::from_index(release)?)
    }
}

impl fmt::Display for ActionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pick {} -> release {}", self.pick, self.release)
    }
}
