//! Row-major, background-first run-length encoding of binary masks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RleError {
    #[error("runs sum to {got}, expected {expected}")]
    BadTotal { got: u64, expected: u64 },
    #[error("zero-length run at position {0}")]
    ZeroRun(usize),
}

/// Alternating background/foreground run lengths in row-major order, always
/// starting with a (possibly empty) background run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<u32>,
}

impl RleMask {
    pub fn encode(mask: &BinaryMask) -> Self {
        let mut runs = Vec::new();
        let mut current = 0u8;
        let mut len = 0u32;
        for &v in mask.data() {
            if v != current {
                runs.push(len);
                len = 0;
                current = v;
            }
            len += 1;
        }
        if len > 0 || runs.is_empty() {
            runs.push(len);
        }
        Self { width: mask.width(), height: mask.height(), runs }
    }

    pub fn decode(&self) -> Result<BinaryMask, RleError> {
        let expected = (self.width * self.height) as u64;
        let got: u64 = self.runs.iter().map(|&r| r as u64).sum();
        if got != expected {
            return Err(RleError::BadTotal { got, expected });
        }
        if let Some(i) = self.runs.iter().skip(1).position(|&r| r == 0) {
            return Err(RleError::ZeroRun(i + 1));
        }
        let mut data = Vec::with_capacity(expected as usize);
        for (i, &r) in self.runs.iter().enumerate() {
            data.extend(std::iter::repeat_n((i % 2) as u8, r as usize));
        }
        Ok(BinaryMask::from_vec(self.width, self.height, data).expect("length checked"))
    }

    /// Foreground pixel count, read straight off the odd runs.
    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    RleMask::encode(mask)
}

pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask, RleError> {
    rle.decode()
}
