//! Run-length encoding of boolean masks.
//!
//! A mask is scanned row-major and stored as alternating run lengths,
//! starting with a run of `false` (which may be zero). `[0, 3, 2]` is
//! `true, true, true, false, false`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
}

pub fn encode(mask: &[bool]) -> Vec<u32> {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &m in mask {
        if m != current {
            counts.push(run);
            current = m;
            run = 0;
        }
        run += 1;
    }
    if run > 0 || counts.is_empty() {
        counts.push(run);
    }
    counts
}

pub fn decode(counts: &[u32], len: usize) -> Result<Vec<bool>> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total != len as u64 {
        return Err(Error::invalid(format!("RLE covers {total} pixels, expected {len}")));
    }
    let mut out = Vec::with_capacity(len);
    for (i, &c) in counts.iter().enumerate() {
        out.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
    }
    Ok(out)
}

impl RleMask {
    pub fn from_mask(width: usize, height: usize, mask: &[bool]) -> Self {
        assert_eq!(mask.len(), width * height, "mask size");
        RleMask {
            width,
            height,
            counts: encode(mask),
        }
    }

    pub fn to_mask(&self) -> Result<Vec<bool>> {
        decode(&self.counts, self.width * self.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_examples() {
        assert_eq!(encode(&[true, true, true, false, false]), vec![0, 3, 2]);
        assert_eq!(encode(&[false, false, true]), vec![2, 1]);
        assert_eq!(encode(&[]), vec![0]);
        assert_eq!(decode(&[0], 0).unwrap(), Vec::<bool>::new());
        assert!(decode(&[1, 2], 4).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(mask in prop::collection::vec(any::<bool>(), 0..200)) {
            let c = encode(&mask);
            prop_assert_eq!(decode(&c, mask.len()).unwrap(), mask);
            prop_assert!(c[1..].iter().all(|&r| r > 0));
        }
    }
}
