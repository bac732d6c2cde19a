//! Neighbour down-sampler: splits one noisy frame into two half-resolution
//! sub-frames whose pixel pairs come from adjacent positions of the same
//! 2x2 cell. The pair is the training signal for the self-supervised loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvid_tensor::{Scalar, Tensor};

use crate::error::{Error, Result};

use super::PackedFrame;

/// Chosen source positions for one 2x2 cell, as in-cell indices
/// (0 = top-left, 1 = top-right, 2 = bottom-left, 3 = bottom-right).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellDraw {
    pub first: u8,
    pub second: u8,
}

/// The eight ordered 4-adjacent position pairs inside a 2x2 cell.
const ADJACENT_PAIRS: [(u8, u8); 8] =
    [(0, 1), (1, 0), (0, 2), (2, 0), (1, 3), (3, 1), (2, 3), (3, 2)];

/// Seeded position draws for every 2x2 cell of an `h x w` grid, row-major
/// over cells. One draw is shared by all four channels of a cell.
pub fn neighbor_positions(h: usize, w: usize, seed: u64) -> Result<Vec<CellDraw>> {
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Invalid(format!("extents {h}x{w} must be even")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = (h / 2) * (w / 2);
    Ok((0..cells)
        .map(|_| {
            let (a, b) = ADJACENT_PAIRS[rng.random_range(0..8)];
            CellDraw { first: a, second: b }
        })
        .collect())
}

/// Applies position draws to a `[C,H,W]` tensor, producing the two
/// half-resolution sub-tensors.
pub fn subsample_with<T: Scalar>(t: &Tensor<T>, draws: &[CellDraw]) -> Result<(Tensor<T>, Tensor<T>)> {
    if t.rank() != 3 {
        return Err(Error::Invalid(format!("expected [C,H,W], got {:?}", t.shape())));
    }
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Invalid(format!("extents {h}x{w} must be even")));
    }
    let (oh, ow) = (h / 2, w / 2);
    if draws.len() != oh * ow {
        return Err(Error::Invalid(format!("{} draws for {} cells", draws.len(), oh * ow)));
    }
    let mut s1 = vec![T::zero(); c * oh * ow];
    let mut s2 = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let d = draws[i * ow + j];
                let pick = |pos: u8| {
                    let (dy, dx) = ((pos / 2) as usize, (pos % 2) as usize);
                    t.data()[(ch * h + 2 * i + dy) * w + 2 * j + dx]
                };
                s1[(ch * oh + i) * ow + j] = pick(d.first);
                s2[(ch * oh + i) * ow + j] = pick(d.second);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], s1)?, Tensor::new(vec![c, oh, ow], s2)?))
}

/// Splits a packed frame into two sub-frames of half the packed extents.
pub fn neighbor_subsample_pair(p: &PackedFrame, seed: u64) -> Result<(PackedFrame, PackedFrame)> {
    let draws = neighbor_positions(p.height(), p.width(), seed)?;
    let (s1, s2) = subsample_with(&p.channels, &draws)?;
    Ok((
        PackedFrame::new(s1, p.black_level, p.white_level)?,
        PackedFrame::new(s2, p.black_level, p.white_level)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_adjacent_and_distinct() {
        let draws = neighbor_positions(16, 12, 42).unwrap();
        assert_eq!(draws.len(), 48);
        for d in draws {
            assert_ne!(d.first, d.second);
            let (r1, c1) = (d.first / 2, d.first % 2);
            let (r2, c2) = (d.second / 2, d.second % 2);
            let manhattan = (r1 as i32 - r2 as i32).abs() + (c1 as i32 - c2 as i32).abs();
            assert_eq!(manhattan, 1, "positions must be 4-adjacent");
        }
    }

    #[test]
    fn odd_extents_rejected() {
        assert!(neighbor_positions(5, 4, 0).is_err());
    }
}
