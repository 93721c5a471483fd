//! Two-dimensional Sobol sequence and pseudo-input placement.

use crate::error::{Error, Result};
use crate::linalg::{CVec, C64};

const BITS: usize = 32;

/// Gray-code Sobol generator for the first two dimensions with Joe-Kuo
/// direction numbers. The first point is the origin.
#[derive(Debug, Clone)]
pub struct Sobol2 {
    dirs: [[u32; BITS]; 2],
    state: [u32; 2],
    index: u64,
}

impl Default for Sobol2 {
    fn default() -> Self {
        Self::new()
    }
}

impl Sobol2 {
    pub fn new() -> Self {
        let mut dirs = [[0u32; BITS]; 2];
        let mut m = 1u32;
        for k in 0..BITS {
            dirs[0][k] = 1 << (BITS - 1 - k);
            if k > 0 {
                // Primitive polynomial x + 1: m_k = 2 m_{k-1} xor m_{k-1}.
                m ^= m << 1;
            }
            dirs[1][k] = m << (BITS - 1 - k);
        }
        Sobol2 {
            dirs,
            state: [0, 0],
            index: 0,
        }
    }

    fn advance(&mut self) {
        let c = (!self.index).trailing_zeros() as usize;
        assert!(c < BITS, "Sobol sequence exhausted");
        self.state[0] ^= self.dirs[0][c];
        self.state[1] ^= self.dirs[1][c];
        self.index += 1;
    }
}

impl Iterator for Sobol2 {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        let scale = 1.0 / (1u64 << BITS) as f64;
        let out = (self.state[0] as f64 * scale, self.state[1] as f64 * scale);
        self.advance();
        Some(out)
    }
}

/// Axis-aligned box in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { lo: -4.0, hi: 4.0 }
    }
}

#[derive(Debug, Clone)]
pub struct PseudoInputSet {
    pub points: CVec,
    pub bounds: Bounds,
}

impl PseudoInputSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// First `d` Sobol points mapped onto the box; dimension one gives the real
/// part and dimension two the imaginary part.
pub fn sobol_pseudo_inputs(d: usize, bounds: Bounds) -> Result<PseudoInputSet> {
    if d == 0 {
        return Err(Error::InvalidParameter("need at least one pseudo-input".into()));
    }
    if !(bounds.hi > bounds.lo) {
        return Err(Error::InvalidParameter(format!(
            "empty pseudo-input box [{}, {}]",
            bounds.lo, bounds.hi
        )));
    }
    let width = bounds.hi - bounds.lo;
    let points = CVec::from_iterator(
        d,
        Sobol2::new()
            .take(d)
            .map(|(x, y)| C64::new(bounds.lo + width * x, bounds.lo + width * y)),
    );
    Ok(PseudoInputSet { points, bounds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_table() {
        // Unscrambled reference values for the first eight points.
        let expected = [
            (0.0, 0.0),
            (0.5, 0.5),
            (0.75, 0.25),
            (0.25, 0.75),
            (0.375, 0.375),
            (0.875, 0.875),
            (0.625, 0.125),
            (0.125, 0.625),
        ];
        for (got, want) in Sobol2::new().zip(expected) {
            assert_eq!(got, want);
        }
    }

    #[test]
    fn first_point_maps_to_corner() {
        let set = sobol_pseudo_inputs(1, Bounds::default()).unwrap();
        assert_eq!(set.points[0], C64::new(-4.0, -4.0));
        assert!(sobol_pseudo_inputs(0, Bounds::default()).is_err());
    }

    #[test]
    fn points_in_box_and_distinct() {
        let set = sobol_pseudo_inputs(100, Bounds::default()).unwrap();
        assert!(set
            .points
            .iter()
            .all(|z| (-4.0..=4.0).contains(&z.re) && (-4.0..=4.0).contains(&z.im)));
        let set = sobol_pseudo_inputs(256, Bounds::default()).unwrap();
        for i in 0..256 {
            for j in 0..i {
                assert!((set.points[i] - set.points[j]).norm() > 0.0);
            }
        }
    }

    #[test]
    fn dyadic_blocks_are_balanced() {
        // Each block of 2^k points puts one point in every 2^-k-wide column.
        let pts: Vec<_> = Sobol2::new().take(64).collect();
        for dim in 0..2 {
            let mut hits = [0usize; 64];
            for p in &pts {
                let v = if dim == 0 { p.0 } else { p.1 };
                hits[(v * 64.0) as usize] += 1;
            }
            assert!(hits.iter().all(|&h| h == 1));
        }
    }
}
