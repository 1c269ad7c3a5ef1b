//! Finite boxes `V_n = {-n, ..., n}^d` of the integer lattice.
//!
//! Sites are addressed either by coordinates ([`Site`]) or by a dense
//! mixed-radix index into the box. The toppling loop works on dense indices;
//! coordinates are used at API boundaries and for keying instruction stacks.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("box V_{n} in dimension {d} has too many sites for this platform")]
    TooLarge { d: usize, n: usize },
    #[error("margin {margin} exceeds box radius {n}")]
    MarginTooLarge { margin: usize, n: usize },
    #[error("site has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A point of `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(Vec<i64>);

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        Site(coords)
    }

    pub fn origin(d: usize) -> Self {
        Site(vec![0; d])
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// The site one step away along direction `dir` (see [`neighbors`]).
    pub fn step(&self, dir: usize) -> Site {
        let mut coords = self.0.clone();
        let axis = dir / 2;
        if dir.is_multiple_of(2) {
            coords[axis] -= 1;
        } else {
            coords[axis] += 1;
        }
        Site(coords)
    }

    pub fn l1_distance(&self, other: &Site) -> u64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.abs_diff(*b))
            .sum()
    }

    pub fn linf_norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<i64>> for Site {
    fn from(coords: Vec<i64>) -> Self {
        Site(coords)
    }
}

/// Direction `dir` points along axis `dir / 2`; even directions decrease the
/// coordinate, odd ones increase it. The opposite direction is `dir ^ 1`.
#[inline]
pub fn opposite(dir: usize) -> usize {
    dir ^ 1
}

/// The `2d` nearest neighbors of `x`, in the fixed order
/// axis 0 minus, axis 0 plus, axis 1 minus, ...
pub fn neighbors(x: &Site) -> Vec<Site> {
    (0..2 * x.dim()).map(|dir| x.step(dir)).collect()
}

/// The box `V_n` in dimension `d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    d: usize,
    n: usize,
    side: usize,
    volume: usize,
    strides: Vec<usize>,
}

impl LatticeBox {
    pub fn new(d: usize, n: usize) -> Result<Self, LatticeError> {
        if d == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        let side = n
            .checked_mul(2)
            .and_then(|s| s.checked_add(1))
            .ok_or(LatticeError::TooLarge { d, n })?;
        let mut strides = Vec::with_capacity(d);
        let mut volume: usize = 1;
        for _ in 0..d {
            strides.push(volume);
            volume = volume
                .checked_mul(side)
                .ok_or(LatticeError::TooLarge { d, n })?;
        }
        // Coordinates are stored as i64.
        if volume > (i64::MAX as usize) {
            return Err(LatticeError::TooLarge { d, n });
        }
        Ok(LatticeBox {
            d,
            n,
            side,
            volume,
            strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// `(2n+1)^d`.
    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn contains(&self, x: &Site) -> bool {
        let n = self.n as i64;
        x.dim() == self.d && x.coords().iter().all(|&c| -n <= c && c <= n)
    }

    pub fn index_of(&self, x: &Site) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let n = self.n as i64;
        Some(
            x.coords()
                .iter()
                .zip(&self.strides)
                .map(|(&c, &s)| (c + n) as usize * s)
                .sum(),
        )
    }

    pub fn site_of(&self, index: usize) -> Site {
        debug_assert!(index < self.volume);
        let n = self.n as i64;
        Site(
            self.strides
                .iter()
                .map(|&s| ((index / s) % self.side) as i64 - n)
                .collect(),
        )
    }

    pub fn origin_index(&self) -> usize {
        // Every coordinate sits at offset n.
        self.strides.iter().map(|&s| self.n * s).sum()
    }

    /// Dense index of the neighbor of `index` in direction `dir`, or `None`
    /// when that neighbor lies outside the box.
    #[inline]
    pub fn neighbor_index(&self, index: usize, dir: usize) -> Option<usize> {
        let stride = self.strides[dir / 2];
        let offset = (index / stride) % self.side;
        if dir.is_multiple_of(2) {
            (offset > 0).then(|| index - stride)
        } else {
            (offset + 1 < self.side).then(|| index + stride)
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.volume).map(|i| self.site_of(i))
    }

    /// The sites of `V_{n - margin}`, in dense index order.
    pub fn inner_box_sites(&self, margin: usize) -> Result<Vec<Site>, LatticeError> {
        Ok(self
            .inner_indices(margin)?
            .into_iter()
            .map(|i| self.site_of(i))
            .collect())
    }

    pub fn inner_indices(&self, margin: usize) -> Result<Vec<usize>, LatticeError> {
        if margin > self.n {
            return Err(LatticeError::MarginTooLarge { margin, n: self.n });
        }
        let lo = margin;
        let hi = self.side - 1 - margin;
        Ok((0..self.volume)
            .filter(|&i| {
                self.strides.iter().all(|&s| {
                    let off = (i / s) % self.side;
                    lo <= off && off <= hi
                })
            })
            .collect())
    }

    /// The origin followed by its `2d` neighbors, in neighbor order.
    pub fn unit_ball(&self) -> Vec<Site> {
        let o = Site::origin(self.d);
        std::iter::once(o.clone()).chain(neighbors(&o)).collect()
    }

    pub(crate) fn check_site(&self, x: &Site) -> Result<(), LatticeError> {
        if x.dim() != self.d {
            return Err(LatticeError::DimensionMismatch {
                expected: self.d,
                got: x.dim(),
            });
        }
        Ok(())
    }
}

pub fn make_box(d: usize, n: usize) -> Result<LatticeBox, LatticeError> {
    LatticeBox::new(d, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn box_volumes() {
        let b = make_box(1, 1).unwrap();
        assert_eq!(b.volume(), 3);
        let coords: Vec<i64> = b.sites().map(|s| s.coords()[0]).collect();
        assert_eq!(coords, vec![-1, 0, 1]);
        assert_eq!(make_box(2, 2).unwrap().volume(), 25);
        assert_eq!(make_box(3, 3).unwrap().volume(), 343);
        assert_eq!(make_box(4, 0).unwrap().volume(), 1);
    }

    #[test]
    fn rejects_bad_boxes() {
        assert_eq!(make_box(0, 3), Err(LatticeError::ZeroDimension));
        assert!(matches!(
            make_box(64, 1000),
            Err(LatticeError::TooLarge { .. })
        ));
        assert!(matches!(
            make_box(1, usize::MAX),
            Err(LatticeError::TooLarge { .. })
        ));
    }

    #[test]
    fn neighbor_order() {
        assert_eq!(
            neighbors(&Site::origin(1)),
            vec![Site::new(vec![-1]), Site::new(vec![1])]
        );
        assert_eq!(
            neighbors(&Site::origin(2)),
            vec![
                Site::new(vec![-1, 0]),
                Site::new(vec![1, 0]),
                Site::new(vec![0, -1]),
                Site::new(vec![0, 1]),
            ]
        );
        let x = Site::new(vec![1, 1, 1]);
        let ns = neighbors(&x);
        assert_eq!(ns.len(), 6);
        assert!(ns.iter().all(|y| y.l1_distance(&x) == 1));
        assert_eq!(ns.iter().collect::<BTreeSet<_>>().len(), 6);
    }

    #[test]
    fn index_roundtrip_exhaustive() {
        for d in 1..=4 {
            for n in 0..=4 {
                let b = make_box(d, n).unwrap();
                for i in 0..b.volume() {
                    let s = b.site_of(i);
                    assert!(b.contains(&s));
                    assert_eq!(b.index_of(&s), Some(i));
                }
                assert_eq!(b.site_of(b.origin_index()), Site::origin(d));
            }
        }
    }

    #[test]
    fn neighbor_index_agrees_with_coordinates() {
        for d in 1..=3 {
            let b = make_box(d, 2).unwrap();
            for i in 0..b.volume() {
                let s = b.site_of(i);
                for dir in 0..2 * d {
                    assert_eq!(b.neighbor_index(i, dir), b.index_of(&s.step(dir)));
                }
            }
        }
    }

    #[test]
    fn inner_boxes() {
        let b = make_box(1, 3).unwrap();
        let inner: Vec<i64> = b
            .inner_box_sites(1)
            .unwrap()
            .iter()
            .map(|s| s.coords()[0])
            .collect();
        assert_eq!(inner, vec![-2, -1, 0, 1, 2]);

        let b = make_box(2, 2).unwrap();
        assert_eq!(b.inner_box_sites(0).unwrap().len(), 25);
        assert_eq!(b.inner_box_sites(2).unwrap(), vec![Site::origin(2)]);
        assert_eq!(
            b.inner_box_sites(3),
            Err(LatticeError::MarginTooLarge { margin: 3, n: 2 })
        );
    }

    #[test]
    fn inner_box_matches_coordinate_filter() {
        for d in 1..=3 {
            for n in 0..=3 {
                let b = make_box(d, n).unwrap();
                for m in 0..=n {
                    let r = (n - m) as i64;
                    let expected: Vec<Site> = b
                        .sites()
                        .filter(|s| s.coords().iter().all(|&c| -r <= c && c <= r))
                        .collect();
                    assert_eq!(b.inner_box_sites(m).unwrap(), expected);
                }
            }
        }
    }

    #[test]
    fn boxes_are_nested() {
        let small = make_box(2, 1).unwrap();
        let big = make_box(2, 2).unwrap();
        assert!(small.sites().all(|s| big.contains(&s)));
    }
}
