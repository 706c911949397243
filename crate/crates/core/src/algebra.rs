//! Primal/dual variable pairs and the 2×2 transforms that mix them.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Primal (`a`) and dual (`b`) decision variables of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPair {
    pub a: f64,
    pub b: f64,
}

/// Transformed variables `(c, d)` carried by the signal-flow graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedPair {
    pub c: f64,
    pub d: f64,
}

impl DecisionPair {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }
}

impl TransformedPair {
    pub fn new(c: f64, d: f64) -> Self {
        Self { c, d }
    }
}

/// Invertible 2×2 matrix mapping `(a, b)` to `(c, d)`.
///
/// The inverse is cached at construction so that readout never divides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct PairTransform {
    m: [f64; 4],
    inv: [f64; 4],
}

impl PairTransform {
    /// Builds `[[m11, m12], [m21, m22]]`, rejecting (numerically) singular matrices.
    pub fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Result<Self> {
        let det = m11 * m22 - m12 * m21;
        let scale = m11.abs().max(m12.abs()).max(m21.abs()).max(m22.abs());
        if !det.is_finite() || scale == 0.0 || det.abs() <= 1e-14 * scale * scale {
            return Err(Error::SingularTransform { det });
        }
        Ok(Self {
            m: [m11, m12, m21, m22],
            inv: [m22 / det, -m12 / det, -m21 / det, m11 / det],
        })
    }

    /// `(1/√2)·[[1, 1], [1, −1]]`: orthonormal and its own inverse.
    pub fn canonical() -> Self {
        let h = FRAC_1_SQRT_2;
        Self {
            m: [h, h, h, -h],
            inv: [h, h, h, -h],
        }
    }

    pub fn identity() -> Self {
        Self {
            m: [1.0, 0.0, 0.0, 1.0],
            inv: [1.0, 0.0, 0.0, 1.0],
        }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.m[0], self.m[1]], [self.m[2], self.m[3]]]
    }

    pub fn inverse_matrix(&self) -> [[f64; 2]; 2] {
        [[self.inv[0], self.inv[1]], [self.inv[2], self.inv[3]]]
    }

    pub fn det(&self) -> f64 {
        self.m[0] * self.m[3] - self.m[1] * self.m[2]
    }

    /// Largest entry of `|MᵀM − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let [m11, m12, m21, m22] = self.m;
        let g11 = m11 * m11 + m21 * m21 - 1.0;
        let g22 = m12 * m12 + m22 * m22 - 1.0;
        let g12 = m11 * m12 + m21 * m22;
        g11.abs().max(g22.abs()).max(g12.abs())
    }

    pub fn transform(&self, pair: DecisionPair) -> TransformedPair {
        let [m11, m12, m21, m22] = self.m;
        TransformedPair {
            c: m11 * pair.a + m12 * pair.b,
            d: m21 * pair.a + m22 * pair.b,
        }
    }

    pub fn inverse_transform(&self, tp: TransformedPair) -> DecisionPair {
        let [i11, i12, i21, i22] = self.inv;
        DecisionPair {
            a: i11 * tp.c + i12 * tp.d,
            b: i21 * tp.c + i22 * tp.d,
        }
    }
}

impl Default for PairTransform {
    fn default() -> Self {
        Self::canonical()
    }
}

impl TryFrom<[f64; 4]> for PairTransform {
    type Error = Error;

    fn try_from(m: [f64; 4]) -> Result<Self> {
        Self::new(m[0], m[1], m[2], m[3])
    }
}

impl From<PairTransform> for [f64; 4] {
    fn from(t: PairTransform) -> Self {
        t.m
    }
}

/// Contiguous coordinate range `[offset, offset + length)` of the system vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockIndex {
    pub offset: usize,
    pub length: usize,
}

impl BlockIndex {
    pub fn new(offset: usize, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::Layout(format!("empty block at offset {offset}")));
        }
        Ok(Self { offset, length })
    }

    pub fn end(&self) -> usize {
        self.offset + self.length
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.end()
    }

    pub fn check(&self, len: usize) -> Result<()> {
        if self.end() > len {
            return Err(Error::BlockOutOfRange {
                offset: self.offset,
                length: self.length,
                len,
            });
        }
        Ok(())
    }
}

pub fn gather(block: BlockIndex, v: &[f64]) -> Result<Vec<f64>> {
    block.check(v.len())?;
    Ok(v[block.range()].to_vec())
}

pub fn scatter(block: BlockIndex, sub: &[f64], v: &mut [f64]) -> Result<()> {
    block.check(v.len())?;
    if sub.len() != block.length {
        return Err(Error::Dimension {
            expected: block.length,
            got: sub.len(),
        });
    }
    v[block.range()].copy_from_slice(sub);
    Ok(())
}

/// Checks that `blocks` are disjoint and jointly cover `0..len`.
pub fn check_partition(blocks: &[BlockIndex], len: usize) -> Result<()> {
    let mut owner = vec![None; len];
    for (k, b) in blocks.iter().enumerate() {
        b.check(len)?;
        for i in b.range() {
            if let Some(prev) = owner[i] {
                return Err(Error::Layout(format!(
                    "coordinate {i} claimed by blocks {prev} and {k}"
                )));
            }
            owner[i] = Some(k);
        }
    }
    if let Some(i) = owner.iter().position(Option::is_none) {
        return Err(Error::Layout(format!("coordinate {i} has no element")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    #[test]
    #[allow(clippy::approx_constant)] // tabulated example value
    fn canonical_examples() {
        let m = PairTransform::canonical();
        let tp = m.transform(DecisionPair::new(1.0, 1.0));
        assert_abs_diff_eq!(tp.c, SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(tp.d, 0.0, epsilon = 1e-15);

        let tp = m.transform(DecisionPair::new(1.0, 0.0));
        assert_abs_diff_eq!(tp.c, 0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(tp.d, 0.70711, epsilon = 1e-5);

        let p = m.inverse_transform(TransformedPair::new(SQRT_2, 0.0));
        assert_abs_diff_eq!(p.a, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.b, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_examples() {
        let m = PairTransform::identity();
        assert_eq!(
            m.transform(DecisionPair::new(3.0, -2.0)),
            TransformedPair::new(3.0, -2.0)
        );
        assert_eq!(
            m.inverse_transform(TransformedPair::new(5.0, 7.0)),
            DecisionPair::new(5.0, 7.0)
        );
    }

    #[test]
    fn canonical_is_self_inverse_and_orthonormal() {
        let m = PairTransform::canonical();
        let a = m.matrix();
        for i in 0..2 {
            for j in 0..2 {
                let mm: f64 = (0..2).map(|k| a[i][k] * a[k][j]).sum();
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((mm - id).abs() < 1e-12);
            }
        }
        assert!(m.orthonormality_error() < 1e-12);
    }

    #[test]
    fn singular_transform_rejected() {
        assert!(matches!(
            PairTransform::new(1.0, 2.0, 2.0, 4.0),
            Err(Error::SingularTransform { .. })
        ));
        assert!(PairTransform::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(PairTransform::try_from([2.0, 0.0, 0.0, 0.5]).is_ok());
    }

    #[test]
    fn gather_scatter_examples() {
        let b = BlockIndex::new(0, 2).unwrap();
        assert_eq!(gather(b, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0]);
        let mut v = vec![1.0, 2.0, 3.0];
        scatter(BlockIndex::new(1, 2).unwrap(), &[9.0, 9.0], &mut v).unwrap();
        assert_eq!(v, vec![1.0, 9.0, 9.0]);
        assert!(gather(BlockIndex::new(2, 2).unwrap(), &v).is_err());
        assert!(BlockIndex::new(0, 0).is_err());
    }

    #[test]
    fn partition_detects_gaps_and_overlaps() {
        let b = |o, l| BlockIndex::new(o, l).unwrap();
        assert!(check_partition(&[b(0, 2), b(2, 1)], 3).is_ok());
        assert!(check_partition(&[b(0, 2), b(1, 2)], 3).is_err());
        assert!(check_partition(&[b(0, 1)], 3).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_and_norm(a in -1e3..1e3f64, b in -1e3..1e3f64) {
            let m = PairTransform::canonical();
            let p = DecisionPair::new(a, b);
            let tp = m.transform(p);
            let back = m.inverse_transform(tp);
            prop_assert!((back.a - a).abs() <= 1e-12 * (1.0 + a.abs()));
            prop_assert!((back.b - b).abs() <= 1e-12 * (1.0 + b.abs()));
            let n0 = a * a + b * b;
            let n1 = tp.c * tp.c + tp.d * tp.d;
            prop_assert!((n0 - n1).abs() <= 1e-12 * n0.max(1e-300));
        }

        #[test]
        fn general_transform_round_trip(
            m in prop::array::uniform4(-3.0..3.0f64),
            a in -10.0..10.0f64,
            b in -10.0..10.0f64,
        ) {
            prop_assume!((m[0] * m[3] - m[1] * m[2]).abs() > 0.1);
            let t = PairTransform::try_from(m).unwrap();
            let back = t.inverse_transform(t.transform(DecisionPair::new(a, b)));
            prop_assert!((back.a - a).abs() < 1e-9);
            prop_assert!((back.b - b).abs() < 1e-9);
        }

        #[test]
        fn gather_after_scatter(
            (v, off, len) in prop::collection::vec(-5.0..5.0f64, 1..20).prop_flat_map(|v| {
                let n = v.len();
                (Just(v), 0..n).prop_flat_map(move |(v, off)| (Just(v), Just(off), 1..=n - off))
            }),
        ) {
            let block = BlockIndex::new(off, len).unwrap();
            let sub: Vec<f64> = (0..len).map(|i| i as f64 + 0.5).collect();
            let mut w = v.clone();
            scatter(block, &sub, &mut w).unwrap();
            prop_assert_eq!(gather(block, &w).unwrap(), sub);
            for i in (0..v.len()).filter(|i| !block.range().contains(i)) {
                prop_assert_eq!(w[i], v[i]);
            }
        }
    }
}
