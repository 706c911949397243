//! Orthonormal interconnections `d = G c + s`.
//!
//! Linear constraints "image coordinate = Σ coeff · domain coordinate" are
//! collected into a skew-symmetric core `S`. Its Cayley transform
//! `(I + S)(I − S)⁻¹` is orthonormal, and flipping the sign of the image rows
//! (`G = J·cayley(S)`, `J = diag(±1)`) makes the fixed points enforce the
//! constraints on the primal variables with the dual variables in the
//! orthogonal complement. Constant sources are then eliminated algebraically
//! with [`absorb_sources`].

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::BlockIndex;
use crate::{Error, Result};

const SKEW_TOL: f64 = 1e-12;

/// Skew-symmetric matrix `S` (`S + Sᵀ = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct SkewCore {
    s: DMatrix<f64>,
}

impl SkewCore {
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        if !s.is_square() {
            return Err(Error::Dimension {
                expected: s.nrows(),
                got: s.ncols(),
            });
        }
        let n = s.nrows();
        for i in 0..n {
            for j in i..n {
                let sum = s[(i, j)] + s[(j, i)];
                if !sum.is_finite() || sum.abs() >= SKEW_TOL {
                    return Err(Error::NotSkew {
                        row: i,
                        col: j,
                        sum,
                    });
                }
            }
        }
        Ok(Self { s })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            s: DMatrix::zeros(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }
}

/// Cayley transform `G = (I + S)(I − S)⁻¹`.
///
/// `I − S` is never singular for real skew `S` (its eigenvalues are `1 − iθ`).
pub fn cayley(core: &SkewCore) -> DMatrix<f64> {
    let n = core.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let lhs = &id - core.matrix();
    let rhs = &id + core.matrix();
    // (I − S) and (I + S) commute, so (I − S)⁻¹(I + S) is the same matrix.
    lhs.lu()
        .solve(&rhs)
        .expect("I - S is nonsingular for skew-symmetric S")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthonormalityReport {
    pub max_deviation: f64,
    pub pass: bool,
}

/// Reports `max |GᵀG − I|` and whether it is within `tol`.
pub fn check_orthonormal(g: &DMatrix<f64>, tol: f64) -> OrthonormalityReport {
    let n = g.ncols();
    let gram = g.transpose() * g;
    let mut max_deviation: f64 = if g.nrows() == n { 0.0 } else { f64::INFINITY };
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let id = if i == j { 1.0 } else { 0.0 };
            max_deviation = max_deviation.max((gram[(i, j)] - id).abs());
        }
    }
    OrthonormalityReport {
        max_deviation,
        pass: max_deviation <= tol,
    }
}

/// Which side of a linear constraint a coordinate sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Port {
    /// Free variable of the constraint set.
    Domain,
    /// Variable defined as a linear combination of domain variables.
    Image,
}

/// Sparse description of constraints `a_i = Σ_j A_ij a_j` (`i` image, `j` domain).
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    ports: Vec<Port>,
    entries: Vec<(usize, usize, f64)>,
}

impl ConstraintSet {
    /// All coordinates start as unconstrained domain variables.
    pub fn new(dim: usize) -> Self {
        Self {
            ports: vec![Port::Domain; dim],
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.ports.len()
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    /// Declares `image = Σ coeff · domain`.
    pub fn define(&mut self, image: usize, terms: &[(usize, f64)]) -> Result<()> {
        let n = self.dim();
        if image >= n {
            return Err(Error::Layout(format!("image coordinate {image} >= {n}")));
        }
        if self.ports[image] == Port::Image {
            return Err(Error::Layout(format!("coordinate {image} defined twice")));
        }
        if self.entries.iter().any(|&(_, j, _)| j == image) {
            return Err(Error::Layout(format!(
                "coordinate {image} already used as a domain variable"
            )));
        }
        for &(j, coeff) in terms {
            if j >= n {
                return Err(Error::Layout(format!("domain coordinate {j} >= {n}")));
            }
            if self.ports[j] == Port::Image || j == image {
                return Err(Error::Layout(format!(
                    "coordinate {j} is an image variable and cannot appear on the right"
                )));
            }
            if !coeff.is_finite() {
                return Err(Error::param("constraint", format!("non-finite coefficient at ({image}, {j})")));
            }
        }
        self.ports[image] = Port::Image;
        self.entries
            .extend(terms.iter().filter(|t| t.1 != 0.0).map(|&(j, c)| (image, j, c)));
        Ok(())
    }

    /// `S` with `S[j, i] = A_ij` and `S[i, j] = −A_ij`.
    pub fn skew_core(&self) -> SkewCore {
        let n = self.dim();
        let mut s = DMatrix::zeros(n, n);
        for &(i, j, c) in &self.entries {
            s[(j, i)] += c;
            s[(i, j)] -= c;
        }
        SkewCore { s }
    }

    /// `+1` on domain coordinates, `−1` on image coordinates.
    pub fn signature(&self) -> Vec<f64> {
        self.ports
            .iter()
            .map(|p| match p {
                Port::Domain => 1.0,
                Port::Image => -1.0,
            })
            .collect()
    }
}

/// `d = G c + s` with `G` orthonormal whenever `neutral` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineInterconnection {
    g: DMatrix<f64>,
    s: DVector<f64>,
    neutral: bool,
}

impl AffineInterconnection {
    /// Wraps `(G, s)`; `neutral` is decided by an orthonormality check at 1e−10.
    pub fn new(g: DMatrix<f64>, s: DVector<f64>) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::Dimension {
                expected: g.nrows(),
                got: g.ncols(),
            });
        }
        if s.len() != g.nrows() {
            return Err(Error::Dimension {
                expected: g.nrows(),
                got: s.len(),
            });
        }
        if g.iter().chain(s.iter()).any(|x| !x.is_finite()) {
            return Err(Error::param("interconnection", "non-finite entry"));
        }
        let neutral = check_orthonormal(&g, 1e-10).pass;
        Ok(Self { g, s, neutral })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            g: DMatrix::identity(n, n),
            s: DVector::zeros(n),
            neutral: true,
        }
    }

    pub fn from_cayley(core: &SkewCore) -> Self {
        let n = core.dim();
        Self {
            g: cayley(core),
            s: DVector::zeros(n),
            neutral: true,
        }
    }

    /// `G = J·cayley(S)` for the constraint set's core and port signature.
    pub fn from_constraints(cs: &ConstraintSet) -> Self {
        let mut g = cayley(&cs.skew_core());
        for (i, sign) in cs.signature().into_iter().enumerate() {
            if sign < 0.0 {
                g.row_mut(i).neg_mut();
            }
        }
        Self {
            g,
            s: DVector::zeros(cs.dim()),
            neutral: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn is_neutral(&self) -> bool {
        self.neutral
    }

    /// Replaces the offset; used to pin a chosen fixed point in tests.
    pub fn with_offset(mut self, s: DVector<f64>) -> Result<Self> {
        if s.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: s.len(),
            });
        }
        self.s = s;
        Ok(self)
    }

    pub fn apply(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        if c.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: c.len(),
            });
        }
        let mut out = self.s.clone();
        out.gemv(1.0, &self.g, c, 1.0);
        Ok(out)
    }

    /// Allocation-free `out = G c + s`; dimensions are the caller's responsibility.
    pub(crate) fn apply_into(&self, c: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&self.s);
        out.gemv(1.0, &self.g, c, 1.0);
    }
}

/// Affine constitutive relation `c_block = F d_block + g` to be eliminated.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRelation {
    pub block: BlockIndex,
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl SourceRelation {
    pub fn new(block: BlockIndex, f: DMatrix<f64>, g: DVector<f64>) -> Result<Self> {
        let k = block.length;
        if f.nrows() != k || f.ncols() != k {
            return Err(Error::Dimension {
                expected: k,
                got: f.nrows().max(f.ncols()),
            });
        }
        if g.len() != k {
            return Err(Error::Dimension {
                expected: k,
                got: g.len(),
            });
        }
        Ok(Self { block, f, g })
    }

    /// `c = g` regardless of input.
    pub fn constant(block: BlockIndex, g: DVector<f64>) -> Result<Self> {
        let k = block.length;
        Self::new(block, DMatrix::zeros(k, k), g)
    }

    /// Fixed primal value `a = value` under the canonical pair transform:
    /// `c + d = √2·a`, so `c = −d + √2·value`.
    pub fn primal_constant(coord: usize, value: f64) -> Self {
        Self {
            block: BlockIndex {
                offset: coord,
                length: 1,
            },
            f: DMatrix::from_element(1, 1, -1.0),
            g: DVector::from_element(1, SQRT_2 * value),
        }
    }

    /// Fixed dual value `b = value` under the canonical pair transform:
    /// `c − d = √2·b`, so `c = d + √2·value`.
    pub fn dual_constant(coord: usize, value: f64) -> Self {
        Self {
            block: BlockIndex {
                offset: coord,
                length: 1,
            },
            f: DMatrix::from_element(1, 1, 1.0),
            g: DVector::from_element(1, SQRT_2 * value),
        }
    }

    /// Lossless relations (orthonormal `F`) keep the reduced `G` orthonormal.
    pub fn is_lossless(&self) -> bool {
        check_orthonormal(&self.f, 1e-12).pass
    }
}

/// Eliminates source coordinates, folding their algebraic loops into `(G, s)`.
///
/// The returned interconnection acts on the remaining coordinates in their
/// original order. Its fixed points (with the remaining elements attached)
/// coincide with those of the full system restricted to those coordinates.
pub fn absorb_sources(
    ic: &AffineInterconnection,
    sources: &[SourceRelation],
) -> Result<AffineInterconnection> {
    let mut sorted: Vec<&SourceRelation> = sources.iter().collect();
    sorted.sort_by_key(|s| std::cmp::Reverse(s.block.offset));
    for pair in sorted.windows(2) {
        if pair[1].block.end() > pair[0].block.offset {
            return Err(Error::Layout(format!(
                "source blocks at {} and {} overlap",
                pair[1].block.offset, pair[0].block.offset
            )));
        }
    }
    // Descending offsets: removing a block never shifts the ones still pending.
    let mut current = ic.clone();
    for src in sorted {
        current = absorb_one(&current, src)?;
    }
    Ok(current)
}

fn absorb_one(ic: &AffineInterconnection, src: &SourceRelation) -> Result<AffineInterconnection> {
    let n = ic.dim();
    src.block.check(n)?;
    let sigma: Vec<usize> = src.block.range().collect();
    let keep: Vec<usize> = (0..n).filter(|i| !src.block.range().contains(i)).collect();
    let k = sigma.len();

    let g = &ic.g;
    let g_kk = g.select_rows(&keep).select_columns(&keep);
    let g_ks = g.select_rows(&keep).select_columns(&sigma);
    let g_sk = g.select_rows(&sigma).select_columns(&keep);
    let g_ss = g.select_rows(&sigma).select_columns(&sigma);
    let s_k = ic.s.select_rows(&keep);
    let s_s = ic.s.select_rows(&sigma);

    let loop_matrix = DMatrix::<f64>::identity(k, k) - &g_ss * &src.f;
    let lu = loop_matrix.lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::SingularLoop {
            offset: src.block.offset,
        });
    }
    let fl = &src.f * lu.try_inverse().ok_or(Error::SingularLoop {
        offset: src.block.offset,
    })?;

    let g_new = &g_kk + &g_ks * &fl * &g_sk;
    let s_new = &s_k + &g_ks * (&fl * (&g_ss * &src.g + &s_s) + &src.g);
    Ok(AffineInterconnection {
        g: g_new,
        s: s_new,
        neutral: ic.neutral && src.is_lossless(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_skew(n: usize, rng: &mut ChaCha8Rng) -> SkewCore {
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v: f64 = rng.random_range(-1.0..1.0);
                s[(i, j)] = v;
                s[(j, i)] = -v;
            }
        }
        SkewCore::new(s).unwrap()
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn cayley_of_zero_is_identity() {
        let g = cayley(&SkewCore::zeros(4));
        assert_eq!(g, DMatrix::identity(4, 4));
    }

    #[test]
    fn cayley_two_by_two_rotation() {
        let s = SkewCore::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap();
        let g = cayley(&s);
        // (I + S)(I − S)⁻¹ = [[0, 1], [−1, 0]] by hand.
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((g - expected).abs().max() < 1e-14);
    }

    #[test]
    fn cayley_is_orthonormal_across_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 3, 8, 31, 64, 256] {
            let g = cayley(&random_skew(n, &mut rng));
            let rep = check_orthonormal(&g, 1e-10);
            assert!(rep.pass, "n = {n}: deviation {}", rep.max_deviation);
        }
    }

    #[test]
    fn non_skew_rejected_with_entry() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        match SkewCore::new(m) {
            Err(Error::NotSkew { row: 0, col: 1, sum }) => assert_abs_diff_eq!(sum, 1.5),
            other => panic!("unexpected {other:?}"),
        }
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(SkewCore::new(m), Err(Error::NotSkew { row: 0, col: 0, .. })));
    }

    #[test]
    fn apply_examples() {
        let ic = AffineInterconnection::identity(2);
        let c = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(ic.apply(&c).unwrap(), c);

        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let ic = AffineInterconnection::new(g, DVector::zeros(2)).unwrap();
        let d = ic.apply(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(d.as_slice(), &[0.0, -1.0]);

        assert!(matches!(
            ic.apply(&DVector::zeros(3)),
            Err(Error::Dimension { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn neutral_apply_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ic = AffineInterconnection::from_cayley(&random_skew(12, &mut rng));
        for _ in 0..100 {
            let c = random_vec(12, &mut rng);
            let d = ic.apply(&c).unwrap();
            assert!((d.norm() - c.norm()).abs() <= 1e-12 * c.norm());
        }
    }

    #[test]
    fn check_orthonormal_examples() {
        let rep = check_orthonormal(&DMatrix::identity(3, 3), 1e-12);
        assert!(rep.pass);
        assert_eq!(rep.max_deviation, 0.0);
        let rep = check_orthonormal(&(DMatrix::identity(3, 3) * 2.0), 1e-12);
        assert!(!rep.pass);
        assert_abs_diff_eq!(rep.max_deviation, 3.0);
    }

    #[test]
    fn constraint_set_signature_keeps_orthonormality() {
        let mut cs = ConstraintSet::new(5);
        cs.define(3, &[(0, 1.0), (1, -2.0)]).unwrap();
        cs.define(4, &[(1, 0.5), (2, 3.0)]).unwrap();
        assert_eq!(cs.signature(), vec![1.0, 1.0, 1.0, -1.0, -1.0]);
        let ic = AffineInterconnection::from_constraints(&cs);
        assert!(check_orthonormal(ic.matrix(), 1e-12).pass);

        assert!(cs.define(3, &[(0, 1.0)]).is_err());
        assert!(cs.define(0, &[(1, 1.0)]).is_err());
        assert!(cs.define(1, &[(4, 1.0)]).is_err());
    }

    #[test]
    fn constraint_fixed_points_enforce_primal_relation() {
        // Primal relation a_2 = 2 a_0 − a_1; at any point with c = G⁻¹(d − s)
        // the readout a = (c + d)/√2 must satisfy it and b must be orthogonal.
        let mut cs = ConstraintSet::new(3);
        cs.define(2, &[(0, 2.0), (1, -1.0)]).unwrap();
        let ic = AffineInterconnection::from_constraints(&cs);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let c = random_vec(3, &mut rng);
            let d = ic.apply(&c).unwrap();
            let a: Vec<f64> = (0..3).map(|i| (c[i] + d[i]) / SQRT_2).collect();
            let b: Vec<f64> = (0..3).map(|i| (c[i] - d[i]) / SQRT_2).collect();
            assert!((a[2] - (2.0 * a[0] - a[1])).abs() < 1e-12);
            // b ⟂ span{(1, 0, 2), (0, 1, −1)}
            assert!((b[0] + 2.0 * b[2]).abs() < 1e-12);
            assert!((b[1] - b[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn absorb_empty_list_is_identity_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ic = AffineInterconnection::from_cayley(&random_skew(4, &mut rng));
        assert_eq!(absorb_sources(&ic, &[]).unwrap(), ic);
    }

    #[test]
    fn absorb_constant_source_two_coordinates() {
        // G = [[0, 1], [−1, 0]], s = 0. Coordinate 0 carries c0 = 0.5·d0,
        // coordinate 1 is the constant source c1 = 2.
        // Full system by hand: d0 = c1 = 2, d1 = −c0 = −1.
        // Reduced: G' = [0], s' = 2·G[0][1] = 2, so d0 = 2 as well.
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let ic = AffineInterconnection::new(g, DVector::zeros(2)).unwrap();
        let src =
            SourceRelation::constant(BlockIndex::new(1, 1).unwrap(), DVector::from_element(1, 2.0))
                .unwrap();
        assert!(!src.is_lossless());
        let red = absorb_sources(&ic, &[src]).unwrap();
        assert_eq!(red.dim(), 1);
        assert_abs_diff_eq!(red.matrix()[(0, 0)], 0.0);
        assert_abs_diff_eq!(red.offset()[0], 2.0);
        assert!(!red.is_neutral());
        let d0 = red.offset()[0] / (1.0 - red.matrix()[(0, 0)] * 0.5);
        assert_abs_diff_eq!(d0, 2.0);
    }

    fn affine_fixed_point(
        g: &DMatrix<f64>,
        s: &DVector<f64>,
        f: &DMatrix<f64>,
        c0: &DVector<f64>,
    ) -> DVector<f64> {
        let n = s.len();
        let lhs = DMatrix::identity(n, n) - g * f;
        lhs.lu().solve(&(g * c0 + s)).unwrap()
    }

    #[test]
    fn absorb_random_affine_source_preserves_fixed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let ic = AffineInterconnection::new(
                cayley(&random_skew(4, &mut rng)),
                random_vec(4, &mut rng),
            )
            .unwrap();
            // Kept coordinates 0, 1 get diagonal affine relations; 2, 3 are the source.
            let mut f_full = DMatrix::zeros(4, 4);
            f_full[(0, 0)] = rng.random_range(-0.9..0.9);
            f_full[(1, 1)] = rng.random_range(-0.9..0.9);
            let f_src = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.7..0.7));
            f_full.view_mut((2, 2), (2, 2)).copy_from(&f_src);
            let g_full = random_vec(4, &mut rng);

            let full = affine_fixed_point(ic.matrix(), ic.offset(), &f_full, &g_full);

            let src = SourceRelation::new(
                BlockIndex::new(2, 2).unwrap(),
                f_src,
                g_full.rows(2, 2).into_owned(),
            )
            .unwrap();
            let red = absorb_sources(&ic, &[src]).unwrap();
            let f_k = f_full.view((0, 0), (2, 2)).into_owned();
            let reduced =
                affine_fixed_point(red.matrix(), red.offset(), &f_k, &g_full.rows(0, 2).into_owned());
            let err = (reduced - full.rows(0, 2)).abs().max();
            assert!(err < 1e-10, "trial {trial}: {err}");
        }
    }

    #[test]
    fn lossless_sources_keep_neutrality() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let ic = AffineInterconnection::from_cayley(&random_skew(7, &mut rng));
        let red = absorb_sources(
            &ic,
            &[
                SourceRelation::primal_constant(6, 1.5),
                SourceRelation::dual_constant(2, -0.3),
            ],
        )
        .unwrap();
        assert_eq!(red.dim(), 5);
        assert!(red.is_neutral());
        assert!(check_orthonormal(red.matrix(), 1e-10).pass);
    }

    #[test]
    fn singular_loop_reports_block() {
        // G_ΣΣ = 1 with F = 1 makes I − G_ΣΣ F singular.
        let ic = AffineInterconnection::identity(3);
        let err = absorb_sources(&ic, &[SourceRelation::dual_constant(1, 1.0)]).unwrap_err();
        assert_eq!(err, Error::SingularLoop { offset: 1 });
    }

    #[test]
    fn overlapping_sources_rejected() {
        let ic = AffineInterconnection::identity(4);
        let a = SourceRelation::constant(BlockIndex::new(0, 2).unwrap(), DVector::zeros(2)).unwrap();
        let b = SourceRelation::constant(BlockIndex::new(1, 2).unwrap(), DVector::zeros(2)).unwrap();
        assert!(matches!(absorb_sources(&ic, &[a, b]), Err(Error::Layout(_))));
    }
}
