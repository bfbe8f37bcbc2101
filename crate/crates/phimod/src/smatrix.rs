//! Matrices over the coefficient rings, row convention: composing maps acts
//! on row vectors, so (AB)_{ik} = Σ_j A_{ij} B_{jk} and a semilinear map
//! with matrix A sends the basis row e to A·e.
//!
//! Determinants use the subset DP (Laplace along the last included row) so
//! no division is ever needed; inverses, when the determinant is a unit, are
//! det⁻¹·adjugate, which keeps every entry inside whatever subring the input
//! lived in. A height-r witness A′ satisfies A·A′ = A′·A = E^r·Id and is
//! produced from the adjugate by stripping the determinant's E-power.

use crate::context::{ArithCtx, RingTag};
use crate::element::SElement;
use crate::{Error, Result};

pub type SMat = Vec<Vec<SElement>>;

fn shape(a: &SMat) -> (usize, usize) {
    (a.len(), a.first().map_or(0, |r| r.len()))
}

fn check_square(a: &SMat) -> Result<usize> {
    let (rows, cols) = shape(a);
    if rows == 0 || rows != cols || a.iter().any(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch(format!(
            "expected a nonempty square matrix, got {rows}x{cols}"
        )));
    }
    Ok(rows)
}

impl ArithCtx {
    pub fn mat_zero(&self, rows: usize, cols: usize) -> SMat {
        vec![vec![self.zero(); cols]; rows]
    }

    pub fn mat_identity(&self, d: usize) -> SMat {
        let mut m = self.mat_zero(d, d);
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = self.one();
        }
        m
    }

    /// E^r·Id, the target of every height-r witness product.
    pub fn mat_e_pow_identity(&self, d: usize, r: usize) -> SMat {
        self.mat_map(&self.mat_identity(d), |x| self.mul_e_pow(x, r))
    }

    pub fn mat_map<F: Fn(&SElement) -> SElement>(&self, a: &SMat, f: F) -> SMat {
        a.iter().map(|row| row.iter().map(&f).collect()).collect()
    }

    pub fn mat_try_map<F: Fn(&SElement) -> Result<SElement>>(&self, a: &SMat, f: F) -> Result<SMat> {
        a.iter()
            .map(|row| row.iter().map(&f).collect())
            .collect()
    }

    pub fn mat_add(&self, a: &SMat, b: &SMat) -> SMat {
        debug_assert_eq!(shape(a), shape(b));
        a.iter()
            .zip(b)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| self.add(x, y)).collect())
            .collect()
    }

    pub fn mat_sub(&self, a: &SMat, b: &SMat) -> SMat {
        debug_assert_eq!(shape(a), shape(b));
        a.iter()
            .zip(b)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| self.sub(x, y)).collect())
            .collect()
    }

    pub fn mat_scale(&self, a: &SMat, x: &SElement) -> SMat {
        self.mat_map(a, |y| self.mul(x, y))
    }

    pub fn mat_mul(&self, a: &SMat, b: &SMat) -> SMat {
        let (ar, ac) = shape(a);
        let (br, bc) = shape(b);
        debug_assert_eq!(ac, br, "inner dimensions must agree");
        let mut out = self.mat_zero(ar, bc);
        for i in 0..ar {
            for k in 0..bc {
                let mut acc = self.zero();
                for (j, bj) in b.iter().enumerate().take(ac) {
                    acc = self.add(&acc, &self.mul(&a[i][j], &bj[k]));
                }
                out[i][k] = acc;
            }
        }
        out
    }

    pub fn mat_transpose(&self, a: &SMat) -> SMat {
        let (rows, cols) = shape(a);
        (0..cols)
            .map(|j| (0..rows).map(|i| a[i][j].clone()).collect())
            .collect()
    }

    pub fn mat_phi(&self, a: &SMat) -> Result<SMat> {
        self.mat_try_map(a, |x| self.phi(x))
    }

    pub fn mat_phi_r(&self, a: &SMat, r: u32) -> Result<SMat> {
        self.mat_try_map(a, |x| self.phi_r(x, r))
    }

    pub fn mat_monodromy_twist(&self, a: &SMat) -> Result<SMat> {
        self.mat_try_map(a, |x| self.monodromy(x))
    }

    pub fn mat_mul_e_pow(&self, a: &SMat, k: usize) -> SMat {
        self.mat_map(a, |x| self.mul_e_pow(x, k))
    }

    pub fn mat_divide_e_pow(&self, a: &SMat, k: usize) -> Result<SMat> {
        self.mat_try_map(a, |x| self.divide_e_pow(x, k))
    }

    pub fn mat_divide_p_pow(&self, a: &SMat, k: u32) -> Result<SMat> {
        self.mat_try_map(a, |x| self.divide_p_pow(x, k))
    }

    pub fn mat_sanitize(&self, a: &SMat) -> SMat {
        self.mat_map(a, |x| self.sanitize(x))
    }

    pub fn mat_truncate_prec(&self, a: &SMat, m: u32) -> SMat {
        self.mat_map(a, |x| self.truncate_prec(x, m))
    }

    pub fn mat_migrate(&self, a: &SMat, to: &ArithCtx) -> Result<SMat> {
        self.mat_try_map(a, |x| self.migrate(x, to))
    }

    pub fn mat_membership(&self, a: &SMat, tag: RingTag) -> bool {
        a.iter().flatten().all(|x| self.membership(x, tag))
    }

    pub fn mat_eq_mod(&self, a: &SMat, b: &SMat, m: u32) -> bool {
        debug_assert_eq!(shape(a), shape(b));
        a.iter()
            .zip(b)
            .all(|(ra, rb)| ra.iter().zip(rb).all(|(x, y)| self.eq_mod(x, y, m)))
    }

    pub fn mat_is_zero(&self, a: &SMat) -> bool {
        a.iter().flatten().all(|x| x.is_zero())
    }

    /// Least precision carried by any entry; the honest modulus for
    /// verifying a product built from this matrix.
    pub fn mat_min_prec(&self, a: &SMat) -> u32 {
        a.iter().flatten().map(|x| x.prec).min().unwrap_or(0)
    }

    /// Entrywise decomposition into the smaller ring plus the filtration
    /// defect, cutting each γ-coordinate at the target ring's valuation
    /// floor. A matrix already over the smaller ring is returned unchanged,
    /// which is what makes this usable as a normalization.
    pub fn mat_small_part(&self, a: &SMat, small: RingTag) -> SMat {
        self.mat_map(a, |x| match small.ring {
            crate::context::Ring::Frak => self.frak_floor_cut(x).0,
            crate::context::Ring::Sigma => self.s_split(x).0,
            crate::context::Ring::S => x.clone(),
        })
    }

    /// Determinant by the subset DP: dp[S] is the minor on rows 0..|S| and
    /// column set S, expanded along its last row. 2^d·d ring products, no
    /// division.
    pub fn det(&self, a: &SMat) -> Result<SElement> {
        let d = check_square(a)?;
        if d > 16 {
            return Err(Error::ShapeMismatch(format!(
                "determinant DP is limited to dimension 16, got {d}"
            )));
        }
        let mut dp: Vec<SElement> = vec![self.zero(); 1 << d];
        dp[0] = self.one();
        for mask in 1usize..(1 << d) {
            let k = mask.count_ones() as usize;
            let mut acc = self.zero();
            let mut pos = 0usize;
            for j in 0..d {
                if mask & (1 << j) != 0 {
                    let term = self.mul(&a[k - 1][j], &dp[mask ^ (1 << j)]);
                    acc = if (k - 1 + pos) % 2 == 0 {
                        self.add(&acc, &term)
                    } else {
                        self.sub(&acc, &term)
                    };
                    pos += 1;
                }
            }
            dp[mask] = acc;
        }
        Ok(dp[(1 << d) - 1].clone())
    }

    /// Adjugate via signed minors; A·adj(A) = adj(A)·A = det(A)·Id.
    pub fn adjugate(&self, a: &SMat) -> Result<SMat> {
        let d = check_square(a)?;
        if d == 1 {
            return Ok(vec![vec![self.one()]]);
        }
        let mut out = self.mat_zero(d, d);
        for i in 0..d {
            for j in 0..d {
                let minor: SMat = (0..d)
                    .filter(|&r| r != i)
                    .map(|r| {
                        (0..d)
                            .filter(|&c| c != j)
                            .map(|c| a[r][c].clone())
                            .collect()
                    })
                    .collect();
                let m = self.det(&minor)?;
                out[j][i] = if (i + j) % 2 == 0 { m } else { self.neg(&m) };
            }
        }
        Ok(out)
    }

    /// Inverse of a matrix whose determinant is a unit: det⁻¹·adjugate.
    /// Every operation is a ring operation, so the inverse stays inside any
    /// subring containing the entries.
    pub fn mat_invert(&self, a: &SMat) -> Result<SMat> {
        let dt = self.det(a)?;
        let dinv = self.invert(&dt)?;
        Ok(self.mat_scale(&self.adjugate(a)?, &dinv))
    }

    /// Witness of E-height ≤ r: A′ with A·A′ = A′·A = E^r·Id. Exists iff
    /// det(A) = unit·E^b with b ≤ r·d and the adjugate carries enough
    /// E-divisibility; both are checked, and the product identity is
    /// verified before returning.
    pub fn height_witness(&self, a: &SMat, r: u32) -> Result<SMat> {
        let d = check_square(a)?;
        let dt = self.det(a)?;
        let bmax = (r as usize * d).min(self.fil_degree(&dt));
        let mut stripped = None;
        for b in (0..=bmax).rev() {
            if let Ok(q) = self.divide_e_pow(&dt, b) {
                stripped = Some((b, q));
                break;
            }
        }
        let (b, q) = stripped.ok_or_else(|| {
            Error::NotFiniteHeight("determinant has no E-power factorization".into())
        })?;
        let qinv = self.invert(&q).map_err(|_| {
            Error::NotFiniteHeight(format!(
                "det(A)/E^{b} is not a unit, so the cokernel is not killed by E-powers"
            ))
        })?;
        // inversion and adjugate products can overflow the γ-cap and record
        // conservative dropped-tail bounds that would block the E-division;
        // the product verification below is the actual certificate, so the
        // bounds are dropped here
        let scaled = self.mat_sanitize(&self.mat_scale(&self.adjugate(a)?, &qinv));
        let witness = if b <= r as usize {
            self.mat_mul_e_pow(&scaled, r as usize - b)
        } else {
            self.mat_divide_e_pow(&scaled, b - r as usize).map_err(|e| {
                Error::NotFiniteHeight(format!("height exceeds {r}: {e}"))
            })?
        };
        let prod = self.mat_mul(a, &witness);
        let target = self.mat_e_pow_identity(d, r as usize);
        let m = self.mat_min_prec(&prod).min(self.mat_min_prec(&target));
        if m == 0 || !self.mat_eq_mod(&prod, &target, m) {
            return Err(Error::NotFiniteHeight(
                "witness product failed verification".into(),
            ));
        }
        Ok(witness)
    }

    /// Witness for the small-ring part of a big-ring matrix. With B the
    /// entrywise small part of A, a height-r witness for B over the smaller
    /// ring is computed directly and its membership verified; when A has
    /// height ≤ r over the big ring this always succeeds at sufficient
    /// working precision, because B differs from A by a unimodular factor
    /// congruent to the identity modulo positive filtration.
    pub fn lift_inverse_matrix(&self, a: &SMat, r: u32, small: RingTag) -> Result<SMat> {
        let b = self.mat_small_part(a, small);
        let witness = self.height_witness(&b, r).map_err(|e| {
            Error::NoWitness(format!("small part has no height-{r} witness: {e}"))
        })?;
        if !self.mat_membership(&witness, small) {
            return Err(Error::NoWitness(
                "witness entries leave the smaller ring".into(),
            ));
        }
        Ok(witness)
    }
}
