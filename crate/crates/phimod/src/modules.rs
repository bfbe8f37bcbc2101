//! Semilinear modules in matrix presentation, one convention per ring.
//!
//! Over the u-adic subring the matrix gives the Frobenius on a basis row,
//! φ(e) = A·e, and finite height ≤ r means a witness A′ with A·A′ = E^r·Id
//! exists. Over the divided-power rings the same matrix instead presents
//! the filtration: α = A·e generates Fil^r together with Fil^p·𝓜, and the
//! module is normalized so φ_r(α) = c^r·e. Both conventions share the
//! witness identity, which is exactly what Cartier duality transposes.
//!
//! Classification happens on constant terms: reducing mod (u, γ-indices ≥ 1)
//! leaves a matrix over Z/p^N whose Fitting decomposition is computable,
//! and the stable-image rank counts the direction the matrix acts on by
//! units. Which label (étale or multiplicative) that rank carries depends
//! on the convention, and Cartier duality swaps the labels.

use crate::context::{ArithCtx, Ring, RingTag};
use crate::element::SElement;
use crate::linalg::{self, Mod, RowSpan};
use crate::padic::Poly;
use crate::smatrix::SMat;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct SemilinearModule {
    pub tag: RingTag,
    pub d: usize,
    pub r: u32,
    pub phi_data: SMat,
    /// Exact height witness A′ with A·A′ = E^r·Id, when one exists.
    pub witness: Option<SMat>,
}

/// Ranks in the canonical slope filtration: multiplicative part, the
/// biconnected middle, and the étale part. They always sum to the rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CanonicalRanks {
    pub multiplicative: usize,
    pub middle: usize,
    pub etale: usize,
}

/// Verdicts read off the canonical ranks: étale and multiplicative mean the
/// whole module carries that label; nilpotent means no multiplicative
/// submodule (rank 0 on that side), unipotent means no étale quotient.
/// Multiplicative modules are unipotent and étale ones are nilpotent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classification {
    pub etale: bool,
    pub multiplicative: bool,
    pub nilpotent: bool,
    pub unipotent: bool,
    pub ranks: CanonicalRanks,
}

/// Stable-image rank of a matrix over Z/p^n and its complement: repeated
/// squaring past the length of the module makes im(B^k) stationary, and the
/// stable image is a free summand (Fitting), so its rank is visible mod p.
/// The Howell basis of the span can carry torsion shadow rows when the
/// summand is not coordinate-aligned, so the count must reduce mod p rather
/// than take the generator count.
pub fn fitting_ranks(md: Mod, mat: &[Vec<u64>]) -> (usize, usize) {
    let d = mat.len();
    let span = stable_image_span(md, mat);
    let rank = linalg::rank_mod_p(md, span.generators());
    (rank, d - rank)
}

/// Row span of the stable image im(B^∞) over Z/p^n.
pub fn stable_image_span(md: Mod, mat: &[Vec<u64>]) -> RowSpan {
    let d = mat.len();
    if d == 0 {
        return RowSpan::empty(md, 0);
    }
    // 2^t ≥ d·n bounds the length of the image chain
    let steps = usize::BITS - (d * md.n as usize).leading_zeros();
    let mut pow = mat.to_vec();
    for _ in 0..=steps {
        pow = linalg::mat_mul(md, &pow, &pow);
    }
    RowSpan::new(md, d, pow)
}

impl ArithCtx {
    fn const_matrix(&self, a: &SMat) -> Vec<Vec<u64>> {
        a.iter()
            .map(|row| {
                row.iter()
                    .map(|x| x.coeff(0).coeff(0).map_or(0, |c| c.value()))
                    .collect()
            })
            .collect()
    }

    /// Basis element u^a·γ_i of the quotient S/Fil^bound.
    fn quot_basis_elem(&self, a: usize, i: usize) -> SElement {
        let mut coeffs = vec![Poly::zero(); i + 1];
        coeffs[i] = Poly::monomial(self.p(), self.n(), a, 1);
        let g = self.gamma(i).expect("basis index within cap");
        SElement { coeffs, ..g }
    }

    /// Coordinates of x in the quotient S/Fil^bound, basis u^a·γ_i ordered
    /// i-major, values reduced into md's modulus.
    fn quot_vector(&self, x: &SElement, bound: usize, md: Mod) -> Vec<u64> {
        let mut v = Vec::with_capacity(bound * self.e());
        let pm = md.m;
        for i in 0..bound {
            let c = x.coeff(i);
            for a in 0..self.e() {
                let val = c.coeff(a).map_or(0, |q| q.value());
                v.push(val % pm);
            }
        }
        v
    }

    /// Matrix of multiplication by s on S/Fil^bound over Z/p^n, acting on
    /// row vectors.
    fn quot_mult_op(&self, s: &SElement, bound: usize) -> Vec<Vec<u64>> {
        let md = Mod::new(self.p(), self.n());
        let mut rows = Vec::with_capacity(bound * self.e());
        for i in 0..bound {
            for a in 0..self.e() {
                let prod = self.mul(s, &self.quot_basis_elem(a, i));
                rows.push(self.quot_vector(&prod, bound, md));
            }
        }
        rows
    }

    /// Solve H·A ≡ T entrywise modulo Fil^p over the finite quotient ring
    /// at m coefficient digits, returning H with coordinates below γ-index
    /// p. This is the weak witness equation when T = E^r·Id and the
    /// filtration-compatibility equation of a morphism when T = A_src·F.
    /// Callers pass the stored precision of A: solving above it would
    /// demand digits the data never had.
    pub(crate) fn solve_mod_fil(&self, t: &SMat, a: &SMat, m: u32) -> Option<SMat> {
        let d = a.len();
        let q = self.p() as usize * self.e();
        let md = Mod::new(self.p(), m.min(self.n()).max(1));
        // block matrix of right multiplication by A on row-blocks
        let mut big = vec![vec![0u64; d * q]; d * q];
        for j in 0..d {
            for k in 0..d {
                let op = self.quot_mult_op(&a[j][k], self.p() as usize);
                for (b, row) in op.iter().enumerate() {
                    for (bp, &val) in row.iter().enumerate() {
                        big[j * q + b][k * q + bp] = val % md.m;
                    }
                }
            }
        }
        let mut h = self.mat_zero(d, d);
        for i in 0..d {
            let mut y = Vec::with_capacity(d * q);
            for k in 0..d {
                y.extend(self.quot_vector(&t[i][k], self.p() as usize, md));
            }
            let sol = linalg::solve_left(md, &big, &y)?;
            for j in 0..d {
                let mut coeffs = Vec::with_capacity(self.p() as usize);
                for idx in 0..self.p() as usize {
                    let vals: Vec<i128> = (0..self.e())
                        .map(|b| sol[j * q + idx * self.e() + b] as i128)
                        .collect();
                    coeffs.push(Poly::from_i128(self.p(), md.n, &vals));
                }
                h[i][j] = self.make(coeffs, md.n, crate::element::TAIL_NONE, crate::element::TAIL_NONE);
            }
        }
        Some(h)
    }

    /// Membership in the weak-topology zero ideal (p^m, Fil^K, u^{eK}) with
    /// K the profile's convergence order and m = min(n, K). This is the
    /// "tends to zero" test for iteration residuals and infinite products.
    pub fn weak_zero(&self, x: &SElement) -> bool {
        let k = self.profile.conv_order as usize;
        let m = self.n().min(k as u32);
        if x.prec < m {
            return false;
        }
        let md = Mod::new(self.p(), m);
        let span = self.weak_span(k, md);
        span.contains(&self.quot_vector(x, k, md))
    }

    fn weak_span(&self, k: usize, md: Mod) -> RowSpan {
        let mut gens = Vec::new();
        let upow = self
            .canonicalize(&Poly::monomial(self.p(), self.n(), self.e() * k, 1))
            .expect("u^{eK} within degree bound");
        for i in 0..k {
            for a in 0..self.e() {
                let g = self.mul(&upow, &self.quot_basis_elem(a, i));
                gens.push(self.quot_vector(&g, k, md));
            }
        }
        RowSpan::new(md, k * self.e(), gens)
    }

    pub fn mat_weak_zero(&self, a: &SMat) -> bool {
        let k = self.profile.conv_order as usize;
        let m = self.n().min(k as u32);
        let md = Mod::new(self.p(), m);
        let span = self.weak_span(k, md);
        a.iter().flatten().all(|x| {
            x.prec >= m && span.contains(&self.quot_vector(x, k, md))
        })
    }
}

impl SemilinearModule {
    /// Frobenius-convention module over the u-adic subring: finite height
    /// ≤ r is part of validity, so the witness is computed and stored.
    pub fn kisin(ctx: &ArithCtx, r: u32, phi_data: SMat) -> Result<Self> {
        check_module_shape(ctx, r, &phi_data)?;
        if !ctx.mat_membership(&phi_data, RingTag::FRAK) {
            return Err(Error::NotInSourceRing(Ring::Frak));
        }
        let witness = ctx.height_witness(&phi_data, r)?;
        Ok(SemilinearModule {
            tag: RingTag::FRAK,
            d: phi_data.len(),
            r,
            phi_data,
            witness: Some(witness),
        })
    }

    /// Filtration-convention module over Σ or S: validity needs
    /// E^r·𝓜 ⊆ Fil^r𝓜, i.e. the weak witness equation H·A ≡ E^r·Id mod
    /// Fil^p must be solvable. An exact witness is stored when one exists.
    pub fn breuil(ctx: &ArithCtx, tag: RingTag, r: u32, phi_data: SMat) -> Result<Self> {
        if tag.ring == Ring::Frak {
            return Err(Error::ShapeMismatch(
                "filtration convention needs a divided-power ring tag".into(),
            ));
        }
        check_module_shape(ctx, r, &phi_data)?;
        if !ctx.mat_membership(&phi_data, tag) {
            return Err(Error::NotInSourceRing(tag.ring));
        }
        let d = phi_data.len();
        let target = ctx.mat_e_pow_identity(d, r as usize);
        if ctx.solve_mod_fil(&target, &phi_data, ctx.mat_min_prec(&phi_data)).is_none() {
            return Err(Error::NotALattice(
                "E^r·Id is not in the span of the filtration generators mod Fil^p".into(),
            ));
        }
        let witness = ctx.height_witness(&phi_data, r).ok();
        Ok(SemilinearModule {
            tag,
            d,
            r,
            phi_data,
            witness,
        })
    }

    /// Construct with a caller-supplied witness, verifying the product.
    pub fn with_witness(
        ctx: &ArithCtx,
        tag: RingTag,
        r: u32,
        phi_data: SMat,
        witness: SMat,
    ) -> Result<Self> {
        check_module_shape(ctx, r, &phi_data)?;
        let d = phi_data.len();
        if witness.len() != d || witness.iter().any(|row| row.len() != d) {
            return Err(Error::ShapeMismatch("witness shape differs from data".into()));
        }
        if !ctx.mat_membership(&phi_data, tag) || !ctx.mat_membership(&witness, tag) {
            return Err(Error::NotInSourceRing(tag.ring));
        }
        let prod = ctx.mat_mul(&phi_data, &witness);
        let target = ctx.mat_e_pow_identity(d, r as usize);
        let m = ctx.mat_min_prec(&prod).min(ctx.mat_min_prec(&target));
        if m == 0 || !ctx.mat_eq_mod(&prod, &target, m) {
            return Err(Error::NoWitness("supplied witness fails A·A′ = E^r·Id".into()));
        }
        Ok(SemilinearModule {
            tag,
            d,
            r,
            phi_data,
            witness: Some(witness),
        })
    }

    /// The exact witness if stored, else the weak witness mod Fil^p. Both
    /// satisfy the same constant-term identity, which is all that the
    /// classification uses.
    pub fn weak_witness(&self, ctx: &ArithCtx) -> Result<SMat> {
        if let Some(w) = &self.witness {
            return Ok(w.clone());
        }
        let target = ctx.mat_e_pow_identity(self.d, self.r as usize);
        ctx.solve_mod_fil(&target, &self.phi_data, ctx.mat_min_prec(&self.phi_data))
            .ok_or_else(|| Error::NoWitness("no witness, exact or mod Fil^p".into()))
    }

    /// Constant-term Fitting classification. In the Frobenius convention
    /// φ*-iteration runs through products of φ^i(A), so the stable rank of
    /// the data matrix counts multiplicative directions and the witness
    /// matrix counts étale ones; the filtration convention has the
    /// underlying φ(e) = φ(A′)·e, so the roles trade places. Weight 0 is
    /// étale by fiat (both definitions coincide there).
    pub fn classify(&self, ctx: &ArithCtx) -> Result<Classification> {
        let md = Mod::new(ctx.p(), ctx.n());
        let const_a = ctx.const_matrix(&self.phi_data);
        let const_w = ctx.const_matrix(&self.weak_witness(ctx)?);
        let (a_stable, _) = fitting_ranks(md, &const_a);
        let (w_stable, _) = fitting_ranks(md, &const_w);
        let (mut multiplicative, etale) = match self.tag.ring {
            Ring::Frak => (a_stable, w_stable),
            Ring::Sigma | Ring::S => (w_stable, a_stable),
        };
        if self.r == 0 {
            multiplicative = 0;
        }
        if multiplicative + etale > self.d {
            return Err(Error::ShapeMismatch(format!(
                "canonical ranks overlap: {multiplicative} + {etale} > {}",
                self.d
            )));
        }
        let ranks = CanonicalRanks {
            multiplicative,
            middle: self.d - multiplicative - etale,
            etale,
        };
        Ok(Classification {
            etale: ranks.etale == self.d,
            multiplicative: ranks.multiplicative == self.d,
            nilpotent: ranks.multiplicative == 0,
            unipotent: ranks.etale == 0,
            ranks,
        })
    }

    /// Maximal multiplicative subobject, presented by its constant-term
    /// row span (a free summand of (Z/p^N)^d). The rank is the
    /// multiplicative rank of the canonical filtration.
    pub fn max_multiplicative(&self, ctx: &ArithCtx) -> Result<(usize, RowSpan)> {
        let md = Mod::new(ctx.p(), ctx.n());
        if self.r == 0 {
            return Ok((0, RowSpan::empty(md, self.d)));
        }
        let mat = match self.tag.ring {
            Ring::Frak => ctx.const_matrix(&self.phi_data),
            Ring::Sigma | Ring::S => ctx.const_matrix(&self.weak_witness(ctx)?),
        };
        let span = stable_image_span(md, &mat);
        let rank = linalg::rank_mod_p(md, span.generators());
        Ok((rank, span))
    }

    /// Cartier duality transposes the witness pair. Needs an exact
    /// witness; the dual has the same tag, rank, and weight, and its
    /// classification swaps the étale and multiplicative labels.
    pub fn cartier_dual(&self, ctx: &ArithCtx) -> Result<SemilinearModule> {
        let w = self
            .witness
            .clone()
            .or_else(|| ctx.height_witness(&self.phi_data, self.r).ok())
            .ok_or_else(|| {
                Error::NoWitness("duality needs an exact height witness".into())
            })?;
        Ok(SemilinearModule {
            tag: self.tag,
            d: self.d,
            r: self.r,
            phi_data: ctx.mat_transpose(&w),
            witness: Some(ctx.mat_transpose(&self.phi_data)),
        })
    }

    /// Reduction mod p of the presentation.
    pub fn mod_p_reduce(&self, ctx: &ArithCtx) -> SemilinearModule {
        SemilinearModule {
            tag: self.tag.reduced(),
            d: self.d,
            r: self.r,
            phi_data: ctx.mat_sanitize(&ctx.mat_truncate_prec(&self.phi_data, 1)),
            witness: self
                .witness
                .as_ref()
                .map(|w| ctx.mat_sanitize(&ctx.mat_truncate_prec(w, 1))),
        }
    }
}

fn check_module_shape(ctx: &ArithCtx, r: u32, a: &SMat) -> Result<()> {
    let d = a.len();
    if d == 0 || a.iter().any(|row| row.len() != d) {
        return Err(Error::ShapeMismatch("module data must be square and nonempty".into()));
    }
    if r as u64 >= ctx.p() {
        return Err(Error::ShapeMismatch(format!(
            "weight r = {r} must satisfy 0 ≤ r ≤ p − 1 = {}",
            ctx.p() - 1
        )));
    }
    Ok(())
}

/// Morphism check, matrix F of g: src → dst on basis rows, via the exact
/// identity A_src·F = φ(F)·A_dst at stored precision. In the Frobenius
/// convention this is the definition. In the filtration convention it is
/// the transported condition for standard presentations: it puts
/// g(α_src) = φ(F)·α_dst, so the generators land in Fil^r automatically
/// and the divided Frobenius intertwines. (Checking the filtration side
/// by solving H·A_dst ≡ A_src·F mod Fil^p instead would leave H ambiguous
/// by the kernel of ·A_dst, whose φ-image is not bounded when A_dst is
/// not a unit, so that route cannot certify the φ-compatibility.)
pub fn verify_morphism(
    ctx: &ArithCtx,
    f: &SMat,
    src: &SemilinearModule,
    dst: &SemilinearModule,
) -> Result<bool> {
    if src.tag != dst.tag || src.r != dst.r {
        return Err(Error::ShapeMismatch(
            "morphisms need matching tags and weights".into(),
        ));
    }
    if f.len() != src.d || f.iter().any(|row| row.len() != dst.d) {
        return Err(Error::ShapeMismatch(format!(
            "morphism matrix must be {}×{}",
            src.d, dst.d
        )));
    }
    if !ctx.mat_membership(f, src.tag) {
        return Ok(false);
    }
    let lhs = ctx.mat_mul(&src.phi_data, f);
    let rhs = ctx.mat_mul(&ctx.mat_phi(f)?, &dst.phi_data);
    let m = ctx.mat_min_prec(&lhs).min(ctx.mat_min_prec(&rhs));
    if m == 0 {
        return Err(Error::ProfileOverflow(
            "no certified digits left for the morphism identity".into(),
        ));
    }
    Ok(ctx.mat_eq_mod(&lhs, &rhs, m))
}
