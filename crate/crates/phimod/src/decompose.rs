//! Constructive decompositions between the three rings: these are what turn
//! the containment statements (every S-element splits off its Σ-part, the
//! intermediate ring is generated over the power series by Y, the deep
//! filtration is (E^i, Y)) into algorithms with re-multipliable witnesses.
//!
//! All splits here are coordinate-exact: the γ-basis is free, so each
//! decomposition is a partition (or an exactly-divisible reshuffle) of the
//! coordinate vector, and the only precision charges are the factorial
//! ratios of the divisions involved.

use crate::context::{ArithCtx, Ring};
use crate::element::SElement;
use crate::padic::{PadicInt, Poly};
use crate::{Error, Result};

/// The native presentation of an intermediate-ring element below Fil^{p+1}:
/// x = b(u) + c(u)·Y + d with deg b, deg c < ep and d ∈ Fil^{p+1}.
pub struct YForm {
    pub b: Poly,
    pub c: Poly,
    pub d: SElement,
}

impl ArithCtx {
    /// Split an arbitrary element into (Σ-part, Fil^{p+1} defect). Always
    /// succeeds: coordinate i is cut at the Σ-threshold
    /// t_i = max(0, v_p(i!) − ⌊i/p⌋), the high part meets the criterion and
    /// the sub-threshold residue lives at indices ≥ p+1 only.
    pub fn s_split(&self, x: &SElement) -> (SElement, SElement) {
        let mut hi = Vec::with_capacity(self.cap());
        let mut lo = Vec::with_capacity(self.cap());
        for (i, a) in x.coeffs.iter().enumerate() {
            let t = (self.vpf(i) as i64 - (i as u64 / self.p()) as i64).max(0) as u32;
            if t == 0 || a.is_zero() {
                hi.push(a.clone());
                lo.push(Poly::zero());
                continue;
            }
            let mut hs = Vec::with_capacity(a.coeffs.len());
            let mut ls = Vec::with_capacity(a.coeffs.len());
            for c in &a.coeffs {
                let (h, l) = c.split_at(t);
                hs.push(h);
                ls.push(l);
            }
            hi.push(Poly::new(hs));
            lo.push(Poly::new(ls));
        }
        (
            self.rebuild(x, hi),
            self.rebuild(x, lo),
        )
    }

    /// Unconditional valuation cut at the power-series floor v_p(i!). The
    /// high side meets the u-adic criterion; the low side, for Σ-inputs, is
    /// in Y·Σ, and sinks to Fil^{p+1} when the γ_p coordinate carries a p.
    pub(crate) fn frak_floor_cut(&self, x: &SElement) -> (SElement, SElement) {
        let mut hi = Vec::with_capacity(self.cap());
        let mut lo = Vec::with_capacity(self.cap());
        for (i, a) in x.coeffs.iter().enumerate() {
            let t = self.vpf(i);
            if t == 0 || a.is_zero() {
                hi.push(a.clone());
                lo.push(Poly::zero());
                continue;
            }
            let mut hs = Vec::with_capacity(a.coeffs.len());
            let mut ls = Vec::with_capacity(a.coeffs.len());
            for c in &a.coeffs {
                let (h, l) = c.split_at(t);
                hs.push(h);
                ls.push(l);
            }
            hi.push(Poly::new(hs));
            lo.push(Poly::new(ls));
        }
        (self.rebuild(x, hi), self.rebuild(x, lo))
    }

    /// Split an intermediate-ring element into (power-series part, Fil^{p+1}
    /// defect), cutting coordinate i at the power-series threshold v_p(i!).
    /// The cut is a partition of Σ only away from index p: a unit times γ_p
    /// fits neither piece, so the γ_p coordinate must already be divisible
    /// by p. Intended inputs (iteration residues) are p-divisible outright.
    pub fn sigma_split(&self, x: &SElement) -> Result<(SElement, SElement)> {
        let (hi, lo) = self.frak_floor_cut(x);
        if !lo.coeff(self.p() as usize).is_zero() {
            return Err(Error::NotDivisible(
                "γ_p coordinate is not divisible by p, the split has no home for it".into(),
            ));
        }
        Ok((hi, lo))
    }

    /// Split into (indices < p, indices >= p). The low part is a power-series
    /// element for any input (small factorials are units); the high part is
    /// in Fil^p, and lands in Y·Σ exactly when the input was in Σ.
    pub fn frak_split(&self, x: &SElement) -> (SElement, SElement) {
        let p = self.p() as usize;
        let mut lo = x.coeffs.clone();
        let mut hi = vec![Poly::zero(); self.cap()];
        for i in p.min(self.cap())..self.cap() {
            hi[i] = std::mem::replace(&mut lo[i], Poly::zero());
        }
        (self.rebuild(x, lo), self.rebuild(x, hi))
    }

    /// Present an intermediate-ring element as b + c·Y + d. The b and c
    /// extractions divide only by units (k! below p, and (p+k)!/p for
    /// k < p), so no precision is lost; d keeps the coordinates from 2p up
    /// unchanged and is in Fil^{p+1} with room to spare.
    pub fn sigma_bcd(&self, x: &SElement) -> Result<YForm> {
        if !self.membership(x, crate::context::RingTag::SIGMA) {
            return Err(Error::NotInSourceRing(Ring::Sigma));
        }
        let p = self.p() as usize;
        let b = self.reduce_mod_fil(x, p)?;
        let epoly = self.ed.poly(x.prec);
        let mut c = Poly::zero();
        let mut epow = Poly::constant(PadicInt::one(self.p(), x.prec));
        for k in 0..p.min(self.cap().saturating_sub(p)) {
            let a = &x.coeffs[p + k];
            if !a.is_zero() {
                // (p+k)!/p is a unit for k < p
                let (v, unit) = self.factorial_ratio(0, p + k, x.prec);
                debug_assert_eq!(v, 1);
                c = c.add(&a.scale(&unit.inverse().expect("unit")).mul(&epow));
            }
            epow = epow.mul(&epoly);
        }
        let mut dc = vec![Poly::zero(); self.cap()];
        for i in (2 * p).min(self.cap())..self.cap() {
            dc[i] = x.coeffs[i].clone();
        }
        Ok(YForm {
            b,
            c,
            d: self.rebuild(x, dc),
        })
    }

    /// The unit c = φ(E)/p split as t + Y with t a power-series element:
    /// t = (E(u^p) − E(u)^p)/p, whose coefficients are divisible by p
    /// because raising to the p-th power commutes with reduction mod p.
    pub fn c_split(&self) -> (SElement, SElement) {
        let wp = (self.n() + 1).min(self.max_boost());
        let epoly = self.ed.poly(wp);
        let mut epow = Poly::constant(PadicInt::one(self.p(), wp));
        for _ in 0..self.p() {
            epow = epow.mul(&epoly);
        }
        let diff = self.ed.poly_phi(wp).sub(&epow);
        let t_poly = diff
            .divide_p_pow(1)
            .expect("freshman's dream: E(u^p) ≡ E(u)^p mod p");
        let t = self
            .canonicalize_at(&t_poly, self.n().min(wp - 1))
            .expect("degree < ep fits any profile");
        let y_part = self.sub(self.c(), &t);
        debug_assert!(
            self.eq_mod(&y_part, &self.y(), y_part.prec.min(self.y().prec)),
            "c − t must be exactly Y"
        );
        (t, y_part)
    }

    /// Express x ∈ Fil^i (i <= p−1) of the intermediate ring as
    /// E^i·g + Y·h with g a power-series element and h in Σ. The generators
    /// are not unique; the returned pair re-multiplies to x exactly.
    pub fn fil_sigma_split(&self, x: &SElement, i: usize) -> Result<(SElement, SElement)> {
        if i >= self.p() as usize {
            return Err(Error::ProfileOverflow(format!(
                "the (E^i, Y) presentation needs i <= p−1, got {i}"
            )));
        }
        if self.fil_degree(x) < i {
            return Err(Error::NotInFiltration(i as u32));
        }
        if !self.membership(x, crate::context::RingTag::SIGMA) {
            return Err(Error::NotInSourceRing(Ring::Sigma));
        }
        let p = self.p() as usize;
        // middle indices [i, p): exact unit divisions E^i·γ_m = ((m+i)!/m!)γ_{m+i}
        let mut g = vec![Poly::zero(); self.cap()];
        for m in 0..(p - i) {
            let a = &x.coeffs[m + i];
            if !a.is_zero() {
                let (v, unit) = self.factorial_ratio(m, m + i, x.prec);
                debug_assert_eq!(v, 0, "factorials below p are units");
                g[m] = a.scale(&unit.inverse().expect("unit"));
            }
        }
        let (_, high) = self.frak_split(x);
        let h = self.divide_y(&high)?;
        Ok((self.rebuild(x, g), h))
    }

    fn rebuild(&self, like: &SElement, mut coeffs: Vec<Poly>) -> SElement {
        coeffs.resize(self.cap(), Poly::zero());
        SElement {
            coeffs: coeffs
                .into_iter()
                .map(|c| c.truncate_precision(like.prec))
                .collect(),
            prec: like.prec,
            tail_phi: like.tail_phi,
            tail_plain: like.tail_plain,
        }
    }
}
