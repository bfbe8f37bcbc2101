//! Canonical elements of the divided-power ring and the core ring
//! operations: canonicalization, Frobenius, monodromy, divided Frobenius,
//! exact division, units, filtration degree, subring membership.
//!
//! # Representation
//!
//! An element is stored as its γ-basis coordinate vector: x = Σ_{i<I} a_i(u)
//! γ_i(E) with deg a_i < e, where I is the profile's gamma_cap. This basis is
//! free over Z_p, so the coordinates are canonical: Fil^j membership is the
//! coordinate test a_i = 0 for i < j, and multiplication is the binomial
//! convolution γ_i γ_j = C(i+j, i) γ_{i+j} followed by reduction of the
//! u-degree along E.
//!
//! # Precision
//!
//! Three fields govern what is trusted:
//!
//! * `prec` — represented coordinates are exact mod p^prec. Truncation never
//!   corrupts them directly, because dropped terms live at γ-indices >= I
//!   and multiplication only raises indices.
//! * `tail_phi` — a lower bound on v_p of the φ-image of everything ever
//!   dropped. φ is the one operation that teleports high-index content back
//!   to index 0 (through φ(γ_i) = (p^i/i!) c^i), so applying φ caps the
//!   result precision at this bound.
//! * `tail_plain` — a pre-paid budget for the descending paths (division by
//!   E, monodromy), which move hidden content down one index at a time. The
//!   budget charged at drop time is v_p(coeff) − (v_p(i!) − v_p((I−1)!)),
//!   the worst factorial cost of walking the content down into view, so a
//!   single scalar stays sound under any number of later divisions.
//!
//! Both tails are u32::MAX when nothing was ever dropped; then every
//! operation is exact at `prec`. Operations that would need a trusted digit
//! past an exhausted budget fail with ProfileOverflow instead of lying.

use std::fmt;

use crate::context::{ArithCtx, Ring, RingTag};
use crate::padic::{binomial_mod, divmod_monic, inverse_factorial_unit, PadicInt, Poly};
use crate::{Error, Result};

pub const TAIL_NONE: u32 = u32::MAX;

#[derive(Clone)]
pub struct SElement {
    /// γ-coordinates; length = gamma_cap, deg < e, all PadicInt at `prec`.
    pub(crate) coeffs: Vec<Poly>,
    pub prec: u32,
    pub tail_phi: u32,
    pub tail_plain: u32,
}

fn tail_erode(t: u32, amount: u32) -> u32 {
    if t == TAIL_NONE {
        TAIL_NONE
    } else {
        t.saturating_sub(amount)
    }
}

fn tail_raise(t: u32, amount: u32) -> u32 {
    if t == TAIL_NONE {
        TAIL_NONE
    } else {
        t.saturating_add(amount)
    }
}

impl SElement {
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.coeffs[0].degree() == Some(0)
            && self.coeffs[0].coeff(0).map_or(false, |c| c.value() == 1)
            && self.coeffs[1..].iter().all(|c| c.is_zero())
    }

    pub fn exact(&self) -> bool {
        self.tail_phi == TAIL_NONE && self.tail_plain == TAIL_NONE
    }

    pub fn coeff(&self, i: usize) -> &Poly {
        &self.coeffs[i]
    }

    /// Highest γ-index with a nonzero coordinate.
    pub fn support_max(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|c| !c.is_zero())
    }

    /// Lowest γ-index with a nonzero coordinate.
    pub fn support_min(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| !c.is_zero())
    }

    /// Minimum of v_p over all coordinates; None when zero at precision.
    pub fn min_valuation(&self) -> Option<u32> {
        self.coeffs.iter().filter_map(|c| c.min_valuation()).min()
    }

    /// Every coordinate divisible by p^k, certified (k within precision).
    pub fn certified_zero_mod(&self, k: u32) -> bool {
        k <= self.prec && self.coeffs.iter().all(|c| c.is_zero_mod(k))
    }

    /// Canonical literal: integer-coefficient terms with optional u-powers
    /// and gamma(i) factors, centered representatives for readability.
    pub fn literal(&self) -> String {
        let mut parts: Vec<(i128, usize, usize)> = Vec::new();
        for (i, c) in self.coeffs.iter().enumerate() {
            for (k, a) in c.coeffs.iter().enumerate() {
                if !a.is_zero() {
                    parts.push((a.centered(), k, i));
                }
            }
        }
        if parts.is_empty() {
            return "0".to_string();
        }
        parts.sort_by_key(|&(_, k, i)| (i, k));
        let mut out = String::new();
        for (idx, &(v, k, i)) in parts.iter().enumerate() {
            let mag = v.unsigned_abs();
            if idx == 0 {
                if v < 0 {
                    out.push('-');
                }
            } else if v < 0 {
                out.push_str(" - ");
            } else {
                out.push_str(" + ");
            }
            let mut factors: Vec<String> = Vec::new();
            if mag != 1 || (k == 0 && i == 0) {
                factors.push(mag.to_string());
            }
            if k == 1 {
                factors.push("u".into());
            } else if k > 1 {
                factors.push(format!("u^{k}"));
            }
            if i > 0 {
                factors.push(format!("gamma({i})"));
            }
            out.push_str(&factors.join("*"));
        }
        out
    }
}

impl fmt::Display for SElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.literal())
    }
}

impl fmt::Debug for SElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod p^{}", self.literal(), self.prec)?;
        if !self.exact() {
            write!(f, ", tails phi>={} plain>={}", self.tail_phi, self.tail_plain)?;
        }
        write!(f, ")")
    }
}

/// Collects valuations of dropped terms during an operation.
struct DropMeter {
    phi: u32,
    plain: u32,
}

impl DropMeter {
    fn new() -> Self {
        DropMeter { phi: TAIL_NONE, plain: TAIL_NONE }
    }

    fn record(&mut self, ctx: &ArithCtx, idx: usize, dropped: &Poly, prec: u32) {
        let v = dropped.min_valuation().unwrap_or(prec);
        let gain = idx as u32 - ctx.vpf(idx);
        self.phi = self.phi.min(v + gain);
        let descent_cost = ctx.vpf(idx) - ctx.vpf(ctx.cap() - 1);
        self.plain = self.plain.min(v.saturating_sub(descent_cost));
    }
}

impl ArithCtx {
    pub(crate) fn make(
        &self,
        mut coeffs: Vec<Poly>,
        prec: u32,
        tail_phi: u32,
        tail_plain: u32,
    ) -> SElement {
        coeffs.resize(self.cap(), Poly::zero());
        let coeffs = coeffs
            .into_iter()
            .map(|c| c.truncate_precision(prec))
            .collect();
        SElement { coeffs, prec, tail_phi, tail_plain }
    }

    pub fn zero(&self) -> SElement {
        self.make(vec![], self.n(), TAIL_NONE, TAIL_NONE)
    }

    pub fn one(&self) -> SElement {
        self.from_const(1)
    }

    pub fn from_const(&self, v: i128) -> SElement {
        self.make(
            vec![Poly::constant(PadicInt::new(self.p(), self.n(), v))],
            self.n(),
            TAIL_NONE,
            TAIL_NONE,
        )
    }

    /// γ_i(E) as an element.
    pub fn gamma(&self, i: usize) -> Result<SElement> {
        if i >= self.cap() {
            return Err(Error::ProfileOverflow(format!(
                "gamma({i}) exceeds the profile cap {}",
                self.cap()
            )));
        }
        let mut coeffs = vec![Poly::zero(); i + 1];
        coeffs[i] = Poly::constant(PadicInt::one(self.p(), self.n()));
        Ok(self.make(coeffs, self.n(), TAIL_NONE, TAIL_NONE))
    }

    /// Y = E^p/p = (p−1)!·γ_p.
    pub fn y(&self) -> SElement {
        let p = self.p() as usize;
        let mut coeffs = vec![Poly::zero(); p + 1];
        let mut v = PadicInt::one(self.p(), self.n());
        for t in 1..p {
            v = v.scale(t as i128);
        }
        coeffs[p] = Poly::constant(v);
        self.make(coeffs, self.n(), TAIL_NONE, TAIL_NONE)
    }

    /// E(u) as an element: exactly γ_1.
    pub fn e_elem(&self) -> SElement {
        self.gamma(1).expect("cap >= 2")
    }

    pub fn u_elem(&self) -> SElement {
        self.canonicalize(&Poly::monomial(self.p(), self.n(), 1, 1))
            .expect("u fits any profile")
    }

    /// Write a u-polynomial in the γ-basis: f = Σ f_j E^j gives γ_j
    /// coordinate f_j · j!.
    pub fn canonicalize(&self, f: &Poly) -> Result<SElement> {
        self.canonicalize_at(f, self.n())
    }

    pub fn canonicalize_at(&self, f: &Poly, prec: u32) -> Result<SElement> {
        if let Some(d) = f.degree() {
            if d >= self.e() * self.cap() {
                return Err(Error::ProfileOverflow(format!(
                    "degree {d} needs γ-indices past the cap {}",
                    self.cap()
                )));
            }
        }
        let epoly = self.ed.poly(prec);
        let mut coeffs = Vec::new();
        let mut cur = f.truncate_precision(prec);
        let mut j = 0usize;
        while !cur.is_zero() {
            let (q, r) = divmod_monic(&cur, &epoly)?;
            coeffs.push(r.scale(&self.factorial(j).truncate(prec)));
            cur = q;
            j += 1;
        }
        Ok(self.make(coeffs, prec, TAIL_NONE, TAIL_NONE))
    }

    /// Build Σ b_j(u)·Y^j from the native intermediate-ring form
    /// (deg b_j < ep required).
    pub fn from_y_series(&self, bs: &[Poly]) -> Result<SElement> {
        let p = self.p() as usize;
        let mut acc = self.zero();
        for (j, b) in bs.iter().enumerate() {
            if b.is_zero() {
                continue;
            }
            if b.degree().unwrap() >= self.e() * p {
                return Err(Error::ProfileOverflow(format!(
                    "Y-series coefficient b_{j} has degree >= ep"
                )));
            }
            if p * j >= self.cap() {
                return Err(Error::ProfileOverflow(format!(
                    "Y^{j} exceeds the profile cap"
                )));
            }
            // Y^j = ((pj)!/p^j)·γ_{pj}, computed without precision loss by
            // stripping p-parts factor by factor
            let mut unit = PadicInt::one(self.p(), self.n());
            let mut vp_total = 0u32;
            for t in 1..=(p * j) as u64 {
                let mut t = t;
                while t % self.p() == 0 {
                    t /= self.p();
                    vp_total += 1;
                }
                unit = unit.scale(t as i128);
            }
            let mut yj = self.gamma(p * j)?;
            yj = self.scale_padic(&yj, &unit);
            yj = self.scale_p_pow(&yj, vp_total - j as u32);
            let term = self.mul(&self.canonicalize(b)?, &yj);
            acc = self.add(&acc, &term);
        }
        Ok(acc)
    }

    pub fn add(&self, x: &SElement, y: &SElement) -> SElement {
        let prec = x.prec.min(y.prec);
        let coeffs = x
            .coeffs
            .iter()
            .zip(&y.coeffs)
            .map(|(a, b)| a.add(b))
            .collect();
        self.make(
            coeffs,
            prec,
            x.tail_phi.min(y.tail_phi),
            x.tail_plain.min(y.tail_plain),
        )
    }

    pub fn sub(&self, x: &SElement, y: &SElement) -> SElement {
        self.add(x, &self.neg(y))
    }

    pub fn neg(&self, x: &SElement) -> SElement {
        SElement {
            coeffs: x.coeffs.iter().map(|c| c.neg()).collect(),
            ..*x
        }
    }

    pub fn scale_i128(&self, x: &SElement, k: i128) -> SElement {
        let c = PadicInt::new(self.p(), x.prec, k);
        self.scale_padic(x, &c)
    }

    pub fn scale_padic(&self, x: &SElement, c: &PadicInt) -> SElement {
        let prec = x.prec.min(c.precision());
        self.make(
            x.coeffs.iter().map(|a| a.scale(c)).collect(),
            prec,
            x.tail_phi,
            x.tail_plain,
        )
    }

    pub fn mul(&self, x: &SElement, y: &SElement) -> SElement {
        let prec = x.prec.min(y.prec);
        let cap = self.cap();
        let epoly = self.ed.poly(prec);
        let mut buf: Vec<Poly> = vec![Poly::zero(); cap];
        let mut meter = DropMeter::new();
        for (i, a) in x.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in y.coeffs.iter().enumerate() {
                if b.is_zero() {
                    continue;
                }
                let k = i + j;
                let binom = binomial_mod(self.p(), prec, k as u64, i as u64);
                let prod = a.mul(b).scale(&binom);
                if k < cap {
                    buf[k] = buf[k].add(&prod);
                } else {
                    meter.record(self, k, &prod, prec);
                }
            }
        }
        // reduce u-degrees along E, carrying E·γ_k = (k+1)γ_{k+1}
        for k in 0..cap {
            if buf[k].degree().map_or(false, |d| d >= self.e()) {
                let (q, r) = divmod_monic(&buf[k], &epoly).expect("E is monic");
                buf[k] = r;
                let carry = q.scale_i128(k as i128 + 1);
                if k + 1 < cap {
                    buf[k + 1] = buf[k + 1].add(&carry);
                } else {
                    meter.record(self, cap, &carry, prec);
                }
            }
        }
        // hidden content of one factor times the γ-support of the other
        // erodes the plain budget by at most v_p(jmax!)
        let xev = x.support_max().map_or(0, |m| self.vpf(m));
        let yev = y.support_max().map_or(0, |m| self.vpf(m));
        let tail_phi = x.tail_phi.min(y.tail_phi).min(meter.phi);
        let tail_plain = tail_erode(x.tail_plain, yev)
            .min(tail_erode(y.tail_plain, xev))
            .min(meter.plain);
        self.make(buf, prec, tail_phi, tail_plain)
    }

    /// Multiply by E^k: the exact index shift E^k·γ_i = (i+k)!/i!·γ_{i+k}.
    pub fn mul_e_pow(&self, x: &SElement, k: usize) -> SElement {
        if k == 0 {
            return x.clone();
        }
        let cap = self.cap();
        let mut buf = vec![Poly::zero(); cap];
        let mut meter = DropMeter::new();
        for (i, a) in x.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let mut ratio = PadicInt::one(self.p(), x.prec);
            for t in (i + 1)..=(i + k) {
                ratio = ratio.scale(t as i128);
            }
            let moved = a.scale(&ratio);
            if i + k < cap {
                buf[i + k] = buf[i + k].add(&moved);
            } else {
                meter.record(self, i + k, &moved, x.prec);
            }
        }
        self.make(
            buf,
            x.prec,
            x.tail_phi.min(meter.phi),
            x.tail_plain.min(meter.plain),
        )
    }

    /// Multiply by p^k. The digits are genuinely known one level higher, so
    /// precision rises (capped by the profile).
    pub fn scale_p_pow(&self, x: &SElement, k: u32) -> SElement {
        if k == 0 {
            return x.clone();
        }
        let prec = (x.prec + k).min(self.n().max(x.prec));
        let lift = prec - x.prec; // how much headroom the profile allows
        let pk = (self.p() as i128).pow(k);
        let coeffs = x
            .coeffs
            .iter()
            .map(|c| {
                Poly::new(
                    c.coeffs
                        .iter()
                        .map(|a| PadicInt::new(self.p(), a.precision() + lift, a.value() as i128 * pk))
                        .collect(),
                )
            })
            .collect();
        self.make(
            coeffs,
            prec,
            tail_raise(x.tail_phi, k),
            tail_raise(x.tail_plain, k),
        )
    }

    /// Exact division by p^k; precision and both tail budgets drop by k.
    pub fn divide_p_pow(&self, x: &SElement, k: u32) -> Result<SElement> {
        if k == 0 {
            return Ok(x.clone());
        }
        if k >= x.prec {
            return Err(Error::ProfileOverflow(format!(
                "dividing by p^{k} exhausts precision {}",
                x.prec
            )));
        }
        let mut coeffs = Vec::with_capacity(self.cap());
        for (i, c) in x.coeffs.iter().enumerate() {
            match c.divide_p_pow(k) {
                Ok(q) => coeffs.push(q),
                Err(_) => {
                    return Err(Error::NotDivisible(format!(
                        "γ_{i} coordinate not divisible by p^{k}"
                    )))
                }
            }
        }
        Ok(self.make(
            coeffs,
            x.prec - k,
            tail_erode(x.tail_phi, k),
            tail_erode(x.tail_plain, k),
        ))
    }

    /// Exact division by E^k in one coordinate pass: the γ-basis is free,
    /// so E^k·γ_m = ((m+k)!/m!)·γ_{m+k} forces the quotient coordinate
    /// h_m = a_{m+k}·m!/(m+k)!. Division by the p-part of that factorial
    /// ratio costs precision; the charge is the worst case over every index
    /// below the cap, because a stored-zero coordinate only certifies
    /// ≡ 0 mod p^prec and its hidden part pays the same factorial toll on
    /// the way down. Hidden tail content slides k indices toward view,
    /// which is what the plain-tail budget pre-paid.
    pub fn divide_e_pow(&self, x: &SElement, k: usize) -> Result<SElement> {
        if k == 0 {
            return Ok(x.clone());
        }
        for i in 0..k.min(self.cap()) {
            if !x.coeffs[i].is_zero() {
                return Err(Error::NotDivisible(format!(
                    "γ_{i} coordinate nonzero, element not in Fil^{k}"
                )));
            }
        }
        let upper = self.cap().saturating_sub(k);
        let mut coeffs = vec![Poly::zero(); self.cap()];
        for m in 0..upper {
            let a = &x.coeffs[m + k];
            if a.is_zero() {
                continue;
            }
            let (v, unit) = self.factorial_ratio(m, m + k, x.prec);
            let divided = a.divide_p_pow(v).map_err(|_| {
                Error::NotDivisible(format!(
                    "γ_{} coordinate not divisible by p^{v}",
                    m + k
                ))
            })?;
            coeffs[m] = divided.scale(&unit.inverse().expect("p-free part is a unit"));
        }
        let loss = (0..upper)
            .map(|m| self.vpf(m + k) - self.vpf(m))
            .max()
            .unwrap_or(0);
        if loss >= x.prec {
            return Err(Error::ProfileOverflow(
                "division by E exhausted the precision budget".into(),
            ));
        }
        let mut prec = x.prec - loss;
        if x.tail_plain != TAIL_NONE {
            prec = prec.min(x.tail_plain);
        }
        if prec == 0 {
            return Err(Error::ProfileOverflow(
                "division by E exhausted the precision budget".into(),
            ));
        }
        Ok(self.make(
            coeffs,
            prec,
            tail_erode(x.tail_phi, k as u32),
            x.tail_plain,
        ))
    }

    /// Exact division by Y = E^p/p: h_m = a_{p+m}/((p−1)!·C(p+m, m)). The
    /// divisor's p-part is v_p((p+m)!) − 1 − v_p(m!), one less than the
    /// division by E^p, which is why dividing by Y is the cheap move on the
    /// intermediate ring.
    pub fn divide_y(&self, x: &SElement) -> Result<SElement> {
        let p = self.p() as usize;
        for i in 0..p.min(self.cap()) {
            if !x.coeffs[i].is_zero() {
                return Err(Error::NotDivisible(format!(
                    "γ_{i} coordinate nonzero, element not divisible by Y"
                )));
            }
        }
        let upper = self.cap().saturating_sub(p);
        let mut coeffs = vec![Poly::zero(); self.cap()];
        for m in 0..upper {
            let a = &x.coeffs[m + p];
            if a.is_zero() {
                continue;
            }
            let (v, unit) = self.factorial_ratio(m, m + p, x.prec);
            debug_assert!(v >= 1, "v_p((m+p)!/m!) >= 1");
            let divided = a.divide_p_pow(v - 1).map_err(|_| {
                Error::NotDivisible(format!(
                    "γ_{} coordinate not divisible by p^{}",
                    m + p,
                    v - 1
                ))
            })?;
            coeffs[m] = divided.scale(&unit.inverse().expect("p-free part is a unit"));
        }
        let loss = (0..upper)
            .map(|m| self.vpf(m + p) - 1 - self.vpf(m))
            .max()
            .unwrap_or(0);
        if loss >= x.prec {
            return Err(Error::ProfileOverflow(
                "division by Y exhausted the precision budget".into(),
            ));
        }
        let mut prec = x.prec - loss;
        if x.tail_plain != TAIL_NONE {
            prec = prec.min(x.tail_plain);
        }
        if prec == 0 {
            return Err(Error::ProfileOverflow(
                "division by Y exhausted the precision budget".into(),
            ));
        }
        Ok(self.make(
            coeffs,
            prec,
            tail_erode(x.tail_phi, self.p() as u32 - 1),
            x.tail_plain,
        ))
    }

    /// (v_p of (hi)!/(lo)!, its unit part mod p^prec).
    pub(crate) fn factorial_ratio(&self, lo: usize, hi: usize, prec: u32) -> (u32, PadicInt) {
        let mut v = 0u32;
        let mut unit = PadicInt::one(self.p(), prec);
        for t in (lo + 1)..=hi {
            let mut t = t as u64;
            while t % self.p() == 0 {
                t /= self.p();
                v += 1;
            }
            unit = unit.scale(t as i128);
        }
        (v, unit)
    }

    /// Frobenius: semilinear ring map with φ(u) = u^p, φ(γ_i) = (p^i/i!)c^i.
    pub fn phi(&self, x: &SElement) -> Result<SElement> {
        let mut acc = self.zero();
        acc.prec = x.prec;
        for (i, a) in x.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let sub = self.canonicalize_at(&a.substitute_u_pow(self.p() as usize), x.prec)?;
            let gain = i as u32 - self.vpf(i);
            let mut term = self.mul(&sub, self.c_pow(i));
            term = self.scale_padic(&term, &inverse_factorial_unit(self.p(), term.prec, i as u64));
            term = self.scale_p_pow(&term, gain);
            acc = self.add(&acc, &term);
        }
        // terms of high filtration are known past x.prec, but the stored-zero
        // coordinates of x only certify ≡ 0 mod p^prec and their hidden part
        // re-enters at index 0, so the result is capped at x.prec
        let mut prec = acc.prec.min(x.prec);
        if x.tail_phi != TAIL_NONE {
            prec = prec.min(x.tail_phi);
            if prec == 0 {
                return Err(Error::ProfileOverflow(
                    "Frobenius exhausted the tail budget".into(),
                ));
            }
        }
        Ok(self.make(
            acc.coeffs,
            prec,
            acc.tail_phi.min(x.tail_phi),
            acc.tail_plain
                .min(tail_erode(x.tail_phi, self.phi_tail_slop)),
        ))
    }

    /// The derivation with N(u) = −u, extended by N(γ_i) = N(E)·γ_{i−1}.
    pub fn monodromy(&self, x: &SElement) -> Result<SElement> {
        // N(E) = −u·E'(u), reduced to the γ-basis once
        let ne = {
            let d = self.ed.poly(x.prec).u_times_derivative().neg();
            self.canonicalize_at(&d, x.prec)?
        };
        let mut acc = self.zero();
        acc.prec = x.prec;
        for (i, a) in x.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            // coefficient part: N(a_i) γ_i with N(a) = −u·a'
            let da = a.u_times_derivative().neg();
            if !da.is_zero() {
                let mut coeffs = vec![Poly::zero(); i + 1];
                coeffs[i] = da;
                let t = self.make(coeffs, x.prec, TAIL_NONE, TAIL_NONE);
                acc = self.add(&acc, &t);
            }
            // divided-power part: a_i N(E) γ_{i−1}
            if i >= 1 {
                let mut coeffs = vec![Poly::zero(); i];
                coeffs[i - 1] = a.clone();
                let t = self.make(coeffs, x.prec, TAIL_NONE, TAIL_NONE);
                acc = self.add(&acc, &self.mul(&t, &ne));
            }
        }
        let mut prec = acc.prec;
        if x.tail_plain != TAIL_NONE {
            prec = prec.min(x.tail_plain);
            if prec == 0 {
                return Err(Error::ProfileOverflow(
                    "monodromy exhausted the tail budget".into(),
                ));
            }
        }
        Ok(self.make(
            acc.coeffs,
            prec,
            acc.tail_phi.min(tail_erode(x.tail_phi, 1)),
            acc.tail_plain.min(x.tail_plain),
        ))
    }

    /// φ_r = φ/p^r on Fil^r.
    pub fn phi_r(&self, x: &SElement, r: u32) -> Result<SElement> {
        assert!(r < self.p() as u32, "phi_r needs 0 <= r <= p-1");
        if (self.fil_degree(x) as u32) < r {
            return Err(Error::NotInFiltration(r));
        }
        self.divide_p_pow(&self.phi(x)?, r)
    }

    /// Largest j with x ∈ Fil^j at tracked precision (coordinate test).
    pub fn fil_degree(&self, x: &SElement) -> usize {
        x.support_min().unwrap_or(self.cap())
    }

    /// Constant coordinate's constant term is a p-adic unit (the three
    /// rings are local with residue field k).
    pub fn is_unit(&self, x: &SElement) -> bool {
        x.coeffs[0].coeff(0).map_or(false, |c| c.is_unit())
    }

    /// Newton iteration y ↦ y(2 − xy); exact in the truncated model because
    /// the error squares each round and the maximal ideal is nilpotent.
    pub fn invert(&self, x: &SElement) -> Result<SElement> {
        if !self.is_unit(x) {
            return Err(Error::NotUnit);
        }
        let a00 = x.coeffs[0].coeff(0).unwrap();
        let mut y = self.make(
            vec![Poly::constant(a00.inverse().expect("unit"))],
            x.prec,
            TAIL_NONE,
            TAIL_NONE,
        );
        let two = self.from_const(2);
        for _ in 0..64 {
            let prod = self.mul(x, &y);
            if prod.is_one() {
                return Ok(y);
            }
            y = self.mul(&y, &self.sub(&two, &prod));
        }
        Err(Error::ProfileOverflow(
            "unit inverse iteration failed to stabilize".into(),
        ))
    }

    /// Subring membership by the coordinate valuation criteria.
    pub fn membership(&self, x: &SElement, tag: RingTag) -> bool {
        match tag.ring {
            Ring::S => true,
            Ring::Frak => x.coeffs.iter().enumerate().all(|(i, c)| {
                c.min_valuation().map_or(true, |v| v >= self.vpf(i))
            }),
            Ring::Sigma => x.coeffs.iter().enumerate().all(|(i, c)| {
                let bound = self.vpf(i) as i64 - (i as u64 / self.p()) as i64;
                c.min_valuation().map_or(true, |v| v as i64 >= bound)
            }),
        }
    }

    /// Image in S/Fil^j ≅ W(k)[u]/(E^j) for j <= p, as a polynomial of
    /// degree < ej: γ_i ↦ E^i/i! with i! a unit below p.
    pub fn reduce_mod_fil(&self, x: &SElement, j: usize) -> Result<Poly> {
        if j > self.p() as usize {
            return Err(Error::ProfileOverflow(
                "the polynomial model of S/Fil^j needs j <= p".into(),
            ));
        }
        let epoly = self.ed.poly(x.prec);
        let mut acc = Poly::zero();
        let mut epow = Poly::constant(PadicInt::one(self.p(), x.prec));
        for i in 0..j {
            let inv_fact = self.factorial(i).truncate(x.prec).inverse().expect("i < p");
            acc = acc.add(&x.coeffs[i].scale(&inv_fact).mul(&epow));
            epow = epow.mul(&epoly);
        }
        Ok(acc)
    }

    pub fn truncate_prec(&self, x: &SElement, m: u32) -> SElement {
        let prec = m.max(1).min(x.prec);
        self.make(x.coeffs.clone(), prec, x.tail_phi, x.tail_plain)
    }

    /// Rebase onto the stored representative: same coordinates, tails
    /// forgotten. After this, downstream results are statements about the
    /// stored element (which is its own exact lift), not about whatever the
    /// tails were approximating. Iterative algorithms use this at
    /// checkpoints where the next residual re-certifies the state anyway;
    /// final answers are always re-verified by exact multiplication, so a
    /// checkpoint cannot smuggle a wrong result through.
    pub fn sanitize(&self, x: &SElement) -> SElement {
        self.make(x.coeffs.clone(), x.prec, TAIL_NONE, TAIL_NONE)
    }

    /// Move an element into a compatible context (same E, possibly other
    /// caps). Content past a smaller cap is dropped with its valuations
    /// charged to the tails, same as any truncation.
    pub fn migrate(&self, x: &SElement, to: &ArithCtx) -> Result<SElement> {
        if self.ed != to.ed {
            return Err(Error::ProfileOverflow(
                "cannot migrate between different Eisenstein data".into(),
            ));
        }
        let mut meter = DropMeter::new();
        let mut coeffs = x.coeffs.clone();
        if to.cap() < self.cap() {
            for (i, c) in x.coeffs.iter().enumerate().skip(to.cap()) {
                if !c.is_zero() {
                    meter.record(to, i, c, x.prec);
                }
            }
            coeffs.truncate(to.cap());
        }
        let prec = x.prec.min(to.n());
        Ok(to.make(
            coeffs,
            prec,
            x.tail_phi.min(meter.phi),
            x.tail_plain.min(meter.plain),
        ))
    }

    /// Equality of represented coordinates mod p^m (m within both
    /// precisions).
    pub fn eq_mod(&self, x: &SElement, y: &SElement, m: u32) -> bool {
        self.sub(x, y).certified_zero_mod(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{EisensteinData, PrecisionProfile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx(p: u64, n: u32, ecoeffs: &[i128]) -> ArithCtx {
        let ed = EisensteinData::new(p, ecoeffs.to_vec()).unwrap();
        let cap = match p {
            2 => (2 * n as usize + 4).max(16),
            3 => 16,
            _ => 2 * p as usize + 2,
        };
        let profile = PrecisionProfile::new(p, n, cap, 3 * cap, 4).unwrap();
        ArithCtx::new(ed, profile).unwrap()
    }

    fn c3() -> ArithCtx {
        ctx(3, 6, &[-3, 1])
    }

    fn assert_coords(x: &SElement, want: &[(usize, &[i128])]) {
        let p = 3u64; // only used by p=3 tests
        for (i, c) in x.coeffs.iter().enumerate() {
            let expect: &[i128] = want
                .iter()
                .find(|(j, _)| *j == i)
                .map(|(_, v)| *v)
                .unwrap_or(&[]);
            let got = Poly::from_i128(p, x.prec, expect);
            assert_eq!(c, &got, "γ_{i} coordinate of {x:?}");
        }
    }

    #[test]
    fn canonicalize_frozen_cases() {
        let c = c3();
        // E itself is γ_1
        let e = c.canonicalize(&c.ed.poly(6)).unwrap();
        assert_coords(&e, &[(1, &[1])]);
        // u = E + 3
        let u = c.u_elem();
        assert_coords(&u, &[(0, &[3]), (1, &[1])]);
        // u^3 − 3 = E^3 + 9E^2 + 27E + 24
        let f = Poly::from_i128(3, 6, &[-3, 0, 0, 1]);
        let x = c.canonicalize(&f).unwrap();
        assert_coords(&x, &[(0, &[24]), (1, &[27]), (2, &[18]), (3, &[6])]);
    }

    #[test]
    fn canonicalize_is_linear_with_zero_kernel() {
        let c = c3();
        let f = Poly::from_i128(3, 6, &[5, -2, 0, 7, 1]);
        let g = Poly::from_i128(3, 6, &[1, 4, -3, 0, 2, 9]);
        let lhs = c.canonicalize(&f.add(&g)).unwrap();
        let rhs = c.add(&c.canonicalize(&f).unwrap(), &c.canonicalize(&g).unwrap());
        assert!(c.eq_mod(&lhs, &rhs, 6));
        // zero kernel: a nonzero polynomial has a nonzero coordinate vector,
        // so equal coordinates force equal polynomials
        assert!(!c.canonicalize(&f.sub(&g)).unwrap().is_zero());
        assert!(c.canonicalize(&f.sub(&f)).unwrap().is_zero());
        // and E-multiples canonicalize to the shifted coordinates exactly
        let ef = c.canonicalize(&f.mul(&c.ed.poly(6))).unwrap();
        let shifted = c.mul_e_pow(&c.canonicalize(&f).unwrap(), 1);
        assert!(c.eq_mod(&ef, &shifted, 6));
    }

    #[test]
    fn compute_c_frozen_p3() {
        let c = c3();
        let cc = c.c();
        assert_coords(cc, &[(0, &[8]), (1, &[9]), (2, &[6]), (3, &[2])]);
        assert!(c.is_unit(cc));
        assert_eq!(cc.prec, 6);
        assert!(cc.exact());
    }

    #[test]
    fn compute_c_frozen_p2() {
        let c = ctx(2, 6, &[-2, 1]);
        let cc = c.c();
        let one = Poly::from_i128(2, 6, &[1]);
        let two = Poly::from_i128(2, 6, &[2]);
        assert_eq!(cc.coeff(0), &one);
        assert_eq!(cc.coeff(1), &two);
        assert_eq!(cc.coeff(2), &one);
        assert!(cc.coeff(3).is_zero());
        assert!(c.is_unit(cc));
    }

    #[test]
    fn phi_frozen_cases() {
        let c = c3();
        let one = c.one();
        assert!(c.phi(&one).unwrap().is_one());
        // φ(γ_1) = p·c
        let pg = c.phi(&c.gamma(1).unwrap()).unwrap();
        let want = c.scale_p_pow(c.c(), 1);
        assert!(c.eq_mod(&pg, &want, 6));
        // φ(u·γ_0) = canonicalize(u^3)
        let pu = c.phi(&c.u_elem()).unwrap();
        assert_coords(&pu, &[(0, &[27]), (1, &[27]), (2, &[18]), (3, &[6])]);
    }

    #[test]
    fn monodromy_frozen_cases() {
        let c = c3();
        assert!(c.monodromy(&c.one()).unwrap().is_zero());
        let nu = c.monodromy(&c.u_elem()).unwrap();
        assert_coords(&nu, &[(0, &[-3]), (1, &[-1])]);
        let ng2 = c.monodromy(&c.gamma(2).unwrap()).unwrap();
        assert_coords(&ng2, &[(1, &[-3]), (2, &[-2])]);
    }

    #[test]
    fn fil_degree_frozen_cases() {
        let c = c3();
        assert_eq!(c.fil_degree(&c.gamma(3).unwrap()), 3);
        assert_eq!(c.fil_degree(&c.one()), 0);
        assert_eq!(c.fil_degree(&c.from_const(3)), 0);
        assert_eq!(c.fil_degree(&c.zero()), c.cap());
    }

    #[test]
    fn phi_r_frozen_cases() {
        let c = c3();
        // φ_1(γ_1) = c
        let x = c.phi_r(&c.gamma(1).unwrap(), 1).unwrap();
        assert!(c.eq_mod(&x, c.c(), 5));
        // φ_2(E^2) = c^2
        let e2 = c.mul_e_pow(&c.one(), 2);
        let y = c.phi_r(&e2, 2).unwrap();
        assert!(c.eq_mod(&y, c.c_pow(2), 4));
        // φ_1(u·γ_1) = u^3·c in canonical form
        let ug1 = c.mul(&c.u_elem(), &c.gamma(1).unwrap());
        let z = c.phi_r(&ug1, 1).unwrap();
        let u3 = c.canonicalize(&Poly::monomial(3, 6, 3, 1)).unwrap();
        let want = c.mul(&u3, c.c());
        assert!(c.eq_mod(&z, &want, 5));
        // not in filtration
        assert!(matches!(
            c.phi_r(&c.one(), 1),
            Err(Error::NotInFiltration(1))
        ));
    }

    #[test]
    fn invert_frozen_cases() {
        let c = c3();
        assert!(c.invert(&c.one()).unwrap().is_one());
        let inv = c.invert(c.c()).unwrap();
        assert!(c.mul(&inv, c.c()).is_one());
        assert!(matches!(c.invert(&c.u_elem()), Err(Error::NotUnit)));
    }

    #[test]
    fn divide_exact_frozen_cases() {
        let c = c3();
        // φ(E)/p = c
        let pe = c.phi(&c.e_elem()).unwrap();
        let q = c.divide_p_pow(&pe, 1).unwrap();
        assert!(c.eq_mod(&q, c.c(), 5));
        // (E·γ_1)/E = γ_1; the blanket loss for p = 3, cap 16 is v_3(9) = 2
        let eg = c.mul(&c.e_elem(), &c.gamma(1).unwrap());
        let g = c.divide_e_pow(&eg, 1).unwrap();
        assert_eq!(g.prec, 4);
        assert!(c.eq_mod(&g, &c.gamma(1).unwrap(), 4));
        // 1/p fails
        assert!(matches!(
            c.divide_p_pow(&c.one(), 1),
            Err(Error::NotDivisible(_))
        ));
    }

    #[test]
    fn membership_frozen_cases() {
        for (p, ec) in [(2u64, vec![-2i128, 1]), (3, vec![-3, 1])] {
            let c = ctx(p, 6, &ec);
            let gp = c.gamma(p as usize).unwrap();
            let gp2 = c.gamma((p * p) as usize).unwrap();
            assert!(c.membership(&gp, RingTag::SIGMA), "γ_p ∈ Σ at p={p}");
            assert!(!c.membership(&gp2, RingTag::SIGMA), "γ_p² ∉ Σ at p={p}");
            assert!(!c.membership(&gp, RingTag::FRAK), "γ_p ∉ 𝔖 at p={p}");
            for k in 0..6 {
                let uk = c
                    .canonicalize(&Poly::monomial(p, 6, k, 1))
                    .unwrap();
                assert!(c.membership(&uk, RingTag::FRAK), "u^{k} ∈ 𝔖 at p={p}");
            }
        }
    }

    #[test]
    fn reduce_mod_fil_is_a_section() {
        let c = c3();
        let f = Poly::from_i128(3, 6, &[4, -1]);
        let x = c.canonicalize(&f).unwrap();
        let r1 = c.reduce_mod_fil(&x, 1).unwrap();
        // mod E: u ≡ 3, so 4 − u ≡ 1
        assert_eq!(r1, Poly::from_i128(3, 6, &[1]));
        let r2 = c.reduce_mod_fil(&x, 2).unwrap();
        let (_, rem) = divmod_monic(&f, &c.ed.poly(6).mul(&c.ed.poly(6))).unwrap();
        assert_eq!(r2, rem);
    }

    #[test]
    fn y_series_round_trip() {
        let c = c3();
        // x = (1 + u) + (2 − u)·Y + 5·Y^2
        let x = c
            .from_y_series(&[
                Poly::from_i128(3, 6, &[1, 1]),
                Poly::from_i128(3, 6, &[2, -1]),
                Poly::from_i128(3, 6, &[5]),
            ])
            .unwrap();
        assert!(c.membership(&x, RingTag::SIGMA));
        // Y = 2γ_3 at p = 3: check the γ_3 coordinate picks up 2·(2 − u)…
        // simpler: subtract the parts and compare to zero
        let b0 = c.canonicalize(&Poly::from_i128(3, 6, &[1, 1])).unwrap();
        let b1 = c.canonicalize(&Poly::from_i128(3, 6, &[2, -1])).unwrap();
        let yy = c.y();
        let y2 = c.mul(&yy, &yy);
        let rebuilt = c.add(
            &b0,
            &c.add(&c.mul(&b1, &yy), &c.scale_i128(&y2, 5)),
        );
        assert!(c.eq_mod(&x, &rebuilt, 6));
    }

    fn random_elem(c: &ArithCtx, rng: &mut ChaCha8Rng, max_idx: usize) -> SElement {
        let mut coeffs = Vec::new();
        for _ in 0..=max_idx.min(c.cap() - 1) {
            let poly: Vec<i128> = (0..c.e()).map(|_| rng.gen_range(-40..40)).collect();
            coeffs.push(Poly::from_i128(c.p(), c.n(), &poly));
        }
        c.make(coeffs, c.n(), TAIL_NONE, TAIL_NONE)
    }

    #[test]
    fn phi_is_a_ring_map() {
        for (p, ec) in [(2u64, vec![-2i128, 1]), (3, vec![-3, 1]), (3, vec![-3, 3, 1])] {
            let c = ctx(p, 5, &ec);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..25 {
                let x = random_elem(&c, &mut rng, 5);
                let y = random_elem(&c, &mut rng, 5);
                let lhs = c.phi(&c.mul(&x, &y)).unwrap();
                let rhs = c.mul(&c.phi(&x).unwrap(), &c.phi(&y).unwrap());
                let m = lhs.prec.min(rhs.prec);
                assert!(c.eq_mod(&lhs, &rhs, m), "φ(xy) ≠ φ(x)φ(y) at p={p}");
                let lhs = c.phi(&c.add(&x, &y)).unwrap();
                let rhs = c.add(&c.phi(&x).unwrap(), &c.phi(&y).unwrap());
                let m = lhs.prec.min(rhs.prec);
                assert!(c.eq_mod(&lhs, &rhs, m), "φ(x+y) ≠ φ(x)+φ(y) at p={p}");
            }
        }
    }

    #[test]
    fn monodromy_is_a_derivation_and_twists_phi() {
        for (p, ec) in [(2u64, vec![-2i128, 1]), (3, vec![-3, 1]), (2, vec![-2, 2, 1])] {
            let c = ctx(p, 5, &ec);
            let mut rng = ChaCha8Rng::seed_from_u64(23);
            for _ in 0..25 {
                let x = random_elem(&c, &mut rng, 5);
                let y = random_elem(&c, &mut rng, 5);
                let lhs = c.monodromy(&c.mul(&x, &y)).unwrap();
                let rhs = c.add(
                    &c.mul(&c.monodromy(&x).unwrap(), &y),
                    &c.mul(&x, &c.monodromy(&y).unwrap()),
                );
                let m = lhs.prec.min(rhs.prec);
                assert!(c.eq_mod(&lhs, &rhs, m), "Leibniz fails at p={p}");
                // Nφ = pφN
                let lhs = c.monodromy(&c.phi(&x).unwrap()).unwrap();
                let rhs = c.scale_p_pow(&c.phi(&c.monodromy(&x).unwrap()).unwrap(), 1);
                let m = lhs.prec.min(rhs.prec);
                assert!(c.eq_mod(&lhs, &rhs, m), "Nφ ≠ pφN at p={p}");
            }
        }
    }

    #[test]
    fn phi_divides_on_filtration() {
        for (p, ec) in [(3u64, vec![-3i128, 1]), (5, vec![-5, 1])] {
            let c = ctx(p, 4, &ec);
            let mut rng = ChaCha8Rng::seed_from_u64(37);
            for j in 1..p as usize {
                for _ in 0..10 {
                    let x = random_elem(&c, &mut rng, 4);
                    let filx = c.mul(&x, &c.gamma(j).unwrap());
                    assert!(c.fil_degree(&filx) >= j);
                    let im = c.phi(&filx).unwrap();
                    assert!(
                        im.certified_zero_mod(j as u32),
                        "φ(Fil^{j}) ⊄ p^{j}S at p={p}"
                    );
                }
            }
        }
    }

    #[test]
    fn filtration_is_multiplicative() {
        let c = c3();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..30 {
            let i = rng.gen_range(0..4usize);
            let j = rng.gen_range(0..4usize);
            let x = c.mul(&random_elem(&c, &mut rng, 3), &c.gamma(i).unwrap());
            let y = c.mul(&random_elem(&c, &mut rng, 3), &c.gamma(j).unwrap());
            let d = c.fil_degree(&c.mul(&x, &y));
            assert!(
                d >= c.fil_degree(&x) + c.fil_degree(&y).min(c.cap() - c.fil_degree(&x)),
                "Fil^i·Fil^j ⊄ Fil^(i+j)"
            );
        }
    }

    #[test]
    fn mod_p_phi_r_kills_deep_filtration_for_odd_p() {
        // φ_r vanishes on Fil^{p+1} mod p when p >= 3: every γ_i with
        // i >= p+1 has i − v_p(i!) >= p > r
        for (p, ec) in [(3u64, vec![-3i128, 1]), (5, vec![-5, 1])] {
            let c = ctx(p, 6, &ec);
            let mut rng = ChaCha8Rng::seed_from_u64(53);
            for _ in 0..10 {
                let x = random_elem(&c, &mut rng, 4);
                let deep = c.mul(&x, &c.gamma(p as usize + 1).unwrap());
                let r = p as u32 - 1;
                let im = c.phi_r(&deep, r).unwrap();
                assert!(
                    im.certified_zero_mod(1),
                    "φ_r(Fil^{{p+1}}) ≠ 0 mod p at p={p}"
                );
            }
        }
    }

    #[test]
    fn phi_r_deep_filtration_is_a_unit_multiple_at_p2() {
        // the p = 2 exception: γ_4 ∈ Fil^3 but φ_1(γ_4) = c^4·(2/3·2) has
        // valuation 0, so the mod-2 vanishing genuinely fails
        let c = ctx(2, 6, &[-2, 1]);
        let g4 = c.gamma(4).unwrap();
        let im = c.phi_r(&g4, 1).unwrap();
        assert!(c.is_unit(&im));
    }

    #[test]
    fn tails_are_measured_on_deep_products() {
        let c = c3();
        // γ_8 · γ_8 lands at γ_16 = cap boundary and drops
        let g = c.gamma(8).unwrap();
        let sq = c.mul(&g, &g);
        assert!(sq.is_zero());
        assert_ne!(sq.tail_phi, TAIL_NONE);
        // C(16,8) = 12870 with v_3 = 2; gain at 16 is 16 − v_3(16!) = 16 − 6
        assert_eq!(sq.tail_phi, 2 + 10);
        // φ folds the tail into precision
        let f = c.phi(&sq).unwrap();
        assert_eq!(f.prec, 6.min(12));
    }
}
