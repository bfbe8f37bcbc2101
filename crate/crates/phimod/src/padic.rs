//! Truncated p-adic integers, polynomials over them, and the valuation
//! combinatorics (Legendre formula, binomial valuations) the rest of the
//! crate leans on.
//!
//! A [`PadicInt`] is a residue mod p^N together with the precision N it is
//! trusted to. Arithmetic never rounds: results carry the minimum of the
//! operand precisions, and division either succeeds exactly or reports
//! [`ArithError::NotDivisible`].

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArithError {
    #[error("divisor is not monic")]
    NonMonicDivisor,
    #[error("not divisible at tracked precision (needed p^{needed}, value {value} mod p^{prec})")]
    NotDivisible { value: u64, needed: u32, prec: u32 },
    #[error("not a unit at tracked precision")]
    NotUnit,
    #[error("mixed primes in one operation: {0} vs {1}")]
    PrimeMismatch(u64, u64),
    #[error("precision overflow: p^{0} does not fit in 64 bits")]
    PrecisionOverflow(u32),
}

/// v_p(n!) by Legendre's formula.
pub fn vp_factorial(p: u64, n: u64) -> u64 {
    debug_assert!(p >= 2);
    let mut total = 0;
    let mut q = n / p;
    while q > 0 {
        total += q;
        q /= p;
    }
    total
}

/// v_p of a binomial coefficient C(m, k), via Legendre (Kummer's carry count).
pub fn vp_binomial(p: u64, m: u64, k: u64) -> u64 {
    debug_assert!(k <= m);
    vp_factorial(p, m) - vp_factorial(p, k) - vp_factorial(p, m - k)
}

/// Largest exponent N with p^N <= 2^62, the working-modulus ceiling.
pub fn max_precision(p: u64) -> u32 {
    let mut n = 0;
    let mut acc: u128 = 1;
    while acc * (p as u128) <= (1u128 << 62) {
        acc *= p as u128;
        n += 1;
    }
    n
}

fn pow_u64(p: u64, n: u32) -> u64 {
    let mut acc: u64 = 1;
    for _ in 0..n {
        acc = acc.checked_mul(p).expect("modulus overflow");
    }
    acc
}

/// A p-adic integer known mod p^prec.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PadicInt {
    p: u64,
    prec: u32,
    value: u64, // 0 <= value < p^prec
}

impl fmt::Debug for PadicInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {}^{})", self.value, self.p, self.prec)
    }
}

impl PadicInt {
    pub fn new(p: u64, prec: u32, value: i128) -> Self {
        assert!(prec >= 1, "precision must be at least 1");
        assert!(
            prec <= max_precision(p),
            "p^{prec} exceeds the 64-bit working modulus"
        );
        let m = pow_u64(p, prec) as i128;
        let v = value.rem_euclid(m) as u64;
        PadicInt { p, prec, value: v }
    }

    pub fn zero(p: u64, prec: u32) -> Self {
        Self::new(p, prec, 0)
    }

    pub fn one(p: u64, prec: u32) -> Self {
        Self::new(p, prec, 1)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn precision(&self) -> u32 {
        self.prec
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn modulus(&self) -> u64 {
        pow_u64(self.p, self.prec)
    }

    /// Signed representative in (-p^prec/2, p^prec/2], convenient for display.
    pub fn centered(&self) -> i128 {
        let m = self.modulus() as i128;
        let v = self.value as i128;
        if 2 * v > m {
            v - m
        } else {
            v
        }
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    /// True iff the residue is 0 mod p^k (k capped at the tracked precision).
    pub fn is_zero_mod(&self, k: u32) -> bool {
        let k = k.min(self.prec);
        self.value % pow_u64(self.p, k) == 0
    }

    /// v_p of the residue; `None` when the value is 0 at tracked precision
    /// (valuation >= prec, indistinguishable from infinity here).
    pub fn valuation(&self) -> Option<u32> {
        if self.value == 0 {
            return None;
        }
        let mut v = 0;
        let mut x = self.value;
        while x % self.p == 0 {
            x /= self.p;
            v += 1;
        }
        Some(v)
    }

    pub fn is_unit(&self) -> bool {
        self.value % self.p != 0
    }

    /// Reduce to a (weakly) lower precision.
    pub fn truncate(&self, prec: u32) -> Self {
        let prec = prec.min(self.prec).max(1);
        PadicInt {
            p: self.p,
            prec,
            value: self.value % pow_u64(self.p, prec),
        }
    }

    fn align(&self, other: &Self) -> (u64, u32, u64, u64) {
        assert_eq!(self.p, other.p, "mixed primes");
        let prec = self.prec.min(other.prec);
        let m = pow_u64(self.p, prec);
        (m, prec, self.value % m, other.value % m)
    }

    pub fn add(&self, other: &Self) -> Self {
        let (m, prec, a, b) = self.align(other);
        PadicInt {
            p: self.p,
            prec,
            value: ((a as u128 + b as u128) % m as u128) as u64,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let (m, prec, a, b) = self.align(other);
        PadicInt {
            p: self.p,
            prec,
            value: ((a as u128 + (m - b) as u128) % m as u128) as u64,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (m, prec, a, b) = self.align(other);
        PadicInt {
            p: self.p,
            prec,
            value: ((a as u128 * b as u128) % m as u128) as u64,
        }
    }

    pub fn neg(&self) -> Self {
        let m = self.modulus();
        PadicInt {
            p: self.p,
            prec: self.prec,
            value: (m - self.value) % m,
        }
    }

    pub fn scale(&self, k: i128) -> Self {
        self.mul(&PadicInt::new(self.p, self.prec, k))
    }

    /// Inverse of a unit, by Newton lifting from the inverse mod p.
    pub fn inverse(&self) -> Result<Self, ArithError> {
        if !self.is_unit() {
            return Err(ArithError::NotUnit);
        }
        let m = self.modulus() as u128;
        let a = self.value as u128;
        // inverse mod p by Fermat
        let mut inv: u128 = {
            let mut base = a % self.p as u128;
            let mut exp = self.p - 2;
            let mut acc: u128 = 1;
            while exp > 0 {
                if exp & 1 == 1 {
                    acc = acc * base % self.p as u128;
                }
                base = base * base % self.p as u128;
                exp >>= 1;
            }
            acc
        };
        // x <- x(2 - ax), doubling correct digits each round
        let mut digits = 1u32;
        while digits < self.prec {
            let two_minus = (2u128 + m - (a * inv) % m) % m;
            inv = inv * two_minus % m;
            digits *= 2;
        }
        Ok(PadicInt {
            p: self.p,
            prec: self.prec,
            value: inv as u64,
        })
    }

    /// Exact division by p^k. Precision drops by k.
    pub fn divide_p_pow(&self, k: u32) -> Result<Self, ArithError> {
        if k == 0 {
            return Ok(*self);
        }
        if k >= self.prec {
            // Nothing left to certify: only allowed when the residue is 0.
            if self.value == 0 {
                return Ok(PadicInt {
                    p: self.p,
                    prec: 1,
                    value: 0,
                });
            }
            return Err(ArithError::NotDivisible {
                value: self.value,
                needed: k,
                prec: self.prec,
            });
        }
        let pk = pow_u64(self.p, k);
        if self.value % pk != 0 {
            return Err(ArithError::NotDivisible {
                value: self.value,
                needed: k,
                prec: self.prec,
            });
        }
        Ok(PadicInt {
            p: self.p,
            prec: self.prec - k,
            value: self.value / pk,
        })
    }

    /// Split into (multiple of p^k, remainder below p^k); both exact.
    pub fn split_at(&self, k: u32) -> (Self, Self) {
        let k = k.min(self.prec);
        let pk = pow_u64(self.p, k);
        let lo = self.value % pk;
        (
            PadicInt {
                p: self.p,
                prec: self.prec,
                value: self.value - lo,
            },
            PadicInt {
                p: self.p,
                prec: self.prec,
                value: lo,
            },
        )
    }
}

/// Polynomial over PadicInt, dense in u-degree, trailing zeros trimmed.
#[derive(Clone, PartialEq, Eq)]
pub struct Poly {
    pub coeffs: Vec<PadicInt>,
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| match i {
                0 => format!("{}", c.value()),
                1 => format!("{}*u", c.value()),
                _ => format!("{}*u^{}", c.value(), i),
            })
            .collect();
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

impl Poly {
    pub fn new(coeffs: Vec<PadicInt>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![] }
    }

    pub fn constant(c: PadicInt) -> Self {
        Poly::new(vec![c])
    }

    pub fn from_i128(p: u64, prec: u32, coeffs: &[i128]) -> Self {
        Poly::new(
            coeffs
                .iter()
                .map(|&c| PadicInt::new(p, prec, c))
                .collect(),
        )
    }

    pub fn monomial(p: u64, prec: u32, deg: usize, c: i128) -> Self {
        let mut coeffs = vec![PadicInt::zero(p, prec); deg + 1];
        coeffs[deg] = PadicInt::new(p, prec, c);
        Poly::new(coeffs)
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(c) if c.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; None for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn coeff(&self, i: usize) -> Option<&PadicInt> {
        self.coeffs.get(i)
    }

    pub fn leading(&self) -> Option<&PadicInt> {
        self.coeffs.last()
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            match (self.coeffs.get(i), other.coeffs.get(i)) {
                (Some(a), Some(b)) => out.push(a.add(b)),
                (Some(a), None) => out.push(*a),
                (None, Some(b)) => out.push(*b),
                (None, None) => unreachable!(),
            }
        }
        Poly::new(out)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        Poly::new(self.coeffs.iter().map(|c| c.neg()).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let (p, prec) = (
            self.coeffs[0].p(),
            self.coeffs[0]
                .precision()
                .min(other.coeffs[0].precision()),
        );
        let mut out = vec![PadicInt::zero(p, prec); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].add(&a.mul(b));
            }
        }
        Poly::new(out)
    }

    pub fn scale(&self, c: &PadicInt) -> Self {
        Poly::new(self.coeffs.iter().map(|a| a.mul(c)).collect())
    }

    pub fn scale_i128(&self, k: i128) -> Self {
        Poly::new(self.coeffs.iter().map(|a| a.scale(k)).collect())
    }

    pub fn truncate_precision(&self, prec: u32) -> Self {
        Poly::new(self.coeffs.iter().map(|a| a.truncate(prec)).collect())
    }

    /// Substitute u -> u^k (Frobenius on coefficients is the identity here).
    pub fn substitute_u_pow(&self, k: usize) -> Self {
        if self.is_zero() {
            return Poly::zero();
        }
        let p = self.coeffs[0].p();
        let prec = self.coeffs[0].precision();
        let mut out = vec![PadicInt::zero(p, prec); (self.coeffs.len() - 1) * k + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            out[i * k] = *a;
        }
        Poly::new(out)
    }

    /// u * d/du, the building block of the monodromy operator (N = -u d/du).
    pub fn u_times_derivative(&self) -> Self {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c.scale(i as i128))
                .collect(),
        )
    }

    /// Minimum valuation over coefficients; None when zero at precision.
    pub fn min_valuation(&self) -> Option<u32> {
        self.coeffs.iter().filter_map(|c| c.valuation()).min()
    }

    pub fn is_zero_mod(&self, k: u32) -> bool {
        self.coeffs.iter().all(|c| c.is_zero_mod(k))
    }

    pub fn divide_p_pow(&self, k: u32) -> Result<Self, ArithError> {
        let mut out = Vec::with_capacity(self.coeffs.len());
        for c in &self.coeffs {
            out.push(c.divide_p_pow(k)?);
        }
        Ok(Poly::new(out))
    }
}

/// Division with remainder by a monic polynomial: f = q*g + r, deg r < deg g.
/// Exact at the common tracked precision.
pub fn divmod_monic(f: &Poly, g: &Poly) -> Result<(Poly, Poly), ArithError> {
    let gd = match g.degree() {
        Some(d) => d,
        None => return Err(ArithError::NonMonicDivisor),
    };
    match g.leading() {
        Some(c) if c.value() == 1 => {}
        _ => return Err(ArithError::NonMonicDivisor),
    }
    let mut rem = f.coeffs.clone();
    if rem.len() <= gd {
        return Ok((Poly::zero(), f.clone()));
    }
    let p = g.coeffs[0].p();
    let prec = f
        .coeffs
        .iter()
        .chain(g.coeffs.iter())
        .map(|c| c.precision())
        .min()
        .unwrap();
    let mut q = vec![PadicInt::zero(p, prec); rem.len() - gd];
    for top in (gd..rem.len()).rev() {
        let c = rem[top];
        if c.is_zero() {
            continue;
        }
        q[top - gd] = c;
        for (k, gk) in g.coeffs.iter().enumerate() {
            rem[top - gd + k] = rem[top - gd + k].sub(&c.mul(gk));
        }
    }
    rem.truncate(gd);
    Ok((Poly::new(q), Poly::new(rem)))
}

/// Binomial coefficient C(m, k) reduced mod p^prec, split into p-part and
/// unit part so m up to a few hundred stays exact even when C(m, k)
/// overflows a machine word.
pub fn binomial_mod(p: u64, prec: u32, m: u64, k: u64) -> PadicInt {
    debug_assert!(k <= m);
    let modulus = pow_u64(p, prec) as u128;
    // unit part of n!/p^{v_p(n!)} mod p^prec, accumulated incrementally
    let unit_fact = |n: u64| -> u128 {
        let mut acc: u128 = 1;
        for t in 1..=n {
            let mut t = t;
            while t % p == 0 {
                t /= p;
            }
            acc = acc * (t as u128) % modulus;
        }
        acc
    };
    let vp = vp_binomial(p, m, k);
    if vp >= prec as u64 {
        return PadicInt::zero(p, prec);
    }
    let num = unit_fact(m);
    let den = unit_fact(k) * unit_fact(m - k) % modulus;
    let den_inv = PadicInt::new(p, prec, den as i128)
        .inverse()
        .expect("unit part is a unit");
    let mut val = PadicInt::new(p, prec, num as i128).mul(&den_inv);
    for _ in 0..vp {
        val = val.scale(p as i128);
    }
    val
}

/// p^a / b where b | p^a exactly as integers is not what we need; this is
/// the unit (n!/p^{v_p(n!)})^{-1} mod p^prec, used for φ(γ_i) = (p^i/i!)c^i.
pub fn inverse_factorial_unit(p: u64, prec: u32, n: u64) -> PadicInt {
    let modulus = pow_u64(p, prec) as u128;
    let mut acc: u128 = 1;
    for t in 1..=n {
        let mut t = t;
        while t % p == 0 {
            t /= p;
        }
        acc = acc * (t as u128) % modulus;
    }
    PadicInt::new(p, prec, acc as i128)
        .inverse()
        .expect("unit part is a unit")
}
