//! The ambient data every ring operation needs: the Eisenstein polynomial,
//! the truncation profile, and a context object carrying derived caches
//! (the unit c = φ(E)/p and its powers, factorials mod p^N).

use std::sync::OnceLock;

use crate::element::SElement;
use crate::padic::{vp_factorial, PadicInt, Poly};
use crate::{Error, Result};

/// An Eisenstein polynomial E(u) = u^e + c_{e-1}u^{e-1} + ... + c_0 over Z_p:
/// monic, p | c_i for all i < e, and v_p(c_0) = 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EisensteinData {
    pub p: u64,
    pub e: usize,
    /// len e+1, coeffs[e] = 1
    pub coeffs: Vec<i128>,
}

impl EisensteinData {
    pub fn new(p: u64, coeffs: Vec<i128>) -> Result<Self> {
        if p < 2 || coeffs.len() < 2 {
            return Err(Error::ProfileOverflow(
                "Eisenstein polynomial needs degree >= 1 and p >= 2".into(),
            ));
        }
        let e = coeffs.len() - 1;
        if coeffs[e] != 1 {
            return Err(Error::ProfileOverflow("E(u) must be monic".into()));
        }
        let pi = p as i128;
        for (i, &c) in coeffs.iter().enumerate().take(e) {
            if c % pi != 0 {
                return Err(Error::ProfileOverflow(format!(
                    "Eisenstein condition fails: p does not divide coefficient of u^{i}"
                )));
            }
        }
        if (coeffs[0] / pi) % pi == 0 {
            return Err(Error::ProfileOverflow(
                "Eisenstein condition fails: p^2 divides the constant term".into(),
            ));
        }
        Ok(EisensteinData { p, e, coeffs })
    }

    pub fn poly(&self, prec: u32) -> Poly {
        Poly::from_i128(self.p, prec, &self.coeffs)
    }

    /// E(u^p) as a polynomial, the Frobenius image of E.
    pub fn poly_phi(&self, prec: u32) -> Poly {
        self.poly(prec).substitute_u_pow(self.p as usize)
    }
}

/// Which of the three nested rings (and whether we work mod p).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ring {
    /// W(k)[[u]], the power-series ring.
    Frak,
    /// The intermediate subring generated by Y = E^p/p.
    Sigma,
    /// The full divided-power ring.
    S,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RingTag {
    pub ring: Ring,
    pub mod_p: bool,
}

impl RingTag {
    pub const FRAK: RingTag = RingTag { ring: Ring::Frak, mod_p: false };
    pub const SIGMA: RingTag = RingTag { ring: Ring::Sigma, mod_p: false };
    pub const S: RingTag = RingTag { ring: Ring::S, mod_p: false };

    pub fn reduced(self) -> RingTag {
        RingTag { mod_p: true, ..self }
    }
}

/// Truncation parameters: p-precision n, divided-power index cap (γ_i kept
/// for i < gamma_cap), u-degree cap for literal/native input, and the
/// convergence order used by limit verdicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrecisionProfile {
    pub n: u32,
    pub gamma_cap: usize,
    pub u_cap: usize,
    pub conv_order: u32,
}

impl PrecisionProfile {
    /// Validates the profile against p. For p >= 3 the truncation bound
    /// min_{i >= gamma_cap} (i - v_p(i!)) >= n guarantees that any dropped
    /// γ-tail has φ-image divisible by p^n, so truncation is invisible at
    /// precision n. For p = 2 that minimum equals the binary digit sum of i,
    /// which is 1 at powers of two no matter how large gamma_cap is; there
    /// the profile must leave headroom (gamma_cap >= 2n + 4) and the element
    /// arithmetic tracks the actually-dropped valuations dynamically.
    pub fn new(p: u64, n: u32, gamma_cap: usize, u_cap: usize, conv_order: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::ProfileOverflow("precision n must be at least 2".into()));
        }
        if n > crate::padic::max_precision(p) {
            return Err(Error::ProfileOverflow(format!(
                "p^{n} exceeds the 64-bit working modulus"
            )));
        }
        if gamma_cap < 2 * p as usize + 2 {
            return Err(Error::ProfileOverflow(format!(
                "gamma_cap must be at least 2p + 2 = {}",
                2 * p + 2
            )));
        }
        if p == 2 {
            if gamma_cap < 2 * n as usize + 4 {
                return Err(Error::ProfileOverflow(format!(
                    "for p = 2, gamma_cap must be at least 2n + 4 = {}",
                    2 * n + 4
                )));
            }
        } else {
            // beyond i >= n(p-1)/(p-2) + 1 the bound holds automatically,
            // so scanning a finite window decides the minimum
            let window_end =
                (gamma_cap as u64).max(n as u64 * (p - 1) / (p - 2) + 2) as usize + 1;
            let min_gain = (gamma_cap..=window_end)
                .map(|i| i as u64 - vp_factorial(p, i as u64))
                .min()
                .unwrap();
            if min_gain < n as u64 {
                return Err(Error::ProfileOverflow(format!(
                    "gamma_cap {gamma_cap} too small for precision {n}: \
                     dropped tails are only divisible by p^{min_gain}"
                )));
            }
        }
        if conv_order == 0 {
            return Err(Error::ProfileOverflow("conv_order must be positive".into()));
        }
        Ok(PrecisionProfile { n, gamma_cap, u_cap, conv_order })
    }

    /// Smallest valid profile at precision n: scans gamma_cap upward from the
    /// structural minimum until the tail-divisibility bound holds, with
    /// u_cap = 3·gamma_cap. Descent drivers use this to build working
    /// contexts a few digits above the requested precision.
    pub fn for_params(p: u64, n: u32, conv_order: u32) -> Result<Self> {
        let floor = (2 * p as usize + 2).max(if p == 2 { 2 * n as usize + 4 } else { 0 });
        let mut cap = floor;
        loop {
            match PrecisionProfile::new(p, n, cap, 3 * cap, conv_order) {
                Ok(profile) => return Ok(profile),
                Err(e) if cap > floor + 8 * n as usize => return Err(e),
                Err(_) => cap += 2,
            }
        }
    }
}

/// Arithmetic context: Eisenstein data + profile + derived caches. All ring
/// operations are methods on this (see element.rs, decompose.rs, smatrix.rs).
#[derive(Debug)]
pub struct ArithCtx {
    pub ed: EisensteinData,
    pub profile: PrecisionProfile,
    c_cache: OnceLock<SElement>,
    cpow_cache: OnceLock<Vec<SElement>>,
    /// i! mod p^n for 0 <= i <= 2·gamma_cap
    fact_cache: OnceLock<Vec<PadicInt>>,
    /// budget erosion for the plain-tail bound under φ (see element.rs)
    pub(crate) phi_tail_slop: u32,
}

impl ArithCtx {
    pub fn new(ed: EisensteinData, profile: PrecisionProfile) -> Result<Self> {
        // re-validate together (profile was checked against some p already)
        let profile =
            PrecisionProfile::new(ed.p, profile.n, profile.gamma_cap, profile.u_cap, profile.conv_order)?;
        let slop = (vp_factorial(ed.p, 2 * profile.gamma_cap as u64)
            - vp_factorial(ed.p, profile.gamma_cap as u64 - 1)) as u32;
        Ok(ArithCtx {
            ed,
            profile,
            c_cache: OnceLock::new(),
            cpow_cache: OnceLock::new(),
            fact_cache: OnceLock::new(),
            phi_tail_slop: slop,
        })
    }

    pub fn p(&self) -> u64 {
        self.ed.p
    }

    pub fn e(&self) -> usize {
        self.ed.e
    }

    pub fn n(&self) -> u32 {
        self.profile.n
    }

    pub fn cap(&self) -> usize {
        self.profile.gamma_cap
    }

    /// Same ring, same truncation shape (contexts differing only in caches).
    pub fn compatible(&self, other: &ArithCtx) -> bool {
        self.ed == other.ed && self.profile == other.profile
    }

    pub(crate) fn factorial(&self, i: usize) -> PadicInt {
        let cache = self.fact_cache.get_or_init(|| {
            // one digit above n so canonicalization at n+1 (the c-path)
            // stays exact before its division by p
            let fp = (self.n() + 1).min(crate::padic::max_precision(self.p()));
            let mut v = Vec::with_capacity(2 * self.cap() + 1);
            let mut acc = PadicInt::one(self.p(), fp);
            v.push(acc);
            for k in 1..=(2 * self.cap()) {
                acc = acc.scale(k as i128);
                v.push(acc);
            }
            v
        });
        cache[i]
    }

    /// v_p(i!), as a u32 (indices here are small).
    pub(crate) fn vpf(&self, i: usize) -> u32 {
        vp_factorial(self.p(), i as u64) as u32
    }

    /// The unit c = φ(E(u))/p, cached at full profile precision (one digit
    /// lower when n already sits at the 64-bit modulus ceiling).
    pub fn c(&self) -> &SElement {
        self.c_cache.get_or_init(|| {
            let wp = (self.n() + 1).min(self.max_boost());
            let phi_e = self
                .canonicalize_at(&self.ed.poly_phi(wp), wp)
                .expect("E(u^p) fits the profile");
            self.divide_p_pow(&phi_e, 1)
                .expect("Eisenstein E(u^p) is divisible by p after removing u^{ep}")
        })
    }

    /// c^k for 0 <= k <= gamma_cap + 2p + 1, cached.
    pub fn c_pow(&self, k: usize) -> &SElement {
        let cache = self.cpow_cache.get_or_init(|| {
            let top = self.cap() + 2 * self.p() as usize + 2;
            let mut v = Vec::with_capacity(top + 1);
            v.push(self.one());
            for i in 1..=top {
                let next = self.mul(&v[i - 1], self.c());
                v.push(next);
            }
            v
        });
        &cache[k]
    }

    /// Largest exponent a with p^a <= 2^62, the headroom for boosted runs.
    pub fn max_boost(&self) -> u32 {
        crate::padic::max_precision(self.p())
    }
}
