//! Shared generators for the test and bench targets. Not part of the public
//! surface; enabled by the `testkit` feature so integration tests can build
//! the same contexts and random inputs the unit tests use.

use crate::context::{ArithCtx, EisensteinData, PrecisionProfile, Ring, RingTag};
use crate::element::SElement;
use crate::modules::SemilinearModule;
use crate::padic::Poly;
use crate::smatrix::SMat;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Standard context for a prime and precision: the γ-cap follows the
/// profile floor rules (p = 2 needs headroom because binary digit sums grow
/// slowly; p = 3 gets a uniform window; larger primes take the minimum).
pub fn ctx(p: u64, n: u32, ecoeffs: &[i128]) -> ArithCtx {
    let ed = EisensteinData::new(p, ecoeffs.to_vec()).unwrap();
    let cap = match p {
        2 => (2 * n as usize + 4).max(16),
        3 => 16,
        _ => 2 * p as usize + 2,
    };
    let profile = PrecisionProfile::new(p, n, cap, 3 * cap, 4).unwrap();
    ArithCtx::new(ed, profile).unwrap()
}

/// Uniform small-coefficient element supported on γ-indices `0..=max_idx`.
pub fn random_elem(c: &ArithCtx, rng: &mut ChaCha8Rng, max_idx: usize) -> SElement {
    let mut coeffs = Vec::new();
    for _ in 0..=max_idx.min(c.cap() - 1) {
        let poly: Vec<i128> = (0..c.e()).map(|_| rng.gen_range(-40..40)).collect();
        coeffs.push(Poly::from_i128(c.p(), c.n(), &poly));
    }
    c.make(coeffs, c.n(), crate::element::TAIL_NONE, crate::element::TAIL_NONE)
}

/// Random element lying in the given subring: each γ-coordinate is scaled to
/// that ring's valuation floor at its index.
pub fn random_in_ring(c: &ArithCtx, rng: &mut ChaCha8Rng, tag: RingTag, max_idx: usize) -> SElement {
    let mut acc = c.zero();
    for i in 0..=max_idx.min(c.cap() - 1) {
        let floor = match tag.ring {
            Ring::Frak => c.vpf(i) as i64,
            Ring::Sigma => (c.vpf(i) as i64 - (i as u64 / c.p()) as i64).max(0),
            Ring::S => 0,
        };
        let poly: Vec<i128> = (0..c.e())
            .map(|_| {
                let unit: i128 = rng.gen_range(-40..40);
                unit * (c.p() as i128).pow(floor as u32)
            })
            .collect();
        let g = c.gamma(i).unwrap();
        let mut coeffs = vec![Poly::zero(); i + 1];
        coeffs[i] = Poly::from_i128(c.p(), c.n(), &poly);
        let term = SElement { coeffs, ..g };
        acc = c.add(&acc, &c.truncate_prec(&term, c.n()));
    }
    acc
}

/// Random square matrix with entries in the given subring.
pub fn random_matrix(
    c: &ArithCtx,
    rng: &mut ChaCha8Rng,
    tag: RingTag,
    d: usize,
    max_idx: usize,
) -> Vec<Vec<SElement>> {
    (0..d)
        .map(|_| {
            (0..d)
                .map(|_| random_in_ring(c, rng, tag, max_idx))
                .collect()
        })
        .collect()
}

fn random_unit_triangular(c: &ArithCtx, rng: &mut ChaCha8Rng, d: usize, upper: bool) -> SMat {
    let mut m = c.mat_identity(d);
    for i in 0..d {
        for j in 0..d {
            if (upper && j > i) || (!upper && j < i) {
                m[i][j] = random_in_ring(c, rng, RingTag::FRAK, 2);
            }
        }
    }
    m
}

/// Random matrix of exact E-height ≤ r: unimodular triangulars around a
/// diagonal of E-powers, plus a Fil^p perturbation (an E^p-multiple, so the
/// witness stays exact) when the target ring allows it.
pub fn random_height_matrix(
    c: &ArithCtx,
    rng: &mut ChaCha8Rng,
    tag: RingTag,
    d: usize,
    r: u32,
) -> SMat {
    let l = random_unit_triangular(c, rng, d, false);
    let u = random_unit_triangular(c, rng, d, true);
    let mut diag = c.mat_identity(d);
    for (i, row) in diag.iter_mut().enumerate() {
        let pow = rng.gen_range(0..=r as usize);
        row[i] = c.mul_e_pow(&c.one(), pow);
    }
    let mut a = c.mat_mul(&c.mat_mul(&l, &diag), &u);
    if tag.ring != Ring::Frak {
        for row in a.iter_mut() {
            for x in row.iter_mut() {
                let noise = c.mul_e_pow(&random_in_ring(c, rng, tag, 2), c.p() as usize);
                *x = c.add(x, &noise);
            }
        }
    }
    a
}

/// Random module of the given rank and weight in either convention. The
/// matrix and its witness are computed in a context boosted past the
/// E-division toll, then migrated down, so the module carries the full
/// target precision.
pub fn random_height_module(
    c: &ArithCtx,
    rng: &mut ChaCha8Rng,
    tag: RingTag,
    d: usize,
    r: u32,
) -> SemilinearModule {
    let extra = if c.p() == 2 { 14 } else { 6 };
    let n_work = (c.n() + extra).min(crate::padic::max_precision(c.p()));
    let profile = PrecisionProfile::for_params(c.p(), n_work, c.profile.conv_order)
        .expect("boosted profile exists");
    let work = ArithCtx::new(c.ed.clone(), profile).expect("boosted context builds");
    let rank = rng.gen_range(1..=d);
    let a_big = random_height_matrix(&work, rng, tag, rank, r);
    let w_big = work
        .height_witness(&a_big, r)
        .expect("structured matrix has a witness");
    let a = work.mat_migrate(&a_big, c).expect("data fits the target profile");
    let w = work.mat_migrate(&w_big, c).expect("witness fits the target profile");
    SemilinearModule::with_witness(c, tag, r, a, w).expect("migrated module validates")
}
