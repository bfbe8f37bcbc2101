//! Moving semilinear modules between the three coefficient rings.
//!
//! Upward is flat and cheap: an intermediate-ring module reads as a
//! divided-power module with the same matrix, and a power-series module
//! becomes a filtration presentation by trading its matrix for its witness.
//! Downward is a contraction: split the current matrix into the part the
//! smaller ring can see plus a defect, rewrite the basis so the defect drops
//! into the filtration correction, repeat until the defect is zero at the
//! stored precision. Every descent returns its transcript, and
//! [`DescentOutcome::residual`] re-multiplies it against the input, so a run
//! certifies itself instead of asking the caller to trust the loop.

use crate::context::{ArithCtx, Ring, RingTag};
use crate::modules::SemilinearModule;
use crate::smatrix::SMat;
use crate::{Error, Result};

/// Transcript of a convergent descent.
///
/// Bookkeeping identity, exact in the stored coefficients and re-checkable
/// through [`Self::residual`]: A_in = B·V + F, where B is the contracted
/// matrix (`module.phi_data` for filtration presentations, `module.witness`
/// when the output is a power-series module, since that side of the pair is
/// what the iteration shrank), V = `base_change` writes the output basis in
/// terms of the input basis, and F = `fil_correction` accumulates one
/// dropped defect·V summand per step.
#[derive(Clone, Debug)]
pub struct DescentOutcome {
    pub module: SemilinearModule,
    pub base_change: SMat,
    pub fil_correction: SMat,
    pub steps: u32,
    /// For the two-phase descent: the step at which the Frobenius-product
    /// block became divisible by p and the loop switched to pure defect
    /// shrinking. None for single-phase runs.
    pub phase_one_steps: Option<u32>,
}

impl DescentOutcome {
    /// A_in − (B·V + F). Zero at the stored precision certifies the run.
    pub fn residual(&self, ctx: &ArithCtx, a_in: &SMat) -> SMat {
        let b = match self.module.tag.ring {
            Ring::Frak => self
                .module
                .witness
                .as_ref()
                .expect("descended power-series modules carry their witness"),
            _ => &self.module.phi_data,
        };
        let rebuilt = ctx.mat_add(&ctx.mat_mul(b, &self.base_change), &self.fil_correction);
        ctx.mat_sub(a_in, &rebuilt)
    }
}

fn no_conv(steps: u32, what: &str, e: Error) -> Error {
    Error::NoConvergence {
        steps,
        diag: format!("{what}: {e}"),
    }
}

/// Exact power-series witness of a kept part B, built from an exact witness
/// A′ of the full matrix A = B + C, C deeper than Fil^p. With B₁ the
/// power-series part of A′, the product B·B₁ − E^r·Id lies in the
/// power-series ring and in Fil^p at once, hence in E^p·Mat(𝔖), so dividing
/// by E^r leaves Id plus a positively-filtered term whose inverse corrects
/// B₁. Everything here is a ring operation or a division of an exact
/// E-multiple, so no coordinate ever blocks.
fn kept_part_witness(ctx: &ArithCtx, b: &SMat, awit: &SMat, r: u32) -> Result<SMat> {
    let d = b.len();
    let mut b1 = ctx.mat_zero(d, d);
    for i in 0..d {
        for j in 0..d {
            let (h, _) = ctx.frak_floor_cut(&awit[i][j]);
            b1[i][j] = h;
        }
    }
    let target = ctx.mat_e_pow_identity(d, r as usize);
    let excess = ctx.mat_sanitize(&ctx.mat_sub(&ctx.mat_mul(b, &b1), &target));
    // both products must close before B₁ can be returned as is: one stored
    // zero does not imply the other, since B₁ is generally off from E^r·B⁻¹
    // by the excess over E^r and conjugation moves that error below the
    // stored precision. Coefficient length one always lands here, because
    // every coordinate of an E^p-multiple of 𝔖 carries positive p-valuation
    // in either order.
    if ctx.mat_is_zero(&excess) {
        let other = ctx.mat_sanitize(&ctx.mat_sub(&ctx.mat_mul(&b1, b), &target));
        if ctx.mat_is_zero(&other) {
            return Ok(b1);
        }
    }
    let t = ctx.mat_divide_e_pow(&excess, r as usize)?;
    let w = ctx.mat_add(&ctx.mat_identity(d), &t);
    let out = ctx.mat_mul(&b1, &ctx.mat_invert(&w)?);
    if std::env::var("PHIMOD_DESCENT_DEBUG").is_ok() {
        let prod = ctx.mat_mul(b, &out);
        let tgt = ctx.mat_e_pow_identity(d, r as usize);
        let mp = ctx.mat_min_prec(&prod);
        eprintln!(
            "DBG kept_part_witness excess_prec {} t_prec {} out_prec {} prod_prec {mp} ok {} frak(out) {}",
            ctx.mat_min_prec(&excess),
            ctx.mat_min_prec(&t),
            ctx.mat_min_prec(&out),
            ctx.mat_eq_mod(&prod, &tgt, mp.max(1)),
            ctx.mat_membership(&out, RingTag::FRAK),
        );
    }
    Ok(out)
}

/// Extend an intermediate-ring module to divided powers. Nothing moves: the
/// matrix, witness, weight and length are kept, only the ambient membership
/// loosens.
pub fn sigma_to_s(ctx: &ArithCtx, m: &SemilinearModule) -> Result<SemilinearModule> {
    if m.tag.ring != Ring::Sigma {
        return Err(Error::ShapeMismatch(
            "divided-power extension expects an intermediate-ring module".into(),
        ));
    }
    let tag = RingTag { ring: Ring::S, ..m.tag };
    match &m.witness {
        Some(w) => SemilinearModule::with_witness(ctx, tag, m.r, m.phi_data.clone(), w.clone()),
        None => SemilinearModule::breuil(ctx, tag, m.r, m.phi_data.clone()),
    }
}

/// Turn a power-series module into a filtration presentation over the
/// intermediate or divided-power ring. The height pair trades places: the
/// witness becomes the filtration-generator matrix and the Frobenius matrix
/// becomes the new witness, so the multiplicative and étale parts swap
/// detection sides while keeping their labels.
pub fn kisin_to_breuil(
    ctx: &ArithCtx,
    m: &SemilinearModule,
    target: RingTag,
) -> Result<SemilinearModule> {
    if m.tag.ring != Ring::Frak {
        return Err(Error::ShapeMismatch(
            "filtration transfer expects a power-series module".into(),
        ));
    }
    if target.ring == Ring::Frak {
        return Err(Error::ShapeMismatch(
            "filtration transfer targets the intermediate or divided-power ring".into(),
        ));
    }
    if target.mod_p != m.tag.mod_p {
        return Err(Error::ShapeMismatch(
            "filtration transfer keeps the coefficient length; reduce separately".into(),
        ));
    }
    let witness = match &m.witness {
        Some(w) => w.clone(),
        None => ctx.height_witness(&m.phi_data, m.r)?,
    };
    SemilinearModule::with_witness(ctx, target, m.r, witness, m.phi_data.clone())
}

/// Contract a divided-power module onto the intermediate ring.
///
/// Each pass splits the matrix at the intermediate-ring valuation floor; the
/// sub-floor defect D moves into the filtration correction and the basis is
/// rewritten by W⁻¹ with W = Id + c⁻ʳ·φ_r(D)·φ(B″). B″ is a witness mod
/// Fil^p: divided-power presentations satisfy the height identity only up
/// to Fil^p, so an exact witness may not exist at all, and the weak one is
/// carried along as W⁻¹·B″ instead of being re-solved (re-solving at a
/// decayed precision can fail spuriously). The defect gains at least one
/// power of p per pass, so the loop ends with a defect that is zero at the
/// stored precision, or reports why not.
///
/// At coefficient length one the whole defect folds in a single step: its
/// indices sit at p+1 and above, where the divided Frobenius gains
/// m − ⌊m/p⌋ − r ≥ 1 powers of p, so no basis rewrite is needed.
pub fn s_to_sigma_descent(ctx: &ArithCtx, m: &SemilinearModule) -> Result<DescentOutcome> {
    if m.tag.ring != Ring::S {
        return Err(Error::ShapeMismatch(
            "defect descent expects a divided-power module".into(),
        ));
    }
    let r = m.r;
    let d = m.d;
    let reduced = m.tag.mod_p;
    let sigma_tag = RingTag { ring: Ring::Sigma, ..m.tag };
    let budget = ctx.profile.conv_order * d as u32 * ctx.n();
    let mut a = m.phi_data.clone();
    let mut v = ctx.mat_identity(d);
    let mut f = ctx.mat_zero(d, d);
    let mut steps = 0u32;
    let mut weak: Option<SMat> = None;
    loop {
        let mut b = ctx.mat_zero(d, d);
        let mut lo = ctx.mat_zero(d, d);
        for i in 0..d {
            for j in 0..d {
                let (h, l) = ctx.s_split(&a[i][j]);
                b[i][j] = h;
                lo[i][j] = l;
            }
        }
        if ctx.mat_is_zero(&lo) {
            let module = SemilinearModule::breuil(ctx, sigma_tag, r, b)
                .map_err(|e| no_conv(steps, "contracted matrix failed validation", e))?;
            return Ok(DescentOutcome {
                module,
                base_change: v,
                fil_correction: f,
                steps,
                phase_one_steps: None,
            });
        }
        if reduced {
            f = ctx.mat_add(&f, &ctx.mat_mul(&lo, &v));
            let module = SemilinearModule::breuil(ctx, sigma_tag, r, b)
                .map_err(|e| no_conv(steps, "folded matrix failed validation", e))?;
            return Ok(DescentOutcome {
                module,
                base_change: v,
                fil_correction: f,
                steps,
                phase_one_steps: None,
            });
        }
        if steps >= budget {
            return Err(Error::NoConvergence {
                steps,
                diag: format!(
                    "defect still nonzero after {budget} passes; rerun with a deeper profile"
                ),
            });
        }
        if ctx.mat_min_prec(&a) <= r {
            return Err(Error::NoConvergence {
                steps,
                diag: format!(
                    "stored precision {} cannot pay for another divided-Frobenius pass; \
                     inconclusive at this profile",
                    ctx.mat_min_prec(&a)
                ),
            });
        }
        let bw = match weak.take() {
            Some(w) => w,
            None => m
                .weak_witness(ctx)
                .map_err(|e| no_conv(steps, "input has no witness mod Fil^p", e))?,
        };
        let phib = ctx
            .mat_phi(&bw)
            .map_err(|e| no_conv(steps, "witness lost its tail under Frobenius", e))?;
        let dphi = ctx
            .mat_phi_r(&lo, r)
            .map_err(|e| no_conv(steps, "defect rejected the divided Frobenius", e))?;
        let cinv_r = ctx.invert(ctx.c_pow(r as usize))?;
        let w = ctx.mat_add(
            &ctx.mat_identity(d),
            &ctx.mat_scale(&ctx.mat_mul(&dphi, &phib), &cinv_r),
        );
        let winv = ctx
            .mat_invert(&w)
            .map_err(|e| no_conv(steps, "basis rewrite is not invertible", e))?;
        f = ctx.mat_sanitize(&ctx.mat_add(&f, &ctx.mat_mul(&lo, &v)));
        v = ctx.mat_sanitize(&ctx.mat_mul(&winv, &v));
        weak = Some(ctx.mat_sanitize(&ctx.mat_mul(&winv, &bw)));
        a = ctx.mat_sanitize(&ctx.mat_mul(&b, &w));
        steps += 1;
    }
}

/// Contract an intermediate-ring module onto the power-series subring. Only
/// weight p−1 descends, and only unipotent modules: anything else is
/// refused up front.
///
/// The loop has two phases with the same shape of step. Phase one presents
/// each iterate as B + C·Y + D (Y the divided p-th power of E, B and C over
/// the power-series ring, D deeper than Fil^p) and rewrites until every
/// entry of C is divisible by p; how fast that happens is governed by the
/// decay of Frobenius products, which is what unipotence guarantees. From
/// then on the iterate splits cleanly at the power-series floor and phase
/// two shrinks the remaining defect by at least one power of p per pass.
/// Each rewrite uses W = Id + c⁻ʳ·φ_r(defect)·φ(B′) with B′ the exact
/// power-series witness of the kept part B, cut by [`kept_part_witness`]
/// from a witness of the full iterate that the loop rewrites in lockstep
/// with the basis. At coefficient length one the
/// divided Frobenius is off limits, so phase one uses the exact identity
/// c⁻ʳ·φ_r(C·Y) = c·φ(C) and drops the deeper defect, whose divided
/// Frobenius is divisible by p; phase two there is a pure fold.
pub fn breuil_to_kisin_descent(ctx: &ArithCtx, m: &SemilinearModule) -> Result<DescentOutcome> {
    if m.tag.ring != Ring::Sigma {
        return Err(Error::ShapeMismatch(
            "power-series descent starts from an intermediate-ring module; descend \
             divided-power modules to the intermediate ring first"
                .into(),
        ));
    }
    if m.r as u64 + 1 != ctx.p() {
        return Err(Error::ShapeMismatch(format!(
            "power-series descent is implemented at weight p − 1 = {} only, got weight {}",
            ctx.p() - 1,
            m.r
        )));
    }
    if !m.classify(ctx)?.unipotent {
        return Err(Error::NotUnipotent);
    }
    let r = m.r;
    let d = m.d;
    let reduced = m.tag.mod_p;
    let budget = ctx.profile.conv_order * d as u32 * ctx.n();
    let cinv_r = ctx.invert(ctx.c_pow(r as usize))?;
    let mut a = m.phi_data.clone();
    // exact witness of the iterate, rewritten in lockstep with it so the
    // kept part's power-series witness can be cut from it each pass. Raw
    // filtration data is only meaningful mod Fil^p and its representative
    // may have no exact witness at all, so when none is stored the chain
    // starts from the first kept part, which lives over the power-series
    // ring where the adjugate construction is coordinate-exact.
    let mut awit = m.witness.clone();
    let mut v = ctx.mat_identity(d);
    let mut f = ctx.mat_zero(d, d);
    let mut steps = 0u32;
    let mut phase_one_steps: Option<u32> = None;
    let contracted = loop {
        if std::env::var("PHIMOD_DESCENT_DEBUG").is_ok() {
            if let Some(w) = &awit {
                let prod = ctx.mat_mul(&a, w);
                let tgt = ctx.mat_e_pow_identity(d, r as usize);
                let mp = ctx.mat_min_prec(&prod);
                eprintln!(
                    "DBG step {steps} phase2={} a_prec {} awit_prec {} prod_prec {mp} inv_ok {}",
                    phase_one_steps.is_some(),
                    ctx.mat_min_prec(&a),
                    ctx.mat_min_prec(w),
                    ctx.mat_eq_mod(&prod, &tgt, mp.max(1))
                );
            } else {
                eprintln!("DBG step {steps} awit None");
            }
        }
        // defect extraction first, so convergence is recognized before any
        // Frobenius work and costs no precision
        let (b, defect, cblock) = if phase_one_steps.is_none() {
            let mut b = ctx.mat_zero(d, d);
            let mut cm = ctx.mat_zero(d, d);
            for i in 0..d {
                for j in 0..d {
                    let x = &a[i][j];
                    let yf = ctx
                        .sigma_bcd(x)
                        .map_err(|e| no_conv(steps, "iterate left the intermediate ring", e))?;
                    b[i][j] = ctx
                        .canonicalize_at(&yf.b, x.prec)
                        .map_err(|e| no_conv(steps, "power-series block out of bounds", e))?;
                    cm[i][j] = ctx
                        .canonicalize_at(&yf.c, x.prec)
                        .map_err(|e| no_conv(steps, "product block out of bounds", e))?;
                }
            }
            if cm.iter().flatten().all(|x| x.certified_zero_mod(1)) {
                phase_one_steps = Some(steps);
                continue;
            }
            let defect = ctx.mat_sub(&a, &b);
            (b, defect, Some(cm))
        } else {
            let mut b = ctx.mat_zero(d, d);
            let mut lo = ctx.mat_zero(d, d);
            for i in 0..d {
                for j in 0..d {
                    let (h, l) = ctx
                        .sigma_split(&a[i][j])
                        .map_err(|e| no_conv(steps, "iterate lost p-divisibility at γ_p", e))?;
                    b[i][j] = h;
                    lo[i][j] = l;
                }
            }
            if ctx.mat_is_zero(&lo) {
                break b;
            }
            (b, lo, None)
        };
        if reduced && cblock.is_none() {
            // length-one deep defect: φ_r kills it mod p, fold without rewriting
            f = ctx.mat_add(&f, &ctx.mat_mul(&defect, &v));
            a = b;
            steps += 1;
            continue;
        }
        if steps >= budget {
            return Err(Error::NoConvergence {
                steps,
                diag: match phase_one_steps {
                    None => format!(
                        "Frobenius products never reached divisibility by p within {budget} \
                         passes; the unipotent fold is inconclusive at this profile"
                    ),
                    Some(k) => format!(
                        "defect still nonzero after {budget} passes (fold at pass {k}); \
                         rerun with a deeper profile"
                    ),
                },
            });
        }
        if !reduced && ctx.mat_min_prec(&a) <= r {
            return Err(Error::NoConvergence {
                steps,
                diag: format!(
                    "stored precision {} cannot pay for another divided-Frobenius pass; \
                     inconclusive at this profile",
                    ctx.mat_min_prec(&a)
                ),
            });
        }
        let bw = match &awit {
            Some(w) => kept_part_witness(ctx, &b, w, r)
                .map_err(|e| no_conv(steps, "kept part lost its power-series witness", e))?,
            None => ctx
                .lift_inverse_matrix(&b, r, RingTag::FRAK)
                .map_err(|e| no_conv(steps, "kept part has no power-series witness", e))?,
        };
        let phib = ctx
            .mat_phi(&bw)
            .map_err(|e| no_conv(steps, "witness lost its tail under Frobenius", e))?;
        let w_term = if reduced {
            let cm = cblock.expect("reduced deep defects fold before reaching the rewrite");
            let phic = ctx
                .mat_phi(&cm)
                .map_err(|e| no_conv(steps, "product block lost its tail under Frobenius", e))?;
            ctx.mat_scale(&ctx.mat_mul(&phic, &phib), ctx.c())
        } else {
            let dphi = ctx
                .mat_phi_r(&defect, r)
                .map_err(|e| no_conv(steps, "defect rejected the divided Frobenius", e))?;
            ctx.mat_scale(&ctx.mat_mul(&dphi, &phib), &cinv_r)
        };
        let w = ctx.mat_add(&ctx.mat_identity(d), &w_term);
        let winv = ctx
            .mat_invert(&w)
            .map_err(|e| no_conv(steps, "basis rewrite is not invertible", e))?;
        f = ctx.mat_sanitize(&ctx.mat_add(&f, &ctx.mat_mul(&defect, &v)));
        v = ctx.mat_sanitize(&ctx.mat_mul(&winv, &v));
        // (B·W)·(W⁻¹·B′) = B·B′ = E^r·Id, so the rewritten pair is again an
        // exact product; a pure fold leaves awit in place, off from the new
        // iterate by a Fil^p term the witness cut tolerates
        awit = Some(ctx.mat_sanitize(&ctx.mat_mul(&winv, &bw)));
        a = ctx.mat_sanitize(&ctx.mat_mul(&b, &w));
        steps += 1;
    };
    let kdata = match &awit {
        Some(w) => kept_part_witness(ctx, &contracted, w, r),
        None => ctx.lift_inverse_matrix(&contracted, r, RingTag::FRAK),
    }
    .map_err(|e| no_conv(steps, "contracted matrix has no power-series witness", e))?;
    let tag = RingTag { ring: Ring::Frak, mod_p: reduced };
    let module = SemilinearModule::with_witness(ctx, tag, r, kdata, contracted)
        .map_err(|e| no_conv(steps, "contracted matrix failed validation", e))?;
    Ok(DescentOutcome {
        module,
        base_change: v,
        fil_correction: f,
        steps,
        phase_one_steps,
    })
}

/// Reduce a module to coefficient length one, normalizing the presentation
/// into the subring where the reduced theory lives. Filtration presentations
/// keep only the intermediate-ring part of their matrix: the dropped
/// coordinates change the generators within the depth the presentation
/// already ignores and their divided Frobenius is divisible by p, so the
/// class is untouched. Power-series presentations reduce as they are. The
/// raw truncation without normalization is
/// [`SemilinearModule::mod_p_reduce`].
pub fn mod_p_reduce(ctx: &ArithCtx, m: &SemilinearModule) -> Result<SemilinearModule> {
    let tag = m.tag.reduced();
    match m.tag.ring {
        Ring::Frak => {
            let a = ctx.mat_sanitize(&ctx.mat_truncate_prec(&m.phi_data, 1));
            let w = match &m.witness {
                Some(w) => ctx.mat_sanitize(&ctx.mat_truncate_prec(w, 1)),
                None => ctx.height_witness(&a, m.r)?,
            };
            SemilinearModule::with_witness(ctx, tag, m.r, a, w)
        }
        _ => {
            let kept = ctx.mat_small_part(&m.phi_data, RingTag::SIGMA);
            let a = ctx.mat_sanitize(&ctx.mat_truncate_prec(&kept, 1));
            SemilinearModule::breuil(ctx, tag, m.r, a)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{EisensteinData, PrecisionProfile};
    use crate::modules::verify_morphism;
    use crate::testkit::{ctx, random_height_module};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Contexts for descent tests, which need more digits than the default
    /// caps allow since every pass spends r of them.
    fn descent_ctx(p: u64, n: u32, ecoeffs: &[i128]) -> ArithCtx {
        let profile = PrecisionProfile::for_params(p, n, 4).expect("profile exists");
        ArithCtx::new(
            EisensteinData::new(p, ecoeffs.to_vec()).expect("Eisenstein data"),
            profile,
        )
        .expect("context builds")
    }

    fn e_pow(c: &ArithCtx, k: usize) -> crate::SElement {
        c.mul_e_pow(&c.one(), k)
    }

    #[test]
    fn extension_keeps_the_matrix_and_the_labels() {
        let c = ctx(3, 6, &[-3, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for r in [0u32, 1, 2] {
            let m = random_height_module(&c, &mut rng, RingTag::SIGMA, 3, r);
            let up = sigma_to_s(&c, &m).expect("extension is flat");
            assert_eq!(up.tag.ring, Ring::S);
            assert!(c.mat_is_zero(&c.mat_sub(&up.phi_data, &m.phi_data)));
            assert_eq!(
                up.classify(&c).unwrap(),
                m.classify(&c).unwrap(),
                "labels survive the extension"
            );
            assert!(matches!(
                sigma_to_s(&c, &up),
                Err(Error::ShapeMismatch(_))
            ));
        }
        let k = random_height_module(&c, &mut rng, RingTag::FRAK, 2, 1);
        assert!(matches!(sigma_to_s(&c, &k), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn filtration_transfer_swaps_the_witness_pair() {
        let c = ctx(3, 6, &[-3, 1]);
        let unit = SemilinearModule::kisin(&c, 2, vec![vec![c.one()]]).unwrap();
        let b = kisin_to_breuil(&c, &unit, RingTag::SIGMA).unwrap();
        assert!(c.mat_is_zero(&c.mat_sub(&b.phi_data, &c.mat_e_pow_identity(1, 2))));
        assert!(unit.classify(&c).unwrap().multiplicative);
        assert!(b.classify(&c).unwrap().multiplicative);

        let twist = SemilinearModule::kisin(&c, 2, c.mat_e_pow_identity(1, 2)).unwrap();
        let bt = kisin_to_breuil(&c, &twist, RingTag::S).unwrap();
        assert_eq!(bt.tag.ring, Ring::S);
        assert!(c.mat_is_zero(&c.mat_sub(&bt.phi_data, &c.mat_identity(1))));
        assert!(twist.classify(&c).unwrap().etale);
        assert!(bt.classify(&c).unwrap().etale);

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let c2 = ctx(2, 8, &[-2, 1]);
        for (cx, r) in [(&c, 2u32), (&c2, 1u32)] {
            for _ in 0..4 {
                let m = random_height_module(cx, &mut rng, RingTag::FRAK, 3, r);
                let img = kisin_to_breuil(cx, &m, RingTag::SIGMA).expect("transfer");
                assert_eq!(
                    img.classify(cx).unwrap(),
                    m.classify(cx).unwrap(),
                    "labels survive the transfer"
                );
            }
        }

        let m = random_height_module(&c, &mut rng, RingTag::FRAK, 2, 2);
        assert!(matches!(
            kisin_to_breuil(&c, &m, RingTag::FRAK),
            Err(Error::ShapeMismatch(_))
        ));
        let wrong_len = RingTag { ring: Ring::Sigma, mod_p: true };
        assert!(matches!(
            kisin_to_breuil(&c, &m, wrong_len),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn divided_power_descent_is_immediate_on_intermediate_data() {
        let c = ctx(3, 6, &[-3, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for r in [0u32, 2] {
            let sig = random_height_module(&c, &mut rng, RingTag::SIGMA, 3, r);
            let up = sigma_to_s(&c, &sig).unwrap();
            let down = s_to_sigma_descent(&c, &up).expect("round trip");
            assert_eq!(down.steps, 0);
            assert_eq!(down.phase_one_steps, None);
            assert!(c.mat_is_zero(&c.mat_sub(&down.module.phi_data, &sig.phi_data)));
            assert!(c.mat_is_zero(&c.mat_sub(&down.base_change, &c.mat_identity(sig.d))));
            assert!(c.mat_is_zero(&down.fil_correction));
            assert!(c.mat_is_zero(&down.residual(&c, &up.phi_data)));
            assert_eq!(
                down.module.classify(&c).unwrap(),
                sig.classify(&c).unwrap()
            );
        }
        let sig = random_height_module(&c, &mut rng, RingTag::SIGMA, 2, 1);
        assert!(matches!(
            s_to_sigma_descent(&c, &sig),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn divided_power_descent_contracts_a_genuine_defect() {
        // u·γ_9 carries a unit coordinate at γ_10, below the intermediate
        // floor there, so the loop has real work to do
        let c = descent_ctx(3, 12, &[-3, 1]);
        let u = c
            .canonicalize(&crate::Poly::monomial(3, c.n(), 1, 1))
            .unwrap();
        let noise = c.mul(&u, &c.gamma(9).unwrap());
        let a = vec![vec![c.add(&e_pow(&c, 2), &noise)]];
        let tag = RingTag { ring: Ring::S, mod_p: false };
        let m = SemilinearModule::breuil(&c, tag, 2, a.clone()).expect("valid module");
        let out = s_to_sigma_descent(&c, &m).expect("contraction converges");
        assert!(out.steps >= 1);
        assert_eq!(out.module.tag.ring, Ring::Sigma);
        assert!(c.mat_membership(&out.module.phi_data, RingTag::SIGMA));
        let res = out.residual(&c, &a);
        let mp = c.mat_min_prec(&res);
        assert!(mp >= 3, "residual keeps usable precision, got {mp}");
        assert!(c.mat_eq_mod(&res, &c.mat_zero(1, 1), mp));
        assert!(out.module.classify(&c).unwrap().multiplicative);
    }

    #[test]
    fn reduced_divided_power_descent_folds_in_one_pass() {
        let c = ctx(3, 6, &[-3, 1]);
        // γ_9 is a divided-power citizen only: at length one it cannot be
        // normalized away by valuation, so the fold has to move it
        let a = vec![vec![c.truncate_prec(
            &c.add(&e_pow(&c, 2), &c.gamma(9).unwrap()),
            1,
        )]];
        let tag = RingTag { ring: Ring::S, mod_p: true };
        let m = SemilinearModule::breuil(&c, tag, 2, a.clone()).expect("valid at length one");
        let out = s_to_sigma_descent(&c, &m).expect("fold");
        assert_eq!(out.steps, 0);
        assert!(c.mat_membership(&out.module.phi_data, RingTag::SIGMA));
        assert!(!c.mat_is_zero(&out.fil_correction), "the defect was moved, not lost");
        assert!(c.mat_is_zero(&out.residual(&c, &a)));
    }

    #[test]
    fn unipotent_fold_rank_one_frozen_examples() {
        for (p, ec, n) in [(2u64, [-2i128, 1], 8u32), (3, [-3, 1], 8)] {
            let c = ctx(p, n, &ec);
            let r = (p - 1) as u32;
            let sig = RingTag::SIGMA;
            let m = SemilinearModule::breuil(&c, sig, r, vec![vec![e_pow(&c, r as usize)]])
                .unwrap();
            let out = breuil_to_kisin_descent(&c, &m).expect("already a power-series matrix");
            assert_eq!(out.steps, 0);
            assert_eq!(out.phase_one_steps, Some(0));
            assert!(c.mat_is_zero(&c.mat_sub(&out.module.phi_data, &c.mat_identity(1))));
            assert!(out.module.classify(&c).unwrap().multiplicative);
            assert!(c.mat_is_zero(&out.residual(&c, &m.phi_data)));

            let et = SemilinearModule::breuil(&c, sig, r, vec![vec![c.one()]]).unwrap();
            assert!(matches!(
                breuil_to_kisin_descent(&c, &et),
                Err(Error::NotUnipotent)
            ));
        }
        let c = ctx(3, 8, &[-3, 1]);
        let low = SemilinearModule::breuil(&c, RingTag::SIGMA, 1, vec![vec![e_pow(&c, 1)]])
            .unwrap();
        assert!(matches!(
            breuil_to_kisin_descent(&c, &low),
            Err(Error::ShapeMismatch(_))
        ));
        let s_tagged = SemilinearModule::breuil(
            &c,
            RingTag::S,
            2,
            vec![vec![e_pow(&c, 2)]],
        )
        .unwrap();
        assert!(matches!(
            breuil_to_kisin_descent(&c, &s_tagged),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn two_phase_descent_contracts_a_unit_product_block() {
        // E^{p−1} + γ_{p+1} has a unit in the product block, so phase one
        // must run at least one genuine rewrite before the fold
        for (p, ec, n) in [(2u64, [-2i128, 1], 14u32), (3, [-3, 1], 12)] {
            let c = descent_ctx(p, n, &ec);
            let r = (p - 1) as u32;
            let a = vec![vec![c.add(&e_pow(&c, r as usize), &c.gamma(p as usize + 1).unwrap())]];
            let m = SemilinearModule::breuil(&c, RingTag::SIGMA, r, a.clone()).unwrap();
            let out = breuil_to_kisin_descent(&c, &m).expect("unipotent fold converges");
            let fold = out.phase_one_steps.expect("fold happened");
            assert!(fold >= 1, "p = {p}: unit product block forces a rewrite");
            assert!(out.steps >= fold);
            assert!(c.mat_membership(&out.module.phi_data, RingTag::FRAK));
            assert!(out.module.classify(&c).unwrap().unipotent);
            let res = out.residual(&c, &a);
            let mp = c.mat_min_prec(&res);
            assert!(mp >= 2, "p = {p}: residual keeps usable precision, got {mp}");
            assert!(c.mat_eq_mod(&res, &c.mat_zero(1, 1), mp));
        }
    }

    #[test]
    fn power_series_round_trip_recovers_the_class() {
        for (p, ec, n) in [(2u64, [-2i128, 1], 16u32), (3, [-3, 1], 14)] {
            let c = descent_ctx(p, n, &ec);
            let r = (p - 1) as u32;
            let mut rng = ChaCha8Rng::seed_from_u64(44 + p);
            for _ in 0..2 {
                let k = loop {
                    let cand = random_height_module(&c, &mut rng, RingTag::FRAK, 2, r);
                    if cand.classify(&c).unwrap().unipotent {
                        break cand;
                    }
                };
                let img = kisin_to_breuil(&c, &k, RingTag::SIGMA).unwrap();
                // twist by a unipotent base change so the descent sees a
                // matrix with genuine divided-power content
                let d = img.d;
                let mut g = c.mat_identity(d);
                for i in 0..d {
                    for j in i..d {
                        g[i][j] = c.add(&g[i][j], &c.gamma(p as usize + 1).unwrap());
                    }
                }
                let phig = c.mat_phi(&g).unwrap();
                let phig_inv = c.mat_invert(&phig).unwrap();
                let ginv = c.mat_invert(&g).unwrap();
                let a2 = c.mat_mul(&phig_inv, &c.mat_mul(&img.phi_data, &g));
                let w2 = c.mat_mul(&ginv, &c.mat_mul(img.witness.as_ref().unwrap(), &phig));
                let twisted =
                    SemilinearModule::with_witness(&c, RingTag::SIGMA, r, a2.clone(), w2)
                        .expect("twisted module validates");
                let out = breuil_to_kisin_descent(&c, &twisted).expect("descent converges");
                assert_eq!(
                    out.module.classify(&c).unwrap(),
                    k.classify(&c).unwrap(),
                    "p = {p}: class survives the round trip"
                );
                let res = out.residual(&c, &a2);
                let mp = c.mat_min_prec(&res);
                assert!(mp >= 2, "p = {p}: residual precision {mp}");
                assert!(c.mat_eq_mod(&res, &c.mat_zero(d, d), mp));
            }
        }
    }

    #[test]
    fn block_triangular_morphisms_survive_the_transfer() {
        let c = ctx(3, 6, &[-3, 1]);
        let u = c
            .canonicalize(&crate::Poly::monomial(3, c.n(), 1, 1))
            .unwrap();
        let a = vec![
            vec![e_pow(&c, 2), u],
            vec![c.zero(), c.one()],
        ];
        let m = SemilinearModule::kisin(&c, 2, a).unwrap();
        let m1 = SemilinearModule::kisin(&c, 2, vec![vec![e_pow(&c, 2)]]).unwrap();
        let m2 = SemilinearModule::kisin(&c, 2, vec![vec![c.one()]]).unwrap();
        let inc = vec![vec![c.zero(), c.one()]];
        let quo = vec![vec![c.one()], vec![c.zero()]];
        assert!(verify_morphism(&c, &inc, &m2, &m).unwrap());
        assert!(verify_morphism(&c, &quo, &m, &m1).unwrap());

        let bm = kisin_to_breuil(&c, &m, RingTag::SIGMA).unwrap();
        let bm1 = kisin_to_breuil(&c, &m1, RingTag::SIGMA).unwrap();
        let bm2 = kisin_to_breuil(&c, &m2, RingTag::SIGMA).unwrap();
        assert!(verify_morphism(&c, &inc, &bm2, &bm).unwrap());
        assert!(verify_morphism(&c, &quo, &bm, &bm1).unwrap());

        let ranks = bm.classify(&c).unwrap().ranks;
        let r1 = bm1.classify(&c).unwrap().ranks;
        let r2 = bm2.classify(&c).unwrap().ranks;
        assert_eq!(ranks.multiplicative, r1.multiplicative + r2.multiplicative);
        assert_eq!(ranks.etale, r1.etale + r2.etale);
        assert_eq!(ranks.middle, r1.middle + r2.middle);
    }

    #[test]
    fn reduction_normalizes_into_the_intermediate_ring() {
        let c = ctx(3, 6, &[-3, 1]);
        let tag_s = RingTag { ring: Ring::S, mod_p: false };

        // p-divisible divided-power noise disappears at length one
        let u = c
            .canonicalize(&crate::Poly::monomial(3, c.n(), 1, 1))
            .unwrap();
        let noisy = vec![vec![c.add(&e_pow(&c, 2), &c.mul(&u, &c.gamma(9).unwrap()))]];
        let m = SemilinearModule::breuil(&c, tag_s, 2, noisy).unwrap();
        let red = mod_p_reduce(&c, &m).unwrap();
        assert!(red.tag.mod_p);
        let want = c.mat_truncate_prec(&c.mat_e_pow_identity(1, 2), 1);
        assert!(c.mat_eq_mod(&red.phi_data, &want, 1));

        // a unit γ_{p+1} is intermediate-ring legal and must survive
        let keep = vec![vec![c.add(&e_pow(&c, 2), &c.gamma(4).unwrap())]];
        let m2 = SemilinearModule::breuil(&c, RingTag::SIGMA, 2, keep.clone()).unwrap();
        let red2 = mod_p_reduce(&c, &m2).unwrap();
        assert!(c.mat_eq_mod(&red2.phi_data, &keep, 1));

        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for tag in [RingTag::FRAK, RingTag::SIGMA, tag_s] {
            for _ in 0..3 {
                let m = random_height_module(&c, &mut rng, tag, 3, 2);
                let red = mod_p_reduce(&c, &m).unwrap();
                assert_eq!(red.tag, m.tag.reduced());
                assert_eq!(
                    red.classify(&c).unwrap(),
                    m.classify(&c).unwrap(),
                    "classification is computed mod p and must not move"
                );
            }
        }
    }

    #[test]
    #[test]
    #[ignore]
    fn probe_inconclusive_candidates() {
        for p in [2u64, 3] {
            let ec: [i128; 2] = [-(p as i128), 1];
            let r = (p - 1) as u32;
            for n in [4u32, 5, 6] {
                let c = descent_ctx(p, n, &ec);
                let er = e_pow(&c, r as usize);
                let g = |k: usize| c.gamma(k).unwrap();
                let cands: Vec<(String, Vec<Vec<crate::SElement>>)> = vec![
                    ("E^r+g(p)".into(), vec![vec![c.add(&er, &g(p as usize))]]),
                    ("E^r+g(p+1)".into(), vec![vec![c.add(&er, &g(p as usize + 1))]]),
                    ("E^r+g(p)+g(p+1)".into(), vec![vec![c.add(&c.add(&er, &g(p as usize)), &g(p as usize + 1))]]),
                    ("E^r+g(p+2)".into(), vec![vec![c.add(&er, &g(p as usize + 2))]]),
                    (
                        "rank2 offdiag g(p)".into(),
                        vec![
                            vec![er.clone(), g(p as usize)],
                            vec![c.zero(), er.clone()],
                        ],
                    ),
                    (
                        "rank2 offdiag g(p+1)".into(),
                        vec![
                            vec![er.clone(), g(p as usize + 1)],
                            vec![c.zero(), er.clone()],
                        ],
                    ),
                ];
                for (name, a) in cands {
                    let m = match SemilinearModule::breuil(&c, RingTag::SIGMA, r, a) {
                        Ok(m) => m,
                        Err(e) => {
                            eprintln!("p={p} n={n} {name}: build failed: {e}");
                            continue;
                        }
                    };
                    match breuil_to_kisin_descent(&c, &m) {
                        Ok(out) => eprintln!(
                            "p={p} n={n} {name}: Ok steps {} phase1 {:?} prec {}",
                            out.steps,
                            out.phase_one_steps,
                            c.mat_min_prec(&out.module.phi_data)
                        ),
                        Err(Error::NoConvergence { steps, diag }) => {
                            eprintln!("p={p} n={n} {name}: NoConv steps {steps}: {diag}")
                        }
                        Err(e) => eprintln!("p={p} n={n} {name}: Err {e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn descent_reports_exhausted_precision_as_inconclusive() {
        let c = descent_ctx(3, 4, &[-3, 1]);
        let a = vec![vec![c.add(&e_pow(&c, 2), &c.gamma(4).unwrap())]];
        let m = SemilinearModule::breuil(&c, RingTag::SIGMA, 2, a).unwrap();
        match breuil_to_kisin_descent(&c, &m) {
            Err(Error::NoConvergence { steps, diag }) => {
                assert!(steps >= 1, "one rewrite fits in four digits");
                assert!(diag.contains("inconclusive"), "diag: {diag}");
            }
            other => panic!("expected an inconclusive report, got {other:?}"),
        }
    }
}
