//! The element-literal grammar shared by tests, job files, and reports:
//! `+`/`-` separated terms, each a `*`-separated product of an optional
//! integer coefficient, `u`/`u^k`, and `gamma(i)`, `Y`/`Y^j`, or `E`/`E^k`
//! factors. Rendering (SElement::literal) always emits the canonical γ-form,
//! which this parser accepts back verbatim.

use crate::context::ArithCtx;
use crate::element::SElement;
use crate::{Error, Result};

pub fn parse_element(ctx: &ArithCtx, input: &str) -> Result<SElement> {
    let terms = split_terms(input)?;
    if terms.is_empty() {
        return Err(Error::Parse("empty element literal".into()));
    }
    let mut acc = ctx.zero();
    for (positive, term) in terms {
        let t = parse_term(ctx, term)?;
        acc = if positive {
            ctx.add(&acc, &t)
        } else {
            ctx.sub(&acc, &t)
        };
    }
    Ok(acc)
}

/// Split on top-level + and -, keeping signs; parentheses only ever hold a
/// gamma index, but the scanner tracks depth anyway so a malformed input
/// fails in the term parser rather than splitting mid-token.
fn split_terms(input: &str) -> Result<Vec<(bool, &str)>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0usize;
    let mut positive = true;
    let bytes = input.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(Error::Parse("unbalanced parentheses".into()));
                }
            }
            b'+' | b'-' if depth == 0 => {
                let piece = input[start..i].trim();
                if !piece.is_empty() {
                    out.push((positive, piece));
                } else if !(out.is_empty() && start == 0) {
                    // only a leading sign may have nothing before it
                    return Err(Error::Parse("empty term".into()));
                }
                positive = b == b'+';
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::Parse("unbalanced parentheses".into()));
    }
    let piece = input[start..].trim();
    if !piece.is_empty() {
        out.push((positive, piece));
    } else if !out.is_empty() || !input.trim().is_empty() {
        return Err(Error::Parse("trailing sign without a term".into()));
    }
    Ok(out)
}

fn parse_term(ctx: &ArithCtx, term: &str) -> Result<SElement> {
    let mut coeff: i128 = 1;
    let mut u_pow: usize = 0;
    let mut extras: Vec<SElement> = Vec::new();
    for raw in term.split('*') {
        let f = raw.trim();
        if f.is_empty() {
            return Err(Error::Parse(format!("empty factor in term '{term}'")));
        }
        if f.bytes().next().map_or(false, |b| b.is_ascii_digit()) {
            let v: i128 = f
                .parse()
                .map_err(|_| Error::Parse(format!("bad integer '{f}'")))?;
            coeff = coeff
                .checked_mul(v)
                .ok_or_else(|| Error::Parse(format!("integer overflow in term '{term}'")))?;
        } else if f == "u" || f.starts_with("u^") {
            u_pow += parse_pow(f, "u")?;
        } else if f == "Y" || f.starts_with("Y^") {
            let j = parse_pow(f, "Y")?;
            let y = ctx.y();
            for _ in 0..j {
                extras.push(y.clone());
            }
        } else if f == "E" || f.starts_with("E^") {
            let k = parse_pow(f, "E")?;
            extras.push(ctx.mul_e_pow(&ctx.one(), k));
        } else if let Some(rest) = f.strip_prefix("gamma(") {
            let idx = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::Parse(format!("malformed gamma factor '{f}'")))?;
            let i: usize = idx
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad gamma index '{idx}'")))?;
            extras.push(ctx.gamma(i)?);
        } else {
            return Err(Error::Parse(format!("unrecognized factor '{f}'")));
        }
    }
    if u_pow > ctx.profile.u_cap {
        return Err(Error::ProfileOverflow(format!(
            "u-degree {u_pow} exceeds the profile's input cap {}",
            ctx.profile.u_cap
        )));
    }
    let mono = crate::padic::Poly::monomial(ctx.p(), ctx.n(), u_pow, coeff);
    let mut acc = ctx.canonicalize(&mono)?;
    for x in &extras {
        acc = ctx.mul(&acc, x);
    }
    Ok(acc)
}

fn parse_pow(f: &str, base: &str) -> Result<usize> {
    if f == base {
        return Ok(1);
    }
    let exp = &f[base.len() + 1..];
    exp.parse()
        .map_err(|_| Error::Parse(format!("bad exponent in '{f}'")))
}

/// Parse a rectangular matrix of element literals.
pub fn parse_matrix(ctx: &ArithCtx, rows: &[Vec<String>]) -> Result<Vec<Vec<SElement>>> {
    let width = rows.first().map_or(0, |r| r.len());
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != width {
            return Err(Error::ShapeMismatch(
                "matrix literal rows have unequal lengths".into(),
            ));
        }
        out.push(
            row.iter()
                .map(|s| parse_element(ctx, s))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(out)
}
