//! Row-span linear algebra over Z/p^N.
//!
//! Z/p^N is a chain ring, so every finitely generated row span of
//! (Z/p^N)^L has a canonical Howell basis: echelon rows with pivots p^v
//! (unit-normalized), closed under the multiples p^{N-v}·row that expose
//! span elements hiding behind a high-valuation pivot, entries above each
//! pivot reduced modulo it. Canonical means two spans are equal iff their
//! Howell rows are identical, which the report generator relies on.
//!
//! Everything here uses the row convention: vectors are rows, maps act on
//! the right, x ↦ x·M.

use crate::padic::PadicInt;

/// Fixed-modulus arithmetic context, m = p^n < 2^63.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mod {
    pub p: u64,
    pub n: u32,
    pub m: u64,
}

impl Mod {
    pub fn new(p: u64, n: u32) -> Self {
        let mut m: u64 = 1;
        for _ in 0..n {
            m = m.checked_mul(p).expect("modulus overflow");
        }
        assert!(m <= 1 << 62, "p^{n} exceeds the 64-bit working modulus");
        Mod { p, n, m }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.m {
            s - self.m
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.m - b
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        (a as u128 * b as u128 % self.m as u128) as u64
    }

    pub fn vp(&self, a: u64) -> u32 {
        debug_assert!(a != 0);
        let mut v = 0;
        let mut a = a;
        while a % self.p == 0 {
            a /= self.p;
            v += 1;
        }
        v
    }

    pub fn pow_p(&self, v: u32) -> u64 {
        let mut acc = 1u64;
        for _ in 0..v {
            acc *= self.p;
        }
        acc
    }

    /// Inverse of a unit mod p^n.
    pub fn inv(&self, a: u64) -> u64 {
        PadicInt::new(self.p, self.n, a as i128)
            .inverse()
            .expect("unit required")
            .value()
    }
}

fn row_sub_scaled(md: &Mod, target: &mut [u64], src: &[u64], q: u64) {
    if q == 0 {
        return;
    }
    for (t, s) in target.iter_mut().zip(src) {
        *t = md.sub(*t, md.mul(q, *s));
    }
}

fn row_scale(md: &Mod, target: &mut [u64], q: u64) {
    for t in target.iter_mut() {
        *t = md.mul(*t, q);
    }
}

/// Canonical Howell basis of a row span, with the expressing data kept:
/// each basis row is a recorded combination of the original generators,
/// and the left kernel of the generator matrix falls out of the same
/// reduction.
#[derive(Clone, Debug)]
pub struct RowSpan {
    pub md: Mod,
    pub width: usize,
    gens: Vec<Vec<u64>>,
    /// Canonical rows, pivot columns strictly increasing.
    pub rows: Vec<Vec<u64>>,
    /// (pivot column, pivot valuation) per canonical row.
    pub pivots: Vec<(usize, u32)>,
    /// rows[i] = comp[i] · gens
    comp: Vec<Vec<u64>>,
    /// Generators of {c : c · gens = 0}.
    pub kernel: Vec<Vec<u64>>,
}

impl RowSpan {
    pub fn new(md: Mod, width: usize, gens: Vec<Vec<u64>>) -> Self {
        for g in &gens {
            assert_eq!(g.len(), width, "generator width mismatch");
        }
        let ngens = gens.len();
        // (vector, companion) pairs; companions track combinations of gens.
        let mut pending: Vec<(Vec<u64>, Vec<u64>)> = gens
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mut c = vec![0u64; ngens];
                c[i] = 1 % md.m;
                (g.clone(), c)
            })
            .collect();
        let mut rows: Vec<Vec<u64>> = Vec::new();
        let mut comp: Vec<Vec<u64>> = Vec::new();
        let mut pivots: Vec<(usize, u32)> = Vec::new();
        let mut kernel: Vec<Vec<u64>> = Vec::new();

        for col in 0..width {
            // minimal-valuation entry in this column among pending rows
            let mut best: Option<(usize, u32)> = None;
            for (idx, (r, _)) in pending.iter().enumerate() {
                if r[col] != 0 {
                    let v = md.vp(r[col]);
                    if best.map_or(true, |(_, bv)| v < bv) {
                        best = Some((idx, v));
                    }
                }
            }
            let (idx, v) = match best {
                Some(b) => b,
                None => continue,
            };
            let (mut row, mut cmp) = pending.swap_remove(idx);
            // normalize pivot to exactly p^v
            let unit = row[col] / md.pow_p(v);
            let uinv = md.inv(unit % md.m);
            row_scale(&md, &mut row, uinv);
            row_scale(&md, &mut cmp, uinv);
            // eliminate the column from every pending row (all have vp >= v)
            for (r, c) in pending.iter_mut() {
                if r[col] != 0 {
                    let q = r[col] / md.pow_p(v);
                    row_sub_scaled(&md, r, &row, q);
                    row_sub_scaled(&md, c, &cmp, q);
                    debug_assert_eq!(r[col], 0);
                }
            }
            // Howell closure: p^{n-v}·row lives in the span with this pivot
            // column killed; it may carry new content further right.
            if v > 0 {
                let q = md.pow_p(md.n - v);
                let aux_r: Vec<u64> = row.iter().map(|&x| md.mul(x, q)).collect();
                let aux_c: Vec<u64> = cmp.iter().map(|&x| md.mul(x, q)).collect();
                if aux_r.iter().any(|&x| x != 0) {
                    pending.push((aux_r, aux_c));
                } else if aux_c.iter().any(|&x| x != 0) {
                    kernel.push(aux_c);
                }
            }
            rows.push(row);
            comp.push(cmp);
            pivots.push((col, v));
        }
        for (r, c) in pending {
            debug_assert!(r.iter().all(|&x| x == 0));
            let _ = r;
            if c.iter().any(|&x| x != 0) {
                kernel.push(c);
            }
        }
        // reduce entries above each pivot modulo the pivot
        for s in 0..rows.len() {
            let (jc, v) = pivots[s];
            let pv = md.pow_p(v);
            for t in 0..s {
                let q = rows[t][jc] / pv;
                if q != 0 {
                    let (head, tail) = rows.split_at_mut(s);
                    row_sub_scaled(&md, &mut head[t], &tail[0], q);
                    let (chead, ctail) = comp.split_at_mut(s);
                    row_sub_scaled(&md, &mut chead[t], &ctail[0], q);
                }
            }
        }
        RowSpan {
            md,
            width,
            gens,
            rows,
            pivots,
            comp,
            kernel,
        }
    }

    pub fn empty(md: Mod, width: usize) -> Self {
        RowSpan::new(md, width, vec![])
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn generators(&self) -> &[Vec<u64>] {
        &self.gens
    }

    /// Reduce x against the basis; returns (residual, coefficients over the
    /// canonical rows). x ∈ span iff residual is zero.
    fn reduce(&self, x: &[u64]) -> (Vec<u64>, Vec<u64>) {
        let mut r = x.to_vec();
        let mut coeff = vec![0u64; self.rows.len()];
        for (i, &(col, v)) in self.pivots.iter().enumerate() {
            if r[col] == 0 {
                continue;
            }
            let pv = self.md.pow_p(v);
            if r[col] % pv != 0 {
                continue; // not reducible at this pivot; residual stays
            }
            let q = r[col] / pv;
            row_sub_scaled(&self.md, &mut r, &self.rows[i], q);
            coeff[i] = q;
        }
        (r, coeff)
    }

    pub fn contains(&self, x: &[u64]) -> bool {
        self.reduce(x).0.iter().all(|&c| c == 0)
    }

    /// Coefficients c with x = c · generators, when x lies in the span.
    pub fn express(&self, x: &[u64]) -> Option<Vec<u64>> {
        let (res, coeff) = self.reduce(x);
        if res.iter().any(|&c| c != 0) {
            return None;
        }
        let mut out = vec![0u64; self.gens.len()];
        for (i, &q) in coeff.iter().enumerate() {
            if q != 0 {
                for (o, &c) in out.iter_mut().zip(&self.comp[i]) {
                    *o = self.md.add(*o, self.md.mul(q, c));
                }
            }
        }
        Some(out)
    }

    /// True when the span is a free direct summand of the ambient module,
    /// visible on the Howell basis as every pivot being a unit.
    pub fn is_free_summand(&self) -> bool {
        self.pivots.iter().all(|&(_, v)| v == 0)
    }

    /// Intersection of two spans over the same ambient module.
    pub fn intersect(&self, other: &RowSpan) -> RowSpan {
        assert_eq!(self.width, other.width);
        let a = self.rows.len();
        let stacked: Vec<Vec<u64>> = self
            .rows
            .iter()
            .chain(other.rows.iter())
            .cloned()
            .collect();
        let sp = RowSpan::new(self.md, self.width, stacked);
        // kernel rows (c, d) with c·A + d·B = 0 give intersection elements c·A
        let gens: Vec<Vec<u64>> = sp
            .kernel
            .iter()
            .map(|cd| {
                let mut x = vec![0u64; self.width];
                for (i, &ci) in cd[..a].iter().enumerate() {
                    if ci != 0 {
                        for (xo, &ri) in x.iter_mut().zip(&self.rows[i]) {
                            *xo = self.md.add(*xo, self.md.mul(ci, ri));
                        }
                    }
                }
                x
            })
            .collect();
        RowSpan::new(self.md, self.width, gens)
    }

    /// {x : x·map ∈ self}, for map an a×width matrix acting on row vectors.
    pub fn preimage(&self, map: &[Vec<u64>]) -> RowSpan {
        let a = map.len();
        // kernel of [map; rows] stacked: (x, c) with x·map = -c·rows
        let stacked: Vec<Vec<u64>> = map.iter().chain(self.rows.iter()).cloned().collect();
        let sp = RowSpan::new(self.md, self.width, stacked);
        let mut gens: Vec<Vec<u64>> = sp.kernel.iter().map(|k| k[..a].to_vec()).collect();
        // x with x·map = 0 are found through the kernel as well, but multiples
        // of p^n of anything vanish; supplement with nothing else: the kernel
        // already generates everything since c ranges over all of R^rows.
        if a == 0 {
            gens.clear();
        }
        RowSpan::new(self.md, a, gens)
    }
}

/// y = x · M solver: coefficients x with x·mat = y, if any.
pub fn solve_left(md: Mod, mat: &[Vec<u64>], y: &[u64]) -> Option<Vec<u64>> {
    if mat.is_empty() {
        return if y.iter().all(|&c| c == 0) {
            Some(vec![])
        } else {
            None
        };
    }
    RowSpan::new(md, mat[0].len(), mat.to_vec()).express(y)
}

/// Rank of the reduction mod p, i.e. dimension of the image over F_p.
pub fn rank_mod_p(md: Mod, mat: &[Vec<u64>]) -> usize {
    if mat.is_empty() {
        return 0;
    }
    let p = md.p;
    let width = mat[0].len();
    let mut rows: Vec<Vec<u64>> = mat
        .iter()
        .map(|r| r.iter().map(|&x| x % p).collect())
        .collect();
    let mut rank = 0;
    for col in 0..width {
        let piv = (rank..rows.len()).find(|&i| rows[i][col] != 0);
        let piv = match piv {
            Some(i) => i,
            None => continue,
        };
        rows.swap(rank, piv);
        let inv = PadicInt::new(p, 1, rows[rank][col] as i128)
            .inverse()
            .unwrap()
            .value();
        for j in col..width {
            rows[rank][j] = rows[rank][j] * inv % p;
        }
        for i in 0..rows.len() {
            if i != rank && rows[i][col] != 0 {
                let q = rows[i][col];
                for j in col..width {
                    rows[i][j] = (rows[i][j] + (p - q) * rows[rank][j]) % p;
                }
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// Dense u64 matrix product mod m, row convention: (a·b)[i][j] = Σ a[i][k] b[k][j].
pub fn mat_mul(md: Mod, a: &[Vec<u64>], b: &[Vec<u64>]) -> Vec<Vec<u64>> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0u64; m]; n];
    for i in 0..n {
        for t in 0..k.min(a[i].len()) {
            let av = a[i][t];
            if av == 0 {
                continue;
            }
            for j in 0..m {
                out[i][j] = md.add(out[i][j], md.mul(av, b[t][j]));
            }
        }
    }
    out
}

pub fn mat_identity(md: Mod, n: usize) -> Vec<Vec<u64>> {
    let mut out = vec![vec![0u64; n]; n];
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = 1 % md.m;
    }
    out
}
