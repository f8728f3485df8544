//! GF(2^m) arithmetic and dense matrices over it.
//!
//! Arithmetic uses log/antilog tables built from a fixed primitive polynomial
//! per extension degree, so encoded symbols are reproducible byte for byte:
//!
//! | m | polynomial | m | polynomial |
//! |---|------------|---|------------|
//! | 1 | `0x3`      | 5 | `0x25`     |
//! | 2 | `0x7`      | 6 | `0x43`     |
//! | 3 | `0xB`      | 7 | `0x89`     |
//! | 4 | `0x13`     | 8 | `0x11D`    |
//!
//! A full product table is derived from the log tables at construction; the
//! context is immutable afterwards and can be shared freely between threads.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

const PRIMITIVE_POLYS: [u32; 9] = [0, 0x3, 0x7, 0xB, 0x13, 0x25, 0x43, 0x89, 0x11D];

/// Field parameters: `q = 2^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct FieldSpec {
    pub m: u32,
}

impl FieldSpec {
    pub fn new(m: u32) -> Result<Self> {
        if !(1..=8).contains(&m) {
            return Err(Error::FieldDegree(m));
        }
        Ok(FieldSpec { m })
    }

    pub fn q(&self) -> usize {
        1usize << self.m
    }
}

/// Arithmetic context for one field.
pub struct Gf {
    spec: FieldSpec,
    q: usize,
    exp: Vec<u8>,
    log: Vec<u16>,
    mul: Vec<u8>,
    inv: Vec<u8>,
}

impl fmt::Debug for Gf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf(2^{})", self.spec.m)
    }
}

impl Gf {
    pub fn new(spec: FieldSpec) -> Result<Self> {
        let spec = FieldSpec::new(spec.m)?;
        let q = spec.q();
        let poly = PRIMITIVE_POLYS[spec.m as usize];
        let order = q - 1;
        let mut exp = vec![0u8; 2 * order];
        let mut log = vec![0u16; q];
        let mut x: u32 = 1;
        for i in 0..order {
            exp[i] = x as u8;
            log[x as usize] = i as u16;
            x <<= 1;
            if x as usize >= q {
                x ^= poly;
            }
        }
        for i in order..2 * order {
            exp[i] = exp[i - order];
        }
        let mut mul = vec![0u8; q * q];
        for a in 1..q {
            for b in 1..q {
                mul[a * q + b] = exp[log[a] as usize + log[b] as usize];
            }
        }
        let mut inv = vec![0u8; q];
        for a in 1..q {
            inv[a] = exp[(order - log[a] as usize) % order];
        }
        Ok(Gf {
            spec,
            q,
            exp,
            log,
            mul,
            inv,
        })
    }

    /// GF(256), the field used throughout the design examples.
    pub fn gf256() -> Self {
        Gf::new(FieldSpec { m: 8 }).expect("m = 8 is valid")
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn add(&self, a: u8, b: u8) -> u8 {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: u8, b: u8) -> u8 {
        self.mul[a as usize * self.q + b as usize]
    }

    /// Multiplicative inverse; `inv(0)` is defined as 0.
    #[inline]
    pub fn inv(&self, a: u8) -> u8 {
        self.inv[a as usize]
    }

    #[inline]
    pub fn div(&self, a: u8, b: u8) -> u8 {
        debug_assert!(b != 0, "division by zero");
        self.mul(a, self.inv(b))
    }

    /// `alpha^k` for the primitive element `alpha`.
    pub fn pow_alpha(&self, k: usize) -> u8 {
        self.exp[k % (self.q - 1)]
    }

    pub fn log(&self, a: u8) -> Option<usize> {
        (a != 0).then(|| self.log[a as usize] as usize)
    }

    /// `dst[i] += c * src[i]`.
    #[inline]
    pub fn axpy(&self, dst: &mut [u8], src: &[u8], c: u8) {
        if c == 0 {
            return;
        }
        if c == 1 {
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= *s;
            }
            return;
        }
        let row = &self.mul[c as usize * self.q..(c as usize + 1) * self.q];
        for (d, s) in dst.iter_mut().zip(src) {
            *d ^= row[*s as usize];
        }
    }

    /// `v[i] *= c`.
    #[inline]
    pub fn scale(&self, v: &mut [u8], c: u8) {
        if c == 1 {
            return;
        }
        let row = &self.mul[c as usize * self.q..(c as usize + 1) * self.q];
        for x in v.iter_mut() {
            *x = row[*x as usize];
        }
    }

    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        rng.gen_range(0..self.q) as u8
    }

    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        rng.gen_range(1..self.q) as u8
    }
}

/// Probability that `r` independent uniform vectors of length `m` over GF(q)
/// are linearly independent.
pub fn zeta(r: usize, m: usize, q: usize) -> f64 {
    if r == 0 {
        return 1.0;
    }
    if r > m {
        return 0.0;
    }
    let qf = q as f64;
    (0..r)
        .map(|k| 1.0 - qf.powi(k as i32 - m as i32))
        .product()
}

/// Dense row-major matrix over GF(q).
#[derive(Clone, PartialEq, Eq)]
pub struct GfMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl fmt::Debug for GfMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GfMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

impl GfMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        GfMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = GfMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length mismatch");
        GfMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        GfMatrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// I.i.d. uniform entries over the field.
    pub fn random<R: Rng + ?Sized>(gf: &Gf, rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| gf.random_element(rng)).collect();
        GfMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [u8] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    pub fn transpose(&self) -> GfMatrix {
        let mut t = GfMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Keeps the listed columns, in order.
    pub fn select_cols(&self, cols: &[usize]) -> GfMatrix {
        let mut out = GfMatrix::zeros(self.rows, cols.len());
        for r in 0..self.rows {
            for (k, &c) in cols.iter().enumerate() {
                out.set(r, k, self.get(r, c));
            }
        }
        out
    }

    /// Matrix product `self * rhs`; zero rows of `self` are skipped.
    pub fn mul(&self, gf: &Gf, rhs: &GfMatrix) -> GfMatrix {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch");
        let mut out = GfMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let dst = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for k in 0..self.cols {
                let c = self.data[r * self.cols + k];
                if c != 0 {
                    gf.axpy(dst, rhs.row(k), c);
                }
            }
        }
        out
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let cols = self.cols;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (head, tail) = self.data.split_at_mut(hi * cols);
        head[lo * cols..(lo + 1) * cols].swap_with_slice(&mut tail[..cols]);
    }

    /// `row[dst] += c * row[src]`.
    pub fn add_row_multiple(&mut self, gf: &Gf, dst: usize, src: usize, c: u8) {
        if c == 0 || dst == src {
            return;
        }
        let cols = self.cols;
        if dst < src {
            let (head, tail) = self.data.split_at_mut(src * cols);
            gf.axpy(&mut head[dst * cols..(dst + 1) * cols], &tail[..cols], c);
        } else {
            let (head, tail) = self.data.split_at_mut(dst * cols);
            gf.axpy(&mut tail[..cols], &head[src * cols..(src + 1) * cols], c);
        }
    }

    /// Rank by forward elimination with first-nonzero pivoting.
    pub fn rank(&self, gf: &Gf) -> usize {
        let mut a = self.clone();
        let mut rank = 0;
        for col in 0..a.cols {
            if rank == a.rows {
                break;
            }
            let Some(p) = (rank..a.rows).find(|&r| a.get(r, col) != 0) else {
                continue;
            };
            a.swap_rows(rank, p);
            let inv = gf.inv(a.get(rank, col));
            for r in rank + 1..a.rows {
                let v = a.get(r, col);
                if v != 0 {
                    a.add_row_multiple(gf, r, rank, gf.mul(v, inv));
                }
            }
            rank += 1;
        }
        rank
    }
}

/// Reduced row echelon form of `[A | rhs]`.
#[derive(Debug, Clone)]
pub struct Rref {
    pub reduced: GfMatrix,
    pub rhs: GfMatrix,
    /// Pivot column of each of the first `pivots.len()` rows.
    pub pivots: Vec<usize>,
    /// False when a zero row of the reduced matrix carries a nonzero rhs.
    pub consistent: bool,
}

impl Rref {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn full_column_rank(&self) -> bool {
        self.pivots.len() == self.reduced.cols()
    }

    /// Unique solution (`cols x rhs.cols`) when consistent with full column rank.
    pub fn solution(&self) -> Option<GfMatrix> {
        if !self.consistent || !self.full_column_rank() {
            return None;
        }
        let mut x = GfMatrix::zeros(self.reduced.cols(), self.rhs.cols());
        for (k, &c) in self.pivots.iter().enumerate() {
            x.row_mut(c).copy_from_slice(self.rhs.row(k));
        }
        Some(x)
    }
}

/// Gauss-Jordan elimination of `A x = rhs`.
pub fn rref_with_pivots(gf: &Gf, a: &GfMatrix, rhs: &GfMatrix) -> Rref {
    assert_eq!(a.rows(), rhs.rows(), "rhs row count mismatch");
    let mut m = a.clone();
    let mut b = rhs.clone();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..m.cols() {
        if row == m.rows() {
            break;
        }
        let Some(p) = (row..m.rows()).find(|&r| m.get(r, col) != 0) else {
            continue;
        };
        m.swap_rows(row, p);
        b.swap_rows(row, p);
        let inv = gf.inv(m.get(row, col));
        gf.scale(m.row_mut(row), inv);
        gf.scale(b.row_mut(row), inv);
        for r in 0..m.rows() {
            if r == row {
                continue;
            }
            let v = m.get(r, col);
            if v != 0 {
                m.add_row_multiple(gf, r, row, v);
                b.add_row_multiple(gf, r, row, v);
            }
        }
        pivots.push(col);
        row += 1;
    }
    let consistent = (row..b.rows()).all(|r| b.row(r).iter().all(|&x| x == 0));
    Rref {
        reduced: m,
        rhs: b,
        pivots,
        consistent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Column-oriented elimination that works on the transpose and pivots on
    /// the last nonzero entry; shares no code with `GfMatrix::rank`.
    fn rank_oracle(gf: &Gf, a: &GfMatrix) -> usize {
        let mut cols: Vec<Vec<u8>> = (0..a.cols())
            .map(|c| (0..a.rows()).map(|r| a.get(r, c)).collect())
            .collect();
        let mut rank = 0;
        let mut used = vec![false; cols.len()];
        for r in (0..a.rows()).rev() {
            let Some(p) = (0..cols.len()).rev().find(|&c| !used[c] && cols[c][r] != 0) else {
                continue;
            };
            used[p] = true;
            rank += 1;
            let pivot = cols[p].clone();
            let inv = gf.inv(pivot[r]);
            for c in 0..cols.len() {
                if c != p && cols[c][r] != 0 {
                    let f = gf.mul(cols[c][r], inv);
                    for k in 0..a.rows() {
                        cols[c][k] ^= gf.mul(f, pivot[k]);
                    }
                }
            }
        }
        rank
    }

    #[test]
    fn field_degree_out_of_range() {
        assert!(FieldSpec::new(0).is_err());
        assert!(FieldSpec::new(9).is_err());
        assert!(Gf::new(FieldSpec { m: 9 }).is_err());
    }

    #[test]
    fn binary_field_semantics() {
        let gf = Gf::new(FieldSpec { m: 1 }).unwrap();
        assert_eq!(gf.mul(1, 1), 1);
        assert_eq!(gf.add(1, 1), 0);
        assert_eq!(gf.mul(0, 1), 0);
        assert_eq!(gf.inv(1), 1);
    }

    #[test]
    fn identity_and_inverses_all_degrees() {
        for m in 1..=8 {
            let gf = Gf::new(FieldSpec { m }).unwrap();
            for a in 0..gf.q() {
                let a = a as u8;
                assert_eq!(gf.mul(a, 1), a);
                if a != 0 {
                    assert_eq!(gf.mul(a, gf.inv(a)), 1, "m={m} a={a}");
                }
            }
            // the primitive element generates the whole multiplicative group
            let mut seen = vec![false; gf.q()];
            for k in 0..gf.q() - 1 {
                seen[gf.pow_alpha(k) as usize] = true;
            }
            assert!(seen[1..].iter().all(|&s| s), "m={m} not primitive");
        }
    }

    #[test]
    fn distributivity_gf256() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200_000 {
            let a: u8 = rng.gen();
            let b: u8 = rng.gen();
            let c: u8 = rng.gen();
            assert_eq!(gf.mul(a, b ^ c), gf.mul(a, b) ^ gf.mul(a, c));
            assert_eq!(gf.mul(gf.mul(a, b), c), gf.mul(a, gf.mul(b, c)));
        }
    }

    #[test]
    fn gf256_matches_carryless_reference() {
        // schoolbook polynomial product reduced by 0x11D
        fn slow(a: u8, b: u8) -> u8 {
            let mut p: u16 = 0;
            for i in 0..8 {
                if b >> i & 1 == 1 {
                    p ^= (a as u16) << i;
                }
            }
            for i in (8..16).rev() {
                if p >> i & 1 == 1 {
                    p ^= 0x11D << (i - 8);
                }
            }
            p as u8
        }
        let gf = Gf::gf256();
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(gf.mul(a, b), slow(a, b));
            }
        }
    }

    #[test]
    fn rank_trivial_cases() {
        let gf = Gf::gf256();
        assert_eq!(GfMatrix::zeros(5, 7).rank(&gf), 0);
        assert_eq!(GfMatrix::identity(9).rank(&gf), 9);
        assert_eq!(GfMatrix::zeros(0, 3).rank(&gf), 0);
    }

    #[test]
    fn rank_matches_oracle_random() {
        let gf = Gf::gf256();
        let gf2 = Gf::new(FieldSpec { m: 1 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..300 {
            let (g, rows, cols) = if trial % 2 == 0 {
                (&gf, 8, 8)
            } else {
                (&gf2, rng.gen_range(1..10), rng.gen_range(1..10))
            };
            let a = GfMatrix::random(g, rows, cols, &mut rng);
            assert_eq!(a.rank(g), rank_oracle(g, &a));
        }
    }

    #[test]
    fn rank_invariant_under_row_ops() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut a = GfMatrix::random(&gf, 6, 9, &mut rng);
            // force some dependency
            let r0 = a.row(0).to_vec();
            a.row_mut(3).copy_from_slice(&r0);
            let rank = a.rank(&gf);
            let mut b = a.clone();
            b.swap_rows(0, 5);
            let c = gf.random_nonzero(&mut rng);
            gf.scale(b.row_mut(2), c);
            assert_eq!(b.rank(&gf), rank);
        }
    }

    #[test]
    fn rref_identity_returns_rhs() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = GfMatrix::random(&gf, 5, 3, &mut rng);
        let r = rref_with_pivots(&gf, &GfMatrix::identity(5), &b);
        assert_eq!(r.solution().unwrap(), b);
    }

    #[test]
    fn rref_zero_column_is_never_pivot() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = GfMatrix::random(&gf, 6, 5, &mut rng);
        for r in 0..6 {
            a.set(r, 2, 0);
        }
        let r = rref_with_pivots(&gf, &a, &GfMatrix::zeros(6, 1));
        assert!(!r.pivots.contains(&2));
        assert!(!r.full_column_rank());
        assert!(r.solution().is_none());
    }

    #[test]
    fn rref_matches_exhaustive_search_gf2() {
        let gf = Gf::new(FieldSpec { m: 1 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut checked = 0;
        while checked < 200 {
            let a = GfMatrix::random(&gf, 6, 4, &mut rng);
            if a.rank(&gf) < 4 {
                continue;
            }
            let x = GfMatrix::random(&gf, 4, 1, &mut rng);
            let b = a.mul(&gf, &x);
            // enumerate all 16 candidates
            let hits: Vec<u8> = (0u8..16)
                .filter(|&mask| {
                    let cand = GfMatrix::from_vec(4, 1, (0..4).map(|k| mask >> k & 1).collect());
                    a.mul(&gf, &cand) == b
                })
                .collect();
            assert_eq!(hits.len(), 1);
            let expect = GfMatrix::from_vec(4, 1, (0..4).map(|k| hits[0] >> k & 1).collect());
            let r = rref_with_pivots(&gf, &a, &b);
            assert!(r.consistent);
            assert_eq!(r.solution().unwrap(), expect);
            checked += 1;
        }
    }

    #[test]
    fn rref_flags_inconsistent_system() {
        let gf = Gf::gf256();
        let a = GfMatrix::from_rows(&[vec![1, 0], vec![1, 0]]);
        let b = GfMatrix::from_rows(&[vec![3], vec![4]]);
        assert!(!rref_with_pivots(&gf, &a, &b).consistent);
    }

    #[test]
    fn rref_reproduces_generating_solution_gf256() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let a = GfMatrix::random(&gf, 12, 8, &mut rng);
            let x = GfMatrix::random(&gf, 8, 3, &mut rng);
            let b = a.mul(&gf, &x);
            let r = rref_with_pivots(&gf, &a, &b);
            if r.full_column_rank() {
                assert_eq!(r.solution().unwrap(), x);
            }
        }
    }

    #[test]
    fn zeta_values() {
        assert_eq!(zeta(0, 5, 256), 1.0);
        assert_eq!(zeta(0, 0, 2), 1.0);
        assert!((zeta(1, 1, 2) - 0.5).abs() < 1e-15);
        assert_eq!(zeta(3, 2, 2), 0.0);
        assert_eq!(zeta(2, 2, 2), 0.375);
    }

    #[test]
    fn random_matrix_deterministic() {
        let gf = Gf::gf256();
        let a = GfMatrix::random(&gf, 4, 4, &mut ChaCha8Rng::seed_from_u64(1));
        let b = GfMatrix::random(&gf, 4, 4, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }

    #[test]
    fn random_entries_uniform_chi_square() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = GfMatrix::random(&gf, 1000, 1000, &mut rng);
        let mut counts = [0u64; 256];
        for &x in a.data() {
            counts[x as usize] += 1;
        }
        let expect = 1e6 / 256.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        // 255 degrees of freedom: mean 255, sd ~22.6; 4 sigma
        assert!((chi2 - 255.0).abs() < 4.0 * (2.0f64 * 255.0).sqrt(), "chi2={chi2}");
    }

    #[test]
    fn full_rank_frequency_matches_zeta() {
        for (m, q_m) in [(1u32, 2usize), (2, 4), (8, 256)] {
            let gf = Gf::new(FieldSpec { m }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(29 + m as u64);
            let trials = 100_000;
            for (r, len) in [(3usize, 4usize), (4, 4), (2, 2)] {
                let hits = (0..trials)
                    .filter(|_| GfMatrix::random(&gf, r, len, &mut rng).rank(&gf) == r)
                    .count();
                let p = zeta(r, len, q_m);
                let freq = hits as f64 / trials as f64;
                let sd = (p * (1.0 - p) / trials as f64).sqrt();
                assert!((freq - p).abs() <= 3.0 * sd + 1e-12, "q={q_m} r={r} m={len}: {freq} vs {p}");
            }
        }
    }
}
