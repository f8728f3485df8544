//! Encoding (precode plus batches) and erasure decoding (BP and inactivation).

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gf::{rref_with_pivots, Gf, GfMatrix};
use crate::protograph::{LabeledRows, LiftedCode};

/// Packets as rows of `T` symbols.
pub type Packets = Vec<Vec<u8>>;

/// Systematic encoder for the labeled precode `T1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Precode {
    k: usize,
    info: Vec<usize>,
    /// `(parity position, [(info-free position, coefficient)])`.
    parity: Vec<(usize, Vec<(usize, u8)>)>,
    rows: usize,
}

fn t1_matrix(t1: &LabeledRows, k: usize) -> GfMatrix {
    let mut m = GfMatrix::zeros(t1.len(), k);
    for (r, row) in t1.iter().enumerate() {
        for &(c, l) in row {
            m.set(r, c, l);
        }
    }
    m
}

impl Precode {
    /// Builds the encoder from the current labels, whatever their rank.
    pub fn new(gf: &Gf, t1: &LabeledRows, k: usize) -> Self {
        let h = t1_matrix(t1, k);
        let red = rref_with_pivots(gf, &h, &GfMatrix::zeros(h.rows(), 0));
        let mut is_pivot = vec![false; k];
        for &p in &red.pivots {
            is_pivot[p] = true;
        }
        let info: Vec<usize> = (0..k).filter(|&c| !is_pivot[c]).collect();
        let parity = red
            .pivots
            .iter()
            .enumerate()
            .map(|(row, &p)| {
                let deps = info
                    .iter()
                    .filter_map(|&f| {
                        let v = red.reduced.get(row, f);
                        (v != 0).then_some((f, v))
                    })
                    .collect();
                (p, deps)
            })
            .collect();
        Precode {
            k,
            info,
            parity,
            rows: t1.len(),
        }
    }

    /// Re-draws the labels of `code` until `T1` has full row rank, trying at
    /// most `max_attempts` label sets in total.
    pub fn full_rank<R: Rng + ?Sized>(
        code: &mut LiftedCode,
        rng: &mut R,
        max_attempts: usize,
    ) -> Result<Self> {
        let gf = Gf::new(code.field)?;
        let mut last = None;
        for attempt in 0..max_attempts.max(1) {
            if attempt > 0 {
                for row in code.t1.iter_mut() {
                    for e in row.iter_mut() {
                        e.1 = gf.random_nonzero(rng);
                    }
                }
            }
            let p = Precode::new(&gf, &code.t1, code.k());
            if p.rank() == p.rows {
                return Ok(p);
            }
            last = Some(p);
        }
        let p = last.expect("at least one attempt");
        Err(Error::RankDeficientPrecode {
            attempts: max_attempts.max(1),
            rank: p.rank(),
            rows: p.rows,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rank(&self) -> usize {
        self.parity.len()
    }

    /// Effective number of input packets, `K - rank(T1)`.
    pub fn a(&self) -> usize {
        self.info.len()
    }

    /// Positions of the systematic (input) packets among the `K`.
    pub fn info_positions(&self) -> &[usize] {
        &self.info
    }

    /// Intermediate packets with every L-CN constraint satisfied.
    pub fn encode(&self, gf: &Gf, inputs: &Packets) -> Result<Packets> {
        if inputs.len() != self.a() {
            return Err(Error::Codec(format!(
                "expected {} input packets, got {}",
                self.a(),
                inputs.len()
            )));
        }
        let t = inputs.first().map_or(0, Vec::len);
        if inputs.iter().any(|p| p.len() != t) {
            return Err(Error::Codec("input packets differ in length".into()));
        }
        let mut v = vec![vec![0u8; t]; self.k];
        for (&pos, p) in self.info.iter().zip(inputs) {
            v[pos].clone_from(p);
        }
        for (p, deps) in &self.parity {
            let mut acc = vec![0u8; t];
            for &(f, c) in deps {
                gf.axpy(&mut acc, &v[f], c);
            }
            v[*p] = acc;
        }
        Ok(v)
    }
}

/// Output of the outer encoder for one batch: `X = Ṽ G̃` as `M` packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedBatch {
    pub vars: Vec<usize>,
    /// `|I| x M` generator.
    pub g: GfMatrix,
    pub x: Packets,
}

/// Generates every batch of `code` from the intermediate packets `v`.
pub fn outer_encode<R: Rng + ?Sized>(
    gf: &Gf,
    code: &LiftedCode,
    v: &Packets,
    rng: &mut R,
) -> Result<Vec<CodedBatch>> {
    code.t2
        .rows
        .iter()
        .map(|vars| encode_batch(gf, vars, code.m_batch, v, rng))
        .collect()
}

/// Generator `G̃` of a batch with `rows` VNs, drawn from `seed`.
pub fn generator_from_seed(gf: &Gf, rows: usize, m_batch: usize, seed: u64) -> GfMatrix {
    GfMatrix::random(gf, rows, m_batch, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Batch with an explicit generator.
pub fn encode_batch_with(gf: &Gf, vars: &[usize], g: GfMatrix, v: &Packets) -> Result<CodedBatch> {
    if vars.is_empty() {
        return Err(Error::Codec("empty batch row".into()));
    }
    if g.rows() != vars.len() {
        return Err(Error::Codec(format!("generator has {} rows for {} VNs", g.rows(), vars.len())));
    }
    let t = v.first().map_or(0, Vec::len);
    let mut x = vec![vec![0u8; t]; g.cols()];
    for (a, &var) in vars.iter().enumerate() {
        for (col, xc) in x.iter_mut().enumerate() {
            gf.axpy(xc, &v[var], g.get(a, col));
        }
    }
    Ok(CodedBatch {
        vars: vars.to_vec(),
        g,
        x,
    })
}

pub fn encode_batch<R: Rng + ?Sized>(
    gf: &Gf,
    vars: &[usize],
    m_batch: usize,
    v: &Packets,
    rng: &mut R,
) -> Result<CodedBatch> {
    if vars.is_empty() {
        return Err(Error::Codec("empty batch row".into()));
    }
    let g = GfMatrix::random(gf, vars.len(), m_batch, rng);
    encode_batch_with(gf, vars, g, v)
}

/// Received batch: `Y = Ṽ G̃ H` with `H` the `M x w` transfer matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchEquation {
    pub vars: Vec<usize>,
    pub g: GfMatrix,
    pub h: GfMatrix,
    pub y: Packets,
}

impl BatchEquation {
    /// Passes a coded batch through the transfer matrix `h`.
    pub fn receive(gf: &Gf, batch: &CodedBatch, h: GfMatrix) -> Self {
        let t = batch.x.first().map_or(0, Vec::len);
        let mut y = vec![vec![0u8; t]; h.cols()];
        for (k, xk) in batch.x.iter().enumerate() {
            for (c, yc) in y.iter_mut().enumerate() {
                gf.axpy(yc, xk, h.get(k, c));
            }
        }
        BatchEquation {
            vars: batch.vars.clone(),
            g: batch.g.clone(),
            h,
            y,
        }
    }

    /// `G̃ H`, the coefficients of the received packets in the batch VNs.
    pub fn coefficients(&self, gf: &Gf) -> GfMatrix {
        self.g.mul(gf, &self.h)
    }
}

/// Linear equations `sum_a coef[a][c] v_{vars[a]} = rhs[c]`, one per column.
#[derive(Debug, Clone)]
struct Group {
    vars: Vec<usize>,
    coef: GfMatrix,
    rhs: Packets,
    is_batch: bool,
}

/// Decoded packets: `recovered[v]` is `Some` exactly when VN `v` is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    pub recovered: Vec<Option<Vec<u8>>>,
    pub success: bool,
    pub inactivated: usize,
}

impl DecodeResult {
    pub fn recovered_count(&self) -> usize {
        self.recovered.iter().filter(|v| v.is_some()).count()
    }

    pub fn all_known(&self, positions: &[usize]) -> bool {
        positions.iter().all(|&p| self.recovered[p].is_some())
    }
}

/// Affine value `c + sum_k s[k] u_k` over the inactive unknowns `u`.
#[derive(Debug, Clone)]
struct Sym {
    c: Vec<u8>,
    s: Vec<u8>,
}

impl Sym {
    fn axpy(&mut self, gf: &Gf, other: &Sym, coef: u8) {
        gf.axpy(&mut self.c, &other.c, coef);
        if self.s.len() < other.s.len() {
            self.s.resize(other.s.len(), 0);
        }
        gf.axpy(&mut self.s[..other.s.len()], &other.s, coef);
    }

    fn is_constant(&self) -> bool {
        self.s.iter().all(|&x| x == 0)
    }
}

struct Decoder<'a> {
    gf: &'a Gf,
    groups: Vec<Group>,
    var_groups: Vec<Vec<usize>>,
    values: Vec<Option<Sym>>,
    t: usize,
    inactive: usize,
}

impl<'a> Decoder<'a> {
    fn new(gf: &'a Gf, k: usize, t: usize, groups: Vec<Group>) -> Self {
        let mut var_groups = vec![Vec::new(); k];
        for (g, grp) in groups.iter().enumerate() {
            for &v in &grp.vars {
                var_groups[v].push(g);
            }
        }
        Decoder {
            gf,
            groups,
            var_groups,
            values: vec![None; k],
            t,
            inactive: 0,
        }
    }

    fn unknown_rows(&self, g: usize) -> Vec<usize> {
        self.groups[g]
            .vars
            .iter()
            .enumerate()
            .filter(|(_, &v)| self.values[v].is_none())
            .map(|(a, _)| a)
            .collect()
    }

    fn residual_rank(&self, g: usize, rows: &[usize]) -> usize {
        let grp = &self.groups[g];
        let mut m = GfMatrix::zeros(rows.len(), grp.coef.cols());
        for (r, &a) in rows.iter().enumerate() {
            m.row_mut(r).copy_from_slice(grp.coef.row(a));
        }
        m.rank(self.gf)
    }

    /// Solves group `g` if its unknowns are determined; returns the newly
    /// resolved VNs.
    fn try_solve(&mut self, g: usize) -> Vec<usize> {
        let rows = self.unknown_rows(g);
        let u = rows.len();
        let grp = &self.groups[g];
        let w = grp.coef.cols();
        if u == 0 || u > w {
            return Vec::new();
        }
        // transpose system: for every column c, sum_{a in U} coef[a][c] v_a = rhs'_c
        let sw = self.inactive;
        let mut a = GfMatrix::zeros(w, u);
        let mut rhs = GfMatrix::zeros(w, self.t + sw);
        for c in 0..w {
            for (k, &r) in rows.iter().enumerate() {
                a.set(c, k, grp.coef.get(r, c));
            }
            let mut acc = Sym {
                c: grp.rhs[c].clone(),
                s: vec![0; sw],
            };
            for (r, &v) in grp.vars.iter().enumerate() {
                if let Some(val) = &self.values[v] {
                    acc.axpy(self.gf, val, grp.coef.get(r, c));
                }
            }
            let row = rhs.row_mut(c);
            row[..self.t].copy_from_slice(&acc.c);
            row[self.t..self.t + acc.s.len().min(sw)].copy_from_slice(&acc.s[..sw.min(acc.s.len())]);
        }
        let red = rref_with_pivots(self.gf, &a, &rhs);
        if !red.full_column_rank() {
            return Vec::new();
        }
        let mut solved = Vec::with_capacity(u);
        for (k, &p) in red.pivots.iter().enumerate() {
            let var = grp.vars[rows[p]];
            let row = red.rhs.row(k);
            self.values[var] = Some(Sym {
                c: row[..self.t].to_vec(),
                s: row[self.t..].to_vec(),
            });
            solved.push(var);
        }
        solved
    }

    /// Belief propagation until no group makes progress.
    fn propagate(&mut self, queue: &mut VecDeque<usize>, queued: &mut [bool]) {
        while let Some(g) = queue.pop_front() {
            queued[g] = false;
            for v in self.try_solve(g) {
                for &h in &self.var_groups[v] {
                    if !queued[h] {
                        queued[h] = true;
                        queue.push_back(h);
                    }
                }
            }
        }
    }

    /// Unknown VN in the most deficiency-1 batches, then deficiency-1 checks,
    /// then lowest index.
    fn pick_inactive(&self) -> Option<usize> {
        let k = self.values.len();
        let mut score = vec![(0usize, 0usize); k];
        for g in 0..self.groups.len() {
            let rows = self.unknown_rows(g);
            if rows.len() < 2 {
                continue;
            }
            if rows.len() - self.residual_rank(g, &rows) == 1 {
                for &r in &rows {
                    let v = self.groups[g].vars[r];
                    if self.groups[g].is_batch {
                        score[v].0 += 1;
                    } else {
                        score[v].1 += 1;
                    }
                }
            }
        }
        (0..k)
            .filter(|&v| self.values[v].is_none())
            .max_by(|&a, &b| score[a].cmp(&score[b]).then(b.cmp(&a)))
    }

    fn run(mut self, max_inactive: Option<usize>) -> DecodeResult {
        let n = self.groups.len();
        let mut queue: VecDeque<usize> = (0..n).collect();
        let mut queued = vec![true; n];
        loop {
            self.propagate(&mut queue, &mut queued);
            if self.values.iter().all(Option::is_some) {
                break;
            }
            if max_inactive.is_some_and(|cap| self.inactive >= cap) {
                return self.finish_partial();
            }
            let Some(v) = self.pick_inactive() else {
                break;
            };
            let idx = self.inactive;
            self.inactive += 1;
            let mut s = vec![0u8; self.inactive];
            s[idx] = 1;
            self.values[v] = Some(Sym {
                c: vec![0; self.t],
                s,
            });
            for &h in &self.var_groups[v] {
                if !queued[h] {
                    queued[h] = true;
                    queue.push_back(h);
                }
            }
        }
        if self.inactive == 0 {
            return self.finish_partial();
        }
        self.solve_inactive()
    }

    fn finish_partial(self) -> DecodeResult {
        let recovered: Vec<Option<Vec<u8>>> = self
            .values
            .into_iter()
            .map(|v| v.filter(Sym::is_constant).map(|s| s.c))
            .collect();
        let success = recovered.iter().all(Option::is_some);
        DecodeResult {
            recovered,
            success,
            inactivated: self.inactive,
        }
    }

    /// Dense solve for the inactive unknowns from every equation.
    fn solve_inactive(self) -> DecodeResult {
        let n_in = self.inactive;
        let mut rows_a: Vec<Vec<u8>> = Vec::new();
        let mut rows_b: Packets = Vec::new();
        for grp in &self.groups {
            for c in 0..grp.coef.cols() {
                let mut acc = Sym {
                    c: grp.rhs[c].clone(),
                    s: vec![0; n_in],
                };
                for (r, &v) in grp.vars.iter().enumerate() {
                    let val = self.values[v].as_ref().expect("all resolved");
                    acc.axpy(self.gf, val, grp.coef.get(r, c));
                }
                if acc.s.iter().any(|&x| x != 0) {
                    rows_a.push(acc.s);
                    rows_b.push(acc.c);
                }
            }
        }
        let a = GfMatrix::from_vec(
            rows_a.len(),
            n_in,
            rows_a.iter().flatten().copied().collect(),
        );
        let b = GfMatrix::from_vec(rows_b.len(), self.t, rows_b.iter().flatten().copied().collect());
        let red = rref_with_pivots(self.gf, &a, &b);
        let inactivated = self.inactive;
        if !red.full_column_rank() {
            let mut partial = self.finish_partial();
            partial.success = false;
            partial.inactivated = inactivated;
            return partial;
        }
        let mut u = vec![vec![0u8; self.t]; n_in];
        for (k, &p) in red.pivots.iter().enumerate() {
            u[p] = red.rhs.row(k).to_vec();
        }
        let recovered = self
            .values
            .into_iter()
            .map(|v| {
                let s = v.expect("all resolved");
                let mut out = s.c;
                for (k, &coef) in s.s.iter().enumerate() {
                    self.gf.axpy(&mut out, &u[k], coef);
                }
                Some(out)
            })
            .collect();
        DecodeResult {
            recovered,
            success: true,
            inactivated,
        }
    }
}

fn build_groups(gf: &Gf, batches: &[BatchEquation], ldpc: &LabeledRows, t: usize) -> Vec<Group> {
    let mut groups: Vec<Group> = batches
        .iter()
        .map(|b| Group {
            vars: b.vars.clone(),
            coef: b.coefficients(gf),
            rhs: b.y.clone(),
            is_batch: true,
        })
        .collect();
    for row in ldpc {
        if row.is_empty() {
            continue;
        }
        let vars: Vec<usize> = row.iter().map(|&(c, _)| c).collect();
        let coef = GfMatrix::from_vec(row.len(), 1, row.iter().map(|&(_, l)| l).collect());
        groups.push(Group {
            vars,
            coef,
            rhs: vec![vec![0u8; t]],
            is_batch: false,
        });
    }
    groups
}

fn payload_len(batches: &[BatchEquation]) -> usize {
    batches
        .iter()
        .flat_map(|b| b.y.first())
        .map(Vec::len)
        .next()
        .unwrap_or(0)
}

/// Joint BP over batches and precode checks. `t` is the payload length.
pub fn bp_decode(
    gf: &Gf,
    batches: &[BatchEquation],
    ldpc: &LabeledRows,
    k: usize,
    t: usize,
) -> DecodeResult {
    let t = if batches.is_empty() { t } else { payload_len(batches).max(t) };
    Decoder::new(gf, k, t, build_groups(gf, batches, ldpc, t)).run(Some(0))
}

/// BP with inactivation on stalls; `max_inactive = None` means unlimited.
pub fn inactivation_decode(
    gf: &Gf,
    batches: &[BatchEquation],
    ldpc: &LabeledRows,
    k: usize,
    t: usize,
    max_inactive: Option<usize>,
) -> DecodeResult {
    let t = if batches.is_empty() { t } else { payload_len(batches).max(t) };
    let mut res = Decoder::new(gf, k, t, build_groups(gf, batches, ldpc, t)).run(max_inactive);
    if max_inactive.is_some_and(|cap| res.inactivated > cap) {
        res.success = false;
    }
    res
}

/// True iff the stacked batch and precode equations have rank `k`.
pub fn ml_feasible(gf: &Gf, batches: &[BatchEquation], ldpc: &LabeledRows, k: usize) -> bool {
    let rows: usize = batches.iter().map(|b| b.h.cols()).sum::<usize>() + ldpc.len();
    if rows < k {
        return false;
    }
    let mut m = GfMatrix::zeros(rows, k);
    let mut r = 0;
    for b in batches {
        let coef = b.coefficients(gf);
        for c in 0..coef.cols() {
            for (a, &v) in b.vars.iter().enumerate() {
                let x = m.get(r, v) ^ coef.get(a, c);
                m.set(r, v, x);
            }
            r += 1;
        }
    }
    for row in ldpc {
        for &(c, l) in row {
            m.set(r, c, l);
        }
        r += 1;
    }
    m.rank(gf) == k
}

/// Default inactivation cap `ceil(2 sqrt(A))`.
pub fn default_inactive_cap(a: usize) -> usize {
    (2.0 * (a as f64).sqrt()).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::FieldSpec;
    use rand::seq::index::sample;

    fn random_t1(rng: &mut impl Rng, gf: &Gf, k: usize, checks: usize, deg: usize) -> LabeledRows {
        (0..checks)
            .map(|_| {
                let mut cols = sample(rng, k, deg).into_vec();
                cols.sort_unstable();
                cols.into_iter().map(|c| (c, gf.random_nonzero(rng))).collect()
            })
            .collect()
    }

    fn check_sums_zero(gf: &Gf, t1: &LabeledRows, v: &Packets) -> bool {
        t1.iter().all(|row| {
            let mut acc = vec![0u8; v[0].len()];
            for &(c, l) in row {
                gf.axpy(&mut acc, &v[c], l);
            }
            acc.iter().all(|&x| x == 0)
        })
    }

    #[test]
    fn precode_examples() {
        let gf = Gf::new(FieldSpec { m: 1 }).unwrap();
        let t1 = vec![vec![(0, 1), (1, 1)]];
        let p = Precode::new(&gf, &t1, 2);
        assert_eq!(p.a(), 1);
        let v = p.encode(&gf, &vec![vec![1, 0, 1]]).unwrap();
        assert_eq!(v[0], v[1]);
        let zero = p.encode(&gf, &vec![vec![0, 0]]).unwrap();
        assert!(zero.iter().flatten().all(|&x| x == 0));
        assert!(p.encode(&gf, &vec![]).is_err());
    }

    #[test]
    fn precode_random_checks_vanish() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t1 = random_t1(&mut rng, &gf, 12, 4, 4);
            let p = Precode::new(&gf, &t1, 12);
            let inputs: Packets = (0..p.a())
                .map(|_| (0..5).map(|_| gf.random_element(&mut rng)).collect())
                .collect();
            let v = p.encode(&gf, &inputs).unwrap();
            assert!(check_sums_zero(&gf, &t1, &v));
            for (&pos, inp) in p.info_positions().iter().zip(&inputs) {
                assert_eq!(&v[pos], inp);
            }
        }
    }

    #[test]
    fn rank_deficient_precode_is_surfaced() {
        let gf = Gf::new(FieldSpec { m: 1 }).unwrap();
        // two identical rows over GF(2) can never be made independent
        let t1 = vec![vec![(0, 1), (1, 1)], vec![(0, 1), (1, 1)]];
        let p = Precode::new(&gf, &t1, 3);
        assert_eq!(p.rank(), 1);
        assert_eq!(p.a(), 2);
        let mut code = LiftedCode {
            field: FieldSpec { m: 1 },
            m_batch: 2,
            z1: 1,
            z2: 1,
            n_v: 3,
            n_c1: 2,
            t1,
            t2: crate::protograph::BatchRows {
                rows: vec![],
                types: vec![],
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            Precode::full_rank(&mut code, &mut rng, 10),
            Err(Error::RankDeficientPrecode { attempts: 10, rank: 1, rows: 2 })
        ));
    }

    #[test]
    fn outer_encode_examples() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Packets = vec![vec![0; 4]; 5];
        let b = encode_batch(&gf, &[0, 3], 4, &v, &mut rng).unwrap();
        assert!(b.x.iter().flatten().all(|&x| x == 0));
        assert!(encode_batch(&gf, &[], 4, &v, &mut rng).is_err());
        let v: Packets = (0..5).map(|i| vec![i as u8 + 1; 3]).collect();
        let b = encode_batch(&gf, &[2], 4, &v, &mut rng).unwrap();
        for c in 0..4 {
            assert_eq!(b.x[c], vec![gf.mul(3, b.g.get(0, c)); 3]);
        }
    }

    #[test]
    fn outer_encode_is_linear() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v1: Packets = (0..6).map(|_| (0..4).map(|_| gf.random_element(&mut rng)).collect()).collect();
        let v2: Packets = (0..6).map(|_| (0..4).map(|_| gf.random_element(&mut rng)).collect()).collect();
        let sum: Packets = v1
            .iter()
            .zip(&v2)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x ^ y).collect())
            .collect();
        let vars = [0usize, 2, 5];
        let e = |v: &Packets| encode_batch(&gf, &vars, 4, v, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (a, b, c) = (e(&v1), e(&v2), e(&sum));
        for k in 0..4 {
            let s: Vec<u8> = a.x[k].iter().zip(&b.x[k]).map(|(x, y)| x ^ y).collect();
            assert_eq!(c.x[k], s);
        }
    }

    /// Random instance: ground truth, equations and precode rows.
    struct Instance {
        v: Packets,
        batches: Vec<BatchEquation>,
        t1: LabeledRows,
        k: usize,
    }

    fn random_instance(rng: &mut ChaCha8Rng, gf: &Gf, k: usize) -> Instance {
        let m = rng.gen_range(1..=4);
        let checks = rng.gen_range(0..=k / 3);
        let deg = rng.gen_range(1..=k.min(4));
        let t1 = random_t1(rng, gf, k, checks, deg);
        let p = Precode::new(gf, &t1, k);
        let inputs: Packets = (0..p.a()).map(|_| vec![gf.random_element(rng), gf.random_element(rng)]).collect();
        let v = p.encode(gf, &inputs).unwrap();
        let nb = rng.gen_range(0..=2 * k);
        let batches = (0..nb)
            .map(|_| {
                let d = rng.gen_range(1..=k.min(5));
                let mut vars = sample(rng, k, d).into_vec();
                vars.sort_unstable();
                let cb = encode_batch(gf, &vars, m, &v, rng).unwrap();
                let w = rng.gen_range(0..=m);
                let h = GfMatrix::random(gf, m, w, rng);
                BatchEquation::receive(gf, &cb, h)
            })
            .collect();
        Instance { v, batches, t1, k }
    }

    /// Reference BP: sweep all equations until no progress, using only ranks.
    fn oracle_bp_set(gf: &Gf, inst: &Instance) -> Vec<bool> {
        let mut known = vec![false; inst.k];
        let mut groups: Vec<(Vec<usize>, GfMatrix)> = inst
            .batches
            .iter()
            .map(|b| (b.vars.clone(), b.coefficients(gf)))
            .collect();
        for row in &inst.t1 {
            groups.push((
                row.iter().map(|e| e.0).collect(),
                GfMatrix::from_vec(row.len(), 1, row.iter().map(|e| e.1).collect()),
            ));
        }
        loop {
            let mut progress = false;
            for (vars, coef) in &groups {
                let rows: Vec<usize> = (0..vars.len()).filter(|&a| !known[vars[a]]).collect();
                if rows.is_empty() {
                    continue;
                }
                let sub = GfMatrix::from_rows(&rows.iter().map(|&a| coef.row(a).to_vec()).collect::<Vec<_>>());
                if sub.rank(gf) == rows.len() {
                    for &a in &rows {
                        known[vars[a]] = true;
                    }
                    progress = true;
                }
            }
            if !progress {
                return known;
            }
        }
    }

    #[test]
    fn decoders_match_oracles_on_small_instances() {
        let gf = Gf::new(FieldSpec { m: 1 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut ml_successes = 0;
        for _ in 0..1000 {
            let k = rng.gen_range(1..=20);
            let inst = random_instance(&mut rng, &gf, k);
            let bp = bp_decode(&gf, &inst.batches, &inst.t1, k, 2);
            let ml = inactivation_decode(&gf, &inst.batches, &inst.t1, k, 2, None);
            let feasible = ml_feasible(&gf, &inst.batches, &inst.t1, k);
            let oracle = oracle_bp_set(&gf, &inst);
            for v in 0..k {
                assert_eq!(bp.recovered[v].is_some(), oracle[v]);
                for res in [&bp, &ml] {
                    if let Some(p) = &res.recovered[v] {
                        assert_eq!(p, &inst.v[v]);
                    }
                }
            }
            assert_eq!(ml.success, feasible);
            if bp.success {
                assert!(ml.success);
                assert_eq!(ml.inactivated, 0);
            }
            ml_successes += usize::from(ml.success);
        }
        assert!(ml_successes > 50, "too few decodable instances: {ml_successes}");
    }

    #[test]
    fn decoding_invariant_under_batch_order() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let mut inst = random_instance(&mut rng, &gf, 16);
            let a = bp_decode(&gf, &inst.batches, &inst.t1, 16, 2);
            let am = inactivation_decode(&gf, &inst.batches, &inst.t1, 16, 2, None);
            inst.batches.reverse();
            let b = bp_decode(&gf, &inst.batches, &inst.t1, 16, 2);
            let bm = inactivation_decode(&gf, &inst.batches, &inst.t1, 16, 2, None);
            assert_eq!(a.recovered, b.recovered);
            assert_eq!(am.success, bm.success);
        }
    }

    #[test]
    fn decoder_trivial_cases() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let v: Packets = (0..6).map(|i| vec![i as u8 * 7; 3]).collect();
        // full-rank batches of degree <= M covering every VN decode in one pass
        let batches: Vec<BatchEquation> = [[0usize, 1, 2], [3, 4, 5]]
            .iter()
            .map(|vars| {
                let cb = encode_batch(&gf, vars, 4, &v, &mut rng).unwrap();
                BatchEquation::receive(&gf, &cb, GfMatrix::identity(4))
            })
            .collect();
        let res = bp_decode(&gf, &batches, &vec![], 6, 3);
        assert!(res.success);
        assert_eq!(res.recovered.iter().flatten().cloned().collect::<Packets>(), v);
        // rank-zero transfer matrices carry nothing
        let dead: Vec<BatchEquation> = batches
            .iter()
            .map(|b| BatchEquation {
                h: GfMatrix::zeros(4, 0),
                y: vec![],
                ..b.clone()
            })
            .collect();
        let res = inactivation_decode(&gf, &dead, &vec![], 6, 3, None);
        assert!(!res.success);
        assert_eq!(res.recovered_count(), 0);
        assert!(!ml_feasible(&gf, &[], &vec![], 3));
    }

    #[test]
    fn information_deficit_fails() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Packets = (0..8).map(|i| vec![i as u8]).collect();
        // total rank 6 < 8 unknowns
        let batches: Vec<BatchEquation> = [[0usize, 1, 2, 3], [4, 5, 6, 7]]
            .iter()
            .map(|vars| {
                let cb = encode_batch(&gf, vars, 3, &v, &mut rng).unwrap();
                BatchEquation::receive(&gf, &cb, GfMatrix::identity(3))
            })
            .collect();
        assert!(!inactivation_decode(&gf, &batches, &vec![], 8, 1, None).success);
        assert!(!ml_feasible(&gf, &batches, &vec![], 8));
    }

    #[test]
    fn inactivation_cap_is_enforced() {
        let gf = Gf::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v: Packets = (0..4).map(|i| vec![i as u8 + 1]).collect();
        // one dense batch of degree 4 with rank 4 split across two batches of degree 3
        let b1 = encode_batch(&gf, &[0, 1, 2], 2, &v, &mut rng).unwrap();
        let b2 = encode_batch(&gf, &[1, 2, 3], 2, &v, &mut rng).unwrap();
        let batches = vec![
            BatchEquation::receive(&gf, &b1, GfMatrix::identity(2)),
            BatchEquation::receive(&gf, &b2, GfMatrix::identity(2)),
        ];
        let unlimited = inactivation_decode(&gf, &batches, &vec![], 4, 1, None);
        assert!(unlimited.success);
        assert!(unlimited.inactivated >= 1);
        assert_eq!(unlimited.recovered.iter().flatten().cloned().collect::<Packets>(), v);
        let capped = inactivation_decode(&gf, &batches, &vec![], 4, 1, Some(0));
        assert!(!capped.success);
        assert_eq!(default_inactive_cap(250), 32);
    }
}
