//! Protomatrices, design rates, preset constructions and two-step lifting.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::{FieldSpec, Gf};

/// Protomatrix `B = [B1; B2]`: `B1` rows are L-CN types, `B2` rows are B-CN
/// types, columns are VN types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protomatrix {
    n_v: usize,
    b1: Vec<Vec<u32>>,
    b2: Vec<Vec<u32>>,
}

impl Protomatrix {
    pub fn new(n_v: usize, b1: Vec<Vec<u32>>, b2: Vec<Vec<u32>>) -> Result<Self> {
        if n_v == 0 {
            return Err(Error::Protomatrix("no variable node types".into()));
        }
        for (name, part) in [("B1", &b1), ("B2", &b2)] {
            if let Some((i, row)) = part.iter().enumerate().find(|(_, r)| r.len() != n_v) {
                return Err(Error::Protomatrix(format!(
                    "{name} row {i} has {} entries, expected {n_v}",
                    row.len()
                )));
            }
        }
        Ok(Protomatrix { n_v, b1, b2 })
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn n_c1(&self) -> usize {
        self.b1.len()
    }

    pub fn n_c2(&self) -> usize {
        self.b2.len()
    }

    pub fn n_c(&self) -> usize {
        self.b1.len() + self.b2.len()
    }

    pub fn b1(&self) -> &[Vec<u32>] {
        &self.b1
    }

    pub fn b2(&self) -> &[Vec<u32>] {
        &self.b2
    }

    /// Row `i` of the stacked matrix.
    pub fn row(&self, i: usize) -> &[u32] {
        if i < self.b1.len() {
            &self.b1[i]
        } else {
            &self.b2[i - self.b1.len()]
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> u32 {
        self.row(i)[j]
    }

    /// `d_{c_i}`, the row weight of stacked row `i`.
    pub fn row_weight(&self, i: usize) -> u32 {
        self.row(i).iter().sum()
    }

    pub fn col_weight(&self, j: usize) -> u32 {
        (0..self.n_c()).map(|i| self.entry(i, j)).sum()
    }

    pub fn max_entry(&self) -> u32 {
        self.b1
            .iter()
            .chain(&self.b2)
            .flatten()
            .copied()
            .max()
            .unwrap_or(0)
    }

    /// True if some B-CN type has row weight at most `m_batch`, so that BP
    /// can start at full rank.
    pub fn bp_start_ok(&self, m_batch: usize) -> bool {
        self.b2
            .iter()
            .any(|r| (r.iter().sum::<u32>() as usize) <= m_batch)
    }

    pub fn with_b2_rows(&self, extra: &[Vec<u32>]) -> Result<Self> {
        let mut b2 = self.b2.clone();
        b2.extend_from_slice(extra);
        Protomatrix::new(self.n_v, self.b1.clone(), b2)
    }

    pub fn with_b2(&self, b2: Vec<Vec<u32>>) -> Result<Self> {
        Protomatrix::new(self.n_v, self.b1.clone(), b2)
    }

    /// First `rows` B-CN types only.
    pub fn truncate_b2(&self, rows: usize) -> Self {
        Protomatrix {
            n_v: self.n_v,
            b1: self.b1.clone(),
            b2: self.b2[..rows.min(self.b2.len())].to_vec(),
        }
    }

    /// Applies a column permutation and independent row permutations of `B1`
    /// and `B2`.
    pub fn permuted(&self, rows1: &[usize], rows2: &[usize], cols: &[usize]) -> Self {
        let map = |part: &[Vec<u32>], order: &[usize]| -> Vec<Vec<u32>> {
            order
                .iter()
                .map(|&i| cols.iter().map(|&j| part[i][j]).collect())
                .collect()
        };
        Protomatrix {
            n_v: self.n_v,
            b1: map(&self.b1, rows1),
            b2: map(&self.b2, rows2),
        }
    }
}

/// Fractions of lifted B-CN rows removed per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuncturingVector {
    delta: Vec<f64>,
}

impl PuncturingVector {
    pub fn new(delta: Vec<f64>) -> Result<Self> {
        if let Some(d) = delta.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return Err(Error::Puncturing(format!("entry {d} outside [0,1)")));
        }
        Ok(PuncturingVector { delta })
    }

    pub fn zeros(n: usize) -> Self {
        PuncturingVector {
            delta: vec![0.0; n],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.delta
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.delta.iter().sum()
    }

    pub fn concat(&self, other: &PuncturingVector) -> Self {
        let mut delta = self.delta.clone();
        delta.extend_from_slice(&other.delta);
        PuncturingVector { delta }
    }

    pub fn truncate(&self, n: usize) -> Self {
        PuncturingVector {
            delta: self.delta[..n.min(self.delta.len())].to_vec(),
        }
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        PuncturingVector {
            delta: order.iter().map(|&i| self.delta[i]).collect(),
        }
    }
}

fn check_delta(b: &Protomatrix, delta: &PuncturingVector) -> Result<()> {
    if delta.len() != b.n_c2() {
        return Err(Error::Puncturing(format!(
            "length {} does not match {} B-CN types",
            delta.len(),
            b.n_c2()
        )));
    }
    Ok(())
}

/// `(n_v - n_c1) / (n_c2 - sum(delta))`.
pub fn design_rate(b: &Protomatrix, delta: &PuncturingVector) -> Result<f64> {
    check_delta(b, delta)?;
    let denom = b.n_c2() as f64 - delta.sum();
    if denom <= 0.0 {
        return Err(Error::RateUndefined);
    }
    Ok((b.n_v() as f64 - b.n_c1() as f64) / denom)
}

/// Design rate with the surviving-row mass `n_c2 - sum(delta)` rounded to two
/// decimals, the convention used by the published rate tables.
pub fn design_rate_rounded(b: &Protomatrix, delta: &PuncturingVector) -> Result<f64> {
    check_delta(b, delta)?;
    let denom = ((b.n_c2() as f64 - delta.sum()) * 100.0).round() / 100.0;
    if denom <= 0.0 {
        return Err(Error::RateUndefined);
    }
    Ok((b.n_v() as f64 - b.n_c1() as f64) / denom)
}

/// `ceil((1 - delta) * zz)`, robust to products such as `0.12 * 50` landing
/// a hair above an integer.
pub fn surviving_rows(delta: f64, zz: usize) -> usize {
    ((1.0 - delta) * zz as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Rate of the lifted code: `A / (number of surviving batches)`.
pub fn lifted_rate(b: &Protomatrix, delta: &PuncturingVector, zz: usize) -> Result<f64> {
    check_delta(b, delta)?;
    let batches: usize = delta.values().iter().map(|&d| surviving_rows(d, zz)).sum();
    if batches == 0 {
        return Err(Error::RateUndefined);
    }
    Ok(((b.n_v() - b.n_c1()) * zz) as f64 / batches as f64)
}

fn chunk_rows(n_v: usize, l: usize) -> Vec<Vec<u32>> {
    (0..n_v / l)
        .map(|c| (0..n_v).map(|j| u32::from(j / l == c)).collect())
        .collect()
}

/// `B2` made of disjoint all-one `1 x L` chunks.
pub fn preset_l_chunked(b1: Vec<Vec<u32>>, n_v: usize, l: usize) -> Result<Protomatrix> {
    if l == 0 || n_v % l != 0 {
        return Err(Error::Preset(format!("chunk size {l} does not divide n_v={n_v}")));
    }
    Protomatrix::new(n_v, b1, chunk_rows(n_v, l))
}

/// Overlapped chunked code: repetition precode linking the last `n_o`
/// packets of each chunk with the first `n_o` of the next, end-around.
pub fn preset_overlapped(n_v: usize, l: usize, n_o: usize) -> Result<Protomatrix> {
    if l == 0 || n_v % l != 0 {
        return Err(Error::Preset(format!("chunk size {l} does not divide n_v={n_v}")));
    }
    if n_o == 0 || n_o >= l {
        return Err(Error::Preset(format!("overlap {n_o} must lie in 1..{l}")));
    }
    let chunks = n_v / l;
    let mut b1 = Vec::with_capacity(chunks * n_o);
    for c in 0..chunks {
        let next = (c + 1) % chunks;
        for k in 0..n_o {
            let mut row = vec![0u32; n_v];
            row[c * l + l - n_o + k] += 1;
            row[next * l + k] += 1;
            b1.push(row);
        }
    }
    Protomatrix::new(n_v, b1, chunk_rows(n_v, l))
}

/// Systematic precode `B1 = [coef | I]` with `B2 = [0 | chunks of L]`.
pub fn preset_gamma(coef: Vec<Vec<u32>>, l: usize) -> Result<Protomatrix> {
    let n_c1 = coef.len();
    if n_c1 == 0 {
        return Err(Error::Preset("empty coefficient block".into()));
    }
    if l == 0 || n_c1 % l != 0 {
        return Err(Error::Preset(format!("chunk size {l} does not divide n_c1={n_c1}")));
    }
    let info = coef[0].len();
    if coef.iter().any(|r| r.len() != info) {
        return Err(Error::Preset("ragged coefficient block".into()));
    }
    let n_v = info + n_c1;
    let b1 = coef
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n_c1).map(|k| u32::from(k == i)));
            row
        })
        .collect();
    let b2 = chunk_rows(n_c1, l)
        .into_iter()
        .map(|r| {
            let mut row = vec![0u32; info];
            row.extend(r);
            row
        })
        .collect();
    Protomatrix::new(n_v, b1, b2)
}

/// Sparse binary biadjacency: `rows[i]` lists the column indices of row `i`.
pub type Adjacency = Vec<Vec<usize>>;

/// Shift selection rule for one quasi-cyclic lifting step.
enum Shifts<'a, R: Rng + ?Sized> {
    Peg,
    Random(&'a mut R),
}

/// Lifts `base` (multiplicities, `rows x cols`) by `z`: entry `b` becomes the
/// sum of `b` circulant permutations with distinct shifts. Column copy `c` of
/// type `j` is index `j*z + c`; rows likewise.
fn qc_lift<R: Rng + ?Sized>(
    base: &[Vec<u32>],
    cols: usize,
    z: usize,
    mut rule: Shifts<'_, R>,
) -> Adjacency {
    let nrows = base.len();
    let mut row_adj: Adjacency = vec![Vec::new(); nrows * z];
    let mut col_adj: Adjacency = vec![Vec::new(); cols * z];
    let place = |i: usize, j: usize, s: usize, row_adj: &mut Adjacency, col_adj: &mut Adjacency| {
        for c in 0..z {
            let r = i * z + (c + s) % z;
            row_adj[r].push(j * z + c);
            col_adj[j * z + c].push(r);
        }
    };
    for j in 0..cols {
        for (i, row) in base.iter().enumerate() {
            let b = row[j] as usize;
            if b == 0 {
                continue;
            }
            match &mut rule {
                Shifts::Random(rng) => {
                    for s in sample(&mut **rng, z, b).into_iter() {
                        place(i, j, s, &mut row_adj, &mut col_adj);
                    }
                }
                Shifts::Peg => {
                    for _ in 0..b {
                        let dist = bfs_row_distances(&row_adj, &col_adj, j * z);
                        let s = (0..z)
                            .filter(|&r| !col_adj[j * z].contains(&(i * z + r)))
                            .max_by(|&a, &b| {
                                let (ra, rb) = (i * z + a, i * z + b);
                                dist[ra]
                                    .cmp(&dist[rb])
                                    .then(row_adj[rb].len().cmp(&row_adj[ra].len()))
                                    .then(b.cmp(&a))
                            })
                            .expect("lifting factor exceeds entry");
                        place(i, j, s, &mut row_adj, &mut col_adj);
                    }
                }
            }
        }
    }
    for r in row_adj.iter_mut() {
        r.sort_unstable();
    }
    row_adj
}

/// BFS distance (in edges) from a column node to every row node; unreachable
/// rows get `usize::MAX`.
fn bfs_row_distances(row_adj: &Adjacency, col_adj: &Adjacency, start: usize) -> Vec<usize> {
    let mut row_d = vec![usize::MAX; row_adj.len()];
    let mut col_d = vec![usize::MAX; col_adj.len()];
    col_d[start] = 0;
    let mut queue = VecDeque::from([(start, false)]);
    while let Some((v, is_row)) = queue.pop_front() {
        if is_row {
            for &c in &row_adj[v] {
                if col_d[c] == usize::MAX {
                    col_d[c] = row_d[v] + 1;
                    queue.push_back((c, false));
                }
            }
        } else {
            for &r in &col_adj[v] {
                if row_d[r] == usize::MAX {
                    row_d[r] = col_d[v] + 1;
                    queue.push_back((r, true));
                }
            }
        }
    }
    row_d
}

fn to_binary(adj: &Adjacency, cols: usize) -> Vec<Vec<u32>> {
    adj.iter()
        .map(|r| {
            let mut row = vec![0u32; cols];
            for &c in r {
                row[c] = 1;
            }
            row
        })
        .collect()
}

fn check_lift(base: &[Vec<u32>], z1: usize, z2: usize) -> Result<()> {
    let max_entry = base.iter().flatten().copied().max().unwrap_or(0);
    if z1 < max_entry as usize || z1 == 0 || z2 == 0 {
        return Err(Error::LiftingFactor { z1, max_entry });
    }
    Ok(())
}

/// Two-step PEG lift of `base`: distinct-shift circulants of size `z1`, then
/// a quasi-cyclic step of size `z2`.
pub fn peg_lift(base: &[Vec<u32>], n_v: usize, z1: usize, z2: usize) -> Result<Adjacency> {
    check_lift(base, z1, z2)?;
    let step1 = qc_lift::<rand::rngs::ThreadRng>(base, n_v, z1, Shifts::Peg);
    let bin = to_binary(&step1, n_v * z1);
    Ok(qc_lift::<rand::rngs::ThreadRng>(&bin, n_v * z1, z2, Shifts::Peg))
}

/// Two-step lift with uniformly random distinct shifts.
pub fn random_lift<R: Rng + ?Sized>(
    base: &[Vec<u32>],
    n_v: usize,
    z1: usize,
    z2: usize,
    rng: &mut R,
) -> Result<Adjacency> {
    check_lift(base, z1, z2)?;
    let step1 = qc_lift(base, n_v, z1, Shifts::Random(&mut *rng));
    let bin = to_binary(&step1, n_v * z1);
    Ok(qc_lift(&bin, n_v * z1, z2, Shifts::Random(rng)))
}

/// L-CN rows of the lifted precode with nonzero edge labels.
pub type LabeledRows = Vec<Vec<(usize, u8)>>;

/// PEG-lifted `B1` with every edge labeled by a uniform nonzero element.
pub fn peg_lift_precode<R: Rng + ?Sized>(
    b: &Protomatrix,
    z1: usize,
    z2: usize,
    field: FieldSpec,
    rng: &mut R,
) -> Result<LabeledRows> {
    let adj = peg_lift(b.b1(), b.n_v(), z1, z2)?;
    let gf = Gf::new(field)?;
    Ok(adj
        .into_iter()
        .map(|r| r.into_iter().map(|c| (c, gf.random_nonzero(rng))).collect())
        .collect())
}

/// Lifted batch rows with their B-CN type, after puncturing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRows {
    pub rows: Adjacency,
    pub types: Vec<usize>,
}

/// Random two-step lift of `B2`, keeping `ceil((1-delta_i) Z1 Z2)` uniformly
/// chosen rows of each type `i`.
pub fn random_lift_batches<R: Rng + ?Sized>(
    b2: &[Vec<u32>],
    n_v: usize,
    delta: &PuncturingVector,
    z1: usize,
    z2: usize,
    rng: &mut R,
) -> Result<BatchRows> {
    if delta.len() != b2.len() {
        return Err(Error::Puncturing(format!(
            "length {} does not match {} B-CN types",
            delta.len(),
            b2.len()
        )));
    }
    let full = random_lift(b2, n_v, z1, z2, rng)?;
    let zz = z1 * z2;
    let mut out = BatchRows {
        rows: Vec::new(),
        types: Vec::new(),
    };
    for (i, &d) in delta.values().iter().enumerate() {
        let keep = surviving_rows(d, zz);
        let mut picked = sample(rng, zz, keep).into_vec();
        picked.sort_unstable();
        for p in picked {
            out.rows.push(full[i * zz + p].clone());
            out.types.push(i);
        }
    }
    Ok(out)
}

/// Concrete code: labeled lifted precode and punctured batch rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedCode {
    pub field: FieldSpec,
    pub m_batch: usize,
    pub z1: usize,
    pub z2: usize,
    pub n_v: usize,
    pub n_c1: usize,
    pub t1: LabeledRows,
    pub t2: BatchRows,
}

impl LiftedCode {
    pub fn zz(&self) -> usize {
        self.z1 * self.z2
    }

    /// Number of intermediate packets `K`.
    pub fn k(&self) -> usize {
        self.n_v * self.zz()
    }

    /// Number of input packets `A`, assuming a full-rank precode.
    pub fn a(&self) -> usize {
        (self.n_v - self.n_c1) * self.zz()
    }

    pub fn num_batches(&self) -> usize {
        self.t2.rows.len()
    }

    pub fn t1_unlabeled(&self) -> Adjacency {
        self.t1
            .iter()
            .map(|r| r.iter().map(|&(c, _)| c).collect())
            .collect()
    }
}

/// True iff L-CN peeling recovers every VN when the VNs touched by some
/// batch row are known and all others erased.
pub fn bp_decodable(t1: &Adjacency, t2: &Adjacency, k: usize) -> bool {
    let mut erased = vec![true; k];
    for r in t2 {
        for &v in r {
            erased[v] = false;
        }
    }
    peel(t1, erased).iter().all(|e| !e)
}

/// Iterative single-erasure peeling over the check rows `t1`.
pub fn peel(t1: &Adjacency, mut erased: Vec<bool>) -> Vec<bool> {
    let k = erased.len();
    let mut vn_checks: Adjacency = vec![Vec::new(); k];
    for (i, r) in t1.iter().enumerate() {
        for &v in r {
            vn_checks[v].push(i);
        }
    }
    let mut count: Vec<usize> = t1
        .iter()
        .map(|r| r.iter().filter(|&&v| erased[v]).count())
        .collect();
    let mut queue: VecDeque<usize> = (0..t1.len()).filter(|&i| count[i] == 1).collect();
    while let Some(i) = queue.pop_front() {
        if count[i] != 1 {
            continue;
        }
        let Some(&v) = t1[i].iter().find(|&&v| erased[v]) else {
            continue;
        };
        erased[v] = false;
        for &c in &vn_checks[v] {
            count[c] -= 1;
            if count[c] == 1 {
                queue.push_back(c);
            }
        }
    }
    erased
}

/// Girth (shortest cycle length) of the bipartite graph with check rows
/// `rows` over `k` variable nodes; `None` if acyclic.
pub fn girth(rows: &Adjacency, k: usize) -> Option<usize> {
    let n_r = rows.len();
    // nodes 0..k are VNs, k..k+n_r are checks
    let mut adj: Adjacency = vec![Vec::new(); k + n_r];
    for (i, r) in rows.iter().enumerate() {
        for &v in r {
            adj[v].push(k + i);
            adj[k + i].push(v);
        }
    }
    let mut best = usize::MAX;
    let mut dist = vec![usize::MAX; k + n_r];
    let mut parent = vec![usize::MAX; k + n_r];
    for src in 0..k {
        if adj[src].is_empty() {
            continue;
        }
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[src] = 0;
        parent[src] = usize::MAX;
        let mut queue = VecDeque::from([src]);
        'bfs: while let Some(u) = queue.pop_front() {
            if 2 * dist[u] + 1 >= best {
                break;
            }
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    parent[w] = u;
                    queue.push_back(w);
                } else if parent[u] != w {
                    best = best.min(dist[u] + dist[w] + 1);
                    if best <= 4 {
                        break 'bfs;
                    }
                }
            }
        }
    }
    (best != usize::MAX).then_some(best)
}

/// LiftedCode for `B` with precode PEG-lifted once and batches randomly
/// lifted and punctured once.
pub fn lift_code<R: Rng + ?Sized>(
    b: &Protomatrix,
    delta: &PuncturingVector,
    z1: usize,
    z2: usize,
    m_batch: usize,
    field: FieldSpec,
    rng: &mut R,
) -> Result<LiftedCode> {
    check_delta(b, delta)?;
    let t1 = peg_lift_precode(b, z1, z2, field, rng)?;
    let t2 = random_lift_batches(b.b2(), b.n_v(), delta, z1, z2, rng)?;
    Ok(LiftedCode {
        field,
        m_batch,
        z1,
        z2,
        n_v: b.n_v(),
        n_c1: b.n_c1(),
        t1,
        t2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn b1_example() -> Vec<Vec<u32>> {
        vec![
            vec![1, 3, 1, 1, 1, 1, 1, 0],
            vec![1, 3, 2, 0, 1, 0, 0, 1],
            vec![0, 1, 2, 1, 1, 1, 1, 1],
        ]
    }

    fn core_example() -> (Protomatrix, PuncturingVector) {
        let bc = vec![
            vec![0, 1, 1, 1, 1, 1, 0, 2],
            vec![2, 0, 3, 0, 2, 0, 2, 2],
            vec![1, 3, 3, 0, 1, 1, 1, 0],
            vec![1, 3, 0, 2, 0, 1, 0, 3],
            vec![3, 1, 3, 3, 2, 4, 0, 0],
            vec![4, 1, 0, 4, 0, 3, 2, 3],
        ];
        let d = vec![0.7292, 0.8474, 0.8474, 0.8339, 0.9065, 0.9953];
        (
            Protomatrix::new(8, b1_example(), bc).unwrap(),
            PuncturingVector::new(d).unwrap(),
        )
    }

    #[test]
    fn validation() {
        assert!(Protomatrix::new(3, vec![vec![1, 2]], vec![]).is_err());
        assert!(Protomatrix::new(0, vec![], vec![]).is_err());
        assert!(PuncturingVector::new(vec![1.0]).is_err());
        assert!(PuncturingVector::new(vec![-0.1]).is_err());
        let (b, _) = core_example();
        assert!(design_rate(&b, &PuncturingVector::zeros(2)).is_err());
    }

    #[test]
    fn design_rate_examples() {
        let b = Protomatrix::new(8, vec![vec![1; 8]; 2], vec![vec![1; 8]; 2]).unwrap();
        assert_eq!(design_rate(&b, &PuncturingVector::zeros(2)).unwrap(), 3.0);
        let (b, d) = core_example();
        let r = design_rate(&b, &d).unwrap();
        assert!((r - 5.9524).abs() < 0.01, "{r}");
        let rr = design_rate_rounded(&b, &d).unwrap();
        assert!((rr - 5.9524).abs() < 5e-5, "{rr}");
    }

    #[test]
    fn rate_undefined() {
        let b = Protomatrix::new(2, vec![], vec![]).unwrap();
        assert!(matches!(
            design_rate(&b, &PuncturingVector::zeros(0)),
            Err(Error::RateUndefined)
        ));
    }

    #[test]
    fn rate_invariant_under_permutation() {
        let (b, d) = core_example();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut cols: Vec<usize> = (0..8).collect();
            let mut r1: Vec<usize> = (0..3).collect();
            let mut r2: Vec<usize> = (0..6).collect();
            use rand::seq::SliceRandom;
            cols.shuffle(&mut rng);
            r1.shuffle(&mut rng);
            r2.shuffle(&mut rng);
            let p = b.permuted(&r1, &r2, &cols);
            let pd = d.permuted(&r2);
            assert!((design_rate(&p, &pd).unwrap() - design_rate(&b, &d).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn surviving_rows_is_robust() {
        assert_eq!(surviving_rows(0.88, 50), 6);
        assert_eq!(surviving_rows(0.0, 50), 50);
        assert_eq!(surviving_rows(0.9953, 50), 1);
        assert_eq!(surviving_rows(0.7292, 50), 14);
    }

    #[test]
    fn l_chunked() {
        let b = preset_l_chunked(vec![], 12, 4).unwrap();
        assert_eq!(b.n_c2(), 3);
        assert_eq!(b.b2()[0], vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert!((0..12).all(|j| b.col_weight(j) == 1));
        let single = preset_l_chunked(vec![], 5, 5).unwrap();
        assert_eq!(single.b2(), &[vec![1; 5]]);
        assert!(preset_l_chunked(vec![], 10, 4).is_err());
    }

    #[test]
    fn overlapped() {
        let b = preset_overlapped(12, 4, 2).unwrap();
        assert_eq!(b.n_c1(), 6);
        let s = |r: &[u32]| r.iter().map(|v| v.to_string()).collect::<String>();
        assert_eq!(s(&b.b1()[0]), "001010000000");
        assert_eq!(s(&b.b1()[1]), "000101000000");
        assert_eq!(s(&b.b1()[2]), "000000101000");
        assert_eq!(s(&b.b1()[4]), "100000000010");
        assert_eq!(s(&b.b1()[5]), "010000000001");
        assert!((0..6).all(|i| b.row_weight(i) == 2));
        assert!(preset_overlapped(12, 4, 4).is_err());
        assert!(preset_overlapped(12, 4, 0).is_err());
        assert!(preset_overlapped(10, 4, 2).is_err());
    }

    #[test]
    fn gamma() {
        let coef = vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 1]];
        let b = preset_gamma(coef, 2).unwrap();
        assert_eq!(b.n_v(), 7);
        assert_eq!(b.n_c2(), 2);
        for i in 0..4 {
            for k in 0..4 {
                assert_eq!(b.b1()[i][3 + k], u32::from(i == k));
            }
        }
        assert!(b.b2().iter().all(|r| r[..3].iter().all(|&v| v == 0)));
        assert_eq!(b.b2()[0][3..], [1, 1, 0, 0]);
        assert!(preset_gamma(vec![vec![1, 1]; 3], 2).is_err());
    }

    fn col_weights(adj: &Adjacency, k: usize) -> Vec<usize> {
        let mut w = vec![0; k];
        for r in adj {
            for &c in r {
                w[c] += 1;
            }
        }
        w
    }

    fn no_parallel(adj: &Adjacency) -> bool {
        adj.iter().all(|r| r.windows(2).all(|w| w[0] < w[1]))
    }

    #[test]
    fn peg_lift_preserves_degrees() {
        let b1 = b1_example();
        let (z1, z2) = (5, 10);
        let adj = peg_lift(&b1, 8, z1, z2).unwrap();
        let zz = z1 * z2;
        assert_eq!(adj.len(), 3 * zz);
        assert!(no_parallel(&adj));
        let w = col_weights(&adj, 8 * zz);
        for j in 0..8 {
            let expect: u32 = b1.iter().map(|r| r[j]).sum();
            assert!(w[j * zz..(j + 1) * zz].iter().all(|&x| x == expect as usize));
        }
        for (i, r) in adj.iter().enumerate() {
            let t = i / zz;
            assert_eq!(r.len() as u32, b1[t].iter().sum::<u32>());
            for &c in r {
                // edge type matches the protograph
                assert!(b1[t][c / zz] > 0);
            }
        }
    }

    #[test]
    fn zero_row_lifts_to_zero_rows() {
        let b1 = vec![vec![0, 0, 0], vec![1, 2, 1]];
        let adj = peg_lift(&b1, 3, 2, 3).unwrap();
        assert!(adj[..6].iter().all(|r| r.is_empty()));
        assert!(matches!(
            peg_lift(&b1, 3, 1, 3),
            Err(Error::LiftingFactor { z1: 1, max_entry: 2 })
        ));
    }

    #[test]
    fn peg_girth_not_worse_than_random() {
        let b1 = b1_example();
        let peg = peg_lift(&b1, 8, 5, 10).unwrap();
        let g_peg = girth(&peg, 400).unwrap();
        let randoms: Vec<usize> = (0..20)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                girth(&random_lift(&b1, 8, 5, 10, &mut rng).unwrap(), 400).unwrap_or(usize::MAX)
            })
            .collect();
        assert!(randoms.iter().all(|&g| g_peg >= g), "{g_peg} vs {randoms:?}");
    }

    #[test]
    fn girth_oracle_small_graphs() {
        // a 4-cycle: two checks sharing two VNs
        assert_eq!(girth(&vec![vec![0, 1], vec![0, 1]], 2), Some(4));
        // a 6-cycle
        assert_eq!(girth(&vec![vec![0, 1], vec![1, 2], vec![0, 2]], 3), Some(6));
        // a tree
        assert_eq!(girth(&vec![vec![0, 1, 2], vec![2, 3]], 4), None);
    }

    #[test]
    fn random_lift_census_and_puncturing() {
        let (b, d) = core_example();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (z1, z2) = (5, 10);
        let zz = 50;
        let full = random_lift(b.b2(), 8, z1, z2, &mut rng).unwrap();
        assert!(no_parallel(&full));
        for (i, row) in b.b2().iter().enumerate() {
            for (j, &bij) in row.iter().enumerate() {
                let count: usize = full[i * zz..(i + 1) * zz]
                    .iter()
                    .map(|r| r.iter().filter(|&&c| c / zz == j).count())
                    .sum();
                assert_eq!(count, zz * bij as usize);
            }
        }
        let rows = random_lift_batches(b.b2(), 8, &d, z1, z2, &mut rng).unwrap();
        assert_eq!(rows.rows.len(), 45);
        for (r, &t) in rows.rows.iter().zip(&rows.types) {
            assert_eq!(r.len() as u32, b.row_weight(b.n_c1() + t));
        }
        let none = random_lift_batches(b.b2(), 8, &PuncturingVector::zeros(6), z1, z2, &mut rng)
            .unwrap();
        assert_eq!(none.rows.len(), 300);
    }

    #[test]
    fn bp_decodable_examples() {
        let t1 = vec![vec![0, 1, 2], vec![1, 2, 3]];
        assert!(bp_decodable(&t1, &vec![vec![0, 1, 2, 3]], 4));
        // VN 0 is recoverable from the first check
        assert!(bp_decodable(&t1, &vec![vec![1, 2, 3]], 4));
        // VNs 1 and 2 form a stopping set
        let t1 = vec![vec![0, 1, 2], vec![1, 2, 3]];
        assert!(!bp_decodable(&t1, &vec![vec![0, 3]], 4));
    }

    fn brute_peel(t1: &Adjacency, mut erased: Vec<bool>) -> Vec<bool> {
        loop {
            let mut changed = false;
            for r in t1 {
                let e: Vec<usize> = r.iter().copied().filter(|&v| erased[v]).collect();
                if e.len() == 1 {
                    erased[e[0]] = false;
                    changed = true;
                }
            }
            if !changed {
                return erased;
            }
        }
    }

    #[test]
    fn peeling_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let k = rng.gen_range(2..=30);
            let nr = rng.gen_range(1..=20);
            let t1: Adjacency = (0..nr)
                .map(|_| {
                    let d = rng.gen_range(1..=k.min(5));
                    let mut r = sample(&mut rng, k, d).into_vec();
                    r.sort_unstable();
                    r
                })
                .collect();
            let erased: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.5)).collect();
            assert_eq!(peel(&t1, erased.clone()), brute_peel(&t1, erased));
        }
    }

    #[test]
    fn lift_code_sizes() {
        let (b, d) = core_example();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let code = lift_code(&b, &d, 5, 10, 8, FieldSpec { m: 8 }, &mut rng).unwrap();
        assert_eq!(code.k(), 400);
        assert_eq!(code.a(), 250);
        assert_eq!(code.t1.len(), 150);
        assert!(code.t1.iter().flatten().all(|&(_, l)| l != 0));
    }
}
