//! Rank distributions of transfer matrices and the line-network recursion.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::{zeta, FieldSpec};

/// Slack used when comparing tail sums of two distributions.
const DOMINANCE_SLACK: f64 = 1e-12;

/// Upper bound on the number of grid points `enumerate_family` will visit.
pub const MAX_GRID_POINTS: u128 = 10_000_000;

/// Distribution `(h_0, ..., h_M)` of the rank of a transfer matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDistribution {
    h: Vec<f64>,
}

impl RankDistribution {
    /// Validates the vector and renormalizes away rounding residue.
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::RankDistribution("empty vector".into()));
        }
        if let Some(v) = h.iter().find(|v| !(-1e-12..=1.0 + 1e-12).contains(*v)) {
            return Err(Error::RankDistribution(format!("entry {v} outside [0,1]")));
        }
        let sum: f64 = h.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::RankDistribution(format!("sums to {sum}")));
        }
        Ok(Self::normalized(h))
    }

    fn normalized(mut h: Vec<f64>) -> Self {
        for v in h.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        let sum: f64 = h.iter().sum();
        if sum > 0.0 {
            for v in h.iter_mut() {
                *v /= sum;
            }
        }
        RankDistribution { h }
    }

    /// Point mass at rank `r`.
    pub fn point(m_batch: usize, r: usize) -> Self {
        let mut h = vec![0.0; m_batch + 1];
        h[r] = 1.0;
        RankDistribution { h }
    }

    pub fn batch_size(&self) -> usize {
        self.h.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.h
    }

    pub fn get(&self, r: usize) -> f64 {
        self.h[r]
    }

    /// `Pr{rank >= k}`.
    pub fn tail(&self, k: usize) -> f64 {
        self.h[k.min(self.h.len())..].iter().sum()
    }

    /// Expected rank, `sum_r r h_r`.
    pub fn capacity(&self) -> f64 {
        self.h.iter().enumerate().map(|(r, p)| r as f64 * p).sum()
    }

    /// `self ⪯ other`: every tail sum of `self` is at most that of `other`.
    pub fn preceq(&self, other: &RankDistribution) -> bool {
        assert_eq!(self.h.len(), other.h.len(), "batch sizes differ");
        let mut ta = 0.0;
        let mut tb = 0.0;
        for k in (0..self.h.len()).rev() {
            ta += self.h[k];
            tb += other.h[k];
            if ta > tb + DOMINANCE_SLACK {
                return false;
            }
        }
        true
    }
}

/// `a ⪯ b`, i.e. `a` is a degraded version of `b`.
pub fn dominates(a: &RankDistribution, b: &RankDistribution) -> bool {
    a.preceq(b)
}

pub fn capacity(h: &RankDistribution) -> f64 {
    h.capacity()
}

/// Line network with RLNC recoding at every intermediate node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineNetworkSpec {
    pub eps: Vec<f64>,
    pub m_batch: usize,
    pub field: FieldSpec,
}

impl LineNetworkSpec {
    pub fn new(eps: Vec<f64>, m_batch: usize, field: FieldSpec) -> Result<Self> {
        if eps.is_empty() {
            return Err(Error::Plan("line network needs at least one hop".into()));
        }
        if let Some(e) = eps.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::Plan(format!("erasure probability {e} outside [0,1]")));
        }
        if m_batch == 0 {
            return Err(Error::Plan("batch size must be positive".into()));
        }
        Ok(LineNetworkSpec {
            eps,
            m_batch,
            field,
        })
    }

    pub fn homogeneous(hops: usize, eps: f64, m_batch: usize, field: FieldSpec) -> Result<Self> {
        Self::new(vec![eps; hops], m_batch, field)
    }

    pub fn hops(&self) -> usize {
        self.eps.len()
    }

    pub fn with_eps(&self, eps: Vec<f64>) -> Self {
        LineNetworkSpec {
            eps,
            m_batch: self.m_batch,
            field: self.field,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Binomial pmf `C(n,k) p^k (1-p)^(n-k)` for `k = 0..=n`.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    (0..=n)
        .map(|k| binomial(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32))
        .collect()
}

/// Rank distribution after a single erasure hop: `Binomial(M, 1 - eps)`.
pub fn single_hop_dist(eps: f64, m_batch: usize) -> RankDistribution {
    RankDistribution::normalized(binomial_pmf(m_batch, 1.0 - eps))
}

/// Precomputed coefficients of the hop recursion for fixed `(M, q)`.
///
/// `coef[r][s][j] = zeta_r^s zeta_r^j / (zeta_r^r q^((s-r)(j-r)))` is the
/// probability that `H T E` has rank `r` given `rk(H) = s` and `rk(E) = j`.
#[derive(Debug, Clone)]
pub struct LineRecursion {
    m_batch: usize,
    q: usize,
    coef: Vec<f64>,
}

impl LineRecursion {
    pub fn new(m_batch: usize, field: FieldSpec) -> Self {
        let q = field.q();
        let n = m_batch + 1;
        let mut coef = vec![0.0; n * n * n];
        let qf = q as f64;
        for r in 0..n {
            let zrr = zeta(r, r, q);
            for s in r..n {
                let zrs = zeta(r, s, q);
                for j in r..n {
                    let zrj = zeta(r, j, q);
                    let exponent = ((s - r) * (j - r)) as f64;
                    coef[(r * n + s) * n + j] = zrs * zrj / (zrr * qf.powf(exponent));
                }
            }
        }
        LineRecursion { m_batch, q, coef }
    }

    pub fn batch_size(&self) -> usize {
        self.m_batch
    }

    pub fn field_order(&self) -> usize {
        self.q
    }

    /// Unnormalized output of one recoding hop.
    pub fn step_raw(&self, prev: &RankDistribution, eps: f64) -> Vec<f64> {
        let n = self.m_batch + 1;
        assert_eq!(prev.h.len(), n, "batch size mismatch");
        let e = binomial_pmf(self.m_batch, 1.0 - eps);
        let mut out = vec![0.0; n];
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for s in r..n {
                let hs = prev.h[s];
                if hs == 0.0 {
                    continue;
                }
                let base = (r * n + s) * n;
                let inner: f64 = (r..n).map(|j| e[j] * self.coef[base + j]).sum();
                acc += hs * inner;
            }
            *o = acc;
        }
        out
    }

    pub fn step(&self, prev: &RankDistribution, eps: f64) -> RankDistribution {
        RankDistribution::normalized(self.step_raw(prev, eps))
    }

    pub fn distribution(&self, eps: &[f64]) -> RankDistribution {
        let mut h = single_hop_dist(eps[0], self.m_batch);
        for &e in &eps[1..] {
            h = self.step(&h, e);
        }
        h
    }
}

/// One recoding hop `H -> H T E` applied to the rank distribution `h_prev`.
pub fn line_step(h_prev: &RankDistribution, eps: f64, field: FieldSpec) -> RankDistribution {
    LineRecursion::new(h_prev.batch_size(), field).step(h_prev, eps)
}

/// End-to-end rank distribution of a line network.
pub fn line_network_dist(spec: &LineNetworkSpec) -> RankDistribution {
    LineRecursion::new(spec.m_batch, spec.field).distribution(&spec.eps)
}

/// Memo of line-network distributions keyed by `(eps, M, q)`.
#[derive(Debug, Default)]
pub struct RankDistCache {
    map: Mutex<HashMap<(Vec<u64>, usize, usize), RankDistribution>>,
    recursions: Mutex<HashMap<(usize, usize), LineRecursion>>,
}

impl RankDistCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, spec: &LineNetworkSpec) -> RankDistribution {
        let q = spec.field.q();
        let key = (
            spec.eps.iter().map(|e| e.to_bits()).collect::<Vec<_>>(),
            spec.m_batch,
            q,
        );
        if let Some(h) = self.map.lock().unwrap().get(&key) {
            return h.clone();
        }
        let rec = self
            .recursions
            .lock()
            .unwrap()
            .entry((spec.m_batch, q))
            .or_insert_with(|| LineRecursion::new(spec.m_batch, spec.field))
            .clone();
        let h = rec.distribution(&spec.eps);
        self.map.lock().unwrap().insert(key, h.clone());
        h
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Which erasure vectors `enumerate_family` visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridMode {
    /// Full Cartesian grid over all hops.
    Heterogeneous,
    /// Equal erasure probability on every hop.
    Homogeneous,
}

/// Bucket index for capacity `c`: round to nearest, ties to the lower bucket.
pub fn bucket_index(c: f64, delta2: f64) -> i64 {
    (c / delta2 - 0.5).ceil() as i64
}

/// Finite stand-in for the set of achievable rank distributions, grouped by
/// capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct DistFamily {
    pub m_batch: usize,
    pub q: usize,
    pub hops: usize,
    pub delta1: f64,
    pub delta2: f64,
    eps: Vec<f64>,
    h: Vec<f64>,
    capacity: Vec<f64>,
    buckets: BTreeMap<i64, Vec<u32>>,
}

/// Borrowed view of one family member.
#[derive(Debug, Clone, Copy)]
pub struct FamilyEntry<'a> {
    pub eps: &'a [f64],
    pub h: &'a [f64],
    pub capacity: f64,
}

impl FamilyEntry<'_> {
    pub fn distribution(&self) -> RankDistribution {
        RankDistribution {
            h: self.h.to_vec(),
        }
    }
}

impl DistFamily {
    pub fn empty(m_batch: usize, q: usize, hops: usize, delta1: f64, delta2: f64) -> Self {
        DistFamily {
            m_batch,
            q,
            hops,
            delta1,
            delta2,
            eps: Vec::new(),
            h: Vec::new(),
            capacity: Vec::new(),
            buckets: BTreeMap::new(),
        }
    }

    /// Adds `h` under the capacity bucket it rounds to.
    pub fn push(&mut self, eps: &[f64], h: &RankDistribution) {
        assert_eq!(eps.len(), self.hops, "eps length mismatch");
        assert_eq!(h.batch_size(), self.m_batch, "batch size mismatch");
        let idx = self.capacity.len() as u32;
        let c = h.capacity();
        self.eps.extend_from_slice(eps);
        self.h.extend_from_slice(&h.h);
        self.capacity.push(c);
        self.buckets
            .entry(bucket_index(c, self.delta2))
            .or_default()
            .push(idx);
    }

    pub fn len(&self) -> usize {
        self.capacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacity.is_empty()
    }

    pub fn entry(&self, idx: usize) -> FamilyEntry<'_> {
        let w = self.m_batch + 1;
        FamilyEntry {
            eps: &self.eps[idx * self.hops..(idx + 1) * self.hops],
            h: &self.h[idx * w..(idx + 1) * w],
            capacity: self.capacity[idx],
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = FamilyEntry<'_>> {
        (0..self.len()).map(|i| self.entry(i))
    }

    /// Sorted bucket indices; the bucket key is `index * delta2`.
    pub fn bucket_indices(&self) -> Vec<i64> {
        self.buckets.keys().copied().collect()
    }

    pub fn bucket_key(&self, index: i64) -> f64 {
        index as f64 * self.delta2
    }

    pub fn bucket(&self, index: i64) -> impl Iterator<Item = FamilyEntry<'_>> {
        self.buckets
            .get(&index)
            .into_iter()
            .flatten()
            .map(|&i| self.entry(i as usize))
    }

    pub fn bucket_len(&self, index: i64) -> usize {
        self.buckets.get(&index).map_or(0, Vec::len)
    }

    /// Structured text export: one header line, then one line per member.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "M={} q={} E={} delta1={} delta2={}",
            self.m_batch, self.q, self.hops, self.delta1, self.delta2
        )
        .unwrap();
        for e in self.entries() {
            let join = |v: &[f64]| {
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            writeln!(s, "{} | {} | {}", join(e.eps), join(e.h), e.capacity).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let perr = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
        let mut fields: HashMap<&str, &str> = HashMap::new();
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| perr(hline, format!("malformed header token `{tok}`")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| perr(hline, format!("header missing `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|e| perr(hline, format!("header `{k}`: {e}")))
        };
        let m_batch = num("M")? as usize;
        let q = num("q")? as usize;
        let hops = num("E")? as usize;
        let mut fam = DistFamily::empty(m_batch, q, hops, num("delta1")?, num("delta2")?);
        for (ln, line) in lines {
            let parts: Vec<&str> = line.split('|').collect();
            if parts.len() != 3 {
                return Err(perr(ln, "expected `eps | h | capacity`".into()));
            }
            let parse = |s: &str| -> Result<Vec<f64>> {
                s.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| perr(ln, format!("`{t}`: {e}"))))
                    .collect()
            };
            let eps = parse(parts[0])?;
            let h = parse(parts[1])?;
            if eps.len() != hops || h.len() != m_batch + 1 {
                return Err(perr(ln, "vector length does not match header".into()));
            }
            let h = RankDistribution::new(h).map_err(|e| perr(ln, e.to_string()))?;
            fam.push(&eps, &h);
        }
        Ok(fam)
    }
}

fn grid_values(delta1: f64) -> Vec<f64> {
    let steps = (1.0 / delta1 + 1e-9).floor() as usize;
    (0..=steps).map(|k| (k as f64 * delta1).min(1.0)).collect()
}

/// Rank distributions of every erasure vector on the `delta1` grid, bucketed
/// by capacity rounded to `delta2`.
pub fn enumerate_family(
    template: &LineNetworkSpec,
    delta1: f64,
    delta2: f64,
    mode: GridMode,
) -> Result<DistFamily> {
    if !(delta1 > 0.0 && delta2 > 0.0) {
        return Err(Error::Plan("grid steps must be positive".into()));
    }
    let grid = grid_values(delta1);
    let hops = template.hops();
    let points = match mode {
        GridMode::Homogeneous => grid.len() as u128,
        GridMode::Heterogeneous => (grid.len() as u128)
            .checked_pow(hops as u32)
            .unwrap_or(u128::MAX),
    };
    if points > MAX_GRID_POINTS {
        return Err(Error::GridTooLarge(points));
    }
    let rec = LineRecursion::new(template.m_batch, template.field);
    let mut fam = DistFamily::empty(template.m_batch, template.field.q(), hops, delta1, delta2);
    match mode {
        GridMode::Homogeneous => {
            for &e in &grid {
                let eps = vec![e; hops];
                fam.push(&eps, &rec.distribution(&eps));
            }
        }
        GridMode::Heterogeneous => {
            // expand hop by hop so each prefix is computed once
            let mut level: Vec<(Vec<f64>, RankDistribution)> = grid
                .iter()
                .map(|&e| (vec![e], single_hop_dist(e, template.m_batch)))
                .collect();
            for _ in 1..hops {
                level = level
                    .par_iter()
                    .flat_map_iter(|(eps, h)| {
                        grid.iter().map(|&e| {
                            let mut next = eps.clone();
                            next.push(e);
                            (next, rec.step(h, e))
                        })
                    })
                    .collect();
            }
            for (eps, h) in &level {
                fam.push(eps, h);
            }
        }
    }
    Ok(fam)
}

/// Kahan-compensated sum.
fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// `Pr{sum of ranks < a}` for `n_max`-fold convolutions, reported at every
/// requested batch count.
pub fn ml_bound_curve(h: &RankDistribution, a: usize, n_values: &[usize]) -> Vec<f64> {
    let n_max = n_values.iter().copied().max().unwrap_or(0);
    let mut at = vec![f64::NAN; n_max + 1];
    if a == 0 {
        return n_values.iter().map(|_| 0.0).collect();
    }
    // dist[s] = Pr{sum = s} for s < a; mass at or above a is dropped
    let mut dist = vec![0.0; a];
    dist[0] = 1.0;
    at[0] = 1.0;
    let probs = h.probs();
    for n in 1..=n_max {
        let mut next = vec![0.0; a];
        for (s, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (r, &hr) in probs.iter().enumerate() {
                if s + r >= a {
                    break;
                }
                next[s + r] += p * hr;
            }
        }
        dist = next;
        at[n] = kahan_sum(dist.iter().copied()).min(1.0);
    }
    n_values.iter().map(|&n| at[n]).collect()
}

/// Lower bound on the error probability of any decoder with `n` batches and
/// `a` input packets.
pub fn ml_lower_bound(h: &RankDistribution, n: usize, a: usize) -> f64 {
    ml_bound_curve(h, a, &[n])[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const GF256: FieldSpec = FieldSpec { m: 8 };

    fn random_dist(rng: &mut impl Rng, m: usize) -> RankDistribution {
        let w: Vec<f64> = (0..=m).map(|_| rng.gen::<f64>().powi(3)).collect();
        let s: f64 = w.iter().sum();
        RankDistribution::new(w.into_iter().map(|x| x / s).collect()).unwrap()
    }

    #[test]
    fn single_hop_examples() {
        let h = single_hop_dist(0.0, 5);
        assert_eq!(h.probs(), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let h = single_hop_dist(0.5, 2);
        assert_eq!(h.probs(), &[0.25, 0.5, 0.25]);
        for eps in [0.1, 0.37, 0.9] {
            let h = single_hop_dist(eps, 16);
            assert!((h.capacity() - 16.0 * (1.0 - eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_distribution_validation() {
        assert!(RankDistribution::new(vec![]).is_err());
        assert!(RankDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(RankDistribution::new(vec![-0.5, 1.5]).is_err());
        assert!(RankDistribution::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn line_step_zero_in_zero_out() {
        let zero = RankDistribution::point(8, 0);
        let out = line_step(&zero, 0.3, GF256);
        assert!((out.get(0) - 1.0).abs() < 1e-15);
        let any = single_hop_dist(0.2, 8);
        let out = line_step(&any, 1.0, GF256);
        assert!((out.get(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn line_step_preserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in [1usize, 4, 8, 16] {
            let rec = LineRecursion::new(m, GF256);
            for _ in 0..50 {
                let h = random_dist(&mut rng, m);
                let eps = rng.gen::<f64>();
                let raw = rec.step_raw(&h, eps);
                let mass: f64 = raw.iter().sum();
                assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
                let out = RankDistribution::new(raw).unwrap();
                assert!(out.capacity() <= m as f64 * (1.0 - eps) + 1e-9);
            }
        }
        let gf2 = FieldSpec { m: 1 };
        let rec = LineRecursion::new(6, gf2);
        let raw = rec.step_raw(&single_hop_dist(0.1, 6), 0.2);
        assert!((raw.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn line_network_single_hop_is_binomial() {
        let spec = LineNetworkSpec::new(vec![0.3], 8, GF256).unwrap();
        assert_eq!(line_network_dist(&spec), single_hop_dist(0.3, 8));
    }

    #[test]
    fn two_hop_capacity_below_table_value() {
        // eps* = 0.1904 gives C* = 12.0822, so eps = 0.2 must give less.
        let at = |e: f64| {
            line_network_dist(&LineNetworkSpec::homogeneous(2, e, 16, GF256).unwrap()).capacity()
        };
        let c = at(0.2);
        assert!(c < 12.0822, "{c}");
        assert!(c > 11.5, "{c}");
        assert!((at(0.1904) - 12.0822).abs() < 0.01, "{}", at(0.1904));
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(RankDistribution::point(8, 8).capacity(), 8.0);
        let h = RankDistribution::new(vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(h.capacity(), 1.0);
    }

    #[test]
    fn dominance_examples_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let zero = RankDistribution::point(6, 0);
        for _ in 0..200 {
            let a = random_dist(&mut rng, 6);
            let b = random_dist(&mut rng, 6);
            let c = random_dist(&mut rng, 6);
            assert!(dominates(&a, &a));
            assert!(dominates(&zero, &a));
            if dominates(&a, &b) && dominates(&b, &a) {
                assert!(a.probs().iter().zip(b.probs()).all(|(x, y)| (x - y).abs() < 1e-9));
            }
            if dominates(&a, &b) && dominates(&b, &c) {
                assert!(dominates(&a, &c));
            }
            if dominates(&a, &b) {
                assert!(a.capacity() <= b.capacity() + 1e-9);
            }
        }
    }

    #[test]
    fn raising_any_hop_erasure_degrades() {
        let rec = LineRecursion::new(8, GF256);
        let grid = [0.0, 0.15, 0.3, 0.6, 0.9];
        for &e1 in &grid {
            for &e2 in &grid {
                for &e3 in &grid {
                    let base = rec.distribution(&[e1, e2, e3]);
                    for hop in 0..3 {
                        let mut eps = [e1, e2, e3];
                        eps[hop] = (eps[hop] + 0.1).min(1.0);
                        let worse = rec.distribution(&eps);
                        assert!(dominates(&worse, &base), "{eps:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn enumerate_family_grid_counts() {
        let t = LineNetworkSpec::new(vec![0.0], 4, GF256).unwrap();
        let fam = enumerate_family(&t, 0.5, 0.04, GridMode::Heterogeneous).unwrap();
        assert_eq!(fam.len(), 3);
        let t3 = LineNetworkSpec::new(vec![0.0; 3], 4, GF256).unwrap();
        let fam = enumerate_family(&t3, 0.25, 0.04, GridMode::Heterogeneous).unwrap();
        assert_eq!(fam.len(), 125);
        for k in fam.bucket_indices() {
            let key = fam.bucket_key(k);
            assert!((0.0..=4.0 + 1e-9).contains(&key));
            for e in fam.bucket(k) {
                assert!((e.capacity - key).abs() <= fam.delta2 / 2.0 + 1e-12);
            }
        }
        let hom = enumerate_family(&t3, 0.01, 0.04, GridMode::Homogeneous).unwrap();
        assert_eq!(hom.len(), 101);
        let total: usize = hom.bucket_indices().iter().map(|&k| hom.bucket_len(k)).sum();
        assert_eq!(total, 101);
    }

    #[test]
    fn enumerate_family_guard() {
        let t = LineNetworkSpec::new(vec![0.0; 5], 4, GF256).unwrap();
        assert!(matches!(
            enumerate_family(&t, 0.01, 0.04, GridMode::Heterogeneous),
            Err(Error::GridTooLarge(_))
        ));
    }

    #[test]
    fn bucket_edges_go_down() {
        assert_eq!(bucket_index(0.5, 1.0), 0);
        assert_eq!(bucket_index(0.50001, 1.0), 1);
        assert_eq!(bucket_index(1.49, 1.0), 1);
        assert_eq!(bucket_index(0.0, 0.08), 0);
    }

    #[test]
    fn family_text_round_trip() {
        let t = LineNetworkSpec::new(vec![0.0; 2], 4, GF256).unwrap();
        let fam = enumerate_family(&t, 0.25, 0.04, GridMode::Heterogeneous).unwrap();
        let back = DistFamily::from_text(&fam.to_text()).unwrap();
        assert_eq!(back.len(), fam.len());
        assert_eq!(back.bucket_indices(), fam.bucket_indices());
        for (a, b) in fam.entries().zip(back.entries()) {
            assert_eq!(a.eps, b.eps);
            for (x, y) in a.h.iter().zip(b.h) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        let err = DistFamily::from_text("M=4 q=256 E=2 delta1=0.25 delta2=0.04\n0 0 | 1 | 0\n");
        assert!(matches!(err, Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn cache_reuses_entries() {
        let cache = RankDistCache::new();
        let s = LineNetworkSpec::homogeneous(2, 0.2, 8, GF256).unwrap();
        let a = cache.get(&s);
        let b = cache.get(&s);
        assert_eq!(a, b);
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn ml_bound_examples() {
        let h = RankDistribution::new(vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(ml_lower_bound(&h, 3, 0), 0.0);
        assert_eq!(ml_lower_bound(&h, 2, 5), 1.0);
        assert!((ml_lower_bound(&h, 2, 2) - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn ml_bound_monotone() {
        let h = single_hop_dist(0.3, 8);
        let ns: Vec<usize> = (1..60).collect();
        let curve = ml_bound_curve(&h, 100, &ns);
        assert!(curve.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        for n in [10, 20, 30] {
            assert!(ml_lower_bound(&h, n, 100) >= ml_lower_bound(&h, n, 90));
        }
    }
}
