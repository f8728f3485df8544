//! Protograph density evolution and decoding thresholds.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::{zeta, FieldSpec};
use crate::network::{binomial_pmf, DistFamily, LineNetworkSpec, LineRecursion, RankDistribution};
use crate::protograph::{Protomatrix, PuncturingVector};

/// How the erased-input count at a B-CN is modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmegaMode {
    /// Convolution of per-edge-type binomials.
    Exact,
    /// Single binomial at the edge-weighted mean erasure probability.
    Binomial,
}

/// Which algebraically equivalent B-CN formula is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcnForm {
    Direct,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub l_max: usize,
    pub z_target: f64,
    pub stall_eps: f64,
    pub omega: OmegaMode,
    pub bcn_form: BcnForm,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            l_max: 1000,
            z_target: 1e-6,
            stall_eps: 1e-10,
            omega: OmegaMode::Binomial,
            bcn_form: BcnForm::Beta,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_max == 0 || !(self.z_target > 0.0) || self.stall_eps < 0.0 {
            return Err(Error::Plan(format!("invalid DE configuration {self:?}")));
        }
        Ok(())
    }
}

/// Edge messages `x`, `y` (row-major `n_c x n_v`) and posteriors `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeState {
    pub n_c: usize,
    pub n_v: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl DeState {
    pub fn initial(n_c: usize, n_v: usize) -> Self {
        DeState {
            n_c,
            n_v,
            x: vec![1.0; n_c * n_v],
            y: vec![1.0; n_c * n_v],
            z: vec![1.0; n_v],
        }
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_v..(i + 1) * self.n_v]
    }

    pub fn x_at(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.n_v + j]
    }

    pub fn y_at(&self, i: usize, j: usize) -> f64 {
        self.y[i * self.n_v + j]
    }
}

/// L-CN output on edge `(i, j)`: non-erased iff every other input is.
pub fn lcn_update(b: &Protomatrix, x_row: &[f64], i: usize, j: usize) -> f64 {
    let row = b.row(i);
    let mut keep = 1.0;
    for (jp, (&bij, &x)) in row.iter().zip(x_row).enumerate() {
        let e = if jp == j { bij.saturating_sub(1) } else { bij };
        if e > 0 {
            keep *= (1.0 - x).powi(e as i32);
        }
    }
    1.0 - keep
}

/// Distribution of the number of erased inputs among the `d - 1` other
/// edges of B-CN row `i`, as a convolution of per-type binomials.
pub fn omega_exact(b: &Protomatrix, i: usize, j: usize, x_row: &[f64]) -> Vec<f64> {
    let row = b.row(i);
    let d = b.row_weight(i) as usize;
    let mut dist = Vec::with_capacity(d.max(1));
    dist.push(1.0);
    for (jp, (&bij, &x)) in row.iter().zip(x_row).enumerate() {
        let copies = if jp == j { bij.saturating_sub(1) } else { bij };
        for _ in 0..copies {
            dist.push(0.0);
            for s in (0..dist.len()).rev() {
                let stay = dist[s] * (1.0 - x);
                let moved = if s > 0 { dist[s - 1] * x } else { 0.0 };
                dist[s] = stay + moved;
            }
        }
    }
    dist
}

/// Edge-weighted mean erasure probability of the other `d - 1` inputs;
/// 1 when the check has a single edge.
pub fn mean_other_erasure(b: &Protomatrix, i: usize, j: usize, x_row: &[f64]) -> f64 {
    let d = b.row_weight(i);
    if d <= 1 {
        return 1.0;
    }
    let sum: f64 = b
        .row(i)
        .iter()
        .zip(x_row)
        .map(|(&bij, &x)| bij as f64 * x)
        .sum();
    ((sum - x_row[j]) / (d - 1) as f64).clamp(0.0, 1.0)
}

/// `Binomial(d - 1, x̄)` model of the erased-input count.
pub fn omega_binomial(b: &Protomatrix, i: usize, j: usize, x_row: &[f64]) -> Vec<f64> {
    let d = b.row_weight(i) as usize;
    binomial_pmf(d.saturating_sub(1), mean_other_erasure(b, i, j, x_row))
}

fn choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Regularized incomplete beta `I_x(d - r, r)` for integer arguments, as the
/// binomial tail `sum_{s >= d-r} C(d-1, s) x^s (1-x)^(d-1-s)`.
pub fn reg_inc_beta(x: f64, d: usize, r: usize) -> f64 {
    assert!(d >= 1 && r >= 1, "reg_inc_beta needs d, r >= 1");
    let lo = d.saturating_sub(r);
    (lo..d)
        .map(|s| choose(d - 1, s) * x.powi(s as i32) * (1.0 - x).powi((d - 1 - s) as i32))
        .sum()
}

/// Rank-dependent constants shared by every B-CN update for one `(M, q)`.
#[derive(Debug, Clone)]
pub struct BcnTables {
    m_batch: usize,
    q: usize,
    /// `zeta[t * (M + 1) + r] = ζ_t^r`.
    zeta: Vec<f64>,
    /// Pascal's triangle up to `PASCAL_ROWS`.
    pascal: Vec<Vec<f64>>,
}

const PASCAL_ROWS: usize = 128;

impl BcnTables {
    pub fn new(m_batch: usize, field: FieldSpec) -> Self {
        let q = field.q();
        let w = m_batch + 1;
        let mut z = vec![0.0; w * w];
        for t in 0..w {
            for r in 0..w {
                z[t * w + r] = zeta(t, r, q);
            }
        }
        let mut pascal: Vec<Vec<f64>> = vec![vec![1.0]];
        for n in 1..=PASCAL_ROWS {
            let prev = &pascal[n - 1];
            let mut row = vec![1.0; n + 1];
            for k in 1..n {
                row[k] = prev[k - 1] + prev[k];
            }
            pascal.push(row);
        }
        BcnTables {
            m_batch,
            q,
            zeta: z,
            pascal,
        }
    }

    /// Cumulative `Binomial(n, x)` probabilities `Pr{S <= k}` for `k = 0..=n`.
    pub fn binomial_cdf(&self, n: usize, x: f64) -> Vec<f64> {
        if n > PASCAL_ROWS {
            let mut acc = 0.0;
            return binomial_pmf(n, x)
                .into_iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
        }
        let c = &self.pascal[n];
        let mut xp = vec![1.0; n + 1];
        let mut yp = vec![1.0; n + 1];
        for k in 1..=n {
            xp[k] = xp[k - 1] * x;
            yp[k] = yp[k - 1] * (1.0 - x);
        }
        let mut acc = 0.0;
        (0..=n)
            .map(|k| {
                acc += c[k] * xp[k] * yp[n - k];
                acc
            })
            .collect()
    }

    pub fn batch_size(&self) -> usize {
        self.m_batch
    }

    fn zeta(&self, t: usize, r: usize) -> f64 {
        self.zeta[t * (self.m_batch + 1) + r]
    }

    /// `W_r = sum_{k >= r} ζ_r^k q^-(k-r) h_k` for `r = 0..=M`.
    pub fn beta_weights(&self, h: &RankDistribution) -> Vec<f64> {
        let m = self.m_batch;
        let qf = self.q as f64;
        (0..=m)
            .map(|r| {
                (r..=m)
                    .map(|k| self.zeta(r, k) * qf.powi(-((k - r) as i32)) * h.get(k))
                    .sum()
            })
            .collect()
    }

    /// Probability a batch with erased-input law `omega` fails to recover
    /// the target VN, via the literal double sum over rank and erasures.
    pub fn bcn_inner_direct(&self, h: &RankDistribution, omega: &[f64]) -> f64 {
        let d = omega.len();
        let mut acc = 0.0;
        for r in 1..=self.m_batch {
            let hr = h.get(r);
            if hr == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for (s, &o) in omega.iter().enumerate().take((d).min(r)) {
                inner += o * self.zeta(s + 1, r);
            }
            acc += hr * inner;
        }
        1.0 - acc
    }

    /// [`Self::bcn_inner_beta`] with a `Binomial(n, x)` erased count,
    /// without allocating.
    pub fn bcn_inner_beta_binomial(&self, weights: &[f64], n: usize, x: f64) -> f64 {
        if n > PASCAL_ROWS {
            let cdf = self.binomial_cdf(n, x);
            return self.bcn_inner_beta(weights, |k| cdf[k.min(n)]);
        }
        let c = &self.pascal[n];
        let mut yp = [1.0f64; PASCAL_ROWS + 1];
        for k in 1..=n {
            yp[k] = yp[k - 1] * (1.0 - x);
        }
        let top = self.m_batch.min(n + 1);
        let mut cdf = [0.0f64; PASCAL_ROWS + 1];
        let (mut acc, mut xp) = (0.0, 1.0);
        for k in 0..top {
            if k > 0 {
                xp *= x;
            }
            acc += c[k] * xp * yp[n - k];
            cdf[k] = acc;
        }
        let mut out = 0.0;
        for (r, &w) in weights.iter().enumerate().skip(1) {
            if w != 0.0 {
                let k = (r - 1).min(n);
                let v = cdf[k];
                out += v * w;
            }
        }
        1.0 - out
    }

    /// Same quantity through cumulative erasure counts and `W_r`.
    pub fn bcn_inner_beta(&self, weights: &[f64], omega_cdf: impl Fn(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for (r, &w) in weights.iter().enumerate().skip(1) {
            if w != 0.0 {
                acc += omega_cdf(r - 1) * w;
            }
        }
        1.0 - acc
    }
}

/// B-CN output on stacked edge `(i, j)` with `i >= n_c1`.
#[allow(clippy::too_many_arguments)]
pub fn bcn_update(
    b: &Protomatrix,
    delta: &PuncturingVector,
    h: &RankDistribution,
    i: usize,
    j: usize,
    x_row: &[f64],
    config: &DeConfig,
    tables: &BcnTables,
) -> f64 {
    let dp = delta.values()[i - b.n_c1()];
    let weights = match config.bcn_form {
        BcnForm::Beta => Some(tables.beta_weights(h)),
        BcnForm::Direct => None,
    };
    bcn_value(b, dp, h, weights.as_deref(), i, j, x_row, config, tables)
}

#[allow(clippy::too_many_arguments)]
fn bcn_value(
    b: &Protomatrix,
    dp: f64,
    h: &RankDistribution,
    weights: Option<&[f64]>,
    i: usize,
    j: usize,
    x_row: &[f64],
    config: &DeConfig,
    tables: &BcnTables,
) -> f64 {
    if dp >= 1.0 {
        return 1.0;
    }
    let inner = match (config.bcn_form, config.omega, weights) {
        (BcnForm::Beta, OmegaMode::Binomial, Some(w)) => {
            let d = b.row_weight(i) as usize;
            let xb = mean_other_erasure(b, i, j, x_row);
            let cdf = tables.binomial_cdf(d - 1, xb);
            tables.bcn_inner_beta(w, |k| cdf[k.min(d - 1)])
        }
        (BcnForm::Beta, OmegaMode::Exact, Some(w)) => {
            let om = omega_exact(b, i, j, x_row);
            let cdf: Vec<f64> = om
                .iter()
                .scan(0.0, |acc, &p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            tables.bcn_inner_beta(w, |k| cdf[k.min(cdf.len() - 1)])
        }
        _ => {
            let om = match config.omega {
                OmegaMode::Exact => omega_exact(b, i, j, x_row),
                OmegaMode::Binomial => omega_binomial(b, i, j, x_row),
            };
            tables.bcn_inner_direct(h, &om)
        }
    };
    (dp + (1.0 - dp) * inner).clamp(0.0, 1.0)
}

/// VN output on edge `(i, j)`: erased iff every other input is.
pub fn vcn_update(b: &Protomatrix, y: &DeState, i: usize, j: usize) -> f64 {
    let mut p = 1.0;
    for ip in 0..b.n_c() {
        let bij = b.entry(ip, j);
        let e = if ip == i { bij.saturating_sub(1) } else { bij };
        if e > 0 {
            p *= y.y_at(ip, j).powi(e as i32);
        }
    }
    p
}

/// Posterior erasure probability of VN type `j`.
pub fn app_update(b: &Protomatrix, y: &DeState, j: usize) -> f64 {
    (0..b.n_c())
        .map(|i| y.y_at(i, j).powi(b.entry(i, j) as i32))
        .product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeOutcome {
    pub z: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// One row of a DE trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeTracePoint {
    pub iteration: usize,
    pub max_x: f64,
    pub max_z: f64,
}

pub fn trace_csv(trace: &[DeTracePoint]) -> String {
    let mut s = String::from("iteration,max_x,max_z\n");
    for p in trace {
        writeln!(s, "{},{:e},{:e}", p.iteration, p.max_x, p.max_z).unwrap();
    }
    s
}

/// Precomputed DE machinery for one protograph and `(M, q)`.
#[derive(Debug, Clone)]
pub struct DeRunner {
    b: Protomatrix,
    delta: Vec<f64>,
    config: DeConfig,
    tables: BcnTables,
    /// Nonzero `(i, j, b_ij)` entries.
    edges: Vec<(usize, usize, u32)>,
    /// Nonzero `(i, b_ij)` per VN type.
    cols: Vec<Vec<(usize, u32)>>,
}

impl DeRunner {
    pub fn new(
        b: &Protomatrix,
        delta: &PuncturingVector,
        m_batch: usize,
        field: FieldSpec,
        config: DeConfig,
    ) -> Result<Self> {
        config.validate()?;
        if delta.len() != b.n_c2() {
            return Err(Error::Puncturing(format!(
                "length {} does not match {} B-CN types",
                delta.len(),
                b.n_c2()
            )));
        }
        let mut edges = Vec::new();
        for i in 0..b.n_c() {
            for j in 0..b.n_v() {
                let e = b.entry(i, j);
                if e > 0 {
                    edges.push((i, j, e));
                }
            }
        }
        let mut cols = vec![Vec::new(); b.n_v()];
        for &(i, j, e) in &edges {
            cols[j].push((i, e));
        }
        Ok(DeRunner {
            b: b.clone(),
            delta: delta.values().to_vec(),
            config,
            tables: BcnTables::new(m_batch, field),
            edges,
            cols,
        })
    }

    pub fn config(&self) -> &DeConfig {
        &self.config
    }

    pub fn protomatrix(&self) -> &Protomatrix {
        &self.b
    }

    pub fn run(&self, h: &RankDistribution) -> DeOutcome {
        self.run_inner(h, None)
    }

    pub fn run_traced(&self, h: &RankDistribution) -> (DeOutcome, Vec<DeTracePoint>) {
        let mut trace = Vec::new();
        let out = self.run_inner(h, Some(&mut trace));
        (out, trace)
    }

    /// Runs DE and also returns the final state.
    pub fn run_state(&self, h: &RankDistribution) -> (DeOutcome, DeState) {
        let mut state = DeState::initial(self.b.n_c(), self.b.n_v());
        let out = self.iterate(h, &mut state, None);
        (out, state)
    }

    fn run_inner(&self, h: &RankDistribution, trace: Option<&mut Vec<DeTracePoint>>) -> DeOutcome {
        let mut state = DeState::initial(self.b.n_c(), self.b.n_v());
        self.iterate(h, &mut state, trace)
    }

    fn iterate(
        &self,
        h: &RankDistribution,
        st: &mut DeState,
        mut trace: Option<&mut Vec<DeTracePoint>>,
    ) -> DeOutcome {
        assert_eq!(h.batch_size(), self.tables.batch_size(), "batch size mismatch");
        let b = &self.b;
        let n_v = b.n_v();
        let n_c1 = b.n_c1();
        let weights = match self.config.bcn_form {
            BcnForm::Beta => Some(self.tables.beta_weights(h)),
            BcnForm::Direct => None,
        };
        let mut iterations = 0;
        let mut max_z = 1.0;
        if b.n_c2() == 0 {
            return DeOutcome {
                z: vec![1.0; n_v],
                converged: false,
                iterations: 0,
            };
        }
        let fast = matches!(
            (self.config.bcn_form, self.config.omega),
            (BcnForm::Beta, OmegaMode::Binomial)
        );
        let mut row_sum = vec![0.0; b.n_c()];
        for l in 1..=self.config.l_max {
            iterations = l;
            if fast {
                for (i, rs) in row_sum.iter_mut().enumerate().skip(n_c1) {
                    let x_row = &st.x[i * n_v..(i + 1) * n_v];
                    *rs = b.row(i).iter().zip(x_row).map(|(&bij, &x)| bij as f64 * x).sum();
                }
            }
            for &(i, j, _) in &self.edges {
                let x_row = &st.x[i * n_v..(i + 1) * n_v];
                st.y[i * n_v + j] = if i < n_c1 {
                    lcn_update(b, x_row, i, j)
                } else if fast {
                    let dp = self.delta[i - n_c1];
                    if dp >= 1.0 {
                        1.0
                    } else {
                        let d = b.row_weight(i) as usize;
                        let xb = if d <= 1 {
                            1.0
                        } else {
                            ((row_sum[i] - x_row[j]) / (d - 1) as f64).clamp(0.0, 1.0)
                        };
                        let w = weights.as_deref().expect("beta weights");
                        let inner = self.tables.bcn_inner_beta_binomial(w, d - 1, xb);
                        (dp + (1.0 - dp) * inner).clamp(0.0, 1.0)
                    }
                } else {
                    bcn_value(
                        b,
                        self.delta[i - n_c1],
                        h,
                        weights.as_deref(),
                        i,
                        j,
                        x_row,
                        &self.config,
                        &self.tables,
                    )
                };
            }
            let mut change: f64 = 0.0;
            let mut max_x: f64 = 0.0;
            for &(i, j, _) in &self.edges {
                let mut nx = 1.0;
                for &(ip, bij) in &self.cols[j] {
                    let e = if ip == i { bij - 1 } else { bij };
                    if e > 0 {
                        nx *= st.y[ip * n_v + j].powi(e as i32);
                    }
                }
                let idx = i * n_v + j;
                change = change.max((nx - st.x[idx]).abs());
                max_x = max_x.max(nx);
                st.x[idx] = nx;
            }
            for (j, col) in self.cols.iter().enumerate() {
                st.z[j] = col
                    .iter()
                    .map(|&(i, e)| st.y[i * n_v + j].powi(e as i32))
                    .product();
            }
            max_z = st.z.iter().copied().fold(0.0, f64::max);
            if let Some(t) = trace.as_deref_mut() {
                t.push(DeTracePoint {
                    iteration: l,
                    max_x,
                    max_z,
                });
            }
            if max_z < self.config.z_target || change < self.config.stall_eps {
                break;
            }
        }
        DeOutcome {
            z: st.z.clone(),
            converged: max_z < self.config.z_target,
            iterations,
        }
    }

    pub fn converges(&self, h: &RankDistribution) -> bool {
        self.run(h).converged
    }
}

/// Runs DE with a fresh runner.
pub fn run_de(
    b: &Protomatrix,
    delta: &PuncturingVector,
    h: &RankDistribution,
    field: FieldSpec,
    config: &DeConfig,
) -> Result<DeOutcome> {
    Ok(DeRunner::new(b, delta, h.batch_size(), field, *config)?.run(h))
}

/// Result of a bucketed threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// `C*`, or `+inf` when no bucket qualifies.
    pub c_star: f64,
    /// Number of DE runs spent.
    pub evaluations: usize,
}

impl ThresholdResult {
    pub fn is_sentinel(&self) -> bool {
        self.c_star.is_infinite()
    }
}

/// Decoding threshold over a bucketed family: the smallest bucket key such
/// that DE converges for every member of that bucket and all buckets above.
pub fn threshold(runner: &DeRunner, family: &DistFamily) -> ThresholdResult {
    let keys = family.bucket_indices();
    let mut evaluations = 0usize;
    if keys.is_empty() || runner.protomatrix().n_c2() == 0 {
        return ThresholdResult {
            c_star: f64::INFINITY,
            evaluations,
        };
    }
    let bucket_ok = |k: i64, evals: &mut usize| -> bool {
        let members: Vec<RankDistribution> = family.bucket(k).map(|e| e.distribution()).collect();
        *evals += members.len();
        members.par_iter().all(|h| runner.converges(h))
    };
    // lowest index that passes, assuming monotonicity
    let (mut lo, mut hi) = (0usize, keys.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if bucket_ok(keys[mid], &mut evaluations) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo == keys.len() {
        return ThresholdResult {
            c_star: f64::INFINITY,
            evaluations,
        };
    }
    // verify every bucket from the top down to the candidate
    let mut answer = lo;
    for idx in (lo..keys.len()).rev() {
        if !bucket_ok(keys[idx], &mut evaluations) {
            answer = idx + 1;
            break;
        }
    }
    let c_star = if answer == keys.len() {
        f64::INFINITY
    } else {
        family.bucket_key(keys[answer])
    };
    ThresholdResult {
        c_star,
        evaluations,
    }
}

/// Default bisection resolution for homogeneous thresholds.
pub const HOMOGENEOUS_RESOLUTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousThreshold {
    pub eps_star: f64,
    pub c_star: f64,
}

/// Largest equal per-hop erasure probability for which DE converges, by
/// bisection to `resolution`. `None` when DE fails even without erasures.
pub fn threshold_homogeneous(
    runner: &DeRunner,
    template: &LineNetworkSpec,
    resolution: f64,
) -> Option<HomogeneousThreshold> {
    let rec = LineRecursion::new(template.m_batch, template.field);
    let hops = template.hops();
    let dist = |e: f64| rec.distribution(&vec![e; hops]);
    if runner.protomatrix().n_c2() == 0 || !runner.converges(&dist(0.0)) {
        return None;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if runner.converges(&dist(1.0)) {
        lo = 1.0;
    }
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if runner.converges(&dist(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(HomogeneousThreshold {
        eps_star: lo,
        c_star: dist(lo).capacity(),
    })
}
