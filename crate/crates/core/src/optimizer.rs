//! Randomized protograph search (core and extension) and lifting with
//! BP-decodability retry.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::de::{threshold, threshold_homogeneous, DeConfig, DeRunner, HOMOGENEOUS_RESOLUTION};
use crate::error::{Error, Result};
use crate::gf::FieldSpec;
use crate::network::{DistFamily, LineNetworkSpec};
use crate::protograph::{
    bp_decodable, peg_lift_precode, random_lift_batches, LiftedCode, Protomatrix, PuncturingVector,
};

/// Thresholds within this margin count as ties and keep the incumbent.
pub const TIE_EPS: f64 = 1e-9;

/// `m x n` matrix with entries in `0..=s` and row `i` summing to `d[i]`.
pub fn rand_matrix<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    d: &[u32],
    s: u32,
    rng: &mut R,
) -> Result<Vec<Vec<u32>>> {
    if d.len() != m {
        return Err(Error::InfeasibleDegree(format!("{} degrees for {m} rows", d.len())));
    }
    d.iter()
        .map(|&di| {
            if u64::from(di) > n as u64 * u64::from(s) {
                return Err(Error::InfeasibleDegree(format!("degree {di} exceeds {n} x {s}")));
            }
            let mut row = vec![0u32; n];
            let mut open: Vec<usize> = (0..n).collect();
            for _ in 0..di {
                let k = rng.gen_range(0..open.len());
                let c = open[k];
                row[c] += 1;
                if row[c] == s {
                    open.swap_remove(k);
                }
            }
            Ok(row)
        })
        .collect()
}

/// Length-`n` row with entries in `0..=s` and sum at most `dmax`; the sum
/// is drawn uniformly from `1..=min(dmax, n s)` when `dmax > 0`.
pub fn rand_row<R: Rng + ?Sized>(n: usize, s: u32, dmax: u32, rng: &mut R) -> Vec<u32> {
    let cap = (n as u64 * u64::from(s)).min(u64::from(dmax)) as u32;
    if cap == 0 {
        return vec![0; n];
    }
    let total = rng.gen_range(1..=cap);
    rand_matrix(1, n, &[total], s, rng)
        .map(|mut r| r.remove(0))
        .expect("total within capacity")
}

/// Random puncturing vector with the same sum as `reference`, built from
/// pairwise transfers so every entry stays in `[0, 1)`.
pub fn rand_punc_vec<R: Rng + ?Sized>(
    reference: &PuncturingVector,
    rng: &mut R,
) -> Result<PuncturingVector> {
    const CAP: f64 = 1.0 - 1e-6;
    let mut d = reference.values().to_vec();
    let n = d.len();
    if reference.sum() >= n as f64 {
        return Err(Error::Puncturing("sum not representable below 1".into()));
    }
    if n >= 2 {
        for _ in 0..2 * n {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            // move t from j to i
            let lo = -(d[i].min(CAP - d[j]));
            let hi = d[j].min(CAP - d[i]);
            if hi > lo {
                let t = rng.gen_range(lo..=hi);
                d[i] += t;
                d[j] -= t;
                d[i] = d[i].clamp(0.0, CAP);
                d[j] = d[j].clamp(0.0, CAP);
            }
        }
        // absorb rounding drift in the entry with the most room
        let drift = reference.sum() - d.iter().sum::<f64>();
        if drift != 0.0 {
            let k = (0..n)
                .max_by(|&a, &b| {
                    let ra = if drift > 0.0 { CAP - d[a] } else { d[a] };
                    let rb = if drift > 0.0 { CAP - d[b] } else { d[b] };
                    ra.total_cmp(&rb)
                })
                .expect("n >= 2");
            d[k] += drift;
        }
    }
    PuncturingVector::new(d)
}

/// Anything that maps a protograph and puncturing vector to a threshold.
pub trait Objective: Sync {
    fn threshold(&self, b: &Protomatrix, delta: &PuncturingVector) -> Result<f64>;
}

impl<F> Objective for F
where
    F: Fn(&Protomatrix, &PuncturingVector) -> Result<f64> + Sync,
{
    fn threshold(&self, b: &Protomatrix, delta: &PuncturingVector) -> Result<f64> {
        self(b, delta)
    }
}

/// Bucketed threshold over a rank-distribution family.
pub struct FamilyObjective<'a> {
    pub family: &'a DistFamily,
    pub m_batch: usize,
    pub field: FieldSpec,
    pub de: DeConfig,
}

impl Objective for FamilyObjective<'_> {
    fn threshold(&self, b: &Protomatrix, delta: &PuncturingVector) -> Result<f64> {
        let runner = DeRunner::new(b, delta, self.m_batch, self.field, self.de)?;
        Ok(threshold(&runner, self.family).c_star)
    }
}

/// Capacity at the homogeneous erasure threshold.
pub struct HomogeneousObjective {
    pub template: LineNetworkSpec,
    pub de: DeConfig,
}

impl Objective for HomogeneousObjective {
    fn threshold(&self, b: &Protomatrix, delta: &PuncturingVector) -> Result<f64> {
        let t = &self.template;
        let runner = DeRunner::new(b, delta, t.m_batch, t.field, self.de)?;
        Ok(threshold_homogeneous(&runner, t, HOMOGENEOUS_RESOLUTION)
            .map_or(f64::INFINITY, |h| h.c_star))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub i_star: usize,
    pub ir_star: usize,
    pub ic_star: usize,
    pub ip_star: usize,
    pub ir_star_ext: usize,
    pub b_max: u32,
    pub b_max_prime: u32,
    pub d_init: Vec<u32>,
    pub delta_init: Vec<f64>,
    pub delta_ext: Vec<f64>,
    pub seed: u64,
}

impl OptConfig {
    /// Loop sizes 100 / 1000 / 1000 / 1000 / 10000.
    pub fn new(d_init: Vec<u32>, delta_init: Vec<f64>, delta_ext: Vec<f64>, seed: u64) -> Self {
        OptConfig {
            i_star: 100,
            ir_star: 1000,
            ic_star: 1000,
            ip_star: 1000,
            ir_star_ext: 10_000,
            b_max: 4,
            b_max_prime: 4,
            d_init,
            delta_init,
            delta_ext,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let loops = [self.i_star, self.ir_star, self.ic_star, self.ip_star, self.ir_star_ext];
        if loops.contains(&0) || self.b_max == 0 || self.b_max_prime == 0 {
            return Err(Error::Plan("loop sizes and entry caps must be at least 1".into()));
        }
        if self.d_init.len() != self.delta_init.len() {
            return Err(Error::Plan("d_init and delta_init differ in length".into()));
        }
        PuncturingVector::new(self.delta_init.clone())?;
        PuncturingVector::new(self.delta_ext.clone())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Row,
    Column,
    Puncturing,
    Extension,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Init => "init",
            Phase::Row => "row",
            Phase::Column => "column",
            Phase::Puncturing => "puncturing",
            Phase::Extension => "extension",
        })
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub phase: Phase,
    /// Outer iteration, or extension row for [`Phase::Extension`].
    pub round: usize,
    pub candidate: usize,
    pub threshold: f64,
    pub accepted: bool,
    /// Incumbent threshold after this candidate.
    pub incumbent: f64,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "phase={} round={} candidate={} threshold={:.6} accepted={} incumbent={:.6}",
            self.phase,
            self.round,
            self.candidate,
            self.threshold,
            u8::from(self.accepted),
            self.incumbent
        )
    }
}

/// Resumable state saved after each outer iteration of the core search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoreCheckpoint {
    pub rounds_done: usize,
    pub b2: Vec<Vec<u32>>,
    pub delta: Vec<f64>,
    pub c_min: f64,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct CoreResult {
    pub b2: Vec<Vec<u32>>,
    pub delta: PuncturingVector,
    pub c_star: f64,
    pub log: Vec<LogEntry>,
}

struct Search<'a, O: Objective + ?Sized> {
    b1: &'a [Vec<u32>],
    n_v: usize,
    m_batch: usize,
    objective: &'a O,
    log: Vec<LogEntry>,
}

impl<O: Objective + ?Sized> Search<'_, O> {
    fn eval(&self, b2: &[Vec<u32>], delta: &PuncturingVector) -> Result<f64> {
        let b = Protomatrix::new(self.n_v, self.b1.to_vec(), b2.to_vec())?;
        self.objective.threshold(&b, delta)
    }

    /// Records a candidate; returns whether it beats the incumbent.
    fn record(&mut self, phase: Phase, round: usize, candidate: usize, c: f64, c_min: &mut f64) -> bool {
        let accepted = c < *c_min - TIE_EPS;
        if accepted {
            *c_min = c;
        }
        self.log.push(LogEntry {
            phase,
            round,
            candidate,
            threshold: c,
            accepted,
            incumbent: *c_min,
        });
        accepted
    }

    fn bp_start_ok(&self, b2: &[Vec<u32>]) -> bool {
        b2.iter()
            .any(|r| r.iter().sum::<u32>() as usize <= self.m_batch)
    }
}

fn transpose(m: &[Vec<u32>], cols: usize) -> Vec<Vec<u32>> {
    (0..cols).map(|j| m.iter().map(|r| r[j]).collect()).collect()
}

/// Alternating row-degree, column-degree and puncturing random search for
/// the core rows. `initial` replaces the random starting matrix; `resume`
/// continues from a checkpoint; `on_checkpoint` runs after each round.
pub fn optimize_core<O: Objective + ?Sized>(
    b1: &[Vec<u32>],
    n_v: usize,
    m_batch: usize,
    cfg: &OptConfig,
    objective: &O,
    initial: Option<Vec<Vec<u32>>>,
    resume: Option<CoreCheckpoint>,
    on_checkpoint: &mut dyn FnMut(&CoreCheckpoint, &[LogEntry]),
) -> Result<CoreResult> {
    cfg.validate()?;
    let m_c = cfg.d_init.len();
    let mut search = Search {
        b1,
        n_v,
        m_batch,
        objective,
        log: Vec::new(),
    };
    let (mut rng, mut b2, mut delta, mut c_min, start) = match resume {
        Some(cp) => (cp.rng, cp.b2, PuncturingVector::new(cp.delta)?, cp.c_min, cp.rounds_done),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let delta = PuncturingVector::new(cfg.delta_init.clone())?;
            let b2 = match initial {
                Some(b) => b,
                None => rand_matrix(m_c, n_v, &cfg.d_init, cfg.b_max, &mut rng)?,
            };
            let mut c_min = f64::INFINITY;
            let c = search.eval(&b2, &delta)?;
            search.record(Phase::Init, 0, 0, c, &mut c_min);
            (rng, b2, delta, c_min, 0)
        }
    };
    for round in start..cfg.i_star {
        let d: Vec<u32> = b2.iter().map(|r| r.iter().sum()).collect();
        for cand in 0..cfg.ir_star {
            let trial = rand_matrix(m_c, n_v, &d, cfg.b_max, &mut rng)?;
            let c = search.eval(&trial, &delta)?;
            if search.record(Phase::Row, round, cand, c, &mut c_min) {
                b2 = trial;
            }
        }
        let dc: Vec<u32> = (0..n_v).map(|j| b2.iter().map(|r| r[j]).sum()).collect();
        for cand in 0..cfg.ic_star {
            let t = rand_matrix(n_v, m_c, &dc, cfg.b_max, &mut rng)?;
            let trial = transpose(&t, m_c);
            if !search.bp_start_ok(&trial) {
                continue;
            }
            let c = search.eval(&trial, &delta)?;
            if search.record(Phase::Column, round, cand, c, &mut c_min) {
                b2 = trial;
            }
        }
        for cand in 0..cfg.ip_star {
            let trial = rand_punc_vec(&delta, &mut rng)?;
            let c = search.eval(&b2, &trial)?;
            if search.record(Phase::Puncturing, round, cand, c, &mut c_min) {
                delta = trial;
            }
        }
        let cp = CoreCheckpoint {
            rounds_done: round + 1,
            b2: b2.clone(),
            delta: delta.values().to_vec(),
            c_min,
            rng: rng.clone(),
        };
        on_checkpoint(&cp, &search.log);
    }
    Ok(CoreResult {
        b2,
        delta,
        c_star: c_min,
        log: search.log,
    })
}

#[derive(Debug, Clone)]
pub struct ExtensionResult {
    pub rows: Vec<Vec<u32>>,
    /// Incumbent threshold after each appended row.
    pub row_thresholds: Vec<f64>,
    pub log: Vec<LogEntry>,
}

/// Appends `cfg.delta_ext.len()` rows one at a time, each the best of
/// `ir_star_ext` random candidates.
pub fn optimize_extension<O: Objective + ?Sized>(
    b1: &[Vec<u32>],
    b2_core: &[Vec<u32>],
    delta_core: &PuncturingVector,
    n_v: usize,
    m_batch: usize,
    cfg: &OptConfig,
    objective: &O,
    rng: &mut ChaCha8Rng,
) -> Result<ExtensionResult> {
    cfg.validate()?;
    let mut search = Search {
        b1,
        n_v,
        m_batch,
        objective,
        log: Vec::new(),
    };
    let mut rows: Vec<Vec<u32>> = Vec::new();
    let mut row_thresholds = Vec::new();
    for s in 0..cfg.delta_ext.len() {
        let mut delta = delta_core.values().to_vec();
        delta.extend_from_slice(&cfg.delta_ext[..=s]);
        let delta = PuncturingVector::new(delta)?;
        let mut c_min = f64::INFINITY;
        let mut best: Option<Vec<u32>> = None;
        for cand in 0..cfg.ir_star_ext {
            let r = rand_row(n_v, cfg.b_max_prime, m_batch as u32, rng);
            let mut b2 = b2_core.to_vec();
            b2.extend(rows.iter().cloned());
            b2.push(r.clone());
            let c = search.eval(&b2, &delta)?;
            if search.record(Phase::Extension, s, cand, c, &mut c_min) || best.is_none() {
                best = Some(r);
            }
        }
        rows.push(best.expect("at least one candidate"));
        row_thresholds.push(c_min);
    }
    Ok(ExtensionResult {
        rows,
        row_thresholds,
        log: search.log,
    })
}

/// PEG-lifts the precode once, re-draws the core batch lifting until the
/// VNs it touches let the precode peel every VN, then lifts the extension
/// rows once.
#[allow(clippy::too_many_arguments)]
pub fn lift_with_retry<R: Rng + ?Sized>(
    b: &Protomatrix,
    delta: &PuncturingVector,
    core_rows: usize,
    z1: usize,
    z2: usize,
    m_batch: usize,
    field: FieldSpec,
    rng: &mut R,
    retry_cap: usize,
) -> Result<LiftedCode> {
    if delta.len() != b.n_c2() {
        return Err(Error::Puncturing(format!(
            "length {} does not match {} B-CN types",
            delta.len(),
            b.n_c2()
        )));
    }
    let core_rows = core_rows.min(b.n_c2());
    let t1 = peg_lift_precode(b, z1, z2, field, rng)?;
    let k = b.n_v() * z1 * z2;
    let t1_plain: Vec<Vec<usize>> = t1.iter().map(|r| r.iter().map(|e| e.0).collect()).collect();
    let (core_b2, ext_b2) = b.b2().split_at(core_rows);
    let (core_d, ext_d) = delta.values().split_at(core_rows);
    let core_d = PuncturingVector::new(core_d.to_vec())?;
    let mut t2 = None;
    for _ in 0..retry_cap.max(1) {
        let cand = random_lift_batches(core_b2, b.n_v(), &core_d, z1, z2, rng)?;
        if bp_decodable(&t1_plain, &cand.rows, k) {
            t2 = Some(cand);
            break;
        }
    }
    let mut t2 = t2.ok_or(Error::RetryCapExceeded(retry_cap.max(1)))?;
    if !ext_b2.is_empty() {
        let ext = random_lift_batches(ext_b2, b.n_v(), &PuncturingVector::new(ext_d.to_vec())?, z1, z2, rng)?;
        t2.rows.extend(ext.rows);
        t2.types.extend(ext.types.into_iter().map(|t| t + core_rows));
    }
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
