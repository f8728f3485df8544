//! Monte-Carlo line-network simulation and FER measurement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{
    bp_decode, encode_batch, encode_batch_with, generator_from_seed, inactivation_decode,
    BatchEquation, Packets, Precode,
};
use crate::error::{Error, Result};
use crate::io::{ReceivedBatch, ReceivedFile};
use crate::gf::{Gf, GfMatrix};
use crate::network::{line_network_dist, ml_bound_curve, LineNetworkSpec};
use crate::protograph::LiftedCode;

/// Transfer matrix of one batch over the line network: `E_1 T_2 E_2 ... T_E E_E`.
pub fn realize_transfer<R: Rng + ?Sized>(gf: &Gf, spec: &LineNetworkSpec, rng: &mut R) -> GfMatrix {
    let m = spec.m_batch;
    let mut h = GfMatrix::zeros(m, m);
    for (hop, &eps) in spec.eps.iter().enumerate() {
        if hop > 0 {
            let t = GfMatrix::random(gf, m, m, rng);
            h = h.mul(gf, &t);
        }
        for c in 0..m {
            let keep = !rng.gen_bool(eps);
            if hop == 0 {
                h.set(c, c, u8::from(keep));
            } else if !keep {
                for r in 0..m {
                    h.set(r, c, 0);
                }
            }
        }
    }
    h
}

/// Drops all-zero columns; the received batch carries only nonzero packets.
pub fn nonzero_columns(h: &GfMatrix) -> GfMatrix {
    let cols: Vec<usize> = (0..h.cols())
        .filter(|&c| (0..h.rows()).any(|r| h.get(r, c) != 0))
        .collect();
    h.select_cols(&cols)
}

/// Independent RNG stream for trial `(n, trial)` under `seed`.
pub fn trial_rng(seed: u64, n: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) ^ trial as u64);
    rng
}

/// Empirical rank distribution of `realize_transfer` over `trials` draws.
pub fn rank_histogram(spec: &LineNetworkSpec, trials: usize, seed: u64) -> Result<Vec<f64>> {
    let gf = Gf::new(spec.field)?;
    let m = spec.m_batch;
    let counts = (0..trials)
        .into_par_iter()
        .fold(
            || vec![0usize; m + 1],
            |mut acc, t| {
                let mut rng = trial_rng(seed, 0, t);
                acc[realize_transfer(&gf, spec, &mut rng).rank(&gf)] += 1;
                acc
            },
        )
        .reduce(
            || vec![0usize; m + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(counts.into_iter().map(|c| c as f64 / trials as f64).collect())
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    0.5 * (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Monte-Carlo estimate of `Pr{sum of n sampled ranks < a}`.
pub fn rank_sum_failure_mc(
    spec: &LineNetworkSpec,
    n: usize,
    a: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let gf = Gf::new(spec.field)?;
    let fails: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, n, t);
            let total: usize = (0..n)
                .map(|_| realize_transfer(&gf, spec, &mut rng).rank(&gf))
                .sum();
            usize::from(total < a)
        })
        .sum();
    Ok(fails as f64 / trials as f64)
}

/// 95% Wilson score interval.
pub fn wilson_interval(failures: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = failures as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt()) / denom;
    let lo = if failures == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if failures == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Bp,
    /// `cap = None` is unlimited.
    Inactivation { cap: Option<usize> },
}

#[derive(Debug, Clone)]
pub struct TrialPlan {
    pub netspec: LineNetworkSpec,
    pub code: LiftedCode,
    pub precode: Precode,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub decoder: DecoderKind,
    pub seed: u64,
    /// Stop a point early once this many failures are seen.
    pub stop_after_failures: Option<usize>,
    /// Symbols per packet.
    pub payload_len: usize,
}

impl TrialPlan {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Plan("trials must be at least 1".into()));
        }
        if self.netspec.m_batch != self.code.m_batch || self.netspec.field != self.code.field {
            return Err(Error::Plan("network and code disagree on M or q".into()));
        }
        if self.precode.k() != self.code.k() {
            return Err(Error::Plan("precode does not belong to this code".into()));
        }
        let max = self.code.num_batches();
        if let Some(&bad) = self.n_values.iter().find(|&&n| n == 0 || n > max) {
            return Err(Error::Plan(format!("N = {bad} outside 1..={max}")));
        }
        if self.payload_len == 0 {
            return Err(Error::Plan("payload length must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub failed: bool,
    /// Input packets left unrecovered.
    pub erased_inputs: usize,
    pub inactivated: usize,
    /// Recovered packets that differ from the transmitted ones; always zero
    /// for a correct decoder.
    pub mismatches: usize,
}

/// One encode/transmit/decode round with the first `n` batches.
pub fn run_trial(gf: &Gf, plan: &TrialPlan, n: usize, trial: usize) -> Result<TrialOutcome> {
    let mut rng = trial_rng(plan.seed, n, trial);
    let a = plan.precode.a();
    let inputs: Packets = (0..a)
        .map(|_| (0..plan.payload_len).map(|_| gf.random_element(&mut rng)).collect())
        .collect();
    let v = plan.precode.encode(gf, &inputs)?;
    let mut batches = Vec::with_capacity(n);
    for vars in plan.code.t2.rows.iter().take(n) {
        let cb = encode_batch(gf, vars, plan.code.m_batch, &v, &mut rng)?;
        let h = nonzero_columns(&realize_transfer(gf, &plan.netspec, &mut rng));
        batches.push(BatchEquation::receive(gf, &cb, h));
    }
    let k = plan.code.k();
    let res = match plan.decoder {
        DecoderKind::Bp => bp_decode(gf, &batches, &plan.code.t1, k, plan.payload_len),
        DecoderKind::Inactivation { cap } => {
            inactivation_decode(gf, &batches, &plan.code.t1, k, plan.payload_len, cap)
        }
    };
    let mismatches = res
        .recovered
        .iter()
        .zip(&v)
        .filter(|(r, truth)| r.as_ref().is_some_and(|p| p != *truth))
        .count();
    let erased_inputs = plan
        .precode
        .info_positions()
        .iter()
        .filter(|&&p| res.recovered[p].is_none())
        .count();
    Ok(TrialOutcome {
        failed: erased_inputs > 0,
        erased_inputs,
        inactivated: res.inactivated,
        mismatches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerPoint {
    pub n: usize,
    pub trials: usize,
    pub failures: usize,
    pub fer: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub ml_bound: f64,
    pub packet_erasure_rate: f64,
    pub mismatches: usize,
}

const CHUNK: usize = 256;

/// Trial outcomes for one `N`, honouring the early-stop rule.
pub fn run_point(gf: &Gf, plan: &TrialPlan, n: usize) -> Result<Vec<TrialOutcome>> {
    let mut out: Vec<TrialOutcome> = Vec::with_capacity(plan.trials);
    let mut failures = 0;
    let mut start = 0;
    while start < plan.trials {
        let end = (start + CHUNK).min(plan.trials);
        let chunk: Vec<TrialOutcome> = (start..end)
            .into_par_iter()
            .map(|t| run_trial(gf, plan, n, t))
            .collect::<Result<_>>()?;
        for o in chunk {
            out.push(o);
            failures += usize::from(o.failed);
            if plan.stop_after_failures.is_some_and(|cap| failures >= cap) {
                return Ok(out);
            }
        }
        start = end;
    }
    Ok(out)
}

/// Aggregates the outcomes of one point.
pub fn summarize(n: usize, outcomes: &[TrialOutcome], ml_bound: f64, a: usize) -> FerPoint {
    let trials = outcomes.len();
    let failures = outcomes.iter().filter(|o| o.failed).count();
    let erased: usize = outcomes.iter().map(|o| o.erased_inputs).sum();
    let (wilson_lo, wilson_hi) = wilson_interval(failures, trials);
    let per = |x: usize, d: usize| if d == 0 { 0.0 } else { x as f64 / d as f64 };
    FerPoint {
        n,
        trials,
        failures,
        fer: per(failures, trials),
        wilson_lo,
        wilson_hi,
        ml_bound,
        packet_erasure_rate: per(erased, trials * a),
        mismatches: outcomes.iter().map(|o| o.mismatches).sum(),
    }
}

/// ML lower bound for each `N` of the plan.
pub fn plan_bounds(plan: &TrialPlan) -> Vec<f64> {
    ml_bound_curve(&line_network_dist(&plan.netspec), plan.precode.a(), &plan.n_values)
}

pub fn run_fer(plan: &TrialPlan) -> Result<Vec<FerPoint>> {
    plan.validate()?;
    let gf = Gf::new(plan.code.field)?;
    let a = plan.precode.a();
    plan.n_values
        .iter()
        .zip(plan_bounds(plan))
        .map(|(&n, bound)| Ok(summarize(n, &run_point(&gf, plan, n)?, bound, a)))
        .collect()
}

pub fn fer_csv(points: &[FerPoint]) -> String {
    let mut s = String::from("N,trials,failures,fer,wilson_lo,wilson_hi,ml_bound\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6e}\n",
            p.n, p.trials, p.failures, p.fer, p.wilson_lo, p.wilson_hi, p.ml_bound
        ));
    }
    s
}

/// Encodes `inputs`, sends the first `n` batches through the network (or a
/// lossless channel when `netspec` is `None`) and records what arrives.
pub fn transmit(
    gf: &Gf,
    code: &LiftedCode,
    precode: &Precode,
    inputs: &Packets,
    netspec: Option<&LineNetworkSpec>,
    n: usize,
    seed: u64,
) -> Result<ReceivedFile> {
    if n > code.num_batches() {
        return Err(Error::Plan(format!("{n} batches requested, code has {}", code.num_batches())));
    }
    let v = precode.encode(gf, inputs)?;
    let t = inputs.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batches = Vec::with_capacity(n);
    for (i, vars) in code.t2.rows.iter().take(n).enumerate() {
        let g_seed: u64 = rng.gen();
        let g = generator_from_seed(gf, vars.len(), code.m_batch, g_seed);
        let cb = encode_batch_with(gf, vars, g, &v)?;
        let h = match netspec {
            Some(spec) => nonzero_columns(&realize_transfer(gf, spec, &mut rng)),
            None => GfMatrix::identity(code.m_batch),
        };
        let eq = BatchEquation::receive(gf, &cb, h);
        batches.push(ReceivedBatch {
            batch: i,
            g_seed,
            transfer: (0..eq.h.rows()).map(|r| eq.h.row(r).to_vec()).collect(),
            packets: eq.y,
        });
    }
    Ok(ReceivedFile {
        m: code.field.m,
        t,
        seed,
        batches,
    })
}

/// Rebuilds batch equations from a received file.
pub fn received_equations(gf: &Gf, code: &LiftedCode, file: &ReceivedFile) -> Result<Vec<BatchEquation>> {
    if file.m != code.field.m {
        return Err(Error::Codec("received file and code use different fields".into()));
    }
    file.batches
        .iter()
        .map(|b| {
            let vars = code
                .t2
                .rows
                .get(b.batch)
                .ok_or_else(|| Error::Codec(format!("batch {} not in code", b.batch)))?;
            let w = b.packets.len();
            if b.transfer.len() != code.m_batch || b.transfer.iter().any(|r| r.len() != w) {
                return Err(Error::Codec(format!("batch {}: transfer matrix is not M x {w}", b.batch)));
            }
            if b.packets.iter().any(|p| p.len() != file.t) {
                return Err(Error::Codec(format!("batch {}: packet length != T", b.batch)));
            }
            Ok(BatchEquation {
                vars: vars.clone(),
                g: generator_from_seed(gf, vars.len(), code.m_batch, b.g_seed),
                h: GfMatrix::from_rows(&b.transfer),
                y: b.packets.clone(),
            })
        })
        .collect()
}
