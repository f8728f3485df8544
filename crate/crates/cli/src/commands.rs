use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pbnc_core::codec::{bp_decode, default_inactive_cap, inactivation_decode, Precode};
use pbnc_core::de::{
    threshold, threshold_homogeneous, BcnForm, DeConfig, DeRunner, OmegaMode,
    HOMOGENEOUS_RESOLUTION,
};
use pbnc_core::io::{
    code_to_json, design_to_json, parse_code, parse_design, preset_by_name, preset_source, Design,
    PacketFile, ProtoFile, ReceivedFile,
};
use pbnc_core::network::{enumerate_family, line_network_dist, ml_bound_curve, GridMode};
use pbnc_core::optimizer::{
    lift_with_retry, optimize_core, optimize_extension, CoreCheckpoint, FamilyObjective,
    HomogeneousObjective, Objective, OptConfig,
};
use pbnc_core::protograph::{design_rate, LiftedCode, PuncturingVector};
use pbnc_core::sim::{
    fer_csv, plan_bounds, rank_sum_failure_mc, received_equations, run_point, summarize, transmit,
    DecoderKind, FerPoint, TrialPlan,
};
use pbnc_core::{DistFamily, Error, FieldSpec, Gf, LineNetworkSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{
    Cli, Command, DecodeArgs, Decoder, EncodeArgs, FamilyCommand, Form, Format, Global, LiftArgs,
    MlboundArgs, Omega, OptimizeArgs, SimulateArgs, ThresholdArgs,
};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: 1,
            msg: msg.into(),
        }
    }

    fn input(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            msg: msg.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::GridTooLarge(_)
            | Error::RetryCapExceeded(_)
            | Error::RankDeficientPrecode { .. } => 3,
            _ => 2,
        };
        CliError {
            code,
            msg: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Threshold(a) => cmd_threshold(g, a),
        Command::Optimize(a) => cmd_optimize(g, a),
        Command::Lift(a) => cmd_lift(g, a),
        Command::Simulate(a) => cmd_simulate(g, a),
        Command::Mlbound(a) => cmd_mlbound(g, a),
        Command::Encode(a) => cmd_encode(g, a),
        Command::Decode(a) => cmd_decode(g, a),
        Command::Family(FamilyCommand::Export {
            m_batch,
            m,
            hops,
            homogeneous,
            output,
        }) => cmd_family_export(g, *m_batch, *m, *hops, *homogeneous, output.as_deref()),
        Command::Preset { name } => {
            let text = preset_source(name)
                .ok_or_else(|| CliError::input(format!("unknown preset {name:?}")))?;
            emit(None, text)
        }
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: pbnc_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut err = CliError::from(e);
        err.msg = format!("{}: {}", path.display(), err.msg);
        err
    })
}

fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::input(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::input(e.to_string()))
        }
    }
}

/// Resolved configuration goes to stderr so CSV on stdout stays clean.
fn echo_config(config: &Value) {
    eprintln!("config: {config}");
}

fn global_json(g: &Global, m_batch: Option<usize>) -> Value {
    json!({
        "seed": g.seed,
        "threads": g.threads,
        "delta1": g.delta1,
        "delta2": m_batch.map(|m| delta2(g, m)),
        "lmax": g.lmax,
        "ztarget": g.ztarget,
        "omega": format!("{:?}", g.omega).to_lowercase(),
        "bcn_form": format!("{:?}", g.bcn_form).to_lowercase(),
    })
}

fn delta2(g: &Global, m_batch: usize) -> f64 {
    g.delta2.unwrap_or(0.01 * m_batch as f64)
}

fn de_config(g: &Global) -> CliResult<DeConfig> {
    let cfg = DeConfig {
        l_max: g.lmax,
        z_target: g.ztarget,
        omega: match g.omega {
            Omega::Exact => OmegaMode::Exact,
            Omega::Binomial => OmegaMode::Binomial,
        },
        bcn_form: match g.bcn_form {
            Form::Direct => BcnForm::Direct,
            Form::Beta => BcnForm::Beta,
        },
        ..DeConfig::default()
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

fn load_design_relative(spec: &str, base: Option<&Path>) -> CliResult<Design> {
    if let Some(d) = preset_by_name(spec) {
        return Ok(d);
    }
    let mut path = PathBuf::from(spec);
    if let (Some(b), true) = (base, path.is_relative()) {
        path = b.join(path);
    }
    let text = read_text(&path)?;
    with_path(&path, parse_design(&text))
}

fn load_design(spec: &str) -> CliResult<Design> {
    load_design_relative(spec, None)
}

fn load_code(path: &Path) -> CliResult<LiftedCode> {
    let text = read_text(path)?;
    with_path(path, parse_code(&text))
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.digits$}"),
        _ => String::new(),
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn cmd_threshold(g: &Global, a: &ThresholdArgs) -> CliResult<()> {
    let design = load_design(&a.design)?;
    let hops = a.hops.unwrap_or(design.hops);
    let homogeneous = if a.homogeneous {
        true
    } else if a.heterogeneous {
        false
    } else {
        design.homogeneous
    };
    let de = de_config(g)?;
    let m = design.m_batch;
    let ext_total = design.extension_rows();
    let rows: Vec<usize> = match a.rows {
        Some(r) if r > ext_total => {
            return Err(CliError::usage(format!(
                "design has only {ext_total} extension rows"
            )))
        }
        Some(r) => vec![r],
        None => (0..=ext_total).collect(),
    };
    echo_config(&json!({
        "command": "threshold",
        "design": design.name,
        "hops": hops,
        "homogeneous": homogeneous,
        "family": a.family,
        "rows": rows,
        "global": global_json(g, Some(m)),
    }));
    let template = LineNetworkSpec::homogeneous(hops, 0.0, m, design.field)?;
    let family: Option<DistFamily> = match (&a.family, homogeneous) {
        (Some(p), _) => {
            let text = read_text(p)?;
            let f = with_path(p, DistFamily::from_text(&text))?;
            if f.m_batch != m || f.q != design.field.q() {
                return Err(CliError::input(format!(
                    "family has M={} q={} but design has M={m} q={}",
                    f.m_batch,
                    f.q,
                    design.field.q()
                )));
            }
            Some(f)
        }
        (None, true) => None,
        (None, false) => Some(enumerate_family(
            &template,
            g.delta1,
            delta2(g, m),
            GridMode::Heterogeneous,
        )?),
    };
    let mut records = Vec::new();
    for &ext in &rows {
        let (b, delta) = design.with_extension(ext);
        let rate = design_rate(&b, &delta).ok();
        let (eps_star, c_star) = if b.n_c2() == 0 {
            (None, f64::INFINITY)
        } else {
            let runner = DeRunner::new(&b, &delta, m, design.field, de)?;
            match &family {
                Some(f) => (None, threshold(&runner, f).c_star),
                None => match threshold_homogeneous(&runner, &template, HOMOGENEOUS_RESOLUTION) {
                    Some(h) => (Some(h.eps_star), h.c_star),
                    None => (None, f64::INFINITY),
                },
            }
        };
        if c_star.is_infinite() {
            eprintln!("rows={ext}: no threshold");
        }
        records.push((ext, rate, eps_star, finite(c_star)));
    }
    let text = match g.format {
        Format::Csv => {
            let mut s = String::from("ext_rows,rate,eps_star,c_star,gap\n");
            for (ext, rate, eps, c) in &records {
                let gap = c.zip(*rate).map(|(c, r)| c - r);
                s.push_str(&format!(
                    "{ext},{},{},{},{}\n",
                    fmt_opt(*rate, 4),
                    fmt_opt(*eps, 4),
                    c.map_or_else(|| "none".to_string(), |c| format!("{c:.4}")),
                    fmt_opt(gap, 4)
                ));
            }
            s
        }
        Format::Json => {
            let rows: Vec<Value> = records
                .iter()
                .map(|(ext, rate, eps, c)| json!({"ext_rows": ext, "rate": rate, "eps_star": eps, "c_star": c}))
                .collect();
            format!(
                "{}\n",
                serde_json::to_string_pretty(&json!({"design": design.name, "thresholds": rows}))
                    .unwrap()
            )
        }
    };
    emit(None, &text)
}

fn opt_usize(x: Option<usize>, default: usize) -> usize {
    x.unwrap_or(default)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizeFile {
    name: Option<String>,
    m: u32,
    #[serde(rename = "M")]
    m_batch: usize,
    n_v: usize,
    #[serde(rename = "B1")]
    b1: Vec<Vec<u32>>,
    #[serde(rename = "E")]
    hops: usize,
    #[serde(default)]
    homogeneous: bool,
    #[serde(rename = "Z1")]
    z1: usize,
    #[serde(rename = "Z2")]
    z2: usize,
    d_init: Vec<u32>,
    delta_init: Vec<f64>,
    #[serde(default)]
    delta_ext: Vec<f64>,
    b_max: Option<u32>,
    b_max_prime: Option<u32>,
    i_star: Option<usize>,
    ir_star: Option<usize>,
    ic_star: Option<usize>,
    ip_star: Option<usize>,
    ir_star_ext: Option<usize>,
    /// Starting core matrix instead of a random one.
    initial_b2: Option<Vec<Vec<u32>>>,
    /// Fixed core; skips the core search.
    core: Option<FixedCore>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixedCore {
    #[serde(rename = "B2")]
    b2: Vec<Vec<u32>>,
    delta: Vec<f64>,
}

fn cmd_optimize(g: &Global, a: &OptimizeArgs) -> CliResult<()> {
    let text = read_text(&a.config)?;
    let f: OptimizeFile = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", a.config.display())))?;
    let field = FieldSpec::new(f.m)?;
    let mut cfg = OptConfig::new(
        f.d_init.clone(),
        f.delta_init.clone(),
        f.delta_ext.clone(),
        g.seed,
    );
    cfg.i_star = opt_usize(f.i_star, cfg.i_star);
    cfg.ir_star = opt_usize(f.ir_star, cfg.ir_star);
    cfg.ic_star = opt_usize(f.ic_star, cfg.ic_star);
    cfg.ip_star = opt_usize(f.ip_star, cfg.ip_star);
    cfg.ir_star_ext = opt_usize(f.ir_star_ext, cfg.ir_star_ext);
    cfg.b_max = f.b_max.unwrap_or(cfg.b_max);
    cfg.b_max_prime = f.b_max_prime.unwrap_or(cfg.b_max_prime);
    cfg.validate().map_err(|e| CliError::input(e.to_string()))?;
    let de = de_config(g)?;
    echo_config(&json!({
        "command": "optimize",
        "config_file": a.config,
        "opt": serde_json::to_value(&cfg).unwrap(),
        "hops": f.hops,
        "homogeneous": f.homogeneous,
        "fixed_core": f.core.is_some(),
        "global": global_json(g, Some(f.m_batch)),
    }));
    let template = LineNetworkSpec::homogeneous(f.hops, 0.0, f.m_batch, field)?;
    let family;
    let homogeneous_obj;
    let family_obj;
    let objective: &dyn Objective = if f.homogeneous {
        homogeneous_obj = HomogeneousObjective { template, de };
        &homogeneous_obj
    } else {
        family = enumerate_family(
            &template,
            g.delta1,
            delta2(g, f.m_batch),
            GridMode::Heterogeneous,
        )?;
        family_obj = FamilyObjective {
            family: &family,
            m_batch: f.m_batch,
            field,
            de,
        };
        &family_obj
    };
    let mut log_out = match &a.log {
        Some(p) => {
            Some(BufWriter::new(fs::File::create(p).map_err(|e| {
                CliError::input(format!("{}: {e}", p.display()))
            })?))
        }
        None => None,
    };
    let (b2_core, delta_core) = match f.core {
        Some(core) => (core.b2, PuncturingVector::new(core.delta)?),
        None => {
            let resume = match &a.resume {
                Some(p) => Some(
                    serde_json::from_str::<CoreCheckpoint>(&read_text(p)?)
                        .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?,
                ),
                None => None,
            };
            let mut written = 0usize;
            let mut io_err = None;
            let res = optimize_core(
                &f.b1,
                f.n_v,
                f.m_batch,
                &cfg,
                objective,
                f.initial_b2.clone(),
                resume,
                &mut |cp, log| {
                    if let Some(w) = log_out.as_mut() {
                        for e in &log[written..] {
                            if let Err(e) = writeln!(w, "{e}") {
                                io_err = Some(e);
                            }
                        }
                        written = log.len();
                    }
                    if let Some(p) = &a.checkpoint {
                        if let Err(e) = fs::write(p, serde_json::to_string(cp).unwrap()) {
                            io_err = Some(e);
                        }
                    }
                    eprintln!("core round {}: C* = {:.4}", cp.rounds_done, cp.c_min);
                },
            )?;
            if let Some(e) = io_err {
                return Err(CliError::input(e.to_string()));
            }
            if let Some(w) = log_out.as_mut() {
                for e in &res.log[written..] {
                    writeln!(w, "{e}").map_err(|e| CliError::input(e.to_string()))?;
                }
            }
            (res.b2, res.delta)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed.wrapping_add(1));
    let ext = optimize_extension(
        &f.b1,
        &b2_core,
        &delta_core,
        f.n_v,
        f.m_batch,
        &cfg,
        objective,
        &mut rng,
    )?;
    if let Some(w) = log_out.as_mut() {
        for e in &ext.log {
            writeln!(w, "{e}").map_err(|e| CliError::input(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::input(e.to_string()))?;
    }
    for (s, c) in ext.row_thresholds.iter().enumerate() {
        eprintln!("extension row {}: C* = {c:.4}", s + 1);
    }
    let core_rows = b2_core.len();
    let mut b2 = b2_core;
    b2.extend(ext.rows);
    let mut delta = delta_core.values().to_vec();
    delta.extend_from_slice(&cfg.delta_ext);
    let file = ProtoFile {
        name: f.name,
        m: f.m,
        m_batch: f.m_batch,
        n_v: f.n_v,
        n_c1: f.b1.len(),
        n_c2: b2.len(),
        b1: f.b1,
        b2,
        delta,
        z1: f.z1,
        z2: f.z2,
        core_rows: Some(core_rows),
        hops: Some(f.hops),
        homogeneous: f.homogeneous,
    };
    let design = file.into_design()?;
    emit(a.output.as_deref(), &(design_to_json(&design)? + "\n"))
}

/// Lifts, then re-draws precode labels until `T1` has full rank; a
/// persistent deficiency is reported and the code kept.
fn lift_design(
    design: &Design,
    z1: usize,
    z2: usize,
    retry_cap: usize,
    seed: u64,
) -> CliResult<(LiftedCode, Precode)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut code = lift_with_retry(
        &design.b,
        &design.delta,
        design.core_rows,
        z1,
        z2,
        design.m_batch,
        design.field,
        &mut rng,
        retry_cap,
    )?;
    let precode = match Precode::full_rank(&mut code, &mut rng, 10) {
        Ok(p) => p,
        Err(e @ Error::RankDeficientPrecode { .. }) => {
            eprintln!("warning: {e}; effective rate is higher than designed");
            Precode::new(&Gf::new(code.field)?, &code.t1, code.k())
        }
        Err(e) => return Err(e.into()),
    };
    Ok((code, precode))
}

fn cmd_lift(g: &Global, a: &LiftArgs) -> CliResult<()> {
    let design = load_design(&a.design)?;
    let z1 = a.z1.unwrap_or(design.z1);
    let z2 = a.z2.unwrap_or(design.z2);
    echo_config(&json!({
        "command": "lift",
        "design": design.name,
        "Z1": z1,
        "Z2": z2,
        "retry_cap": a.retry_cap,
        "global": global_json(g, None),
    }));
    let (code, precode) = lift_design(&design, z1, z2, a.retry_cap, g.seed)?;
    eprintln!(
        "K={} A={} precode_rank={} batches={}",
        code.k(),
        precode.a(),
        precode.rank(),
        code.num_batches()
    );
    emit(a.output.as_deref(), &(code_to_json(&code)? + "\n"))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NSpec {
    One(usize),
    Range(String),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CapSpec {
    Fixed(usize),
    /// "sqrt" for the default `ceil(2 sqrt(A))`, "unlimited" for none.
    Named(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    /// Design file or preset, lifted with the master seed.
    design: Option<String>,
    /// Lifted code file.
    code: Option<PathBuf>,
    #[serde(rename = "Z1")]
    z1: Option<usize>,
    #[serde(rename = "Z2")]
    z2: Option<usize>,
    retry_cap: Option<usize>,
    eps: Vec<f64>,
    n: Vec<NSpec>,
    trials: usize,
    decoder: String,
    max_inactive: Option<CapSpec>,
    stop_after_failures: Option<usize>,
    payload_len: Option<usize>,
}

/// Integers or `lo:hi[:step]` ranges, inclusive.
pub fn parse_n_list<S: AsRef<str>>(items: &[S]) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for item in items {
        let s = item.as_ref().trim();
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("bad batch count {s:?}")))
        };
        match parts.as_slice() {
            [x] => out.push(num(x)?),
            [lo, hi] | [lo, hi, _] => {
                let step = if parts.len() == 3 { num(parts[2])? } else { 1 };
                if step == 0 {
                    return Err(CliError::usage(format!("zero step in {s:?}")));
                }
                out.extend((num(lo)?..=num(hi)?).step_by(step));
            }
            _ => return Err(CliError::usage(format!("bad batch count {s:?}"))),
        }
    }
    Ok(out)
}

fn fer_json(points: &[FerPoint]) -> String {
    format!("{}\n", serde_json::to_string_pretty(points).unwrap())
}

fn cmd_simulate(g: &Global, a: &SimulateArgs) -> CliResult<()> {
    let text = read_text(&a.plan)?;
    let plan_file: PlanFile = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", a.plan.display())))?;
    let base = a.plan.parent();
    let (code, precode) = match (&plan_file.design, &plan_file.code) {
        (Some(d), None) => {
            let design = load_design_relative(d, base)?;
            lift_design(
                &design,
                plan_file.z1.unwrap_or(design.z1),
                plan_file.z2.unwrap_or(design.z2),
                plan_file.retry_cap.unwrap_or(100),
                g.seed,
            )?
        }
        (None, Some(p)) => {
            let path = base.map_or_else(|| p.clone(), |b| b.join(p));
            let code = load_code(&path)?;
            let precode = Precode::new(&Gf::new(code.field)?, &code.t1, code.k());
            (code, precode)
        }
        _ => {
            return Err(CliError::input(
                "plan needs exactly one of \"design\" or \"code\"",
            ))
        }
    };
    let n_values = match plan_file
        .n
        .iter()
        .map(|n| match n {
            NSpec::One(x) => Ok(vec![*x]),
            NSpec::Range(s) => parse_n_list(&[s]),
        })
        .collect::<CliResult<Vec<_>>>()
    {
        Ok(v) => v.concat(),
        Err(e) => return Err(CliError::input(e.msg)),
    };
    let a_in = precode.a();
    let decoder = match plan_file.decoder.as_str() {
        "bp" => DecoderKind::Bp,
        "inactivation" | "ml" => DecoderKind::Inactivation {
            cap: match &plan_file.max_inactive {
                None => None,
                Some(CapSpec::Fixed(c)) => Some(*c),
                Some(CapSpec::Named(s)) if s == "sqrt" => Some(default_inactive_cap(a_in)),
                Some(CapSpec::Named(s)) if s == "unlimited" => None,
                Some(CapSpec::Named(s)) => {
                    return Err(CliError::input(format!("bad max_inactive {s:?}")))
                }
            },
        },
        other => return Err(CliError::input(format!("unknown decoder {other:?}"))),
    };
    let netspec = LineNetworkSpec::new(plan_file.eps.clone(), code.m_batch, code.field)?;
    let plan = TrialPlan {
        netspec,
        n_values,
        trials: plan_file.trials,
        decoder,
        seed: g.seed,
        stop_after_failures: plan_file.stop_after_failures,
        payload_len: plan_file.payload_len.unwrap_or(1),
        code,
        precode,
    };
    echo_config(&json!({
        "command": "simulate",
        "plan": a.plan,
        "K": plan.code.k(),
        "A": a_in,
        "batches_available": plan.code.num_batches(),
        "eps": plan.netspec.eps,
        "n": plan.n_values,
        "trials": plan.trials,
        "decoder": serde_json::to_value(plan.decoder).unwrap(),
        "stop_after_failures": plan.stop_after_failures,
        "payload_len": plan.payload_len,
        "global": global_json(g, None),
    }));
    let points: Vec<FerPoint> = if plan.trials == 0 {
        Vec::new()
    } else {
        plan.validate()?;
        let gf = Gf::new(plan.code.field)?;
        let mut log = match &a.trial_log {
            Some(p) => {
                Some(BufWriter::new(fs::File::create(p).map_err(|e| {
                    CliError::input(format!("{}: {e}", p.display()))
                })?))
            }
            None => None,
        };
        let mut points = Vec::new();
        for (&n, bound) in plan.n_values.iter().zip(plan_bounds(&plan)) {
            let outcomes = run_point(&gf, &plan, n)?;
            if let Some(w) = log.as_mut() {
                for (t, o) in outcomes.iter().enumerate() {
                    let line = json!({"n": n, "trial": t, "outcome": o});
                    writeln!(w, "{line}").map_err(|e| CliError::input(e.to_string()))?;
                }
            }
            let p = summarize(n, &outcomes, bound, a_in);
            if p.mismatches > 0 {
                return Err(CliError::input(format!(
                    "decoder reported {} wrong packets",
                    p.mismatches
                )));
            }
            points.push(p);
        }
        if let Some(w) = log.as_mut() {
            w.flush().map_err(|e| CliError::input(e.to_string()))?;
        }
        points
    };
    let text = match g.format {
        Format::Csv => fer_csv(&points),
        Format::Json => fer_json(&points),
    };
    emit(a.output.as_deref(), &text)
}

fn cmd_mlbound(g: &Global, a: &MlboundArgs) -> CliResult<()> {
    let field = FieldSpec::new(a.m)?;
    let spec = LineNetworkSpec::new(a.eps.clone(), a.m_batch, field)?;
    let n_values = parse_n_list(&a.n)?;
    echo_config(&json!({
        "command": "mlbound",
        "M": a.m_batch,
        "m": a.m,
        "eps": a.eps,
        "A": a.a,
        "n": n_values,
        "mc_trials": a.mc_trials,
        "global": global_json(g, None),
    }));
    let bound = ml_bound_curve(&line_network_dist(&spec), a.a, &n_values);
    let mc: Option<Vec<f64>> = match a.mc_trials {
        Some(t) if t > 0 => Some(
            n_values
                .iter()
                .map(|&n| rank_sum_failure_mc(&spec, n, a.a, t, g.seed))
                .collect::<pbnc_core::Result<_>>()?,
        ),
        _ => None,
    };
    let text = match g.format {
        Format::Csv => {
            let mut s = String::from(if mc.is_some() {
                "N,ml_bound,mc,mc_sigma\n"
            } else {
                "N,ml_bound\n"
            });
            for (i, (&n, b)) in n_values.iter().zip(&bound).enumerate() {
                match (&mc, a.mc_trials) {
                    (Some(mc), Some(t)) => {
                        let p = mc[i];
                        let sigma = (p * (1.0 - p) / t as f64).sqrt();
                        s.push_str(&format!("{n},{b:.12e},{p:.6e},{sigma:.3e}\n"));
                    }
                    _ => s.push_str(&format!("{n},{b:.12e}\n")),
                }
            }
            s
        }
        Format::Json => {
            let rows: Vec<Value> = n_values
                .iter()
                .zip(&bound)
                .enumerate()
                .map(|(i, (n, b))| json!({"N": n, "ml_bound": b, "mc": mc.as_ref().map(|m| m[i])}))
                .collect();
            format!("{}\n", serde_json::to_string_pretty(&rows).unwrap())
        }
    };
    emit(a.output.as_deref(), &text)
}

fn cmd_encode(g: &Global, a: &EncodeArgs) -> CliResult<()> {
    let code = load_code(&a.code)?;
    let gf = Gf::new(code.field)?;
    let precode = Precode::new(&gf, &code.t1, code.k());
    let file = fs::File::open(&a.input)
        .map_err(|e| CliError::input(format!("{}: {e}", a.input.display())))?;
    let packets = with_path(
        &a.input,
        PacketFile::read_from(std::io::BufReader::new(file)),
    )?;
    if packets.m != code.field.m {
        return Err(CliError::input(format!(
            "packets are over GF(2^{}), code over GF(2^{})",
            packets.m, code.field.m
        )));
    }
    if packets.packets.len() != precode.a() {
        return Err(CliError::input(format!(
            "code takes {} input packets, file has {}",
            precode.a(),
            packets.packets.len()
        )));
    }
    let n = a.batches.unwrap_or(code.num_batches());
    let netspec = if a.eps.is_empty() {
        None
    } else {
        Some(LineNetworkSpec::new(
            a.eps.clone(),
            code.m_batch,
            code.field,
        )?)
    };
    echo_config(&json!({
        "command": "encode",
        "code": a.code,
        "input": a.input,
        "eps": a.eps,
        "batches": n,
        "T": packets.t,
        "global": global_json(g, None),
    }));
    let rx = transmit(
        &gf,
        &code,
        &precode,
        &packets.packets,
        netspec.as_ref(),
        n,
        g.seed,
    )?;
    emit(Some(&a.output), &serde_json::to_string(&rx).unwrap())
}

fn cmd_decode(g: &Global, a: &DecodeArgs) -> CliResult<()> {
    let code = load_code(&a.code)?;
    let gf = Gf::new(code.field)?;
    let precode = Precode::new(&gf, &code.t1, code.k());
    let text = read_text(&a.input)?;
    let rx: ReceivedFile = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", a.input.display())))?;
    echo_config(&json!({
        "command": "decode",
        "code": a.code,
        "input": a.input,
        "decoder": format!("{:?}", a.decoder).to_lowercase(),
        "max_inactive": a.max_inactive,
        "global": global_json(g, None),
    }));
    let eqs = with_path(&a.input, received_equations(&gf, &code, &rx))?;
    let k = code.k();
    let res = match a.decoder {
        Decoder::Bp => bp_decode(&gf, &eqs, &code.t1, k, rx.t),
        Decoder::Inactivation => inactivation_decode(&gf, &eqs, &code.t1, k, rx.t, a.max_inactive),
    };
    let info = precode.info_positions();
    let recovered = info.iter().filter(|&&p| res.recovered[p].is_some()).count();
    eprintln!(
        "recovered {recovered} of {} input packets, {} inactivated",
        info.len(),
        res.inactivated
    );
    if recovered < info.len() {
        return Err(CliError::input(format!(
            "decoding failed: {recovered} of {} input packets recovered",
            info.len()
        )));
    }
    let out = PacketFile {
        t: rx.t,
        m: code.field.m,
        packets: info
            .iter()
            .map(|&p| res.recovered[p].clone().expect("checked"))
            .collect(),
    };
    let file = fs::File::create(&a.output)
        .map_err(|e| CliError::input(format!("{}: {e}", a.output.display())))?;
    let mut w = BufWriter::new(file);
    out.write_to(&mut w)?;
    w.flush().map_err(|e| CliError::input(e.to_string()))
}

fn cmd_family_export(
    g: &Global,
    m_batch: usize,
    m: u32,
    hops: usize,
    homogeneous: bool,
    output: Option<&Path>,
) -> CliResult<()> {
    let field = FieldSpec::new(m)?;
    let template = LineNetworkSpec::homogeneous(hops, 0.0, m_batch, field)?;
    let mode = if homogeneous {
        GridMode::Homogeneous
    } else {
        GridMode::Heterogeneous
    };
    echo_config(&json!({
        "command": "family export",
        "M": m_batch,
        "m": m,
        "hops": hops,
        "homogeneous": homogeneous,
        "global": global_json(g, Some(m_batch)),
    }));
    let family = enumerate_family(&template, g.delta1, delta2(g, m_batch), mode)?;
    emit(output, &family.to_text())
}
