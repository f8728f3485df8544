use std::time::Instant;

use pbnc_core::codec::Precode;
use pbnc_core::io::design_example_1;
use pbnc_core::network::{line_network_dist, LineNetworkSpec};
use pbnc_core::optimizer::lift_with_retry;
use pbnc_core::sim::{fer_csv, run_fer, DecoderKind, TrialPlan};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let trials: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let eps: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let ml = args.get(3).is_some_and(|s| s == "ml");
    let d = design_example_1();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut code = lift_with_retry(&d.b, &d.delta, d.core_rows, d.z1, d.z2, d.m_batch, d.field, &mut rng, 100).unwrap();
    let precode = Precode::full_rank(&mut code, &mut rng, 10).unwrap();
    let netspec = LineNetworkSpec::homogeneous(d.hops, eps, d.m_batch, d.field).unwrap();
    let c = line_network_dist(&netspec).capacity();
    let a = precode.a();
    println!("K={} A={} batches={} C={c:.4} 1.5A/C={:.1}", code.k(), a, code.num_batches(), 1.5 * a as f64 / c);
    let lo = (a as f64 / c).floor() as usize;
    let hi = ((1.5 * a as f64 / c).ceil() as usize).min(code.num_batches());
    let n_values: Vec<usize> = (lo..=hi).step_by(3).collect();
    let plan = TrialPlan {
        netspec,
        code,
        precode,
        n_values,
        trials,
        decoder: if ml { DecoderKind::Inactivation { cap: None } } else { DecoderKind::Bp },
        seed: 7,
        stop_after_failures: None,
        payload_len: 1,
    };
    let t = Instant::now();
    let pts = run_fer(&plan).unwrap();
    print!("{}", fer_csv(&pts));
    println!("{:?}", t.elapsed());
}
