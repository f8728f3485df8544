use pbnc_core::codec::{inactivation_decode, Packets, Precode};
use pbnc_core::de::{threshold_homogeneous, DeConfig, DeRunner, HOMOGENEOUS_RESOLUTION};
use pbnc_core::io::{code_to_json, design_example_1, design_example_2, parse_code};
use pbnc_core::optimizer::lift_with_retry;
use pbnc_core::sim::{received_equations, run_fer, transmit, DecoderKind, TrialPlan};
use pbnc_core::{Gf, LiftedCode, LineNetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lift_example_1() -> (LiftedCode, Precode) {
    let d = design_example_1();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut code =
        lift_with_retry(&d.b, &d.delta, d.core_rows, d.z1, d.z2, d.m_batch, d.field, &mut rng, 100).unwrap();
    let precode = Precode::full_rank(&mut code, &mut rng, 10).unwrap();
    (code, precode)
}

#[test]
fn example_1_lifts_to_published_size() {
    let (code, precode) = lift_example_1();
    assert_eq!(code.k(), 400);
    assert_eq!(code.a(), 250);
    assert_eq!(precode.a(), 250);
    assert_eq!(precode.rank(), 150);
    let back = parse_code(&code_to_json(&code).unwrap()).unwrap();
    assert_eq!(back, code);
}

#[test]
fn lossy_transmission_decodes_to_inputs() {
    let (code, precode) = lift_example_1();
    let d = design_example_1();
    let gf = Gf::new(d.field).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs: Packets = (0..precode.a()).map(|_| (0..16).map(|_| rng.gen()).collect()).collect();
    let net = LineNetworkSpec::homogeneous(3, 0.2, d.m_batch, d.field).unwrap();
    let file = transmit(&gf, &code, &precode, &inputs, Some(&net), code.num_batches(), 11).unwrap();
    let eqs = received_equations(&gf, &code, &file).unwrap();
    let res = inactivation_decode(&gf, &eqs, &code.t1, code.k(), 16, None);
    assert!(res.success);
    let got: Vec<&Vec<u8>> = precode
        .info_positions()
        .iter()
        .map(|&p| res.recovered[p].as_ref().unwrap())
        .collect();
    assert!(got.iter().zip(&inputs).all(|(a, b)| *a == b));
}

#[test]
fn fer_runs_are_deterministic() {
    let (code, precode) = lift_example_1();
    let d = design_example_1();
    let plan = TrialPlan {
        netspec: LineNetworkSpec::homogeneous(3, 0.2, d.m_batch, d.field).unwrap(),
        code,
        precode,
        n_values: vec![50, 60],
        trials: 40,
        decoder: DecoderKind::Bp,
        seed: 9,
        stop_after_failures: None,
        payload_len: 1,
    };
    let a = run_fer(&plan).unwrap();
    let b = run_fer(&plan).unwrap();
    assert_eq!(a, b);
    assert!(a[0].fer >= a[1].fer);
}

#[test]
fn example_2_first_extension_threshold() {
    let d = design_example_2();
    let (b, delta) = d.with_extension(1);
    let runner = DeRunner::new(&b, &delta, d.m_batch, d.field, DeConfig::default()).unwrap();
    let template = LineNetworkSpec::homogeneous(2, 0.0, d.m_batch, d.field).unwrap();
    let t = threshold_homogeneous(&runner, &template, HOMOGENEOUS_RESOLUTION).unwrap();
    assert!((t.eps_star - 0.2588).abs() <= 0.005, "{t:?}");
    assert!((t.c_star - 10.8829).abs() <= 0.05, "{t:?}");
}
