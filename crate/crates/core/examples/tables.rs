use std::time::Instant;

use pbnc_core::de::{threshold, threshold_homogeneous, DeConfig, DeRunner, OmegaMode};
use pbnc_core::io::{design_example_1, design_example_2};
use pbnc_core::network::{enumerate_family, GridMode, LineNetworkSpec};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "2".into());
    let omega = match std::env::args().nth(2).as_deref() {
        Some("exact") => OmegaMode::Exact,
        _ => OmegaMode::Binomial,
    };
    let delta2: f64 = std::env::args().nth(3).map_or(0.08, |s| s.parse().unwrap());
    let cfg = DeConfig { omega, ..DeConfig::default() };
    if which == "2" {
        let d = design_example_2();
        let t = LineNetworkSpec::homogeneous(2, 0.0, 16, d.field).unwrap();
        for ext in 0..=8 {
            let (b, delta) = d.with_extension(ext);
            let r = DeRunner::new(&b, &delta, 16, d.field, cfg).unwrap();
            let st = Instant::now();
            let th = threshold_homogeneous(&r, &t, 1e-4);
            println!("{ext} {th:?} {:?}", st.elapsed());
        }
    } else {
        let d = design_example_1();
        let t = LineNetworkSpec::homogeneous(3, 0.0, 8, d.field).unwrap();
        let st = Instant::now();
        let fam = enumerate_family(&t, 0.01, delta2, GridMode::Heterogeneous).unwrap();
        println!("family {} in {:?}", fam.len(), st.elapsed());
        for ext in 0..=6 {
            let (b, delta) = d.with_extension(ext);
            let r = DeRunner::new(&b, &delta, 8, d.field, cfg).unwrap();
            let st = Instant::now();
            let th = threshold(&r, &fam);
            println!("{ext} {th:?} {:?}", st.elapsed());
        }
    }
}
