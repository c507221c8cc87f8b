//! Timing / agreement probe for the simulator. Ignored by default.

mod common;

use omega_dividends::optimizer::optimize;
use omega_dividends::policy::ValueFunction;
use omega_dividends::sim::{simulate_value, SimConfig, SimMode};
use std::time::Instant;

#[test]
#[ignore]
fn probe_agreement_and_timing() {
    let table = common::reference_table();
    let (barriers, _) = optimize(table, common::BETA).unwrap();
    let vf = ValueFunction::new(table, barriers).unwrap();
    let model = common::reference_model();
    let omega = common::reference_omega();
    println!("barriers: c1*={} c2*={}", barriers.c1, barriers.c2);
    for x0 in [-0.5, 0.0, barriers.c1, 0.5 * (barriers.c1 + barriers.c2), barriers.c2 + 1.0] {
        let analytic = vf.value(x0);
        for mode in [SimMode::KillingClock, SimMode::DiscountWeight] {
            let cfg = SimConfig {
                n_paths: 100_000,
                dt: 1e-3,
                t_max: 560.0,
                seed: 42,
                mode,
            };
            let t0 = Instant::now();
            let est = simulate_value(&model, &omega, common::Q, &barriers, x0, &cfg).unwrap();
            let z = (est.estimate - analytic) / est.stderr;
            println!(
                "x0={x0:+.3} mode={mode:?}: est={:.5} +/- {:.5} analytic={analytic:.5} z={z:+.2} [{} ms]",
                est.estimate,
                est.stderr,
                t0.elapsed().as_millis()
            );
        }
    }
}
