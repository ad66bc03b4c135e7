//! Tabulates the robust location corrections and the radius schedule.

use rqiqn::robust::{delta_bounded_2, delta_raw, epsilon_schedule, RobustConfig, WassersteinOrder};

fn main() {
    let eps = 1.0;
    println!("{:>6} {:>10} {:>10} {:>10}", "tau", "inf", "two", "bounded");
    for tau in [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99] {
        println!(
            "{tau:>6.2} {:>10.4} {:>10.4} {:>10.4}",
            delta_raw(tau, eps, WassersteinOrder::Infinity),
            delta_raw(tau, eps, WassersteinOrder::Two),
            delta_bounded_2(tau, eps),
        );
    }

    let cfg = RobustConfig {
        epsilon0: 1.0,
        sharpness: 1.2e-6,
        midpoint: 3.75e6,
        ..Default::default()
    };
    println!("\nradius schedule (eps0 = 1, k = 1.2e-6, t0 = 3.75e6)");
    for t in [0.0, 1e6, 2e6, 3.75e6, 5e6, 7.5e6, 1e7] {
        println!("  t = {t:>9.0}  eps = {:.5}", epsilon_schedule(t, &cfg));
    }
}
