//! Brute-force robust quantile minimization over an infinity-Wasserstein
//! ball, next to the closed-form location shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rqiqn::eval::{
    dro_robust_minimizer_bruteforce, dro_worst_case_loss, empirical_quantile_slot, DroOracleConfig,
    EmpiricalTargetLaw,
};
use rqiqn::robust::WassersteinOrder;

fn main() -> rqiqn::Result<()> {
    let cfg = DroOracleConfig::default();
    let law = EmpiricalTargetLaw::new(vec![-1.3, 0.2, 0.4, 2.5, 3.1])?;
    let (tau, eps) = (0.8, 0.6);
    let nominal = empirical_quantile_slot(&law, tau)?;
    let robust = dro_robust_minimizer_bruteforce(&law, tau, eps, &cfg)?;
    println!("nominal {nominal:.4}, robust {robust:.4}, shift {:.4}, eps(2tau-1) = {:.4}", robust - nominal, eps * (2.0 * tau - 1.0));
    for q in [1.0, 2.0, 2.5, 2.86, 3.2] {
        println!(
            "  q = {q:<5} worst-case loss {:.4}, nominal loss {:.4}",
            dro_worst_case_loss(&law, q, tau, eps, WassersteinOrder::Infinity)?,
            law.check_risk(q, tau)
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=10);
        let law = EmpiricalTargetLaw::new((0..n).map(|_| rng.random_range(-5.0..5.0)).collect())?;
        let tau = rng.random_range(0.1..0.9);
        let eps = rng.random_range(0.0..2.0);
        let q = dro_robust_minimizer_bruteforce(&law, tau, eps, &cfg)?;
        worst = worst.max((q - empirical_quantile_slot(&law, tau)? - eps * (2.0 * tau - 1.0)).abs());
    }
    println!("100 random laws: max |brute force - closed form| = {worst:.2e}");
    Ok(())
}
