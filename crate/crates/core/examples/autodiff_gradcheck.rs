//! Builds a small computation on the tape and compares reverse-mode gradients
//! with central finite differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rqiqn::autodiff::{Mlp, Parameters, Tape, Tensor};

fn loss(net: &Mlp, x: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let vars = net.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let y = net.forward(&mut tape, &vars, xv).unwrap();
    let sq = tape.hadamard(y, y).unwrap();
    let m = tape.mean(sq).unwrap();
    tape.value(m).item().unwrap()
}

fn main() -> rqiqn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut net = Mlp::new("net", &[3, 16, 16, 2], false, &mut rng)?;
    let x = Tensor::matrix(4, 3, vec![0.1, -0.4, 0.9, 0.3, 0.2, -0.7, 1.0, 0.0, 0.5, -0.2, 0.8, 0.1])?;

    let mut tape = Tape::new();
    let vars = net.bind(&mut tape, true);
    let xv = tape.constant(x.clone());
    let y = net.forward(&mut tape, &vars, xv)?;
    let sq = tape.hadamard(y, y)?;
    let out = tape.mean(sq)?;
    println!("loss = {:.6}", tape.value(out).item().unwrap());
    let mut grads = tape.backward(out)?;

    let h = 1e-6;
    for (pi, var) in vars.iter().enumerate() {
        let g = grads.take(*var).expect("tracked parameter");
        let mut worst: f64 = 0.0;
        for k in 0..g.len() {
            let orig = net.params()[pi].value.data()[k];
            net.params_mut()[pi].value.data_mut()[k] = orig + h;
            let up = loss(&net, &x);
            net.params_mut()[pi].value.data_mut()[k] = orig - h;
            let down = loss(&net, &x);
            net.params_mut()[pi].value.data_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - g.data()[k]).abs() / fd.abs().max(g.data()[k].abs()).max(1e-8));
        }
        println!("{:<16} {:>4} entries, max relative error {worst:.2e}", net.params()[pi].name, g.len());
    }
    Ok(())
}
