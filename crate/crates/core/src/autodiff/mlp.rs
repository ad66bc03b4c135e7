use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Anything holding an ordered, fixed list of parameters.
pub trait Parameters {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    /// Records every parameter on the tape, in `params()` order.
    fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Overwrites every parameter with the matching one from `other`.
    fn copy_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.value.data_mut().copy_from_slice(src.value.data());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    /// Uniform `±1/√fan_in` initialization for weight and bias.
    pub fn new(name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let b = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            weight: Param {
                name: format!("{name}.weight"),
                value: Tensor::matrix(fan_in, fan_out, w).expect("sized above"),
            },
            bias: Param {
                name: format!("{name}.bias"),
                value: Tensor::vector(b),
            },
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.value.shape()[1]
    }

    /// `x·W + b` with `vars = [W, b]` as returned by binding this layer.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let h = tape.matmul(x, vars[0])?;
        tape.add(h, vars[1])
    }
}

/// Fully connected stack with rectifiers between layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Linear>,
    activate_last: bool,
}

impl Mlp {
    /// `widths = [input, hidden.., output]`.
    pub fn new(
        name: &str,
        widths: &[usize],
        activate_last: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Ok(Self {
            layers,
            activate_last,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("nonempty").fan_out()
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    /// `vars` are this network's bound parameters (two per layer).
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, &vars[2 * i..2 * i + 2], h)?;
            if i < last || self.activate_last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

impl Parameters for Mlp {
    fn params(&self) -> Vec<&Param> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

impl Parameters for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_param_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new("m", &[3, 5, 2], false, &mut rng).unwrap();
        assert_eq!(mlp.param_count(), 3 * 5 + 5 + 5 * 2 + 2);
        let mut tape = Tape::new();
        let vars = mlp.bind(&mut tape, true);
        let x = tape.constant(Tensor::zeros(&[4, 3]));
        let y = mlp.forward(&mut tape, &vars, x).unwrap();
        assert_eq!(tape.value(y).shape(), &[4, 2]);
    }

    #[test]
    fn rejects_degenerate_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Mlp::new("m", &[3], false, &mut rng).is_err());
        assert!(Mlp::new("m", &[3, 0, 1], false, &mut rng).is_err());
    }
}
