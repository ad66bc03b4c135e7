use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Linear, Mlp, Param, Parameters, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Anything that maps `(observation, fraction)` pairs to per-action quantiles.
pub trait QuantileFunction {
    fn action_count(&self) -> usize;

    /// `observations` is `[B, d]`; `taus` holds `B·n` fractions, `n` per
    /// observation. Returns `[B·n, A]` with rows ordered observation-major.
    fn quantiles(&self, observations: &Tensor, taus: &[f64], n: usize) -> Result<Tensor>;
}

/// Fraction-conditioned quantile network: state MLP, cosine fraction
/// embedding, Hadamard merge, then a head MLP with one output per action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileNetwork {
    state: Mlp,
    fraction: Linear,
    head: Mlp,
    embedding_dim: usize,
}

impl QuantileNetwork {
    pub fn new(
        observation_dim: usize,
        action_count: usize,
        hidden_width: usize,
        embedding_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if action_count == 0 {
            return Err(Error::Config("network needs at least one action".into()));
        }
        Ok(Self {
            state: Mlp::new("state", &[observation_dim, hidden_width, hidden_width], true, rng)?,
            fraction: Linear::new("fraction", embedding_dim, hidden_width, rng),
            head: Mlp::new("head", &[hidden_width, hidden_width, action_count], false, rng)?,
            embedding_dim,
        })
    }

    pub fn observation_dim(&self) -> usize {
        self.state.input_width()
    }

    /// Records the forward pass; `vars` come from [`Parameters::bind`].
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        observations: &Tensor,
        taus: &[f64],
        n: usize,
    ) -> Result<Var> {
        let (batch, dim) = match observations.shape() {
            [b, d] => (*b, *d),
            s => return Err(Error::Shape(format!("observations must be [B, d], got {s:?}"))),
        };
        if dim != self.observation_dim() {
            return Err(Error::Shape(format!(
                "observation width {dim}, network expects {}",
                self.observation_dim()
            )));
        }
        if taus.len() != batch * n {
            return Err(Error::Shape(format!(
                "{} fractions for {batch} observations x {n}",
                taus.len()
            )));
        }
        let n_state = self.state.params().len();
        let (state_vars, rest) = vars.split_at(n_state);
        let (fraction_vars, head_vars) = rest.split_at(2);

        let x = tape.constant(observations.clone());
        let s = self.state.forward(tape, state_vars, x)?;
        let s = tape.repeat_rows(s, n)?;

        let t = tape.constant(Tensor::vector(taus.to_vec()));
        let phi = tape.cosine_basis(t, self.embedding_dim)?;
        let phi = self.fraction.forward(tape, fraction_vars, phi)?;
        let phi = tape.relu(phi);

        let merged = tape.hadamard(s, phi)?;
        self.head.forward(tape, head_vars, merged)
    }
}

impl QuantileFunction for QuantileNetwork {
    fn action_count(&self) -> usize {
        self.head.output_width()
    }

    fn quantiles(&self, observations: &Tensor, taus: &[f64], n: usize) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let out = self.forward(&mut tape, &vars, observations, taus, n)?;
        Ok(tape.value(out).clone())
    }
}

impl Parameters for QuantileNetwork {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.state.params();
        p.extend(self.fraction.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.state.params_mut();
        p.extend(self.fraction.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}

/// The online or target network of an agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Quantile(QuantileNetwork),
    /// Scalar action values `Q(s, ·)` for the DQN baseline.
    Scalar(Mlp),
}

impl Model {
    pub fn action_count(&self) -> usize {
        match self {
            Model::Quantile(q) => q.action_count(),
            Model::Scalar(m) => m.output_width(),
        }
    }
}

impl Parameters for Model {
    fn params(&self) -> Vec<&Param> {
        match self {
            Model::Quantile(q) => q.params(),
            Model::Scalar(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Model::Quantile(q) => q.params_mut(),
            Model::Scalar(m) => m.params_mut(),
        }
    }
}

/// Stacks equal-width rows into a `[B, d]` tensor.
pub fn stack_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut count = 0;
    let mut width = None;
    for r in rows {
        match width {
            None => width = Some(r.len()),
            Some(w) if w != r.len() => {
                return Err(Error::Shape(format!("row of width {} among rows of width {w}", r.len())))
            }
            _ => {}
        }
        data.extend_from_slice(r);
        count += 1;
    }
    Tensor::matrix(count, width.unwrap_or(0), data)
}
