use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{argument, Result};
use crate::math;
use crate::rng::standard_normal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Whether a forward pass differentiates a module's parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Trainable,
    Detached,
}

impl Mode {
    pub(crate) fn param(self, tape: &mut Tape<'_>, id: ParamId) -> Result<Var> {
        match self {
            Mode::Trainable => tape.param(id),
            Mode::Detached => tape.param_detached(id),
        }
    }
}

/// Fully connected layer `x·W + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    /// He-normal weights, zero bias.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Linear> {
        if inputs == 0 || outputs == 0 {
            return Err(argument(format!("layer {name} needs positive widths, got {inputs}->{outputs}")));
        }
        let std = math::sqrt(2.0 / inputs as f64);
        let w: Vec<f64> = (0..inputs * outputs).map(|_| std * standard_normal(rng)).collect();
        let weight = store.add(format!("{name}.weight"), Tensor::matrix(inputs, outputs, w)?, false);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[outputs]), false);
        Ok(Linear { weight, bias, inputs, outputs })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, mode: Mode) -> Result<Var> {
        let w = mode.param(tape, self.weight)?;
        let b = mode.param(tape, self.bias)?;
        let xw = tape.matmul(x, w)?;
        tape.add_bias(xw, b)
    }
}

/// A stack of [`Linear`] layers with a shared hidden nonlinearity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    /// Apply the nonlinearity after the last layer too.
    pub activate_output: bool,
}

impl Mlp {
    /// `widths` lists every width from input to output.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        activation: Activation,
        activate_output: bool,
        rng: &mut R,
    ) -> Result<Mlp> {
        if widths.len() < 2 {
            return Err(argument(format!("{name} needs at least an input and an output width")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::init(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp { layers, activation, activate_output })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, mut x: Var, mode: Mode) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, x, mode)?;
            if i < last || self.activate_output {
                x = self.activation.apply(tape, x)?;
            }
        }
        Ok(x)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    pub fn describe(&self) -> String {
        let mut s = format!("{}", self.input_dim());
        for l in &self.layers {
            s.push_str(&format!("->{}", l.outputs));
        }
        s
    }
}
