//! Convolution and residual building blocks over a [`ParamStore`].

use pansharp_tensor::{Padding, Result as TensorResult, Shape, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::params::{Bound, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Normal with standard deviation `sqrt(2 / fan_in)`.
    KaimingFanIn,
    Zero,
}

/// Stride-1 "same" convolution with replicate padding.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
    pub cin: usize,
    pub cout: usize,
}

impl Conv {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        kernel: usize,
        cin: usize,
        cout: usize,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let shape = Shape::new(kernel, kernel, cin, cout);
        let weight = match init {
            Init::Zero => Tensor::zeros(shape),
            Init::KaimingFanIn => {
                let std = (2.0 / (kernel * kernel * cin) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                Tensor::from_fn(shape, |_, _, _, _| normal.sample(rng))
            }
        };
        let weight = store.insert(format!("{name}.weight"), weight)?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(Shape::vector(cout)))?;
        Ok(Conv {
            weight,
            bias,
            kernel,
            cin,
            cout,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> TensorResult<Var> {
        tape.conv2d(x, p.var(self.weight), p.var(self.bias), Padding::Replicate)
    }
}

/// `x + conv(relu(conv(x)))`.
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub first: Conv,
    pub second: Conv,
}

impl ResBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, width: usize, rng: &mut R) -> Result<Self> {
        Ok(ResBlock {
            first: Conv::new(store, &format!("{name}.conv1"), 3, width, width, Init::KaimingFanIn, rng)?,
            second: Conv::new(store, &format!("{name}.conv2"), 3, width, width, Init::KaimingFanIn, rng)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> TensorResult<Var> {
        let h = self.first.forward(tape, p, x)?;
        let h = tape.relu(h)?;
        let h = self.second.forward(tape, p, h)?;
        tape.add(x, h)
    }
}

/// Apply `convs` in order with a ReLU between consecutive layers (none after the last).
pub fn conv_stack(convs: &[Conv], tape: &mut Tape, p: &Bound, x: Var) -> TensorResult<Var> {
    let mut h = x;
    for (i, c) in convs.iter().enumerate() {
        h = c.forward(tape, p, h)?;
        if i + 1 < convs.len() {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}
