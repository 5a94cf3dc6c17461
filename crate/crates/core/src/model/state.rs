use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::layers::init::{filled_vec, glorot_uniform, ones_vec, zeros_vec};

use super::graph::{self, ParamBinding};
use super::layout::{parameter_layout, Init};
use super::spec::ModelSpec;

/// A model: its spec plus every learned tensor, keyed by layout name.
#[derive(Debug, Clone)]
pub struct ModelState {
    spec: ModelSpec,
    params: BTreeMap<String, Tensor>,
    step_count: u64,
}

impl ModelState {
    /// Initialize parameters for `spec`, deterministically from `spec.seed`:
    /// Glorot-uniform matrices, zero biases, forget-gate bias 1.0.
    pub fn build(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut params = BTreeMap::new();
        for def in parameter_layout(&spec) {
            let tensor = match def.init {
                Init::Glorot => glorot_uniform(&mut rng, def.shape[0], def.shape[1]),
                Init::Zeros => zeros_vec(def.shape[0]),
                Init::Ones => ones_vec(def.shape[0]),
                Init::Const(v) => filled_vec(def.shape[0], v),
            };
            params.insert(def.name, tensor);
        }
        Ok(ModelState { spec, params, step_count: 0 })
    }

    /// Reassemble a state from raw tensors (checkpoint load path); the
    /// inventory must match the spec's layout exactly.
    pub fn from_parts(
        spec: ModelSpec,
        params: BTreeMap<String, Tensor>,
        step_count: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let layout = parameter_layout(&spec);
        if layout.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, got {}",
                layout.len(),
                params.len()
            )));
        }
        for def in &layout {
            let Some(tensor) = params.get(&def.name) else {
                return Err(Error::Checkpoint(format!("missing parameter `{}`", def.name)));
            };
            if tensor.shape() != def.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    def.name,
                    tensor.shape(),
                    def.shape
                )));
            }
        }
        Ok(ModelState { spec, params, step_count })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn set_step_count(&mut self, steps: u64) {
        self.step_count = steps;
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    /// Replace one tensor, keeping its shape. Used by the optimizer and
    /// by tests that pin specific weights.
    pub fn set_param(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let Some(slot) = self.params.get_mut(name) else {
            return Err(Error::Contract(format!("unknown parameter `{name}`")));
        };
        if slot.shape() != tensor.shape() {
            return Err(Error::Dimension {
                op: "set_param",
                lhs: slot.shape().to_vec(),
                rhs: tensor.shape().to_vec(),
            });
        }
        *slot = tensor;
        Ok(())
    }

    /// Insert every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> ParamBinding {
        let map = self
            .params
            .iter()
            .map(|(name, tensor)| (name.clone(), tape.leaf(tensor.clone(), requires_grad)))
            .collect();
        ParamBinding::new(map)
    }

    /// Build the forward graph on `tape` for input node `x` (`[k, 1]`).
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        params: &ParamBinding,
        x: NodeId,
        dropout: graph::DropoutCtx<'_>,
    ) -> Result<NodeId> {
        graph::forward(tape, params, &self.spec, x, dropout)
    }

    /// Evaluation-mode forward pass: `[k, 1]` window in, `[h]` forecast out.
    pub fn forward(&self, window: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(window.clone());
        let binding = self.bind(&mut tape, false);
        let out = graph::forward(&mut tape, &binding, &self.spec, x, None)?;
        Ok(tape.value(out).clone())
    }

    /// Evaluation-mode forecast from a raw window slice.
    pub fn predict(&self, window: &[f64]) -> Result<Vec<f64>> {
        if window.len() != self.spec.past_history {
            return Err(Error::Dimension {
                op: "predict",
                lhs: vec![window.len()],
                rhs: vec![self.spec.past_history],
            });
        }
        Ok(self.forward(&Tensor::column(window))?.into_data())
    }
}
