//! LSTM cell and stack.
//!
//! A cell computes the usual four-gate recurrence: forget/input/output
//! gates through a sigmoid, a tanh candidate, then
//! `c_t = f ⊙ c_prev + i ⊙ candidate` and `h_t = o ⊙ tanh(c_t)`.
//! The stack feeds each layer the full hidden sequence of the layer
//! below, starting from zero hidden and cell state.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

/// Tape handles for one gate: input weight `[d_in, d]`, recurrent
/// weight `[d, d]`, bias `[d]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmGateIds {
    pub input_weight: NodeId,
    pub recurrent_weight: NodeId,
    pub bias: NodeId,
}

/// Tape handles for one LSTM layer's four gates.
#[derive(Debug, Clone, Copy)]
pub struct LstmLayerIds {
    pub forget: LstmGateIds,
    pub input: LstmGateIds,
    pub output: LstmGateIds,
    pub candidate: LstmGateIds,
}

/// One recurrence step. `x_t` is `[1, d_in]`, `h_prev`/`c_prev` are `[1, d]`.
pub fn lstm_cell(
    tape: &mut Tape,
    layer: &LstmLayerIds,
    x_t: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let gate_pre = |tape: &mut Tape, gate: &LstmGateIds| -> Result<NodeId> {
        let from_input = tape.matmul(x_t, gate.input_weight)?;
        let from_hidden = tape.matmul(h_prev, gate.recurrent_weight)?;
        let sum = tape.add(from_input, from_hidden)?;
        tape.add_row_bias(sum, gate.bias)
    };
    let f_pre = gate_pre(tape, &layer.forget)?;
    let i_pre = gate_pre(tape, &layer.input)?;
    let o_pre = gate_pre(tape, &layer.output)?;
    let c_pre = gate_pre(tape, &layer.candidate)?;

    let f = tape.sigmoid(f_pre);
    let i = tape.sigmoid(i_pre);
    let o = tape.sigmoid(o_pre);
    let candidate = tape.tanh(c_pre);

    let kept = tape.mul(f, c_prev)?;
    let written = tape.mul(i, candidate)?;
    let c_t = tape.add(kept, written)?;
    let c_act = tape.tanh(c_t);
    let h_t = tape.mul(o, c_act)?;
    Ok((h_t, c_t))
}

/// Hidden sequence of the top layer plus its last row.
pub struct LstmStackOutput {
    /// `[T, d]` hidden states of the final layer.
    pub sequence: NodeId,
    /// `[1, d]` hidden state at the last step.
    pub last_hidden: NodeId,
}

/// Run a stack of LSTM layers over `x` (`[T, d_in]`).
///
/// `dropout` applies inverted dropout to each layer's output sequence
/// (training mode); pass `None` for evaluation.
pub fn lstm_stack(
    tape: &mut Tape,
    layers: &[LstmLayerIds],
    x: NodeId,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<LstmStackOutput> {
    if layers.is_empty() {
        return Err(Error::Config("lstm_stack needs at least one layer".into()));
    }
    let (steps, _) = tape.value(x).dims2();
    if steps < 1 {
        return Err(Error::Contract("lstm_stack needs at least one time step".into()));
    }
    let mut dropout = dropout;
    let mut seq = x;
    let mut last_rows: Vec<NodeId> = Vec::new();
    for layer in layers {
        let hidden = tape.value(layer.forget.recurrent_weight).dims2().0;
        // Input projections for all steps at once; the recurrent half
        // stays step-by-step.
        let projected = [
            tape.matmul(seq, layer.forget.input_weight)?,
            tape.matmul(seq, layer.input.input_weight)?,
            tape.matmul(seq, layer.output.input_weight)?,
            tape.matmul(seq, layer.candidate.input_weight)?,
        ];
        let mut h = tape.constant(Tensor::raw(vec![1, hidden], vec![0.0; hidden]));
        let mut c = h;
        last_rows.clear();
        for t in 0..steps {
            let gate = |tape: &mut Tape, which: usize, ids: &LstmGateIds| -> Result<NodeId> {
                let from_input = tape.row(projected[which], t)?;
                let from_hidden = tape.matmul(h, ids.recurrent_weight)?;
                let sum = tape.add(from_input, from_hidden)?;
                tape.add_row_bias(sum, ids.bias)
            };
            let f_pre = gate(tape, 0, &layer.forget)?;
            let i_pre = gate(tape, 1, &layer.input)?;
            let o_pre = gate(tape, 2, &layer.output)?;
            let c_pre = gate(tape, 3, &layer.candidate)?;
            let f = tape.sigmoid(f_pre);
            let i = tape.sigmoid(i_pre);
            let o = tape.sigmoid(o_pre);
            let candidate = tape.tanh(c_pre);
            let kept = tape.mul(f, c)?;
            let written = tape.mul(i, candidate)?;
            c = tape.add(kept, written)?;
            let c_act = tape.tanh(c);
            h = tape.mul(o, c_act)?;
            last_rows.push(h);
        }
        seq = tape.concat_rows(&last_rows)?;
        if let Some((rate, rng)) = dropout.as_mut() {
            seq = tape.dropout(seq, *rate, rng)?;
        }
    }
    Ok(LstmStackOutput { sequence: seq, last_hidden: *last_rows.last().expect("steps >= 1") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::init::{filled_vec, glorot_uniform, zeros_vec};
    use rand::SeedableRng;

    fn zero_layer(tape: &mut Tape, d_in: usize, d: usize) -> LstmLayerIds {
        let gate = |tape: &mut Tape| LstmGateIds {
            input_weight: tape.leaf(Tensor::zeros(vec![d_in, d]), true),
            recurrent_weight: tape.leaf(Tensor::zeros(vec![d, d]), true),
            bias: tape.leaf(zeros_vec(d), true),
        };
        LstmLayerIds {
            forget: gate(tape),
            input: gate(tape),
            output: gate(tape),
            candidate: gate(tape),
        }
    }

    fn random_layer(tape: &mut Tape, rng: &mut ChaCha8Rng, d_in: usize, d: usize) -> LstmLayerIds {
        let gate = |tape: &mut Tape, rng: &mut ChaCha8Rng| LstmGateIds {
            input_weight: tape.leaf(glorot_uniform(rng, d_in, d), true),
            recurrent_weight: tape.leaf(glorot_uniform(rng, d, d), true),
            bias: tape.leaf(zeros_vec(d), true),
        };
        LstmLayerIds {
            forget: gate(tape, rng),
            input: gate(tape, rng),
            output: gate(tape, rng),
            candidate: gate(tape, rng),
        }
    }

    #[test]
    fn zero_parameters_and_state_are_a_fixed_point() {
        let mut tape = Tape::new();
        let layer = zero_layer(&mut tape, 3, 4);
        let x = tape.constant(Tensor::matrix(1, 3, vec![0.7, -1.2, 3.0]).unwrap());
        let h0 = tape.constant(Tensor::zeros(vec![1, 4]));
        let (h, c) = lstm_cell(&mut tape, &layer, x, h0, h0).unwrap();
        assert_eq!(tape.value(h).data(), &[0.0; 4]);
        assert_eq!(tape.value(c).data(), &[0.0; 4]);
    }

    #[test]
    fn saturated_forget_gate_preserves_cell_state() {
        // b_f = 50 drives the forget gate to ~1; all other weights zero,
        // so c_t ~= c_prev exactly up to the 0.5 * tanh(0) = 0 write term.
        let mut tape = Tape::new();
        let mut layer = zero_layer(&mut tape, 2, 3);
        layer.forget.bias = tape.leaf(filled_vec(3, 50.0), true);
        let x = tape.constant(Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap());
        let h0 = tape.constant(Tensor::zeros(vec![1, 3]));
        let c0 = tape.constant(Tensor::matrix(1, 3, vec![0.3, -0.8, 2.0]).unwrap());
        let (_, c) = lstm_cell(&mut tape, &layer, x, h0, c0).unwrap();
        for (got, want) in tape.value(c).data().iter().zip([0.3, -0.8, 2.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn stack_of_one_zero_layer_outputs_zeros() {
        let mut tape = Tape::new();
        let layer = zero_layer(&mut tape, 1, 4);
        let x = tape.constant(Tensor::column(&[1.0, 2.0, 3.0]));
        let out = lstm_stack(&mut tape, &[layer], x, None).unwrap();
        assert_eq!(tape.value(out.sequence).shape(), &[3, 4]);
        assert!(tape.value(out.sequence).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_stack_is_a_config_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::column(&[1.0]));
        assert!(matches!(lstm_stack(&mut tape, &[], x, None), Err(Error::Config(_))));
    }

    #[test]
    fn stack_matches_manual_cell_loop_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tape = Tape::new();
        let layer = random_layer(&mut tape, &mut rng, 1, 4);
        let x = tape.constant(Tensor::column(&[0.5, -0.25, 1.5, 0.0]));
        let out = lstm_stack(&mut tape, &[layer], x, None).unwrap();
        let stack_seq = tape.value(out.sequence).data().to_vec();

        let mut h = tape.constant(Tensor::zeros(vec![1, 4]));
        let mut c = h;
        let mut rows = Vec::new();
        for t in 0..4 {
            let x_t = tape.row(x, t).unwrap();
            let (nh, nc) = lstm_cell(&mut tape, &layer, x_t, h, c).unwrap();
            h = nh;
            c = nc;
            rows.push(tape.value(h).data().to_vec());
        }
        let manual: Vec<f64> = rows.concat();
        assert_eq!(stack_seq, manual);
    }

    #[test]
    fn depth_two_equals_composition_of_two_depth_one_stacks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tape = Tape::new();
        let l0 = random_layer(&mut tape, &mut rng, 1, 3);
        let l1 = random_layer(&mut tape, &mut rng, 3, 3);
        let x = tape.constant(Tensor::column(&[1.0, -2.0, 0.5]));

        let both = lstm_stack(&mut tape, &[l0, l1], x, None).unwrap();
        let first = lstm_stack(&mut tape, &[l0], x, None).unwrap();
        let second = lstm_stack(&mut tape, &[l1], first.sequence, None).unwrap();

        assert_eq!(
            tape.value(both.sequence).data(),
            tape.value(second.sequence).data()
        );
    }

    #[test]
    fn output_at_t_ignores_future_inputs() {
        let rng = ChaCha8Rng::seed_from_u64(3);
        let run = |input: &[f64]| {
            let mut tape = Tape::new();
            let mut local_rng = rng.clone();
            let layer = random_layer(&mut tape, &mut local_rng, 1, 3);
            let x = tape.constant(Tensor::column(input));
            let out = lstm_stack(&mut tape, &[layer], x, None).unwrap();
            tape.value(out.sequence).data().to_vec()
        };
        let base = run(&[0.1, 0.2, 0.3, 0.4]);
        let perturbed = run(&[0.1, 0.2, 0.3, 99.0]);
        // Rows 0..3 identical, row 3 differs.
        assert_eq!(&base[..9], &perturbed[..9]);
        assert_ne!(&base[9..], &perturbed[9..]);
    }
}
