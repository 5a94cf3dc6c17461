//! Causal 1-D convolution over a time-major sequence.
//!
//! Output at step t reads inputs at steps <= t only; history before the
//! first step is zero (left padding of length K-1). The tap sum is
//! realized as `sum_k shift_k(X) . W_k` where `shift_k` is a constant
//! lower-shift matrix, so causality is structural rather than index
//! bookkeeping.

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

/// Convolution taps (`K` matrices of `[d_in, d_out]`) and bias `[d_out]`.
#[derive(Debug, Clone)]
pub struct CausalConvIds {
    pub taps: Vec<NodeId>,
    pub bias: NodeId,
}

fn shift_matrix(steps: usize, by: usize) -> Tensor {
    let mut data = vec![0.0; steps * steps];
    for i in by..steps {
        data[i * steps + (i - by)] = 1.0;
    }
    Tensor::raw(vec![steps, steps], data)
}

/// ReLU(sum_k x_{t-k} W_k + b) for every step t.
pub fn causal_conv1d(tape: &mut Tape, params: &CausalConvIds, x: NodeId) -> Result<NodeId> {
    if params.taps.is_empty() {
        return Err(Error::Config("causal convolution needs kernel size >= 1".into()));
    }
    let (steps, _) = tape.value(x).dims2();
    let mut acc: Option<NodeId> = None;
    for (k, tap) in params.taps.iter().enumerate() {
        let delayed = if k == 0 {
            x
        } else {
            let shift = tape.constant(shift_matrix(steps, k));
            tape.matmul(shift, x)?
        };
        let term = tape.matmul(delayed, *tap)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => tape.add(prev, term)?,
        });
    }
    let summed = acc.expect("at least one tap");
    let biased = tape.add_row_bias(summed, params.bias)?;
    Ok(tape.relu(biased))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::init::{glorot_uniform, zeros_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn conv(tape: &mut Tape, rng: &mut ChaCha8Rng, k: usize, d_in: usize, d_out: usize) -> CausalConvIds {
        CausalConvIds {
            taps: (0..k).map(|_| tape.leaf(glorot_uniform(rng, d_in, d_out), true)).collect(),
            bias: tape.leaf(zeros_vec(d_out), true),
        }
    }

    #[test]
    fn kernel_size_one_is_a_per_step_affine_relu()  {
        let mut tape = Tape::new();
        let tap = tape.leaf(Tensor::matrix(1, 2, vec![2.0, -1.0]).unwrap(), true);
        let bias = tape.leaf(Tensor::vector(vec![0.5, 0.5]), true);
        let params = CausalConvIds { taps: vec![tap], bias };
        let x = tape.constant(Tensor::column(&[1.0, -2.0]));
        let y = causal_conv1d(&mut tape, &params, x).unwrap();
        // step 0: relu([2.5, -0.5]) ; step 1: relu([-3.5, 2.5])
        assert_eq!(tape.value(y).data(), &[2.5, 0.0, 0.0, 2.5]);
    }

    #[test]
    fn impulse_response_is_confined_to_kernel_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut tape = Tape::new();
        let params = conv(&mut tape, &mut rng, 3, 1, 2);
        // Zero bias keeps the quiet region exactly zero after ReLU.
        let mut x = vec![0.0; 8];
        x[3] = 1.0;
        let xn = tape.constant(Tensor::column(&x));
        let y = causal_conv1d(&mut tape, &params, xn).unwrap();
        let out = tape.value(y).data();
        for t in 0..8 {
            let active = (3..=5).contains(&t);
            let row = &out[t * 2..(t + 1) * 2];
            if !active {
                assert!(row.iter().all(|&v| v == 0.0), "step {t} leaked: {row:?}");
            }
        }
        // Some response inside the span (tap weights are random but
        // ReLU(|glorot|) of at least one channel fires at t=3..=5).
        assert!(out.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn future_inputs_never_affect_earlier_outputs() {
        let rng = ChaCha8Rng::seed_from_u64(37);
        let run = |input: &[f64]| {
            let mut tape = Tape::new();
            let mut local = rng.clone();
            let params = conv(&mut tape, &mut local, 2, 1, 3);
            let x = tape.constant(Tensor::column(input));
            let y = causal_conv1d(&mut tape, &params, x).unwrap();
            tape.value(y).data().to_vec()
        };
        let base = run(&[0.3, -0.7, 1.1, 0.2]);
        let bumped = run(&[0.3, -0.7, 1.1, 50.0]);
        assert_eq!(&base[..9], &bumped[..9]);
    }

    #[test]
    fn zero_kernel_size_rejected() {
        let mut tape = Tape::new();
        let bias = tape.leaf(zeros_vec(1), true);
        let params = CausalConvIds { taps: vec![], bias };
        let x = tape.constant(Tensor::column(&[1.0]));
        assert!(matches!(causal_conv1d(&mut tape, &params, x), Err(Error::Config(_))));
    }
}
