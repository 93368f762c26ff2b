//! Random circuit generator shared by the gradient checks (unit tests and
//! the `gradcheck` command).

use rand::Rng;
use std::f64::consts::PI;

use crate::circuit::{Angle, ParamCircuit};
use crate::gates::{GateKind, GateSpec};

/// A random circuit on `n_wires` wires with exactly `n_params` trainable
/// parameters (some shared between gates), an RY input-encoding layer, and
/// random fixed entanglers. Returns the circuit, parameter values and inputs.
pub fn random_circuit<R: Rng>(rng: &mut R, n_wires: usize, n_params: usize) -> (ParamCircuit, Vec<f64>, Vec<f64>) {
    let mut c = ParamCircuit::new(n_wires);
    let first_input = c.add_inputs(n_wires);
    let first = c.add_params(n_params);
    for w in 0..n_wires {
        c.push_bound(GateKind::RY, &[Angle::input(first_input + w)], &[w])
            .expect("valid input slot");
    }
    let trainable: &[GateKind] = if n_wires == 1 {
        &[GateKind::U3, GateKind::RY]
    } else {
        &[GateKind::U3, GateKind::RY, GateKind::RXX, GateKind::RYY, GateKind::RZZ]
    };
    let mut next = 0;
    let pick_wires = |rng: &mut R, arity: usize| -> Vec<usize> {
        let a = rng.gen_range(0..n_wires);
        if arity == 1 {
            return vec![a];
        }
        let mut b = rng.gen_range(0..n_wires - 1);
        if b >= a {
            b += 1;
        }
        vec![a, b]
    };
    while next < n_params {
        let kind = trainable[rng.gen_range(0..trainable.len())];
        let wires = pick_wires(rng, kind.n_wires());
        let angles: Vec<Angle> = (0..kind.n_params())
            .map(|_| {
                // Occasionally reuse an earlier parameter with a scale to exercise sharing.
                if next > 0 && rng.gen_bool(0.15) {
                    Angle::Param {
                        index: first + rng.gen_range(0..next),
                        scale: rng.gen_range(-1.5..1.5),
                    }
                } else if next < n_params {
                    next += 1;
                    Angle::param(first + next - 1)
                } else {
                    Angle::Fixed(rng.gen_range(-PI..PI))
                }
            })
            .collect();
        c.push_bound(kind, &angles, &wires).expect("valid slot");
        if n_wires > 1 && rng.gen_bool(0.3) {
            let w = pick_wires(rng, 2);
            c.push(GateSpec::cnot(w[0], w[1]));
        }
        if rng.gen_bool(0.1) {
            let w = pick_wires(rng, 1);
            c.push(GateSpec::h(w[0]));
        }
    }
    let params = (0..n_params).map(|_| rng.gen_range(-PI..PI)).collect();
    let inputs = (0..n_wires).map(|_| rng.gen_range(-PI..PI)).collect();
    (c, params, inputs)
}
