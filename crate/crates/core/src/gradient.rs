//! Exact parameter-shift Jacobians of Z-expectations, plus a central
//! finite-difference reference.

use std::f64::consts::FRAC_PI_2;

use crate::circuit::{apply_op, Op, ParamCircuit, Source};
use crate::error::{check_len, Error, Result};
use crate::fused;
use crate::statevector::StateVector;

/// `∂⟨Z_o⟩/∂params[p]` and `∂⟨Z_o⟩/∂inputs[i]`, row-major per observable.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    n_outputs: usize,
    n_params: usize,
    n_inputs: usize,
    params: Vec<f64>,
    inputs: Vec<f64>,
}

impl Jacobian {
    pub fn zeros(n_outputs: usize, n_params: usize, n_inputs: usize) -> Self {
        Jacobian {
            n_outputs,
            n_params,
            n_inputs,
            params: vec![0.0; n_outputs * n_params],
            inputs: vec![0.0; n_outputs * n_inputs],
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn d_param(&self, output: usize, param: usize) -> f64 {
        self.params[output * self.n_params + param]
    }

    pub fn d_input(&self, output: usize, input: usize) -> f64 {
        self.inputs[output * self.n_inputs + input]
    }

    /// Row `output` of the parameter block.
    pub fn param_row(&self, output: usize) -> &[f64] {
        &self.params[output * self.n_params..(output + 1) * self.n_params]
    }

    pub fn input_row(&self, output: usize) -> &[f64] {
        &self.inputs[output * self.n_inputs..(output + 1) * self.n_inputs]
    }

    /// Vector-Jacobian product: accumulates `Σ_o upstream[o] · J[o, ·]` into
    /// `param_grad` and `input_grad`.
    pub fn accumulate_vjp(&self, upstream: &[f64], param_grad: &mut [f64], input_grad: &mut [f64]) {
        debug_assert_eq!(upstream.len(), self.n_outputs);
        for (o, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            for (g, d) in param_grad.iter_mut().zip(self.param_row(o)) {
                *g += u * d;
            }
            for (g, d) in input_grad.iter_mut().zip(self.input_row(o)) {
                *g += u * d;
            }
        }
    }

    fn add_param(&mut self, output: usize, param: usize, v: f64) {
        self.params[output * self.n_params + param] += v;
    }

    fn add_input(&mut self, output: usize, input: usize, v: f64) {
        self.inputs[output * self.n_inputs + input] += v;
    }
}

fn readout(state: &StateVector, wires: &[usize]) -> Vec<f64> {
    wires.iter().map(|&w| state.expectation_z_unchecked(w)).collect()
}

fn check_observables(state: &StateVector, wires: &[usize]) -> Result<()> {
    for &w in wires {
        if !state.is_active(w) {
            return Err(Error::Wiring(format!("observable wire {w} is not active")));
        }
    }
    Ok(())
}

/// Expectations `⟨Z_w⟩` for each of `observable_wires` after running the circuit.
pub fn expectations(
    circuit: &ParamCircuit,
    params: &[f64],
    inputs: &[f64],
    state0: &StateVector,
    observable_wires: &[usize],
) -> Result<Vec<f64>> {
    let out = crate::circuit::run_circuit(circuit, params, inputs, state0)?;
    check_observables(&out, observable_wires)?;
    Ok(readout(&out, observable_wires))
}

/// Parameter-shift Jacobian of `⟨Z⟩` on `observable_wires` with respect to
/// every trainable parameter and every input slot.
///
/// Each slot angle is shifted by `±π/2` on its own; a parameter feeding several
/// angles with scales `c_k` gets `Σ_k c_k · ½[f(+) − f(−)]`. The result is the
/// exact derivative for shiftable gate kinds; any other kind in a slot is an
/// error. Unshifted gates are replayed through a [`fused`] plan.
pub fn param_shift_grad(
    circuit: &ParamCircuit,
    params: &[f64],
    inputs: &[f64],
    state0: &StateVector,
    observable_wires: &[usize],
) -> Result<Jacobian> {
    for s in circuit.slots() {
        if let Op::Gate(g) = &circuit.ops()[s.op] {
            if !g.kind().is_shiftable() {
                return Err(Error::Differentiation(format!(
                    "{} at op {} has no two-term shift rule",
                    g.kind(),
                    s.op
                )));
            }
        }
    }
    let ops = circuit.bind(params, inputs)?;
    // Validate wiring once on an unshifted pass; shifted passes reuse the same wires.
    let mut probe = state0.clone();
    for op in &ops {
        apply_op(&mut probe, op)?;
    }
    check_observables(&probe, observable_wires)?;

    let n_out = observable_wires.len();
    let mut jac = Jacobian::zeros(n_out, circuit.n_params(), circuit.n_inputs());

    let mut slots_by_op: Vec<Vec<usize>> = vec![Vec::new(); ops.len()];
    for (k, s) in circuit.slots().iter().enumerate() {
        slots_by_op[s.op].push(k);
    }

    let groups = fused::plan(&ops);
    let mut running = state0.clone();
    let mut scratch = state0.clone();
    for (gi, group) in groups.iter().enumerate() {
        for (k, &pos) in group.ops.iter().enumerate() {
            let Op::Gate(gate) = &ops[pos] else { unreachable!() };
            for &si in &slots_by_op[pos] {
                let slot = circuit.slots()[si];
                let base = gate.params()[slot.angle];
                let mut diff = vec![0.0; n_out];
                for (sign, shift) in [(1.0, FRAC_PI_2), (-1.0, -FRAC_PI_2)] {
                    scratch.clone_from(&running);
                    group.with_replaced(k, &gate.with_param(slot.angle, base + shift)).apply(&mut scratch);
                    for later in &groups[gi + 1..] {
                        later.fused.apply(&mut scratch);
                    }
                    for (d, &w) in diff.iter_mut().zip(observable_wires) {
                        *d += sign * scratch.expectation_z_unchecked(w);
                    }
                }
                for (o, d) in diff.iter().enumerate() {
                    let v = 0.5 * slot.scale * d;
                    match slot.source {
                        Source::Param(p) => jac.add_param(o, p, v),
                        Source::Input(i) => jac.add_input(o, i, v),
                    }
                }
            }
            running.apply_unchecked(gate);
        }
    }
    Ok(jac)
}

/// Central-difference Jacobian with the same layout as [`param_shift_grad`].
pub fn finite_diff_grad(
    circuit: &ParamCircuit,
    params: &[f64],
    inputs: &[f64],
    state0: &StateVector,
    observable_wires: &[usize],
    step: f64,
) -> Result<Jacobian> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {step}")));
    }
    check_len("circuit parameters", circuit.n_params(), params.len())?;
    check_len("circuit inputs", circuit.n_inputs(), inputs.len())?;
    let n_out = observable_wires.len();
    let mut jac = Jacobian::zeros(n_out, params.len(), inputs.len());
    let mut p = params.to_vec();
    for k in 0..params.len() {
        p[k] = params[k] + step;
        let plus = expectations(circuit, &p, inputs, state0, observable_wires)?;
        p[k] = params[k] - step;
        let minus = expectations(circuit, &p, inputs, state0, observable_wires)?;
        p[k] = params[k];
        for o in 0..n_out {
            jac.add_param(o, k, (plus[o] - minus[o]) / (2.0 * step));
        }
    }
    let mut x = inputs.to_vec();
    for k in 0..inputs.len() {
        x[k] = inputs[k] + step;
        let plus = expectations(circuit, params, &x, state0, observable_wires)?;
        x[k] = inputs[k] - step;
        let minus = expectations(circuit, params, &x, state0, observable_wires)?;
        x[k] = inputs[k];
        for o in 0..n_out {
            jac.add_input(o, k, (plus[o] - minus[o]) / (2.0 * step));
        }
    }
    Ok(jac)
}

/// Largest absolute entry-wise difference between two Jacobians of equal shape.
pub fn max_abs_deviation(a: &Jacobian, b: &Jacobian) -> f64 {
    assert_eq!(
        (a.n_outputs, a.n_params, a.n_inputs),
        (b.n_outputs, b.n_params, b.n_inputs)
    );
    a.params
        .iter()
        .zip(&b.params)
        .chain(a.inputs.iter().zip(&b.inputs))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Angle;
    use crate::gates::{GateKind, GateSpec};
    use crate::random_circuits::random_circuit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ry_circuit() -> ParamCircuit {
        let mut c = ParamCircuit::new(1);
        let p = c.add_params(1);
        c.push_bound(GateKind::RY, &[Angle::param(p)], &[0]).unwrap();
        c
    }

    #[test]
    fn ry_gradient_values() {
        let c = ry_circuit();
        let s = StateVector::new(1).unwrap();
        let g0 = param_shift_grad(&c, &[0.0], &[], &s, &[0]).unwrap();
        assert!(g0.d_param(0, 0).abs() < 1e-15);
        let g1 = param_shift_grad(&c, &[PI / 2.0], &[], &s, &[0]).unwrap();
        assert!((g1.d_param(0, 0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn finite_difference_of_ry() {
        let c = ry_circuit();
        let s = StateVector::new(1).unwrap();
        let g = finite_diff_grad(&c, &[1.0], &[], &s, &[0], 1e-4).unwrap();
        assert!((g.d_param(0, 0) + 1f64.sin()).abs() < 1e-7);
    }

    #[test]
    fn zero_gate_circuit_has_zero_gradient() {
        let mut c = ParamCircuit::new(2);
        c.add_params(3);
        let s = StateVector::new(2).unwrap();
        let g = finite_diff_grad(&c, &[0.1, 0.2, 0.3], &[], &s, &[0, 1], 1e-4).unwrap();
        for o in 0..2 {
            assert!(g.param_row(o).iter().all(|&v| v == 0.0));
        }
        let ps = param_shift_grad(&c, &[0.1, 0.2, 0.3], &[], &s, &[0, 1]).unwrap();
        assert_eq!(max_abs_deviation(&g, &ps), 0.0);
    }

    #[test]
    fn non_positive_step_is_rejected() {
        let c = ry_circuit();
        let s = StateVector::new(1).unwrap();
        assert!(finite_diff_grad(&c, &[1.0], &[], &s, &[0], 0.0).is_err());
    }

    #[test]
    fn cu3_slot_fails_loudly() {
        let mut c = ParamCircuit::new(2);
        let p = c.add_params(3);
        c.push_bound(
            GateKind::CU3,
            &[Angle::param(p), Angle::param(p + 1), Angle::param(p + 2)],
            &[0, 1],
        )
        .unwrap();
        let s = StateVector::new(2).unwrap();
        assert!(matches!(
            param_shift_grad(&c, &[0.1, 0.2, 0.3], &[], &s, &[1]),
            Err(Error::Differentiation(_))
        ));
    }

    #[test]
    fn random_circuits_agree_with_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let n_wires = rng.gen_range(1..=8);
            let n_params = rng.gen_range(1..=30);
            let (c, params, inputs) = random_circuit(&mut rng, n_wires, n_params);
            let s = StateVector::new(n_wires).unwrap();
            let obs: Vec<usize> = (0..n_wires).collect();
            let ps = param_shift_grad(&c, &params, &inputs, &s, &obs).unwrap();
            let fd = finite_diff_grad(&c, &params, &inputs, &s, &obs, 1e-4).unwrap();
            worst = worst.max(max_abs_deviation(&ps, &fd));
        }
        assert!(worst < 1e-6, "worst deviation {worst}");
    }

    #[test]
    fn three_qubit_twelve_param_circuit() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (c, params, inputs) = random_circuit(&mut rng, 3, 12);
        assert_eq!(c.n_params(), 12);
        let s = StateVector::new(3).unwrap();
        let ps = param_shift_grad(&c, &params, &inputs, &s, &[0, 1, 2]).unwrap();
        let fd = finite_diff_grad(&c, &params, &inputs, &s, &[0, 1, 2], 1e-4).unwrap();
        assert!(max_abs_deviation(&ps, &fd) < 1e-6);
    }

    #[test]
    fn gradient_is_linear_in_observable_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (c, params, inputs) = random_circuit(&mut rng, 3, 10);
        let s = StateVector::new(3).unwrap();
        let j = param_shift_grad(&c, &params, &inputs, &s, &[1]).unwrap();
        let a = -2.75;
        let mut g1 = vec![0.0; c.n_params()];
        let mut gi1 = vec![0.0; c.n_inputs()];
        j.accumulate_vjp(&[1.0], &mut g1, &mut gi1);
        let mut ga = vec![0.0; c.n_params()];
        let mut gia = vec![0.0; c.n_inputs()];
        j.accumulate_vjp(&[a], &mut ga, &mut gia);
        for (x, y) in g1.iter().zip(&ga) {
            assert!((a * x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn shared_parameter_sums_occurrences() {
        // RY(θ) twice on one wire is RY(2θ): d⟨Z⟩/dθ = −2 sin 2θ.
        let mut c = ParamCircuit::new(1);
        let p = c.add_params(1);
        c.push_bound(GateKind::RY, &[Angle::param(p)], &[0]).unwrap();
        c.push(GateSpec::h(0));
        c.push(GateSpec::h(0));
        c.push_bound(GateKind::RY, &[Angle::param(p)], &[0]).unwrap();
        let theta = 0.4;
        let g = param_shift_grad(&c, &[theta], &[], &StateVector::new(1).unwrap(), &[0]).unwrap();
        assert!((g.d_param(0, 0) + 2.0 * (2.0 * theta).sin()).abs() < 1e-12);
    }
}
