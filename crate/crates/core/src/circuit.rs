//! Parameterized circuits: an ordered op list plus a registry mapping
//! trainable parameters and data inputs onto gate angles.

use crate::error::{check_len, Error, Result};
use crate::gates::{GateKind, GateSpec};
use crate::statevector::StateVector;

/// Where a gate angle gets its value from when the circuit is bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Angle {
    Fixed(f64),
    /// `scale · params[index]`
    Param { index: usize, scale: f64 },
    /// `scale · inputs[index]`
    Input { index: usize, scale: f64 },
}

impl Angle {
    pub fn param(index: usize) -> Self {
        Angle::Param { index, scale: 1.0 }
    }

    pub fn input(index: usize) -> Self {
        Angle::Input { index, scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Param(usize),
    Input(usize),
}

/// One bound angle: `ops[op].params[angle] = scale · value(source)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub op: usize,
    pub angle: usize,
    pub source: Source,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Gate(GateSpec),
    /// Deferred-measurement discard of a wire.
    Discard(usize),
}

/// An ordered op list with trainable-parameter and input-slot registries.
///
/// A parameter may feed several angles (weight sharing, decomposed gates);
/// each angle is fed by at most one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCircuit {
    n_wires: usize,
    ops: Vec<Op>,
    slots: Vec<Slot>,
    n_params: usize,
    n_inputs: usize,
}

impl ParamCircuit {
    pub fn new(n_wires: usize) -> Self {
        ParamCircuit {
            n_wires,
            ops: Vec::new(),
            slots: Vec::new(),
            n_params: 0,
            n_inputs: 0,
        }
    }

    pub fn n_wires(&self) -> usize {
        self.n_wires
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Reserves `count` new trainable parameters and returns the first index.
    pub fn add_params(&mut self, count: usize) -> usize {
        let first = self.n_params;
        self.n_params += count;
        first
    }

    pub fn add_inputs(&mut self, count: usize) -> usize {
        let first = self.n_inputs;
        self.n_inputs += count;
        first
    }

    /// Appends a fixed gate.
    pub fn push(&mut self, gate: GateSpec) -> usize {
        self.ops.push(Op::Gate(gate));
        self.ops.len() - 1
    }

    pub fn discard(&mut self, wire: usize) {
        self.ops.push(Op::Discard(wire));
    }

    /// Appends a gate whose angles come from `angles`.
    pub fn push_bound(&mut self, kind: GateKind, angles: &[Angle], wires: &[usize]) -> Result<usize> {
        let init: Vec<f64> = angles
            .iter()
            .map(|a| match a {
                Angle::Fixed(v) => *v,
                _ => 0.0,
            })
            .collect();
        let gate = GateSpec::new(kind, &init, wires)?;
        let op = self.ops.len();
        for (angle, a) in angles.iter().enumerate() {
            let (source, scale) = match *a {
                Angle::Fixed(_) => continue,
                Angle::Param { index, scale } => {
                    if index >= self.n_params {
                        return Err(Error::Construction(format!(
                            "parameter {index} not registered ({} known)",
                            self.n_params
                        )));
                    }
                    (Source::Param(index), scale)
                }
                Angle::Input { index, scale } => {
                    if index >= self.n_inputs {
                        return Err(Error::Construction(format!(
                            "input {index} not registered ({} known)",
                            self.n_inputs
                        )));
                    }
                    (Source::Input(index), scale)
                }
            };
            self.slots.push(Slot {
                op,
                angle,
                source,
                scale,
            });
        }
        self.ops.push(Op::Gate(gate));
        Ok(op)
    }

    /// Appends every op and slot of `other`, offsetting its parameter and
    /// input indices by `param_offset` / `input_offset`.
    pub fn extend_from(&mut self, other: &ParamCircuit, param_offset: usize, input_offset: usize) -> Result<()> {
        if other.n_wires != self.n_wires {
            return Err(Error::Construction(format!(
                "cannot splice a {}-wire circuit into a {}-wire circuit",
                other.n_wires, self.n_wires
            )));
        }
        if param_offset + other.n_params > self.n_params || input_offset + other.n_inputs > self.n_inputs {
            return Err(Error::Construction("spliced registry exceeds host registry".into()));
        }
        let base = self.ops.len();
        self.ops.extend(other.ops.iter().cloned());
        self.slots.extend(other.slots.iter().map(|s| Slot {
            op: s.op + base,
            source: match s.source {
                Source::Param(i) => Source::Param(i + param_offset),
                Source::Input(i) => Source::Input(i + input_offset),
            },
            ..*s
        }));
        Ok(())
    }

    /// Wires still active after every discard, starting from `initial`.
    pub fn final_active(&self, initial: &[usize]) -> Vec<usize> {
        let mut active = initial.to_vec();
        for op in &self.ops {
            if let Op::Discard(w) = op {
                active.retain(|a| a != w);
            }
        }
        active
    }

    /// Ops with every slot bound to concrete angles.
    pub(crate) fn bind(&self, params: &[f64], inputs: &[f64]) -> Result<Vec<Op>> {
        check_len("circuit parameters", self.n_params, params.len())?;
        check_len("circuit inputs", self.n_inputs, inputs.len())?;
        let mut ops = self.ops.clone();
        for s in &self.slots {
            let value = s.scale * s.value(params, inputs);
            if let Op::Gate(g) = &mut ops[s.op] {
                g.set_param(s.angle, value);
            }
        }
        Ok(ops)
    }
}

impl Slot {
    pub(crate) fn value(&self, params: &[f64], inputs: &[f64]) -> f64 {
        match self.source {
            Source::Param(i) => params[i],
            Source::Input(i) => inputs[i],
        }
    }
}

pub(crate) fn apply_op(state: &mut StateVector, op: &Op) -> Result<()> {
    match op {
        Op::Gate(g) => state.apply(g),
        Op::Discard(w) => state.deactivate(*w),
    }
}

/// Binds `params` and `inputs` into the circuit and applies it to `state0`.
pub fn run_circuit(
    circuit: &ParamCircuit,
    params: &[f64],
    inputs: &[f64],
    state0: &StateVector,
) -> Result<StateVector> {
    if state0.n_wires() != circuit.n_wires {
        return Err(Error::Shape {
            what: "initial state wires",
            expected: circuit.n_wires,
            actual: state0.n_wires(),
        });
    }
    let ops = circuit.bind(params, inputs)?;
    let mut state = state0.clone();
    for op in &ops {
        apply_op(&mut state, op)?;
    }
    Ok(state)
}
