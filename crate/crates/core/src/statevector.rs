//! Dense statevector over at most [`MAX_WIRES`] qubits.
//!
//! Wire 0 is the most significant bit of the basis index. Gates are applied in
//! place with bit-mask stencils; no `2^n × 2^n` matrix is ever formed.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gates::{GateKind, GateMatrix, GateSpec};

pub const MAX_WIRES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_wires: usize,
    active: Vec<usize>,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_wires` wires, all of them active.
    pub fn new(n_wires: usize) -> Result<Self> {
        if n_wires == 0 || n_wires > MAX_WIRES {
            return Err(Error::Config(format!(
                "wire count must be in 1..={MAX_WIRES}, got {n_wires}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_wires];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            n_wires,
            active: (0..n_wires).collect(),
            amps,
        })
    }

    pub fn n_wires(&self) -> usize {
        self.n_wires
    }

    pub fn active_wires(&self) -> &[usize] {
        &self.active
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn is_active(&self, wire: usize) -> bool {
        self.active.contains(&wire)
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn bit(&self, wire: usize) -> usize {
        1 << (self.n_wires - 1 - wire)
    }

    fn check_active(&self, wire: usize) -> Result<()> {
        if wire >= self.n_wires {
            return Err(Error::Wiring(format!(
                "wire {wire} out of range for {} wires",
                self.n_wires
            )));
        }
        if !self.is_active(wire) {
            return Err(Error::Wiring(format!("wire {wire} is not active")));
        }
        Ok(())
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &GateSpec) -> Result<()> {
        for &w in gate.wires() {
            self.check_active(w)?;
        }
        self.apply_unchecked(gate);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &GateSpec) {
        let wires = gate.wires();
        match gate.kind() {
            GateKind::CNOT => self.apply_cnot(wires[0], wires[1]),
            GateKind::RZZ => {
                let theta = gate.params()[0];
                let same = Complex64::from_polar(1.0, -theta / 2.0);
                let diff = same.conj();
                self.apply_diag2(wires[0], wires[1], [same, diff, diff, same]);
            }
            _ => match gate.matrix() {
                GateMatrix::One(m) => self.apply_1q(wires[0], &m),
                GateMatrix::Two(m) => self.apply_2q(wires[0], wires[1], &m),
            },
        }
    }

    pub(crate) fn apply_1q(&mut self, wire: usize, m: &[[Complex64; 2]; 2]) {
        let bit = self.bit(wire);
        let dim = self.amps.len();
        let mut base = 0;
        while base < dim {
            for i in base..base + bit {
                let j = i | bit;
                let a0 = self.amps[i];
                let a1 = self.amps[j];
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[j] = m[1][0] * a0 + m[1][1] * a1;
            }
            base += 2 * bit;
        }
    }

    /// `m` acts on the basis `|a b⟩`; `a` and `b` may be in either order.
    pub(crate) fn apply_2q(&mut self, a: usize, b: usize, m: &[[Complex64; 4]; 4]) {
        let ba = self.bit(a);
        let bb = self.bit(b);
        let (lo, hi) = if ba < bb { (ba, bb) } else { (bb, ba) };
        let amps = &mut self.amps[..];
        for k in 0..amps.len() / 4 {
            let i = insert_zero(insert_zero(k, lo), hi);
            let idx = [i, i | bb, i | ba, i | ba | bb];
            let v = idx.map(|j| amps[j]);
            for (row, &j) in m.iter().zip(&idx) {
                amps[j] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
            }
        }
    }

    fn apply_diag2(&mut self, a: usize, b: usize, d: [Complex64; 4]) {
        let ba = self.bit(a);
        let bb = self.bit(b);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            let k = (usize::from(i & ba != 0) << 1) | usize::from(i & bb != 0);
            *amp *= d[k];
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let bc = self.bit(control);
        let bt = self.bit(target);
        for i in 0..self.amps.len() {
            if i & bc != 0 && i & bt == 0 {
                self.amps.swap(i, i | bt);
            }
        }
    }

    /// `⟨Z⟩` on an active wire.
    pub fn expectation_z(&self, wire: usize) -> Result<f64> {
        self.check_active(wire)?;
        Ok(self.expectation_z_unchecked(wire))
    }

    pub(crate) fn expectation_z_unchecked(&self, wire: usize) -> f64 {
        let bit = self.bit(wire);
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let p = a.norm_sqr();
                if i & bit == 0 {
                    p
                } else {
                    -p
                }
            })
            .sum()
    }

    /// Removes `wire` from the active set. Amplitudes are untouched; the wire
    /// is traced out implicitly by never addressing it again.
    pub fn deactivate(&mut self, wire: usize) -> Result<()> {
        self.check_active(wire)?;
        self.active.retain(|&w| w != wire);
        Ok(())
    }
}

/// Spreads `k` so a zero bit sits at the single-bit mask `bit`.
fn insert_zero(k: usize, bit: usize) -> usize {
    ((k & !(bit - 1)) << 1) | (k & (bit - 1))
}

/// `|0…0⟩` on `n_wires` wires.
pub fn new_state(n_wires: usize) -> Result<StateVector> {
    StateVector::new(n_wires)
}

/// Functional form of [`StateVector::apply`].
pub fn apply_gate(mut state: StateVector, gate: &GateSpec) -> Result<StateVector> {
    state.apply(gate)?;
    Ok(state)
}

pub fn expectation_z(state: &StateVector, wire: usize) -> Result<f64> {
    state.expectation_z(wire)
}

pub fn deactivate_wire(mut state: StateVector, wire: usize) -> Result<StateVector> {
    state.deactivate(wire)?;
    Ok(state)
}
