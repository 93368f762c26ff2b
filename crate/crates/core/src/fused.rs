//! Execution plan that merges runs of consecutive gates confined to at most two
//! wires into one dense block, so repeated suffix evaluations during parameter
//! shift cost one kernel pass per block instead of one per gate.

use num_complex::Complex64;

use crate::circuit::Op;
use crate::gates::{GateMatrix, GateSpec};
use crate::statevector::StateVector;

type M4 = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn identity(n: usize) -> M4 {
    let mut m = [[ZERO; 4]; 4];
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = ONE;
    }
    m
}

fn matmul(a: &M4, b: &M4, n: usize) -> M4 {
    let mut m = [[ZERO; 4]; 4];
    for r in 0..n {
        for c in 0..n {
            let mut acc = ZERO;
            for k in 0..n {
                acc += a[r][k] * b[k][c];
            }
            m[r][c] = acc;
        }
    }
    m
}

/// A unitary on `wires[..n]`, stored in the basis `|w0⟩` or `|w0 w1⟩`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    wires: [usize; 2],
    n: usize,
    m: M4,
}

impl Block {
    fn new(wires: &[usize]) -> Self {
        let n = wires.len();
        Block {
            wires: [wires[0], *wires.get(1).unwrap_or(&wires[0])],
            n,
            m: identity(1 << n),
        }
    }

    fn dim(&self) -> usize {
        1 << self.n
    }

    /// `gate` expressed in this block's basis.
    fn embed(&self, gate: &GateSpec) -> M4 {
        let gw = gate.wires();
        let mut out = [[ZERO; 4]; 4];
        match (gate.matrix(), self.n) {
            (GateMatrix::One(g), 1) => {
                for r in 0..2 {
                    for c in 0..2 {
                        out[r][c] = g[r][c];
                    }
                }
            }
            (GateMatrix::One(g), _) => {
                let on_first = gw[0] == self.wires[0];
                for r in 0..4 {
                    for c in 0..4 {
                        let (r0, r1, c0, c1) = (r >> 1, r & 1, c >> 1, c & 1);
                        out[r][c] = if on_first {
                            if r1 == c1 { g[r0][c0] } else { ZERO }
                        } else if r0 == c0 {
                            g[r1][c1]
                        } else {
                            ZERO
                        };
                    }
                }
            }
            (GateMatrix::Two(g), _) => {
                let swapped = gw[0] != self.wires[0];
                let perm = |i: usize| if swapped { ((i & 1) << 1) | (i >> 1) } else { i };
                for r in 0..4 {
                    for c in 0..4 {
                        out[r][c] = g[perm(r)][perm(c)];
                    }
                }
            }
        }
        out
    }

    /// `self ← gate · self`.
    fn push(&mut self, gate: &GateSpec) {
        let g = self.embed(gate);
        self.m = matmul(&g, &self.m, self.dim());
    }

    pub(crate) fn apply(&self, state: &mut StateVector) {
        if self.n == 1 {
            let m = [[self.m[0][0], self.m[0][1]], [self.m[1][0], self.m[1][1]]];
            state.apply_1q(self.wires[0], &m);
        } else {
            state.apply_2q(self.wires[0], self.wires[1], &self.m);
        }
    }
}

/// Consecutive gates grouped by wire pair.
#[derive(Debug, Clone)]
pub(crate) struct Group {
    /// Indices into the op list, in order.
    pub ops: Vec<usize>,
    /// Product of every gate in the group.
    pub fused: Block,
    /// `tails[k]`: product of the gates after `ops[k]`.
    tails: Vec<Block>,
    wires: Vec<usize>,
}

impl Group {
    /// The group with `ops[k]` replaced by `gate`, as one block.
    pub(crate) fn with_replaced(&self, k: usize, gate: &GateSpec) -> Block {
        let mut b = Block::new(&self.wires);
        b.push(gate);
        b.m = matmul(&self.tails[k].m, &b.m, b.dim());
        b
    }
}

/// Partitions the gates of `ops` into groups; discards carry no amplitude
/// change and are skipped.
pub(crate) fn plan(ops: &[Op]) -> Vec<Group> {
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        let Op::Gate(g) = op else { continue };
        let gw = g.wires();
        if let Some((wires, members)) = groups.last_mut() {
            let mut union = wires.clone();
            for w in gw {
                if !union.contains(w) {
                    union.push(*w);
                }
            }
            if union.len() <= 2 {
                *wires = union;
                members.push(i);
                continue;
            }
        }
        groups.push((gw.to_vec(), vec![i]));
    }
    groups
        .into_iter()
        .map(|(wires, members)| {
            let gate = |i: usize| match &ops[i] {
                Op::Gate(g) => g,
                Op::Discard(_) => unreachable!(),
            };
            let mut fused = Block::new(&wires);
            for &i in &members {
                fused.push(gate(i));
            }
            let mut tails = vec![Block::new(&wires); members.len()];
            for k in (0..members.len().saturating_sub(1)).rev() {
                let mut t = tails[k + 1].clone();
                t.m = matmul(&t.m, &t.embed(gate(members[k + 1])), t.dim());
                tails[k] = t;
            }
            Group {
                ops: members,
                fused,
                tails,
                wires,
            }
        })
        .collect()
}
