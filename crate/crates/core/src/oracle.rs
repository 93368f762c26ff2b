//! Dense full-matrix reference implementations used only by tests.
//!
//! Everything here builds explicit `2^n × 2^n` operators; it shares no code
//! with the stencil kernels it checks.

use num_complex::Complex64;

use crate::gates::{GateKind, GateMatrix, GateSpec};

pub type Dense = Vec<Vec<Complex64>>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn identity(dim: usize) -> Dense {
    (0..dim)
        .map(|r| (0..dim).map(|c| if r == c { ONE } else { ZERO }).collect())
        .collect()
}

pub fn kron(a: &Dense, b: &Dense) -> Dense {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![ZERO; ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![ZERO; m]; n];
    for i in 0..n {
        for k in 0..b.len() {
            let aik = a[i][k];
            if aik == ZERO {
                continue;
            }
            for j in 0..m {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn matvec(a: &Dense, v: &[Complex64]) -> Vec<Complex64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

pub fn scale(a: &Dense, s: Complex64) -> Dense {
    a.iter().map(|r| r.iter().map(|x| x * s).collect()).collect()
}

fn to_dense(m: &GateMatrix) -> Dense {
    let d = m.dim();
    (0..d).map(|r| (0..d).map(|c| m.get(r, c)).collect()).collect()
}

/// The gate as an operator on `n` wires (wire 0 most significant).
///
/// Single-qubit gates are built as literal Kronecker products; two-qubit gates
/// are embedded entry by entry from the definition `⟨i|U|j⟩ = U_sub` when all
/// other bits agree.
pub fn embed(gate: &GateSpec, n: usize) -> Dense {
    let m = to_dense(&gate.matrix());
    let wires = gate.wires();
    if wires.len() == 1 {
        let mut out = identity(1);
        for w in 0..n {
            let f = if w == wires[0] { m.clone() } else { identity(2) };
            out = kron(&out, &f);
        }
        return out;
    }
    let dim = 1usize << n;
    let bit = |idx: usize, w: usize| (idx >> (n - 1 - w)) & 1;
    let mask = (1usize << (n - 1 - wires[0])) | (1usize << (n - 1 - wires[1]));
    let mut out = vec![vec![ZERO; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            if i & !mask != j & !mask {
                continue;
            }
            let si = 2 * bit(i, wires[0]) + bit(i, wires[1]);
            let sj = 2 * bit(j, wires[0]) + bit(j, wires[1]);
            out[i][j] = m[si][sj];
        }
    }
    out
}

pub fn circuit_unitary(gates: &[GateSpec], n: usize) -> Dense {
    gates
        .iter()
        .fold(identity(1 << n), |acc, g| matmul(&embed(g, n), &acc))
}

pub fn basis_zero(n: usize) -> Vec<Complex64> {
    let mut v = vec![ZERO; 1 << n];
    v[0] = ONE;
    v
}

pub fn z_expectation(v: &[Complex64], n: usize, wire: usize) -> f64 {
    v.iter()
        .enumerate()
        .map(|(i, a)| {
            let sign = if (i >> (n - 1 - wire)) & 1 == 0 { 1.0 } else { -1.0 };
            sign * a.norm_sqr()
        })
        .sum()
}

pub fn pauli(kind: char) -> Dense {
    let i = Complex64::new(0.0, 1.0);
    match kind {
        'X' => vec![vec![ZERO, ONE], vec![ONE, ZERO]],
        'Y' => vec![vec![ZERO, -i], vec![i, ZERO]],
        'Z' => vec![vec![ONE, ZERO], vec![ZERO, -ONE]],
        _ => identity(2),
    }
}

pub fn pauli_pair(kind: GateKind) -> Dense {
    let p = match kind {
        GateKind::RXX => pauli('X'),
        GateKind::RYY => pauli('Y'),
        GateKind::RZZ => pauli('Z'),
        other => panic!("{other} is not an Ising coupling"),
    };
    kron(&p, &p)
}

/// `exp(A)` by truncated Taylor series (fine for the small-norm generators used in tests).
pub fn expm_series(a: &Dense) -> Dense {
    let n = a.len();
    let mut out = identity(n);
    let mut term = identity(n);
    for k in 1..40 {
        term = scale(&matmul(&term, a), Complex64::new(1.0 / k as f64, 0.0));
        for r in 0..n {
            for c in 0..n {
                out[r][c] += term[r][c];
            }
        }
    }
    out
}
