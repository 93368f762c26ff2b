//! Gate catalogue and the unitary matrices the simulator realizes.
//!
//! Two-qubit matrices are written in the basis `|w0 w1⟩` where `w0 = wires[0]`
//! is the more significant bit, so for `CNOT` and `CU3` the first wire is the
//! control.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat2 = [[Complex64; 2]; 2];
pub type Mat4 = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    U3,
    RY,
    H,
    CNOT,
    RXX,
    RYY,
    RZZ,
    CU3,
}

impl GateKind {
    pub const ALL: [GateKind; 8] = [
        GateKind::U3,
        GateKind::RY,
        GateKind::H,
        GateKind::CNOT,
        GateKind::RXX,
        GateKind::RYY,
        GateKind::RZZ,
        GateKind::CU3,
    ];

    pub fn n_params(self) -> usize {
        match self {
            GateKind::U3 | GateKind::CU3 => 3,
            GateKind::RY | GateKind::RXX | GateKind::RYY | GateKind::RZZ => 1,
            GateKind::H | GateKind::CNOT => 0,
        }
    }

    pub fn n_wires(self) -> usize {
        match self {
            GateKind::U3 | GateKind::RY | GateKind::H => 1,
            _ => 2,
        }
    }

    /// Whether every angle of this gate enters through a generator with
    /// eigenvalues `±1/2` (up to a constant), so the two-term shift rule is exact.
    pub fn is_shiftable(self) -> bool {
        matches!(
            self,
            GateKind::U3 | GateKind::RY | GateKind::RXX | GateKind::RYY | GateKind::RZZ
        )
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GateKind::U3 => "U3",
            GateKind::RY => "RY",
            GateKind::H => "H",
            GateKind::CNOT => "CNOT",
            GateKind::RXX => "RXX",
            GateKind::RYY => "RYY",
            GateKind::RZZ => "RZZ",
            GateKind::CU3 => "CU3",
        };
        f.write_str(name)
    }
}

/// A gate kind with bound angles and target wires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSpec {
    kind: GateKind,
    params: [f64; 3],
    wires: [usize; 2],
}

impl GateSpec {
    pub fn new(kind: GateKind, params: &[f64], wires: &[usize]) -> Result<Self> {
        if params.len() != kind.n_params() {
            return Err(Error::Construction(format!(
                "{kind} takes {} angle(s), got {}",
                kind.n_params(),
                params.len()
            )));
        }
        if wires.len() != kind.n_wires() {
            return Err(Error::Construction(format!(
                "{kind} acts on {} wire(s), got {}",
                kind.n_wires(),
                wires.len()
            )));
        }
        if wires.len() == 2 && wires[0] == wires[1] {
            return Err(Error::Construction(format!(
                "{kind} needs two distinct wires, got {} twice",
                wires[0]
            )));
        }
        let mut p = [0.0; 3];
        p[..params.len()].copy_from_slice(params);
        let mut w = [0; 2];
        w[..wires.len()].copy_from_slice(wires);
        Ok(GateSpec {
            kind,
            params: p,
            wires: w,
        })
    }

    pub fn u3(theta: f64, phi: f64, lambda: f64, wire: usize) -> Self {
        GateSpec {
            kind: GateKind::U3,
            params: [theta, phi, lambda],
            wires: [wire, 0],
        }
    }

    pub fn ry(theta: f64, wire: usize) -> Self {
        GateSpec {
            kind: GateKind::RY,
            params: [theta, 0.0, 0.0],
            wires: [wire, 0],
        }
    }

    pub fn h(wire: usize) -> Self {
        GateSpec {
            kind: GateKind::H,
            params: [0.0; 3],
            wires: [wire, 0],
        }
    }

    /// Panics if `control == target`.
    pub fn cnot(control: usize, target: usize) -> Self {
        Self::new(GateKind::CNOT, &[], &[control, target]).expect("distinct CNOT wires")
    }

    /// Ising coupling `exp(-i θ/2 Σ⊗Σ)` for `kind` in `RXX | RYY | RZZ`.
    /// Panics on any other kind or on repeated wires.
    pub fn ising(kind: GateKind, theta: f64, a: usize, b: usize) -> Self {
        assert!(matches!(kind, GateKind::RXX | GateKind::RYY | GateKind::RZZ));
        Self::new(kind, &[theta], &[a, b]).expect("distinct Ising wires")
    }

    /// Panics if `control == target`.
    pub fn cu3(theta: f64, phi: f64, lambda: f64, control: usize, target: usize) -> Self {
        Self::new(GateKind::CU3, &[theta, phi, lambda], &[control, target])
            .expect("distinct CU3 wires")
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn params(&self) -> &[f64] {
        &self.params[..self.kind.n_params()]
    }

    pub fn wires(&self) -> &[usize] {
        &self.wires[..self.kind.n_wires()]
    }

    /// Returns a copy with angle `slot` replaced.
    pub(crate) fn with_param(mut self, slot: usize, value: f64) -> Self {
        debug_assert!(slot < self.kind.n_params());
        self.params[slot] = value;
        self
    }

    pub(crate) fn set_param(&mut self, slot: usize, value: f64) {
        debug_assert!(slot < self.kind.n_params());
        self.params[slot] = value;
    }

    pub fn matrix(&self) -> GateMatrix {
        let p = self.params;
        match self.kind {
            GateKind::U3 => GateMatrix::One(u3_matrix(p[0], p[1], p[2])),
            GateKind::RY => GateMatrix::One(ry_matrix(p[0])),
            GateKind::H => {
                let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                GateMatrix::One([[s, s], [s, -s]])
            }
            GateKind::CNOT => {
                let mut m = identity4();
                m[2][2] = ZERO;
                m[3][3] = ZERO;
                m[2][3] = ONE;
                m[3][2] = ONE;
                GateMatrix::Two(m)
            }
            GateKind::RXX => GateMatrix::Two(ising_xx(p[0])),
            GateKind::RYY => GateMatrix::Two(ising_yy(p[0])),
            GateKind::RZZ => GateMatrix::Two(ising_zz(p[0])),
            GateKind::CU3 => {
                let u = u3_matrix(p[0], p[1], p[2]);
                let mut m = identity4();
                for r in 0..2 {
                    for c in 0..2 {
                        m[2 + r][2 + c] = u[r][c];
                    }
                }
                GateMatrix::Two(m)
            }
        }
    }
}

/// Builds a gate after validating arity and angle count.
pub fn build_gate(kind: GateKind, params: &[f64], wires: &[usize]) -> Result<GateSpec> {
    GateSpec::new(kind, params, wires)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMatrix {
    One(Mat2),
    Two(Mat4),
}

impl GateMatrix {
    pub fn dim(&self) -> usize {
        match self {
            GateMatrix::One(_) => 2,
            GateMatrix::Two(_) => 4,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        match self {
            GateMatrix::One(m) => m[r][c],
            GateMatrix::Two(m) => m[r][c],
        }
    }
}

/// `U3(θ,φ,λ) = [[cos θ/2, −e^{iλ} sin θ/2], [e^{iφ} sin θ/2, e^{i(φ+λ)} cos θ/2]]`.
pub fn u3_matrix(theta: f64, phi: f64, lambda: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), -Complex64::from_polar(s, lambda)],
        [
            Complex64::from_polar(s, phi),
            Complex64::from_polar(c, phi + lambda),
        ],
    ]
}

pub fn ry_matrix(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

fn identity4() -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = ONE;
    }
    m
}

// exp(-i θ/2 P⊗P) = cos(θ/2) I − i sin(θ/2) P⊗P
fn ising_xx(theta: f64) -> Mat4 {
    let (s, c) = (theta / 2.0).sin_cos();
    let mis = Complex64::new(0.0, -s);
    let mut m = [[ZERO; 4]; 4];
    for i in 0..4 {
        m[i][i] = Complex64::new(c, 0.0);
        m[i][3 - i] = mis;
    }
    m
}

fn ising_yy(theta: f64) -> Mat4 {
    // Y⊗Y is −1 on the |00⟩,|11⟩ corners and +1 on |01⟩,|10⟩.
    let (s, c) = (theta / 2.0).sin_cos();
    let mut m = [[ZERO; 4]; 4];
    for i in 0..4 {
        m[i][i] = Complex64::new(c, 0.0);
    }
    m[0][3] = Complex64::new(0.0, s);
    m[3][0] = Complex64::new(0.0, s);
    m[1][2] = Complex64::new(0.0, -s);
    m[2][1] = Complex64::new(0.0, -s);
    m
}

fn ising_zz(theta: f64) -> Mat4 {
    let minus = Complex64::from_polar(1.0, -theta / 2.0);
    let plus = Complex64::from_polar(1.0, theta / 2.0);
    let mut m = [[ZERO; 4]; 4];
    m[0][0] = minus;
    m[1][1] = plus;
    m[2][2] = plus;
    m[3][3] = minus;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_gate(kind: GateKind, rng: &mut ChaCha8Rng) -> GateSpec {
        let params: Vec<f64> = (0..kind.n_params())
            .map(|_| rng.gen_range(-2.0 * PI..2.0 * PI))
            .collect();
        let wires: Vec<usize> = (0..kind.n_wires()).collect();
        build_gate(kind, &params, &wires).unwrap()
    }

    #[test]
    fn u3_zero_is_identity() {
        let m = GateSpec::u3(0.0, 0.0, 0.0, 0).matrix();
        for r in 0..2 {
            for c in 0..2 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((m.get(r, c) - Complex64::new(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn ry_pi_matrix() {
        let m = GateSpec::ry(PI, 0).matrix();
        let want = [[0.0, -1.0], [1.0, 0.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((m.get(r, c) - Complex64::new(want[r][c], 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn ising_matches_matrix_exponential_series() {
        for kind in [GateKind::RXX, GateKind::RYY, GateKind::RZZ] {
            for &theta in &[0.0, 0.37, 1.3, -2.2, PI] {
                let gen = oracle::pauli_pair(kind);
                let series = oracle::expm_series(&oracle::scale(&gen, Complex64::new(0.0, -theta / 2.0)));
                let m = GateSpec::ising(kind, theta, 0, 1).matrix();
                for r in 0..4 {
                    for c in 0..4 {
                        assert!(
                            (series[r][c] - m.get(r, c)).norm() < 1e-12,
                            "{kind} θ={theta} ({r},{c})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn rzz_is_stated_diagonal() {
        let theta = 0.9;
        let m = GateSpec::ising(GateKind::RZZ, theta, 0, 1).matrix();
        let e = |x: f64| Complex64::from_polar(1.0, x);
        let diag = [e(-theta / 2.0), e(theta / 2.0), e(theta / 2.0), e(-theta / 2.0)];
        for i in 0..4 {
            assert!((m.get(i, i) - diag[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn every_kind_is_unitary_over_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in GateKind::ALL {
            for _ in 0..100 {
                let m = random_gate(kind, &mut rng).matrix();
                let d = m.dim();
                for r in 0..d {
                    for c in 0..d {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for k in 0..d {
                            acc += m.get(k, r).conj() * m.get(k, c);
                        }
                        let want = if r == c { 1.0 } else { 0.0 };
                        assert!((acc - want).norm() < 1e-10, "{kind}");
                    }
                }
            }
        }
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        assert!(matches!(
            build_gate(GateKind::U3, &[0.1], &[0]),
            Err(Error::Construction(_))
        ));
        assert!(matches!(
            build_gate(GateKind::CNOT, &[], &[0]),
            Err(Error::Construction(_))
        ));
        assert!(matches!(
            build_gate(GateKind::RZZ, &[0.2], &[1, 1]),
            Err(Error::Construction(_))
        ));
        assert!(build_gate(GateKind::H, &[], &[3]).is_ok());
    }
}
