//! The circuit blocks of the encoder-decoder: angle encoding, weight-shared
//! convolution, deferred-measurement pooling, dense unitary, attention
//! projections and the variational head.
//!
//! Every block exists twice: as a direct operation on a [`StateVector`] and as
//! a builder that appends the same gates to a [`ParamCircuit`] so the block can
//! be differentiated by parameter shift. Pooling is the one place the two
//! differ in form: the direct path applies `CU3`, the builder emits an exact
//! decomposition into shiftable `U3` and `CNOT` gates.

use crate::circuit::{run_circuit, Angle, ParamCircuit};
use crate::error::{check_len, Error, Result};
use crate::gates::{GateKind, GateSpec};
use crate::statevector::StateVector;

pub const CONV_PARAMS: usize = 15;
pub const POOL_PARAMS: usize = 3;

/// The 15 angles of one two-qubit convolution block, shared by every pair
/// position in a layer: `U3 ⊗ U3`, `RXX`, `RYY`, `RZZ`, `U3 ⊗ U3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvBlockParams(pub [f64; CONV_PARAMS]);

impl ConvBlockParams {
    pub fn from_slice(angles: &[f64]) -> Result<Self> {
        check_len("convolution angles", CONV_PARAMS, angles.len())?;
        finite("convolution angles", angles)?;
        let mut a = [0.0; CONV_PARAMS];
        a.copy_from_slice(angles);
        Ok(ConvBlockParams(a))
    }
}

/// The `(θ, φ, λ)` of the pooling layer's conditional U3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolParams(pub [f64; POOL_PARAMS]);

impl PoolParams {
    pub fn from_slice(angles: &[f64]) -> Result<Self> {
        check_len("pooling angles", POOL_PARAMS, angles.len())?;
        finite("pooling angles", angles)?;
        Ok(PoolParams([angles[0], angles[1], angles[2]]))
    }
}

/// One U3 per wire for each of the query, key and value projections.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub query: Vec<f64>,
    pub key: Vec<f64>,
    pub value: Vec<f64>,
}

impl AttentionParams {
    pub fn new(query: Vec<f64>, key: Vec<f64>, value: Vec<f64>) -> Result<Self> {
        let n = query.len();
        if n == 0 || !n.is_multiple_of(3) {
            return Err(Error::Shape {
                what: "attention projection angles (3 per wire)",
                expected: 3 * (n / 3).max(1),
                actual: n,
            });
        }
        check_len("key projection angles", n, key.len())?;
        check_len("value projection angles", n, value.len())?;
        for v in [&query, &key, &value] {
            finite("attention angles", v)?;
        }
        Ok(AttentionParams { query, key, value })
    }

    /// Splits a flat `[query | key | value]` slice.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(9) {
            return Err(Error::Shape {
                what: "flat attention angles (9 per wire)",
                expected: 9 * (flat.len() / 9).max(1),
                actual: flat.len(),
            });
        }
        let n = flat.len() / 3;
        Self::new(flat[..n].to_vec(), flat[n..2 * n].to_vec(), flat[2 * n..].to_vec())
    }

    pub fn n_wires(&self) -> usize {
        self.query.len() / 3
    }
}

/// One RY angle per wire.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams(pub Vec<f64>);

fn finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be finite")))
    }
}

// ---------------------------------------------------------------------------
// Circuit builders

/// RY(input_i) on wire i for every wire.
pub fn push_angle_encoding(c: &mut ParamCircuit, first_input: usize) -> Result<()> {
    for w in 0..c.n_wires() {
        c.push_bound(GateKind::RY, &[Angle::input(first_input + w)], &[w])?;
    }
    Ok(())
}

fn push_u3(c: &mut ParamCircuit, p: usize, wire: usize) -> Result<()> {
    c.push_bound(
        GateKind::U3,
        &[Angle::param(p), Angle::param(p + 1), Angle::param(p + 2)],
        &[wire],
    )?;
    Ok(())
}

/// The 15-angle two-qubit block on `(a, b)` with parameters starting at `p`.
pub fn push_two_qubit_block(c: &mut ParamCircuit, p: usize, a: usize, b: usize) -> Result<()> {
    push_u3(c, p, a)?;
    push_u3(c, p + 3, b)?;
    c.push_bound(GateKind::RXX, &[Angle::param(p + 6)], &[a, b])?;
    c.push_bound(GateKind::RYY, &[Angle::param(p + 7)], &[a, b])?;
    c.push_bound(GateKind::RZZ, &[Angle::param(p + 8)], &[a, b])?;
    push_u3(c, p + 9, a)?;
    push_u3(c, p + 12, b)?;
    Ok(())
}

/// Pair positions visited by one convolution layer over `active` wires:
/// even offsets first, then odd offsets, wrapping the last wire onto the first
/// when the count is even and greater than two.
pub fn conv_pairs(active: &[usize]) -> Vec<(usize, usize)> {
    let k = active.len();
    let mut pairs = Vec::new();
    for i in (0..k.saturating_sub(1)).step_by(2) {
        pairs.push((active[i], active[i + 1]));
    }
    for i in (1..k.saturating_sub(1)).step_by(2) {
        pairs.push((active[i], active[i + 1]));
    }
    if k > 2 && k.is_multiple_of(2) {
        pairs.push((active[k - 1], active[0]));
    }
    pairs
}

pub fn push_conv_layer(c: &mut ParamCircuit, p: usize, active: &[usize]) -> Result<()> {
    if active.len() < 2 {
        return Err(Error::Architecture(format!(
            "convolution needs at least 2 active wires, got {}",
            active.len()
        )));
    }
    for (a, b) in conv_pairs(active) {
        push_two_qubit_block(c, p, a, b)?;
    }
    Ok(())
}

/// `(keep, drop)` pairs for pooling; the lower-indexed wire of each pair is kept.
pub fn pool_pairs(active: &[usize]) -> Result<Vec<(usize, usize)>> {
    if active.len() < 2 || !active.len().is_multiple_of(2) {
        return Err(Error::Architecture(format!(
            "pooling needs an even number (≥ 2) of active wires, got {}",
            active.len()
        )));
    }
    Ok(active
        .chunks(2)
        .map(|pair| (pair[0].min(pair[1]), pair[0].max(pair[1])))
        .collect())
}

/// Controlled-U3 from `control` onto `target` as shiftable gates:
///
/// ```text
/// c: U3(0, φ/2, λ/2) ──●──────────────────────────────●──────────────────
/// t: U3(0, −φ/2, λ/2) ─X─ U3(0,0,−φ/2) ─ U3(−θ/2,0,−λ/2) ─X─ U3(θ/2, φ, 0)
/// ```
pub fn push_controlled_u3(c: &mut ParamCircuit, p: usize, control: usize, target: usize) -> Result<()> {
    let (theta, phi, lambda) = (p, p + 1, p + 2);
    let s = |index: usize, scale: f64| Angle::Param { index, scale };
    c.push_bound(GateKind::U3, &[Angle::Fixed(0.0), s(phi, 0.5), s(lambda, 0.5)], &[control])?;
    c.push_bound(GateKind::U3, &[Angle::Fixed(0.0), s(phi, -0.5), s(lambda, 0.5)], &[target])?;
    c.push(GateSpec::cnot(control, target));
    c.push_bound(GateKind::U3, &[Angle::Fixed(0.0), Angle::Fixed(0.0), s(phi, -0.5)], &[target])?;
    c.push_bound(GateKind::U3, &[s(theta, -0.5), Angle::Fixed(0.0), s(lambda, -0.5)], &[target])?;
    c.push(GateSpec::cnot(control, target));
    c.push_bound(GateKind::U3, &[s(theta, 0.5), s(phi, 1.0), Angle::Fixed(0.0)], &[target])?;
    Ok(())
}

/// Appends a pooling layer and returns the wires that stay active.
pub fn push_pool_layer(c: &mut ParamCircuit, p: usize, active: &[usize]) -> Result<Vec<usize>> {
    let pairs = pool_pairs(active)?;
    for &(keep, drop) in &pairs {
        push_controlled_u3(c, p, drop, keep)?;
        c.discard(drop);
    }
    Ok(pairs.into_iter().map(|(keep, _)| keep).collect())
}

/// Parameter count of the dense unitary on `k` wires: `4^k − 1`.
pub fn dense_param_count(k: usize) -> Result<usize> {
    match k {
        1..=3 => Ok(4usize.pow(k as u32) - 1),
        _ => Err(Error::Architecture(format!(
            "dense unitary supports 1 to 3 active wires, got {k}"
        ))),
    }
}

/// Dense unitary on `active` (1 to 3 wires) with `4^k − 1` parameters.
///
/// One wire is a single U3; two wires the 15-angle block; three wires a U3 per
/// wire followed by two rounds of `[RXX RYY RZZ, U3 ⊗ U3]` over the pairs
/// (0,1), (1,2), (0,2).
pub fn push_dense(c: &mut ParamCircuit, p: usize, active: &[usize]) -> Result<()> {
    dense_param_count(active.len())?;
    match *active {
        [a] => push_u3(c, p, a),
        [a, b] => push_two_qubit_block(c, p, a, b),
        [a, b, d] => {
            let mut q = p;
            for w in [a, b, d] {
                push_u3(c, q, w)?;
                q += 3;
            }
            for _ in 0..2 {
                for (x, y) in [(a, b), (b, d), (a, d)] {
                    c.push_bound(GateKind::RXX, &[Angle::param(q)], &[x, y])?;
                    c.push_bound(GateKind::RYY, &[Angle::param(q + 1)], &[x, y])?;
                    c.push_bound(GateKind::RZZ, &[Angle::param(q + 2)], &[x, y])?;
                    push_u3(c, q + 3, x)?;
                    push_u3(c, q + 6, y)?;
                    q += 9;
                }
            }
            debug_assert_eq!(q - p, 63);
            Ok(())
        }
        _ => unreachable!(),
    }
}

/// `H` on every wire, `RY(param_i)` on wire i, then the CNOT chain `0→1→…→d−1`.
pub fn push_variational(c: &mut ParamCircuit, p: usize) -> Result<()> {
    let d = c.n_wires();
    for w in 0..d {
        c.push(GateSpec::h(w));
    }
    for w in 0..d {
        c.push_bound(GateKind::RY, &[Angle::param(p + w)], &[w])?;
    }
    for w in 0..d.saturating_sub(1) {
        c.push(GateSpec::cnot(w, w + 1));
    }
    Ok(())
}

/// Single-wire projection: `RY(input 0)` then `U3(params 0..3)`.
pub fn projection_circuit() -> ParamCircuit {
    let mut c = ParamCircuit::new(1);
    c.add_inputs(1);
    c.add_params(3);
    c.push_bound(GateKind::RY, &[Angle::input(0)], &[0])
        .expect("registered input");
    push_u3(&mut c, 0, 0).expect("registered params");
    c
}

// ---------------------------------------------------------------------------
// Direct operations

/// `|0…0⟩` with `RY(features[i])` on wire i.
pub fn angle_encode(features: &[f64], n_wires: usize) -> Result<StateVector> {
    check_len("encoded features", n_wires, features.len())?;
    let mut s = StateVector::new(n_wires)?;
    for (w, &f) in features.iter().enumerate() {
        s.apply(&GateSpec::ry(f, w))?;
    }
    Ok(s)
}

fn run_on(state: StateVector, build: impl FnOnce(&mut ParamCircuit) -> Result<()>, params: &[f64]) -> Result<StateVector> {
    let mut c = ParamCircuit::new(state.n_wires());
    c.add_params(params.len());
    build(&mut c)?;
    run_circuit(&c, params, &[], &state)
}

/// One weight-shared convolution layer over the active wires.
pub fn qconv_layer(state: StateVector, params: &ConvBlockParams) -> Result<StateVector> {
    let active = state.active_wires().to_vec();
    run_on(state, |c| push_conv_layer(c, 0, &active), &params.0)
}

/// Pools active wires in pairs: CU3 controlled by the dropped wire onto the
/// kept one, then the dropped wire is discarded.
pub fn qpool_layer(mut state: StateVector, params: &PoolParams) -> Result<StateVector> {
    let pairs = pool_pairs(state.active_wires())?;
    let [t, p, l] = params.0;
    for (keep, drop) in pairs {
        state.apply(&GateSpec::cu3(t, p, l, drop, keep))?;
        state.deactivate(drop)?;
    }
    Ok(state)
}

pub fn qdense(state: StateVector, params: &[f64]) -> Result<StateVector> {
    let active = state.active_wires().to_vec();
    check_len("dense parameters", dense_param_count(active.len())?, params.len())?;
    finite("dense parameters", params)?;
    run_on(state, |c| push_dense(c, 0, &active), params)
}

/// Z-expectations of the variational head for `features` (angles).
pub fn qvariational(features: &[f64], params: &VariationalParams) -> Result<Vec<f64>> {
    let d = params.0.len();
    check_len("variational features", d, features.len())?;
    let mut c = ParamCircuit::new(d);
    c.add_inputs(d);
    c.add_params(d);
    push_angle_encoding(&mut c, 0)?;
    push_variational(&mut c, 0)?;
    let out = run_circuit(&c, &params.0, features, &StateVector::new(d)?)?;
    (0..d).map(|w| out.expectation_z(w)).collect()
}

/// `⟨Z⟩` of one projection wire: `U3(angles) RY(input) |0⟩`.
pub fn project_wire(input: f64, angles: &[f64]) -> f64 {
    let mut s = StateVector::new(1).expect("one wire");
    s.apply_unchecked(&GateSpec::ry(input, 0));
    s.apply_unchecked(&GateSpec::u3(angles[0], angles[1], angles[2], 0));
    s.expectation_z_unchecked(0)
}

/// Per-wire projection of an encoded representation.
///
/// The projection circuit has no entangling gates, so each wire is simulated
/// on its own single-qubit register.
pub fn project(reps: &[f64], angles: &[f64]) -> Vec<f64> {
    reps.iter()
        .enumerate()
        .map(|(i, &x)| project_wire(x, &angles[3 * i..3 * i + 3]))
        .collect()
}

/// Row-wise softmax of `q·k/√d` over keys not masked out.
///
/// `key_mask[u]` is `true` for padding. With `causal`, query `t` also ignores
/// keys `u > t`. With `uniform`, scores are ignored and every visible key gets
/// equal weight.
pub fn attention_weights(
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    key_mask: &[bool],
    causal: bool,
    uniform: bool,
) -> Result<Vec<Vec<f64>>> {
    check_len("attention mask", keys.len(), key_mask.len())?;
    let scale = 1.0 / (queries.first().map_or(1, |q| q.len()) as f64).sqrt();
    queries
        .iter()
        .enumerate()
        .map(|(t, q)| {
            let visible: Vec<bool> = (0..keys.len())
                .map(|u| !key_mask[u] && !(causal && u > t))
                .collect();
            if !visible.iter().any(|&v| v) {
                return Err(Error::Attention(format!("query {t} has no unmasked key")));
            }
            let scores: Vec<f64> = keys
                .iter()
                .map(|k| if uniform { 0.0 } else { scale * dot(q, k) })
                .collect();
            let max = scores
                .iter()
                .zip(&visible)
                .filter(|(_, &v)| v)
                .map(|(s, _)| *s)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut w: Vec<f64> = scores
                .iter()
                .zip(&visible)
                .map(|(s, &v)| if v { (s - max).exp() } else { 0.0 })
                .collect();
            let z: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= z);
            Ok(w)
        })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Attention output of [`qattention`] together with the intermediate values.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub queries: Vec<Vec<f64>>,
    pub keys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

/// Quantum attention over token representations given as encoding angles.
///
/// Each token is angle-encoded and passed through the query, key and value
/// projection circuits; the `⟨Z⟩` read-outs are combined classically as
/// `softmax(q·kᵀ/√d)·v` over tokens not marked in `mask`.
pub fn qattention(token_reps: &[Vec<f64>], params: &AttentionParams, mask: &[bool]) -> Result<AttentionOutput> {
    cross_attention(token_reps, token_reps, params, mask, false, false)
}

/// General form: queries from `query_reps`, keys and values from `kv_reps`.
pub fn cross_attention(
    query_reps: &[Vec<f64>],
    kv_reps: &[Vec<f64>],
    params: &AttentionParams,
    kv_mask: &[bool],
    causal: bool,
    uniform: bool,
) -> Result<AttentionOutput> {
    let d = params.n_wires();
    for r in query_reps.iter().chain(kv_reps) {
        check_len("token representation", d, r.len())?;
    }
    let queries: Vec<Vec<f64>> = query_reps.iter().map(|r| project(r, &params.query)).collect();
    let keys: Vec<Vec<f64>> = kv_reps.iter().map(|r| project(r, &params.key)).collect();
    let values: Vec<Vec<f64>> = kv_reps.iter().map(|r| project(r, &params.value)).collect();
    let weights = attention_weights(&queries, &keys, kv_mask, causal, uniform)?;
    let outputs = weights
        .iter()
        .map(|w| {
            let mut o = vec![0.0; d];
            for (wu, v) in w.iter().zip(&values) {
                for (oi, vi) in o.iter_mut().zip(v) {
                    *oi += wu * vi;
                }
            }
            o
        })
        .collect();
    Ok(AttentionOutput {
        queries,
        keys,
        values,
        weights,
        outputs,
    })
}
