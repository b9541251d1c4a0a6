//! GRU and LSTM cells and bidirectional sequence encoders.
//!
//! Weights are `[hidden, input]` / `[hidden, hidden]` matrices applied as
//! `W x`. The GRU applies its reset gate to the recurrent term inside the
//! candidate:
//!
//! ```text
//! z = σ(W_z x + U_z h + b_z)
//! r = σ(W_r x + U_r h + b_r)
//! n = tanh(W_n x + r ∘ (U_n h) + b_n)
//! h' = (1 - z) ∘ h + z ∘ n
//! ```

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParameterStore, Tape, Tensor, Var};

/// One step of a recurrence over tape values.
pub trait RecurrentCell {
    type State: Clone;

    fn input_dim(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    fn zero_state(&self, tape: &mut Tape<'_>) -> Self::State;
    fn step(&self, tape: &mut Tape<'_>, x: Var, state: &Self::State) -> Result<Self::State>;
    /// The per-step output exposed to the next layer.
    fn output(state: &Self::State) -> Var;
}

#[derive(Clone, Debug)]
pub struct GruParams {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_n: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_n: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_n: ParamId,
    input_dim: usize,
    hidden_dim: usize,
}

impl GruParams {
    pub fn new(store: &mut ParameterStore, prefix: &str, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        let w = |s: &mut ParameterStore, n: &str| s.add_uniform(&format!("{prefix}.{n}"), &[hidden_dim, input_dim]);
        let u = |s: &mut ParameterStore, n: &str| s.add_uniform(&format!("{prefix}.{n}"), &[hidden_dim, hidden_dim]);
        let b = |s: &mut ParameterStore, n: &str| s.add_zeros(&format!("{prefix}.{n}"), &[hidden_dim]);
        Ok(GruParams {
            w_z: w(store, "w_z")?,
            w_r: w(store, "w_r")?,
            w_n: w(store, "w_n")?,
            u_z: u(store, "u_z")?,
            u_r: u(store, "u_r")?,
            u_n: u(store, "u_n")?,
            b_z: b(store, "b_z")?,
            b_r: b(store, "b_r")?,
            b_n: b(store, "b_n")?,
            input_dim,
            hidden_dim,
        })
    }
}

fn gate(tape: &mut Tape<'_>, w: ParamId, x: Var, u: ParamId, h: Var, b: ParamId) -> Result<Var> {
    let (w, u, b) = (tape.param(w), tape.param(u), tape.param(b));
    let wx = tape.matmul(w, x)?;
    let uh = tape.matmul(u, h)?;
    let s = tape.add(wx, uh)?;
    tape.add(s, b)
}

fn check_dims(tape: &Tape<'_>, x: Var, h: Var, input_dim: usize, hidden_dim: usize) -> Result<()> {
    let (xs, hs) = (tape.shape(x), tape.shape(h));
    if xs != [input_dim] || hs != [hidden_dim] {
        return Err(Error::ShapeMismatch {
            op: "recurrent step",
            left: vec![input_dim, hidden_dim],
            right: [xs, hs].concat(),
        });
    }
    Ok(())
}

pub fn gru_step(tape: &mut Tape<'_>, x: Var, h_prev: Var, p: &GruParams) -> Result<Var> {
    check_dims(tape, x, h_prev, p.input_dim, p.hidden_dim)?;
    let z_pre = gate(tape, p.w_z, x, p.u_z, h_prev, p.b_z)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, p.w_r, x, p.u_r, h_prev, p.b_r)?;
    let r = tape.sigmoid(r_pre);

    let (w_n, u_n, b_n) = (tape.param(p.w_n), tape.param(p.u_n), tape.param(p.b_n));
    let wx = tape.matmul(w_n, x)?;
    let uh = tape.matmul(u_n, h_prev)?;
    let gated = tape.mul(r, uh)?;
    let n_pre = tape.sum(&[wx, gated, b_n])?;
    let n = tape.tanh(n_pre);

    let keep = tape.one_minus(z);
    let old = tape.mul(keep, h_prev)?;
    let new = tape.mul(z, n)?;
    tape.add(old, new)
}

impl RecurrentCell for GruParams {
    type State = Var;

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn zero_state(&self, tape: &mut Tape<'_>) -> Var {
        tape.input(Tensor::zeros(&[self.hidden_dim]))
    }

    fn step(&self, tape: &mut Tape<'_>, x: Var, state: &Var) -> Result<Var> {
        gru_step(tape, x, *state, self)
    }

    fn output(state: &Var) -> Var {
        *state
    }
}

#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_i: ParamId,
    pub w_f: ParamId,
    pub w_o: ParamId,
    pub w_g: ParamId,
    pub u_i: ParamId,
    pub u_f: ParamId,
    pub u_o: ParamId,
    pub u_g: ParamId,
    pub b_i: ParamId,
    pub b_f: ParamId,
    pub b_o: ParamId,
    pub b_g: ParamId,
    input_dim: usize,
    hidden_dim: usize,
}

impl LstmParams {
    pub fn new(store: &mut ParameterStore, prefix: &str, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        let w = |s: &mut ParameterStore, n: &str| s.add_uniform(&format!("{prefix}.{n}"), &[hidden_dim, input_dim]);
        let u = |s: &mut ParameterStore, n: &str| s.add_uniform(&format!("{prefix}.{n}"), &[hidden_dim, hidden_dim]);
        let b = |s: &mut ParameterStore, n: &str| s.add_zeros(&format!("{prefix}.{n}"), &[hidden_dim]);
        Ok(LstmParams {
            w_i: w(store, "w_i")?,
            w_f: w(store, "w_f")?,
            w_o: w(store, "w_o")?,
            w_g: w(store, "w_g")?,
            u_i: u(store, "u_i")?,
            u_f: u(store, "u_f")?,
            u_o: u(store, "u_o")?,
            u_g: u(store, "u_g")?,
            b_i: b(store, "b_i")?,
            b_f: b(store, "b_f")?,
            b_o: b(store, "b_o")?,
            b_g: b(store, "b_g")?,
            input_dim,
            hidden_dim,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

pub fn lstm_step(tape: &mut Tape<'_>, x: Var, state: &LstmState, p: &LstmParams) -> Result<LstmState> {
    check_dims(tape, x, state.h, p.input_dim, p.hidden_dim)?;
    if tape.shape(state.c) != [p.hidden_dim] {
        return Err(Error::ShapeMismatch {
            op: "lstm cell state",
            left: vec![p.hidden_dim],
            right: tape.shape(state.c).to_vec(),
        });
    }
    let h = state.h;
    let i_pre = gate(tape, p.w_i, x, p.u_i, h, p.b_i)?;
    let i = tape.sigmoid(i_pre);
    let f_pre = gate(tape, p.w_f, x, p.u_f, h, p.b_f)?;
    let f = tape.sigmoid(f_pre);
    let o_pre = gate(tape, p.w_o, x, p.u_o, h, p.b_o)?;
    let o = tape.sigmoid(o_pre);
    let g_pre = gate(tape, p.w_g, x, p.u_g, h, p.b_g)?;
    let g = tape.tanh(g_pre);

    let kept = tape.mul(f, state.c)?;
    let written = tape.mul(i, g)?;
    let c = tape.add(kept, written)?;
    let squashed = tape.tanh(c);
    let h = tape.mul(o, squashed)?;
    Ok(LstmState { h, c })
}

impl RecurrentCell for LstmParams {
    type State = LstmState;

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn zero_state(&self, tape: &mut Tape<'_>) -> LstmState {
        LstmState {
            h: tape.input(Tensor::zeros(&[self.hidden_dim])),
            c: tape.input(Tensor::zeros(&[self.hidden_dim])),
        }
    }

    fn step(&self, tape: &mut Tape<'_>, x: Var, state: &LstmState) -> Result<LstmState> {
        lstm_step(tape, x, state, self)
    }

    fn output(state: &LstmState) -> Var {
        state.h
    }
}

#[derive(Clone, Debug)]
pub struct BiEncoderOutput {
    /// `[forward_t ; backward_t]` for every position.
    pub outputs: Vec<Var>,
    /// `[forward_last ; backward_last]`, the backward stream ending at position 0.
    pub final_state: Var,
}

/// A forward and a backward cell with separate parameters.
#[derive(Clone, Debug)]
pub struct Bidirectional<C> {
    pub fwd: C,
    pub bwd: C,
}

pub type BiGru = Bidirectional<GruParams>;
pub type BiLstm = Bidirectional<LstmParams>;

impl BiGru {
    pub fn new(store: &mut ParameterStore, prefix: &str, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        Ok(Bidirectional {
            fwd: GruParams::new(store, &format!("{prefix}.fwd"), input_dim, hidden_dim)?,
            bwd: GruParams::new(store, &format!("{prefix}.bwd"), input_dim, hidden_dim)?,
        })
    }
}

impl BiLstm {
    pub fn new(store: &mut ParameterStore, prefix: &str, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        Ok(Bidirectional {
            fwd: LstmParams::new(store, &format!("{prefix}.fwd"), input_dim, hidden_dim)?,
            bwd: LstmParams::new(store, &format!("{prefix}.bwd"), input_dim, hidden_dim)?,
        })
    }
}

impl<C: RecurrentCell> Bidirectional<C> {
    pub fn output_dim(&self) -> usize {
        self.fwd.hidden_dim() + self.bwd.hidden_dim()
    }

    /// Encodes a non-empty sequence from zero initial states.
    pub fn encode(&self, tape: &mut Tape<'_>, seq: &[Var]) -> Result<BiEncoderOutput> {
        bi_encode(tape, seq, &self.fwd, &self.bwd, None, false)
    }
}

/// Runs `fwd` left to right and `bwd` right to left over `seq`.
///
/// An empty sequence is an error unless `allow_empty`, in which case the
/// output has no steps and a zero final state.
pub fn bi_encode<C: RecurrentCell>(
    tape: &mut Tape<'_>,
    seq: &[Var],
    fwd: &C,
    bwd: &C,
    init: Option<(C::State, C::State)>,
    allow_empty: bool,
) -> Result<BiEncoderOutput> {
    if seq.is_empty() {
        if !allow_empty {
            return Err(Error::invalid("bidirectional encoder over an empty sequence"));
        }
        let zero = tape.input(Tensor::zeros(&[fwd.hidden_dim() + bwd.hidden_dim()]));
        return Ok(BiEncoderOutput {
            outputs: Vec::new(),
            final_state: zero,
        });
    }
    let (mut sf, mut sb) = match init {
        Some(pair) => pair,
        None => (fwd.zero_state(tape), bwd.zero_state(tape)),
    };

    let mut forward = Vec::with_capacity(seq.len());
    for &x in seq {
        sf = fwd.step(tape, x, &sf)?;
        forward.push(C::output(&sf));
    }
    let mut backward = vec![forward[0]; seq.len()];
    for (t, &x) in seq.iter().enumerate().rev() {
        sb = bwd.step(tape, x, &sb)?;
        backward[t] = C::output(&sb);
    }

    let outputs = forward
        .iter()
        .zip(&backward)
        .map(|(f, b)| tape.concat(&[*f, *b]))
        .collect::<Result<Vec<_>>>()?;
    let final_state = tape.concat(&[C::output(&sf), C::output(&sb)])?;
    Ok(BiEncoderOutput { outputs, final_state })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_gru(store: &mut ParameterStore, dim: usize) -> GruParams {
        let p = GruParams::new(store, "g", dim, dim).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        p
    }

    #[test]
    fn zero_gru_halves_state() {
        let mut store = ParameterStore::new(1);
        let p = zero_gru(&mut store, 3);
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::vector(vec![0.3, -1.0, 2.0]));
        let h = tape.input(Tensor::vector(vec![1.0, -4.0, 0.5]));
        let out = gru_step(&mut tape, x, h, &p).unwrap();
        assert_eq!(tape.value(out).data(), &[0.5, -2.0, 0.25]);

        let zx = tape.input(Tensor::zeros(&[3]));
        let zh = tape.input(Tensor::zeros(&[3]));
        let out = gru_step(&mut tape, zx, zh, &p).unwrap();
        assert_eq!(tape.value(out).data(), &[0.0; 3]);
    }

    #[test]
    fn zero_lstm_gates_are_half() {
        let mut store = ParameterStore::new(1);
        let p = LstmParams::new(&mut store, "l", 2, 2).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::vector(vec![1.0, 1.0]));
        let h = tape.input(Tensor::vector(vec![0.2, 0.4]));
        let c = tape.input(Tensor::vector(vec![2.0, -6.0]));
        let s = lstm_step(&mut tape, x, &LstmState { h, c }, &p).unwrap();
        assert_eq!(tape.value(s.c).data(), &[1.0, -3.0]);
        let hv = tape.value(s.h).data();
        assert!((hv[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((hv[1] - 0.5 * (-3f64).tanh()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut store = ParameterStore::new(1);
        let p = GruParams::new(&mut store, "g", 3, 2).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::zeros(&[2]));
        let h = tape.input(Tensor::zeros(&[2]));
        assert!(gru_step(&mut tape, x, h, &p).is_err());
    }

    #[test]
    fn empty_sequence_needs_permission() {
        let mut store = ParameterStore::new(1);
        let enc = BiGru::new(&mut store, "e", 2, 3).unwrap();
        let mut tape = Tape::new(&store);
        assert!(enc.encode(&mut tape, &[]).is_err());
        let out = bi_encode(&mut tape, &[], &enc.fwd, &enc.bwd, None, true).unwrap();
        assert!(out.outputs.is_empty());
        assert_eq!(tape.value(out.final_state).data(), &[0.0; 6]);
    }

    #[test]
    fn single_step_is_two_cell_steps() {
        let mut store = ParameterStore::new(5);
        let enc = BiGru::new(&mut store, "e", 2, 3).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::vector(vec![0.4, -0.9]));
        let out = enc.encode(&mut tape, &[x]).unwrap();
        let h0 = tape.input(Tensor::zeros(&[3]));
        let f = gru_step(&mut tape, x, h0, &enc.fwd).unwrap();
        let b = gru_step(&mut tape, x, h0, &enc.bwd).unwrap();
        let expected = [tape.value(f).data(), tape.value(b).data()].concat();
        assert_eq!(tape.value(out.outputs[0]).data(), expected.as_slice());
        assert_eq!(tape.value(out.final_state).data(), expected.as_slice());
    }
}
