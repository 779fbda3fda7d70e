//! A single-cell LSTM with sigmoid gates, tanh cell candidate, a scalar
//! regression head, and closed-loop multi-step forecasting.
//!
//! The step recurrence is the classic one: gate preactivations are affine in
//! the current input and previous hidden output, the cell state blends the
//! previous cell with the candidate through the forget/input gates, and the
//! hidden output is the output gate times `tanh` of the cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ScalerParams, unscale};
use crate::linalg::{self, LinalgError, Matrix, Vector};

#[derive(Debug, Error)]
pub enum LstmError {
    #[error(transparent)]
    Shape(#[from] LinalgError),
    #[error("input has length {got}, model expects {expected}")]
    InputSize { expected: usize, got: usize },
    #[error("state has hidden/cell lengths {got_hidden}/{got_cell}, model expects {expected}")]
    StateSize {
        expected: usize,
        got_hidden: usize,
        got_cell: usize,
    },
    #[error("input sequence is empty")]
    EmptySequence,
    #[error("exogenous sequence has length {got}, horizon is {horizon}")]
    ExogenousLength { horizon: usize, got: usize },
    #[error("exogenous step {index} has {got} channels, model expects {expected}")]
    ExogenousWidth {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("model file: {0}")]
    BadModelFile(String),
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Weights for one gate: an input projection, a recurrent projection, and a
/// bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub input_weights: Matrix,
    pub recurrent_weights: Matrix,
    pub bias: Vector,
}

impl GateParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        GateParams {
            input_weights: Matrix::zeros(hidden, input),
            recurrent_weights: Matrix::zeros(hidden, hidden),
            bias: Vector::zeros(hidden),
        }
    }

    fn shapes_ok(&self, hidden: usize, input: usize) -> bool {
        self.input_weights.rows() == hidden
            && self.input_weights.cols() == input
            && self.recurrent_weights.rows() == hidden
            && self.recurrent_weights.cols() == hidden
            && self.bias.len() == hidden
    }

    fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.input_weights.data());
        out.extend_from_slice(self.recurrent_weights.data());
        out.extend_from_slice(self.bias.as_slice());
    }

    fn assign_flat(&mut self, flat: &[f64], cursor: &mut usize) {
        for dst in [
            self.input_weights.data_mut(),
            self.recurrent_weights.data_mut(),
            self.bias.as_mut_slice(),
        ] {
            dst.copy_from_slice(&flat[*cursor..*cursor + dst.len()]);
            *cursor += dst.len();
        }
    }
}

/// The four gates of the cell, in the fixed order used everywhere a flat
/// parameter view is needed: input, forget, output, candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSet {
    pub input: GateParams,
    pub forget: GateParams,
    pub output: GateParams,
    pub candidate: GateParams,
}

impl GateSet {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        GateSet {
            input: GateParams::zeros(hidden, input),
            forget: GateParams::zeros(hidden, input),
            output: GateParams::zeros(hidden, input),
            candidate: GateParams::zeros(hidden, input),
        }
    }

    pub fn as_array(&self) -> [&GateParams; 4] {
        [&self.input, &self.forget, &self.output, &self.candidate]
    }

    pub fn as_array_mut(&mut self) -> [&mut GateParams; 4] {
        [
            &mut self.input,
            &mut self.forget,
            &mut self.output,
            &mut self.candidate,
        ]
    }

    fn flatten_into(&self, out: &mut Vec<f64>) {
        for gate in self.as_array() {
            gate.flatten_into(out);
        }
    }

    fn assign_flat(&mut self, flat: &[f64], cursor: &mut usize) {
        for gate in self.as_array_mut() {
            gate.assign_flat(flat, cursor);
        }
    }
}

/// Full parameter set: gate weights plus the scalar regression head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    hidden_size: usize,
    input_size: usize,
    pub gates: GateSet,
    pub head_weights: Vector,
    pub head_bias: f64,
}

impl LstmParams {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        assert!(hidden_size >= 1 && input_size >= 1);
        LstmParams {
            hidden_size,
            input_size,
            gates: GateSet::zeros(hidden_size, input_size),
            head_weights: Vector::zeros(hidden_size),
            head_bias: 0.0,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let h = self.hidden_size;
        let d = self.input_size;
        4 * (h * d + h * h + h) + h + 1
    }

    /// Canonical flat view: gates in fixed order (input weights, recurrent
    /// weights, bias each), then head weights, then head bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.gates.flatten_into(&mut out);
        out.extend_from_slice(self.head_weights.as_slice());
        out.push(self.head_bias);
        out
    }

    /// Overwrites every parameter from a flat view produced by [`flatten`].
    ///
    /// [`flatten`]: LstmParams::flatten
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut cursor = 0;
        self.gates.assign_flat(flat, &mut cursor);
        let h = self.hidden_size;
        self.head_weights
            .as_mut_slice()
            .copy_from_slice(&flat[cursor..cursor + h]);
        cursor += h;
        self.head_bias = flat[cursor];
    }

    pub fn head_output(&self, hidden: &Vector) -> f64 {
        self.head_weights.dot(hidden) + self.head_bias
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Seeded uniform initialization in [-1/sqrt(H), +1/sqrt(H)] for all weight
/// tensors, forget-gate bias at 1.0 elementwise, every other bias at 0.
pub fn init_params(hidden_size: usize, input_size: usize, seed: u64) -> LstmParams {
    use rand::{Rng, SeedableRng};
    assert!(hidden_size >= 1 && input_size >= 1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let limit = 1.0 / (hidden_size as f64).sqrt();
    let mut draw = |rows: usize, cols: usize| {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..=limit))
    };

    let mut params = LstmParams::zeros(hidden_size, input_size);
    // Draw order is part of the determinism contract: per gate the input
    // projection then the recurrent projection, gates in canonical order,
    // head weights last.
    for gate in params.gates.as_array_mut() {
        gate.input_weights = draw(hidden_size, input_size);
        gate.recurrent_weights = draw(hidden_size, hidden_size);
    }
    params.head_weights = Vector::new((0..hidden_size).map(|_| rng.gen_range(-limit..=limit)).collect());
    params.gates.forget.bias = Vector::filled(hidden_size, 1.0);
    params
}

/// Sigmoid/tanh activations cached by a step, needed for backpropagation.
#[derive(Clone, Debug, PartialEq)]
pub struct GateActivations {
    pub input: Vector,
    pub forget: Vector,
    pub output: Vector,
    pub candidate: Vector,
}

/// Hidden output and cell state after a step, with the gate activations that
/// produced them. A freshly initialized state has no activations yet.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub hidden: Vector,
    pub cell: Vector,
    pub gates: Option<GateActivations>,
}

impl LstmState {
    pub fn initial(hidden_size: usize) -> Self {
        LstmState {
            hidden: Vector::zeros(hidden_size),
            cell: Vector::zeros(hidden_size),
            gates: None,
        }
    }
}

/// Everything recorded while unrolling a sequence: per step the input fed in
/// and the resulting state (with gate activations).
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub input: Vector,
    pub state: LstmState,
}

impl StepTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn preactivation(gate: &GateParams, x: &Vector, h_prev: &Vector) -> Result<Vector, LinalgError> {
    let mut a = linalg::affine(&gate.input_weights, x, &gate.bias)?;
    for r in 0..gate.recurrent_weights.rows() {
        let dot: f64 = gate
            .recurrent_weights
            .row(r)
            .iter()
            .zip(h_prev.as_slice().iter())
            .map(|(w, h)| w * h)
            .sum();
        a[r] += dot;
    }
    Ok(a)
}

/// Advances the cell by one time step.
pub fn step(params: &LstmParams, x: &Vector, prev: &LstmState) -> Result<LstmState, LstmError> {
    let h = params.hidden_size;
    if x.len() != params.input_size {
        return Err(LstmError::InputSize {
            expected: params.input_size,
            got: x.len(),
        });
    }
    if prev.hidden.len() != h || prev.cell.len() != h {
        return Err(LstmError::StateSize {
            expected: h,
            got_hidden: prev.hidden.len(),
            got_cell: prev.cell.len(),
        });
    }

    let input_gate = linalg::sigmoid(&preactivation(&params.gates.input, x, &prev.hidden)?);
    let forget_gate = linalg::sigmoid(&preactivation(&params.gates.forget, x, &prev.hidden)?);
    let output_gate = linalg::sigmoid(&preactivation(&params.gates.output, x, &prev.hidden)?);
    let candidate = linalg::tanh_act(&preactivation(&params.gates.candidate, x, &prev.hidden)?);

    let mut cell = Vector::zeros(h);
    let mut hidden = Vector::zeros(h);
    for j in 0..h {
        cell[j] = forget_gate[j] * prev.cell[j] + input_gate[j] * candidate[j];
        hidden[j] = output_gate[j] * cell[j].tanh();
    }

    Ok(LstmState {
        hidden,
        cell,
        gates: Some(GateActivations {
            input: input_gate,
            forget: forget_gate,
            output: output_gate,
            candidate,
        }),
    })
}

/// Unrolls the cell over a sequence from the zero state, emitting the head
/// prediction at every step plus the trace backpropagation needs.
pub fn forward(
    params: &LstmParams,
    inputs: &[Vector],
) -> Result<(Vec<f64>, StepTrace), LstmError> {
    if inputs.is_empty() {
        return Err(LstmError::EmptySequence);
    }
    let mut state = LstmState::initial(params.hidden_size);
    let mut predictions = Vec::with_capacity(inputs.len());
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        state = step(params, x, &state)?;
        predictions.push(params.head_output(&state.hidden));
        steps.push(StepRecord {
            input: x.clone(),
            state: state.clone(),
        });
    }
    Ok((predictions, StepTrace { steps }))
}

/// Iterated one-step forecasting: runs teacher-forced over `warmup`, then for
/// `horizon` steps feeds each predicted (normalized) consumption back as the
/// next step's first input channel alongside the known exogenous channels.
///
/// Returns predictions in original units via `scaler`.
pub fn forecast_closed_loop(
    params: &LstmParams,
    warmup: &[Vector],
    future_exogenous: &[Vec<f64>],
    horizon: usize,
    scaler: &ScalerParams,
) -> Result<Vec<f64>, LstmError> {
    if warmup.is_empty() {
        return Err(LstmError::EmptySequence);
    }
    if future_exogenous.len() != horizon {
        return Err(LstmError::ExogenousLength {
            horizon,
            got: future_exogenous.len(),
        });
    }
    let exo_width = params.input_size - 1;
    for (index, exo) in future_exogenous.iter().enumerate() {
        if exo.len() != exo_width {
            return Err(LstmError::ExogenousWidth {
                index,
                expected: exo_width,
                got: exo.len(),
            });
        }
    }

    let mut state = LstmState::initial(params.hidden_size);
    let mut prediction = 0.0;
    for x in warmup {
        state = step(params, x, &state)?;
        prediction = params.head_output(&state.hidden);
    }

    let mut out = Vec::with_capacity(horizon);
    for exo in future_exogenous {
        let mut x = Vec::with_capacity(params.input_size);
        x.push(prediction);
        x.extend_from_slice(exo);
        state = step(params, &Vector::new(x), &state)?;
        prediction = params.head_output(&state.hidden);
        out.push(unscale(prediction, scaler));
    }
    Ok(out)
}

pub use model::ModelFile;

pub mod model {
    //! On-disk model format: one JSON document holding the architecture,
    //! every weight tensor row-major, the regression head, and the scalers
    //! the features were normalized with. Floats survive a
    //! serialize/parse/serialize round trip byte for byte.

    use super::*;
    use crate::features::{FeatureSelector, TimeEncoding};

    pub const SCHEMA_VERSION: u32 = 1;

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct ModelFile {
        pub schema_version: u32,
        pub hidden_size: usize,
        pub input_size: usize,
        pub seed: u64,
        pub gates: GateSet,
        pub head_weights: Vector,
        pub head_bias: f64,
        pub consumption_scaler: ScalerParams,
        pub temperature_scaler: Option<ScalerParams>,
        pub features: FeatureSelector,
        pub time_encoding: TimeEncoding,
    }

    impl ModelFile {
        pub fn new(
            params: &LstmParams,
            seed: u64,
            consumption_scaler: ScalerParams,
            temperature_scaler: Option<ScalerParams>,
            features: FeatureSelector,
            time_encoding: TimeEncoding,
        ) -> Self {
            ModelFile {
                schema_version: SCHEMA_VERSION,
                hidden_size: params.hidden_size(),
                input_size: params.input_size(),
                seed,
                gates: params.gates.clone(),
                head_weights: params.head_weights.clone(),
                head_bias: params.head_bias,
                consumption_scaler,
                temperature_scaler,
                features,
                time_encoding,
            }
        }

        pub fn params(&self) -> Result<LstmParams, LstmError> {
            if self.schema_version != SCHEMA_VERSION {
                return Err(LstmError::BadModelFile(format!(
                    "unsupported schema_version {} (expected {})",
                    self.schema_version, SCHEMA_VERSION
                )));
            }
            let (h, d) = (self.hidden_size, self.input_size);
            if h < 1 || d < 1 {
                return Err(LstmError::BadModelFile(format!(
                    "invalid sizes hidden={h} input={d}"
                )));
            }
            for gate in self.gates.as_array() {
                if !gate.shapes_ok(h, d) {
                    return Err(LstmError::BadModelFile(
                        "gate tensor shapes do not match hidden/input sizes".into(),
                    ));
                }
            }
            if self.head_weights.len() != h {
                return Err(LstmError::BadModelFile(
                    "head weight length does not match hidden size".into(),
                ));
            }
            if self.features.input_size() != d {
                return Err(LstmError::BadModelFile(format!(
                    "feature selector {} implies {} inputs, model declares {}",
                    self.features,
                    self.features.input_size(),
                    d
                )));
            }
            let mut params = LstmParams::zeros(h, d);
            params.gates = self.gates.clone();
            params.head_weights = self.head_weights.clone();
            params.head_bias = self.head_bias;
            if !params.all_finite() {
                return Err(LstmError::BadModelFile("non-finite weight".into()));
            }
            Ok(params)
        }

        pub fn to_json(&self) -> Result<String, LstmError> {
            Ok(serde_json::to_string_pretty(self)?)
        }

        pub fn from_json(text: &str) -> Result<Self, LstmError> {
            Ok(serde_json::from_str(text)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSelector, TimeEncoding};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const IDENTITY_SCALER: ScalerParams = ScalerParams { min: 0.0, max: 1.0 };

    fn random_params(hidden: usize, input: usize, seed: u64) -> LstmParams {
        init_params(hidden, input, seed)
    }

    fn random_inputs(count: usize, dim: usize, seed: u64) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| Vector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect()
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(2, 3, 42);
        let b = init_params(2, 3, 42);
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a.flatten()).unwrap(),
            serde_json::to_string(&b.flatten()).unwrap()
        );
        let c = init_params(2, 3, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_bounds_and_biases() {
        let p = init_params(8, 3, 7);
        let limit = 1.0 / 8.0_f64.sqrt();
        for gate in p.gates.as_array() {
            assert!(gate.input_weights.data().iter().all(|w| w.abs() <= limit));
            assert!(gate.recurrent_weights.data().iter().all(|w| w.abs() <= limit));
        }
        assert!(p.head_weights.iter().all(|w| w.abs() <= limit));
        assert!(p.gates.forget.bias.iter().all(|&b| b == 1.0));
        assert!(p.gates.input.bias.iter().all(|&b| b == 0.0));
        assert!(p.gates.output.bias.iter().all(|&b| b == 0.0));
        assert!(p.gates.candidate.bias.iter().all(|&b| b == 0.0));
        assert_eq!(p.head_bias, 0.0);
    }

    #[test]
    fn init_scalar_case_has_scalar_shapes() {
        let p = init_params(1, 1, 7);
        assert_eq!(p.gates.input.input_weights.rows(), 1);
        assert_eq!(p.gates.input.input_weights.cols(), 1);
        assert_eq!(p.gates.input.recurrent_weights.rows(), 1);
        assert_eq!(p.head_weights.len(), 1);
        assert_eq!(p.param_count(), 4 * 3 + 2);
    }

    #[test]
    fn zero_params_step_closed_form() {
        let p = LstmParams::zeros(3, 2);
        let x = Vector::new(vec![0.7, -0.2]);

        let s = step(&p, &x, &LstmState::initial(3)).unwrap();
        let gates = s.gates.as_ref().unwrap();
        for j in 0..3 {
            assert!((gates.input[j] - 0.5).abs() < 1e-15);
            assert!((gates.forget[j] - 0.5).abs() < 1e-15);
            assert!((gates.output[j] - 0.5).abs() < 1e-15);
            assert_eq!(gates.candidate[j], 0.0);
            assert_eq!(s.cell[j], 0.0);
            assert_eq!(s.hidden[j], 0.0);
        }

        // With a nonzero previous cell the update halves the cell state.
        let prev = LstmState {
            hidden: Vector::zeros(3),
            cell: Vector::new(vec![0.8, -1.2, 0.3]),
            gates: None,
        };
        let s = step(&p, &x, &prev).unwrap();
        for j in 0..3 {
            let expected_cell = 0.5 * prev.cell[j];
            assert!((s.cell[j] - expected_cell).abs() < 1e-12);
            assert!((s.hidden[j] - 0.5 * expected_cell.tanh()).abs() < 1e-12);
        }
    }

    /// Direct transcription of the gate equations and state update, written
    /// with bare loops and independent of the production step code.
    fn hand_rolled_step(
        p: &LstmParams,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let h = p.hidden_size();
        let act = |gate: &GateParams, squash: fn(f64) -> f64| -> Vec<f64> {
            (0..h)
                .map(|r| {
                    let mut a = gate.bias[r];
                    for (c, xv) in x.iter().enumerate() {
                        a += gate.input_weights[(r, c)] * xv;
                    }
                    for (c, hv) in h_prev.iter().enumerate() {
                        a += gate.recurrent_weights[(r, c)] * hv;
                    }
                    squash(a)
                })
                .collect()
        };
        let sig = |a: f64| 1.0 / (1.0 + (-a).exp());
        let i = act(&p.gates.input, sig);
        let f = act(&p.gates.forget, sig);
        let o = act(&p.gates.output, sig);
        let g = act(&p.gates.candidate, f64::tanh);
        let c: Vec<f64> = (0..h).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
        let hidden: Vec<f64> = (0..h).map(|j| o[j] * c[j].tanh()).collect();
        (hidden, c)
    }

    #[test]
    fn step_matches_hand_rolled_oracle() {
        let p = random_params(3, 2, 99);
        let x = Vector::new(vec![0.4, -0.9]);
        let prev = LstmState {
            hidden: Vector::new(vec![0.1, -0.3, 0.2]),
            cell: Vector::new(vec![-0.5, 0.7, 0.05]),
            gates: None,
        };
        let got = step(&p, &x, &prev).unwrap();
        let (h_exp, c_exp) = hand_rolled_step(&p, x.as_slice(), prev.hidden.as_slice(), prev.cell.as_slice());
        for j in 0..3 {
            assert!((got.hidden[j] - h_exp[j]).abs() < 1e-14);
            assert!((got.cell[j] - c_exp[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_model_matches_hand_computation() {
        // With hidden and input size 1 every tensor is a scalar and the
        // whole step can be written out longhand.
        let p = random_params(1, 1, 5);
        let x = 0.35;
        let (h_prev, c_prev) = (0.2, -0.4);

        let sig = |a: f64| 1.0 / (1.0 + (-a).exp());
        let pre = |g: &GateParams| g.input_weights[(0, 0)] * x + g.recurrent_weights[(0, 0)] * h_prev + g.bias[0];
        let i = sig(pre(&p.gates.input));
        let f = sig(pre(&p.gates.forget));
        let o = sig(pre(&p.gates.output));
        let g = pre(&p.gates.candidate).tanh();
        let c = f * c_prev + i * g;
        let h = o * c.tanh();

        let prev = LstmState {
            hidden: Vector::new(vec![h_prev]),
            cell: Vector::new(vec![c_prev]),
            gates: None,
        };
        let got = step(&p, &Vector::new(vec![x]), &prev).unwrap();
        assert!((got.cell[0] - c).abs() < 1e-15);
        assert!((got.hidden[0] - h).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_bad_shapes() {
        let p = LstmParams::zeros(2, 3);
        let err = step(&p, &Vector::zeros(2), &LstmState::initial(2)).unwrap_err();
        assert!(matches!(err, LstmError::InputSize { expected: 3, got: 2 }));
        let err = step(&p, &Vector::zeros(3), &LstmState::initial(4)).unwrap_err();
        assert!(matches!(err, LstmError::StateSize { .. }));
    }

    #[test]
    fn forward_zero_params_outputs_head_bias() {
        let mut p = LstmParams::zeros(4, 3);
        p.head_bias = 0.63;
        let xs = random_inputs(6, 3, 11);
        let (preds, trace) = forward(&p, &xs).unwrap();
        assert_eq!(preds.len(), 6);
        assert_eq!(trace.len(), 6);
        assert!(preds.iter().all(|&y| y == 0.63));
    }

    #[test]
    fn forward_single_step_is_step_plus_head() {
        let p = random_params(3, 2, 21);
        let xs = random_inputs(1, 2, 22);
        let (preds, _) = forward(&p, &xs).unwrap();
        let state = step(&p, &xs[0], &LstmState::initial(3)).unwrap();
        assert_eq!(preds[0], p.head_output(&state.hidden));
    }

    #[test]
    fn forward_matches_chained_steps() {
        let p = random_params(4, 3, 33);
        let xs = random_inputs(5, 3, 34);
        let (preds, trace) = forward(&p, &xs).unwrap();

        let mut state = LstmState::initial(4);
        for (t, x) in xs.iter().enumerate() {
            state = step(&p, x, &state).unwrap();
            assert_eq!(preds[t], p.head_output(&state.hidden));
            assert_eq!(trace.steps[t].state.hidden, state.hidden);
            assert_eq!(trace.steps[t].state.cell, state.cell);
        }
    }

    #[test]
    fn forward_rejects_empty_sequence() {
        let p = LstmParams::zeros(2, 2);
        assert!(matches!(forward(&p, &[]), Err(LstmError::EmptySequence)));
    }

    #[test]
    fn predictions_are_causal() {
        let p = random_params(3, 2, 55);
        let xs = random_inputs(6, 2, 56);
        let (before, _) = forward(&p, &xs).unwrap();

        let mut perturbed = xs.clone();
        perturbed[4] = Vector::new(vec![9.0, -9.0]);
        let (after, _) = forward(&p, &perturbed).unwrap();

        for t in 0..4 {
            assert_eq!(before[t], after[t], "prediction {t} depends on a future input");
        }
        assert_ne!(before[4], after[4]);
    }

    #[test]
    fn forecast_horizon_zero_is_empty() {
        let p = random_params(2, 3, 1);
        let warmup = random_inputs(4, 3, 2);
        let out = forecast_closed_loop(&p, &warmup, &[], 0, &IDENTITY_SCALER).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn forecast_zero_params_is_constant_head_bias() {
        let mut p = LstmParams::zeros(3, 3);
        p.head_bias = 0.4;
        let warmup = random_inputs(5, 3, 3);
        let exo: Vec<Vec<f64>> = (0..144).map(|_| vec![0.5, 0.5]).collect();
        let out = forecast_closed_loop(&p, &warmup, &exo, 144, &IDENTITY_SCALER).unwrap();
        assert_eq!(out.len(), 144);
        assert!(out.iter().all(|&y| y == 0.4));
    }

    #[test]
    fn forecast_unscales_via_scaler() {
        let mut p = LstmParams::zeros(2, 2);
        p.head_bias = 0.5;
        let warmup = random_inputs(3, 2, 4);
        let exo = vec![vec![0.1]; 2];
        let scaler = ScalerParams { min: 10.0, max: 30.0 };
        let out = forecast_closed_loop(&p, &warmup, &exo, 2, &scaler).unwrap();
        // 0.5 in scaler coordinates is 20 in original units.
        assert_eq!(out, vec![20.0, 20.0]);
    }

    #[test]
    fn forecast_rejects_mismatched_exogenous() {
        let p = random_params(2, 3, 6);
        let warmup = random_inputs(3, 3, 7);
        let err = forecast_closed_loop(&p, &warmup, &[vec![0.1, 0.2]], 2, &IDENTITY_SCALER);
        assert!(matches!(err, Err(LstmError::ExogenousLength { horizon: 2, got: 1 })));
        let err = forecast_closed_loop(&p, &warmup, &[vec![0.1]], 1, &IDENTITY_SCALER);
        assert!(matches!(err, Err(LstmError::ExogenousWidth { .. })));
    }

    #[test]
    fn forecast_feeds_predictions_back() {
        // One warmup step, two forecast steps: the second forecast input
        // must carry the first forecast's (normalized) prediction.
        let p = random_params(3, 2, 60);
        let warmup = random_inputs(1, 2, 61);
        let exo = vec![vec![0.3], vec![0.7]];
        let out = forecast_closed_loop(&p, &warmup, &exo, 2, &IDENTITY_SCALER).unwrap();

        let mut state = LstmState::initial(3);
        state = step(&p, &warmup[0], &state).unwrap();
        let mut pred = p.head_output(&state.hidden);
        state = step(&p, &Vector::new(vec![pred, 0.3]), &state).unwrap();
        pred = p.head_output(&state.hidden);
        assert_eq!(out[0], pred);
        state = step(&p, &Vector::new(vec![pred, 0.7]), &state).unwrap();
        pred = p.head_output(&state.hidden);
        assert_eq!(out[1], pred);
    }

    #[test]
    fn model_file_round_trips_exactly() {
        let p = random_params(4, 3, 42);
        let file = ModelFile::new(
            &p,
            42,
            ScalerParams { min: 0.013, max: 2.71 },
            Some(ScalerParams { min: -3.2, max: 41.5 }),
            FeatureSelector::All,
            TimeEncoding::Concat,
        );
        let json = file.to_json().unwrap();
        let parsed = ModelFile::from_json(&json).unwrap();
        assert_eq!(parsed, file);
        // Byte-stable: serialize -> parse -> serialize is the identity.
        assert_eq!(parsed.to_json().unwrap(), json);
        // And the parameters reconstruct exactly.
        assert_eq!(parsed.params().unwrap(), p);
    }

    #[test]
    fn model_file_rejects_inconsistent_shapes() {
        let p = random_params(4, 3, 1);
        let mut file = ModelFile::new(
            &p,
            1,
            IDENTITY_SCALER,
            None,
            FeatureSelector::All,
            TimeEncoding::Concat,
        );
        file.hidden_size = 5;
        assert!(matches!(file.params(), Err(LstmError::BadModelFile(_))));

        let mut file2 = ModelFile::new(
            &p,
            1,
            IDENTITY_SCALER,
            None,
            FeatureSelector::ConsumptionTime,
            TimeEncoding::Concat,
        );
        file2.schema_version = 1;
        // Selector implies 2 inputs but the tensors are built for 3.
        assert!(matches!(file2.params(), Err(LstmError::BadModelFile(_))));
    }

    #[test]
    fn flatten_assign_round_trip() {
        let p = random_params(3, 2, 77);
        let flat = p.flatten();
        assert_eq!(flat.len(), p.param_count());
        let mut q = LstmParams::zeros(3, 2);
        q.assign_flat(&flat);
        assert_eq!(p, q);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gates_stay_in_range(seed in 0u64..1000, x0 in -3.0f64..3.0, x1 in -3.0f64..3.0) {
            let p = random_params(4, 2, seed);
            let xs = vec![Vector::new(vec![x0, x1]); 5];
            let (_, trace) = forward(&p, &xs).unwrap();
            for rec in &trace.steps {
                let g = rec.state.gates.as_ref().unwrap();
                for j in 0..4 {
                    prop_assert!(g.input[j] > 0.0 && g.input[j] < 1.0);
                    prop_assert!(g.forget[j] > 0.0 && g.forget[j] < 1.0);
                    prop_assert!(g.output[j] > 0.0 && g.output[j] < 1.0);
                    prop_assert!(g.candidate[j] > -1.0 && g.candidate[j] < 1.0);
                    prop_assert!(rec.state.hidden[j] > -1.0 && rec.state.hidden[j] < 1.0);
                }
            }
        }

        #[test]
        fn forward_is_deterministic(seed in 0u64..1000) {
            let p = random_params(3, 2, seed);
            let xs = random_inputs(8, 2, seed.wrapping_add(1));
            let (a, _) = forward(&p, &xs).unwrap();
            let (b, _) = forward(&p, &xs).unwrap();
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
