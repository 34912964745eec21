//! Sampled-data simulation of the IMC loop: zero-order-hold discretized
//! plant and model, a discretized controller, sample-based delay lines,
//! disturbance generators and harmonic residual metrics.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imcassembly::ImcController;
use crate::numkernel::{expm, zoh_discretize, Matrix};
use crate::plantmodel::{plant_realization, DelayedRationalPlant};
use crate::sigmodel::{check_nyquist, fourier_analyze, samples_per_period, FourierDecomposition, HarmonicSet};
use crate::statespace::StateSpaceModel;

/// Divergence threshold relative to `max(|d|, |r|, 1)`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Samples removed from the controller delay line to offset the one-step
/// measurement delay and the two half-sample hold lags.
pub const HOLD_COMPENSATION_SAMPLES: usize = 2;

/// Sample count `N` for the time base `t_k = k·h`, `k = 0..N`, covering
/// `[0, t_end]`.
pub fn sample_count(h: f64, t_end: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidSignal(format!("invalid time base h = {h}, T_end = {t_end}")));
    }
    Ok((t_end / h + 1e-9).floor() as usize + 1)
}

/// `x⁺ = A_d x + B_d u`, `y = C_d x + D_d u` with sample period `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    pub ad: Matrix,
    pub bd: Vec<f64>,
    pub cd: Vec<f64>,
    pub dd: f64,
    pub h: f64,
    state: Vec<f64>,
}

impl DiscreteSystem {
    /// Zero-order-hold discretization of a single-input single-output model.
    pub fn from_continuous(sys: &StateSpaceModel, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidSignal(format!("sample period {h} must be positive")));
        }
        let n = sys.order();
        let (ad, bd) = if n == 0 {
            (Matrix::zeros(0, 0), Matrix::zeros(0, 1))
        } else {
            zoh_discretize(&sys.a, &sys.b, h)?
        };
        Ok(Self {
            ad,
            bd: bd.col_vec(0),
            cd: sys.c.row_slice(0).to_vec(),
            dd: sys.d,
            h,
            state: vec![0.0; n],
        })
    }

    pub fn order(&self) -> usize {
        self.state.len()
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.state.len() {
            return Err(Error::Dimension(format!("state of length {} for order {}", x.len(), self.order())));
        }
        self.state.copy_from_slice(x);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = 0.0);
    }

    /// Output at the current sample, then the state update.
    pub fn step(&mut self, u: f64) -> f64 {
        let y = self.cd.iter().zip(&self.state).map(|(c, x)| c * x).sum::<f64>() + self.dd * u;
        let n = self.state.len();
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let row = self.ad.row_slice(i);
                row.iter().zip(&self.state).map(|(a, x)| a * x).sum::<f64>() + self.bd[i] * u
            })
            .collect();
        self.state = next;
        y
    }
}

/// Discretization of a controller whose input samples are joined by straight
/// lines placed half a sample late: the input seen over `[t_{k−1}, t_k]` runs
/// from `(e_{k−2}+e_{k−1})/2` through `e_{k−1}` (at mid-interval) to
/// `(e_{k−1}+e_k)/2`. The lag matches a zero-order hold (`h/2`) while the
/// spectral images of the input fall off one order faster.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleHoldSystem {
    phi: Matrix,
    /// Response to a constant input over half a step.
    g0: Vec<f64>,
    /// Response to a unit ramp increment over half a step.
    g1: Vec<f64>,
    c: Vec<f64>,
    d: f64,
    state: Vec<f64>,
    past: [f64; 2],
}

impl TriangleHoldSystem {
    pub fn from_continuous(sys: &StateSpaceModel, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidSignal(format!("sample period {h} must be positive")));
        }
        let n = sys.order();
        let delta = h / 2.0;
        // d/dt (x, u, w) = (Ax + Bu, w, 0) over one half step
        let mut m = Matrix::zeros(n + 2, n + 2);
        m.set_block(0, 0, &sys.a.scale(delta));
        m.set_block(0, n, &sys.b.scale(delta));
        m[(n, n + 1)] = delta;
        let e = expm(&m)?;
        Ok(Self {
            phi: e.block(0, 0, n, n),
            g0: e.block(0, n, n, 1).col_vec(0),
            g1: e.block(0, n + 1, n, 1).col_vec(0).iter().map(|v| v / delta).collect(),
            c: sys.c.row_slice(0).to_vec(),
            d: sys.d,
            state: vec![0.0; n],
            past: [0.0; 2],
        })
    }

    fn half_step(&self, x: &[f64], a: f64, b: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let row = self.phi.row_slice(i);
                row.iter().zip(x).map(|(p, x)| p * x).sum::<f64>() + self.g0[i] * a + self.g1[i] * (b - a)
            })
            .collect()
    }

    /// Advances to `t_k` with the new sample `e_k` and returns the output there.
    pub fn step(&mut self, e: f64) -> f64 {
        let [e1, e2] = self.past;
        let start = (e2 + e1) / 2.0;
        let end = (e1 + e) / 2.0;
        let mid = self.half_step(&self.state, start, e1);
        self.state = self.half_step(&mid, e1, end);
        self.past = [e, e1];
        self.c.iter().zip(&self.state).map(|(c, x)| c * x).sum::<f64>() + self.d * end
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }
}

/// How the controller turns the sampled error into a continuous input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerHold {
    Zoh,
    DelayedTriangle,
}

enum Controller {
    Zoh(DiscreteSystem),
    Triangle(TriangleHoldSystem),
}

impl Controller {
    fn step(&mut self, e: f64) -> f64 {
        match self {
            Controller::Zoh(sys) => sys.step(e),
            Controller::Triangle(sys) => sys.step(e),
        }
    }
}

/// FIFO of `N_d` samples: the value pushed at step `t` comes out at `t + N_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    buffer: VecDeque<f64>,
    len: usize,
    /// Requested delay minus `N_d·h`.
    pub rounding_error_s: f64,
}

impl DelayLine {
    pub fn with_samples(len: usize) -> Self {
        Self {
            buffer: std::iter::repeat_n(0.0, len).collect(),
            len,
            rounding_error_s: 0.0,
        }
    }

    /// Delay rounded to the nearest sample.
    pub fn new(delay_s: f64, h: f64) -> Result<Self> {
        if !(delay_s >= 0.0) || !delay_s.is_finite() || !(h > 0.0) {
            return Err(Error::InvalidSignal(format!("delay {delay_s} with step {h}")));
        }
        let len = (delay_s / h).round() as usize;
        let mut line = Self::with_samples(len);
        line.rounding_error_s = delay_s - len as f64 * h;
        Ok(line)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push_pop(&mut self, x: f64) -> f64 {
        if self.len == 0 {
            return x;
        }
        self.buffer.push_back(x);
        self.buffer.pop_front().unwrap_or(0.0)
    }
}

/// Delay bookkeeping of a simulation run, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub theta_samples: usize,
    pub tau_system_samples: usize,
    pub tau_model_samples: usize,
    pub theta_rounding_s: f64,
    pub tau_system_rounding_s: f64,
    pub tau_model_rounding_s: f64,
    /// Samples removed from the controller delay line.
    pub hold_compensation_samples: usize,
    /// Loop delay seen by the sampled loop, to first order in `h`.
    pub effective_loop_delay_s: f64,
    /// `τ_m + θ` of the continuous design.
    pub design_loop_delay_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Shorten the controller delay line by [`HOLD_COMPENSATION_SAMPLES`].
    pub hold_compensation: bool,
    pub controller_hold: ControllerHold,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            hold_compensation: true,
            controller_hold: ControllerHold::DelayedTriangle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub t0: f64,
    pub h: f64,
    pub t_on: f64,
    pub r: Vec<f64>,
    pub d: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub y_m: Vec<f64>,
    pub delays: DelayReport,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h
    }

    /// CSV with header `t,r,d,u,y,y_m`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "r", "d", "u", "y", "y_m"])?;
        for k in 0..self.len() {
            w.write_record(
                [self.time(k), self.r[k], self.d[k], self.u[k], self.y[k], self.y_m[k]]
                    .iter()
                    .map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trace of a run together with the failure that stopped it, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub trace: SimulationTrace,
    pub failure: Option<Error>,
}

/// [`run_imc`] with default options, failing on divergence.
#[allow(clippy::too_many_arguments)]
pub fn simulate_imc(
    plant_true: &DelayedRationalPlant,
    model: &DelayedRationalPlant,
    c: &ImcController,
    r: &[f64],
    d: &[f64],
    h: f64,
    t_end: f64,
    t_on: f64,
) -> Result<SimulationTrace> {
    let run = run_imc(plant_true, model, c, r, d, h, t_end, t_on, SimOptions::default())?;
    match run.failure {
        Some(e) => Err(e),
        None => Ok(run.trace),
    }
}

/// Simulates the loop `e = r − (y − y_m)`, `u = e^{−sθ}Q e`,
/// `y = G_s e^{−sτ_s} u + d`, `y_m = G_m e^{−sτ_m} u`.
///
/// Each step `k`: read `r_k, d_k`; form `e_k` from the previous outputs;
/// advance the controller with `e_k` and pass its output through the θ line
/// to get `u_k`; pass `u_k` through the τ lines; advance plant and model;
/// record `y_k` (plant output plus `d_k`) and `y_m,k`. Before `t_on` the
/// controller state is held at zero and `u = 0`.
#[allow(clippy::too_many_arguments)]
pub fn run_imc(
    plant_true: &DelayedRationalPlant,
    model: &DelayedRationalPlant,
    c: &ImcController,
    r: &[f64],
    d: &[f64],
    h: f64,
    t_end: f64,
    t_on: f64,
    opts: SimOptions,
) -> Result<SimulationRun> {
    let n = sample_count(h, t_end)?;
    if r.len() < n || d.len() < n {
        return Err(Error::InvalidSignal(format!(
            "signals need {n} samples, got r: {}, d: {}",
            r.len(),
            d.len()
        )));
    }
    if r[..n].iter().chain(&d[..n]).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input signal"));
    }
    let mut plant = DiscreteSystem::from_continuous(&plant_realization(plant_true)?, h)?;
    let mut plant_m = DiscreteSystem::from_continuous(&plant_realization(model)?, h)?;
    let mut ctrl = match opts.controller_hold {
        ControllerHold::Zoh => Controller::Zoh(DiscreteSystem::from_continuous(&c.state_space(), h)?),
        ControllerHold::DelayedTriangle => Controller::Triangle(TriangleHoldSystem::from_continuous(&c.state_space(), h)?),
    };
    let theta = DelayLine::new(c.theta_s, h)?;
    let compensation = if opts.hold_compensation {
        HOLD_COMPENSATION_SAMPLES.min(theta.len())
    } else {
        0
    };
    let mut theta_line = DelayLine::with_samples(theta.len() - compensation);
    let mut tau_s = DelayLine::new(plant_true.tau_s, h)?;
    let mut tau_m = DelayLine::new(model.tau_s, h)?;
    let delays = DelayReport {
        theta_samples: theta_line.len(),
        tau_system_samples: tau_s.len(),
        tau_model_samples: tau_m.len(),
        theta_rounding_s: theta.rounding_error_s,
        tau_system_rounding_s: tau_s.rounding_error_s,
        tau_model_rounding_s: tau_m.rounding_error_s,
        hold_compensation_samples: compensation,
        effective_loop_delay_s: (theta_line.len() + tau_m.len() + HOLD_COMPENSATION_SAMPLES) as f64 * h,
        design_loop_delay_s: model.tau_s + c.theta_s,
    };
    let bound = DIVERGENCE_FACTOR
        * r[..n]
            .iter()
            .chain(&d[..n])
            .fold(1.0f64, |m, v| m.max(v.abs()));
    let mut tr = SimulationTrace {
        t0: 0.0,
        h,
        t_on,
        r: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        y_m: Vec::with_capacity(n),
        delays,
    };
    let (mut y_prev, mut ym_prev) = (0.0, 0.0);
    for k in 0..n {
        let t = k as f64 * h;
        let e = r[k] - (y_prev - ym_prev);
        let v = if t + 1e-9 * h >= t_on { ctrl.step(e) } else { 0.0 };
        let u = theta_line.push_pop(v);
        let y = plant.step(tau_s.push_pop(u)) + d[k];
        let ym = plant_m.step(tau_m.push_pop(u));
        tr.r.push(r[k]);
        tr.d.push(d[k]);
        tr.u.push(u);
        tr.y.push(y);
        tr.y_m.push(ym);
        if !y.is_finite() || y.abs() > bound {
            let failure = Error::UnstableSimulation { t, magnitude: y.abs() };
            return Ok(SimulationRun {
                trace: tr,
                failure: Some(failure),
            });
        }
        y_prev = y;
        ym_prev = ym;
    }
    Ok(SimulationRun { trace: tr, failure: None })
}

/// Ramp from `−amplitude` to `amplitude` over each period. When `T/h` is an
/// integer `P` the ramp takes the values `A(2j/(P−1) − 1)`, `j = 0..P`,
/// which have zero mean over a period.
pub fn sawtooth(period_s: f64, amplitude: f64, h: f64, t_end: f64) -> Result<Vec<f64>> {
    if !(period_s > 2.0 * h) {
        return Err(Error::InvalidSignal(format!("period {period_s} must exceed two samples of {h}")));
    }
    let n = sample_count(h, t_end)?;
    Ok(match samples_per_period(period_s, h) {
        Ok(p) => (0..n)
            .map(|k| amplitude * (2.0 * (k % p) as f64 / (p - 1) as f64 - 1.0))
            .collect(),
        Err(_) => (0..n)
            .map(|k| {
                let x = (k as f64 * h / period_s).fract();
                amplitude * (2.0 * x - 1.0)
            })
            .collect(),
    })
}

/// `v(t) = c₀/2 + Σ c_l cos(2πl t/T − φ_l)` sampled at `t_k = k·h`.
pub fn synth_disturbance(f: &FourierDecomposition, h: f64, t_end: f64) -> Result<Vec<f64>> {
    check_nyquist(f.period_s, h, f.max_harmonic())?;
    let n = sample_count(h, t_end)?;
    let w = 2.0 * PI / f.period_s;
    let exact = samples_per_period(f.period_s, h).ok();
    Ok((0..n)
        .map(|k| {
            let angle = |l: usize| match exact {
                // reduce modulo the period so long records keep full precision
                Some(p) => 2.0 * PI * ((l * k) % p) as f64 / p as f64,
                None => w * l as f64 * k as f64 * h,
            };
            f.amplitudes[0] / 2.0
                + (1..f.amplitudes.len())
                    .map(|l| f.amplitudes[l] * (angle(l) - f.phases_rad[l]).cos())
                    .sum::<f64>()
        })
        .collect())
}

/// Fourier data with amplitude `amplitudes[i]` at the `i`-th multiple of the
/// set, zero phase and no mean.
pub fn harmonic_profile(set: &HarmonicSet, amplitudes: &[f64]) -> Result<FourierDecomposition> {
    if amplitudes.len() != set.len() {
        return Err(Error::Dimension(format!(
            "{} amplitudes for {} harmonics",
            amplitudes.len(),
            set.len()
        )));
    }
    let top = set.multiples().last().copied().unwrap_or(0) as usize;
    let mut amps = vec![0.0; top + 1];
    for (m, a) in set.multiples().iter().zip(amplitudes) {
        amps[*m as usize] = *a;
    }
    Ok(FourierDecomposition {
        period_s: 2.0 * PI / set.base_rad_s(),
        phases_rad: vec![0.0; top + 1],
        amplitudes: amps,
        parseval_ratio: 1.0,
    })
}

/// Amplitudes `1/l` at multiples `l` of the set.
pub fn inverse_harmonic_profile(set: &HarmonicSet) -> Result<FourierDecomposition> {
    let amps: Vec<f64> = set.multiples().iter().map(|m| 1.0 / *m as f64).collect();
    harmonic_profile(set, &amps)
}

/// Amplitudes `c₁..c_k` of `y` over `[t_a, t_b)`, which must span an integer
/// number of periods `T`.
pub fn harmonic_residuals(tr: &SimulationTrace, period_s: f64, k: usize, window: (f64, f64)) -> Result<Vec<f64>> {
    let (t_a, t_b) = window;
    let periods = (t_b - t_a) / period_s;
    if !(t_b > t_a) || (periods - periods.round()).abs() > 1e-6 || periods.round() < 1.0 {
        return Err(Error::NonIntegerPeriod(format!(
            "window [{t_a}, {t_b}) spans {periods} periods of {period_s} s"
        )));
    }
    let ka = ((t_a - tr.t0) / tr.h).round() as usize;
    let kb = ((t_b - tr.t0) / tr.h).round() as usize;
    if kb > tr.len() {
        return Err(Error::InvalidSignal(format!(
            "window ends at sample {kb} beyond trace length {}",
            tr.len()
        )));
    }
    let f = fourier_analyze(&tr.y[ka..kb], tr.h, period_s, k)?;
    Ok(f.amplitudes[1..].to_vec())
}

/// `20·log10(post/pre)` per harmonic.
pub fn attenuation_db(pre: &[f64], post: &[f64]) -> Vec<f64> {
    pre.iter().zip(post).map(|(a, b)| 20.0 * (b / a).log10()).collect()
}
