//! Periodic signal models: the harmonic generator `1/(s·Π(s² + ω_i²))` in
//! modal state-space form, and Fourier analysis/synthesis of periodic records.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{rank_ratio, Matrix};
use crate::poly;
use crate::statespace::StateSpaceModel;

/// Relative tolerance for `ω_i/ω_b` being an integer.
const COMMENSURABILITY_TOL: f64 = 1e-9;
/// Allowed distance of `T/h` from an integer.
const PERIOD_SAMPLES_TOL: f64 = 0.01;

/// Targeted harmonic frequencies `ω_i = γ_i·ω_b` with distinct integer
/// multiples `γ_i ≥ 1` in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSet {
    base_rad_s: f64,
    multiples: Vec<u32>,
}

impl HarmonicSet {
    /// Builds a set from explicit frequencies in rad/s, rejecting any that
    /// are not integer multiples of `base_rad_s`.
    pub fn from_frequencies(base_rad_s: f64, frequencies: &[f64]) -> Result<Self> {
        check_base(base_rad_s)?;
        let mut multiples = Vec::with_capacity(frequencies.len());
        for &w in frequencies {
            let gamma = w / base_rad_s;
            let rounded = gamma.round();
            if !gamma.is_finite() || rounded < 1.0 || (gamma - rounded).abs() > COMMENSURABILITY_TOL * gamma.abs() {
                return Err(Error::Commensurability(format!(
                    "{w} rad/s is not a positive integer multiple of {base_rad_s} rad/s (ratio {gamma})"
                )));
            }
            multiples.push(rounded as u32);
        }
        Self::from_multiples(base_rad_s, multiples)
    }

    pub fn from_multiples(base_rad_s: f64, multiples: Vec<u32>) -> Result<Self> {
        check_base(base_rad_s)?;
        if multiples.contains(&0) {
            return Err(Error::Commensurability("harmonic multiples must be >= 1".into()));
        }
        if multiples.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec(
                "harmonic frequencies must be distinct and strictly increasing".into(),
            ));
        }
        Ok(Self { base_rad_s, multiples })
    }

    pub fn base_rad_s(&self) -> f64 {
        self.base_rad_s
    }

    pub fn multiples(&self) -> &[u32] {
        &self.multiples
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.multiples.iter().map(|&g| g as f64 * self.base_rad_s).collect()
    }

    /// Number of targeted harmonics `k`.
    pub fn len(&self) -> usize {
        self.multiples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multiples.is_empty()
    }

    /// Largest targeted frequency, or the base frequency for an empty set.
    pub fn max_frequency(&self) -> f64 {
        self.multiples.last().map_or(self.base_rad_s, |&g| g as f64 * self.base_rad_s)
    }
}

fn check_base(base: f64) -> Result<()> {
    if !(base > 0.0) || !base.is_finite() {
        return Err(Error::InvalidSpec(format!("base frequency must be positive, got {base}")));
    }
    Ok(())
}

/// `ω_i = i·ω_b` for `i = 1..k`.
pub fn harmonic_set(base_rad_s: f64, k: usize) -> Result<HarmonicSet> {
    HarmonicSet::from_multiples(base_rad_s, (1..=k as u32).collect())
}

/// Coefficients (ascending) of `z_R(s) = s·Π(s² + ω_i²)`.
pub fn signal_polynomial(h: &HarmonicSet) -> Vec<f64> {
    h.frequencies()
        .iter()
        .fold(vec![0.0, 1.0], |acc, w| poly::mul(&acc, &[w * w, 0.0, 1.0]))
}

/// Modal realization of `V(s) = 1/(s·Π(s² + ω_i²))` with `2k + 1` states:
/// an integrator followed by one block `[[0, ω_i], [−ω_i, 0]]` per harmonic.
/// `B_R` feeds each block's last state with a unit entry; `C_R` holds the
/// partial-fraction residues, `1/Πω_j²` on the integrator and
/// `−1/(ω_i²·Π_{j≠i}(ω_j² − ω_i²))` on the second state of block `i`.
pub fn realize_signal_model(h: &HarmonicSet) -> StateSpaceModel {
    let w = h.frequencies();
    let k = w.len();
    let n = 2 * k + 1;
    let mut a = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, 1);
    let mut c = Matrix::zeros(1, n);
    b[(0, 0)] = 1.0;
    c[(0, 0)] = w.iter().map(|x| 1.0 / (x * x)).product();
    for (i, &wi) in w.iter().enumerate() {
        let r = 1 + 2 * i;
        a[(r, r + 1)] = wi;
        a[(r + 1, r)] = -wi;
        b[(r + 1, 0)] = 1.0;
        let others: f64 = w
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &wj)| wj * wj - wi * wi)
            .product();
        c[(0, r + 1)] = -1.0 / (wi * wi * others);
    }
    StateSpaceModel::new(a, b, c, 0.0).expect("modal signal model shapes are consistent")
}

/// Controllable canonical realization of the same `V(s)`; its output row has
/// the Markov structure `C A^r B = 0` for `r < 2k`.
pub fn companion_signal_model(h: &HarmonicSet) -> StateSpaceModel {
    let z = signal_polynomial(h);
    let n = z.len() - 1;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -z[j];
    }
    let mut b = Matrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let mut c = Matrix::zeros(1, n);
    c[(0, 0)] = 1.0;
    StateSpaceModel::new(a, b, c, 0.0).expect("companion shapes are consistent")
}

/// Rank ratios `(controllability, observability)` of a realization, with `A`
/// normalized by its ∞-norm so that powers stay bounded. Both ratios above
/// `1e−10` certify minimality.
pub fn minimality_ratios(sys: &StateSpaceModel) -> (f64, f64) {
    let norm = sys.a.norm_inf();
    let scaled = if norm > 0.0 {
        StateSpaceModel {
            a: sys.a.scale(1.0 / norm),
            ..sys.clone()
        }
    } else {
        sys.clone()
    };
    (
        rank_ratio(&scaled.controllability()),
        rank_ratio(&scaled.observability()),
    )
}

/// `v(t) = c₀/2 + Σ_l c_l·cos(2πl·t/T − φ_l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierDecomposition {
    pub period_s: f64,
    /// Amplitudes `c₀..c_L`.
    pub amplitudes: Vec<f64>,
    /// Phases in radians; `phases_rad[0]` is always 0.
    pub phases_rad: Vec<f64>,
    /// Power of the retained components divided by the power of the analyzed
    /// window; at most `1 + 1e−6` by Parseval.
    pub parseval_ratio: f64,
}

impl FourierDecomposition {
    /// Harmonic count `L`.
    pub fn max_harmonic(&self) -> usize {
        self.amplitudes.len().saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let w = 2.0 * PI / self.period_s;
        self.amplitudes[0] / 2.0
            + (1..self.amplitudes.len())
                .map(|l| self.amplitudes[l] * (w * l as f64 * t - self.phases_rad[l]).cos())
                .sum::<f64>()
    }
}

/// Samples per period `T/h`, rounded, if within tolerance of an integer.
pub fn samples_per_period(period_s: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !(period_s > 0.0) {
        return Err(Error::InvalidSignal(format!("period {period_s} and step {h} must be positive")));
    }
    let ratio = period_s / h;
    let p = ratio.round();
    if (ratio - p).abs() > PERIOD_SAMPLES_TOL || p < 1.0 {
        return Err(Error::NonIntegerPeriod(format!(
            "T/h = {ratio} is not within {PERIOD_SAMPLES_TOL} of an integer"
        )));
    }
    Ok(p as usize)
}

pub fn check_nyquist(period_s: f64, h: f64, max_harmonic: usize) -> Result<()> {
    let w = 2.0 * PI * max_harmonic as f64 / period_s;
    if w > PI / h {
        return Err(Error::NyquistViolation(format!(
            "harmonic {max_harmonic} of period {period_s} s ({w} rad/s) exceeds pi/h = {} rad/s",
            PI / h
        )));
    }
    Ok(())
}

/// Fourier coefficients of a uniformly sampled record (sample `n` at
/// `t = n·h`) by direct correlation over the largest whole number of periods
/// the record contains.
pub fn fourier_analyze(samples: &[f64], h: f64, period_s: f64, max_harmonic: usize) -> Result<FourierDecomposition> {
    let p = samples_per_period(period_s, h)?;
    check_nyquist(period_s, h, max_harmonic)?;
    let periods = samples.len() / p;
    if periods == 0 {
        return Err(Error::InvalidSignal(format!(
            "record of {} samples is shorter than one period ({p} samples)",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("record samples"));
    }
    let window = &samples[..periods * p];
    let m = window.len() as f64;
    let exact = ((period_s / h) - p as f64).abs() == 0.0;
    let mut amplitudes = Vec::with_capacity(max_harmonic + 1);
    let mut phases = Vec::with_capacity(max_harmonic + 1);
    for l in 0..=max_harmonic {
        let (mut a, mut b) = (0.0, 0.0);
        for (n, &v) in window.iter().enumerate() {
            // reducing l·n modulo the period keeps the angle exact for long records
            let angle = if exact {
                2.0 * PI * ((l * n) % p) as f64 / p as f64
            } else {
                2.0 * PI * l as f64 * n as f64 * h / period_s
            };
            a += v * angle.cos();
            b += v * angle.sin();
        }
        a *= 2.0 / m;
        b *= 2.0 / m;
        if l == 0 {
            amplitudes.push(a);
            phases.push(0.0);
        } else {
            amplitudes.push(a.hypot(b));
            phases.push(b.atan2(a));
        }
    }
    let record_power = window.iter().map(|v| v * v).sum::<f64>() / m;
    let component_power =
        (amplitudes[0] / 2.0).powi(2) + amplitudes[1..].iter().map(|c| c * c / 2.0).sum::<f64>();
    let parseval_ratio = if record_power > 0.0 {
        component_power / record_power
    } else {
        0.0
    };
    Ok(FourierDecomposition {
        period_s,
        amplitudes,
        phases_rad: phases,
        parseval_ratio,
    })
}

/// A uniformly sampled record read from a two-column CSV `(time_s, value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t0: f64,
    pub h: f64,
    pub values: Vec<f64>,
}

/// Reads a two-column CSV record with an optional header row and checks that
/// the time column is uniformly spaced to within 1e−6 of the mean step.
pub fn read_record(path: &Path) -> Result<Record> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() < 2 {
            return Err(Error::InvalidSignal("record rows need two columns".into()));
        }
        match (row[0].trim().parse::<f64>(), row[1].trim().parse::<f64>()) {
            (Ok(t), Ok(v)) => {
                times.push(t);
                values.push(v);
            }
            // a non-numeric first row is a header
            _ if times.is_empty() => continue,
            _ => return Err(Error::InvalidSignal(format!("unparsable record row {:?}", row))),
        }
    }
    if times.len() < 2 {
        return Err(Error::InvalidSignal("record needs at least two samples".into()));
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(Error::InvalidSignal("record time must increase".into()));
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-6 * h {
            return Err(Error::InvalidSignal(format!("nonuniform sampling near t = {}", w[0])));
        }
    }
    Ok(Record {
        t0: times[0],
        h,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn reference_harmonics() {
        let h = harmonic_set(4.0 * PI, 8).unwrap();
        let w = h.frequencies();
        assert_eq!(w.len(), 8);
        for (i, wi) in w.iter().enumerate() {
            assert_eq!(*wi, (i + 1) as f64 * 4.0 * PI);
        }
        assert_eq!(harmonic_set(3.0, 1).unwrap().frequencies(), vec![3.0]);
    }

    #[test]
    fn explicit_lists() {
        let ok = HarmonicSet::from_frequencies(4.0 * PI, &[4.0 * PI, 12.0 * PI]).unwrap();
        assert_eq!(ok.multiples(), &[1, 3]);
        assert!(matches!(
            HarmonicSet::from_frequencies(4.0 * PI, &[4.0 * PI, 6.0 * PI]),
            Err(Error::Commensurability(_))
        ));
        assert!(HarmonicSet::from_frequencies(1.0, &[2.0, 2.0]).is_err());
    }

    #[test]
    fn modal_model_transfer_and_spectrum() {
        let h = harmonic_set(4.0 * PI, 8).unwrap();
        let sys = realize_signal_model(&h);
        assert_eq!(sys.order(), 17);
        let z = signal_polynomial(&h);
        for s in [Complex64::new(-3.0, 7.0), Complex64::new(-50.0, -1.0), Complex64::new(-0.5, 120.0)] {
            let want = 1.0 / poly::eval(&z, s);
            let got = sys.transfer(s).unwrap();
            assert!((got - want).norm() <= 1e-8 * want.norm(), "{s}: {got} vs {want}");
        }
        let mut ev: Vec<f64> = sys.poles().unwrap().iter().map(|l| l.im).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(ev[8].abs() < 1e-12);
        assert!((ev[16] - 32.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn integrator_only_model() {
        let h = HarmonicSet::from_multiples(1.0, vec![]).unwrap();
        let sys = realize_signal_model(&h);
        assert_eq!(sys.order(), 1);
        let s = Complex64::new(0.0, 2.0);
        assert!((sys.transfer(s).unwrap() - 1.0 / s).norm() < 1e-15);
    }

    #[test]
    fn companion_model_matches_modal() {
        let h = harmonic_set(2.0, 2).unwrap();
        let s = Complex64::new(-0.3, 1.1);
        let a = realize_signal_model(&h).transfer(s).unwrap();
        let b = companion_signal_model(&h).transfer(s).unwrap();
        assert!((a - b).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn single_cosine() {
        let h = 1e-3;
        let v: Vec<f64> = (0..1000).map(|n| (2.0 * PI * 2.0 * n as f64 * h).cos()).collect();
        let f = fourier_analyze(&v, h, 0.5, 10).unwrap();
        assert!((f.amplitudes[1] - 1.0).abs() < 1e-12);
        assert!(f.phases_rad[1].abs() < 1e-12);
        for l in [0, 2, 3, 7, 10] {
            assert!(f.amplitudes[l].abs() <= 1e-9, "c{l} = {}", f.amplitudes[l]);
        }
        assert!((f.parseval_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_record() {
        let f = fourier_analyze(&vec![1.0; 1000], 1e-3, 0.5, 4).unwrap();
        assert!((f.amplitudes[0] / 2.0 - 1.0).abs() < 1e-14);
        assert!(f.amplitudes[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn period_and_nyquist_errors() {
        let v = vec![0.0; 1000];
        assert!(matches!(fourier_analyze(&v, 1e-3, 0.50042, 3), Err(Error::NonIntegerPeriod(_))));
        assert!(matches!(fourier_analyze(&v, 1e-3, 0.5, 251), Err(Error::NyquistViolation(_))));
        assert!(fourier_analyze(&v[..100], 1e-3, 0.5, 3).is_err());
    }

    #[test]
    fn minimal_realizations() {
        for k in [1, 4, 8, 10] {
            for wb in [0.5, 4.0 * PI, 100.0] {
                let sys = realize_signal_model(&harmonic_set(wb, k).unwrap());
                let (c, o) = minimality_ratios(&sys);
                assert!(c > 1e-10 && o > 1e-10, "k={k} wb={wb}: {c:e} {o:e}");
            }
        }
    }
}
