//! Excitation signals, first-order plant simulation and least-squares
//! identification of per-axis `K / (tau s + 1)` models.
//!
//! The discrete model is the exact zero-order-hold recurrence
//! `v[k+1] = a v[k] + K (1 - a) u[k]` with `a = exp(-dt / tau)`.
//! Identification regresses `v[k+1] = a v[k] + b u[k]` by ordinary least
//! squares and then refines `(a, b)` with a few auxiliary-model
//! instrumental-variable passes, which removes the bias that output noise
//! puts on the one-step regression. Every pass is a closed-form 2x2 solve.

use alloc::vec::Vec;

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

const IV_PASSES: usize = 4;
const MIN_SERIES_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SysIdError {
    #[error("invalid timing: {0}")]
    InvalidTiming(&'static str),
    #[error("invalid telemetry series: {0}")]
    InvalidSeries(&'static str),
    #[error("non-uniform sampling at sample {index}")]
    NonUniform { index: usize },
    #[error("insufficient excitation: input does not excite the plant")]
    InsufficientExcitation,
    #[error("unstable estimate: fitted pole a = {a} is outside (0, 1)")]
    UnstableEstimate { a: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
}

/// `K / (tau s + 1)`: gain in output units per input unit, time constant in
/// seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct FirstOrderModel {
    pub gain: f64,
    pub tau: f64,
}

impl FirstOrderModel {
    pub fn new(gain: f64, tau: f64) -> Result<Self, SysIdError> {
        let m = Self { gain, tau };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SysIdError> {
        if !self.gain.is_finite() {
            return Err(SysIdError::InvalidModel("gain must be finite"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(SysIdError::InvalidModel("tau must be positive"));
        }
        Ok(())
    }

    /// Discrete pole for sample interval `dt`.
    pub fn pole(&self, dt: f64) -> f64 {
        libm::exp(-dt / self.tau)
    }

    /// One zero-order-hold step. Shared by the identifier and the simulator
    /// so both produce bit-identical traces.
    #[inline]
    pub fn step(&self, v: f64, u: f64, dt: f64) -> f64 {
        let a = self.pole(dt);
        a * v + self.gain * (1.0 - a) * u
    }
}

/// Uniformly sampled input/output log.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetrySeries {
    dt: f64,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
}

impl TelemetrySeries {
    pub fn new(dt: f64, inputs: Vec<f64>, outputs: Vec<f64>) -> Result<Self, SysIdError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SysIdError::InvalidSeries("dt must be positive"));
        }
        if inputs.len() != outputs.len() {
            return Err(SysIdError::InvalidSeries("inputs and outputs differ in length"));
        }
        if inputs.len() < MIN_SERIES_LEN {
            return Err(SysIdError::InvalidSeries("fewer than 10 samples"));
        }
        if inputs.iter().chain(outputs.iter()).any(|x| !x.is_finite()) {
            return Err(SysIdError::InvalidSeries("non-finite sample"));
        }
        Ok(Self { dt, inputs, outputs })
    }

    /// Builds a series from `(t, u, v)` rows, rejecting non-uniform time
    /// stamps (relative tolerance 1e-6 of the first interval).
    pub fn from_rows(rows: &[(f64, f64, f64)]) -> Result<Self, SysIdError> {
        if rows.len() < 2 {
            return Err(SysIdError::InvalidSeries("fewer than 10 samples"));
        }
        let dt = rows[1].0 - rows[0].0;
        if !(dt > 0.0) {
            return Err(SysIdError::InvalidSeries("dt must be positive"));
        }
        for (i, w) in rows.windows(2).enumerate() {
            if ((w[1].0 - w[0].0) - dt).abs() > 1e-6 * dt {
                return Err(SysIdError::NonUniform { index: i + 1 });
            }
        }
        Self::new(
            dt,
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
        )
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    /// NRMSE fit in percent; `None` when the measured output is constant and
    /// the normalization is undefined.
    pub fit_percent: Option<f64>,
    pub residual_rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ExcitationPattern {
    /// Alternates `0` and `+amplitude` each half period, starting high.
    StepTrain,
    /// Alternates `+amplitude` and `-amplitude` each half period.
    SquareWave,
}

/// Piecewise-constant excitation with `round(duration / dt)` samples. The
/// first and last samples are forced to 0 (vehicle at rest).
pub fn generate_excitation(
    pattern: ExcitationPattern,
    amplitude: f64,
    period: f64,
    duration: f64,
    dt: f64,
) -> Result<Vec<f64>, SysIdError> {
    if !(dt > 0.0 && period > 0.0 && duration > 0.0) || !amplitude.is_finite() {
        return Err(SysIdError::InvalidTiming("dt, period and duration must be positive"));
    }
    if duration < 2.0 * period {
        return Err(SysIdError::InvalidTiming("duration must cover two periods"));
    }
    if dt >= period / 10.0 {
        return Err(SysIdError::InvalidTiming("dt must be below period / 10"));
    }
    let n = libm::round(duration / dt) as usize;
    let half = period / 2.0;
    let mut out: Vec<f64> = (0..n)
        .map(|k| {
            let half_index = libm::floor(k as f64 * dt / half + 1e-9) as u64;
            let high = half_index.is_multiple_of(2);
            match (pattern, high) {
                (ExcitationPattern::SquareWave, true) => amplitude,
                (ExcitationPattern::SquareWave, false) => -amplitude,
                (ExcitationPattern::StepTrain, true) => amplitude,
                (ExcitationPattern::StepTrain, false) => 0.0,
            }
        })
        .collect();
    if let Some(first) = out.first_mut() {
        *first = 0.0;
    }
    if let Some(last) = out.last_mut() {
        *last = 0.0;
    }
    Ok(out)
}

/// Simulates the model from `v0`; the output has the same length as `inputs`
/// and `out[0] == v0`.
pub fn simulate_model(model: &FirstOrderModel, inputs: &[f64], dt: f64, v0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(inputs.len());
    let mut v = v0;
    for (k, &u) in inputs.iter().enumerate() {
        out.push(v);
        if k + 1 < inputs.len() {
            v = model.step(v, u, dt);
        }
    }
    out
}

fn simulate_arx(a: f64, b: f64, inputs: &[f64], v0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(inputs.len());
    let mut v = v0;
    for &u in inputs {
        out.push(v);
        v = a * v + b * u;
    }
    out
}

/// Solves `sum(z phi^T) theta = sum(z y)` for `theta = (a, b)` with
/// regressor `phi[k] = (v[k], u[k])` and target `y = v[k+1]`.
fn solve_normal(instrument: &[f64], series: &TelemetrySeries) -> Option<(f64, f64)> {
    let u = series.inputs();
    let v = series.outputs();
    let mut m = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    for k in 0..v.len() - 1 {
        let z = Vector2::new(instrument[k], u[k]);
        let phi = Vector2::new(v[k], u[k]);
        m += z * phi.transpose();
        rhs += z * v[k + 1];
    }
    // Relative conditioning guard: a collinear regressor means the input does
    // not carry independent information about the pole.
    let scale = m.abs().max();
    if !(scale > 0.0) || m.determinant().abs() <= 1e-12 * scale * scale {
        return None;
    }
    let theta = m.lu().solve(&rhs)?;
    Some((theta[0], theta[1]))
}

/// Identifies a first-order model and reports its simulation fit on the same
/// data.
pub fn fit_first_order(
    series: &TelemetrySeries,
) -> Result<(FirstOrderModel, FitReport), SysIdError> {
    let u = series.inputs();
    let (lo, hi) = u
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return Err(SysIdError::InsufficientExcitation);
    }

    let (mut a, mut b) =
        solve_normal(series.outputs(), series).ok_or(SysIdError::InsufficientExcitation)?;
    if !(a > 0.0 && a < 1.0) {
        return Err(SysIdError::UnstableEstimate { a });
    }
    let v0 = series.outputs()[0];
    for _ in 0..IV_PASSES {
        let aux = simulate_arx(a, b, u, v0);
        match solve_normal(&aux, series) {
            Some((na, nb)) if na > 0.0 && na < 1.0 => {
                a = na;
                b = nb;
            }
            _ => break,
        }
    }

    let model = FirstOrderModel {
        gain: b / (1.0 - a),
        tau: -series.dt() / libm::log(a),
    };
    model.validate()?;
    let report = validate_fit(&model, series);
    Ok((model, report))
}

/// Full-simulation NRMSE fit of `model` against `holdout`, started from the
/// first measured output.
pub fn validate_fit(model: &FirstOrderModel, holdout: &TelemetrySeries) -> FitReport {
    let v = holdout.outputs();
    let sim = simulate_model(model, holdout.inputs(), holdout.dt(), v[0]);
    let n = v.len() as f64;
    let residual_sq: f64 = v.iter().zip(&sim).map(|(a, b)| (a - b) * (a - b)).sum();
    let mean = v.iter().sum::<f64>() / n;
    let spread_sq: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    let residual_rms = libm::sqrt(residual_sq / n);
    let max_abs = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let fit_percent = if libm::sqrt(spread_sq / n) <= 1e-12 * max_abs {
        None
    } else {
        Some(100.0 * (1.0 - libm::sqrt(residual_sq) / libm::sqrt(spread_sq)))
    };
    FitReport {
        fit_percent,
        residual_rms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn square(dt: f64, duration: f64) -> Vec<f64> {
        generate_excitation(ExcitationPattern::SquareWave, 0.5, 4.0, duration, dt).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn square_wave_example() {
        let u = square(0.1, 8.0);
        assert_eq!(u.len(), 80);
        assert_eq!(u[0], 0.0);
        assert_eq!(u[79], 0.0);
        for (k, &x) in u.iter().enumerate().skip(1).take(78) {
            let t = k as f64 * 0.1;
            let expected = if (t + 1e-9) % 4.0 < 2.0 { 0.5 } else { -0.5 };
            assert_eq!(x, expected, "sample {k}");
        }
    }

    #[test]
    fn step_train_alternates_zero_and_amplitude() {
        let u = generate_excitation(ExcitationPattern::StepTrain, 0.8, 2.0, 6.0, 0.05).unwrap();
        assert_eq!(u.len(), 120);
        assert_eq!(u[1], 0.8);
        assert_eq!(u[25], 0.0);
        assert_eq!(u[45], 0.8);
        assert!(u.iter().all(|&x| x == 0.0 || x == 0.8));
    }

    #[test]
    fn zero_amplitude_and_bad_timing() {
        let u = generate_excitation(ExcitationPattern::SquareWave, 0.0, 4.0, 8.0, 0.1).unwrap();
        assert!(u.iter().all(|&x| x == 0.0));
        assert!(matches!(
            generate_excitation(ExcitationPattern::SquareWave, 0.5, 4.0, 7.9, 0.1),
            Err(SysIdError::InvalidTiming(_))
        ));
        assert!(matches!(
            generate_excitation(ExcitationPattern::SquareWave, 0.5, 4.0, 8.0, 0.4),
            Err(SysIdError::InvalidTiming(_))
        ));
    }

    #[test]
    fn simulate_step_response() {
        let m = FirstOrderModel::new(1.0, 0.5).unwrap();
        let v = simulate_model(&m, &[1.0; 50], 0.1, 0.0);
        for (k, &x) in v.iter().enumerate() {
            let analytic = 1.0 - (-0.1 * k as f64 / 0.5).exp();
            assert!((x - analytic).abs() < 1e-12);
        }
        assert!((v[5] - 0.63212).abs() < 1e-5);

        assert!(simulate_model(&m, &[0.0; 30], 0.1, 0.0).iter().all(|&x| x == 0.0));

        let m2 = FirstOrderModel::new(2.0, 0.4).unwrap();
        let v = simulate_model(&m2, &[1.0; 400], 0.1, 0.0);
        assert!((v[399] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn noise_free_recovery() {
        let truth = FirstOrderModel::new(1.2, 0.4).unwrap();
        let dt = 0.02;
        let u = square(dt, 20.0);
        let v = simulate_model(&truth, &u, dt, 0.0);
        let (m, report) = fit_first_order(&TelemetrySeries::new(dt, u, v).unwrap()).unwrap();
        assert!(rel(m.gain, 1.2) < 0.01);
        assert!(rel(m.tau, 0.4) < 0.01);
        assert!(report.fit_percent.unwrap() > 99.999);
    }

    #[test]
    fn noisy_recovery_median_of_20() {
        let truth = FirstOrderModel::new(1.2, 0.4).unwrap();
        let dt = 0.02;
        let u = square(dt, 20.0);
        let clean = simulate_model(&truth, &u, dt, 0.0);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut gains = Vec::new();
        let mut taus = Vec::new();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = clean.iter().map(|x| x + noise.sample(&mut rng)).collect();
            let (m, _) = fit_first_order(&TelemetrySeries::new(dt, u.clone(), v).unwrap()).unwrap();
            gains.push(m.gain);
            taus.push(m.tau);
        }
        gains.sort_by(f64::total_cmp);
        taus.sort_by(f64::total_cmp);
        let median = |x: &[f64]| 0.5 * (x[9] + x[10]);
        assert!(rel(median(&gains), 1.2) < 0.10);
        assert!(rel(median(&taus), 0.4) < 0.10);
    }

    #[test]
    fn constant_input_is_rejected() {
        let s = TelemetrySeries::new(0.02, vec![0.3; 100], vec![0.1; 100]).unwrap();
        assert_eq!(fit_first_order(&s), Err(SysIdError::InsufficientExcitation));
    }

    #[test]
    fn unstable_pole_is_rejected() {
        // Output grows geometrically: a = 1.05.
        let u: Vec<f64> = (0..50).map(|k| if k % 7 == 0 { 1.0 } else { 0.0 }).collect();
        let mut v = vec![1.0];
        for k in 0..49 {
            v.push(1.05 * v[k] + 0.1 * u[k]);
        }
        let s = TelemetrySeries::new(0.02, u, v).unwrap();
        assert!(matches!(fit_first_order(&s), Err(SysIdError::UnstableEstimate { .. })));
    }

    #[test]
    fn series_validation() {
        assert!(TelemetrySeries::new(0.0, vec![0.0; 10], vec![0.0; 10]).is_err());
        assert!(TelemetrySeries::new(0.1, vec![0.0; 9], vec![0.0; 9]).is_err());
        assert!(TelemetrySeries::new(0.1, vec![0.0; 10], vec![0.0; 11]).is_err());
        let mut rows: Vec<(f64, f64, f64)> = (0..20).map(|k| (k as f64 * 0.1, 0.0, 0.0)).collect();
        assert!(TelemetrySeries::from_rows(&rows).is_ok());
        rows[7].0 += 0.03;
        assert_eq!(
            TelemetrySeries::from_rows(&rows),
            Err(SysIdError::NonUniform { index: 7 })
        );
    }

    #[test]
    fn validate_fit_examples() {
        let truth = FirstOrderModel::new(1.2, 0.4).unwrap();
        let dt = 0.02;
        let u = square(dt, 12.0);
        let v = simulate_model(&truth, &u, dt, 0.0);
        let s = TelemetrySeries::new(dt, u, v).unwrap();
        let r = validate_fit(&truth, &s);
        assert!((r.fit_percent.unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(r.residual_rms, 0.0);

        let doubled = FirstOrderModel::new(2.4, 0.4).unwrap();
        let worse = validate_fit(&doubled, &s);
        assert!(worse.fit_percent.unwrap() < r.fit_percent.unwrap());

        let flat = TelemetrySeries::new(dt, vec![0.2; 30], vec![0.7; 30]).unwrap();
        let r = validate_fit(&truth, &flat);
        assert!(r.fit_percent.is_none());
        assert!(r.residual_rms > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn round_trip_over_grid(gain in 0.2f64..5.0, tau in 0.1f64..2.0) {
            let truth = FirstOrderModel::new(gain, tau).unwrap();
            let dt = 0.02;
            // Period scaled to the time constant so every plant settles.
            let period = (8.0 * tau).max(1.0);
            let u = generate_excitation(ExcitationPattern::SquareWave, 1.0, period, 3.0 * period, dt).unwrap();
            let v = simulate_model(&truth, &u, dt, 0.0);
            let (m, _) = fit_first_order(&TelemetrySeries::new(dt, u, v).unwrap()).unwrap();
            prop_assert!(rel(m.gain, gain) < 0.01);
            prop_assert!(rel(m.tau, tau) < 0.01);
        }

        #[test]
        fn simulation_is_linear(
            seed in any::<u64>(),
            gain in 0.2f64..5.0,
            tau in 0.1f64..2.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = Normal::new(0.0, 1.0).unwrap();
            let u1: Vec<f64> = (0..60).map(|_| n.sample(&mut rng)).collect();
            let u2: Vec<f64> = (0..60).map(|_| n.sample(&mut rng)).collect();
            let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
            let m = FirstOrderModel::new(gain, tau).unwrap();
            let y1 = simulate_model(&m, &u1, 0.02, 0.0);
            let y2 = simulate_model(&m, &u2, 0.02, 0.0);
            let ys = simulate_model(&m, &sum, 0.02, 0.0);
            for k in 0..60 {
                prop_assert!((ys[k] - y1[k] - y2[k]).abs() < 1e-9);
            }
        }

        #[test]
        fn scaling_leaves_model_unchanged(lambda in 0.1f64..10.0, seed in any::<u64>()) {
            let truth = FirstOrderModel::new(1.2, 0.4).unwrap();
            let dt = 0.02;
            let u = square(dt, 12.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.02).unwrap();
            let v: Vec<f64> = simulate_model(&truth, &u, dt, 0.0)
                .into_iter()
                .map(|x| x + noise.sample(&mut rng))
                .collect();
            let (m1, _) = fit_first_order(&TelemetrySeries::new(dt, u.clone(), v.clone()).unwrap()).unwrap();
            let us = u.iter().map(|x| x * lambda).collect();
            let vs = v.iter().map(|x| x * lambda).collect();
            let (m2, _) = fit_first_order(&TelemetrySeries::new(dt, us, vs).unwrap()).unwrap();
            prop_assert!(rel(m2.tau, m1.tau) < 1e-6);
            prop_assert!(rel(m2.gain, m1.gain) < 1e-6);
        }
    }
}
