//! Trajectory to supervised dataset: chronological split, min-max scaling
//! and sliding windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("cannot fit scaler: {0}")]
    DegenerateScale(String),
}

/// Chronological cut: the first ⌊fraction·L⌋ points train, the rest test.
pub fn split<T>(series: &[T], train_fraction: f64) -> Result<(&[T], &[T]), PipelineError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(PipelineError::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if series.len() < 10 {
        return Err(PipelineError::Config(format!(
            "series needs at least 10 points to split, got {}",
            series.len()
        )));
    }
    let cut = (train_fraction * series.len() as f64).floor() as usize;
    if cut == 0 || cut >= series.len() {
        return Err(PipelineError::Config(format!(
            "train fraction {train_fraction} leaves an empty side for {} points",
            series.len()
        )));
    }
    Ok(series.split_at(cut))
}

/// Affine map of `[x_min, x_max]` onto `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams<T> {
    pub x_min: T,
    pub x_max: T,
    pub a: T,
    pub b: T,
}

impl<T: Scalar> ScalerParams<T> {
    pub fn new(x_min: T, x_max: T, a: T, b: T) -> Result<Self, PipelineError> {
        if !(x_max > x_min) {
            return Err(PipelineError::DegenerateScale(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        if !(b > a) {
            return Err(PipelineError::Config(format!(
                "target range needs b > a, got [{a}, {b}]"
            )));
        }
        Ok(Self { x_min, x_max, a, b })
    }

    #[inline]
    pub fn scale(&self, x: T) -> T {
        self.a + (x - self.x_min) * (self.b - self.a) / (self.x_max - self.x_min)
    }

    #[inline]
    pub fn unscale(&self, y: T) -> T {
        self.x_min + (y - self.a) * (self.x_max - self.x_min) / (self.b - self.a)
    }

    /// Factor turning a spread in scaled units into original units.
    pub fn unit_ratio(&self) -> T {
        (self.x_max - self.x_min) / (self.b - self.a)
    }

    pub fn scale_all(&self, xs: &[T]) -> Vec<T> {
        xs.iter().map(|&x| self.scale(x)).collect()
    }
}

/// Extrema of `data` with target range `[a, b]`.
pub fn fit_scaler<T: Scalar>(data: &[T], a: T, b: T) -> Result<ScalerParams<T>, PipelineError> {
    if data.is_empty() {
        return Err(PipelineError::DegenerateScale("empty data".into()));
    }
    let (lo, hi) = data
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if lo == hi {
        return Err(PipelineError::DegenerateScale(format!(
            "constant series (value {lo})"
        )));
    }
    ScalerParams::new(lo, hi, a, b)
}

/// Windowed (input, target) pairs. Sample `i` reads `series[i..i+W]` and
/// predicts `series[i+W..i+W+H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet<T> {
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<Vec<T>>,
    pub window: usize,
    pub horizon: usize,
}

impl<T: Scalar> SupervisedSet<T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Splits off the trailing `fraction` of samples, preserving order.
    pub fn split_tail(&self, fraction: f64) -> (SupervisedSet<T>, SupervisedSet<T>) {
        let n_tail = (fraction * self.len() as f64).floor() as usize;
        let cut = self.len() - n_tail.min(self.len());
        let part = |r: std::ops::Range<usize>| SupervisedSet {
            inputs: self.inputs[r.clone()].to_vec(),
            targets: self.targets[r].to_vec(),
            window: self.window,
            horizon: self.horizon,
        };
        (part(0..cut), part(cut..self.len()))
    }
}

pub fn window<T: Scalar>(
    series: &[T],
    window: usize,
    horizon: usize,
) -> Result<SupervisedSet<T>, PipelineError> {
    if window == 0 || horizon == 0 {
        return Err(PipelineError::Config(format!(
            "window and horizon must be at least 1 (got W={window}, H={horizon})"
        )));
    }
    let need = window + horizon;
    if series.len() < need {
        return Err(PipelineError::Config(format!(
            "series of length {} too short for W={window}, H={horizon}: need at least {need}",
            series.len()
        )));
    }
    let count = series.len() - need + 1;
    let (inputs, targets) = (0..count)
        .map(|i| {
            (
                series[i..i + window].to_vec(),
                series[i + window..i + need].to_vec(),
            )
        })
        .unzip();
    Ok(SupervisedSet {
        inputs,
        targets,
        window,
        horizon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareConfig {
    pub train_fraction: f64,
    pub a: f64,
    pub b: f64,
    pub window: usize,
    pub horizon: usize,
    /// Fit the scaler on the whole series instead of the training part.
    pub fit_on_all: bool,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            a: -1.0,
            b: 1.0,
            window: 1,
            horizon: 1,
            fit_on_all: false,
        }
    }
}

/// Everything the trainer and evaluator need from one raw series.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub scaler: ScalerParams<T>,
    pub train: SupervisedSet<T>,
    pub test: SupervisedSet<T>,
    pub n_train_points: usize,
    pub n_test_points: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn prepare(series: &[T], cfg: &PrepareConfig) -> Result<Self, PipelineError> {
        let (train, test) = split(series, cfg.train_fraction)?;
        let fit_on = if cfg.fit_on_all { series } else { train };
        let scaler = fit_scaler(fit_on, T::lit(cfg.a), T::lit(cfg.b))?;
        Ok(Self {
            scaler,
            train: window(&scaler.scale_all(train), cfg.window, cfg.horizon)?,
            test: window(&scaler.scale_all(test), cfg.window, cfg.horizon)?,
            n_train_points: train.len(),
            n_test_points: test.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_to(n: usize) -> Vec<f64> {
        (1..=n).map(|v| v as f64).collect()
    }

    #[test]
    fn split_examples() {
        let series: Vec<f64> = (0..100_000).map(|i| i as f64).collect();
        let (tr, te) = split(&series, 0.6).unwrap();
        assert_eq!((tr.len(), te.len()), (60_000, 40_000));

        let s = one_to(10);
        let (tr, te) = split(&s, 0.5).unwrap();
        assert_eq!(tr, &one_to(5)[..]);
        assert_eq!(te, &[6.0, 7.0, 8.0, 9.0, 10.0]);

        let (tr, te) = split(&s, 0.99).unwrap();
        assert_eq!(tr, &one_to(9)[..]);
        assert_eq!(te, &[10.0]);
    }

    #[test]
    fn split_errors() {
        let s = one_to(10);
        assert!(split(&s, 0.0).is_err());
        assert!(split(&s, 1.0).is_err());
        assert!(split(&s, -0.2).is_err());
        assert!(split(&s[..9], 0.5).is_err());
    }

    #[test]
    fn fit_scaler_examples() {
        let s = fit_scaler(&[0.0, 1.0], -1.0, 1.0).unwrap();
        assert_eq!((s.x_min, s.x_max), (0.0, 1.0));
        let s = fit_scaler(&[0.2, 0.8, 0.5], -1.0, 1.0).unwrap();
        assert_eq!((s.x_min, s.x_max), (0.2, 0.8));
        assert!(matches!(
            fit_scaler(&[0.3, 0.3, 0.3], -1.0, 1.0),
            Err(PipelineError::DegenerateScale(_))
        ));
        assert!(fit_scaler::<f64>(&[], -1.0, 1.0).is_err());
        assert!(ScalerParams::new(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn scale_examples() {
        let s = ScalerParams::new(0.2, 0.8, -1.0, 1.0).unwrap();
        assert_eq!(s.scale(0.2), -1.0);
        assert_eq!(s.scale(0.8), 1.0);
        assert!(s.scale(0.5f64).abs() < 1e-15);

        let s = ScalerParams::new(0.0, 0.5, -1.0, 1.0).unwrap();
        assert_eq!(s.scale(0.25), 0.0);
        assert_eq!(s.unscale(0.0), 0.25);
        // out-of-range values pass through
        assert!(s.scale(0.6) > 1.0);
        assert!(s.scale(-0.1) < -1.0);
    }

    #[test]
    fn window_examples() {
        let s = one_to(5);
        let w = window(&s, 1, 1).unwrap();
        assert_eq!(w.inputs, vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        assert_eq!(w.targets, vec![vec![2.0], vec![3.0], vec![4.0], vec![5.0]]);

        let w = window(&s, 2, 2).unwrap();
        assert_eq!(w.inputs, vec![vec![1.0, 2.0], vec![2.0, 3.0]]);
        assert_eq!(w.targets, vec![vec![3.0, 4.0], vec![4.0, 5.0]]);

        match window(&one_to(2), 1, 2) {
            Err(PipelineError::Config(msg)) => assert!(msg.contains("at least 3"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn prepare_counts_and_scaler_scope() {
        let series: Vec<f64> = (0..1000)
            .map(|i| ((i as f64) * 0.37).sin() * 0.4 + 0.5)
            .collect();
        let d = Dataset::prepare(&series, &PrepareConfig::default()).unwrap();
        assert_eq!(d.n_train_points, 600);
        assert_eq!(d.train.len(), 599);
        assert_eq!(d.test.len(), 399);
        let train_max = series[..600].iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(d.scaler.x_max, train_max);

        let all = Dataset::prepare(
            &series,
            &PrepareConfig {
                fit_on_all: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(
            all.scaler.x_max,
            series.iter().cloned().fold(f64::MIN, f64::max)
        );
    }

    #[test]
    fn split_tail_keeps_order() {
        let w = window(&one_to(21), 1, 1).unwrap();
        let (head, tail) = w.split_tail(0.1);
        assert_eq!((head.len(), tail.len()), (18, 2));
        assert_eq!(tail.inputs[0], vec![19.0]);
    }

    proptest! {
        #[test]
        fn split_concatenates_back(len in 10usize..500, frac in 0.01f64..0.99) {
            let s: Vec<f64> = (0..len).map(|i| i as f64 * 1.5).collect();
            if let Ok((tr, te)) = split(&s, frac) {
                let joined: Vec<f64> = tr.iter().chain(te).copied().collect();
                prop_assert_eq!(joined, s.clone());
                prop_assert_eq!(tr.len(), (frac * len as f64).floor() as usize);
            }
        }

        #[test]
        fn scaler_round_trip(
            lo in -10.0f64..10.0,
            width in 1e-3f64..10.0,
            xs in proptest::collection::vec(-30.0f64..30.0, 1..200),
        ) {
            let s = ScalerParams::new(lo, lo + width, -1.0, 1.0).unwrap();
            for x in xs {
                let back = s.unscale(s.scale(x));
                prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0), "{} -> {}", x, back);
            }
        }

        #[test]
        fn scaling_is_strictly_monotone(x1 in -5.0f64..5.0, dx in 1e-9f64..5.0) {
            let s = ScalerParams::new(0.1, 0.9, -1.0, 1.0).unwrap();
            prop_assert!(s.scale(x1) < s.scale(x1 + dx));
        }

        #[test]
        fn window_count_formula(len in 2usize..300, w in 1usize..20, h in 1usize..10) {
            prop_assume!(len >= w + h);
            let s: Vec<f64> = (0..len).map(|i| i as f64).collect();
            let set = window(&s, w, h).unwrap();
            prop_assert_eq!(set.len(), len - w - h + 1);
            prop_assert_eq!(set.inputs.len(), set.targets.len());
            for (i, (inp, tgt)) in set.inputs.iter().zip(&set.targets).enumerate() {
                prop_assert_eq!(&inp[..], &s[i..i + w]);
                prop_assert_eq!(&tgt[..], &s[i + w..i + w + h]);
            }
        }
    }
}
