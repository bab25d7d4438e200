//! Regression metrics: Pearson correlation, RMSE, and the repeated-subsample
//! correlation distribution.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

fn check_lengths(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(invalid(format!("need at least {min} values, got {}", x.len())));
    }
    Ok(())
}

/// Sample Pearson correlation coefficient.
///
/// A constant input has no defined correlation and yields
/// [`Error::UndefinedCorrelation`].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        let which = match (sxx == 0.0, syy == 0.0) {
            (true, true) => "both inputs are constant",
            (true, false) => "first input is constant",
            _ => "second input is constant",
        };
        return Err(Error::UndefinedCorrelation(which.into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Root mean squared difference.
pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y, 1)?;
    let mse = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    Ok(mse.sqrt())
}

pub const HISTOGRAM_BIN_WIDTH: f64 = 0.01;
const HISTOGRAM_BINS: usize = 200;
/// Redraws allowed per requested repetition before giving up.
const MAX_REDRAWS_PER_REPETITION: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsamplePcs {
    pub group_size: usize,
    pub values: Vec<f64>,
    /// Groups discarded because one side was constant.
    pub redraws: usize,
    /// Counts per bin of width 0.01 over [−1, 1]; bin `k` covers
    /// `[−1 + 0.01k, −1 + 0.01(k+1))`, the last bin also holds 1.0.
    pub histogram: Vec<usize>,
}

impl SubsamplePcs {
    pub fn median(&self) -> f64 {
        median(&self.values)
    }

    pub fn fraction_above(&self, threshold: f64) -> f64 {
        self.values.iter().filter(|&&v| v > threshold).count() as f64 / self.values.len() as f64
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn histogram(values: &[f64]) -> Vec<usize> {
    let mut bins = vec![0; HISTOGRAM_BINS];
    for &v in values {
        let k = (((v + 1.0) / HISTOGRAM_BIN_WIDTH).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        bins[k] += 1;
    }
    bins
}

/// Pearson correlation on `repetitions` random groups of `group_size`
/// indices drawn without replacement. Groups with a constant side are
/// redrawn and counted.
pub fn subsample_pc_distribution<R: Rng + ?Sized>(
    truth: &[f64],
    predicted: &[f64],
    group_size: usize,
    repetitions: usize,
    rng: &mut R,
) -> Result<SubsamplePcs> {
    check_lengths(truth, predicted, 2)?;
    if group_size < 2 || group_size > truth.len() {
        return Err(invalid(format!(
            "group size {group_size} must be between 2 and the {} available values",
            truth.len()
        )));
    }
    if repetitions == 0 {
        return Err(invalid("repetitions must be positive"));
    }
    let mut values = Vec::with_capacity(repetitions);
    let mut redraws = 0;
    let (mut xs, mut ys) = (Vec::with_capacity(group_size), Vec::with_capacity(group_size));
    while values.len() < repetitions {
        xs.clear();
        ys.clear();
        for i in sample(rng, truth.len(), group_size) {
            xs.push(truth[i]);
            ys.push(predicted[i]);
        }
        match pearson(&xs, &ys) {
            Ok(pc) => values.push(pc),
            Err(Error::UndefinedCorrelation(_)) => {
                redraws += 1;
                if redraws > MAX_REDRAWS_PER_REPETITION * repetitions {
                    return Err(Error::UndefinedCorrelation(
                        "subsamples are persistently constant".into(),
                    ));
                }
            }
            Err(e) => return Err(e),
        }
    }
    let histogram = histogram(&values);
    Ok(SubsamplePcs {
        group_size,
        values,
        redraws,
        histogram,
    })
}

/// Subsample settings for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub group_size: usize,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    /// Metrics on raw model outputs.
    pub pc: f64,
    pub rmse: f64,
    /// Predictions clamped to [0, 1]; `None` when clamping makes them constant.
    pub clamped_pc: Option<f64>,
    pub clamped_rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subsample: Option<SubsamplePcs>,
    /// `(true, predicted)` pairs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scatter: Option<Vec<(f64, f64)>>,
}

pub fn evaluate(
    truth: &[f64],
    predicted: &[f64],
    subsample: Option<SubsampleSpec>,
    keep_scatter: bool,
) -> Result<MetricsReport> {
    let pc = pearson(truth, predicted)?;
    let raw_rmse = rmse(truth, predicted)?;
    let clamped: Vec<f64> = predicted.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let clamped_pc = match pearson(truth, &clamped) {
        Ok(v) => Some(v),
        Err(Error::UndefinedCorrelation(_)) => None,
        Err(e) => return Err(e),
    };
    let subsample = subsample
        .map(|s| {
            let mut rng = crate::rng::stream(s.seed);
            subsample_pc_distribution(truth, predicted, s.group_size, s.repetitions, &mut rng)
        })
        .transpose()?;
    Ok(MetricsReport {
        count: truth.len(),
        pc,
        rmse: raw_rmse,
        clamped_pc,
        clamped_rmse: rmse(truth, &clamped)?,
        subsample,
        scatter: keep_scatter.then(|| truth.iter().copied().zip(predicted.iter().copied()).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.5];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-15);
        // x̄ = 2, ȳ = 7/3: Sxy = 3, Sxx = 2, Syy = 14/3 → 3/√(28/3)
        let expected = 3.0 / (28.0f64 / 3.0).sqrt();
        assert!((expected - 0.98198050606).abs() < 1e-10);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::Shape(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(matches!(
            pearson(&[2.0, 2.0, 2.0], &[5.0, 5.0, 5.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((rmse(&[0.0, 1.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(rmse(&[0.0], &[0.0, 1.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn subsample_identity_and_count() {
        let truth: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let d = subsample_pc_distribution(&truth, &truth, 20, 200, &mut stream(1)).unwrap();
        assert_eq!(d.values.len(), 200);
        assert!(d.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert_eq!(d.redraws, 0);
        assert_eq!(d.histogram.iter().sum::<usize>(), 200);
        assert_eq!(d.histogram[199], 200);
        assert!((d.median() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subsample_redraws_constant_groups() {
        // mostly zeros: small groups are often constant
        let mut truth = vec![0.0; 50];
        truth[0] = 1.0;
        truth[1] = 0.5;
        let pred: Vec<f64> = truth.iter().map(|v| v * 0.9 + 0.01).collect();
        let d = subsample_pc_distribution(&truth, &pred, 5, 30, &mut stream(2)).unwrap();
        assert_eq!(d.values.len(), 30);
        assert!(d.redraws > 0);

        let flat = vec![0.0; 10];
        assert!(subsample_pc_distribution(&flat, &flat, 5, 3, &mut stream(2)).is_err());
        assert!(subsample_pc_distribution(&truth, &pred, 51, 3, &mut stream(2)).is_err());
        assert!(subsample_pc_distribution(&truth, &pred, 1, 3, &mut stream(2)).is_err());
    }

    #[test]
    fn histogram_edges() {
        let h = histogram(&[-1.0, -0.995, 0.0, 0.999, 1.0]);
        assert_eq!(h[0], 2);
        assert_eq!(h[100], 1);
        assert_eq!(h[199], 2);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }

    #[test]
    fn evaluate_self_consistency() {
        let truth: Vec<f64> = (0..50).map(|i| (i as f64 * 0.13).sin().abs()).collect();
        let spec = SubsampleSpec {
            group_size: 20,
            repetitions: 200,
            seed: 3,
        };
        let r = evaluate(&truth, &truth, Some(spec), true).unwrap();
        assert_eq!(r.count, 50);
        assert!((r.pc - 1.0).abs() < 1e-12);
        assert_eq!((r.rmse, r.clamped_rmse), (0.0, 0.0));
        assert_eq!(r.subsample.as_ref().unwrap().values.len(), 200);
        assert_eq!(r.scatter.as_ref().unwrap().len(), 50);
        assert_eq!(evaluate(&truth, &truth, Some(spec), false).unwrap().subsample, r.subsample);

        // all raw predictions above 1 clamp to a constant
        let high: Vec<f64> = truth.iter().map(|t| t + 1.5).collect();
        let r = evaluate(&truth, &high, None, false).unwrap();
        assert!((r.pc - 1.0).abs() < 1e-12);
        assert_eq!(r.clamped_pc, None);
        assert!((r.rmse - 1.5).abs() < 1e-12);
        assert!(r.scatter.is_none() && r.subsample.is_none());
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance(
            xs in prop::collection::vec(-10.0f64..10.0, 3..40),
            a in 0.01f64..100.0,
            b in -50.0f64..50.0,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * x + i as f64).collect();
            if let Ok(pc) = pearson(&xs, &ys) {
                let scaled: Vec<f64> = ys.iter().map(|y| a * y + b).collect();
                prop_assert!((pearson(&xs, &scaled).unwrap() - pc).abs() < 1e-12);
                prop_assert!(pc.abs() <= 1.0);
            }
        }

        #[test]
        fn rmse_symmetric_and_triangle(
            v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..30),
        ) {
            let x: Vec<f64> = v.iter().map(|t| t.0).collect();
            let y: Vec<f64> = v.iter().map(|t| t.1).collect();
            let z: Vec<f64> = v.iter().map(|t| t.2).collect();
            prop_assert_eq!(rmse(&x, &y).unwrap(), rmse(&y, &x).unwrap());
            prop_assert!(rmse(&x, &z).unwrap() <= rmse(&x, &y).unwrap() + rmse(&y, &z).unwrap() + 1e-12);
        }
    }
}
