use std::fmt;

use serde::Serialize;

use super::stats::Moments;

/// Why a d' value could not be produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DPrimeUndefined {
    /// One side has fewer than two scores.
    TooFewSamples,
    /// Both sides have zero spread.
    ZeroVariance,
}

impl fmt::Display for DPrimeUndefined {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DPrimeUndefined::TooFewSamples => "fewer than two genuine or impostor scores",
            DPrimeUndefined::ZeroVariance => "both distributions have zero variance",
        })
    }
}

/// `|mean_g - mean_i| / sqrt((var_g + var_i) / 2)` with sample variances.
pub fn d_prime(genuine: &impl Moments, impostor: &impl Moments) -> Result<f64, DPrimeUndefined> {
    if genuine.count() < 2 || impostor.count() < 2 {
        return Err(DPrimeUndefined::TooFewSamples);
    }
    let (mg, mi) = (genuine.mean().unwrap(), impostor.mean().unwrap());
    let (vg, vi) = (genuine.sample_variance().unwrap(), impostor.sample_variance().unwrap());
    let pooled = ((vg + vi) / 2.0).sqrt();
    if pooled == 0.0 {
        return Err(DPrimeUndefined::ZeroVariance);
    }
    Ok((mg - mi).abs() / pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::stats::ScoreMoments;
    use proptest::prelude::*;

    fn m(v: &[f64]) -> ScoreMoments {
        ScoreMoments::from_scores(v.iter().copied())
    }

    #[test]
    fn hand_example() {
        let d = d_prime(&m(&[0.6, 0.8, 1.0]), &m(&[0.0, 0.2, 0.4])).unwrap();
        assert!((d - 3.0).abs() < 1e-9, "{d}");
    }

    #[test]
    fn identical_is_zero() {
        let s = [0.1, 0.5, 0.3, 0.9];
        assert_eq!(d_prime(&m(&s), &m(&s)).unwrap(), 0.0);
    }

    #[test]
    fn undefined_cases() {
        assert_eq!(
            d_prime(&m(&[0.5]), &m(&[0.1, 0.2])),
            Err(DPrimeUndefined::TooFewSamples)
        );
        assert_eq!(
            d_prime(&m(&[0.5, 0.5]), &m(&[0.1, 0.1])),
            Err(DPrimeUndefined::ZeroVariance)
        );
    }

    proptest! {
        #[test]
        fn affine_invariant(
            g in prop::collection::vec(-1.0f64..1.0, 3..40),
            i in prop::collection::vec(-1.0f64..1.0, 3..40),
            shift in -5.0f64..5.0,
            scale in 0.1f64..10.0,
        ) {
            let base = d_prime(&m(&g), &m(&i));
            let tf = |v: &[f64]| v.iter().map(|x| x * scale + shift).collect::<Vec<_>>();
            let moved = d_prime(&m(&tf(&g)), &m(&tf(&i)));
            if let (Ok(a), Ok(b)) = (base, moved) {
                prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a), "{a} vs {b}");
            }
        }
    }
}
