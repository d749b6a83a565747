//! The overall ratio: mean of returned-to-true distance over ranks `1..=k`.

use std::fmt;

use rtlsh::Neighbor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ratio {
    Value(f64),
    /// A true distance of zero was matched by a nonzero returned distance;
    /// the query is reported separately instead of averaged.
    Flagged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatioError {
    TooFewResults { got: usize, k: usize },
    TooFewTruth { got: usize, k: usize },
    ZeroK,
}

impl fmt::Display for RatioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatioError::TooFewResults { got, k } => write!(f, "query returned {got} results, k = {k}"),
            RatioError::TooFewTruth { got, k } => write!(f, "ground truth holds {got} neighbours, k = {k}"),
            RatioError::ZeroK => f.write_str("k must be at least 1"),
        }
    }
}

impl std::error::Error for RatioError {}

pub fn ratio(results: &[Neighbor], truth: &[Neighbor], k: usize) -> Result<Ratio, RatioError> {
    if k == 0 {
        return Err(RatioError::ZeroK);
    }
    if results.len() < k {
        return Err(RatioError::TooFewResults { got: results.len(), k });
    }
    if truth.len() < k {
        return Err(RatioError::TooFewTruth { got: truth.len(), k });
    }
    let mut sum = 0.0;
    for (got, want) in results.iter().zip(truth).take(k) {
        if want.distance == 0.0 {
            if got.distance != 0.0 {
                return Ok(Ratio::Flagged);
            }
            sum += 1.0;
        } else {
            sum += got.distance / want.distance;
        }
    }
    Ok(Ratio::Value(sum / k as f64))
}

/// Mean over unflagged queries and the number flagged.
pub fn summarize(ratios: &[Ratio]) -> (Option<f64>, usize) {
    let values: Vec<f64> = ratios
        .iter()
        .filter_map(|r| match r {
            Ratio::Value(v) => Some(*v),
            Ratio::Flagged => None,
        })
        .collect();
    let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    (mean, ratios.len() - values.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ns(ds: &[f64]) -> Vec<Neighbor> {
        ds.iter().enumerate().map(|(i, &d)| Neighbor { id: i as u32, distance: d }).collect()
    }

    #[test]
    fn identity_is_one() {
        assert_eq!(ratio(&ns(&[1.0, 2.0, 3.0]), &ns(&[1.0, 2.0, 3.0]), 3), Ok(Ratio::Value(1.0)));
    }

    #[test]
    fn hand_case() {
        assert_eq!(ratio(&ns(&[2.0, 4.0]), &ns(&[1.0, 4.0]), 2), Ok(Ratio::Value(1.5)));
    }

    #[test]
    fn zero_distance_rule() {
        assert_eq!(ratio(&ns(&[0.0, 2.0]), &ns(&[0.0, 1.0]), 2), Ok(Ratio::Value(1.5)));
        assert_eq!(ratio(&ns(&[0.5, 2.0]), &ns(&[0.0, 1.0]), 2), Ok(Ratio::Flagged));
        assert_eq!(summarize(&[Ratio::Value(1.0), Ratio::Flagged, Ratio::Value(2.0)]), (Some(1.5), 1));
        assert_eq!(summarize(&[Ratio::Flagged]), (None, 1));
    }

    #[test]
    fn short_lists_are_errors() {
        assert_eq!(ratio(&ns(&[1.0]), &ns(&[1.0, 2.0]), 2), Err(RatioError::TooFewResults { got: 1, k: 2 }));
        assert!(ratio(&ns(&[1.0, 2.0]), &ns(&[1.0]), 2).is_err());
        assert!(ratio(&ns(&[1.0]), &ns(&[1.0]), 0).is_err());
    }
}
