//! Distance metrics for the temporal term.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default stabilizer for Canberra and Bray-Curtis.
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `||f_t - 2 f_{t-1} + f_{t-2}||_2`
    SecondOrder,
    Euclidean,
    Manhattan,
    Cosine,
    Correlation,
    Canberra,
    BrayCurtis,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::BrayCurtis,
        Metric::Canberra,
        Metric::Correlation,
        Metric::Cosine,
        Metric::Euclidean,
        Metric::Manhattan,
        Metric::SecondOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::SecondOrder => "second-order",
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
            Metric::Cosine => "cosine",
            Metric::Correlation => "correlation",
            Metric::Canberra => "canberra",
            Metric::BrayCurtis => "bray-curtis",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        Ok(match key.as_str() {
            "secondorder" | "secondorderl2" | "seconddiff" => Metric::SecondOrder,
            "euclidean" | "l2" => Metric::Euclidean,
            "manhattan" | "l1" | "cityblock" => Metric::Manhattan,
            "cosine" => Metric::Cosine,
            "correlation" => Metric::Correlation,
            "canberra" => Metric::Canberra,
            "braycurtis" => Metric::BrayCurtis,
            _ => return Err(Error::UnknownName(s.to_string())),
        })
    }
}

fn check_dims(h: &[f64], c: &[f64]) -> Result<()> {
    if h.len() != c.len() || h.is_empty() {
        return Err(Error::Dimension(format!(
            "metric inputs of length {} and {}",
            h.len(),
            c.len()
        )));
    }
    Ok(())
}

/// Pairwise distance `d(h, c)`. The second-order metric needs three points
/// and is handled by the temporal scorer, so it is rejected here.
pub fn metric_distance(metric: Metric, h: &[f64], c: &[f64], eps: f64) -> Result<f64> {
    check_dims(h, c)?;
    let d = match metric {
        Metric::Euclidean => h.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        Metric::Manhattan => h.iter().zip(c).map(|(a, b)| (a - b).abs()).sum(),
        Metric::Cosine => {
            let dot: f64 = h.iter().zip(c).map(|(a, b)| a * b).sum();
            let nh = h.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nc = c.iter().map(|b| b * b).sum::<f64>().sqrt();
            if nh == 0.0 || nc == 0.0 {
                return Err(Error::InvalidParameter("cosine distance of a zero vector".into()));
            }
            1.0 - dot / (nh * nc)
        }
        Metric::Correlation => {
            let n = h.len() as f64;
            let mh = h.iter().sum::<f64>() / n;
            let mc = c.iter().sum::<f64>() / n;
            let (mut num, mut sh, mut sc) = (0.0, 0.0, 0.0);
            for (a, b) in h.iter().zip(c) {
                num += (a - mh) * (b - mc);
                sh += (a - mh) * (a - mh);
                sc += (b - mc) * (b - mc);
            }
            if sh == 0.0 || sc == 0.0 {
                return Err(Error::InvalidParameter(
                    "correlation distance of a constant vector".into(),
                ));
            }
            1.0 - num / (sh.sqrt() * sc.sqrt())
        }
        Metric::Canberra => {
            if eps <= 0.0 {
                return Err(Error::InvalidParameter(format!("epsilon {eps} must be positive")));
            }
            h.iter()
                .zip(c)
                .map(|(a, b)| (a - b).abs() / (a.abs() + b.abs() + eps))
                .sum()
        }
        Metric::BrayCurtis => {
            if eps <= 0.0 {
                return Err(Error::InvalidParameter(format!("epsilon {eps} must be positive")));
            }
            let num: f64 = h.iter().zip(c).map(|(a, b)| (a - b).abs()).sum();
            let den: f64 = h.iter().zip(c).map(|(a, b)| a.abs() + b.abs()).sum();
            num / (den + eps)
        }
        Metric::SecondOrder => {
            return Err(Error::InvalidParameter(
                "second-order difference is not a pairwise metric".into(),
            ))
        }
    };
    Ok(d)
}
