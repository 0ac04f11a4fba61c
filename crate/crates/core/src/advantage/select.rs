use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{AdvantageError, AdvantageProfile};
use crate::rng::{Purpose, SeedPath, Stream};
use crate::scalar::Scalar;

/// Concentration of the `exp(γ Â)` reset distribution; `Infinite` is the
/// argmax rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Finite(f64),
    Infinite,
}

impl Gamma {
    pub fn new(value: f64) -> Result<Self, AdvantageError> {
        if value.is_nan() || value <= 0.0 {
            return Err(AdvantageError::InvalidGamma(format!(
                "gamma must be positive, got {value}"
            )));
        }
        Ok(if value.is_infinite() {
            Gamma::Infinite
        } else {
            Gamma::Finite(value)
        })
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Gamma::Finite(g) => g,
            Gamma::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Finite(g) => write!(f, "{g}"),
            Gamma::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Gamma {
    type Err = AdvantageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Gamma::Infinite),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| AdvantageError::InvalidGamma(format!("cannot parse {s:?}")))?;
                Gamma::new(v)
            }
        }
    }
}

impl Serialize for Gamma {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Gamma::Finite(g) => s.serialize_f64(*g),
            Gamma::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Gamma::new(v).map_err(serde::de::Error::custom),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// How the reset index is chosen from a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Argmax,
    SoftmaxSample,
    RandomReset,
}

pub(super) fn argmax_earliest<T: Scalar>(advantages: &[T]) -> Result<usize, AdvantageError> {
    if advantages.is_empty() {
        return Err(AdvantageError::Empty);
    }
    let mut best = 0;
    for (i, &a) in advantages.iter().enumerate() {
        if a.is_nan() {
            return Err(AdvantageError::NaN { index: i });
        }
        if a > advantages[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Picks a reset index: the earliest argmax for `γ = ∞`, otherwise a draw
/// from `softmax(γ Â)` computed with the maximum subtracted.
pub fn select_index<T: Scalar>(advantages: &[T], gamma: Gamma, rng: &mut Stream) -> Result<usize, AdvantageError> {
    let best = argmax_earliest(advantages)?;
    match gamma {
        Gamma::Infinite => Ok(best),
        Gamma::Finite(g) => {
            let max = advantages[best].as_f64();
            let weights: Vec<f64> = advantages.iter().map(|a| (g * (a.as_f64() - max)).exp()).collect();
            Ok(rng.categorical(&weights))
        }
    }
}

/// [`select_index`] on a profile's advantages with a stream derived from
/// `seed`.
pub fn select_critical<T: Scalar>(
    profile: &AdvantageProfile<T>,
    gamma: Gamma,
    seed: u64,
) -> Result<usize, AdvantageError> {
    let mut rng = SeedPath::new(seed).purpose(Purpose::Selection).stream();
    select_index(&profile.advantages, gamma, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn earliest_argmax() {
        let mut rng = Stream::new(0);
        assert_eq!(select_index(&[0.1, 0.5, 0.5], Gamma::Infinite, &mut rng).unwrap(), 1);
        assert!(select_index(&[0.1, f64::NAN], Gamma::Infinite, &mut rng).is_err());
        assert!(select_index::<f64>(&[], Gamma::Infinite, &mut rng).is_err());
    }

    #[test]
    fn softmax_weights() {
        let adv = [0.0, std::f64::consts::LN_2, 0.0];
        let mut rng = Stream::new(4);
        let n = 40_000;
        let mut c = [0usize; 3];
        for _ in 0..n {
            c[select_index(&adv, Gamma::Finite(1.0), &mut rng).unwrap()] += 1;
        }
        for (i, p) in [0.25, 0.5, 0.25].into_iter().enumerate() {
            let f = c[i] as f64 / n as f64;
            assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
        }
    }

    #[test]
    fn large_advantages_do_not_overflow() {
        let mut rng = Stream::new(1);
        let i = select_index(&[1e6, 0.0], Gamma::Finite(1e3), &mut rng).unwrap();
        assert_eq!(i, 0);
    }

    #[test]
    fn gamma_parsing_and_serde() {
        assert_eq!("inf".parse::<Gamma>().unwrap(), Gamma::Infinite);
        assert_eq!("2".parse::<Gamma>().unwrap(), Gamma::Finite(2.0));
        assert!("0".parse::<Gamma>().is_err());
        assert!("-1".parse::<Gamma>().is_err());
        assert!("nan".parse::<Gamma>().is_err());
        assert_eq!(serde_json::to_string(&Gamma::Infinite).unwrap(), "\"inf\"");
        assert_eq!(serde_json::from_str::<Gamma>("0.5").unwrap(), Gamma::Finite(0.5));
        assert_eq!(serde_json::from_str::<Gamma>("\"inf\"").unwrap(), Gamma::Infinite);
        assert!(serde_json::from_str::<Gamma>("-3").is_err());
    }
}
