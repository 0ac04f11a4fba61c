use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{MdpError, TabularMdp};
use crate::rng::Stream;
use crate::scalar::Scalar;

/// Logit gap used to encode a deterministic action. `exp(-1000)` underflows
/// to zero in both `f32` and `f64`, so the resulting rows are exact one-hots.
pub const DETERMINISTIC_LOGIT_GAP: f64 = 1000.0;

/// Non-stationary softmax policy `π_h(a|s) ∝ exp(θ_h(s,a) / T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyDocument<T>", into = "PolicyDocument<T>", bound = "T: Scalar")]
pub struct SoftmaxPolicy<T> {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    logits: Vec<T>,
    temperature: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
struct PolicyDocument<T> {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    logits: Vec<T>,
    temperature: T,
}

impl<T: Scalar> TryFrom<PolicyDocument<T>> for SoftmaxPolicy<T> {
    type Error = MdpError;

    fn try_from(d: PolicyDocument<T>) -> Result<Self, MdpError> {
        SoftmaxPolicy::from_logits(d.horizon, d.num_states, d.num_actions, d.logits)?.with_temperature(d.temperature)
    }
}

impl<T: Scalar> From<SoftmaxPolicy<T>> for PolicyDocument<T> {
    fn from(p: SoftmaxPolicy<T>) -> Self {
        PolicyDocument {
            horizon: p.horizon,
            num_states: p.num_states,
            num_actions: p.num_actions,
            logits: p.logits,
            temperature: p.temperature,
        }
    }
}

impl<T: Scalar> SoftmaxPolicy<T> {
    /// All-zero logits: uniform over actions at every `(h, s)`.
    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            logits: vec![T::zero(); horizon * num_states * num_actions],
            temperature: T::one(),
        }
    }

    pub fn uniform_for(mdp: &TabularMdp<T>) -> Self {
        Self::uniform(mdp.horizon(), mdp.num_states(), mdp.num_actions())
    }

    /// Builds a policy from flat logits laid out `[h][s][a]`.
    pub fn from_logits(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        logits: Vec<T>,
    ) -> Result<Self, MdpError> {
        if horizon == 0 || num_states == 0 || num_actions == 0 {
            return Err(MdpError::Policy("dimensions must be positive".into()));
        }
        if logits.len() != horizon * num_states * num_actions {
            return Err(MdpError::Policy(format!(
                "{} logits for shape ({horizon}, {num_states}, {num_actions})",
                logits.len()
            )));
        }
        if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
            return Err(MdpError::Policy(format!("logit {i} is not finite")));
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            logits,
            temperature: T::one(),
        })
    }

    /// Deterministic policy choosing `choose(h, s)` everywhere.
    pub fn deterministic(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        mut choose: impl FnMut(usize, usize) -> usize,
    ) -> Self {
        let mut p = Self::uniform(horizon, num_states, num_actions);
        let gap = T::lit(DETERMINISTIC_LOGIT_GAP);
        for h in 0..horizon {
            for s in 0..num_states {
                let a = choose(h, s);
                assert!(a < num_actions, "action {a} out of range");
                let base = p.index(h, s, 0);
                p.logits[base + a] = gap;
            }
        }
        p
    }

    /// Same logits, different sampling temperature.
    pub fn with_temperature(mut self, temperature: T) -> Result<Self, MdpError> {
        if !(temperature.is_finite() && temperature > T::zero()) {
            return Err(MdpError::Policy(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        self.temperature = temperature;
        Ok(self)
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn temperature(&self) -> T {
        self.temperature
    }

    #[inline]
    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    /// Replaces the logits, rejecting non-finite values.
    pub fn set_logits(&mut self, logits: Vec<T>) -> Result<(), MdpError> {
        let checked = Self::from_logits(self.horizon, self.num_states, self.num_actions, logits)?;
        self.logits = checked.logits;
        Ok(())
    }

    #[inline]
    pub fn index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    #[inline]
    pub fn logit_row(&self, h: usize, s: usize) -> &[T] {
        let base = self.index(h, s, 0);
        &self.logits[base..base + self.num_actions]
    }

    pub fn check_dims(&self, mdp: &TabularMdp<T>) -> Result<(), MdpError> {
        if self.horizon != mdp.horizon() || self.num_states != mdp.num_states() || self.num_actions != mdp.num_actions()
        {
            return Err(MdpError::Dimension(format!(
                "policy shape ({}, {}, {}) vs MDP shape ({}, {}, {})",
                self.horizon,
                self.num_states,
                self.num_actions,
                mdp.horizon(),
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }

    /// Log-probabilities of the row `(h, s)`.
    pub fn log_probs(&self, h: usize, s: usize) -> Vec<T> {
        let row = self.logit_row(h, s);
        let t = self.temperature;
        let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x / t));
        let lse = max + row.iter().map(|&x| (x / t - max).exp()).sum::<T>().ln();
        row.iter().map(|&x| x / t - lse).collect()
    }

    /// Action probabilities of the row `(h, s)`.
    pub fn probs(&self, h: usize, s: usize) -> Vec<T> {
        let row = self.logit_row(h, s);
        let t = self.temperature;
        let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x / t));
        let mut out: Vec<T> = row.iter().map(|&x| (x / t - max).exp()).collect();
        let z: T = out.iter().copied().sum();
        for p in &mut out {
            *p = *p / z;
        }
        out
    }

    #[inline]
    pub fn prob(&self, h: usize, s: usize, a: usize) -> T {
        self.probs(h, s)[a]
    }

    pub fn log_prob(&self, h: usize, s: usize, a: usize) -> T {
        let row = self.logit_row(h, s);
        let t = self.temperature;
        let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x / t));
        let lse = max + row.iter().map(|&x| (x / t - max).exp()).sum::<T>().ln();
        row[a] / t - lse
    }

    /// Adds `scale * ∂ log π_h(a|s) / ∂θ_h(s,·)` into `grad`, which is laid
    /// out like the logits. The derivative is `(1[b=a] − π_h(b|s)) / T`.
    pub fn accumulate_log_prob_grad(&self, h: usize, s: usize, a: usize, scale: T, grad: &mut [T]) {
        let probs = self.probs(h, s);
        let base = self.index(h, s, 0);
        let k = scale / self.temperature;
        for (b, p) in probs.into_iter().enumerate() {
            let indicator = if b == a { T::one() } else { T::zero() };
            grad[base + b] += k * (indicator - p);
        }
    }

    /// Samples an action at `(h, s)` by inverse CDF without allocating.
    pub fn sample_action(&self, h: usize, s: usize, rng: &mut Stream) -> usize {
        let row = self.logit_row(h, s);
        let t = self.temperature.as_f64();
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.as_f64() / t));
        let z: f64 = row.iter().map(|&x| (x.as_f64() / t - max).exp()).sum();
        let u = rng.next_f64() * z;
        let mut acc = 0.0;
        let mut last = 0;
        for (a, &x) in row.iter().enumerate() {
            let w = (x.as_f64() / t - max).exp();
            if w > 0.0 {
                acc += w;
                last = a;
                if u < acc {
                    return a;
                }
            }
        }
        last
    }

    /// Highest-probability action at `(h, s)`, earliest index on ties.
    pub fn greedy_action(&self, h: usize, s: usize) -> usize {
        let row = self.logit_row(h, s);
        let mut best = 0;
        for (a, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = a;
            }
        }
        best
    }

    /// Stable 64-bit identifier of the parameters, used as a snapshot id.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for d in [self.horizon, self.num_states, self.num_actions] {
            h.update((d as u64).to_le_bytes());
        }
        h.update(self.temperature.as_f64().to_bits().to_le_bytes());
        for x in &self.logits {
            h.update(x.as_f64().to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_probability_rows() {
        let p = SoftmaxPolicy::<f64>::from_logits(1, 1, 3, vec![0.3, -2.0, 5.0]).unwrap();
        let probs = p.probs(0, 0);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for a in 0..3 {
            assert!((p.log_prob(0, 0, a).exp() - probs[a]).abs() < 1e-15);
        }
    }

    #[test]
    fn temperature_flattens() {
        let p = SoftmaxPolicy::<f64>::from_logits(1, 1, 2, vec![0.0, 1.0]).unwrap();
        let cool = p.clone().with_temperature(0.5).unwrap();
        assert!(cool.prob(0, 0, 1) > p.prob(0, 0, 1));
        assert!(p.clone().with_temperature(0.0).is_err());
        assert!((cool.prob(0, 0, 1) - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn deterministic_rows_are_exact_one_hots() {
        let p = SoftmaxPolicy::<f64>::deterministic(2, 2, 3, |h, s| (h + s) % 3);
        assert_eq!(p.probs(1, 1), vec![0.0, 0.0, 1.0]);
        let q = SoftmaxPolicy::<f32>::deterministic(1, 1, 2, |_, _| 1);
        assert_eq!(q.probs(0, 0), vec![0.0, 1.0]);
        let mut rng = Stream::new(3);
        for _ in 0..100 {
            assert_eq!(p.sample_action(0, 1, &mut rng), 1);
        }
    }

    #[test]
    fn non_finite_logits_rejected() {
        assert!(SoftmaxPolicy::<f64>::from_logits(1, 1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(SoftmaxPolicy::<f64>::from_logits(1, 1, 2, vec![0.0]).is_err());
    }

    #[test]
    fn log_prob_gradient_matches_finite_difference() {
        let p = SoftmaxPolicy::<f64>::from_logits(1, 1, 3, vec![0.2, -0.7, 1.1])
            .unwrap()
            .with_temperature(0.7)
            .unwrap();
        let mut g = vec![0.0; 3];
        p.accumulate_log_prob_grad(0, 0, 1, 1.0, &mut g);
        for i in 0..3 {
            let mut plus = p.logits().to_vec();
            plus[i] += 1e-6;
            let mut minus = p.logits().to_vec();
            minus[i] -= 1e-6;
            let pp = SoftmaxPolicy::from_logits(1, 1, 3, plus)
                .unwrap()
                .with_temperature(0.7)
                .unwrap();
            let pm = SoftmaxPolicy::from_logits(1, 1, 3, minus)
                .unwrap()
                .with_temperature(0.7)
                .unwrap();
            let fd = (pp.log_prob(0, 0, 1) - pm.log_prob(0, 0, 1)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn fingerprint_tracks_parameters() {
        let a = SoftmaxPolicy::<f64>::uniform(2, 2, 2);
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut l = b.logits().to_vec();
        l[3] = 0.1;
        b.set_logits(l).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn sampling_frequencies_follow_probs() {
        let p = SoftmaxPolicy::<f64>::from_logits(1, 1, 3, vec![0.0, 1.0, -1.0]).unwrap();
        let probs = p.probs(0, 0);
        let mut rng = Stream::new(11);
        let mut counts = [0usize; 3];
        let n = 60_000;
        for _ in 0..n {
            counts[p.sample_action(0, 0, &mut rng)] += 1;
        }
        for a in 0..3 {
            let f = counts[a] as f64 / n as f64;
            let se = (probs[a] * (1.0 - probs[a]) / n as f64).sqrt();
            assert!((f - probs[a]).abs() < 4.0 * se, "{a}: {f} vs {}", probs[a]);
        }
    }
}
