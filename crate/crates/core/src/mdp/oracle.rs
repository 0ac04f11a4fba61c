use serde::{Deserialize, Serialize};

use super::{MdpError, SoftmaxPolicy, TabularMdp};
use crate::scalar::Scalar;

/// Which policy an [`OracleValues`] table describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyTag {
    /// A concrete policy, identified by its parameter fingerprint.
    Policy {
        fingerprint: u64,
    },
    Optimal,
}

/// Exact `V_h(s)` (with `V_H ≡ 0`) and `Q_h(s,a)` tables.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleValues<T> {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    v: Vec<T>,
    q: Vec<T>,
    tag: PolicyTag,
}

impl<T: Scalar> OracleValues<T> {
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
    pub fn tag(&self) -> PolicyTag {
        self.tag
    }

    /// `V_h(s)` for `h ∈ 0..=H`.
    #[inline]
    pub fn v(&self, h: usize, s: usize) -> T {
        self.v[h * self.num_states + s]
    }

    #[inline]
    pub fn q(&self, h: usize, s: usize, a: usize) -> T {
        self.q[(h * self.num_states + s) * self.num_actions + a]
    }

    /// Flat `Q` table laid out `[h][s][a]`, like policy logits.
    #[inline]
    pub fn q_table(&self) -> &[T] {
        &self.q
    }

    /// `Σ_s d_0(s) V_0(s)`.
    pub fn initial_value(&self, mdp: &TabularMdp<T>) -> T {
        mdp.initial_dist()
            .iter()
            .enumerate()
            .map(|(s, &d)| d * self.v(0, s))
            .sum()
    }

    /// `A_h(s,a) = Q_h(s,a) − V_h(s)` against the policy these values were
    /// computed for. Optimal-policy tables are rejected.
    pub fn state_advantage(&self, h: usize, s: usize, a: usize) -> Result<T, MdpError> {
        if self.tag == PolicyTag::Optimal {
            return Err(MdpError::Policy(
                "advantage is defined against the acting policy, not the optimal one".into(),
            ));
        }
        if h >= self.horizon {
            return Err(MdpError::StepOutOfRange {
                h,
                horizon: self.horizon,
            });
        }
        Ok(self.q(h, s, a) - self.v(h, s))
    }

    /// Flat `Q − V` table laid out `[h][s][a]`.
    pub fn advantage_table(&self) -> Result<Vec<T>, MdpError> {
        if self.tag == PolicyTag::Optimal {
            return Err(MdpError::Policy(
                "advantage is defined against the acting policy, not the optimal one".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.q.len());
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    out.push(self.q(h, s, a) - self.v(h, s));
                }
            }
        }
        Ok(out)
    }

    /// Largest `|Q_h(s,a) − r_h(s,a) − Σ P V_{h+1}|` over all cells.
    pub fn bellman_residual(&self, mdp: &TabularMdp<T>) -> T {
        let mut worst = T::zero();
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let backup = mdp.reward(h, s, a) + self.expected_next(mdp, h, s, a);
                    worst = worst.max((self.q(h, s, a) - backup).abs());
                }
            }
        }
        worst
    }

    /// Greedy deterministic policy with respect to `Q`, earliest action on
    /// ties.
    pub fn greedy_policy(&self) -> SoftmaxPolicy<T> {
        SoftmaxPolicy::deterministic(self.horizon, self.num_states, self.num_actions, |h, s| {
            let mut best = 0;
            for a in 1..self.num_actions {
                if self.q(h, s, a) > self.q(h, s, best) {
                    best = a;
                }
            }
            best
        })
    }

    #[inline]
    fn expected_next(&self, mdp: &TabularMdp<T>, h: usize, s: usize, a: usize) -> T {
        match mdp.deterministic_next(h, s, a) {
            Some(next) => self.v(h + 1, next),
            None => mdp
                .transition_row(h, s, a)
                .iter()
                .enumerate()
                .map(|(s2, &p)| p * self.v(h + 1, s2))
                .sum(),
        }
    }
}

fn backward<T: Scalar>(
    mdp: &TabularMdp<T>,
    tag: PolicyTag,
    mut state_value: impl FnMut(usize, usize, &[T]) -> T,
) -> OracleValues<T> {
    let (hz, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut out = OracleValues {
        horizon: hz,
        num_states: ns,
        num_actions: na,
        v: vec![T::zero(); (hz + 1) * ns],
        q: vec![T::zero(); hz * ns * na],
        tag,
    };
    for h in (0..hz).rev() {
        for s in 0..ns {
            let base = (h * ns + s) * na;
            for a in 0..na {
                out.q[base + a] = mdp.reward(h, s, a) + out.expected_next(mdp, h, s, a);
            }
            out.v[h * ns + s] = state_value(h, s, &out.q[base..base + na]);
        }
    }
    out
}

/// Exact `V^π` and `Q^π` by backward induction from `V_H ≡ 0`.
pub fn backward_induction<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
) -> Result<OracleValues<T>, MdpError> {
    policy.check_dims(mdp)?;
    let tag = PolicyTag::Policy {
        fingerprint: policy.fingerprint(),
    };
    Ok(backward(mdp, tag, |h, s, q| {
        policy.probs(h, s).into_iter().zip(q).map(|(p, &qa)| p * qa).sum()
    }))
}

/// Bellman-optimal values `V*_h(s) = max_a Q*_h(s,a)`.
pub fn optimal_values<T: Scalar>(mdp: &TabularMdp<T>) -> OracleValues<T> {
    backward(mdp, PolicyTag::Optimal, |_, _, q| {
        q.iter().fold(T::neg_infinity(), |m, &x| m.max(x))
    })
}

/// State-action visitation probabilities `d_h(s,a)` under a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable<T> {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    d: Vec<T>,
}

impl<T: Scalar> OccupancyTable<T> {
    #[inline]
    pub fn d(&self, h: usize, s: usize, a: usize) -> T {
        self.d[(h * self.num_states + s) * self.num_actions + a]
    }

    /// `Σ_a d_h(s,a)`.
    pub fn state(&self, h: usize, s: usize) -> T {
        (0..self.num_actions).map(|a| self.d(h, s, a)).sum()
    }

    #[inline]
    pub fn table(&self) -> &[T] {
        &self.d
    }

    /// Largest deviation of `Σ_{s,a} d_h(s,a)` from one over all steps.
    pub fn normalization_error(&self) -> T {
        let per_step = self.num_states * self.num_actions;
        self.d
            .chunks(per_step)
            .map(|c| (c.iter().copied().sum::<T>() - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    /// Largest `d_other / d_self` over cells this table visits; `None` when
    /// `other` puts mass on a cell this table never reaches.
    pub fn max_density_ratio(&self, other: &OccupancyTable<T>) -> Option<T> {
        let mut worst = T::zero();
        for (&mine, &theirs) in self.d.iter().zip(&other.d) {
            if theirs > T::zero() {
                if mine == T::zero() {
                    return None;
                }
                worst = worst.max(theirs / mine);
            }
        }
        Some(worst)
    }

    /// Occupancy reweighted by `exp(γ A_h(s,a))` and renormalized per step,
    /// the sampling distribution of advantage-tilted reset selection.
    pub fn reweighted(&self, advantages: &[T], gamma: T) -> OccupancyTable<T> {
        assert_eq!(advantages.len(), self.d.len(), "advantage table shape");
        let per_step = self.num_states * self.num_actions;
        let mut d = Vec::with_capacity(self.d.len());
        for (dc, ac) in self.d.chunks(per_step).zip(advantages.chunks(per_step)) {
            let max = dc
                .iter()
                .zip(ac)
                .filter(|(&x, _)| x > T::zero())
                .fold(T::neg_infinity(), |m, (_, &a)| m.max(gamma * a));
            let w: Vec<T> = dc
                .iter()
                .zip(ac)
                .map(|(&x, &a)| {
                    if x > T::zero() {
                        x * (gamma * a - max).exp()
                    } else {
                        T::zero()
                    }
                })
                .collect();
            let z: T = w.iter().copied().sum();
            d.extend(w.into_iter().map(|x| x / z));
        }
        OccupancyTable {
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions: self.num_actions,
            d,
        }
    }
}

/// Exact occupancy by forward induction from `d_0`.
pub fn compute_occupancy<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
) -> Result<OccupancyTable<T>, MdpError> {
    policy.check_dims(mdp)?;
    let (hz, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut d = vec![T::zero(); hz * ns * na];
    let mut state_dist = mdp.initial_dist().to_vec();
    for h in 0..hz {
        let mut next = vec![T::zero(); ns];
        for s in 0..ns {
            if state_dist[s] == T::zero() {
                continue;
            }
            for (a, p) in policy.probs(h, s).into_iter().enumerate() {
                let mass = state_dist[s] * p;
                d[(h * ns + s) * na + a] = mass;
                if mass == T::zero() {
                    continue;
                }
                match mdp.deterministic_next(h, s, a) {
                    Some(s2) => next[s2] += mass,
                    None => {
                        for (s2, &pt) in mdp.transition_row(h, s, a).iter().enumerate() {
                            next[s2] += mass * pt;
                        }
                    }
                }
            }
        }
        state_dist = next;
    }
    Ok(OccupancyTable {
        horizon: hz,
        num_states: ns,
        num_actions: na,
        d,
    })
}
