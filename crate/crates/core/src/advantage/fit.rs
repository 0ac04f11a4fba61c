//! Tabular least-squares regression of returns, and the reweighted
//! reset-and-rollout collector that produces its training data.

use serde::{Deserialize, Serialize};

use super::{select_index, AdvantageError, Gamma};
use crate::mdp::{rollout_after, sample_trajectory, OracleValues, SoftmaxPolicy, TabularMdp};
use crate::rng::{Purpose, SeedPath};
use crate::scalar::Scalar;

/// One observed return after playing `a` in state `s` at step `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QSample<T> {
    pub h: usize,
    pub state: usize,
    pub action: usize,
    pub q: T,
}

/// One observed return from state `s` at step `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VSample<T> {
    pub h: usize,
    pub state: usize,
    pub value: T,
}

/// Per-cell means with visit counts; unvisited cells have no estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    num_states: usize,
    num_actions: usize,
    sums: Vec<T>,
    counts: Vec<usize>,
}

impl<T: Scalar> QTable<T> {
    pub fn get(&self, h: usize, s: usize, a: usize) -> Option<T> {
        let i = (h * self.num_states + s) * self.num_actions + a;
        (self.counts[i] > 0).then(|| self.sums[i] / T::from_usize(self.counts[i]).expect("count fits"))
    }

    pub fn count(&self, h: usize, s: usize, a: usize) -> usize {
        self.counts[(h * self.num_states + s) * self.num_actions + a]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VTable<T> {
    num_states: usize,
    sums: Vec<T>,
    counts: Vec<usize>,
}

impl<T: Scalar> VTable<T> {
    pub fn get(&self, h: usize, s: usize) -> Option<T> {
        let i = h * self.num_states + s;
        (self.counts[i] > 0).then(|| self.sums[i] / T::from_usize(self.counts[i]).expect("count fits"))
    }

    pub fn count(&self, h: usize, s: usize) -> usize {
        self.counts[h * self.num_states + s]
    }
}

/// Least-squares fit over the tabular function class, i.e. the per-cell
/// sample mean.
pub fn fit_q_table<T: Scalar>(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    data: &[QSample<T>],
) -> Result<QTable<T>, AdvantageError> {
    if data.is_empty() {
        return Err(AdvantageError::EmptyDataset);
    }
    let mut t = QTable {
        num_states,
        num_actions,
        sums: vec![T::zero(); horizon * num_states * num_actions],
        counts: vec![0; horizon * num_states * num_actions],
    };
    for d in data {
        if d.h >= horizon || d.state >= num_states || d.action >= num_actions {
            return Err(AdvantageError::IndexOutOfRange {
                index: d.h,
                len: horizon,
            });
        }
        let i = (d.h * num_states + d.state) * num_actions + d.action;
        t.sums[i] += d.q;
        t.counts[i] += 1;
    }
    Ok(t)
}

/// Per-`(h, s)` sample mean of observed returns.
pub fn fit_v_table<T: Scalar>(
    horizon: usize,
    num_states: usize,
    data: &[VSample<T>],
) -> Result<VTable<T>, AdvantageError> {
    if data.is_empty() {
        return Err(AdvantageError::EmptyDataset);
    }
    let mut t = VTable {
        num_states,
        sums: vec![T::zero(); horizon * num_states],
        counts: vec![0; horizon * num_states],
    };
    for d in data {
        if d.h >= horizon || d.state >= num_states {
            return Err(AdvantageError::IndexOutOfRange {
                index: d.h,
                len: horizon,
            });
        }
        let i = d.h * num_states + d.state;
        t.sums[i] += d.value;
        t.counts[i] += 1;
    }
    Ok(t)
}

/// For each of `k` trajectories, draws a step with probability
/// `∝ exp(γ A(s_i, a_i))` using exact advantages, resets there keeping the
/// action, and records the return-to-go of one fresh continuation.
pub fn collect_q_dataset<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
    oracle: &OracleValues<T>,
    gamma: Gamma,
    k: usize,
    seed: u64,
) -> Result<Vec<QSample<T>>, AdvantageError> {
    let root = SeedPath::new(seed);
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let traj = sample_trajectory(mdp, policy, root.purpose(Purpose::Trajectory).child(j as u64).seed());
        let adv = traj
            .steps
            .iter()
            .map(|st| oracle.state_advantage(st.h, st.state, st.action))
            .collect::<Result<Vec<T>, _>>()?;
        let mut rng = root.purpose(Purpose::Selection).child(j as u64).stream();
        let m = select_index(&adv, gamma, &mut rng)?;
        let st = traj.steps[m];
        let c = rollout_after(
            mdp,
            policy,
            st.h,
            st.state,
            st.action,
            root.purpose(Purpose::Continuation).child(j as u64).seed(),
        )?;
        out.push(QSample {
            h: st.h,
            state: st.state,
            action: st.action,
            q: c.return_to_go,
        });
    }
    Ok(out)
}
