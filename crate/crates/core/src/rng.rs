//! Counter-based, splittable random streams.
//!
//! Every stochastic draw in the crate comes from a [`Stream`] whose seed is
//! derived from a master seed by hashing a path of tags, e.g.
//! `(master, Purpose::QEstimate, question, step, sample)`. Streams never share
//! state, so the same draws happen regardless of how work is split across
//! threads.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a stream is used for. Part of the derivation path so that two
/// purposes keyed by the same indices never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Trajectory = 1,
    QEstimate = 2,
    PromptValue = 3,
    Selection = 4,
    Continuation = 5,
    QuestionDraw = 6,
    Filter = 7,
    Iteration = 8,
    InitialState = 9,
    Evaluation = 10,
    RandomReset = 11,
}

/// A derived seed. Cheap to copy; call [`SeedPath::stream`] to draw from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedPath(u64);

impl SeedPath {
    pub fn new(master: u64) -> Self {
        Self(mix64(master ^ 0x5851_F42D_4C95_7F2D))
    }

    /// Child seed for a numeric tag.
    #[inline]
    pub fn child(self, tag: u64) -> Self {
        Self(mix64(self.0 ^ mix64(tag.wrapping_add(GOLDEN_GAMMA))))
    }

    #[inline]
    pub fn purpose(self, purpose: Purpose) -> Self {
        self.child(purpose as u64 | 0xA000_0000_0000_0000)
    }

    #[inline]
    pub fn seed(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn stream(self) -> Stream {
        Stream::new(self.0)
    }
}

/// SplitMix64 stream: output `i` is `mix(seed + (i + 1) * gamma)`.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Draws an index with probability proportional to `weights`.
    /// Zero-weight entries are never returned; weights need not be normalized.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0 && total.is_finite());
        let u = self.next_f64() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last_positive = i;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}
