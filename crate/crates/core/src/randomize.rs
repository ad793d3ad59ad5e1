//! Rank-biased choice and seed derivation shared by the randomized solvers.

use rand::Rng;

/// How a solver picks one item from a list already sorted by preference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RankPolicy {
    /// Always the first item.
    #[default]
    Deterministic,
    /// Truncated geometric over ranks: `P(r) ∝ (1 - p)^r`, `0 < p <= 1`.
    Biased(f64),
}

impl RankPolicy {
    pub fn biased(p: f64) -> Option<Self> {
        (p > 0.0 && p <= 1.0).then_some(RankPolicy::Biased(p))
    }

    /// Probability of each rank for a list of length `n`.
    pub fn distribution(&self, n: usize) -> Vec<f64> {
        match *self {
            RankPolicy::Deterministic => (0..n).map(|r| if r == 0 { 1.0 } else { 0.0 }).collect(),
            RankPolicy::Biased(p) => {
                let q = 1.0 - p;
                let weights: Vec<f64> = (0..n).map(|r| q.powi(r as i32)).collect();
                let total: f64 = weights.iter().sum();
                weights.into_iter().map(|w| w / total).collect()
            }
        }
    }
}

/// Draws a rank in `0..n` under `policy`. `n` must be positive. The RNG is
/// only consumed by a biased policy on a list with more than one item.
pub fn pick_rank<R: Rng + ?Sized>(n: usize, policy: RankPolicy, rng: &mut R) -> usize {
    debug_assert!(n > 0);
    match policy {
        RankPolicy::Deterministic => 0,
        RankPolicy::Biased(_) if n == 1 => 0,
        RankPolicy::Biased(p) if p >= 1.0 => {
            // keep RNG consumption independent of p
            let _: f64 = rng.random();
            0
        }
        RankPolicy::Biased(p) => {
            // inverse CDF of the truncated geometric
            let q = 1.0 - p;
            let mass = 1.0 - q.powi(n as i32);
            let u: f64 = rng.random();
            let r = ((1.0 - u * mass).ln() / q.ln()).floor();
            (r.max(0.0) as usize).min(n - 1)
        }
    }
}

/// Which of the solvers' arbitrary decisions are replaced by random ones.
///
/// With every hook off the solvers are exactly their deterministic versions
/// and never consume randomness.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RandomizationPolicy {
    /// Random planning order of the agents at the CBS root.
    pub permute_agents: bool,
    /// Bias `p` for the high-level FOCAL choice, `None` = deterministic.
    pub hl_focal: Option<f64>,
    /// Bias `p` for the choice of the conflict to split on.
    pub conflict: Option<f64>,
    /// Bias `p` for the low-level FOCAL choice.
    pub ll_focal: Option<f64>,
    /// Random agent labelling for M* neighbour generation.
    pub mstar_order: bool,
}

impl RandomizationPolicy {
    pub fn none() -> Self {
        Self::default()
    }

    /// Agent-label permutation for both solver families; biased hooks off.
    pub fn permute() -> Self {
        RandomizationPolicy {
            permute_agents: true,
            mstar_order: true,
            ..Self::default()
        }
    }

    /// Every hook on, biased hooks with parameter `p`.
    pub fn full(p: f64) -> Self {
        RandomizationPolicy {
            permute_agents: true,
            hl_focal: Some(p),
            conflict: Some(p),
            ll_focal: Some(p),
            mstar_order: true,
        }
    }

    /// `none`, `permute` or `full` (biased hooks with parameter `p`).
    pub fn preset(name: &str, p: f64) -> crate::Result<Self> {
        let policy = match name {
            "none" => Self::none(),
            "permute" => Self::permute(),
            "full" => Self::full(p),
            other => return Err(crate::MapfError::Usage(format!("unknown randomization {other}"))),
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn is_deterministic(&self) -> bool {
        *self == Self::none()
    }

    pub fn validate(&self) -> crate::Result<()> {
        for p in [self.hl_focal, self.conflict, self.ll_focal].into_iter().flatten() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(crate::MapfError::Usage(format!("bias p must lie in (0, 1], got {p}")));
            }
        }
        Ok(())
    }

    pub(crate) fn rank(bias: Option<f64>) -> RankPolicy {
        bias.map_or(RankPolicy::Deterministic, RankPolicy::Biased)
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `k` per-trial seeds from a master seed (SplitMix64 counter stream).
///
/// Seed `i` depends only on `(master_seed, i)`, so the sequence for `k` is a
/// prefix of the sequence for any larger `k`. The finalizer is a bijection on
/// `u64` and the counter inputs are distinct, so seeds never repeat within
/// one master seed.
pub fn derive_seeds(master_seed: u64, k: usize) -> Vec<u64> {
    (0..k as u64)
        .map(|i| mix64(master_seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(i + 1))))
        .collect()
}
