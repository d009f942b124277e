//! Exponential unhappiness objective.
//!
//! Pedestrian delay treats every waiting person-interval alike, which lets a
//! small group wait arbitrarily long when that benefits the network total.
//! The unhappiness objective penalises each maximal red run of a stage by
//! the average volume blocked over the run times an exponential in the run
//! duration, so long waits grow far more expensive than many short ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ped::{JunctionDemand, PedJunctionTrace, PedScenario, PedTrace};
use crate::topology::{Stage, NUM_CORNERS};

/// How the exponent of the red-run penalty is formed.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnhappinessConfig {
    /// Multiply run lengths by the interval length, measuring runs in
    /// seconds.  When false the exponent uses bare interval counts, which
    /// keeps long-horizon experiments inside floating-point range.
    pub exponent_in_seconds: bool,
    /// Exponent arguments beyond this bound raise an error instead of
    /// silently producing infinity.
    pub max_exponent: f64,
}

impl Default for UnhappinessConfig {
    fn default() -> Self {
        UnhappinessConfig {
            exponent_in_seconds: true,
            max_exponent: 700.0,
        }
    }
}

impl UnhappinessConfig {
    pub fn exponent_arg(&self, run_len: i64, delta: f64) -> f64 {
        if self.exponent_in_seconds {
            run_len as f64 * delta
        } else {
            run_len as f64
        }
    }

    pub fn check_arg(&self, arg: f64) -> Result<()> {
        if arg > self.max_exponent {
            return Err(Error::ExponentOverflow {
                arg,
                bound: self.max_exponent,
            });
        }
        Ok(())
    }
}

/// Red-run structure of one stage's green/red sequence.
///
/// `h`, `f`, and `q` are intermediate marker sequences kept for inspection;
/// the run accounting itself is carried by `phi`, which is the length of the
/// maximal red run ending at interval `k` when interval `k` is the last red
/// interval of that run (the next interval is green, or the horizon ends),
/// and zero everywhere else.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedRunProfile {
    /// Switch markers, indexed 0..=N: `h[k] = k` when the signal differs
    /// between intervals `k` and `k+1`, with `h[0] = 0` and `h[N] = N`.
    pub h: Vec<i64>,
    /// Red-to-green transition flags, indexed 1..=N at `f[k-1]`; the last
    /// entry flags a horizon ending in red.
    pub f: Vec<i64>,
    /// Greedy run-length differences of `h`, indexed 0..=N.
    pub q: Vec<i64>,
    /// Red-run length at run ends, indexed 1..=N at `phi[k-1]`.
    pub phi: Vec<i64>,
}

/// Compute the red-run profile of one stage from its green indicators.
pub fn red_run_profile(greens: &[bool]) -> RedRunProfile {
    let n = greens.len();
    let theta = |k: usize| greens[k - 1] as i64; // 1-based

    let mut h = vec![0i64; n + 1];
    for k in 1..n {
        h[k] = if theta(k) != theta(k + 1) { k as i64 } else { 0 };
    }
    h[n] = n as i64;

    let mut f = vec![0i64; n];
    for k in 1..n {
        f[k - 1] = (theta(k + 1) - theta(k)).max(0);
    }
    f[n - 1] = 1 - theta(n);

    let mut q = vec![0i64; n + 1];
    let mut q_sum = 0i64;
    for k in 1..=n {
        q[k] = if h[k - 1] != 0 {
            (h[k] - h[k - 1]).max(0)
        } else {
            (h[k] - h[k - 1] - q_sum).max(0)
        };
        q_sum += q[k];
    }

    let mut phi = vec![0i64; n];
    let mut run = 0i64;
    for k in 1..=n {
        if theta(k) == 0 {
            run += 1;
            let ends = k == n || theta(k + 1) == 1;
            if ends {
                phi[k - 1] = run;
                run = 0;
            }
        } else {
            run = 0;
        }
    }

    RedRunProfile { h, f, q, phi }
}

/// Blocked-volume aggregates of one stage at one junction.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockedAverages {
    /// Total blocked volume attributed to the run ending at each interval.
    pub p_tilde: Vec<[f64; NUM_CORNERS]>,
    /// `p_tilde` averaged over the run length.
    pub p_bar: Vec<[f64; NUM_CORNERS]>,
}

/// Average blocked volumes per red run.  `greens[t]` is the profiled
/// stage's signal, `volumes[t][i]` the corner volume at the start of
/// interval `t+1`, and `eta(t, i)` the share of corner `i` diverted towards
/// the profiled stage during interval `t+1`.
///
/// The computation follows a running-difference form: at the last interval
/// of each red run, the cumulative blocked volume minus everything already
/// attributed to earlier runs is assigned to this run, then averaged over
/// the run length.  Summed over the horizon this attributes every blocked
/// pedestrian-interval to exactly one run.
pub fn blocked_averages(
    profile: &RedRunProfile,
    greens: &[bool],
    volumes: &[[i64; NUM_CORNERS]],
    eta: impl Fn(usize, usize) -> f64,
) -> BlockedAverages {
    let n = profile.phi.len();
    debug_assert_eq!(greens.len(), n);
    let mut cumulative = [0.0f64; NUM_CORNERS];
    let mut attributed = [0.0f64; NUM_CORNERS];
    let mut p_tilde = vec![[0.0; NUM_CORNERS]; n];
    let mut p_bar = vec![[0.0; NUM_CORNERS]; n];

    for t in 0..n {
        if !greens[t] {
            for i in 0..NUM_CORNERS {
                cumulative[i] += volumes[t][i] as f64 * eta(t, i);
            }
        }
        if profile.phi[t] > 0 {
            for i in 0..NUM_CORNERS {
                p_tilde[t][i] = cumulative[i] - attributed[i];
                attributed[i] = cumulative[i];
                p_bar[t][i] = p_tilde[t][i] / profile.phi[t] as f64;
            }
        }
    }

    BlockedAverages { p_tilde, p_bar }
}

/// Unhappiness contribution of one junction.
pub fn junction_unhappiness(
    demand: &JunctionDemand,
    trace: &PedJunctionTrace,
    delta: f64,
    cfg: &UnhappinessConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for o in Stage::ALL {
        let greens: Vec<bool> = trace.stages.iter().map(|&s| s == o).collect();
        let profile = red_run_profile(&greens);
        let averages =
            blocked_averages(&profile, &greens, &trace.volumes, |t, i| demand.eta(t, i, o));
        for t in 0..trace.stages.len() {
            let phi = profile.phi[t];
            if phi == 0 {
                continue;
            }
            let arg = cfg.exponent_arg(phi, delta);
            cfg.check_arg(arg)?;
            let weight = arg.exp();
            for i in 0..NUM_CORNERS {
                total += averages.p_bar[t][i] * weight;
            }
        }
    }
    Ok(total)
}

/// Total unhappiness of a pedestrian trace.
pub fn unhappiness_cost(
    scenario: &PedScenario,
    trace: &PedTrace,
    cfg: &UnhappinessConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (j, jtrace) in trace.junctions.iter().enumerate() {
        total += junction_unhappiness(&scenario.junctions[j], jtrace, trace.delta, cfg)?;
    }
    Ok(total)
}
