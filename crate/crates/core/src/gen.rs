//! Seeded random instances for property suites.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{AgentSpec, Dist, DyadicProb, GameSystem};
use crate::strategy::{Output, ProductTransducer, StrategyTransducer};

/// Upper limits for generated instances; every dimension is drawn from `1..=max`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_states: usize,
    pub max_agents: usize,
    pub max_bound: usize,
    pub max_actions: usize,
    pub max_horizon: usize,
    pub max_tstates: usize,
    pub max_lbits: u32,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_states: 5,
            max_agents: 3,
            max_bound: 2,
            max_actions: 2,
            max_horizon: 5,
            max_tstates: 3,
            max_lbits: 3,
        }
    }
}

/// Random distribution over `0..n` on the `2^lbits` grid, summing exactly to one.
///
/// Integer weights are scaled to `2^lbits` and the leftover units go to the
/// largest remainders (ties to the lower index).
pub fn random_dyadic(rng: &mut impl Rng, n: usize, lbits: u32) -> Dist {
    let total: u64 = 1 << lbits;
    let weights: Vec<u64> = (0..n).map(|_| rng.gen_range(0..4)).collect();
    let w_sum: u64 = weights.iter().sum();
    if w_sum == 0 {
        let pick = rng.gen_range(0..n);
        return vec![(pick, DyadicProb::one(lbits))];
    }
    let mut shares: Vec<u64> = weights.iter().map(|w| w * total / w_sum).collect();
    let mut order: Vec<(u64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(j, w)| (w * total % w_sum, j))
        .collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let leftover = total - shares.iter().sum::<u64>();
    for &(_, j) in order.iter().take(leftover as usize) {
        shares[j] += 1;
    }
    shares
        .into_iter()
        .enumerate()
        .filter(|(_, s)| *s > 0)
        .map(|(j, s)| {
            (
                j,
                DyadicProb::from_u64(s, lbits).expect("share within range"),
            )
        })
        .collect()
}

/// A valid game and profile, fully determined by `seed`.
pub fn gen_random_instance(seed: u64, limits: &Limits) -> (GameSystem, ProductTransducer) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = rng.gen_range(1..=limits.max_states);
    let k = rng.gen_range(1..=limits.max_agents);
    let bound = rng.gen_range(1..=limits.max_bound.min(k));
    let lbits = rng.gen_range(1..=limits.max_lbits);
    let horizon = rng.gen_range(1..=limits.max_horizon);

    let states: Vec<String> = (0..nv).map(|v| format!("v{v}")).collect();
    let agents: Vec<AgentSpec> = (0..k)
        .map(|_| {
            let na = rng.gen_range(1..=limits.max_actions);
            AgentSpec {
                actions: (0..na).map(|a| format!("a{a}")).collect(),
                goal: (0..nv).map(|_| rng.gen_bool(0.3)).collect(),
            }
        })
        .collect();
    let all_agents: Vec<usize> = (0..k).collect();
    let playing: Vec<Vec<usize>> = (0..nv)
        .map(|_| {
            let m = rng.gen_range(0..=bound);
            let mut p: Vec<usize> = all_agents.choose_multiple(&mut rng, m).copied().collect();
            p.sort_unstable();
            p
        })
        .collect();

    let mut g = GameSystem {
        states,
        init: rng.gen_range(0..nv),
        agents,
        playing,
        trans: Vec::new(),
        lbits,
        bound,
        horizon: BigUint::from(horizon),
    };
    g.trans = (0..nv)
        .map(|v| {
            g.action_tuples(v)
                .into_iter()
                .map(|theta| (theta, random_dyadic(&mut rng, nv, lbits)))
                .collect::<BTreeMap<_, _>>()
        })
        .collect();

    let components: Vec<StrategyTransducer> = (0..k)
        .map(|i| {
            let ns = rng.gen_range(1..=limits.max_tstates);
            let na = g.agents[i].actions.len();
            let step = (0..ns)
                .map(|_| (0..nv).map(|_| rng.gen_range(0..ns)).collect())
                .collect();
            let output = (0..ns)
                .map(|_| {
                    (0..nv)
                        .map(|v| {
                            if g.playing[v].contains(&i) {
                                Output::Dist(random_dyadic(&mut rng, na, lbits))
                            } else {
                                Output::Bot
                            }
                        })
                        .collect()
                })
                .collect();
            StrategyTransducer {
                agent: i,
                lbits,
                tstates: (0..ns).map(|s| format!("s{s}")).collect(),
                init: rng.gen_range(0..ns),
                step,
                output,
            }
        })
        .collect();
    let pt = ProductTransducer::new(&g, components).expect("generated profile is valid");
    (g, pt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dist_sum, validate_game};

    #[test]
    fn deterministic_in_seed() {
        for seed in 0..20 {
            assert_eq!(
                gen_random_instance(seed, &Limits::default()),
                gen_random_instance(seed, &Limits::default())
            );
        }
    }

    #[test]
    fn generated_instances_validate() {
        for seed in 0..200 {
            let (g, _) = gen_random_instance(seed, &Limits::default());
            assert!(validate_game(&g).is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn largest_remainder_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for lbits in 1..6 {
            for n in 1..6 {
                let d = random_dyadic(&mut rng, n, lbits);
                assert_eq!(dist_sum(&d), BigUint::from(1u64 << lbits));
            }
        }
    }
}
