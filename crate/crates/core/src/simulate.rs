//! Monte-Carlo sampling of plays, for sanity checks against exact payoffs.

use num_bigint::BigUint;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Dist, GameSystem};
use crate::strategy::{advance, ProductTransducer};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimReport {
    pub plays: Vec<Vec<usize>>,
    /// Per agent, number of sampled plays that visit its goal.
    pub hits: Vec<usize>,
}

impl SimReport {
    pub fn to_text(&self, g: &GameSystem) -> String {
        let count = self.plays.len();
        if count == 0 {
            return String::new();
        }
        let mut out = format!("samples={count}\n");
        for (i, h) in self.hits.iter().enumerate() {
            out.push_str(&format!(
                "agent={} hits={} frequency={:.6}\n",
                i + 1,
                h,
                *h as f64 / count as f64
            ));
        }
        let _ = g;
        out
    }
}

fn below_pow2(rng: &mut impl Rng, bits: u32) -> BigUint {
    let nbytes = (bits as usize).div_ceil(8);
    let mut bytes = vec![0u8; nbytes];
    rng.fill(bytes.as_mut_slice());
    BigUint::from_bytes_le(&bytes) % (BigUint::from(1u8) << bits as usize)
}

fn sample(rng: &mut impl Rng, d: &Dist, lbits: u32) -> usize {
    let u = below_pow2(rng, lbits);
    let mut acc = BigUint::zero();
    for (x, p) in d {
        acc += p.numerator();
        if u < acc {
            return *x;
        }
    }
    unreachable!("distribution sums to one")
}

/// Samples `count` independent plays under the profile.
pub fn simulate(
    g: &GameSystem,
    pt: &ProductTransducer,
    seed: u64,
    count: usize,
) -> Result<SimReport> {
    let horizon = g.horizon_within(usize::MAX)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plays = Vec::with_capacity(count);
    let mut hits = vec![0; g.num_agents()];
    for _ in 0..count {
        let mut v = g.init;
        let mut s = pt.initial();
        let mut play = vec![v];
        for _ in 1..horizon {
            let theta: Vec<usize> = g.playing[v]
                .iter()
                .map(|&i| sample(&mut rng, pt.components[i].dist(s.0[i], v), g.lbits))
                .collect();
            let row = g
                .row(v, &theta)
                .expect("validated games define every action tuple");
            let next = sample(&mut rng, row, g.lbits);
            s = advance(pt, &s, v);
            v = next;
            play.push(v);
        }
        for (i, h) in hits.iter_mut().enumerate() {
            if play.iter().any(|&x| g.is_goal(i, x)) {
                *h += 1;
            }
        }
        plays.push(play);
    }
    Ok(SimReport { plays, hits })
}
