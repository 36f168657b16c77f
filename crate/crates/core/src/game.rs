//! Microgrid auction: payoffs for each house strategy against the
//! distribution side, Pareto selection, and feedback multipliers.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knapsack::Strategy;
use crate::num::{exact_int, Energy, Exact};
use crate::scenario::Device;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error("house has zero total demand, utility per energy unit is undefined")]
    UndefinedGamma,
}

/// Routing verdict for one microgrid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeedbackMessage {
    ConsumeLess,
    Fits,
    ConsumeMore,
}

impl FeedbackMessage {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackMessage::ConsumeLess => "CONSUME_LESS",
            FeedbackMessage::Fits => "FITS",
            FeedbackMessage::ConsumeMore => "CONSUME_MORE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyPayoff {
    pub strategy_index: usize,
    pub energy: Energy,
    /// Prosumer payoff.
    pub l: Exact,
    /// Distribution payoff.
    pub r: Exact,
    /// Product of the feedback factors applied so far, kept unreduced as
    /// (numerator, denominator) so repeated penalties stay cheap.
    scale: (BigInt, BigInt),
    /// Number of `(1 - epsilon)` factors applied so far.
    pub penalties: u32,
}

impl StrategyPayoff {
    pub fn new(strategy_index: usize, energy: Energy, l: Exact, r: Exact) -> Self {
        StrategyPayoff {
            strategy_index,
            energy,
            l,
            r,
            scale: (BigInt::one(), BigInt::one()),
            penalties: 0,
        }
    }

    /// Accumulated feedback multiplier.
    pub fn scale(&self) -> Exact {
        Exact::new(self.scale.0.clone(), self.scale.1.clone())
    }

    pub fn adjusted_l(&self) -> Exact {
        &self.l * self.scale()
    }

    pub fn adjusted_r(&self) -> Exact {
        &self.r * self.scale()
    }

    pub fn adjusted(&self) -> (Exact, Exact) {
        let s = self.scale();
        (&self.l * &s, &self.r * s)
    }

    fn penalize(&mut self, factor: &Rational64) {
        self.scale.0 *= *factor.numer();
        self.scale.1 *= *factor.denom();
        self.penalties += 1;
    }
}

fn divisor(p: i64) -> i64 {
    p.max(1)
}

/// `sum v_i * w_i / max(p_i, 1)` over the strategy's devices.
pub fn house_payoff_l(s: &Strategy, devices: &[Device], values: &[i64]) -> Exact {
    s.devices
        .iter()
        .map(|&i| {
            Exact::new(
                (values[i] * devices[i].w).into(),
                divisor(devices[i].p).into(),
            )
        })
        .fold(Exact::zero(), |acc, x| acc + x)
}

/// Consumption-weighted mean device value over the whole house.
pub fn house_gamma(devices: &[Device], values: &[i64]) -> Result<Exact, GameError> {
    let total_w: i64 = devices.iter().map(|d| d.w).sum();
    if total_w == 0 {
        return Err(GameError::UndefinedGamma);
    }
    let weighted: i64 = devices.iter().zip(values).map(|(d, v)| d.w * v).sum();
    Ok(Exact::new(weighted.into(), total_w.into()))
}

/// `sum (v_i / max(p_i, 1) - gamma) * w_i` over the strategy's devices.
pub fn distribution_payoff_r(
    s: &Strategy,
    gamma: &Exact,
    devices: &[Device],
    values: &[i64],
) -> Exact {
    s.devices
        .iter()
        .map(|&i| {
            let d = &devices[i];
            (Exact::new(values[i].into(), divisor(d.p).into()) - gamma) * exact_int(d.w)
        })
        .fold(Exact::zero(), |acc, x| acc + x)
}

/// Raw payoffs of every strategy of a house. A house with no demand at all
/// uses gamma = 0; every one of its payoffs is then 0 on the `r` side anyway.
pub fn house_payoffs(
    devices: &[Device],
    values: &[i64],
    strategies: &[Strategy],
) -> Vec<StrategyPayoff> {
    let gamma = house_gamma(devices, values).unwrap_or_else(|_| Exact::zero());
    strategies
        .iter()
        .enumerate()
        .map(|(k, s)| {
            StrategyPayoff::new(
                k,
                s.energy,
                house_payoff_l(s, devices, values),
                distribution_payoff_r(s, &gamma, devices, values),
            )
        })
        .collect()
}

/// Indices of the pairs that no other pair strictly dominates, ascending.
pub fn pareto_front<T: Ord>(payoffs: &[(T, T)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..payoffs.len()).collect();
    // l descending, then r descending
    order.sort_by(|&a, &b| {
        payoffs[b]
            .0
            .cmp(&payoffs[a].0)
            .then(payoffs[b].1.cmp(&payoffs[a].1))
    });
    let mut front = Vec::new();
    let mut best_r: Option<&T> = None; // best r among strictly larger l
    let mut k = 0;
    while k < order.len() {
        let l = &payoffs[order[k]].0;
        let group_end = order[k..]
            .iter()
            .position(|&i| &payoffs[i].0 != l)
            .map_or(order.len(), |p| k + p);
        let group_max = &payoffs[order[k]].1;
        for &i in &order[k..group_end] {
            let r = &payoffs[i].1;
            let beaten_by_larger_l = best_r.is_some_and(|b| b >= r);
            if r == group_max && !beaten_by_larger_l {
                front.push(i);
            }
        }
        if best_r.is_none_or(|b| group_max > b) {
            best_r = Some(group_max);
        }
        k = group_end;
    }
    front.sort_unstable();
    front
}

/// Integers ordered exactly like the adjusted payoffs of one house: every
/// value is multiplied by one positive common denominator.
fn adjusted_keys(payoffs: &[StrategyPayoff]) -> Vec<(BigInt, BigInt)> {
    // Denominators usually divide one another (powers of one factor), so
    // try the cheap divisibility checks before a full lcm.
    fn lcm(acc: BigInt, d: &BigInt) -> BigInt {
        if (&acc % d).is_zero() {
            acc
        } else if (d % &acc).is_zero() {
            d.clone()
        } else {
            acc.lcm(d)
        }
    }
    let raw_den = payoffs.iter().fold(BigInt::one(), |acc, p| {
        lcm(lcm(acc, p.l.denom()), p.r.denom())
    });
    let scale_den = payoffs
        .iter()
        .fold(BigInt::one(), |acc, p| lcm(acc, &p.scale.1));
    payoffs
        .iter()
        .map(|p| {
            let s = &p.scale.0 * (&scale_den / &p.scale.1);
            let key = |x: &Exact| x.numer() * (&raw_den / x.denom()) * &s;
            (key(&p.l), key(&p.r))
        })
        .collect()
}

fn select_on_keys(keys: &[(BigInt, BigInt)], payoffs: &[StrategyPayoff], front: &[usize]) -> usize {
    assert!(
        !front.is_empty(),
        "Pareto front is never empty for a nonempty strategy list"
    );
    let score = |i: usize| &keys[i].0 + &keys[i].1;
    let mut best = front[0];
    let mut best_score = score(best);
    for &i in &front[1..] {
        let s = score(i);
        let better = match s.cmp(&best_score) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (payoffs[i].energy, i) < (payoffs[best].energy, best),
        };
        if better {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Picks the front member with the largest `l + r` on adjusted payoffs;
/// ties go to the smaller energy, then the lower index.
pub fn select_strategy(payoffs: &[StrategyPayoff], front: &[usize]) -> usize {
    select_on_keys(&adjusted_keys(payoffs), payoffs, front)
}

/// Front and selection on a house's adjusted payoffs.
pub fn choose(payoffs: &[StrategyPayoff]) -> usize {
    let keys = adjusted_keys(payoffs);
    select_on_keys(&keys, payoffs, &pareto_front(&keys))
}

/// Applies one feedback message to every house of a microgrid.
///
/// `ConsumeLess` multiplies both adjusted payoffs of every strategy whose
/// energy is at least the chosen one by `1 - epsilon`; `ConsumeMore` does
/// the same to every strategy whose energy is at most the chosen one.
pub fn apply_feedback(
    payoffs: &mut [Vec<StrategyPayoff>],
    chosen: &[usize],
    msg: FeedbackMessage,
    epsilon: &Rational64,
) {
    assert_eq!(payoffs.len(), chosen.len());
    if msg == FeedbackMessage::Fits {
        return;
    }
    let factor = Rational64::one() - epsilon;
    if factor.is_one() {
        return;
    }
    for (house, &c) in payoffs.iter_mut().zip(chosen) {
        let pivot = house[c].energy;
        for p in house.iter_mut() {
            let hit = match msg {
                FeedbackMessage::ConsumeLess => p.energy >= pivot,
                FeedbackMessage::ConsumeMore => p.energy <= pivot,
                FeedbackMessage::Fits => false,
            };
            if hit {
                p.penalize(&factor);
            }
        }
    }
}

/// Microgrid bid: total energy of the chosen strategies.
pub fn microgrid_bid<I: IntoIterator<Item = Energy>>(energies: I) -> Energy {
    energies.into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::knapsack::{generate_strategies, house_values};

    fn q(n: i64, d: i64) -> Exact {
        Exact::new(BigInt::from(n), BigInt::from(d))
    }

    fn payoffs_of(house: usize) -> Vec<StrategyPayoff> {
        let h = &fixtures::three_houses().microgrids[0].houses[house];
        let values = house_values(&h.devices);
        house_payoffs(&h.devices, &values, &generate_strategies(h))
    }

    #[test]
    fn prosumer_payoff_anchors() {
        let p = payoffs_of(0);
        assert_eq!(p[0].l, exact_int(330));
        assert_eq!(p[1].l, exact_int(410));
        assert_eq!(p[2].l, q(1195, 2));
        assert_eq!(p[3].l, q(1395, 2));
        assert_eq!(payoffs_of(1)[1].l, exact_int(116));
    }

    #[test]
    fn gamma_is_weighted_mean() {
        let t = fixtures::three_houses();
        let h1 = &t.microgrids[0].houses[0];
        assert_eq!(
            house_gamma(&h1.devices, &house_values(&h1.devices)),
            Ok(q(79, 2))
        );
        let h2 = &t.microgrids[0].houses[1];
        assert_eq!(
            house_gamma(&h2.devices, &house_values(&h2.devices)),
            Ok(q(169, 16))
        );
        let single = [Device::managed("a", 2, 0)];
        assert_eq!(house_gamma(&single, &[5]), Ok(exact_int(5)));
        let idle = [Device::managed("a", 0, 0)];
        assert_eq!(house_gamma(&idle, &[5]), Err(GameError::UndefinedGamma));
    }

    #[test]
    fn distribution_payoff_examples() {
        let p = payoffs_of(0);
        assert_eq!(p[0].r, exact_int(172));
        assert_eq!(p[3].r, q(-975, 2));
        let empty = Strategy {
            threshold: 0,
            devices: vec![],
            device_ids: vec![],
            energy: 0,
            value: 0,
        };
        assert!(distribution_payoff_r(&empty, &exact_int(3), &[], &[]).is_zero());
    }

    #[test]
    fn front_examples() {
        let pairs = vec![
            (exact_int(330), exact_int(172)),
            (exact_int(410), q(425, 2)),
            (q(1195, 2), q(405, 2)),
            (q(1395, 2), q(-975, 2)),
        ];
        assert_eq!(pareto_front(&pairs), vec![1, 2, 3]);
        assert_eq!(pareto_front(&pairs[..1]), vec![0]);
        let same = vec![(exact_int(1), exact_int(2)), (exact_int(1), exact_int(2))];
        assert_eq!(pareto_front(&same), vec![0, 1]);
    }

    #[test]
    fn selections_match_bold_entries() {
        assert_eq!(choose(&payoffs_of(0)), 2);
        assert_eq!(choose(&payoffs_of(1)), 1);
        assert_eq!(choose(&payoffs_of(2)), 0);
    }

    #[test]
    fn feedback_examples() {
        let eps = Rational64::new(1, 20);
        let base = vec![payoffs_of(0)];
        let mut fits = base.clone();
        apply_feedback(&mut fits, &[2], FeedbackMessage::Fits, &eps);
        assert_eq!(fits, base);

        let mut less = base.clone();
        apply_feedback(&mut less, &[2], FeedbackMessage::ConsumeLess, &eps);
        assert_eq!(less[0][3].adjusted_l(), q(662625, 1000));
        assert_eq!(less[0][3].adjusted_r(), q(-463125, 1000));
        assert_eq!(less[0][3].l, q(1395, 2), "raw payoff retained");
        assert_eq!(less[0][1], base[0][1], "cheaper strategies untouched");

        let mut tiny = base.clone();
        apply_feedback(
            &mut tiny,
            &[2],
            FeedbackMessage::ConsumeLess,
            &Rational64::new(0, 1),
        );
        assert_eq!(tiny, base);

        let mut more = base.clone();
        apply_feedback(&mut more, &[2], FeedbackMessage::ConsumeMore, &eps);
        assert_eq!(more[0][3], base[0][3]);
        assert_eq!(more[0][0].penalties, 1);
    }

    #[test]
    fn bids_sum_choices() {
        assert_eq!(microgrid_bid([10, 7, 12]), 29);
        assert_eq!(microgrid_bid([]), 0);
        assert_eq!(microgrid_bid([5]), 5);
    }
}
