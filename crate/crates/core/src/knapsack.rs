//! Household scheduling: device values, the 0/1 knapsack table, selection
//! backtracking, consumption strategies and priority updates.

use rand::Rng;

use crate::num::Energy;
use crate::scenario::{Control, Device, House, PriorityPolicy};

/// Knapsack value of a device given the house-wide maximum demand and priority.
pub fn device_value(w: Energy, p: i64, w_max: Energy, p_max: i64) -> i64 {
    w_max * p_max - w * p + w
}

/// Values of every device in `devices`, using the house-level maxima.
pub fn house_values(devices: &[Device]) -> Vec<i64> {
    let w_max = devices.iter().map(|d| d.w).max().unwrap_or(0);
    let p_max = devices.iter().map(|d| d.p).max().unwrap_or(0);
    devices
        .iter()
        .map(|d| device_value(d.w, d.p, w_max, p_max))
        .collect()
}

/// `m[i][w]`: best value reachable with the first `i` devices and total
/// demand at most `w`, for `w` up to the house's full demand.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackTable {
    weights: Vec<Energy>,
    values: Vec<i64>,
    capacity: usize,
    m: Vec<i64>,
}

impl KnapsackTable {
    /// Builds the table for a house. Devices keep their declaration order.
    pub fn build(devices: &[Device]) -> Self {
        let weights: Vec<Energy> = devices.iter().map(|d| d.w).collect();
        Self::from_items(weights, house_values(devices))
    }

    pub fn from_items(weights: Vec<Energy>, values: Vec<i64>) -> Self {
        assert_eq!(weights.len(), values.len());
        assert!(
            weights.iter().all(|&w| w >= 0),
            "device demands must be nonnegative"
        );
        let capacity = weights.iter().sum::<Energy>() as usize;
        let n = weights.len();
        let stride = capacity + 1;
        let mut m = vec![0i64; (n + 1) * stride];
        for i in 1..=n {
            let wi = weights[i - 1] as usize;
            let vi = values[i - 1];
            let (prev, cur) = m.split_at_mut(i * stride);
            let prev = &prev[(i - 1) * stride..];
            let cur = &mut cur[..stride];
            for w in 0..=capacity {
                cur[w] = if wi > w {
                    prev[w]
                } else {
                    prev[w].max(prev[w - wi] + vi)
                };
            }
        }
        KnapsackTable {
            weights,
            values,
            capacity,
            m,
        }
    }

    pub fn items(&self) -> usize {
        self.weights.len()
    }

    /// Total demand of all devices (the table's widest column).
    pub fn capacity(&self) -> Energy {
        self.capacity as Energy
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn get(&self, i: usize, w: usize) -> i64 {
        assert!(i <= self.items() && w <= self.capacity);
        self.m[i * (self.capacity + 1) + w]
    }

    /// Best value at capacity `w`, using every device.
    pub fn best(&self, w: Energy) -> i64 {
        self.get(self.items(), w.clamp(0, self.capacity as Energy) as usize)
    }

    /// Walks the table from the last device down: device `i` is in the
    /// solution exactly when `m[i][w]` differs from `m[i-1][w]`. Returns
    /// positions in declaration order.
    pub fn backtrack(&self, target: Energy) -> Vec<usize> {
        let mut w = target.clamp(0, self.capacity as Energy) as usize;
        let mut chosen = Vec::new();
        for i in (1..=self.items()).rev() {
            if self.get(i, w) != self.get(i - 1, w) {
                chosen.push(i - 1);
                w -= self.weights[i - 1] as usize;
            }
        }
        chosen.reverse();
        chosen
    }
}

/// Device ids selected by [`KnapsackTable::backtrack`].
pub fn backtrack_selection(
    table: &KnapsackTable,
    devices: &[Device],
    target: Energy,
) -> Vec<String> {
    table
        .backtrack(target)
        .into_iter()
        .map(|i| devices[i].id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy {
    /// Priority of the last device admitted into this strategy.
    pub threshold: i64,
    /// Positions of the member devices in the house, ascending.
    pub devices: Vec<usize>,
    pub device_ids: Vec<String>,
    pub energy: Energy,
    pub value: i64,
}

/// Consumption strategies for a house, from most to least frugal.
///
/// The first strategy holds every device at the lowest priority present
/// (normally the must-run devices at priority 0). Each following strategy
/// admits one more device, taking devices by ascending priority and then by
/// declaration order, until the whole house is on.
pub fn generate_strategies(house: &House) -> Vec<Strategy> {
    strategies_for(&house.devices)
}

pub fn strategies_for(devices: &[Device]) -> Vec<Strategy> {
    if devices.is_empty() {
        return Vec::new();
    }
    let values = house_values(devices);
    let mut order: Vec<usize> = (0..devices.len()).collect();
    order.sort_by_key(|&i| (devices[i].p, i));
    let base_p = devices[order[0]].p;
    let base_len = order
        .iter()
        .take_while(|&&i| devices[i].p == base_p)
        .count();

    let make = |members: &[usize]| {
        let mut idx = members.to_vec();
        idx.sort_unstable();
        let threshold = members
            .iter()
            .map(|&i| devices[i].p)
            .max()
            .unwrap_or(base_p);
        Strategy {
            threshold,
            device_ids: idx.iter().map(|&i| devices[i].id.clone()).collect(),
            energy: idx.iter().map(|&i| devices[i].w).sum(),
            value: idx.iter().map(|&i| values[i]).sum(),
            devices: idx,
        }
    };

    (base_len..=order.len())
        .map(|k| make(&order[..k]))
        .collect()
}

/// Advances every device's priority to `iteration`. Direct-control devices
/// are pinned to 0; managed devices follow their policy. Only the `Random`
/// policy draws from `rng`, in device declaration order.
pub fn update_priorities<R: Rng + ?Sized>(house: &House, iteration: u64, rng: &mut R) -> House {
    let mut next = house.clone();
    for d in &mut next.devices {
        d.p = next_priority(d, iteration, rng);
    }
    next
}

fn next_priority<R: Rng + ?Sized>(d: &Device, iteration: u64, rng: &mut R) -> i64 {
    if d.control == Control::Direct {
        return 0;
    }
    match &d.policy {
        PriorityPolicy::Static => d.p,
        PriorityPolicy::Cyclic {
            period,
            levels,
            phase,
        } => {
            let step = (iteration + phase) / (*period).max(1);
            levels[(step % levels.len() as u64) as usize]
        }
        PriorityPolicy::Deadline { t_end, p0 } => deadline_priority(*t_end, *p0, iteration),
        PriorityPolicy::Random { max, rate } => {
            if rng.random_bool(*rate) {
                rng.random_range(0..=*max)
            } else {
                d.p
            }
        }
    }
}

/// `ceil(p0 * (t_end - t) / t_end)`, reaching 0 at the deadline.
fn deadline_priority(t_end: u64, p0: i64, t: u64) -> i64 {
    if t >= t_end || t_end == 0 {
        return 0;
    }
    let remaining = (t_end - t) as i64;
    let t_end = t_end as i64;
    (p0 * remaining + t_end - 1) / t_end
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn house(idx: usize) -> House {
        fixtures::three_houses().microgrids[0].houses[idx].clone()
    }

    #[test]
    fn values_match_published_table() {
        assert_eq!(device_value(1, 0, 20, 4), 81);
        assert_eq!(device_value(4, 3, 5, 3), 7);
        assert_eq!(device_value(1, 0, 1, 0), 1);
        assert_eq!(house_values(&house(0).devices), vec![81, 80, 83, 75, 20]);
        assert_eq!(house_values(&house(1).devices), vec![16, 16, 15, 18, 7, 5]);
    }

    #[test]
    fn full_capacity_takes_everything() {
        let t1 = KnapsackTable::build(&house(0).devices);
        assert_eq!(t1.capacity(), 30);
        assert_eq!(t1.best(30), 339);
        let t2 = KnapsackTable::build(&house(1).devices);
        assert_eq!(t2.best(16), 77);
    }

    #[test]
    fn empty_table() {
        let t = KnapsackTable::build(&[]);
        assert_eq!(t.items(), 0);
        assert_eq!(t.capacity(), 0);
        assert_eq!(t.get(0, 0), 0);
        assert!(t.backtrack(0).is_empty());
    }

    #[test]
    fn backtrack_examples() {
        let h1 = house(0);
        let t1 = KnapsackTable::build(&h1.devices);
        assert_eq!(backtrack_selection(&t1, &h1.devices, 4), vec!["1", "3"]);
        assert_eq!(t1.best(4), 164);
        assert!(t1.backtrack(0).is_empty());
        let h2 = house(1);
        let t2 = KnapsackTable::build(&h2.devices);
        assert_eq!(
            backtrack_selection(&t2, &h2.devices, 5),
            vec!["1", "2", "4"]
        );
        assert_eq!(t2.best(5), 50);
    }

    #[test]
    fn zero_weight_device_is_taken_at_zero_target() {
        let t = KnapsackTable::from_items(vec![0, 3], vec![5, 9]);
        assert_eq!(t.backtrack(0), vec![0]);
        assert_eq!(t.backtrack(3), vec![0, 1]);
    }

    #[test]
    fn strategies_for_house_one() {
        let s = generate_strategies(&house(0));
        let got: Vec<(i64, i64)> = s.iter().map(|s| (s.energy, s.value)).collect();
        assert_eq!(got, vec![(4, 164), (5, 244), (10, 319), (30, 339)]);
        assert_eq!(s[0].device_ids, vec!["1", "3"]);
        assert_eq!(
            s.iter().map(|s| s.threshold).collect::<Vec<_>>(),
            vec![0, 1, 2, 4]
        );
    }

    #[test]
    fn all_zero_priority_house_has_one_strategy() {
        let s = generate_strategies(&house(2));
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].energy, s[0].value), (12, 12));
    }

    #[test]
    fn single_device_strategy() {
        let h = House {
            id: "h".into(),
            devices: vec![Device::managed("a", 2, 0)],
            bid_history: vec![],
        };
        let s = generate_strategies(&h);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].energy, s[0].value), (2, 2));
    }

    #[test]
    fn direct_devices_stay_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Device::direct("d", 3);
        d.policy = PriorityPolicy::Cyclic {
            period: 1,
            levels: vec![4, 5],
            phase: 0,
        };
        let h = House {
            id: "h".into(),
            devices: vec![d],
            bid_history: vec![],
        };
        for t in 0..5 {
            assert_eq!(update_priorities(&h, t, &mut rng).devices[0].p, 0);
        }
    }

    #[test]
    fn deadline_descends_linearly_to_zero() {
        // Oracle: p0 * (t_end - t) / t_end, rounded up.
        let expected = [5, 5, 4, 4, 3, 3, 2, 2, 1, 1, 0, 0];
        for (t, &want) in expected.iter().enumerate() {
            assert_eq!(deadline_priority(10, 5, t as u64), want, "t={t}");
        }
        let mut d = Device::managed("d", 1, 5);
        d.policy = PriorityPolicy::Deadline { t_end: 10, p0: 5 };
        let h = House {
            id: "h".into(),
            devices: vec![d],
            bid_history: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(update_priorities(&h, 10, &mut rng).devices[0].p, 0);
    }

    #[test]
    fn static_policy_keeps_priority() {
        let h = House {
            id: "h".into(),
            devices: vec![Device::managed("a", 1, 3)],
            bid_history: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in 0..20 {
            assert_eq!(update_priorities(&h, t, &mut rng).devices[0].p, 3);
        }
    }

    #[test]
    fn random_policy_is_seed_deterministic() {
        let mut d = Device::managed("a", 1, 0);
        d.policy = PriorityPolicy::Random { max: 6, rate: 0.5 };
        let h = House {
            id: "h".into(),
            devices: vec![d; 1],
            bid_history: vec![],
        };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cur = h.clone();
            (0..30)
                .map(|t| {
                    cur = update_priorities(&cur, t, &mut rng);
                    cur.devices[0].p
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert!(run(9).iter().all(|&p| (0..=6).contains(&p)));
    }

    #[test]
    fn cyclic_policy_steps_through_levels() {
        let mut d = Device::managed("a", 1, 0);
        d.policy = PriorityPolicy::Cyclic {
            period: 2,
            levels: vec![0, 3, 1],
            phase: 1,
        };
        let h = House {
            id: "h".into(),
            devices: vec![d],
            bid_history: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got: Vec<i64> = (0..7)
            .map(|t| update_priorities(&h, t, &mut rng).devices[0].p)
            .collect();
        assert_eq!(got, vec![0, 3, 3, 1, 1, 0, 0]);
    }
}
