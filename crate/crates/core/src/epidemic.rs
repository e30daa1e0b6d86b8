//! Infection mechanics and population metrics.
//!
//! Devices are Susceptible, Infected or Repaired. A susceptible device
//! gains one malware packet for every step it spends within radius `r` of
//! at least one infected device and becomes infected once it holds all `p`
//! packets. Each infection carries a response deadline of `t * p` steps,
//! `t` drawn from the counter-measure's interval; when it expires the device
//! is sanitised and stays immune for the rest of the run.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};

pub type DeviceId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpidemicState {
    Susceptible {
        packets_received: u32,
    },
    Infected {
        infected_at: u64,
        response_steps: u64,
    },
    Repaired,
}

impl EpidemicState {
    pub const FRESH: Self = Self::Susceptible {
        packets_received: 0,
    };

    pub fn is_susceptible(&self) -> bool {
        matches!(self, Self::Susceptible { .. })
    }

    pub fn is_infected(&self) -> bool {
        matches!(self, Self::Infected { .. })
    }

    pub fn is_repaired(&self) -> bool {
        matches!(self, Self::Repaired)
    }
}

/// Malware size in packets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Malware {
    packets: u32,
}

impl Malware {
    pub fn new(packets: u32) -> Result<Self> {
        if packets == 0 {
            return Err(Error::ConfigInvalid(
                "malware needs at least one packet".into(),
            ));
        }
        Ok(Self { packets })
    }

    pub fn packets(&self) -> u32 {
        self.packets
    }
}

/// Interval of response multipliers `t`, in full-malware transmissions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterMeasurePolicy {
    rt_min: u32,
    rt_max: u32,
}

impl CounterMeasurePolicy {
    pub fn new(rt_min: u32, rt_max: u32) -> Result<Self> {
        if rt_min == 0 || rt_min > rt_max {
            return Err(Error::ConfigInvalid(format!(
                "response interval [{rt_min}, {rt_max}] must satisfy 1 <= min <= max"
            )));
        }
        Ok(Self { rt_min, rt_max })
    }

    pub fn fixed(t: u32) -> Result<Self> {
        Self::new(t, t)
    }

    pub fn rt_min(&self) -> u32 {
        self.rt_min
    }

    pub fn rt_max(&self) -> u32 {
        self.rt_max
    }
}

/// Draws `t` uniformly from the policy interval and converts it to steps:
/// a device answering after `t` transmissions of a `p`-packet malware is
/// sanitised `t * p` steps after infection.
pub fn draw_response_steps<R: Rng + ?Sized>(
    policy: &CounterMeasurePolicy,
    malware: &Malware,
    rng: &mut R,
) -> u64 {
    let t = rng.random_range(u64::from(policy.rt_min)..=u64::from(policy.rt_max));
    t * u64::from(malware.packets)
}

/// Infected–susceptible contacts at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct ProximityGraph {
    /// `(infected, susceptible)` pairs sorted lexicographically.
    pub edges: Vec<(DeviceId, DeviceId)>,
    pub radius: f64,
}

impl ProximityGraph {
    /// Susceptible devices with at least one infected neighbour, ascending.
    pub fn exposed(&self) -> Vec<DeviceId> {
        let mut s: Vec<DeviceId> = self.edges.iter().map(|&(_, s)| s).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Links every infected device to every susceptible one whose cell centre is
/// strictly closer than `radius`. Devices are bucketed on a square grid of
/// side `ceil(radius)` so only neighbouring buckets are compared.
pub fn build_proximity_graph(
    positions: &[(usize, usize)],
    states: &[EpidemicState],
    radius: f64,
) -> ProximityGraph {
    assert_eq!(positions.len(), states.len());
    let bucket = radius.ceil().max(1.0) as i64;
    let key = |(r, c): (usize, usize)| (r as i64 / bucket, c as i64 / bucket);
    let r2 = radius * radius;

    let mut buckets: HashMap<(i64, i64), Vec<DeviceId>> = HashMap::new();
    for (id, state) in states.iter().enumerate() {
        if state.is_susceptible() {
            buckets.entry(key(positions[id])).or_default().push(id);
        }
    }

    let mut edges = Vec::new();
    for (i, state) in states.iter().enumerate() {
        if !state.is_infected() {
            continue;
        }
        let (br, bc) = key(positions[i]);
        let (ir, ic) = positions[i];
        for dr in -1..=1 {
            for dc in -1..=1 {
                let Some(cands) = buckets.get(&(br + dr, bc + dc)) else {
                    continue;
                };
                for &s in cands {
                    let (sr, sc) = positions[s];
                    let dy = ir as f64 - sr as f64;
                    let dx = ic as f64 - sc as f64;
                    if dy * dy + dx * dx < r2 {
                        edges.push((i, s));
                    }
                }
            }
        }
    }
    edges.sort_unstable();
    ProximityGraph { edges, radius }
}

/// Hands one packet to every exposed susceptible device. Devices completing
/// the malware become infected at `step` with a deadline from
/// `response_steps(device)`. With `reset_on_disconnect`, susceptible devices
/// out of range lose their partial progress. Returns the newly infected ids
/// in ascending order.
pub fn transmit(
    graph: &ProximityGraph,
    states: &mut [EpidemicState],
    malware: &Malware,
    step: u64,
    reset_on_disconnect: bool,
    mut response_steps: impl FnMut(DeviceId) -> u64,
) -> Vec<DeviceId> {
    let exposed = graph.exposed();
    if reset_on_disconnect {
        for (id, state) in states.iter_mut().enumerate() {
            if let EpidemicState::Susceptible { packets_received } = state {
                if *packets_received > 0 && exposed.binary_search(&id).is_err() {
                    *packets_received = 0;
                }
            }
        }
    }

    let mut infected = Vec::new();
    for id in exposed {
        if let EpidemicState::Susceptible { packets_received } = states[id] {
            let got = packets_received + 1;
            states[id] = if got >= malware.packets {
                infected.push(id);
                EpidemicState::Infected {
                    infected_at: step,
                    response_steps: response_steps(id),
                }
            } else {
                EpidemicState::Susceptible {
                    packets_received: got,
                }
            };
        }
    }
    infected
}

/// Sanitises every infected device whose deadline has been reached at `step`.
/// Returns the repaired ids in ascending order.
pub fn apply_countermeasure(states: &mut [EpidemicState], step: u64) -> Vec<DeviceId> {
    let mut repaired = Vec::new();
    for (id, state) in states.iter_mut().enumerate() {
        if let EpidemicState::Infected {
            infected_at,
            response_steps,
        } = *state
        {
            if step.saturating_sub(infected_at) >= response_steps {
                *state = EpidemicState::Repaired;
                repaired.push(id);
            }
        }
    }
    repaired
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PopulationCounts {
    pub susceptible: usize,
    pub infected: usize,
    pub repaired: usize,
    pub cumulative_infected: usize,
}

impl PopulationCounts {
    /// Counts states; `cumulative_infected` is everything no longer susceptible.
    pub fn tally(states: &[EpidemicState]) -> Self {
        let mut c = Self::default();
        for s in states {
            match s {
                EpidemicState::Susceptible { .. } => c.susceptible += 1,
                EpidemicState::Infected { .. } => c.infected += 1,
                EpidemicState::Repaired => c.repaired += 1,
            }
        }
        c.cumulative_infected = c.infected + c.repaired;
        c
    }

    pub fn total(&self) -> usize {
        self.susceptible + self.infected + self.repaired
    }

    pub fn count(&self, state: StateKind) -> usize {
        match state {
            StateKind::Susceptible => self.susceptible,
            StateKind::Infected => self.infected,
            StateKind::Repaired => self.repaired,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateKind {
    Susceptible,
    Infected,
    Repaired,
}

/// Share of the population in `which`.
pub fn state_cover(counts: &PopulationCounts, which: StateKind) -> f64 {
    let total = counts.total();
    assert!(total > 0, "state cover of an empty population");
    counts.count(which) as f64 / total as f64
}

/// `a / (b + 1)`; `state_rate(|I|, |S|)` is the IS-rate.
pub fn state_rate(a: usize, b: usize) -> f64 {
    a as f64 / (b as f64 + 1.0)
}

/// Active devices (infected plus susceptible) per road vertex.
pub fn network_density(counts: &PopulationCounts, map_vertices: usize) -> f64 {
    assert!(map_vertices > 0, "density over an empty map");
    (counts.infected + counts.susceptible) as f64 / map_vertices as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    const S0: EpidemicState = EpidemicState::FRESH;
    const I0: EpidemicState = EpidemicState::Infected {
        infected_at: 0,
        response_steps: 1_000,
    };

    #[test]
    fn same_cell_contact() {
        let g = build_proximity_graph(&[(4, 4), (4, 4)], &[I0, S0], 1.0);
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn radius_is_strict_and_euclidean() {
        let g = build_proximity_graph(&[(0, 0), (0, 2)], &[I0, S0], 1.5);
        assert!(g.edges.is_empty());
        let g = build_proximity_graph(&[(0, 0), (1, 1)], &[I0, S0], 1.5);
        assert_eq!(g.edges, vec![(0, 1)]);
        let g = build_proximity_graph(&[(0, 0), (0, 2)], &[I0, S0], 2.0);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn only_infected_susceptible_pairs() {
        let states = [I0, I0, S0, EpidemicState::Repaired, S0];
        let g = build_proximity_graph(&[(0, 0); 5], &states, 1.0);
        assert_eq!(g.edges, vec![(0, 2), (0, 4), (1, 2), (1, 4)]);
        assert_eq!(g.exposed(), vec![2, 4]);
    }

    fn run_contacts(p: u32, in_range: &[bool], reset: bool) -> Option<u64> {
        let malware = Malware::new(p).unwrap();
        let mut states = [I0, S0];
        for (k, &near) in in_range.iter().enumerate() {
            let step = k as u64 + 1;
            let pos = if near {
                [(0, 0), (0, 1)]
            } else {
                [(0, 0), (0, 9)]
            };
            let g = build_proximity_graph(&pos, &states, 1.5);
            if !transmit(&g, &mut states, &malware, step, reset, |_| 6).is_empty() {
                return Some(step);
            }
        }
        None
    }

    #[test]
    fn packets_accumulate_in_range() {
        assert_eq!(run_contacts(3, &[true; 5], false), Some(3));
    }

    #[test]
    fn packet_progress_survives_disconnect() {
        assert_eq!(run_contacts(3, &[true, true, false, true], false), Some(4));
    }

    #[test]
    fn reset_on_disconnect_restarts_progress() {
        assert_eq!(
            run_contacts(3, &[true, true, false, true, true], true),
            None
        );
        assert_eq!(
            run_contacts(3, &[true, true, false, true, true, true], true),
            Some(6)
        );
    }

    #[test]
    fn one_packet_per_step_from_many_sources() {
        let malware = Malware::new(3).unwrap();
        let mut states = [I0, I0, S0];
        let pos = [(0, 0), (0, 2), (0, 1)];
        for step in 1..=3 {
            let g = build_proximity_graph(&pos, &states, 1.5);
            assert_eq!(g.edges.len(), 2);
            let newly = transmit(&g, &mut states, &malware, step, false, |_| 9);
            assert_eq!(newly.is_empty(), step < 3);
        }
        assert_eq!(
            states[2],
            EpidemicState::Infected {
                infected_at: 3,
                response_steps: 9
            }
        );
    }

    #[test]
    fn response_steps_fixed_and_unit() {
        let mut rng = stream(0, Purpose::Response, 0);
        let p = CounterMeasurePolicy::fixed(5).unwrap();
        assert_eq!(
            draw_response_steps(&p, &Malware::new(3).unwrap(), &mut rng),
            15
        );
        let p = CounterMeasurePolicy::fixed(1).unwrap();
        assert_eq!(
            draw_response_steps(&p, &Malware::new(1).unwrap(), &mut rng),
            1
        );
    }

    #[test]
    fn policy_and_malware_validation() {
        assert!(CounterMeasurePolicy::new(0, 3).is_err());
        assert!(CounterMeasurePolicy::new(4, 3).is_err());
        assert!(Malware::new(0).is_err());
    }

    #[test]
    fn countermeasure_deadline() {
        let infected = EpidemicState::Infected {
            infected_at: 0,
            response_steps: 15,
        };
        let mut states = [infected];
        assert!(apply_countermeasure(&mut states, 14).is_empty());
        assert_eq!(states[0], infected);
        assert_eq!(apply_countermeasure(&mut states, 15), vec![0]);
        assert_eq!(states[0], EpidemicState::Repaired);
    }

    #[test]
    fn repaired_devices_are_immune() {
        let malware = Malware::new(1).unwrap();
        let mut states = [I0, EpidemicState::Repaired];
        for step in 1..50 {
            let g = build_proximity_graph(&[(0, 0), (0, 0)], &states, 2.0);
            assert!(g.edges.is_empty());
            transmit(&g, &mut states, &malware, step, false, |_| 1);
            apply_countermeasure(&mut states[1..], step);
            assert_eq!(states[1], EpidemicState::Repaired);
        }
    }

    #[test]
    fn metrics() {
        let c = |s, i, r| PopulationCounts {
            susceptible: s,
            infected: i,
            repaired: r,
            cumulative_infected: i + r,
        };
        assert_eq!(state_cover(&c(80, 20, 0), StateKind::Infected), 0.2);
        assert_eq!(state_cover(&c(0, 0, 100), StateKind::Infected), 0.0);
        assert_eq!(state_cover(&c(60, 40, 0), StateKind::Susceptible), 0.6);
        assert_eq!(state_rate(20, 80), 20.0 / 81.0);
        assert_eq!(state_rate(40, 60), 40.0 / 61.0);
        assert_eq!(state_rate(0, 17), 0.0);
        assert_eq!(network_density(&c(80, 20, 0), 5000), 0.02);
        assert_eq!(network_density(&c(0, 0, 100), 5000), 0.0);
        assert_eq!(
            network_density(&c(160, 40, 0), 5000),
            2.0 * network_density(&c(80, 20, 0), 5000)
        );
    }

    #[test]
    fn tally_counts_states() {
        let states = [S0, I0, EpidemicState::Repaired, S0];
        let c = PopulationCounts::tally(&states);
        assert_eq!(
            (c.susceptible, c.infected, c.repaired, c.cumulative_infected),
            (2, 1, 1, 2)
        );
    }
}
