//! The simulation loop.
//!
//! Each step runs, in order: move every device, build the contact graph,
//! transmit packets (new infections start spreading the next step), apply
//! due repairs, record metrics. A run ends when no device is infected or
//! `max_steps` is reached.

use std::io::{self, Write};
use std::path::{Path as FsPath, PathBuf};

use crate::epidemic::{
    apply_countermeasure, build_proximity_graph, draw_response_steps, network_density, state_cover,
    state_rate, transmit, CounterMeasurePolicy, DeviceId, EpidemicState, Malware, PopulationCounts,
    StateKind,
};
use crate::error::{Error, Result};
use crate::mapgraph::{build_map_graph, MapGraph};
use crate::mapgrid::{
    binarize, largest_component, load_attraction, load_gray_image, AttractionGrid, OccupancyGrid,
    DEFAULT_THRESHOLD,
};
use crate::mobility::{spawn_devices, DevicePosition, Mobility, DEFAULT_BAND_FRACTION};
use crate::rng::{self, Purpose, StreamRng};

pub const DEFAULT_RADIUS: f64 = 3.0;
pub const DEFAULT_MAX_STEPS: u64 = 5000;

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub map: PathBuf,
    pub attraction: Option<PathBuf>,
    pub threshold: u8,
    pub invert: bool,
    pub n_infected: usize,
    pub n_susceptible: usize,
    pub packets: u32,
    pub rt_min: u32,
    pub rt_max: u32,
    pub radius: f64,
    /// Graph edges travelled per step.
    pub speed: u32,
    pub band_fraction: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub reset_on_disconnect: bool,
    pub static_devices: bool,
    /// Explicit starting cells `(row, col)`, one per device, replacing random placement.
    pub placements: Option<Vec<(usize, usize)>>,
    /// Keep per-step device positions in [`Run::trace`].
    pub record_trace: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            map: PathBuf::new(),
            attraction: None,
            threshold: DEFAULT_THRESHOLD,
            invert: false,
            n_infected: 20,
            n_susceptible: 80,
            packets: 3,
            rt_min: 1,
            rt_max: 5,
            radius: DEFAULT_RADIUS,
            speed: 1,
            band_fraction: DEFAULT_BAND_FRACTION,
            max_steps: DEFAULT_MAX_STEPS,
            seed: 0,
            reset_on_disconnect: false,
            static_devices: false,
            placements: None,
            record_trace: false,
        }
    }
}

impl SimulationConfig {
    pub fn total_devices(&self) -> usize {
        self.n_infected + self.n_susceptible
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.total_devices() == 0 {
            return bad("at least one device is required".into());
        }
        Malware::new(self.packets)?;
        CounterMeasurePolicy::new(self.rt_min, self.rt_max)?;
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return bad(format!("radius {} must be positive", self.radius));
        }
        if self.speed == 0 {
            return bad("speed must be at least one edge per step".into());
        }
        if !(self.band_fraction > 0.0 && self.band_fraction < 0.5) {
            return bad(format!(
                "band fraction {} outside (0, 0.5)",
                self.band_fraction
            ));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if let Some(p) = &self.placements {
            if p.len() != self.total_devices() {
                return bad(format!(
                    "{} placements for {} devices",
                    p.len(),
                    self.total_devices()
                ));
            }
        }
        Ok(())
    }
}

/// A loaded city: occupancy grid, attraction levels and the road graph.
#[derive(Clone, Debug)]
pub struct CityMap {
    pub grid: OccupancyGrid,
    pub attraction: AttractionGrid,
    pub graph: MapGraph,
}

impl CityMap {
    pub fn new(grid: OccupancyGrid, attraction: AttractionGrid) -> Result<Self> {
        let mask = largest_component(&grid);
        let graph = build_map_graph(&grid, &attraction, &mask)?;
        Ok(Self {
            grid,
            attraction,
            graph,
        })
    }

    pub fn load(
        map: &FsPath,
        attraction: Option<&FsPath>,
        threshold: u8,
        invert: bool,
    ) -> Result<Self> {
        let grid = binarize(&load_gray_image(map)?, threshold, invert)?;
        let attraction = load_attraction(attraction, &grid)?;
        Self::new(grid, attraction)
    }

    pub fn from_config(cfg: &SimulationConfig) -> Result<Self> {
        Self::load(
            &cfg.map,
            cfg.attraction.as_deref(),
            cfg.threshold,
            cfg.invert,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Record {
    pub step: u64,
    pub susceptible: usize,
    pub infected: usize,
    pub repaired: usize,
    pub cover_i: f64,
    pub cover_s: f64,
    pub rate_is: f64,
    pub rate_si: f64,
    pub density: f64,
    pub cumulative_infected: usize,
}

impl Record {
    pub fn new(step: u64, counts: &PopulationCounts, map_vertices: usize) -> Self {
        Self {
            step,
            susceptible: counts.susceptible,
            infected: counts.infected,
            repaired: counts.repaired,
            cover_i: state_cover(counts, StateKind::Infected),
            cover_s: state_cover(counts, StateKind::Susceptible),
            rate_is: state_rate(counts.infected, counts.susceptible),
            rate_si: state_rate(counts.susceptible, counts.infected),
            density: network_density(counts, map_vertices),
            cumulative_infected: counts.cumulative_infected,
        }
    }

    pub fn total(&self) -> usize {
        self.susceptible + self.infected + self.repaired
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "step",
    "susceptible",
    "infected",
    "repaired",
    "cover_i",
    "cover_s",
    "rate_is",
    "rate_si",
    "density",
    "cumulative_infected",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    pub records: Vec<Record>,
}

impl TimeSeries {
    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    /// Writes `# seed=<seed>`, the header row and one row per step.
    pub fn write_csv<W: Write>(&self, mut out: W, seed: u64) -> Result<()> {
        writeln!(out, "# seed={seed}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.susceptible.to_string(),
                r.infected.to_string(),
                r.repaired.to_string(),
                format!("{:.6}", r.cover_i),
                format!("{:.6}", r.cover_s),
                format!("{:.6}", r.rate_is),
                format!("{:.6}", r.rate_si),
                format!("{:.6}", r.density),
                r.cumulative_infected.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutcomeKind {
    Prevented,
    Pandemic,
    Censored,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Prevented => "prevented",
            Self::Pandemic => "pandemic",
            Self::Censored => "censored",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub extinction_step: Option<u64>,
    pub pandemic_step: Option<u64>,
    pub peak_infected: usize,
    pub peak_step: u64,
}

/// Pandemic if every device was infected at some point, otherwise Prevented
/// if infection died out, otherwise Censored.
pub fn classify_outcome(ts: &TimeSeries, total: usize) -> Outcome {
    assert!(!ts.records.is_empty(), "cannot classify an empty series");
    let extinction_step = ts.records.iter().find(|r| r.infected == 0).map(|r| r.step);
    let pandemic_step = ts
        .records
        .iter()
        .find(|r| r.cumulative_infected >= total)
        .map(|r| r.step);
    let mut peak = &ts.records[0];
    for r in &ts.records[1..] {
        if r.infected > peak.infected {
            peak = r;
        }
    }
    let kind = if pandemic_step.is_some() {
        OutcomeKind::Pandemic
    } else if extinction_step.is_some() {
        OutcomeKind::Prevented
    } else {
        OutcomeKind::Censored
    };
    Outcome {
        kind,
        extinction_step,
        pandemic_step,
        peak_infected: peak.infected,
        peak_step: peak.step,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Infected,
    Repaired,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Infected => "infected",
            Self::Repaired => "repaired",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub step: u64,
    pub kind: EventKind,
    pub device: DeviceId,
}

pub fn write_events<W: Write>(events: &[Event], mut out: W) -> io::Result<()> {
    writeln!(out, "step,event,device_id")?;
    for e in events {
        writeln!(out, "{},{},{}", e.step, e.kind.as_str(), e.device)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TracePoint {
    pub step: u64,
    pub device: DeviceId,
    pub row: usize,
    pub col: usize,
}

pub fn write_trace<W: Write>(trace: &[TracePoint], mut out: W) -> io::Result<()> {
    writeln!(out, "step,device_id,row,col")?;
    for t in trace {
        writeln!(out, "{},{},{},{}", t.step, t.device, t.row, t.col)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Run {
    pub series: TimeSeries,
    pub outcome: Outcome,
    pub events: Vec<Event>,
    pub trace: Vec<TracePoint>,
}

/// Loads the configured map and runs one simulation.
pub fn simulate(cfg: &SimulationConfig) -> Result<Run> {
    cfg.validate()?;
    let city = CityMap::from_config(cfg)?;
    simulate_on(&city, cfg)
}

/// Runs one simulation on an already loaded city; map fields of `cfg` are ignored.
pub fn simulate_on(city: &CityMap, cfg: &SimulationConfig) -> Result<Run> {
    cfg.validate()?;
    let graph = &city.graph;
    let malware = Malware::new(cfg.packets)?;
    let policy = CounterMeasurePolicy::new(cfg.rt_min, cfg.rt_max)?;
    let total = cfg.total_devices();

    let mut mobility = if cfg.static_devices {
        None
    } else {
        Some(Mobility::new(graph, cfg.band_fraction)?)
    };

    let (mut devices, mut rngs): (Vec<DevicePosition>, Vec<StreamRng>) =
        match (&cfg.placements, mobility.as_mut()) {
            (Some(cells), mut mobility) => {
                let mut out = (Vec::with_capacity(total), Vec::with_capacity(total));
                for (id, &(row, col)) in cells.iter().enumerate() {
                    let v = graph.vertex_at(row, col).ok_or_else(|| {
                        Error::ConfigInvalid(format!(
                            "placement ({row}, {col}) is not a reachable road cell"
                        ))
                    })?;
                    let mut dev = DevicePosition::parked(id, v);
                    let mut rng = rng::stream(cfg.seed, Purpose::Destination, id);
                    if let Some(m) = mobility.as_deref_mut() {
                        m.assign_destination(&mut dev, &mut rng)?;
                    }
                    out.0.push(dev);
                    out.1.push(rng);
                }
                out
            }
            (None, Some(m)) => spawn_devices(m, cfg.n_infected, cfg.n_susceptible, cfg.seed)?
                .into_iter()
                .unzip(),
            (None, None) => {
                let mut scratch = Mobility::new(graph, cfg.band_fraction)?;
                spawn_devices(&mut scratch, cfg.n_infected, cfg.n_susceptible, cfg.seed)?
                    .into_iter()
                    .map(|(d, r)| (DevicePosition::parked(d.device, d.current()), r))
                    .unzip()
            }
        };

    let draw = |id: DeviceId| {
        draw_response_steps(
            &policy,
            &malware,
            &mut rng::stream(cfg.seed, Purpose::Response, id),
        )
    };

    let mut events = Vec::new();
    let mut states: Vec<EpidemicState> = (0..total)
        .map(|id| {
            if id < cfg.n_infected {
                events.push(Event {
                    step: 0,
                    kind: EventKind::Infected,
                    device: id,
                });
                EpidemicState::Infected {
                    infected_at: 0,
                    response_steps: draw(id),
                }
            } else {
                EpidemicState::FRESH
            }
        })
        .collect();

    let mut trace = Vec::new();
    let mut positions: Vec<(usize, usize)> =
        devices.iter().map(|d| graph.coords(d.current())).collect();
    let mut record_positions =
        |step: u64, positions: &[(usize, usize)]| {
            if cfg.record_trace {
                trace.extend(positions.iter().enumerate().map(|(device, &(row, col))| {
                    TracePoint {
                        step,
                        device,
                        row,
                        col,
                    }
                }));
            }
        };
    record_positions(0, &positions);

    let vertices = graph.vertex_count();
    let mut counts = PopulationCounts::tally(&states);
    let mut series = TimeSeries {
        records: vec![Record::new(0, &counts, vertices)],
    };

    let mut step = 0;
    while counts.infected > 0 && step < cfg.max_steps {
        step += 1;

        if let Some(m) = mobility.as_mut() {
            for (dev, rng) in devices.iter_mut().zip(rngs.iter_mut()) {
                for _ in 0..cfg.speed {
                    m.advance(dev, rng)?;
                }
            }
            for (pos, dev) in positions.iter_mut().zip(&devices) {
                *pos = graph.coords(dev.current());
            }
        }
        record_positions(step, &positions);

        let contacts = build_proximity_graph(&positions, &states, cfg.radius);
        for device in transmit(
            &contacts,
            &mut states,
            &malware,
            step,
            cfg.reset_on_disconnect,
            draw,
        ) {
            events.push(Event {
                step,
                kind: EventKind::Infected,
                device,
            });
        }
        for device in apply_countermeasure(&mut states, step) {
            events.push(Event {
                step,
                kind: EventKind::Repaired,
                device,
            });
        }

        counts = PopulationCounts::tally(&states);
        series.records.push(Record::new(step, &counts, vertices));
    }

    let outcome = classify_outcome(&series, total);
    Ok(Run {
        series,
        outcome,
        events,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> CityMap {
        let grid = OccupancyGrid::from_ascii(".....").unwrap();
        let attraction = AttractionGrid::uniform(&grid);
        CityMap::new(grid, attraction).unwrap()
    }

    fn static_pair(
        cells: [(usize, usize); 2],
        packets: u32,
        t: u32,
        radius: f64,
    ) -> SimulationConfig {
        SimulationConfig {
            n_infected: 1,
            n_susceptible: 1,
            packets,
            rt_min: t,
            rt_max: t,
            radius,
            static_devices: true,
            placements: Some(cells.to_vec()),
            ..Default::default()
        }
    }

    #[test]
    fn corridor_hand_trace() {
        let cfg = static_pair([(0, 2), (0, 3)], 3, 2, 1.5);
        let run = simulate_on(&corridor(), &cfg).unwrap();
        let infected: Vec<usize> = run.series.records.iter().map(|r| r.infected).collect();
        assert_eq!(infected, vec![1, 1, 1, 2, 2, 2, 1, 1, 1, 0]);
        let repaired: Vec<usize> = run.series.records.iter().map(|r| r.repaired).collect();
        assert_eq!(repaired, vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 2]);
        assert_eq!(
            run.events,
            vec![
                Event {
                    step: 0,
                    kind: EventKind::Infected,
                    device: 0
                },
                Event {
                    step: 3,
                    kind: EventKind::Infected,
                    device: 1
                },
                Event {
                    step: 6,
                    kind: EventKind::Repaired,
                    device: 0
                },
                Event {
                    step: 9,
                    kind: EventKind::Repaired,
                    device: 1
                },
            ]
        );
        assert_eq!(run.outcome.kind, OutcomeKind::Pandemic);
        assert_eq!(run.outcome.pandemic_step, Some(3));
        assert_eq!(run.outcome.extinction_step, Some(9));
        assert_eq!((run.outcome.peak_infected, run.outcome.peak_step), (2, 3));
    }

    #[test]
    fn no_infected_is_prevented_immediately() {
        let cfg = SimulationConfig {
            n_infected: 0,
            n_susceptible: 3,
            ..static_pair([(0, 0), (0, 1)], 3, 2, 1.5)
        };
        let cfg = SimulationConfig {
            placements: Some(vec![(0, 0), (0, 1), (0, 2)]),
            ..cfg
        };
        let run = simulate_on(&corridor(), &cfg).unwrap();
        assert_eq!(run.series.records.len(), 1);
        assert_eq!(run.outcome.kind, OutcomeKind::Prevented);
        assert_eq!(run.outcome.extinction_step, Some(0));
    }

    #[test]
    fn out_of_range_seed_repairs_alone() {
        let cfg = static_pair([(0, 0), (0, 4)], 1, 1, 1.5);
        let run = simulate_on(&corridor(), &cfg).unwrap();
        assert_eq!(run.outcome.kind, OutcomeKind::Prevented);
        assert_eq!(run.outcome.extinction_step, Some(1));
        assert_eq!(run.series.last().unwrap().cumulative_infected, 1);
    }

    #[test]
    fn placements_must_be_on_roads() {
        let grid = OccupancyGrid::from_ascii("..#").unwrap();
        let city = CityMap::new(grid.clone(), AttractionGrid::uniform(&grid)).unwrap();
        let cfg = static_pair([(0, 0), (0, 2)], 1, 1, 1.5);
        assert!(matches!(
            simulate_on(&city, &cfg),
            Err(Error::ConfigInvalid(_))
        ));
    }

    #[test]
    fn config_validation() {
        let ok = SimulationConfig::default();
        assert!(ok.validate().is_ok());
        let cases = [
            SimulationConfig {
                n_infected: 0,
                n_susceptible: 0,
                ..ok.clone()
            },
            SimulationConfig {
                packets: 0,
                ..ok.clone()
            },
            SimulationConfig {
                rt_min: 0,
                ..ok.clone()
            },
            SimulationConfig {
                rt_min: 6,
                rt_max: 5,
                ..ok.clone()
            },
            SimulationConfig {
                radius: 0.0,
                ..ok.clone()
            },
            SimulationConfig {
                speed: 0,
                ..ok.clone()
            },
            SimulationConfig {
                band_fraction: 0.5,
                ..ok.clone()
            },
            SimulationConfig {
                max_steps: 0,
                ..ok.clone()
            },
            SimulationConfig {
                placements: Some(vec![(0, 0)]),
                ..ok.clone()
            },
        ];
        for cfg in cases {
            assert!(
                matches!(cfg.validate(), Err(Error::ConfigInvalid(_))),
                "{cfg:?}"
            );
        }
    }

    fn record(step: u64, infected: usize, cumulative: usize) -> Record {
        let total = 10;
        let counts = PopulationCounts {
            susceptible: total - cumulative,
            infected,
            repaired: cumulative - infected,
            cumulative_infected: cumulative,
        };
        Record::new(step, &counts, 100)
    }

    #[test]
    fn classify_prevented_pandemic_censored() {
        let prevented = TimeSeries {
            records: vec![record(0, 2, 2), record(20, 5, 6), record(41, 0, 6)],
        };
        let o = classify_outcome(&prevented, 10);
        assert_eq!(o.kind, OutcomeKind::Prevented);
        assert_eq!(o.extinction_step, Some(41));
        assert_eq!((o.peak_infected, o.peak_step), (5, 20));

        let pandemic = TimeSeries {
            records: vec![record(0, 2, 2), record(100, 8, 10), record(550, 0, 10)],
        };
        let o = classify_outcome(&pandemic, 10);
        assert_eq!(o.kind, OutcomeKind::Pandemic);
        assert_eq!(o.pandemic_step, Some(100));
        assert_eq!(o.extinction_step, Some(550));

        let censored = TimeSeries {
            records: vec![record(0, 2, 2), record(1, 3, 4)],
        };
        let o = classify_outcome(&censored, 10);
        assert_eq!(o.kind, OutcomeKind::Censored);
        assert_eq!(o.extinction_step, None);
    }

    #[test]
    fn peak_prefers_earliest_step() {
        let ts = TimeSeries {
            records: vec![
                record(0, 2, 2),
                record(1, 4, 4),
                record(2, 4, 5),
                record(3, 0, 5),
            ],
        };
        assert_eq!(classify_outcome(&ts, 10).peak_step, 1);
    }

    #[test]
    fn csv_layout() {
        let ts = TimeSeries {
            records: vec![record(0, 2, 2)],
        };
        let mut out = Vec::new();
        ts.write_csv(&mut out, 7).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "# seed=7\n\
             step,susceptible,infected,repaired,cover_i,cover_s,rate_is,rate_si,density,cumulative_infected\n\
             0,8,2,0,0.200000,0.800000,0.222222,2.666667,0.100000,2\n"
        );
    }

    #[test]
    fn event_and_trace_logs() {
        let mut out = Vec::new();
        write_events(
            &[Event {
                step: 3,
                kind: EventKind::Repaired,
                device: 4,
            }],
            &mut out,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "step,event,device_id\n3,repaired,4\n"
        );

        let cfg = SimulationConfig {
            record_trace: true,
            ..static_pair([(0, 2), (0, 3)], 1, 1, 1.5)
        };
        let run = simulate_on(&corridor(), &cfg).unwrap();
        let steps = run.series.records.len();
        assert_eq!(run.trace.len(), steps * 2);
        assert!(run
            .trace
            .iter()
            .all(|t| t.row == 0 && (t.col == 2 || t.col == 3)));
    }
}
