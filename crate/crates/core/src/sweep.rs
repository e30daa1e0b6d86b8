//! Parameter sweeps with replications and ensemble summaries.
//!
//! A sweep spec is a flat `key = value` text file. Axis keys (`rt`,
//! `packets`, `infected`, `susceptible`) may be repeated, one value per
//! line; every other key sets a base parameter. Example:
//!
//! ```text
//! map = city.pgm
//! radius = 3
//! replications = 20
//! base_seed = 1
//! infected = 20
//! susceptible = 80
//! packets = 3
//! packets = 6
//! rt = 1:5
//! rt = 41:80
//! ```

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::engine::{simulate_on, CityMap, Outcome, OutcomeKind, SimulationConfig};
use crate::epidemic::{network_density, state_rate, PopulationCounts};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: SimulationConfig,
    pub rt: Vec<(u32, u32)>,
    pub packets: Vec<u32>,
    pub infected: Vec<usize>,
    pub susceptible: Vec<usize>,
    pub replications: usize,
    pub base_seed: u64,
}

pub fn parse_rt(text: &str) -> Option<(u32, u32)> {
    let (a, b) = text.trim().split_once(':')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut spec = Self::parse(&text)?;
        // map paths are relative to the spec file
        let dir = path.parent().unwrap_or(Path::new(""));
        if spec.base.map.is_relative() {
            spec.base.map = dir.join(&spec.base.map);
        }
        if let Some(a) = spec.base.attraction.as_mut() {
            if a.is_relative() {
                *a = dir.join(&*a);
            }
        }
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SweepSpec {
            base: SimulationConfig::default(),
            rt: Vec::new(),
            packets: Vec::new(),
            infected: Vec::new(),
            susceptible: Vec::new(),
            replications: 1,
            base_seed: 0,
        };
        let mut has_map = false;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| Error::SweepSpec { line, message };
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
            fn num<T: std::str::FromStr>(
                key: &str,
                value: &str,
                err: impl Fn(String) -> Error,
            ) -> Result<T> {
                value
                    .parse()
                    .map_err(|_| err(format!("bad value {value:?} for {key}")))
            }
            let flag = |value: &str| match value {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(err(format!("bad flag {value:?} for {key}"))),
            };

            let b = &mut spec.base;
            match key {
                "map" => {
                    b.map = PathBuf::from(value);
                    has_map = true;
                }
                "attraction" => b.attraction = Some(PathBuf::from(value)),
                "threshold" => b.threshold = num(key, value, err)?,
                "invert" => b.invert = flag(value)?,
                "radius" => b.radius = num(key, value, err)?,
                "speed" => b.speed = num(key, value, err)?,
                "band" => b.band_fraction = num(key, value, err)?,
                "max_steps" => b.max_steps = num(key, value, err)?,
                "reset_on_disconnect" => b.reset_on_disconnect = flag(value)?,
                "static" => b.static_devices = flag(value)?,
                "replications" => spec.replications = num(key, value, err)?,
                "base_seed" => spec.base_seed = num(key, value, err)?,
                "rt" => spec.rt.push(
                    parse_rt(value)
                        .ok_or_else(|| err(format!("bad interval {value:?}, want MIN:MAX")))?,
                ),
                "packets" => spec.packets.push(num(key, value, err)?),
                "infected" => spec.infected.push(num(key, value, err)?),
                "susceptible" => spec.susceptible.push(num(key, value, err)?),
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }

        let end = text.lines().count();
        let err = |message: &str| Error::SweepSpec {
            line: end,
            message: message.into(),
        };
        if !has_map {
            return Err(err("missing `map`"));
        }
        if spec.replications == 0 {
            return Err(err("replications must be at least 1"));
        }
        for (name, empty) in [
            ("rt", spec.rt.is_empty()),
            ("packets", spec.packets.is_empty()),
            ("infected", spec.infected.is_empty()),
            ("susceptible", spec.susceptible.is_empty()),
        ] {
            if empty {
                return Err(err(&format!("axis `{name}` needs at least one value")));
            }
        }
        for cfg in spec.configurations() {
            cfg.validate().map_err(|e| err(&e.to_string()))?;
        }
        Ok(spec)
    }

    /// Cartesian product of the axes, ordered infected, susceptible, rt,
    /// packets (outermost first). Seeds are not yet assigned.
    pub fn configurations(&self) -> Vec<SimulationConfig> {
        let mut out = Vec::new();
        for &n_infected in &self.infected {
            for &n_susceptible in &self.susceptible {
                for &(rt_min, rt_max) in &self.rt {
                    for &packets in &self.packets {
                        out.push(SimulationConfig {
                            n_infected,
                            n_susceptible,
                            rt_min,
                            rt_max,
                            packets,
                            ..self.base.clone()
                        });
                    }
                }
            }
        }
        out
    }

    pub fn run_count(&self) -> usize {
        self.configurations().len() * self.replications
    }
}

/// File-name friendly tag of a configuration, e.g. `i20_s80_p3_rt1-5`.
pub fn config_label(cfg: &SimulationConfig) -> String {
    format!(
        "i{}_s{}_p{}_rt{}-{}",
        cfg.n_infected, cfg.n_susceptible, cfg.packets, cfg.rt_min, cfg.rt_max
    )
}

/// Lower median and lower quartiles of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Spread {
    pub q1: u64,
    pub median: u64,
    pub q3: u64,
}

impl Spread {
    pub fn of(values: &mut [u64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_unstable();
        let at = |num: usize, den: usize| values[num * (values.len() - 1) / den];
        Some(Self {
            q1: at(1, 4),
            median: at(1, 2),
            q3: at(3, 4),
        })
    }

    pub fn iqr(&self) -> u64 {
        self.q3 - self.q1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub pandemic_fraction: f64,
    pub censored_count: usize,
    pub peak_step: Option<Spread>,
    pub peak_infected: Option<Spread>,
    pub extinction_step: Option<Spread>,
}

/// Summarises a batch of outcomes. Censored runs are counted but left out of
/// the step statistics.
pub fn aggregate(outcomes: &[Outcome]) -> EnsembleSummary {
    assert!(!outcomes.is_empty(), "aggregate of no outcomes");
    let runs = outcomes.len();
    let pandemics = outcomes
        .iter()
        .filter(|o| o.kind == OutcomeKind::Pandemic)
        .count();
    let finished: Vec<&Outcome> = outcomes
        .iter()
        .filter(|o| o.kind != OutcomeKind::Censored)
        .collect();
    let mut peak_step: Vec<u64> = finished.iter().map(|o| o.peak_step).collect();
    let mut peak_infected: Vec<u64> = finished.iter().map(|o| o.peak_infected as u64).collect();
    let mut extinction: Vec<u64> = finished.iter().filter_map(|o| o.extinction_step).collect();
    EnsembleSummary {
        runs,
        pandemic_fraction: pandemics as f64 / runs as f64,
        censored_count: runs - finished.len(),
        peak_step: Spread::of(&mut peak_step),
        peak_infected: Spread::of(&mut peak_infected),
        extinction_step: Spread::of(&mut extinction),
    }
}

#[derive(Clone, Debug)]
pub struct RunFailure {
    pub label: String,
    pub replication: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct ConfigSummary {
    pub config: SimulationConfig,
    pub label: String,
    pub rate_is: f64,
    pub density: f64,
    pub failures: usize,
    /// `None` when every replication failed.
    pub summary: Option<EnsembleSummary>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<ConfigSummary>,
    pub failures: Vec<RunFailure>,
}

pub const SUMMARY_HEADER: [&str; 18] = [
    "label",
    "infected",
    "susceptible",
    "packets",
    "rt_min",
    "rt_max",
    "rate_is",
    "density",
    "runs",
    "failures",
    "pandemic_fraction",
    "censored_count",
    "peak_step_median",
    "peak_step_iqr",
    "peak_infected_median",
    "peak_infected_iqr",
    "extinction_step_median",
    "extinction_step_iqr",
];

/// Runs every configuration × replication on `jobs` worker threads, writing
/// one time-series CSV per run into `out_dir` and `summary.csv` at the end.
/// Run `k` (configuration-major order) uses seed `base_seed + k`.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path, jobs: usize) -> Result<SweepReport> {
    let city = CityMap::from_config(&spec.base)?;
    fs::create_dir_all(out_dir)?;
    let configs = spec.configurations();
    let reps = spec.replications;

    let tasks: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..reps).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("worker pool: {e}")))?;

    let results: Vec<std::result::Result<Outcome, RunFailure>> = pool.install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(run_index, &(c, rep))| {
                let seed = spec.base_seed.wrapping_add(run_index as u64);
                let cfg = SimulationConfig {
                    seed,
                    ..configs[c].clone()
                };
                let label = config_label(&cfg);
                let run = || -> Result<Outcome> {
                    let run = simulate_on(&city, &cfg)?;
                    let path = out_dir.join(format!("{label}_rep{rep:03}.csv"));
                    run.series
                        .write_csv(BufWriter::new(File::create(path)?), seed)?;
                    Ok(run.outcome)
                };
                run().map_err(|e| RunFailure {
                    label,
                    replication: rep,
                    seed,
                    message: e.to_string(),
                })
            })
            .collect()
    });

    let vertices = city.graph.vertex_count();
    let mut rows = Vec::with_capacity(configs.len());
    let mut failures = Vec::new();
    for (c, chunk) in results.chunks(reps).enumerate() {
        let cfg = &configs[c];
        let mut outcomes = Vec::new();
        let mut failed = 0;
        for r in chunk {
            match r {
                Ok(o) => outcomes.push(*o),
                Err(f) => {
                    failed += 1;
                    failures.push(f.clone());
                }
            }
        }
        let initial = PopulationCounts {
            susceptible: cfg.n_susceptible,
            infected: cfg.n_infected,
            repaired: 0,
            cumulative_infected: cfg.n_infected,
        };
        rows.push(ConfigSummary {
            config: cfg.clone(),
            label: config_label(cfg),
            rate_is: state_rate(cfg.n_infected, cfg.n_susceptible),
            density: network_density(&initial, vertices),
            failures: failed,
            summary: (!outcomes.is_empty()).then(|| aggregate(&outcomes)),
        });
    }

    let report = SweepReport { rows, failures };
    write_summary(&report, File::create(out_dir.join("summary.csv"))?)?;
    if !report.failures.is_empty() {
        let mut w = csv::Writer::from_path(out_dir.join("failures.csv"))?;
        w.write_record(["label", "replication", "seed", "error"])?;
        for f in &report.failures {
            w.write_record([
                f.label.clone(),
                f.replication.to_string(),
                f.seed.to_string(),
                f.message.clone(),
            ])?;
        }
        w.flush()?;
    }
    Ok(report)
}

pub fn write_summary<W: std::io::Write>(report: &SweepReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    let spread = |s: Option<Spread>| match s {
        Some(s) => [s.median.to_string(), s.iqr().to_string()],
        None => [String::new(), String::new()],
    };
    for row in &report.rows {
        let cfg = &row.config;
        let mut rec = vec![
            row.label.clone(),
            cfg.n_infected.to_string(),
            cfg.n_susceptible.to_string(),
            cfg.packets.to_string(),
            cfg.rt_min.to_string(),
            cfg.rt_max.to_string(),
            format!("{:.6}", row.rate_is),
            format!("{:.6}", row.density),
        ];
        match &row.summary {
            Some(s) => {
                rec.push(s.runs.to_string());
                rec.push(row.failures.to_string());
                rec.push(format!("{:.6}", s.pandemic_fraction));
                rec.push(s.censored_count.to_string());
                rec.extend(spread(s.peak_step));
                rec.extend(spread(s.peak_infected));
                rec.extend(spread(s.extinction_step));
            }
            None => {
                rec.push("0".into());
                rec.push(row.failures.to_string());
                rec.extend(std::iter::repeat_n(String::new(), 8));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(kind: OutcomeKind, peak_step: u64, extinction: Option<u64>) -> Outcome {
        Outcome {
            kind,
            extinction_step: extinction,
            pandemic_step: (kind == OutcomeKind::Pandemic).then_some(1),
            peak_infected: 20,
            peak_step,
        }
    }

    #[test]
    fn pandemic_fraction() {
        let mut v = vec![outcome(OutcomeKind::Pandemic, 5, Some(50)); 7];
        v.extend(vec![outcome(OutcomeKind::Prevented, 5, Some(30)); 3]);
        let s = aggregate(&v);
        assert_eq!(s.runs, 10);
        assert_eq!(s.pandemic_fraction, 0.7);
        assert_eq!(s.censored_count, 0);
    }

    #[test]
    fn all_censored_has_no_step_stats() {
        let s = aggregate(&vec![outcome(OutcomeKind::Censored, 5, None); 4]);
        assert_eq!(s.censored_count, 4);
        assert_eq!(s.peak_step, None);
        assert_eq!(s.extinction_step, None);
        assert_eq!(s.pandemic_fraction, 0.0);
    }

    #[test]
    fn lower_median() {
        let v: Vec<Outcome> = [80, 60, 70]
            .into_iter()
            .map(|p| outcome(OutcomeKind::Prevented, p, Some(p + 1)))
            .collect();
        assert_eq!(aggregate(&v).peak_step.unwrap().median, 70);
        assert_eq!(Spread::of(&mut [4, 1, 3, 2]).unwrap().median, 2);
        let s = Spread::of(&mut (1..=9).collect::<Vec<_>>()).unwrap();
        assert_eq!((s.q1, s.median, s.q3, s.iqr()), (3, 5, 7, 4));
    }

    const RESPONSE_GRID: &str = "
        # response-time grid
        map = city.pgm
        radius = 3.5
        replications = 20
        base_seed = 100
        infected = 20
        susceptible = 80
        packets = 3
        packets = 6
        rt = 1:5
        rt = 6:10
        rt = 11:20
        rt = 21:40
        rt = 41:80
    ";

    #[test]
    fn parses_response_time_grid() {
        let spec = SweepSpec::parse(RESPONSE_GRID).unwrap();
        assert_eq!(spec.configurations().len(), 10);
        assert_eq!(spec.run_count(), 200);
        assert_eq!(spec.base.radius, 3.5);
        assert_eq!(spec.base_seed, 100);
        let labels: Vec<String> = spec.configurations().iter().map(config_label).collect();
        assert_eq!(labels[0], "i20_s80_p3_rt1-5");
        assert_eq!(labels[1], "i20_s80_p6_rt1-5");
        assert_eq!(labels[9], "i20_s80_p6_rt41-80");
    }

    #[test]
    fn single_run_spec() {
        let spec =
            SweepSpec::parse("map = m.pgm\nrt = 1:1\npackets = 1\ninfected = 1\nsusceptible = 1\n")
                .unwrap();
        assert_eq!(spec.run_count(), 1);
    }

    #[test]
    fn spec_errors_name_the_line() {
        let bad = [
            ("map = m.pgm\nrt = 5\n", 2),
            ("map = m.pgm\nfoo = 1\n", 2),
            ("map = m.pgm\npackets = x\n", 2),
            ("map = m.pgm\ninvert = maybe\n", 2),
            ("just words\n", 1),
        ];
        for (text, line) in bad {
            match SweepSpec::parse(text) {
                Err(Error::SweepSpec { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
        for text in [
            "rt = 1:2\npackets = 1\ninfected = 1\nsusceptible = 1\n",
            "map = m.pgm\npackets = 1\ninfected = 1\nsusceptible = 1\n",
            "map = m.pgm\nrt = 3:2\npackets = 1\ninfected = 1\nsusceptible = 1\n",
            "map = m.pgm\nreplications = 0\nrt = 1:2\npackets = 1\ninfected = 1\nsusceptible = 1\n",
        ] {
            assert!(
                matches!(SweepSpec::parse(text), Err(Error::SweepSpec { .. })),
                "{text:?}"
            );
        }
    }

    #[test]
    fn rt_parsing() {
        assert_eq!(parse_rt("41:80"), Some((41, 80)));
        assert_eq!(parse_rt(" 1 : 5 "), Some((1, 5)));
        assert_eq!(parse_rt("7"), None);
        assert_eq!(parse_rt("a:b"), None);
    }
}
