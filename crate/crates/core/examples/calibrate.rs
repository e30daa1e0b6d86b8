//! Runs the response-time experiment grid on the synthetic desk city and
//! prints per-configuration statistics. Used to pick the desk radius.
//!
//! cargo run --release -p epidemigrid --example calibrate -- [RADIUS...] [persist] [speed=N] [only=RT_MIN...]
//!
//! Without a radius the calibrated `DESK_RADIUS` is used. `persist` keeps
//! partial packet progress across disconnects.

use std::time::Instant;

use epidemigrid::engine::{simulate_on, OutcomeKind};
use epidemigrid::sweep::aggregate;
use epidemigrid::synth::{desk_config, GridCity, DESK_RADIUS, DESK_SPEED};
use rayon::prelude::*;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let persist = args.iter().any(|a| a == "persist");
    let mut radii: Vec<f64> = args.iter().filter_map(|a| a.parse().ok()).collect();
    if radii.is_empty() {
        radii.push(DESK_RADIUS);
    }
    let speed = args
        .iter()
        .find_map(|a| a.strip_prefix("speed="))
        .map_or(DESK_SPEED, |v| v.parse().unwrap());
    let only: Vec<u32> = args
        .iter()
        .filter_map(|a| a.strip_prefix("only="))
        .map(|v| v.parse().unwrap())
        .collect();

    let map = GridCity::desk().city_map().unwrap();
    println!("vertices {}", map.graph.vertex_count());

    let grid = [
        (20, 80, (1, 5)),
        (20, 80, (6, 10)),
        (20, 80, (11, 20)),
        (20, 80, (21, 40)),
        (20, 80, (41, 80)),
        (40, 60, (41, 80)),
        (40, 160, (41, 80)),
    ];
    for &r in &radii {
        println!("== radius {r} speed {speed} persist {persist}");
        for &(i, s, rt) in &grid {
            if !only.is_empty() && !only.contains(&rt.0) {
                continue;
            }
            for p in [3, 6] {
                let t = Instant::now();
                let runs: Vec<_> = (0..20u64)
                    .into_par_iter()
                    .map(|seed| {
                        let mut cfg = desk_config(i, s, p, rt, seed);
                        cfg.radius = r;
                        cfg.speed = speed;
                        cfg.reset_on_disconnect = !persist;
                        let run = simulate_on(&map, &cfg).unwrap();
                        (run.outcome, run.series.last().unwrap().cumulative_infected)
                    })
                    .collect();
                let mut fin: Vec<usize> = runs.iter().map(|o| o.1).collect();
                fin.sort();
                let runs: Vec<_> = runs.into_iter().map(|o| o.0).collect();
                let summary = aggregate(&runs);
                let low = runs
                    .iter()
                    .filter(|o| o.kind == OutcomeKind::Prevented && o.peak_infected * 10 <= i * 12)
                    .count();
                let grew = runs
                    .iter()
                    .filter(|o| {
                        o.kind == OutcomeKind::Prevented && o.peak_infected > i && o.peak_step > 0
                    })
                    .count();
                println!(
                    "I{i:3} S{s:3} rt{:2}-{:2} p{p}: pandemic {:.2} final {} low&prevented {low:2} grew&prevented {grew:2} peak_step {:?} peak {:?} extinction {:?}  [{:.1}s]",
                    rt.0,
                    rt.1,
                    summary.pandemic_fraction,
                    fin[fin.len() / 2],
                    summary.peak_step.map(|x| x.median),
                    summary.peak_infected.map(|x| (x.q1, x.median, x.q3)),
                    summary.extinction_step.map(|x| x.median),
                    t.elapsed().as_secs_f64()
                );
            }
        }
    }
}
