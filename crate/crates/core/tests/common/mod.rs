#![allow(dead_code)]

use std::sync::Arc;

use mapf_rrr::grid::{Cell, GridMap};
use mapf_rrr::instance::{generate_random_instance, MapfInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Connected 5x5 maps with 10-30% obstacles and 2-3 agents.
pub fn small_suite(count: usize, seed: u64) -> Vec<MapfInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let density = rng.random_range(0.10..=0.30);
        let blocked: Vec<Cell> = (0..5u32)
            .flat_map(|r| (0..5u32).map(move |c| Cell::new(r, c)))
            .filter(|_| rng.random_bool(density))
            .collect();
        let Ok(map) = GridMap::new(5, 5, blocked) else { continue };
        let k = rng.random_range(2..=3);
        if !map.is_connected() || map.num_vertices() < 2 * k {
            continue;
        }
        let inst = generate_random_instance(Arc::new(map), k, rng.random()).expect("enough free cells");
        out.push(inst);
    }
    out
}

pub fn horizon(inst: &MapfInstance) -> u64 {
    (inst.map.num_vertices() * inst.num_agents()) as u64
}
