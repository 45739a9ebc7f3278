#![allow(dead_code)]

use lr_ergo_core::{CMat, EvolutionEngine, LocalOperator, ModelPreset, Region, Site, Torus, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    CMat::from_fn(d, d, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

pub fn random_operator(rng: &mut ChaCha8Rng, sites: &[i64]) -> LocalOperator {
    let d = 1usize << sites.len();
    LocalOperator::new(
        Region::chain(sites.iter().copied()),
        random_matrix(rng, d),
        2,
    )
    .unwrap()
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, sites: &[i64]) -> LocalOperator {
    let a = random_operator(rng, sites);
    a.add(&a.adjoint()).unwrap().scale(C64::new(0.5, 0.0))
}

/// Random single- or two-site support inside a chain of `l` sites.
pub fn random_support(rng: &mut ChaCha8Rng, l: usize) -> Vec<i64> {
    let first = rng.gen_range(0..l as i64);
    if l > 1 && rng.gen_bool(0.5) {
        let second = (first + rng.gen_range(1..l as i64)) % l as i64;
        let mut v = vec![first, second];
        v.sort();
        v
    } else {
        vec![first]
    }
}

pub fn random_preset(rng: &mut ChaCha8Rng) -> ModelPreset {
    match rng.gen_range(0..4) {
        0 => ModelPreset::transverse_ising(rng.gen_range(0.5..1.5), rng.gen_range(0.2..1.5)),
        1 => ModelPreset::tilted_ising(
            rng.gen_range(0.5..1.5),
            rng.gen_range(0.2..1.5),
            rng.gen_range(-1.0..1.0),
        ),
        2 => ModelPreset::heisenberg(rng.gen_range(0.5..1.5))
            .coupling("h_z", rng.gen_range(-1.0..1.0)),
        _ => ModelPreset::xy(rng.gen_range(0.5..1.5)).coupling("h_z", rng.gen_range(-1.0..1.0)),
    }
}

pub fn random_engine(rng: &mut ChaCha8Rng, l: usize, periodic: bool) -> EvolutionEngine {
    let torus = if periodic {
        Torus::periodic([l])
    } else {
        Torus::open([l])
    };
    let phi = random_preset(rng)
        .expand(&torus, 2, std::f64::consts::LN_2)
        .unwrap();
    EvolutionEngine::from_interaction(&phi).unwrap()
}

pub fn site(x: i64) -> Site {
    Site::from(x)
}

pub fn pauli(site: i64, m: CMat) -> LocalOperator {
    LocalOperator::single_site(Site::from(site), m).unwrap()
}
