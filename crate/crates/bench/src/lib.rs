//! Shared fixtures for the benchmarks.

use fcox::simulation::{gen_dataset, Dgp, GammaPolicy, SimConfig};
use fcox::{prepare, Observation, Prepared};

/// One simulated dataset of size `n` with the default study settings.
pub fn simulated(n: usize) -> (Vec<Observation>, Prepared) {
    let cfg = SimConfig { n, replicates: 1, gamma: GammaPolicy::Fixed { gamma: 1e-3 }, ..SimConfig::default() };
    let dgp = Dgp::new(&cfg);
    let obs: Vec<Observation> = gen_dataset(&cfg, &dgp, 0).expect("simulation succeeds").into_iter().map(|s| s.obs).collect();
    let prep = prepare(&obs, cfg.m).expect("simulated data are valid");
    (obs, prep)
}
