//! The 3-user ULA network with `M_T = 2`, `M_R = 4`, two paths on every
//! direct link and one on every cross link, at a fixed set of angles.

use serde::{Deserialize, Serialize};

use crate::channel::{gen_ula, ChannelError, ChannelSet, UlaGeometry};
use crate::dof::{derive, format_ratio, SystemParams};
use crate::verify::{run_trial, TrialReport, VerifyOptions};

/// Element spacing assumed when none is given.
pub const DEFAULT_DELTA: f64 = 0.5;

/// Arrival angle of the first path, indexed `[receiver][transmitter]`.
pub const AOA_FIRST: [[f64; 3]; 3] = [[0.05, 3.47, 2.47], [4.57, 4.66, 0.85], [3.53, 5.18, 1.23]];
/// Departure angle of the first path, indexed `[receiver][transmitter]`.
pub const AOD_FIRST: [[f64; 3]; 3] = [[4.53, 2.41, 0.93], [4.21, 3.09, 3.05], [0.38, 4.86, 0.45]];
/// Second path of each direct link.
pub const AOA_SECOND: [f64; 3] = [4.95, 2.47, 1.48];
pub const AOD_SECOND: [f64; 3] = [0.51, 0.50, 5.83];

pub fn params() -> SystemParams {
    SystemParams { mt: 2, mr: 4, d0: 2, d1: 1, d2: 1 }
}

pub fn geometry(delta: f64) -> UlaGeometry {
    let paths = std::array::from_fn(|k| std::array::from_fn(|i| if k == i { 2 } else { 1 }));
    let angles = |first: &[[f64; 3]; 3], second: &[f64; 3]| {
        std::array::from_fn(|k| {
            std::array::from_fn(|i| if k == i { vec![first[k][i], second[k]] } else { vec![first[k][i]] })
        })
    };
    UlaGeometry { delta, paths, aoa: angles(&AOA_FIRST, &AOA_SECOND), aod: angles(&AOD_FIRST, &AOD_SECOND) }
}

pub fn channels(delta: f64) -> Result<ChannelSet, ChannelError> {
    gen_ula(&params(), &geometry(delta), 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub version: String,
    pub delta: f64,
    pub params: SystemParams,
    pub dbar: String,
    pub seed: u64,
    /// Receive dimensions left free of interference, per receiver.
    pub interference_free_dims: Vec<usize>,
    pub trial: TrialReport,
    pub pass: bool,
}

/// Runs the full pipeline on the fixed channels.
pub fn run(delta: f64, seed: u64) -> Result<ExampleReport, ChannelError> {
    let cs = channels(delta)?;
    cs.check()?;
    let trial = run_trial(&cs, seed, &VerifyOptions::default());
    let n = cs.params.mr.max(cs.params.mt) as usize;
    Ok(ExampleReport {
        version: crate::VERSION.to_string(),
        delta,
        params: cs.params,
        dbar: format_ratio(&derive(&cs.params).expect("valid").dbar),
        seed,
        interference_free_dims: trial.receivers.iter().map(|r| n - r.z_measured).collect(),
        pass: trial.pass,
        trial,
    })
}
