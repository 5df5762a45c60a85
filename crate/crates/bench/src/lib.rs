//! Benchmark harness for the `sparsereg` solvers: compressive-sensing and
//! deblurring experiments driven by TOML configs, parameter sweeps, radius
//! search and a deterministic self-test.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod runner;
pub mod selftest;

use std::collections::BTreeMap;

use config::{
    AlgorithmConfig, ConfigError, ExperimentConfig, ExperimentKind, InstanceConfig, NoisePowerCfg,
    ParamValue, SnrDb,
};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] sparsereg::Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("self-test failed: {0}")]
    SelfTest(String),
}

impl BenchError {
    /// Process exit code: 2 for invalid input, 1 for run failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Core(sparsereg::Error::InvalidParameter { .. })
            | BenchError::Core(sparsereg::Error::DimensionMismatch { .. }) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

fn algo(alpha: Option<ParamValue>) -> AlgorithmConfig {
    AlgorithmConfig {
        alpha,
        ..AlgorithmConfig::default()
    }
}

/// Desk-scale defaults used when the CLI runs without a config file.
///
/// * `cs`: 200×80 sensing matrix, 16 nonzeros, 40 dB, seeds 0–10, HV at
///   `α = 6e-5, η = 1` and PG with an automatic radius.
/// * `deblur`: 16×16 image, band 3, `σ = 0.7`, noise-free, HV at `α = 1e-5`.
pub fn default_config(kind: ExperimentKind) -> ExperimentConfig {
    let mut algorithms = BTreeMap::new();
    let (snr, seeds, alpha, beta) = match kind {
        ExperimentKind::Cs => (SnrDb(40.0), (0..11).collect(), 6e-5, 6e-5),
        ExperimentKind::Deblur => (SnrDb::NOISE_FREE, vec![0], 1e-5, 1e-5),
    };
    algorithms.insert(
        "hv".to_string(),
        AlgorithmConfig {
            eta: Some(1.0),
            ..algo(Some(ParamValue::Value(alpha)))
        },
    );
    if kind == ExperimentKind::Cs {
        algorithms.insert(
            "pg".to_string(),
            AlgorithmConfig {
                beta: Some(beta),
                radius_sq: Some(ParamValue::Auto),
                ..AlgorithmConfig::default()
            },
        );
    }
    ExperimentConfig {
        experiment: kind,
        snr_db: snr,
        seeds,
        maxiter: 1500,
        step_tol: 1e-5,
        output_dir: None,
        trace: false,
        noise_power: NoisePowerCfg::Unit,
        x0: 0.01,
        instance: InstanceConfig::default(),
        algorithms,
    }
}
