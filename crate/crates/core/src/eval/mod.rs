//! Error metrics, spectral diagnostics, rate fits and the benchmark runner.

pub mod bench;
pub mod metrics;
pub mod rates;
pub mod spectral;

pub use bench::{run_benchmark, BenchConfig, BenchOutcome, Method, RunSummary, SeedRecord};
pub use metrics::{mise_monte_carlo, mise_quadrature, sup_error, MonteCarloMise, Quadrature};
pub use rates::{rate_fit, trend_check, RateFit, TrendCheck};
pub use spectral::{
    effective_dimension, eigendecay_fit, gram_spectrum, numerical_rank, spectral_report, DecayFit,
    SpectralReport,
};
