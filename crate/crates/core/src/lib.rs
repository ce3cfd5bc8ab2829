//! Model-based clustering of populations of networks.
//!
//! A population is a set of graphs on one shared vertex set. Each graph is
//! assumed to come from one of `M` subpopulations, and every subpopulation
//! has its own network model: a logistic regression over dyads, possibly
//! with sender and receiver random intercepts. The mixture is fitted by EM
//! from several starting partitions derived from graph distances.
//!
//! ```
//! use netmix::em::{run_em, EmConfig};
//! use netmix::sim::{simulate_mixture, ComponentParams, MixtureParams};
//! use netmix::specs::NetworkModelSpec;
//! use netmix::CovariateSet;
//!
//! let dense = ComponentParams::Unconstrained { probs: vec![0.9; 28] };
//! let sparse = ComponentParams::Unconstrained { probs: vec![0.1; 28] };
//! let params = MixtureParams { n_vertices: 8, directed: false, components: vec![dense, sparse] };
//! let (pop, truth) = simulate_mixture(&params, 12, 7).unwrap();
//!
//! let model = NetworkModelSpec::Unconstrained.compile(&pop, &CovariateSet::default()).unwrap();
//! let fit = run_em(&pop, &model, 2, &EmConfig::default()).unwrap();
//! assert_eq!(netmix::selection::purity(&fit.assignment, &truth).unwrap(), 1.0);
//! ```

pub mod application;
pub mod em;
pub mod error;
pub mod glm;
pub mod glmm;
pub mod init;
pub mod io;
mod linalg;
pub mod population;
pub mod selection;
pub mod sim;
pub mod specs;

pub use em::{run_em, EStepVariant, EmConfig, MixtureFit};
pub use error::{NetmixError, Result};
pub use glm::{irls_fit, loglik_bernoulli, wald_equality_test, BinomialData, Design, GlmFit};
pub use glmm::{pql_fit, GlmmFit, RandomFactor};
pub use init::{distance, pam_cluster, DistanceMatrix, Metric, PamResult, StartMatrix, StartOptions};
pub use population::{CovariateSet, GraphPopulation};
pub use selection::{information_criteria, purity, select_m, SelectionTable};
pub use specs::{CompiledModel, NetworkModelSpec};
