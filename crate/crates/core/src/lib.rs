//! Rank-constrained multi-layer graph learning.
//!
//! Given `M` views of the same `N` entities, learn one graph Laplacian per
//! view together with a shared `N x K` embedding such that every layer has
//! exactly `K` connected components, then cluster the entities from the
//! embedding.
//!
//! ```no_run
//! use mlgraph::{datagen, rmgl, cluster};
//!
//! let inst = datagen::generate(&datagen::SyntheticSpec::reference_preset(7)).unwrap();
//! let cfg = rmgl::RmglConfig::new(4, inst.data.n_views());
//! let res = rmgl::solve_rmgl(&inst.data, &cfg).unwrap();
//! let labels = cluster::kmeans(res.embedding.q(), 4, &cluster::KMeansOptions::with_seed(7)).unwrap();
//! println!("NMI {}", cluster::nmi(&labels.labeling, &inst.truth).unwrap());
//! ```

pub mod cli;
pub mod cluster;
pub mod datagen;
pub mod error;
pub mod graph;
pub mod io;
pub mod qp;
pub mod rmgl;
pub mod spectral;

pub use cluster::{kmeans, nmi, KMeansOptions, Labeling};
pub use error::{MlgError, Result};
pub use graph::{
    ConstraintSystem, DuplicationOperator, GraphLaplacian, LayerVector, MultiLayerGraph,
    MultiViewDataset, ViewCovariance,
};
pub use rmgl::{solve_rmgl, RmglConfig, RmglResult};
pub use spectral::Embedding;
