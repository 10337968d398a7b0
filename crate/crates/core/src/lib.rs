//! Merging of identically shaped feed-forward networks by layer-wise
//! closed-form regression.
//!
//! Every linear layer of the merged model is the least-squares fit
//! `W_M = (Σ ω_i W_i G_i)(Σ ω_i G_i)⁺` over the tasks' input Gram matrices
//! `G_i = X_i X_iᵀ`. The simultaneous variant ([`merge::merge_simultaneous`])
//! takes every `X_i` from the task's own, unmerged network. The chained variant
//! ([`merge::merge_com`]) solves layers front to back and recomputes each
//! layer's inputs by pushing the task data through the already-merged prefix,
//! so the statistics a layer is fitted on are exactly the inputs it receives
//! at inference time.
//!
//! [`mcs`] measures the mismatch between those two kinds of inputs as a
//! Fréchet distance between Gaussian fits of the activations, [`harness`]
//! builds small synthetic multi-task experiments, and [`io`] holds the on-disk
//! checkpoint and matrix formats used by the `cmm` binary.
//!
//! ```
//! use chainmerge::{merge, model::ActivationKind, DenseMatrix, LinearLayer, SequentialModel};
//!
//! let layer = |w: f64| {
//!     LinearLayer::new("fc", DenseMatrix::from_rows(&[vec![w, 0.0], vec![0.0, w]]).unwrap(), false, ActivationKind::Identity)
//! };
//! let a = SequentialModel::new(2, vec![layer(1.0)]).unwrap();
//! let b = SequentialModel::new(2, vec![layer(3.0)]).unwrap();
//! let x = DenseMatrix::identity(2);
//! let bundles = vec![
//!     merge::TaskBundle::new("a", a, x.clone()).unwrap(),
//!     merge::TaskBundle::new("b", b, x).unwrap(),
//! ];
//! let cfg = merge::MergeConfig { lambda_rel: 0.0, ..merge::MergeConfig::new(merge::MergeMethod::Com) };
//! let out = merge::merge(&bundles, &cfg).unwrap();
//! assert!((out.merged.layers()[0].weight.get(0, 0) - 2.0).abs() < 1e-12);
//! ```

pub mod cli;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod mcs;
pub mod merge;
pub mod model;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use model::{ActivationKind, LinearLayer, SequentialModel};
