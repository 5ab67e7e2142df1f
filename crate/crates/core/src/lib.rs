//! Choosing `p` of `n` sensors so that the two hypotheses of a Gaussian
//! detection problem stay as far apart as possible after selection.
//!
//! Robust solvers ([`rounding::r_kl`], [`rounding::r_c`]) tolerate
//! ellipsoidal uncertainty in the means; the mean-difference solvers
//! ([`meandiff::md_kl`], [`meandiff::md_c`]) are much faster when the means
//! are known exactly.
//!
//! ```
//! use nalgebra::{DMatrix, DVector};
//! use sensel::{rounding, GaussianPair, PipelineParams, ProblemInstance, UncertaintyModel};
//!
//! let pair = GaussianPair::new(
//!     DVector::zeros(3),
//!     DVector::from_vec(vec![1.0, 0.0, 0.0]),
//!     DMatrix::identity(3, 3),
//!     DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0])),
//! )?;
//! let instance = ProblemInstance::new(pair, UncertaintyModel::exact(), 1)?;
//! let result = rounding::r_kl(&instance, &PipelineParams::default())?;
//! assert_eq!(result.selection.one_based(), vec![3]);
//! # Ok::<(), sensel::Error>(())
//! ```

mod error;
pub mod evaluation;
pub mod generate;
pub mod linalg;
pub mod meandiff;
pub mod model;
pub mod numrange;
pub mod qcqp;
pub mod relax;
pub mod rounding;

pub use error::{Error, Result};
pub use model::{
    chernoff_distance, chernoff_objective, kl_distance, whiten, Chernoff, Criterion, GaussianPair,
    ProblemInstance, Projector, SelectionMatrix, SubspaceBasis, UncertaintyModel, WhitenedPair,
};
pub use rounding::{PipelineParams, PipelineResult};
