//! Local, model-agnostic explanations of black-box predictions on tabular
//! data.
//!
//! For a query instance the pipeline selects its nearest training rows under
//! a mixed-type distance, relabels them with the black box, densifies the
//! neighbourhood with SMOTE-NC (again relabelled by the black box), and fits
//! an unpruned CART tree on the result. The tree, and the IF-THEN rule on the
//! query's root-to-leaf path, are the explanation. The [`fidelity`] module
//! measures how often such surrogates agree with the black box, next to a
//! distance-weighted linear surrogate.

pub mod cart;
pub mod error;
pub mod explain;
pub mod fidelity;
pub mod gower;
pub mod oracle;
pub mod seeds;
pub mod smote;
pub mod tabular;

pub use error::{Error, Result};
