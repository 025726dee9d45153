//! Graph-based transducer (GTC-T) training objective.
//!
//! * [`lattice`]: CTC-like and MonoRNN-T training graphs, validation, JSON I/O.
//! * [`loss`]: log-space forward/backward, marginal, loss and logits gradient.
//! * [`oracle`]: brute-force references used to verify [`loss`].
//! * [`model`]: a toy encoder/predictor/joiner trained with manual backprop.
//! * [`decode`]: prefix beam search with LM shallow fusion, and greedy search.
//! * [`verify`]: seeded randomized checks shared by the CLI and the tests.

pub mod decode;
pub mod lattice;
pub mod logspace;
pub mod model;
pub mod loss;
pub mod oracle;
pub mod tensor;
pub mod verify;

pub use lattice::{Label, Lattice, Topology, TopologySpec, BLANK};
pub use loss::{loss_and_grad, LossError, LossResult};
pub use tensor::PosteriorTensor;
