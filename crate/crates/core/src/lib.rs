//! Desk-scale pipeline for graph neural network regression on molecular
//! property data: SMILES parsing, tensor encoding, a packed sharded dataset
//! container, pluggable data-loading backends, a hand-differentiated
//! PNA-style GCNN, and data-parallel training over an abstract transport.

pub mod corpus;
pub mod dataload;
pub mod ddp;
pub mod gcnn;
pub mod gpack;
pub mod graphenc;
pub mod smiles;
pub mod wire;
