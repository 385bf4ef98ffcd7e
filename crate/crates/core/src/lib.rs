pub mod corpus;
pub mod dsp;
pub mod model;
pub mod seed;
pub mod stats;
pub mod tensor_core;
pub mod trainer;
