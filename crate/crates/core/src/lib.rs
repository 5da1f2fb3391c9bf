pub mod augment;
pub mod cli;
pub mod dataset;
pub mod diffraction;
pub mod earfcn;
pub mod empirical;
pub mod ensemble;
pub mod evaluation;
pub mod features;
pub mod geodesy;
pub mod learner;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod reference;
pub mod simulator;
pub mod toy;
