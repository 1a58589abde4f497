pub mod geometry;
pub mod homotopy;
pub mod mindist;
pub mod polysys;
pub mod sampler;
pub mod tda;
