pub mod classify;
pub mod geometry;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod ragbuild;
pub mod raster;
pub mod zernike;
