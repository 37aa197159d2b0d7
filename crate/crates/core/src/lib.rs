//! Open photogrammetry toolkit for fixed stereo-camera coastal monitoring.
//!
//! The crate covers the whole processing chain from checkerboard corners to
//! accuracy figures:
//!
//! - [`calibration`]: planar intrinsic calibration with Brown-Conrady distortion
//! - [`camera`]: the camera model and rectified-stereo depth conversion
//! - [`stereo`]: census matching, disparity and colorized point clouds
//! - [`georectify`]: GCP-driven projective georectification and x/y RMSE
//! - [`registration`]: control-point similarity alignment of point clouds
//! - [`surface`]: Delaunay TIN, DSM rasterization, clipping and vertical checks
//! - [`io`]: LAS, ESRI ASCII grid, world file, PGM/PPM and the text formats

// `!(x > 0.0)` is used throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod camera;
mod cloud;
pub mod error;
pub mod geometry;
pub mod georectify;
mod image;
pub mod io;
pub mod registration;
pub mod stereo;
pub mod surface;

pub use cloud::{CloudPoint, PointCloud};
pub use error::{Error, ErrorKind, Result};
pub use image::{GrayImage, RgbaImage};
