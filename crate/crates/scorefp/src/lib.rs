//! Files, configuration and command pipeline around [`scorefp_core`].

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod image_io;
pub mod pipeline;

pub use config::{Mode, RunConfig};
pub use error::{AppError, AppResult};
