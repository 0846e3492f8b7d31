//! HTTP service and batch front end over the `epiops` library.

pub mod config;
pub mod error;
pub mod http;
pub mod service;
pub mod store;

pub use config::Config;
pub use error::ServiceError;
pub use service::Service;
