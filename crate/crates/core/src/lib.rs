pub mod chain;
pub mod composition;
pub mod influence;
pub mod io;
pub mod matrix;
pub mod mechanism;
pub mod oracle;
pub mod verify;
mod serde_ext;
