pub mod cli;
pub mod fixtures;
pub mod protocol;
pub mod server;
pub mod session;
