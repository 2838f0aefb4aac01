pub mod aggregate;
pub mod bank;
pub mod difficulty;
pub mod refmachine;
pub mod tasks;
