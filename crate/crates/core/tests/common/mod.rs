pub mod charness;
pub mod explicit;
pub mod workflow;
