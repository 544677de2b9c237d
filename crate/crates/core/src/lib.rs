pub mod agent;
pub mod context;
pub mod document;
pub mod exec;
pub mod policy;
pub mod presence;
pub mod scope;
pub mod session;
pub mod trigger;
