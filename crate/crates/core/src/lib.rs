//! Profile-driven stateful firewall engine for smart-home traffic.
//!
//! Device profiles describe the legitimate interactions of a device as
//! ordered policy sequences. Each interaction compiles to a finite state
//! machine; replaying a packet trace through the engine yields one
//! ACCEPT/DROP verdict per packet, enforcing interaction order, packet
//! rates, duration/count limits, and DNS-resolved endpoint constraints.

pub mod dns;
pub mod engine;
pub mod fsm;
pub mod harness;
pub mod matcher;
pub mod names;
pub mod packet;
pub mod parser;
pub mod profile;
pub mod yaml;

#[cfg(test)]
pub(crate) mod testutil;

pub use engine::{Decision, Engine, EngineConfig, ReplayReport, Verdict};
pub use parser::{parse_profile, to_canonical_yaml, FileLoader, ParseError};
pub use profile::{validate_profile, Diagnostic, Profile};
