//! Validation tooling: the trace fuzzer with expected-verdict labeling,
//! and generators for the attack scenarios.

pub mod attack;
pub mod fixtures;
pub mod fuzz;
pub mod label;

pub use attack::{gen_attack, token_bucket_oracle, AttackCase, AttackParams, AttackScenario, BadParams};
pub use fuzz::{fuzz_trace, Edit, EditLog};
pub use label::{label_trace, LabeledTrace};
