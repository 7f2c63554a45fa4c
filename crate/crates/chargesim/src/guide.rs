// The book chapters under book/src double as doc-tests: each chapter is
// included as a module's documentation, so `cargo test --doc` compiles and
// runs every code block the guide shows.

#[doc = include_str!("../../../book/src/circuits.md")]
pub mod circuits {}

#[doc = include_str!("../../../book/src/standards.md")]
pub mod standards {}

#[doc = include_str!("../../../book/src/sessions.md")]
pub mod sessions {}

#[doc = include_str!("../../../book/src/attacks.md")]
pub mod attacks {}

#[doc = include_str!("../../../book/src/bms.md")]
pub mod bms {}

#[doc = include_str!("../../../book/src/countermeasure.md")]
pub mod countermeasure {}
