//! The `lossav` guide. Each chapter of `book/src` is compiled here so its
//! code blocks run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/binprob.md")]
pub mod binprob {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/anomalies.md")]
pub mod anomalies {}

#[doc = include_str!("../../../book/src/estimation.md")]
pub mod estimation {}

#[doc = include_str!("../../../book/src/policy.md")]
pub mod policy {}

#[doc = include_str!("../../../book/src/bargaining.md")]
pub mod bargaining {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
