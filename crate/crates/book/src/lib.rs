//! The guide's chapters, compiled so that `cargo test` runs their code
//! blocks. One module per chapter keeps failures traceable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/populations.md")]
pub mod populations {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/fitting.md")]
pub mod fitting {}
#[doc = include_str!("../../../book/src/starts.md")]
pub mod starts {}
#[doc = include_str!("../../../book/src/selection.md")]
pub mod selection {}
#[doc = include_str!("../../../book/src/mixed-models.md")]
pub mod mixed_models {}
#[doc = include_str!("../../../book/src/simulations.md")]
pub mod simulations {}
#[doc = include_str!("../../../book/src/advice-study.md")]
pub mod advice_study {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
