pub mod error;
pub mod info;
pub mod rd;
pub mod sim;
pub mod region;
pub mod types;

pub use error::{Error, Result};

/// The guide's listings, compiled and run by `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tables.md")]
    mod tables {}
    #[doc = include_str!("../../../book/src/typicality.md")]
    mod typicality {}
    #[doc = include_str!("../../../book/src/rate_distortion.md")]
    mod rate_distortion {}
    #[doc = include_str!("../../../book/src/region.md")]
    mod region {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
