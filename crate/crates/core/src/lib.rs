pub mod error;
pub mod graph;
pub mod io;
pub mod kernel;
pub mod partition;
pub mod pipeline;
pub mod rational;
pub mod reference;
pub mod report;
pub mod rewire;
pub mod seed;
pub mod synth;
pub mod validate;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/homophily.md")]
    mod homophily {}
    #[doc = include_str!("../../../book/src/reference.md")]
    mod reference {}
    #[doc = include_str!("../../../book/src/rewiring.md")]
    mod rewiring {}
    #[doc = include_str!("../../../book/src/partitioning.md")]
    mod partitioning {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
