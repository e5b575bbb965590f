//! File formats, benchmark recipes and the `koopctl` command line built on
//! [`koopctl_core`].

pub mod cli;
pub mod io;
pub mod pipeline;
