pub mod error;
pub mod levels;
pub mod linalg;
pub mod master;
pub mod models;
pub mod noise;
pub mod integrator;
pub mod oracle;
pub mod config;
pub mod ensemble;
pub mod output;
pub mod figures;

// The guide's code blocks run as doc-tests so they cannot go stale.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/level-dynamics.md")]
    mod level_dynamics {}
    #[doc = include_str!("../../../book/src/master-equation.md")]
    mod master_equation {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
