//! Γ-calculus, samplers and functional-inequality checks for
//! Ornstein–Uhlenbeck operators `L = Δ_H − s E` on step-2 Carnot groups.

pub mod group;
pub mod jet;
pub mod linalg;
pub mod constants;
pub mod gamma;
pub mod rng;
pub mod corpus;
pub mod report;
pub mod sim;
pub mod distance;
pub mod lab;
pub mod cli;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/groups.md")]
    mod groups {}
    #[doc = include_str!("../../../book/src/gamma.md")]
    mod gamma {}
    #[doc = include_str!("../../../book/src/constants.md")]
    mod constants {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/distance.md")]
    mod distance {}
    #[doc = include_str!("../../../book/src/checks.md")]
    mod checks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
