//! Multilinear expansion of the measurement map around a stationary state.

pub mod cascade;
pub mod frechet;
pub mod partitions;

pub use cascade::{
    solve_cascade, solve_first_order, solve_second_order, taylor_pair, CascadeSolution, OrderPair,
    SecondOrder,
};
pub use frechet::{fit_slope, frechet_report, FrechetReport};
pub use partitions::{subsets_by_size, Mask};
