//! Reactive synthesis from imperative specifications: compilation to
//! symbolic GR(1) games, solving, counterexample debugging and
//! user-guided code generation.

pub mod cfa;
pub mod codegen;
pub mod debug;
pub mod encode;
pub mod frontend;
pub mod game;
pub mod interp;
pub mod model;
pub mod solver;
