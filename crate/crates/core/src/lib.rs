pub mod cli;
pub mod contact;
pub mod elasticity;
pub mod mesh;
pub mod oracles;
pub mod solver;
pub mod sparse;
