#![allow(dead_code, unused_imports)]

pub mod formats;
pub mod gradcheck;
pub mod oracles;
pub mod pipeline;

pub use gradcheck::*;
