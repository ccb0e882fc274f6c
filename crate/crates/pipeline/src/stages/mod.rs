pub mod describe;
pub mod embed;
pub mod expand;
pub mod filter;
pub mod genericize;
pub mod instantiate;
pub mod judge;
pub mod matching;
pub mod pack;
pub mod sample;
pub mod stats;
