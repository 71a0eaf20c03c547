pub mod numerics;
pub mod lti;
pub mod dynsys;
pub mod dmd;
pub mod estimate;
pub mod cli;
