#![allow(dead_code)]

pub mod fixtures;
pub mod lp_oracle;
pub mod plan_oracle;
