#![allow(dead_code)]

pub mod networks;
pub mod vertex_oracle;
