#![allow(dead_code)]

pub mod scalar_oracle;
