#![allow(dead_code)]

#[allow(unused_imports)]
pub use volterra_lab::rng::{random_functional, smooth_positive, smooth_signed};

pub fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}
