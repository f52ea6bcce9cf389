pub mod gradnet;
pub mod naive;
