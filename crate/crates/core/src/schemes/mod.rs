//! The five pairing schemes under evaluation.

pub mod karapanos;
pub mod miettinen;
pub mod schurmann;
pub mod shrestha;
pub mod truong;
