pub mod bench;
pub mod codec;
pub mod masking;
pub mod mkckks;
pub mod protocol;
pub mod ring;
pub mod sampling;
