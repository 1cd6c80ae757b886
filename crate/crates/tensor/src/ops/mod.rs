pub mod conv;
pub mod elementwise;
pub mod linalg;
pub mod loss;
pub mod reduce;
pub mod resample;
pub mod shape;
