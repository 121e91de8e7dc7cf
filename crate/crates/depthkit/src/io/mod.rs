//! File formats: PFM depth maps, PGM masks, lookup tables, head weights.

pub mod lut;
pub mod pfm;
pub mod pgm;
pub mod weights;
