//! Semiclassical double-well spectra, avoided-crossing lattices, and
//! Landau-Zener network evolution for quantum separatrix crossing.

pub mod knh;
pub mod lznet;
pub mod numerics;
pub mod oracle;
pub mod potential;
pub mod semiclassics;
pub mod special;
pub mod spectrum;
