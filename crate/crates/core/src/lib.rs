//! Multi-domain recommendation for attracting users into domains they have
//! not used yet: frozen per-domain encoders, a masked-domain transformer that
//! contextualizes them, and joint domain-level / item-level preference heads.

pub mod data;
pub mod numerics;
pub mod encoder;
pub mod model;
pub mod evaluation;
pub mod inference;
pub mod training;
pub mod variants;
