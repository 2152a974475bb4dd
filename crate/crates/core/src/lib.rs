pub mod conic;
pub mod error;
pub mod freespace;
pub mod geometry;
mod lp;
pub mod pipeline;
pub mod plot;
pub mod polynomial;
pub mod region_graph;
pub mod scaling_sdp;
pub mod scenario;
pub mod trajectory;

pub use error::{Error, Result};
