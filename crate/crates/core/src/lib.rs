pub mod criteria;
pub mod driver;
pub mod error;
pub mod feedback_loop;
pub mod fock;
pub mod moments;
pub mod oracle;
pub mod output;
pub mod scales;
pub mod signal;

pub use error::{Error, Result};
