pub mod bellman;
pub mod error;
pub mod offline;
pub mod policy;
pub mod simulate;
pub mod stats;
pub mod table_io;
