pub mod gather;
pub mod toy;
