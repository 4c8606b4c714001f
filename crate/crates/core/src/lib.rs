pub mod cli;
pub mod error;
pub mod gl2z;
pub mod intmat;
pub mod sapphire;
pub mod structgrp;
pub mod torusbundle;
pub mod words;

pub use error::{Error, Result};
