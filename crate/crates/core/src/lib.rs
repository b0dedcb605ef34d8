//! Synthesis and enactment of assured grid patrol missions.
//!
//! The crate is organised as a pipeline:
//!
//! * [`mission`] parses mission files into a grid workspace plus capability
//!   models and compiles them into a control problem,
//! * [`lts`] provides the labelled transition systems those models live in,
//! * [`fltl`] gives fluents and temporal formulas over event traces,
//! * [`synthesis`] solves the control problem and extracts a controller,
//! * [`enactor`] interprets the controller at runtime against
//! * [`hybrid`] motion/alert modules driving the [`sim`] two-wheel robot plant.

pub mod enactor;
pub mod fltl;
pub mod hybrid;
pub mod lts;
pub mod mission;
pub mod sim;
pub mod synthesis;
