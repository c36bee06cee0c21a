//! Time-coverage reachability graphs for Time-Basic Petri nets.

pub mod cli;
pub mod firing;
pub mod graph;
pub mod lexer;
pub mod lincons;
pub mod net;
pub mod proptool;
pub mod rational;
pub mod symstate;
