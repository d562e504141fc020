pub mod graph;
pub mod groebner;
pub mod ident;
pub mod poly;
pub mod rational;
pub mod verify;
pub mod experiment;
