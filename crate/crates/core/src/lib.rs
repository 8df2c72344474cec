pub mod backstep;
pub mod cli;
pub mod expr;
pub mod matched;
pub mod model;
pub mod moore_greitzer;
pub mod sim;
pub mod textfmt;
pub mod verify;
