pub mod error;
pub mod quad;
pub mod special;
pub mod powerlaw;
pub mod select;
pub mod rooney;
pub mod oracle;
pub mod simulate;
pub mod estimate;
pub mod surface;
pub mod cli;
