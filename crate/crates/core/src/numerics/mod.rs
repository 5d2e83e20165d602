//! Numerical building blocks: normal distribution, Gauss quadrature rules and
//! one-dimensional root finding / maximisation.

pub mod normal;
pub mod quadrature;
pub mod roots;

pub use normal::{norm_cdf, norm_pdf};
pub use quadrature::{GaussHermite, GaussLegendre};
pub use roots::{brent, golden_section_max};
