//! Classical comparators: 2SLS, control functions (linear and natural cubic
//! spline), and the engression conditional-distribution baseline.

mod control_function;
mod engression;
pub(crate) mod lstsq;
mod spline;
mod tsls;

pub use control_function::{fit_cf, CfBasis, CfFit};
pub use engression::{fit_engression, EngressionFit};
pub use spline::{Basis, SplineBasis};
pub use tsls::{fit_tsls, LinearIvFit};
