//! Certified computations around infinite products and infinite-dimensional
//! geometry: lazily-represented sequences, parallelepipeds with
//! translation-invariant product volumes, density averages and core sets,
//! tail integration of product functions, a mechanical bounded-set /
//! small-measure construction, and random geometric graph asymptotics.
//!
//! # Example
//!
//! Certify the volume of the infinite-dimensional box whose `i`-th side is
//! `[0, 1 + 2^-i]`:
//!
//! ```
//! use measure_infinity::parallelepiped::{MeasureValue, Parallelepiped};
//! use measure_infinity::sequences::{TailDescriptor, TailedSequence};
//!
//! let lower = TailedSequence::constant(0.0);
//! let upper = TailedSequence::new(vec![], TailDescriptor::geometric_drift(1.0, 0.5))?;
//! let cell = Parallelepiped::new(lower, upper)?;
//!
//! match cell.volume(1e-9)? {
//!     MeasureValue::Finite { value, err } => {
//!         assert!((value - 2.384_231_029).abs() < 1e-8 + err);
//!     }
//!     other => panic!("unexpected classification: {other:?}"),
//! }
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod density;
pub mod dieudonne;
pub mod function;
pub mod jessen;
pub mod numeric;
pub mod parallelepiped;
pub mod rgg;
pub mod sequences;
