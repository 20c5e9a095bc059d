use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real number type the numerical modules are generic over.
///
/// Implemented for `f32` and `f64`. Conversions from literals go through
/// [`Scalar::lit`], which panics only if the target type cannot represent
/// a finite `f64`, which never happens for the two provided impls.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    #[inline]
    fn from_millis(ms: i64) -> Self {
        Self::from_i64(ms).expect("duration representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
