use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Real number type the tape runs in. `f32` for training, `f64` for
/// gradient checks.
pub trait Scalar: Float + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static {
    /// `C = alpha * A B + beta * C` on strided row/column layouts.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn of(x: f64) -> Self;

    fn f64(self) -> f64;

    /// Hyperbolic tangent; may trade the last ulps for speed.
    fn tanh_fast(self) -> Self {
        self.tanh()
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path $(, $extra:item)?) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the slices cover every index reachable through the
                // given dense strides, checked by the assertion above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }

            fn of(x: f64) -> Self {
                x as $t
            }

            fn f64(self) -> f64 {
                self as f64
            }

            $($extra)?
        }
    };
}

impl_scalar!(
    f32,
    matrixmultiply::sgemm,
    // exp-based form; within a few ulps of libm tanhf and several times faster
    fn tanh_fast(self) -> Self {
        let a = self.abs();
        if a < 1e-3 {
            self - self * self * self / 3.0
        } else if a > 9.0 {
            self.signum()
        } else {
            let e = (2.0 * a).exp();
            ((e - 1.0) / (e + 1.0)).copysign(self)
        }
    }
);
impl_scalar!(f64, matrixmultiply::dgemm);
