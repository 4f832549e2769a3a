//! Floating-point abstraction shared by the field and its gradient engine.
//!
//! Production training runs in `f32`; gradient checks instantiate the same
//! code in `f64` so finite differences are not swamped by rounding.

use std::fmt::Debug;

use num_traits::Float;

pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    /// `c = alpha * a * b + beta * c` for row/column-strided matrices.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and `m x n`
    /// matrices; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// Exponential that the compiler can vectorize in elementwise loops.
    fn exp_fast(self) -> Self;

    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;

    #[inline(always)]
    fn sigmoid(self) -> Self {
        Self::one() / (Self::one() + (-self).exp_fast())
    }

    /// `act = z * sigmoid(z)` and `sig = sigmoid(z)` elementwise.
    fn silu_forward(pre: &[Self], act: &mut [Self], sig: &mut [Self]) {
        silu_forward_generic(pre, act, sig)
    }

    /// `d_pre = d_act * sig * (1 + z * (1 - sig))` elementwise.
    fn silu_backward(d_act: &[Self], pre: &[Self], sig: &[Self], d_pre: &mut [Self]) {
        silu_backward_generic(d_act, pre, sig, d_pre)
    }

    /// `ln(1 + e^x)` evaluated without overflow.
    #[inline(always)]
    fn softplus(self) -> Self {
        let zero = Self::zero();
        self.max(zero) + (-(self.abs())).exp().ln_1p()
    }
}

impl Scalar for f32 {
    #[inline]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    #[inline(always)]
    fn exp_fast(self) -> f32 {
        exp_f32(self)
    }

    fn silu_forward(pre: &[f32], act: &mut [f32], sig: &mut [f32]) {
        simd::silu_forward(pre, act, sig)
    }

    fn silu_backward(d_act: &[f32], pre: &[f32], sig: &[f32], d_pre: &mut [f32]) {
        simd::silu_backward(d_act, pre, sig, d_pre)
    }

    #[inline(always)]
    fn from_f64(v: f64) -> f32 {
        v as f32
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    #[inline(always)]
    fn exp_fast(self) -> f64 {
        self.exp()
    }

    #[inline(always)]
    fn from_f64(v: f64) -> f64 {
        v
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}

#[inline(always)]
fn silu_forward_generic<T: Scalar>(pre: &[T], act: &mut [T], sig: &mut [T]) {
    assert!(act.len() == pre.len() && sig.len() == pre.len());
    for ((&z, a), s) in pre.iter().zip(act.iter_mut()).zip(sig.iter_mut()) {
        let v = z.sigmoid();
        *s = v;
        *a = z * v;
    }
}

#[inline(always)]
fn silu_backward_generic<T: Scalar>(d_act: &[T], pre: &[T], sig: &[T], d_pre: &mut [T]) {
    assert!(d_act.len() == pre.len() && sig.len() == pre.len() && d_pre.len() == pre.len());
    for (((&g, &z), &s), o) in d_act.iter().zip(pre).zip(sig).zip(d_pre.iter_mut()) {
        *o = g * s * (T::one() + z * (T::one() - s));
    }
}

/// Runtime dispatch of the `f32` elementwise kernels to the widest vector
/// extension available; the bodies are the generic loops.
mod simd {
    macro_rules! dispatch {
        ($name:ident, $generic:ident, ($($arg:ident: $ty:ty),*)) => {
            pub fn $name($($arg: $ty),*) {
                #[cfg(target_arch = "x86_64")]
                {
                    #[target_feature(enable = "avx512f")]
                    unsafe fn wide($($arg: $ty),*) {
                        super::$generic($($arg),*)
                    }
                    #[target_feature(enable = "avx2,fma")]
                    unsafe fn mid($($arg: $ty),*) {
                        super::$generic($($arg),*)
                    }
                    if std::arch::is_x86_feature_detected!("avx512f") {
                        // SAFETY: the feature was detected at runtime.
                        return unsafe { wide($($arg),*) };
                    }
                    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
                        // SAFETY: the features were detected at runtime.
                        return unsafe { mid($($arg),*) };
                    }
                }
                super::$generic($($arg),*)
            }
        };
    }

    dispatch!(silu_forward, silu_forward_generic, (pre: &[f32], act: &mut [f32], sig: &mut [f32]));
    dispatch!(silu_backward, silu_backward_generic, (d_act: &[f32], pre: &[f32], sig: &[f32], d_pre: &mut [f32]));
}

/// Enables flush-to-zero and denormals-are-zero on the current thread until
/// dropped. Denormal operands slow the training kernels down by orders of
/// magnitude once activations saturate.
pub struct FlushDenormals {
    #[cfg(target_arch = "x86_64")]
    saved: u32,
}

#[cfg(target_arch = "x86_64")]
const FTZ_DAZ: u32 = (1 << 15) | (1 << 6);

impl FlushDenormals {
    pub fn new() -> Self {
        #[cfg(target_arch = "x86_64")]
        {
            let saved = read_mxcsr();
            write_mxcsr(saved | FTZ_DAZ);
            Self { saved }
        }
        #[cfg(not(target_arch = "x86_64"))]
        Self {}
    }
}

impl Default for FlushDenormals {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for FlushDenormals {
    fn drop(&mut self) {
        #[cfg(target_arch = "x86_64")]
        write_mxcsr(self.saved);
    }
}

#[cfg(target_arch = "x86_64")]
fn read_mxcsr() -> u32 {
    let mut v = 0u32;
    // SAFETY: stmxcsr stores the SSE control register to a valid u32.
    unsafe { std::arch::asm!("stmxcsr [{}]", in(reg) &mut v, options(nostack)) };
    v
}

#[cfg(target_arch = "x86_64")]
fn write_mxcsr(v: u32) {
    // SAFETY: only the FTZ/DAZ bits differ from a value read from the register.
    unsafe { std::arch::asm!("ldmxcsr [{}]", in(reg) &v, options(nostack, readonly)) };
}

/// Branch-free `exp` for `f32`: Cody-Waite range reduction followed by a
/// degree-6 polynomial. Relative error stays within a few ulp on the clamped
/// domain `[-87, 88]`.
#[inline(always)]
pub fn exp_f32(x: f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_145_75;
    const LN2_LO: f32 = 1.428_606_8e-6;
    // 1.5 * 2^23: adding and subtracting rounds to the nearest integer.
    const ROUND: f32 = 12_582_912.0;

    let x = x.max(-87.0).min(88.0);
    let shifted = x * LOG2E + ROUND;
    let n = shifted - ROUND;
    let r = x - n * LN2_HI - n * LN2_LO;
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0 + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0))))));
    // The low mantissa bits of `shifted` hold `n` offset by 2^22.
    let n_int = (shifted.to_bits() as i32).wrapping_sub(0x4B40_0000);
    let bits = (n_int.wrapping_add(127) as u32) << 23;
    p * f32::from_bits(bits)
}
