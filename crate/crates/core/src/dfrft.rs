//! Discrete fractional Fourier transform.
//!
//! All transforms use a centered, dimensionless grid: sample `k` of a length-`N`
//! vector sits at coordinate `(k - N/2) / sqrt(N)` in the `exp(-j 2 pi x u)`
//! convention (equivalently `(k - N/2) * sqrt(2 pi / N)` in the angular
//! convention). On this grid a time shift of `d` samples moves the order-`phi`
//! transform by `d cos(phi)` bins and a modulation by `exp(j 2 pi f n / N)` moves
//! it by `f sin(phi)` bins.
//!
//! [`frft`] is the `O(N log N)` chirp-multiply / chirp-convolve / chirp-multiply
//! algorithm applied to a 2x sinc-interpolated copy of the input. [`frft_direct`]
//! sums the sampled kernel directly in `O(N^2)` and exists as an oracle.

use std::cell::RefCell;
use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Add;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::signal::ComplexSignal;

/// Smallest transform length accepted by the transforms in this module.
pub const MIN_LEN: usize = 8;

/// Angles within this many radians of a multiple of `pi/2` use the exact
/// integer-order transforms.
pub const INTEGER_ORDER_TOLERANCE: f64 = 1e-6;

/// Rotation angle of a fractional transform. `phi = alpha * pi / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrftAngle {
    order: f64,
}

impl FrftAngle {
    pub fn from_radians(phi: f64) -> Self {
        Self {
            order: phi / FRAC_PI_2,
        }
    }

    pub fn from_order(alpha: f64) -> Self {
        Self { order: alpha }
    }

    pub fn radians(self) -> f64 {
        self.order * FRAC_PI_2
    }

    pub fn order(self) -> f64 {
        self.order
    }

    /// `Some(k)` with `k` in `0..4` when the angle is `k pi/2` modulo `2 pi`.
    pub fn integer_order(self) -> Option<u8> {
        let nearest = self.order.round();
        if ((self.order - nearest) * FRAC_PI_2).abs() < INTEGER_ORDER_TOLERANCE {
            Some(nearest.rem_euclid(4.0) as u8)
        } else {
            None
        }
    }
}

impl Add for FrftAngle {
    type Output = FrftAngle;

    fn add(self, rhs: FrftAngle) -> FrftAngle {
        FrftAngle::from_order(self.order + rhs.order)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan_fft(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unitary DFT on the centered grid, in place:
/// `X[k] = N^{-1/2} sum_n x[n] exp(-+ j 2 pi (k - N/2)(n - N/2) / N)`.
fn centered_dft_in_place(x: &mut [Complex64], inverse: bool) {
    let n = x.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let modulation = centered_modulation(n);
    for (v, m) in x.iter_mut().zip(&modulation) {
        *v *= m;
    }
    plan_fft(n, inverse).process(x);
    // exp(sign j 2 pi c^2 / N) with c = N/2 reduces to exp(sign j pi N / 2).
    let global = Complex64::from_polar(1.0 / (n as f64).sqrt(), sign * PI * (n % 4) as f64 / 2.0);
    for (v, m) in x.iter_mut().zip(&modulation) {
        *v *= m * global;
    }
}

/// `exp(-+ j 2 pi k c / N)` with `c = N/2` is `(-1)^k` for every `N`.
fn centered_modulation(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::new(if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0))
        .collect()
}

/// `x[n] -> x[(N - n) mod N]`, the square of the centered DFT.
fn reverse_in_place(x: &mut [Complex64]) {
    x[1..].reverse();
}

fn integer_power_in_place(x: &mut [Complex64], k: u8) {
    match k % 4 {
        0 => {}
        1 => centered_dft_in_place(x, false),
        2 => reverse_in_place(x),
        _ => centered_dft_in_place(x, true),
    }
}

/// Centered unitary DFT (order 1).
pub fn centered_dft(x: &[Complex64]) -> Vec<Complex64> {
    let mut out = x.to_vec();
    centered_dft_in_place(&mut out, false);
    out
}

/// Centered unitary inverse DFT (order -1).
pub fn centered_idft(x: &[Complex64]) -> Vec<Complex64> {
    let mut out = x.to_vec();
    centered_dft_in_place(&mut out, true);
    out
}

/// Precomputed fast transform for one length and angle.
///
/// Orders are reduced into `[0.5, 1.5]` with an exact integer-order
/// transform applied first; the chirp decomposition then runs once.
#[derive(Clone)]
pub struct FrftPlan {
    len: usize,
    integer_part: u8,
    core: Option<ChirpCore>,
}

impl std::fmt::Debug for FrftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrftPlan")
            .field("len", &self.len)
            .field("integer_part", &self.integer_part)
            .field("core_order", &self.core.as_ref().map(|c| c.order))
            .finish()
    }
}

impl FrftPlan {
    pub fn new(len: usize, angle: FrftAngle) -> Result<Self> {
        check_len(len)?;
        if !angle.order().is_finite() {
            return Err(invalid("transform angle must be finite"));
        }
        if let Some(k) = angle.integer_order() {
            return Ok(Self {
                len,
                integer_part: k,
                core: None,
            });
        }
        let shift = (angle.order() - 1.0).round();
        let core_order = angle.order() - shift;
        Ok(Self {
            len,
            integer_part: shift.rem_euclid(4.0) as u8,
            core: Some(ChirpCore::new(len, core_order)),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Transforms `x`, which must have the planned length.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.len {
            return Err(invalid(format!(
                "plan built for length {}, got {}",
                self.len,
                x.len()
            )));
        }
        let mut buf = x.to_vec();
        integer_power_in_place(&mut buf, self.integer_part);
        Ok(match &self.core {
            Some(core) => core.apply(&buf),
            None => buf,
        })
    }
}

/// Chirp-multiply, chirp-convolve, chirp-multiply for `0.5 <= order <= 1.5`.
///
/// Works on a grid of spacing `1 / (2 sqrt(N))`; fine index `m` maps to
/// coordinate `m / (2 sqrt(N))`, original sample `n` to `m = 2n - N`.
#[derive(Clone)]
struct ChirpCore {
    len: usize,
    order: f64,
    /// Spectrum of `sinc(d + 1/2)`, `d` in `-(N-1)..=N-1`, zero-padded to `2N`.
    half_sample_kernel: Vec<Complex64>,
    /// `exp(-j pi tan(phi/2) m^2 / 4N)` for `m` in `-N..N`.
    pre_chirp: Vec<Complex64>,
    /// Spectrum of `exp(j pi csc(phi) d^2 / 4N)`, `d` in `-(2N-1)..=2N-2`, padded to `4N`.
    conv_kernel: Vec<Complex64>,
    /// Output chirp times amplitude and grid weight, per output index.
    post: Vec<Complex64>,
    fft2: Arc<dyn Fft<f64>>,
    ifft2: Arc<dyn Fft<f64>>,
    fft4: Arc<dyn Fft<f64>>,
    ifft4: Arc<dyn Fft<f64>>,
}

impl ChirpCore {
    fn new(n: usize, order: f64) -> Self {
        let phi = order * FRAC_PI_2;
        let nf = n as f64;
        let tan_half = (phi / 2.0).tan();
        let csc = 1.0 / phi.sin();
        let fft2 = plan_fft(2 * n, false);
        let ifft2 = plan_fft(2 * n, true);
        let fft4 = plan_fft(4 * n, false);
        let ifft4 = plan_fft(4 * n, true);

        let mut half_sample_kernel = vec![Complex64::default(); 2 * n];
        for (q, v) in half_sample_kernel.iter_mut().take(2 * n - 1).enumerate() {
            let d = q as f64 - (nf - 1.0) + 0.5;
            v.re = (PI * d).sin() / (PI * d);
        }
        fft2.process(&mut half_sample_kernel);

        let pre_chirp = (0..2 * n)
            .map(|i| {
                let m = i as f64 - nf;
                Complex64::from_polar(1.0, -PI * tan_half * m * m / (4.0 * nf))
            })
            .collect();

        let mut conv_kernel = vec![Complex64::default(); 4 * n];
        for (j, v) in conv_kernel.iter_mut().take(4 * n - 2).enumerate() {
            let d = j as f64 - (2.0 * nf - 1.0);
            *v = Complex64::from_polar(1.0, PI * csc * d * d / (4.0 * nf));
        }
        fft4.process(&mut conv_kernel);

        // sqrt(1 - j cot phi) times the fine-grid weight 1/(2 sqrt N).
        let amplitude = Complex64::new(1.0, -1.0 / phi.tan()).sqrt() / (2.0 * nf.sqrt());
        let post = (0..n)
            .map(|k| {
                let m = 2.0 * k as f64 - nf;
                amplitude * Complex64::from_polar(1.0, -PI * tan_half * m * m / (4.0 * nf))
            })
            .collect();

        Self {
            len: n,
            order,
            half_sample_kernel,
            pre_chirp,
            conv_kernel,
            post,
            fft2,
            ifft2,
            fft4,
            ifft4,
        }
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.len;

        // Half-sample sinc interpolation by linear convolution.
        let mut mid = vec![Complex64::default(); 2 * n];
        mid[..n].copy_from_slice(x);
        self.fft2.process(&mut mid);
        for (v, k) in mid.iter_mut().zip(&self.half_sample_kernel) {
            *v *= k;
        }
        self.ifft2.process(&mut mid);
        let scale2 = 1.0 / (2 * n) as f64;

        let mut fine = vec![Complex64::default(); 4 * n];
        for i in 0..n {
            fine[2 * i] = x[i] * self.pre_chirp[2 * i];
            fine[2 * i + 1] = mid[i + n - 1] * scale2 * self.pre_chirp[2 * i + 1];
        }

        self.fft4.process(&mut fine);
        for (v, k) in fine.iter_mut().zip(&self.conv_kernel) {
            *v *= k;
        }
        self.ifft4.process(&mut fine);
        let scale4 = 1.0 / (4 * n) as f64;

        (0..n)
            .map(|k| fine[2 * k + 2 * n - 1] * scale4 * self.post[k])
            .collect()
    }
}

fn check_len(len: usize) -> Result<()> {
    if len < MIN_LEN {
        return Err(invalid(format!(
            "transform length must be at least {MIN_LEN}, got {len}"
        )));
    }
    Ok(())
}

/// Fast fractional Fourier transform of `x` at `angle`.
pub fn frft(x: &ComplexSignal, angle: FrftAngle) -> Result<ComplexSignal> {
    let plan = FrftPlan::new(x.len(), angle)?;
    Ok(ComplexSignal::from_parts(
        plan.apply(x.samples())?,
        x.sample_rate_hz(),
    ))
}

/// Direct summation of the sampled transform kernel.
///
/// `K(t, u) = sqrt((1 - j cot phi) / 2 pi) exp(j ((u^2 + t^2)/2 cot phi - u t csc phi))`
/// is evaluated at the output points `u_k = (k - N/2) h`, `h = sqrt(2 pi / N)`.
/// The input integral is taken on a grid `P` times finer than `h` (band-limited
/// trigonometric interpolation of `x`), with `P` large enough that the sampled
/// kernel neither aliases the input chirp nor folds copies of the output into
/// the window. Cost is `O(P N^2)`; `P` grows like `1 / |sin phi|` and is capped
/// at [`MAX_DIRECT_OVERSAMPLING`]. Integer orders take the same exact branches
/// as [`frft`].
pub fn frft_direct(x: &ComplexSignal, angle: FrftAngle) -> Result<ComplexSignal> {
    let n = x.len();
    check_len(n)?;
    if !angle.order().is_finite() {
        return Err(invalid("transform angle must be finite"));
    }
    if let Some(k) = angle.integer_order() {
        let mut out = x.samples().to_vec();
        integer_power_in_place(&mut out, k);
        return Ok(ComplexSignal::from_parts(out, x.sample_rate_hz()));
    }

    // Kernel is 2 pi periodic; keep phi in (-pi, pi] for the principal root.
    let mut phi = angle.radians().rem_euclid(2.0 * PI);
    if phi > PI {
        phi -= 2.0 * PI;
    }
    let cot = 1.0 / phi.tan();
    let csc = 1.0 / phi.sin();
    let factor = (1.0 + cot.abs()).max(csc.abs()).ceil() as usize + 1;
    let factor = factor.min(MAX_DIRECT_OVERSAMPLING);

    let h = (2.0 * PI / n as f64).sqrt();
    let fine_h = h / factor as f64;
    let fine = band_limited_upsample(x.samples(), factor);
    let m = fine.len();
    let weight = (Complex64::new(1.0, -cot) / (2.0 * PI)).sqrt() * fine_h;

    let input: Vec<(f64, Complex64)> = fine
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let t = (i as f64 - m as f64 / 2.0) * fine_h;
            (t, v * Complex64::from_polar(1.0, 0.5 * cot * t * t))
        })
        .collect();

    let out = (0..n)
        .map(|k| {
            let u = (k as f64 - n as f64 / 2.0) * h;
            let acc: Complex64 = input
                .iter()
                .map(|&(t, v)| v * Complex64::from_polar(1.0, -u * t * csc))
                .sum();
            weight * Complex64::from_polar(1.0, 0.5 * cot * u * u) * acc
        })
        .collect();
    Ok(ComplexSignal::from_parts(out, x.sample_rate_hz()))
}

/// Upper bound on the input oversampling used by [`frft_direct`].
pub const MAX_DIRECT_OVERSAMPLING: usize = 64;

/// Trigonometric interpolation onto a grid `factor` times finer, keeping the
/// original samples at every `factor`-th point.
fn band_limited_upsample(x: &[Complex64], factor: usize) -> Vec<Complex64> {
    if factor == 1 {
        return x.to_vec();
    }
    let n = x.len();
    let m = n * factor;
    let spectrum = centered_dft(x);
    let mut padded = vec![Complex64::default(); m];
    let offset = m / 2 - n / 2;
    padded[offset..offset + n].copy_from_slice(&spectrum);
    let scale = (factor as f64).sqrt();
    centered_idft(&padded)
        .into_iter()
        .map(|v| v * scale)
        .collect()
}

/// Fractional cross-correlation detector for one reference chirp.
///
/// Holds the conjugated order-`phi_opt + pi/2` transform of the reference so
/// repeated block evaluations cost one fast transform and one inverse DFT each.
#[derive(Debug, Clone)]
pub struct FractionalCorrelator {
    plan: FrftPlan,
    reference_conj: Vec<Complex64>,
}

impl FractionalCorrelator {
    pub fn new(reference: &[Complex64], phi_opt: f64) -> Result<Self> {
        let angle = FrftAngle::from_radians(phi_opt + FRAC_PI_2);
        let plan = FrftPlan::new(reference.len(), angle)?;
        let reference_conj = plan
            .apply(reference)?
            .into_iter()
            .map(|v| v.conj())
            .collect();
        Ok(Self {
            plan,
            reference_conj,
        })
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `R(u) = |F^{-pi/2}[ F^{phi'} block . (F^{phi'} reference)^* ](u)|^2`.
    pub fn metric(&self, block: &[Complex64]) -> Result<Vec<f64>> {
        let mut product = self.plan.apply(block)?;
        for (p, r) in product.iter_mut().zip(&self.reference_conj) {
            *p *= r;
        }
        centered_dft_in_place(&mut product, true);
        Ok(product.into_iter().map(|v| v.norm_sqr()).collect())
    }
}

/// Detection metric of `block` against `reference` for a chirp whose
/// transform concentrates at `phi_opt`.
pub fn fractional_correlation(
    block: &ComplexSignal,
    reference: &ComplexSignal,
    phi_opt: FrftAngle,
) -> Result<Vec<f64>> {
    if block.len() != reference.len() {
        return Err(invalid(format!(
            "block length {} differs from reference length {}",
            block.len(),
            reference.len()
        )));
    }
    FractionalCorrelator::new(reference.samples(), phi_opt.radians())?.metric(block.samples())
}
