//! Convolution of the time-dependent basis functions with the resolution
//! function.
//!
//! Every observable density is a linear combination of four basis functions
//! of the signed time t:
//!
//! b0 = e^{-|t|/tau}, b_cos = b0 cos(dm t), b_sin = b0 sin(dm t),
//! b_bkg = e^{-|t|/tau_bkg} / (2 tau_bkg).
//!
//! Only the coefficients depend on the mixing phase and the signal fraction,
//! so the convolved basis is computed once per (t - mu, sigma) and shared.

use rayon::prelude::*;

use super::resolution::DscbShape;
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::quad::integrate_vec;

pub const N_BASIS: usize = 4;

/// Absolute tolerance per quadrature piece of the direct convolution.
const PIECE_TOL: f64 = 1e-11;
/// Largest accepted total error estimate of a direct convolution.
const MAX_ERROR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisKernel {
    tau: f64,
    delta_m: f64,
    tau_bkg: f64,
}

impl BasisKernel {
    pub fn new(tau: f64, delta_m: f64, tau_bkg: f64) -> Result<Self> {
        ensure_finite("tau", tau)?;
        ensure_finite("delta_m", delta_m)?;
        ensure_finite("tau_bkg", tau_bkg)?;
        if tau <= 0.0 || tau_bkg <= 0.0 {
            return Err(invalid("tau", "lifetimes must be positive"));
        }
        Ok(Self { tau, delta_m, tau_bkg })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn delta_m(&self) -> f64 {
        self.delta_m
    }
    pub fn tau_bkg(&self) -> f64 {
        self.tau_bkg
    }

    /// Integrals of the four basis functions over the real line.
    pub fn integrals(&self) -> [f64; N_BASIS] {
        let x = self.tau * self.delta_m;
        [2.0 * self.tau, 2.0 * self.tau / (1.0 + x * x), 0.0, 1.0]
    }
}

/// Unconvolved basis values at signed time `t`.
pub fn basis_values(kernel: &BasisKernel, t: f64) -> [f64; N_BASIS] {
    if !t.is_finite() {
        return [0.0; N_BASIS];
    }
    let e = (-t.abs() / kernel.tau).exp();
    let (s, c) = (kernel.delta_m * t).sin_cos();
    let b = (-t.abs() / kernel.tau_bkg).exp() / (2.0 * kernel.tau_bkg);
    [e, e * c, e * s, b]
}

/// Source of convolved basis values at u = t - mu for a core width sigma.
pub trait BasisSource: Send + Sync {
    fn basis(&self, u: f64, sigma: f64) -> Result<[f64; N_BASIS]>;
    fn kernel(&self) -> BasisKernel;
    fn shape(&self) -> DscbShape;
}

fn accumulate(acc: &mut [f64; N_BASIS], err: &mut f64, piece: ([f64; N_BASIS], f64)) {
    for (a, v) in acc.iter_mut().zip(&piece.0) {
        *a += v;
    }
    *err += piece.1;
}

/// Convolved basis at u = t - mu by direct quadrature over the standardized
/// resolution variable X, split at the shape transitions and at the kink
/// X = u/sigma of e^{-|t|}. Power-law tails are mapped to a finite interval
/// with uniform weight.
pub fn convolve_basis(kernel: &BasisKernel, shape: &DscbShape, u: f64, sigma: f64) -> Result<[f64; N_BASIS]> {
    ensure_finite("delta_t - mu", u)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    let (al, ah, nl, nh) = (shape.alpha_l(), shape.alpha_h(), shape.n_l(), shape.n_h());
    let xs = u / sigma;
    let mut acc = [0.0; N_BASIS];
    let mut err = 0.0;

    let core = |x: f64| {
        let w = (-0.5 * x * x).exp();
        basis_values(kernel, u - sigma * x).map(|b| b * w)
    };
    let mut cuts = vec![-al];
    if xs > -al && xs < ah {
        cuts.push(xs);
    }
    cuts.push(ah);
    for w in cuts.windows(2) {
        accumulate(&mut acc, &mut err, integrate_vec(core, w[0], w[1], PIECE_TOL)?);
    }

    // In the tail variable the exponential around the kink can be far
    // narrower than the interval, so cut at a ladder of decay lengths.
    let scale = kernel.tau.max(kernel.tau_bkg) / sigma;
    let marks: Vec<f64> = KINK_LADDER.iter().flat_map(|&d| [xs - d * scale, xs + d * scale]).collect();

    // tail variable s = y^{-(n-1)} in (0, 1], X = -/+ (alpha + (n/alpha)(y - 1))
    let left_w = (-0.5 * al * al).exp() * (nl / al) / (nl - 1.0);
    let left = |s: f64| {
        let x = -al - (nl / al) * (s.powf(-1.0 / (nl - 1.0)) - 1.0);
        basis_values(kernel, u - sigma * x).map(|b| b * left_w)
    };
    let cuts = tail_cuts(&marks, |x| (x < -al).then(|| (1.0 - (al / nl) * (al + x)).powf(1.0 - nl)));
    for w in cuts.windows(2) {
        accumulate(&mut acc, &mut err, integrate_vec(left, w[0], w[1], PIECE_TOL)?);
    }

    let right_w = (-0.5 * ah * ah).exp() * (nh / ah) / (nh - 1.0);
    let right = |s: f64| {
        let x = ah + (nh / ah) * (s.powf(-1.0 / (nh - 1.0)) - 1.0);
        basis_values(kernel, u - sigma * x).map(|b| b * right_w)
    };
    let cuts = tail_cuts(&marks, |x| (x > ah).then(|| (1.0 + (ah / nh) * (x - ah)).powf(1.0 - nh)));
    for w in cuts.windows(2) {
        accumulate(&mut acc, &mut err, integrate_vec(right, w[0], w[1], PIECE_TOL)?);
    }

    let total = shape.integral();
    if err / total > MAX_ERROR {
        return Err(Error::NumericFailure {
            context: "resolution convolution",
            detail: format!("error estimate {:e} at u = {u}, sigma = {sigma}", err / total),
        });
    }
    Ok(acc.map(|v| v / total))
}

const KINK_LADDER: [f64; 6] = [0.0, 0.5, 2.0, 8.0, 32.0, 128.0];

/// Sorted cut points in s in [0, 1] for the X positions that fall in a tail.
fn tail_cuts(marks: &[f64], to_s: impl Fn(f64) -> Option<f64>) -> Vec<f64> {
    let mut cuts: Vec<f64> = marks.iter().filter_map(|&x| to_s(x)).filter(|s| *s > 0.0 && *s < 1.0).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// Direct (untabulated) convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectConvolution {
    pub kernel: BasisKernel,
    pub shape: DscbShape,
}

impl DirectConvolution {
    pub fn new(kernel: BasisKernel, shape: DscbShape) -> Self {
        Self { kernel, shape }
    }
}

impl BasisSource for DirectConvolution {
    fn basis(&self, u: f64, sigma: f64) -> Result<[f64; N_BASIS]> {
        convolve_basis(&self.kernel, &self.shape, u, sigma)
    }
    fn kernel(&self) -> BasisKernel {
        self.kernel
    }
    fn shape(&self) -> DscbShape {
        self.shape
    }
}

/// Grid of a `ConvolutionTable`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableSpec {
    /// The grid covers u in [-u_max, u_max].
    pub u_max: f64,
    pub du: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Number of sigma nodes; 1 tabulates a single width.
    pub n_sigma: usize,
}

impl TableSpec {
    /// Grid covering sigma within `n_widths` constraint widths of the nominal
    /// value (clipped away from zero).
    pub fn around(sigma: f64, sigma_width: f64, n_widths: f64) -> Self {
        if sigma_width <= 0.0 {
            return Self { u_max: 25.0, du: 0.01, sigma_min: sigma, sigma_max: sigma, n_sigma: 1 };
        }
        let lo = (sigma - n_widths * sigma_width).max(0.25 * sigma);
        let hi = sigma + n_widths * sigma_width;
        Self { u_max: 25.0, du: 0.01, sigma_min: lo, sigma_max: hi, n_sigma: 25 }
    }
}

/// Tabulated convolved basis with 4-point Lagrange interpolation in u and in
/// sigma. Points outside the grid fall back to direct quadrature.
#[derive(Debug, Clone)]
pub struct ConvolutionTable {
    direct: DirectConvolution,
    spec: TableSpec,
    n_u: usize,
    d_sigma: f64,
    values: Vec<[f64; N_BASIS]>,
}

fn lagrange4(t: f64) -> [f64; 4] {
    // nodes at -1, 0, 1, 2
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

impl ConvolutionTable {
    pub fn build(direct: DirectConvolution, spec: TableSpec) -> Result<Self> {
        if !(spec.u_max > 0.0 && spec.du > 0.0 && spec.sigma_min > 0.0 && spec.sigma_max >= spec.sigma_min) {
            return Err(invalid("table", format!("malformed grid {spec:?}")));
        }
        if spec.n_sigma == 2 || spec.n_sigma == 3 || spec.n_sigma == 0 {
            return Err(invalid("table", "n_sigma must be 1 or at least 4"));
        }
        if spec.n_sigma > 1 && spec.sigma_max == spec.sigma_min {
            return Err(invalid("table", "sigma range is empty"));
        }
        let n_u = (2.0 * spec.u_max / spec.du).round() as usize + 1;
        if n_u < 4 {
            return Err(invalid("table", "u grid needs at least 4 nodes"));
        }
        let d_sigma =
            if spec.n_sigma > 1 { (spec.sigma_max - spec.sigma_min) / (spec.n_sigma - 1) as f64 } else { 0.0 };
        let values = (0..n_u * spec.n_sigma)
            .into_par_iter()
            .map(|k| {
                let (j, i) = (k / n_u, k % n_u);
                let u = -spec.u_max + i as f64 * spec.du;
                let sigma = spec.sigma_min + j as f64 * d_sigma;
                direct.basis(u, sigma)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { direct, spec, n_u, d_sigma, values })
    }

    pub fn spec(&self) -> &TableSpec {
        &self.spec
    }

    pub fn direct(&self) -> &DirectConvolution {
        &self.direct
    }

    fn covers(&self, u: f64, sigma: f64) -> bool {
        let s = &self.spec;
        let u_ok = u.abs() <= s.u_max - s.du;
        let s_ok = if s.n_sigma == 1 { sigma == s.sigma_min } else { sigma >= s.sigma_min && sigma <= s.sigma_max };
        u_ok && s_ok
    }

    fn interpolate(&self, u: f64, sigma: f64) -> [f64; N_BASIS] {
        let s = &self.spec;
        let pos = (u + s.u_max) / s.du;
        let i = (pos.floor() as usize).clamp(1, self.n_u - 3);
        let wu = lagrange4(pos - i as f64);
        let row = |j: usize| {
            let mut out = [0.0; N_BASIS];
            for (a, w) in wu.iter().enumerate() {
                let v = &self.values[j * self.n_u + i - 1 + a];
                for k in 0..N_BASIS {
                    out[k] += w * v[k];
                }
            }
            out
        };
        if s.n_sigma == 1 {
            return row(0);
        }
        let ps = (sigma - s.sigma_min) / self.d_sigma;
        let j = (ps.floor() as usize).clamp(1, s.n_sigma - 3);
        let ws = lagrange4(ps - j as f64);
        let mut out = [0.0; N_BASIS];
        for (b, w) in ws.iter().enumerate() {
            let r = row(j - 1 + b);
            for k in 0..N_BASIS {
                out[k] += w * r[k];
            }
        }
        out
    }
}

impl BasisSource for ConvolutionTable {
    fn basis(&self, u: f64, sigma: f64) -> Result<[f64; N_BASIS]> {
        if self.covers(u, sigma) {
            Ok(self.interpolate(u, sigma))
        } else {
            self.direct.basis(u, sigma)
        }
    }
    fn kernel(&self) -> BasisKernel {
        self.direct.kernel
    }
    fn shape(&self) -> DscbShape {
        self.direct.shape
    }
}
