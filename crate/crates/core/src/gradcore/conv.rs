//! Same-padded, stride-1 1-D cross-correlation.
//!
//! `out[b,o,t] = bias[o] + Σ_{i,j} w[o,i,j] · x_pad[b,i,t+j]`, with
//! `(k-1)/2` zeros on the left and the remainder on the right, so the output
//! has the input's length and index `t` of the output lines up with index `t`
//! of the input. Two numerically equivalent routes exist: a direct route made
//! of one strided GEMM per kernel tap, and a frequency-domain route doing one
//! complex GEMM per frequency bin. `ConvAlgo::Auto` picks the cheaper one from
//! the shapes alone, so a given call shape always takes the same route.

use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{shape_err, Error, Result};

use super::{LayerKind, LayerParams, Real, Tensor3};

/// Which numerical route a convolution takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvAlgo {
    #[default]
    Auto,
    Direct,
    Fft,
}

/// `(left, right)` zero padding that keeps the length; even kernels put the
/// extra zero on the right.
pub fn same_padding(kernel: usize) -> (usize, usize) {
    let left = kernel.saturating_sub(1) / 2;
    (left, kernel.saturating_sub(1) - left)
}

fn check(input: &Tensor3<impl Real>, params_shape: &[usize], kernel: usize) -> Result<(usize, usize)> {
    let &[cout, cin, k] = params_shape else {
        return Err(shape_err!("conv1d weight must be 3-d, got {:?}", params_shape));
    };
    if kernel == 0 || k != kernel {
        return Err(Error::InvalidConfig(format!("kernel {kernel} does not match weight kernel {k}")));
    }
    let l = input.len_t();
    if kernel > 2 * l + 1 {
        return Err(Error::InvalidConfig(format!("kernel {kernel} too large for length {l}")));
    }
    if input.channels() != cin {
        return Err(shape_err!("conv1d expects {cin} input channels, got {}", input.channels()));
    }
    Ok((cin, cout))
}

/// Forward pass; the route is chosen by [`ConvAlgo::Auto`].
pub fn conv1d_forward<T: Real>(input: &Tensor3<T>, params: &LayerParams<T>, kernel: usize) -> Result<Tensor3<T>> {
    conv1d_forward_with(input, params, kernel, ConvAlgo::Auto)
}

pub fn conv1d_forward_with<T: Real>(
    input: &Tensor3<T>,
    params: &LayerParams<T>,
    kernel: usize,
    algo: ConvAlgo,
) -> Result<Tensor3<T>> {
    let (cin, cout) = check(input, &params.shape, kernel)?;
    let g = Geometry::new(input.batch(), cin, cout, kernel, input.len_t());
    Ok(match g.resolve(algo, false) {
        ConvAlgo::Fft => fft_forward(&g, input, &params.weight, &params.bias),
        _ => direct_forward(&g, input, &params.weight, &params.bias),
    })
}

/// Backward pass: accumulates weight and bias gradients into `params` and
/// returns the gradient with respect to the input.
pub fn conv1d_backward<T: Real>(
    grad_out: &Tensor3<T>,
    cached_input: &Tensor3<T>,
    params: &mut LayerParams<T>,
) -> Result<Tensor3<T>> {
    conv1d_backward_with(grad_out, cached_input, params, ConvAlgo::Auto)
}

pub fn conv1d_backward_with<T: Real>(
    grad_out: &Tensor3<T>,
    cached_input: &Tensor3<T>,
    params: &mut LayerParams<T>,
    algo: ConvAlgo,
) -> Result<Tensor3<T>> {
    let kernel = params.shape.get(2).copied().unwrap_or(0);
    let (cin, cout) = check(cached_input, &params.shape, kernel)?;
    let expected = [cached_input.batch(), cout, cached_input.len_t()];
    if grad_out.shape() != expected {
        return Err(shape_err!("conv1d grad_out shape {:?}, expected {:?}", grad_out.shape(), expected));
    }
    let g = Geometry::new(cached_input.batch(), cin, cout, kernel, cached_input.len_t());
    for b in 0..g.batch {
        for o in 0..cout {
            let s = grad_out.row(b, o).iter().fold(T::zero(), |acc, &v| acc + v);
            params.bias_grad[o] = params.bias_grad[o] + s;
        }
    }
    let LayerParams { weight, weight_grad, .. } = params;
    Ok(match g.resolve(algo, true) {
        ConvAlgo::Fft => fft_backward(&g, grad_out, cached_input, weight, weight_grad),
        _ => direct_backward(&g, grad_out, cached_input, weight, weight_grad),
    })
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    batch: usize,
    cin: usize,
    cout: usize,
    k: usize,
    l: usize,
    pad_left: usize,
    pad_right: usize,
}

impl Geometry {
    fn new(batch: usize, cin: usize, cout: usize, k: usize, l: usize) -> Self {
        let (pad_left, pad_right) = same_padding(k);
        Self { batch, cin, cout, k, l, pad_left, pad_right }
    }

    /// Transform length: no circular wrap-around reaches the kept outputs as
    /// long as `n >= l + max(pad_left, pad_right)`; the kernel must also fit.
    fn fft_len(&self) -> usize {
        smooth_len((self.l + self.pad_left.max(self.pad_right)).max(self.k))
    }

    fn resolve(&self, algo: ConvAlgo, backward: bool) -> ConvAlgo {
        match algo {
            ConvAlgo::Auto => {
                if self.k == 1 || self.cin * self.cout < 64 {
                    return ConvAlgo::Direct;
                }
                let (direct, fft) = self.costs(backward);
                if fft < direct {
                    ConvAlgo::Fft
                } else {
                    ConvAlgo::Direct
                }
            }
            other => other,
        }
    }

    /// Estimated cost of both routes in direct-route multiply-adds. The
    /// weights were fitted to timings of both routes on batch-64, L=510
    /// layers; a transform with its move into bin-major order costs about
    /// 24 multiply-adds per `n·log2 n`.
    fn costs(&self, backward: bool) -> (f64, f64) {
        let (b, ci, co) = (self.batch as f64, self.cin as f64, self.cout as f64);
        let n = self.fft_len() as f64;
        let bins = (self.fft_len() / 2 + 1) as f64;
        let transform = 24.0 * n * n.log2();
        let taps = b * co * ci * self.k as f64 * self.l as f64;
        if backward {
            (2.5 * taps, (2.0 * co * ci + b * (2.0 * ci + co)) * transform + 12.5 * b * co * ci * bins)
        } else {
            (taps, (co * ci + b * (ci + co)) * transform + 6.25 * b * co * ci * bins)
        }
    }
}

fn smooth_len(min: usize) -> usize {
    let mut n = min.max(2);
    loop {
        if n.is_multiple_of(2) {
            let mut m = n;
            for p in [2, 3, 5] {
                while m.is_multiple_of(p) {
                    m /= p;
                }
            }
            if m == 1 {
                return n;
            }
        }
        n += 1;
    }
}

// ---------------------------------------------------------------- direct

fn pad_item<T: Real>(g: &Geometry, x: &Tensor3<T>, b: usize, xp: &mut [T]) {
    let lp = g.l + g.k - 1;
    for i in 0..g.cin {
        xp[i * lp + g.pad_left..i * lp + g.pad_left + g.l].copy_from_slice(x.row(b, i));
    }
}

fn direct_forward<T: Real>(g: &Geometry, x: &Tensor3<T>, w: &[T], bias: &[T]) -> Tensor3<T> {
    let (cin, cout, k, l) = (g.cin, g.cout, g.k, g.l);
    let lp = l + k - 1;
    let mut out = Tensor3::zeros(g.batch, cout, l);
    let mut xp = vec![T::zero(); cin * lp];
    for b in 0..g.batch {
        pad_item(g, x, b, &mut xp);
        let o = out.item_mut(b);
        for (oc, row) in o.chunks_exact_mut(l).enumerate() {
            row.fill(bias[oc]);
        }
        for j in 0..k {
            T::gemm(cout, cin, l, T::one(), &w[j..], cin * k, k, &xp[j..], lp, 1, T::one(), o, l, 1);
        }
    }
    out
}

fn direct_backward<T: Real>(g: &Geometry, dout: &Tensor3<T>, x: &Tensor3<T>, w: &[T], dw: &mut [T]) -> Tensor3<T> {
    let (cin, cout, k, l) = (g.cin, g.cout, g.k, g.l);
    let lp = l + k - 1;
    let mut dx = Tensor3::zeros(g.batch, cin, l);
    let mut xp = vec![T::zero(); cin * lp];
    let mut dxp = vec![T::zero(); cin * lp];
    for b in 0..g.batch {
        pad_item(g, x, b, &mut xp);
        dxp.fill(T::zero());
        let d = dout.item(b);
        for j in 0..k {
            // dW_j += dOut · x_jᵀ
            T::gemm(cout, l, cin, T::one(), d, l, 1, &xp[j..], 1, lp, T::one(), &mut dw[j..], cin * k, k);
            // dx_pad[:, j..j+l] += W_jᵀ · dOut
            T::gemm(cin, cout, l, T::one(), &w[j..], k, cin * k, d, l, 1, T::one(), &mut dxp[j..], lp, 1);
        }
        for i in 0..cin {
            dx.row_mut(b, i).copy_from_slice(&dxp[i * lp + g.pad_left..i * lp + g.pad_left + l]);
        }
    }
    dx
}

// ---------------------------------------------------------------- frequency domain

struct Plans<T: Real> {
    n: usize,
    fwd: Arc<dyn RealToComplex<T>>,
    inv: Arc<dyn ComplexToReal<T>>,
    real: Vec<T>,
    spec: Vec<Complex<T>>,
    scratch_f: Vec<Complex<T>>,
    scratch_i: Vec<Complex<T>>,
}

impl<T: Real> Plans<T> {
    fn new(n: usize) -> Self {
        let mut planner = RealFftPlanner::<T>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_f = fwd.make_scratch_vec();
        let scratch_i = inv.make_scratch_vec();
        Self { n, real: fwd.make_input_vec(), spec: fwd.make_output_vec(), fwd, inv, scratch_f, scratch_i }
    }

    fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// Transforms `self.real` into `self.spec`.
    fn forward(&mut self) {
        self.fwd
            .process_with_scratch(&mut self.real, &mut self.spec, &mut self.scratch_f)
            .expect("buffer sizes come from the plan");
    }

    /// Transforms `self.spec` into `self.real` (unnormalised).
    fn inverse(&mut self) {
        // real signals have real DC and Nyquist bins; clear rounding noise
        self.spec[0].im = T::zero();
        if self.n.is_multiple_of(2) {
            let last = self.spec.len() - 1;
            self.spec[last].im = T::zero();
        }
        self.inv
            .process_with_scratch(&mut self.spec, &mut self.real, &mut self.scratch_i)
            .expect("buffer sizes and Hermitian end bins are valid");
    }
}

/// Signals per tile when moving between signal-major and bin-major layouts;
/// keeps the bin-major writes and reads in contiguous runs.
const TILE: usize = 32;

/// Forward-transforms `count` signals. Bin `f` of signal `j` goes to
/// `dst[f * stride + re_off + j]` (real part) and `dst[f * stride + im_off + j]`.
#[allow(clippy::too_many_arguments)]
fn scatter_spectra<T: Real>(
    plans: &mut Plans<T>,
    count: usize,
    dst: &mut [T],
    stride: usize,
    re_off: usize,
    im_off: usize,
    tile: &mut Vec<Complex<T>>,
    mut fill: impl FnMut(usize, &mut [T]),
) {
    let bins = plans.bins();
    tile.resize(TILE * bins, Complex::new(T::zero(), T::zero()));
    for j0 in (0..count).step_by(TILE) {
        let width = TILE.min(count - j0);
        for jj in 0..width {
            plans.real.fill(T::zero());
            fill(j0 + jj, &mut plans.real);
            plans.forward();
            tile[jj * bins..(jj + 1) * bins].copy_from_slice(&plans.spec);
        }
        for f in 0..bins {
            let base = f * stride;
            for jj in 0..width {
                let c = tile[jj * bins + f];
                dst[base + re_off + j0 + jj] = c.re;
                dst[base + im_off + j0 + jj] = c.im;
            }
        }
    }
}

/// Inverse of [`scatter_spectra`]'s layout: reads `count` spectra, inverse
/// transforms each (unnormalised) and hands the time signal to `emit`.
#[allow(clippy::too_many_arguments)]
fn gather_inverse<T: Real>(
    plans: &mut Plans<T>,
    count: usize,
    src: &[T],
    stride: usize,
    re_off: usize,
    im_off: usize,
    tile: &mut Vec<Complex<T>>,
    mut emit: impl FnMut(usize, &[T]),
) {
    let bins = plans.bins();
    tile.resize(TILE * bins, Complex::new(T::zero(), T::zero()));
    for j0 in (0..count).step_by(TILE) {
        let width = TILE.min(count - j0);
        for f in 0..bins {
            let base = f * stride;
            for jj in 0..width {
                tile[jj * bins + f] = Complex::new(src[base + re_off + j0 + jj], src[base + im_off + j0 + jj]);
            }
        }
        for jj in 0..width {
            plans.spec.copy_from_slice(&tile[jj * bins..(jj + 1) * bins]);
            plans.inverse();
            emit(j0 + jj, &plans.real);
        }
    }
}

/// Weight spectra laid out `[bin][out][re(in) | im(in)]`.
fn weight_spectra<T: Real>(g: &Geometry, w: &[T], plans: &mut Plans<T>, tile: &mut Vec<Complex<T>>) -> Vec<T> {
    let (cin, cout, k) = (g.cin, g.cout, g.k);
    let stride = cout * 2 * cin;
    let mut ws = vec![T::zero(); plans.bins() * stride];
    for o in 0..cout {
        scatter_spectra(plans, cin, &mut ws, stride, o * 2 * cin, o * 2 * cin + cin, tile, |i, buf| {
            buf[..k].copy_from_slice(&w[(o * cin + i) * k..(o * cin + i + 1) * k]);
        });
    }
    ws
}

/// Spectra of `rows` signals per batch item laid out `[bin][re(rows) ; im(rows)][batch]`.
/// `place` writes the time-domain signal for `(b, row)` into the zeroed buffer.
fn signal_spectra<T: Real>(
    batch: usize,
    rows: usize,
    plans: &mut Plans<T>,
    tile: &mut Vec<Complex<T>>,
    mut place: impl FnMut(usize, usize, &mut [T]),
) -> Vec<T> {
    let stride = 2 * rows * batch;
    let mut out = vec![T::zero(); plans.bins() * stride];
    for r in 0..rows {
        scatter_spectra(plans, batch, &mut out, stride, r * batch, (rows + r) * batch, tile, |b, buf| place(b, r, buf));
    }
    out
}

fn fft_forward<T: Real>(g: &Geometry, x: &Tensor3<T>, w: &[T], bias: &[T]) -> Tensor3<T> {
    let (bsz, cin, cout, l) = (g.batch, g.cin, g.cout, g.l);
    let mut plans = Plans::new(g.fft_len());
    let mut tile = Vec::new();
    let n = plans.n;
    let bins = plans.bins();
    let ws = weight_spectra(g, w, &mut plans, &mut tile);
    let xs = signal_spectra(bsz, cin, &mut plans, &mut tile, |b, i, buf| buf[..l].copy_from_slice(x.row(b, i)));

    let (wst, xst, yst) = (cout * 2 * cin, 2 * cin * bsz, 2 * cout * bsz);
    let mut ys = vec![T::zero(); bins * yst];
    for f in 0..bins {
        let wf = &ws[f * wst..(f + 1) * wst];
        let xf = &xs[f * xst..(f + 1) * xst];
        let (yr, yi) = ys[f * yst..(f + 1) * yst].split_at_mut(cout * bsz);
        // correlation: Y = conj(W)·X
        // Yr = Wr·Xr + Wi·Xi
        T::gemm(cout, 2 * cin, bsz, T::one(), wf, 2 * cin, 1, xf, bsz, 1, T::zero(), yr, bsz, 1);
        // Yi = Wr·Xi − Wi·Xr
        T::gemm(cout, cin, bsz, T::one(), wf, 2 * cin, 1, &xf[cin * bsz..], bsz, 1, T::zero(), yi, bsz, 1);
        T::gemm(cout, cin, bsz, -T::one(), &wf[cin..], 2 * cin, 1, xf, bsz, 1, T::one(), yi, bsz, 1);
    }

    let scale = T::one() / T::from_f64_lossy(n as f64);
    let mut out = Tensor3::zeros(bsz, cout, l);
    for (o, &bo) in bias.iter().enumerate().take(cout) {
        gather_inverse(&mut plans, bsz, &ys, yst, o * bsz, (cout + o) * bsz, &mut tile, |b, real| {
            for (t, v) in out.row_mut(b, o).iter_mut().enumerate() {
                *v = real[(t + n - g.pad_left) % n] * scale + bo;
            }
        });
    }
    out
}

fn fft_backward<T: Real>(g: &Geometry, dout: &Tensor3<T>, x: &Tensor3<T>, w: &[T], dw: &mut [T]) -> Tensor3<T> {
    let (bsz, cin, cout, k, l) = (g.batch, g.cin, g.cout, g.k, g.l);
    let mut plans = Plans::new(g.fft_len());
    let mut tile = Vec::new();
    let n = plans.n;
    let bins = plans.bins();
    let ws = weight_spectra(g, w, &mut plans, &mut tile);
    let xs = signal_spectra(bsz, cin, &mut plans, &mut tile, |b, i, buf| buf[..l].copy_from_slice(x.row(b, i)));
    // output gradient placed at the correlation lag it belongs to
    let ds = signal_spectra(bsz, cout, &mut plans, &mut tile, |b, o, buf| {
        for (t, &v) in dout.row(b, o).iter().enumerate() {
            buf[(t + n - g.pad_left) % n] = v;
        }
    });

    let (wst, xst, dst) = (cout * 2 * cin, 2 * cin * bsz, 2 * cout * bsz);
    let mut dxs = vec![T::zero(); bins * xst];
    let mut gs = vec![T::zero(); bins * wst];
    let one = T::one();
    for f in 0..bins {
        let wf = &ws[f * wst..(f + 1) * wst];
        let xf = &xs[f * xst..(f + 1) * xst];
        let df = &ds[f * dst..(f + 1) * dst];
        let (dyr, dyi) = df.split_at(cout * bsz);
        let (xr, xi) = xf.split_at(cin * bsz);
        let wi = &wf[cin..];

        // input gradient: dX = W·DY, Wᵀ views have rs=1, cs=2cin
        let (dxr, dxi) = dxs[f * xst..(f + 1) * xst].split_at_mut(cin * bsz);
        T::gemm(cin, cout, bsz, one, wf, 1, 2 * cin, dyr, bsz, 1, T::zero(), dxr, bsz, 1);
        T::gemm(cin, cout, bsz, -one, wi, 1, 2 * cin, dyi, bsz, 1, one, dxr, bsz, 1);
        T::gemm(cin, cout, bsz, one, wf, 1, 2 * cin, dyi, bsz, 1, T::zero(), dxi, bsz, 1);
        T::gemm(cin, cout, bsz, one, wi, 1, 2 * cin, dyr, bsz, 1, one, dxi, bsz, 1);

        // weight gradient: G = Σ_b conj(DY)·X, Xᵀ views have rs=1, cs=bsz
        let gf = &mut gs[f * wst..(f + 1) * wst];
        T::gemm(cout, bsz, cin, one, dyr, bsz, 1, xr, 1, bsz, T::zero(), gf, 2 * cin, 1);
        T::gemm(cout, bsz, cin, one, dyi, bsz, 1, xi, 1, bsz, one, gf, 2 * cin, 1);
        let gi = &mut gf[cin..];
        T::gemm(cout, bsz, cin, one, dyr, bsz, 1, xi, 1, bsz, T::zero(), gi, 2 * cin, 1);
        T::gemm(cout, bsz, cin, -one, dyi, bsz, 1, xr, 1, bsz, one, gi, 2 * cin, 1);
    }

    let scale = T::one() / T::from_f64_lossy(n as f64);
    for o in 0..cout {
        gather_inverse(&mut plans, cin, &gs, wst, o * 2 * cin, o * 2 * cin + cin, &mut tile, |i, real| {
            let dst = &mut dw[(o * cin + i) * k..(o * cin + i + 1) * k];
            for (d, &r) in dst.iter_mut().zip(real) {
                *d = *d + r * scale;
            }
        });
    }

    let mut dx = Tensor3::zeros(bsz, cin, l);
    for i in 0..cin {
        gather_inverse(&mut plans, bsz, &dxs, xst, i * bsz, (cin + i) * bsz, &mut tile, |b, real| {
            for (v, &r) in dx.row_mut(b, i).iter_mut().zip(real) {
                *v = r * scale;
            }
        });
    }
    dx
}

// ---------------------------------------------------------------- layer

/// Convolution layer owning its parameters and the input cached by the last
/// training forward pass.
#[derive(Debug, Clone)]
pub struct Conv1d<T: Real> {
    pub params: LayerParams<T>,
    kernel: usize,
    algo: ConvAlgo,
    cache: Option<Tensor3<T>>,
}

impl<T: Real> Conv1d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 {
            return Err(Error::InvalidConfig(format!(
                "conv1d needs positive sizes, got in={in_channels} out={out_channels} kernel={kernel}"
            )));
        }
        Ok(Self {
            params: LayerParams::zeros(LayerKind::Conv1d, vec![out_channels, in_channels, kernel], out_channels),
            kernel,
            algo: ConvAlgo::Auto,
            cache: None,
        })
    }

    pub fn with_algo(mut self, algo: ConvAlgo) -> Self {
        self.algo = algo;
        self
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }
    pub fn in_channels(&self) -> usize {
        self.params.shape[1]
    }
    pub fn out_channels(&self) -> usize {
        self.params.shape[0]
    }

    pub fn init<R: rand::Rng>(&mut self, rng: &mut R) {
        let fan_in = self.in_channels() * self.kernel;
        self.params.init_fan_in_uniform(fan_in, rng);
    }

    pub fn eval(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        conv1d_forward_with(x, &self.params, self.kernel, self.algo)
    }

    pub fn forward(&mut self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        let y = self.eval(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor3<T>) -> Result<Tensor3<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::State("conv1d backward called without a cached forward pass".into()))?;
        conv1d_backward_with(grad_out, &x, &mut self.params, self.algo)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
