use rand::Rng;

use super::adam::Adam;
use super::arch::DvpArchitecture;
use super::ops::{col2im3_into, conv3_backward, conv3_forward_into, im2col3_into, sigmoid, upsample2_backward_into, upsample2_into};
use super::real::Real;
use crate::cube::{Measurement, VideoCube};
use crate::error::{argument, check_dims, Result};
use crate::measurement::SensingOperator;
use crate::rng::{stream, Purpose};

/// A decoder with its trainable parameters and frozen random input.
#[derive(Debug, Clone, PartialEq)]
pub struct DvpModel<T: Real = f64> {
    arch: DvpArchitecture,
    theta: Vec<T>,
    latent: Vec<T>,
}

/// Data-fidelity term `‖y − H g‖²` evaluated on a window of the network output.
#[derive(Debug, Clone, Copy)]
pub struct DataTerm<'a> {
    pub y: &'a Measurement,
    pub op: &'a SensingOperator,
    /// Top-left corner of the measured window inside the output frame.
    pub offset: (usize, usize),
}

/// Objective `‖target − g‖² + ω‖y − H g‖²`; either term may be absent.
#[derive(Debug, Clone, Copy)]
pub struct FitProblem<'a> {
    pub target: Option<&'a VideoCube>,
    pub data: Option<DataTerm<'a>>,
    pub omega: f64,
}

impl<'a> FitProblem<'a> {
    pub fn target(target: &'a VideoCube) -> Self {
        Self { target: Some(target), data: None, omega: 0.0 }
    }

    pub fn measurement_only(y: &'a Measurement, op: &'a SensingOperator, omega: f64) -> Self {
        Self { target: None, data: Some(DataTerm { y, op, offset: (0, 0) }), omega }
    }

    pub fn with_measurement(mut self, y: &'a Measurement, op: &'a SensingOperator, offset: (usize, usize), omega: f64) -> Self {
        self.data = Some(DataTerm { y, op, offset });
        self.omega = omega;
        self
    }

    fn validate(&self, arch: &DvpArchitecture) -> Result<()> {
        if !(self.omega >= 0.0) {
            return argument(format!("omega must be non-negative, got {}", self.omega));
        }
        if let Some(t) = self.target {
            check_dims((arch.out_h, arch.out_w, arch.out_frames), t.dims())?;
        }
        if let Some(d) = &self.data {
            let (h, w, b) = d.op.dims();
            check_dims((h, w, 1), (d.y.n1(), d.y.n2(), 1))?;
            if b != arch.out_frames || d.offset.0 + h > arch.out_h || d.offset.1 + w > arch.out_w {
                return argument(format!(
                    "measurement window {h}x{w}x{b} at {:?} does not fit output {}x{}x{}",
                    d.offset, arch.out_h, arch.out_w, arch.out_frames
                ));
            }
        }
        Ok(())
    }
}

/// Result of one forward/backward pass.
#[derive(Debug, Clone)]
pub struct LossGrad<T: Real> {
    pub loss: f64,
    pub grad: Vec<T>,
    /// Network output the loss was evaluated at, frame-major.
    pub output: Vec<T>,
}

impl<T: Real> DvpModel<T> {
    /// Fresh model: latent `U(0,1)`, weights and biases `U(±1/√(9·c_in))`.
    pub fn init(arch: DvpArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut lr = stream(seed, Purpose::Latent);
        let latent = (0..arch.latent_len()).map(|_| T::of(lr.gen::<f64>())).collect();
        let mut wr = stream(seed, Purpose::Weights);
        let mut theta = vec![T::zero(); arch.param_count()];
        for layer in arch.layers() {
            let bound = 1.0 / ((9 * layer.c_in) as f64).sqrt();
            let end = layer.bias + layer.c_out;
            for v in &mut theta[layer.weight..end] {
                *v = T::of(wr.gen_range(-bound..=bound));
            }
        }
        Ok(Self { arch, theta, latent })
    }

    /// Model with explicit parameters and latent.
    pub fn from_parts(arch: DvpArchitecture, theta: Vec<T>, latent: Vec<T>) -> Result<Self> {
        arch.validate()?;
        if theta.len() != arch.param_count() {
            return argument(format!("theta has {} entries, expected {}", theta.len(), arch.param_count()));
        }
        if latent.len() != arch.latent_len() {
            return argument(format!("latent has {} entries, expected {}", latent.len(), arch.latent_len()));
        }
        Ok(Self { arch, theta, latent })
    }

    pub fn arch(&self) -> &DvpArchitecture {
        &self.arch
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [T] {
        &mut self.theta
    }

    pub fn latent(&self) -> &[T] {
        &self.latent
    }
}

/// Reusable activation and gradient buffers for one architecture.
#[derive(Debug, Clone)]
pub struct Workspace<T: Real> {
    arch: DvpArchitecture,
    /// Post-ReLU upsampled activations feeding each block conv.
    acts: Vec<Vec<T>>,
    /// Unrolled inputs of every conv, output conv last.
    cols: Vec<Vec<T>>,
    /// Block conv outputs.
    hidden: Vec<Vec<T>>,
    output: Vec<T>,
    dcols: Vec<T>,
    dx: Vec<T>,
    dup: Vec<T>,
    grad: Vec<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new(arch: &DvpArchitecture) -> Self {
        let c = arch.channels;
        let mut acts = Vec::new();
        let mut cols = Vec::new();
        let mut hidden = Vec::new();
        let (mut h, mut w) = (arch.latent_h(), arch.latent_w());
        for _ in 0..arch.n_blocks {
            h *= 2;
            w *= 2;
            acts.push(vec![T::zero(); c * h * w]);
            cols.push(vec![T::zero(); c * 9 * h * w]);
            hidden.push(vec![T::zero(); c * h * w]);
        }
        let hw = arch.out_h * arch.out_w;
        cols.push(vec![T::zero(); c * 9 * hw]);
        Self {
            arch: *arch,
            acts,
            cols,
            hidden,
            output: vec![T::zero(); arch.out_frames * hw],
            dcols: vec![T::zero(); c * 9 * hw],
            dx: vec![T::zero(); c * hw],
            dup: vec![T::zero(); c * hw],
            grad: vec![T::zero(); arch.param_count()],
        }
    }

    /// Output of the last forward pass, frame-major.
    pub fn output(&self) -> &[T] {
        &self.output
    }

    /// Gradient of the last backward pass.
    pub fn grad(&self) -> &[T] {
        &self.grad
    }
}

impl<T: Real> DvpModel<T> {
    fn run(&self, ws: &mut Workspace<T>) {
        let a = &self.arch;
        debug_assert_eq!(&ws.arch, a);
        let c = a.channels;
        let layers = a.layers();
        let (mut h, mut w) = (a.latent_h(), a.latent_w());
        for (b, layer) in layers[..a.n_blocks].iter().enumerate() {
            let input: &[T] = if b == 0 { &self.latent } else { &ws.hidden[b - 1] };
            upsample2_into(input, c, h, w, &mut ws.acts[b]);
            h *= 2;
            w *= 2;
            ws.acts[b].iter_mut().for_each(|v| *v = v.max(T::zero()));
            im2col3_into(&ws.acts[b], c, h, w, &mut ws.cols[b]);
            conv3_forward_into(
                &ws.cols[b],
                &self.theta[layer.weight..layer.bias],
                &self.theta[layer.bias..layer.bias + layer.c_out],
                layer.c_out,
                layer.c_in,
                h * w,
                &mut ws.hidden[b],
            );
        }
        let out_layer = layers[a.n_blocks];
        let nb = a.n_blocks;
        let last: &[T] = if nb == 0 { &self.latent } else { &ws.hidden[nb - 1] };
        im2col3_into(last, c, h, w, &mut ws.cols[nb]);
        conv3_forward_into(
            &ws.cols[nb],
            &self.theta[out_layer.weight..out_layer.bias],
            &self.theta[out_layer.bias..out_layer.bias + out_layer.c_out],
            out_layer.c_out,
            out_layer.c_in,
            h * w,
            &mut ws.output,
        );
        ws.output.iter_mut().for_each(|v| *v = sigmoid(*v));
    }

    /// Raw network output, frame-major.
    pub fn forward_raw(&self) -> Vec<T> {
        let mut ws = Workspace::new(&self.arch);
        self.run(&mut ws);
        ws.output
    }

    /// `g_θ(u)` as an `out_h × out_w × out_frames` cube.
    pub fn forward(&self) -> VideoCube {
        to_cube(&self.arch, &self.forward_raw())
    }

    /// Loss value and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, problem: &FitProblem<'_>) -> Result<LossGrad<T>> {
        let mut ws = Workspace::new(&self.arch);
        let loss = self.loss_and_grad_in(problem, &mut ws)?;
        Ok(LossGrad { loss, grad: ws.grad, output: ws.output })
    }

    /// As [`loss_and_grad`](Self::loss_and_grad), leaving output and gradient in `ws`.
    pub fn loss_and_grad_in(&self, problem: &FitProblem<'_>, ws: &mut Workspace<T>) -> Result<f64> {
        problem.validate(&self.arch)?;
        if ws.arch != self.arch {
            *ws = Workspace::new(&self.arch);
        }
        let a = self.arch;
        self.run(ws);
        let (oh, ow) = (a.out_h, a.out_w);
        let hw = oh * ow;

        let mut loss = 0.0;
        // dL/dg
        let mut dg = vec![T::zero(); ws.output.len()];
        let g = &ws.output;
        if let Some(t) = problem.target {
            for ((d, &gv), &tv) in dg.iter_mut().zip(g).zip(t.data()) {
                let r = gv.f64() - tv;
                loss += r * r;
                *d = T::of(2.0 * r);
            }
        }
        if let (Some(dt), true) = (&problem.data, problem.omega > 0.0) {
            let (h, w, b) = dt.op.dims();
            let mask = dt.op.mask();
            let (r0, c0) = dt.offset;
            let mut resid = dt.y.data().to_vec();
            for i in 0..b {
                let bits = mask.frame(i);
                for r in 0..h {
                    for c in 0..w {
                        if bits[r * w + c] != 0 {
                            resid[r * w + c] -= g[i * hw + (r0 + r) * ow + c0 + c].f64();
                        }
                    }
                }
            }
            loss += problem.omega * resid.iter().map(|v| v * v).sum::<f64>();
            for i in 0..b {
                let bits = mask.frame(i);
                for r in 0..h {
                    for c in 0..w {
                        if bits[r * w + c] != 0 {
                            dg[i * hw + (r0 + r) * ow + c0 + c] += T::of(-2.0 * problem.omega * resid[r * w + c]);
                        }
                    }
                }
            }
        }

        // through the logistic
        for (d, &gv) in dg.iter_mut().zip(g) {
            *d *= gv * (T::one() - gv);
        }

        let layers = a.layers();
        let c = a.channels;
        let nb = a.n_blocks;
        ws.grad.fill(T::zero());
        let out_layer = layers[nb];
        {
            let (gw, gb) = split_grad(&mut ws.grad, out_layer.weight, out_layer.bias, out_layer.c_out);
            let dcols = (nb > 0).then_some(&mut ws.dcols[..]);
            conv3_backward(
                &dg,
                &ws.cols[nb],
                &self.theta[out_layer.weight..out_layer.bias],
                out_layer.c_out,
                out_layer.c_in,
                hw,
                gw,
                gb,
                dcols,
            );
        }
        if nb == 0 {
            return Ok(loss);
        }
        col2im3_into(&ws.dcols, c, oh, ow, &mut ws.dx[..c * hw]);
        let (mut h, mut w) = (oh, ow);
        for blk in (0..nb).rev() {
            let layer = layers[blk];
            let n = c * h * w;
            let need_input = blk > 0;
            {
                let (gw, gb) = split_grad(&mut ws.grad, layer.weight, layer.bias, layer.c_out);
                let dcols = need_input.then_some(&mut ws.dcols[..9 * n]);
                conv3_backward(
                    &ws.dx[..n],
                    &ws.cols[blk],
                    &self.theta[layer.weight..layer.bias],
                    layer.c_out,
                    layer.c_in,
                    h * w,
                    gw,
                    gb,
                    dcols,
                );
            }
            if !need_input {
                break;
            }
            col2im3_into(&ws.dcols[..9 * n], c, h, w, &mut ws.dup[..n]);
            for (d, &act) in ws.dup[..n].iter_mut().zip(&ws.acts[blk]) {
                if act <= T::zero() {
                    *d = T::zero();
                }
            }
            h /= 2;
            w /= 2;
            upsample2_backward_into(&ws.dup[..n], c, h, w, &mut ws.dx[..c * h * w]);
        }
        Ok(loss)
    }

    /// Loss only.
    pub fn loss(&self, problem: &FitProblem<'_>) -> Result<f64> {
        problem.validate(&self.arch)?;
        let g = self.forward_raw();
        let mut loss = 0.0;
        if let Some(t) = problem.target {
            loss += g.iter().zip(t.data()).map(|(gv, tv)| (gv.f64() - tv).powi(2)).sum::<f64>();
        }
        if let (Some(dt), true) = (&problem.data, problem.omega > 0.0) {
            let cube = to_cube(&self.arch, &g);
            let (h, w, _) = dt.op.dims();
            let window = cube.slice(crate::cube::Region::new(dt.offset.0, dt.offset.1, h, w))?;
            let r = dt.op.residual(&window, dt.y)?;
            loss += problem.omega * r.dot(&r);
        }
        Ok(loss)
    }
}

fn split_grad<T>(grad: &mut [T], weight: usize, bias: usize, c_out: usize) -> (&mut [T], &mut [T]) {
    let (w, rest) = grad[weight..bias + c_out].split_at_mut(bias - weight);
    (w, rest)
}

pub(crate) fn to_cube<T: Real>(arch: &DvpArchitecture, raw: &[T]) -> VideoCube {
    VideoCube::new(arch.out_h, arch.out_w, arch.out_frames, raw.iter().map(|v| v.f64()).collect())
        .expect("network output is finite")
}

/// Per-run record of a training loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Loss before each optimizer step.
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Whether the loss after Adam's warm-up never exceeds the initial loss.
    pub fn ends_below_start(&self) -> bool {
        match (self.losses.first(), self.losses.last()) {
            (Some(a), Some(b)) => b <= a,
            _ => true,
        }
    }
}

/// Runs `iters` Adam steps on `problem`; `observe(step, loss, output)` sees the
/// output the loss was evaluated at, before that step's update.
pub fn train_with<T: Real>(
    model: &mut DvpModel<T>,
    problem: &FitProblem<'_>,
    iters: usize,
    lr: f64,
    mut observe: impl FnMut(usize, f64, &[T]),
) -> Result<TrainReport> {
    if iters == 0 {
        return argument("training needs at least one iteration");
    }
    let mut opt = Adam::new(model.theta.len(), lr);
    let mut ws = Workspace::new(&model.arch);
    let mut report = TrainReport { losses: Vec::with_capacity(iters) };
    for step in 0..iters {
        let loss = model.loss_and_grad_in(problem, &mut ws)?;
        observe(step, loss, &ws.output);
        report.losses.push(loss);
        opt.step(&mut model.theta, &ws.grad);
    }
    Ok(report)
}

/// Fits `model` to `problem` for `iters` Adam steps. The latent is never touched.
pub fn train_dvp<T: Real>(model: &mut DvpModel<T>, problem: &FitProblem<'_>, iters: usize, lr: f64) -> Result<TrainReport> {
    train_with(model, problem, iters, lr, |_, _, _| {})
}
