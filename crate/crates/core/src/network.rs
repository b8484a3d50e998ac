//! Fully connected GELU network with second-order input jets.
//!
//! A batch of points is pushed through the network as a stack of six
//! activation matrices, one per jet component `(v, d1, d2, d11, d12, d22)`,
//! so every linear layer is a single matrix product. Parameter gradients of
//! jet-dependent losses are obtained by reverse accumulation through the same
//! stacked pass, which needs the GELU derivatives up to third order.

use std::cell::RefCell;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};
use crate::geometry::{DomainSpec, Point};
use crate::residual::{Jet, SurfaceField};

const CHECKPOINT_FORMAT: &str = "mea-mlp-v1";

// Tape buffers are several megabytes at training batch sizes. Handing them back to the
// allocator every epoch makes it return the pages to the kernel and fault them in again,
// so dropped tapes park their buffers here for the next pass on the same thread.
const POOL_MIN_LEN: usize = 1 << 14;
const POOL_CAPACITY: usize = 64;

thread_local! {
    static POOL: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

fn zeroed(len: usize) -> Vec<f64> {
    if len < POOL_MIN_LEN {
        return vec![0.0; len];
    }
    let reused = POOL.with(|pool| {
        let mut pool = pool.borrow_mut();
        let best = pool.iter().enumerate().filter(|(_, v)| v.capacity() >= len).min_by_key(|(_, v)| v.capacity()).map(|(i, _)| i);
        best.map(|i| pool.swap_remove(i))
    });
    match reused {
        Some(mut v) => {
            v.clear();
            v.resize(len, 0.0);
            v
        }
        None => vec![0.0; len],
    }
}

fn recycle(v: Vec<f64>) {
    if v.capacity() < POOL_MIN_LEN {
        return;
    }
    POOL.with(|pool| {
        let mut pool = pool.borrow_mut();
        if pool.len() < POOL_CAPACITY {
            pool.push(v);
        }
    });
}

/// `g, g', g'', g'''` of the exact GELU `u Phi(u)`.
#[inline]
pub fn gelu_derivatives(u: f64) -> [f64; 4] {
    let cdf = 0.5 * libm::erfc(-u * FRAC_1_SQRT_2);
    let pdf = (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
    [u * cdf, cdf + u * pdf, pdf * (2.0 - u * u), pdf * u * (u * u - 4.0)]
}

pub fn gelu(u: f64) -> f64 {
    0.5 * u * libm::erfc(-u * FRAC_1_SQRT_2)
}

/// GELU applied to a jet.
pub fn gelu_jet(u: Jet) -> Jet {
    let [g, g1, g2, _] = gelu_derivatives(u.f);
    u.chain(g, g1, g2)
}

/// Affine map of the plan coordinates onto `[-1, 1]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputNormalization {
    pub center: Point,
    pub scale: [f64; 2],
}

impl InputNormalization {
    pub fn identity() -> Self {
        Self { center: Point::new(0.0, 0.0), scale: [1.0, 1.0] }
    }

    pub fn for_domain(domain: &DomainSpec) -> Self {
        let (lo, hi) = domain.bounding_box();
        Self {
            center: Point::new(0.5 * (lo.x1 + hi.x1), 0.5 * (lo.x2 + hi.x2)),
            scale: [2.0 / (hi.x1 - lo.x1), 2.0 / (hi.x2 - lo.x2)],
        }
    }

    pub fn apply(&self, p: Point) -> [f64; 2] {
        [(p.x1 - self.center.x1) * self.scale[0], (p.x2 - self.center.x2) * self.scale[1]]
    }
}

/// Which jet components a batch pass carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetOrder {
    Value,
    Second,
}

impl JetOrder {
    pub fn components(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Second => 6,
        }
    }
}

/// Network parameters as one flat vector; layer `l` stores its `out x in` weights
/// row-major followed by its `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    theta: Vec<f64>,
    pub normalization: InputNormalization,
    pub seed: u64,
}

/// Number of parameters of a `[2, W, .., W, 1]` network with `hidden` layers.
pub fn parameter_count(hidden: usize, width: usize) -> usize {
    2 * width + width + (hidden - 1) * (width * width + width) + width + 1
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases.
pub fn init_mlp(hidden: usize, width: usize, normalization: InputNormalization, seed: u64) -> Result<MlpParams> {
    if hidden == 0 || width == 0 {
        return Err(MeaError::Config("network needs at least one hidden layer of non-zero width".into()));
    }
    let mut sizes = vec![2];
    sizes.extend(std::iter::repeat(width).take(hidden));
    sizes.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Vec::with_capacity(parameter_count(hidden, width));
    for w in sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        theta.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)));
        theta.extend(std::iter::repeat(0.0).take(fan_out));
    }
    Ok(MlpParams { sizes, theta, normalization, seed })
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    sizes: Vec<usize>,
    seed: u64,
    normalization: InputNormalization,
    count: usize,
}

impl MlpParams {
    pub fn from_parts(sizes: Vec<usize>, theta: Vec<f64>, normalization: InputNormalization, seed: u64) -> Result<Self> {
        let valid = sizes.len() >= 3 && sizes[0] == 2 && *sizes.last().unwrap() == 1 && sizes.iter().all(|&s| s > 0);
        let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if !valid || expected != theta.len() {
            return Err(MeaError::Checkpoint(format!("layer sizes {sizes:?} do not match {} parameters", theta.len())));
        }
        Ok(Self { sizes, theta, normalization, seed })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn set_theta(&mut self, theta: &[f64]) {
        self.theta.copy_from_slice(theta);
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for w in self.sizes.windows(2) {
            off.push(off.last().unwrap() + w[0] * w[1] + w[1]);
        }
        off
    }

    /// Certified bound on `|N(x)|` over the normalized box `[-1, 1]^2`, using
    /// `|gelu(u)| <= |u|`.
    pub fn output_bound(&self) -> f64 {
        let offsets = self.layer_offsets();
        let mut bound = vec![1.0; 2];
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fin, fout) = (w[0], w[1]);
            let base = offsets[l];
            let weights = &self.theta[base..base + fin * fout];
            let bias = &self.theta[base + fin * fout..base + fin * fout + fout];
            bound = (0..fout)
                .map(|j| {
                    weights[j * fin..(j + 1) * fin].iter().zip(&bound).map(|(w, b)| w.abs() * b).sum::<f64>()
                        + bias[j].abs()
                })
                .collect();
        }
        bound[0] * (1.0 + 1e-12)
    }

    /// Forward pass over a batch, keeping what the reverse pass needs.
    pub fn forward_batch(&self, points: &[Point], order: JetOrder) -> Result<Tape> {
        let n = points.len();
        let nc = order.components();
        let rows = nc * n;
        let mut input = zeroed(rows * 2);
        for (i, &p) in points.iter().enumerate() {
            let x = self.normalization.apply(p);
            input[2 * i] = x[0];
            input[2 * i + 1] = x[1];
            if order == JetOrder::Second {
                input[2 * (n + i)] = self.normalization.scale[0];
                input[2 * (2 * n + i) + 1] = self.normalization.scale[1];
            }
        }
        let offsets = self.layer_offsets();
        let n_layers = self.sizes.len() - 1;
        let mut hidden: Vec<HiddenTape> = Vec::with_capacity(n_layers - 1);
        let mut output = Vec::new();
        for l in 0..n_layers {
            let (fin, fout) = (self.sizes[l], self.sizes[l + 1]);
            let base = offsets[l];
            let weights = &self.theta[base..base + fin * fout];
            let bias = &self.theta[base + fin * fout..base + fin * fout + fout];
            let a_prev: &[f64] = if l == 0 { &input } else { &hidden[l - 1].a };
            let mut z = zeroed(rows * fout);
            // Z = A W^T
            gemm(rows, fin, fout, a_prev, fin, 1, weights, 1, fin, 0.0, &mut z, fout);
            for row in z[..n * fout].chunks_exact_mut(fout) {
                for (zj, bj) in row.iter_mut().zip(bias) {
                    *zj += bj;
                }
            }
            if l + 1 == n_layers {
                output = z;
            } else {
                hidden.push(HiddenTape::activate(z, n, fout, order));
            }
        }
        if output.iter().any(|v| !v.is_finite()) {
            return Err(MeaError::Divergence("non-finite network output".into()));
        }
        Ok(Tape { order, n, input, hidden, output })
    }

    /// Parameter gradient given the adjoint of the output jets, laid out like
    /// [`Tape::output`]. Adds into `grad`.
    pub fn backward_into(&self, tape: &Tape, out_adjoint: &[f64], grad: &mut [f64]) -> Result<()> {
        let n = tape.n;
        let rows = tape.order.components() * n;
        assert_eq!(out_adjoint.len(), rows);
        assert_eq!(grad.len(), self.theta.len());
        let offsets = self.layer_offsets();
        let n_layers = self.sizes.len() - 1;
        let mut zbar = zeroed(rows);
        zbar.copy_from_slice(out_adjoint);
        for l in (0..n_layers).rev() {
            let (fin, fout) = (self.sizes[l], self.sizes[l + 1]);
            let base = offsets[l];
            let a_prev: &[f64] = if l == 0 { &tape.input } else { &tape.hidden[l - 1].a };
            {
                let (gw, gb) = grad[base..base + fin * fout + fout].split_at_mut(fin * fout);
                // dW += Zbar^T A
                gemm(fout, rows, fin, &zbar, 1, fout, a_prev, fin, 1, 1.0, gw, fin);
                for row in zbar[..n * fout].chunks_exact(fout) {
                    for (g, z) in gb.iter_mut().zip(row) {
                        *g += z;
                    }
                }
            }
            if l > 0 {
                let weights = &self.theta[base..base + fin * fout];
                let mut abar = zeroed(rows * fin);
                // Abar = Zbar W
                gemm(rows, fout, fin, &zbar, fout, 1, weights, fin, 1, 0.0, &mut abar, fin);
                recycle(std::mem::replace(&mut zbar, tape.hidden[l - 1].pull_back(abar, n, fin, tape.order)));
            }
        }
        recycle(zbar);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(MeaError::Divergence("non-finite parameter gradient".into()));
        }
        Ok(())
    }

    /// Exact jet of the network at one point.
    pub fn forward_jet(&self, p: Point) -> Result<Jet> {
        let tape = self.forward_batch(&[p], JetOrder::Second)?;
        Ok(tape.output_jet(0))
    }

    /// Loss value and its parameter gradient for a loss built from the output jets.
    /// The closure returns the loss and its derivative with respect to every jet entry.
    pub fn param_gradient<L>(&self, points: &[Point], loss: L) -> Result<(f64, Vec<f64>)>
    where
        L: FnOnce(&[Jet]) -> (f64, Vec<Jet>),
    {
        let tape = self.forward_batch(points, JetOrder::Second)?;
        let jets = tape.output_jets();
        let (value, adj) = loss(&jets);
        if !value.is_finite() {
            return Err(MeaError::Divergence("non-finite loss".into()));
        }
        let adjoint = pack_jets(&adj);
        let mut grad = vec![0.0; self.theta.len()];
        self.backward_into(&tape, &adjoint, &mut grad)?;
        Ok((value, grad))
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            sizes: self.sizes.clone(),
            seed: self.seed,
            normalization: self.normalization,
            count: self.theta.len(),
        };
        write_blob(&mut w, &header, &[&self.theta])
    }

    pub fn read_checkpoint<R: Read>(r: R) -> Result<Self> {
        let (header, mut sections): (CheckpointHeader, _) = read_blob(r)?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(MeaError::Checkpoint(format!("unknown format {}", header.format)));
        }
        let theta = sections.pop().filter(|t| t.len() == header.count && sections.is_empty());
        let theta = theta.ok_or_else(|| MeaError::Checkpoint("payload length mismatch".into()))?;
        Self::from_parts(header.sizes, theta, header.normalization, header.seed)
    }
}

impl SurfaceField for MlpParams {
    fn jet(&self, p: Point) -> Result<Jet> {
        self.forward_jet(p)
    }

    fn jets(&self, points: &[Point]) -> Result<Vec<Jet>> {
        Ok(self.forward_batch(points, JetOrder::Second)?.output_jets())
    }

    fn values(&self, points: &[Point]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(points, JetOrder::Value)?.into_output())
    }
}

/// Activations and GELU derivatives of one hidden layer.
pub struct HiddenTape {
    z: Vec<f64>,
    a: Vec<f64>,
    /// `g', g'', g'''` per (point, unit), interleaved.
    d: Vec<f64>,
}

impl HiddenTape {
    fn activate(z: Vec<f64>, n: usize, w: usize, order: JetOrder) -> Self {
        let m = n * w;
        let mut a = zeroed(z.len());
        let mut d = zeroed(3 * m);
        match order {
            JetOrder::Value => {
                for i in 0..m {
                    let [g, g1, g2, g3] = gelu_derivatives(z[i]);
                    a[i] = g;
                    d[3 * i] = g1;
                    d[3 * i + 1] = g2;
                    d[3 * i + 2] = g3;
                }
            }
            JetOrder::Second => {
                let (z0, rest) = z.split_at(m);
                let (z1, rest) = rest.split_at(m);
                let (z2, rest) = rest.split_at(m);
                let (z11, rest) = rest.split_at(m);
                let (z12, z22) = rest.split_at(m);
                let (a0, rest) = a.split_at_mut(m);
                let (a1, rest) = rest.split_at_mut(m);
                let (a2, rest) = rest.split_at_mut(m);
                let (a11, rest) = rest.split_at_mut(m);
                let (a12, a22) = rest.split_at_mut(m);
                for i in 0..m {
                    let [g, g1, g2, g3] = gelu_derivatives(z0[i]);
                    let (u1, u2) = (z1[i], z2[i]);
                    a0[i] = g;
                    a1[i] = g1 * u1;
                    a2[i] = g1 * u2;
                    a11[i] = g2 * u1 * u1 + g1 * z11[i];
                    a12[i] = g2 * u1 * u2 + g1 * z12[i];
                    a22[i] = g2 * u2 * u2 + g1 * z22[i];
                    d[3 * i] = g1;
                    d[3 * i + 1] = g2;
                    d[3 * i + 2] = g3;
                }
            }
        }
        Self { z, a, d }
    }

    /// Maps activation adjoints to pre-activation adjoints.
    fn pull_back(&self, mut abar: Vec<f64>, n: usize, w: usize, order: JetOrder) -> Vec<f64> {
        let m = n * w;
        match order {
            JetOrder::Value => {
                for i in 0..m {
                    abar[i] *= self.d[3 * i];
                }
            }
            JetOrder::Second => {
                let z = &self.z;
                let (b0, rest) = abar.split_at_mut(m);
                let (b1, rest) = rest.split_at_mut(m);
                let (b2, rest) = rest.split_at_mut(m);
                let (b11, rest) = rest.split_at_mut(m);
                let (b12, b22) = rest.split_at_mut(m);
                for i in 0..m {
                    let (g1, g2, g3) = (self.d[3 * i], self.d[3 * i + 1], self.d[3 * i + 2]);
                    let (u1, u2) = (z[m + i], z[2 * m + i]);
                    let (u11, u12, u22) = (z[3 * m + i], z[4 * m + i], z[5 * m + i]);
                    let (c, c1, c2, c11, c12, c22) = (b0[i], b1[i], b2[i], b11[i], b12[i], b22[i]);
                    b0[i] = c * g1
                        + g2 * (c1 * u1 + c2 * u2 + c11 * u11 + c12 * u12 + c22 * u22)
                        + g3 * (c11 * u1 * u1 + c12 * u1 * u2 + c22 * u2 * u2);
                    b1[i] = c1 * g1 + g2 * (2.0 * c11 * u1 + c12 * u2);
                    b2[i] = c2 * g1 + g2 * (c12 * u1 + 2.0 * c22 * u2);
                    b11[i] = c11 * g1;
                    b12[i] = c12 * g1;
                    b22[i] = c22 * g1;
                }
            }
        }
        abar
    }
}

impl Drop for HiddenTape {
    fn drop(&mut self) {
        for v in [&mut self.z, &mut self.a, &mut self.d] {
            recycle(std::mem::take(v));
        }
    }
}

/// Record of a batch forward pass.
pub struct Tape {
    order: JetOrder,
    n: usize,
    input: Vec<f64>,
    hidden: Vec<HiddenTape>,
    /// Component-major network outputs: `output[c * n + i]`.
    pub output: Vec<f64>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn order(&self) -> JetOrder {
        self.order
    }

    pub fn output_jet(&self, i: usize) -> Jet {
        assert_eq!(self.order, JetOrder::Second);
        let n = self.n;
        Jet::from_array([0, 1, 2, 3, 4, 5].map(|c| self.output[c * n + i]))
    }

    pub fn output_jets(&self) -> Vec<Jet> {
        (0..self.n).map(|i| self.output_jet(i)).collect()
    }

    pub fn into_output(mut self) -> Vec<f64> {
        std::mem::take(&mut self.output)
    }
}

impl Drop for Tape {
    fn drop(&mut self) {
        recycle(std::mem::take(&mut self.input));
        recycle(std::mem::take(&mut self.output));
    }
}

/// Lays jets out component-major to match [`Tape::output`].
pub fn pack_jets(jets: &[Jet]) -> Vec<f64> {
    let n = jets.len();
    let mut out = vec![0.0; 6 * n];
    for (i, j) in jets.iter().enumerate() {
        for (c, v) in j.to_array().into_iter().enumerate() {
            out[c * n + i] = v;
        }
    }
    out
}

/// `C = A B + beta C` on row/column-strided slices.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k.max(1) - 1) * csa);
    assert!(b.len() > (k.max(1) - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * rsc + (n - 1));
    // SAFETY: the asserts above bound every index touched by the kernel.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Writes a JSON header line followed by little-endian `f64` sections.
pub(crate) fn write_blob<W: Write, H: Serialize>(w: &mut W, header: &H, sections: &[&[f64]]) -> Result<()> {
    let mut head = serde_json::to_value(header)?;
    head["sections"] = serde_json::json!(sections.iter().map(|s| s.len()).collect::<Vec<_>>());
    w.write_all(serde_json::to_string(&head)?.as_bytes())?;
    w.write_all(b"\n")?;
    for s in sections {
        for v in *s {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_blob<R: Read, H: for<'de> Deserialize<'de>>(mut r: R) -> Result<(H, Vec<Vec<f64>>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| MeaError::Checkpoint("missing header".into()))?;
    let mut head: serde_json::Value = serde_json::from_slice(&bytes[..nl])?;
    let lens: Vec<usize> = serde_json::from_value(head["sections"].take())?;
    if let Some(obj) = head.as_object_mut() {
        obj.remove("sections");
    }
    let header: H = serde_json::from_value(head)?;
    let payload = &bytes[nl + 1..];
    if payload.len() != 8 * lens.iter().sum::<usize>() {
        return Err(MeaError::Checkpoint("payload length mismatch".into()));
    }
    let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let sections = lens.iter().map(|&len| values.by_ref().take(len).collect()).collect();
    Ok((header, sections))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(seed: u64, hidden: usize, width: usize) -> MlpParams {
        let norm = InputNormalization { center: Point::new(0.3, -0.2), scale: [0.4, 0.7] };
        let mut net = init_mlp(hidden, width, norm, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for t in net.theta_mut() {
            *t += rng.gen_range(-0.3..0.3);
        }
        net
    }

    #[test]
    fn parameter_counts() {
        // 384 + 4 * 16_512 + 129
        assert_eq!(parameter_count(5, 128), 66_561);
        assert_eq!(parameter_count(4, 256), 198_401);
        let net = init_mlp(5, 128, InputNormalization::identity(), 1).unwrap();
        assert_eq!(net.len(), 66_561);
        let net = init_mlp(4, 256, InputNormalization::identity(), 1).unwrap();
        let from_shapes: usize = net.sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        assert_eq!(from_shapes, 198_401);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_mlp(3, 16, InputNormalization::identity(), 9).unwrap();
        let b = init_mlp(3, 16, InputNormalization::identity(), 9).unwrap();
        assert_eq!(a.theta(), b.theta());
        let c = init_mlp(3, 16, InputNormalization::identity(), 10).unwrap();
        assert_ne!(a.theta(), c.theta());
        assert!(a.theta()[..32].iter().all(|w| w.abs() <= 1.0 / 2f64.sqrt()));
        assert!(init_mlp(0, 4, InputNormalization::identity(), 0).is_err());
    }

    #[test]
    fn gelu_values_at_zero() {
        let [g, g1, g2, g3] = gelu_derivatives(0.0);
        assert_eq!(g, 0.0);
        assert_eq!(g1, 0.5);
        assert!((g2 - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert_eq!(g3, 0.0);
    }

    #[test]
    fn gelu_derivatives_match_finite_differences() {
        let h = 1e-5;
        for i in 0..=120 {
            let u = -6.0 + 0.1 * i as f64;
            let d = gelu_derivatives(u);
            let dp = gelu_derivatives(u + h);
            let dm = gelu_derivatives(u - h);
            for k in 0..3 {
                let fd = (dp[k] - dm[k]) / (2.0 * h);
                assert!((fd - d[k + 1]).abs() <= 1e-6 * d[k + 1].abs().max(1e-3), "u={u} order {}", k + 1);
            }
        }
    }

    #[test]
    fn zero_network_is_its_output_bias() {
        let mut net = init_mlp(2, 5, InputNormalization::identity(), 0).unwrap();
        net.theta_mut().iter_mut().for_each(|t| *t = 0.0);
        *net.theta_mut().last_mut().unwrap() = 1.7;
        assert_eq!(net.forward_jet(Point::new(0.2, 0.9)).unwrap(), Jet::constant(1.7));
    }

    #[test]
    fn single_unit_reproduces_gelu_jet() {
        // 2 -> 1 -> 1 network computing gelu(x1).
        let theta = vec![1.0, 0.0, 0.0, 1.0, 0.0];
        let net = MlpParams::from_parts(vec![2, 1, 1], theta, InputNormalization::identity(), 0).unwrap();
        let j = net.forward_jet(Point::new(0.3, 5.0)).unwrap();
        let [g, g1, g2, _] = gelu_derivatives(0.3);
        assert!((j.f - g).abs() < 1e-15 && (j.f1 - g1).abs() < 1e-15 && (j.f11 - g2).abs() < 1e-15);
        assert_eq!((j.f2, j.f12, j.f22), (0.0, 0.0, 0.0));
    }

    fn fd_jet(net: &MlpParams, p: Point, h: f64) -> [f64; 5] {
        let v = |d1: f64, d2: f64| net.forward_batch(&[Point::new(p.x1 + d1, p.x2 + d2)], JetOrder::Value).unwrap().output[0];
        let c = v(0.0, 0.0);
        [
            (v(h, 0.0) - v(-h, 0.0)) / (2.0 * h),
            (v(0.0, h) - v(0.0, -h)) / (2.0 * h),
            (v(h, 0.0) - 2.0 * c + v(-h, 0.0)) / (h * h),
            (v(h, h) - v(h, -h) - v(-h, h) + v(-h, -h)) / (4.0 * h * h),
            (v(0.0, h) - 2.0 * c + v(0.0, -h)) / (h * h),
        ]
    }

    #[test]
    fn jets_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for s in 0..10 {
            let net = random_net(s, 3, 12);
            let pts: Vec<Point> = (0..10).map(|_| Point::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
            let jets = net.jets(&pts).unwrap();
            for (p, j) in pts.iter().zip(&jets) {
                let fd = fd_jet(&net, *p, 1e-3);
                let an = [j.f1, j.f2, j.f11, j.f12, j.f22];
                let scale = an.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, b) in an.iter().zip(fd) {
                    assert!((a - b).abs() <= 1e-4 * scale.max(1e-3), "{a} vs {b}");
                }
                // Batch and single-point evaluation agree bit for bit.
                assert_eq!(net.forward_jet(*p).unwrap(), *j);
            }
        }
    }

    #[test]
    fn mixed_derivative_symmetric_under_input_swap() {
        // Swap the roles of x1 and x2 by permuting first-layer weights.
        let net = random_net(3, 2, 8);
        let mut swapped = net.clone();
        let w = 8;
        for j in 0..w {
            swapped.theta_mut().swap(2 * j, 2 * j + 1);
        }
        swapped.normalization = InputNormalization {
            center: Point::new(net.normalization.center.x2, net.normalization.center.x1),
            scale: [net.normalization.scale[1], net.normalization.scale[0]],
        };
        let p = Point::new(0.37, -1.2);
        let a = net.forward_jet(p).unwrap();
        let b = swapped.forward_jet(Point::new(p.x2, p.x1)).unwrap();
        assert!((a.f12 - b.f12).abs() <= 1e-14 * a.f12.abs().max(1.0));
        assert!((a.f11 - b.f22).abs() <= 1e-14 * a.f11.abs().max(1.0));
    }

    fn quadratic_loss(jets: &[Jet]) -> (f64, Vec<Jet>) {
        let wts = [0.7, -0.3, 0.5, 0.2, -0.4, 0.9];
        let mut val = 0.0;
        let adj = jets
            .iter()
            .map(|j| {
                let a = j.to_array();
                let mut g = [0.0; 6];
                for k in 0..6 {
                    let t = a[k] - wts[k];
                    val += (k + 1) as f64 * t * t;
                    g[k] = 2.0 * (k + 1) as f64 * t;
                }
                // cross term couples value and curvature
                val += a[0] * a[3];
                g[0] += a[3];
                g[3] += a[0];
                Jet::from_array(g)
            })
            .collect();
        (val, adj)
    }

    fn loss_at(net: &MlpParams, pts: &[Point]) -> f64 {
        quadratic_loss(&net.jets(pts).unwrap()).0
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let net = random_net(5, 3, 10);
        let pts: Vec<Point> = (0..7).map(|_| Point::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let (val, grad) = net.param_gradient(&pts, quadratic_loss).unwrap();
        assert!((val - loss_at(&net, &pts)).abs() < 1e-12 * val.abs());
        for _ in 0..25 {
            let k = rng.gen_range(0..net.len());
            let h = 1e-5;
            let mut plus = net.clone();
            plus.theta_mut()[k] += h;
            let mut minus = net.clone();
            minus.theta_mut()[k] -= h;
            let fd = (loss_at(&plus, &pts) - loss_at(&minus, &pts)) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-5 * grad[k].abs().max(1e-2), "coord {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn degenerate_net_gradient() {
        let mut net = init_mlp(2, 4, InputNormalization::identity(), 0).unwrap();
        net.theta_mut().iter_mut().for_each(|t| *t = 0.0);
        let c = 1.3;
        *net.theta_mut().last_mut().unwrap() = c;
        let (val, grad) = net
            .param_gradient(&[Point::new(0.5, 0.5)], |j| {
                (j[0].f * j[0].f, vec![Jet { f: 2.0 * j[0].f, ..Default::default() }])
            })
            .unwrap();
        assert!((val - c * c).abs() < 1e-15);
        let last = grad.len() - 1;
        assert!((grad[last] - 2.0 * c).abs() < 1e-15);
        // Output weights see gelu(0) = 0 activations; all upstream adjoints vanish.
        assert!(grad[..last].iter().all(|&g| g == 0.0));
        let (zero, g0) = net.param_gradient(&[Point::new(0.1, 0.2)], |j| (0.0, vec![Jet::default(); j.len()])).unwrap();
        assert_eq!(zero, 0.0);
        assert!(g0.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn output_bound_holds() {
        let net = random_net(8, 3, 16);
        let bound = net.output_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let inv = |u: f64, k: usize| u / net.normalization.scale[k];
        for _ in 0..2000 {
            let u = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            let p = Point::new(inv(u[0], 0) + net.normalization.center.x1, inv(u[1], 1) + net.normalization.center.x2);
            assert!(net.values(&[p]).unwrap()[0].abs() <= bound);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = random_net(2, 2, 6);
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        let back = MlpParams::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, net);
        buf.truncate(buf.len() - 3);
        assert!(MlpParams::read_checkpoint(&buf[..]).is_err());
    }
}
