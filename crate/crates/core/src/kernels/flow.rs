//! Matrix-free heat flows `a_t = exp(t (a - I))`.
//!
//! General kernels use uniformization, `a_t x = Σ_n e^{-t} tⁿ/n! aⁿ x`, with
//! the Poisson series cut once its tail mass drops below [`POISSON_TAIL`].
//! The discarded tail is folded into the last retained weight so that the
//! weights sum to one and total mass is conserved to rounding.
//!
//! Long flows are split into equal chunks of length at most [`MAX_CHUNK`]
//! (`a_t = (a_{t/m})^m`), which keeps `e^{-t}` representable.
//!
//! Lattice kernels with a nearest-neighbour step law factor over the axes,
//! `exp(t(a - I)) = Π_i exp((t/d)(P_i - I))`, where `P_i` is the symmetric
//! one-dimensional step along axis `i`. Each factor is a circular
//! convolution whose taps come from the same uniformization applied on a
//! single ring.

use super::{Csr, Kernel, StepLaw};
use crate::error::{Error, Result};

/// Truncation threshold for the Poisson tail mass.
pub const POISSON_TAIL: f64 = 1e-12;

/// Longest time span handled by a single Poisson series.
pub const MAX_CHUNK: f64 = 32.0;

/// Convolution taps below this weight are dropped (and the rest renormalised).
const TAP_FLOOR: f64 = 1e-18;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Flow generated by `a - I`.
    Forward,
    /// Flow generated by `aᵀ - I`.
    Transpose,
}

/// Poisson(τ) weights truncated at [`POISSON_TAIL`], tail folded into the last entry.
pub(crate) fn poisson_weights(tau: f64) -> Vec<f64> {
    let mut weights = vec![(-tau).exp()];
    let mut total = weights[0];
    let mut n = 0usize;
    while (n as f64) < tau || 1.0 - total > POISSON_TAIL {
        n += 1;
        let w = weights[n - 1] * tau / n as f64;
        weights.push(w);
        total += w;
    }
    let last = weights.len() - 1;
    weights[last] += 1.0 - total;
    weights
}

#[derive(Clone, Debug)]
enum Method {
    Identity,
    Uniformization {
        weights: Vec<f64>,
        repeats: usize,
    },
    Separable {
        side: usize,
        dim: usize,
        taps: Vec<(usize, f64)>,
    },
}

/// Reusable work buffers for [`FlowPlan::apply`].
#[derive(Clone, Debug, Default)]
pub struct FlowScratch {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

/// Precomputed heat flow over a fixed duration.
#[derive(Clone, Debug)]
pub struct FlowPlan<'k> {
    kernel: &'k Kernel,
    direction: Direction,
    t: f64,
    method: Method,
}

impl<'k> FlowPlan<'k> {
    pub fn new(kernel: &'k Kernel, t: f64, direction: Direction) -> Result<Self> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::arg(format!(
                "flow time must be finite and nonnegative, got {t}"
            )));
        }
        let method = if t == 0.0 {
            Method::Identity
        } else if let Some(g) = kernel.geometry() {
            match g.step_law {
                StepLaw::NearestNeighborUniform => Method::Separable {
                    side: g.side,
                    dim: g.dim,
                    taps: ring_taps(g.side, t / g.dim as f64),
                },
            }
        } else {
            Self::uniformization(t)
        };
        Ok(FlowPlan {
            kernel,
            direction,
            t,
            method,
        })
    }

    /// Plan that always takes the uniformization route, even for lattices.
    pub fn new_uniformized(kernel: &'k Kernel, t: f64, direction: Direction) -> Result<Self> {
        let mut plan = Self::new(kernel, t, direction)?;
        if t > 0.0 {
            plan.method = Self::uniformization(t);
        }
        Ok(plan)
    }

    fn uniformization(t: f64) -> Method {
        let repeats = (t / MAX_CHUNK).ceil().max(1.0) as usize;
        Method::Uniformization {
            weights: poisson_weights(t / repeats as f64),
            repeats,
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn kernel(&self) -> &'k Kernel {
        self.kernel
    }

    /// `out = a_t x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64], scratch: &mut FlowScratch) {
        let n = self.kernel.n_sites();
        assert_eq!(x.len(), n);
        assert_eq!(out.len(), n);
        match &self.method {
            Method::Identity => out.copy_from_slice(x),
            Method::Uniformization { weights, repeats } => {
                let m = self.kernel.matrix(self.direction);
                out.copy_from_slice(x);
                for _ in 0..*repeats {
                    uniformize_chunk(m, weights, out, scratch);
                }
            }
            Method::Separable { side, dim, taps } => {
                out.copy_from_slice(x);
                let mut stride = 1;
                for _ in 0..*dim {
                    scratch.a.resize(n, 0.0);
                    convolve_axis(out, &mut scratch.a, *side, stride, taps);
                    out.copy_from_slice(&scratch.a);
                    stride *= side;
                }
            }
        }
    }

    /// Replaces `field` by `a_t field`.
    pub fn apply_in_place(&self, field: &mut [f64], scratch: &mut FlowScratch) {
        let mut buf = std::mem::take(&mut scratch.c);
        buf.resize(field.len(), 0.0);
        buf.copy_from_slice(field);
        self.apply(&buf, field, scratch);
        scratch.c = buf;
    }
}

fn uniformize_chunk(m: &Csr, weights: &[f64], field: &mut [f64], scratch: &mut FlowScratch) {
    let n = field.len();
    scratch.a.resize(n, 0.0);
    scratch.b.resize(n, 0.0);
    scratch.a.copy_from_slice(field);
    for (f, p) in field.iter_mut().zip(&scratch.a) {
        *f = weights[0] * p;
    }
    for &w in &weights[1..] {
        m.matvec(&scratch.a, &mut scratch.b);
        std::mem::swap(&mut scratch.a, &mut scratch.b);
        for (f, p) in field.iter_mut().zip(&scratch.a) {
            *f += w * p;
        }
    }
}

/// Transition probabilities of the continuous-time symmetric walk on a ring
/// of `side` sites after time `rate`, indexed by displacement.
fn ring_taps(side: usize, rate: f64) -> Vec<(usize, f64)> {
    let repeats = (rate / MAX_CHUNK).ceil().max(1.0) as usize;
    let weights = poisson_weights(rate / repeats as f64);
    let mut dist = vec![0.0; side];
    dist[0] = 1.0;
    let mut cur = vec![0.0; side];
    let mut next = vec![0.0; side];
    for _ in 0..repeats {
        cur.copy_from_slice(&dist);
        for (d, c) in dist.iter_mut().zip(&cur) {
            *d = weights[0] * c;
        }
        for &w in &weights[1..] {
            for i in 0..side {
                next[i] = 0.5 * (cur[(i + side - 1) % side] + cur[(i + 1) % side]);
            }
            std::mem::swap(&mut cur, &mut next);
            for (d, c) in dist.iter_mut().zip(&cur) {
                *d += w * c;
            }
        }
    }
    let mut taps: Vec<(usize, f64)> = dist
        .into_iter()
        .enumerate()
        .filter(|&(_, w)| w > TAP_FLOOR)
        .collect();
    let total: f64 = taps.iter().map(|t| t.1).sum();
    for t in &mut taps {
        t.1 /= total;
    }
    taps
}

/// Circular convolution along the axis with the given stride.
fn convolve_axis(
    input: &[f64],
    out: &mut [f64],
    side: usize,
    stride: usize,
    taps: &[(usize, f64)],
) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let block = side * stride;
    if stride == 1 {
        for (src, dst) in input.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
            for (p, &v) in src.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                for &(off, w) in taps {
                    let mut q = p + off;
                    if q >= side {
                        q -= side;
                    }
                    dst[q] += w * v;
                }
            }
        }
        return;
    }
    for (src, dst) in input.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
        for p in 0..side {
            let row = &src[p * stride..(p + 1) * stride];
            if row.iter().all(|&v| v == 0.0) {
                continue;
            }
            for &(off, w) in taps {
                let mut q = p + off;
                if q >= side {
                    q -= side;
                }
                let target = &mut dst[q * stride..(q + 1) * stride];
                for (t, &v) in target.iter_mut().zip(row) {
                    *t += w * v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::StepLaw;

    fn flip() -> Kernel {
        Kernel::from_triples(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    #[test]
    fn poisson_weights_sum_to_one() {
        for tau in [1e-3, 0.1, 1.0, 7.5, 32.0] {
            let w = poisson_weights(tau);
            let s: f64 = w.iter().sum();
            assert!((s - 1.0).abs() < 1e-15, "tau {tau}: {s}");
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let k = Kernel::lattice(2, 5, StepLaw::NearestNeighborUniform).unwrap();
        let x: Vec<f64> = (0..25).map(|i| i as f64 * 0.1).collect();
        assert_eq!(k.heat_flow(0.0, &x).unwrap(), x);
    }

    #[test]
    fn flip_kernel_closed_form() {
        // eigenvalues 0 and -2 of a - I
        let y = flip().heat_flow(0.5, &[1.0, 0.0]).unwrap();
        let e = (-1.0f64).exp();
        assert!((y[0] - (1.0 + e) / 2.0).abs() < 2e-12);
        assert!((y[1] - (1.0 - e) / 2.0).abs() < 2e-12);
        assert!((y[0] - 0.6839).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let k = flip();
        assert!(k.heat_flow(-1.0, &[1.0, 0.0]).is_err());
        assert!(k.heat_flow(f64::NAN, &[1.0, 0.0]).is_err());
        assert!(k.heat_flow(1.0, &[f64::INFINITY, 0.0]).is_err());
        assert!(k.heat_flow(1.0, &[1.0]).is_err());
    }

    #[test]
    fn separable_path_matches_uniformization() {
        for (d, l, t) in [(1, 7, 0.3), (2, 6, 2.5), (3, 5, 40.0), (1, 31, 100.0)] {
            let k = Kernel::lattice(d, l, StepLaw::NearestNeighborUniform).unwrap();
            let n = k.n_sites();
            let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64).collect();
            let fast = FlowPlan::new(&k, t, Direction::Forward).unwrap();
            let slow = FlowPlan::new_uniformized(&k, t, Direction::Forward).unwrap();
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            fast.apply(&x, &mut a, &mut FlowScratch::default());
            slow.apply(&x, &mut b, &mut FlowScratch::default());
            for i in 0..n {
                assert!(
                    (a[i] - b[i]).abs() < 1e-11 * (1.0 + b[i].abs()),
                    "d={d} i={i}"
                );
            }
        }
    }

    #[test]
    fn long_flows_reach_uniform_distribution() {
        let k = Kernel::lattice(1, 5, StepLaw::NearestNeighborUniform).unwrap();
        let y = k.heat_flow(500.0, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        for v in y {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_flow_uses_transposed_kernel() {
        // a moves everything to site 0: a(0, l) = 1 for all l
        let k = Kernel::from_triples(2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let fwd = k
            .heat_flow_directed(Direction::Forward, 1.0, &[0.0, 1.0])
            .unwrap();
        let e = (-1.0f64).exp();
        assert!((fwd[1] - e).abs() < 1e-13);
        assert!((fwd[0] - (1.0 - e)).abs() < 1e-13);
        // aᵀ - I = [[0, 0], [1, -1]]: x0 stays put, x1 relaxes towards x0
        let bwd = k
            .heat_flow_directed(Direction::Transpose, 1.0, &[1.0, 0.0])
            .unwrap();
        assert!((bwd[0] - 1.0).abs() < 1e-13);
        assert!((bwd[1] - (1.0 - e)).abs() < 1e-13);
    }
}
