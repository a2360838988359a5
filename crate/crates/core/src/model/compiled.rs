//! Single-step heuristic inference specialised to two-layer MLPs.
//!
//! With zero initial latents a node's input is one of three rows (plain,
//! source, target), so the first message layer is `alpha + beta * w` for a
//! given (receiver, sender) type pair and the message MLP is a piecewise
//! linear function of the arc weight `w`. Its breakpoints, one per hidden
//! unit, are shared by all output channels, so between breakpoints the
//! message is `p + q * w`. The max over a set of weights falling in one piece
//! is reached at the smallest or the largest of them, channel by channel.
//!
//! The update MLP's second layer and the linear heuristic decoder fold into
//! one vector. The result equals [`super::infer_heuristic`] up to rounding.

use crate::graph::ProblemInstance;
use crate::search::HeuristicField;

use super::ModelParameters;

const TYPES: usize = 3;

/// Largest piece count gathered in locals during the edge pass.
const RUN: usize = 8;

// Plain compare-selects; inputs are never NaN here.
#[inline(always)]
fn min(a: f64, b: f64) -> f64 {
    if b < a {
        b
    } else {
        a
    }
}

#[inline(always)]
fn max(a: f64, b: f64) -> f64 {
    if b > a {
        b
    } else {
        a
    }
}

fn node_type(instance: &ProblemInstance, v: usize) -> usize {
    if v == instance.source {
        1
    } else if v == instance.target {
        2
    } else {
        0
    }
}

/// Message as a function of the arc weight for one (receiver, sender) pair.
#[derive(Debug, Clone)]
struct Piecewise {
    /// Sorted breakpoints; piece `i` covers weights with `i` breakpoints below.
    breaks: Vec<f64>,
    /// `(breaks + 1) x H` offsets and slopes.
    p: Vec<f64>,
    q: Vec<f64>,
    /// Bucketed lookup over `[grid_lo, grid_hi]`: `grid_start[g]` counts the
    /// breakpoints in earlier buckets and `grid_next[g]` is the one breakpoint
    /// inside bucket `g` (infinite if none, NaN if several).
    grid_start: Vec<u32>,
    grid_next: Vec<f64>,
    grid_lo: f64,
    grid_scale: f64,
}

const GRID: usize = 2048;

impl Piecewise {
    fn new(alpha: &[f64], beta: &[f64], w1: &[f64], b1: &[f64]) -> Self {
        let h = b1.len();
        let mut breaks: Vec<f64> = alpha
            .iter()
            .zip(beta)
            .filter(|(_, &b)| b != 0.0)
            .map(|(&a, &b)| -a / b)
            .filter(|x| x.is_finite())
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let pieces = breaks.len() + 1;
        let mut p = Vec::with_capacity(pieces * h);
        let mut q = Vec::with_capacity(pieces * h);
        for i in 0..pieces {
            let probe = match (i.checked_sub(1).map(|j| breaks[j]), breaks.get(i)) {
                (None, None) => 0.0,
                (None, Some(&hi)) => hi - 1.0 - hi.abs(),
                (Some(lo), None) => lo + 1.0 + lo.abs(),
                (Some(lo), Some(&hi)) => 0.5 * (lo + hi),
            };
            let (mut pi, mut qi) = (b1.to_vec(), vec![0.0; h]);
            for (k, (&a, &b)) in alpha.iter().zip(beta).enumerate() {
                if a + b * probe > 0.0 {
                    let row = &w1[k * h..(k + 1) * h];
                    for j in 0..h {
                        pi[j] += a * row[j];
                        qi[j] += b * row[j];
                    }
                }
            }
            p.extend(pi);
            q.extend(qi);
        }
        let (grid_lo, grid_hi) = match (breaks.first(), breaks.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        };
        let grid_scale = if grid_hi > grid_lo {
            GRID as f64 / (grid_hi - grid_lo)
        } else {
            0.0
        };
        let mut grid_start = vec![0u32; GRID];
        let mut grid_next = vec![f64::INFINITY; GRID];
        let mut members = vec![0usize; GRID];
        for &b in &breaks {
            members[bucket(b, grid_lo, grid_scale)] += 1;
        }
        let mut below = 0u32;
        for g in 0..GRID {
            grid_start[g] = below;
            grid_next[g] = match members[g] {
                0 => f64::INFINITY,
                1 => breaks[below as usize],
                _ => f64::NAN,
            };
            below += members[g] as u32;
        }
        Self {
            breaks,
            p,
            q,
            grid_start,
            grid_next,
            grid_lo,
            grid_scale,
        }
    }

    #[cfg(test)]
    fn pieces(&self) -> usize {
        self.breaks.len() + 1
    }

    /// Number of breakpoints strictly below `w`.
    #[inline]
    fn piece(&self, w: f64) -> usize {
        let g = bucket(w, self.grid_lo, self.grid_scale);
        let start = self.grid_start[g] as usize;
        let next = self.grid_next[g];
        if next.is_nan() {
            let mut i = start;
            while i < self.breaks.len() && self.breaks[i] < w {
                i += 1;
            }
            i
        } else {
            start + usize::from(next < w)
        }
    }
}

/// Monotone in `x`, so breakpoints in earlier buckets are below any weight
/// in a later one.
#[inline]
fn bucket(x: f64, lo: f64, scale: f64) -> usize {
    ((x - lo) * scale).clamp(0.0, (GRID - 1) as f64) as usize
}

/// A model reduced for fast one-step heuristic inference.
#[derive(Debug, Clone)]
pub struct CompiledHeuristic {
    hidden: usize,
    mlp_hidden: usize,
    /// Indexed by `receiver_type * 3 + sender_type`.
    messages: Vec<Piecewise>,
    /// Self-arc message per node type.
    self_message: Vec<Vec<f64>>,
    /// Node-type part plus bias of the first update layer (`M` each).
    update_base: Vec<Vec<f64>>,
    /// Aggregate block of the first update layer, `H x M`.
    update_agg: Vec<f64>,
    /// Second update layer times the latent part of the decoder (`M`).
    readout: Vec<f64>,
    /// Decoder contribution of the node type and the update bias.
    y_base: [f64; TYPES],
}

impl CompiledHeuristic {
    /// `None` unless both MLPs have exactly two layers.
    pub fn new(params: &ModelParameters) -> Option<Self> {
        let cfg = params.config();
        let lay = &params.layout;
        if lay.message.len() != 2 || lay.update.len() != 2 {
            return None;
        }
        let (h, m) = (cfg.hidden_dim, cfg.mlp_hidden);
        let val = |i: usize| params.value(i).data();
        let theta_v = val(lay.node_encoder);
        let theta_e = val(lay.edge_encoder);
        let (w0, b0) = (val(lay.message[0].weight), val(lay.message[0].bias));
        let (w1, b1) = (val(lay.message[1].weight), val(lay.message[1].bias));
        let (u0, ub0) = (val(lay.update[0].weight), val(lay.update[0].bias));
        let (u1, ub1) = (val(lay.update[1].weight), val(lay.update[1].bias));
        let dec = val(lay.heuristic);

        // z per node type: zero, first encoder row, second encoder row.
        let z: Vec<Vec<f64>> = (0..TYPES)
            .map(|t| {
                if t == 0 {
                    vec![0.0; h]
                } else {
                    theta_v[(t - 1) * h..t * h].to_vec()
                }
            })
            .collect();
        // Rows `offset .. offset + k` of an `_ x cols` matrix applied to `x`.
        let project = |x: &[f64], mat: &[f64], offset: usize, cols: usize| -> Vec<f64> {
            let mut out = vec![0.0; cols];
            for (r, &xv) in x.iter().enumerate() {
                let row = &mat[(offset + r) * cols..(offset + r + 1) * cols];
                for (o, &wv) in out.iter_mut().zip(row) {
                    *o += xv * wv;
                }
            }
            out
        };
        let recv: Vec<Vec<f64>> = z.iter().map(|zt| project(zt, w0, 0, m)).collect();
        let send: Vec<Vec<f64>> = z.iter().map(|zt| project(zt, w0, 2 * h, m)).collect();
        let beta = project(theta_e, w0, 4 * h, m);

        let mut messages = Vec::with_capacity(TYPES * TYPES);
        for tv in 0..TYPES {
            for tu in 0..TYPES {
                let alpha: Vec<f64> = (0..m).map(|k| recv[tv][k] + send[tu][k] + b0[k]).collect();
                messages.push(Piecewise::new(&alpha, &beta, w1, b1));
            }
        }
        let self_message = (0..TYPES)
            .map(|t| {
                let table = &messages[t * TYPES + t];
                let i = table.piece(0.0);
                table.p[i * h..(i + 1) * h].to_vec()
            })
            .collect();
        let update_base = z
            .iter()
            .map(|zt| {
                project(zt, u0, 0, m)
                    .iter()
                    .zip(ub0)
                    .map(|(a, b)| a + b)
                    .collect()
            })
            .collect();
        let update_agg = u0[2 * h * m..3 * h * m].to_vec();
        let dec_latent = &dec[h..2 * h];
        let readout = (0..m)
            .map(|k| (0..h).map(|j| u1[k * h + j] * dec_latent[j]).sum())
            .collect();
        let bias_term: f64 = ub1.iter().zip(dec_latent).map(|(a, b)| a * b).sum();
        let mut y_base = [0.0; TYPES];
        for t in 0..TYPES {
            y_base[t] = z[t].iter().zip(&dec[..h]).map(|(a, b)| a * b).sum::<f64>() + bias_term;
        }
        Some(Self {
            hidden: h,
            mlp_hidden: m,
            messages,
            self_message,
            update_base,
            update_agg,
            readout,
            y_base,
        })
    }

    /// The one-step heuristic field for `instance`.
    pub fn infer(&self, instance: &ProblemInstance) -> HeuristicField {
        let (h, m) = (self.hidden, self.mlp_hidden);
        let graph = &instance.graph;
        let n = graph.node_count();
        let (s, t) = (instance.source, instance.target);
        let types: Vec<usize> = (0..n).map(|v| node_type(instance, v)).collect();
        let mut agg = Vec::with_capacity(n * h);
        for &tv in &types {
            agg.extend_from_slice(&self.self_message[tv]);
        }
        let (w_min, w_max) = graph.weight_range();
        // Messages between two plain nodes share one table, so each edge is
        // binned once and only the weight range per piece is recorded. Only
        // breakpoints inside the instance's weight range split anything.
        let plain = &self.messages[0];
        let base = plain.breaks.partition_point(|&b| b < w_min);
        let inner = &plain.breaks[base..plain.breaks.partition_point(|&b| b < w_max).max(base)];
        let pieces = inner.len() + 1;
        let bin = |w: f64| -> usize {
            if inner.len() <= 4 {
                inner.iter().map(|&b| usize::from(b < w)).sum()
            } else {
                plain.piece(w) - base
            }
        };
        let mut lo = vec![f64::INFINITY; n * pieces];
        let mut hi = vec![f64::NEG_INFINITY; n * pieces];
        // Edges tend to arrive grouped by their first endpoint; that side is
        // gathered in locals and merged when the endpoint changes.
        let local = pieces <= RUN;
        let mut run = usize::MAX;
        let mut run_lo = [f64::INFINITY; RUN];
        let mut run_hi = [f64::NEG_INFINITY; RUN];
        let merge = |run: usize,
                     run_lo: &mut [f64; RUN],
                     run_hi: &mut [f64; RUN],
                     lo: &mut [f64],
                     hi: &mut [f64]| {
            if run == usize::MAX {
                return;
            }
            for i in 0..pieces {
                let k = run * pieces + i;
                lo[k] = min(lo[k], run_lo[i]);
                hi[k] = max(hi[k], run_hi[i]);
            }
            *run_lo = [f64::INFINITY; RUN];
            *run_hi = [f64::NEG_INFINITY; RUN];
        };
        // Edge `i` is arc `2i`; its mirror carries the same weight.
        for e in graph.arcs().chunks_exact(2).map(|pair| &pair[0]) {
            let (u, v, w) = (e.src, e.dst, e.weight);
            if u == s || u == t || v == s || v == t {
                for (recv, send) in [(v, u), (u, v)] {
                    let table = &self.messages[types[recv] * TYPES + types[send]];
                    let i = table.piece(w);
                    let (p, q) = (&table.p[i * h..(i + 1) * h], &table.q[i * h..(i + 1) * h]);
                    for ((a, &pj), &qj) in agg[recv * h..(recv + 1) * h].iter_mut().zip(p).zip(q) {
                        *a = max(*a, pj + qj * w);
                    }
                }
                continue;
            }
            let i = bin(w);
            if local {
                if u != run {
                    merge(run, &mut run_lo, &mut run_hi, &mut lo, &mut hi);
                    run = u;
                }
                run_lo[i] = min(run_lo[i], w);
                run_hi[i] = max(run_hi[i], w);
            } else {
                let k = u * pieces + i;
                lo[k] = min(lo[k], w);
                hi[k] = max(hi[k], w);
            }
            let k = v * pieces + i;
            lo[k] = min(lo[k], w);
            hi[k] = max(hi[k], w);
        }
        if local {
            merge(run, &mut run_lo, &mut run_hi, &mut lo, &mut hi);
        }
        for v in 0..n {
            let agg_v = &mut agg[v * h..(v + 1) * h];
            for i in 0..pieces {
                let (l, r) = (lo[v * pieces + i], hi[v * pieces + i]);
                if l > r {
                    continue;
                }
                let g = base + i;
                let (p, q) = (&plain.p[g * h..(g + 1) * h], &plain.q[g * h..(g + 1) * h]);
                for ((a, &pj), &qj) in agg_v.iter_mut().zip(p).zip(q) {
                    *a = max(*a, pj + qj * if qj >= 0.0 { r } else { l });
                }
            }
        }
        let mut act = Vec::with_capacity(n * m);
        for &tv in &types {
            act.extend_from_slice(&self.update_base[tv]);
        }
        // SAFETY: `agg` is n x h, `update_agg` h x m and `act` n x m, all
        // row-major and contiguous, matching the dimensions and strides given.
        unsafe {
            matrixmultiply::dgemm(
                n,
                h,
                m,
                1.0,
                agg.as_ptr(),
                h as isize,
                1,
                self.update_agg.as_ptr(),
                m as isize,
                1,
                1.0,
                act.as_mut_ptr(),
                m as isize,
                1,
            );
        }
        let y = types
            .iter()
            .zip(act.chunks_exact(m.max(1)))
            .map(|(&tv, a)| {
                let latent: f64 = a
                    .iter()
                    .zip(&self.readout)
                    .map(|(&x, &r)| x.max(0.0) * r)
                    .sum();
                self.y_base[tv] + latent
            })
            .collect();
        HeuristicField::new(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_graph, sample_instance, DistributionConfig, Family};
    use crate::model::{infer_heuristic, ModelConfig};
    use crate::rng;
    use rand::Rng;

    /// Random non-zero values everywhere, biases included.
    fn noisy(config: &ModelConfig, seed: u64) -> ModelParameters {
        let mut params = ModelParameters::init(config).unwrap();
        let mut r = rng::rng_from_seed(seed);
        let indices: Vec<usize> = (0..params.store().len()).collect();
        for i in indices {
            for x in params.store_mut().value_mut(i).data_mut() {
                *x += r.random_range(-0.5..0.5);
            }
        }
        params
    }

    #[test]
    fn matches_the_reference_route() {
        for (case, family) in Family::ALL.into_iter().enumerate() {
            for (hidden, mlp) in [(4, 6), (16, 16), (8, 3)] {
                let config = ModelConfig {
                    hidden_dim: hidden,
                    mlp_hidden: mlp,
                    ..ModelConfig::default()
                };
                let params = noisy(&config, case as u64 * 31 + hidden as u64);
                let compiled = CompiledHeuristic::new(&params).unwrap();
                for seed in 0..20 {
                    let dist = DistributionConfig::for_family(family, 40, seed);
                    let graph = generate_graph(&dist).unwrap();
                    let Ok(instance) = sample_instance(&graph, seed) else {
                        continue;
                    };
                    let fast = compiled.infer(&instance);
                    let slow = infer_heuristic(&instance, &params).unwrap();
                    for (a, b) in fast.values().iter().zip(slow.values()) {
                        assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn bucketed_lookup_counts_breakpoints() {
        let mut r = rng::rng_from_seed(2);
        for _ in 0..50 {
            let m = r.random_range(1..40);
            let alpha: Vec<f64> = (0..m).map(|_| r.random_range(-3.0..3.0)).collect();
            let beta: Vec<f64> = (0..m).map(|_| r.random_range(-3.0..3.0)).collect();
            let table = Piecewise::new(&alpha, &beta, &vec![0.0; m], &[0.0]);
            for _ in 0..200 {
                let w = r.random_range(-20.0..20.0);
                assert_eq!(table.piece(w), table.breaks.partition_point(|&b| b < w));
            }
            for &b in &table.breaks {
                assert_eq!(table.piece(b), table.breaks.partition_point(|&x| x < b));
            }
        }
    }

    #[test]
    fn crowded_buckets_fall_back_to_scanning() {
        // Breakpoints at 1, 1 + 1e-12 and 5 put two in the first bucket.
        let table = Piecewise::new(
            &[-1.0, -1.0 - 1e-12, -5.0],
            &[1.0, 1.0, 1.0],
            &[0.0; 3],
            &[0.0],
        );
        assert_eq!(table.breaks.len(), 3);
        assert!(table.grid_next[0].is_nan());
        for w in [0.0, 1.0, 1.0 + 5e-13, 1.0 + 1e-12, 2.0, 5.0, 6.0] {
            assert_eq!(
                table.piece(w),
                table.breaks.partition_point(|&b| b < w),
                "{w}"
            );
        }
    }

    #[test]
    fn other_depths_are_not_compiled() {
        let config = ModelConfig {
            mlp_layers: 3,
            ..ModelConfig::default()
        };
        assert!(CompiledHeuristic::new(&ModelParameters::init(&config).unwrap()).is_none());
    }

    #[test]
    fn pieces_cover_the_line() {
        let table = Piecewise::new(&[1.0, -2.0], &[-1.0, 1.0], &[1.0, 2.0], &[0.0]);
        assert_eq!(table.breaks, [1.0, 2.0]);
        assert_eq!(table.pieces(), 3);
        // relu(1 - w) + 2 relu(w - 2)
        let eval = |w: f64| {
            let i = table.piece(w);
            table.p[i] + table.q[i] * w
        };
        for w in [-1.0f64, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
            let want = (1.0 - w).max(0.0) + 2.0 * (w - 2.0).max(0.0);
            assert!((eval(w) - want).abs() < 1e-12, "{w}");
        }
    }
}
