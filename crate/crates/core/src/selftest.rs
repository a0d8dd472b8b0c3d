//! Gradient checks and oracle comparisons bundled as a runnable self test.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clm::{contrastive_loss, contrastive_loss_single, per_sample_loss, ClmVariant, LabelGrid};
use crate::data::Point;
use crate::diff::{grad_check, DenseArray, Graph, Var};
use crate::error::Result;
use crate::losses::{
    combined_loss, count_loss, density_loss, grid_cost, ot_loss, sinkhorn, tv_loss, GroundTruth, LossWeights,
    SinkhornConfig,
};
use crate::metrics::match_points;
use crate::mpm::{consistent_loss, ConsistentVariant, EncoderConfig, MaskSpec, MaskStrategy, MaskedPredictor};
use crate::oracle::{brute_force_matching, exact_ot};
use crate::param::{Initializer, ParamStore};

pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_SEEDS: u64 = 10;
pub const FD_STEP: f64 = 1e-5;
pub const OT_REL_TOL: f64 = 0.01;
pub const OT_INSTANCES: u64 = 100;
pub const OT_GRAD_TOL: f64 = 1e-3;
pub const MATCH_INSTANCES: u64 = 200;
pub const MATCH_SIGMAS: [f64; 3] = [4.0, 8.0, 16.0];
pub const IDENTITY_TOL: f64 = 1e-12;

/// One line of the self-test table: the worst observed error against its tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub worst: f64,
    pub tol: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, worst: f64, tol: f64) -> Self {
        Self { name: name.into(), worst, tol }
    }

    pub fn passed(&self) -> bool {
        self.worst <= self.tol
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn uniform(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> DenseArray {
    DenseArray::from_fn(shape, |_| r.random_range(lo..hi))
}

/// Values bounded away from zero in magnitude, for ops with a kink at 0.
fn off_zero(r: &mut ChaCha8Rng, shape: &[usize]) -> DenseArray {
    DenseArray::from_fn(shape, |_| {
        let m = r.random_range(0.2..2.0);
        if r.random_bool(0.5) { m } else { -m }
    })
}

/// `sum(out * w)` for a fixed random `w`, turning any output into a scalar.
fn probe(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let mut r = rng(seed, 99);
    let w = g.constant(uniform(&mut r, g.shape(out), -1.0, 1.0));
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

type Unary = fn(&mut Graph, Var, &DenseArray) -> Result<Var>;

/// `(name, input sampler, function of the checked input and a fixed side input)`.
fn primitive_cases() -> Vec<(&'static str, fn(&mut ChaCha8Rng) -> (DenseArray, DenseArray), Unary)> {
    fn pair(r: &mut ChaCha8Rng) -> (DenseArray, DenseArray) {
        (uniform(r, &[3, 4], -2.0, 2.0), uniform(r, &[3, 4], -2.0, 2.0))
    }
    fn positive(r: &mut ChaCha8Rng) -> (DenseArray, DenseArray) {
        (uniform(r, &[3, 4], 0.3, 3.0), uniform(r, &[3, 4], 0.3, 3.0))
    }
    fn kinked(r: &mut ChaCha8Rng) -> (DenseArray, DenseArray) {
        (off_zero(r, &[3, 4]), off_zero(r, &[3, 4]))
    }
    fn mats(r: &mut ChaCha8Rng) -> (DenseArray, DenseArray) {
        (uniform(r, &[2, 3, 4], -1.0, 1.0), uniform(r, &[2, 4, 5], -1.0, 1.0))
    }
    fn rowvec(r: &mut ChaCha8Rng) -> (DenseArray, DenseArray) {
        (uniform(r, &[1, 4], -2.0, 2.0), uniform(r, &[3, 4], -2.0, 2.0))
    }
    fn image(r: &mut ChaCha8Rng) -> (DenseArray, DenseArray) {
        (uniform(r, &[2, 3, 6, 6], -1.0, 1.0), uniform(r, &[4, 3, 3, 3], -1.0, 1.0))
    }
    fn kernel(r: &mut ChaCha8Rng) -> (DenseArray, DenseArray) {
        (uniform(r, &[4, 3, 3, 3], -1.0, 1.0), uniform(r, &[2, 3, 6, 6], -1.0, 1.0))
    }
    fn bias_and_image(r: &mut ChaCha8Rng) -> (DenseArray, DenseArray) {
        (uniform(r, &[4], -1.0, 1.0), uniform(r, &[2, 3, 6, 6], -1.0, 1.0))
    }
    fn distinct(r: &mut ChaCha8Rng) -> (DenseArray, DenseArray) {
        // a shuffled ramp keeps pooling windows free of near-ties
        let mut v: Vec<f64> = (0..2 * 3 * 4 * 4).map(|i| i as f64 * 0.1).collect();
        use rand::seq::SliceRandom;
        v.shuffle(r);
        (DenseArray::new(vec![2, 3, 4, 4], v).unwrap(), DenseArray::scalar(0.0))
    }
    fn small_image(r: &mut ChaCha8Rng) -> (DenseArray, DenseArray) {
        (uniform(r, &[1, 2, 3, 3], -1.0, 1.0), DenseArray::scalar(0.0))
    }
    vec![
        ("add", pair, |g, x, o| {
            let c = g.constant(o.clone());
            g.add(x, c)
        }),
        ("add (broadcast)", rowvec, |g, x, o| {
            let c = g.constant(o.clone());
            g.add(x, c)
        }),
        ("sub", pair, |g, x, o| {
            let c = g.constant(o.clone());
            g.sub(c, x)
        }),
        ("mul", pair, |g, x, o| {
            let c = g.constant(o.clone());
            g.mul(x, c)
        }),
        ("mul (self)", pair, |g, x, _| g.mul(x, x)),
        ("div (numerator)", positive, |g, x, o| {
            let c = g.constant(o.clone());
            g.div(x, c)
        }),
        ("div (denominator)", positive, |g, x, o| {
            let c = g.constant(o.clone());
            g.div(c, x)
        }),
        ("relu", kinked, |g, x, _| Ok(g.relu(x))),
        ("exp", pair, |g, x, _| Ok(g.exp(x))),
        ("ln", positive, |g, x, _| Ok(g.ln(x))),
        ("abs", kinked, |g, x, _| Ok(g.abs(x))),
        ("sqrt", positive, |g, x, _| Ok(g.sqrt(x))),
        ("square", pair, |g, x, _| Ok(g.square(x))),
        ("softplus", pair, |g, x, _| Ok(g.softplus(x))),
        ("scale", pair, |g, x, _| Ok(g.scale(x, -1.7))),
        ("add_scalar", pair, |g, x, _| Ok(g.add_scalar(x, 0.3))),
        ("matmul (left)", mats, |g, x, o| {
            let c = g.constant(o.clone());
            g.matmul(x, c)
        }),
        ("matmul (right)", mats, |g, x, o| {
            let x = g.permute(x, &[0, 2, 1])?;
            let c = g.constant(o.clone());
            let c = g.permute(c, &[0, 2, 1])?;
            g.matmul(c, x)
        }),
        ("matmul_t (both transposed)", mats, |g, x, o| {
            let c = g.constant(o.clone());
            g.matmul_t(c, x, true, true)
        }),
        ("reshape", pair, |g, x, _| g.reshape(x, &[2, 6])),
        ("permute", mats, |g, x, _| g.permute(x, &[2, 0, 1])),
        ("broadcast_to", rowvec, |g, x, _| g.broadcast_to(x, &[3, 4])),
        ("concat", pair, |g, x, o| {
            let c = g.constant(o.clone());
            let sq = g.square(x);
            g.concat(&[x, c, sq], 1)
        }),
        ("index_select", pair, |g, x, _| g.index_select(x, &[2, 0, 2])),
        ("narrow", pair, |g, x, _| g.narrow(x, 1, 2)),
        ("scatter_rows", pair, |g, x, _| g.scatter_rows(x, &[4, 0, 4], 5)),
        ("sum", pair, |g, x, _| {
            let s = g.square(x);
            Ok(g.sum(s))
        }),
        ("mean", pair, |g, x, _| {
            let s = g.square(x);
            Ok(g.mean(s))
        }),
        ("sum_axis", mats, |g, x, _| g.sum_axis(x, 1)),
        ("mean_axis", mats, |g, x, _| g.mean_axis(x, 2)),
        ("l1_norm", kinked, |g, x, _| Ok(g.l1_norm(x))),
        ("l2_norm_sq", pair, |g, x, _| Ok(g.l2_norm_sq(x))),
        ("l2_norm", pair, |g, x, _| Ok(g.l2_norm(x))),
        ("softmax", pair, |g, x, _| g.softmax(x)),
        ("layer_norm", pair, |g, x, _| g.layer_norm(x, 1e-5)),
        ("cosine", pair, |g, x, o| {
            let c = g.constant(o.clone());
            g.cosine(x, c)
        }),
        ("conv2d (input, pad 1)", image, |g, x, o| {
            let w = g.constant(o.clone());
            g.conv2d(x, w, None, 1, 1)
        }),
        ("conv2d (kernel, stride 2)", kernel, |g, x, o| {
            let inp = g.constant(o.clone());
            g.conv2d(inp, x, None, 2, 1)
        }),
        ("conv2d (bias)", bias_and_image, |g, x, o| {
            let inp = g.constant(o.clone());
            let w = g.constant(DenseArray::from_fn(&[4, 3, 3, 3], |i| ((i * 7) % 11) as f64 / 11.0 - 0.5));
            g.conv2d(inp, w, Some(x), 1, 0)
        }),
        ("max_pool2d", distinct, |g, x, _| g.max_pool2d(x, 2)),
        ("upsample_bilinear", small_image, |g, x, _| g.upsample_bilinear(x, 4)),
    ]
}

fn worst_over_seeds(seeds: u64, mut one: impl FnMut(u64) -> Result<f64>) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in 0..seeds {
        worst = worst.max(one(s)?);
    }
    Ok(worst)
}

/// Every differentiable primitive against central differences.
pub fn primitive_grad_checks(seeds: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (i, (name, sample, f)) in primitive_cases().into_iter().enumerate() {
        let worst = worst_over_seeds(seeds, |s| {
            let (x, side) = sample(&mut rng(s, i as u64));
            grad_check(
                |g, xv| {
                    let y = f(g, xv, &side)?;
                    probe(g, y, s)
                },
                &x,
                FD_STEP,
            )
        })?;
        out.push(Check::new(format!("grad {name}"), worst, GRAD_TOL));
    }
    Ok(out)
}

fn random_grid(r: &mut ChaCha8Rng, h: usize, w: usize, max_points: usize) -> GroundTruth {
    let mut grid = DenseArray::zeros(&[h, w]);
    let k = r.random_range(1..=max_points);
    for _ in 0..k {
        let c = r.random_range(0..h * w);
        grid.data_mut()[c] += 1.0;
    }
    GroundTruth::from_grid(grid)
}

fn labels_with_both(r: &mut ChaCha8Rng, h: usize, w: usize) -> LabelGrid {
    loop {
        let labels: Vec<u8> = (0..h * w).map(|_| r.random_bool(0.4) as u8).collect();
        let t = labels.iter().filter(|&&l| l == 1).count();
        if t > 0 && t < h * w {
            return LabelGrid { h, w, labels, target_count: t, background_count: h * w - t };
        }
    }
}

fn precise_sinkhorn() -> SinkhornConfig {
    SinkhornConfig { epsilon: None, epsilon_rel: 0.01, max_iters: 100_000, tol: 1e-13 }
}

/// Gradient checks of every loss term and the weighted objective.
pub fn loss_grad_checks(seeds: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut push = |name: &str, worst: f64| out.push(Check::new(format!("grad {name}"), worst, GRAD_TOL));

    for variant in [ConsistentVariant::MaskedVectors, ConsistentVariant::AllVectors] {
        let worst = worst_over_seeds(seeds, |s| {
            let mut r = rng(s, 200);
            let x = uniform(&mut r, &[8, 5], -1.0, 1.0);
            let target = uniform(&mut r, &[8, 5], -1.0, 1.0);
            let masks = vec![
                MaskSpec { n: 4, grid: (2, 2), masked: vec![1, 2], ratio: 0.5, strategy: MaskStrategy::Random, seed: 0 },
                MaskSpec { n: 4, grid: (2, 2), masked: vec![0], ratio: 0.25, strategy: MaskStrategy::Random, seed: 0 },
            ];
            grad_check(
                |g, xv| {
                    let t = g.constant(target.clone());
                    consistent_loss(g, xv, t, &masks, variant, None, None, false)
                },
                &x,
                FD_STEP,
            )
        })?;
        push(&format!("consistent loss {variant:?} (masked branch)"), worst);
    }
    let worst = worst_over_seeds(seeds, |s| {
        let mut r = rng(s, 201);
        let x = uniform(&mut r, &[4, 5], -1.0, 1.0);
        let other = uniform(&mut r, &[4, 5], -1.0, 1.0);
        let masks = vec![MaskSpec { n: 4, grid: (2, 2), masked: vec![0, 3], ratio: 0.5, strategy: MaskStrategy::Random, seed: 0 }];
        grad_check(
            |g, xv| {
                let m = g.constant(other.clone());
                consistent_loss(g, m, xv, &masks, ConsistentVariant::MaskedVectors, None, None, false)
            },
            &x,
            FD_STEP,
        )
    })?;
    push("consistent loss (intact branch, not detached)", worst);

    let worst = worst_over_seeds(seeds, |s| {
        let mut r = rng(s, 202);
        let cfg = EncoderConfig { layers: 1, hidden: 8, heads: 2, ffn: 12, positional: true };
        let mut store = ParamStore::new();
        let mpm = MaskedPredictor::new(&mut store, &mut Initializer::new(s), &cfg, 3)?;
        let x = uniform(&mut r, &[8, 3], -1.0, 1.0);
        grad_check(
            |g, xv| {
                let p = store.bind(g, false);
                let y = mpm.encode_sequence(g, &p, xv, (2, 2))?;
                probe(g, y, s)
            },
            &x,
            FD_STEP,
        )
    })?;
    push("transformer encoder", worst);

    for variant in ClmVariant::ALL {
        let worst = worst_over_seeds(seeds, |s| {
            let mut r = rng(s, 210);
            let x = uniform(&mut r, &[2, 3, 3, 3], -1.0, 1.0);
            let labels = vec![labels_with_both(&mut r, 3, 3), labels_with_both(&mut r, 3, 3)];
            grad_check(|g, xv| Ok(contrastive_loss(g, xv, &labels, variant)?.loss), &x, FD_STEP)
        })?;
        push(&format!("contrastive loss {variant}"), worst);
    }

    let worst = worst_over_seeds(seeds, |s| {
        let mut r = rng(s, 220);
        let gt = random_grid(&mut r, 3, 4, 30);
        let x = uniform(&mut r, &[1, 1, 3, 4], 0.1, 1.0);
        grad_check(|g, xv| count_loss(g, xv, &gt), &x, FD_STEP)
    })?;
    push("count loss", worst);

    let worst = worst_over_seeds(seeds, |s| {
        let mut r = rng(s, 221);
        let gt = random_grid(&mut r, 3, 3, 5);
        let x = uniform(&mut r, &[1, 1, 3, 3], 0.2, 1.0);
        let cfg = precise_sinkhorn();
        grad_check(|g, xv| Ok(ot_loss(g, xv, &gt, &cfg)?.0), &x, FD_STEP)
    })?;
    push("ot loss", worst);

    let worst = worst_over_seeds(seeds, |s| {
        let mut r = rng(s, 222);
        let gt = random_grid(&mut r, 4, 4, 6);
        let x = uniform(&mut r, &[1, 1, 4, 4], 0.2, 1.0);
        grad_check(|g, xv| Ok(tv_loss(g, xv, &gt, 1.0)?.expect("mass on both sides")), &x, FD_STEP)
    })?;
    push("tv loss", worst);

    let worst = worst_over_seeds(seeds, |s| {
        let mut r = rng(s, 223);
        let gts = vec![random_grid(&mut r, 3, 3, 6), random_grid(&mut r, 3, 3, 6)];
        let x = uniform(&mut r, &[2, 1, 3, 3], 0.2, 1.0);
        let cl_in = uniform(&mut r, &[4, 3], -1.0, 1.0);
        let labels = labels_with_both(&mut r, 2, 2);
        let masks = vec![MaskSpec { n: 4, grid: (2, 2), masked: vec![1, 3], ratio: 0.5, strategy: MaskStrategy::Random, seed: 0 }];
        let w = LossWeights::default();
        let cfg = precise_sinkhorn();
        // the density map drives all three terms so the objective couples them
        grad_check(
            |g, xv| {
                let (l_d, _) = density_loss(g, xv, &gts, &w, &cfg, 1.0)?;
                let flat = g.reshape(xv, &[18])?;
                let first = g.narrow(flat, 0, 12)?;
                let rows = g.reshape(first, &[4, 3])?;
                let enc = g.constant(cl_in.clone());
                let l_mp = consistent_loss(g, rows, enc, &masks, ConsistentVariant::MaskedVectors, None, None, true)?;
                let l_cl = contrastive_loss_single(g, rows, &labels)?.expect("both sides labelled");
                combined_loss(g, l_d, Some(l_mp), Some(l_cl), &w)
            },
            &x,
            FD_STEP,
        )
    })?;
    push("total objective", worst);
    Ok(out)
}

/// Full gradient suite with its wall time in seconds.
pub fn gradient_suite(seeds: u64) -> Result<(Vec<Check>, f64)> {
    let t = Instant::now();
    let mut checks = primitive_grad_checks(seeds)?;
    checks.extend(loss_grad_checks(seeds)?);
    Ok((checks, t.elapsed().as_secs_f64()))
}

/// Worst relative gap between the entropic objective / transport cost and the LP optimum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OtOracleReport {
    pub worst_value_rel: f64,
    pub worst_transport_rel: f64,
    pub max_iterations: usize,
    pub unconverged: usize,
    /// Instances whose transport cost misses the LP by more than [`OT_REL_TOL`].
    pub over_tol: usize,
}

pub fn ot_oracle(instances: u64) -> Result<OtOracleReport> {
    let cfg = SinkhornConfig { epsilon: None, epsilon_rel: 0.01, max_iters: 100_000, tol: 1e-10 };
    let mut rep = OtOracleReport::default();
    for s in 0..instances {
        let mut r = rng(s, 300);
        let (h, w) = loop {
            let hw = (r.random_range(1..=6), r.random_range(1..=6));
            if hw.0 * hw.1 >= 2 {
                break hw;
            }
        };
        let gt = random_grid(&mut r, h, w, 8);
        let d = uniform(&mut r, &[h, w], 0.0, 1.0).map(|v| v + 1e-3);
        let a: Vec<f64> = d.data().iter().map(|v| v / d.sum()).collect();
        let targets: Vec<(usize, usize)> =
            (0..h * w).filter(|&k| gt.dot_grid.data()[k] > 0.0).map(|k| (k / w, k % w)).collect();
        let b: Vec<f64> = targets.iter().map(|&(y, x)| gt.dot_grid.data()[y * w + x] / gt.count()).collect();
        let cost = grid_cost(h, w, &targets);
        let lp = exact_ot(&a, &b, &cost)?;
        let max_cost = cost.iter().copied().fold(0.0, f64::max);
        let sol = sinkhorn(&a, &b, &cost, cfg.epsilon_rel * max_cost.max(1.0), cfg.max_iters, cfg.tol)?;
        let rel = |v: f64| (v - lp).abs() / lp.max(1e-12);
        rep.worst_value_rel = rep.worst_value_rel.max(rel(sol.regularized_value));
        rep.worst_transport_rel = rep.worst_transport_rel.max(rel(sol.transport_cost));
        rep.over_tol += (rel(sol.transport_cost) > OT_REL_TOL) as usize;
        rep.max_iterations = rep.max_iterations.max(sol.iterations);
        rep.unconverged += !sol.converged as usize;
    }
    Ok(rep)
}

/// Worst absolute gap between the potential-based OT gradient and central differences on
/// grids of at most 3x3 cells, with Sinkhorn run to full convergence.
pub fn ot_gradient_oracle(instances: u64) -> Result<f64> {
    let cfg = precise_sinkhorn();
    worst_over_seeds(instances, |s| {
        let mut r = rng(s, 301);
        let (h, w) = (r.random_range(1..=3), r.random_range(2..=3));
        let gt = random_grid(&mut r, h, w, 5);
        let x = uniform(&mut r, &[h, w], 0.1, 1.0);
        let mut g = Graph::new();
        let xv = g.param(x.clone());
        let (_, info) = ot_loss(&mut g, xv, &gt, &cfg)?;
        let value = |p: &DenseArray| -> Result<f64> { Ok(crate::losses::ot_loss_value(p, &gt, &cfg)?.value) };
        let step = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += step;
            xm.data_mut()[i] -= step;
            let fd = (value(&xp)? - value(&xm)?) / (2.0 * step);
            worst = worst.max((fd - info.grad.data()[i]).abs());
        }
        Ok(worst)
    })
}

/// Mismatches between Hungarian and exhaustive matching, out of `instances * 3` cases.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MatchingReport {
    pub cases: usize,
    pub count_mismatches: usize,
    pub worst_distance_gap: f64,
}

pub fn matching_oracle(instances: u64) -> MatchingReport {
    let mut rep = MatchingReport::default();
    for &sigma in &MATCH_SIGMAS {
        for s in 0..instances {
            let mut r = rng(s, 400 + sigma as u64);
            let pts = |r: &mut ChaCha8Rng| -> Vec<Point> {
                let k = r.random_range(0..=6);
                (0..k).map(|_| Point::new(r.random_range(0.0..40.0), r.random_range(0.0..40.0))).collect()
            };
            let preds = pts(&mut r);
            let gts = pts(&mut r);
            let m = match_points(&preds, &gts, sigma);
            let (k, d) = brute_force_matching(&preds, &gts, sigma);
            rep.cases += 1;
            if m.tp != k || m.tp + m.fp != preds.len() || m.tp + m.fn_ != gts.len() {
                rep.count_mismatches += 1;
            }
            rep.worst_distance_gap = rep.worst_distance_gap.max((m.total_distance() - d).abs());
        }
    }
    rep
}

/// Closed-form loss values: `(name, |observed - expected|)`.
pub fn loss_identities() -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    let mut r = rng(0, 500);

    let mut g = Graph::new();
    let enc = g.param(uniform(&mut r, &[6, 4], -1.0, 1.0));
    let same = g.param(g.value(enc).clone());
    let masks = vec![MaskSpec { n: 6, grid: (2, 3), masked: vec![0, 2, 5], ratio: 0.5, strategy: MaskStrategy::Random, seed: 0 }];
    for v in [ConsistentVariant::MaskedVectors, ConsistentVariant::AllVectors] {
        let l = consistent_loss(&mut g, same, enc, &masks, v, None, None, true)?;
        out.push((format!("consistent loss {v:?} on identical encodings"), g.value(l).item().abs()));
    }

    let ln2 = std::f64::consts::LN_2;
    let worst = [-1.0, -0.3, 0.0, 0.5, 1.0].iter().map(|&c| (per_sample_loss(c, c) - ln2).abs()).fold(0.0, f64::max);
    out.push(("contrastive per-sample loss on symmetric logits".into(), worst));
    let row = uniform(&mut r, &[1, 5], -1.0, 1.0);
    let rows = DenseArray::from_fn(&[6, 5], |i| row.data()[i % 5]);
    let mut g = Graph::new();
    let rv = g.param(rows);
    let labels = LabelGrid { h: 2, w: 3, labels: vec![1, 0, 0, 1, 0, 1], target_count: 3, background_count: 3 };
    let l = contrastive_loss_single(&mut g, rv, &labels)?.expect("both sides labelled");
    out.push(("contrastive loss with equal pools".into(), (g.value(l).item() - ln2).abs()));

    let gt = GroundTruth::from_grid(DenseArray::new(vec![2, 3], vec![0.0, 2.0, 1.0, 0.0, 0.0, 3.0])?);
    let mut g = Graph::new();
    let prop = g.param(gt.dot_grid.map(|v| 0.37 * v));
    let tv = tv_loss(&mut g, prop, &gt, 0.0)?.expect("mass on both sides");
    out.push(("tv loss on proportional maps".into(), g.value(tv).item().abs()));
    let single = GroundTruth::from_grid(DenseArray::new(vec![2, 3], vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0])?);
    let other = g.param(DenseArray::new(vec![2, 3], vec![2.5, 0.0, 0.0, 0.0, 0.0, 0.0])?);
    let tv = tv_loss(&mut g, other, &single, 0.0)?.expect("mass on both sides");
    out.push(("tv loss on disjoint single-cell supports".into(), (g.value(tv).item() - 1.0).abs()));

    let mut worst = 0.0f64;
    for s in 0..20 {
        let mut r = rng(s, 501);
        let gt = random_grid(&mut r, 4, 4, 40);
        let d = DenseArray::from_fn(&[4, 4], |_| r.random_range(0..64) as f64 / 8.0);
        let expected = (d.data().iter().sum::<f64>() - gt.count()).abs();
        let mut g = Graph::new();
        let dv = g.param(d);
        let l = count_loss(&mut g, dv, &gt)?;
        worst = worst.max((g.value(l).item() - expected).abs());
    }
    out.push(("count loss on dyadic values".into(), worst));
    Ok(out)
}

/// Everything above as table rows.
pub fn run_all() -> Result<Vec<Check>> {
    let (mut checks, secs) = gradient_suite(GRAD_SEEDS)?;
    checks.push(Check::new("gradient suite wall time (s)", secs, 120.0));
    let ot = ot_oracle(OT_INSTANCES)?;
    checks.push(Check::new("ot transport cost vs LP (relative)", ot.worst_transport_rel, OT_REL_TOL));
    checks.push(Check::new("ot gradient vs central differences", ot_gradient_oracle(GRAD_SEEDS)?, OT_GRAD_TOL));
    let m = matching_oracle(MATCH_INSTANCES);
    checks.push(Check::new("matching cardinality mismatches", m.count_mismatches as f64, 0.0));
    checks.push(Check::new("matching distance gap", m.worst_distance_gap, 1e-9));
    for (name, err) in loss_identities()? {
        checks.push(Check::new(name, err, IDENTITY_TOL));
    }
    Ok(checks)
}

/// Plain-text table, one row per check.
pub fn format_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = format!("{:<width$}  {:>12}  {:>10}  result\n", "check", "worst", "tol");
    for c in checks {
        s.push_str(&format!(
            "{:<width$}  {:>12.3e}  {:>10.1e}  {}\n",
            c.name,
            c.worst,
            c.tol,
            if c.passed() { "PASS" } else { "FAIL" }
        ));
    }
    s
}
