//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use scanbench_core::bench::{self, EvaluateOptions, Generator, SynthConfig};
use scanbench_core::best_of_k::{best_of_k_density, best_of_k_with_rejection, DiscreteDistribution};
use scanbench_core::data::{self, Dataset, Fixation, OutOfBoundsPolicy, Scanpath, StimulusMeta};
use scanbench_core::density::{self, FittedBaseline};
use scanbench_core::fitting::FitSplit;
use scanbench_core::grid::{Geometry, PriorityMap};
use scanbench_core::metrics::{self, Metric};
use scanbench_core::models::{
    self, replay, ConditionalModel, JumpKernel, JumpModel, JumpModelParams, ModelContext, SaccadicFlowModel,
    SaccadicFlowParams, SceneWalkModel, SceneWalkParams, UniformModel,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("{what} took {t:.1?}, limit {limit:?}"))
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool")
        .install(f)
}

// ---------------------------------------------------------------------------
// 1. Best-of-k closed form against enumeration.

/// Distribution of the first maximum-gain draw among `n` draws, by
/// enumerating all `len^n` outcomes. All-rejected outcomes go to `fallback`.
fn enumerate_best(p: &[f64], gains: &[f64], n: u32, fallback: &[(usize, f64)]) -> Vec<f64> {
    let k = p.len();
    let mut out = vec![0.0; k];
    let total = k.pow(n);
    for code in 0..total {
        let mut c = code;
        let mut prob = 1.0;
        let mut best: Option<usize> = None;
        for _ in 0..n {
            let i = c % k;
            c /= k;
            prob *= p[i];
            if gains[i] == f64::NEG_INFINITY {
                continue;
            }
            if best.map_or(true, |b| gains[i] > gains[b]) {
                best = Some(i);
            }
        }
        match best {
            Some(b) => out[b] += prob,
            None => {
                for &(cell, q) in fallback {
                    out[cell] += prob * q;
                }
            }
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.gen_range(1..=6);
        let n = rng.gen_range(1..=4);
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        let gains: Vec<f64> = (0..k).map(|_| rng.gen_range(0..4) as f64).collect();
        let d = DiscreteDistribution::from_weights(&weights, gains.clone()).map_err(|e| e.to_string())?;
        let closed = best_of_k_density(&d, n).map_err(|e| e.to_string())?;
        let oracle = enumerate_best(d.probabilities(), &gains, n, &[]);
        for (a, b) in closed.probabilities().iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    let mut worst_rej: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.gen_range(2..=6);
        let n = rng.gen_range(1..=4);
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        let mut gains: Vec<f64> = (0..k)
            .map(|_| {
                if rng.gen_bool(0.35) {
                    f64::NEG_INFINITY
                } else {
                    rng.gen_range(0..3) as f64
                }
            })
            .collect();
        let keep = rng.gen_range(0..k);
        gains[keep] = 1.0;
        let d = DiscreteDistribution::from_weights(&weights, gains.clone()).map_err(|e| e.to_string())?;
        let valid: Vec<usize> = (0..k).filter(|&i| gains[i].is_finite()).collect();
        let mut fb_cells: Vec<usize> = valid.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
        if fb_cells.is_empty() {
            fb_cells.push(valid[0]);
        }
        let fb_w: Vec<f64> = fb_cells.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
        let fb_total: f64 = fb_w.iter().sum();
        let fb_p: Vec<f64> = fb_w.iter().map(|w| w / fb_total).collect();
        let fallback = DiscreteDistribution::new(fb_cells.clone(), fb_p.clone(), vec![0.0; fb_cells.len()])
            .map_err(|e| e.to_string())?;
        let closed = best_of_k_with_rejection(&d, n, &fallback).map_err(|e| e.to_string())?;
        let pairs: Vec<(usize, f64)> = fb_cells.into_iter().zip(fb_p).collect();
        let oracle = enumerate_best(d.probabilities(), &gains, n, &pairs);
        for (a, b) in closed.probabilities().iter().zip(&oracle) {
            worst_rej = worst_rej.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max error {worst:e} over 100 instances"))?;
    ensure(worst_rej <= 1e-12, || format!("rejection max error {worst_rej:e} over 50 instances"))?;
    within_time(start, Duration::from_secs(5), "best-of-k check")?;
    Ok(format!(
        "max error {worst:.1e} (100 instances), {worst_rej:.1e} with rejection (50), {:.2?}",
        start.elapsed()
    ))
}

// ---------------------------------------------------------------------------
// 2. Metric oracles.

fn criterion_2() -> Outcome {
    let g = Geometry::new(2, 2, 1).map_err(|e| e.to_string())?;
    let map = PriorityMap::priority(g, vec![0.1, 0.2, 0.3, 0.4]).map_err(|e| e.to_string())?;
    let top = metrics::auc_uniform(&map, &Fixation::new(1.5, 1.5)).map_err(|e| e.to_string())?;
    let bottom = metrics::auc_uniform(&map, &Fixation::new(0.5, 0.5)).map_err(|e| e.to_string())?;
    ensure(top == 0.875 && bottom == 0.125, || format!("AUC top {top}, bottom {bottom}"))?;

    let map = PriorityMap::priority(g, vec![1.0, 1.0, 1.0, 5.0]).map_err(|e| e.to_string())?;
    let nss = metrics::nss(&map, &Fixation::new(1.5, 1.5)).map_err(|e| e.to_string())?;
    ensure((nss - 3f64.sqrt()).abs() <= 1e-9, || format!("NSS {nss}"))?;

    for (w, h) in [(1, 1), (2, 2), (32, 24), (17, 5)] {
        let g = Geometry::new(w, h, 1).map_err(|e| e.to_string())?;
        let u = PriorityMap::uniform(g);
        let f = Fixation::new(w as f64 - 0.5, 0.5);
        let ll = metrics::log_likelihood(&u, &f).map_err(|e| e.to_string())?;
        ensure(ll == 0.0, || format!("LL of uniform on {w}x{h} is {ll}"))?;
        let c = PriorityMap::priority(g, vec![7.0; w * h]).map_err(|e| e.to_string())?;
        let auc = metrics::auc_uniform(&c, &f).map_err(|e| e.to_string())?;
        ensure(auc == 0.5, || format!("constant-map AUC on {w}x{h} is {auc}"))?;
    }
    Ok(format!("AUC {top}/{bottom}, NSS {nss:.12}, LL(uniform) 0, constant AUC 0.5"))
}

// ---------------------------------------------------------------------------
// 3. Invariances.

fn monotone(kind: usize, a: f64, b: f64) -> impl Fn(f64) -> f64 {
    move |v: f64| match kind {
        0 => a * v + b,
        1 => (a * v).exp(),
        2 => v * v * v + a * v,
        3 => (v + a).ln(),
        4 => (a * v - 0.5).atan(),
        _ => (v + a).sqrt() - b,
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Geometry::new(32, 24, 1).map_err(|e| e.to_string())?;
    let cells: Vec<Fixation> = (0..g.cells())
        .map(|c| {
            let (x, y) = g.cell_center(c);
            Fixation::new(x, y)
        })
        .collect();
    let auc_all = |m: &PriorityMap| -> Result<Vec<f64>, String> {
        cells.iter().map(|f| metrics::auc_uniform(m, f).map_err(|e| e.to_string())).collect()
    };
    let mut checked = 0usize;
    let mut worst_nss: f64 = 0.0;
    for t in 0..50 {
        // Values on a coarse lattice so ties occur.
        let values: Vec<f64> = (0..g.cells()).map(|_| rng.gen_range(0..200) as f64 / 200.0).collect();
        let map = PriorityMap::priority(g, values.clone()).map_err(|e| e.to_string())?;
        let base = auc_all(&map)?;

        let f = monotone(t % 6, rng.gen_range(0.1..5.0), rng.gen_range(-3.0..3.0));
        let mapped = PriorityMap::priority(g, values.iter().map(|&v| f(v)).collect()).map_err(|e| e.to_string())?;
        let after = auc_all(&mapped)?;
        ensure(base == after, || format!("transform {t} (family {}) changed an AUC", t % 6))?;

        let eq = metrics::histogram_equalize(&map);
        ensure(base == auc_all(&eq)?, || format!("histogram equalization changed an AUC on map {t}"))?;

        let (a, b) = (rng.gen_range(0.01..100.0), rng.gen_range(-100.0..100.0));
        let affine = PriorityMap::priority(g, values.iter().map(|&v| a * v + b).collect()).map_err(|e| e.to_string())?;
        for f in cells.iter().step_by(7) {
            let n0 = metrics::nss(&map, f).map_err(|e| e.to_string())?;
            let n1 = metrics::nss(&affine, f).map_err(|e| e.to_string())?;
            worst_nss = worst_nss.max((n0 - n1).abs());
        }
        checked += base.len();
    }
    ensure(worst_nss <= 1e-9, || format!("NSS changed by {worst_nss:e} under a positive affine map"))?;
    Ok(format!(
        "{checked} AUCs exact under 50 monotone maps and equalization, NSS max diff {worst_nss:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 4. Chain rule.

fn criterion_4() -> Outcome {
    let meta = StimulusMeta::new("img", 64, 64, 4.0).map_err(|e| e.to_string())?;
    let scale = 6.0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut scanpaths = Vec::new();
    for s in 0..20 {
        let len = rng.gen_range(2..=12);
        let fixations = (0..len)
            .map(|_| Fixation::new(rng.gen_range(0.0..64.0), rng.gen_range(0.0..64.0)))
            .collect();
        scanpaths.push(Scanpath {
            image_id: "img".into(),
            subject_id: format!("s{s}"),
            fixations,
            forced_initial: true,
        });
    }
    let ds = Dataset::new("chain", vec![meta], scanpaths).map_err(|e| e.to_string())?;
    let model = JumpModel::new(JumpModelParams::cauchy(scale)).map_err(|e| e.to_string())?;
    let opts = EvaluateOptions {
        metrics: vec![Metric::LogLikelihood],
        downsample: 1,
        jobs: 1,
    };
    let table = bench::evaluate(&model, &ds, None, None, &opts).map_err(|e| e.to_string())?;
    let mut summed: BTreeMap<usize, f64> = BTreeMap::new();
    for s in &table.scores {
        *summed.entry(s.scanpath_index).or_default() += s.value;
    }

    // Independent joint probability: product of normalized Cauchy kernels.
    let cells = 64 * 64;
    let kernel = |from: &Fixation, cx: f64, cy: f64| {
        let u2 = ((cx - from.x).powi(2) + (cy - from.y).powi(2)) / (scale * scale);
        (1.0 + u2).powf(-1.5)
    };
    let mut worst: f64 = 0.0;
    for (k, sp) in ds.scanpaths.iter().enumerate() {
        let mut joint_log2 = 0.0;
        for pair in sp.fixations.windows(2) {
            let (from, to) = (&pair[0], &pair[1]);
            let mut z = 0.0;
            for j in 0..64 {
                for i in 0..64 {
                    z += kernel(from, i as f64 + 0.5, j as f64 + 0.5);
                }
            }
            let (ti, tj) = (to.x.floor(), to.y.floor());
            joint_log2 += (kernel(from, ti + 0.5, tj + 0.5) / z).log2();
        }
        let n = (sp.len() - 1) as f64;
        let relative = joint_log2 + n * (cells as f64).log2();
        worst = worst.max((summed[&k] - relative).abs());
    }
    ensure(worst <= 1e-9, || format!("chain rule off by {worst:e}"))?;
    Ok(format!("20 scanpaths, max |sum LL - joint| = {worst:.1e} bits"))
}

// ---------------------------------------------------------------------------
// 5. Monte-Carlo consistency of sampling with the conditional maps.

/// Per-cell 4 sigma binomial bounds, plus a chi-square goodness-of-fit test
/// over cells pooled to an expected count of at least 5. Returns the largest
/// per-cell z and the chi-square p-value.
fn mc_check<M: ConditionalModel>(
    model: &M,
    ctx: &ModelContext<'_>,
    history: &[Fixation],
    seed: u64,
) -> Result<(f64, f64), String> {
    let state = replay(model, ctx, history).map_err(|e| e.to_string())?;
    let map = model.compute_priority_map(ctx, &state).map_err(|e| e.to_string())?;
    let n = 100_000usize;
    let mut counts = vec![0usize; map.geometry().cells()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let f = model.sample_fixation(ctx, &map, &mut rng).map_err(|e| e.to_string())?;
        counts[map.geometry().cell_of(&f).map_err(|e| e.to_string())?] += 1;
    }
    let mut worst_z: f64 = 0.0;
    for (c, (&k, &p)) in counts.iter().zip(map.values()).enumerate() {
        let expected = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        let dev = (k as f64 - expected).abs();
        if dev > 4.0 * sd {
            return Err(format!(
                "{}: cell {c} drawn {k} times, expected {expected:.2} +- {:.2}",
                model.name(),
                4.0 * sd
            ));
        }
        if sd > 0.0 {
            worst_z = worst_z.max(dev / sd);
        }
    }
    let (mut chi2, mut bins) = (0.0, 0usize);
    let (mut pooled_k, mut pooled_e) = (0.0, 0.0);
    for (&k, &p) in counts.iter().zip(map.values()) {
        let e = n as f64 * p;
        if e >= 5.0 {
            chi2 += (k as f64 - e).powi(2) / e;
            bins += 1;
        } else {
            pooled_k += k as f64;
            pooled_e += e;
        }
    }
    if pooled_e > 0.0 {
        chi2 += (pooled_k - pooled_e).powi(2) / pooled_e;
        bins += 1;
    }
    let p_value = if bins > 1 {
        1.0 - ChiSquared::new((bins - 1) as f64).map_err(|e| e.to_string())?.cdf(chi2)
    } else {
        1.0
    };
    if p_value < 1e-4 {
        return Err(format!("{}: chi-square p = {p_value:.2e} over {bins} bins", model.name()));
    }
    Ok((worst_z, p_value))
}

// Fixed seed for the one-step sampling checks. Cells with expected counts
// well under one flag a single draw as a >4 sigma deviation, so the per-cell
// bound has a large false-alarm rate for any given seed.
const MC_SEED: u64 = 5;

fn criterion_5() -> Outcome {
    let start = Instant::now();
    // 64x64 px at downsample 2: a 32x32 grid.
    let meta = StimulusMeta::new("img", 64, 64, 2.0).map_err(|e| e.to_string())?;
    let g = Geometry::for_stimulus(&meta, 2).map_err(|e| e.to_string())?;
    let saliency_values: Vec<f64> = (0..g.cells())
        .map(|c| {
            let (x, y) = g.cell_center(c);
            0.2 + (-((x - 44.0).powi(2) + (y - 20.0).powi(2)) / 200.0).exp()
                + 0.5 * (-((x - 15.0).powi(2) + (y - 50.0).powi(2)) / 300.0).exp()
        })
        .collect();
    let saliency = PriorityMap::priority(g, saliency_values).map_err(|e| e.to_string())?;
    let ctx = ModelContext::new(&meta, 2).map_err(|e| e.to_string())?.with_saliency(Some(&saliency));
    let history = [
        Fixation::with_duration(32.0, 32.0, 200.0),
        Fixation::with_duration(20.3, 41.7, 350.0),
        Fixation::with_duration(45.1, 18.9, 180.0),
    ];

    let mut report = Vec::new();
    let (z, pv) = mc_check(&UniformModel, &ctx, &history, MC_SEED)?;
    report.push(format!("uniform z<={z:.2} p={pv:.2}"));

    let jump = JumpModel::new(JumpModelParams::cauchy(10.0)).map_err(|e| e.to_string())?;
    let (z, pv) = mc_check(&jump, &ctx, &history, MC_SEED)?;
    report.push(format!("jump z<={z:.2} p={pv:.2}"));

    let mut flow_params = SaccadicFlowParams::isotropic((-0.05, 0.08), 0.2);
    flow_params.mean_x[1] = -0.3;
    flow_params.log_var_y[2] = 0.5;
    flow_params.rho = 0.3;
    let flow = SaccadicFlowModel::new(flow_params).map_err(|e| e.to_string())?;
    let (z, pv) = mc_check(&flow, &ctx, &history, MC_SEED)?;
    report.push(format!("saccadic_flow z<={z:.2} p={pv:.2}"));

    let walk = SceneWalkModel::new(SceneWalkParams::default()).map_err(|e| e.to_string())?;
    let (z, pv) = mc_check(&walk, &ctx, &history, MC_SEED)?;
    report.push(format!("scenewalk z<={z:.2} p={pv:.2}"));

    within_time(start, Duration::from_secs(60), "Monte-Carlo checks")?;
    Ok(format!("10^5 draws on 32x32 each: {}, {:.1?}", report.join(", "), start.elapsed()))
}

// ---------------------------------------------------------------------------
// 6. Parameter recovery.

fn criterion_6a() -> Result<String, String> {
    let bandwidth = 8.0;
    let config = SynthConfig {
        name: "mixture".into(),
        n_images: 20,
        n_subjects: 8,
        fixations_per_scanpath: 8,
        width_px: 160,
        height_px: 120,
        px_per_dva: 8.0,
        downsample: 2,
        generator: Generator::SpatialMixture {
            n_components: 4,
            bandwidth_px: bandwidth,
            center_spread_px: 25.0,
            uniform_weight: 0.05,
        },
    };
    let ds = bench::generate_synthetic_dataset(&config, 61).map_err(|e| e.to_string())?.dataset;
    let start = Instant::now();
    let fit = single_threaded(|| -> scanbench_core::Result<_> {
        let (cb_bw, _) = density::fit_center_bias_bandwidth(&ds, 2)?;
        let cb = FittedBaseline::center_bias(&ds, cb_bw, 2)?;
        density::fit_gold_standard(&ds, &cb)
    })
    .map_err(|e| e.to_string())?;
    within_time(start, Duration::from_secs(120), "gold-standard fit")?;
    let h = fit.params.bandwidth_px;
    ensure(h >= bandwidth / 2.0 && h <= bandwidth * 2.0, || {
        format!("fitted bandwidth {h:.2} px, truth {bandwidth} px")
    })?;
    Ok(format!("(a) bandwidth {h:.2} px vs {bandwidth} in {:.1?}", start.elapsed()))
}

fn criterion_6b() -> Result<String, String> {
    // Mean offsets quadratic in the start position, all twelve coefficients
    // nonzero; start positions and means stay far from the border.
    let expand = |a: f64, b: f64, c: f64, d: f64, e: f64, f: f64| {
        [a * 0.25 + b * 0.25 + c * 0.25 - d * 0.5 - e * 0.5 + f, -a - b * 0.5 + d, -b * 0.5 - c + e, a, b, c]
    };
    let sigma = 0.01;
    let mut truth = SaccadicFlowParams::isotropic((0.0, 0.0), sigma);
    truth.mean_x = expand(0.8, -0.6, 0.7, -0.3, 0.2, 0.05);
    truth.mean_y = expand(-0.7, 0.8, 0.9, 0.2, -0.3, -0.04);
    let meta = StimulusMeta::new("img", 200, 200, 10.0).map_err(|e| e.to_string())?;
    let model = SaccadicFlowModel::new(truth).map_err(|e| e.to_string())?;
    let ctx = ModelContext::new(&meta, 1).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let mut scanpaths = Vec::with_capacity(10_000);
    for k in 0..10_000 {
        let start = Fixation::new(rng.gen_range(40.0..160.0), rng.gen_range(40.0..160.0));
        let state = model.initialize(&ctx, &start).map_err(|e| e.to_string())?;
        let map = model.compute_priority_map(&ctx, &state).map_err(|e| e.to_string())?;
        let next = model.sample_fixation(&ctx, &map, &mut rng).map_err(|e| e.to_string())?;
        scanpaths.push(Scanpath {
            image_id: "img".into(),
            subject_id: format!("s{}", k % 10),
            fixations: vec![start, next],
            forced_initial: false,
        });
    }
    let ds = Dataset::new("flow", vec![meta], scanpaths).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let fitted = single_threaded(|| models::fit_saccadic_flow(&models::Transition::from_dataset(&ds)?))
        .map_err(|e| e.to_string())?;
    within_time(start, Duration::from_secs(120), "SaccadicFlow fit")?;
    let mut worst: f64 = 0.0;
    for (est, tru) in fitted.mean_x.iter().zip(&truth.mean_x).chain(fitted.mean_y.iter().zip(&truth.mean_y)) {
        worst = worst.max((est - tru).abs() / tru.abs());
    }
    ensure(worst <= 0.10, || format!("worst relative error {:.1}%", 100.0 * worst))?;
    Ok(format!("(b) 12 mean coefficients, worst error {:.1}%", 100.0 * worst))
}

fn criterion_6c() -> Result<String, String> {
    let scale = 12.0;
    let config = SynthConfig {
        name: "jump".into(),
        n_images: 20,
        n_subjects: 8,
        fixations_per_scanpath: 8,
        width_px: 160,
        height_px: 120,
        px_per_dva: 8.0,
        downsample: 1,
        generator: Generator::Jump(JumpModelParams::cauchy(scale)),
    };
    let ds = bench::generate_synthetic_dataset(&config, 63).map_err(|e| e.to_string())?.dataset;
    let start = Instant::now();
    let (params, _) = single_threaded(|| models::fit_jump_model(&ds, JumpKernel::Cauchy, None, 1, FitSplit::TrainAll))
        .map_err(|e| e.to_string())?;
    within_time(start, Duration::from_secs(120), "jump fit")?;
    let rel = (params.scale_px - scale).abs() / scale;
    ensure(rel <= 0.15, || format!("fitted scale {:.2} px, truth {scale}", params.scale_px))?;
    Ok(format!("(c) scale {:.2} px vs {scale} in {:.1?}", params.scale_px, start.elapsed()))
}

fn criterion_6() -> Outcome {
    let parts = [criterion_6a(), criterion_6b(), criterion_6c()];
    let (ok, bad): (Vec<_>, Vec<_>) = parts.into_iter().partition(Result::is_ok);
    let ok: Vec<String> = ok.into_iter().map(Result::unwrap).collect();
    if bad.is_empty() {
        Ok(ok.join("; "))
    } else {
        let bad: Vec<String> = bad.into_iter().map(Result::unwrap_err).collect();
        Err(bad.join("; "))
    }
}

// ---------------------------------------------------------------------------
// 7-9 go through the command line tool.

fn scanbench(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_scanbench"))
        .args(args)
        .env_remove("SCANBENCH_JOBS")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "scanbench {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

const MIXTURE_CONFIG: &str = r#"{
  "name": "ladder",
  "n_images": 20,
  "n_subjects": 8,
  "fixations_per_scanpath": 8,
  "width_px": 160,
  "height_px": 120,
  "px_per_dva": 8.0,
  "downsample": 2,
  "generator": {"kind": "spatial_mixture", "n_components": 4, "bandwidth_px": 8.0,
                "center_spread_px": 25.0, "uniform_weight": 0.05}
}"#;

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    std::fs::write(d.join("config.json"), MIXTURE_CONFIG).map_err(|e| e.to_string())?;
    let data = d.join("data.jsonl");
    scanbench(&["synth", "--config", p(&d.join("config.json")), "--seed", "7", "--out", p(&data)])?;
    let cb = d.join("cb.json");
    let gs = d.join("gs.json");
    scanbench(&["fit-centerbias", "--dataset", p(&data), "--params", p(&cb), "--downsample", "2"])?;
    scanbench(&["fit-goldstandard", "--dataset", p(&data), "--params", p(&gs), "--downsample", "2"])?;
    let mut ll = BTreeMap::new();
    for (model, params) in [
        ("uniform", None),
        ("centerbias", Some(&cb)),
        ("goldstandard_loso", Some(&gs)),
        ("goldstandard_joint", Some(&gs)),
    ] {
        let csv = d.join(format!("{model}.csv"));
        let mut args = vec!["evaluate", "--dataset", p(&data), "--model", model, "--metrics", "ll,auc"];
        args.extend(["--downsample", "2", "--out", p(&csv), "--jobs", "4"]);
        if let Some(params) = params {
            args.extend(["--params", p(params)]);
        }
        scanbench(&args)?;
        let run = bench::EvaluationRun::load(csv.with_extension("json")).map_err(|e| e.to_string())?;
        ll.insert(model, run.aggregate[&Metric::LogLikelihood]);
    }
    let report = scanbench(&[
        "report",
        p(&d.join("uniform.json")),
        p(&d.join("centerbias.json")),
        p(&d.join("goldstandard_loso.json")),
        p(&d.join("goldstandard_joint.json")),
        "--format",
        "markdown",
    ])?;
    let (j, l, c, u) = (
        ll["goldstandard_joint"],
        ll["goldstandard_loso"],
        ll["centerbias"],
        ll["uniform"],
    );
    ensure(j >= l && l > c && c > u && u == 0.0, || {
        format!("LL joint {j:.4}, loso {l:.4}, centerbias {c:.4}, uniform {u:.4}")
    })?;
    ensure(report.lines().count() == 6, || format!("unexpected report:\n{report}"))?;
    within_time(start, Duration::from_secs(60), "CLI pipeline")?;
    Ok(format!(
        "LL joint {j:.4} >= loso {l:.4} > centerbias {c:.4} > uniform {u}, {:.1?}",
        start.elapsed()
    ))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let config = d.join("config.json");
    std::fs::write(&config, MIXTURE_CONFIG).map_err(|e| e.to_string())?;
    let (a, b) = (d.join("a.jsonl"), d.join("b.jsonl"));
    scanbench(&["synth", "--config", p(&config), "--seed", "11", "--out", p(&a)])?;
    scanbench(&["synth", "--config", p(&config), "--seed", "11", "--out", p(&b)])?;
    let read = |f: &Path| std::fs::read(f).map_err(|e| e.to_string());
    ensure(read(&a)? == read(&b)?, || "same seed gave different datasets".into())?;

    let params = d.join("jump.json");
    std::fs::write(&params, serde_json::to_string(&JumpModelParams::cauchy(15.0)).unwrap()).map_err(|e| e.to_string())?;
    let (one, eight) = (d.join("one.csv"), d.join("eight.csv"));
    for (jobs, out) in [("1", &one), ("8", &eight)] {
        scanbench(&[
            "evaluate", "--dataset", p(&a), "--model", "jump", "--params", p(&params), "--metrics", "ll,ig,auc,nss",
            "--downsample", "2", "--out", p(out), "--jobs", jobs,
        ])?;
    }
    let (x, y) = (read(&one)?, read(&eight)?);
    ensure(x == y, || "--jobs 1 and --jobs 8 score tables differ".into())?;
    let rows = x.iter().filter(|&&c| c == b'\n').count() - 1;
    Ok(format!("synthetic datasets identical; {rows}-row score tables identical for 1 and 8 jobs"))
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    // 10 px per dva: 49, 50 and 51 px saccades are 4.9, 5.0 and 5.1 dva.
    let meta = StimulusMeta::new("img", 400, 300, 10.0).map_err(|e| e.to_string())?;
    let fixations = vec![
        Fixation::new(100.0, 150.0),
        Fixation::new(149.0, 150.0),
        Fixation::new(199.0, 150.0),
        Fixation::new(250.0, 150.0),
    ];
    let ds = Dataset::new(
        "fixture",
        vec![meta],
        vec![Scanpath {
            image_id: "img".into(),
            subject_id: "s".into(),
            fixations,
            forced_initial: true,
        }],
    )
    .map_err(|e| e.to_string())?;
    let data = d.join("fixture.jsonl");
    data::save_dataset(&ds, &data).map_err(|e| e.to_string())?;
    let params = d.join("jump.json");
    std::fs::write(&params, serde_json::to_string(&JumpModelParams::gaussian(30.0)).unwrap()).map_err(|e| e.to_string())?;
    let runs = [d.join("uniform.csv"), d.join("jump.csv")];
    scanbench(&["evaluate", "--dataset", p(&data), "--model", "uniform", "--metrics", "auc", "--out", p(&runs[0])])?;
    scanbench(&[
        "evaluate", "--dataset", p(&data), "--model", "jump", "--params", p(&params), "--metrics", "auc", "--out",
        p(&runs[1]),
    ])?;
    let out = d.join("cases");
    let stdout = scanbench(&[
        "case-studies",
        "--runs",
        p(&runs[0].with_extension("json")),
        p(&runs[1].with_extension("json")),
        "--min-amplitude-dva",
        "5",
        "--top",
        "10",
        "--out",
        p(&out),
    ])?;
    let kept: Vec<String> = stdout
        .lines()
        .filter_map(|l| l.split('\t').find_map(|c| c.strip_prefix("fixation ").map(String::from)))
        .collect();
    ensure(kept == ["3"], || format!("kept fixations {kept:?}, expected only the 5.1 dva saccade"))?;
    let loaded = data::load_dataset(&data, OutOfBoundsPolicy::Reject).map_err(|e| e.to_string())?;
    let sp = &loaded.scanpaths[0];
    let amp = data::saccade_amplitude_dva(&sp.fixations[2], &sp.fixations[3], loaded.stimulus("img").unwrap());
    ensure(out.join("index.json").is_file(), || "no index.json written".into())?;
    Ok(format!("4.9/5.0/5.1 dva saccades, only the {amp:.1} dva one kept; maps exported"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 best-of-k closed form vs enumeration", criterion_1),
        ("2 metric oracles", criterion_2),
        ("3 invariance suite", criterion_3),
        ("4 chain-rule consistency", criterion_4),
        ("5 Monte-Carlo sampling consistency", criterion_5),
        ("6 parameter recovery", criterion_6),
        ("7 baseline ordering via CLI", criterion_7),
        ("8 determinism and parallel equivalence", criterion_8),
        ("9 case-study amplitude filter", criterion_9),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 9 acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
