//! Forward-pass timing of the windowed sub-graph network against a variant
//! whose adjacency couples every candidate of the document.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::candidates::{Candidate, CandidateSet};
use crate::error::{Error, Result};
use crate::features::{CandidateFrame, DocumentFrames, FrameConfig};
use crate::model::{forward_on_tape, ModelParams, ModelShape, ParamVars};
use crate::numerics::{masked_softmax, row_normalize, Matrix, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub ks: Vec<usize>,
    pub n: usize,
    pub q: usize,
    pub layers: usize,
    /// Embedding dimension behind the feature width.
    pub dim: usize,
    pub hidden: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            ks: vec![8, 16, 32, 64, 128],
            n: 10,
            q: 3,
            layers: 3,
            dim: 8,
            hidden: 16,
            trials: 5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub subgcn_ms: f64,
    pub fullgraph_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub subgcn_slope: f64,
    pub fullgraph_slope: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

struct Workload {
    frames: DocumentFrames,
    /// Candidate features of the whole document, `kn x d0`.
    all_features: Matrix,
    /// Row-normalized `kn x kn` relatedness with self-loops.
    full_adjacency: Matrix,
}

fn workload(k: usize, cfg: &BenchConfig, rng: &mut ChaCha8Rng) -> Result<Workload> {
    let (n, q) = (cfg.n, cfg.q);
    let fc = FrameConfig {
        n,
        q,
        ..FrameConfig::default()
    };
    let d0 = fc.feature_width(cfg.dim);
    let mut frames = Vec::with_capacity(k);
    let mut candidates = Vec::with_capacity(k);
    let mut all = Matrix::zeros(k * n, d0);
    for i in 0..k {
        let mut f = Matrix::zeros(n, d0);
        f.data_mut().iter_mut().for_each(|v| *v = rng.gen::<f64>());
        for r in 0..n {
            all.row_mut(i * n + r).copy_from_slice(f.row(r));
        }
        let mut raw = Matrix::zeros(n, 2 * q * n + 1);
        let slots = crate::corpus::window_slots(k, i, q);
        for r in 0..n {
            for (p, s) in slots.iter().enumerate() {
                if s.is_some() {
                    for c in 0..n {
                        raw.set(r, p * n + c, rng.gen_range(0.01..1.0));
                    }
                }
            }
            raw.set(r, 2 * q * n, 1.0);
        }
        let neighbor_mask = slots.iter().flat_map(|s| std::iter::repeat_n(s.is_some(), n)).collect();
        frames.push(CandidateFrame {
            features: f,
            adjacency: row_normalize(&raw)?,
            candidate_mask: vec![true; n],
            neighbor_mask,
            context_words: Vec::new(),
            attention: vec![Vec::new(); n],
        });
        let c = (0..n)
            .map(|j| Candidate {
                entity: format!("B{i}_{j}"),
                prior: 1.0 / n as f64,
            })
            .collect();
        candidates.push(CandidateSet::from_candidates(i, n, c)?);
    }
    let kn = k * n;
    let mut full = Matrix::zeros(kn, kn);
    for a in 0..kn {
        for b in 0..kn {
            let v = if a == b {
                1.0
            } else if a / n == b / n {
                0.0
            } else {
                rng.gen_range(0.01..1.0)
            };
            full.set(a, b, v);
        }
    }
    Ok(Workload {
        frames: DocumentFrames {
            doc_id: format!("bench{k}"),
            candidates,
            frames,
            gold_slots: vec![None; k],
            q,
        },
        all_features: all,
        full_adjacency: row_normalize(&full)?,
    })
}

fn subgcn_forward(w: &Workload, params: &ModelParams) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);
    let out = forward_on_tape(&mut tape, &vars, params, &w.frames, None, false)?;
    Ok(out.probabilities.iter().flatten().map(|p| p[0]).sum())
}

/// Same weights, but every layer mixes all `kn` candidate rows at once.
fn fullgraph_forward(w: &Workload, params: &ModelParams, n: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);
    let f = tape.constant(w.all_features.clone());
    let a = tape.constant(w.full_adjacency.clone());
    let z = tape.matmul(f, vars.all[0])?;
    let z = tape.add_bias(z, vars.all[1])?;
    let mut h = tape.relu(z);
    for t in 0..params.layers.len() {
        let mixed = tape.matmul(a, h)?;
        let z = tape.matmul(mixed, vars.all[2 + t])?;
        h = tape.relu(z);
    }
    let s = tape.matmul(h, *vars.all.last().unwrap())?;
    let scores = tape.value(s).data();
    let mask = vec![true; n];
    let mut acc = 0.0;
    for chunk in scores.chunks(n) {
        acc += masked_softmax(chunk, &mask)?[0];
    }
    Ok(acc)
}

fn median_ms<F: FnMut() -> Result<f64>>(trials: usize, mut f: F) -> Result<f64> {
    std::hint::black_box(f()?);
    let mut times = Vec::with_capacity(trials);
    for _ in 0..trials {
        let start = Instant::now();
        std::hint::black_box(f()?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[trials / 2])
}

/// Times both forward passes for every `k`. Workload shapes and values depend
/// only on the seed; the timings do not.
pub fn bench_complexity(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.trials < 3 {
        return Err(Error::Config(format!("benchmark needs at least 3 trials, got {}", cfg.trials)));
    }
    if cfg.ks.len() < 2 {
        return Err(Error::Config("benchmark needs at least two k values".into()));
    }
    if let Some(k) = cfg.ks.iter().find(|&&k| k < 2 * cfg.q + 1) {
        return Err(Error::Config(format!("k = {k} is below 2q + 1 = {}", 2 * cfg.q + 1)));
    }
    if cfg.n == 0 || cfg.layers == 0 || cfg.hidden == 0 || cfg.dim == 0 {
        return Err(Error::Config("benchmark sizes must be positive".into()));
    }
    let fc = FrameConfig {
        n: cfg.n,
        q: cfg.q,
        ..FrameConfig::default()
    };
    let shape = ModelShape::uniform(fc.feature_width(cfg.dim), cfg.hidden, cfg.layers)?;
    let params = ModelParams::init(&shape, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for &k in &cfg.ks {
        let w = workload(k, cfg, &mut rng)?;
        let subgcn_ms = median_ms(cfg.trials, || subgcn_forward(&w, &params))?;
        let fullgraph_ms = median_ms(cfg.trials, || fullgraph_forward(&w, &params, cfg.n))?;
        log::info!("k={k}: sub-graph {subgcn_ms:.3} ms, full graph {fullgraph_ms:.3} ms");
        rows.push(BenchRow {
            k,
            subgcn_ms,
            fullgraph_ms,
        });
    }
    let slope = |f: fn(&BenchRow) -> f64| fit_slope(&rows.iter().map(|r| (r.k as f64, f(r))).collect::<Vec<_>>());
    Ok(BenchReport {
        subgcn_slope: slope(|r| r.subgcn_ms),
        fullgraph_slope: slope(|r| r.fullgraph_ms),
        rows,
    })
}

/// CSV `k,subgcn_ms,fullgraph_ms`; header and fitted slopes as `# ` lines.
pub fn write_bench_csv(report: &BenchReport, header: &[String]) -> String {
    let mut s = String::new();
    for h in header {
        let _ = writeln!(s, "# {h}");
    }
    let _ = writeln!(s, "# subgcn_slope={:.4}", report.subgcn_slope);
    let _ = writeln!(s, "# fullgraph_slope={:.4}", report.fullgraph_slope);
    s.push_str("k,subgcn_ms,fullgraph_ms\n");
    for r in &report.rows {
        let _ = writeln!(s, "{},{:.4},{:.4}", r.k, r.subgcn_ms, r.fullgraph_ms);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_laws() {
        let lin: Vec<(f64, f64)> = [8.0, 16.0, 32.0].iter().map(|&k| (k, 3.0 * k)).collect();
        assert!((fit_slope(&lin) - 1.0).abs() < 1e-12);
        let quad: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0].iter().map(|&k| (k, 0.5 * k * k)).collect();
        assert!((fit_slope(&quad) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn workload_shape_depends_only_on_seed() {
        let cfg = BenchConfig::default();
        let a = workload(8, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = workload(8, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.full_adjacency, b.full_adjacency);
        assert_eq!(a.all_features.shape(), (80, 10 + 16 + 6));
        for r in 0..80 {
            assert!((a.full_adjacency.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn both_variants_run_and_bad_configs_fail() {
        let cfg = BenchConfig {
            ks: vec![7, 9],
            hidden: 4,
            ..BenchConfig::default()
        };
        let r = bench_complexity(&cfg).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows.iter().all(|r| r.subgcn_ms > 0.0 && r.fullgraph_ms > 0.0));
        let csv = write_bench_csv(&r, &["seed=7".into()]);
        assert!(csv.contains("k,subgcn_ms,fullgraph_ms\n7,"));
        assert!(bench_complexity(&BenchConfig {
            trials: 2,
            ..cfg.clone()
        })
        .is_err());
        assert!(bench_complexity(&BenchConfig { ks: vec![6, 8], ..cfg }).is_err());
    }
}
