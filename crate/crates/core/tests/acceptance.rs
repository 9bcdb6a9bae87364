//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use raf_core::augment::Strategy;
use raf_core::forecast::{Forecaster, ForecasterSpec, PipelineConfig, RafPipeline};
use raf_core::harness::{run_experiment, sweep_pool_size, ExperimentConfig, NO_RETRIEVAL};
use raf_core::knowledge_base::{chronological_split, KnowledgeBase};
use raf_core::metrics::{mae, rmse, sedi, sedi_thresholds, SediThresholds};
use raf_core::retrieval::{
    embed_builtin, retrieve_top_k, score_mutual_information, score_similarity, sturges_bins, BinnedWindow, Embedding,
    Exclusion, Retriever, RetrieverKind,
};
use raf_core::series::WindowPair;
use raf_core::synthetic::{self, SyntheticConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_window(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let kind = rng.random_range(0..3);
    Array2::from_shape_fn((rows, cols), |(r, c)| match kind {
        0 => rng.random_range(-5.0..5.0),
        1 => normal.sample(rng) * (c + 1) as f64 + 0.05 * r as f64,
        _ => (r as f64 * 0.3 + c as f64).sin() + 0.2 * normal.sample(rng),
    })
}

// Independent mutual-information oracle: explicit bin edges, a linear scan
// for each value's bin, and a sparse map of joint counts.
fn oracle_bin(x: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
    let mut b = 0;
    for (i, e) in edges.iter().enumerate().take(bins) {
        if x >= *e {
            b = i;
        }
    }
    b
}

fn oracle_entropy(counts: impl Iterator<Item = usize>, n: usize) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

fn oracle_mi(query: ArrayView2<f64>, candidate: ArrayView2<f64>, bins: usize) -> f64 {
    let (l, m) = query.dim();
    let mut total = 0.0;
    for v in 0..m {
        let a: Vec<f64> = candidate.column(v).to_vec();
        let b: Vec<f64> = query.column(v).to_vec();
        let range = |s: &[f64]| {
            s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
        };
        let (alo, ahi) = range(&a);
        let (blo, bhi) = range(&b);
        let mut ca = vec![0usize; bins];
        let mut cb = vec![0usize; bins];
        let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in 0..l {
            let i = oracle_bin(a[t], alo, ahi, bins);
            let j = oracle_bin(b[t], blo, bhi, bins);
            ca[i] += 1;
            cb[j] += 1;
            *joint.entry((i, j)).or_default() += 1;
        }
        let mi = oracle_entropy(ca.into_iter(), l) + oracle_entropy(cb.into_iter(), l)
            - oracle_entropy(joint.into_values(), l);
        total += mi.max(0.0);
    }
    total / m as f64
}

fn mi_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let bins = sturges_bins(100);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let q = random_window(&mut rng, 100, 3);
        let c = random_window(&mut rng, 100, 3);
        let got = score_mutual_information(q.view(), c.view(), bins).map_err(|e| e.to_string())?;
        let want = oracle_mi(q.view(), c.view(), bins);
        let diff = (got - want).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-10, || format!("trial {trial}: {got} vs oracle {want}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("200 pairs, max |diff| {worst:.1e}, {elapsed:.2?}"))
}

fn mi_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for trial in 0..1000 {
        let l = rng.random_range(2..120);
        let m = rng.random_range(1..5);
        let bins = if rng.random_bool(0.5) {
            sturges_bins(l)
        } else {
            rng.random_range(1..16)
        };
        let a = random_window(&mut rng, l, m);
        let b = random_window(&mut rng, l, m);
        let ab = score_mutual_information(a.view(), b.view(), bins).map_err(|e| e.to_string())?;
        let ba = score_mutual_information(b.view(), a.view(), bins).map_err(|e| e.to_string())?;
        ensure(ab.to_bits() == ba.to_bits(), || {
            format!("trial {trial}: asymmetric {ab} vs {ba}")
        })?;
        ensure(ab >= 0.0, || format!("trial {trial}: negative {ab}"))?;

        let constant = Array2::from_shape_fn((l, m), |(_, c)| c as f64 * 3.0 - 1.0);
        let zero = score_mutual_information(a.view(), constant.view(), bins).map_err(|e| e.to_string())?;
        ensure(zero == 0.0, || format!("trial {trial}: constant candidate gave {zero}"))?;

        // each variable's values one per bin: MI(x, x) is the mean marginal entropy
        let d = rng.random_range(2..12);
        let distinct = Array2::from_shape_fn((d, m), |(r, c)| {
            let shift = (r + c) % d;
            shift as f64 * 2.5 + c as f64
        });
        let self_mi = score_mutual_information(distinct.view(), distinct.view(), d).map_err(|e| e.to_string())?;
        let marginal = BinnedWindow::new(distinct.view(), d).map_err(|e| e.to_string())?;
        let mean_h = marginal.marginal_entropies().iter().sum::<f64>() / m as f64;
        ensure((self_mi - mean_h).abs() <= 1e-12, || {
            format!("trial {trial}: MI(x,x)={self_mi}, mean H={mean_h}")
        })?;
        ensure((self_mi - (d as f64).ln()).abs() <= 1e-12, || {
            format!("trial {trial}: MI(x,x)={self_mi} != ln {d}")
        })?;
    }
    Ok("1000 trials: symmetry exact, non-negative, constant -> 0, MI(x,x) = mean H".into())
}

fn distance_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let emb = |rng: &mut ChaCha8Rng, raw: bool| -> Result<Embedding, String> {
        if raw {
            Embedding::new((0..512).map(|_| rng.random_range(-3.0..3.0)).collect()).map_err(|e| e.to_string())
        } else {
            embed_builtin(random_window(rng, 100, 38).view(), 512).map_err(|e| e.to_string())
        }
    };
    let d = |a: &Embedding, b: &Embedding| score_similarity(a, b).map_err(|e| e.to_string());
    for trial in 0..1000 {
        let raw = trial % 2 == 0;
        let (a, b, c) = (emb(&mut rng, raw)?, emb(&mut rng, raw)?, emb(&mut rng, raw)?);
        ensure(d(&a, &a)? == 0.0, || format!("trial {trial}: d(a,a) != 0"))?;
        ensure(d(&a, &b)? > 0.0, || {
            format!("trial {trial}: distinct embeddings at distance 0")
        })?;
        ensure((d(&a, &b)? - d(&b, &a)?).abs() <= 1e-9, || {
            format!("trial {trial}: asymmetric")
        })?;
        ensure(d(&a, &c)? <= d(&a, &b)? + d(&b, &c)? + 1e-9, || {
            format!("trial {trial}: triangle inequality")
        })?;
    }
    Ok("1000 triples (raw and pooled 512-d)".into())
}

fn random_base(rng: &mut ChaCha8Rng, d: usize, l: usize, h: usize, m: usize) -> KnowledgeBase {
    let samples = (0..d)
        .map(|i| WindowPair {
            lookback: random_window(rng, l, m),
            future: random_window(rng, h, m),
            origin: l - 1 + i * (l + h),
        })
        .collect();
    KnowledgeBase::from_samples(samples, l, h, m).unwrap()
}

fn self_retrieval() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let retriever = Retriever::similarity();
    for trial in 0..100 {
        let d = rng.random_range(2..60);
        let (l, h, m) = (
            rng.random_range(4..120),
            rng.random_range(1..30),
            rng.random_range(1..8),
        );
        let kb = random_base(&mut rng, d, l, h, m);
        let pick = rng.random_range(0..d);
        let query = kb.samples()[pick].lookback.clone();
        let k = rng.random_range(1..=d);
        let ctx = retrieve_top_k(&kb, query.view(), &retriever, k, Exclusion::None).map_err(|e| e.to_string())?;
        let first = &ctx.entries[0];
        ensure(first.base_index == pick && first.score == 0.0, || {
            format!(
                "trial {trial}: expected sample {pick} at distance 0, got {} at {}",
                first.base_index, first.score
            )
        })?;
    }
    Ok("100 randomized bases".into())
}

fn strategy_coincidence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for trial in 0..50 {
        let d = rng.random_range(2..30);
        let (l, h, m) = (rng.random_range(8..60), rng.random_range(1..15), rng.random_range(1..6));
        let kb = random_base(&mut rng, d, l, h, m);
        let query = WindowPair {
            lookback: random_window(&mut rng, l, m),
            future: Array2::zeros((h, m)),
            origin: 100_000,
        };
        let spec = match trial % 3 {
            0 => ForecasterSpec::Persistence,
            1 => ForecasterSpec::Seasonal {
                period: rng.random_range(1..20),
            },
            _ => ForecasterSpec::Autoregressive {
                order: rng.random_range(1..4),
                ridge: rng.random_range(1e-4..1.0),
            },
        };
        let forecaster: Arc<dyn Forecaster> = spec.build().map_err(|e| e.to_string())?;
        let retriever = if rng.random_bool(0.5) {
            Retriever::similarity()
        } else {
            Retriever::mutual_information()
        };
        let targets: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.7)).collect();
        let targets = if targets.is_empty() { vec![0] } else { targets };
        let run = |s| {
            RafPipeline::new(
                &kb,
                &PipelineConfig::new(retriever.clone(), 1, s),
                Arc::clone(&forecaster),
                targets.clone(),
            )
            .and_then(|p| p.run(&query))
            .map(|o| o.result.values)
            .map_err(|e| e.to_string())
        };
        let (a, b, c) = (run(Strategy::A)?, run(Strategy::B)?, run(Strategy::C)?);
        let bits = |x: &Array2<f64>| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(bits(&a) == bits(&b) && bits(&a) == bits(&c), || {
            format!("trial {trial} ({spec}): strategies differ")
        })?;
    }
    Ok("50 random k=1 pipelines bit-identical".into())
}

fn metric_hand_checks() -> Outcome {
    let e = |r: raf_core::Result<f64>| r.map_err(|e| e.to_string());
    ensure(
        (e(mae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]))? - 2.0 / 3.0).abs() <= 1e-12,
        || "mae".into(),
    )?;
    ensure(
        (e(rmse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]))? - (2.0f64 / 3.0).sqrt()).abs() <= 1e-12,
        || "rmse".into(),
    )?;
    let th = SediThresholds {
        low: 1.5,
        high: 8.5,
        p_low: 0.1,
        p_high: 0.9,
    };
    let s = sedi(&[0.0, 1.0, 5.0, 9.0, 10.0], &[0.0, 5.0, 5.0, 5.0, 10.0], &th).map_err(|e| e.to_string())?;
    ensure(s == Some(0.5), || format!("SEDI hand count gave {s:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let truth: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..10.0)).collect();
    ensure(
        e(mae(&truth, &truth))? == 0.0 && e(rmse(&truth, &truth))? == 0.0,
        || "perfect MAE/RMSE".into(),
    )?;
    let th = sedi_thresholds(&truth, 0.1, 0.9).map_err(|e| e.to_string())?;
    ensure(
        sedi(&truth, &truth, &th).map_err(|e| e.to_string())? == Some(1.0),
        || "perfect SEDI".into(),
    )?;

    for trial in 0..1000 {
        let n = rng.random_range(10..200);
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let pred: Vec<f64> = truth.iter().map(|y| y + rng.random_range(-3.0..3.0)).collect();
        let th = sedi_thresholds(&truth, 0.1, 0.9).map_err(|e| e.to_string())?;
        if let Some(s) = sedi(&truth, &pred, &th).map_err(|e| e.to_string())? {
            ensure((0.0..=1.0).contains(&s), || format!("trial {trial}: SEDI {s}"))?;
        }
    }
    Ok("hand values exact, SEDI in [0,1] over 1000 pairs".into())
}

fn split_fidelity() -> Outcome {
    let split = chronological_split(1538, 0.85).map_err(|e| e.to_string())?;
    let (train, test) = (split.train.len(), split.test.len());
    ensure(train == 1307 && test == 231, || format!("got {train}/{test}"))?;
    let data = synthetic::generate(&SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let split = chronological_split(data.series.len(), 0.85).map_err(|e| e.to_string())?;
    ensure(split.train.len() == 1307 && split.test.len() == 231, || {
        "synthetic series split".into()
    })?;
    Ok("1538 rows -> 1307 train / 231 test".into())
}

fn no_retrieval_equivalence() -> Outcome {
    let cfg = ExperimentConfig {
        strategies: vec![Strategy::A, Strategy::B, Strategy::C],
        coverages: Some(vec![0.0]),
        include_baseline: true,
        ..ExperimentConfig::default()
    };
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
    ensure(out.failures.is_empty(), || format!("{:?}", out.failures))?;
    let mut compared = 0;
    for &h in &cfg.horizons {
        let cells: Vec<_> = out.archive.cells.iter().filter(|c| c.lead_time == h).collect();
        let bare = cells
            .iter()
            .find(|c| c.retriever == NO_RETRIEVAL)
            .ok_or("missing baseline cell")?;
        for cell in cells.iter().filter(|c| c.retriever != NO_RETRIEVAL) {
            ensure(cell.records.len() == bare.records.len(), || {
                "record counts differ".into()
            })?;
            for (a, b) in cell.records.iter().zip(&bare.records) {
                let bits = |m: &Vec<Vec<f64>>| m.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
                ensure(
                    a.origin == b.origin && bits(&a.prediction) == bits(&b.prediction),
                    || format!("h={h} {}-{} origin {} differs", cell.retriever, cell.strategy, a.origin),
                )?;
                compared += 1;
            }
        }
    }
    Ok(format!(
        "{compared} forecasts over 4 lead times x 2 retrievers x 3 strategies"
    ))
}

fn constructed_benchmark() -> Outcome {
    let coverages = [0.0, 0.25, 0.45, 0.65, 0.85];
    let cfg = ExperimentConfig {
        workers: 1,
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let sweep = sweep_pool_size(&cfg, &coverages).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(sweep.output.failures.is_empty(), || {
        format!("{:?}", sweep.output.failures)
    })?;
    let mut notes = Vec::new();
    for h in [21, 28] {
        let bare = sweep
            .output
            .report
            .overall_for(h, "sim", "b", 0.0)
            .ok_or("missing coverage-0 cell")?
            .mae;
        for r in [RetrieverKind::Similarity, RetrieverKind::MutualInformation] {
            let raf = sweep
                .output
                .report
                .overall_for(h, r.as_str(), "b", 0.85)
                .ok_or("missing full-pool cell")?
                .mae;
            ensure(raf <= bare, || {
                format!("h={h} {r}: RAF MAE {raf} > no-retrieval {bare}")
            })?;
            notes.push(format!("h={h} {r} {raf:.4}<={bare:.4}"));
        }
    }
    for h in &cfg.horizons {
        for r in ["sim", "mi"] {
            let worst = sweep.worst_coverage(*h, r, "b");
            ensure(worst == Some(0.0), || {
                format!("h={h} {r}: sweep maximum at coverage {worst:?}")
            })?;
        }
    }
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{}; sweep max at coverage 0 for all curves; {elapsed:.1?} single-threaded",
        notes.join(", ")
    ))
}

fn determinism() -> Outcome {
    let cfg = ExperimentConfig {
        include_baseline: true,
        ..ExperimentConfig::default()
    };
    let mut reports = Vec::new();
    for workers in [0, 0, 1] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = run_experiment(&ExperimentConfig { workers, ..cfg.clone() }).map_err(|e| e.to_string())?;
        out.write(dir.path()).map_err(|e| e.to_string())?;
        reports.push(std::fs::read(dir.path().join("report.csv")).map_err(|e| e.to_string())?);
    }
    ensure(reports[0] == reports[1], || "two runs differ".into())?;
    ensure(reports[0] == reports[2], || "single-threaded run differs".into())?;
    Ok(format!(
        "report.csv byte-identical across 3 runs ({} bytes)",
        reports[0].len()
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("MI oracle equivalence", mi_oracle_equivalence),
        ("MI axioms", mi_axioms),
        ("distance axioms", distance_axioms),
        ("self-retrieval", self_retrieval),
        ("strategy coincidence", strategy_coincidence),
        ("metric hand-checks", metric_hand_checks),
        ("split fidelity", split_fidelity),
        ("no-retrieval equivalence", no_retrieval_equivalence),
        ("constructed-benchmark improvement", constructed_benchmark),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
