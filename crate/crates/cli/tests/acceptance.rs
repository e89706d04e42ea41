//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so the report is always printed; exits nonzero if any fail.

#[path = "../../core/tests/common/mod.rs"]
mod oracles;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saci_cli::config::PipelineConfig;
use saci_cli::pipeline;
use saci_core::causal::{fit_saci, lag_sweep, AssemblyPolicy, ChannelWeights};
use saci_core::evaluation::{directional_accuracy, mape, predict_fkp, predict_lkp};
use saci_core::lexicon::{match_ngrams, score_text, tokenize, Lexicon, LexiconSet, ScoringOptions, NEGATIVE, POSITIVE};
use saci_core::market::{aggregate_trades, imbalance, Side, Trade};
use saci_core::series::pearson;
use saci_core::synth::{generate_planted, PlantedSpec};
use saci_core::transforms::{expand_variants, max_abs_normalize, signed_log};
use saci_core::{io, Granularity, SeriesFrame, TimeGrid, Variant};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn reference_spec(weights: Vec<f64>, noise_sigma: f64) -> PlantedSpec {
    PlantedSpec {
        n: 500,
        true_lag: 3,
        cause_weights: weights,
        noise_sigma,
        n_noise_frames: 20,
        seed: 42,
    }
}

fn frame(values: Vec<Option<f64>>, variant: Variant) -> SeriesFrame {
    let g = TimeGrid::new(0, Granularity::Day, values.len()).unwrap();
    SeriesFrame::from_options("c", "m", variant, g, values).unwrap()
}

fn planted_lag_recovery() -> Check {
    let clock = Instant::now();
    let d = generate_planted(&reference_spec(vec![0.8], 0.6)).map_err(|e| e.to_string())?;
    let m = lag_sweep(&d.candidates(), &d.effect, -10..=10).map_err(|e| e.to_string())?;
    let elapsed = clock.elapsed();
    let key = d.causes[0].key();
    let (best, p) = m
        .lags()
        .map(|l| (l, m.get(l, &key).unwrap().unwrap_or(0.0)))
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    let (naive_best, _) = (-10..=10)
        .map(|l| (l, oracles::naive_lagged_pearson(d.causes[0].values(), d.effect.values(), l).unwrap()))
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    ensure!(best == 3 && naive_best == 3, "argmax at {best} (oracle {naive_best})");
    ensure!(p.abs() >= 0.7, "|P| = {:.4} < 0.7", p.abs());
    ensure!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    Ok(format!("argmax lag 3, |P| = {:.4}, {:.1} ms", p.abs(), elapsed.as_secs_f64() * 1e3))
}

fn saci_dominance_shape() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = PipelineConfig {
        out: tmp.path().to_path_buf(),
        synth_weights: vec![0.8; 5],
        frames: vec![tmp.path().join(pipeline::SYNTH_FRAMES_FILE)],
        ..PipelineConfig::default()
    };
    pipeline::run_synth(&cfg).map_err(|e| e.to_string())?;
    pipeline::run_saci(&cfg).map_err(|e| e.to_string())?;
    let text = fs::read(tmp.path().join(pipeline::SWEEP_FILE)).map_err(|e| e.to_string())?;
    let sweep = io::read_sweep_csv(text.as_slice(), "sweep").map_err(|e| e.to_string())?;
    let at = |l: i64| sweep.iter().find(|s| s.0 == l).and_then(|s| s.1).map_or(0.0, f64::abs);
    let peak = at(3);
    let runner_up = sweep.iter().filter(|s| s.0 != 3).map(|s| s.1.map_or(0.0, f64::abs)).fold(0.0, f64::max);
    ensure!(sweep.len() == 21, "sweep has {} rows", sweep.len());
    ensure!(peak - runner_up >= 0.2, "peak {peak:.4} vs next {runner_up:.4}");
    Ok(format!("|corr| {peak:.4} at lag 3, next best {runner_up:.4}"))
}

fn greedy_assembly_guarantee() -> Check {
    let mut worst_margin = f64::INFINITY;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let causes = rng.random_range(1..=5);
        let spec = PlantedSpec {
            n: rng.random_range(80..=300),
            true_lag: rng.random_range(1..=5),
            cause_weights: (0..causes).map(|_| rng.random_range(-1.0..1.0)).collect(),
            noise_sigma: rng.random_range(0.0..2.0),
            n_noise_frames: rng.random_range(0..=12),
            seed,
        };
        let d = generate_planted(&spec).map_err(|e| e.to_string())?;
        let train = 0..(spec.n * 3 / 4);
        let fit = fit_saci(
            &d.candidates(),
            &d.effect,
            -6..=6,
            &ChannelWeights::uniform(),
            &AssemblyPolicy::default(),
            train,
            None,
        )
        .map_err(|e| format!("seed {seed}: {e}"))?;
        let terms = &fit.model.terms;
        let first = terms[0].pearson.abs();
        ensure!(
            fit.model.training_correlation >= first,
            "seed {seed}: final {} < first |P| {first}",
            fit.model.training_correlation
        );
        for w in terms.windows(2) {
            ensure!(w[1].correlation > w[0].correlation, "seed {seed}: sequence not increasing");
        }
        worst_margin = worst_margin.min(fit.model.training_correlation - first);
    }
    Ok(format!("100 fixtures, smallest final - first = {worst_margin:.3e}"))
}

fn sweep_oracle_equivalence() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(12..=50);
        let k = rng.random_range(1..=10);
        let g = TimeGrid::new(0, Granularity::Hour, n).unwrap();
        let frames: Vec<SeriesFrame> = (0..k)
            .map(|i| {
                let values = (0..n)
                    .map(|_| rng.random_bool(0.9).then(|| rng.random_range(-1.0..1.0)))
                    .collect();
                SeriesFrame::from_options("c", format!("m{i}"), Variant::N, g, values).unwrap()
            })
            .collect();
        let effect: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let e = SeriesFrame::dense("e", "pd", Variant::RAW, g, effect).unwrap();
        let reach = (n as i64 - 3).min(10);
        let m = lag_sweep(&frames, &e, -reach..=reach).map_err(|e| e.to_string())?;
        for f in &frames {
            for l in -reach..=reach {
                let ours = m.get(l, &f.key()).unwrap();
                let naive = oracles::naive_lagged_pearson(f.values(), e.values(), l);
                match (ours, naive) {
                    (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                    (None, None) => {}
                    other => return Err(format!("seed {seed} lag {l}: {other:?}")),
                }
            }
        }
    }
    ensure!(worst <= 1e-12, "max deviation {worst:.3e}");
    Ok(format!("100 instances, max deviation {worst:.3e}"))
}

fn pearson_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_affine: f64 = 0.0;
    for i in 0..1000 {
        let n = rng.random_range(3..60);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let (r, r_swapped) = (pearson(&x, &y).unwrap(), pearson(&y, &x).unwrap());
        ensure!(r == r_swapped, "vector {i}: asymmetric");
        ensure!(r.abs() <= 1.0, "vector {i}: |r| = {}", r.abs());
        let (a, b) = (rng.random_range(1e-3..1e3), rng.random_range(-1e3..1e3));
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        worst_affine = worst_affine.max((pearson(&ax, &y).unwrap() - r).abs());
        let self_r = pearson(&x, &x).unwrap();
        ensure!((self_r - 1.0).abs() <= 1e-12, "vector {i}: pearson(x, x) = {self_r}");
    }
    ensure!(worst_affine <= 1e-9, "affine deviation {worst_affine:.3e}");
    Ok(format!("1000 vectors, max affine deviation {worst_affine:.3e}"))
}

fn transform_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = rng.random_range(2..60);
        let scale = 10f64.powi(rng.random_range(-3..7));
        let values: Vec<Option<f64>> = (0..n)
            .map(|_| rng.random_bool(0.9).then(|| rng.random_range(-scale..scale)))
            .collect();
        let x = frame(values.clone(), Variant::RAW);
        let once = max_abs_normalize(&x);
        ensure!(max_abs_normalize(&once).values() == once.values(), "frame {i}: not idempotent");
        let neg = frame(values.iter().map(|v| v.map(|v| -v)).collect(), Variant::RAW);
        let (l, ln) = (signed_log(&x).unwrap(), signed_log(&neg).unwrap());
        ensure!(
            l.values().iter().zip(ln.values()).all(|(a, b)| *a == -*b),
            "frame {i}: signed log not odd"
        );
        for v in expand_variants(&x).unwrap() {
            ensure!(v.values().iter().all(|x| x.abs() <= 1.0), "frame {i}: {} out of bounds", v.variant);
        }
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let (Ok(r0), Ok(r1)) = (pearson(x.values(), &y), pearson(once.values(), &y)) {
            worst = worst.max((r0 - r1).abs());
        }
    }
    ensure!(worst <= 1e-9, "normalization moved Pearson by {worst:.3e}");
    Ok(format!("1000 frames, max Pearson shift {worst:.3e}"))
}

fn lexicon(category: &str, entries: &[&str]) -> Lexicon {
    let mut l = Lexicon::new(category).unwrap();
    for e in entries {
        l.insert(e, 1.0).unwrap();
    }
    l
}

fn order_priority_sentiment() -> Check {
    let set = LexiconSet::new(vec![lexicon(POSITIVE, &["not a bad thing"]), lexicon(NEGATIVE, &["bad thing", "bad"])])
        .unwrap();
    let m = match_ngrams(&tokenize("not a bad thing"), &set);
    let hits: Vec<_> = m.values().flatten().collect();
    ensure!(
        hits.len() == 1 && hits[0].category == POSITIVE && hits[0].len == 4,
        "tetragram example gave {hits:?}"
    );
    let set = LexiconSet::new(vec![lexicon(NEGATIVE, &["no good", "no"]), lexicon(POSITIVE, &["good"])]).unwrap();
    let m = match_ngrams(&tokenize("no good"), &set);
    let hits: Vec<_> = m.values().flatten().collect();
    ensure!(
        hits.len() == 1 && hits[0].category == NEGATIVE && hits[0].len == 2,
        "bigram example gave {hits:?}"
    );

    const VOCAB: [&str; 10] = ["no", "good", "not", "a", "bad", "thing", "moon", "dump", "very", "so"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let fuzz = |rng: &mut ChaCha8Rng, category: &str| {
            let mut l = Lexicon::new(category).unwrap();
            for _ in 0..rng.random_range(1..8) {
                let len = rng.random_range(1..=3);
                let phrase: Vec<&str> = (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
                let _ = l.insert(&phrase.join(" "), rng.random_range(0.1..3.0));
            }
            l
        };
        let set = LexiconSet::new(vec![fuzz(&mut rng, POSITIVE), fuzz(&mut rng, NEGATIVE)]).unwrap();
        let words: Vec<&str> = (0..rng.random_range(0..30)).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
        let options = ScoringOptions {
            log_scaling: rng.random(),
            sentiment: true,
        };
        let s = score_text(&words.join(" "), &set, options).unwrap().sentiment.unwrap();
        worst = worst.max((s.con - (s.pos * s.neg.abs()).sqrt()).abs());
        ensure!(s.neg <= 0.0 && s.pos >= 0.0, "post {i}: sign bounds violated");
    }
    ensure!(worst <= 1e-12, "con identity off by {worst:.3e}");
    Ok(format!("both worked examples exact; 1000 posts, con deviation {worst:.3e}"))
}

fn market_feature_oracle() -> Check {
    let grid = TimeGrid::new(0, Granularity::Minute, 6).unwrap();
    let close = |a: f64, b: f64| oracles::rel_close(a, b, 1e-9);
    let opt = |a: Option<f64>, b: Option<f64>| oracles::opt_close(a, b, 1e-9);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let trades: Vec<Trade> = (0..rng.random_range(0..=100))
            .map(|_| Trade {
                t_ms: rng.random_range(-20_000..380_000),
                price: rng.random_range(1.0..5e4),
                amount: rng.random_range(1e-4..100.0),
                side: if rng.random() { Side::Buy } else { Side::Sell },
            })
            .collect();
        let ours = aggregate_trades(&trades, &grid);
        let brute = oracles::brute_force_ohlcv(&trades, &grid);
        for (b, (o, r)) in ours.iter().zip(&brute).enumerate() {
            match (o, r) {
                (None, None) => {}
                (Some(o), Some(r)) => {
                    let same = o.open == r.open && o.close == r.close && o.high == r.high && o.low == r.low;
                    let sides = [(&o.buy, &r.buy), (&o.sell, &r.sell)].iter().all(|(s, t)| {
                        s.count == t.count
                            && close(s.base_volume, t.base)
                            && close(s.quote_volume, t.quote)
                            && opt(s.avg_price, t.avg)
                            && opt(s.vwap_base, t.vwap_base)
                            && opt(s.vwap_quote, t.vwap_quote)
                    });
                    ensure!(same && sides, "seed {seed}, bucket {b}: {o:?} vs {r:?}");
                }
                _ => return Err(format!("seed {seed}, bucket {b}: presence differs")),
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10_000 {
        let (a, b) = (rng.random_range(0.0..1e9), rng.random_range(0.0..1e9));
        ensure!(imbalance(a, b) == -imbalance(b, a), "imbalance({a}, {b}) not antisymmetric");
    }
    Ok("100 trade sets match the brute-force accumulator; imbalance antisymmetric".into())
}

fn baselines() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = rng.random_range(3..80);
        let mut level: f64 = rng.random_range(1.0..1e4);
        let prices: Vec<f64> = (0..n)
            .map(|_| {
                level = (level + rng.random_range(-50.0..50.0f64)).max(0.5);
                level
            })
            .collect();
        let g = TimeGrid::new(0, Granularity::Day, n).unwrap();
        let p = SeriesFrame::dense("m", "close", Variant::RAW, g, prices.clone()).unwrap();
        let h = rng.random_range(1..=2.min(n - 1));
        let fkp = predict_fkp(&p, h).unwrap();
        ensure!(mape(&fkp, &p).unwrap() == 0.0, "series {i}: FKP mape nonzero");
        ensure!(directional_accuracy(&fkp, &p).unwrap() == 1.0, "series {i}: FKP DA below 1");
        let lkp = mape(&predict_lkp(&p, 1).unwrap(), &p).unwrap();
        let expected =
            (1..n).map(|t| ((prices[t] - prices[t - 1]) / prices[t]).abs()).sum::<f64>() / (n - 1) as f64;
        worst = worst.max((lkp - expected).abs());
    }
    ensure!(worst <= 1e-12, "LKP mape off by {worst:.3e}");

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = PipelineConfig {
        out: tmp.path().to_path_buf(),
        synth_noise_sigma: 0.0,
        frames: vec![tmp.path().join(pipeline::SYNTH_FRAMES_FILE)],
        ..PipelineConfig::default()
    };
    pipeline::run_synth(&cfg).map_err(|e| e.to_string())?;
    pipeline::run_saci(&cfg).map_err(|e| e.to_string())?;
    pipeline::run_evaluate(&cfg).map_err(|e| e.to_string())?;
    let text = fs::read(tmp.path().join(pipeline::EVAL_FILE)).map_err(|e| e.to_string())?;
    let rows = io::read_eval_csv(text.as_slice(), "eval").map_err(|e| e.to_string())?;
    let saci = rows.iter().find(|r| r.predictor == "saci").ok_or("no saci row")?;
    ensure!(saci.da == 1.0, "noiseless SACI DA = {}", saci.da);
    Ok(format!("FKP exact, LKP mape deviation {worst:.3e}, noiseless SACI DA 1.0 over {} buckets", saci.n))
}

fn run_binary(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_saci"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    Ok(())
}

fn end_to_end_determinism() -> Check {
    let mut artifacts = Vec::new();
    for _ in 0..2 {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = tmp.path();
        run_binary(d, &["synth", "-o", "fx"])?;
        run_binary(d, &["saci", "--set", "frames=fx/frames.csv", "--set", "group.causes=cause", "-o", "run"])?;
        run_binary(d, &["evaluate", "--set", "frames=fx/frames.csv", "-o", "run"])?;
        let mut files = Vec::new();
        for sub in ["fx", "run"] {
            let mut names: Vec<_> = fs::read_dir(d.join(sub))
                .map_err(|e| e.to_string())?
                .map(|e| e.unwrap().file_name())
                .collect();
            names.sort();
            for name in names {
                let bytes = fs::read(d.join(sub).join(&name)).map_err(|e| e.to_string())?;
                files.push((format!("{sub}/{}", name.to_string_lossy()), bytes));
            }
        }
        artifacts.push(files);
    }
    let (a, b) = (&artifacts[0], &artifacts[1]);
    ensure!(a.len() == b.len(), "different artifact sets");
    for ((na, ba), (nb, bb)) in a.iter().zip(b) {
        ensure!(na == nb && ba == bb, "{na} differs between runs");
    }
    Ok(format!("{} artifacts byte-identical", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("planted-lag recovery", planted_lag_recovery),
        ("SACI dominance shape", saci_dominance_shape),
        ("greedy-assembly guarantee", greedy_assembly_guarantee),
        ("sweep/oracle equivalence", sweep_oracle_equivalence),
        ("Pearson property suite", pearson_properties),
        ("transform suite", transform_properties),
        ("order-priority sentiment", order_priority_sentiment),
        ("market-feature oracle", market_feature_oracle),
        ("baselines", baselines),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
