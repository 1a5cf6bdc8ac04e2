use lshawkes::model::presets;
use lshawkes::simulate::{default_warmup, simulate};
use lshawkes::{Engine, EventStream, ModelSpec, RngStream};

fn window_counts(ev: &EventStream, windows: usize) -> Vec<f64> {
    let w = ev.horizon / windows as f64;
    (0..windows)
        .flat_map(|i| (0..ev.d).map(move |m| (i, m)))
        .map(|(i, m)| ev.count_in(m, i as f64 * w, (i + 1) as f64 * w) as f64)
        .collect()
}

fn mean_var(rows: &[Vec<f64>], c: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn same_stream_is_bit_identical() {
    let model = ModelSpec::new(presets::preset2()).unwrap();
    for engine in [Engine::Cluster, Engine::Thinning] {
        let a = simulate(engine, &model, 300.0, 60.0, RngStream::new(42, 3)).unwrap();
        let b = simulate(engine, &model, 300.0, 60.0, RngStream::new(42, 3)).unwrap();
        let c = simulate(engine, &model, 300.0, 60.0, RngStream::new(42, 4)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_ne!(a.to_text(), c.to_text());
    }
}

#[test]
fn engines_agree_on_window_counts() {
    let model = ModelSpec::new(presets::sine()).unwrap();
    let warm = default_warmup(&model);
    let reps = 150;
    let run = |engine| -> Vec<Vec<f64>> {
        (0..reps)
            .map(|r| window_counts(&simulate(engine, &model, 400.0, warm, RngStream::new(77, r)).unwrap(), 5))
            .collect()
    };
    let (a, b) = (run(Engine::Cluster), run(Engine::Thinning));
    for c in 0..5 {
        let (ma, va) = mean_var(&a, c);
        let (mb, vb) = mean_var(&b, c);
        let z = (ma - mb) / ((va + vb) / reps as f64).sqrt();
        assert!(z.abs() < 4.0, "window {c}: {ma} vs {mb} (z = {z})");
    }
}

#[test]
fn warmup_is_long_enough() {
    // Counts right after time 0 should not depend on a longer burn-in.
    let model = ModelSpec::new(presets::stationary1()).unwrap();
    let reps = 400;
    let early = |warm: f64, seed: u64| -> Vec<Vec<f64>> {
        (0..reps)
            .map(|r| {
                let ev = simulate(Engine::Cluster, &model, 10.0, warm, RngStream::new(seed, r)).unwrap();
                vec![ev.count_in(0, 0.0, 5.0) as f64]
            })
            .collect()
    };
    let (a, b) = (early(20.0, 1), early(80.0, 2));
    let (ma, va) = mean_var(&a, 0);
    let (mb, vb) = mean_var(&b, 0);
    let z = (ma - mb) / ((va + vb) / reps as f64).sqrt();
    assert!(z.abs() < 4.0, "{ma} vs {mb}");
    // Stationary mean intensity is 1.
    assert!((ma - 5.0).abs() < 4.0 * (va / reps as f64).sqrt(), "{ma}");
}

#[test]
fn event_files_round_trip() {
    let model = ModelSpec::new(presets::preset2()).unwrap();
    let ev = simulate(Engine::Cluster, &model, 200.0, 60.0, RngStream::new(5, 0)).unwrap();
    let dir = std::env::temp_dir().join(format!("lshawkes-rt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("ev.csv");
    ev.save(&path).unwrap();
    let back = EventStream::load(&path).unwrap();
    assert_eq!(back.to_text(), ev.to_text());
    assert_eq!(back.seed, Some(5));
    assert!(ev.to_text().starts_with("# hawkes-events v1 d=2 T=200\n"));
    std::fs::remove_dir_all(&dir).unwrap();
}
