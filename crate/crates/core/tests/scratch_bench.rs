use psgd_core::data::{AdditionSampler, EqualizerStream, ZebraSampler};
use psgd_core::models::{isi, EqualizerModel, MlpModel, RnnModel};
use psgd_core::precond::{Block, Criterion, KronFactor, PreconditionerLayout, TriFactor};
use psgd_core::psgd::{run, OptimizerSettings, OptimizerState};

fn settings(criterion: Option<Criterion>, mu: f64) -> OptimizerSettings {
    OptimizerSettings {
        criterion,
        mu_theta0: mu,
        ..OptimizerSettings::default()
    }
}

#[test]
#[ignore]
fn tune_equalizer2() {
    for (name, crit, mu) in [
        ("c3@0.002", Some(Criterion::C3), 0.002),
        ("c3@0.005", Some(Criterion::C3), 0.005),
        ("plain@0.0005", None, 0.0005),
        ("plain@0.001", None, 0.001),
        ("plain@0.002", None, 0.002),
    ] {
        for seed in [1u64, 2, 3] {
            let model = EqualizerModel::default();
            let layout = PreconditionerLayout::dense(21);
            let mut state =
                OptimizerState::with_seed(model.initial_taps(), layout, settings(crit, mu), seed)
                    .unwrap();
            let stream = EqualizerStream::new(21, 10, seed + 100);
            let total = 60_000u64;
            let mut cross01 = None;
            let mut cross005 = None;
            let mut tail = Vec::new();
            let r = run(&mut state, &model, stream, total, |it, _loss, st| {
                if it % 100 == 0 {
                    let v = isi(st.theta()).unwrap();
                    if cross01.is_none() && v < 0.1 {
                        cross01 = Some(it);
                    }
                    if cross005.is_none() && v < 0.05 {
                        cross005 = Some(it);
                    }
                    if it > 27_000 && it <= 30_000 {
                        tail.push(v);
                    }
                }
            });
            let tail_mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
            println!(
                "eq {name} seed{seed}: ok={} cross0.1={cross01:?} cross0.05={cross005:?} tail@30k={tail_mean:.4}",
                r.is_ok()
            );
        }
    }
}

#[test]
#[ignore]
fn tune_zebra2() {
    for (name, crit, mu) in [
        ("c3@0.05", Some(Criterion::C3), 0.05),
        ("c3@0.1", Some(Criterion::C3), 0.1),
        ("c1@0.05", Some(Criterion::C1), 0.05),
        ("c1@0.1", Some(Criterion::C1), 0.1),
        ("c2@0.05", Some(Criterion::C2), 0.05),
        ("plain@1.0", None, 1.0),
    ] {
        let seed = 1u64;
        let model = MlpModel::zebra();
        let layout = PreconditionerLayout::dense(model.param_count());
        let mut state = OptimizerState::with_seed(
            model.init_parameters(seed),
            layout,
            settings(crit, mu),
            seed,
        )
        .unwrap();
        let stream = ZebraSampler::new(100, seed + 100);
        let total = 20_000u64;
        let mut window = Vec::new();
        let mut smoothed = Vec::new();
        let r = run(&mut state, &model, stream, total, |_it, loss, _st| {
            window.push(loss);
            if window.len() == 100 {
                smoothed.push(window.iter().sum::<f64>() / 100.0);
                window.clear();
            }
        });
        println!(
            "zebra {name}: ok={} at2k={:.4} at10k={:.4} final={:.4}",
            r.is_ok(),
            smoothed.get(19).unwrap_or(&f64::NAN),
            smoothed.get(99).unwrap_or(&f64::NAN),
            smoothed.last().unwrap_or(&f64::NAN)
        );
    }
}

#[test]
#[ignore]
fn tune_rnn_length() {
    for len in [50usize, 64, 80] {
        for (name, crit, mu) in [
            ("c3@0.1", Some(Criterion::C3), 0.1),
            ("plain@0.05", None, 0.05),
            ("plain@0.1", None, 0.1),
        ] {
            let seed = 1u64;
            let model = RnnModel::addition();
            let layout = if crit.is_some() {
                PreconditionerLayout::new(vec![
                    Block::Kron(KronFactor::identity(50, 53)),
                    Block::Dense(TriFactor::identity(51)),
                ])
            } else {
                PreconditionerLayout::dense(model.param_count())
            };
            let mut state = OptimizerState::with_seed(
                model.init_parameters(seed),
                layout,
                settings(crit, mu),
                seed,
            )
            .unwrap();
            let stream = AdditionSampler::new(100, len, seed + 100);
            let total = if crit.is_some() { 5_000u64 } else { 12_000u64 };
            let mut window = Vec::new();
            let mut hit = None;
            let mut min_smoothed = f64::INFINITY;
            let mut final_smoothed = f64::NAN;
            let r = run(&mut state, &model, stream, total, |it, loss, _st| {
                window.push(loss);
                if window.len() == 100 {
                    let m = window.iter().sum::<f64>() / 100.0;
                    min_smoothed = min_smoothed.min(m);
                    final_smoothed = m;
                    if hit.is_none() && m < 0.05 {
                        hit = Some(it);
                    }
                    window.clear();
                }
            });
            println!(
                "rnn len{len} {name}: ok={} hit<0.05 at {hit:?}; min={min_smoothed:.4} final={final_smoothed:.4}",
                r.is_ok()
            );
        }
    }
}
