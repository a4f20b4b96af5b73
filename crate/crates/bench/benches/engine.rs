//! Per-block costs of the audio path. One 256-frame block at 48 kHz lasts
//! 5.33 ms; everything here should sit far below that.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use sonomyo_core::features::{FeatureConfig, FeatureExtractor, MavWindow};
use sonomyo_core::ingest::{synth_session, Profile};
use sonomyo_core::mixer::{Meters, Mixer, MixerState, STRIPS};
use sonomyo_core::synth::{
    params_of, BreathChain, BreathChainParams, Bubble, FluidFlow, Friction, Nonlinear, NonlinearParams, Scraping,
    SoundObject, PARAMS,
};
use sonomyo_core::{CalibrationProfile, Engine, EngineConfig, ObjectId};

const BLOCK: usize = 256;

fn engine_block(c: &mut Criterion) {
    let frames = synth_session(Profile::Macro, 1, 10.0).unwrap();
    let mut g = c.benchmark_group("engine");
    g.throughput(Throughput::Elements(BLOCK as u64));
    for scene in ["breath", "standstill", "musicking"] {
        let cfg = EngineConfig {
            seed: Some(1),
            initial_scene: scene.into(),
            ..Default::default()
        };
        let mut e = Engine::new(&cfg, &CalibrationProfile::default()).unwrap();
        e.set_breath((0..48_000 * 10).map(|i| ((i % 331) as f32 / 331.0 - 0.5) * 0.3).collect());
        let span = frames.last().unwrap().timestamp_us + 5_000;
        let (mut next, mut base) = (0, 0);
        g.bench_function(format!("process_block/{scene}"), |b| {
            b.iter(|| {
                let now = e.clock_us();
                while next < frames.len() && base + frames[next].timestamp_us <= now {
                    e.push_frame(&frames[next]);
                    next += 1;
                }
                if next == frames.len() {
                    // loop the session
                    next = 0;
                    base += span;
                }
                let (l, _) = e.process_block();
                black_box(l[0]);
            })
        });
    }
    g.finish();
}

fn objects(c: &mut Criterion) {
    let sr = 48_000.0;
    let mut g = c.benchmark_group("object");
    g.throughput(Throughput::Elements(BLOCK as u64));
    let mut objs: Vec<Box<dyn SoundObject>> = vec![
        Box::new(Friction::new(sr)),
        Box::new(Bubble::new(sr)),
        Box::new(FluidFlow::new(sr, 1)),
        Box::new(Scraping::new(sr, 2)),
        Box::new(Nonlinear::new(sr, &NonlinearParams::default())),
    ];
    for obj in &mut objs {
        // a busy mid-range setting for every parameter
        let values: Vec<f64> = PARAMS[params_of(obj.id())]
            .iter()
            .map(|s| s.min + 0.7 * (s.max - s.min))
            .collect();
        let mut buf = [0.0f32; BLOCK];
        obj.set_targets(&values);
        let name = obj.id().as_str();
        g.bench_function(name, |b| {
            b.iter(|| {
                obj.process(&mut buf);
                black_box(buf[BLOCK - 1]);
            })
        });
    }
    let mut chain = BreathChain::new(sr);
    chain.snap(&BreathChainParams {
        rt60_s: 3.0,
        feedback: 0.7,
        mix: 0.5,
    });
    let input: Vec<f32> = (0..BLOCK).map(|i| ((i * 37 % 101) as f32 / 101.0) - 0.5).collect();
    let (mut l, mut r) = ([0.0f32; BLOCK], [0.0f32; BLOCK]);
    g.bench_function(ObjectId::Breath.as_str(), |b| {
        b.iter(|| {
            chain.process(&input, &mut l, &mut r);
            black_box(l[0]);
        })
    });
    g.finish();
}

fn mixer(c: &mut Criterion) {
    let mut m = Mixer::new(48_000.0, MixerState::default());
    let x = vec![0.25f32; BLOCK];
    let (mut l, mut r, mut s) = ([0.0f32; BLOCK], [0.0f32; BLOCK], [0.0f32; BLOCK]);
    let mut meters = Meters::default();
    c.bench_function("mixer/six_strips", |b| {
        b.iter(|| {
            let inputs: [Option<&[f32]>; STRIPS] = [Some(x.as_slice()); STRIPS];
            m.process_strips(inputs, &mut l, &mut r, &mut s, &mut meters);
            m.process_master(&mut l, &mut r, &mut meters);
            black_box(l[0]);
        })
    });
}

fn features(c: &mut Criterion) {
    let frames = synth_session(Profile::Meso, 3, 10.0).unwrap();
    let mut g = c.benchmark_group("features");
    g.throughput(Throughput::Elements(frames.len() as u64));
    g.bench_function("extractor/10s_session", |b| {
        b.iter_batched(
            || FeatureExtractor::new(FeatureConfig::default(), &CalibrationProfile::default()),
            |mut fx| {
                let mut n = 0;
                for f in &frames {
                    n += fx.push(f).is_some() as usize;
                }
                black_box(n)
            },
            BatchSize::SmallInput,
        )
    });
    let rect: Vec<[f64; 8]> = (0..10_000).map(|i| [(i % 128) as f64; 8]).collect();
    g.throughput(Throughput::Elements(rect.len() as u64));
    g.bench_function("mav_window/10k", |b| {
        b.iter(|| {
            let mut w = MavWindow::new(50, 10);
            let mut acc = 0.0;
            for x in &rect {
                if let Some(m) = w.push(x) {
                    acc += m[0];
                }
            }
            black_box(acc)
        })
    });
    g.finish();
}

criterion_group!(benches, engine_block, objects, mixer, features);
criterion_main!(benches);
