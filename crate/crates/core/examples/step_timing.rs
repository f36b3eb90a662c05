use std::time::Instant;

use gla_core::detection::{assign_targets, HeadConfig};
use gla_core::experiment::Detector;
use gla_core::fusion::{ModalityBundle, ModelConfig};
use gla_core::nn::{ParamStore, Session};
use gla_core::sim::{dataset, DatasetSpec};
use gla_tensor::{adam_step, AdamConfig, AdamState, Tensor};
use rand::SeedableRng;

fn main() {
    let spec = DatasetSpec::default();
    let frames: Vec<_> = dataset::plan_frames(&spec).into_iter().take(2).collect();
    let rendered: Vec<_> = frames.iter().map(|f| dataset::render_frame(&spec, f)).collect();
    let stack = |m| Tensor::stack(&rendered.iter().map(|r| r.get(m)).collect::<Vec<_>>()).unwrap();
    let bundle = ModalityBundle::new(
        stack(gla_core::domain::Modality::Camera),
        stack(gla_core::domain::Modality::Gated),
        stack(gla_core::domain::Modality::Lidar),
        frames.iter().map(|f| f.weather).collect(),
        frames.iter().map(|f| f.daytime).collect(),
    )
    .unwrap();
    let mut store = ParamStore::<f32>::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let det = Detector::new(ModelConfig::default(), HeadConfig::default(), (60, 120), &mut store, &mut rng).unwrap();
    let targets: Vec<_> = rendered
        .iter()
        .map(|r| {
            let gts: Vec<_> = r.ground_truth.iter().map(|g| (g.bbox, g.class_id)).collect();
            assign_targets(&det.grid.anchors, &gts, 0.5, 0.4)
        })
        .collect();
    println!("params {}", store.scalar_count());
    let cfg = AdamConfig::default();
    let mut state = AdamState::new(store.params().iter().map(|p| &p.value));
    let steps: usize = std::env::args().nth(1).map_or(5, |s| s.parse().unwrap());
    for step in 0..steps {
        let t0 = Instant::now();
        let (loss, mut grads_vec) = {
            let mut s = Session::new(&mut store, true);
            let out = det.forward(&mut s, &bundle).unwrap();
            let t1 = t0.elapsed();
            let l = det.loss(&mut s, &out, &targets.iter().collect::<Vec<_>>()).unwrap();
            let mut g = s.graph.backward(l.total).unwrap();
            println!("fwd {:?}", t1);
            (s.graph.value(l.total).item(), s.param_grads(&mut g))
        };
        let mut params: Vec<&mut Tensor<f32>> = store.params_mut().iter_mut().map(|p| &mut p.value).collect();
        let grads: Vec<Option<&Tensor<f32>>> = grads_vec.iter_mut().map(|g| g.as_ref()).collect();
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        println!("step {step} loss {loss:.4} {:?}", t0.elapsed());
    }
}
