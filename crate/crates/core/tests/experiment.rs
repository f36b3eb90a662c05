use gla_core::eval::{score_frames, Level};
use gla_core::experiment::checkpoint;
use gla_core::experiment::run::{run_detector, truths};
use gla_core::experiment::train::{batch_schedule, format_log};
use gla_core::experiment::{train, ExperimentConfig};
use gla_core::fusion::FusionVariant;
use gla_core::sim::{make_dataset, Dataset, Split};
use gla_core::GlaError;

fn tiny(steps: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.data.sim.height = 16;
    c.data.sim.width = 24;
    c.data.frames_per_cell = 2;
    c.model.channels = 4;
    c.model.partition_rows = 2;
    c.model.partition_cols = 4;
    c.train.steps = steps;
    c.train.lr = 1e-3;
    c
}

#[test]
fn defaults_follow_the_reference_setup() {
    let c = ExperimentConfig::default();
    assert_eq!(c.train.lr, 2e-5);
    assert_eq!(c.train.batch_size, 2);
    assert_eq!(c.model.variant, FusionVariant::Gla);
}

#[test]
fn partition_grid_keys_set_the_grid() {
    let c = ExperimentConfig::parse("model.partition_rows = 5\nmodel.partition_cols = 10\n").unwrap();
    assert_eq!(c.model.partition_rows * c.model.partition_cols, 50);
}

#[test]
fn invalid_values_report_the_offending_line() {
    let text = "seed = 3\n# comment\ntrain.lr = -1\n";
    match ExperimentConfig::parse(text) {
        Err(GlaError::Config { line, message }) => {
            assert_eq!(line, Some(3));
            assert!(message.contains("train.lr"), "{message}");
        }
        other => panic!("expected a config error, got {other:?}"),
    }
    match ExperimentConfig::parse("seed = 1\nmodel.colour = 2\n") {
        Err(GlaError::Config { line, .. }) => assert_eq!(line, Some(2)),
        other => panic!("expected a config error, got {other:?}"),
    }
    assert!(ExperimentConfig::parse("seed = 1\nseed = 2\n").is_err());
    assert!(ExperimentConfig::parse("model.channels = 6\n").is_err());
}

#[test]
fn serialized_config_parses_back_equal() {
    let mut c = tiny(7);
    c.model.variant = FusionVariant::Concat;
    c.seed = 99;
    assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    let d = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::parse(&d.to_text()).unwrap(), d);
}

#[test]
fn batch_schedule_covers_each_epoch_once() {
    let s = batch_schedule(4, 10, 2, 5);
    assert_eq!(s.len(), 5);
    let mut seen: Vec<usize> = s.concat();
    seen.sort();
    assert_eq!(seen, (0..10).collect::<Vec<_>>());
    assert_eq!(s, batch_schedule(4, 10, 2, 5));
}

fn dataset(config: &ExperimentConfig) -> (tempfile::TempDir, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    make_dataset(&config.data, dir.path()).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    (dir, ds)
}

#[test]
fn checkpoints_round_trip_and_zero_steps_is_the_initialization() {
    let config = tiny(0);
    let (_data, ds) = dataset(&config);
    let frames = ds.load_split(Split::Train).unwrap();
    let outcome = train(&config, &frames, |_| {}).unwrap();
    let (_, fresh) = checkpoint::build(&config).unwrap();
    let values = |s: &gla_core::nn::ParamStore<f32>| s.params().iter().map(|p| p.value.clone()).collect::<Vec<_>>();
    assert_eq!(values(&outcome.store), values(&fresh));

    let config = tiny(3);
    let trained = train(&config, &frames, |_| {}).unwrap();
    assert_ne!(values(&trained.store), values(&fresh));
    let ckpt = tempfile::tempdir().unwrap();
    checkpoint::save(ckpt.path(), &config, &trained.store).unwrap();
    let (loaded_config, _, loaded) = checkpoint::load(ckpt.path()).unwrap();
    assert_eq!(loaded_config, config);
    assert_eq!(values(&loaded), values(&trained.store));
    let stats = |s: &gla_core::nn::ParamStore<f32>| s.stats().iter().map(|b| b.stats.clone()).collect::<Vec<_>>();
    assert_eq!(stats(&loaded), stats(&trained.store));
}

#[test]
fn mismatched_checkpoints_are_rejected() {
    let config = tiny(0);
    let ckpt = tempfile::tempdir().unwrap();
    let (_, store) = checkpoint::build(&config).unwrap();
    checkpoint::save(ckpt.path(), &config, &store).unwrap();
    let mut other = config.clone();
    other.model.channels = 8;
    std::fs::write(ckpt.path().join(checkpoint::CONFIG), other.to_text()).unwrap();
    assert!(matches!(checkpoint::load(ckpt.path()), Err(GlaError::Checkpoint(_))));
}

#[test]
fn same_seed_training_logs_are_identical() {
    let config = tiny(4);
    let (_data, ds) = dataset(&config);
    let frames = ds.load_split(Split::Train).unwrap();
    let a = train(&config, &frames, |_| {}).unwrap();
    let b = train(&config, &frames, |_| {}).unwrap();
    assert_eq!(format_log(&a.log), format_log(&b.log));
    assert_eq!(a.log.len(), 4);
    assert!(a.log.iter().all(|r| r.total.is_finite()));
}

#[test]
fn untrained_detector_scores_near_zero() {
    let mut config = tiny(0);
    config.data.frames_per_cell = 5;
    let (_data, ds) = dataset(&config);
    let frames = ds.load_split(Split::Test).unwrap();
    let (detector, mut store) = checkpoint::build(&config).unwrap();
    let dets = run_detector(&detector, &mut store, &frames).unwrap();
    let t = truths(&frames);
    let all: Vec<_> = t.iter().collect();
    let map = score_frames(&dets, &all, Level::Overall, &config.eval).map.unwrap_or(0.0);
    assert!(map < 0.05, "{map}");
}

#[test]
fn empty_training_set_is_an_error() {
    assert!(train(&tiny(2), &[], |_| {}).is_err());
}
