//! Synthetic camera / gated / lidar frames under four weathers and two daytimes.

pub mod dataset;
pub mod params;
pub mod render;
pub mod rng;
pub mod scene;

pub use dataset::{make_dataset, plan_frames, Dataset, DatasetSpec, FrameData, FrameInfo, Manifest, Split};
pub use params::{SimConfig, WeatherParams};
pub use render::{render_modalities, RenderedFrame};
pub use rng::keyed_rng;
pub use scene::{difficulty_of, sample_scene, SceneObject};
