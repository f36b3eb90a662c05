use crate::domain::{Daytime, Modality, Weather};

/// Scene geometry and sensor degradation constants of the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub height: usize,
    pub width: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Pixels per meter of object size at one meter distance.
    pub focal_px: f64,
    pub horizon_row: f64,
    /// Visibility in meters, indexed like [`Weather::ALL`].
    pub visibility: [f64; 4],
    /// Lidar speckle density per pixel, indexed like [`Weather::ALL`].
    pub clutter_rate: [f64; 4],
    pub night_gain: f64,
    pub noise_sigma: f64,
    /// Class sampling prior, indexed by class id.
    pub class_prior: [f64; 4],
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            height: 60,
            width: 120,
            min_objects: 1,
            max_objects: 6,
            focal_px: 180.0,
            horizon_row: 26.0,
            visibility: [1000.0, 120.0, 40.0, 200.0],
            clutter_rate: [0.0, 0.05, 0.15, 0.25],
            night_gain: 0.3,
            noise_sigma: 0.02,
            class_prior: [0.55, 0.2, 0.1, 0.15],
        }
    }
}

/// Range gates of the gated camera in meters, one per channel.
pub const GATES: [(f64, f64); 3] = [(0.0, 20.0), (15.0, 45.0), (40.0, 80.0)];
pub const MIN_DISTANCE: f64 = 5.0;
pub const MAX_DISTANCE: f64 = 80.0;

/// Physical height and width in meters per class.
pub const CLASS_SIZE: [(f64, f64); 4] = [(1.5, 2.5), (1.75, 0.6), (3.2, 6.0), (1.6, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherParams {
    pub visibility: f64,
    pub clutter_rate: f64,
    pub night_gain: f64,
}

impl SimConfig {
    pub fn weather(&self, weather: Weather) -> WeatherParams {
        let i = Weather::ALL.iter().position(|&w| w == weather).expect("known weather");
        WeatherParams {
            visibility: self.visibility[i],
            clutter_rate: self.clutter_rate[i],
            night_gain: self.night_gain,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.height < 8 || self.width < 8 {
            return Err(format!("image {}x{} is too small", self.height, self.width));
        }
        if self.min_objects > self.max_objects {
            return Err("min_objects exceeds max_objects".into());
        }
        if self.visibility.iter().any(|&v| !(v > 0.0)) {
            return Err("visibility must be positive".into());
        }
        if self.clutter_rate.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err("clutter rate must lie in [0, 1]".into());
        }
        if !(self.night_gain > 0.0 && self.night_gain <= 1.0) {
            return Err("night_gain must lie in (0, 1]".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return Err("noise_sigma must be nonnegative".into());
        }
        let total: f64 = self.class_prior.iter().sum();
        if self.class_prior.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err("class prior must be nonnegative and sum to 1".into());
        }
        Ok(())
    }
}

impl WeatherParams {
    /// Distance at which a sensor's signal falls to `1/e`.
    pub fn effective_visibility(&self, modality: Modality, daytime: Daytime) -> f64 {
        match (modality, daytime) {
            (Modality::Camera, Daytime::Night) => self.visibility * self.night_gain,
            (Modality::Camera, Daytime::Day) | (Modality::Lidar, _) => self.visibility,
            (Modality::Gated, _) => 3.0 * self.visibility,
        }
    }

    /// Fraction of an object's base contrast surviving at `distance`.
    pub fn attenuation(&self, modality: Modality, daytime: Daytime, distance: f64) -> f64 {
        (-distance / self.effective_visibility(modality, daytime)).exp()
    }
}
