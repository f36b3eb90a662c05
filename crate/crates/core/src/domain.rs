//! Shared vocabulary: sensor modalities, weather, daytime, object classes, difficulty.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Camera,
    Gated,
    Lidar,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Camera, Modality::Gated, Modality::Lidar];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Camera => "camera",
            Modality::Gated => "gated",
            Modality::Lidar => "lidar",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "camera" => Ok(Modality::Camera),
            "gated" => Ok(Modality::Gated),
            "lidar" => Ok(Modality::Lidar),
            other => Err(format!("unknown modality '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Weather {
    Clear,
    LightFog,
    DenseFog,
    Snow,
}

impl Weather {
    pub const ALL: [Weather; 4] = [Weather::Clear, Weather::LightFog, Weather::DenseFog, Weather::Snow];

    pub fn as_str(self) -> &'static str {
        match self {
            Weather::Clear => "clear",
            Weather::LightFog => "light_fog",
            Weather::DenseFog => "dense_fog",
            Weather::Snow => "snow",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Weather::Clear => "Clear",
            Weather::LightFog => "LightFog",
            Weather::DenseFog => "DenseFog",
            Weather::Snow => "Snow",
        }
    }

    pub fn is_adverse(self) -> bool {
        self != Weather::Clear
    }
}

impl FromStr for Weather {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Weather::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| format!("unknown weather '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Daytime {
    Day,
    Night,
}

impl Daytime {
    pub const ALL: [Daytime; 2] = [Daytime::Day, Daytime::Night];

    pub fn as_str(self) -> &'static str {
        match self {
            Daytime::Day => "day",
            Daytime::Night => "night",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Daytime::Day => "Day",
            Daytime::Night => "Night",
        }
    }
}

impl FromStr for Daytime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(Daytime::Day),
            "night" => Ok(Daytime::Night),
            other => Err(format!("unknown daytime '{other}'")),
        }
    }
}

/// KITTI-style difficulty, ordered from easiest to hardest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
        }
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "moderate" => Ok(Difficulty::Moderate),
            "hard" => Ok(Difficulty::Hard),
            other => Err(format!("unknown difficulty '{other}'")),
        }
    }
}

pub const NUM_CLASSES: usize = 4;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["PassengerCar", "Pedestrian", "LargeVehicle", "RidableVehicle"];
