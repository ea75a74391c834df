//! Benchmark dose-response scenarios and the standard nine-dose grid.

use std::fmt;
use std::str::FromStr;

use crate::cr_model::ThetaParams;
use crate::Error;

/// Default target toxicity level.
pub const DEFAULT_GAMMA: f64 = 0.2;
/// Default neutral-outcome threshold for the minimum efficacious dose.
pub const DEFAULT_DELTA: f64 = 0.2;

/// The standard nine log-doses (0.3 mg to 320 mg on the raw scale).
pub fn standard_grid() -> Vec<f64> {
    vec![-1.20, -0.23, 0.92, 2.02, 3.00, 3.69, 4.38, 5.08, 5.77]
}

/// Four benchmark dose-response scenarios: narrow, wide, safe, and unsafe
/// therapeutic windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    A,
    B,
    C,
    D,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D];

    pub fn theta(self) -> ThetaParams {
        let (t1, t2, t3, t4) = match self {
            Scenario::A => (0.855, 0.566, -5.768, 1.0),
            Scenario::B => (2.017, 2.827, -11.537, 2.0),
            Scenario::C => (-3.539, 1.124, -26.618, 3.674),
            Scenario::D => (1.437, 0.125, -1.525, 1.227),
        };
        ThetaParams { theta1: t1, theta2: t2, theta3: t3, theta4: t4 }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Scenario::A => 'A',
            Scenario::B => 'B',
            Scenario::C => 'C',
            Scenario::D => 'D',
        };
        write!(f, "{c}")
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            "D" => Ok(Scenario::D),
            other => Err(Error::InvalidConfig(format!("unknown scenario '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_satisfy_model_restrictions() {
        for s in Scenario::ALL {
            s.theta().validate().unwrap();
        }
    }

    #[test]
    fn grid_is_strictly_increasing() {
        let g = standard_grid();
        assert_eq!(g.len(), 9);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn parse_roundtrip() {
        for s in Scenario::ALL {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
        assert!("E".parse::<Scenario>().is_err());
    }
}
