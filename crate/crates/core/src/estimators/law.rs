use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::engine::{Configuration, SiteState};
use crate::lattice::{LatticeBox, Site};
use crate::rng::SplitMix64;

/// Initial configurations. Every law places active particles only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    /// Fixed active particle counts at the listed sites.
    Deterministic { placements: Vec<(Site, u32)> },
    IidPoisson { rho: f64 },
    /// One particle per site with probability `rho <= 1`.
    IidBernoulli { rho: f64 },
    /// One active particle on the origin and each neighbor, `rest` elsewhere.
    FilledBall { rest: Box<InitialLaw> },
}

impl InitialLaw {
    pub fn delta_origin(d: usize) -> Self {
        InitialLaw::Deterministic {
            placements: vec![(Site::origin(d), 1)],
        }
    }

    pub fn empty() -> Self {
        InitialLaw::Deterministic { placements: vec![] }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        match self {
            InitialLaw::Deterministic { .. } => Ok(()),
            InitialLaw::IidPoisson { rho } if rho.is_finite() && *rho >= 0.0 => Ok(()),
            InitialLaw::IidBernoulli { rho } if (0.0..=1.0).contains(rho) => Ok(()),
            InitialLaw::FilledBall { rest } => rest.validate(),
            InitialLaw::IidPoisson { rho } => Err(EstimatorError::BadLaw(format!(
                "Poisson density must be finite and >= 0, got {rho}"
            ))),
            InitialLaw::IidBernoulli { rho } => Err(EstimatorError::BadLaw(format!(
                "Bernoulli density must lie in [0, 1], got {rho}"
            ))),
        }
    }

    /// Expected particles per site away from any deterministic placement.
    pub fn density(&self) -> Option<f64> {
        match self {
            InitialLaw::IidPoisson { rho } | InitialLaw::IidBernoulli { rho } => Some(*rho),
            _ => None,
        }
    }

    /// Checks that the law can be placed on `lattice`.
    pub fn check_fits(&self, lattice: &LatticeBox) -> Result<(), EstimatorError> {
        match self {
            InitialLaw::Deterministic { placements } => {
                for (x, _) in placements {
                    if !lattice.contains(x) {
                        return Err(EstimatorError::BadLaw(format!("placement {x} lies outside the box")));
                    }
                }
                Ok(())
            }
            InitialLaw::FilledBall { rest } => {
                if lattice.radius() == 0 {
                    return Err(EstimatorError::BadLaw("a filled ball needs box radius >= 1".into()));
                }
                rest.check_fits(lattice)
            }
            _ => Ok(()),
        }
    }

    /// Draws a configuration on `lattice`. Call [`check_fits`] first.
    ///
    /// [`check_fits`]: InitialLaw::check_fits
    pub fn sample(&self, lattice: &LatticeBox, rng: &mut SplitMix64) -> Configuration {
        let mut counts = vec![0u32; lattice.volume()];
        self.fill_counts(lattice, rng, &mut counts);
        let states = counts
            .into_iter()
            .map(|c| if c == 0 { SiteState::Empty } else { SiteState::Active(c) })
            .collect();
        Configuration::from_states(lattice.clone(), states).expect("state vector matches the box")
    }

    fn fill_counts(&self, lattice: &LatticeBox, rng: &mut SplitMix64, counts: &mut [u32]) {
        match self {
            InitialLaw::Deterministic { placements } => {
                for (x, c) in placements {
                    let i = lattice.index_of(x).expect("placement checked against the box");
                    counts[i] += c;
                }
            }
            InitialLaw::IidPoisson { rho } => {
                if *rho > 0.0 {
                    let dist = Poisson::new(*rho).expect("validated density");
                    for c in counts.iter_mut() {
                        *c = rng.sample(dist) as u32;
                    }
                }
            }
            InitialLaw::IidBernoulli { rho } => {
                for c in counts.iter_mut() {
                    *c = (rng.unit() < *rho) as u32;
                }
            }
            InitialLaw::FilledBall { rest } => {
                rest.fill_counts(lattice, rng, counts);
                for x in lattice.unit_ball() {
                    counts[lattice.index_of(&x).expect("radius >= 1")] = 1;
                }
            }
        }
    }
}

impl fmt::Display for InitialLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialLaw::Deterministic { placements } => match &placements[..] {
                [] => write!(f, "empty"),
                [(x, 1)] if x.is_origin() => write!(f, "delta"),
                _ => write!(f, "deterministic({} sites)", placements.len()),
            },
            InitialLaw::IidPoisson { rho } => write!(f, "poisson:{rho}"),
            InitialLaw::IidBernoulli { rho } => write!(f, "bernoulli:{rho}"),
            InitialLaw::FilledBall { rest } => write!(f, "filled:{rest}"),
        }
    }
}

/// Parses the compact law syntax used on the command line:
/// `delta`, `empty`, `poisson:RHO`, `bernoulli:RHO`, `filled` and
/// `filled:LAW`. Deterministic laws other than `delta`/`empty` need the
/// dimension, which is supplied separately through [`InitialLaw::for_dim`].
impl FromStr for InitialLaw {
    type Err = EstimatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let rho = |a: Option<&str>| -> Result<f64, EstimatorError> {
            a.ok_or_else(|| EstimatorError::BadLaw(format!("law '{s}' needs a density, e.g. {head}:0.5")))?
                .parse::<f64>()
                .map_err(|e| EstimatorError::BadLaw(format!("bad density in '{s}': {e}")))
        };
        let law = match head {
            "delta" if arg.is_none() => InitialLaw::Deterministic {
                placements: vec![(Site::new(vec![]), 1)],
            },
            "empty" if arg.is_none() => InitialLaw::empty(),
            "poisson" => InitialLaw::IidPoisson { rho: rho(arg)? },
            "bernoulli" => InitialLaw::IidBernoulli { rho: rho(arg)? },
            "filled" => InitialLaw::FilledBall {
                rest: Box::new(match arg {
                    Some(a) => a.parse()?,
                    None => InitialLaw::empty(),
                }),
            },
            _ => return Err(EstimatorError::BadLaw(format!("unknown law '{s}'"))),
        };
        law.validate()?;
        Ok(law)
    }
}

impl InitialLaw {
    /// Resolves dimension-free placeholders produced by parsing (`delta`).
    pub fn for_dim(self, d: usize) -> Self {
        match self {
            InitialLaw::Deterministic { placements } => InitialLaw::Deterministic {
                placements: placements
                    .into_iter()
                    .map(|(x, c)| if x.dim() == 0 { (Site::origin(d), c) } else { (x, c) })
                    .collect(),
            },
            InitialLaw::FilledBall { rest } => InitialLaw::FilledBall {
                rest: Box::new(rest.for_dim(d)),
            },
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_box;

    #[test]
    fn parse_and_display() {
        for text in ["delta", "empty", "poisson:0.4", "bernoulli:0.25", "filled:poisson:0.2", "filled:empty"] {
            let law: InitialLaw = text.parse::<InitialLaw>().unwrap().for_dim(2);
            assert_eq!(law.to_string(), text);
        }
        assert_eq!("filled".parse::<InitialLaw>().unwrap().to_string(), "filled:empty");
        assert!("bernoulli:1.5".parse::<InitialLaw>().is_err());
        assert!("poisson:-1".parse::<InitialLaw>().is_err());
        assert!("poisson".parse::<InitialLaw>().is_err());
        assert!("gauss:1".parse::<InitialLaw>().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let law = InitialLaw::FilledBall {
            rest: Box::new(InitialLaw::IidPoisson { rho: 0.3 }),
        };
        let text = serde_json::to_string(&law).unwrap();
        assert_eq!(serde_json::from_str::<InitialLaw>(&text).unwrap(), law);
    }

    #[test]
    fn poisson_mean_density() {
        let lattice = make_box(2, 10).unwrap();
        let law = InitialLaw::IidPoisson { rho: 0.7 };
        let mut rng = SplitMix64::new(3);
        let mut total = 0;
        for _ in 0..200 {
            let cfg = law.sample(&lattice, &mut rng);
            assert!(cfg.is_all_active());
            total += cfg.particles();
        }
        let mean = total as f64 / (200.0 * 441.0);
        // SE = sqrt(0.7 / 88200) = 0.0028.
        assert!((mean - 0.7).abs() < 0.012, "{mean}");
    }

    #[test]
    fn filled_ball_overrides_centre() {
        let lattice = make_box(3, 2).unwrap();
        let law = InitialLaw::FilledBall {
            rest: Box::new(InitialLaw::IidPoisson { rho: 2.0 }),
        };
        let mut rng = SplitMix64::new(1);
        for _ in 0..20 {
            let cfg = law.sample(&lattice, &mut rng);
            assert!(lattice.unit_ball().iter().all(|x| cfg.fills(x)));
        }
        assert!(law.check_fits(&make_box(3, 0).unwrap()).is_err());
    }

    #[test]
    fn placements_must_fit() {
        let law = InitialLaw::Deterministic {
            placements: vec![(Site::new(vec![3]), 1)],
        };
        assert!(law.check_fits(&make_box(1, 2).unwrap()).is_err());
        assert!(law.check_fits(&make_box(1, 3).unwrap()).is_ok());
    }
}
