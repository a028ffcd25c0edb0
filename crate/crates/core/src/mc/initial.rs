use rand::Rng;
use serde::Serialize;

use super::McError;
use crate::eigen::QsdDensity;
use crate::numeric::quad::cumulative_trapezoid;

/// Initial law; every variant has compact support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InitialLaw {
    Point(f64),
    /// Piecewise-linear density through `(grid[i], density[i])`.
    Density { grid: Vec<f64>, density: Vec<f64> },
    /// Path `i` starts at `points[i mod len]`.
    Sample(Vec<f64>),
}

impl InitialLaw {
    /// The QSD restricted to `[0, z]` and renormalized.
    pub fn truncated_qsd(qsd: &QsdDensity, z: f64) -> Result<Self, McError> {
        let mut grid = Vec::new();
        let mut density = Vec::new();
        for (&x, &d) in qsd.grid.iter().zip(&qsd.density) {
            if x > z {
                break;
            }
            grid.push(x);
            density.push(d);
        }
        if grid.last().is_some_and(|&x| x < z) {
            density.push(qsd.at(z));
            grid.push(z);
        }
        let mass = *cumulative_trapezoid(&grid, &density).last().unwrap_or(&0.0);
        if !(mass > 0.0) {
            return Err(McError::InvalidConfig(format!("QSD has no mass on [0, {z}]")));
        }
        density.iter_mut().for_each(|d| *d /= mass);
        Ok(InitialLaw::Density { grid, density })
    }

    pub(crate) fn validate(&self) -> Result<(), McError> {
        match self {
            InitialLaw::Point(x) if !x.is_finite() => Err(McError::InvalidConfig(format!("start {x} is not finite"))),
            InitialLaw::Point(_) => Ok(()),
            InitialLaw::Sample(v) if v.is_empty() || v.iter().any(|x| !x.is_finite()) => {
                Err(McError::InvalidConfig("sample must be nonempty and finite".into()))
            }
            InitialLaw::Sample(_) => Ok(()),
            InitialLaw::Density { grid, density } => {
                if grid.len() < 2 || grid.len() != density.len() || grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(McError::InvalidConfig("density grid must be increasing with matching values".into()));
                }
                if !grid.iter().all(|x| x.is_finite()) || density.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
                    return Err(McError::InvalidConfig("density must be finite and nonnegative".into()));
                }
                let mass = *cumulative_trapezoid(grid, density).last().unwrap();
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(McError::InvalidConfig(format!("density integrates to {mass}, not 1")));
                }
                Ok(())
            }
        }
    }

    /// Smallest and largest possible starting points.
    pub(crate) fn support(&self) -> (f64, f64) {
        match self {
            InitialLaw::Point(x) => (*x, *x),
            InitialLaw::Density { grid, .. } => (grid[0], *grid.last().unwrap()),
            InitialLaw::Sample(v) => v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x))),
        }
    }

    pub(crate) fn sampler(&self) -> Sampler<'_> {
        match self {
            InitialLaw::Density { grid, density } => Sampler::Density { grid, density, cdf: cumulative_trapezoid(grid, density) },
            _ => Sampler::Plain(self),
        }
    }
}

pub(crate) enum Sampler<'a> {
    Plain(&'a InitialLaw),
    Density { grid: &'a [f64], density: &'a [f64], cdf: Vec<f64> },
}

impl Sampler<'_> {
    pub fn draw<R: Rng>(&self, path: usize, rng: &mut R) -> f64 {
        match self {
            Sampler::Plain(InitialLaw::Point(x)) => *x,
            Sampler::Plain(InitialLaw::Sample(v)) => v[path % v.len()],
            Sampler::Plain(InitialLaw::Density { .. }) => unreachable!("densities use the tabulated sampler"),
            Sampler::Density { grid, density, cdf } => {
                let target = rng.random::<f64>() * cdf[cdf.len() - 1];
                let i = cdf.partition_point(|&c| c <= target).clamp(1, cdf.len() - 1) - 1;
                let h = grid[i + 1] - grid[i];
                let (d0, d1) = (density[i], density[i + 1]);
                let need = target - cdf[i];
                // Solve d0·s + (d1 − d0)s²/(2h) = need on [0, h].
                let slope = (d1 - d0) / h;
                let s = if slope.abs() < 1e-14 * (d0 + d1).max(1e-300) {
                    if d0 > 0.0 { need / d0 } else { 0.5 * h }
                } else {
                    (2.0 * need) / (d0 + (d0 * d0 + 2.0 * slope * need).max(0.0).sqrt())
                };
                grid[i] + s.clamp(0.0, h)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn density_sampler_matches_triangle() {
        // Density 2x on [0, 1]: P{X ≤ ½} = ¼.
        let law = InitialLaw::Density { grid: vec![0.0, 1.0], density: vec![0.0, 2.0] };
        law.validate().unwrap();
        let s = law.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let below = (0..n).filter(|&i| s.draw(i, &mut rng) <= 0.5).count();
        let p = below as f64 / n as f64;
        assert!((p - 0.25).abs() < 4.0 * (0.25 * 0.75 / n as f64).sqrt(), "p = {p}");
    }

    #[test]
    fn rejects_unnormalized_density() {
        let law = InitialLaw::Density { grid: vec![0.0, 1.0], density: vec![1.0, 2.0] };
        assert!(law.validate().is_err());
    }
}
