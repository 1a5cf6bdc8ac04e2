//! Branching (cluster) construction: Poisson immigrants plus recursive
//! Poisson offspring.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::events::EventStream;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::scalar::Scalar;

/// Population size beyond which a run is aborted.
pub const RUNAWAY_LIMIT: usize = 10_000_000;
/// Proposals without an acceptance before [`sample_offspring_offset`] gives up.
pub const STALL_LIMIT: usize = 1_000_000;

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    draw as usize
}

#[inline]
pub(crate) fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.random::<f64>())
}

/// Draws the lag of a type-`l` child of a type-`m` parent born at rescaled
/// time `x`, from the density proportional to `mu^{(l,m)}(s, x + s / T)`.
///
/// Proposals come from the dominating kernel `sup_x mu^{(l,m)}(s, x)` and are
/// accepted with probability `mu / sup_x mu`. Returns the lag and the number
/// of proposals used.
pub fn sample_offspring_offset<T: Scalar, R: Rng + ?Sized>(
    model: &ModelSpec<T>,
    l: usize,
    m: usize,
    x: T,
    horizon: T,
    rng: &mut R,
) -> Result<(T, usize)> {
    let slack = T::one() + T::lit(1e-12);
    for proposals in 1..=STALL_LIMIT {
        let s = model.sample_shape(l, m, rng);
        let envelope = model.envelope(l, m, s);
        let value = model.kernel_entry(l, m, s, x + s / horizon);
        if value > envelope * slack {
            return Err(Error::EnvelopeViolation {
                l,
                m,
                lag: s.as_f64(),
                value: value.as_f64(),
                envelope: envelope.as_f64(),
            });
        }
        if uniform::<T, _>(rng) * envelope < value {
            return Ok((s, proposals));
        }
    }
    Err(Error::SamplerStalled { proposals: STALL_LIMIT })
}

/// Simulates on `[-warmup, horizon]` by the cluster construction.
///
/// Immigrants of type `m` arrive at rate `nu^{(m)}(t / T)`. A type-`m`
/// individual born at `S` has a Poisson number of type-`l` children whose
/// birth times follow the intensity `mu^{(l,m)}(t - S, t / T)` on
/// `(S, S + A)`. The children are realized by Poisson thinning of the
/// dominating offspring process, which reproduces this law exactly.
pub fn simulate_cluster<T: Scalar, R: Rng + ?Sized>(
    model: &ModelSpec<T>,
    horizon: T,
    warmup: T,
    rng: &mut R,
) -> Result<EventStream<T>> {
    let d = model.dim();
    let start = -warmup;
    let span = horizon - start;
    let mut population: Vec<(T, usize)> = Vec::new();

    for m in 0..d {
        let rate = model.baseline_sup(m);
        let n = poisson((rate * span).as_f64(), rng);
        for _ in 0..n {
            let t = start + uniform::<T, _>(rng) * span;
            if uniform::<T, _>(rng) * rate < model.baseline_at(m, t / horizon) {
                population.push((t, m));
            }
        }
    }

    let mut masses = vec![vec![T::zero(); d]; d];
    for (l, row) in masses.iter_mut().enumerate() {
        for (m, v) in row.iter_mut().enumerate() {
            *v = model.amplitude_sup(l, m) * model.shape_mass(l, m);
        }
    }

    // Every individual in `population[next..]` still has to reproduce.
    let mut next = 0;
    while next < population.len() {
        let (parent, m) = population[next];
        next += 1;
        for l in 0..d {
            let mass = masses[l][m];
            if mass <= T::zero() {
                continue;
            }
            let a_sup = model.amplitude_sup(l, m);
            for _ in 0..poisson(mass.as_f64(), rng) {
                let s = model.sample_shape(l, m, rng);
                let t = parent + s;
                let u = uniform::<T, _>(rng);
                if t > horizon || s <= T::zero() {
                    continue;
                }
                if u * a_sup < model.amplitude(l, m, t / horizon) {
                    population.push((t, l));
                }
            }
        }
        if population.len() > RUNAWAY_LIMIT {
            return Err(Error::Runaway { limit: RUNAWAY_LIMIT });
        }
    }

    EventStream::from_unsorted(d, horizon, start, population)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, Family, ModelConfig};
    use crate::simulate::RngStream;

    #[test]
    fn zero_baseline_gives_empty_stream() {
        let cfg = ModelConfig {
            d: 1,
            support: 1.0,
            horizon: 100.0,
            family: Family::Constant {
                nu: vec![0.0],
                kernel_height: Some(vec![vec![0.5]]),
            },
        };
        let model = ModelSpec::<f64>::new_unchecked(cfg).unwrap();
        let s = simulate_cluster(&model, 100.0, 20.0, &mut RngStream::new(1, 0).rng()).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn poisson_counts() {
        let model = ModelSpec::<f64>::new(presets::poisson()).unwrap();
        let reps = 200;
        let total: usize = (0..reps)
            .map(|r| {
                simulate_cluster(&model, 1000.0, 0.0, &mut RngStream::new(11, r).rng())
                    .unwrap()
                    .observed()
                    .count()
            })
            .sum();
        let mean = total as f64 / reps as f64;
        assert!((mean - 1000.0).abs() < 4.0 * (1000.0f64 / reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn constant_amplitude_is_accepted_immediately() {
        let model = ModelSpec::<f64>::new(presets::piecewise()).unwrap();
        let mut rng = RngStream::new(5, 0).rng();
        for _ in 0..100 {
            let (_, n) = sample_offspring_offset(&model, 0, 0, 0.3, 1000.0, &mut rng).unwrap();
            assert_eq!(n, 1);
        }
    }

    #[test]
    fn piecewise_offsets_follow_closed_form_cdf() {
        let model = ModelSpec::<f64>::new(presets::piecewise()).unwrap();
        let mut rng = RngStream::new(9, 0).rng();
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_offspring_offset(&model, 0, 0, 0.5, 1000.0, &mut rng).unwrap().0)
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Density 0.6 on [0, 0.5), 0.2 on [0.5, 1), mass 0.4.
        let cdf = |s: f64| {
            if s < 0.5 {
                0.6 * s / 0.4
            } else {
                (0.3 + 0.2 * (s - 0.5)) / 0.4
            }
        };
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let f = cdf(s);
                (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "{ks}");
    }

    #[test]
    fn ramp_acceptance_rate() {
        // amplitude 0.4 + 0.2 x: at x = 0 the acceptance rate is close to
        // a(0) / sup a = 2/3 when T is large.
        let model = ModelSpec::<f64>::new(presets::exp_tv()).unwrap();
        let mut rng = RngStream::new(21, 0).rng();
        let n = 20_000;
        let proposals: usize = (0..n)
            .map(|_| sample_offspring_offset(&model, 0, 0, 0.0, 1e6, &mut rng).unwrap().1)
            .sum();
        let rate = n as f64 / proposals as f64;
        assert!((rate - 2.0 / 3.0).abs() < 0.015, "{rate}");
    }
}
