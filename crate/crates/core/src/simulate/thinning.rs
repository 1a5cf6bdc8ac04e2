//! Ogata thinning with a piecewise-constant dominating rate.

use std::collections::VecDeque;

use rand::Rng;

use super::cluster::uniform;
use super::events::EventStream;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::scalar::Scalar;

/// Intensity vector at `t` given the events in `window` (all within `A` of `t`).
pub fn intensity_at<T: Scalar>(model: &ModelSpec<T>, horizon: T, window: &VecDeque<(T, usize)>, t: T, out: &mut [T]) {
    let x = t / horizon;
    for (l, v) in out.iter_mut().enumerate() {
        *v = model.baseline_at(l, x);
    }
    for &(s, m) in window {
        let lag = t - s;
        for (l, v) in out.iter_mut().enumerate() {
            *v += model.kernel_entry(l, m, lag, x);
        }
    }
}

/// Simulates on `[-warmup, horizon]` by thinning.
///
/// The dominating rate `sum_l [sup nu^{(l)} + sum_m sup mu^{(l,m)} N^{(m)}(t - A, t]]`
/// is recomputed after every accepted event and whenever the oldest event in
/// the trailing window expires.
pub fn simulate_thinning<T: Scalar, R: Rng + ?Sized>(
    model: &ModelSpec<T>,
    horizon: T,
    warmup: T,
    rng: &mut R,
) -> Result<EventStream<T>> {
    let d = model.dim();
    let a = model.support();
    let start = -warmup;
    let nu_bar: T = (0..d).map(|l| model.baseline_sup(l)).sum();
    // Column sums of the kernel maxima: excitation bound per parent type.
    let jump: Vec<T> = (0..d)
        .map(|m| (0..d).map(|l| model.envelope_max(l, m)).sum())
        .collect();
    let slack = T::one() + T::lit(1e-12);

    let mut window: VecDeque<(T, usize)> = VecDeque::new();
    let mut events: Vec<(T, usize)> = Vec::new();
    let mut lambda = vec![T::zero(); d];
    let mut t = start;
    loop {
        while let Some(&(s, _)) = window.front() {
            if s + a <= t {
                window.pop_front();
            } else {
                break;
            }
        }
        let bound = nu_bar + window.iter().map(|&(_, m)| jump[m]).sum::<T>();
        if bound <= T::zero() {
            break;
        }
        let wait = -(T::one() - uniform::<T, _>(rng)).ln() / bound;
        let candidate = t + wait;
        if let Some(&(s, _)) = window.front() {
            let expiry = s + a;
            if candidate >= expiry {
                // The bound drops at the expiry; restart from there.
                t = expiry;
                continue;
            }
        }
        if candidate > horizon {
            break;
        }
        t = candidate;
        intensity_at(model, horizon, &window, t, &mut lambda);
        let total: T = lambda.iter().copied().sum();
        if total > bound * slack {
            return Err(Error::DominatingRate {
                time: t.as_f64(),
                ratio: (total / bound).as_f64(),
            });
        }
        let u = uniform::<T, _>(rng) * bound;
        if u < total {
            let mut acc = T::zero();
            let mut chosen = d - 1;
            for (l, &v) in lambda.iter().enumerate() {
                acc += v;
                if u < acc {
                    chosen = l;
                    break;
                }
            }
            window.push_back((t, chosen));
            events.push((t, chosen));
        }
    }
    EventStream::from_unsorted(d, horizon, start, events)
}
