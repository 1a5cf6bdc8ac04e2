//! Marked event streams and their text file format.
//!
//! ```text
//! # hawkes-events v1 d=2 T=1000
//! # warmup_start=-60 seed=7 stream=0
//! -59.871234001,2
//! 0.125000000,1
//! ```
//!
//! Components are 1-based in files and 0-based in memory. Times are written
//! with nine decimals.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const EVENTS_HEADER: &str = "# hawkes-events v1";
/// Minimal separation between consecutive events.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Time-ordered events `(t, m)` on `[warmup_start, T]`; events at negative
/// times are history preceding the observation window `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream<T> {
    pub d: usize,
    pub horizon: T,
    pub warmup_start: T,
    pub times: Vec<T>,
    pub components: Vec<usize>,
    pub seed: Option<u64>,
    pub stream: Option<u64>,
}

impl<T: Scalar> EventStream<T> {
    pub fn empty(d: usize, horizon: T, warmup_start: T) -> Self {
        Self {
            d,
            horizon,
            warmup_start,
            times: Vec::new(),
            components: Vec::new(),
            seed: None,
            stream: None,
        }
    }

    /// Builds a stream from unordered events, sorting them and checking the
    /// invariants.
    pub fn from_unsorted(d: usize, horizon: T, warmup_start: T, mut events: Vec<(T, usize)>) -> Result<Self> {
        events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("event times are finite"));
        let mut s = Self::empty(d, horizon, warmup_start);
        s.times = events.iter().map(|e| e.0).collect();
        s.components = events.iter().map(|e| e.1).collect();
        s.check()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, usize)> + '_ {
        self.times.iter().copied().zip(self.components.iter().copied())
    }

    /// Strict ordering, separation, component range and time range.
    pub fn check(&self) -> Result<()> {
        if self.times.len() != self.components.len() {
            return Err(Error::EventStream("times and components differ in length".into()));
        }
        let tie = T::lit(TIE_TOLERANCE);
        for (i, (&t, &m)) in self.times.iter().zip(&self.components).enumerate() {
            if !t.is_finite() {
                return Err(Error::EventStream(format!("event {i} has a non-finite time")));
            }
            if m >= self.d {
                return Err(Error::EventStream(format!(
                    "event {i} has component {} outside 1..={}",
                    m + 1,
                    self.d
                )));
            }
            if t < self.warmup_start || t > self.horizon {
                return Err(Error::EventStream(format!(
                    "event {i} at {t} outside [{}, {}]",
                    self.warmup_start, self.horizon
                )));
            }
            if i > 0 {
                let prev = self.times[i - 1];
                if t < prev {
                    return Err(Error::EventStream(format!("event {i} at {t} precedes {prev}")));
                }
                if t - prev <= tie {
                    return Err(Error::EventStream(format!("events {} and {i} tie at {t}", i - 1)));
                }
            }
        }
        Ok(())
    }

    /// Index of the first event with time `>= t`.
    pub fn lower_bound(&self, t: T) -> usize {
        self.times.partition_point(|&s| s < t)
    }

    /// Index of the first event with time `> t`.
    pub fn upper_bound(&self, t: T) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    /// Number of events of component `m` in `[a, b)`.
    pub fn count_in(&self, m: usize, a: T, b: T) -> usize {
        let (lo, hi) = (self.lower_bound(a), self.lower_bound(b));
        self.components[lo..hi.max(lo)].iter().filter(|&&c| c == m).count()
    }

    /// Events inside the observation window `[0, T]`.
    pub fn observed(&self) -> impl Iterator<Item = (T, usize)> + '_ {
        let lo = self.lower_bound(T::zero());
        self.iter().skip(lo)
    }

    /// Copy with every event outside `[a, b]` removed.
    pub fn restricted(&self, a: T, b: T) -> Self {
        let (lo, hi) = (self.lower_bound(a), self.upper_bound(b));
        Self {
            times: self.times[lo..hi].to_vec(),
            components: self.components[lo..hi].to_vec(),
            ..self.clone()
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(24 * (self.len() + 2));
        writeln!(out, "{EVENTS_HEADER} d={} T={}", self.d, self.horizon.as_f64()).unwrap();
        write!(out, "# warmup_start={}", self.warmup_start.as_f64()).unwrap();
        if let Some(seed) = self.seed {
            write!(out, " seed={seed}").unwrap();
        }
        if let Some(stream) = self.stream {
            write!(out, " stream={stream}").unwrap();
        }
        out.push('\n');
        for (t, m) in self.iter() {
            writeln!(out, "{:.9},{}", t.as_f64(), m + 1).unwrap();
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => return Err(Error::EventStream("empty event file".into())),
        };
        let rest = header
            .trim_end()
            .strip_prefix(EVENTS_HEADER)
            .ok_or_else(|| Error::EventStream(format!("missing `{EVENTS_HEADER}` header")))?;
        let (mut d, mut horizon) = (None, None);
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("d", v)) => d = v.parse::<usize>().ok(),
                Some(("T", v)) => horizon = v.parse::<f64>().ok(),
                _ => return Err(Error::EventStream(format!("unexpected header field `{field}`"))),
            }
        }
        let d = d.filter(|&d| d > 0).ok_or_else(|| Error::EventStream("header lacks a valid d".into()))?;
        let horizon = horizon
            .filter(|t| *t > 0.0 && t.is_finite())
            .ok_or_else(|| Error::EventStream("header lacks a valid T".into()))?;

        let (mut warmup, mut seed, mut stream) = (None, None, None);
        let mut times = Vec::new();
        let mut components = Vec::new();
        for (no, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                for field in comment.split_whitespace() {
                    match field.split_once('=') {
                        Some(("warmup_start", v)) => warmup = v.parse::<f64>().ok(),
                        Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                        Some(("stream", v)) => stream = v.parse::<u64>().ok(),
                        _ => {}
                    }
                }
                continue;
            }
            let bad = || Error::EventStream(format!("line {}: expected `time,component`, got `{line}`", no + 1));
            let (t, m) = line.split_once(',').ok_or_else(bad)?;
            let t: f64 = t.trim().parse().map_err(|_| bad())?;
            let m: usize = m.trim().parse().map_err(|_| bad())?;
            if m == 0 {
                return Err(bad());
            }
            times.push(T::lit(t));
            components.push(m - 1);
        }
        let warmup_start = warmup.unwrap_or_else(|| times.first().map_or(0.0, |t| t.as_f64().min(0.0)));
        let stream = Self {
            d,
            horizon: T::lit(horizon),
            warmup_start: T::lit(warmup_start),
            times,
            components,
            seed,
            stream,
        };
        stream.check()?;
        Ok(stream)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
