use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Discharge forcing sampled at strictly increasing times.
///
/// Between samples the discharge is linear; outside the sampled window it is
/// held at the first/last value.
#[derive(Clone, Debug, PartialEq)]
pub struct Hydrograph {
    samples: Vec<(f64, f64)>,
}

impl Hydrograph {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::config("hydrograph has no samples"));
        }
        let mut problems = Vec::new();
        for (k, w) in samples.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                problems.push(format!("hydrograph times must increase strictly (sample {})", k + 1));
            }
        }
        for (k, &(t, q)) in samples.iter().enumerate() {
            if !t.is_finite() || !q.is_finite() || q < 0.0 {
                problems.push(format!("hydrograph sample {k} ({t}, {q}) must be finite with Q >= 0"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(Hydrograph { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Discharge at time `t`.
    pub fn at(&self, t: f64) -> f64 {
        let s = &self.samples;
        if t <= s[0].0 {
            return s[0].1;
        }
        let last = s[s.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let k = s.partition_point(|&(ts, _)| ts <= t);
        let (t0, q0) = s[k - 1];
        let (t1, q1) = s[k];
        if t == t0 {
            return q0;
        }
        q0 + (q1 - q0) * (t - t0) / (t1 - t0)
    }

    /// Exact integral of the discharge over `[t0, t1]` (m³).
    pub fn volume_between(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        // breakpoints strictly inside the interval, integrated piecewise with the trapezoid rule
        let mut acc = 0.0;
        let mut a = t0;
        let mut qa = self.at(t0);
        for &(ts, qs) in &self.samples {
            if ts > t0 && ts < t1 {
                acc += 0.5 * (qa + qs) * (ts - a);
                a = ts;
                qa = qs;
            }
        }
        acc + 0.5 * (qa + self.at(t1)) * (t1 - a)
    }

    pub fn peak(&self) -> (f64, f64) {
        self.samples
            .iter()
            .copied()
            .fold((self.samples[0].0, f64::NEG_INFINITY), |best, s| if s.1 > best.1 { s } else { best })
    }
}

/// Reads a two-column CSV `t,Q`. A non-numeric first row is treated as the header.
pub fn read_hydrograph(path: impl AsRef<Path>) -> Result<Hydrograph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut samples = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match cols.as_slice() {
            [t, q] => t.parse::<f64>().ok().zip(q.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(s) => samples.push(s),
            None if samples.is_empty() && no == 0 => continue,
            None => {
                return Err(Error::Parse { path: name, line: no + 1, msg: format!("expected `t,Q`, found `{line}`") })
            }
        }
    }
    Hydrograph::new(samples)
}

pub fn write_hydrograph(h: &Hydrograph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("t,Q\n");
    for &(t, q) in h.samples() {
        let _ = writeln!(out, "{t:?},{q:?}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interpolates_between_samples() {
        let h = Hydrograph::new(vec![(0.0, 0.0), (3600.0, 3000.0)]).unwrap();
        assert_eq!(h.at(1800.0), 1500.0);
        assert_eq!(h.at(3600.0), 3000.0);
        assert_eq!(h.at(0.0), 0.0);
    }

    #[test]
    fn clamps_outside_range() {
        let h = Hydrograph::new(vec![(10.0, 5.0), (20.0, 7.0)]).unwrap();
        assert_eq!(h.at(-100.0), 5.0);
        assert_eq!(h.at(1e9), 7.0);
    }

    #[test]
    fn sample_times_are_exact() {
        let h = Hydrograph::new(vec![(0.0, 1.0), (0.3, 2.0), (0.7, 0.1), (1.1, 9.0)]).unwrap();
        for &(t, q) in h.samples() {
            assert_eq!(h.at(t), q);
        }
    }

    #[test]
    fn empty_and_unordered_are_config_errors() {
        assert!(matches!(Hydrograph::new(vec![]), Err(Error::Config(_))));
        assert!(matches!(Hydrograph::new(vec![(1.0, 0.0), (1.0, 2.0)]), Err(Error::Config(_))));
        assert!(matches!(Hydrograph::new(vec![(0.0, -1.0)]), Err(Error::Config(_))));
    }

    #[test]
    fn volume_of_triangle() {
        let h = Hydrograph::new(vec![(0.0, 0.0), (100.0, 10.0), (200.0, 0.0)]).unwrap();
        assert!((h.volume_between(0.0, 200.0) - 1000.0).abs() < 1e-9);
        assert!((h.volume_between(-50.0, 300.0) - 1000.0).abs() < 1e-9);
        // additive over a split that straddles the peak
        let v = h.volume_between(0.0, 130.0) + h.volume_between(130.0, 200.0);
        assert!((v - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.csv");
        let h = Hydrograph::new(vec![(0.0, 0.0), (60.0, 12.5), (120.0, 0.25)]).unwrap();
        write_hydrograph(&h, &p).unwrap();
        assert_eq!(read_hydrograph(&p).unwrap(), h);
    }

    proptest! {
        #[test]
        fn monotone_between_samples_and_continuous(
            q in proptest::collection::vec(0.0f64..100.0, 2..8),
            frac in 0.0f64..1.0,
        ) {
            let samples: Vec<_> = q.iter().enumerate().map(|(k, &q)| (k as f64 * 10.0, q)).collect();
            let h = Hydrograph::new(samples.clone()).unwrap();
            for w in samples.windows(2) {
                let t = w[0].0 + frac * (w[1].0 - w[0].0);
                let v = h.at(t);
                prop_assert!(v >= w[0].1.min(w[1].1) - 1e-12 && v <= w[0].1.max(w[1].1) + 1e-12);
                // continuity at the right end of the segment
                prop_assert!((h.at(w[1].0 - 1e-9) - w[1].1).abs() < 1e-6);
            }
        }
    }
}
