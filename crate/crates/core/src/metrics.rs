//! Gauge RMSE, flood-extent scores and run-directory comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster_io::{read_ascii_grid, Raster};

/// One variable sampled over time at one gauge.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeSeries {
    pub id: String,
    pub samples: Vec<(f64, f64)>,
}

impl GaugeSeries {
    pub fn new(id: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self> {
        let id = id.into();
        if let Some(w) = samples.windows(2).find(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Metric(format!("{id}: times not strictly increasing at t = {}", w[1].0)));
        }
        Ok(GaugeSeries { id, samples })
    }

    /// Linear interpolation, `None` outside the sampled range.
    pub fn at(&self, t: f64) -> Option<f64> {
        let s = &self.samples;
        let (first, last) = (s.first()?, s.last()?);
        if t < first.0 || t > last.0 {
            return None;
        }
        let k = s.partition_point(|p| p.0 < t);
        if s[k].0 == t {
            return Some(s[k].1);
        }
        let (a, b) = (s[k - 1], s[k]);
        Some(a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0))
    }
}

/// `√(Σ (p − p_ref)² / N)` over the reference stamps that `p` covers.
pub fn rmse(p: &GaugeSeries, reference: &GaugeSeries) -> Result<f64> {
    let same = p.samples.len() == reference.samples.len() && p.samples.iter().zip(&reference.samples).all(|(a, b)| a.0 == b.0);
    let (mut sum, mut count) = (0.0, 0usize);
    for (k, &(t, r)) in reference.samples.iter().enumerate() {
        let v = if same { Some(p.samples[k].1) } else { p.at(t) };
        if let Some(v) = v {
            sum += (v - r) * (v - r);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Metric(format!("{} and {} share no sample times", p.id, reference.id)));
    }
    Ok((sum / count as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtentMetrics {
    /// Hit rate `H`.
    pub hit_rate: f64,
    /// False-alarm ratio `F`.
    pub false_alarm: f64,
    /// Critical success index `C`.
    pub csi: f64,
    pub hits: usize,
    pub misses: usize,
    pub false_alarms: usize,
}

/// Wet (`depth ≥ wet_threshold`) agreement between `map` and `reference`.
///
/// Empty denominators give `H = 1`, `F = 0`, `C = 1`: nothing wet anywhere is perfect agreement.
pub fn extent_metrics(map: &Raster, reference: &Raster, wet_threshold: f64) -> Result<ExtentMetrics> {
    if !map.same_geometry(reference) {
        return Err(Error::Metric(format!("raster geometry differs: {} vs {}", map.shape(), reference.shape())));
    }
    let (mut hits, mut misses, mut false_alarms) = (0, 0, 0);
    for (&a, &b) in map.values.iter().zip(&reference.values) {
        if map.is_nodata(a) || reference.is_nodata(b) {
            continue;
        }
        match (a >= wet_threshold, b >= wet_threshold) {
            (true, true) => hits += 1,
            (false, true) => misses += 1,
            (true, false) => false_alarms += 1,
            (false, false) => {}
        }
    }
    let ratio = |n: usize, d: usize, empty: f64| if d == 0 { empty } else { n as f64 / d as f64 };
    Ok(ExtentMetrics {
        hit_rate: ratio(hits, hits + misses, 1.0),
        false_alarm: ratio(false_alarms, hits + false_alarms, 0.0),
        csi: ratio(hits, hits + misses + false_alarms, 1.0),
        hits,
        misses,
        false_alarms,
    })
}

/// The four columns of a gauge CSV after `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeRecord {
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    pub eta: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl GaugeRecord {
    pub fn depth(&self, id: &str) -> Result<GaugeSeries> {
        GaugeSeries::new(format!("{id}:h"), self.t.iter().copied().zip(self.h.iter().copied()).collect())
    }

    /// Velocity magnitude `√(u² + v²)`.
    pub fn speed(&self, id: &str) -> Result<GaugeSeries> {
        let s = self.u.iter().zip(&self.v).map(|(u, v)| u.hypot(*v));
        GaugeSeries::new(format!("{id}:speed"), self.t.iter().copied().zip(s).collect())
    }
}

pub fn read_gauge_csv(path: impl AsRef<Path>) -> Result<GaugeRecord> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = GaugeRecord { t: vec![], h: vec![], eta: vec![], u: vec![], v: vec![] };
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (no == 0 && line.starts_with('t')) {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match vals {
            Ok(v) if v.len() == 5 => {
                r.t.push(v[0]);
                r.h.push(v[1]);
                r.eta.push(v[2]);
                r.u.push(v[3]);
                r.v.push(v[4]);
            }
            _ => {
                return Err(Error::Parse { path: path.display().to_string(), line: no + 1, msg: format!("expected 5 numbers, found `{line}`") })
            }
        }
    }
    Ok(r)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReportRow {
    Rmse { id: String, value: f64 },
    Extent { id: String, metrics: ExtentMetrics },
    /// Present in the reference, absent from the test run.
    Absent { kind: &'static str, id: String },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn rmse(&self, id: &str) -> Option<f64> {
        self.rows.iter().find_map(|r| match r {
            ReportRow::Rmse { id: i, value } if i == id => Some(*value),
            _ => None,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,id,value1,value2,value3\n");
        for r in &self.rows {
            let _ = match r {
                ReportRow::Rmse { id, value } => writeln!(s, "rmse,{id},{value},,"),
                ReportRow::Extent { id, metrics: m } => writeln!(s, "extent,{id},{},{},{}", m.hit_rate, m.false_alarm, m.csi),
                ReportRow::Absent { kind, id } => writeln!(s, "{kind},{id},absent,,"),
            };
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("RMSE\n  id                      value\n");
        for r in &self.rows {
            match r {
                ReportRow::Rmse { id, value } => {
                    let _ = writeln!(s, "  {id:<22}  {value:.6e}");
                }
                ReportRow::Absent { kind: "rmse", id } => {
                    let _ = writeln!(s, "  {id:<22}  absent");
                }
                _ => {}
            }
        }
        s.push_str("\nFlood extent\n  id                           H        F        C\n");
        for r in &self.rows {
            match r {
                ReportRow::Extent { id, metrics: m } => {
                    let _ = writeln!(s, "  {id:<22}  {:>7.4}  {:>7.4}  {:>7.4}", m.hit_rate, m.false_alarm, m.csi);
                }
                ReportRow::Absent { kind: "extent", id } => {
                    let _ = writeln!(s, "  {id:<22}  absent");
                }
                _ => {}
            }
        }
        s
    }
}

fn listing(dir: &Path, prefix: &str, ext: &str) -> Result<Vec<(String, PathBuf)>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in rd {
        let e = e.map_err(|e| Error::io(dir, e))?;
        let name = e.file_name().to_string_lossy().into_owned();
        if name.starts_with(prefix) && name.ends_with(ext) {
            out.push((name[..name.len() - ext.len()].to_string(), e.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Gauge RMSE (depth and speed) and depth-raster extent scores of `test_dir`
/// against `ref_dir`. Files missing from the test run are reported, not fatal.
pub fn compare_runs(test_dir: impl AsRef<Path>, ref_dir: impl AsRef<Path>, wet_threshold: f64) -> Result<Report> {
    let (test_dir, ref_dir) = (test_dir.as_ref(), ref_dir.as_ref());
    let gauges = listing(ref_dir, "gauge_", ".csv")?;
    let rasters = listing(ref_dir, "h_", ".asc")?;
    if gauges.is_empty() && rasters.is_empty() {
        return Err(Error::Metric(format!("{} holds no gauge series or depth rasters", ref_dir.display())));
    }
    let mut report = Report::default();
    for (id, path) in &gauges {
        let tp = test_dir.join(format!("{id}.csv"));
        if !tp.exists() {
            report.rows.push(ReportRow::Absent { kind: "rmse", id: format!("{id}:h") });
            report.rows.push(ReportRow::Absent { kind: "rmse", id: format!("{id}:speed") });
            continue;
        }
        let (r, t) = (read_gauge_csv(path)?, read_gauge_csv(&tp)?);
        report.rows.push(ReportRow::Rmse { id: format!("{id}:h"), value: rmse(&t.depth(id)?, &r.depth(id)?)? });
        report.rows.push(ReportRow::Rmse { id: format!("{id}:speed"), value: rmse(&t.speed(id)?, &r.speed(id)?)? });
    }
    for (id, path) in &rasters {
        let tp = test_dir.join(format!("{id}.asc"));
        if !tp.exists() {
            report.rows.push(ReportRow::Absent { kind: "extent", id: id.clone() });
            continue;
        }
        let metrics = extent_metrics(&read_ascii_grid(&tp)?, &read_ascii_grid(path)?, wet_threshold)?;
        report.rows.push(ReportRow::Extent { id: id.clone(), metrics });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(v: &[f64]) -> GaugeSeries {
        GaugeSeries::new("g", v.iter().enumerate().map(|(k, &x)| (k as f64, x)).collect()).unwrap()
    }

    #[test]
    fn rmse_hand_cases() {
        assert_eq!(rmse(&series(&[1.0, 2.0, 3.0]), &series(&[1.0, 2.0, 3.0])).unwrap(), 0.0);
        assert_eq!(rmse(&series(&[1.5, 2.5, 3.5]), &series(&[1.0, 2.0, 3.0])).unwrap(), 0.5);
        let r = rmse(&series(&[1.0, 2.0, 5.0]), &series(&[1.0, 2.0, 3.0])).unwrap();
        assert!((r - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rmse_interpolates_and_rejects_disjoint() {
        let p = GaugeSeries::new("p", vec![(0.0, 0.0), (2.0, 2.0)]).unwrap();
        let r = GaugeSeries::new("r", vec![(1.0, 1.0)]).unwrap();
        assert_eq!(rmse(&p, &r).unwrap(), 0.0);
        let far = GaugeSeries::new("f", vec![(5.0, 1.0)]).unwrap();
        assert!(matches!(rmse(&p, &far), Err(Error::Metric(_))));
        assert!(GaugeSeries::new("bad", vec![(1.0, 0.0), (1.0, 0.0)]).is_err());
    }

    fn strip(wet: &[bool]) -> Raster {
        let mut r = Raster::filled(wet.len(), 1, 1.0, 0.0);
        for (i, &w) in wet.iter().enumerate() {
            r.set_sw(i, 0, if w { 0.5 } else { 0.0 });
        }
        r
    }

    #[test]
    fn extent_hand_cases() {
        let reference: Vec<bool> = (0..200).map(|i| i < 100).collect();
        let all = strip(&[true; 200]);
        let m = extent_metrics(&all, &strip(&reference), 0.01).unwrap();
        assert_eq!((m.hit_rate, m.false_alarm, m.csi), (1.0, 0.5, 0.5));
        let half: Vec<bool> = (0..200).map(|i| i < 50).collect();
        let m = extent_metrics(&strip(&half), &strip(&reference), 0.01).unwrap();
        assert_eq!((m.hit_rate, m.false_alarm, m.csi), (0.5, 0.0, 0.5));
        let m = extent_metrics(&strip(&reference), &strip(&reference), 0.01).unwrap();
        assert_eq!((m.hit_rate, m.false_alarm, m.csi), (1.0, 0.0, 1.0));
    }

    #[test]
    fn nodata_is_excluded_and_geometry_checked() {
        let mut a = strip(&[true, true]);
        a.set_sw(1, 0, a.nodata);
        let m = extent_metrics(&a, &strip(&[true, false]), 0.01).unwrap();
        assert_eq!((m.hits, m.misses, m.false_alarms), (1, 0, 0));
        let e = extent_metrics(&strip(&[true]), &strip(&[true, true]), 0.01).unwrap_err();
        assert!(e.to_string().contains("1x1") || e.to_string().contains("1 x 1") || e.to_string().contains("geometry"));
    }

    #[test]
    fn compare_self_and_missing() {
        let d = tempfile::tempdir().unwrap();
        let (a, b) = (d.path().join("a"), d.path().join("b"));
        fs::create_dir_all(&a).unwrap();
        fs::create_dir_all(&b).unwrap();
        for dir in [&a, &b] {
            fs::write(dir.join("gauge_0.csv"), "t,h,eta,u,v\n0,1,2,0.5,0\n1,1.2,2.2,0.4,0.1\n").unwrap();
            crate::raster_io::write_ascii_grid(&strip(&[true, false, true]), dir.join("h_0000.asc")).unwrap();
        }
        fs::write(a.join("gauge_1.csv"), "t,h,eta,u,v\n0,1,2,0,0\n").unwrap();
        let self_report = compare_runs(&a, &a, 0.01).unwrap();
        for r in &self_report.rows {
            match r {
                ReportRow::Rmse { value, .. } => assert_eq!(*value, 0.0),
                ReportRow::Extent { metrics: m, .. } => assert_eq!((m.hit_rate, m.false_alarm, m.csi), (1.0, 0.0, 1.0)),
                ReportRow::Absent { .. } => panic!("nothing is missing"),
            }
        }
        let rep = compare_runs(&b, &a, 0.01).unwrap();
        assert!(rep.rows.contains(&ReportRow::Absent { kind: "rmse", id: "gauge_1:h".into() }));
        assert_eq!(rep.rmse("gauge_0:h"), Some(0.0));
        assert!(rep.to_csv().starts_with("kind,id"));
        assert!(rep.to_text().contains("absent"));
        let empty = d.path().join("empty");
        fs::create_dir_all(&empty).unwrap();
        assert!(compare_runs(&a, &empty, 0.01).is_err());
    }

    proptest! {
        #[test]
        fn extent_bounds(a in proptest::collection::vec(0.0f64..0.05, 1..60), seed in 0u64..1000) {
            let b: Vec<f64> = a.iter().enumerate().map(|(k, x)| ((k as u64 * 31 + seed) % 7) as f64 * 0.01 + x * 0.1).collect();
            let mut ra = Raster::filled(a.len(), 1, 1.0, 0.0);
            let mut rb = ra.clone();
            ra.values.copy_from_slice(&a);
            rb.values.copy_from_slice(&b);
            let m = extent_metrics(&ra, &rb, 0.01).unwrap();
            for v in [m.hit_rate, m.false_alarm, m.csi] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(m.csi <= m.hit_rate + 1e-15);
            prop_assert!(m.csi <= 1.0 - m.false_alarm + 1e-15);
            // permuting both rasters together changes nothing
            ra.values.reverse();
            rb.values.reverse();
            prop_assert_eq!(extent_metrics(&ra, &rb, 0.01).unwrap(), m);
        }

        #[test]
        fn rmse_symmetric_and_scaling(p in proptest::collection::vec(-5.0f64..5.0, 1..30), k in 0.1f64..10.0) {
            let q: Vec<f64> = p.iter().map(|x| x * 0.5 + 1.0).collect();
            let (sp, sq) = (series(&p), series(&q));
            let a = rmse(&sp, &sq).unwrap();
            prop_assert!((a - rmse(&sq, &sp).unwrap()).abs() <= 1e-12 * (1.0 + a));
            let sk = series(&p.iter().zip(&q).map(|(x, y)| y + k * (x - y)).collect::<Vec<_>>());
            prop_assert!((rmse(&sk, &sq).unwrap() - k * a).abs() <= 1e-9 * (1.0 + k * a));
        }
    }
}
