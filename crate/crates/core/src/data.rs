//! Hourly occupancy data: CSV loading, location split, episode windowing and
//! min-max normalization.

use std::path::Path;

use chrono::{NaiveDateTime, Timelike};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Points of continuous stage-one recording preceding each target window.
pub const HISTORY_LEN: usize = 48;
/// Points in the budgeted collection horizon.
pub const TARGET_LEN: usize = 168;
/// One episode window: history followed by target.
pub const WINDOW_LEN: usize = HISTORY_LEN + TARGET_LEN;

const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub location_ids: Vec<String>,
    pub timestamps: Vec<NaiveDateTime>,
    /// One series per location, all of length `timestamps.len()`.
    pub series: Vec<Vec<f64>>,
}

impl RawDataset {
    pub fn new(location_ids: Vec<String>, timestamps: Vec<NaiveDateTime>, series: Vec<Vec<f64>>) -> Result<Self> {
        if location_ids.len() != series.len() {
            return Err(Error::Structure(format!(
                "{} location ids for {} series",
                location_ids.len(),
                series.len()
            )));
        }
        for (id, s) in location_ids.iter().zip(&series) {
            if s.len() != timestamps.len() {
                return Err(Error::Structure(format!(
                    "location {id} has {} points, timestamp axis has {}",
                    s.len(),
                    timestamps.len()
                )));
            }
            if let Some(i) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::Structure(format!(
                    "location {id} has a non-finite value at index {i}"
                )));
            }
        }
        check_hourly(&timestamps)?;
        Ok(RawDataset {
            location_ids,
            timestamps,
            series,
        })
    }

    pub fn num_locations(&self) -> usize {
        self.series.len()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Hour of day of the first timestamp (0 for an empty dataset).
    pub fn first_hour(&self) -> u32 {
        self.timestamps.first().map(|t| t.hour()).unwrap_or(0)
    }

    /// Subset of locations, in the given order.
    pub fn select(&self, indices: &[usize]) -> RawDataset {
        RawDataset {
            location_ids: indices.iter().map(|&i| self.location_ids[i].clone()).collect(),
            timestamps: self.timestamps.clone(),
            series: indices.iter().map(|&i| self.series[i].clone()).collect(),
        }
    }

    /// Keep at most `n` locations (the first ones).
    pub fn truncate_locations(&self, n: usize) -> RawDataset {
        let keep: Vec<usize> = (0..self.num_locations().min(n)).collect();
        self.select(&keep)
    }

    /// Every episode window of every location, location-major.
    pub fn episodes(&self, exec: Execution) -> Vec<EpisodeInstance> {
        let first_hour = self.first_hour();
        let per_location = exec.map_range(self.num_locations(), |loc| {
            let mut eps = make_episodes(&self.series[loc], first_hour);
            for ep in &mut eps {
                ep.location = loc;
                ep.location_id = self.location_ids[loc].clone();
            }
            eps
        });
        per_location.into_iter().flatten().collect()
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        let mut it = self.series.iter().flatten().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    /// Write in the same layout `load_csv` reads.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.location_ids.iter().cloned());
        w.write_record(&header)?;
        for (row, ts) in self.timestamps.iter().enumerate() {
            let mut rec = Vec::with_capacity(self.series.len() + 1);
            rec.push(ts.format("%Y-%m-%d %H:%M:%S").to_string());
            for s in &self.series {
                rec.push(format!("{}", s[row]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_hourly(ts: &[NaiveDateTime]) -> Result<()> {
    for (i, pair) in ts.windows(2).enumerate() {
        let step = pair[1] - pair[0];
        if step != chrono::Duration::hours(1) {
            return Err(Error::Structure(format!(
                "timestamps must advance by exactly one hour; row {} -> {} steps by {}s",
                i,
                i + 1,
                step.num_seconds()
            )));
        }
    }
    Ok(())
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Load a wide CSV: header row, timestamp in column 0, one location per
/// remaining column.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Structure(
            "need a timestamp column and at least one location column".into(),
        ));
    }
    let location_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); location_ids.len()];
    let mut timestamps = Vec::new();

    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(Error::Structure(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| Error::Parse {
            line,
            msg: format!("bad timestamp {:?}", &rec[0]),
        })?;
        timestamps.push(ts);
        for (col, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("column {} ({}): not a number: {field:?}", col + 1, location_ids[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("column {}: non-finite value", col + 1),
                });
            }
            series[col].push(v);
        }
    }
    RawDataset::new(location_ids, timestamps, series)
}

/// Train/validation/test ratios plus the permutation seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [0.7, 0.2, 0.1],
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64) -> Result<Self> {
        let spec = SplitSpec { ratios, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Parse `"0.7,0.2,0.1"`.
    pub fn parse_ratios(s: &str) -> Result<[f64; 3]> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("split needs three ratios, got {s:?}")));
        }
        let mut out = [0.0; 3];
        for (o, p) in out.iter_mut().zip(&parts) {
            *o = p
                .parse()
                .map_err(|_| Error::Config(format!("split ratio {p:?} is not a number")))?;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config(format!("split ratios out of [0,1]: {:?}", self.ratios)));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Partition sizes: floor for train and validation, remainder to test.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon absorbs representation error such as 10 * 0.7 = 6.999...
        let train = (n as f64 * self.ratios[0] + 1e-9).floor() as usize;
        let val = ((n as f64 * self.ratios[1] + 1e-9).floor() as usize).min(n - train);
        (train, val, n - train - val)
    }
}

/// Seeded random partition of locations into (train, val, test).
pub fn split_locations(ds: &RawDataset, spec: &SplitSpec) -> Result<(RawDataset, RawDataset, RawDataset)> {
    spec.validate()?;
    let n = ds.num_locations();
    if n < 3 {
        return Err(Error::Structure(format!(
            "need at least 3 locations to split, have {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let (n_train, n_val, _) = spec.sizes(n);
    Ok((
        ds.select(&order[..n_train]),
        ds.select(&order[n_train..n_train + n_val]),
        ds.select(&order[n_train + n_val..]),
    ))
}

/// One location's window: stage-one history and the target horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeInstance {
    pub location: usize,
    pub location_id: String,
    /// Window index within the location's series.
    pub window: usize,
    pub history: Vec<f64>,
    pub target: Vec<f64>,
    /// Hour of day (global clock) of `target[0]`.
    pub hour_of_day_offset: u32,
}

impl EpisodeInstance {
    /// Hour of day of target index `t`.
    pub fn hour_at(&self, t: usize) -> u32 {
        ((self.hour_of_day_offset as usize + t) % 24) as u32
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> EpisodeInstance {
        EpisodeInstance {
            history: self.history.iter().map(|&v| f(v)).collect(),
            target: self.target.iter().map(|&v| f(v)).collect(),
            location_id: self.location_id.clone(),
            ..*self
        }
    }
}

/// Tile a series into consecutive non-overlapping 216-point windows starting
/// at index 0. The trailing remainder is dropped; short series give no windows.
pub fn make_episodes(series: &[f64], first_hour: u32) -> Vec<EpisodeInstance> {
    series
        .chunks_exact(WINDOW_LEN)
        .enumerate()
        .map(|(w, chunk)| {
            let start = w * WINDOW_LEN + HISTORY_LEN;
            EpisodeInstance {
                location: 0,
                location_id: String::new(),
                window: w,
                history: chunk[..HISTORY_LEN].to_vec(),
                target: chunk[HISTORY_LEN..].to_vec(),
                hour_of_day_offset: ((first_hour as usize + start) % 24) as u32,
            }
        })
        .collect()
}

/// Affine map of `[min, max]` onto `[0, 1]`, fit on training locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub min: f64,
    pub max: f64,
}

impl Normalizer {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::DegenerateScale(min));
        }
        Ok(Normalizer { min, max })
    }

    pub fn fit(train: &RawDataset) -> Result<Self> {
        let (lo, hi) = train
            .min_max()
            .ok_or_else(|| Error::Structure("cannot fit a normalizer on an empty dataset".into()))?;
        Normalizer::new(lo, hi)
    }

    pub fn scale(&self) -> f64 {
        self.max - self.min
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / self.scale()
    }

    #[inline]
    pub fn invert(&self, x: f64) -> f64 {
        x * self.scale() + self.min
    }

    pub fn apply_slice(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_slice(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.invert(x)).collect()
    }

    pub fn apply_episode(&self, ep: &EpisodeInstance) -> EpisodeInstance {
        ep.map_values(|v| self.apply(v))
    }
}
