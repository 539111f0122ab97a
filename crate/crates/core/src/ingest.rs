//! Loading, validation and alignment of raw session streams.
//!
//! Units are carried as labels and never converted. Canonical units are
//! seconds for time, m/s² for IMU acceleration, rad/s for yaw rate, km/h for
//! speed, bpm for heart rate and radians for gaze angles.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("failed to read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed row at line {line}: {reason}", path.display())]
    MalformedRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{}: missing column `{column}`", path.display())]
    MissingColumn { path: PathBuf, column: String },
    #[error("channel `{0}` has too few valid samples")]
    EmptyChannel(String),
    #[error("channel `{0}` has zero variance")]
    DegenerateVariance(String),
    #[error("channel `{0}` is not uniformly sampled")]
    NonUniformTimeline(String),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("duplicate channel `{0}`")]
    DuplicateChannel(String),
    #[error("channel `{name}`: {reason}")]
    InvalidChannel { name: String, reason: String },
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidRate(f64),
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// A single timestamped stream. Timestamps are strictly increasing and every
/// value is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    name: String,
    unit: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Channel {
    pub fn new(
        name: impl Into<String>,
        unit: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let name = name.into();
        let bad = |reason: &str| IngestError::InvalidChannel {
            name: name.clone(),
            reason: reason.to_string(),
        };
        if times.len() != values.len() {
            return Err(bad("times and values differ in length"));
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(bad("non-finite time or value"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("timestamps are not strictly increasing"));
        }
        Ok(Self {
            name,
            unit: unit.into(),
            times,
            values,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    pub fn renamed(mut self, name: impl Into<String>, unit: impl Into<String>) -> Self {
        self.name = name.into();
        self.unit = unit.into();
        self
    }

    /// Median spacing between consecutive samples, if there are at least two.
    pub fn median_spacing(&self) -> Option<f64> {
        median_spacing(&self.times)
    }

    /// True when all spacings agree with the median to a relative 1e-6.
    pub fn is_uniform(&self) -> bool {
        match self.median_spacing() {
            None => false,
            Some(dt) => self
                .times
                .windows(2)
                .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt),
        }
    }

    /// Samples per second: from the full span for uniform channels, else
    /// from the median spacing.
    pub fn sample_rate(&self) -> Option<f64> {
        let dt = self.median_spacing()?;
        if self.is_uniform() {
            let span = self.times[self.times.len() - 1] - self.times[0];
            Some((self.times.len() - 1) as f64 / span)
        } else {
            Some(1.0 / dt)
        }
    }

    fn with_values(&self, values: Vec<f64>, unit: String) -> Self {
        Self {
            name: self.name.clone(),
            unit,
            times: self.times.clone(),
            values,
        }
    }
}

pub(crate) fn median_spacing(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let mut d: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}

/// Describes how to read one value column of a CSV file into a [`Channel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSchema {
    pub time_column: String,
    pub value_column: String,
    pub name: String,
    pub unit: String,
}

impl ChannelSchema {
    pub fn new(time_column: &str, value_column: &str, unit: &str) -> Self {
        Self {
            time_column: time_column.to_string(),
            value_column: value_column.to_string(),
            name: value_column.to_string(),
            unit: unit.to_string(),
        }
    }
}

/// Result of a load: the validated channels plus the number of rows dropped
/// for carrying non-finite values.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub data: T,
    pub dropped_rows: usize,
}

/// Loads a single channel from a CSV with a header row.
pub fn load_csv(path: &Path, schema: &ChannelSchema) -> Result<Loaded<Channel>> {
    let loaded = load_columns(
        path,
        &schema.time_column,
        &[(schema.value_column.as_str(), schema.name.as_str(), schema.unit.as_str())],
    )?;
    let dropped_rows = loaded.dropped_rows;
    let channel = loaded.data.into_iter().next().expect("one column requested");
    Ok(Loaded {
        data: channel,
        dropped_rows,
    })
}

/// Loads several value columns sharing one time column. A row is dropped
/// when its time or any requested value is non-finite (empty fields count as
/// non-finite); text that does not parse as a number is a [`IngestError::MalformedRow`].
///
/// `columns` holds `(csv column, channel name, unit)` triples.
pub fn load_columns(
    path: &Path,
    time_column: &str,
    columns: &[(&str, &str, &str)],
) -> Result<Loaded<Vec<Channel>>> {
    if !path.exists() {
        return Err(IngestError::FileNotFound(path.to_path_buf()));
    }
    let io_err = |source: std::io::Error| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(io),
            other => IngestError::MalformedRow {
                path: path.to_path_buf(),
                line: 1,
                reason: format!("{other:?}"),
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|e| IngestError::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let t_idx = find(time_column)?;
    let v_idx: Vec<usize> = columns.iter().map(|c| find(c.0)).collect::<Result<_>>()?;

    let mut times = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    let mut dropped_rows = 0usize;
    let mut last_t: Option<f64> = None;
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::MalformedRow {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |idx: usize| -> Result<f64> {
            let field = record.get(idx).unwrap_or("");
            if field.is_empty() {
                return Ok(f64::NAN);
            }
            field.parse::<f64>().map_err(|_| IngestError::MalformedRow {
                path: path.to_path_buf(),
                line,
                reason: format!("cannot parse `{field}` as a number"),
            })
        };
        let t = parse(t_idx)?;
        let row: Vec<f64> = v_idx.iter().map(|&i| parse(i)).collect::<Result<_>>()?;
        if !t.is_finite() {
            dropped_rows += 1;
            continue;
        }
        if let Some(prev) = last_t {
            if t <= prev {
                return Err(IngestError::MalformedRow {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("timestamp {t} does not increase (previous {prev})"),
                });
            }
        }
        last_t = Some(t);
        if row.iter().any(|v| !v.is_finite()) {
            dropped_rows += 1;
            continue;
        }
        times.push(t);
        for (col, v) in values.iter_mut().zip(row) {
            col.push(v);
        }
    }
    if times.is_empty() {
        let name = columns.first().map_or(time_column, |c| c.1);
        return Err(IngestError::EmptyChannel(name.to_string()));
    }
    let data = columns
        .iter()
        .zip(values)
        .map(|(&(_, name, unit), vals)| Channel::new(name, unit, times.clone(), vals))
        .collect::<Result<Vec<_>>>()?;
    Ok(Loaded { data, dropped_rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleMethod {
    HoldLast,
    Linear,
}

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(IngestError::InvalidRate(rate))
    }
}

/// Uniform grid `start + k / rate` for every `k` that stays within `end`.
pub fn uniform_grid(start: f64, end: f64, rate: f64) -> Vec<f64> {
    let steps = ((end - start) * rate + 1e-9).floor().max(0.0) as usize;
    (0..=steps).map(|k| start + k as f64 / rate).collect()
}

/// Evaluates the channel at arbitrary (sorted) times. Times before the first
/// sample take the first value; times after the last take the last value.
pub fn sample_at(ch: &Channel, at: &[f64], method: ResampleMethod) -> Vec<f64> {
    let (t, v) = (ch.times(), ch.values());
    let mut j = 0usize;
    at.iter()
        .map(|&x| {
            while j + 1 < t.len() && t[j + 1] <= x {
                j += 1;
            }
            if x <= t[0] {
                return v[0];
            }
            if j + 1 >= t.len() {
                return v[t.len() - 1];
            }
            match method {
                ResampleMethod::HoldLast => v[j],
                ResampleMethod::Linear => {
                    let frac = (x - t[j]) / (t[j + 1] - t[j]);
                    if frac == 0.0 {
                        v[j]
                    } else {
                        v[j] + frac * (v[j + 1] - v[j])
                    }
                }
            }
        })
        .collect()
}

/// Resamples onto a uniform grid at `rate` Hz covering `[t_first, t_last]`.
pub fn resample(ch: &Channel, rate: f64, method: ResampleMethod) -> Result<Channel> {
    check_rate(rate)?;
    if ch.len() < 2 {
        return Err(IngestError::EmptyChannel(ch.name().to_string()));
    }
    let grid = uniform_grid(ch.times()[0], ch.times()[ch.len() - 1], rate);
    let values = sample_at(ch, &grid, method);
    Channel::new(ch.name(), ch.unit(), grid, values)
}

/// Sample mean and standard deviation (n - 1 denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = if values.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Standardizes to zero mean and unit sample standard deviation.
pub fn zscore(ch: &Channel) -> Result<Channel> {
    if ch.len() < 2 {
        return Err(IngestError::EmptyChannel(ch.name().to_string()));
    }
    let (mean, sd) = mean_sd(ch.values());
    // relative guard: a constant channel can leave rounding noise in `sd`
    let scale = ch.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sd > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(IngestError::DegenerateVariance(ch.name().to_string()));
    }
    let values = ch.values().iter().map(|v| (v - mean) / sd).collect();
    Ok(ch.with_values(values, "z".to_string()))
}

/// Time derivative of a uniformly sampled speed channel. Central differences
/// inside, one-sided differences at both ends.
pub fn accel_from_speed(speed: &Channel) -> Result<Channel> {
    let n = speed.len();
    if n < 2 {
        return Err(IngestError::EmptyChannel(speed.name().to_string()));
    }
    if !speed.is_uniform() {
        return Err(IngestError::NonUniformTimeline(speed.name().to_string()));
    }
    let (t, v) = (speed.times(), speed.values());
    let grad = (0..n)
        .map(|i| {
            let (lo, hi) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            (v[hi] - v[lo]) / (t[hi] - t[lo])
        })
        .collect();
    Ok(Channel {
        name: format!("{}_accel", speed.name()),
        unit: format!("{}/s", speed.unit()),
        times: t.to_vec(),
        values: grad,
    })
}

/// A participant's recording: named channels plus free-text metadata.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Session {
    pub participant_id: String,
    channels: BTreeMap<String, Channel>,
    pub metadata: BTreeMap<String, String>,
}

impl Session {
    pub fn new(participant_id: impl Into<String>) -> Self {
        Self {
            participant_id: participant_id.into(),
            ..Default::default()
        }
    }

    pub fn add_channel(&mut self, ch: Channel) -> Result<()> {
        if self.channels.contains_key(ch.name()) {
            return Err(IngestError::DuplicateChannel(ch.name().to_string()));
        }
        self.channels.insert(ch.name().to_string(), ch);
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Result<&Channel> {
        self.channels
            .get(name)
            .ok_or_else(|| IngestError::UnknownChannel(name.to_string()))
    }

    pub fn has(&self, name: &str) -> bool {
        self.channels.contains_key(name)
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }
}

/// Multichannel data on one shared uniform timeline, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicMatrix {
    times: Vec<f64>,
    columns: Vec<String>,
    values: Vec<f64>,
}

impl KinematicMatrix {
    pub fn new(times: Vec<f64>, columns: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let bad = |reason: &str| IngestError::InvalidChannel {
            name: columns.join(","),
            reason: reason.to_string(),
        };
        if columns.is_empty() {
            return Err(bad("no columns"));
        }
        if times.len() < 2 {
            return Err(IngestError::EmptyChannel(columns.join(",")));
        }
        if values.len() != times.len() * columns.len() {
            return Err(bad("value count does not match n x d"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value"));
        }
        Ok(Self {
            times,
            columns,
            values,
        })
    }

    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns(times: Vec<f64>, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = times.len();
        let d = columns.len();
        let mut values = vec![0.0; n * d];
        for (c, (_, col)) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(IngestError::InvalidChannel {
                    name: columns[c].0.clone(),
                    reason: "column length differs from timeline".into(),
                });
            }
            for (i, v) in col.iter().enumerate() {
                values[i * d + c] = *v;
            }
        }
        Self::new(times, columns.into_iter().map(|c| c.0).collect(), values)
    }

    pub fn n_rows(&self) -> usize {
        self.times.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        let d = self.n_cols();
        self.values.iter().skip(c).step_by(d).copied().collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Resamples the named channels onto the timeline they all cover, at `rate`
/// Hz, with linear interpolation. Column order follows `names`.
pub fn assemble_matrix(session: &Session, names: &[&str], rate: f64) -> Result<KinematicMatrix> {
    check_rate(rate)?;
    let channels: Vec<&Channel> = names
        .iter()
        .map(|n| session.channel(n))
        .collect::<Result<_>>()?;
    if channels.is_empty() {
        return Err(IngestError::UnknownChannel(String::new()));
    }
    for ch in &channels {
        if ch.len() < 2 {
            return Err(IngestError::EmptyChannel(ch.name().to_string()));
        }
    }
    let start = channels.iter().map(|c| c.times()[0]).fold(f64::MIN, f64::max);
    let end = channels
        .iter()
        .map(|c| c.times()[c.len() - 1])
        .fold(f64::MAX, f64::min);
    if end <= start {
        return Err(IngestError::EmptyChannel(names.join(",")));
    }
    let grid = uniform_grid(start, end, rate);
    let cols = channels
        .iter()
        .map(|c| (c.name().to_string(), sample_at(c, &grid, ResampleMethod::Linear)))
        .collect();
    KinematicMatrix::from_columns(grid, cols)
}

/// Files read by [`load_session_dir`].
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const HR_FILE: &str = "hr.csv";
pub const GAZE_FILE: &str = "gaze.csv";
pub const SPEED_FILE: &str = "speed.csv";
pub const META_FILE: &str = "meta.json";

/// Reads whichever of the standard CSV files exist in `dir` into a session.
///
/// Channel names: `ax`, `ay`, `wz`, `speed` (from telemetry or speed.csv,
/// telemetry wins), `hr`, `gaze_x`, `gaze_y`. The participant id comes from
/// `meta.json` (`participant_id`) when present, else the directory name.
pub fn load_session_dir(dir: &Path) -> Result<Loaded<Session>> {
    if !dir.is_dir() {
        return Err(IngestError::FileNotFound(dir.to_path_buf()));
    }
    let mut metadata = BTreeMap::new();
    let meta_path = dir.join(META_FILE);
    if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path).map_err(|source| IngestError::Io {
            path: meta_path.clone(),
            source,
        })?;
        let parsed: BTreeMap<String, serde_json::Value> =
            serde_json::from_str(&text).map_err(|e| IngestError::MalformedRow {
                path: meta_path.clone(),
                line: e.line() as u64,
                reason: e.to_string(),
            })?;
        for (k, v) in parsed {
            let v = match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            metadata.insert(k, v);
        }
    }
    let participant_id = metadata.get("participant_id").cloned().unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "participant".to_string())
    });
    let mut session = Session::new(participant_id);
    session.metadata = metadata;
    let mut dropped = 0usize;

    let telemetry = dir.join(TELEMETRY_FILE);
    if telemetry.exists() {
        let loaded = load_telemetry_channels(&telemetry)?;
        dropped += loaded.dropped_rows;
        for ch in loaded.data {
            session.add_channel(ch)?;
        }
    }
    let speed = dir.join(SPEED_FILE);
    if speed.exists() && !session.has("speed") {
        let loaded = load_csv(&speed, &ChannelSchema::new("t", "speed", "km/h"))?;
        dropped += loaded.dropped_rows;
        session.add_channel(loaded.data)?;
    }
    let hr = dir.join(HR_FILE);
    if hr.exists() {
        let mut schema = ChannelSchema::new("t", "bpm", "bpm");
        schema.name = "hr".into();
        let loaded = load_csv(&hr, &schema)?;
        dropped += loaded.dropped_rows;
        session.add_channel(loaded.data)?;
    }
    let gaze = dir.join(GAZE_FILE);
    if gaze.exists() {
        let loaded = load_gaze_channels(&gaze)?;
        dropped += loaded.dropped_rows;
        for ch in loaded.data {
            session.add_channel(ch)?;
        }
    }
    Ok(Loaded {
        data: session,
        dropped_rows: dropped,
    })
}

/// Reads a telemetry CSV: `ax`, `ay`, `wz` (all three or none) and an
/// optional `speed` column, keyed by `t`.
pub fn load_telemetry_channels(path: &Path) -> Result<Loaded<Vec<Channel>>> {
    if !path.exists() {
        return Err(IngestError::FileNotFound(path.to_path_buf()));
    }
    let imu = ["ax", "ay", "wz"]
        .iter()
        .map(|c| csv_has_column(path, c))
        .collect::<Result<Vec<_>>>()?;
    let mut cols = Vec::new();
    if imu.iter().any(|&b| b) {
        if let Some(missing) = imu.iter().position(|&b| !b) {
            return Err(IngestError::MissingColumn {
                path: path.to_path_buf(),
                column: ["ax", "ay", "wz"][missing].to_string(),
            });
        }
        cols.extend([("ax", "ax", "m/s^2"), ("ay", "ay", "m/s^2"), ("wz", "wz", "rad/s")]);
    }
    if csv_has_column(path, "speed")? {
        cols.push(("speed", "speed", "km/h"));
    }
    if cols.is_empty() {
        return Err(IngestError::MissingColumn {
            path: path.to_path_buf(),
            column: "ax".into(),
        });
    }
    load_columns(path, "t", &cols)
}

/// Reads a gaze CSV into `gaze_x` and `gaze_y` channels.
pub fn load_gaze_channels(path: &Path) -> Result<Loaded<Vec<Channel>>> {
    load_columns(
        path,
        "t",
        &[("gaze_angle_x", "gaze_x", "rad"), ("gaze_angle_y", "gaze_y", "rad")],
    )
}

/// Session built from a single telemetry file; the participant id is the
/// file stem.
pub fn load_telemetry(path: &Path) -> Result<Loaded<Session>> {
    let loaded = load_telemetry_channels(path)?;
    let id = path
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "participant".to_string());
    let mut session = Session::new(id);
    for ch in loaded.data {
        session.add_channel(ch)?;
    }
    Ok(Loaded {
        data: session,
        dropped_rows: loaded.dropped_rows,
    })
}

fn csv_has_column(path: &Path, column: &str) -> Result<bool> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| IngestError::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?;
    let headers = reader.headers().map_err(|e| IngestError::MalformedRow {
        path: path.to_path_buf(),
        line: 1,
        reason: e.to_string(),
    })?;
    Ok(headers.iter().any(|h| h == column))
}
