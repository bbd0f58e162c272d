//! CSV readers and writers for sensor logs, feature tables and point sets.
//!
//! Sensor logs use the columns `user_id,session,timestamp_s,ch1,...,chK`;
//! every column after the first three is a channel, in file order. Feature
//! tables use `user_id,split,<feature names>` with `split` either `train` or
//! `test`. All files are UTF-8 with a header row.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use occauth_core::datastream::{
    extract_features, sliding_windows, SensorSeries, WindowSpec, FEATURE_NAMES,
};
use occauth_core::{FeatureVector, UserDataset};

use crate::error::{AppError, Result};

const SENSOR_KEYS: [&str; 3] = ["user_id", "session", "timestamp_s"];

/// One recording session of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSeries {
    pub user_id: String,
    pub session: String,
    pub series: SensorSeries,
}

/// Channel names and sessions read from a sensor log.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorLog {
    pub channels: Vec<String>,
    /// Sorted by `(user_id, session)`.
    pub sessions: Vec<SessionSeries>,
}

impl SensorLog {
    /// Names of the per-window features, `<channel>_<statistic>`.
    pub fn feature_names(&self) -> Vec<String> {
        self.channels
            .iter()
            .flat_map(|c| FEATURE_NAMES.iter().map(move |f| format!("{c}_{f}")))
            .collect()
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(AppError::io(path))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| AppError::Schema {
            path: path.into(),
            column: name.into(),
        })
}

fn parse_number(field: &str, row: usize, column: &str, path: &Path) -> Result<f64> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(AppError::Parse {
            path: path.into(),
            row,
            column: column.into(),
            value: field.into(),
        }),
    }
}

fn row_number(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

pub fn load_sensor_csv(path: &Path, rate_hint: f64) -> Result<SensorLog> {
    read_sensor_csv(open(path)?, path, rate_hint)
}

type TimedRow = (f64, Vec<f64>);

/// Parses a sensor log. `origin` only labels errors. Row numbers in errors
/// are file line numbers, the header being line 1.
pub fn read_sensor_csv<R: Read>(reader: R, origin: &Path, rate_hint: f64) -> Result<SensorLog> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(AppError::csv(origin))?.clone();
    let keys = SENSOR_KEYS
        .iter()
        .map(|k| column(&headers, k, origin))
        .collect::<Result<Vec<_>>>()?;
    let channel_cols: Vec<usize> = (0..headers.len()).filter(|i| !keys.contains(i)).collect();
    if channel_cols.is_empty() {
        return Err(AppError::Schema {
            path: origin.into(),
            column: "ch1".into(),
        });
    }
    let channels: Vec<String> = channel_cols.iter().map(|&i| headers[i].to_string()).collect();

    // (user, session) -> (timestamp, channel values) rows.
    let mut groups: BTreeMap<(String, String), Vec<TimedRow>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(AppError::csv(origin))?;
        let row = row_number(&rec, i + 2);
        let t = parse_number(&rec[keys[2]], row, SENSOR_KEYS[2], origin)?;
        let values = channel_cols
            .iter()
            .zip(&channels)
            .map(|(&c, name)| parse_number(&rec[c], row, name, origin))
            .collect::<Result<Vec<_>>>()?;
        groups
            .entry((rec[keys[0]].to_string(), rec[keys[1]].to_string()))
            .or_default()
            .push((t, values));
    }

    let sessions = groups
        .into_iter()
        .map(|((user_id, session), mut rows)| {
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (ts, vals): (Vec<f64>, Vec<Vec<f64>>) = rows.into_iter().unzip();
            let series = SensorSeries::new(ts, vals, rate_hint)?;
            Ok(SessionSeries {
                user_id,
                session,
                series,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensorLog { channels, sessions })
}

/// Cuts each session into windows and extracts one feature vector per
/// window. Per user, the first session (in sorted order) is the training
/// session and the remaining ones form the test set. Empty windows, which
/// occur only in recording gaps, are skipped.
pub fn sessions_to_users(log: &SensorLog, window: &WindowSpec) -> Result<Vec<UserDataset>> {
    let mut by_user: BTreeMap<&str, Vec<&SessionSeries>> = BTreeMap::new();
    for s in &log.sessions {
        by_user.entry(&s.user_id).or_default().push(s);
    }
    by_user
        .into_iter()
        .map(|(user, sessions)| {
            let mut split = sessions.iter().map(|s| session_features(s, window));
            let train = split.next().transpose()?.unwrap_or_default();
            let test = split.collect::<Result<Vec<_>>>()?.concat();
            if sessions.len() < 2 {
                log::warn!("user {user} has a single session; no genuine test samples");
            }
            Ok(UserDataset::new(user, train, test)?)
        })
        .collect()
}

fn session_features(s: &SessionSeries, window: &WindowSpec) -> Result<Vec<FeatureVector>> {
    let mut out = Vec::new();
    for w in sliding_windows(&s.series, window) {
        if w.is_empty() {
            log::warn!("user {} session {}: skipped an empty window", s.user_id, s.session);
            continue;
        }
        out.push(extract_features(&w)?);
    }
    Ok(out)
}

/// Feature table with names, as read from or written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub users: Vec<UserDataset>,
}

pub fn load_feature_csv(path: &Path) -> Result<FeatureTable> {
    read_feature_csv(open(path)?, path)
}

pub fn read_feature_csv<R: Read>(reader: R, origin: &Path) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(AppError::csv(origin))?.clone();
    let uc = column(&headers, "user_id", origin)?;
    let sc = column(&headers, "split", origin)?;
    let feat_cols: Vec<usize> = (0..headers.len()).filter(|i| *i != uc && *i != sc).collect();
    if feat_cols.is_empty() {
        return Err(AppError::Schema {
            path: origin.into(),
            column: "<feature>".into(),
        });
    }
    let names: Vec<String> = feat_cols.iter().map(|&i| headers[i].to_string()).collect();

    let mut users: BTreeMap<String, (Vec<FeatureVector>, Vec<FeatureVector>)> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(AppError::csv(origin))?;
        let row = row_number(&rec, i + 2);
        let values = feat_cols
            .iter()
            .zip(&names)
            .map(|(&c, name)| parse_number(&rec[c], row, name, origin))
            .collect::<Result<Vec<_>>>()?;
        let entry = users.entry(rec[uc].to_string()).or_default();
        let fv = FeatureVector::new(values)?;
        match &rec[sc] {
            "train" => entry.0.push(fv),
            "test" => entry.1.push(fv),
            other => {
                return Err(AppError::Parse {
                    path: origin.into(),
                    row,
                    column: "split".into(),
                    value: other.into(),
                })
            }
        }
    }
    let users = users
        .into_iter()
        .map(|(id, (train, test))| UserDataset::new(id, train, test))
        .collect::<occauth_core::Result<Vec<_>>>()?;
    Ok(FeatureTable { names, users })
}

/// Default feature names `f1..fd`.
pub fn generic_names(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("{prefix}{i}")).collect()
}

pub fn write_feature_csv(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["user_id".to_string(), "split".to_string()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header).map_err(AppError::csv(path))?;
    for u in &table.users {
        for (split, xs) in [("train", &u.train_genuine), ("test", &u.test_genuine)] {
            for x in xs {
                let mut rec = vec![u.user_id.clone(), split.to_string()];
                rec.extend(x.values().iter().map(|v| fmt_f64(*v)));
                w.write_record(&rec).map_err(AppError::csv(path))?;
            }
        }
    }
    flush(w, path)
}

/// Writes bare points with columns `x1..xd`.
pub fn write_points(path: &Path, points: &[FeatureVector], dim: usize) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(generic_names("x", dim)).map_err(AppError::csv(path))?;
    for p in points {
        w.write_record(p.values().iter().map(|v| fmt_f64(*v)))
            .map_err(AppError::csv(path))?;
    }
    flush(w, path)
}

pub fn read_points(path: &Path) -> Result<Vec<FeatureVector>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = rdr.headers().map_err(AppError::csv(path))?.clone();
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(AppError::csv(path))?;
            let row = row_number(&rec, i + 2);
            let v = rec
                .iter()
                .zip(headers.iter())
                .map(|(f, h)| parse_number(f, row, h, path))
                .collect::<Result<Vec<_>>>()?;
            Ok(FeatureVector::new(v)?)
        })
        .collect()
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(AppError::io(path))?;
    Ok(csv::Writer::from_writer(f))
}

pub(crate) fn flush<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(AppError::io(path))
}

/// Shortest round-trip decimal form; identical across runs and platforms.
/// Negative zero prints as `0`.
pub fn fmt_f64(v: f64) -> String {
    format!("{}", v + 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SensorLog> {
        read_sensor_csv(text.as_bytes(), Path::new("mem.csv"), 50.0)
    }

    #[test]
    fn groups_by_user_and_session() {
        let text = "user_id,session,timestamp_s,ch1,ch2\n\
                    a,s1,0.0,1,2\n\
                    a,s2,0.0,1,2\n\
                    b,s1,0.0,1,2\n\
                    b,s2,0.0,1,2\n\
                    a,s1,0.1,3,4\n";
        let log = parse(text).unwrap();
        assert_eq!(log.sessions.len(), 4);
        assert_eq!(log.channels, ["ch1", "ch2"]);
        assert_eq!(log.sessions[0].series.len(), 2);
        assert_eq!(log.feature_names().len(), 16);
        assert_eq!(log.feature_names()[0], "ch1_mean");
    }

    #[test]
    fn sorts_out_of_order_timestamps() {
        let text = "user_id,session,timestamp_s,x\nu,1,2.0,20\nu,1,0.0,0\nu,1,1.0,10\n";
        let log = parse(text).unwrap();
        let s = &log.sessions[0].series;
        assert_eq!(s.timestamps, [0.0, 1.0, 2.0]);
        assert_eq!(s.channel(0), [0.0, 10.0, 20.0]);
    }

    #[test]
    fn bad_reading_names_the_row() {
        let text = "user_id,session,timestamp_s,x\nu,1,0.0,1\nu,1,0.5,abc\n";
        match parse(text).unwrap_err() {
            AppError::Parse { row, column, value, .. } => {
                assert_eq!((row, column.as_str(), value.as_str()), (3, "x", "abc"));
            }
            e => panic!("unexpected {e}"),
        }
        assert!(parse(text).unwrap_err().to_string().contains("row 3"));
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let err = parse("user_id,timestamp_s,x\nu,0,1\n").unwrap_err();
        assert!(matches!(err, AppError::Schema { ref column, .. } if column == "session"));
        let err = parse("user_id,session,timestamp_s\n").unwrap_err();
        assert!(matches!(err, AppError::Schema { .. }));
    }

    #[test]
    fn first_session_trains() {
        let mut text = String::from("user_id,session,timestamp_s,x\n");
        for (s, n) in [("s1", 30), ("s2", 20)] {
            for i in 0..n * 10 {
                text.push_str(&format!("u,{s},{},{}\n", i as f64 * 0.1, (i % 7) as f64));
            }
        }
        let log = parse(&text).unwrap();
        let users = sessions_to_users(&log, &WindowSpec::default()).unwrap();
        assert_eq!(users.len(), 1);
        // durations 29.9 s and 19.9 s give 4 and 2 windows of 10 s every 5 s
        assert_eq!(users[0].train_genuine.len(), 4);
        assert_eq!(users[0].test_genuine.len(), 2);
        assert_eq!(users[0].dim(), 8);
    }

    #[test]
    fn feature_table_round_trip() {
        let users = vec![UserDataset::new(
            "u",
            vec![FeatureVector::new(vec![1.5, -2.0]).unwrap()],
            vec![FeatureVector::new(vec![0.1, 1e-20]).unwrap()],
        )
        .unwrap()];
        let table = FeatureTable {
            names: generic_names("f", 2),
            users,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_feature_csv(&p, &table).unwrap();
        assert_eq!(load_feature_csv(&p).unwrap(), table);
    }

    #[test]
    fn unknown_split_is_rejected() {
        let err = read_feature_csv("user_id,split,f1\nu,dev,1\n".as_bytes(), Path::new("m")).unwrap_err();
        assert!(matches!(err, AppError::Parse { row: 2, .. }));
    }
}
