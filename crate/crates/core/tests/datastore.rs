use std::fs;

use cypha_core::datastore::{read_csv, write_csv, CsvError, DataStore, FsyncPolicy, LogRow, StoreConfig, StoreError};
use proptest::prelude::*;

fn row(ts: f64) -> LogRow {
    LogRow {
        timestamp: 1672531200.0 + ts,
        ph: 7.0 + ts / 1000.0,
        tds: 400.123456789,
        dissolved_oxygen: 4.2,
        water_temp: 26.0,
        air_temp: 28.5,
        humidity: 60.0,
        wp: (ts as u64).is_multiple_of(2),
        ap: (ts as u64).is_multiple_of(3),
    }
}

#[test]
fn order_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = DataStore::open(StoreConfig::new(dir.path())).unwrap();
    s.append(row(1.0)).unwrap();
    s.append(row(2.0)).unwrap();
    assert!(matches!(s.append(row(2.0)), Err(StoreError::Order { .. })));
    assert!(matches!(s.append(row(1.5)), Err(StoreError::Order { .. })));
    assert_eq!(s.len(), 2);
}

#[test]
fn range_queries() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = DataStore::open(StoreConfig::new(dir.path())).unwrap();
    for i in 1..=10 {
        s.append(row(f64::from(i))).unwrap();
    }
    let base = 1672531200.0;
    assert_eq!(s.query(0.0, f64::MAX).len(), 10);
    assert!(s.query(base + 100.0, base + 200.0).is_empty());
    let q = s.query(base + 3.0, base + 5.0);
    assert_eq!(q.iter().map(|r| r.timestamp - base).collect::<Vec<_>>(), [3.0, 4.0, 5.0]);
    assert!(s.query(base + 5.0, base + 3.0).is_empty());
}

#[test]
fn export_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = DataStore::open(StoreConfig::new(dir.path().join("db"))).unwrap();
    let empty = dir.path().join("empty.csv");
    s.export_csv(&empty).unwrap();
    assert_eq!(fs::read_to_string(&empty).unwrap(), "timestamp,ph,tds,do,water_temp,air_temp,humidity,wp,ap\r\n");
    for i in 1..=3 {
        s.append(row(f64::from(i) * 8.64)).unwrap();
    }
    let out = dir.path().join("log.csv");
    s.export_csv(&out).unwrap();
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(text.lines().nth(1).unwrap(), "1672531208.640,7.00864000,400.12345679,4.20000000,26.00000000,28.50000000,60.00000000,1,0");
    assert_eq!(read_csv(text.as_bytes()).unwrap(), s.rows().copied().collect::<Vec<_>>());
    assert!(s.export_csv(&dir.path().join("missing/dir/x.csv")).is_err());
}

#[test]
fn import_rejects_bad_schema_and_order() {
    assert!(matches!(read_csv(&b"timestamp,ph\n1,2\n"[..]), Err(CsvError::Schema { .. })));
    let mut buf = Vec::new();
    write_csv(&mut buf, &[row(2.0), row(1.0)]).unwrap();
    let err = read_csv(&buf[..]);
    assert!(matches!(err, Err(CsvError::Order { line: 3, .. })), "{err:?}");
    let bad = b"timestamp,ph,tds,do,water_temp,air_temp,humidity,wp,ap\n1,2,3,4,5,6,7,2,0\n";
    assert!(matches!(read_csv(&bad[..]), Err(CsvError::Parse { line: 2, .. })));
}

#[test]
fn reopen_continues_and_rotates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = StoreConfig { segment_rows: 4, max_segments: None, fsync: FsyncPolicy::OnRotate, ..StoreConfig::new(dir.path()) };
    {
        let mut s = DataStore::open(cfg.clone()).unwrap();
        for i in 1..=10 {
            s.append(row(f64::from(i))).unwrap();
        }
        s.flush().unwrap();
    }
    let mut s = DataStore::open(cfg.clone()).unwrap();
    assert_eq!(s.len(), 10);
    assert!(s.append(row(10.0)).is_err());
    s.append(row(11.0)).unwrap();
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 4);

    let capped = tempfile::tempdir().unwrap();
    let mut c = DataStore::open(StoreConfig { max_segments: Some(2), ..StoreConfig::new(capped.path()) }.with_rows(3)).unwrap();
    for i in 1..=10 {
        c.append(row(f64::from(i))).unwrap();
    }
    assert_eq!(c.len(), 4, "only the two newest segments remain");
    assert_eq!(c.dropped_rows(), 6);
    assert_eq!(c.rows().next().unwrap().timestamp, 1672531207.0);
}

trait WithRows {
    fn with_rows(self, n: usize) -> Self;
}

impl WithRows for StoreConfig {
    fn with_rows(mut self, n: usize) -> Self {
        self.segment_rows = n;
        self
    }
}

fn arb_row() -> impl Strategy<Value = (f64, [f64; 6], bool, bool)> {
    (0.001..10.0f64, prop::array::uniform6(0.0..1000.0f64), any::<bool>(), any::<bool>())
}

proptest! {
    #[test]
    fn csv_round_trip_is_identity(rows in prop::collection::vec(arb_row(), 0..50)) {
        let mut ts = 1672531200.0;
        let rows: Vec<LogRow> = rows
            .into_iter()
            .map(|(dt, v, wp, ap)| {
                ts += dt.max(0.002);
                LogRow { timestamp: ts, ph: v[0] / 71.0, tds: v[1], dissolved_oxygen: v[2] / 50.0, water_temp: v[3] / 20.0, air_temp: v[4] / 20.0, humidity: v[5] / 10.0, wp, ap }.quantized()
            })
            .collect();
        let mut deduped: Vec<LogRow> = Vec::new();
        for r in rows {
            if deduped.last().is_none_or(|l| r.timestamp > l.timestamp) {
                deduped.push(r);
            }
        }
        let mut buf = Vec::new();
        write_csv(&mut buf, &deduped).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        prop_assert_eq!(back, deduped);
    }
}
