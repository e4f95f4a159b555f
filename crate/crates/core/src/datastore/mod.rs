//! Append-only time-series log with CSV export.

mod csv_io;
mod row;
mod store;

pub use csv_io::{read_csv, write_csv, CsvError};
pub use row::{LogRow, CSV_HEADER};
pub use store::{DataStore, FsyncPolicy, StoreConfig, StoreError};
