//! Cleaning of raw detector exports into hourly count tables.

pub mod frame;
pub mod raw;
pub mod transform;

pub use frame::{parse_date, CountFrame, CountRow, TimeBin};
pub use raw::{clean, read_raw, KeepDetectors, RawDetectorRow};
pub use transform::{
    aggregate_hourly, missingness_report, split_weekpart, CoverageWarning, MissingnessReport, Weekpart,
    DAY_END_HOUR, DAY_START_HOUR,
};
