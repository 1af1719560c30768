use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Utc};

use super::TransformError;
use crate::table::{Column, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Year,
    YearMonth,
    YearMonthDate,
    /// Truncation to the month, keeping the year.
    Month,
    /// Truncation to the day, keeping year and month.
    Date,
    Hours,
    Minutes,
    /// Day of week, anchored to the week of Sunday 2012-01-01.
    Day,
}

impl TimeUnit {
    /// Map a Vega `units` list to a unit.
    pub fn from_units(units: &[String]) -> Option<TimeUnit> {
        let names: Vec<&str> = units.iter().map(String::as_str).collect();
        Some(match names.as_slice() {
            ["year"] => TimeUnit::Year,
            ["yearmonth"] | ["year", "month"] => TimeUnit::YearMonth,
            ["yearmonthdate"] | ["year", "month", "date"] => TimeUnit::YearMonthDate,
            ["month"] => TimeUnit::Month,
            ["date"] => TimeUnit::Date,
            ["hours"] => TimeUnit::Hours,
            ["minutes"] => TimeUnit::Minutes,
            ["day"] => TimeUnit::Day,
            _ => return None,
        })
    }

    /// Floor `ms` to the unit and return the boundaries `[unit0, unit1)`.
    pub fn bounds(self, ms: i64) -> Option<(i64, i64)> {
        let t = DateTime::<Utc>::from_timestamp_millis(ms)?.naive_utc();
        let date = t.date();
        let midnight = |d: NaiveDate| d.and_hms_opt(0, 0, 0).expect("midnight exists");
        let (lo, hi): (NaiveDateTime, NaiveDateTime) = match self {
            TimeUnit::Year => {
                let y = NaiveDate::from_ymd_opt(date.year(), 1, 1)?;
                (midnight(y), midnight(NaiveDate::from_ymd_opt(date.year() + 1, 1, 1)?))
            }
            TimeUnit::YearMonth | TimeUnit::Month => {
                let m = NaiveDate::from_ymd_opt(date.year(), date.month(), 1)?;
                (midnight(m), midnight(m.checked_add_months(chrono::Months::new(1))?))
            }
            TimeUnit::YearMonthDate | TimeUnit::Date => {
                (midnight(date), midnight(date.succ_opt()?))
            }
            TimeUnit::Hours => {
                let h = date.and_hms_opt(t.hour(), 0, 0)?;
                (h, h + Duration::hours(1))
            }
            TimeUnit::Minutes => {
                let m = date.and_hms_opt(t.hour(), t.minute(), 0)?;
                (m, m + Duration::minutes(1))
            }
            TimeUnit::Day => {
                let anchor = NaiveDate::from_ymd_opt(2012, 1, 1)?
                    + Duration::days(date.weekday().num_days_from_sunday() as i64);
                (midnight(anchor), midnight(anchor.succ_opt()?))
            }
        };
        Some((lo.and_utc().timestamp_millis(), hi.and_utc().timestamp_millis()))
    }
}

pub fn transform_timeunit(
    table: &Table,
    field: &str,
    unit: TimeUnit,
    as_: &[String; 2],
) -> Result<Table, TransformError> {
    let Column::Timestamp(values) = table.require_column(field)? else {
        return Err(TransformError::NonTimestampField(field.to_string()));
    };
    let (unit0, unit1): (Vec<Option<i64>>, Vec<Option<i64>>) = values
        .iter()
        .map(|v| match v.and_then(|ms| unit.bounds(ms)) {
            Some((lo, hi)) => (Some(lo), Some(hi)),
            None => (None, None),
        })
        .unzip();
    let out = table.with_column(&as_[0], Column::Timestamp(unit0))?;
    Ok(out.with_column(&as_[1], Column::Timestamp(unit1))?)
}
