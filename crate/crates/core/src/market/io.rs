//! Booking history CSV.
//!
//! Header: `booking_date,pickup_date,lor,offered_multiplier,offers,reservations,revenue_per_day,branch_type,car_group,peak_flag`.
//! Dates are ISO-8601, reals use six fixed decimals and the peak flag is `0`/`1`.

use std::io::{Read, Write};

use chrono::{Duration, NaiveDate};
use thiserror::Error;

use super::BookingRecord;
use crate::fmt::fixed6;

pub const RECORD_COLUMNS: [&str; 10] = [
    "booking_date",
    "pickup_date",
    "lor",
    "offered_multiplier",
    "offers",
    "reservations",
    "revenue_per_day",
    "branch_type",
    "car_group",
    "peak_flag",
];

#[derive(Debug, Error)]
pub enum RecordsError {
    /// `row` counts data rows from 1 (the header is not a data row).
    #[error("schema error at row {row}, column `{column}`: {message}")]
    Schema { row: usize, column: String, message: String },
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn day_to_date(epoch: NaiveDate, day: i64) -> NaiveDate {
    epoch + Duration::days(day)
}

pub fn date_to_day(epoch: NaiveDate, date: NaiveDate) -> i64 {
    (date - epoch).num_days()
}

pub fn write_records<W: Write>(out: W, records: &[BookingRecord], epoch: NaiveDate) -> Result<(), RecordsError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            day_to_date(epoch, r.booking_day).to_string(),
            day_to_date(epoch, r.pickup_day).to_string(),
            r.lor.to_string(),
            fixed6(r.offered_multiplier),
            r.offers.to_string(),
            r.reservations.to_string(),
            fixed6(r.revenue_per_day),
            r.branch_type.clone(),
            r.car_group.clone(),
            if r.peak { "1" } else { "0" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R, epoch: NaiveDate) -> Result<Vec<BookingRecord>, RecordsError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let mut pos = [0usize; RECORD_COLUMNS.len()];
    for (slot, name) in pos.iter_mut().zip(RECORD_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| RecordsError::MissingColumn(name.to_string()))?;
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let field = |c: usize| -> Result<&str, RecordsError> {
            row.get(pos[c]).map(str::trim).ok_or_else(|| RecordsError::Schema {
                row: row_no,
                column: RECORD_COLUMNS[c].to_string(),
                message: "missing field".into(),
            })
        };
        let err = |c: usize, message: String| RecordsError::Schema {
            row: row_no,
            column: RECORD_COLUMNS[c].to_string(),
            message,
        };
        let date = |c: usize| -> Result<i64, RecordsError> {
            let s = field(c)?;
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map(|d| date_to_day(epoch, d))
                .map_err(|e| err(c, format!("invalid date `{s}`: {e}")))
        };
        fn num<T: std::str::FromStr>(s: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            s.parse::<T>().map_err(|e| format!("invalid number `{s}`: {e}"))
        }
        let booking_day = date(0)?;
        let pickup_day = date(1)?;
        let lor: u32 = num(field(2)?).map_err(|m| err(2, m))?;
        let offered_multiplier: f64 = num(field(3)?).map_err(|m| err(3, m))?;
        let offers: u32 = num(field(4)?).map_err(|m| err(4, m))?;
        let reservations: u32 = num(field(5)?).map_err(|m| err(5, m))?;
        let revenue_per_day: f64 = num(field(6)?).map_err(|m| err(6, m))?;
        let peak = match field(9)? {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(err(9, format!("invalid flag `{other}`"))),
        };
        if pickup_day < booking_day {
            return Err(err(1, "pickup date precedes booking date".into()));
        }
        if lor == 0 {
            return Err(err(2, "length of rent must be positive".into()));
        }
        if !(offered_multiplier > 0.0) {
            return Err(err(3, "multiplier must be positive".into()));
        }
        if reservations > offers {
            return Err(err(5, "reservations exceed offers".into()));
        }
        out.push(BookingRecord {
            booking_day,
            pickup_day,
            lor,
            offered_multiplier,
            offers,
            reservations,
            revenue_per_day,
            branch_type: field(7)?.to_string(),
            car_group: field(8)?.to_string(),
            peak,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::grid::tests::small_grid;
    use crate::market::{generate_history, RandomizationConfig};

    fn epoch() -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()
    }

    #[test]
    fn write_then_read_is_identity() {
        let recs = generate_history(&small_grid(), &RandomizationConfig::default(), 20).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs, epoch()).unwrap();
        let back = read_records(buf.as_slice(), epoch()).unwrap();
        assert_eq!(back, recs);
        let mut again = Vec::new();
        write_records(&mut again, &back, epoch()).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "booking_date,pickup_date,lor,offered_multiplier,offers,reservations,revenue_per_day,branch_type,car_group\n";
        match read_records(csv.as_bytes(), epoch()) {
            Err(RecordsError::MissingColumn(c)) => assert_eq!(c, "peak_flag"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_date_cites_row() {
        let recs = generate_history(&small_grid(), &RandomizationConfig::default(), 10).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs, epoch()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        // line 0 is the header, so data row 17 is line 17
        lines[17] = lines[17].replacen("2024-01-", "2024-13-", 1);
        let broken = lines.join("\n");
        match read_records(broken.as_bytes(), epoch()) {
            Err(RecordsError::Schema { row, column, .. }) => {
                assert_eq!(row, 17);
                assert_eq!(column, "booking_date");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
