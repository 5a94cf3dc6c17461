use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Daily adjusted-close series for one ticker: strictly increasing
/// dates, strictly positive prices, no gaps in storage (missing trading
/// days are simply absent; the series is treated as consecutive
/// observations).
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    ticker: String,
    dates: Vec<NaiveDate>,
    close: Vec<f64>,
}

impl PriceSeries {
    pub fn new(ticker: impl Into<String>, dates: Vec<NaiveDate>, close: Vec<f64>) -> Result<Self> {
        if dates.len() != close.len() {
            return Err(Error::Data(format!(
                "{} dates vs {} prices",
                dates.len(),
                close.len()
            )));
        }
        for pair in dates.windows(2) {
            if pair[1] <= pair[0] {
                if pair[1] == pair[0] {
                    return Err(Error::Data(format!("duplicate date {}", pair[0])));
                }
                return Err(Error::Data(format!(
                    "dates out of order: {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if let Some(bad) = close.iter().position(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Data(format!(
                "non-positive or non-finite price {} at {}",
                close[bad], dates[bad]
            )));
        }
        Ok(PriceSeries { ticker: ticker.into(), dates, close })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn close(&self) -> &[f64] {
        &self.close
    }

    pub fn len(&self) -> usize {
        self.close.len()
    }

    pub fn is_empty(&self) -> bool {
        self.close.is_empty()
    }

    /// Keep rows with `start <= date <= end` (either bound optional).
    pub fn filter_range(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> PriceSeries {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                start.map_or(true, |s| self.dates[i] >= s)
                    && end.map_or(true, |e| self.dates[i] <= e)
            })
            .collect();
        PriceSeries {
            ticker: self.ticker.clone(),
            dates: keep.iter().map(|&i| self.dates[i]).collect(),
            close: keep.iter().map(|&i| self.close[i]).collect(),
        }
    }

    pub fn require_len(&self, min: usize, why: &str) -> Result<()> {
        if self.len() < min {
            return Err(Error::InsufficientData(format!(
                "{} rows, need at least {min} ({why})",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Read a `Date`/`Adj Close` CSV (Yahoo-style schema; extra columns are
/// ignored). Rows are sorted by date; a row whose price does not parse
/// is rejected with its 1-based row number.
pub fn ingest_csv(path: &Path) -> Result<PriceSeries> {
    let ticker = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "SERIES".to_string());
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header row: {e}")))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let date_col = find("Date")
        .ok_or_else(|| Error::Format("missing `Date` column".into()))?;
    let price_col = find("Adj Close")
        .ok_or_else(|| Error::Format("missing `Adj Close` column".into()))?;

    let mut rows: Vec<(NaiveDate, f64)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_number = idx + 2; // header is row 1
        let record = record.map_err(|e| Error::Format(format!("row {row_number}: {e}")))?;
        let date_text = record.get(date_col).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d").map_err(|_| {
            Error::Format(format!("row {row_number}: unparseable date `{date_text}`"))
        })?;
        let price_text = record.get(price_col).unwrap_or("").trim();
        let price: f64 = price_text.parse().map_err(|_| {
            Error::Data(format!("row {row_number}: unparseable price `{price_text}`"))
        })?;
        rows.push((date, price));
    }
    rows.sort_by_key(|(date, _)| *date);
    let (dates, close): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    PriceSeries::new(ticker, dates, close)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file
    }

    #[test]
    fn three_row_file_parses() {
        let file = write_csv(
            "Date,Open,Adj Close\n2020-01-02,1,10.5\n2020-01-03,1,11.0\n2020-01-06,1,10.8\n",
        );
        let series = ingest_csv(file.path()).unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series.close(), &[10.5, 11.0, 10.8]);
    }

    #[test]
    fn shuffled_rows_sort_to_the_same_series() {
        let sorted = write_csv("Date,Adj Close\n2020-01-02,10\n2020-01-03,11\n2020-01-06,12\n");
        let shuffled = write_csv("Date,Adj Close\n2020-01-06,12\n2020-01-02,10\n2020-01-03,11\n");
        let a = ingest_csv(sorted.path()).unwrap();
        let b = ingest_csv(shuffled.path()).unwrap();
        assert_eq!(a.dates(), b.dates());
        assert_eq!(a.close(), b.close());
    }

    #[test]
    fn duplicate_date_is_named_in_the_error() {
        let file = write_csv("Date,Adj Close\n2020-01-02,10\n2020-01-02,11\n");
        let err = ingest_csv(file.path()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("2020-01-02"), "{err}");
    }

    #[test]
    fn missing_column_is_a_format_error() {
        let file = write_csv("Date,Close\n2020-01-02,10\n");
        assert!(matches!(ingest_csv(file.path()), Err(Error::Format(_))));
    }

    #[test]
    fn bad_price_reports_row_number() {
        let file = write_csv("Date,Adj Close\n2020-01-02,10\n2020-01-03,oops\n");
        let err = ingest_csv(file.path()).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn range_filter_keeps_bounds_inclusive() {
        let file = write_csv(
            "Date,Adj Close\n2019-12-31,9\n2020-01-02,10\n2020-01-03,11\n2021-01-04,12\n",
        );
        let series = ingest_csv(file.path()).unwrap();
        let from = NaiveDate::from_ymd_opt(2020, 1, 1);
        let to = NaiveDate::from_ymd_opt(2020, 12, 31);
        let filtered = series.filter_range(from, to);
        assert_eq!(filtered.close(), &[10.0, 11.0]);
    }
}
