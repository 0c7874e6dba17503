//! Quote ingestion and per-quote implied volatilities in both models.
//!
//! Input and output are comma-separated UTF-8 with a mandatory header:
//!
//! ```text
//! quote_id,s0,strike,maturity_years,kind,price,volume
//! quote_id,m,bs_vol,bachelier_vol_abs,bachelier_vol_rel,atm_gap_bound,status
//! ```
//!
//! Prices are taken as forward prices; nothing is discounted.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::exec::{map_slice, Execution};
use crate::implied::{implied_vol, ImpliedVolResult};
use crate::models::OptionKind;
use crate::pricing::{bs_call_raw, call_intrinsic, Model};

pub const QUOTE_HEADER: [&str; 7] = [
    "quote_id",
    "s0",
    "strike",
    "maturity_years",
    "kind",
    "price",
    "volume",
];

pub const SMILE_HEADER: [&str; 7] = [
    "quote_id",
    "m",
    "bs_vol",
    "bachelier_vol_abs",
    "bachelier_vol_rel",
    "atm_gap_bound",
    "status",
];

/// Quotes with `|K − S_0| / S_0` below this get the at-the-money gap bound.
pub const ATM_RELATIVE_MONEYNESS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteRecord {
    pub quote_id: String,
    pub s0: f64,
    pub strike: f64,
    pub maturity: f64,
    pub kind: OptionKind,
    pub price: f64,
    pub volume: f64,
}

impl QuoteRecord {
    fn validate(self) -> Result<Self> {
        ensure_positive("s0", self.s0)?;
        ensure_positive("strike", self.strike)?;
        ensure_positive("maturity_years", self.maturity)?;
        ensure_positive("price", self.price)?;
        ensure_finite("volume", self.volume)?;
        if self.volume < 0.0 {
            return Err(Error::invalid("volume", self.volume, "must be non-negative"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the source, header being line 1.
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub records: Vec<QuoteRecord>,
    pub below_min_volume: usize,
    pub errors: Vec<RowError>,
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let found = reader.headers()?.clone();
    if found.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::HeaderMismatch {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn field<'a>(row: &'a csv::StringRecord, idx: usize, name: &str) -> std::result::Result<&'a str, String> {
    row.get(idx)
        .map(str::trim)
        .ok_or_else(|| format!("missing column {name}"))
}

fn number(row: &csv::StringRecord, idx: usize, name: &str) -> std::result::Result<f64, String> {
    let raw = field(row, idx, name)?;
    raw.parse::<f64>()
        .map_err(|_| format!("{name}: cannot parse `{raw}` as a number"))
}

fn parse_quote(row: &csv::StringRecord) -> std::result::Result<QuoteRecord, String> {
    if row.len() != QUOTE_HEADER.len() {
        return Err(format!("expected {} fields, found {}", QUOTE_HEADER.len(), row.len()));
    }
    let kind = match field(row, 4, "kind")? {
        "C" => OptionKind::Call,
        "P" => OptionKind::Put,
        other => return Err(format!("kind: expected C or P, found `{other}`")),
    };
    let record = QuoteRecord {
        quote_id: field(row, 0, "quote_id")?.to_string(),
        s0: number(row, 1, "s0")?,
        strike: number(row, 2, "strike")?,
        maturity: number(row, 3, "maturity_years")?,
        kind,
        price: number(row, 5, "price")?,
        volume: number(row, 6, "volume")?,
    };
    record.validate().map_err(|e| e.to_string())
}

/// Reads quotes, keeping rows with `volume ≥ min_volume`. Malformed rows are
/// reported with their line numbers; a wrong header or unreadable stream is fatal.
pub fn ingest_quotes(source: impl Read, min_volume: f64) -> Result<IngestReport> {
    ensure_finite("min_volume", min_volume)?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    check_header(&mut reader, &QUOTE_HEADER)?;
    let mut report = IngestReport::default();
    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => match e.kind() {
                csv::ErrorKind::Io(_) => return Err(e.into()),
                _ => {
                    let line = e.position().map_or(0, |p| p.line());
                    report.errors.push(RowError {
                        line,
                        message: e.to_string(),
                    });
                    continue;
                }
            },
        };
        let line = row.position().map_or(0, |p| p.line());
        match parse_quote(&row) {
            Ok(q) if q.volume >= min_volume => report.records.push(q),
            Ok(_) => report.below_min_volume += 1,
            Err(message) => report.errors.push(RowError { line, message }),
        }
    }
    Ok(report)
}

/// Writes quotes in the ingest format.
pub fn write_quotes(records: &[QuoteRecord], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(QUOTE_HEADER)?;
    for q in records {
        let kind = match q.kind {
            OptionKind::Call => "C",
            OptionKind::Put => "P",
        };
        w.write_record([
            q.quote_id.as_str(),
            &fmt_real(q.s0),
            &fmt_real(q.strike),
            &fmt_real(q.maturity),
            kind,
            &fmt_real(q.price),
            &fmt_real(q.volume),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmileStatus {
    Ok,
    BelowIntrinsic,
    AboveUpperBound,
    NoConvergence,
}

impl SmileStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SmileStatus::Ok => "ok",
            SmileStatus::BelowIntrinsic => "below_intrinsic",
            SmileStatus::AboveUpperBound => "above_upper_bound",
            SmileStatus::NoConvergence => "no_convergence",
        }
    }
}

impl fmt::Display for SmileStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SmileStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ok" => Ok(SmileStatus::Ok),
            "below_intrinsic" => Ok(SmileStatus::BelowIntrinsic),
            "above_upper_bound" => Ok(SmileStatus::AboveUpperBound),
            "no_convergence" => Ok(SmileStatus::NoConvergence),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmileRecord {
    pub quote_id: String,
    /// `K − S_0`
    pub m: f64,
    pub bs_vol: Option<f64>,
    pub bachelier_vol_abs: Option<f64>,
    /// `σ_B / S_0`
    pub bachelier_vol_rel: Option<f64>,
    /// `T σ_BS³ / 12`, only for at-the-money quotes.
    pub atm_gap_bound: Option<f64>,
    pub status: SmileStatus,
}

fn status_of(result: &Result<ImpliedVolResult>) -> SmileStatus {
    match result {
        Ok(_) => SmileStatus::Ok,
        Err(Error::BelowIntrinsic { .. }) => SmileStatus::BelowIntrinsic,
        Err(Error::AboveUpperBound { .. }) => SmileStatus::AboveUpperBound,
        Err(_) => SmileStatus::NoConvergence,
    }
}

pub fn smile_record(q: &QuoteRecord) -> SmileRecord {
    let bs = implied_vol(Model::BlackScholes, q.kind, q.price, q.s0, q.strike, q.maturity);
    let bachelier = implied_vol(Model::Bachelier, q.kind, q.price, q.s0, q.strike, q.maturity);
    let status = match (status_of(&bs), status_of(&bachelier)) {
        (SmileStatus::Ok, other) => other,
        (first, _) => first,
    };
    let m = q.strike - q.s0;
    let bs_vol = bs.ok().map(|r| r.vol);
    let bachelier_vol_abs = bachelier.ok().map(|r| r.vol);
    let atm = m.abs() / q.s0 < ATM_RELATIVE_MONEYNESS;
    SmileRecord {
        quote_id: q.quote_id.clone(),
        m,
        bs_vol,
        bachelier_vol_abs,
        bachelier_vol_rel: bachelier_vol_abs.map(|v| v / q.s0),
        atm_gap_bound: bs_vol
            .filter(|_| atm)
            .map(|v| q.maturity * v.powi(3) / 12.0),
        status,
    }
}

pub fn build_smile(quotes: &[QuoteRecord]) -> Vec<SmileRecord> {
    build_smile_with(Execution::default(), quotes)
}

/// Output order equals input order under either execution mode.
pub fn build_smile_with(exec: Execution, quotes: &[QuoteRecord]) -> Vec<SmileRecord> {
    map_slice(exec, quotes, smile_record)
}

/// Reals with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

pub fn emit_smile(records: &[SmileRecord], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SMILE_HEADER)?;
    for r in records {
        w.write_record([
            r.quote_id.clone(),
            fmt_real(r.m),
            fmt_opt(r.bs_vol),
            fmt_opt(r.bachelier_vol_abs),
            fmt_opt(r.bachelier_vol_rel),
            fmt_opt(r.atm_gap_bound),
            r.status.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`emit_smile`].
pub fn parse_smile(source: impl Read) -> Result<Vec<SmileRecord>> {
    let mut reader = csv::Reader::from_reader(source);
    check_header(&mut reader, &SMILE_HEADER)?;
    let bad = |line: u64, what: String| {
        Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("line {line}: {what}"),
        ))
    };
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let opt = |i: usize| -> Result<Option<f64>> {
            match row.get(i).unwrap_or("") {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(line, format!("bad number `{s}`"))),
            }
        };
        out.push(SmileRecord {
            quote_id: row.get(0).unwrap_or("").to_string(),
            m: opt(1)?.ok_or_else(|| bad(line, "missing m".into()))?,
            bs_vol: opt(2)?,
            bachelier_vol_abs: opt(3)?,
            bachelier_vol_rel: opt(4)?,
            atm_gap_bound: opt(5)?,
            status: row
                .get(6)
                .unwrap_or("")
                .parse()
                .map_err(|e: String| bad(line, e))?,
        });
    }
    Ok(out)
}

/// Synthetic quote set priced from Black-Scholes with volatility
/// `sigma + smile_curvature · ln(K/S_0)²`. Strikes below `S_0` are quoted as
/// puts, the rest as calls. Volumes are uniform integers in `[0, 1000)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteGenerator {
    pub s0: f64,
    pub sigma: f64,
    pub maturities: Vec<f64>,
    pub strikes: Vec<f64>,
    pub smile_curvature: f64,
}

impl QuoteGenerator {
    pub fn generate(&self, seed: u64) -> Result<Vec<QuoteRecord>> {
        ensure_positive("s0", self.s0)?;
        ensure_positive("sigma", self.sigma)?;
        ensure_finite("smile_curvature", self.smile_curvature)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.maturities.len() * self.strikes.len());
        for &t in &self.maturities {
            ensure_positive("maturity", t)?;
            for &k in &self.strikes {
                ensure_positive("strike", k)?;
                let skew = (k / self.s0).ln();
                let sigma = self.sigma + self.smile_curvature * skew * skew;
                ensure_positive("sigma", sigma)?;
                let call = bs_call_raw(self.s0, k, sigma * t.sqrt());
                let (kind, price) = if k < self.s0 {
                    (OptionKind::Put, call + (k - self.s0))
                } else {
                    (OptionKind::Call, call)
                };
                out.push(QuoteRecord {
                    quote_id: format!("q{:05}", out.len()),
                    s0: self.s0,
                    strike: k,
                    maturity: t,
                    kind,
                    price,
                    volume: rng.gen_range(0..1000) as f64,
                });
            }
        }
        Ok(out)
    }
}

/// Intrinsic value of a quote as stated (call or put).
pub fn quote_intrinsic(q: &QuoteRecord) -> f64 {
    match q.kind {
        OptionKind::Call => call_intrinsic(q.s0, q.strike),
        OptionKind::Put => call_intrinsic(q.strike, q.s0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implied::atm_implied_bachelier;

    const HEADER: &str = "quote_id,s0,strike,maturity_years,kind,price,volume\n";

    fn quote(id: &str, strike: f64, kind: OptionKind, price: f64) -> QuoteRecord {
        QuoteRecord {
            quote_id: id.into(),
            s0: 100.0,
            strike,
            maturity: 0.5,
            kind,
            price,
            volume: 10.0,
        }
    }

    #[test]
    fn empty_file_with_header() {
        let r = ingest_quotes(HEADER.as_bytes(), 0.0).unwrap();
        assert!(r.records.is_empty() && r.errors.is_empty());
    }

    #[test]
    fn header_mismatch_is_fatal() {
        let err = ingest_quotes("id,s0\n1,2\n".as_bytes(), 0.0).unwrap_err();
        assert!(matches!(err, Error::HeaderMismatch { .. }));
    }

    #[test]
    fn volume_filter_and_row_errors() {
        let src = format!(
            "{HEADER}a,100,100,0.5,C,5.6,10\nb,100,100,0.5,C,5.6,1\nc,100,x,0.5,C,5.6,10\nd,100,100,0.5,Z,5.6,10\ne,100,100,0.5,C,-1,10\nf,100,100\n"
        );
        let r = ingest_quotes(src.as_bytes(), 5.0).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.records[0].quote_id, "a");
        assert_eq!(r.below_min_volume, 1);
        let lines: Vec<u64> = r.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![4, 5, 6, 7]);
        assert!(r.errors[0].message.contains("strike"));
    }

    #[test]
    fn three_row_fixture_round_trip() {
        let src = format!(
            "{HEADER}q1,100,95,0.25,P,1.25,120\nq2,100,100,0.25,C,3.9788735772973833,80\nq3,100,110,1,C,4.5,0\n"
        );
        let r = ingest_quotes(src.as_bytes(), 0.0).unwrap();
        assert_eq!(
            r.records,
            vec![
                QuoteRecord { quote_id: "q1".into(), s0: 100.0, strike: 95.0, maturity: 0.25, kind: OptionKind::Put, price: 1.25, volume: 120.0 },
                QuoteRecord { quote_id: "q2".into(), s0: 100.0, strike: 100.0, maturity: 0.25, kind: OptionKind::Call, price: 3.978_873_577_297_383_3, volume: 80.0 },
                QuoteRecord { quote_id: "q3".into(), s0: 100.0, strike: 110.0, maturity: 1.0, kind: OptionKind::Call, price: 4.5, volume: 0.0 },
            ]
        );
        let mut buf = Vec::new();
        write_quotes(&r.records, &mut buf).unwrap();
        assert_eq!(ingest_quotes(buf.as_slice(), 0.0).unwrap().records, r.records);
    }

    #[test]
    fn flat_bs_quotes_recover_sigma() {
        let gen = QuoteGenerator {
            s0: 100.0,
            sigma: 0.2,
            maturities: vec![0.1, 0.5, 1.0],
            strikes: (0..21).map(|i| 80.0 + 2.0 * i as f64).collect(),
            smile_curvature: 0.0,
        };
        let quotes = gen.generate(3).unwrap();
        let smile = build_smile(&quotes);
        for (q, r) in quotes.iter().zip(&smile) {
            assert_eq!(q.quote_id, r.quote_id);
            assert_eq!(r.status, SmileStatus::Ok);
            assert!((r.bs_vol.unwrap() - 0.2).abs() < 1e-6);
            if r.m == 0.0 {
                assert!(r.bachelier_vol_rel.unwrap() <= 0.2);
                let bound = r.atm_gap_bound.unwrap();
                let gap = r.bs_vol.unwrap() - r.bachelier_vol_rel.unwrap();
                assert!((0.0..=bound).contains(&gap));
            } else {
                assert!(r.atm_gap_bound.is_none());
            }
        }
    }

    #[test]
    fn atm_bachelier_matches_closed_form() {
        let q = quote("a", 100.0, OptionKind::Call, 5.0);
        let r = smile_record(&q);
        let closed = atm_implied_bachelier(5.0, 0.5).unwrap();
        assert!((r.bachelier_vol_abs.unwrap() - closed).abs() <= 1e-12 * closed);
    }

    #[test]
    fn arbitrage_violations_are_flagged() {
        let r = smile_record(&quote("a", 100.0, OptionKind::Call, 100.0));
        assert_eq!(r.status, SmileStatus::AboveUpperBound);
        assert!(r.bs_vol.is_none());
        // Bachelier has no upper bound, so its volatility is still reported
        assert!(r.bachelier_vol_abs.is_some());
        let r = smile_record(&quote("b", 90.0, OptionKind::Call, 9.0));
        assert_eq!(r.status, SmileStatus::BelowIntrinsic);
        let r = smile_record(&quote("c", 110.0, OptionKind::Put, 9.5));
        assert_eq!(r.status, SmileStatus::BelowIntrinsic);
        let r = smile_record(&quote("d", 110.0, OptionKind::Put, 110.0));
        assert_eq!(r.status, SmileStatus::AboveUpperBound);
        assert_eq!(quote_intrinsic(&quote("e", 110.0, OptionKind::Put, 11.0)), 10.0);
    }

    #[test]
    fn emit_empty_is_header_only() {
        let mut buf = Vec::new();
        emit_smile(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "quote_id,m,bs_vol,bachelier_vol_abs,bachelier_vol_rel,atm_gap_bound,status\n"
        );
    }

    #[test]
    fn emit_parse_round_trip() {
        let quotes = vec![
            quote("a", 100.0, OptionKind::Call, 5.0),
            quote("b", 95.0, OptionKind::Put, 3.1),
            quote("c", 100.0, OptionKind::Call, 120.0),
        ];
        let smile = build_smile(&quotes);
        let mut buf = Vec::new();
        emit_smile(&smile, &mut buf).unwrap();
        assert_eq!(parse_smile(buf.as_slice()).unwrap(), smile);
    }

    #[test]
    fn status_strings_round_trip() {
        for s in [
            SmileStatus::Ok,
            SmileStatus::BelowIntrinsic,
            SmileStatus::AboveUpperBound,
            SmileStatus::NoConvergence,
        ] {
            assert_eq!(s.as_str().parse::<SmileStatus>().unwrap(), s);
        }
        assert!("bogus".parse::<SmileStatus>().is_err());
    }

    #[test]
    fn execution_modes_agree() {
        let gen = QuoteGenerator {
            s0: 50.0,
            sigma: 0.3,
            maturities: vec![0.25, 2.0],
            strikes: (0..30).map(|i| 35.0 + i as f64).collect(),
            smile_curvature: 0.5,
        };
        let quotes = gen.generate(9).unwrap();
        assert_eq!(
            build_smile_with(Execution::Sequential, &quotes),
            build_smile_with(Execution::Parallel, &quotes)
        );
        assert_eq!(gen.generate(9).unwrap(), quotes);
    }
}
