//! Argument parsing and dispatch for the `bachelier` binary.
//!
//! Tables go to stdout as CSV; diagnostics go to stderr. Exit codes: 0 on
//! success, 2 for invalid arguments, 3 when a quote lies outside what the
//! model can reproduce, 4 for I/O and file-format failures.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;

use bachelier::chaos::ChaosExtension;
use bachelier::implied::implied_vol;
use bachelier::pricing::{atm_price_gap, bachelier_call, bachelier_price, bs_call, bs_price};
use bachelier::series::{
    eval_series, expansion_coefficients_gaussian, product_ratios, quadratic_fit, thumb_report,
    MAX_CLOSED_FORM_ORDER, PRODUCT_COEFF, TRIPLE_PRODUCT_COEFF,
};
use bachelier::smile::{build_smile, emit_smile, fmt_real, ingest_quotes, write_quotes, QuoteGenerator};
use bachelier::{
    BachelierParams, BlackScholesParams, Error, Model, MoneynessFrame, OptionKind, OptionSpec,
};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "bachelier", version, about = "Bachelier and Black-Scholes option analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Bachelier,
    Bs,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Bachelier => Model::Bachelier,
            ModelArg::Bs => Model::BlackScholes,
        }
    }
}

/// Comma-separated values or an inclusive `start:stop:step` range.
#[derive(Debug, Clone)]
struct Grid(Vec<f64>);

#[derive(Debug, Subcommand)]
enum Command {
    /// Price a European call (or put) in one model.
    Price {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        s0: f64,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        strike: f64,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        maturity: f64,
        /// Absolute volatility for bachelier, relative for bs.
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        vol: f64,
        #[arg(long)]
        put: bool,
    },
    /// Implied volatility of a quoted price.
    Implied {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_parser = finite, allow_negative_numbers = true)]
        price: f64,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        s0: f64,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        strike: f64,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        maturity: f64,
        #[arg(long)]
        put: bool,
    },
    /// Bachelier and Black-Scholes calls side by side with matched volatility `σ S_0`.
    Compare {
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        s0: f64,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        maturity: f64,
        /// Black-Scholes (relative) volatility.
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        vol: f64,
        #[arg(long, value_parser = positive_grid)]
        strikes: Grid,
    },
    /// Exact Bachelier call against its truncated series in `m`.
    Expand {
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..=MAX_CLOSED_FORM_ORDER as i64))]
        order: u32,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        m_max: f64,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        steps: u32,
    },
    /// Rules of thumb: 1 = quadratic price, 2 = call-put products.
    Thumb {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        which: u8,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        m_max: f64,
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
        steps: u32,
    },
    /// L² distance between Black-Scholes and its chaos extensions.
    Chaos {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        degree: u32,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        sigma: f64,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        s0: f64,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        maturity: f64,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        seed: u64,
        /// Evaluation times in (0, maturity]; defaults to the maturity.
        #[arg(long, value_parser = positive_grid)]
        times: Option<Grid>,
    },
    /// Implied-volatility smile from a quote file.
    Smile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
        min_volume: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Synthetic Black-Scholes quote file.
    GenQuotes {
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        sigma: f64,
        #[arg(long, value_parser = positive, allow_negative_numbers = true)]
        s0: f64,
        #[arg(long, value_parser = positive_grid)]
        maturities: Grid,
        #[arg(long, value_parser = positive_grid)]
        strikes: Grid,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.0, value_parser = finite, allow_negative_numbers = true)]
        smile_curvature: f64,
    },
}

fn finite(s: &str) -> Result<f64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("must be finite".into())
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let x = finite(s)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err("must be positive".into())
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let x = finite(s)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err("must not be negative".into())
    }
}

fn positive_grid(s: &str) -> Result<Grid, String> {
    let values = parse_grid(s)?;
    if values.iter().any(|&x| x <= 0.0) {
        return Err("all values must be positive".into());
    }
    Ok(Grid(values))
}

fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err("range must be start:stop:step".into());
        };
        let (start, stop, step) = (finite(start)?, finite(stop)?, finite(step)?);
        if step <= 0.0 || stop < start {
            return Err("range needs start <= stop and a positive step".into());
        }
        let n = ((stop - start) / step + 1e-9).floor();
        if n > 1e6 {
            return Err("range has too many points".into());
        }
        return Ok((0..=n as usize).map(|i| start + i as f64 * step).collect());
    }
    let values = s
        .split(',')
        .map(finite)
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("empty list".into());
    }
    Ok(values)
}

/// `steps + 1` evenly spaced points on `[-m_max, m_max]`.
fn symmetric_grid(m_max: f64, steps: u32) -> impl Iterator<Item = f64> {
    (0..=steps).map(move |i| -m_max + 2.0 * m_max * i as f64 / steps as f64)
}

enum Failure {
    Lib(Error),
    Io(io::Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

/// Parses `args` (including the program name) and runs one subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = dispatch(cli.command, stdout, stderr).and_then(|()| Ok(stdout.flush()?));
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Lib(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_domain() {
                EXIT_DOMAIN
            } else if e.is_io() {
                EXIT_IO
            } else {
                EXIT_USAGE
            }
        }
        // a closed reader (e.g. `| head`) is not worth a message
        Err(Failure::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(Failure::Io(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_IO
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Price {
            model,
            s0,
            strike,
            maturity,
            vol,
            put,
        } => {
            let kind = if put { OptionKind::Put } else { OptionKind::Call };
            let spec = OptionSpec::new(strike, kind)?;
            let price = match model {
                ModelArg::Bachelier => {
                    bachelier_price(&BachelierParams::new(s0, vol, maturity)?, &spec).price
                }
                ModelArg::Bs => bs_price(&BlackScholesParams::new(s0, vol, maturity)?, &spec).price,
            };
            writeln!(out, "{}", fmt_real(price))?;
        }
        Command::Implied {
            model,
            price,
            s0,
            strike,
            maturity,
            put,
        } => {
            let kind = if put { OptionKind::Put } else { OptionKind::Call };
            let r = implied_vol(model.into(), kind, price, s0, strike, maturity)?;
            writeln!(out, "vol,iterations,residual")?;
            writeln!(out, "{},{},{}", fmt_real(r.vol), r.iterations, fmt_real(r.residual))?;
        }
        Command::Compare {
            s0,
            maturity,
            vol,
            strikes,
        } => {
            let bs = BlackScholesParams::new(s0, vol, maturity)?;
            let bachelier = bs.matched_bachelier();
            let gap = atm_price_gap(s0, vol, maturity)?;
            writeln!(out, "strike,c_bachelier,c_bs,difference,bound,sharp_bound,atm")?;
            for k in strikes.0 {
                let spec = OptionSpec::call(k)?;
                let cb = bachelier_call(&bachelier, &spec).price;
                let cbs = bs_call(&bs, &spec).price;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt_real(k),
                    fmt_real(cb),
                    fmt_real(cbs),
                    fmt_real(cb - cbs),
                    fmt_real(gap.bound),
                    fmt_real(gap.sharp_bound),
                    k == s0
                )?;
            }
        }
        Command::Expand {
            a,
            order,
            m_max,
            steps,
        } => {
            let orders: Vec<usize> = [2, 4, 6].into_iter().filter(|&k| k <= order as usize).collect();
            let series = orders
                .iter()
                .map(|&k| expansion_coefficients_gaussian(a, k))
                .collect::<Result<Vec<_>, _>>()?;
            let mut header = String::from("m,exact");
            for k in &orders {
                header.push_str(&format!(",series_{k},err_{k}"));
            }
            writeln!(out, "{header}")?;
            for m in symmetric_grid(m_max, steps) {
                let exact = bachelier::pricing::bachelier_call_frame(&MoneynessFrame::new(a, m)?);
                let mut row = format!("{},{}", fmt_real(m), fmt_real(exact));
                for c in &series {
                    let approx = eval_series(c, m);
                    row.push_str(&format!(",{},{}", fmt_real(approx), fmt_real(approx - exact)));
                }
                writeln!(out, "{row}")?;
            }
        }
        Command::Thumb {
            which,
            a,
            m_max,
            steps,
        } => {
            if which == 1 {
                writeln!(out, "m_over_a,exact,approx,abs_err")?;
                for m in symmetric_grid(m_max, steps) {
                    let r = thumb_report(&MoneynessFrame::new(a, m)?);
                    writeln!(
                        out,
                        "{},{},{},{}",
                        fmt_real(r.m_over_a),
                        fmt_real(r.exact),
                        fmt_real(r.approx),
                        fmt_real(r.abs_err)
                    )?;
                }
            } else {
                writeln!(out, "m_over_a,a_ratio,b_ratio,predicted_a,predicted_b")?;
                let (mut xs, mut ya, mut yb) = (Vec::new(), Vec::new(), Vec::new());
                for m in symmetric_grid(m_max, steps) {
                    let r = product_ratios(&MoneynessFrame::new(a, m)?);
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        fmt_real(r.m_over_a),
                        fmt_real(r.a_ratio),
                        fmt_real(r.b_ratio),
                        fmt_real(r.predicted_a),
                        fmt_real(r.predicted_b)
                    )?;
                    xs.push(r.m_over_a);
                    ya.push(r.a_ratio);
                    yb.push(r.b_ratio);
                }
                let fa = quadratic_fit(&xs, &ya)?;
                let fb = quadratic_fit(&xs, &yb)?;
                writeln!(
                    err,
                    "C·P/a² ≈ {:.6} + {:.3e}·x + {:.6}·x²  (predicted x² coefficient {:.6})",
                    fa[0], fa[1], fa[2], PRODUCT_COEFF
                )?;
                writeln!(
                    err,
                    "C·P·(C+P)/(2a³) ≈ {:.6} + {:.3e}·x + {:.6}·x²  (predicted x² coefficient {:.6})",
                    fb[0], fb[1], fb[2], TRIPLE_PRODUCT_COEFF
                )?;
            }
        }
        Command::Chaos {
            degree,
            sigma,
            s0,
            maturity,
            paths,
            seed,
            times,
        } => {
            let times = times.map_or_else(|| vec![maturity], |g| g.0);
            if let Some(&t) = times.iter().find(|&&t| t > maturity) {
                return Err(Failure::Usage(format!(
                    "--times value {t} exceeds --maturity {maturity}"
                )));
            }
            writeln!(out, "n,t,analytic_err,mc_err,mc_stderr,bound")?;
            for n in 1..=degree as usize {
                let ext = ChaosExtension::new(n, s0, sigma)?;
                for &t in &times {
                    let mut r = ext.mc_l2_distance(t, paths, seed)?;
                    r.bound = ext.l2_bound(t, maturity)?;
                    writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        r.n,
                        fmt_real(r.t),
                        fmt_real(r.analytic_err),
                        fmt_real(r.mc_err),
                        fmt_real(r.mc_stderr),
                        fmt_real(r.bound)
                    )?;
                }
            }
        }
        Command::Smile {
            input,
            min_volume,
            output,
        } => {
            let file = File::open(&input).map_err(|e| {
                io::Error::new(e.kind(), format!("cannot open {}: {e}", input.display()))
            })?;
            let report = ingest_quotes(BufReader::new(file), min_volume)?;
            for e in &report.errors {
                writeln!(err, "skipped {e}")?;
            }
            let smile = build_smile(&report.records);
            let sink = File::create(&output).map_err(|e| {
                io::Error::new(e.kind(), format!("cannot create {}: {e}", output.display()))
            })?;
            emit_smile(&smile, BufWriter::new(sink))?;
            let ok = smile.iter().filter(|r| r.status.as_str() == "ok").count();
            writeln!(
                err,
                "{} quotes read, {} below volume {}, {} malformed, {} ok of {} inverted",
                report.records.len() + report.below_min_volume + report.errors.len(),
                report.below_min_volume,
                min_volume,
                report.errors.len(),
                ok,
                smile.len()
            )?;
        }
        Command::GenQuotes {
            sigma,
            s0,
            maturities,
            strikes,
            seed,
            output,
            smile_curvature,
        } => {
            let quotes = QuoteGenerator {
                s0,
                sigma,
                maturities: maturities.0,
                strikes: strikes.0,
                smile_curvature,
            }
            .generate(seed)?;
            let sink = File::create(&output).map_err(|e| {
                io::Error::new(e.kind(), format!("cannot create {}: {e}", output.display()))
            })?;
            write_quotes(&quotes, BufWriter::new(sink))?;
            writeln!(err, "{} quotes written to {}", quotes.len(), output.display())?;
        }
    }
    Ok(())
}
