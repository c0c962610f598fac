//! Plot-ready output: CSV with 10 significant digits, JSON with 17.
//!
//! CSV files use `,` separators, `.` decimals and LF line endings.

use std::io::Write;

use serde::Serialize;

use crate::capcurve::CurveReport;
use crate::error::Result;
use crate::invariant::OccupationMatrix;
use crate::portfolio::WealthTrack;
use crate::scalar::Real;
use crate::sde::SimOutput;

pub const CSV_DIGITS: usize = 10;
pub const JSON_DIGITS: usize = 17;

/// `x` with `digits` significant digits in the style of C's `%g`:
/// positional for moderate exponents, scientific otherwise, trailing zeros
/// dropped.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_float<T: Real>(x: T) -> String {
    format_sig(x.as_f64(), CSV_DIGITS)
}

/// JSON formatter that prints floats with 17 significant digits and
/// otherwise behaves like `serde_json`'s pretty printer.
struct SigFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for SigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        let s = format_sig(v, JSON_DIGITS);
        // keep floats recognizably floating point
        if s.contains(['.', 'e']) {
            w.write_all(s.as_bytes())
        } else {
            write!(w, "{s}.0")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> std::io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Pretty JSON with 17-significant-digit floats and a trailing newline.
pub fn to_json_string<S: Serialize + ?Sized>(value: &S) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = SigFormatter {
        inner: serde_json::ser::PrettyFormatter::new(),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// One row per rank: `rank, theta_1..theta_n` and, when present,
/// `se_1..se_n`.
pub fn write_occupation_csv<T: Real, W: Write>(occ: &OccupationMatrix<T>, w: W) -> Result<()> {
    let n = occ.n();
    let mut out = writer(w);
    let mut header = vec!["rank".to_string()];
    header.extend((1..=n).map(|i| format!("theta_{i}")));
    if occ.stderr().is_some() {
        header.extend((1..=n).map(|i| format!("se_{i}")));
    }
    out.write_record(&header)?;
    for k in 0..n {
        let mut row = vec![(k + 1).to_string()];
        row.extend((0..n).map(|i| csv_float(occ.matrix()[(k, i)])));
        if let Some(se) = occ.stderr() {
            row.extend((0..n).map(|i| csv_float(se[(k, i)])));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Stored points of every path: `path, t, Z_1..Z_n, Xi_1..Xi_{n-1},
/// log_X` with `log_X = log Σ_i e^{Y_i}`.
pub fn write_trajectory_csv<T: Real, W: Write>(out: &SimOutput<T>, w: W) -> Result<()> {
    let n = out.n();
    let mut wr = writer(w);
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((1..=n).map(|k| format!("Z_{k}")));
    header.extend((1..n).map(|k| format!("Xi_{k}")));
    header.push("log_X".into());
    wr.write_record(&header)?;
    for (p, rec) in out.paths.iter().enumerate() {
        for (j, &t) in out.times.iter().enumerate() {
            let y = rec.y(j);
            let mut z = y.to_vec();
            z.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
            let mut row = vec![(p + 1).to_string(), format_sig(t, CSV_DIGITS)];
            row.extend(z.iter().map(|&v| csv_float(v)));
            row.extend(z.windows(2).map(|g| csv_float(g[0] - g[1])));
            row.push(csv_float(crate::scalar::log_sum_exp(y)));
            wr.write_record(&row)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// `rank, log_rank, E_log_weight, stderr, slope, convexity_class`.
///
/// `slope` is the expected slope towards the next rank (empty on the last
/// rank); `convexity_class` is the criterion class at interior ranks.
pub fn write_curve_csv<T: Real, W: Write>(curve: &CurveReport<T>, w: W) -> Result<()> {
    let n = curve.log_weight.len();
    let mut wr = writer(w);
    wr.write_record(["rank", "log_rank", "E_log_weight", "stderr", "slope", "convexity_class"])?;
    for k in 0..n {
        let slope = curve.slope.get(k).map(|&s| csv_float(s)).unwrap_or_default();
        let class = if k >= 1 && k + 1 < n {
            curve.convexity[k - 1].map(|c| c.to_string()).unwrap_or_default()
        } else {
            String::new()
        };
        wr.write_record([
            (k + 1).to_string(),
            format_sig(((k + 1) as f64).ln(), CSV_DIGITS),
            csv_float(curve.log_weight[k]),
            csv_float(curve.log_weight_se[k]),
            slope,
            class,
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Two whitespace-separated columns `log k` and `E[log μ_(k)]` for gnuplot.
pub fn write_curve_dat<T: Real, W: Write>(curve: &CurveReport<T>, mut w: W) -> Result<()> {
    writeln!(w, "# log_rank E_log_weight")?;
    for (k, &v) in curve.log_weight.iter().enumerate() {
        writeln!(w, "{} {}", format_sig(((k + 1) as f64).ln(), CSV_DIGITS), csv_float(v))?;
    }
    Ok(())
}

/// Log wealth: `t, log_V` for a single path, `t, log_V_1..log_V_P`
/// otherwise. Wealth itself overflows `f64` on long horizons.
pub fn write_wealth_csv<T: Real, W: Write>(tracks: &[WealthTrack<T>], w: W) -> Result<()> {
    let mut wr = writer(w);
    let mut header = vec!["t".to_string()];
    if tracks.len() == 1 {
        header.push("log_V".into());
    } else {
        header.extend((1..=tracks.len()).map(|p| format!("log_V_{p}")));
    }
    wr.write_record(&header)?;
    if let Some(first) = tracks.first() {
        for (j, &t) in first.times.iter().enumerate() {
            let mut row = vec![format_sig(t, CSV_DIGITS)];
            row.extend(tracks.iter().map(|tr| csv_float(tr.log_value[j])));
            wr.write_record(&row)?;
        }
    }
    wr.flush()?;
    Ok(())
}
