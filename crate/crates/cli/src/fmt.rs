//! Human-readable numbers and matrices, six significant digits.

use matweight::CMat;
use num_complex::Complex64;

pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let digits = (5 - exp).max(0) as usize;
        let s = format!("{x:.digits$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

pub fn complex(z: Complex64, scale: f64) -> String {
    let tiny = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let re = if z.re.abs() <= tiny { 0.0 } else { z.re };
    let im = if z.im.abs() <= tiny { 0.0 } else { z.im };
    match (re == 0.0, im == 0.0) {
        (_, true) => num(re),
        (true, false) => format!("{}i", num(im)),
        (false, false) if im < 0.0 => format!("{}-{}i", num(re), num(-im)),
        _ => format!("{}+{}i", num(re), num(im)),
    }
}

pub fn matrix(m: &CMat) -> String {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols()).map(|j| complex(m[(i, j)], scale)).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}
