use crate::losses::ComponentValues;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    /// Per-step means of the unweighted components.
    pub mean: ComponentValues,
    /// Per-step mean of the weighted objective.
    pub total: f64,
    pub val_total: f64,
    pub skipped: usize,
    pub clamped: usize,
    pub secs: f64,
}

impl EpochReport {
    /// `epoch=<i> l_r=<v> l_m=<v> l_s=<v> l_c=<v> total=<v> skipped=<n> secs=<t>`
    pub fn record(&self) -> String {
        format!(
            "epoch={} l_r={} l_m={} l_s={} l_c={} total={} skipped={} secs={}",
            self.epoch,
            format_sig(self.mean.l_r, 6),
            format_sig(self.mean.l_m, 6),
            format_sig(self.mean.l_s, 6),
            format_sig(self.mean.l_c, 6),
            format_sig(self.total, 6),
            self.skipped,
            format_sig(self.secs, 6),
        )
    }
}

/// `printf("%.{digits}g")`: fixed notation for exponents in
/// `[-4, digits)`, scientific otherwise, trailing zeros removed.
pub fn format_sig(v: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    // Round first so that e.g. 999999.5 picks the exponent of its rounded form.
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
