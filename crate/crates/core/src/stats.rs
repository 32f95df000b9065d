//! Two-sample proportion comparison.
//!
//! The primary test is the pooled two-proportion z-test; Fisher's exact test
//! is always reported next to it because review windows can be small.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::explore::ThemeCounts;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Complementary error function.
///
/// Below 2.5 this sums the all-positive series
/// `erf(x) = 2/√π · e^{-x²} · Σ 2ⁿ x^{2n+1} / (2n+1)!!`;
/// above it evaluates the Laplace continued fraction with the modified Lentz
/// method. Absolute error stays below 1e-15 on the whole line.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.5 {
        return 1.0 - erf_series(x);
    }
    if x > 27.3 {
        return 0.0;
    }
    // erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..500 {
        let a = n as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = x + a / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (f * std::f64::consts::PI.sqrt())
}

fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided tail probability `2·(1 − Φ(|z|))`.
pub fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

fn check_counts(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<()> {
    if n1 == 0 || n2 == 0 {
        return Err(invalid("both samples need at least one observation"));
    }
    if k1 > n1 || k2 > n2 {
        return Err(invalid(format!("counts exceed sample sizes: {k1}/{n1}, {k2}/{n2}")));
    }
    Ok(())
}

/// Two-sided Fisher exact p-value for the table `[[k1, n1-k1], [k2, n2-k2]]`.
///
/// Sums the hypergeometric probabilities of all tables with the observed
/// margins whose probability does not exceed the observed one (relative
/// tolerance 1e-7 for ties). Probabilities are generated by the ratio
/// recurrence in log space, so no factorials are formed.
pub fn fisher_exact(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<f64> {
    check_counts(k1, n1, k2, n2)?;
    let total_k = k1 + k2;
    let lo = total_k.saturating_sub(n2);
    let hi = n1.min(total_k);
    // log weights relative to the table with x = lo
    let mut logw = Vec::with_capacity((hi - lo + 1) as usize);
    let mut acc = 0.0;
    logw.push(acc);
    for x in lo..hi {
        let num = ((n1 - x) * (total_k - x)) as f64;
        let den = ((x + 1) * (n2 + x + 1 - total_k)) as f64;
        acc += (num / den).ln();
        logw.push(acc);
    }
    let observed = logw[(k1 - lo) as usize];
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = observed + 1e-7;
    let (mut all, mut tail) = (0.0, 0.0);
    for &w in &logw {
        let p = (w - max).exp();
        all += p;
        if w <= threshold {
            tail += p;
        }
    }
    Ok((tail / all).clamp(f64::MIN_POSITIVE, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub theme: String,
    pub k1: u64,
    pub n1: u64,
    pub k2: u64,
    pub n2: u64,
    pub p1: f64,
    pub p2: f64,
    /// Undefined when the pooled proportion is 0 or 1.
    pub z: Option<f64>,
    pub p_z: f64,
    pub p_fisher: f64,
    /// Every expected cell count is at least 5.
    pub normal_approx_ok: bool,
    pub method_note: String,
}

/// Pooled two-proportion z-test plus Fisher's exact test.
pub fn two_proportion_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ComparisonResult> {
    check_counts(k1, n1, k2, n2)?;
    let (nf1, nf2) = (n1 as f64, n2 as f64);
    let p1 = k1 as f64 / nf1;
    let p2 = k2 as f64 / nf2;
    let pooled = (k1 + k2) as f64 / (nf1 + nf2);
    let min_expected = [nf1 * pooled, nf1 * (1.0 - pooled), nf2 * pooled, nf2 * (1.0 - pooled)]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let normal_approx_ok = min_expected >= 5.0;
    let p_fisher = fisher_exact(k1, n1, k2, n2)?;

    let mut notes = vec!["pooled two-proportion z-test, two-sided; Fisher exact two-sided (small-p rule)".to_string()];
    let (z, p_z) = if k1 + k2 == 0 || k1 + k2 == n1 + n2 {
        notes.push("pooled proportion is 0 or 1: z undefined, p_z set to 1".into());
        (None, 1.0)
    } else {
        let se = (pooled * (1.0 - pooled) * (1.0 / nf1 + 1.0 / nf2)).sqrt();
        let z = (p1 - p2) / se;
        (Some(z), two_sided_normal_p(z))
    };
    if !normal_approx_ok {
        notes.push(format!("min expected cell count {min_expected:.2} < 5: prefer p_fisher"));
    }
    Ok(ComparisonResult {
        theme: String::new(),
        k1,
        n1,
        k2,
        n2,
        p1,
        p2,
        z,
        p_z,
        p_fisher,
        normal_approx_ok,
        method_note: notes.join("; "),
    })
}

/// Compares a theme's review counts in two corpora. The denominator of each
/// side is the number of reviewed matches in the window.
pub fn compare_theme(theme: &str, a: &ThemeCounts, b: &ThemeCounts) -> Result<ComparisonResult> {
    let mut r = two_proportion_test(a.k as u64, a.n as u64, b.k as u64, b.n as u64)?;
    r.theme = theme.to_string();
    for (side, c) in [("a", a), ("b", b)] {
        if c.partial {
            r.method_note
                .push_str(&format!("; corpus {side} partially reviewed ({} of {})", c.n, c.window));
        }
    }
    Ok(r)
}

/// Flat export row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub theme: String,
    pub k1: u64,
    pub n1: u64,
    pub k2: u64,
    pub n2: u64,
    pub pct1: String,
    pub pct2: String,
    pub z: Option<f64>,
    pub p_z: f64,
    pub p_fisher: f64,
}

fn pct(p: f64) -> String {
    format!("{:.1}", 100.0 * p)
}

impl ComparisonResult {
    pub fn pct1(&self) -> String {
        pct(self.p1)
    }

    pub fn pct2(&self) -> String {
        pct(self.p2)
    }

    /// Both p-values below `alpha`.
    pub fn significant_at(&self, alpha: f64) -> bool {
        self.p_z < alpha && self.p_fisher < alpha
    }

    pub fn row(&self) -> ComparisonRow {
        ComparisonRow {
            theme: self.theme.clone(),
            k1: self.k1,
            n1: self.n1,
            k2: self.k2,
            n2: self.n2,
            pct1: self.pct1(),
            pct2: self.pct2(),
            z: self.z,
            p_z: self.p_z,
            p_fisher: self.p_fisher,
        }
    }

    /// One line of a prevalence table, e.g.
    /// `mold  44.0 / 19.7  z=6.40  p_z=1.58e-10  p_fisher=1.92e-10  p<0.01`.
    pub fn table_line(&self) -> String {
        let z = self.z.map_or_else(|| "n/a".to_string(), |z| format!("{z:.2}"));
        let verdict = if self.significant_at(0.01) { "p<0.01" } else { "n.s." };
        format!(
            "{}  {} / {}  z={}  p_z={:.3e}  p_fisher={:.3e}  {}",
            self.theme,
            self.pct1(),
            self.pct2(),
            z,
            self.p_z,
            self.p_fisher,
            verdict
        )
    }
}

/// A prevalence table with a header naming the two corpora.
pub fn render_report(corpus_a: &str, corpus_b: &str, results: &[ComparisonResult]) -> String {
    let width = results.iter().map(|r| r.theme.chars().count()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<width$}  {:>10}  {:>10}  {:>7}  {:>10}  {:>10}  {}\n",
        "theme",
        format!("{corpus_a} %"),
        format!("{corpus_b} %"),
        "z",
        "p_z",
        "p_fisher",
        "p<0.01"
    );
    for r in results {
        let z = r.z.map_or_else(|| "n/a".to_string(), |z| format!("{z:.2}"));
        out.push_str(&format!(
            "{:<width$}  {:>10}  {:>10}  {:>7}  {:>10.3e}  {:>10.3e}  {}\n",
            r.theme,
            r.pct1(),
            r.pct2(),
            z,
            r.p_z,
            r.p_fisher,
            if r.significant_at(0.01) { "yes" } else { "n.s." }
        ));
    }
    out
}
