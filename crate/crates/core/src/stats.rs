//! One-way ANOVA, the studentized range distribution and Tukey HSD.

use std::fmt::Write as _;

use crate::special::{f_sf, ln_gamma, normal_cdf, normal_pdf};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaTable {
    pub ss_between: f64,
    pub ss_within: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub ms_between: f64,
    pub ms_within: f64,
    pub f: f64,
    pub p: f64,
}

pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaTable> {
    if groups.len() < 2 {
        return Err(Error::Contract(format!("anova needs at least 2 groups, got {}", groups.len())));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(Error::Contract(format!("group {i} has {} values, need at least 2", g.len())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("group {i} contains a non-finite value")));
        }
    }
    let n_total: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n_total as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n_total - groups.len();
    Ok(anova_from_ss(ss_between, ss_within, df_between, df_within))
}

/// Completes a table from sums of squares and degrees of freedom.
pub fn anova_from_ss(ss_between: f64, ss_within: f64, df_between: usize, df_within: usize) -> AnovaTable {
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    let (f, p) = if ms_between == 0.0 {
        (0.0, 1.0)
    } else if ms_within == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = ms_between / ms_within;
        (f, f_sf(f, df_between as f64, df_within as f64))
    };
    AnovaTable { ss_between, ss_within, df_between, df_within, ms_between, ms_within, f, p }
}

/// Upper tail `P(F > f)` for an F distribution with `(df1, df2)` degrees of freedom.
pub fn f_pvalue(f: f64, df1: usize, df2: usize) -> Result<f64> {
    if df1 == 0 || df2 == 0 {
        return Err(Error::Contract(format!("invalid degrees of freedom ({df1}, {df2})")));
    }
    if f.is_nan() || f < 0.0 {
        return Err(Error::Contract(format!("f must be >= 0, got {f}")));
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    Ok(f_sf(f, df1 as f64, df2 as f64).clamp(0.0, 1.0))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// 20-point Gauss-Legendre nodes and weights on [-1, 1] (positive half).
const GL_X: [f64; 10] = [
    0.076_526_521_133_497_33,
    0.227_785_851_141_645_08,
    0.373_706_088_715_419_56,
    0.510_867_001_950_827_1,
    0.636_053_680_726_515,
    0.746_331_906_460_150_8,
    0.839_116_971_822_218_8,
    0.912_234_428_251_326,
    0.963_971_927_277_913_8,
    0.993_128_599_185_094_9,
];
const GL_W: [f64; 10] = [
    0.152_753_387_130_725_85,
    0.149_172_986_472_603_75,
    0.142_096_109_318_382_05,
    0.131_688_638_449_176_63,
    0.118_194_531_961_518_42,
    0.101_930_119_817_240_43,
    0.083_276_741_576_704_75,
    0.062_672_048_334_109_06,
    0.040_601_429_800_386_94,
    0.017_614_007_139_152_12,
];

fn gauss_legendre(a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut s = 0.0;
        for (x, w) in GL_X.iter().zip(GL_W.iter()) {
            s += w * (f(mid - half * x) + f(mid + half * x));
        }
        total += s * half;
    }
    total
}

const Z_LIMIT: f64 = 8.5;

/// `P(range of k standard normals <= w)`.
fn normal_range_cdf(w: f64, k: usize, panels: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let km1 = (k - 1) as i32;
    let v = gauss_legendre(-Z_LIMIT, Z_LIMIT, panels, |z| {
        let d = normal_cdf(z + w) - normal_cdf(z);
        if d <= 0.0 {
            0.0
        } else {
            normal_pdf(z) * d.powi(km1)
        }
    });
    (k as f64 * v).clamp(0.0, 1.0)
}

/// Support `[lo, hi]` of the density of `s = sqrt(chi2_df / df)` outside which it is negligible.
fn chi_support(df: f64) -> (f64, f64, impl Fn(f64) -> f64) {
    let log_norm = 0.5 * df * df.ln() - ln_gamma(0.5 * df) - (0.5 * df - 1.0) * std::f64::consts::LN_2;
    let log_pdf = move |s: f64| log_norm + (df - 1.0) * s.ln() - 0.5 * df * s * s;
    let mode = ((df - 1.0) / df).sqrt();
    let peak = log_pdf(mode);
    let cut = peak - 42.0;
    let spread = 1.0 / (2.0 * df).sqrt();
    let mut lo = mode;
    while lo > 0.0 && log_pdf(lo) > cut {
        lo -= spread;
    }
    let mut hi = mode;
    while log_pdf(hi) > cut {
        hi += spread;
    }
    (lo.max(0.0), hi, move |s: f64| if s <= 0.0 { 0.0 } else { log_pdf(s).exp() })
}

fn range_cdf_at(q: f64, k: usize, df: f64, outer: usize, inner: usize) -> f64 {
    let (lo, hi, pdf) = chi_support(df);
    let v = gauss_legendre(lo, hi, outer, |s| {
        let d = pdf(s);
        if d == 0.0 {
            0.0
        } else {
            d * normal_range_cdf(q * s, k, inner)
        }
    });
    v.clamp(0.0, 1.0)
}

const RANGE_TOL: f64 = 1e-9;
const MAX_REFINE: usize = 5;

fn check_range_args(k: usize, df: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Contract(format!("studentized range needs k >= 2, got {k}")));
    }
    if df < 2 {
        return Err(Error::Contract(format!("studentized range needs df >= 2, got {df}")));
    }
    Ok(())
}

/// CDF of the studentized range distribution with `k` means and `df` degrees of freedom.
pub fn studentized_range_cdf(q: f64, k: usize, df: usize) -> Result<f64> {
    check_range_args(k, df)?;
    if q.is_nan() {
        return Err(Error::Numerical("studentized range cdf at NaN".into()));
    }
    if q <= 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(1.0);
    }
    let df = df as f64;
    let (mut outer, mut inner) = (6, 12);
    let mut prev = range_cdf_at(q, k, df, outer, inner);
    for _ in 0..MAX_REFINE {
        outer *= 2;
        inner *= 2;
        let next = range_cdf_at(q, k, df, outer, inner);
        if (next - prev).abs() < RANGE_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numerical(format!("studentized range quadrature did not converge at q={q}, k={k}, df={df}")))
}

/// Upper `alpha` critical value: the `1 - alpha` quantile of the studentized range.
pub fn studentized_range_quantile(alpha: f64, k: usize, df: usize) -> Result<f64> {
    check_range_args(k, df)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let target = 1.0 - alpha;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while studentized_range_cdf(hi, k, df)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Numerical("studentized range quantile bracket diverged".into()));
        }
    }
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if studentized_range_cdf(mid, k, df)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyRow {
    pub group1: String,
    pub group2: String,
    pub meandiff: f64,
    pub p_adj: f64,
    pub lower: f64,
    pub upper: f64,
    pub reject: bool,
}

pub const DEFAULT_ALPHA: f64 = 0.05;

/// All-pairs Tukey HSD with the Tukey-Kramer standard error.
///
/// Groups are compared in name-sorted order and `meandiff` is `mean(group2) - mean(group1)`.
pub fn tukey_hsd(groups: &[(String, Vec<f64>)], alpha: f64) -> Result<Vec<TukeyRow>> {
    if groups.len() < 2 {
        return Err(Error::Contract(format!("tukey needs at least 2 groups, got {}", groups.len())));
    }
    let mut sorted: Vec<&(String, Vec<f64>)> = groups.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Contract(format!("duplicate group name {:?}", w[0].0)));
        }
    }
    let values: Vec<Vec<f64>> = sorted.iter().map(|g| g.1.clone()).collect();
    let table = one_way_anova(&values)?;
    if !(table.ms_within > 0.0) {
        return Err(Error::Numerical("pooled within-group variance is zero".into()));
    }
    let k = sorted.len();
    let q_crit = studentized_range_quantile(alpha, k, table.df_within)?;
    let means: Vec<f64> = values.iter().map(|v| mean(v)).collect();
    let mut rows = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let meandiff = means[j] - means[i];
            let ni = values[i].len() as f64;
            let nj = values[j].len() as f64;
            // standard error of a single mean, Tukey-Kramer form
            let se = (0.5 * table.ms_within * (1.0 / ni + 1.0 / nj)).sqrt();
            let half = q_crit * se;
            let q_obs = meandiff.abs() / se;
            let p_adj = (1.0 - studentized_range_cdf(q_obs, k, table.df_within)?).clamp(0.0, 1.0);
            rows.push(TukeyRow {
                group1: sorted[i].0.clone(),
                group2: sorted[j].0.clone(),
                meandiff,
                p_adj,
                lower: meandiff - half,
                upper: meandiff + half,
                reject: q_obs > q_crit,
            });
        }
    }
    Ok(rows)
}

/// `%g`-style rendering with 6 significant digits.
pub fn fmt_sig6(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    let exp = if rounded.abs() >= 10f64.powi(exp + 1) { exp + 1 } else { exp };
    if !(-5..6).contains(&exp) {
        let s = format!("{v:.5e}");
        let (mant, e) = s.split_once('e').unwrap_or((&s, "0"));
        let mant = trim_zeros(mant);
        let e: i32 = e.parse().unwrap_or(0);
        format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn render(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0; cols];
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            widths[i] = widths[i].max(c.chars().count());
        }
    }
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().enumerate().map(|(i, c)| format!("{c:<w$}", w = widths[i])).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Plain-text ANOVA table; `source` names the between-groups row.
pub fn anova_text(table: &AnovaTable, source: &str) -> String {
    render(&[
        vec![
            "Source of Variation".into(),
            "Sums of Squares (SS)".into(),
            "Degrees of Freedom (df)".into(),
            "Mean Squares (MS)".into(),
            "F".into(),
            "PR(>F)".into(),
        ],
        vec![
            source.into(),
            fmt_sig6(table.ss_between),
            table.df_between.to_string(),
            fmt_sig6(table.ms_between),
            fmt_sig6(table.f),
            fmt_sig6(table.p),
        ],
        vec![
            "Error (or Residual)".into(),
            fmt_sig6(table.ss_within),
            table.df_within.to_string(),
            fmt_sig6(table.ms_within),
            "NaN".into(),
            "NaN".into(),
        ],
    ])
}

pub fn anova_kv(table: &AnovaTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "anova.ss_between={:?}", table.ss_between);
    let _ = writeln!(s, "anova.ss_within={:?}", table.ss_within);
    let _ = writeln!(s, "anova.df_between={}", table.df_between);
    let _ = writeln!(s, "anova.df_within={}", table.df_within);
    let _ = writeln!(s, "anova.ms_between={:?}", table.ms_between);
    let _ = writeln!(s, "anova.ms_within={:?}", table.ms_within);
    let _ = writeln!(s, "anova.f={:?}", table.f);
    let _ = writeln!(s, "anova.p={:?}", table.p);
    s
}

pub fn tukey_text(rows: &[TukeyRow]) -> String {
    let mut t = vec![["group1", "group2", "meandiff", "p-adj", "lower", "upper", "reject"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    for r in rows {
        t.push(vec![
            r.group1.clone(),
            r.group2.clone(),
            fmt_sig6(r.meandiff),
            fmt_sig6(r.p_adj),
            fmt_sig6(r.lower),
            fmt_sig6(r.upper),
            if r.reject { "True".into() } else { "False".into() },
        ]);
    }
    render(&t)
}

pub fn tukey_kv(rows: &[TukeyRow]) -> String {
    let mut s = String::new();
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(s, "tukey.{i}.group1={}", r.group1);
        let _ = writeln!(s, "tukey.{i}.group2={}", r.group2);
        let _ = writeln!(s, "tukey.{i}.meandiff={:?}", r.meandiff);
        let _ = writeln!(s, "tukey.{i}.p_adj={:?}", r.p_adj);
        let _ = writeln!(s, "tukey.{i}.lower={:?}", r.lower);
        let _ = writeln!(s, "tukey.{i}.upper={:?}", r.upper);
        let _ = writeln!(s, "tukey.{i}.reject={}", r.reject);
    }
    s
}
