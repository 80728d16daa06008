//! Riemannian metrics on a coordinate chart: source parsing, forward-mode
//! jets of the components, and the curvature quantities built from them.

pub mod expr;
pub mod jet;
pub mod models;

use std::fmt;

use rand::Rng;

use crate::error::{Error, ParseError, ParseErrorKind, Result};
use crate::seed;
use expr::{format_number, parse_expr_at, variable_index, Expr, SourcePos};
use jet::{hidx, Tape, MAX_DIM};

pub use models::ModelSpace;

/// Parsed metric: symmetric component expressions plus chart bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricExpression {
    pub dim: usize,
    /// Full `dim × dim` array, symmetric by construction.
    pub components: Vec<Vec<Expr>>,
    /// Open coordinate box; infinite sides allowed.
    pub domain: Vec<(f64, f64)>,
    /// Coordinates identified modulo a period.
    pub period: Vec<Option<f64>>,
}

impl MetricExpression {
    pub fn component(&self, i: usize, j: usize) -> &Expr {
        &self.components[i][j]
    }
}

fn format_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

impl fmt::Display for MetricExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dim {}", self.dim)?;
        for (i, (lo, hi)) in self.domain.iter().enumerate() {
            if lo.is_finite() || hi.is_finite() {
                writeln!(
                    f,
                    "domain x{} in ({}, {})",
                    i + 1,
                    format_bound(*lo),
                    format_bound(*hi)
                )?;
            }
        }
        for (i, p) in self.period.iter().enumerate() {
            if let Some(p) = p {
                writeln!(f, "period x{} = {}", i + 1, format_number(*p))?;
            }
        }
        for i in 0..self.dim {
            for j in i..self.dim {
                writeln!(f, "g{}{} = {}", i + 1, j + 1, self.components[i][j])?;
            }
        }
        Ok(())
    }
}

fn err_at(pos: SourcePos, kind: ParseErrorKind) -> ParseError {
    ParseError {
        line: pos.line,
        column: pos.column,
        kind,
    }
}

fn syntax_at(pos: SourcePos, msg: impl Into<String>) -> ParseError {
    err_at(pos, ParseErrorKind::Syntax(msg.into()))
}

fn shifted(pos: SourcePos, text: &str, byte: usize) -> SourcePos {
    SourcePos {
        line: pos.line,
        column: pos.column + text[..byte].chars().count(),
    }
}

/// Splits `text` at the first `=`, returning the trimmed left side and the
/// right side with its position.
fn split_assignment(
    text: &str,
    pos: SourcePos,
) -> std::result::Result<(&str, &str, SourcePos), ParseError> {
    let eq = text
        .find('=')
        .ok_or_else(|| syntax_at(pos, "expected '='"))?;
    let rhs = &text[eq + 1..];
    let lead = rhs.len() - rhs.trim_start().len();
    Ok((
        text[..eq].trim(),
        rhs.trim(),
        shifted(pos, text, eq + 1 + lead),
    ))
}

fn constant_expr(text: &str, pos: SourcePos, dim: usize) -> std::result::Result<f64, ParseError> {
    let e = parse_expr_at(text, pos, Some(dim))?;
    let v = e
        .constant_value()
        .ok_or_else(|| syntax_at(pos, "expected a constant expression"))?;
    if !v.is_finite() {
        return Err(syntax_at(pos, "constant expression is not finite"));
    }
    Ok(v)
}

fn parse_bound(text: &str, pos: SourcePos, dim: usize) -> std::result::Result<f64, ParseError> {
    match text {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => constant_expr(text, pos, dim),
    }
}

fn parse_coordinate(
    name: &str,
    pos: SourcePos,
    dim: usize,
) -> std::result::Result<usize, ParseError> {
    let i = variable_index(name)
        .ok_or_else(|| syntax_at(pos, format!("expected a coordinate x<i>, got '{name}'")))?;
    if i >= dim {
        return Err(err_at(
            pos,
            ParseErrorKind::DimensionMismatch(format!(
                "coordinate {name} exceeds declared dimension {dim}"
            )),
        ));
    }
    Ok(i)
}

/// Parses metric source text.
///
/// ```text
/// dim 2
/// domain x1 in (0.001, pi - 0.001)
/// period x2 = 2*pi
/// g11 = 1; g22 = sin(x1)^2
/// ```
///
/// Off-diagonal components default to zero; every diagonal component is
/// required unless `g = identity` is given.
pub fn parse_metric(source: &str) -> std::result::Result<MetricExpression, ParseError> {
    let mut dim: Option<usize> = None;
    let mut entries: Vec<Vec<Option<(Expr, SourcePos)>>> = Vec::new();
    let mut domain = Vec::new();
    let mut period = Vec::new();
    let mut identity = false;
    let mut last_pos = SourcePos { line: 1, column: 1 };

    for (li, raw_line) in source.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("");
        let mut start = 0usize;
        for piece in line.split(';') {
            let lead = piece.len() - piece.trim_start().len();
            let pos = SourcePos {
                line: li + 1,
                column: line[..start + lead].chars().count() + 1,
            };
            start += piece.len() + 1;
            let stmt = piece.trim();
            if stmt.is_empty() {
                continue;
            }
            last_pos = pos;
            let keyword = stmt.split_whitespace().next().unwrap_or("");
            if keyword == "dim" {
                if dim.is_some() {
                    return Err(syntax_at(pos, "dimension declared twice"));
                }
                let arg = stmt[3..].trim();
                let n: usize = arg
                    .parse()
                    .map_err(|_| syntax_at(pos, format!("invalid dimension '{arg}'")))?;
                if n == 0 || n > MAX_DIM {
                    return Err(err_at(
                        pos,
                        ParseErrorKind::DimensionMismatch(format!(
                            "dimension must be between 1 and {MAX_DIM}, got {n}"
                        )),
                    ));
                }
                dim = Some(n);
                entries = vec![vec![None; n]; n];
                domain = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
                period = vec![None; n];
                continue;
            }
            let n = dim.ok_or_else(|| syntax_at(pos, "'dim <n>' must come first"))?;
            match keyword {
                "domain" => {
                    let rest = stmt["domain".len()..].trim_start();
                    let mut words = rest.splitn(3, char::is_whitespace);
                    let var = words.next().unwrap_or("");
                    let i = parse_coordinate(var, pos, n)?;
                    if words.next() != Some("in") {
                        return Err(syntax_at(pos, "expected 'domain x<i> in (<lo>, <hi>)'"));
                    }
                    let interval = words.next().unwrap_or("").trim();
                    let ipos = shifted(
                        pos,
                        stmt,
                        stmt.len() - stmt[stmt.len() - interval.len()..].len(),
                    );
                    let inner = interval
                        .strip_prefix('(')
                        .and_then(|s| s.strip_suffix(')'))
                        .ok_or_else(|| syntax_at(ipos, "expected a parenthesized interval"))?;
                    let mut depth = 0i32;
                    let comma = inner
                        .char_indices()
                        .find(|&(_, c)| {
                            match c {
                                '(' => depth += 1,
                                ')' => depth -= 1,
                                _ => {}
                            }
                            c == ',' && depth == 0
                        })
                        .map(|(k, _)| k)
                        .ok_or_else(|| syntax_at(ipos, "expected ',' between interval bounds"))?;
                    let lo_text = &inner[..comma];
                    let hi_text = &inner[comma + 1..];
                    let lo_pos = shifted(
                        ipos,
                        interval,
                        1 + lo_text.len() - lo_text.trim_start().len(),
                    );
                    let hi_pos = shifted(
                        ipos,
                        interval,
                        2 + comma + hi_text.len() - hi_text.trim_start().len(),
                    );
                    let lo = parse_bound(lo_text.trim(), lo_pos, n)?;
                    let hi = parse_bound(hi_text.trim(), hi_pos, n)?;
                    if !(lo < hi) {
                        return Err(syntax_at(ipos, "empty domain interval"));
                    }
                    domain[i] = (lo, hi);
                }
                "period" => {
                    let (lhs, rhs, rpos) = split_assignment(
                        &stmt["period".len()..],
                        shifted(pos, stmt, "period".len()),
                    )?;
                    let i = parse_coordinate(lhs, pos, n)?;
                    let p = constant_expr(rhs, rpos, n)?;
                    if p <= 0.0 {
                        return Err(syntax_at(rpos, "period must be positive"));
                    }
                    period[i] = Some(p);
                }
                _ => {
                    let (lhs, rhs, rpos) = split_assignment(stmt, pos)?;
                    if lhs == "g" {
                        if rhs != "identity" {
                            return Err(syntax_at(rpos, "expected 'g = identity'"));
                        }
                        identity = true;
                        continue;
                    }
                    let idx: Vec<char> = lhs
                        .strip_prefix('g')
                        .map(|s| s.chars().collect())
                        .unwrap_or_default();
                    if idx.len() != 2 || !idx.iter().all(|c| c.is_ascii_digit() && *c != '0') {
                        return Err(syntax_at(pos, format!("unrecognized statement '{stmt}'")));
                    }
                    let i = idx[0] as usize - '1' as usize;
                    let j = idx[1] as usize - '1' as usize;
                    if i >= n || j >= n {
                        return Err(err_at(
                            pos,
                            ParseErrorKind::DimensionMismatch(format!(
                                "component {lhs} exceeds declared dimension {n}"
                            )),
                        ));
                    }
                    if entries[i][j].is_some() {
                        return Err(syntax_at(pos, format!("component {lhs} given twice")));
                    }
                    let e = parse_expr_at(rhs, rpos, Some(n))?;
                    entries[i][j] = Some((e, pos));
                }
            }
        }
    }

    let n = dim.ok_or_else(|| syntax_at(last_pos, "missing 'dim <n>' declaration"))?;
    if identity && entries.iter().flatten().any(|e| e.is_some()) {
        return Err(syntax_at(
            last_pos,
            "'g = identity' cannot be combined with components",
        ));
    }
    let mut components = vec![vec![Expr::Num(0.0); n]; n];
    for i in 0..n {
        for j in i..n {
            let e = match (&entries[i][j], &entries[j][i]) {
                (Some((a, _)), Some((b, bpos))) if i != j => {
                    if a.to_string() != b.to_string() {
                        return Err(err_at(
                            *bpos,
                            ParseErrorKind::NonSymmetric { i: i + 1, j: j + 1 },
                        ));
                    }
                    a.clone()
                }
                (Some((a, _)), _) | (None, Some((a, _))) => a.clone(),
                (None, None) if identity => Expr::Num(if i == j { 1.0 } else { 0.0 }),
                (None, None) if i == j => {
                    return Err(syntax_at(
                        last_pos,
                        format!("missing diagonal component g{}{}", i + 1, i + 1),
                    ));
                }
                (None, None) => Expr::Num(0.0),
            };
            components[i][j] = e.clone();
            components[j][i] = e;
        }
    }
    Ok(MetricExpression {
        dim: n,
        components,
        domain,
        period,
    })
}

/// Component values and partial derivatives at one chart point.
///
/// Storage is flat: `g[i*n+j]`, `dg[(k*n+i)*n+j] = ∂_k g_ij`,
/// `ddg[((k*n+l)*n+i)*n+j] = ∂_k ∂_l g_ij`.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub n: usize,
    pub order: u8,
    pub g: Vec<f64>,
    pub ginv: Vec<f64>,
    pub dg: Vec<f64>,
    pub ddg: Vec<f64>,
}

impl MetricJet {
    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }

    pub fn dg(&self, k: usize, i: usize, j: usize) -> f64 {
        self.dg[(k * self.n + i) * self.n + j]
    }

    pub fn ddg(&self, k: usize, l: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.ddg[((k * n + l) * n + i) * n + j]
    }

    pub fn inner(&self, v: &[f64], w: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.g[i * n + j] * v[i] * w[j];
            }
        }
        s
    }
}

/// A compiled metric, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Metric {
    expr: MetricExpression,
    tapes: Vec<Tape>,
}

impl Metric {
    pub fn new(expr: MetricExpression) -> Self {
        let n = expr.dim;
        let mut tapes = vec![Tape::compile(&Expr::Num(0.0)); n * (n + 1) / 2];
        for j in 0..n {
            for i in 0..=j {
                tapes[hidx(i, j)] = Tape::compile(&expr.components[i][j]);
            }
        }
        Metric { expr, tapes }
    }

    pub fn from_source(source: &str) -> Result<Self> {
        Ok(Metric::new(parse_metric(source)?))
    }

    pub fn dim(&self) -> usize {
        self.expr.dim
    }

    pub fn expression(&self) -> &MetricExpression {
        &self.expr
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.expr.domain
    }

    pub fn period(&self, i: usize) -> Option<f64> {
        self.expr.period[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.expr.domain)
                .all(|(v, (lo, hi))| *lo < *v && *v < *hi)
    }

    /// Chart difference `x - y`, reduced to the symmetric range on periodic coordinates.
    pub fn chart_difference(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let d = x[i] - y[i];
                match self.expr.period[i] {
                    Some(p) => d - p * (d / p).round(),
                    None => d,
                }
            })
            .collect()
    }

    /// Metric matrix at `x` (no derivatives).
    pub fn g(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(eval_metric_jet(self, x, 0)?.g)
    }

    pub fn inner(&self, x: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
        Ok(eval_metric_jet(self, x, 0)?.inner(v, w))
    }

    pub fn norm(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        Ok(self.inner(x, v, v)?.max(0.0).sqrt())
    }
}

/// Symmetric LDLᵀ factorization (row-major, `n × n`). Returns the unit lower
/// factor and the pivots.
pub(crate) fn ldlt(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut l = vec![0.0; n * n];
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut s = a[j * n + j];
        for k in 0..j {
            s -= l[j * n + k] * l[j * n + k] * d[k];
        }
        d[j] = s;
        l[j * n + j] = 1.0;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k] * d[k];
            }
            l[i * n + j] = if d[j] != 0.0 { s / d[j] } else { 0.0 };
        }
    }
    (l, d)
}

fn ldlt_inverse(l: &[f64], d: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for c in 0..n {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[c] = 1.0;
        for i in 0..n {
            for k in 0..i {
                col[i] -= l[i * n + k] * col[k];
            }
        }
        for i in 0..n {
            col[i] /= d[i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                col[i] -= l[k * n + i] * col[k];
            }
        }
        for i in 0..n {
            inv[i * n + c] = col[i];
        }
    }
    inv
}

/// Evaluates `g` and its partial derivatives up to `order` (0, 1 or 2).
///
/// Fails outside the declared domain box, on expression domain errors, and
/// when the smallest LDLᵀ pivot is not above `1e-12` times the largest.
pub fn eval_metric_jet(m: &Metric, x: &[f64], order: u8) -> Result<MetricJet> {
    let n = m.dim();
    if x.len() != n {
        return Err(Error::InvalidParameter(format!(
            "point has {} coordinates, metric has {n}",
            x.len()
        )));
    }
    if !m.contains(x) {
        return Err(Error::Domain(format!("point {x:?} outside chart domain")));
    }
    let order = order.min(2);
    let mut g = vec![0.0; n * n];
    let mut dg = vec![0.0; if order >= 1 { n * n * n } else { 0 }];
    let mut ddg = vec![0.0; if order >= 2 { n * n * n * n } else { 0 }];
    for j in 0..n {
        for i in 0..=j {
            let tape = &m.tapes[hidx(i, j)];
            if tape.is_constant() {
                let v = tape.eval(x, 0)?.v;
                g[i * n + j] = v;
                g[j * n + i] = v;
                continue;
            }
            let jt = tape.eval(x, order)?;
            g[i * n + j] = jt.v;
            g[j * n + i] = jt.v;
            if order >= 1 {
                for k in 0..n {
                    dg[(k * n + i) * n + j] = jt.d[k];
                    dg[(k * n + j) * n + i] = jt.d[k];
                }
            }
            if order >= 2 {
                for k in 0..n {
                    for l in 0..n {
                        let h = jt.hess(k, l);
                        ddg[((k * n + l) * n + i) * n + j] = h;
                        ddg[((k * n + l) * n + j) * n + i] = h;
                    }
                }
            }
        }
    }
    let (l, d) = ldlt(&g, n);
    let dmax = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(dmax > 0.0) || !(dmin > 1e-12 * dmax) {
        return Err(Error::NotPositiveDefinite {
            point: x.to_vec(),
            pivot_ratio: if dmax > 0.0 { dmin / dmax } else { dmin },
        });
    }
    let ginv = ldlt_inverse(&l, &d, n);
    Ok(MetricJet {
        n,
        order,
        g,
        ginv,
        dg,
        ddg,
    })
}

/// Christoffel symbols `gamma[(i*n+j)*n+k] = Γ^i_jk` and, when the jet has
/// order 2, their derivatives `dgamma[((m*n+i)*n+j)*n+k] = ∂_m Γ^i_jk`.
#[derive(Debug, Clone)]
pub struct Connection {
    pub n: usize,
    pub gamma: Vec<f64>,
    pub dgamma: Vec<f64>,
}

impl Connection {
    pub fn gamma(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gamma[(i * self.n + j) * self.n + k]
    }

    pub fn from_jet(jet: &MetricJet) -> Connection {
        let n = jet.n;
        assert!(jet.order >= 1, "connection needs first derivatives");
        // S[(l*n+j)*n+k] = ∂_j g_lk + ∂_k g_jl − ∂_l g_jk
        let mut s = vec![0.0; n * n * n];
        for l in 0..n {
            for j in 0..n {
                for k in 0..n {
                    s[(l * n + j) * n + k] = jet.dg(j, l, k) + jet.dg(k, j, l) - jet.dg(l, j, k);
                }
            }
        }
        let mut gamma = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += jet.ginv[i * n + l] * s[(l * n + j) * n + k];
                    }
                    gamma[(i * n + j) * n + k] = 0.5 * acc;
                    gamma[(i * n + k) * n + j] = 0.5 * acc;
                }
            }
        }
        let mut dgamma = Vec::new();
        if jet.order >= 2 {
            dgamma = vec![0.0; n * n * n * n];
            for m in 0..n {
                // T[i*n+b] = g^{ia} ∂_m g_ab
                let mut t = vec![0.0; n * n];
                for i in 0..n {
                    for b in 0..n {
                        let mut acc = 0.0;
                        for a in 0..n {
                            acc += jet.ginv[i * n + a] * jet.dg(m, a, b);
                        }
                        t[i * n + b] = acc;
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        for k in j..n {
                            let mut acc = 0.0;
                            for b in 0..n {
                                acc -= t[i * n + b] * gamma[(b * n + j) * n + k];
                            }
                            let mut half = 0.0;
                            for l in 0..n {
                                let ds =
                                    jet.ddg(m, j, l, k) + jet.ddg(m, k, j, l) - jet.ddg(m, l, j, k);
                                half += jet.ginv[i * n + l] * ds;
                            }
                            acc += 0.5 * half;
                            dgamma[((m * n + i) * n + j) * n + k] = acc;
                            dgamma[((m * n + i) * n + k) * n + j] = acc;
                        }
                    }
                }
            }
        }
        Connection { n, gamma, dgamma }
    }

    /// `R^i_jkl`, flat as `r[((i*n+j)*n+k)*n+l]`, with
    /// `R(X,Y)Z = R^i_jkl Z^j X^k Y^l ∂_i`.
    pub fn riemann(&self) -> Vec<f64> {
        let n = self.n;
        assert!(
            !self.dgamma.is_empty(),
            "curvature needs second derivatives"
        );
        let dgam =
            |m: usize, i: usize, j: usize, k: usize| self.dgamma[((m * n + i) * n + j) * n + k];
        let mut r = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in (k + 1)..n {
                        let mut v = dgam(k, i, l, j) - dgam(l, i, k, j);
                        for m in 0..n {
                            v += self.gamma(i, k, m) * self.gamma(m, l, j)
                                - self.gamma(i, l, m) * self.gamma(m, k, j);
                        }
                        r[((i * n + j) * n + k) * n + l] = v;
                        r[((i * n + j) * n + l) * n + k] = -v;
                    }
                }
            }
        }
        r
    }
}

/// Connection and curvature at one point.
#[derive(Debug, Clone)]
pub struct CurvatureData {
    pub point: Vec<f64>,
    pub n: usize,
    pub g: Vec<f64>,
    pub gamma: Vec<f64>,
    pub riemann: Vec<f64>,
}

impl CurvatureData {
    pub fn gamma(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gamma[(i * self.n + j) * self.n + k]
    }

    pub fn r(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        self.riemann[((i * n + j) * n + k) * n + l]
    }

    /// `R_ijkl = g_ia R^a_jkl`.
    pub fn lowered(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        (0..self.n)
            .map(|a| self.g[i * self.n + a] * self.r(a, j, k, l))
            .sum()
    }

    /// Largest first-Bianchi residual `|R^i_jkl + R^i_klj + R^i_ljk|`.
    pub fn bianchi_residual(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        worst = worst.max(
                            (self.r(i, j, k, l) + self.r(i, k, l, j) + self.r(i, l, j, k)).abs(),
                        );
                    }
                }
            }
        }
        worst
    }

    /// Largest violation of `R_ijkl = −R_jikl = −R_ijlk`.
    pub fn antisymmetry_residual(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = self.lowered(i, j, k, l);
                        worst = worst.max((r + self.lowered(j, i, k, l)).abs());
                        worst = worst.max((r + self.lowered(i, j, l, k)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Christoffel symbols `Γ^i_jk` at `x`, flat as `[(i*n+j)*n+k]`.
pub fn christoffel(m: &Metric, x: &[f64]) -> Result<Vec<f64>> {
    Ok(Connection::from_jet(&eval_metric_jet(m, x, 1)?).gamma)
}

pub fn riemann(m: &Metric, x: &[f64]) -> Result<CurvatureData> {
    let jet = eval_metric_jet(m, x, 2)?;
    let conn = Connection::from_jet(&jet);
    let riemann = conn.riemann();
    Ok(CurvatureData {
        point: x.to_vec(),
        n: jet.n,
        g: jet.g,
        gamma: conn.gamma,
        riemann,
    })
}

/// `(R(v,w)w)^i = R^i_jkl w^j v^k w^l`.
fn apply_rvww(c: &CurvatureData, v: &[f64], w: &[f64]) -> Vec<f64> {
    let n = c.n;
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    acc += c.r(i, j, k, l) * w[j] * v[k] * w[l];
                }
            }
        }
        *o = acc;
    }
    out
}

fn g_inner(g: &[f64], n: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[i * n + j] * a[i] * b[j];
        }
    }
    s
}

fn sectional_from(c: &CurvatureData, v: &[f64], w: &[f64]) -> Result<f64> {
    let n = c.n;
    let vv = g_inner(&c.g, n, v, v);
    let ww = g_inner(&c.g, n, w, w);
    let vw = g_inner(&c.g, n, v, w);
    let area = vv * ww - vw * vw;
    if !(area > 1e-14 * vv * ww) {
        return Err(Error::DegeneratePlane);
    }
    let rw = apply_rvww(c, v, w);
    Ok(g_inner(&c.g, n, &rw, v) / area)
}

/// Sectional curvature of the plane spanned by `v` and `w` at `x`.
pub fn sectional(m: &Metric, x: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    sectional_from(&riemann(m, x)?, v, w)
}

/// Jacobi operator `v ↦ R(v, γ̇)γ̇` for a unit tangent `γ̇`.
pub fn jacobi_operator(m: &Metric, x: &[f64], gamma_dot: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let c = riemann(m, x)?;
    let norm = g_inner(&c.g, c.n, gamma_dot, gamma_dot).sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NonUnitTangent { norm });
    }
    Ok(apply_rvww(&c, v, gamma_dot))
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub points: usize,
    pub planes_per_point: usize,
    pub seed: u64,
    /// Sampling box; `None` uses the chart domain with infinite sides cut to `[-1, 1]`
    /// and periodic coordinates over one period.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            points: 200,
            planes_per_point: 8,
            seed: 0,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionalEstimate {
    pub min: f64,
    pub max: f64,
    pub planes: usize,
    pub skipped_points: usize,
}

pub fn sampling_box(m: &Metric, bounds: Option<&[(f64, f64)]>) -> Vec<(f64, f64)> {
    if let Some(b) = bounds {
        return b.to_vec();
    }
    (0..m.dim())
        .map(|i| {
            let (lo, hi) = m.domain()[i];
            match m.period(i) {
                Some(p) if !lo.is_finite() || !hi.is_finite() => (0.0, p),
                _ => (
                    if lo.is_finite() { lo } else { -1.0 },
                    if hi.is_finite() { hi } else { 1.0 },
                ),
            }
        })
        .collect()
}

/// Minimum (and maximum) sectional curvature over seeded random points and planes.
pub fn min_sectional_estimate(m: &Metric, cfg: &SamplerConfig) -> SectionalEstimate {
    let n = m.dim();
    let bx = sampling_box(m, cfg.bounds.as_deref());
    let mut rng = seed::stream(cfg.seed, "min_sectional");
    let mut est = SectionalEstimate {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        planes: 0,
        skipped_points: 0,
    };
    if n < 2 {
        return est;
    }
    for _ in 0..cfg.points {
        let x: Vec<f64> = bx
            .iter()
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect();
        let c = match riemann(m, &x) {
            Ok(c) => c,
            Err(_) => {
                est.skipped_points += 1;
                continue;
            }
        };
        for _ in 0..cfg.planes_per_point {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            if let Ok(k) = sectional_from(&c, &v, &w) {
                est.min = est.min.min(k);
                est.max = est.max.max(k);
                est.planes += 1;
            }
        }
    }
    est
}
