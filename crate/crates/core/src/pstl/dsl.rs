//! Concrete syntax for axioms, one per line:
//!
//! ```text
//! axiom   := "axiom" NAME ":" "Pr(" pred "," "window=" INT ")" ">=" FLOAT
//! pred    := FLOAT "<=" PROBE "<=" FLOAT | PROBE "<=" FLOAT | PROBE ">=" FLOAT
//! PROBE   := size_px2 | aspect | confidence | contrast | entropy_bits
//!          | loc_dev_px | bbox_dev_rel | id_consistency
//! ```
//!
//! Whitespace between tokens is ignored and `#` starts a comment.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calibration::AxiomSpec;
use crate::error::{Error, Result};
use crate::probes::ProbeId;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    TwoSided,
    UpperOnly,
    LowerOnly,
}

/// A parsed axiom. Equality ignores `source_text`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AxiomFormula<T: Scalar> {
    pub name: String,
    pub spec: AxiomSpec<T>,
    pub comparison: Comparison,
    pub source_text: String,
}

impl<T: Scalar> PartialEq for AxiomFormula<T> {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.spec == other.spec && self.comparison == other.comparison
    }
}

impl<T: Scalar> AxiomFormula<T> {
    /// Builds the formula for a calibrated spec; infinite bounds select the one-sided forms.
    pub fn from_spec(name: impl Into<String>, spec: AxiomSpec<T>) -> Result<Self> {
        let comparison = match (spec.lower.is_finite(), spec.upper.is_finite()) {
            (true, true) if spec.probe.is_deviation() && spec.lower == T::zero() => Comparison::UpperOnly,
            (true, true) => Comparison::TwoSided,
            (false, true) => Comparison::UpperOnly,
            (true, false) => Comparison::LowerOnly,
            (false, false) => {
                return Err(Error::Config(format!("axiom on {} has no finite bound", spec.probe)));
            }
        };
        let mut spec = spec;
        // one-sided forms carry only one bound in the text
        match comparison {
            Comparison::UpperOnly => spec.lower = T::neg_infinity(),
            Comparison::LowerOnly => spec.upper = T::infinity(),
            Comparison::TwoSided => {}
        }
        let mut f = Self {
            name: name.into(),
            spec,
            comparison,
            source_text: String::new(),
        };
        f.source_text = f.to_string();
        Ok(f)
    }

    pub fn probe(&self) -> ProbeId {
        self.spec.probe
    }
}

impl<T: Scalar> fmt::Display for AxiomFormula<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.spec;
        write!(f, "axiom {}: Pr(", self.name)?;
        match self.comparison {
            Comparison::TwoSided => write!(f, "{} <= {} <= {}", s.lower, s.probe, s.upper)?,
            Comparison::UpperOnly => write!(f, "{} <= {}", s.probe, s.upper)?,
            Comparison::LowerOnly => write!(f, "{} >= {}", s.probe, s.lower)?,
        }
        write!(f, ", window={}) >= {}", s.window, s.p_tp)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Colon,
    LParen,
    RParen,
    Comma,
    Eq,
    Le,
    Ge,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(s) => write!(f, "number `{s}`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Ge => f.write_str("`>=`"),
        }
    }
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

/// Token plus its 1-based column.
type Spanned = (Tok, usize);

impl Lexer {
    fn new(src: &str, line: usize) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<Spanned>> {
        let mut out = Vec::new();
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            let col = self.pos + 1;
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                self.pos += 1;
                continue;
            }
            let tok = match c {
                ':' => Tok::Colon,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                '=' => Tok::Eq,
                '<' | '>' => {
                    if self.chars.get(self.pos + 1) != Some(&'=') {
                        return Err(self.err(col, format!("expected `{c}=`")));
                    }
                    self.pos += 1;
                    if c == '<' {
                        Tok::Le
                    } else {
                        Tok::Ge
                    }
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = self.pos;
                    while self
                        .chars
                        .get(self.pos)
                        .is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_')
                    {
                        self.pos += 1;
                    }
                    out.push((Tok::Ident(self.chars[start..self.pos].iter().collect()), col));
                    continue;
                }
                c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                    let start = self.pos;
                    self.pos += 1;
                    while let Some(&c) = self.chars.get(self.pos) {
                        let prev = self.chars[self.pos - 1];
                        let exp_sign = (c == '-' || c == '+') && (prev == 'e' || prev == 'E');
                        if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                    out.push((Tok::Number(self.chars[start..self.pos].iter().collect()), col));
                    continue;
                }
                other => return Err(self.err(col, format!("unexpected character `{other}`"))),
            };
            self.pos += 1;
            out.push((tok, col));
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<Spanned>,
    i: usize,
    line: usize,
    end_col: usize,
}

impl Parser {
    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn col(&self) -> usize {
        self.toks.get(self.i).map_or(self.end_col, |t| t.1)
    }

    fn next(&mut self, what: &str) -> Result<Spanned> {
        let t = self
            .toks
            .get(self.i)
            .cloned()
            .ok_or_else(|| self.err(self.end_col, format!("unexpected end of line, expected {what}")))?;
        self.i += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        let (tok, col) = self.next(&want.to_string())?;
        if tok != want {
            return Err(self.err(col, format!("expected {want}, found {tok}")));
        }
        Ok(())
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let (tok, col) = self.next(&format!("`{kw}`"))?;
        match tok {
            Tok::Ident(s) if s == kw => Ok(()),
            other => Err(self.err(col, format!("expected `{kw}`, found {other}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize)> {
        match self.next(what)? {
            (Tok::Ident(s), col) => Ok((s, col)),
            (other, col) => Err(self.err(col, format!("expected {what}, found {other}"))),
        }
    }

    fn number<T: Scalar>(&mut self) -> Result<T> {
        match self.next("a number")? {
            (Tok::Number(s), col) => {
                let v: T = s.parse().map_err(|_| self.err(col, format!("malformed number `{s}`")))?;
                if !v.is_finite() {
                    return Err(self.err(col, format!("number `{s}` is not finite")));
                }
                Ok(v)
            }
            (other, col) => Err(self.err(col, format!("expected a number, found {other}"))),
        }
    }

    fn probe(&mut self) -> Result<ProbeId> {
        let (name, col) = self.ident("a probe name")?;
        name.parse().map_err(|e: String| self.err(col, e))
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.0)
    }
}

fn parse_tokens<T: Scalar>(p: &mut Parser) -> Result<(String, AxiomSpec<T>, Comparison)> {
    p.keyword("axiom")?;
    let (name, _) = p.ident("an axiom name")?;
    p.expect(Tok::Colon)?;
    p.keyword("Pr")?;
    p.expect(Tok::LParen)?;

    let pred_col = p.col();
    let (probe, lower, upper, comparison) = if matches!(p.peek(), Some(Tok::Number(_))) {
        let lower: T = p.number()?;
        p.expect(Tok::Le)?;
        let probe = p.probe()?;
        p.expect(Tok::Le)?;
        let upper: T = p.number()?;
        if lower >= upper {
            return Err(p.err(
                pred_col,
                format!("lower bound {lower} must be below upper bound {upper}"),
            ));
        }
        (probe, lower, upper, Comparison::TwoSided)
    } else {
        let probe = p.probe()?;
        match p.next("`<=` or `>=`")? {
            (Tok::Le, _) => (probe, T::neg_infinity(), p.number()?, Comparison::UpperOnly),
            (Tok::Ge, _) => (probe, p.number()?, T::infinity(), Comparison::LowerOnly),
            (other, col) => return Err(p.err(col, format!("expected `<=` or `>=`, found {other}"))),
        }
    };

    p.expect(Tok::Comma)?;
    p.keyword("window")?;
    p.expect(Tok::Eq)?;
    let window = match p.next("a window length")? {
        (Tok::Number(s), col) => s
            .parse::<usize>()
            .ok()
            .filter(|w| *w >= 1)
            .ok_or_else(|| p.err(col, format!("window must be a positive integer, found `{s}`")))?,
        (other, col) => return Err(p.err(col, format!("expected a window length, found {other}"))),
    };
    p.expect(Tok::RParen)?;
    p.expect(Tok::Ge)?;
    let p_col = p.col();
    let p_tp: T = p.number()?;
    if !(p_tp > T::zero() && p_tp < T::one()) {
        return Err(p.err(p_col, format!("probability threshold {p_tp} must lie in (0, 1)")));
    }
    if let Some((tok, col)) = p.toks.get(p.i) {
        return Err(p.err(*col, format!("trailing {tok}")));
    }
    Ok((name, AxiomSpec::new(probe, lower, upper, p_tp, window), comparison))
}

fn parse_line<T: Scalar>(text: &str, line: usize) -> Result<Option<AxiomFormula<T>>> {
    let toks = Lexer::new(text, line).tokens()?;
    if toks.is_empty() {
        return Ok(None);
    }
    let content = text.split('#').next().unwrap_or("").trim_end();
    let mut p = Parser {
        toks,
        i: 0,
        line,
        end_col: content.chars().count() + 1,
    };
    let (name, spec, comparison) = parse_tokens(&mut p)?;
    Ok(Some(AxiomFormula {
        name,
        spec,
        comparison,
        source_text: content.trim().to_string(),
    }))
}

/// Parses a single axiom.
pub fn parse_axiom<T: Scalar>(text: &str) -> Result<AxiomFormula<T>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut found = None;
    for (i, l) in lines.iter().enumerate() {
        if let Some(f) = parse_line(l, i + 1)? {
            if found.is_some() {
                return Err(Error::Syntax {
                    line: i + 1,
                    column: 1,
                    message: "expected a single axiom".into(),
                });
            }
            found = Some(f);
        }
    }
    found.ok_or_else(|| Error::Syntax {
        line: lines.len().max(1),
        column: 1,
        message: "no axiom found".into(),
    })
}

/// Parses an axiom file, one axiom per line, comments and blank lines allowed.
pub fn parse_axiom_file<T: Scalar>(text: &str) -> Result<Vec<AxiomFormula<T>>> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        if let Some(f) = parse_line(l, i + 1)? {
            out.push(f);
        }
    }
    Ok(out)
}

pub fn print_axiom_file<T: Scalar>(axioms: &[AxiomFormula<T>], header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        for l in h.lines() {
            out.push_str("# ");
            out.push_str(l);
            out.push('\n');
        }
    }
    for a in axioms {
        out.push_str(&a.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sided_example() {
        let f: AxiomFormula<f64> = parse_axiom("axiom contrast: Pr(0.2 <= contrast <= 0.8, window=10) >= 0.9").unwrap();
        assert_eq!(f.name, "contrast");
        assert_eq!(f.comparison, Comparison::TwoSided);
        assert_eq!((f.spec.lower, f.spec.upper, f.spec.window, f.spec.p_tp), (0.2, 0.8, 10, 0.9));
        assert_eq!(f.spec.probe, ProbeId::Contrast);
    }

    #[test]
    fn upper_only_example() {
        let f: AxiomFormula<f64> = parse_axiom("axiom loc: Pr(loc_dev_px <= 12.5, window=10) >= 0.85").unwrap();
        assert_eq!(f.comparison, Comparison::UpperOnly);
        assert_eq!(f.spec.upper, 12.5);
        assert_eq!(f.spec.lower, f64::NEG_INFINITY);
        let g: AxiomFormula<f64> = parse_axiom("axiom c: Pr(confidence >= 0.3, window=4) >= 0.5").unwrap();
        assert_eq!(g.comparison, Comparison::LowerOnly);
    }

    #[test]
    fn bound_ordering_rejected() {
        let err = parse_axiom::<f64>("axiom bad: Pr(0.9 <= contrast <= 0.1, window=5) >= 0.5").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 1, column: 15, .. }), "{err}");
        assert!(err.to_string().contains("lower bound"));
    }

    #[test]
    fn whitespace_insensitive() {
        let a: AxiomFormula<f64> = parse_axiom("axiom   x :Pr ( 1<=aspect<=2 ,window = 3 )>=0.5").unwrap();
        let b: AxiomFormula<f64> = parse_axiom("axiom x: Pr(1 <= aspect <= 2, window=3) >= 0.5").unwrap();
        assert_eq!(a, b);
        assert_ne!(a.source_text, b.source_text);
    }

    #[test]
    fn error_positions() {
        let err = parse_axiom::<f64>("axiom a: Pr(brightness <= 1, window=3) >= 0.5").unwrap_err();
        assert!(matches!(err, Error::Syntax { column: 13, .. }), "{err}");
        assert!(err.to_string().contains("unknown probe"));
        let err = parse_axiom::<f64>("axiom a: Pr(aspect < 1, window=3) >= 0.5").unwrap_err();
        assert!(matches!(err, Error::Syntax { column: 20, .. }), "{err}");
        let err = parse_axiom::<f64>("axiom a: Pr(aspect <= 1, window=3)").unwrap_err();
        assert!(err.to_string().contains("end of line"), "{err}");
        let err = parse_axiom::<f64>("axiom a: Pr(aspect <= 1, window=0) >= 0.5").unwrap_err();
        assert!(err.to_string().contains("window"), "{err}");
        let err = parse_axiom::<f64>("axiom a: Pr(aspect <= 1, window=2) >= 1.5").unwrap_err();
        assert!(err.to_string().contains("(0, 1)"), "{err}");
        let err = parse_axiom::<f64>("axiom a: Pr(aspect <= 1, window=2) >= 0.5 extra").unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
        let err = parse_axiom::<f64>("axiom a: Pr(aspect <= 1.2.3, window=2) >= 0.5").unwrap_err();
        assert!(err.to_string().contains("malformed"), "{err}");
    }

    #[test]
    fn file_with_comments() {
        let text = "# calibrated\n\naxiom a: Pr(aspect <= 2, window=3) >= 0.5 # trailing note\n  \naxiom b: Pr(contrast >= 0.1, window=3) >= 0.7\n";
        let fs: Vec<AxiomFormula<f64>> = parse_axiom_file(text).unwrap();
        assert_eq!(fs.len(), 2);
        assert_eq!(fs[0].source_text, "axiom a: Pr(aspect <= 2, window=3) >= 0.5");
        let err = parse_axiom_file::<f64>("axiom a: Pr(aspect <= 2, window=3) >= 0.5\naxiom b: Pr(").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 2, .. }), "{err}");
    }

    #[test]
    fn print_parse_roundtrip_exact_floats() {
        let spec = AxiomSpec::new(ProbeId::Contrast, 0.1 + 0.2, 1.0 / 3.0, 0.9331927987311419, 10);
        let f = AxiomFormula::from_spec("contrast", spec).unwrap();
        let back: AxiomFormula<f64> = parse_axiom(&f.to_string()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.spec.lower.to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn from_spec_one_sided_forms() {
        let dev = AxiomSpec::new(ProbeId::LocDevPx, 0.0, 4.5, 0.9, 10);
        let f = AxiomFormula::from_spec("loc", dev).unwrap();
        assert_eq!(f.comparison, Comparison::UpperOnly);
        assert_eq!(f.to_string(), "axiom loc: Pr(loc_dev_px <= 4.5, window=10) >= 0.9");
        let lo = AxiomSpec::new(ProbeId::Confidence, 0.4, f64::INFINITY, 0.8, 5);
        assert_eq!(
            AxiomFormula::from_spec("conf", lo).unwrap().to_string(),
            "axiom conf: Pr(confidence >= 0.4, window=5) >= 0.8"
        );
        let none = AxiomSpec::new(ProbeId::Confidence, f64::NEG_INFINITY, f64::INFINITY, 0.8, 5);
        assert!(AxiomFormula::from_spec("x", none).is_err());
    }

    #[test]
    fn f32_formulas() {
        let f: AxiomFormula<f32> = parse_axiom("axiom e: Pr(2.5 <= entropy_bits <= 6, window=8) >= 0.75").unwrap();
        assert_eq!(f.spec.upper, 6.0f32);
        assert_eq!(parse_axiom::<f32>(&f.to_string()).unwrap(), f);
    }
}
