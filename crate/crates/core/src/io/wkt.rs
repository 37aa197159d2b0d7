//! The `POLYGON` subset of well-known text.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::surface::ClipPolygon;

struct Lexer<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.s[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.s[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<()> {
        match self.peek() {
            Some(got) if got == c => {
                self.pos += c.len_utf8();
                Ok(())
            }
            got => Err(self.error(&format!("expected {c:?}, found {got:?}"))),
        }
    }

    fn error(&self, what: &str) -> Error {
        Error::SyntaxError(format!("at byte {}: {what}", self.pos))
    }

    fn word(&mut self) -> &'a str {
        self.skip_ws();
        let rest = &self.s[self.pos..];
        let end = rest.find(|c: char| !c.is_ascii_alphabetic()).unwrap_or(rest.len());
        self.pos += end;
        &rest[..end]
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let rest = &self.s[self.pos..];
        let end = rest
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .unwrap_or(rest.len());
        match rest[..end].parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos += end;
                Ok(v)
            }
            _ => {
                let found: String = if end > 0 { rest[..end].to_string() } else { rest.chars().take(1).collect() };
                Err(self.error(&format!("expected a number, found {found:?}")))
            }
        }
    }

    fn ring(&mut self) -> Result<Vec<Point2>> {
        self.expect('(')?;
        let mut ring = Vec::new();
        loop {
            let x = self.number()?;
            let y = self.number()?;
            ring.push(Point2::new(x, y));
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(')') => {
                    self.pos += 1;
                    return Ok(ring);
                }
                got => return Err(self.error(&format!("expected ',' or ')', found {got:?}"))),
            }
        }
    }
}

/// Parses `POLYGON ((x y, ...), (x y, ...))`. The keyword is case-insensitive;
/// the first ring is the outer boundary and any others are holes.
pub fn parse_wkt_polygon(text: &str) -> Result<ClipPolygon> {
    let mut lx = Lexer { s: text, pos: 0 };
    let kw = lx.word();
    if !kw.eq_ignore_ascii_case("POLYGON") {
        return Err(Error::SyntaxError(format!("expected POLYGON, found {kw:?}")));
    }
    lx.expect('(')?;
    let mut rings = vec![lx.ring()?];
    loop {
        match lx.peek() {
            Some(',') => {
                lx.pos += 1;
                rings.push(lx.ring()?);
            }
            Some(')') => {
                lx.pos += 1;
                break;
            }
            got => return Err(lx.error(&format!("expected ',' or ')', found {got:?}"))),
        }
    }
    if lx.peek().is_some() {
        return Err(lx.error("trailing characters"));
    }
    let outer = rings.remove(0);
    ClipPolygon::new(outer, rings)
}

pub fn write_wkt_polygon(poly: &ClipPolygon) -> String {
    let mut out = String::from("POLYGON (");
    for (i, ring) in std::iter::once(poly.outer()).chain(poly.holes().iter().map(Vec::as_slice)).enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push('(');
        for (j, p) in ring.iter().enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{} {}", p.x, p.y);
        }
        out.push(')');
    }
    out.push(')');
    out
}
