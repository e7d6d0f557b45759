//! Text form of polynomials: a signed sum of terms, each term a product of
//! numbers and powers `x<k>^<e>` with `k` counted from 1.
//!
//! ```text
//! 0.98847*x1^6 - 0.70253*x1^3*x2 + 1.4904*x2^2
//! ```

use super::{Monomial, Polynomial};
use crate::error::{Error, Result};

/// Parses `text` as a polynomial in `dim` variables.
pub fn parse(text: &str, dim: usize) -> Result<Polynomial> {
    parse_in(text, dim, "polynomial")
}

/// Like [`parse`], with `context` naming the source in error messages
/// (for instance `regions[0].chi`).
pub fn parse_in(text: &str, dim: usize, context: &str) -> Result<Polynomial> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        dim,
        context,
    };
    p.expression()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
    context: &'a str,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            context: self.context.to_string(),
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expression(&mut self) -> Result<Polynomial> {
        let mut out = Polynomial::zero(self.dim);
        self.skip_ws();
        if self.peek().is_none() {
            return Err(self.error("empty expression"));
        }
        let mut first = true;
        loop {
            self.skip_ws();
            let mut sign = 1.0;
            match self.peek() {
                None if !first => break,
                Some(b'+') => self.pos += 1,
                Some(b'-') => {
                    sign = -1.0;
                    self.pos += 1;
                }
                Some(_) if first => {}
                Some(c) => return Err(self.error(format!("expected '+' or '-', found '{}'", c as char))),
                None => unreachable!(),
            }
            first = false;
            self.skip_ws();
            let (m, c) = self.term()?;
            out.add_term(m, sign * c);
        }
        Ok(out)
    }

    fn term(&mut self) -> Result<(Monomial, f64)> {
        let mut coef = 1.0;
        let mut exps = vec![0u32; self.dim];
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'x') => {
                    let (k, e) = self.power()?;
                    exps[k] += e;
                }
                Some(c) if c.is_ascii_digit() || c == b'.' => coef *= self.number()?,
                Some(c) => return Err(self.error(format!("expected a number or variable, found '{}'", c as char))),
                None => return Err(self.error("expected a number or variable, found end of input")),
            }
            self.skip_ws();
            if self.peek() == Some(b'*') {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok((Monomial::new(exps), coef))
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).expect("ascii slice");
        let v: f64 = text
            .parse()
            .map_err(|_| self.error(format!("invalid number '{text}'")))?;
        if !v.is_finite() {
            return Err(self.error(format!("non-finite number '{text}'")));
        }
        self.pos = i;
        Ok(v)
    }

    fn integer(&mut self) -> Result<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected an integer"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        text.parse().map_err(|_| {
            self.pos = start;
            self.error(format!("integer '{text}' out of range"))
        })
    }

    fn power(&mut self) -> Result<(usize, u32)> {
        let var_pos = self.pos;
        self.pos += 1; // 'x'
        let k = self.integer()? as usize;
        if k == 0 || k > self.dim {
            self.pos = var_pos;
            return Err(self.error(format!(
                "variable x{k} outside dimension {} (variables are x1..x{})",
                self.dim, self.dim
            )));
        }
        self.skip_ws();
        let mut e = 1;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            e = self.integer()?;
        }
        Ok((k - 1, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_terms_and_signs() {
        let p = parse("-x1^2 + 3*x1*x2 - 0.5e-1*x2^3 + 2", 2).unwrap();
        assert_eq!(p.coefficient(&Monomial::new(vec![2, 0])), -1.0);
        assert_eq!(p.coefficient(&Monomial::new(vec![1, 1])), 3.0);
        assert_eq!(p.coefficient(&Monomial::new(vec![0, 3])), -0.05);
        assert_eq!(p.coefficient(&Monomial::one(2)), 2.0);
    }

    #[test]
    fn repeated_factors_multiply() {
        let p = parse("2*x1*x1*3", 1).unwrap();
        assert_eq!(p.coefficient(&Monomial::new(vec![2])), 6.0);
    }

    #[test]
    fn like_terms_merge_and_cancel() {
        assert!(parse("x1*x2 - x2*x1", 2).unwrap().is_zero());
        assert!(parse("0", 2).unwrap().is_zero());
    }

    #[test]
    fn errors_carry_columns() {
        match parse("x1 + x3", 2) {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 6),
            other => panic!("unexpected {other:?}"),
        }
        match parse("x1 + * x2", 2) {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse("", 2).is_err());
        assert!(parse("x1 x2", 2).is_err());
        assert!(parse("x1^", 2).is_err());
    }

    #[test]
    fn display_round_trips() {
        let p = parse(
            "0.98847*x1^6 + 1.0184*x1^4 - 0.70253*x1^3*x2 + 1e-9*x2 - 7",
            2,
        )
        .unwrap();
        let q = parse(&p.to_string(), 2).unwrap();
        assert_eq!(p, q);
    }
}
