use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// Group word; letter +-(i+1) stands for generator i or its inverse. Read left to right as a
/// composition, so [a, b] acts as a(b(x)).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(pub Vec<i32>);

impl Word {
    pub fn identity() -> Word {
        Word(vec![])
    }

    pub fn letter(generator: usize, inverse: bool) -> Word {
        let l = generator as i32 + 1;
        Word(vec![if inverse { -l } else { l }])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|l| -l).collect())
    }

    /// Freely reduced concatenation.
    pub fn concat(&self, other: &Word) -> Word {
        let mut out = self.0.clone();
        for &l in &other.0 {
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    pub fn pow(&self, n: i64) -> Word {
        let base = if n < 0 { self.inverse() } else { self.clone() };
        let mut out = Word::identity();
        for _ in 0..n.unsigned_abs() {
            out = out.concat(&base);
        }
        out
    }

    pub fn is_reduced(&self) -> bool {
        self.0.windows(2).all(|w| w[0] != -w[1])
    }

    /// "A B^-1 A^3" style rendering with run-length exponents.
    pub fn format(&self, labels: &[String]) -> String {
        if self.0.is_empty() {
            return "id".into();
        }
        let mut out = String::new();
        let mut i = 0;
        while i < self.0.len() {
            let l = self.0[i];
            let mut j = i;
            while j < self.0.len() && self.0[j] == l {
                j += 1;
            }
            let run = (j - i) as i64 * l.signum() as i64;
            if !out.is_empty() {
                out.push(' ');
            }
            let name = labels
                .get((l.unsigned_abs() - 1) as usize)
                .cloned()
                .unwrap_or_else(|| format!("g{}", l.unsigned_abs()));
            out.push_str(&name);
            if run != 1 {
                let _ = write!(out, "^{run}");
            }
            i = j;
        }
        out
    }

    pub fn parse(s: &str, labels: &[String]) -> Result<Word> {
        let mut w = Word::identity();
        for tok in s.split_whitespace() {
            if tok == "id" {
                continue;
            }
            let (name, exp) = match tok.split_once('^') {
                Some((n, e)) => {
                    let e: i64 = e
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad exponent in word token '{tok}'")))?;
                    (n, e)
                }
                None => (tok, 1),
            };
            let idx = labels
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::Parse(format!("unknown generator '{name}' in word '{s}'")))?;
            w = w.concat(&Word::letter(idx, false).pow(exp));
        }
        Ok(w)
    }
}
