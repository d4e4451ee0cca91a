//! Line-oriented reader shared by the model text formats.

use crate::error::{Error, Result};

pub(crate) struct LineReader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> LineReader<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate().peekable(),
        }
    }

    /// Next non-empty line, split on whitespace.
    pub fn next_fields(&mut self) -> Result<(usize, Vec<&'a str>)> {
        for (n, line) in self.lines.by_ref() {
            let line = line.trim();
            if !line.is_empty() {
                return Ok((n + 1, line.split_whitespace().collect()));
            }
        }
        Err(Error::format("unexpected end of model file"))
    }

    /// Next line, which must start with `key`; returns the remaining fields.
    pub fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let (n, fields) = self.next_fields()?;
        if fields.first() != Some(&key) {
            return Err(Error::format(format!(
                "line {n}: expected '{key}', found '{}'",
                fields.join(" ")
            )));
        }
        Ok(fields[1..].to_vec())
    }

    pub fn expect_floats(&mut self, key: &str) -> Result<Vec<f64>> {
        self.expect(key)?.iter().map(|s| parse(s)).collect()
    }

    pub fn floats(&mut self) -> Result<Vec<f64>> {
        let (_, fields) = self.next_fields()?;
        fields.iter().map(|s| parse(s)).collect()
    }
}

pub(crate) fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(format!("cannot parse '{s}'")))
}

pub(crate) fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}
