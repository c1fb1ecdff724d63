//! Plain-text model files.
//!
//! ```text
//! fairsmooth-model 1
//! input_dim 18
//! hidden 32 16
//! activation relu
//! output sigmoid
//! group female
//! params 1153
//! <one decimal value per line>
//! ```
//!
//! Values are written with the shortest representation that parses back to
//! the same `f64`, so a write/read cycle is exact. The `group` line is
//! optional.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::params::ParameterVector;

use super::{Activation, Architecture};

const MAGIC: &str = "fairsmooth-model";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub arch: Architecture,
    pub params: ParameterVector,
    pub group: Option<String>,
}

pub fn write_model<W: Write>(mut out: W, model: &SavedModel) -> Result<()> {
    crate::error::check_dim("parameter vector", model.arch.num_params(), model.params.len())?;
    writeln!(out, "{MAGIC} {VERSION}")?;
    writeln!(out, "input_dim {}", model.arch.input_dim)?;
    let hidden: Vec<String> = model.arch.hidden.iter().map(usize::to_string).collect();
    writeln!(out, "hidden {}", hidden.join(" ").trim_end())?;
    writeln!(out, "activation {}", model.arch.activation.name())?;
    writeln!(out, "output sigmoid")?;
    if let Some(g) = &model.group {
        writeln!(out, "group {g}")?;
    }
    writeln!(out, "params {}", model.params.len())?;
    for v in model.params.iter() {
        writeln!(out, "{v:?}")?;
    }
    Ok(())
}

pub fn read_model<R: BufRead>(input: R, source_name: &str) -> Result<SavedModel> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(Error::parse(source_name, 0, format!("unexpected end of file, expected {what}"))),
        }
    };

    let (n, header) = next("header")?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(Error::parse(source_name, n, "missing model header"));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(source_name, n, "missing format version"))?;
    if version != VERSION {
        return Err(Error::parse(source_name, n, format!("unsupported format version {version}")));
    }

    let mut input_dim = None;
    let mut hidden = None;
    let mut activation = None;
    let mut group = None;
    let count = loop {
        let (n, line) = next("`params` line")?;
        let (key, rest) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        let bad = |msg: String| Error::parse(source_name, n, msg);
        match key {
            "input_dim" => input_dim = Some(rest.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "hidden" => {
                hidden = Some(
                    rest.split_whitespace()
                        .map(|t| t.parse::<usize>().map_err(|e| bad(e.to_string())))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "activation" => activation = Some(rest.trim().parse::<Activation>()?),
            "output" => {
                if rest.trim() != "sigmoid" {
                    return Err(bad(format!("unsupported output unit `{}`", rest.trim())));
                }
            }
            "group" => group = Some(rest.trim().to_string()),
            "params" => break rest.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?,
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    };

    let missing = |k: &str| Error::parse(source_name, 0, format!("missing `{k}`"));
    let arch = Architecture::new(
        input_dim.ok_or_else(|| missing("input_dim"))?,
        hidden.ok_or_else(|| missing("hidden"))?,
        activation.ok_or_else(|| missing("activation"))?,
    )?;
    if arch.num_params() != count {
        return Err(Error::DimensionMismatch {
            what: "model file parameter count",
            expected: arch.num_params(),
            actual: count,
        });
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, line) = next("parameter value")?;
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| Error::parse(source_name, n, format!("bad value `{}`", line.trim())))?;
        values.push(v);
    }
    Ok(SavedModel {
        arch,
        params: ParameterVector::new(values)?,
        group,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn write_read_is_exact(values in proptest::collection::vec(-1e6f64..1e6, 2 * 3 + 3 + 3 + 1)) {
            let arch = Architecture::new(2, vec![3], Activation::Relu).unwrap();
            let model = SavedModel { arch, params: ParameterVector::new(values).unwrap(), group: Some("g0".into()) };
            let mut buf = Vec::new();
            write_model(&mut buf, &model).unwrap();
            let back = read_model(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(back, model);
        }
    }

    #[test]
    fn tiny_values_survive() {
        let arch = Architecture::new(1, vec![], Activation::Relu).unwrap();
        let model = SavedModel {
            arch,
            params: ParameterVector::new(vec![5e-324, -0.1 + 0.2]).unwrap(),
            group: None,
        };
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        assert_eq!(read_model(buf.as_slice(), "mem").unwrap(), model);
    }

    #[test]
    fn wrong_count_is_rejected() {
        let text = "fairsmooth-model 1\ninput_dim 1\nhidden\nactivation relu\noutput sigmoid\nparams 3\n0\n0\n0\n";
        assert!(matches!(
            read_model(text.as_bytes(), "mem"),
            Err(Error::DimensionMismatch { expected: 2, actual: 3, .. })
        ));
    }

    #[test]
    fn bad_value_reports_line() {
        let text = "fairsmooth-model 1\ninput_dim 1\nhidden\nactivation relu\noutput sigmoid\nparams 2\n0.5\nabc\n";
        match read_model(text.as_bytes(), "m.txt") {
            Err(Error::Parse { line: 8, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
