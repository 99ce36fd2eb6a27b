//! Versioned plain-text parameter files.
//!
//! ```text
//! cartpole-params 1
//! kind q_table | actor_critic | vfa
//! scheme getBox            (tabular kinds)
//! boxes 162                (tabular kinds)
//! features 4               (vfa)
//! actions 2                (vfa)
//! scales <theta_deg> <theta_dot_deg> <x> <x_dot>   (vfa)
//! columns <names...>
//! <one row per box, or LEFT/RIGHT rows for vfa>
//! ```
//!
//! Values are written in shortest round-trip exponent form, so a save/load
//! cycle is bit-exact.

use crate::agent::{AcWeights, AgentParams, QTable, VfaWeights};
use crate::codec::{FeatureScales, SchemeName};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "cartpole-params";

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("unsupported parameter format version {found} (this build reads {FORMAT_VERSION})")]
    Version { found: String },
    #[error("parameter dimension mismatch: file holds {found}, config expects {expected}")]
    Dimension { expected: String, found: String },
    #[error("malformed parameter file, line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// What a configuration expects to load.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamsShape {
    Table { scheme: SchemeName, boxes: usize },
    ActorCritic { scheme: SchemeName, boxes: usize },
    Vfa,
}

impl std::fmt::Display for ParamsShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamsShape::Table { scheme, boxes } => {
                write!(f, "q_table over {scheme} ({boxes} boxes)")
            }
            ParamsShape::ActorCritic { scheme, boxes } => {
                write!(f, "actor_critic over {scheme} ({boxes} boxes)")
            }
            ParamsShape::Vfa => f.write_str("vfa (4 features x 2 actions)"),
        }
    }
}

pub fn shape_of(p: &AgentParams) -> ParamsShape {
    match p {
        AgentParams::Table(q) => ParamsShape::Table {
            scheme: q.scheme,
            boxes: q.box_count(),
        },
        AgentParams::ActorCritic(w) => ParamsShape::ActorCritic {
            scheme: w.scheme,
            boxes: w.box_count(),
        },
        AgentParams::Vfa { .. } => ParamsShape::Vfa,
    }
}

fn push_row(out: &mut String, label: impl std::fmt::Display, values: &[f64]) {
    write!(out, "{label}").unwrap();
    for v in values {
        write!(out, " {v:e}").unwrap();
    }
    out.push('\n');
}

pub fn params_to_string(p: &AgentParams) -> String {
    let mut out = format!("{MAGIC} {FORMAT_VERSION}\nkind {}\n", p.label());
    match p {
        AgentParams::Table(q) => {
            writeln!(out, "scheme {}\nboxes {}", q.scheme, q.box_count()).unwrap();
            out.push_str("columns index value_left value_right\n");
            for (i, row) in q.values.iter().enumerate() {
                push_row(&mut out, i, row);
            }
        }
        AgentParams::ActorCritic(w) => {
            writeln!(out, "scheme {}\nboxes {}", w.scheme, w.box_count()).unwrap();
            out.push_str("columns index actor_w critic_w actor_trace critic_trace\n");
            for i in 0..w.box_count() {
                push_row(
                    &mut out,
                    i,
                    &[
                        w.actor_w[i],
                        w.critic_w[i],
                        w.actor_trace[i],
                        w.critic_trace[i],
                    ],
                );
            }
        }
        AgentParams::Vfa { weights, scales } => {
            out.push_str("features 4\nactions 2\n");
            push_row(
                &mut out,
                "scales",
                &[
                    scales.theta_deg,
                    scales.theta_dot_deg,
                    scales.x,
                    scales.x_dot,
                ],
            );
            out.push_str("columns action w_theta w_theta_dot w_x w_x_dot\n");
            push_row(&mut out, "LEFT", &weights.per_action[0]);
            push_row(&mut out, "RIGHT", &weights.per_action[1]);
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn malformed<T>(line: usize, reason: impl Into<String>) -> Result<T, ParamsError> {
        Err(ParamsError::Malformed {
            line,
            reason: reason.into(),
        })
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), ParamsError> {
        match self.inner.next() {
            Some((i, l)) => Ok((i + 1, l.split_whitespace().collect())),
            None => Self::malformed(0, format!("file ends before {what}")),
        }
    }

    /// `key value` header line.
    fn header(&mut self, key: &str) -> Result<(usize, &'a str), ParamsError> {
        let (n, f) = self.next(key)?;
        match f.as_slice() {
            [k, v] if *k == key => Ok((n, v)),
            _ => Self::malformed(n, format!("expected `{key} <value>`")),
        }
    }

    fn count(&mut self, key: &str) -> Result<(usize, usize), ParamsError> {
        let (n, v) = self.header(key)?;
        v.parse()
            .map(|c| (n, c))
            .or_else(|_| Self::malformed(n, format!("`{key}` is not a count: {v}")))
    }

    fn row(&mut self, label: &str, width: usize, what: &str) -> Result<Vec<f64>, ParamsError> {
        let (n, f) = self.next(what)?;
        if f.len() != width + 1 || f[0] != label {
            return Self::malformed(n, format!("expected `{label}` followed by {width} values"));
        }
        f[1..]
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .or_else(|_| Self::malformed(n, format!("not a number: {v}")))
            })
            .collect()
    }

    fn end(&mut self) -> Result<(), ParamsError> {
        match self.inner.find(|(_, l)| !l.trim().is_empty()) {
            Some((i, _)) => Self::malformed(i + 1, "unexpected trailing content"),
            None => Ok(()),
        }
    }
}

fn tabular_header(
    lines: &mut Lines<'_>,
    columns: &str,
) -> Result<(SchemeName, usize), ParamsError> {
    let (n, name) = lines.header("scheme")?;
    let scheme: SchemeName = name
        .parse()
        .or_else(|_| Lines::malformed(n, format!("unknown scheme `{name}`")))?;
    let (n, boxes) = lines.count("boxes")?;
    if boxes != scheme.scheme().box_count() {
        return Lines::malformed(
            n,
            format!(
                "{scheme} has {} boxes, header says {boxes}",
                scheme.scheme().box_count()
            ),
        );
    }
    let (n, f) = lines.next("columns")?;
    if f.join(" ") != format!("columns {columns}") {
        return Lines::malformed(n, format!("expected `columns {columns}`"));
    }
    Ok((scheme, boxes))
}

pub fn params_from_str(text: &str) -> Result<AgentParams, ParamsError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (n, f) = lines.next("the format header")?;
    match f.as_slice() {
        [m, v] if *m == MAGIC => {
            if v.parse::<u32>().ok() != Some(FORMAT_VERSION) {
                return Err(ParamsError::Version {
                    found: v.to_string(),
                });
            }
        }
        _ => return Lines::malformed(n, format!("expected `{MAGIC} <version>`")),
    }
    let (n, kind) = lines.header("kind")?;
    let params = match kind {
        "q_table" => {
            let (scheme, boxes) = tabular_header(&mut lines, "index value_left value_right")?;
            let mut values = Vec::with_capacity(boxes);
            for i in 0..boxes {
                let r = lines.row(&i.to_string(), 2, &format!("row {i} of {boxes}"))?;
                values.push([r[0], r[1]]);
            }
            AgentParams::Table(QTable { scheme, values })
        }
        "actor_critic" => {
            let (scheme, boxes) = tabular_header(
                &mut lines,
                "index actor_w critic_w actor_trace critic_trace",
            )?;
            let mut w = AcWeights::zeros(scheme, boxes);
            for i in 0..boxes {
                let r = lines.row(&i.to_string(), 4, &format!("row {i} of {boxes}"))?;
                (
                    w.actor_w[i],
                    w.critic_w[i],
                    w.actor_trace[i],
                    w.critic_trace[i],
                ) = (r[0], r[1], r[2], r[3]);
            }
            AgentParams::ActorCritic(w)
        }
        "vfa" => {
            for (key, want) in [("features", 4), ("actions", 2)] {
                let (n, c) = lines.count(key)?;
                if c != want {
                    return Err(ParamsError::Dimension {
                        expected: ParamsShape::Vfa.to_string(),
                        found: format!("vfa with {key} = {c} (line {n})"),
                    });
                }
            }
            let s = lines.row("scales", 4, "scales")?;
            let (n, f) = lines.next("columns")?;
            if f.join(" ") != "columns action w_theta w_theta_dot w_x w_x_dot" {
                return Lines::malformed(n, "expected vfa column header");
            }
            let left = lines.row("LEFT", 4, "the LEFT row")?;
            let right = lines.row("RIGHT", 4, "the RIGHT row")?;
            let arr = |v: Vec<f64>| [v[0], v[1], v[2], v[3]];
            AgentParams::Vfa {
                weights: VfaWeights {
                    per_action: [arr(left), arr(right)],
                },
                scales: FeatureScales {
                    theta_deg: s[0],
                    theta_dot_deg: s[1],
                    x: s[2],
                    x_dot: s[3],
                },
            }
        }
        other => return Lines::malformed(n, format!("unknown kind `{other}`")),
    };
    lines.end()?;
    Ok(params)
}

pub fn save_params(path: &Path, p: &AgentParams) -> Result<(), ParamsError> {
    std::fs::write(path, params_to_string(p)).map_err(|source| ParamsError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads and fully validates a file before returning anything, so a failed
/// load never yields partial state.
pub fn load_params(path: &Path, expected: ParamsShape) -> Result<AgentParams, ParamsError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParamsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let p = params_from_str(&text)?;
    let found = shape_of(&p);
    if found != expected {
        return Err(ParamsError::Dimension {
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok(p)
}
